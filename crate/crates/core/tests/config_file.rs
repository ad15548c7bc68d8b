use std::path::Path;

use rxcheck::gateway::{GatewayConfig, ProviderKind};

#[test]
fn example_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/gateway.example.toml");
    let c = GatewayConfig::from_file(&path).unwrap();
    assert_eq!(c.provider, ProviderKind::OpenaiCompatible);
    assert_eq!(c.api_key_env, "RXCHECK_API_KEY");
    assert_eq!(c.requests_per_minute, 60);
}
