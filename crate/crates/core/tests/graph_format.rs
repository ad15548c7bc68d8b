//! Saved graph files against the reference node and relationship layout.

use std::path::Path;

use rxcheck::dosage::{build_graph, save_graph, NODES_FILE, RELATIONSHIPS_FILE};
use rxcheck::gateway::{LmGateway, StubProvider};
use rxcheck::monograph::parse_monographs;

const ROSUVASTATIN: &str = include_str!("../fixtures/rosuvastatin.json");

const NODES_HEAD: &str = r#"[
    {
        "id": 1,
        "name": "rosuvastatin",
        "type": "Drug"
    },
    {
        "id": 2,
        "name": "heterozygous familial hypercholesterolemia",
        "type": "Disease"
    },
    {
        "id": 3,
        "name": "5-10 mg once daily",
        "type": "Dosage"
    },"#;

const RELATIONSHIPS_HEAD: &str = r#"[
    {
        "start_id": 1,
        "end_id": 2,
        "type": "TREATS",
        "age_group": "pediatric"
    },
    {
        "start_id": 2,
        "end_id": 3,
        "type": "INITIAL_DOSAGE",
        "age_specific": "children 8 to <10 years of age",
        "administration": "oral"
    },
    {
        "start_id": 2,
        "end_id": 4,
        "type": "INITIAL_DOSAGE",
        "age_specific": "children and adolescents 10-17 years of age",
        "administration": "oral"
    },
    {
        "start_id": 1,
        "end_id": 5,
        "type": "TREATS",
        "age_group": "adults"
    },
    {
        "start_id": 5,
        "end_id": 6,
        "type": "INITIAL_DOSAGE",
        "administration": "oral"
    },
    {
        "start_id": 5,
        "end_id": 7,
        "type": "SPECIFIC_DOSAGE",
        "administration": "oral",
        "indication": "patients who have not achieved adequate response with the 20-mg daily dosage"
    },
    {
        "start_id": 1,
        "end_id": 8,
        "type": "TREATS",
        "age_group": "adults"
    },"#;

#[test]
fn rosuvastatin_files_match_reference_layout() {
    let gw = LmGateway::stub(StubProvider::new());
    let ms = parse_monographs(ROSUVASTATIN, Path::new("rosuvastatin.json")).unwrap();
    let g = build_graph(&ms, &gw).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_graph(&g, dir.path()).unwrap();
    let nodes = std::fs::read_to_string(dir.path().join(NODES_FILE)).unwrap();
    let rels = std::fs::read_to_string(dir.path().join(RELATIONSHIPS_FILE)).unwrap();
    assert!(nodes.starts_with(NODES_HEAD), "{nodes}");
    assert!(rels.starts_with(RELATIONSHIPS_HEAD), "{rels}");
}
