//! Interaction triplets, embeddings and nearest-neighbour retrieval.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::gateway::transport::{HttpRequest, InstrumentedTransport, Transport};
use crate::gateway::{template, GatewayError, LmGateway, LmRequest};

/// Components with collected interaction data.
pub const COMMON_COMPONENTS: [&str; 27] = [
    "Allopurinol",
    "Amitriptyline",
    "Amlodipine",
    "Atorvastatin",
    "Bisoprolol",
    "Cefaclor",
    "Clopidogrel",
    "Dapagliflozin",
    "Dutasteride",
    "Empagliflozin",
    "Esomeprazole",
    "Gabapentin",
    "Isosorbide",
    "Ivabradine",
    "Losartan",
    "Meloxicam",
    "Metformin Hydrochloride",
    "Methylprednisolone",
    "Mirtazapine",
    "Nifedipine",
    "Olanzapine",
    "Pregabalin",
    "Quetiapine",
    "Rivaroxaban",
    "Rosuvastatin",
    "Spironolactone",
    "Telmisartan",
];

pub const DEFAULT_EMBEDDING_DIM: usize = 256;

#[derive(Debug, Error)]
pub enum InteractionError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
    #[error("vector dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("nothing to summarize")]
    NothingToSummarize,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    #[serde(alias = "Minor", alias = "MINOR")]
    Minor,
    #[serde(alias = "Moderate", alias = "MODERATE")]
    Moderate,
    #[serde(alias = "Major", alias = "MAJOR")]
    Major,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Minor => "minor",
            Severity::Moderate => "moderate",
            Severity::Major => "major",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub head: String,
    pub relation: String,
    pub tail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl Triplet {
    pub fn is_interaction(&self) -> bool {
        self.relation.to_ascii_uppercase().contains("INTERACT")
    }

    /// Text fed to the embedder.
    pub fn render(&self) -> String {
        let mut s = format!("{} | {} | {}", self.head, self.relation, self.tail);
        if let Some(sev) = self.severity {
            s.push_str(" | ");
            s.push_str(sev.as_str());
        }
        s
    }

    /// One summary line: `head relation tail (severity)`.
    pub fn summary_line(&self) -> String {
        match self.severity {
            Some(sev) => format!("{} {} {} ({})", self.head, self.relation, self.tail, sev.as_str()),
            None => format!("{} {} {}", self.head, self.relation, self.tail),
        }
    }

    fn check(&self) -> Result<(), String> {
        for (field, value) in [("head", &self.head), ("relation", &self.relation), ("tail", &self.tail)] {
            if value.trim().is_empty() {
                return Err(format!("{field} is empty"));
            }
        }
        if self.severity.is_some() && !self.is_interaction() {
            return Err(format!("severity on non-interaction relation {:?}", self.relation));
        }
        Ok(())
    }
}

/// Reads a JSON list of triplets. An empty file is an empty list.
pub fn load_interactions(path: &Path) -> Result<Vec<Triplet>, InteractionError> {
    let text = fs::read_to_string(path).map_err(|source| InteractionError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_interactions(&text, path)
}

pub fn parse_interactions(text: &str, origin: &Path) -> Result<Vec<Triplet>, InteractionError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let err = |message: String| InteractionError::Parse {
        path: origin.to_path_buf(),
        message,
    };
    let triplets: Vec<Triplet> = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
    for (i, t) in triplets.iter().enumerate() {
        t.check().map_err(|m| err(format!("row {i}: {m}")))?;
    }
    Ok(triplets)
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, InteractionError>;
}

/// Signed feature hashing of character trigrams, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StubEmbedder {
    pub dimension: usize,
    pub seed: u64,
}

impl Default for StubEmbedder {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_EMBEDDING_DIM,
            seed: 0x5eed,
        }
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Embedder for StubEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, InteractionError> {
        let dim = self.dimension.max(1);
        let mut v = vec![0.0; dim];
        let padded: Vec<char> = format!("  {} ", text.to_lowercase()).chars().collect();
        let mut buf = [0u8; 16];
        for gram in padded.windows(3) {
            let mut bytes = Vec::with_capacity(12);
            for c in gram {
                bytes.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
            let h = fnv1a(self.seed, &bytes);
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % dim as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            v[(self.seed % dim as u64) as usize] = 1.0;
            return Ok(v);
        }
        Ok(v.into_iter().map(|x| x / norm).collect())
    }
}

/// OpenAI-compatible `/embeddings` client.
pub struct RemoteEmbedder {
    model: String,
    endpoint: String,
    api_key: String,
    dimension: usize,
    transport: InstrumentedTransport,
}

impl RemoteEmbedder {
    pub fn new(
        model: impl Into<String>,
        endpoint: impl Into<String>,
        api_key: impl Into<String>,
        dimension: usize,
        transport: Arc<dyn Transport>,
    ) -> Self {
        Self {
            model: model.into(),
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            dimension,
            transport: InstrumentedTransport::new(transport),
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, InteractionError> {
        let unavailable = |m: String| InteractionError::EmbedderUnavailable(m);
        let request = HttpRequest {
            url: format!("{}/embeddings", self.endpoint.trim_end_matches('/')),
            headers: vec![
                ("Content-Type".into(), "application/json".into()),
                ("Authorization".into(), format!("Bearer {}", self.api_key)),
            ],
            body: json!({"model": self.model, "input": text}).to_string(),
        };
        let resp = self.transport.post(&request).map_err(|e| unavailable(e.to_string()))?;
        if !(200..300).contains(&resp.status) {
            return Err(unavailable(format!("HTTP {}", resp.status)));
        }
        let parsed: Value = serde_json::from_str(&resp.body).map_err(|e| unavailable(e.to_string()))?;
        let v: Vec<f64> = parsed["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| unavailable("response has no data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| unavailable("non-numeric embedding".into())))
            .collect::<Result<_, _>>()?;
        if v.len() != self.dimension {
            return Err(InteractionError::DimensionMismatch(v.len(), self.dimension));
        }
        normalize(v)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: Vec<f64>) -> Result<Vec<f64>, InteractionError> {
    let n = norm(&v);
    if n == 0.0 {
        return Err(InteractionError::ZeroVector);
    }
    Ok(v.into_iter().map(|x| x / n).collect())
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, InteractionError> {
    if a.len() != b.len() {
        return Err(InteractionError::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(InteractionError::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Retrieved<'a> {
    pub triplet_id: usize,
    pub triplet: &'a Triplet,
    pub score: f64,
}

/// Flat exact index. Triplet ids are list positions.
#[derive(Debug, Clone)]
pub struct TripletIndex {
    triplets: Vec<Triplet>,
    vectors: Vec<Vec<f64>>,
}

impl TripletIndex {
    pub fn build(triplets: Vec<Triplet>, embedder: &dyn Embedder) -> Result<Self, InteractionError> {
        let vectors = triplets
            .iter()
            .map(|t| embedder.embed(&t.render()))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(v) = vectors.iter().find(|v| v.len() != embedder.dimension()) {
            return Err(InteractionError::DimensionMismatch(v.len(), embedder.dimension()));
        }
        Ok(Self { triplets, vectors })
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn vector(&self, triplet_id: usize) -> Option<&[f64]> {
        self.vectors.get(triplet_id).map(Vec::as_slice)
    }

    /// The `k` most similar triplets, best first; equal scores keep id
    /// order.
    pub fn retrieve(
        &self,
        query: &str,
        embedder: &dyn Embedder,
        k: usize,
    ) -> Result<Vec<Retrieved<'_>>, InteractionError> {
        if k == 0 {
            return Err(InteractionError::InvalidK);
        }
        if self.is_empty() {
            return Err(InteractionError::EmptyIndex);
        }
        let q = embedder.embed(query)?;
        let mut scored = self
            .vectors
            .iter()
            .enumerate()
            .map(|(id, v)| cosine(&q, v).map(|s| (id, s)))
            .collect::<Result<Vec<_>, _>>()?;
        scored.sort_by(|(ia, sa), (ib, sb)| sb.total_cmp(sa).then(ia.cmp(ib)));
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(id, score)| Retrieved {
                triplet_id: id,
                triplet: &self.triplets[id],
                score,
            })
            .collect())
    }
}

/// Condenses triplets through the gateway. The offline provider returns
/// the summary lines unchanged.
pub fn summarize(triplets: &[&Triplet], gateway: &LmGateway) -> Result<String, InteractionError> {
    if triplets.is_empty() {
        return Err(InteractionError::NothingToSummarize);
    }
    let lines: Vec<String> = triplets.iter().map(|t| t.summary_line()).collect();
    let reply = gateway.complete(&LmRequest::new(template::INTERACTION_SUMMARY).var("triplets", lines.join("\n")))?;
    Ok(reply.text)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::gateway::transport::testing::ScriptedTransport;
    use crate::gateway::transport::{HttpResponse, TransportError};
    use crate::gateway::StubProvider;

    const FIXTURE: &str = include_str!("../fixtures/interactions.json");

    fn t(head: &str, rel: &str, tail: &str, sev: Option<Severity>) -> Triplet {
        Triplet {
            head: head.into(),
            relation: rel.into(),
            tail: tail.into(),
            severity: sev,
            description: None,
        }
    }

    #[test]
    fn fixture_loads() {
        let ts = parse_interactions(FIXTURE, Path::new("interactions.json")).unwrap();
        let first = &ts[0];
        assert_eq!(first.head, "alfentanil");
        assert!(first.is_interaction() && first.severity.is_some());
        assert!(ts
            .iter()
            .any(|t| t.relation == "HAS_ADVERSE_EFFECT" && t.tail == "hypotension"));
        assert!(ts.iter().any(|t| t.relation == "ELIGIBLE_AGE"));
        for c in COMMON_COMPONENTS {
            assert!(
                ts.iter()
                    .any(|t| t.tail.eq_ignore_ascii_case(c) || t.head.eq_ignore_ascii_case(c)),
                "{c}"
            );
        }
    }

    #[test]
    fn parse_edge_cases() {
        assert!(parse_interactions("", Path::new("x")).unwrap().is_empty());
        assert!(parse_interactions("  \n", Path::new("x")).unwrap().is_empty());
        assert!(matches!(
            parse_interactions(r#"[{"head": "a", "relation": "INTERACTS_WITH"}]"#, Path::new("x")),
            Err(InteractionError::Parse { .. })
        ));
        assert!(parse_interactions(r#"[{"head": "a", "relation": "R", "tail": " "}]"#, Path::new("x")).is_err());
        assert!(parse_interactions(
            r#"[{"head": "a", "relation": "HAS_ADVERSE_EFFECT", "tail": "b", "severity": "major"}]"#,
            Path::new("x")
        )
        .is_err());
        let ok = parse_interactions(
            r#"[{"head": "a", "relation": "INTERACTS_WITH", "tail": "b", "severity": "Moderate"}]"#,
            Path::new("x"),
        )
        .unwrap();
        assert_eq!(ok[0].severity, Some(Severity::Moderate));
    }

    #[test]
    fn stub_embedder_properties() {
        let e = StubEmbedder::default();
        let a = e.embed("alfentanil | INTERACTS_WITH | gabapentin").unwrap();
        assert_eq!(a, e.embed("alfentanil | INTERACTS_WITH | gabapentin").unwrap());
        assert_eq!(a.len(), DEFAULT_EMBEDDING_DIM);
        assert!((norm(&a) - 1.0).abs() < 1e-9);
        assert!((norm(&e.embed("").unwrap()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cosine_examples() {
        let v = [0.3, -2.0, 5.0];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(InteractionError::DimensionMismatch(1, 2))
        ));
        assert!(matches!(
            cosine(&[0.0, 0.0], &[1.0, 0.0]),
            Err(InteractionError::ZeroVector)
        ));
    }

    #[test]
    fn retrieve_exact_text_first_and_k_bounds() {
        let e = StubEmbedder::default();
        let ts = parse_interactions(FIXTURE, Path::new("f")).unwrap();
        let idx = TripletIndex::build(ts.clone(), &e).unwrap();
        let target = &ts[5];
        let hits = idx.retrieve(&target.render(), &e, 3).unwrap();
        assert_eq!(hits[0].triplet_id, 5);
        assert!((hits[0].score - 1.0).abs() < 1e-9);
        let all = idx.retrieve("gabapentin", &e, 10_000).unwrap();
        assert_eq!(all.len(), ts.len());
        assert!(all.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(matches!(idx.retrieve("x", &e, 0), Err(InteractionError::InvalidK)));
        let empty = TripletIndex::build(vec![], &e).unwrap();
        assert!(matches!(empty.retrieve("x", &e, 1), Err(InteractionError::EmptyIndex)));
    }

    #[test]
    fn retrieve_matches_brute_force_on_random_corpus() {
        let mut rng = StdRng::seed_from_u64(7);
        let words = [
            "alfentanil",
            "gabapentin",
            "hypotension",
            "losartan",
            "sedation",
            "bleeding",
            "renal",
            "statin",
        ];
        let ts: Vec<Triplet> = (0..100)
            .map(|_| {
                let w = |rng: &mut StdRng| words[rng.random_range(0..words.len())];
                t(w(&mut rng), "INTERACTS_WITH", w(&mut rng), Some(Severity::Moderate))
            })
            .collect();
        let e = StubEmbedder::default();
        let idx = TripletIndex::build(ts.clone(), &e).unwrap();
        for query in ["alfentanil sedation", "renal bleeding", "losartan"] {
            let q = e.embed(query).unwrap();
            let mut oracle: Vec<(usize, f64)> = ts
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let v = e.embed(&t.render()).unwrap();
                    let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                    (i, dot)
                })
                .collect();
            oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let got = idx.retrieve(query, &e, 10).unwrap();
            for (g, o) in got.iter().zip(&oracle) {
                assert!((g.score - o.1).abs() < 1e-9);
            }
            let got_scores: Vec<f64> = got.iter().map(|r| r.score).collect();
            assert_eq!(got_scores.len(), 10);
        }
    }

    #[test]
    fn summary_lines_in_order() {
        let gw = LmGateway::stub(StubProvider::new());
        let a = t("alfentanil", "INTERACTS_WITH", "gabapentin", Some(Severity::Major));
        let b = t("alfentanil", "HAS_ADVERSE_EFFECT", "hypotension", None);
        let c = t("alfentanil", "ELIGIBLE_AGE", "adults", None);
        let one = summarize(&[&a], &gw).unwrap();
        assert_eq!(one, "alfentanil INTERACTS_WITH gabapentin (major)");
        let three = summarize(&[&a, &b, &c], &gw).unwrap();
        let lines: Vec<_> = three.lines().collect();
        assert_eq!(
            lines,
            [
                "alfentanil INTERACTS_WITH gabapentin (major)",
                "alfentanil HAS_ADVERSE_EFFECT hypotension",
                "alfentanil ELIGIBLE_AGE adults"
            ]
        );
        assert!(matches!(summarize(&[], &gw), Err(InteractionError::NothingToSummarize)));
    }

    #[test]
    fn remote_embedder_failure_and_success() {
        let script = Arc::new(ScriptedTransport::new(vec![
            Err(TransportError::Timeout),
            Ok(HttpResponse {
                status: 200,
                body: r#"{"data":[{"embedding":[3.0,4.0]}]}"#.into(),
                retry_after_secs: None,
            }),
        ]));
        let e = RemoteEmbedder::new("m", "http://x", "k", 2, script);
        assert!(matches!(e.embed("q"), Err(InteractionError::EmbedderUnavailable(_))));
        assert_eq!(e.embed("q").unwrap(), vec![0.6, 0.8]);
    }

    proptest! {
        #[test]
        fn cosine_symmetric(a in proptest::collection::vec(-10.0f64..10.0, 4), b in proptest::collection::vec(-10.0f64..10.0, 4)) {
            prop_assume!(norm(&a) > 1e-6 && norm(&b) > 1e-6);
            let (x, y) = (cosine(&a, &b).unwrap(), cosine(&b, &a).unwrap());
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&x));
        }

        #[test]
        fn ranking_scale_invariant(c in 0.01f64..100.0, q in proptest::collection::vec(-1.0f64..1.0, 3), vs in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 3), 2..8)) {
            prop_assume!(norm(&q) > 1e-3 && vs.iter().all(|v| norm(v) > 1e-3));
            let rank = |vs: &[Vec<f64>]| {
                let mut s: Vec<(usize, f64)> = vs.iter().enumerate().map(|(i, v)| (i, cosine(&q, v).unwrap())).collect();
                s.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                s.into_iter().map(|(i, _)| i).collect::<Vec<_>>()
            };
            let scaled: Vec<Vec<f64>> = vs.iter().enumerate()
                .map(|(i, v)| if i == 0 { v.iter().map(|x| x * c).collect() } else { v.clone() })
                .collect();
            let renorm: Vec<Vec<f64>> = scaled.into_iter().map(|v| normalize(v).unwrap()).collect();
            prop_assert_eq!(rank(&vs), rank(&renorm));
        }

        #[test]
        fn stub_embedding_pure(text in ".{0,40}") {
            let e = StubEmbedder::default();
            prop_assert_eq!(e.embed(&text).unwrap(), e.embed(&text).unwrap());
        }
    }
}
