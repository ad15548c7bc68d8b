//! Prescription verification against drug monographs, an ICD-10 usage
//! mapping, a dosage knowledge graph and a drug interaction index.

pub mod dosage;
pub mod evaluation;
pub mod gateway;
pub mod icd;
pub mod interaction;
mod json;
pub mod model;
pub mod monograph;
pub mod pipeline;

pub use dosage::{build_graph, recommend, DosageGraph, Recommendation};
pub use gateway::{GatewayConfig, LmGateway, StubProvider};
pub use model::{PrescriptionCase, Verdict};
pub use monograph::{load_monographs, DrugMonograph};
pub use pipeline::{Corpus, VerificationReport, Verifier, VerifierConfig};
