//! Drug → disease → dosage knowledge graph.

mod age;
pub mod extract;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use indexmap::IndexMap;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub use age::{parse_age_constraint, AgeConstraint};
pub use extract::{DoseKind, ExtractedDosage, ExtractionOutput};

use crate::gateway::{template, GatewayError, LmGateway, LmRequest};
use crate::icd::normalize_name;
use crate::json::to_pretty_json;
use crate::model::{AgeGroup, DosageFit, PrescriptionItem};
use crate::monograph::DrugMonograph;

pub const NODES_FILE: &str = "nodes.json";
pub const RELATIONSHIPS_FILE: &str = "relationships.json";

#[derive(Debug, Error)]
pub enum DosageError {
    #[error("monograph corpus is empty")]
    EmptyCorpus,
    #[error("no drug node named {0:?}")]
    UnknownDrug(String),
    #[error("no candidate diseases to match against")]
    NoCandidates,
    #[error("no candidate disease matches {0:?}")]
    NoMatch(String),
    #[error("cannot parse age text {0:?}")]
    UnparseableAgeText(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{context}: {message}")]
    Schema { context: String, message: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

fn schema(context: impl Into<String>, message: impl Into<String>) -> DosageError {
    DosageError::Schema {
        context: context.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeType {
    Drug,
    Disease,
    Dosage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgNode {
    pub id: u64,
    pub name: String,
    #[serde(rename = "type")]
    pub kind: NodeType,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeType {
    Treats,
    InitialDosage,
    SpecificDosage,
}

impl EdgeType {
    pub fn dose_kind(self) -> Option<DoseKind> {
        match self {
            EdgeType::Treats => None,
            EdgeType::InitialDosage => Some(DoseKind::Initial),
            EdgeType::SpecificDosage => Some(DoseKind::Specific),
        }
    }
}

impl From<DoseKind> for EdgeType {
    fn from(kind: DoseKind) -> Self {
        match kind {
            DoseKind::Initial => EdgeType::InitialDosage,
            DoseKind::Specific => EdgeType::SpecificDosage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgEdge {
    pub start_id: u64,
    pub end_id: u64,
    #[serde(rename = "type")]
    pub kind: EdgeType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_group: Option<AgeGroup>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_specific: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub administration: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub indication: Option<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl KgEdge {
    fn treats(drug: u64, disease: u64, group: AgeGroup) -> Self {
        Self {
            start_id: drug,
            end_id: disease,
            kind: EdgeType::Treats,
            age_group: Some(group),
            age_specific: None,
            administration: None,
            indication: None,
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct GraphIndex {
    position: HashMap<u64, usize>,
    drugs: HashMap<String, u64>,
    /// (drug id, age group) → disease ids in edge order
    treats: HashMap<(u64, AgeGroup), Vec<u64>>,
    /// disease id → dosage edge positions in edge order
    dosages: HashMap<u64, Vec<usize>>,
}

/// A validated graph. Immutable after construction.
#[derive(Debug, Clone, Default)]
pub struct DosageGraph {
    nodes: Vec<KgNode>,
    edges: Vec<KgEdge>,
    index: GraphIndex,
}

impl PartialEq for DosageGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl DosageGraph {
    /// Checks well-formedness and builds the lookup index.
    pub fn from_parts(nodes: Vec<KgNode>, edges: Vec<KgEdge>) -> Result<Self, DosageError> {
        let mut index = GraphIndex::default();
        for (pos, n) in nodes.iter().enumerate() {
            if n.id == 0 {
                return Err(schema(format!("node {pos}"), "node ids must be positive"));
            }
            if n.name.trim().is_empty() {
                return Err(schema(format!("node {}", n.id), "node name is empty"));
            }
            if index.position.insert(n.id, pos).is_some() {
                return Err(schema(format!("node {}", n.id), "duplicate node id"));
            }
            if n.kind == NodeType::Drug && index.drugs.insert(normalize_name(&n.name), n.id).is_some() {
                return Err(schema(format!("node {}", n.id), "duplicate drug name"));
            }
        }
        let kind_of = |id: u64, pos: usize| {
            index
                .position
                .get(&id)
                .map(|&p| nodes[p].kind)
                .ok_or_else(|| schema(format!("relationship {pos}"), format!("references missing node {id}")))
        };
        let mut reached = HashSet::new();
        let mut treats: HashMap<(u64, AgeGroup), Vec<u64>> = HashMap::new();
        let mut dosages: HashMap<u64, Vec<usize>> = HashMap::new();
        for (pos, e) in edges.iter().enumerate() {
            let (from, to) = (kind_of(e.start_id, pos)?, kind_of(e.end_id, pos)?);
            match e.kind {
                EdgeType::Treats => {
                    if (from, to) != (NodeType::Drug, NodeType::Disease) {
                        return Err(schema(
                            format!("relationship {pos}"),
                            "TREATS must link Drug to Disease",
                        ));
                    }
                    let group = e
                        .age_group
                        .ok_or_else(|| schema(format!("relationship {pos}"), "TREATS needs age_group"))?;
                    let list = treats.entry((e.start_id, group)).or_default();
                    if !list.contains(&e.end_id) {
                        list.push(e.end_id);
                    }
                }
                EdgeType::InitialDosage | EdgeType::SpecificDosage => {
                    if (from, to) != (NodeType::Disease, NodeType::Dosage) {
                        return Err(schema(
                            format!("relationship {pos}"),
                            "dosage edges must link Disease to Dosage",
                        ));
                    }
                    reached.insert(e.end_id);
                    dosages.entry(e.start_id).or_default().push(pos);
                }
            }
        }
        if let Some(n) = nodes
            .iter()
            .find(|n| n.kind == NodeType::Dosage && !reached.contains(&n.id))
        {
            return Err(schema(
                format!("node {}", n.id),
                "dosage node has no incoming dosage edge",
            ));
        }
        index.treats = treats;
        index.dosages = dosages;
        Ok(Self { nodes, edges, index })
    }

    pub fn nodes(&self) -> &[KgNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[KgEdge] {
        &self.edges
    }

    pub fn node(&self, id: u64) -> Option<&KgNode> {
        self.index.position.get(&id).map(|&p| &self.nodes[p])
    }

    pub fn drug_id(&self, ingredient: &str) -> Option<u64> {
        self.index.drugs.get(&normalize_name(ingredient)).copied()
    }

    pub fn drug_names(&self) -> impl Iterator<Item = &str> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeType::Drug)
            .map(|n| n.name.as_str())
    }

    /// True when drug → disease → dosage edges exist with the given kind.
    pub fn has_path(&self, drug: u64, disease: u64, dosage: u64, kind: DoseKind) -> bool {
        let treats = self
            .edges
            .iter()
            .any(|e| e.kind == EdgeType::Treats && e.start_id == drug && e.end_id == disease);
        treats
            && self
                .edges
                .iter()
                .any(|e| e.kind == EdgeType::from(kind) && e.start_id == disease && e.end_id == dosage)
    }
}

/// start, end, type, age text, route, indication.
type EdgeKey = (u64, u64, EdgeType, Option<String>, Option<String>, Option<String>);

#[derive(Default)]
struct GraphBuilder {
    nodes: Vec<KgNode>,
    edges: Vec<KgEdge>,
    drugs: HashMap<String, u64>,
    dosages: HashMap<String, u64>,
    edge_keys: HashSet<EdgeKey>,
}

impl GraphBuilder {
    fn add_node(&mut self, name: &str, kind: NodeType) -> u64 {
        let id = self.nodes.len() as u64 + 1;
        self.nodes.push(KgNode {
            id,
            name: name.to_string(),
            kind,
            extra: Map::new(),
        });
        id
    }

    fn drug(&mut self, name: &str) -> u64 {
        match self.drugs.get(name) {
            Some(&id) => id,
            None => {
                let id = self.add_node(name, NodeType::Drug);
                self.drugs.insert(name.to_string(), id);
                id
            }
        }
    }

    fn dosage(&mut self, name: &str) -> u64 {
        match self.dosages.get(name) {
            Some(&id) => id,
            None => {
                let id = self.add_node(name, NodeType::Dosage);
                self.dosages.insert(name.to_string(), id);
                id
            }
        }
    }

    fn edge(&mut self, edge: KgEdge) {
        let key = (
            edge.start_id,
            edge.end_id,
            edge.kind,
            edge.age_specific.clone(),
            edge.administration.clone(),
            edge.indication.clone(),
        );
        if self.edge_keys.insert(key) {
            self.edges.push(edge);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedDisease {
    pub ingredient: String,
    pub age_group: AgeGroup,
    pub disease: String,
    pub reason: String,
}

fn node_label(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn extract_for(
    gateway: &LmGateway,
    ingredient: &str,
    group: AgeGroup,
    disease: &str,
    contexts: &IndexMap<String, String>,
) -> Result<Vec<ExtractedDosage>, String> {
    let request = LmRequest::new(template::DOSAGE_EXTRACTION)
        .var("ingredient", ingredient)
        .var("age_group", group.graph_label())
        .var("disease", disease)
        .var(
            "contexts",
            serde_json::to_string(contexts).expect("string map serializes"),
        );
    let reply = gateway.complete(&request).map_err(|e| e.to_string())?;
    Ok(ExtractionOutput::parse(&reply.text)?.dosages)
}

/// Builds the graph ingredient by ingredient, age group by age group,
/// disease by disease. A disease whose extraction fails is skipped and
/// reported; the rest of the graph is still built.
pub fn build_graph_with_report(
    monographs: &[DrugMonograph],
    gateway: &LmGateway,
) -> Result<(DosageGraph, Vec<SkippedDisease>), DosageError> {
    if monographs.is_empty() {
        return Err(DosageError::EmptyCorpus);
    }
    let mut b = GraphBuilder::default();
    let mut skipped = Vec::new();
    for m in monographs {
        let drug = b.drug(&m.ingredient);
        for (&group, diseases) in &m.dosage_by_age_group {
            let mut seen = HashMap::new();
            for (disease, contexts) in diseases {
                let dosages = match extract_for(gateway, &m.ingredient, group, disease, contexts) {
                    Ok(d) => d,
                    Err(reason) => {
                        log::warn!(
                            "skipping {} / {} / {disease}: {reason}",
                            m.ingredient,
                            group.graph_label()
                        );
                        skipped.push(SkippedDisease {
                            ingredient: m.ingredient.clone(),
                            age_group: group,
                            disease: disease.clone(),
                            reason,
                        });
                        continue;
                    }
                };
                let label = node_label(disease);
                let disease_id = match seen.get(&label) {
                    Some(&id) => id,
                    None => {
                        let id = b.add_node(&label, NodeType::Disease);
                        seen.insert(label, id);
                        b.edge(KgEdge::treats(drug, id, group));
                        id
                    }
                };
                for d in dosages {
                    let name = node_label(&d.name);
                    if name.is_empty() {
                        continue;
                    }
                    let dose_id = b.dosage(&name);
                    b.edge(KgEdge {
                        start_id: disease_id,
                        end_id: dose_id,
                        kind: d.kind.into(),
                        age_group: None,
                        age_specific: d.age_specific.filter(|s| !s.trim().is_empty()),
                        administration: d.administration.filter(|s| !s.trim().is_empty()),
                        indication: d.indication.filter(|s| !s.trim().is_empty()),
                        extra: Map::new(),
                    });
                }
            }
        }
    }
    Ok((DosageGraph::from_parts(b.nodes, b.edges)?, skipped))
}

pub fn build_graph(monographs: &[DrugMonograph], gateway: &LmGateway) -> Result<DosageGraph, DosageError> {
    build_graph_with_report(monographs, gateway).map(|(g, _)| g)
}

/// Disease nodes linked from `ingredient` by TREATS edges for `group`.
pub fn find_diseases<'g>(
    graph: &'g DosageGraph,
    ingredient: &str,
    group: AgeGroup,
) -> Result<Vec<&'g KgNode>, DosageError> {
    let drug = graph
        .drug_id(ingredient)
        .ok_or_else(|| DosageError::UnknownDrug(ingredient.to_string()))?;
    Ok(graph
        .index
        .treats
        .get(&(drug, group))
        .into_iter()
        .flatten()
        .filter_map(|&id| graph.node(id))
        .collect())
}

fn tokens(text: &str) -> BTreeSet<String> {
    normalize_name(text)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Candidate sharing the most word tokens with `disease`; ties go to the
/// lexicographically smallest. A lone candidate is always returned. With
/// several candidates and no shared token, returns `None`.
pub fn closest_by_token_overlap<'a>(disease: &str, candidates: &[&'a str]) -> Option<&'a str> {
    if let [only] = candidates {
        return Some(only);
    }
    let wanted = tokens(disease);
    candidates
        .iter()
        .map(|c| (tokens(c).intersection(&wanted).count(), *c))
        .filter(|(n, _)| *n > 0)
        .max_by(|(na, a), (nb, b)| na.cmp(nb).then_with(|| b.cmp(a)))
        .map(|(_, c)| c)
}

/// Resolves a diagnosis to one of `candidates`.
///
/// Normalized equality wins. Next, the longest candidate contained in
/// the diagnosis, then the shortest candidate containing it. Otherwise
/// the gateway picks.
pub fn match_disease<S: AsRef<str>>(
    diagnosed: &str,
    candidates: &[S],
    gateway: &LmGateway,
) -> Result<String, DosageError> {
    if candidates.is_empty() {
        return Err(DosageError::NoCandidates);
    }
    let want = normalize_name(diagnosed);
    let norm: Vec<(String, &str)> = candidates
        .iter()
        .map(|c| (normalize_name(c.as_ref()), c.as_ref()))
        .collect();
    if let Some((_, c)) = norm.iter().filter(|(n, _)| *n == want).min_by_key(|(_, c)| *c) {
        return Ok(c.to_string());
    }
    let inside = norm
        .iter()
        .filter(|(n, _)| !n.is_empty() && want.contains(n.as_str()))
        .max_by(|(na, a), (nb, b)| na.len().cmp(&nb.len()).then_with(|| b.cmp(a)));
    let around = norm
        .iter()
        .filter(|(n, _)| !want.is_empty() && n.contains(want.as_str()))
        .min_by(|(na, a), (nb, b)| na.len().cmp(&nb.len()).then_with(|| a.cmp(b)));
    if let Some((_, c)) = inside.or(around) {
        return Ok(c.to_string());
    }

    let listing: Vec<String> = candidates.iter().map(|c| format!("- {}", c.as_ref())).collect();
    let reply = gateway.complete(
        &LmRequest::new(template::MATCH_DISEASE)
            .var("disease", diagnosed)
            .var("candidates", listing.join("\n")),
    )?;
    let answer = normalize_name(
        reply
            .text
            .trim()
            .trim_start_matches("- ")
            .trim_matches(['"', '.', '\'']),
    );
    norm.iter()
        .find(|(n, _)| *n == answer)
        .or_else(|| {
            norm.iter()
                .filter(|(n, _)| !n.is_empty() && answer.contains(n.as_str()))
                .max_by_key(|(n, _)| n.len())
        })
        .map(|(_, c)| c.to_string())
        .ok_or_else(|| DosageError::NoMatch(diagnosed.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DosePath {
    pub drug_id: u64,
    pub disease_id: u64,
    pub dosage_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoseRecommendation {
    pub dosage_text: String,
    pub edge_type: DoseKind,
    pub administration: Option<String>,
    pub indication: Option<String>,
    pub matched_age: Option<AgeConstraint>,
    /// Initial dosages are the baseline.
    pub baseline: bool,
    pub path: DosePath,
}

/// Dosages for one disease of `ingredient` within `group` whose age text,
/// when present, contains `age_years`. Initial dosages come first, then
/// narrower age ranges, then graph order. Unparseable age texts match
/// any age, with a warning.
pub fn find_dosages(
    graph: &DosageGraph,
    ingredient: &str,
    group: AgeGroup,
    disease: &str,
    age_years: f64,
) -> Result<Vec<DoseRecommendation>, DosageError> {
    let drug_id = graph
        .drug_id(ingredient)
        .ok_or_else(|| DosageError::UnknownDrug(ingredient.to_string()))?;
    let want = normalize_name(disease);
    let mut found: Vec<(f64, usize, DoseRecommendation)> = Vec::new();
    for node in find_diseases(graph, ingredient, group)? {
        if normalize_name(&node.name) != want {
            continue;
        }
        for &pos in graph.index.dosages.get(&node.id).into_iter().flatten() {
            let edge = &graph.edges[pos];
            let kind = edge.kind.dose_kind().expect("indexed edges are dosage edges");
            let matched_age = match &edge.age_specific {
                None => None,
                Some(text) => match parse_age_constraint(text) {
                    Ok(c) if c.contains(age_years) => Some(c),
                    Ok(_) => continue,
                    Err(_) => {
                        log::warn!("edge {pos}: age text {text:?} not understood; applying to all ages");
                        None
                    }
                },
            };
            let width = matched_age.as_ref().map_or(f64::INFINITY, AgeConstraint::width);
            let dosage = graph.node(edge.end_id).expect("validated endpoint");
            found.push((
                width,
                pos,
                DoseRecommendation {
                    dosage_text: dosage.name.clone(),
                    edge_type: kind,
                    administration: edge.administration.clone(),
                    indication: edge.indication.clone(),
                    matched_age,
                    baseline: kind == DoseKind::Initial,
                    path: DosePath {
                        drug_id,
                        disease_id: node.id,
                        dosage_id: dosage.id,
                    },
                },
            ));
        }
    }
    found.sort_by(|(wa, pa, a), (wb, pb, b)| {
        let rank = |k: DoseKind| (k == DoseKind::Specific) as u8;
        rank(a.edge_type)
            .cmp(&rank(b.edge_type))
            .then(wa.total_cmp(wb))
            .then(pa.cmp(pb))
    });
    Ok(found.into_iter().map(|(_, _, r)| r).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Recommendation {
    Found {
        disease: String,
        dosages: Vec<DoseRecommendation>,
    },
    NoInformation {
        reason: String,
    },
}

impl Recommendation {
    pub fn baseline(&self) -> Option<&DoseRecommendation> {
        match self {
            Recommendation::Found { dosages, .. } => dosages.iter().find(|d| d.baseline),
            Recommendation::NoInformation { .. } => None,
        }
    }
}

/// find_diseases → match_disease → find_dosages.
pub fn recommend(
    graph: &DosageGraph,
    ingredient: &str,
    group: AgeGroup,
    diagnosed: &str,
    age_years: f64,
    gateway: &LmGateway,
) -> Result<Recommendation, DosageError> {
    let diseases = find_diseases(graph, ingredient, group)?;
    let names: Vec<&str> = diseases.iter().map(|n| n.name.as_str()).collect();
    let disease = match match_disease(diagnosed, &names, gateway) {
        Ok(d) => d,
        Err(DosageError::NoCandidates) => {
            return Ok(Recommendation::NoInformation {
                reason: format!("no {} diseases recorded for {ingredient}", group.graph_label()),
            })
        }
        Err(DosageError::NoMatch(_)) => {
            return Ok(Recommendation::NoInformation {
                reason: format!(
                    "{diagnosed:?} matches no {} disease of {ingredient}",
                    group.graph_label()
                ),
            })
        }
        Err(e) => return Err(e),
    };
    let dosages = find_dosages(graph, ingredient, group, &disease, age_years)?;
    if dosages.is_empty() {
        return Ok(Recommendation::NoInformation {
            reason: format!("no dosage for {ingredient} / {disease} at age {age_years}"),
        });
    }
    Ok(Recommendation::Found { disease, dosages })
}

/// Inclusive mg range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MgQuantity {
    pub low: f64,
    pub high: f64,
}

static MG: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)(\d+(?:\.\d+)?)(?:\s*(?:-|\x{2013}|\x{2014}|to)\s*(\d+(?:\.\d+)?))?[\s-]*mg\b(\s*/\s*kg|\s+per\s+kg)?",
    )
    .expect("valid regex")
});

/// First "N mg" or "N-M mg" in `text`. Per-kilogram doses give `None`.
pub fn parse_mg_quantity(text: &str) -> Option<MgQuantity> {
    let c = MG.captures(text)?;
    if c.get(3).is_some() {
        return None;
    }
    let low: f64 = c[1].parse().ok()?;
    let high: f64 = c.get(2).map_or(Some(low), |m| m.as_str().parse().ok())?;
    Some(MgQuantity {
        low: low.min(high),
        high: low.max(high),
    })
}

/// Compares a prescribed mg amount against a baseline dose text.
pub fn flag_deviation_mg(prescribed_mg: Option<f64>, baseline_text: &str) -> DosageFit {
    let (Some(mg), Some(q)) = (prescribed_mg, parse_mg_quantity(baseline_text)) else {
        return DosageFit::NoInformation;
    };
    let eps = 1e-9;
    if mg >= q.low - eps && mg <= q.high + eps {
        DosageFit::WithinBaseline
    } else {
        DosageFit::Deviates
    }
}

/// Uses the item strength, or the first mg quantity in its instruction.
pub fn flag_deviation(prescribed: &PrescriptionItem, baseline: &DoseRecommendation) -> DosageFit {
    let mg = prescribed
        .strength_mg
        .or_else(|| parse_mg_quantity(&prescribed.dose_instruction).map(|q| q.low));
    flag_deviation_mg(mg, &baseline.dosage_text)
}

fn write_file(path: PathBuf, text: String) -> Result<(), DosageError> {
    fs::write(&path, text).map_err(|source| DosageError::Io { path, source })
}

fn read_list<T: serde::de::DeserializeOwned>(path: PathBuf) -> Result<Vec<T>, DosageError> {
    let text = fs::read_to_string(&path).map_err(|source| DosageError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| schema(path.display().to_string(), e.to_string()))
}

/// Writes `nodes.json` and `relationships.json` into `dir`.
pub fn save_graph(graph: &DosageGraph, dir: &Path) -> Result<(), DosageError> {
    fs::create_dir_all(dir).map_err(|source| DosageError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_file(dir.join(NODES_FILE), to_pretty_json(&graph.nodes))?;
    write_file(dir.join(RELATIONSHIPS_FILE), to_pretty_json(&graph.edges))
}

pub fn load_graph(dir: &Path) -> Result<DosageGraph, DosageError> {
    let nodes = read_list(dir.join(NODES_FILE))?;
    let edges = read_list(dir.join(RELATIONSHIPS_FILE))?;
    DosageGraph::from_parts(nodes, edges).map_err(|e| match e {
        DosageError::Schema { context, message } => schema(format!("{}: {context}", dir.display()), message),
        other => other,
    })
}
