//! Property-graph knowledge base for operational state, decisions, outcomes
//! and human feedback.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("node {0} not found")]
    NotFound(String),
    #[error("edge {src} -[{label}]-> {dst} references missing node {missing}")]
    Dangling { src: String, dst: String, label: String, missing: String },
    #[error("node {id} already exists as {existing:?}, cannot become {requested:?}")]
    KindChange { id: String, existing: NodeKind, requested: NodeKind },
    #[error("node {0} is not a decision")]
    NotADecision(String),
    #[error("snapshot line {line}: {message}")]
    Snapshot { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Incident,
    Resource,
    Decision,
    Outcome,
    Feedback,
    DomainFact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Bool(bool),
    Number(f64),
    Str(String),
}

impl Scalar {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Number(x) => Some(*x),
            _ => None,
        }
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Str(s.into())
    }
}

impl From<String> for Scalar {
    fn from(s: String) -> Self {
        Scalar::Str(s)
    }
}

impl From<f64> for Scalar {
    fn from(x: f64) -> Self {
        Scalar::Number(x)
    }
}

impl From<bool> for Scalar {
    fn from(b: bool) -> Self {
        Scalar::Bool(b)
    }
}

pub type Props = BTreeMap<String, Scalar>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub node_id: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub props: Props,
}

impl Node {
    pub fn new(node_id: impl Into<String>, kind: NodeKind) -> Self {
        Node { node_id: node_id.into(), kind, props: Props::new() }
    }

    pub fn with(mut self, key: &str, value: impl Into<Scalar>) -> Self {
        self.props.insert(key.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub label: String,
    #[serde(default)]
    pub props: Props,
}

impl Edge {
    pub fn new(src: impl Into<String>, dst: impl Into<String>, label: impl Into<String>) -> Self {
        Edge { src: src.into(), dst: dst.into(), label: label.into(), props: Props::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Approved,
    Overridden,
    Modified,
}

impl Verdict {
    pub fn edge_label(self) -> &'static str {
        match self {
            Verdict::Approved => labels::APPROVED,
            Verdict::Overridden => labels::OVERRODE,
            Verdict::Modified => labels::MODIFIED,
        }
    }
}

pub mod labels {
    pub const ALLOCATED_TO: &str = "ALLOCATED_TO";
    pub const RESULTED_IN: &str = "RESULTED_IN";
    pub const CONCERNS: &str = "CONCERNS";
    pub const APPROVED: &str = "APPROVED";
    pub const OVERRODE: &str = "OVERRODE";
    pub const MODIFIED: &str = "MODIFIED";
}

/// A stored feedback entry as returned by history queries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackEntry {
    pub feedback_id: String,
    pub decision_id: String,
    pub verdict: Verdict,
    pub replacement: Option<String>,
    pub author: String,
    pub seq: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Node(Node),
    Edge(Edge),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<String, Node>,
    edges: BTreeMap<(String, String, String), Edge>,
    feedback_seq: u64,
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    /// Inserts or replaces the node's props; the kind of an existing node
    /// cannot change.
    pub fn upsert_node(&mut self, node: Node) -> Result<String, GraphError> {
        if let Some(existing) = self.nodes.get(&node.node_id) {
            if existing.kind != node.kind {
                return Err(GraphError::KindChange {
                    id: node.node_id,
                    existing: existing.kind,
                    requested: node.kind,
                });
            }
        }
        let id = node.node_id.clone();
        self.nodes.insert(id.clone(), node);
        Ok(id)
    }

    /// Inserts an edge; re-adding the same `(src, dst, label)` replaces props.
    pub fn add_edge(&mut self, edge: Edge) -> Result<(), GraphError> {
        for end in [&edge.src, &edge.dst] {
            if !self.nodes.contains_key(end) {
                return Err(GraphError::Dangling {
                    src: edge.src.clone(),
                    dst: edge.dst.clone(),
                    label: edge.label.clone(),
                    missing: end.clone(),
                });
            }
        }
        self.edges.insert((edge.src.clone(), edge.dst.clone(), edge.label.clone()), edge);
        Ok(())
    }

    /// Adjacent nodes, deduplicated and sorted by id.
    pub fn neighbors(&self, id: &str, label: Option<&str>, dir: Direction) -> Result<Vec<&Node>, GraphError> {
        if !self.nodes.contains_key(id) {
            return Err(GraphError::NotFound(id.into()));
        }
        let mut ids: Vec<&str> = self
            .edges
            .values()
            .filter(|e| label.is_none_or(|l| e.label == l))
            .filter_map(|e| match dir {
                Direction::Out if e.src == id => Some(e.dst.as_str()),
                Direction::In if e.dst == id => Some(e.src.as_str()),
                Direction::Both if e.src == id => Some(e.dst.as_str()),
                Direction::Both if e.dst == id => Some(e.src.as_str()),
                _ => None,
            })
            .collect();
        ids.sort_unstable();
        ids.dedup();
        Ok(ids.into_iter().map(|i| &self.nodes[i]).collect())
    }

    /// Stores a verdict on a decision as a Feedback node with a verdict edge
    /// from the feedback to the decision.
    pub fn record_feedback(
        &mut self,
        decision_id: &str,
        verdict: Verdict,
        replacement: Option<&str>,
        author: &str,
    ) -> Result<String, GraphError> {
        match self.nodes.get(decision_id) {
            None => return Err(GraphError::NotFound(decision_id.into())),
            Some(n) if n.kind != NodeKind::Decision => return Err(GraphError::NotADecision(decision_id.into())),
            _ => {}
        }
        let seq = self.feedback_seq;
        self.feedback_seq += 1;
        let id = format!("feedback-{seq:06}");
        let mut node = Node::new(&id, NodeKind::Feedback)
            .with("verdict", format!("{verdict:?}"))
            .with("author", author)
            .with("seq", seq as f64)
            .with("decision_id", decision_id);
        if let Some(r) = replacement {
            node = node.with("replacement", r);
        }
        self.upsert_node(node)?;
        self.add_edge(Edge::new(&id, decision_id, verdict.edge_label()))?;
        Ok(id)
    }

    fn feedback_entry(&self, fb: &Node) -> Option<FeedbackEntry> {
        let verdict = match fb.props.get("verdict")?.as_str()? {
            "Approved" => Verdict::Approved,
            "Overridden" => Verdict::Overridden,
            "Modified" => Verdict::Modified,
            _ => return None,
        };
        Some(FeedbackEntry {
            feedback_id: fb.node_id.clone(),
            decision_id: fb.props.get("decision_id")?.as_str()?.to_string(),
            verdict,
            replacement: fb.props.get("replacement").and_then(Scalar::as_str).map(str::to_string),
            author: fb.props.get("author").and_then(Scalar::as_str).unwrap_or_default().to_string(),
            seq: fb.props.get("seq").and_then(Scalar::as_f64).unwrap_or(0.0) as u64,
        })
    }

    /// Feedback on every decision that CONCERNS the incident, in the order it
    /// was recorded.
    pub fn feedback_history(&self, incident_id: &str) -> Result<Vec<FeedbackEntry>, GraphError> {
        let decisions = self.neighbors(incident_id, Some(labels::CONCERNS), Direction::In)?;
        let mut out = Vec::new();
        for d in decisions.iter().filter(|d| d.kind == NodeKind::Decision) {
            for fb in self.neighbors(&d.node_id, None, Direction::In)? {
                if fb.kind == NodeKind::Feedback {
                    out.extend(self.feedback_entry(fb));
                }
            }
        }
        out.sort_by_key(|e| e.seq);
        Ok(out)
    }

    /// Nodes first, then edges, one record per line.
    pub fn snapshot<W: Write>(&self, mut out: W) -> Result<(), GraphError> {
        for n in self.nodes.values() {
            serde_json::to_writer(&mut out, &Record::Node(n.clone())).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        for e in self.edges.values() {
            serde_json::to_writer(&mut out, &Record::Edge(e.clone())).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load<R: BufRead>(input: R) -> Result<Self, GraphError> {
        let mut g = KnowledgeGraph::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| GraphError::Snapshot { line: i + 1, message };
            match serde_json::from_str::<Record>(&line).map_err(|e| bad(e.to_string()))? {
                Record::Node(n) => {
                    if n.kind == NodeKind::Feedback {
                        let seq = n.props.get("seq").and_then(Scalar::as_f64).unwrap_or(0.0) as u64;
                        g.feedback_seq = g.feedback_seq.max(seq + 1);
                    }
                    g.upsert_node(n).map_err(|e| bad(e.to_string()))?;
                }
                Record::Edge(e) => g.add_edge(e).map_err(|e| bad(e.to_string()))?,
            }
        }
        Ok(g)
    }
}
