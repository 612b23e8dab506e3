//! Helpers shared by the integration tests.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;
use std::process::{Command, Output};

use graphviz_rust::dot_structures::{EdgeTy, Graph, Id, Stmt, Vertex};

pub fn mimic(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimic"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn mimic")
}

fn id_text(id: &Id) -> String {
    let raw = match id {
        Id::Html(s) | Id::Escaped(s) | Id::Plain(s) | Id::Anonymous(s) => s.as_str(),
    };
    raw.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(raw)
        .replace("\\\"", "\"")
}

enum Step {
    Leaf(f64),
    Split { feature: usize, threshold: f64 },
}

/// A tree read back from DOT text, walkable without the model that wrote it.
pub struct DotTree {
    nodes: HashMap<String, Step>,
    children: HashMap<String, (String, String)>,
}

impl DotTree {
    /// Parses `text` with an independent DOT parser. Errors on a syntax error
    /// or a node whose tooltip is not understood.
    pub fn parse(text: &str) -> Result<DotTree, String> {
        let Graph::DiGraph { stmts, .. } = graphviz_rust::parse(text)? else {
            return Err("not a digraph".into());
        };
        let mut nodes = HashMap::new();
        let mut edges: HashMap<String, Vec<(String, bool)>> = HashMap::new();
        for stmt in &stmts {
            match stmt {
                Stmt::Node(n) => {
                    let tip = n
                        .attributes
                        .iter()
                        .find(|a| id_text(&a.0) == "tooltip")
                        .map(|a| id_text(&a.1))
                        .ok_or("node without tooltip")?;
                    let step = if let Some(v) = tip.strip_prefix("value = ") {
                        Step::Leaf(v.parse().map_err(|_| format!("leaf value `{v}`"))?)
                    } else {
                        let (head, cond) = tip.split_once("; ").ok_or("split tooltip")?;
                        let feature = head.strip_prefix("feature = ").ok_or("feature")?.parse().map_err(|_| "feature index")?;
                        let (_, t) = cond.rsplit_once(" <= ").ok_or("threshold")?;
                        Step::Split {
                            feature,
                            threshold: t.parse().map_err(|_| format!("threshold `{t}`"))?,
                        }
                    };
                    nodes.insert(id_text(&n.id.0), step);
                }
                Stmt::Edge(e) => {
                    let EdgeTy::Pair(Vertex::N(a), Vertex::N(b)) = &e.ty else {
                        return Err("unexpected edge form".into());
                    };
                    let left = e.attributes.iter().any(|a| id_text(&a.0) == "label" && id_text(&a.1) == "true");
                    edges.entry(id_text(&a.0)).or_default().push((id_text(&b.0), left));
                }
                _ => {}
            }
        }
        let mut children = HashMap::new();
        for (from, out) in edges {
            let l = out.iter().find(|c| c.1).ok_or("missing left edge")?;
            let r = out.iter().find(|c| !c.1).ok_or("missing right edge")?;
            children.insert(from, (l.0.clone(), r.0.clone()));
        }
        Ok(DotTree { nodes, children })
    }

    /// Follows `row` from the root to a leaf and returns the leaf's value.
    pub fn trace(&self, row: &[f64]) -> f64 {
        let mut at = "0".to_string();
        loop {
            match self.nodes[&at] {
                Step::Leaf(v) => return v,
                Step::Split { feature, threshold } => {
                    let (l, r) = &self.children[&at];
                    at = if row[feature] <= threshold { l.clone() } else { r.clone() };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.values().filter(|s| matches!(s, Step::Leaf(_))).count()
    }
}
