//! Location connectivity map (undirected, optionally labelled edges).
//!
//! File format (TOML):
//!
//! ```toml
//! nodes = ["322 Broadway", "3rd Avenue South"]   # optional
//! [[edges]]
//! a = "322 Broadway"
//! b = "3rd Avenue South"
//! label = "cross street"                         # optional
//! ```
//!
//! When `nodes` is given every edge endpoint must be listed; otherwise the
//! node set is the set of endpoints.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;

use super::gazetteer::normalize_address;
use super::KnowledgeError;

#[derive(Deserialize)]
struct RawEdge {
    a: String,
    b: String,
    label: Option<String>,
}

#[derive(Deserialize)]
struct RawMap {
    nodes: Option<Vec<String>>,
    #[serde(default)]
    edges: Vec<RawEdge>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConnectivityMap {
    /// Display name per normalised node key.
    names: BTreeMap<String, String>,
    adjacency: BTreeMap<String, BTreeMap<String, Option<String>>>,
}

impl ConnectivityMap {
    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        let text = std::fs::read_to_string(path).map_err(|e| KnowledgeError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, KnowledgeError> {
        let raw: RawMap = toml::from_str(text).map_err(|e| KnowledgeError::Map(e.to_string()))?;
        let mut map = ConnectivityMap::default();
        let declared: Option<BTreeSet<String>> =
            raw.nodes.as_ref().map(|nodes| nodes.iter().map(|n| normalize_address(n)).collect());
        for n in raw.nodes.iter().flatten() {
            map.add_node(n);
        }
        for e in &raw.edges {
            let (ka, kb) = (normalize_address(&e.a), normalize_address(&e.b));
            if ka.is_empty() || kb.is_empty() {
                return Err(KnowledgeError::Map("edge with empty endpoint".into()));
            }
            if ka == kb {
                return Err(KnowledgeError::Map(format!("self-loop on {:?}", e.a)));
            }
            if let Some(decl) = &declared {
                for (key, name) in [(&ka, &e.a), (&kb, &e.b)] {
                    if !decl.contains(key) {
                        return Err(KnowledgeError::Map(format!("edge endpoint {name:?} is not a declared node")));
                    }
                }
            }
            map.add_edge(&e.a, &e.b, e.label.clone());
        }
        Ok(map)
    }

    fn add_node(&mut self, name: &str) -> String {
        let key = normalize_address(name);
        self.names.entry(key.clone()).or_insert_with(|| name.trim().to_string());
        self.adjacency.entry(key.clone()).or_default();
        key
    }

    pub fn add_edge(&mut self, a: &str, b: &str, label: Option<String>) {
        let ka = self.add_node(a);
        let kb = self.add_node(b);
        self.adjacency.get_mut(&ka).unwrap().insert(kb.clone(), label.clone());
        self.adjacency.get_mut(&kb).unwrap().insert(ka, label);
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeMap::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.adjacency.get(&normalize_address(a)).is_some_and(|n| n.contains_key(&normalize_address(b)))
    }

    /// Neighbour display names and edge labels, in key order.
    pub fn neighbors(&self, node: &str) -> Vec<(&str, Option<&str>)> {
        self.adjacency
            .get(&normalize_address(node))
            .map(|n| n.iter().map(|(k, label)| (self.names[k].as_str(), label.as_deref())).collect())
            .unwrap_or_default()
    }

    /// One-line description of a node's surroundings, or `None` if it has no edges.
    pub fn describe(&self, node: &str) -> Option<String> {
        let neighbors = self.neighbors(node);
        if neighbors.is_empty() {
            return None;
        }
        let parts: Vec<String> = neighbors
            .iter()
            .map(|(name, label)| match label {
                Some(l) => format!("{name} ({l})"),
                None => name.to_string(),
            })
            .collect();
        Some(format!("{} connects to {}", node.trim(), parts.join(", ")))
    }

    /// Every stored edge has its mirror.
    pub fn is_symmetric(&self) -> bool {
        self.adjacency
            .iter()
            .all(|(a, ns)| ns.iter().all(|(b, label)| self.adjacency.get(b).and_then(|m| m.get(a)) == Some(label)))
    }
}
