//! Tree-structured questioning protocols, one tree per incident type.
//!
//! ```toml
//! [[protocol]]
//! incident_type = "crash report"
//! root = "injured"
//!
//! [[protocol.nodes]]
//! id = "injured"
//! question = "Is anyone injured?"
//! children = [{ answer = "yes", node = "how-many" }, { answer = "no", node = "blocking" }]
//!
//! [[protocol.nodes]]
//! id = "blocking"
//! question = "Are the vehicles blocking traffic?"
//! terminal = true
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::KnowledgeError;
use crate::corpus::Label;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Branch {
    pub answer: String,
    pub node: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolNode {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub children: Vec<Branch>,
    #[serde(default)]
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolTree {
    pub incident_type: Label,
    pub root: String,
    nodes: Vec<ProtocolNode>,
    by_id: HashMap<String, usize>,
}

#[derive(Deserialize)]
struct RawTree {
    incident_type: String,
    root: String,
    nodes: Vec<ProtocolNode>,
}

#[derive(Deserialize)]
struct RawProtocols {
    #[serde(default)]
    protocol: Vec<RawTree>,
}

impl ProtocolTree {
    pub fn new(incident_type: Label, root: String, nodes: Vec<ProtocolNode>) -> Result<Self, KnowledgeError> {
        let err = |message: String| KnowledgeError::Protocol { incident_type: incident_type.to_string(), message };
        let mut by_id = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if by_id.insert(n.id.clone(), i).is_some() {
                return Err(err(format!("duplicate node id {:?}", n.id)));
            }
        }
        if !by_id.contains_key(&root) {
            return Err(err(format!("root {root:?} is not a node")));
        }
        let mut parents: HashMap<String, usize> = HashMap::new();
        for n in &nodes {
            if n.terminal && !n.children.is_empty() {
                return Err(err(format!("terminal node {:?} has children", n.id)));
            }
            if !n.terminal && n.children.is_empty() {
                return Err(err(format!("non-terminal node {:?} has no children", n.id)));
            }
            for b in &n.children {
                if !by_id.contains_key(&b.node) {
                    return Err(err(format!("node {:?} points at unknown node {:?}", n.id, b.node)));
                }
                *parents.entry(b.node.clone()).or_default() += 1;
            }
        }

        let tree = ProtocolTree { incident_type: incident_type.clone(), root, nodes, by_id };

        // Acyclicity first so the error names the cycle rather than a shared child.
        let mut state: HashMap<&str, u8> = HashMap::new();
        fn visit<'a>(t: &'a ProtocolTree, id: &'a str, state: &mut HashMap<&'a str, u8>) -> Option<String> {
            match state.get(id) {
                Some(1) => return Some(id.to_string()),
                Some(_) => return None,
                None => {}
            }
            state.insert(id, 1);
            for b in &t.node(id).unwrap().children {
                if let Some(c) = visit(t, &b.node, state) {
                    return Some(c);
                }
            }
            state.insert(id, 2);
            None
        }
        for n in &tree.nodes {
            if let Some(at) = visit(&tree, &n.id, &mut state) {
                return Err(KnowledgeError::ProtocolCycle { incident_type: incident_type.to_string(), node: at });
            }
        }
        if parents.contains_key(&tree.root) {
            return Err(err("root has a parent".into()));
        }
        if let Some((id, _)) = parents.iter().find(|(_, &count)| count > 1) {
            return Err(err(format!("node {id:?} has more than one parent")));
        }
        let reachable = tree.depth_first().len();
        if reachable != tree.nodes.len() {
            return Err(err(format!("{} node(s) unreachable from root", tree.nodes.len() - reachable)));
        }
        Ok(tree)
    }

    pub fn node(&self, id: &str) -> Option<&ProtocolNode> {
        self.by_id.get(id).map(|&i| &self.nodes[i])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Pre-order walk from the root, children in declaration order.
    pub fn depth_first(&self) -> Vec<&ProtocolNode> {
        let mut out = Vec::new();
        let mut stack = vec![self.root.as_str()];
        let mut seen = BTreeSet::new();
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                continue;
            }
            let node = &self.nodes[self.by_id[id]];
            out.push(node);
            for b in node.children.iter().rev() {
                stack.push(&b.node);
            }
        }
        out
    }

    /// Questions that are next to ask: the unanswered nodes whose parent chain
    /// is fully answered, in tree order. Empty once an answered terminal is reached.
    pub fn next_questions(&self, answered: &BTreeSet<String>) -> Vec<&str> {
        let mut frontier = Vec::new();
        let mut stack = vec![self.root.as_str()];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[self.by_id[id]];
            if !answered.contains(id) {
                frontier.push(node.question.as_str());
                continue;
            }
            if node.terminal {
                return Vec::new();
            }
            for b in node.children.iter().rev() {
                stack.push(&b.node);
            }
        }
        frontier
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProtocolSet {
    trees: BTreeMap<Label, ProtocolTree>,
}

impl ProtocolSet {
    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        let text = std::fs::read_to_string(path).map_err(|e| KnowledgeError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, KnowledgeError> {
        let raw: RawProtocols = toml::from_str(text)
            .map_err(|e| KnowledgeError::Protocol { incident_type: String::new(), message: e.to_string() })?;
        let mut set = ProtocolSet::default();
        for t in raw.protocol {
            let tree = ProtocolTree::new(Label::new(&t.incident_type), t.root, t.nodes)?;
            set.insert(tree)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, tree: ProtocolTree) -> Result<(), KnowledgeError> {
        if self.trees.contains_key(&tree.incident_type) {
            return Err(KnowledgeError::Protocol {
                incident_type: tree.incident_type.to_string(),
                message: "more than one tree for incident type".into(),
            });
        }
        self.trees.insert(tree.incident_type.clone(), tree);
        Ok(())
    }

    pub fn get(&self, incident_type: &Label) -> Option<&ProtocolTree> {
        self.trees.get(incident_type)
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn incident_types(&self) -> impl Iterator<Item = &Label> {
        self.trees.keys()
    }
}

pub fn next_questions(
    protocols: &ProtocolSet,
    incident_type: &Label,
    answered: &BTreeSet<String>,
) -> Result<Vec<String>, KnowledgeError> {
    let tree = protocols.get(incident_type).ok_or_else(|| KnowledgeError::NoProtocol(incident_type.to_string()))?;
    Ok(tree.next_questions(answered).into_iter().map(str::to_string).collect())
}
