use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Forest, ForestConfig, Node, NodeKind, Tree};
use crate::data::MinMaxScaler;
use crate::error::{Error, Result};

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ForestDoc {
    version: u32,
    config: ForestConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaler: Option<MinMaxScaler>,
    trees: Vec<TreeDoc>,
}

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    nodes: Vec<NodeDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Split,
    Leaf,
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    id: usize,
    kind: Kind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    thr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    estimate: Option<f64>,
    depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    leaf_index: Option<usize>,
}

impl From<&Node> for NodeDoc {
    fn from(n: &Node) -> Self {
        let mut doc = NodeDoc {
            id: n.id,
            kind: Kind::Leaf,
            dim: None,
            thr: None,
            left: None,
            right: None,
            estimate: None,
            depth: n.depth,
            leaf_index: None,
        };
        match n.kind {
            NodeKind::Split {
                dimension,
                threshold,
                left,
                right,
            } => {
                doc.kind = Kind::Split;
                doc.dim = Some(dimension);
                doc.thr = Some(threshold);
                doc.left = Some(left);
                doc.right = Some(right);
            }
            NodeKind::Leaf { estimate, leaf_index } => {
                doc.estimate = Some(estimate);
                doc.leaf_index = Some(leaf_index);
            }
        }
        doc
    }
}

impl NodeDoc {
    fn into_node(self) -> Result<Node> {
        let missing = |field: &str| Error::Model(format!("node {} lacks `{field}`", self.id));
        let kind = match self.kind {
            Kind::Split => NodeKind::Split {
                dimension: self.dim.ok_or_else(|| missing("dim"))?,
                threshold: self.thr.ok_or_else(|| missing("thr"))?,
                left: self.left.ok_or_else(|| missing("left"))?,
                right: self.right.ok_or_else(|| missing("right"))?,
            },
            Kind::Leaf => NodeKind::Leaf {
                estimate: self.estimate.ok_or_else(|| missing("estimate"))?,
                leaf_index: self.leaf_index.ok_or_else(|| missing("leaf_index"))?,
            },
        };
        Ok(Node {
            id: self.id,
            depth: self.depth,
            parent: None,
            kind,
        })
    }
}

impl Forest {
    pub fn to_json(&self) -> Result<String> {
        let doc = ForestDoc {
            version: FOREST_FORMAT_VERSION,
            config: self.config.clone(),
            scaler: self.scaler.clone(),
            trees: self
                .trees
                .iter()
                .map(|t| TreeDoc {
                    nodes: t.nodes().iter().map(NodeDoc::from).collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Forest> {
        let doc: ForestDoc = serde_json::from_str(text)?;
        if doc.version != FOREST_FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported forest format version {}", doc.version)));
        }
        let trees = doc
            .trees
            .into_iter()
            .map(|t| {
                let nodes = t.nodes.into_iter().map(NodeDoc::into_node).collect::<Result<Vec<_>>>()?;
                Tree::from_nodes(nodes, doc.config.max_depth)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut forest = Forest::new(trees, doc.config).map_err(|e| Error::Model(e.to_string()))?;
        forest.scaler = doc.scaler;
        Ok(forest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Forest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Forest::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_subsets, Dataset};
    use crate::forest::train_forest;
    use crate::seed;
    use rand::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = seed::rng(77, &[]);
        let rows: Vec<Vec<f64>> = (0..150).map(|_| vec![rng.gen::<f64>() * 1e-3, rng.gen::<f64>() * 1e5]).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r[0].sqrt() + r[1].ln() / 3.0).collect();
        let d = Dataset::new("t", rows, ys).unwrap();
        let plan = make_subsets(&d, 4, 1.0, 150, 1).unwrap();
        let f = train_forest(&d, &plan, &ForestConfig::default()).unwrap();
        let back = Forest::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(f, back);
        for r in d.rows() {
            assert_eq!(f.predict(r).to_bits(), back.predict(r).to_bits());
        }
    }

    #[test]
    fn documents_use_the_published_field_names() {
        let json = r#"{"version":1,"config":{"tree_count":1,"max_depth":1,"min_leaf_samples":1,"seed":0},
            "trees":[{"nodes":[
              {"id":0,"kind":"split","dim":0,"thr":1.5,"left":1,"right":2,"depth":0},
              {"id":1,"kind":"leaf","estimate":0.0,"depth":1,"leaf_index":0},
              {"id":2,"kind":"leaf","estimate":1.0,"depth":1,"leaf_index":1}]}]}"#;
        let f = Forest::from_json(json).unwrap();
        assert_eq!(f.predict(&[2.0]), 1.0);
        assert_eq!(f.total_leaves(), 2);
    }

    #[test]
    fn malformed_documents_are_rejected() {
        let bad_child = r#"{"version":1,"config":{"tree_count":1,"max_depth":1,"min_leaf_samples":1,"seed":0},
            "trees":[{"nodes":[{"id":0,"kind":"split","dim":0,"thr":1.5,"left":5,"right":2,"depth":0}]}]}"#;
        assert!(matches!(Forest::from_json(bad_child), Err(Error::Model(_))));
        let bad_version = r#"{"version":9,"config":{"tree_count":1,"max_depth":1,"min_leaf_samples":1,"seed":0},"trees":[]}"#;
        assert!(Forest::from_json(bad_version).is_err());
        let no_estimate = r#"{"version":1,"config":{"tree_count":1,"max_depth":0,"min_leaf_samples":1,"seed":0},
            "trees":[{"nodes":[{"id":0,"kind":"leaf","depth":0,"leaf_index":0}]}]}"#;
        assert!(Forest::from_json(no_estimate).is_err());
    }
}
