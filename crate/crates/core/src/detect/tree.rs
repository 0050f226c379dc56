use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{DetectError, Label};
use crate::spectral::{Band, Feature, FeatureVector, IndexName};

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Rows with `feature <= threshold` go left.
    Split {
        feature: Feature,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        label: Label,
        confidence: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    root: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: Label,
    pub confidence: f64,
    /// Node ids visited from the root to the leaf.
    pub path: Vec<usize>,
}

fn malformed(line: usize, msg: impl Into<String>) -> DetectError {
    DetectError::MalformedRules {
        line,
        msg: msg.into(),
    }
}

impl DecisionTree {
    /// Checks that the nodes form a single tree under `root`.
    pub fn new(nodes: Vec<Node>, root: usize) -> Result<DecisionTree, DetectError> {
        if root >= nodes.len() {
            return Err(malformed(0, format!("root {root} is not a node")));
        }
        let mut refs = vec![0usize; nodes.len()];
        for (id, node) in nodes.iter().enumerate() {
            match node {
                Node::Split {
                    left,
                    right,
                    threshold,
                    ..
                } => {
                    for &child in [left, right] {
                        if child >= nodes.len() {
                            return Err(malformed(
                                0,
                                format!("node {id} references missing node {child}"),
                            ));
                        }
                        refs[child] += 1;
                    }
                    if !threshold.is_finite() {
                        return Err(malformed(
                            0,
                            format!("node {id} has a non-finite threshold"),
                        ));
                    }
                }
                Node::Leaf { confidence, .. } => {
                    if !(0.0..=1.0).contains(confidence) {
                        return Err(malformed(0, format!("node {id} confidence outside [0, 1]")));
                    }
                }
            }
        }
        if refs[root] != 0 {
            return Err(malformed(0, "root is referenced by another node"));
        }
        if let Some(id) = (0..nodes.len()).find(|&i| i != root && refs[i] != 1) {
            return Err(malformed(
                0,
                format!("node {id} referenced {} times", refs[id]),
            ));
        }
        // With every other node referenced once, unreachable nodes can only
        // sit on a cycle.
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            seen[id] = true;
            if let Node::Split { left, right, .. } = nodes[id] {
                stack.push(left);
                stack.push(right);
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(malformed(0, "nodes form a cycle"));
        }
        Ok(DecisionTree { nodes, root })
    }

    pub fn leaf(label: Label, confidence: f64) -> DecisionTree {
        DecisionTree {
            nodes: vec![Node::Leaf { label, confidence }],
            root: 0,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Longest root-to-leaf path, counted in splits.
    pub fn depth(&self) -> usize {
        fn walk(t: &DecisionTree, id: usize) -> usize {
            match t.nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, self.root)
    }

    /// Features referenced by split nodes.
    pub fn features(&self) -> Vec<Feature> {
        let mut f: Vec<Feature> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort();
        f.dedup();
        f
    }

    pub fn classify(&self, fv: &FeatureVector) -> Result<Classification, DetectError> {
        let mut id = self.root;
        let mut path = vec![id];
        loop {
            match &self.nodes[id] {
                Node::Leaf { label, confidence } => {
                    return Ok(Classification {
                        label: *label,
                        confidence: *confidence,
                        path,
                    })
                }
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let value =
                        fv.get(feature.0, feature.1)
                            .ok_or(DetectError::MissingFeature {
                                index: feature.0,
                                band: feature.1,
                            })?;
                    id = if value <= *threshold { *left } else { *right };
                    path.push(id);
                }
            }
        }
    }

    /// Line-oriented rule text: `root <id>` then one `node` line per node.
    pub fn to_rules_text(&self) -> String {
        let mut out = format!("root {}\n", self.root);
        for (id, node) in self.nodes.iter().enumerate() {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => writeln!(
                    out,
                    "node {id} split {} {} {threshold:?} {left} {right}",
                    feature.0, feature.1
                ),
                Node::Leaf { label, confidence } => {
                    writeln!(out, "node {id} leaf {label} {confidence:?}")
                }
            }
            .expect("writing to a String");
        }
        out
    }

    pub fn from_rules_text(text: &str) -> Result<DecisionTree, DetectError> {
        let mut root: Option<u64> = None;
        let mut entries: Vec<(u64, usize, Vec<&str>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "root" if root.is_none() && entries.is_empty() => {
                    if fields.len() != 2 {
                        return Err(malformed(lineno, "expected `root <id>`"));
                    }
                    root = Some(
                        fields[1]
                            .parse()
                            .map_err(|_| malformed(lineno, "bad root id"))?,
                    );
                }
                "root" => return Err(malformed(lineno, "`root` must be the first line")),
                "node" if root.is_some() => {
                    if fields.len() < 3 {
                        return Err(malformed(lineno, "truncated node line"));
                    }
                    let id: u64 = fields[1]
                        .parse()
                        .map_err(|_| malformed(lineno, "bad node id"))?;
                    if entries.iter().any(|(e, _, _)| *e == id) {
                        return Err(malformed(lineno, format!("node {id} defined twice")));
                    }
                    entries.push((id, lineno, fields[2..].to_vec()));
                }
                "node" => return Err(malformed(lineno, "`root` must be the first line")),
                other => return Err(malformed(lineno, format!("unknown directive {other:?}"))),
            }
        }
        let root = root.ok_or_else(|| malformed(0, "missing `root` line"))?;
        if entries.is_empty() {
            return Err(malformed(0, "no nodes"));
        }
        let mut ids: Vec<u64> = entries.iter().map(|e| e.0).collect();
        ids.sort_unstable();
        let index_of = |id: u64, line: usize| {
            ids.binary_search(&id)
                .map_err(|_| malformed(line, format!("reference to undefined node {id}")))
        };
        let mut nodes = vec![None; ids.len()];
        for (id, line, f) in &entries {
            let node = match f[0] {
                "split" if f.len() == 6 => {
                    let index: IndexName = f[1].parse().map_err(|e: String| malformed(*line, e))?;
                    let band: Band = f[2].parse().map_err(|e: String| malformed(*line, e))?;
                    let threshold: f64 = f[3]
                        .parse()
                        .map_err(|_| malformed(*line, "bad threshold"))?;
                    let left = f[4].parse().map_err(|_| malformed(*line, "bad left id"))?;
                    let right = f[5].parse().map_err(|_| malformed(*line, "bad right id"))?;
                    Node::Split {
                        feature: (index, band),
                        threshold,
                        left: index_of(left, *line)?,
                        right: index_of(right, *line)?,
                    }
                }
                "leaf" if f.len() == 3 => Node::Leaf {
                    label: f[1].parse().map_err(|e: String| malformed(*line, e))?,
                    confidence: f[2]
                        .parse()
                        .map_err(|_| malformed(*line, "bad confidence"))?,
                },
                _ => {
                    return Err(malformed(
                        *line,
                        "expected `split` with 5 fields or `leaf` with 2",
                    ))
                }
            };
            nodes[index_of(*id, *line)?] = Some(node);
        }
        let root = index_of(root, 0)?;
        DecisionTree::new(
            nodes
                .into_iter()
                .map(|n| n.expect("every id defined"))
                .collect(),
            root,
        )
    }
}

pub fn save_rules(tree: &DecisionTree, path: impl AsRef<Path>) -> Result<(), DetectError> {
    let path = path.as_ref();
    fs::write(path, tree.to_rules_text()).map_err(|e| DetectError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn load_rules(path: impl AsRef<Path>) -> Result<DecisionTree, DetectError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| DetectError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    DecisionTree::from_rules_text(&text)
}
