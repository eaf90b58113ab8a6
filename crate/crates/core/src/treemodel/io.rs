use serde::{Deserialize, Serialize};

use super::{Branch, Child, Point, Tree, Tree4D, DEFAULT_MAX_DEPTH};
use crate::error::{Error, Result};

pub const TREE_FORMAT: &str = "arbor4d-tree/1";
pub const SEQ_FORMAT: &str = "arbor4d-seq/1";

#[derive(Serialize, Deserialize)]
struct TreeDoc {
    format: String,
    scale_normalized: bool,
    root: NodeDoc,
}

#[derive(Serialize, Deserialize)]
struct SeqDoc {
    format: String,
    times: Vec<f64>,
    frames: Vec<NodeDoc>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct NodeDoc {
    samples: Vec<[f64; 4]>,
    #[serde(default)]
    children: Vec<ChildDoc>,
}

#[derive(Serialize, Deserialize)]
struct ChildDoc {
    s: f64,
    subtree: NodeDoc,
}

#[derive(Deserialize)]
struct Header {
    format: String,
}

pub(crate) fn check_format(bytes: &[u8], expected: &str) -> Result<()> {
    let h: Header = serde_json::from_slice(bytes)?;
    if h.format != expected {
        return Err(Error::Format {
            expected: expected.into(),
            found: h.format,
        });
    }
    Ok(())
}

impl NodeDoc {
    pub(crate) fn from_tree(t: &Tree) -> NodeDoc {
        NodeDoc {
            samples: t
                .main
                .points()
                .iter()
                .zip(t.main.radii())
                .map(|(p, r)| [p.x, p.y, p.z, *r])
                .collect(),
            children: t
                .children
                .iter()
                .map(|c| ChildDoc {
                    s: c.s,
                    subtree: NodeDoc::from_tree(&c.subtree),
                })
                .collect(),
        }
    }

    pub(crate) fn into_tree(self, path: &str, depth_left: usize) -> Result<Tree> {
        if depth_left == 0 {
            return Err(Error::invalid(path, "tree exceeds the maximum depth"));
        }
        if self.samples.len() < 2 {
            return Err(Error::invalid(
                format!("{path}.samples"),
                format!("need at least 2 samples, got {}", self.samples.len()),
            ));
        }
        let mut points = Vec::with_capacity(self.samples.len());
        let mut radii = Vec::with_capacity(self.samples.len());
        for (i, s) in self.samples.iter().enumerate() {
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("{path}.samples[{i}]"), "non-finite value"));
            }
            if s[3] < 0.0 {
                return Err(Error::invalid(
                    format!("{path}.samples[{i}]"),
                    format!("negative radius {}", s[3]),
                ));
            }
            points.push(Point::new(s[0], s[1], s[2]));
            radii.push(s[3]);
        }
        let main = Branch::new(points, radii)?;
        let mut children = Vec::with_capacity(self.children.len());
        for (i, c) in self.children.into_iter().enumerate() {
            let cpath = format!("{path}.children[{i}]");
            if !(0.0..=1.0).contains(&c.s) {
                return Err(Error::invalid(
                    format!("{cpath}.s"),
                    format!("bifurcation parameter {} outside [0, 1]", c.s),
                ));
            }
            let subtree = c
                .subtree
                .into_tree(&format!("{cpath}.subtree"), depth_left - 1)?;
            children.push(Child { s: c.s, subtree });
        }
        Tree::new(main, children)
    }
}

/// Parses an `arbor4d-tree/1` document. Branches are not resampled.
pub fn parse_tree(bytes: &[u8]) -> Result<Tree> {
    parse_tree_document(bytes).map(|(t, _)| t)
}

/// Parses an `arbor4d-tree/1` document, also returning its
/// `scale_normalized` flag.
pub fn parse_tree_document(bytes: &[u8]) -> Result<(Tree, bool)> {
    check_format(bytes, TREE_FORMAT)?;
    let doc: TreeDoc = serde_json::from_slice(bytes)?;
    let tree = doc.root.into_tree("root", DEFAULT_MAX_DEPTH)?;
    Ok((tree, doc.scale_normalized))
}

/// Canonical `arbor4d-tree/1` serialization with `scale_normalized: false`.
pub fn serialize_tree(t: &Tree) -> Vec<u8> {
    serialize_tree_with(t, false)
}

pub fn serialize_tree_with(t: &Tree, scale_normalized: bool) -> Vec<u8> {
    let doc = TreeDoc {
        format: TREE_FORMAT.into(),
        scale_normalized,
        root: NodeDoc::from_tree(t),
    };
    serde_json::to_vec(&doc).expect("tree documents always serialize")
}

/// Parses an `arbor4d-seq/1` document; timestamps are rescaled to `[0, 1]`.
pub fn parse_sequence(bytes: &[u8]) -> Result<Tree4D> {
    check_format(bytes, SEQ_FORMAT)?;
    let doc: SeqDoc = serde_json::from_slice(bytes)?;
    let frames = doc
        .frames
        .into_iter()
        .enumerate()
        .map(|(i, n)| n.into_tree(&format!("frames[{i}]"), DEFAULT_MAX_DEPTH))
        .collect::<Result<Vec<_>>>()?;
    Tree4D::new(doc.times, frames)
}

pub fn serialize_sequence(h: &Tree4D) -> Vec<u8> {
    let doc = SeqDoc {
        format: SEQ_FORMAT.into(),
        times: h.times().to_vec(),
        frames: h.frames().iter().map(NodeDoc::from_tree).collect(),
    };
    serde_json::to_vec(&doc).expect("sequence documents always serialize")
}
