use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{Matching, NodeMap, RegistrationMap};
use crate::error::{Error, Result};
use crate::esrvf::Rotation;
use crate::warp::Diffeo;

pub const REG_FORMAT: &str = "arbor4d-reg/1";

#[derive(Serialize, Deserialize)]
struct RegDoc {
    format: String,
    /// Row-major.
    rotation: [[f64; 3]; 3],
    root: NodeDoc,
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    warp: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    unmatched1: Vec<usize>,
    unmatched2: Vec<usize>,
    #[serde(default)]
    children: Vec<NodeDoc>,
}

fn to_doc(n: &NodeMap) -> NodeDoc {
    NodeDoc {
        warp: n.warp.values().to_vec(),
        pairs: n.matching.pairs.clone(),
        unmatched1: n.matching.unmatched1.clone(),
        unmatched2: n.matching.unmatched2.clone(),
        children: n.children.iter().map(to_doc).collect(),
    }
}

fn from_doc(d: NodeDoc, path: &str) -> Result<NodeMap> {
    let warp = Diffeo::from_values(d.warp)
        .map_err(|e| Error::invalid(format!("{path}.warp"), e.to_string()))?;
    if d.children.len() != d.pairs.len() {
        return Err(Error::invalid(
            format!("{path}.children"),
            format!("{} node maps for {} pairs", d.children.len(), d.pairs.len()),
        ));
    }
    let children = d
        .children
        .into_iter()
        .enumerate()
        .map(|(k, c)| from_doc(c, &format!("{path}.children[{k}]")))
        .collect::<Result<Vec<_>>>()?;
    Ok(NodeMap {
        warp,
        matching: Matching {
            pairs: d.pairs,
            unmatched1: d.unmatched1,
            unmatched2: d.unmatched2,
        },
        children,
    })
}

pub fn serialize_registration(m: &RegistrationMap) -> Result<Vec<u8>> {
    let r = m.rotation.matrix();
    let doc = RegDoc {
        format: REG_FORMAT.into(),
        rotation: [0, 1, 2].map(|i| [0, 1, 2].map(|j| r[(i, j)])),
        root: to_doc(&m.root),
    };
    Ok(serde_json::to_vec(&doc)?)
}

pub fn parse_registration(bytes: &[u8]) -> Result<RegistrationMap> {
    crate::treemodel::io::check_format(bytes, REG_FORMAT)?;
    let doc: RegDoc = serde_json::from_slice(bytes)?;
    let m = Matrix3::from_fn(|i, j| doc.rotation[i][j]);
    let rotation = Rotation::new(m).map_err(|e| Error::invalid("rotation", e.to_string()))?;
    Ok(RegistrationMap {
        rotation,
        root: from_doc(doc.root, "root")?,
    })
}
