//! Binary model files.
//!
//! All integers and floats are little-endian; floats are f64.
//!
//! ```text
//! b"LAIM"              magic
//! u16                  format version (1)
//! [u8; 4]              model kind: b"LINR" | b"SVRB" | b"RFOR"
//! u8 + bytes           extractor name ("" when unknown)
//! u32 d, d x f64, d x f64     standardizer means, standard deviations
//! payload:
//!   LINR  f64 intercept, f64 ridge, d x f64 coefficients
//!   SVRB  f64 C, f64 epsilon, f64 gamma, f64 bias, u32 m,
//!         m x f64 dual coefficients, m x d x f64 support vectors
//!   RFOR  u64 seed, u32 max_features, u32 min_samples_leaf, u8 bootstrap,
//!         u32 tree count, then per tree: u32 node count and nodes,
//!         each node u8 tag (0 leaf: f64 value | 1 split: u32 feature,
//!         f64 threshold, u32 left, u32 right)
//! ```
//!
//! Files must end exactly after the payload.

use std::path::Path;

use super::forest::{ForestModel, Node, RegressionTree};
use super::linear::LinearModel;
use super::svr::SvrModel;
use super::{Regressor, Standardizer};
use crate::error::{Error, Result};
use crate::features::Extractor;

pub const MODEL_MAGIC: &[u8; 4] = b"LAIM";
pub const MODEL_VERSION: u16 = 1;

/// A trained regressor together with the extractor that produced its
/// training features.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub extractor: Option<Extractor>,
    pub model: Regressor,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v)
            .map_err(|_| Error::ModelFile(format!("value {v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::ModelFile(format!("corrupt file: truncated at byte {}", self.pos))
        })?;
        let chunk = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(chunk)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.array()?) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        // bound the allocation by what the file can actually hold
        if n > (self.bytes.len() - self.pos) / 8 {
            return Err(Error::ModelFile(format!(
                "corrupt file: {n} values announced at byte {}",
                self.pos
            )));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

fn kind_tag(model: &Regressor) -> &'static [u8; 4] {
    match model {
        Regressor::Linear(_) => b"LINR",
        Regressor::Svr(_) => b"SVRB",
        Regressor::Forest(_) => b"RFOR",
    }
}

pub fn encode_model(bundle: &ModelBundle) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u16(MODEL_VERSION);
    w.0.extend_from_slice(kind_tag(&bundle.model));
    let name = bundle.extractor.map_or("", |e| e.name());
    w.u8(name.len() as u8);
    w.0.extend_from_slice(name.as_bytes());

    let standardizer = match &bundle.model {
        Regressor::Linear(m) => &m.standardizer,
        Regressor::Svr(m) => &m.standardizer,
        Regressor::Forest(m) => &m.standardizer,
    };
    w.u32(standardizer.dim())?;
    w.f64s(&standardizer.mean);
    w.f64s(&standardizer.std);

    match &bundle.model {
        Regressor::Linear(m) => {
            w.f64(m.intercept);
            w.f64(m.ridge);
            w.f64s(&m.coefficients);
        }
        Regressor::Svr(m) => {
            w.f64(m.c);
            w.f64(m.epsilon);
            w.f64(m.gamma);
            w.f64(m.bias);
            w.u32(m.dual_coefs.len())?;
            w.f64s(&m.dual_coefs);
            for sv in &m.support_vectors {
                w.f64s(sv);
            }
        }
        Regressor::Forest(m) => {
            w.u64(m.seed);
            w.u32(m.max_features)?;
            w.u32(m.min_samples_leaf)?;
            w.u8(u8::from(m.bootstrap));
            w.u32(m.trees.len())?;
            for tree in &m.trees {
                w.u32(tree.nodes.len())?;
                for node in &tree.nodes {
                    match *node {
                        Node::Leaf { value } => {
                            w.u8(0);
                            w.f64(value);
                        }
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            w.u8(1);
                            w.u32(feature)?;
                            w.f64(threshold);
                            w.u32(left)?;
                            w.u32(right)?;
                        }
                    }
                }
            }
        }
    }
    Ok(w.0)
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelBundle> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MODEL_MAGIC {
        return Err(Error::ModelFile("not a model file (bad magic)".into()));
    }
    let version = r.u16()?;
    if version != MODEL_VERSION {
        return Err(Error::ModelFile(format!(
            "unsupported format version {version}, expected {MODEL_VERSION}"
        )));
    }
    let tag: [u8; 4] = r.array()?;
    let name_len = r.u8()? as usize;
    let name = std::str::from_utf8(r.take(name_len)?)
        .map_err(|_| Error::ModelFile("extractor name is not UTF-8".into()))?;
    let extractor = if name.is_empty() {
        None
    } else {
        Some(name.parse::<Extractor>().map_err(|e| Error::ModelFile(e.to_string()))?)
    };

    let dim = r.u32()?;
    let standardizer = Standardizer {
        mean: r.f64s(dim)?,
        std: r.f64s(dim)?,
    };

    let model = match &tag {
        b"LINR" => {
            let intercept = r.f64()?;
            let ridge = r.f64()?;
            Regressor::Linear(LinearModel {
                intercept,
                ridge,
                coefficients: r.f64s(dim)?,
                standardizer,
            })
        }
        b"SVRB" => {
            let (c, epsilon, gamma, bias) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let m = r.u32()?;
            let dual_coefs = r.f64s(m)?;
            let support_vectors = (0..m).map(|_| r.f64s(dim)).collect::<Result<_>>()?;
            Regressor::Svr(SvrModel {
                support_vectors,
                dual_coefs,
                bias,
                gamma,
                c,
                epsilon,
                standardizer,
            })
        }
        b"RFOR" => {
            let seed = r.u64()?;
            let max_features = r.u32()?;
            let min_samples_leaf = r.u32()?;
            let bootstrap = r.u8()? != 0;
            let n_trees = r.u32()?;
            if n_trees == 0 {
                return Err(Error::ModelFile("corrupt file: forest without trees".into()));
            }
            let mut trees = Vec::new();
            for _ in 0..n_trees {
                let n_nodes = r.u32()?;
                let mut nodes = Vec::new();
                for _ in 0..n_nodes {
                    nodes.push(match r.u8()? {
                        0 => Node::Leaf { value: r.f64()? },
                        1 => Node::Split {
                            feature: r.u32()?,
                            threshold: r.f64()?,
                            left: r.u32()?,
                            right: r.u32()?,
                        },
                        t => return Err(Error::ModelFile(format!("corrupt file: node tag {t}"))),
                    });
                }
                check_tree(&nodes, dim)?;
                trees.push(RegressionTree { nodes });
            }
            Regressor::Forest(ForestModel {
                trees,
                seed,
                max_features,
                min_samples_leaf,
                bootstrap,
                standardizer,
            })
        }
        other => return Err(Error::UnknownModelKind(String::from_utf8_lossy(other).into_owned())),
    };
    if r.pos != bytes.len() {
        return Err(Error::ModelFile(format!(
            "corrupt file: {} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(ModelBundle { extractor, model })
}

/// Children must point forward so evaluation always terminates.
fn check_tree(nodes: &[Node], dim: usize) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::ModelFile("corrupt file: empty tree".into()));
    }
    for (i, node) in nodes.iter().enumerate() {
        if let Node::Split {
            feature,
            left,
            right,
            ..
        } = *node
        {
            if feature >= dim || left <= i || right <= i || left >= nodes.len() || right >= nodes.len() {
                return Err(Error::ModelFile(format!("corrupt file: bad split node {i}")));
            }
        }
    }
    Ok(())
}

pub fn save_model(bundle: &ModelBundle, file: &Path) -> Result<()> {
    let bytes = encode_model(bundle)?;
    std::fs::write(file, bytes).map_err(|e| Error::io(file, e))
}

pub fn load_model(file: &Path) -> Result<ModelBundle> {
    let bytes = std::fs::read(file).map_err(|e| Error::io(file, e))?;
    decode_model(&bytes).map_err(|e| e.context(file.display().to_string()))
}
