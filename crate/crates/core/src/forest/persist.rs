//! Binary model file.
//!
//! All integers little-endian.
//!
//! ```text
//! magic            8 bytes  "ASLFRST\0"
//! version          u16
//! payload length   u64
//! payload:
//!   params         u32 n_trees, u32 max_depth, f64 class_weight_fast,
//!                  u32 features_per_split, u8 bootstrap, u32 min_samples_leaf,
//!                  u64 rng_seed, u8 compute_oob
//!   summary        u64 n, u64 n_fast, u64 n_slow
//!   oob            u8 present, f64 accuracy
//!   encoders       device then AP: u32 count, per category u32 length + UTF-8
//!   trees          u32 count, per tree u32 node count, then nodes:
//!                    0: leaf       f64 w_fast, f64 w_slow
//!                    1: threshold  u8 feature, f64 threshold, u32 left, u32 right
//!                    2: code set   u8 feature, u32 k, k x u32 code, u32 left, u32 right
//! checksum         u64 FNV-1a of every preceding byte
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{
    DecisionTree, ForestError, ForestModel, ForestParams, Node, SplitTest, TrainingSummary,
};
use crate::features::{Encoders, FeatureVector};

pub const FORMAT_VERSION: u16 = 1;
const MAGIC: &[u8; 8] = b"ASLFRST\0";
const HEADER_LEN: usize = 8 + 2 + 8;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

type LE = LittleEndian;

fn write_payload(m: &ForestModel, w: &mut Vec<u8>) -> io::Result<()> {
    let p = &m.params;
    w.write_u32::<LE>(p.n_trees as u32)?;
    w.write_u32::<LE>(p.max_depth as u32)?;
    w.write_f64::<LE>(p.class_weight_fast)?;
    w.write_u32::<LE>(p.features_per_split as u32)?;
    w.write_u8(p.bootstrap as u8)?;
    w.write_u32::<LE>(p.min_samples_leaf as u32)?;
    w.write_u64::<LE>(p.rng_seed)?;
    w.write_u8(p.compute_oob as u8)?;
    w.write_u64::<LE>(m.summary.n)?;
    w.write_u64::<LE>(m.summary.n_fast)?;
    w.write_u64::<LE>(m.summary.n_slow)?;
    w.write_u8(m.oob_accuracy.is_some() as u8)?;
    w.write_f64::<LE>(m.oob_accuracy.unwrap_or(0.0))?;
    m.encoders.write_to(w)?;
    w.write_u32::<LE>(m.trees.len() as u32)?;
    for t in &m.trees {
        w.write_u32::<LE>(t.nodes.len() as u32)?;
        for n in &t.nodes {
            match n {
                Node::Leaf { w_fast, w_slow } => {
                    w.write_u8(0)?;
                    w.write_f64::<LE>(*w_fast)?;
                    w.write_f64::<LE>(*w_slow)?;
                }
                Node::Split {
                    feature,
                    test,
                    left,
                    right,
                } => {
                    match test {
                        SplitTest::Below(thr) => {
                            w.write_u8(1)?;
                            w.write_u8(*feature)?;
                            w.write_f64::<LE>(*thr)?;
                        }
                        SplitTest::InSet(codes) => {
                            w.write_u8(2)?;
                            w.write_u8(*feature)?;
                            w.write_u32::<LE>(codes.len() as u32)?;
                            for c in codes {
                                w.write_u32::<LE>(*c)?;
                            }
                        }
                    }
                    w.write_u32::<LE>(*left)?;
                    w.write_u32::<LE>(*right)?;
                }
            }
        }
    }
    Ok(())
}

fn corrupt(msg: impl Into<String>) -> ForestError {
    ForestError::Corrupt(msg.into())
}

fn read_tree(r: &mut &[u8]) -> Result<DecisionTree, ForestError> {
    let n = r.read_u32::<LE>()? as usize;
    if n == 0 {
        return Err(corrupt("tree without nodes"));
    }
    let mut nodes = Vec::with_capacity(n.min(r.len() / 17 + 1));
    for i in 0..n {
        let node = match r.read_u8()? {
            0 => Node::Leaf {
                w_fast: r.read_f64::<LE>()?,
                w_slow: r.read_f64::<LE>()?,
            },
            tag @ (1 | 2) => {
                let feature = r.read_u8()?;
                if feature as usize >= FeatureVector::N_FEATURES {
                    return Err(corrupt(format!("feature index {feature}")));
                }
                let test = if tag == 1 {
                    SplitTest::Below(r.read_f64::<LE>()?)
                } else {
                    let k = r.read_u32::<LE>()? as usize;
                    if k > r.len() / 4 {
                        return Err(ForestError::Truncated);
                    }
                    let codes = (0..k)
                        .map(|_| r.read_u32::<LE>())
                        .collect::<io::Result<Vec<_>>>()?;
                    if codes.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(corrupt("code set not sorted"));
                    }
                    SplitTest::InSet(codes)
                };
                let (left, right) = (r.read_u32::<LE>()?, r.read_u32::<LE>()?);
                if left as usize <= i
                    || right as usize <= i
                    || left as usize >= n
                    || right as usize >= n
                {
                    return Err(corrupt(format!(
                        "node {i} has invalid children {left}, {right}"
                    )));
                }
                Node::Split {
                    feature,
                    test,
                    left,
                    right,
                }
            }
            tag => return Err(corrupt(format!("unknown node tag {tag}"))),
        };
        nodes.push(node);
    }
    Ok(DecisionTree { nodes })
}

fn read_payload(mut r: &[u8]) -> Result<ForestModel, ForestError> {
    let r = &mut r;
    let params = ForestParams {
        n_trees: r.read_u32::<LE>()? as usize,
        max_depth: r.read_u32::<LE>()? as usize,
        class_weight_fast: r.read_f64::<LE>()?,
        features_per_split: r.read_u32::<LE>()? as usize,
        bootstrap: r.read_u8()? != 0,
        min_samples_leaf: r.read_u32::<LE>()? as usize,
        rng_seed: r.read_u64::<LE>()?,
        compute_oob: r.read_u8()? != 0,
    };
    params.validate().map_err(|e| corrupt(e.to_string()))?;
    let summary = TrainingSummary {
        n: r.read_u64::<LE>()?,
        n_fast: r.read_u64::<LE>()?,
        n_slow: r.read_u64::<LE>()?,
    };
    let has_oob = r.read_u8()? != 0;
    let oob = r.read_f64::<LE>()?;
    let encoders = Encoders::read_from(r)?;
    let n_trees = r.read_u32::<LE>()? as usize;
    if n_trees != params.n_trees {
        return Err(corrupt(format!(
            "{n_trees} trees stored but n_trees is {}",
            params.n_trees
        )));
    }
    let trees = (0..n_trees)
        .map(|_| read_tree(r))
        .collect::<Result<Vec<_>, _>>()?;
    if !r.is_empty() {
        return Err(corrupt(format!("{} trailing payload bytes", r.len())));
    }
    Ok(ForestModel {
        params,
        trees,
        encoders,
        summary,
        oob_accuracy: has_oob.then_some(oob),
    })
}

impl ForestModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = Vec::new();
        write_payload(self, &mut payload).expect("writing to a Vec cannot fail");
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ForestModel, ForestError> {
        if bytes.len() < MAGIC.len() {
            return Err(ForestError::Truncated);
        }
        if &bytes[..8] != MAGIC {
            return Err(ForestError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(ForestError::Truncated);
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != FORMAT_VERSION {
            return Err(ForestError::UnsupportedVersion(version));
        }
        let len = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
        let end = (HEADER_LEN as u64)
            .checked_add(len)
            .filter(|e| e.checked_add(8).is_some())
            .ok_or(ForestError::Truncated)?;
        if (bytes.len() as u64) < end + 8 {
            return Err(ForestError::Truncated);
        }
        if bytes.len() as u64 > end + 8 {
            return Err(corrupt("trailing bytes after checksum"));
        }
        let end = end as usize;
        let stored = u64::from_le_bytes(bytes[end..end + 8].try_into().unwrap());
        if fnv1a(&bytes[..end]) != stored {
            return Err(ForestError::Checksum);
        }
        read_payload(&bytes[HEADER_LEN..end]).map_err(|e| match e {
            ForestError::Io(io) if io.kind() == io::ErrorKind::UnexpectedEof => {
                corrupt("payload shorter than declared")
            }
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ForestError> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ForestModel, ForestError> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        ForestModel::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::SpeedLabel;
    use crate::forest::train;

    fn model() -> ForestModel {
        let x: Vec<FeatureVector> = (0..200)
            .map(|i| FeatureVector {
                hour_of_day: (i % 24) as u8,
                rssi_dbm: -55 - (i % 40),
                device_model: (i % 3) as u32,
                ap_model: (i % 7) as u32,
                encrypted: i % 2 == 0,
            })
            .collect();
        let y: Vec<_> = x
            .iter()
            .map(|v| {
                if v.ap_model % 3 == 0 || v.rssi_dbm < -85 {
                    SpeedLabel::Slow
                } else {
                    SpeedLabel::Fast
                }
            })
            .collect();
        let (enc, _) = Encoders::fit([("d", "a"), ("e", "b")], 1);
        train(
            &x,
            &y,
            enc,
            &ForestParams {
                n_trees: 5,
                rng_seed: 3,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_identical() {
        let m = model();
        let bytes = m.to_bytes();
        let back = ForestModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_is_detected() {
        let bytes = model().to_bytes();
        for cut in [0, 5, 12, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(
                    ForestModel::from_bytes(&bytes[..cut]),
                    Err(ForestError::Truncated)
                ),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn other_versions_are_refused() {
        let mut bytes = model().to_bytes();
        bytes[8] = 0;
        assert!(matches!(
            ForestModel::from_bytes(&bytes),
            Err(ForestError::UnsupportedVersion(0))
        ));
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = model().to_bytes();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(
            ForestModel::from_bytes(&bytes),
            Err(ForestError::Checksum)
        ));
        let mut bad = model().to_bytes();
        bad[0] = b'X';
        assert!(matches!(
            ForestModel::from_bytes(&bad),
            Err(ForestError::BadMagic)
        ));
    }
}
