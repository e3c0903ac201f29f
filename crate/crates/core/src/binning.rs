//! Binning shared by the x-y mean curves, RIG and Kendall.
//!
//! Numeric bins are half-open `[origin + i*width, origin + (i+1)*width)` and
//! are identified by the integer `i`. Categorical values are their own bin.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default bin width for connection time cost (ms).
pub const TIME_BIN_MS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BinSpec {
    Numeric { width: f64, origin: f64 },
    Categorical,
}

impl BinSpec {
    pub fn numeric(width: f64, origin: f64) -> Result<Self, BinError> {
        let spec = BinSpec::Numeric { width, origin };
        spec.validate()?;
        Ok(spec)
    }

    /// 5 dBm bins anchored at -100 dBm.
    pub fn rssi() -> Self {
        BinSpec::Numeric {
            width: 5.0,
            origin: -100.0,
        }
    }

    /// One bin per hour.
    pub fn hour() -> Self {
        BinSpec::Numeric {
            width: 1.0,
            origin: 0.0,
        }
    }

    /// Bins of 10 associated devices.
    pub fn devices() -> Self {
        BinSpec::Numeric {
            width: 10.0,
            origin: 0.0,
        }
    }

    /// 100 ms bins for connection time cost.
    pub fn time_ms() -> Self {
        BinSpec::Numeric {
            width: TIME_BIN_MS,
            origin: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), BinError> {
        match *self {
            BinSpec::Numeric { width, origin }
                if !(width > 0.0 && width.is_finite() && origin.is_finite()) =>
            {
                Err(BinError::InvalidSpec { width, origin })
            }
            _ => Ok(()),
        }
    }

    /// Bin index of a numeric value.
    pub fn index_of(&self, x: f64) -> Result<i64, BinError> {
        match *self {
            BinSpec::Numeric { width, origin } => {
                if !x.is_finite() {
                    return Err(BinError::NonFinite(x));
                }
                Ok(((x - origin) / width).floor() as i64)
            }
            BinSpec::Categorical => Err(BinError::TypeMismatch {
                index: 0,
                expected: "categorical",
            }),
        }
    }

    /// `[left, right)` edges of numeric bin `index`.
    pub fn edges(&self, index: i64) -> Option<(f64, f64)> {
        match *self {
            BinSpec::Numeric { width, origin } => {
                let left = origin + index as f64 * width;
                Some((left, left + width))
            }
            BinSpec::Categorical => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value<'a> {
    Num(f64),
    Cat(&'a str),
}

impl From<f64> for Value<'_> {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl<'a> From<&'a str> for Value<'a> {
    fn from(s: &'a str) -> Self {
        Value::Cat(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BinKey {
    Numeric(i64),
    Category(String),
}

impl fmt::Display for BinKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinKey::Numeric(i) => write!(f, "{i}"),
            BinKey::Category(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BinError {
    #[error("invalid bin spec: width {width}, origin {origin}")]
    InvalidSpec { width: f64, origin: f64 },
    #[error("value at index {index} does not match a {expected} bin spec")]
    TypeMismatch {
        index: usize,
        expected: &'static str,
    },
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("x has {x} values but y has {y}")]
    LengthMismatch { x: usize, y: usize },
}

pub fn bin_value(x: Value<'_>, spec: &BinSpec) -> Result<BinKey, BinError> {
    match (x, spec) {
        (Value::Num(v), BinSpec::Numeric { .. }) => spec.index_of(v).map(BinKey::Numeric),
        (Value::Cat(s), BinSpec::Categorical) => Ok(BinKey::Category(s.to_string())),
        (Value::Num(_), BinSpec::Categorical) => Err(BinError::TypeMismatch {
            index: 0,
            expected: "categorical",
        }),
        (Value::Cat(_), BinSpec::Numeric { .. }) => Err(BinError::TypeMismatch {
            index: 0,
            expected: "numeric",
        }),
    }
}

/// Bin key of every value, in input order.
pub fn bin_values(x: &[Value<'_>], spec: &BinSpec) -> Result<Vec<BinKey>, BinError> {
    spec.validate()?;
    x.iter()
        .enumerate()
        .map(|(index, v)| {
            bin_value(*v, spec).map_err(|e| match e {
                BinError::TypeMismatch { expected, .. } => {
                    BinError::TypeMismatch { index, expected }
                }
                other => other,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub key: BinKey,
    /// Numeric bins only.
    pub left: Option<f64>,
    pub right: Option<f64>,
    pub count: u64,
    pub mean_y: f64,
    /// `(y bin index, count)` pairs when a y histogram was requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_histogram: Option<Vec<(i64, u64)>>,
}

/// Non-empty bins in key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSeries {
    pub spec: BinSpec,
    pub bins: Vec<Bin>,
}

impl BinnedSeries {
    pub fn total_count(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin,left,right,count,mean_y\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for b in &self.bins {
            let key = b.key.to_string();
            let key = if key.contains([',', '"']) {
                format!("\"{}\"", key.replace('"', "\"\""))
            } else {
                key
            };
            s.push_str(&format!(
                "{key},{},{},{},{}\n",
                opt(b.left),
                opt(b.right),
                b.count,
                b.mean_y
            ));
        }
        s
    }
}

/// Per-bin count and mean of `y`.
pub fn binned_mean_curve(
    x: &[Value<'_>],
    y: &[f64],
    spec: &BinSpec,
) -> Result<BinnedSeries, BinError> {
    build_series(x, y, spec, None)
}

/// Like [`binned_mean_curve`], also keeping a histogram of `y` per bin with
/// bins of `y_width`.
pub fn binned_mean_curve_with_histogram(
    x: &[Value<'_>],
    y: &[f64],
    spec: &BinSpec,
    y_width: f64,
) -> Result<BinnedSeries, BinError> {
    let y_spec = BinSpec::numeric(y_width, 0.0)?;
    build_series(x, y, spec, Some(y_spec))
}

fn build_series(
    x: &[Value<'_>],
    y: &[f64],
    spec: &BinSpec,
    y_spec: Option<BinSpec>,
) -> Result<BinnedSeries, BinError> {
    if x.len() != y.len() {
        return Err(BinError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    let keys = bin_values(x, spec)?;
    struct Acc {
        count: u64,
        sum: f64,
        hist: BTreeMap<i64, u64>,
    }
    let mut acc: BTreeMap<BinKey, Acc> = BTreeMap::new();
    for (key, &yv) in keys.into_iter().zip(y) {
        if !yv.is_finite() {
            return Err(BinError::NonFinite(yv));
        }
        let slot = acc.entry(key).or_insert(Acc {
            count: 0,
            sum: 0.0,
            hist: BTreeMap::new(),
        });
        slot.count += 1;
        slot.sum += yv;
        if let Some(ys) = &y_spec {
            *slot.hist.entry(ys.index_of(yv)?).or_default() += 1;
        }
    }
    let bins = acc
        .into_iter()
        .map(|(key, a)| {
            let edges = match &key {
                BinKey::Numeric(i) => spec.edges(*i),
                BinKey::Category(_) => None,
            };
            Bin {
                key,
                left: edges.map(|e| e.0),
                right: edges.map(|e| e.1),
                count: a.count,
                mean_y: a.sum / a.count as f64,
                y_histogram: y_spec.map(|_| a.hist.into_iter().collect()),
            }
        })
        .collect();
    Ok(BinnedSeries { spec: *spec, bins })
}
