//! Empirical distribution helpers shared by the analytics and replay code.

use serde::{Deserialize, Serialize};

/// Right-continuous empirical CDF: `eval(x)` is the fraction of samples `<= x`.
///
/// Stored as distinct sample values with their cumulative fraction, which is
/// also the plotting table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    pub n: usize,
    pub points: Vec<CdfPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub value: f64,
    pub cumulative: f64,
}

impl EmpiricalCdf {
    /// Builds the CDF; NaN samples are not allowed.
    pub fn from_samples(samples: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = samples.into_iter().collect();
        v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in CDF samples"));
        let n = v.len();
        let mut points: Vec<CdfPoint> = Vec::new();
        for (i, x) in v.iter().enumerate() {
            let cumulative = (i + 1) as f64 / n as f64;
            match points.last_mut() {
                Some(last) if last.value == *x => last.cumulative = cumulative,
                _ => points.push(CdfPoint {
                    value: *x,
                    cumulative,
                }),
            }
        }
        if let Some(last) = points.last_mut() {
            last.cumulative = 1.0;
        }
        EmpiricalCdf { n, points }
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.points.partition_point(|p| p.value <= x);
        if idx == 0 {
            0.0
        } else {
            self.points[idx - 1].cumulative
        }
    }

    /// Fraction of samples strictly greater than `x`.
    pub fn fraction_above(&self, x: f64) -> f64 {
        1.0 - self.eval(x)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("value,cumulative\n");
        for p in &self.points {
            s.push_str(&format!("{},{}\n", p.value, p.cumulative));
        }
        s
    }
}

/// Nearest-rank quantile of already sorted data: the value at 1-based rank
/// `ceil(q * n)`, with `q = 0` giving the minimum. `None` when empty.
pub fn nearest_rank(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let q = q.clamp(0.0, 1.0);
    let rank = (q * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.max(1) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub q: f64,
    pub value: f64,
}

pub fn quantile_table(samples: &[f64], levels: &[f64]) -> Vec<QuantilePoint> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("NaN in quantile samples"));
    levels
        .iter()
        .filter_map(|&q| nearest_rank(&sorted, q).map(|value| QuantilePoint { q, value }))
        .collect()
}
