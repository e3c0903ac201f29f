//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

/// Joint-histogram entropies, computed from scratch.
pub fn rig_oracle(x: &[i64], y: &[i64]) -> f64 {
    let n = x.len() as f64;
    let mut joint: HashMap<(i64, i64), f64> = HashMap::new();
    let mut px: HashMap<i64, f64> = HashMap::new();
    let mut py: HashMap<i64, f64> = HashMap::new();
    for (&a, &b) in x.iter().zip(y) {
        *joint.entry((a, b)).or_default() += 1.0;
        *px.entry(a).or_default() += 1.0;
        *py.entry(b).or_default() += 1.0;
    }
    let h_y: f64 = py.values().map(|c| -(c / n) * (c / n).ln()).sum();
    if py.len() < 2 {
        return 0.0;
    }
    let mut h_y_given_x = 0.0;
    for (&(a, _), c) in &joint {
        let p_xy = c / n;
        let p_y_given_x = c / px[&a];
        h_y_given_x -= p_xy * p_y_given_x.ln();
    }
    ((h_y - h_y_given_x) / h_y).clamp(0.0, 1.0)
}

/// Bin means in input order, then O(m^2) pair counting.
pub fn kendall_oracle(x: &[f64], y: &[f64], width: f64, origin: f64) -> f64 {
    let mut acc: Vec<(i64, f64, u64)> = Vec::new();
    for (&a, &b) in x.iter().zip(y) {
        let k = ((a - origin) / width).floor() as i64;
        match acc.iter_mut().find(|e| e.0 == k) {
            Some(e) => {
                e.1 += b;
                e.2 += 1;
            }
            None => acc.push((k, b, 1)),
        }
    }
    acc.sort_by_key(|e| e.0);
    let pts: Vec<(f64, f64)> = acc
        .iter()
        .map(|&(k, s, c)| (k as f64, s / c as f64))
        .collect();
    let (mut conc, mut disc, mut tie_x, mut tie_y, mut tie_xy) = (0i64, 0i64, 0i64, 0i64, 0i64);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let dx = pts[i].0 - pts[j].0;
            let dy = pts[i].1 - pts[j].1;
            match (dx == 0.0, dy == 0.0) {
                (true, true) => tie_xy += 1,
                (true, false) => tie_x += 1,
                (false, true) => tie_y += 1,
                _ if (dx > 0.0) == (dy > 0.0) => conc += 1,
                _ => disc += 1,
            }
        }
    }
    let n0 = conc + disc + tie_x + tie_y + tie_xy;
    let n1 = tie_x + tie_xy;
    let n2 = tie_y + tie_xy;
    ((conc - disc) as f64) / ((n0 - n1) as f64 * (n0 - n2) as f64).sqrt()
}
