//! A single weighted-Gini classification tree.

use rand::seq::SliceRandom;
use rand::Rng;

use super::ForestParams;
use crate::features::{FeatureVector, SpeedLabel};

#[derive(Debug, Clone, PartialEq)]
pub enum SplitTest {
    /// Goes left when `x < threshold`.
    Below(f64),
    /// Goes left when the code is in the (sorted) set.
    InSet(Vec<u32>),
}

impl SplitTest {
    #[inline]
    pub fn goes_left(&self, x: i64) -> bool {
        match self {
            SplitTest::Below(t) => (x as f64) < *t,
            SplitTest::InSet(codes) => {
                u32::try_from(x).is_ok_and(|c| codes.binary_search(&c).is_ok())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Class-weighted training mass that reached the leaf.
    Leaf { w_fast: f64, w_slow: f64 },
    Split {
        feature: u8,
        test: SplitTest,
        left: u32,
        right: u32,
    },
}

/// Nodes in a flat arena; node 0 is the root and children always have larger
/// indices than their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf_for(&self, fv: &FeatureVector) -> &Node {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    test,
                    left,
                    right,
                } => {
                    i = if test.goes_left(fv.get(*feature as usize)) {
                        *left
                    } else {
                        *right
                    } as usize;
                }
                leaf => return leaf,
            }
        }
    }

    /// The tree's class; a leaf with equal weights votes SLOW.
    pub fn vote(&self, fv: &FeatureVector) -> SpeedLabel {
        match self.leaf_for(fv) {
            Node::Leaf { w_fast, w_slow } if w_fast > w_slow => SpeedLabel::Fast,
            _ => SpeedLabel::Slow,
        }
    }

    /// Longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = n {
                depth[*left as usize] = depth[i] + 1;
                depth[*right as usize] = depth[i] + 1;
                max = max.max(depth[i] + 1);
            }
        }
        max
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Training matrix with every feature pre-mapped to the rank of its value
/// among the distinct training values, so split search is histogram based.
pub(crate) struct TrainData {
    pub n: usize,
    bins: Vec<Vec<u32>>,
    values: Vec<Vec<i64>>,
    slow: Vec<bool>,
}

impl TrainData {
    pub fn new(x: &[FeatureVector], y: &[SpeedLabel]) -> Self {
        let mut bins = Vec::with_capacity(FeatureVector::N_FEATURES);
        let mut values = Vec::with_capacity(FeatureVector::N_FEATURES);
        for f in 0..FeatureVector::N_FEATURES {
            let col: Vec<i64> = x.iter().map(|v| v.get(f)).collect();
            let mut uniq = col.clone();
            uniq.sort_unstable();
            uniq.dedup();
            bins.push(
                col.iter()
                    .map(|v| uniq.binary_search(v).unwrap() as u32)
                    .collect(),
            );
            values.push(uniq);
        }
        TrainData {
            n: x.len(),
            bins,
            values,
            slow: y.iter().map(|l| *l == SpeedLabel::Slow).collect(),
        }
    }

    pub fn is_slow(&self, row: usize) -> bool {
        self.slow[row]
    }
}

struct Scratch {
    w_fast: Vec<f64>,
    w_slow: Vec<f64>,
    count: Vec<u64>,
    touched: Vec<u32>,
    left_mask: Vec<bool>,
}

struct Candidate {
    score: f64,
    feature: usize,
    /// Bins going left.
    left_bins: Vec<u32>,
    /// Numeric features: the last bin going left and the first going right.
    numeric_gap: (u32, u32),
}

/// Grows one tree on the rows with non-zero multiplicity in `counts`.
pub(crate) fn grow<R: Rng>(
    data: &TrainData,
    counts: &[u32],
    params: &ForestParams,
    rng: &mut R,
) -> DecisionTree {
    let cw_fast = params.class_weight_fast;
    let weight = |row: usize| -> (f64, f64) {
        let m = counts[row] as f64;
        if data.slow[row] {
            (0.0, m)
        } else {
            (cw_fast * m, 0.0)
        }
    };
    let max_bins = data.values.iter().map(Vec::len).max().unwrap_or(0);
    let mut scratch = Scratch {
        w_fast: vec![0.0; max_bins],
        w_slow: vec![0.0; max_bins],
        count: vec![0; max_bins],
        touched: Vec::new(),
        left_mask: vec![false; max_bins],
    };
    let mut idx: Vec<u32> = (0..data.n as u32)
        .filter(|&r| counts[r as usize] > 0)
        .collect();
    let mut nodes = vec![Node::Leaf {
        w_fast: 0.0,
        w_slow: 0.0,
    }];
    let mut stack = vec![(0usize, 0usize, idx.len(), 0usize)];
    let mut features: Vec<usize> = (0..FeatureVector::N_FEATURES).collect();
    let min_leaf = params.min_samples_leaf as u64;

    while let Some((node, lo, hi, depth)) = stack.pop() {
        let rows = &idx[lo..hi];
        let (mut wf, mut ws, mut m) = (0.0, 0.0, 0u64);
        for &r in rows {
            let (f, s) = weight(r as usize);
            wf += f;
            ws += s;
            m += counts[r as usize] as u64;
        }
        nodes[node] = Node::Leaf {
            w_fast: wf,
            w_slow: ws,
        };
        if depth >= params.max_depth || wf == 0.0 || ws == 0.0 || m < 2 * min_leaf {
            continue;
        }
        let parent_score = (wf * wf + ws * ws) / (wf + ws);
        features.shuffle(rng);
        let mut best: Option<Candidate> = None;
        for (k, &f) in features.iter().enumerate() {
            if k >= params.features_per_split && best.is_some() {
                break;
            }
            if let Some(c) = best_split_on(data, f, rows, &weight, counts, min_leaf, &mut scratch) {
                if c.score > parent_score * (1.0 + 1e-12)
                    && best.as_ref().is_none_or(|b| c.score > b.score)
                {
                    best = Some(c);
                }
            }
        }
        let Some(best) = best else { continue };

        for &b in &best.left_bins {
            scratch.left_mask[b as usize] = true;
        }
        let col = &data.bins[best.feature];
        let slice = &mut idx[lo..hi];
        let mut mid = 0;
        for i in 0..slice.len() {
            if scratch.left_mask[col[slice[i] as usize] as usize] {
                slice.swap(i, mid);
                mid += 1;
            }
        }
        for &b in &best.left_bins {
            scratch.left_mask[b as usize] = false;
        }

        let vals = &data.values[best.feature];
        let test = if FeatureVector::is_categorical(best.feature) {
            let mut codes: Vec<u32> = best
                .left_bins
                .iter()
                .map(|&b| vals[b as usize] as u32)
                .collect();
            codes.sort_unstable();
            SplitTest::InSet(codes)
        } else {
            let (a, b) = best.numeric_gap;
            SplitTest::Below((vals[a as usize] as f64 + vals[b as usize] as f64) / 2.0)
        };
        let left = nodes.len();
        nodes.push(Node::Leaf {
            w_fast: 0.0,
            w_slow: 0.0,
        });
        nodes.push(Node::Leaf {
            w_fast: 0.0,
            w_slow: 0.0,
        });
        nodes[node] = Node::Split {
            feature: best.feature as u8,
            test,
            left: left as u32,
            right: left as u32 + 1,
        };
        stack.push((left + 1, lo + mid, hi, depth + 1));
        stack.push((left, lo, lo + mid, depth + 1));
    }
    DecisionTree { nodes }
}

fn best_split_on(
    data: &TrainData,
    f: usize,
    rows: &[u32],
    weight: &impl Fn(usize) -> (f64, f64),
    counts: &[u32],
    min_leaf: u64,
    s: &mut Scratch,
) -> Option<Candidate> {
    let col = &data.bins[f];
    s.touched.clear();
    for &r in rows {
        let b = col[r as usize] as usize;
        if s.count[b] == 0 {
            s.touched.push(b as u32);
        }
        let (wf, ws) = weight(r as usize);
        s.w_fast[b] += wf;
        s.w_slow[b] += ws;
        s.count[b] += counts[r as usize] as u64;
    }
    let result = if s.touched.len() < 2 {
        None
    } else {
        if FeatureVector::is_categorical(f) {
            let (wf, ws) = (&s.w_fast, &s.w_slow);
            let share = |b: u32| ws[b as usize] / (wf[b as usize] + ws[b as usize]);
            s.touched
                .sort_unstable_by(|&a, &b| share(a).total_cmp(&share(b)).then(a.cmp(&b)));
        } else {
            s.touched.sort_unstable();
        }
        let (tf, ts, tc) = s.touched.iter().fold((0.0, 0.0, 0u64), |acc, &b| {
            let b = b as usize;
            (acc.0 + s.w_fast[b], acc.1 + s.w_slow[b], acc.2 + s.count[b])
        });
        let (mut lf, mut ls, mut lc) = (0.0, 0.0, 0u64);
        let mut best: Option<(f64, usize)> = None;
        for k in 0..s.touched.len() - 1 {
            let b = s.touched[k] as usize;
            lf += s.w_fast[b];
            ls += s.w_slow[b];
            lc += s.count[b];
            if lc < min_leaf || tc - lc < min_leaf {
                continue;
            }
            let (rf, rs) = (tf - lf, ts - ls);
            let (lw, rw) = (lf + ls, rf + rs);
            if lw <= 0.0 || rw <= 0.0 {
                continue;
            }
            let score = (lf * lf + ls * ls) / lw + (rf * rf + rs * rs) / rw;
            if best.is_none_or(|(bs, _)| score > bs) {
                best = Some((score, k));
            }
        }
        best.map(|(score, k)| Candidate {
            score,
            feature: f,
            left_bins: s.touched[..=k].to_vec(),
            numeric_gap: (s.touched[k], s.touched[k + 1]),
        })
    };
    for &b in &s.touched {
        let b = b as usize;
        s.w_fast[b] = 0.0;
        s.w_slow[b] = 0.0;
        s.count[b] = 0;
    }
    result
}
