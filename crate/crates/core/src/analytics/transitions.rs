use serde::{Deserialize, Serialize};

use crate::sim::{ConnState, TransitionTrace};

/// Transition counts between set-up states, indexed `[from][to]` in
/// `ConnState::ALL` order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub counts: [[u64; 6]; 6],
}

impl TransitionMatrix {
    pub fn add_trace(&mut self, trace: &TransitionTrace) {
        for t in &trace.transitions {
            self.counts[t.from.index()][t.to.index()] += 1;
        }
    }

    pub fn merge(&mut self, other: &TransitionMatrix) {
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
    }

    pub fn get(&self, from: ConnState, to: ConnState) -> u64 {
        self.counts[from.index()][to.index()]
    }

    /// Departures from each state.
    pub fn row_sums(&self) -> [u64; 6] {
        self.counts.map(|row| row.iter().sum())
    }

    pub fn entries_into(&self, to: ConnState) -> u64 {
        self.counts.iter().map(|row| row[to.index()]).sum()
    }

    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum()
    }

    /// Long-form `from,to,count` table of the non-zero cells.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("from,to,count\n");
        for from in ConnState::ALL {
            for to in ConnState::ALL {
                let c = self.get(from, to);
                if c > 0 {
                    s.push_str(&format!("{},{},{c}\n", from.name(), to.name()));
                }
            }
        }
        s
    }
}

pub fn transition_matrix<'a>(
    traces: impl IntoIterator<Item = &'a TransitionTrace>,
) -> TransitionMatrix {
    let mut m = TransitionMatrix::default();
    for t in traces {
        m.add_trace(t);
    }
    m
}
