//! Order-tolerant alignment of an executed trace against the canonical one.
//!
//! Longest common subsequence where consecutive canonical steps sharing a
//! commutative group form one block whose members may match in any order.

use std::collections::HashMap;

use stepwise_bank::{inputs_match, ConcreteStep};
use stepwise_context::ContextArtifact;

/// Whether an executed artifact carries out a canonical step.
pub fn step_matches(step: &ConcreteStep, a: &ContextArtifact) -> bool {
    a.ok() && step.accepts_tool(&a.tool_id) && inputs_match(&step.tool_id, &step.input, &a.tool_id, &a.input, step.tolerance)
}

/// Canonical index ranges of the blocks.
fn blocks(canonical: &[ConcreteStep]) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (i, s) in canonical.iter().enumerate() {
        match out.last_mut() {
            Some((start, end))
                if s.commutative_group.is_some() && canonical[*start].commutative_group == s.commutative_group =>
            {
                *end = i + 1;
            }
            _ => out.push((i, i + 1)),
        }
    }
    out
}

/// Matched `(canonical index, trace index)` pairs in trace order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Alignment {
    pub pairs: Vec<(usize, usize)>,
}

impl Alignment {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn trace_index(&self, canonical: usize) -> Option<usize> {
        self.pairs.iter().find(|(c, _)| *c == canonical).map(|(_, t)| *t)
    }
}

struct Solver {
    blocks: Vec<(usize, usize)>,
    ok: Vec<Vec<bool>>,
    n: usize,
    memo: HashMap<(usize, usize, u64), usize>,
}

impl Solver {
    fn best(&mut self, i: usize, b: usize, mask: u64) -> usize {
        if i == self.n || b == self.blocks.len() {
            return 0;
        }
        if let Some(&v) = self.memo.get(&(i, b, mask)) {
            return v;
        }
        let (start, end) = self.blocks[b];
        let mut v = self.best(i + 1, b, mask).max(self.best(i, b + 1, 0));
        for j in start..end {
            let bit = 1u64 << (j - start);
            if mask & bit == 0 && self.ok[j][i] {
                v = v.max(1 + self.best(i + 1, b, mask | bit));
            }
        }
        self.memo.insert((i, b, mask), v);
        v
    }
}

pub fn align(canonical: &[ConcreteStep], trace: &[ContextArtifact]) -> Alignment {
    let ok: Vec<Vec<bool>> = canonical
        .iter()
        .map(|s| trace.iter().map(|a| step_matches(s, a)).collect())
        .collect();
    let mut s = Solver {
        blocks: blocks(canonical),
        ok,
        n: trace.len(),
        memo: HashMap::new(),
    };
    let mut pairs = Vec::new();
    let (mut i, mut b, mut mask) = (0, 0, 0u64);
    while i < s.n && b < s.blocks.len() {
        let target = s.best(i, b, mask);
        if target == 0 {
            break;
        }
        let (start, end) = s.blocks[b];
        let mut moved = false;
        for j in start..end {
            let bit = 1u64 << (j - start);
            if mask & bit == 0 && s.ok[j][i] && 1 + s.best(i + 1, b, mask | bit) == target {
                pairs.push((j, i));
                i += 1;
                mask |= bit;
                moved = true;
                break;
            }
        }
        if moved {
            continue;
        }
        if s.best(i + 1, b, mask) == target {
            i += 1;
        } else {
            b += 1;
            mask = 0;
        }
    }
    Alignment { pairs }
}
