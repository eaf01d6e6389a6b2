//! Sentence-level METEOR with exact unigram matching.

use std::collections::HashMap;

/// Search budget for the chunk-minimizing alignment; past it the best
/// alignment found so far is used.
const SEARCH_BUDGET: usize = 200_000;

/// `F_mean · (1 − penalty)` where `F_mean = 10PR / (R + 9P)` and
/// `penalty = 0.5 · (chunks / m)^3`. Alignment is one-to-one, maximizes the
/// number of matches `m` and, among those, minimizes the number of chunks.
pub fn meteor<S: AsRef<str>, T: AsRef<str>>(candidate: &[S], reference: &[T]) -> f64 {
    let cand: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let refs: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    if cand.is_empty() || refs.is_empty() {
        return 0.0;
    }
    let (m, chunks) = align(&cand, &refs);
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / cand.len() as f64;
    let r = m as f64 / refs.len() as f64;
    let f = 10.0 * p * r / (r + 9.0 * p);
    let frag = chunks as f64 / m as f64;
    f * (1.0 - 0.5 * frag.powi(3))
}

/// Returns `(matches, chunks)` of the best alignment.
pub fn align(cand: &[&str], refs: &[&str]) -> (usize, usize) {
    let mut ref_pos: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, w) in refs.iter().enumerate() {
        ref_pos.entry(w).or_default().push(j);
    }
    let mut cand_count: HashMap<&str, usize> = HashMap::new();
    for w in cand {
        *cand_count.entry(w).or_default() += 1;
    }
    // Matches required per word type, and candidate occurrences left after
    // each position.
    let mut need: HashMap<&str, usize> = HashMap::new();
    for (w, c) in &cand_count {
        let r = ref_pos.get(w).map_or(0, Vec::len);
        if r > 0 {
            need.insert(w, (*c).min(r));
        }
    }
    let m: usize = need.values().sum();
    if m == 0 {
        return (0, 0);
    }
    let mut remaining_after = vec![0usize; cand.len()];
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for i in (0..cand.len()).rev() {
        remaining_after[i] = seen.get(cand[i]).copied().unwrap_or(0);
        *seen.entry(cand[i]).or_default() += 1;
    }
    let mut search = Search {
        cand,
        ref_pos: &ref_pos,
        remaining_after: &remaining_after,
        need,
        used: vec![false; refs.len()],
        best: greedy_chunks(cand, refs),
        nodes: 0,
    };
    search.dfs(0, None, 0);
    (m, search.best)
}

struct Search<'a> {
    cand: &'a [&'a str],
    ref_pos: &'a HashMap<&'a str, Vec<usize>>,
    remaining_after: &'a [usize],
    need: HashMap<&'a str, usize>,
    used: Vec<bool>,
    best: usize,
    nodes: usize,
}

impl Search<'_> {
    /// `prev` is the reference position matched by candidate `i - 1`.
    fn dfs(&mut self, i: usize, prev: Option<usize>, chunks: usize) {
        self.nodes += 1;
        if chunks >= self.best || self.nodes > SEARCH_BUDGET {
            return;
        }
        if i == self.cand.len() {
            self.best = chunks;
            return;
        }
        let w = self.cand[i];
        let need = self.need.get(w).copied().unwrap_or(0);
        if need > 0 {
            let positions = &self.ref_pos[w];
            // Try the chunk-continuing position first.
            let mut order: Vec<usize> = positions
                .iter()
                .copied()
                .filter(|&j| !self.used[j])
                .collect();
            if let Some(p) = prev {
                if let Some(k) = order.iter().position(|&j| j == p + 1) {
                    order.swap(0, k);
                }
            }
            for j in order {
                let extra = usize::from(prev.is_none_or(|p| j != p + 1));
                self.used[j] = true;
                self.need.insert(w, need - 1);
                self.dfs(i + 1, Some(j), chunks + extra);
                self.need.insert(w, need);
                self.used[j] = false;
            }
        }
        if self.remaining_after[i] >= need {
            self.dfs(i + 1, None, chunks);
        }
    }
}

/// Chunks of the left-to-right alignment that prefers continuing the current
/// chunk, plus one: a strict upper bound for the search.
fn greedy_chunks(cand: &[&str], refs: &[&str]) -> usize {
    let mut used = vec![false; refs.len()];
    let mut quota: HashMap<&str, usize> = HashMap::new();
    for w in cand {
        let c = cand.iter().filter(|x| *x == w).count();
        let r = refs.iter().filter(|x| *x == w).count();
        quota.insert(w, c.min(r));
    }
    let mut prev: Option<usize> = None;
    let mut chunks = 0;
    for w in cand {
        let q = quota.get_mut(w).expect("every word has a quota");
        if *q == 0 {
            prev = None;
            continue;
        }
        let next = prev
            .map(|p| p + 1)
            .filter(|&j| j < refs.len() && !used[j] && refs[j] == *w);
        let j = next
            .or_else(|| (0..refs.len()).find(|&j| !used[j] && refs[j] == *w))
            .expect("quota implies a free position");
        *q -= 1;
        used[j] = true;
        if next.is_none() {
            chunks += 1;
        }
        prev = Some(j);
    }
    chunks + 1
}
