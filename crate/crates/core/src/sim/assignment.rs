//! Maximum-weight perfect assignment.
//!
//! [`max_weight_assignment`] is the textbook O(m³) Hungarian method on an
//! explicit matrix. [`LazyAssignment`] solves the same problem for a matrix
//! of i.i.d. utilities that is never materialized: entries are revealed from
//! the top down, and the LP duals certify that nothing unrevealed could
//! improve the assignment.

use crate::error::{Error, Result};
use crate::utility::{open_unit, UtilityModel};
use rand::seq::index;
use rand::RngCore;
use rand_distr::{Binomial, Distribution};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

const NONE: usize = usize::MAX;

/// Optimal permutation (row i gets column `perm[i]`) and its total weight.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let m = weights.len();
    for row in weights {
        if row.len() != m {
            return Err(Error::domain(format!("assignment matrix must be square, got a row of {} in {m}x{m}", row.len())));
        }
        if row.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::domain("assignment weights must be finite and nonnegative"));
        }
    }
    if m == 0 {
        return Ok((Vec::new(), 0.0));
    }
    // Min-cost Hungarian on −w with 1-based potentials; p[j] is the row
    // assigned to column j, row/column 0 is the virtual root.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; m + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=m {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = -weights[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; m];
    for j in 1..=m {
        perm[p[j] - 1] = j - 1;
    }
    let total = perm.iter().enumerate().map(|(i, &j)| weights[i][j]).sum();
    Ok((perm, total))
}

/// Revealed-so-far view of one row, handed to an [`EntrySource`].
pub struct RowMask<'a> {
    bits: &'a [u64],
    revealed: usize,
}

impl RowMask<'_> {
    #[inline]
    pub fn is_revealed(&self, col: usize) -> bool {
        self.bits[col / 64] >> (col % 64) & 1 == 1
    }

    pub fn revealed(&self) -> usize {
        self.revealed
    }
}

/// Where the entries of an m×m utility matrix come from.
///
/// Entries are addressed by survival level: an entry with survival s has
/// value `level(s)`, and `level` is decreasing. Every unrevealed entry is
/// known only to have survival at least its row's current floor.
pub trait EntrySource {
    fn size(&self) -> usize;

    /// Value at survival level s.
    fn level(&self, s: f64) -> f64;

    /// Appends every unrevealed entry of `row` with survival in
    /// [s_from, s_to) as (column, value).
    fn reveal_band(&mut self, row: usize, s_from: f64, s_to: f64, mask: &RowMask<'_>, out: &mut Vec<(usize, f64)>);

    /// Value of the unrevealed entry (row, col), known to have survival ≥ s_from.
    fn reveal_one(&mut self, row: usize, col: usize, s_from: f64) -> f64;
}

/// i.i.d. draws from an i.i.d. utility model, generated on demand.
pub struct RandomSource<'a, R: RngCore> {
    model: &'a UtilityModel,
    rng: &'a mut R,
    m: usize,
    picks: Vec<usize>,
}

impl<'a, R: RngCore> RandomSource<'a, R> {
    /// `model` must be an i.i.d. family.
    pub fn new(model: &'a UtilityModel, m: usize, rng: &'a mut R) -> Self {
        debug_assert!(model.is_iid());
        RandomSource { model, rng, m, picks: Vec::new() }
    }
}

impl<R: RngCore> EntrySource for RandomSource<'_, R> {
    fn size(&self) -> usize {
        self.m
    }

    fn level(&self, s: f64) -> f64 {
        if s >= 1.0 {
            return f64::NEG_INFINITY;
        }
        self.model.survival_quantile(s)
    }

    fn reveal_band(&mut self, _row: usize, s_from: f64, s_to: f64, mask: &RowMask<'_>, out: &mut Vec<(usize, f64)>) {
        let hidden = self.m - mask.revealed();
        if hidden == 0 || s_to <= s_from {
            return;
        }
        // each hidden entry independently lands in the band
        let q = ((s_to - s_from) / (1.0 - s_from)).min(1.0);
        let k = if q >= 1.0 {
            hidden as u64
        } else {
            Binomial::new(hidden as u64, q).expect("valid binomial").sample(self.rng)
        } as usize;
        if k == 0 {
            return;
        }
        self.picks.clear();
        if mask.revealed() == 0 {
            self.picks.extend(index::sample(self.rng, self.m, k).iter());
        } else if 2 * k <= hidden {
            // rejection keeps the choice uniform over hidden columns
            while self.picks.len() < k {
                let c = (self.rng.next_u64() % self.m as u64) as usize;
                if !mask.is_revealed(c) && !self.picks.contains(&c) {
                    self.picks.push(c);
                }
            }
        } else {
            // selection sampling over the hidden columns
            let mut need = k;
            let mut left = hidden;
            for c in 0..self.m {
                if mask.is_revealed(c) {
                    continue;
                }
                if (open_unit(self.rng) * left as f64) < need as f64 {
                    self.picks.push(c);
                    need -= 1;
                    if need == 0 {
                        break;
                    }
                }
                left -= 1;
            }
        }
        let width = s_to - s_from;
        for &c in &self.picks {
            let s = s_from + open_unit(self.rng) * width;
            out.push((c, self.model.survival_quantile(s)));
        }
    }

    fn reveal_one(&mut self, _row: usize, _col: usize, s_from: f64) -> f64 {
        let s = s_from + open_unit(self.rng) * (1.0 - s_from);
        self.model.survival_quantile(s)
    }
}

/// A fully drawn matrix, given as survival levels, behind the lazy interface.
/// Used to check [`LazyAssignment`] against the dense solver.
pub struct DenseSource<'a> {
    model: &'a UtilityModel,
    survival: Vec<Vec<f64>>,
}

impl<'a> DenseSource<'a> {
    pub fn new(model: &'a UtilityModel, survival: Vec<Vec<f64>>) -> Self {
        DenseSource { model, survival }
    }

    pub fn weights(&self) -> Vec<Vec<f64>> {
        self.survival
            .iter()
            .map(|row| row.iter().map(|s| self.model.survival_quantile(*s)).collect())
            .collect()
    }
}

impl EntrySource for DenseSource<'_> {
    fn size(&self) -> usize {
        self.survival.len()
    }

    fn level(&self, s: f64) -> f64 {
        if s >= 1.0 {
            return f64::NEG_INFINITY;
        }
        self.model.survival_quantile(s)
    }

    fn reveal_band(&mut self, row: usize, s_from: f64, s_to: f64, mask: &RowMask<'_>, out: &mut Vec<(usize, f64)>) {
        for (c, s) in self.survival[row].iter().enumerate() {
            if !mask.is_revealed(c) && *s >= s_from && *s < s_to {
                out.push((c, self.model.survival_quantile(*s)));
            }
        }
    }

    fn reveal_one(&mut self, row: usize, col: usize, s_from: f64) -> f64 {
        debug_assert!(self.survival[row][col] >= s_from);
        self.model.survival_quantile(self.survival[row][col])
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    col: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.col.cmp(&self.col))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Work counters of the last [`LazyAssignment::solve`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub revealed: usize,
    /// Row bands revealed after the first.
    pub layers: usize,
    pub certification_rounds: usize,
    pub augmentations: usize,
    pub columns_scanned: usize,
}

/// Exact max-weight assignment that reveals matrix entries on demand.
///
/// Costs are c = −w. Duals (u, v) satisfy u_i + v_j ≤ c_ij on revealed
/// edges with equality on matched ones. An unrevealed entry of row i has
/// c ≥ −t_i, where t_i is the level at the row's survival floor, so
/// u_i + v_j ≤ −t_i on every unrevealed pair proves optimality.
/// Reusable across calls to avoid reallocating its buffers.
#[derive(Default)]
pub struct LazyAssignment {
    m: usize,
    words: usize,
    bits: Vec<u64>,
    touched_words: Vec<usize>,
    row_revealed: Vec<usize>,
    adj: Vec<Vec<(usize, f64)>>,
    u: Vec<f64>,
    v: Vec<f64>,
    row_match: Vec<usize>,
    col_match: Vec<usize>,
    match_cost: Vec<f64>,
    dist: Vec<f64>,
    stamp: Vec<u32>,
    finalized: Vec<bool>,
    pred: Vec<usize>,
    epoch: u32,
    final_cols: Vec<usize>,
    heap: BinaryHeap<HeapItem>,
    free: Vec<usize>,
    scratch: Vec<(usize, f64)>,
    order: Vec<usize>,
    violators: Vec<usize>,
    floor: Vec<f64>,
    pub stats: SolveStats,
}

/// Reduced costs this negative count as dual violations.
const DUAL_TOL: f64 = 1e-9;
/// Violations per row revealed one by one before revealing a whole band.
const SPOT_REVEALS: usize = 4;

impl LazyAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    fn reset(&mut self, m: usize) {
        if m != self.m || self.adj.len() < m {
            self.m = m;
            self.words = m.div_ceil(64);
            self.bits = vec![0; m * self.words];
            self.touched_words.clear();
            self.adj = vec![Vec::new(); m];
            self.row_revealed = vec![0; m];
            self.u = vec![0.0; m];
            self.v = vec![0.0; m];
            self.row_match = vec![NONE; m];
            self.col_match = vec![NONE; m];
            self.match_cost = vec![0.0; m];
            self.dist = vec![0.0; m];
            self.stamp = vec![0; m];
            self.finalized = vec![false; m];
            self.pred = vec![NONE; m];
            self.floor = vec![0.0; m];
            self.epoch = 0;
        } else {
            for &w in &self.touched_words {
                self.bits[w] = 0;
            }
            self.touched_words.clear();
            for i in 0..m {
                self.adj[i].clear();
                self.row_revealed[i] = 0;
                self.u[i] = 0.0;
                self.v[i] = 0.0;
                self.row_match[i] = NONE;
                self.col_match[i] = NONE;
            }
        }
        self.free.clear();
        self.stats = SolveStats::default();
    }

    fn mark(&mut self, row: usize, col: usize) {
        let w = row * self.words + col / 64;
        if self.bits[w] == 0 {
            self.touched_words.push(w);
        }
        self.bits[w] |= 1 << (col % 64);
        self.row_revealed[row] += 1;
    }

    fn is_revealed(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.words + col / 64] >> (col % 64) & 1 == 1
    }

    /// Adds edges in `scratch` to `row`; frees the row if a new edge breaks
    /// dual feasibility.
    fn absorb(&mut self, row: usize) {
        let mut broken = false;
        let mut scratch = std::mem::take(&mut self.scratch);
        for &(col, w) in &scratch {
            self.mark(row, col);
            let c = -w;
            self.adj[row].push((col, c));
            if c - self.u[row] - self.v[col] < -DUAL_TOL {
                broken = true;
            }
        }
        self.stats.revealed += scratch.len();
        scratch.clear();
        self.scratch = scratch;
        if broken && self.row_match[row] != NONE {
            let col = self.row_match[row];
            self.col_match[col] = NONE;
            self.row_match[row] = NONE;
            self.free.push(row);
        }
    }

    fn reveal_band<S: EntrySource>(&mut self, src: &mut S, row: usize, s_from: f64, s_to: f64) {
        let mut scratch = std::mem::take(&mut self.scratch);
        {
            let mask = RowMask {
                bits: &self.bits[row * self.words..(row + 1) * self.words],
                revealed: self.row_revealed[row],
            };
            src.reveal_band(row, s_from, s_to, &mask, &mut scratch);
        }
        self.scratch = scratch;
        self.absorb(row);
    }

    /// Reveals the next band of `row`, doubling its survival floor.
    fn deepen<S: EntrySource>(&mut self, src: &mut S, row: usize) {
        let next = (2.0 * self.floor[row]).min(1.0);
        self.reveal_band(src, row, self.floor[row], next);
        self.floor[row] = next;
        self.stats.layers += 1;
    }

    /// Shortest augmenting path from free row `root`; false if none exists
    /// among revealed edges.
    fn augment(&mut self, root: usize) -> bool {
        let Some(u_root) = self.adj[root].iter().map(|&(j, c)| c - self.v[j]).min_by(f64::total_cmp) else {
            return false;
        };
        self.u[root] = u_root;
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        let epoch = self.epoch;
        self.heap.clear();
        self.final_cols.clear();
        for &(j, c) in &self.adj[root] {
            let d = c - u_root - self.v[j];
            if self.stamp[j] != epoch || d < self.dist[j] {
                self.stamp[j] = epoch;
                self.finalized[j] = false;
                self.dist[j] = d;
                self.pred[j] = root;
                self.heap.push(HeapItem { dist: d, col: j });
            }
        }
        let mut end = NONE;
        while let Some(HeapItem { dist: d, col: j }) = self.heap.pop() {
            if self.finalized[j] || d > self.dist[j] {
                continue;
            }
            self.finalized[j] = true;
            self.final_cols.push(j);
            let i = self.col_match[j];
            if i == NONE {
                end = j;
                break;
            }
            let base = d - self.u[i];
            for &(k, c) in &self.adj[i] {
                let nd = base + c - self.v[k];
                if self.stamp[k] != epoch {
                    self.stamp[k] = epoch;
                    self.finalized[k] = false;
                    self.dist[k] = nd;
                    self.pred[k] = i;
                    self.heap.push(HeapItem { dist: nd, col: k });
                } else if !self.finalized[k] && nd < self.dist[k] {
                    self.dist[k] = nd;
                    self.pred[k] = i;
                    self.heap.push(HeapItem { dist: nd, col: k });
                }
            }
        }
        self.stats.augmentations += 1;
        self.stats.columns_scanned += self.final_cols.len();
        if end == NONE {
            return false;
        }
        let total = self.dist[end];
        self.u[root] += total;
        for idx in 0..self.final_cols.len() {
            let j = self.final_cols[idx];
            let slack = total - self.dist[j];
            self.v[j] -= slack;
            let i = self.col_match[j];
            if i != NONE {
                self.u[i] += slack;
            }
        }
        let mut j = end;
        loop {
            let i = self.pred[j];
            let next = self.row_match[i];
            self.row_match[i] = j;
            self.col_match[j] = i;
            if i == root {
                break;
            }
            j = next;
        }
        true
    }

    fn matched_costs(&mut self) {
        for i in 0..self.m {
            let j = self.row_match[i];
            self.match_cost[i] = self.adj[i].iter().find(|e| e.0 == j).map(|e| e.1).expect("matched edge revealed");
        }
    }

    /// Solves the assignment for `src`; returns the total weight. The
    /// optimal permutation is available from [`LazyAssignment::row_match`].
    pub fn solve<S: EntrySource>(&mut self, src: &mut S) -> f64 {
        let m = src.size();
        self.reset(m);
        if m == 0 {
            return 0.0;
        }
        let mf = m as f64;
        let s0 = ((2.0 * mf.ln() + 6.0) / mf).min(1.0);
        for i in 0..m {
            self.reveal_band(src, i, 0.0, s0);
            self.floor[i] = s0;
        }
        // greedy start: each row takes its best column if still free
        for i in 0..m {
            if let Some(&(j, c)) = self.adj[i].iter().min_by(|a, b| a.1.total_cmp(&b.1)) {
                self.u[i] = c;
                if self.col_match[j] == NONE {
                    self.row_match[i] = j;
                    self.col_match[j] = i;
                    continue;
                }
            }
            self.free.push(i);
        }
        self.free.reverse();
        loop {
            while let Some(i) = self.free.pop() {
                if !self.augment(i) {
                    self.free.push(i);
                    assert!(self.floor[i] < 1.0, "a fully revealed row always has an augmenting path");
                    self.deepen(src, i);
                }
            }
            // dual check against every unrevealed pair: v_j > −t_i − u_i is a violation
            self.stats.certification_rounds += 1;
            self.order.clear();
            self.order.extend(0..m);
            let v = &self.v;
            self.order.sort_unstable_by(|a, b| v[*b].total_cmp(&v[*a]));
            let mut certified = true;
            for i in 0..m {
                if self.floor[i] >= 1.0 {
                    continue;
                }
                let limit = -src.level(self.floor[i]) - self.u[i] + DUAL_TOL;
                let mut violators = std::mem::take(&mut self.violators);
                violators.clear();
                for idx in 0..m {
                    let j = self.order[idx];
                    if self.v[j] <= limit || violators.len() > SPOT_REVEALS {
                        break;
                    }
                    if !self.is_revealed(i, j) {
                        violators.push(j);
                    }
                }
                if !violators.is_empty() {
                    certified = false;
                    if violators.len() > SPOT_REVEALS {
                        self.deepen(src, i);
                    } else {
                        for &j in &violators {
                            let w = src.reveal_one(i, j, self.floor[i]);
                            self.scratch.push((j, w));
                        }
                        self.absorb(i);
                    }
                }
                self.violators = violators;
            }
            if certified {
                break;
            }
        }
        self.matched_costs();
        -self.match_cost[..m].iter().sum::<f64>()
    }

    /// Column assigned to each row by the last solve.
    pub fn row_match(&self) -> &[usize] {
        &self.row_match[..self.m]
    }
}
