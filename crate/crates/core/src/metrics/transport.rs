//! Exact discrete optimal transport by the primal network simplex method on
//! the bipartite transportation network, with an entropic (Sinkhorn) opt-in.
//!
//! The tree bookkeeping (parent, thread, successor counts) follows the
//! classical spanning-tree implementation with an artificial root: every
//! node starts attached to the root by an artificial arc of prohibitive
//! cost, so the initial basis is feasible and strongly feasible. The
//! leaving-arc rule keeps the basis strongly feasible, which prevents
//! cycling on the (very common) degenerate pivots.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;
const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

/// Optimal plan on the truncated supports with its dual certificate.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    /// `Σ P_ik d_ik`.
    pub cost: f64,
    /// Dual objective `Σ a_i u_i + Σ b_k v_k` from the final potentials.
    pub dual: f64,
    /// Largest violation `max(0, u_i + v_k − d_ik)` of dual feasibility.
    pub dual_violation: f64,
    /// Nonzero plan entries `(i, k, mass)` in original vertex indices.
    pub plan: Vec<(usize, usize, f64)>,
    pub pivots: usize,
}

/// Masses below this are dropped and the rest renormalized.
pub const SUPPORT_EPS: f64 = 1e-12;

pub(crate) fn truncated_support(mass: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let idx: Vec<usize> = (0..mass.len()).filter(|&i| mass[i] >= SUPPORT_EPS).collect();
    let total: f64 = idx.iter().map(|&i| mass[i]).sum();
    let w = idx.iter().map(|&i| mass[i] / total).collect();
    (idx, w)
}

struct Simplex<'a> {
    m: usize,
    n: usize,
    cost: &'a [f64],
    n_arcs: usize,
    // per arc (real arcs first, then one artificial arc per node)
    flow: Vec<f64>,
    state: Vec<i8>,
    art_source: Vec<usize>,
    art_target: Vec<usize>,
    art_cost: f64,
    // per node (sources 0..m, sinks m..m+n, root m+n)
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,
    // pivot state
    next_arc: usize,
    block_size: usize,
    eps: f64,
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

impl<'a> Simplex<'a> {
    fn new(a: &[f64], b: &[f64], cost: &'a [f64]) -> Self {
        let m = a.len();
        let n = b.len();
        let n_arcs = m * n;
        let nodes = m + n;
        let root = nodes;
        let max_cost = cost.iter().fold(0.0f64, |x, &c| x.max(c.abs()));
        let scale = if max_cost > 0.0 { max_cost } else { 1.0 };
        let art_cost = scale * (nodes as f64 + 1.0);

        let mut s = Simplex {
            m,
            n,
            cost,
            n_arcs,
            flow: vec![0.0; n_arcs + nodes],
            state: vec![STATE_LOWER; n_arcs + nodes],
            art_source: vec![0; nodes],
            art_target: vec![0; nodes],
            art_cost,
            parent: vec![NONE; nodes + 1],
            pred: vec![NONE; nodes + 1],
            pred_dir: vec![0; nodes + 1],
            thread: vec![0; nodes + 1],
            rev_thread: vec![0; nodes + 1],
            succ_num: vec![1; nodes + 1],
            last_succ: vec![0; nodes + 1],
            pi: vec![0.0; nodes + 1],
            dirty_revs: Vec::new(),
            next_arc: 0,
            block_size: ((n_arcs as f64).sqrt().ceil() as usize).max(10),
            eps: scale * (1e-14 * nodes as f64).max(1e-12),
            in_arc: 0,
            join: 0,
            u_in: 0,
            v_in: 0,
            u_out: 0,
            delta: 0.0,
        };
        s.thread[root] = 0;
        s.rev_thread[0] = root;
        s.succ_num[root] = nodes + 1;
        s.last_succ[root] = root - 1;
        for u in 0..nodes {
            let e = n_arcs + u;
            s.parent[u] = root;
            s.pred[u] = e;
            s.thread[u] = u + 1;
            s.rev_thread[u + 1] = u;
            s.succ_num[u] = 1;
            s.last_succ[u] = u;
            s.state[e] = STATE_TREE;
            if u < m {
                s.pred_dir[u] = DIR_UP;
                s.art_source[u] = u;
                s.art_target[u] = root;
                s.flow[e] = a[u];
                s.pi[u] = 0.0;
            } else {
                s.pred_dir[u] = DIR_DOWN;
                s.art_source[u] = root;
                s.art_target[u] = u;
                s.flow[e] = b[u - m];
                s.pi[u] = art_cost;
            }
        }
        s
    }

    fn source(&self, e: usize) -> usize {
        if e < self.n_arcs {
            e / self.n
        } else {
            self.art_source[e - self.n_arcs]
        }
    }

    fn target(&self, e: usize) -> usize {
        if e < self.n_arcs {
            self.m + e % self.n
        } else {
            self.art_target[e - self.n_arcs]
        }
    }

    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.n_arcs {
            self.cost[e]
        } else if self.art_source[e - self.n_arcs] == self.m + self.n {
            self.art_cost
        } else {
            0.0
        }
    }

    fn reduced_cost(&self, e: usize) -> f64 {
        self.arc_cost(e) + self.pi[self.source(e)] - self.pi[self.target(e)]
    }

    /// Block search pricing over the real arcs.
    fn find_entering_arc(&mut self) -> bool {
        let mut min = -self.eps;
        let mut found = NONE;
        let mut cnt = self.block_size;
        let total = self.n_arcs;
        let mut e = self.next_arc;
        for _ in 0..total {
            let c = self.state[e] as f64 * self.reduced_cost(e);
            if c < min {
                min = c;
                found = e;
            }
            e += 1;
            if e == total {
                e = 0;
            }
            cnt -= 1;
            if cnt == 0 {
                if found != NONE {
                    break;
                }
                cnt = self.block_size;
            }
        }
        if found == NONE {
            return false;
        }
        self.in_arc = found;
        self.next_arc = e;
        true
    }

    fn find_join_node(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    /// Strongly feasible leaving-arc selection; returns false when the cycle
    /// is unbounded.
    fn find_leaving_arc(&mut self) -> bool {
        // all non-tree arcs sit at their lower bound (uncapacitated network)
        let first = self.source(self.in_arc);
        let second = self.target(self.in_arc);
        let mut delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            let e = self.pred[u];
            if self.pred_dir[u] == DIR_UP {
                let d = self.flow[e];
                if d < delta {
                    delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != self.join {
            let e = self.pred[u];
            if self.pred_dir[u] == DIR_DOWN {
                let d = self.flow[e];
                if d <= delta {
                    delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        self.delta = delta;
        result != 0
    }

    fn change_flow(&mut self) {
        let val = self.delta;
        if val > 0.0 && val.is_finite() {
            self.flow[self.in_arc] += val;
            let mut u = self.source(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] -= self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
            let mut u = self.target(self.in_arc);
            while u != self.join {
                let e = self.pred[u];
                self.flow[e] += self.pred_dir[u] as f64 * val;
                u = self.parent[u];
            }
        }
        self.state[self.in_arc] = STATE_TREE;
        let out = self.pred[self.u_out];
        self.state[out] = STATE_LOWER;
        self.flow[out] = 0.0;
    }

    fn update_tree_structure(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source(self.in_arc) { DIR_UP } else { DIR_DOWN };
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue = if old_rev_thread == v_in {
                self.thread[old_last_succ]
            } else {
                self.thread[v_in]
            };

            // re-hang the stem u_in → … → u_out under v_in
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);

                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;

                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;

            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }
            for i in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[i];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }

            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                // succ_num[u] − succ_num[p] is negative; accumulate signed
                tmp_sc = (tmp_sc as isize + self.succ_num[u] as isize - self.succ_num[p] as isize) as usize;
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = self.in_arc;
            self.pred_dir[u_in] = if u_in == self.source(self.in_arc) { DIR_UP } else { DIR_DOWN };
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }

        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }

        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let sigma = self.pi[self.v_in] - self.pi[self.u_in] - self.pred_dir[self.u_in] as f64 * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[self.u_in]];
        let mut u = self.u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }

    /// Recomputes all potentials from the tree, removing drift accumulated
    /// by incremental updates.
    fn refresh_potentials(&mut self) {
        let root = self.m + self.n;
        self.pi[root] = 0.0;
        let mut u = self.thread[root];
        while u != root {
            let e = self.pred[u];
            let p = self.parent[u];
            self.pi[u] = self.pi[p] - self.pred_dir[u] as f64 * self.arc_cost(e);
            u = self.thread[u];
        }
    }

    fn run(&mut self, max_pivots: usize) -> Result<usize> {
        let mut pivots = 0;
        let mut refreshed = false;
        loop {
            if !self.find_entering_arc() {
                if refreshed {
                    break;
                }
                // confirm optimality with drift-free potentials
                self.refresh_potentials();
                refreshed = true;
                continue;
            }
            refreshed = false;
            self.find_join_node();
            if !self.find_leaving_arc() {
                return Err(Error::Numerical("transport problem is unbounded".into()));
            }
            self.change_flow();
            self.update_tree_structure();
            self.update_potential();
            pivots += 1;
            if pivots >= max_pivots {
                return Err(Error::Numerical(format!("network simplex exceeded {max_pivots} pivots")));
            }
        }
        Ok(pivots)
    }
}

/// Exact `min Σ P_ik C_ik` over plans with row sums `a` and column sums `b`
/// (both summing to one), for an `m × n` cost matrix `cost`.
pub fn transport(a: &[f64], b: &[f64], cost: ArrayView2<f64>) -> Result<TransportSolution> {
    let (m, n) = cost.dim();
    if a.len() != m || b.len() != n {
        return Err(Error::dims(format!(
            "{}×{} costs for {} sources and {} sinks",
            m,
            n,
            a.len(),
            b.len()
        )));
    }
    if m == 0 || n == 0 {
        return Err(Error::param("transport needs nonempty supports"));
    }
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    if a.iter().chain(b).any(|&v| !(v >= 0.0)) || (sa - sb).abs() > 1e-9 * sa.max(sb) {
        return Err(Error::param("transport masses must be nonnegative and balanced"));
    }
    // balance exactly so every basic flow is well defined
    let b: Vec<f64> = b.iter().map(|&v| v * sa / sb).collect();
    let flat: Vec<f64> = cost.iter().copied().collect();
    let mut simplex = Simplex::new(a, &b, &flat);
    let max_pivots = 1000 * (m + n) + 1_000_000;
    let pivots = simplex.run(max_pivots)?;

    let art_left: f64 = simplex.flow[simplex.n_arcs..].iter().sum();
    if art_left > 1e-9 * sa {
        return Err(Error::Numerical(format!(
            "transport left {art_left:.3e} mass on artificial arcs"
        )));
    }

    let mut plan = Vec::new();
    let mut primal = 0.0;
    for e in 0..simplex.n_arcs {
        let f = simplex.flow[e];
        if f > 0.0 {
            primal += f * flat[e];
            plan.push((e / n, e % n, f));
        }
    }
    // u_i = −π_i, v_k = π_k gives u_i + v_k ≤ C_ik at optimality
    let mut dual = 0.0;
    for i in 0..m {
        dual -= a[i] * simplex.pi[i];
    }
    for k in 0..n {
        dual += b[k] * simplex.pi[m + k];
    }
    let mut violation = 0.0f64;
    for e in 0..simplex.n_arcs {
        violation = violation.max(-simplex.reduced_cost(e));
    }
    Ok(TransportSolution {
        cost: primal,
        dual,
        dual_violation: violation,
        plan,
        pivots,
    })
}

/// Entropy-regularized transport cost by log-domain Sinkhorn iterations.
/// `epsilon` is relative to the largest cost; the result is the transport
/// cost `Σ P C` of the regularized plan, an upper bound on the exact value.
pub fn sinkhorn(a: &[f64], b: &[f64], cost: ArrayView2<f64>, epsilon: f64, max_iters: usize) -> Result<f64> {
    let (m, n) = cost.dim();
    if a.len() != m || b.len() != n {
        return Err(Error::dims("Sinkhorn masses do not match the cost matrix"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::param("Sinkhorn epsilon must be positive"));
    }
    let scale = cost.iter().fold(0.0f64, |x, &c| x.max(c.abs()));
    let eps = epsilon * if scale > 0.0 { scale } else { 1.0 };
    let ln_a: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let ln_b: Vec<f64> = b.iter().map(|v| v.ln()).collect();
    let mut f = vec![0.0; m];
    let mut g = vec![0.0; n];
    let lse = |vals: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = vals.collect();
        let mx = v.iter().fold(f64::NEG_INFINITY, |x, &y| x.max(y));
        if mx == f64::NEG_INFINITY {
            return mx;
        }
        mx + v.iter().map(|&y| (y - mx).exp()).sum::<f64>().ln()
    };
    for _ in 0..max_iters {
        let mut change = 0.0f64;
        for i in 0..m {
            let next = eps * ln_a[i] - eps * lse(&mut (0..n).map(|k| (g[k] - cost[[i, k]]) / eps));
            change = change.max((next - f[i]).abs());
            f[i] = next;
        }
        for k in 0..n {
            let next = eps * ln_b[k] - eps * lse(&mut (0..m).map(|i| (f[i] - cost[[i, k]]) / eps));
            change = change.max((next - g[k]).abs());
            g[k] = next;
        }
        if change < 1e-12 * eps.max(1.0) {
            break;
        }
    }
    let mut total = 0.0;
    for i in 0..m {
        for k in 0..n {
            total += ((f[i] + g[k] - cost[[i, k]]) / eps).exp() * cost[[i, k]];
        }
    }
    Ok(total)
}
