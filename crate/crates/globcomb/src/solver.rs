//! Low-level optimisation kernels.
//!
//! Everything downstream reduces to one canonical objective
//!
//! ```text
//!     minimize   w' Q w  -  2 c' w        (plus an optional ridge on Q)
//! ```
//!
//! over one of three constraint families: the affine hyperplane `1'w = 1`
//! (solved by a KKT linear system), the probability simplex (accelerated
//! projected gradient), and the equal-weight subset family `w = z / (1'z)`,
//! `z ∈ {0,1}^p` (exact enumeration, branch-and-bound, or local search).

use nalgebra::{DMatrix, DVector};
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};
use thiserror::Error;

/// Largest subset-selection dimension accepted by exact enumeration.
pub const EXACT_ENUM_MAX_P: usize = 20;

/// Defaults for the simplex QP solver.
pub const SIMPLEX_QP_TOL: f64 = 1e-9;
pub const SIMPLEX_QP_MAX_ITER: usize = 50_000;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("quadratic term is not symmetric within tolerance (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("KKT system is singular; increase the ridge parameter")]
    SingularKkt,
    #[error("simplex QP did not converge in {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last_iterate: DVector<f64>,
    },
    #[error("exact subset enumeration limited to p <= {max}, got p = {p}")]
    ExactTooLarge { p: usize, max: usize },
    #[error("dimension mismatch between Q ({0}) and c ({1})")]
    Dimension(usize, usize),
    #[error("problem dimension must be at least 1")]
    EmptyProblem,
}

/// Canonical quadratic objective `w'Qw − 2c'w`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    q: DMatrix<f64>,
    c: DVector<f64>,
}

impl QuadraticObjective {
    pub fn new(q: DMatrix<f64>, c: DVector<f64>) -> Result<Self, SolverError> {
        if q.nrows() == 0 {
            return Err(SolverError::EmptyProblem);
        }
        if q.nrows() != c.len() {
            return Err(SolverError::Dimension(q.nrows(), c.len()));
        }
        let scale = q.iter().fold(0.0f64, |a, &x| a.max(x.abs())).max(1.0);
        let mut worst = 0.0f64;
        for i in 0..q.nrows() {
            for j in (i + 1)..q.ncols() {
                worst = worst.max((q[(i, j)] - q[(j, i)]).abs());
            }
        }
        if worst > 1e-10 * scale {
            return Err(SolverError::NotSymmetric(worst));
        }
        Ok(Self { q, c })
    }

    /// Objective with zero linear term.
    pub fn quadratic_only(q: DMatrix<f64>) -> Result<Self, SolverError> {
        let p = q.nrows();
        Self::new(q, DVector::zeros(p))
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    /// `w'(Q + ridge·I)w − 2c'w`.
    pub fn value(&self, w: &DVector<f64>, ridge: f64) -> f64 {
        let qw = &self.q * w;
        w.dot(&qw) + ridge * w.dot(w) - 2.0 * self.c.dot(w)
    }

    /// Gradient `2(Q + ridge·I)w − 2c`.
    pub fn gradient(&self, w: &DVector<f64>, ridge: f64) -> DVector<f64> {
        (&self.q * w + w * ridge - &self.c) * 2.0
    }

    /// Objective value of the equal-weight vector on subset `z` (as bitmask).
    fn subset_value(&self, z: u64, ridge: f64) -> f64 {
        let s = z.count_ones() as f64;
        let mut quad = 0.0;
        let mut lin = 0.0;
        let p = self.dim();
        for i in 0..p {
            if z >> i & 1 == 0 {
                continue;
            }
            lin += self.c[i];
            for j in 0..p {
                if z >> j & 1 == 1 {
                    quad += self.q[(i, j)];
                }
            }
        }
        quad / (s * s) + ridge / s - 2.0 * lin / s
    }
}

/// Minimiser of `w'(Q+ridge·I)w − 2c'w` subject to `1'w = 1`, via the KKT system.
pub fn solve_eq_qp(obj: &QuadraticObjective, ridge: f64) -> Result<DVector<f64>, SolverError> {
    let p = obj.dim();
    let mut kkt = DMatrix::zeros(p + 1, p + 1);
    for i in 0..p {
        for j in 0..p {
            kkt[(i, j)] = 2.0 * obj.q[(i, j)];
        }
        kkt[(i, i)] += 2.0 * ridge;
        kkt[(i, p)] = 1.0;
        kkt[(p, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(p + 1);
    for i in 0..p {
        rhs[i] = 2.0 * obj.c[i];
    }
    rhs[p] = 1.0;
    let lu = kkt.clone().full_piv_lu();
    let sol = lu.solve(&rhs).ok_or(SolverError::SingularKkt)?;
    let residual = (&kkt * &sol - &rhs).norm();
    let scale = (kkt.norm() * sol.norm() + rhs.norm()).max(1.0);
    if residual > 1e-9 * scale {
        return Err(SolverError::SingularKkt);
    }
    Ok(sol.rows(0, p).into_owned())
}

/// Euclidean projection onto the probability simplex, by Condat's sort-free
/// active-candidate scan.
pub fn project_simplex(y: &DVector<f64>) -> DVector<f64> {
    let p = y.len();
    debug_assert!(p >= 1);
    let mut active: Vec<f64> = Vec::with_capacity(p);
    let mut waiting: Vec<f64> = Vec::with_capacity(p);
    active.push(y[0]);
    let mut rho = y[0] - 1.0;
    for n in 1..p {
        let yn = y[n];
        if yn > rho {
            rho += (yn - rho) / (active.len() + 1) as f64;
            if rho > yn - 1.0 {
                active.push(yn);
            } else {
                waiting.append(&mut active);
                active.push(yn);
                rho = yn - 1.0;
            }
        }
    }
    for &w in &waiting {
        if w > rho {
            active.push(w);
            rho += (w - rho) / active.len() as f64;
        }
    }
    loop {
        let before = active.len();
        let mut i = 0;
        while i < active.len() {
            if active[i] <= rho {
                let v = active.swap_remove(i);
                let n = active.len() as f64;
                rho += (rho - v) / n;
            } else {
                i += 1;
            }
        }
        if active.len() == before {
            break;
        }
    }
    let tau = rho;
    DVector::from_iterator(p, y.iter().map(|&x| (x - tau).max(0.0)))
}

/// Largest eigenvalue estimate by power iteration (100 iterations).
fn power_iteration_lmax(q: &DMatrix<f64>, ridge: f64) -> f64 {
    let p = q.nrows();
    let mut x = DVector::from_element(p, 1.0 / (p as f64).sqrt());
    // deterministic perturbation so we do not start orthogonal to the top eigenvector
    for i in 0..p {
        x[i] += 1e-3 * ((i % 7) as f64 - 3.0);
    }
    let mut lmax = ridge;
    for _ in 0..100 {
        let mut y = q * &x;
        y += &x * ridge;
        let n = y.norm();
        if n == 0.0 {
            return ridge.max(1e-30);
        }
        lmax = x.dot(&y).abs().max(1e-30);
        x = y / n;
    }
    lmax
}

/// Minimiser of `w'(Q+ridge·I)w − 2c'w` over the probability simplex by
/// accelerated projected gradient (step `1/L`, restart on non-monotonicity).
/// First-order optimality is certified by a projected-gradient norm
/// `<= tol · max(1, L·‖w‖)`; the relative factor keeps the certificate
/// reachable when the curvature `L` dwarfs the unit-scale iterate (the
/// projected-gradient norm itself scales with `L`, so its floating-point
/// floor does too).
pub fn solve_simplex_qp(
    obj: &QuadraticObjective,
    ridge: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>, SolverError> {
    let p = obj.dim();
    if p == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let lmax = power_iteration_lmax(&obj.q, ridge).max(1e-12);
    let step = 1.0 / (2.0 * lmax); // gradient carries the factor 2
    let mut w = DVector::from_element(p, 1.0 / p as f64);
    let mut y = w.clone();
    let mut t_mom = 1.0f64;
    let mut f_prev = obj.value(&w, ridge);
    let mut residual = f64::INFINITY;
    for it in 0..max_iter {
        let grad = obj.gradient(&y, ridge);
        let w_next = project_simplex(&(&y - &grad * step));
        let f_next = obj.value(&w_next, ridge);
        if f_next > f_prev {
            // restart momentum from the last accepted point
            t_mom = 1.0;
            y = w.clone();
            let grad = obj.gradient(&y, ridge);
            let w_rst = project_simplex(&(&y - &grad * step));
            let f_rst = obj.value(&w_rst, ridge);
            w = w_rst;
            f_prev = f_rst;
            y = w.clone();
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_mom * t_mom).sqrt());
            y = &w_next + (&w_next - &w) * ((t_mom - 1.0) / t_next);
            w = w_next;
            t_mom = t_next;
            f_prev = f_next;
        }
        // projected-gradient optimality measure at the current iterate
        let grad_w = obj.gradient(&w, ridge);
        let pg = (&w - project_simplex(&(&w - &grad_w * step))) / step;
        residual = pg.norm();
        if residual <= tol * (2.0 * lmax * w.norm()).max(1.0) {
            return Ok(w);
        }
        let _ = it;
    }
    Err(SolverError::NonConvergence { iterations: max_iter, residual, last_iterate: w })
}

/// Strategy for equal-weight subset selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsetMode {
    Exact,
    BranchBound,
    LocalSearch,
}

/// An equal-weight subset solution: `w = z / s` with `s = 1'z >= 1`.
#[derive(Debug, Clone)]
pub struct SubsetSolution {
    pub z: Vec<bool>,
    pub s: usize,
    pub w: DVector<f64>,
    pub objective_value: f64,
    /// False when a branch-and-bound run hit its time limit before proving
    /// optimality; the incumbent is still returned.
    pub certified: bool,
}

impl SubsetSolution {
    fn from_mask(obj: &QuadraticObjective, mask: u64, ridge: f64, certified: bool) -> Self {
        let p = obj.dim();
        let s = mask.count_ones() as usize;
        let w = DVector::from_iterator(
            p,
            (0..p).map(|i| if mask >> i & 1 == 1 { 1.0 / s as f64 } else { 0.0 }),
        );
        SubsetSolution {
            z: (0..p).map(|i| mask >> i & 1 == 1).collect(),
            s,
            w,
            objective_value: obj.subset_value(mask, ridge),
            certified,
        }
    }
}

/// Tie-break: prefer smaller objective; within 1e-12, smaller s, then
/// lexicographically smallest z (coordinate 0 most significant).
fn subset_better(obj_a: f64, mask_a: u64, obj_b: f64, mask_b: u64, p: usize) -> bool {
    if obj_a < obj_b - 1e-12 {
        return true;
    }
    if obj_a > obj_b + 1e-12 {
        return false;
    }
    let (sa, sb) = (mask_a.count_ones(), mask_b.count_ones());
    if sa != sb {
        return sa < sb;
    }
    for i in 0..p {
        let (a, b) = (mask_a >> i & 1, mask_b >> i & 1);
        if a != b {
            // lexicographically smallest: a 0 earlier is smaller
            return a < b;
        }
    }
    false
}

struct BbNode {
    bound: f64,
    fixed_in: u64,
    fixed_out: u64,
    depth: usize,
}

impl PartialEq for BbNode {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound
    }
}
impl Eq for BbNode {}
impl PartialOrd for BbNode {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for BbNode {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // min-heap by bound; break ties by depth then masks for determinism
        other
            .bound
            .partial_cmp(&self.bound)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(other.depth.cmp(&self.depth))
            .then(other.fixed_in.cmp(&self.fixed_in))
            .then(other.fixed_out.cmp(&self.fixed_out))
    }
}

/// Minimises `w'(Q+ridge·I)w − 2c'w` over the equal-weight subset family.
pub fn solve_equal_subset(
    obj: &QuadraticObjective,
    ridge: f64,
    mode: SubsetMode,
    time_limit: Duration,
) -> Result<SubsetSolution, SolverError> {
    let p = obj.dim();
    match mode {
        SubsetMode::Exact => {
            if p > EXACT_ENUM_MAX_P {
                return Err(SolverError::ExactTooLarge { p, max: EXACT_ENUM_MAX_P });
            }
            let mut best: Option<(f64, u64)> = None;
            for mask in 1u64..(1u64 << p) {
                let v = obj.subset_value(mask, ridge);
                match best {
                    None => best = Some((v, mask)),
                    Some((bv, bm)) => {
                        if subset_better(v, mask, bv, bm, p) {
                            best = Some((v, mask));
                        }
                    }
                }
            }
            let (_, mask) = best.unwrap();
            Ok(SubsetSolution::from_mask(obj, mask, ridge, true))
        }
        SubsetMode::LocalSearch => Ok(local_search(obj, ridge)),
        SubsetMode::BranchBound => branch_bound(obj, ridge, time_limit),
    }
}

fn local_search(obj: &QuadraticObjective, ridge: f64) -> SubsetSolution {
    let p = obj.dim();
    // starts: best single forecaster and the full set
    let mut best_single = 1u64;
    let mut best_single_val = obj.subset_value(1, ridge);
    for i in 1..p {
        let m = 1u64 << i;
        let v = obj.subset_value(m, ridge);
        if subset_better(v, m, best_single_val, best_single, p) {
            best_single = m;
            best_single_val = v;
        }
    }
    let full = if p == 64 { u64::MAX } else { (1u64 << p) - 1 };
    let mut best: Option<(f64, u64)> = None;
    for start in [best_single, full] {
        let (v, m) = hill_climb(obj, ridge, start, p);
        match best {
            None => best = Some((v, m)),
            Some((bv, bm)) => {
                if subset_better(v, m, bv, bm, p) {
                    best = Some((v, m));
                }
            }
        }
    }
    let (_, mask) = best.unwrap();
    SubsetSolution::from_mask(obj, mask, ridge, false)
}

fn hill_climb(obj: &QuadraticObjective, ridge: f64, start: u64, p: usize) -> (f64, u64) {
    let mut cur = start;
    let mut cur_val = obj.subset_value(cur, ridge);
    loop {
        let mut improved = false;
        let mut cand: Option<(f64, u64)> = None;
        let consider = |cand: &mut Option<(f64, u64)>, m: u64, v: f64| {
            match *cand {
                None => *cand = Some((v, m)),
                Some((bv, bm)) => {
                    if subset_better(v, m, bv, bm, p) {
                        *cand = Some((v, m));
                    }
                }
            }
        };
        for i in 0..p {
            let bit = 1u64 << i;
            if cur & bit == 0 {
                let m = cur | bit; // add
                consider(&mut cand, m, obj.subset_value(m, ridge));
            } else if cur.count_ones() > 1 {
                let m = cur & !bit; // drop
                consider(&mut cand, m, obj.subset_value(m, ridge));
            }
        }
        for i in 0..p {
            let bi = 1u64 << i;
            if cur & bi == 0 {
                continue;
            }
            for j in 0..p {
                let bj = 1u64 << j;
                if cur & bj != 0 {
                    continue;
                }
                let m = (cur & !bi) | bj; // swap
                consider(&mut cand, m, obj.subset_value(m, ridge));
            }
        }
        if let Some((v, m)) = cand {
            if v < cur_val - 1e-12 {
                cur = m;
                cur_val = v;
                improved = true;
            }
        }
        if !improved {
            return (cur_val, cur);
        }
    }
}

/// Lower bound for a node: the simplex QP over the coordinates not fixed out.
/// Valid because the equal-weight family restricted to those coordinates is a
/// subset of the simplex restricted to them.
fn node_bound(obj: &QuadraticObjective, ridge: f64, fixed_out: u64) -> Result<(f64, DVector<f64>), SolverError> {
    let p = obj.dim();
    let free: Vec<usize> = (0..p).filter(|&i| fixed_out >> i & 1 == 0).collect();
    let n = free.len();
    if n == 0 {
        return Ok((f64::INFINITY, DVector::zeros(0)));
    }
    let mut q = DMatrix::zeros(n, n);
    let mut c = DVector::zeros(n);
    for (a, &i) in free.iter().enumerate() {
        c[a] = obj.c[i];
        for (b, &j) in free.iter().enumerate() {
            q[(a, b)] = obj.q[(i, j)];
        }
    }
    let sub = QuadraticObjective::new(q, c)?;
    let w = match solve_simplex_qp(&sub, ridge, 1e-8, 20_000) {
        Ok(w) => w,
        Err(SolverError::NonConvergence { last_iterate, .. }) => last_iterate,
        Err(e) => return Err(e),
    };
    let val = sub.value(&w, ridge);
    // scatter back to full length for branching decisions
    let mut full_w = DVector::zeros(p);
    for (a, &i) in free.iter().enumerate() {
        full_w[i] = w[a];
    }
    // subtract a small slack so approximate solves never over-prune
    Ok((val - 1e-9 * (1.0 + val.abs()), full_w))
}

fn branch_bound(
    obj: &QuadraticObjective,
    ridge: f64,
    time_limit: Duration,
) -> Result<SubsetSolution, SolverError> {
    let p = obj.dim();
    let start = Instant::now();
    let full = if p == 64 { u64::MAX } else { (1u64 << p) - 1 };

    let mut incumbent: Option<(f64, u64)> = None;
    let update = |obj: &QuadraticObjective, inc: &mut Option<(f64, u64)>, mask: u64| {
        if mask == 0 {
            return;
        }
        let v = obj.subset_value(mask, ridge);
        match *inc {
            None => *inc = Some((v, mask)),
            Some((bv, bm)) => {
                if subset_better(v, mask, bv, bm, p) {
                    *inc = Some((v, mask));
                }
            }
        }
    };

    let (root_bound, root_w) = node_bound(obj, ridge, 0)?;
    update(obj, &mut incumbent, full);
    update(obj, &mut incumbent, round_support(&root_w));

    let mut heap = BinaryHeap::new();
    heap.push(BbNode { bound: root_bound, fixed_in: 0, fixed_out: 0, depth: 0 });

    let mut certified = true;
    while let Some(node) = heap.pop() {
        let (inc_val, _) = incumbent.unwrap();
        // keep exploring ties so the deterministic tie-break sees them
        if node.bound > inc_val + 1e-12 {
            break; // best-first: every remaining node is at least as bad
        }
        if start.elapsed() > time_limit {
            certified = false;
            break;
        }
        let free = full & !node.fixed_in & !node.fixed_out;
        if free == 0 {
            update(obj, &mut incumbent, node.fixed_in);
            continue;
        }
        let (_, relaxed_w) = node_bound(obj, ridge, node.fixed_out)?;
        update(obj, &mut incumbent, node.fixed_in | round_support(&relaxed_w));
        update(obj, &mut incumbent, node.fixed_in | free);
        if node.fixed_in != 0 {
            update(obj, &mut incumbent, node.fixed_in);
        }

        let branch = pick_branch_var(&relaxed_w, free, p);
        let bit = 1u64 << branch;
        // child 1: forced in
        let in_child = BbNode {
            bound: node.bound, // bound unchanged: relaxation cannot force inclusion
            fixed_in: node.fixed_in | bit,
            fixed_out: node.fixed_out,
            depth: node.depth + 1,
        };
        heap.push(in_child);
        // child 2: forced out (tightens the relaxation), unless it empties the subset
        let out_mask = node.fixed_out | bit;
        if full & !out_mask != 0 {
            let (b, _) = node_bound(obj, ridge, out_mask)?;
            let (inc_val, _) = incumbent.unwrap();
            if b <= inc_val + 1e-12 {
                heap.push(BbNode {
                    bound: b.max(node.bound),
                    fixed_in: node.fixed_in,
                    fixed_out: out_mask,
                    depth: node.depth + 1,
                });
            }
        }
    }

    let (_, mask) = incumbent.unwrap();
    Ok(SubsetSolution::from_mask(obj, mask, ridge, certified))
}

/// Support of the relaxed solution, used to round incumbents.
fn round_support(w: &DVector<f64>) -> u64 {
    let mut mask = 0u64;
    for i in 0..w.len() {
        if w[i] > 1e-8 {
            mask |= 1 << i;
        }
    }
    mask
}

/// Branch on the free coordinate whose relaxed weight (relative to the
/// largest) is closest to one half.
fn pick_branch_var(relaxed_w: &DVector<f64>, free: u64, p: usize) -> usize {
    let wmax = (0..p)
        .filter(|&i| free >> i & 1 == 1)
        .map(|i| relaxed_w[i])
        .fold(0.0f64, f64::max)
        .max(1e-30);
    let mut best = None;
    let mut best_score = f64::INFINITY;
    for i in 0..p {
        if free >> i & 1 == 0 {
            continue;
        }
        let score = (relaxed_w[i] / wmax - 0.5).abs();
        if score < best_score - 1e-15 {
            best_score = score;
            best = Some(i);
        }
    }
    best.unwrap()
}
