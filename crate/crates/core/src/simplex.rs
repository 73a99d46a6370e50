//! Dense revised-simplex solver for bounded-variable linear programs.
//!
//! This is the relaxation engine behind the branch-and-bound solver: every
//! node relaxation — including all outer-approximation rows — is a pure LP
//! in the form
//!
//! ```text
//! minimize c·x   subject to   A x {≤, =, ≥} b,   lo ≤ x ≤ hi.
//! ```
//!
//! Rows are canonicalized to `≤`/`=` and given slack variables; a phase-1
//! pass with explicit artificial columns establishes a feasible basis, and
//! phase 2 optimizes the true objective. The basis inverse is kept densely
//! and updated by elementary row operations, with periodic refactorization
//! guarding against drift. Pricing is Dantzig (most violating reduced cost)
//! with an automatic switch to Bland's rule after a degenerate stall, so
//! cycling terminates. All tie-breaks go to the smallest column index,
//! making runs deterministic.
//!
//! Model variables are always boxed by construction upstream, so an
//! unbounded direction is reported as a numeric error, not an outcome.

use crate::error::{Error, Result};

/// Constraint sense of a row.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// One sparse constraint row `Σ coef·x {sense} rhs`.
#[derive(Clone, Debug)]
pub struct Row {
    pub coefs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A bounded-variable LP in minimization form.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    /// Objective coefficients, one per structural variable.
    pub objective: Vec<f64>,
    /// Lower bounds (finite, or `-∞` if the upper bound is finite).
    pub lower: Vec<f64>,
    /// Upper bounds (finite, or `+∞` if the lower bound is finite).
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
}

/// Result of a solve: a proven optimum or proven infeasibility.
#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { value: f64, x: Vec<f64> },
    Infeasible,
}

const OPT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const RATIO_EPS: f64 = 1e-10;
const RATIO_TIE: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-11;
const STALL_LIMIT: u32 = 64;
const REFACTOR_EVERY: u32 = 64;
/// Rounds of the repair-and-reprice loop that closes out each phase.
const VERIFY_ROUNDS: u32 = 6;
/// Iterative-refinement rounds for solves against the cached inverse. The
/// outer-approximation rows can make the basis ill-conditioned enough that
/// a plain inverse multiply carries visible error; refinement converges
/// whenever `cond(B)·ε` is below one, which these models satisfy by a wide
/// margin.
const REFINE_ROUNDS: u32 = 3;
/// Refactorization interval of the conservative retry: pivot candidates are
/// judged against a near-fresh inverse, so a stale `α` cannot smuggle a
/// numerically dependent column into the basis.
const CONSERVATIVE_REFACTOR_EVERY: u32 = 8;
/// After rolling back a singular basis, refactorize on every pivot for this
/// many pivots so the offending pivot is re-judged with honest values.
const HONEST_WINDOW: u32 = 32;
const ITERATION_CAP: u64 = 200_000;

impl LinearProgram {
    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Inconsistent(
                "objective and bound vectors differ in length".into(),
            ));
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::Numeric(format!("bad bounds [{lo}, {hi}] on column {j}")));
            }
            if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
                return Err(Error::Numeric(format!("free column {j} is unsupported")));
            }
            if !self.objective[j].is_finite() {
                return Err(Error::Numeric(format!("non-finite objective on column {j}")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(Error::Numeric(format!("non-finite rhs on row {i}")));
            }
            for &(j, coef) in &row.coefs {
                if j >= n {
                    return Err(Error::IndexOutOfRange {
                        what: "row column index",
                        value: j,
                        max: n - 1,
                    });
                }
                if !coef.is_finite() {
                    return Err(Error::Numeric(format!("non-finite coefficient in row {i}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
}

/// Shared pivoting state for both phases.
struct Tableau {
    /// Sparse columns over row indices; structurals, then slacks, then
    /// artificials.
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Right-hand sides of the canonicalized (`≤`/`=`) equality system.
    rhs: Vec<f64>,
    status: Vec<VarStatus>,
    /// Basic column per row.
    basis: Vec<usize>,
    /// Values of the basic variables, aligned with `basis`.
    beta: Vec<f64>,
    /// Dense basis inverse.
    binv: Vec<Vec<f64>>,
    n_structural: usize,
    pivots_since_refactor: u32,
    refactor_every: u32,
    iterations: u64,
    stall: u32,
    bland: bool,
    /// Basis and statuses at the last successful refactorization, the
    /// rollback point when drift lets a dependent column into the basis.
    checkpoint: Option<(Vec<usize>, Vec<VarStatus>)>,
    /// Remaining pivots of the per-pivot refactorization window that
    /// follows a rollback.
    honest_left: u32,
    rollbacks: u32,
}

impl Tableau {
    fn num_rows(&self) -> usize {
        self.basis.len()
    }

    /// Value of a nonbasic column (its active bound).
    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.status[j] {
            VarStatus::AtLower => self.lower[j],
            VarStatus::AtUpper => self.upper[j],
            VarStatus::Basic => unreachable!("nonbasic query on a basic column"),
        }
    }

    /// Rebuilds the dense basis inverse and the basic values from scratch.
    fn refactor(&mut self) -> Result<()> {
        let m = self.num_rows();
        // Gauss-Jordan inversion of the basis matrix with partial pivoting.
        let mut work = vec![vec![0.0f64; m]; m];
        for (pos, &col) in self.basis.iter().enumerate() {
            for &(row, coef) in &self.cols[col] {
                work[row][pos] = coef;
            }
        }
        let mut inv = vec![vec![0.0f64; m]; m];
        for (i, row) in inv.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for col in 0..m {
            let pivot_row = (col..m)
                .max_by(|&a, &b| {
                    work[a][col]
                        .abs()
                        .partial_cmp(&work[b][col].abs())
                        .expect("finite pivots")
                })
                .expect("nonempty pivot range");
            if work[pivot_row][col].abs() < 1e-11 {
                return Err(Error::Numeric("singular basis during refactorization".into()));
            }
            work.swap(col, pivot_row);
            inv.swap(col, pivot_row);
            let piv = work[col][col];
            for x in &mut work[col] {
                *x /= piv;
            }
            for x in &mut inv[col] {
                *x /= piv;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let factor = work[r][col];
                if factor == 0.0 {
                    continue;
                }
                for c in 0..m {
                    work[r][c] -= factor * work[col][c];
                    inv[r][c] -= factor * inv[col][c];
                }
            }
        }
        self.binv = inv;
        // beta = B⁻¹ (rhs − A_N x_N).
        let mut residual = self.rhs.clone();
        for j in 0..self.cols.len() {
            if self.status[j] == VarStatus::Basic {
                continue;
            }
            let v = self.nonbasic_value(j);
            if v == 0.0 {
                continue;
            }
            for &(row, coef) in &self.cols[j] {
                residual[row] -= coef * v;
            }
        }
        let (fresh, resid) = self.solve_basis(&residual);
        if resid > 1e-7 {
            // The inverse fails to reproduce the basic values even with
            // refinement: the basis is singular for practical purposes.
            return Err(Error::Numeric("numerically singular basis".into()));
        }
        if std::env::var_os("BNB_TRACE").is_some() {
            let jump = fresh
                .iter()
                .zip(&self.beta)
                .map(|(f, b)| (f - b).abs())
                .fold(0.0f64, f64::max);
            if jump > 1e-6 {
                eprintln!(
                    "REFACTOR JUMP {jump:.3e} after {} pivots (iter {})",
                    self.pivots_since_refactor, self.iterations
                );
            }
        }
        self.beta = fresh;
        self.pivots_since_refactor = 0;
        Ok(())
    }

    /// Refactorizes, rolling back to the last checkpoint when the recorded
    /// basis has gone singular (inverse drift can let an exactly dependent
    /// column pass the ratio test at a degenerate vertex). After a rollback
    /// the next [`HONEST_WINDOW`] pivots refactorize every step, so the bad
    /// pivot is re-judged against honest values and rejected.
    fn reinvert(&mut self) -> Result<()> {
        match self.refactor() {
            Ok(()) => {
                self.checkpoint = Some((self.basis.clone(), self.status.clone()));
                Ok(())
            }
            Err(e) => {
                let Some((basis, status)) = self.checkpoint.clone() else {
                    return Err(e);
                };
                self.basis = basis;
                self.status = status;
                self.refactor()?;
                self.honest_left = HONEST_WINDOW;
                self.rollbacks += 1;
                Ok(())
            }
        }
    }

    /// Worst bound violation over the basic variables.
    fn max_basic_violation(&self) -> f64 {
        self.basis
            .iter()
            .zip(&self.beta)
            .map(|(&c, &b)| (self.lower[c] - b).max(b - self.upper[c]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Drives basic variables that drifted outside their bounds back into
    /// range. Degenerate pivots snap a slightly infeasible leaving variable
    /// onto its bound, and an ill-conditioned basis can amplify that snap
    /// into a large residual at the next refactorization; pricing alone
    /// never notices, because it checks only reduced costs. The repair
    /// relaxes each violated bound to the current value and minimizes an
    /// auxiliary cost that pulls the violators back, then restores the true
    /// bounds.
    fn repair_feasibility(&mut self) -> Result<()> {
        let mut cost = vec![0.0f64; self.cols.len()];
        let mut saved: Vec<(usize, f64, f64)> = Vec::new();
        for (&col, &value) in self.basis.iter().zip(&self.beta) {
            if value < self.lower[col] - FEAS_TOL {
                saved.push((col, self.lower[col], self.upper[col]));
                self.lower[col] = value;
                cost[col] = -1.0;
            } else if value > self.upper[col] + FEAS_TOL {
                saved.push((col, self.lower[col], self.upper[col]));
                self.upper[col] = value;
                cost[col] = 1.0;
            }
        }
        if saved.is_empty() {
            return Ok(());
        }
        let run = self.optimize(&cost);
        for (col, lo, hi) in saved {
            self.lower[col] = lo;
            self.upper[col] = hi;
        }
        run
    }

    /// Closes out a phase: refactorizes, repairs any basic-bound drift, and
    /// re-prices until the basis is simultaneously primal-feasible and
    /// priced optimal for `cost`. Returns `false` when the round cap is hit
    /// without settling.
    fn settle(&mut self, cost: &[f64]) -> Result<bool> {
        for _ in 0..VERIFY_ROUNDS {
            self.reinvert()?;
            if self.max_basic_violation() > FEAS_TOL {
                self.repair_feasibility()?;
                self.reinvert()?;
                if self.max_basic_violation() > FEAS_TOL {
                    continue;
                }
            }
            let y = self.duals(cost);
            if self.price(cost, &y).is_none() {
                return Ok(true);
            }
            self.optimize(cost)?;
        }
        Ok(false)
    }

    /// B·v over the current basis columns.
    fn basis_times(&self, v: &[f64]) -> Vec<f64> {
        let m = self.num_rows();
        let mut out = vec![0.0f64; m];
        for (pos, &col) in self.basis.iter().enumerate() {
            let x = v[pos];
            if x == 0.0 {
                continue;
            }
            for &(row, coef) in &self.cols[col] {
                out[row] += coef * x;
            }
        }
        out
    }

    /// Solves `B·x = rhs` through the cached inverse, with iterative
    /// refinement to absorb inversion error on ill-conditioned bases.
    /// Returns the best iterate together with its residual norm; a residual
    /// that refuses to shrink marks the basis as numerically singular.
    fn solve_basis(&self, rhs: &[f64]) -> (Vec<f64>, f64) {
        let m = self.num_rows();
        let mut x = vec![0.0f64; m];
        for i in 0..m {
            x[i] = (0..m).map(|k| self.binv[i][k] * rhs[k]).sum();
        }
        let residual_of = |x: &[f64]| -> (Vec<f64>, f64) {
            let bx = self.basis_times(x);
            let mut r = vec![0.0f64; m];
            let mut worst = 0.0f64;
            for i in 0..m {
                r[i] = rhs[i] - bx[i];
                worst = worst.max(r[i].abs());
            }
            (r, worst)
        };
        let (mut residual, mut worst) = residual_of(&x);
        let mut best = (x.clone(), worst);
        for _ in 0..REFINE_ROUNDS {
            if worst < 1e-13 || !worst.is_finite() {
                break;
            }
            for i in 0..m {
                let delta: f64 = (0..m).map(|k| self.binv[i][k] * residual[k]).sum();
                x[i] += delta;
            }
            (residual, worst) = residual_of(&x);
            if worst < best.1 {
                best = (x.clone(), worst);
            } else {
                // Refinement is not contracting; further rounds diverge.
                break;
            }
        }
        best
    }

    /// Solves `Bᵀ·y = c_B` through the cached inverse, with refinement and
    /// the same divergence guard as [`Self::solve_basis`].
    fn solve_basis_t(&self, cb: &[f64]) -> Vec<f64> {
        let m = self.num_rows();
        let mut y = vec![0.0f64; m];
        for (pos, &c) in cb.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for i in 0..m {
                y[i] += c * self.binv[pos][i];
            }
        }
        let residual_of = |y: &[f64]| -> (Vec<f64>, f64) {
            let mut r = vec![0.0f64; m];
            let mut worst = 0.0f64;
            for (pos, &col) in self.basis.iter().enumerate() {
                let bty: f64 = self.cols[col].iter().map(|&(row, coef)| coef * y[row]).sum();
                r[pos] = cb[pos] - bty;
                worst = worst.max(r[pos].abs());
            }
            (r, worst)
        };
        let (mut residual, mut worst) = residual_of(&y);
        let mut best = (y.clone(), worst);
        for _ in 0..REFINE_ROUNDS {
            if worst < 1e-13 || !worst.is_finite() {
                break;
            }
            for i in 0..m {
                let delta: f64 = (0..m).map(|pos| residual[pos] * self.binv[pos][i]).sum();
                y[i] += delta;
            }
            (residual, worst) = residual_of(&y);
            if worst < best.1 {
                best = (y.clone(), worst);
            } else {
                break;
            }
        }
        best.0
    }

    /// α = B⁻¹·A_q for the entering column.
    fn ftran(&self, q: usize) -> Vec<f64> {
        let m = self.num_rows();
        let mut alpha = vec![0.0f64; m];
        for &(row, coef) in &self.cols[q] {
            for i in 0..m {
                alpha[i] += self.binv[i][row] * coef;
            }
        }
        alpha
    }

    /// y with `Bᵀ·y = c_B` for the given cost vector.
    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let cb: Vec<f64> = self.basis.iter().map(|&col| cost[col]).collect();
        self.solve_basis_t(&cb)
    }

    /// Chooses an entering column, or `None` at optimality.
    /// `dir = +1` means the variable increases from its lower bound.
    fn price(&self, cost: &[f64], y: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.cols.len() {
            if self.status[j] == VarStatus::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let mut reduced = cost[j];
            for &(row, coef) in &self.cols[j] {
                reduced -= y[row] * coef;
            }
            let (viol, dir) = match self.status[j] {
                VarStatus::AtLower => (-reduced, 1.0),
                VarStatus::AtUpper => (reduced, -1.0),
                VarStatus::Basic => unreachable!(),
            };
            if viol <= OPT_TOL {
                continue;
            }
            if self.bland {
                return Some((j, dir));
            }
            if best.map_or(true, |(_, bv, _)| viol > bv) {
                best = Some((j, viol, dir));
            }
        }
        best.map(|(j, _, dir)| (j, dir))
    }

    /// Ratio test: the blocking basic row (or `None` for a bound flip) and
    /// the step length.
    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64]) -> (Option<usize>, f64) {
        let mut t_best = self.upper[q] - self.lower[q];
        let mut blocker: Option<(usize, f64)> = None;
        for (i, &a_raw) in alpha.iter().enumerate() {
            let a = dir * a_raw;
            let t = if a > RATIO_EPS {
                (self.beta[i] - self.lower[self.basis[i]]).max(0.0) / a
            } else if a < -RATIO_EPS {
                (self.upper[self.basis[i]] - self.beta[i]).max(0.0) / (-a)
            } else {
                continue;
            };
            // A row with an infinite allowance never blocks; letting one be
            // recorded as a blocker would execute an infinite step.
            if !t.is_finite() {
                continue;
            }
            let replace = match blocker {
                _ if t < t_best - RATIO_TIE => true,
                None => t <= t_best + RATIO_TIE,
                Some((bi, bmag)) => {
                    t <= t_best + RATIO_TIE
                        && if self.bland {
                            self.basis[i] < self.basis[bi]
                        } else {
                            let mag = a_raw.abs();
                            mag > bmag + RATIO_TIE
                                || (mag >= bmag - RATIO_TIE && self.basis[i] < self.basis[bi])
                        }
                }
            };
            if replace {
                t_best = t.min(t_best);
                blocker = Some((i, a_raw.abs()));
            }
        }
        (blocker.map(|(i, _)| i), t_best)
    }

    /// Runs pivots with the given costs until optimal. Returns `Err` on
    /// numeric failure (singular basis, unbounded direction, iteration cap).
    fn optimize(&mut self, cost: &[f64]) -> Result<()> {
        let trace = std::env::var_os("BNB_TRACE").is_some();
        let mut reported = false;
        loop {
            self.iterations += 1;
            if self.iterations > ITERATION_CAP {
                return Err(Error::Numeric("simplex iteration cap exceeded".into()));
            }
            let cadence = if self.honest_left > 0 { 1 } else { self.refactor_every };
            if self.pivots_since_refactor >= cadence {
                self.reinvert()?;
            }
            let y = self.duals(cost);
            let Some((q, dir)) = self.price(cost, &y) else {
                return Ok(());
            };
            let alpha = self.ftran(q);
            let (blocker, t) = self.ratio_test(q, dir, &alpha);
            if blocker.is_none() && !t.is_finite() {
                // Boxed models cannot be unbounded; treat as numeric trouble
                // and retry once from a fresh factorization.
                if self.pivots_since_refactor > 0 {
                    self.reinvert()?;
                    continue;
                }
                return Err(Error::Numeric("unbounded improving direction".into()));
            }
            let t = t.max(0.0);
            for (i, &a) in alpha.iter().enumerate() {
                self.beta[i] -= dir * t * a;
            }
            match blocker {
                None => {
                    // The entering column travels to its opposite bound.
                    self.status[q] = match self.status[q] {
                        VarStatus::AtLower => VarStatus::AtUpper,
                        VarStatus::AtUpper => VarStatus::AtLower,
                        VarStatus::Basic => unreachable!(),
                    };
                }
                Some(r) => {
                    let pivot = alpha[r];
                    if pivot.abs() < RATIO_EPS {
                        if self.pivots_since_refactor > 0 {
                            self.reinvert()?;
                            continue;
                        }
                        return Err(Error::Numeric("vanishing pivot element".into()));
                    }
                    let leaving = self.basis[r];
                    self.status[leaving] = if dir * pivot > 0.0 {
                        VarStatus::AtLower
                    } else {
                        VarStatus::AtUpper
                    };
                    self.beta[r] = self.nonbasic_value(q) + dir * t;
                    self.basis[r] = q;
                    self.status[q] = VarStatus::Basic;
                    // B⁻¹ update by elementary row operations.
                    let m = self.num_rows();
                    for c in 0..m {
                        self.binv[r][c] /= pivot;
                    }
                    for i in 0..m {
                        if i == r {
                            continue;
                        }
                        let factor = alpha[i];
                        if factor == 0.0 {
                            continue;
                        }
                        for c in 0..m {
                            self.binv[i][c] -= factor * self.binv[r][c];
                        }
                    }
                    self.pivots_since_refactor += 1;
                    self.honest_left = self.honest_left.saturating_sub(1);
                }
            }
            if trace && !reported {
                let v = self.max_basic_violation();
                if v > 1e-6 {
                    reported = true;
                    eprintln!(
                        "FEASIBILITY BROKEN at iter {}: viol={v:.3e} t={t:.6e} dir={dir} \
                         q={q} blocker={blocker:?} pivots_since={}",
                        self.iterations, self.pivots_since_refactor
                    );
                }
            }
            if t > DEGENERATE_STEP {
                self.stall = 0;
                self.bland = false;
            } else {
                self.stall += 1;
                if self.stall > STALL_LIMIT {
                    self.bland = true;
                }
            }
        }
    }
}

/// Solves the LP to proven optimality or proven infeasibility.
///
/// A run that fails numerically (for example, near-parallel rows sneaking a
/// dependent column into the basis) is repeated once in a conservative
/// profile with near-constant refactorization, trading speed for honest
/// pivot values.
///
/// # Errors
/// [`Error::Numeric`] on malformed input (bad bounds, free variables,
/// non-finite data) or persistent numeric failure;
/// [`Error::IndexOutOfRange`] for rows referencing missing columns.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome> {
    lp.validate()?;
    match run_simplex(lp, false) {
        Ok(outcome) => Ok(outcome),
        Err(e) => {
            if std::env::var_os("BNB_TRACE").is_some() {
                eprintln!("conservative rerun ({} rows): {e}", lp.rows.len());
            }
            run_simplex(lp, true)
        }
    }
}

/// One two-phase simplex run over a validated LP.
fn run_simplex(lp: &LinearProgram, conservative: bool) -> Result<LpOutcome> {
    let n = lp.num_vars();
    let m = lp.rows.len();

    // Canonical columns: structurals, then one slack per row, then
    // artificials appended as needed below.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n + m];
    let mut lower = Vec::with_capacity(n + m);
    let mut upper = Vec::with_capacity(n + m);
    lower.extend_from_slice(&lp.lower);
    upper.extend_from_slice(&lp.upper);
    let mut rhs = vec![0.0f64; m];
    for (i, row) in lp.rows.iter().enumerate() {
        // Canonicalize ≥ to ≤ by negation; slacks then live in [0, 0] for
        // equations and, for inequalities, inside the implied activity range
        // over the variable boxes. The implied cap never cuts a feasible
        // point, and a fully boxed tableau turns any numerically fake
        // "unbounded direction" into a harmless finite bound flip.
        let flip = if row.sense == Sense::Ge { -1.0 } else { 1.0 };
        rhs[i] = flip * row.rhs;
        for &(j, coef) in &row.coefs {
            cols[j].push((i, flip * coef));
        }
        cols[n + i].push((i, 1.0));
        lower.push(0.0);
        let cap = if row.sense == Sense::Eq {
            0.0
        } else {
            let mut activity_floor = 0.0f64;
            for &(j, coef) in &row.coefs {
                let c = flip * coef;
                if c == 0.0 {
                    continue;
                }
                let contrib = if c > 0.0 { c * lp.lower[j] } else { c * lp.upper[j] };
                if !contrib.is_finite() {
                    activity_floor = f64::NEG_INFINITY;
                    break;
                }
                activity_floor += contrib;
            }
            if activity_floor.is_finite() {
                (rhs[i] - activity_floor).max(0.0) + 1.0
            } else {
                f64::INFINITY
            }
        };
        upper.push(cap);
    }

    // Nonbasic structurals start at the finite bound nearest zero.
    let mut status = Vec::with_capacity(n + m);
    for j in 0..n {
        let (lo, hi) = (lower[j], upper[j]);
        let at_lower = if lo == f64::NEG_INFINITY {
            false
        } else if hi == f64::INFINITY {
            true
        } else {
            lo.abs() <= hi.abs()
        };
        status.push(if at_lower { VarStatus::AtLower } else { VarStatus::AtUpper });
    }

    // Row residuals at the initial nonbasic point decide which rows can
    // start with a feasible basic slack and which need an artificial.
    let mut residual = rhs.clone();
    for j in 0..n {
        let v = match status[j] {
            VarStatus::AtLower => lower[j],
            VarStatus::AtUpper => upper[j],
            VarStatus::Basic => unreachable!(),
        };
        if v == 0.0 {
            continue;
        }
        for &(row, coef) in &cols[j] {
            residual[row] -= coef * v;
        }
    }

    // Slack statuses must land exactly at columns n..n+m, so artificial
    // columns are appended in a second pass once every slack is placed.
    let mut basis = Vec::with_capacity(m);
    let mut beta = Vec::with_capacity(m);
    let mut needs_artificial = Vec::new();
    for i in 0..m {
        let slack = n + i;
        let slack_feasible = residual[i] >= -FEAS_TOL
            && (upper[slack] == f64::INFINITY || residual[i] <= upper[slack] + FEAS_TOL);
        if slack_feasible {
            status.push(VarStatus::Basic);
            basis.push(slack);
            beta.push(residual[i].max(0.0).min(upper[slack]));
        } else {
            status.push(VarStatus::AtLower);
            basis.push(usize::MAX);
            beta.push(residual[i].abs());
            needs_artificial.push(i);
        }
    }
    let mut artificial_cols = Vec::new();
    for &i in &needs_artificial {
        let art = cols.len();
        cols.push(vec![(i, residual[i].signum())]);
        lower.push(0.0);
        // Phase 1 only needs the artificial to cover its starting residual;
        // capping it keeps the tableau fully boxed.
        upper.push(residual[i].abs() + 10.0);
        status.push(VarStatus::Basic);
        basis[i] = art;
        artificial_cols.push(art);
    }

    let total = cols.len();
    let mut tab = Tableau {
        cols,
        lower,
        upper,
        rhs,
        status,
        basis,
        beta,
        binv: Vec::new(),
        n_structural: n,
        pivots_since_refactor: 0,
        refactor_every: if conservative {
            CONSERVATIVE_REFACTOR_EVERY
        } else {
            REFACTOR_EVERY
        },
        iterations: 0,
        stall: 0,
        bland: false,
        checkpoint: None,
        honest_left: 0,
        rollbacks: 0,
    };
    // The initial all-logical basis is never singular; seeding it as the
    // first checkpoint gives phase 1 a rollback target from the start.
    tab.reinvert()?;

    if !artificial_cols.is_empty() {
        let mut phase1 = vec![0.0f64; total];
        for &a in &artificial_cols {
            phase1[a] = 1.0;
        }
        tab.optimize(&phase1)?;
        // Leave phase 1 on a freshly factorized, feasibility-verified basis:
        // the infeasibility verdict below reads the basic values, so both
        // drift and hidden improving directions must be cleared first.
        if !tab.settle(&phase1)? {
            return Err(Error::Numeric("phase 1 failed to settle".into()));
        }
        let infeasibility: f64 = tab
            .basis
            .iter()
            .zip(&tab.beta)
            .filter(|(col, _)| phase1[**col] > 0.0)
            .map(|(_, v)| v.max(0.0))
            .sum();
        if infeasibility > FEAS_TOL {
            return Ok(LpOutcome::Infeasible);
        }
        // Pin every artificial at zero for phase 2; basic ones stay basic
        // holding a zero value, which is harmless. Earlier phase-1
        // checkpoints may hold artificials at positive values, which the
        // pinned bounds now forbid, so the clean final basis — artificials
        // all at zero — replaces them as the rollback target.
        for &a in &artificial_cols {
            tab.lower[a] = 0.0;
            tab.upper[a] = 0.0;
        }
        tab.checkpoint = Some((tab.basis.clone(), tab.status.clone()));
    }

    let mut phase2 = vec![0.0f64; total];
    phase2[..n].copy_from_slice(&lp.objective);
    tab.bland = false;
    tab.stall = 0;
    tab.optimize(&phase2)?;

    // Extraction only trusts a settled basis: freshly factorized, basic
    // values inside their bounds, and no improving direction left.
    if !tab.settle(&phase2)? {
        return Err(Error::Numeric("phase 2 failed to settle".into()));
    }

    let mut x = vec![0.0f64; n];
    for j in 0..n {
        if tab.status[j] != VarStatus::Basic {
            x[j] = tab.nonbasic_value(j);
        }
    }
    for (pos, &col) in tab.basis.iter().enumerate() {
        if col < tab.n_structural {
            x[col] = tab.beta[pos];
        }
    }
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpOutcome::Optimal { value, x })
}
