//! Deterministic branch-and-bound for the mean-problem models.
//!
//! Nodes carry bound fixings over the root model; every relaxation is a pure
//! LP (see [`crate::simplex`]) in which the convex-quadratic content enters
//! through lazily separated outer-approximation cuts and — for
//! implicit-objective models — epigraph subgradient cuts separated at
//! integral points only. Node selection is best dual bound (ties prefer the
//! deeper, then the earlier-created node), branching picks the
//! most-fractional binary (ties prefer the smallest column).
//!
//! Incumbents never come from relaxation objectives: each integral point is
//! decoded to warping paths and re-priced exactly with the aligned-mean
//! formula, and the alternating heuristic polishes relaxation means at the
//! root and on a fixed node cadence. Because aligned means are ratios of
//! interval sums over the admissible windows, they always respect the
//! per-index value bounds baked into the model, so heuristic solutions are
//! genuine model solutions and pruning against them is sound.
//!
//! Cuts accumulated anywhere are globally valid and shared by all nodes.
//! All tie-breaks are deterministic, so two runs with the same configuration
//! reproduce node counts, logs, and results exactly.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{eval_expr, implicit_cut, row_violation, DistanceKind, Model, OaKind};
use crate::oracle::optimal_z_for_paths;
use crate::series::{Instance, TimeSeries};
use crate::simplex::{solve_lp, LinearProgram, LpOutcome, Row};
use crate::warping::{dtw, is_compatible, GlobalConstraint, WarpingPath};

/// Default separation tolerance: convex constraints are enforced once
/// violated by more than this.
pub const DEFAULT_VIOL_TOL: f64 = 1e-6;

/// Default feasibility tolerance for exact recomputation and gap reporting.
pub const DEFAULT_FEAS_TOL: f64 = 1e-9;

/// A binary value within this distance of an integer counts as integral.
///
/// Must stay far below `viol_tol / M²`: a membership within `INT_TOL` of 1
/// relaxes a deactivated tangent by up to `M² · INT_TOL`, and if that
/// exceeds the separation tolerance the relaxation can absorb every new
/// cut with microscopic membership shifts instead of ever converging.
/// Treating such points as fractional hands them to branching, which pins
/// the shifting column and ends the dodge.
const INT_TOL: f64 = 1e-9;

/// Nodes whose bound reaches the incumbent minus this margin are pruned.
const PRUNE_MARGIN: f64 = 1e-7;

/// Iteration cap of the alternating heuristic.
const HEURISTIC_CAP: usize = 50;

/// Hard cap on cut-separation rounds at one node; reaching it means the
/// separation loop is numerically stuck and the solve surfaces an error.
const MAX_CUT_ROUNDS: usize = 10_000;

/// A fractional point gets at most this many cut rounds in one node visit
/// before the node branches anyway; cuts stay in the global pool, so
/// nothing is lost by resuming separation in the children. Integral points
/// are exempt — they cannot dodge tangents, so their separation converges.
const FRACTIONAL_CUT_ROUNDS: usize = 8;

/// Pool cuts violated by more than this at a relaxation point are activated
/// into the node's working set (matching the LP feasibility scale).
const POOL_ACTIVATION_VIOL: f64 = 1e-7;

/// Active cuts within this slack at the node's final point pass to its
/// children; clearly slack ones stay dormant in the pool. Keeping node LPs
/// to the locally binding cuts is what keeps them small and well-behaved —
/// shipping the whole pool everywhere breeds walls of near-parallel rows
/// and pathologically degenerate vertices.
const CHILD_INHERIT_SLACK: f64 = 1e-6;

/// Objective perturbation used to retry a numerically failed relaxation.
const OBJ_PERTURBATION: f64 = 1e-12;

/// Largest violation tolerated from a returned relaxation point before it
/// is rejected as numerically corrupted.
const NODE_FEAS_TOL: f64 = 1e-6;

/// Grid resolution for tangent support points. A support snapped by at
/// most half a cell weakens the tangent only by the squared offset (at
/// most `TANGENT_GRID²/4 ≈ 2.5e-7`), comfortably below the separation
/// tolerance, while guaranteeing that same-group tangents are never closer
/// than one cell.
const TANGENT_GRID: f64 = 1e-3;

/// Tolerance for the decoded-value-versus-objective consistency check in
/// [`extract_solution`]; relaxation distances are accurate only up to the
/// separation tolerance, so this matches [`DEFAULT_VIOL_TOL`].
const CONSISTENCY_TOL: f64 = 1e-6;

// ======================================================================
// configuration and results
// ======================================================================

/// Node selection rule (best dual bound is the only implemented rule).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeSelection {
    #[default]
    BestBound,
}

/// Branching rule (most-fractional binary is the only implemented rule).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branching {
    #[default]
    MostFractional,
}

/// Branch-and-bound controls. `Default` matches the reference protocol:
/// a one-hour wall-clock budget with the standard tolerances.
#[derive(Clone, Debug, Serialize)]
pub struct SolverConfig {
    /// Wall-clock budget in seconds.
    pub time_limit: f64,
    /// Maximum number of processed (popped) nodes.
    pub node_limit: u64,
    /// Convex constraints are enforced once violated by more than this.
    pub viol_tol: f64,
    /// Feasibility tolerance for recomputation checks and gap reporting.
    pub feas_tol: f64,
    pub node_selection: NodeSelection,
    pub branching: Branching,
    /// Run the alternating heuristic at every `heuristic_frequency`-th
    /// processed node (`0` disables the in-tree heuristic; the medoid start
    /// at the root always runs).
    pub heuristic_frequency: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            time_limit: 3600.0,
            node_limit: u64::MAX,
            viol_tol: DEFAULT_VIOL_TOL,
            feas_tol: DEFAULT_FEAS_TOL,
            node_selection: NodeSelection::BestBound,
            branching: Branching::MostFractional,
            heuristic_frequency: 100,
        }
    }
}

impl SolverConfig {
    /// Checks that the tolerances are positive and the time budget is a
    /// finite non-negative number.
    ///
    /// # Errors
    /// [`Error::InvalidTolerance`] naming the offending value.
    pub fn validate(&self) -> Result<()> {
        for tol in [self.viol_tol, self.feas_tol] {
            if !tol.is_finite() || tol <= 0.0 {
                return Err(Error::InvalidTolerance(tol));
            }
        }
        if !self.time_limit.is_finite() || self.time_limit < 0.0 {
            return Err(Error::InvalidTolerance(self.time_limit));
        }
        Ok(())
    }
}

/// Termination state of a solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveStatus {
    /// The incumbent is the model optimum (within the pruning margin).
    Optimal,
    /// Reserved: a feasible solution with an unproven bound outside a limit
    /// stop. The sequential search always either closes the tree (optimal /
    /// infeasible) or stops on a limit, so it never produces this.
    Feasible,
    /// The model admits no feasible solution.
    Infeasible,
    /// The time or node limit stopped the search.
    Limit,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Limit => "limit",
        })
    }
}

/// Outcome of a branch-and-bound run.
#[derive(Clone, Debug, Serialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Best mean found, absent when no feasible solution was seen.
    pub incumbent_mean: Option<TimeSeries>,
    /// Exact mean value of the incumbent (`+∞` without one).
    pub primal: f64,
    /// Proven lower bound on the model optimum.
    pub dual: f64,
    /// Relative gap; `0.0` on optimal termination by convention.
    pub gap: f64,
    /// Processed node count.
    pub nodes: u64,
    /// Elapsed seconds.
    pub wall_time: f64,
    /// One warping path per sample witnessing the incumbent value.
    pub paths: Option<Vec<WarpingPath>>,
}

/// One line of the structured run log.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Node {
        node_id: u64,
        depth: usize,
        bound: f64,
        action: NodeAction,
    },
    Cut {
        node_id: u64,
        kind: CutKind,
        violation: f64,
        /// Pool size after adding this cut.
        pool: usize,
    },
    Incumbent {
        node_id: u64,
        primal: f64,
        /// Global dual bound at the time of the update.
        dual: f64,
        source: IncumbentSource,
    },
}

/// What processing a node concluded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeAction {
    PrunedBound,
    PrunedInfeasible,
    Integral,
    Branched,
}

/// Which constraint family a cut came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    BigM,
    Plain,
    Perspective,
    Implicit,
}

/// Where an incumbent came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IncumbentSource {
    RootHeuristic,
    NodeHeuristic,
    IntegralNode,
}

// ======================================================================
// free operations
// ======================================================================

/// Relative optimality gap `(p − d) / d`.
///
/// Returns `+∞` when `p` is infinite or `d` is not safely positive
/// (`d ≤ 1e-9`), mirroring the reporting convention for failed dual bounds.
/// Optimal terminations report `0.0` directly instead of calling this.
pub fn gap(p: f64, d: f64) -> f64 {
    if !p.is_finite() || d <= DEFAULT_FEAS_TOL {
        f64::INFINITY
    } else {
        (p - d) / d
    }
}

/// The LP of one node: the model's base relaxation, every cut in `cuts`,
/// and the node's bound fixings intersected with the root boxes. `None`
/// when a fixing empties a box.
fn node_lp(model: &Model, cuts: &[Row], fixings: &[(usize, f64, f64)]) -> Option<LinearProgram> {
    let mut lp = model.lp();
    for &(col, lo, hi) in fixings {
        lp.lower[col] = lp.lower[col].max(lo);
        lp.upper[col] = lp.upper[col].min(hi);
        if lp.lower[col] > lp.upper[col] {
            return None;
        }
    }
    lp.rows.extend(cuts.iter().cloned());
    Some(lp)
}

/// Largest bound or row violation of `x` over the LP.
fn lp_violation(lp: &LinearProgram, x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..lp.num_vars() {
        worst = worst.max(lp.lower[j] - x[j]).max(x[j] - lp.upper[j]);
    }
    for row in &lp.rows {
        worst = worst.max(row_violation(row, x));
    }
    worst
}

/// [`solve_lp`] plus an independent feasibility audit of the returned
/// point: every consumer downstream (bounds, branching, decoding) assumes
/// row feasibility, so a numerically corrupted "optimum" must surface as an
/// error, never as data.
fn checked_solve(lp: &LinearProgram) -> Result<LpOutcome> {
    match solve_lp(lp)? {
        LpOutcome::Optimal { value, x } => {
            let viol = lp_violation(lp, &x);
            if viol > NODE_FEAS_TOL {
                return Err(Error::Numeric(format!(
                    "relaxation point violates the model by {viol:.3e}"
                )));
            }
            Ok(LpOutcome::Optimal { value, x })
        }
        LpOutcome::Infeasible => Ok(LpOutcome::Infeasible),
    }
}

/// Solves one node relaxation. The returned value is a valid lower bound
/// for the node's subtree (cuts are globally valid and fixings only shrink
/// the feasible set).
///
/// A numerically failed solve is retried once with a tiny deterministic
/// objective perturbation; the retried value is corrected downwards by the
/// largest possible objective drift, so it stays a valid bound.
///
/// # Errors
/// [`Error::Numeric`] when the relaxation fails persistently.
pub fn lp_relax(
    model: &Model,
    cuts: &[Row],
    fixings: &[(usize, f64, f64)],
) -> Result<LpOutcome> {
    let Some(lp) = node_lp(model, cuts, fixings) else {
        return Ok(LpOutcome::Infeasible);
    };
    match checked_solve(&lp) {
        Ok(outcome) => Ok(outcome),
        Err(_) => {
            let mut perturbed = lp.clone();
            let mut drift = 0.0;
            for (col, coef) in perturbed.objective.iter_mut().enumerate() {
                let delta = OBJ_PERTURBATION * (col + 1) as f64;
                *coef += delta;
                drift += delta * perturbed.lower[col].abs().max(perturbed.upper[col].abs());
            }
            match checked_solve(&perturbed)? {
                LpOutcome::Optimal { x, .. } => {
                    let value = x
                        .iter()
                        .zip(&lp.objective)
                        .map(|(xi, ci)| xi * ci)
                        .sum::<f64>()
                        - 2.0 * drift;
                    Ok(LpOutcome::Optimal { value, x })
                }
                LpOutcome::Infeasible => Ok(LpOutcome::Infeasible),
            }
        }
    }
}

/// Linear-interpolation resample of `values` onto `target` points (the
/// arithmetic mean when `target == 1`).
fn resample(values: &[f64], target: usize) -> Vec<f64> {
    let m = values.len();
    if target == 1 {
        return vec![values.iter().sum::<f64>() / m as f64];
    }
    if m == 1 {
        return vec![values[0]; target];
    }
    (0..target)
        .map(|j| {
            let t = j as f64 * (m - 1) as f64 / (target - 1) as f64;
            let i = (t.floor() as usize).min(m - 2);
            let frac = t - i as f64;
            values[i] * (1.0 - frac) + values[i + 1] * frac
        })
        .collect()
}

/// Index of the sample minimizing `Σ dtw²` to all samples (incompatible
/// pairs count as `+∞`); ties go to the earlier sample.
fn medoid_index(inst: &Instance, c: GlobalConstraint) -> usize {
    let mut best = (f64::INFINITY, 0usize);
    for (l, s) in inst.samples().iter().enumerate() {
        let mut score = 0.0;
        for t in inst.samples() {
            match dtw(s, t, c) {
                Ok((dist, _)) => score += dist * dist,
                Err(_) => {
                    score = f64::INFINITY;
                    break;
                }
            }
        }
        if score < best.0 {
            best = (score, l);
        }
    }
    best.1
}

/// The full alternating loop behind [`primal_heuristic`]: fix the mean and
/// align each sample by constrained DTW, then fix the alignments and reset
/// each mean value to the arithmetic mean of its aligned samples, until the
/// value stops improving by at least `tol` or `cap` iterations pass.
///
/// Returns the refined mean, its exact mean value, the witnessing paths,
/// and the value after every iteration (non-increasing by construction:
/// both half-steps are exact coordinate minimizations).
fn heuristic_steps(
    inst: &Instance,
    c: GlobalConstraint,
    z0: TimeSeries,
    cap: usize,
    tol: f64,
) -> Result<(TimeSeries, f64, Vec<WarpingPath>, Vec<f64>)> {
    for s in inst.samples() {
        if !is_compatible(c, s.len(), z0.len()) {
            return Err(Error::Incompatible {
                m: s.len(),
                n: z0.len(),
            });
        }
    }
    let align = |z: &TimeSeries| -> Result<(Vec<WarpingPath>, f64)> {
        let mut paths = Vec::with_capacity(inst.k());
        let mut total = 0.0;
        for s in inst.samples() {
            let (dist, path) = dtw(s, z, c)?;
            total += dist * dist;
            paths.push(path);
        }
        Ok((paths, total / inst.k() as f64))
    };
    let mut z = z0;
    let (mut paths, mut f) = align(&z)?;
    let mut trace = vec![f];
    for _ in 0..cap {
        let (z_next, _) = optimal_z_for_paths(inst, &paths)?;
        let (paths_next, f_next) = align(&z_next)?;
        if f_next > f {
            // Floating-point regress guard; keep the better iterate.
            break;
        }
        let improvement = f - f_next;
        z = z_next;
        paths = paths_next;
        f = f_next;
        trace.push(f);
        if improvement < tol {
            break;
        }
    }
    Ok((z, f, paths, trace))
}

/// Alternating mean refinement from start `z0`: the mean value is
/// non-increasing across iterations, and the returned value is the exact
/// mean value of the returned series.
///
/// # Errors
/// [`Error::Incompatible`] when the length of `z0` is infeasible under `c`
/// for some sample.
pub fn primal_heuristic(
    inst: &Instance,
    c: GlobalConstraint,
    z0: TimeSeries,
) -> Result<(TimeSeries, f64)> {
    let (z, f, _, _) = heuristic_steps(inst, c, z0, HEURISTIC_CAP, DEFAULT_FEAS_TOL)?;
    Ok((z, f))
}

/// Decodes an integral assignment into the selected mean length and one
/// warping path per series, walking chosen vertex memberships with the
/// diagonal > down > right preference (which also resolves harmless
/// zero-cost extra memberships deterministically).
fn decode_paths(model: &Model, x: &[f64]) -> Result<(usize, Vec<WarpingPath>)> {
    let mut selected = None;
    for &len in model.mean_lengths() {
        let col = model.x_col(len).expect("modeled length has a selector");
        if x[col] > 0.5 {
            if selected.is_some() {
                if std::env::var_os("BNB_TRACE").is_some() {
                    for &l in model.mean_lengths() {
                        let c = model.x_col(l).unwrap();
                        eprintln!("selector x_{l} (col {c}) = {}", x[c]);
                    }
                    for (r, row) in model.rows().iter().enumerate() {
                        let v = row_violation(&row.as_row(), x);
                        if v > 1e-9 {
                            eprintln!("base row {r} violated by {v}");
                        }
                    }
                }
                return Err(Error::Inconsistent(
                    "assignment selects two mean lengths".into(),
                ));
            }
            selected = Some(len);
        }
    }
    let Some(n) = selected else {
        return Err(Error::Inconsistent(
            "assignment selects no mean length".into(),
        ));
    };
    let chosen = |l: usize, i: usize, j: usize| {
        model
            .cell(l, i, j)
            .is_some_and(|cell| eval_expr(&cell.membership, x) > 0.5)
    };
    let mut paths = Vec::with_capacity(model.k());
    for (l, s) in model.instance().samples().iter().enumerate() {
        let m = s.len();
        if !chosen(l, 1, 1) {
            return Err(Error::Inconsistent(format!(
                "series {} has no chosen path start",
                l + 1
            )));
        }
        let mut vertices = vec![(1, 1)];
        let (mut i, mut j) = (1usize, 1usize);
        while (i, j) != (m, n) {
            let steps = [(i + 1, j + 1), (i + 1, j), (i, j + 1)];
            let Some(&next) = steps
                .iter()
                .find(|&&(si, sj)| si <= m && sj <= n && chosen(l, si, sj))
            else {
                return Err(Error::Inconsistent(format!(
                    "series {} path breaks at ({i}, {j})",
                    l + 1
                )));
            };
            (i, j) = next;
            vertices.push(next);
        }
        paths.push(WarpingPath::new(vertices)?);
    }
    Ok((n, paths))
}

/// Decodes an integral assignment into `(z, paths, F)` and re-verifies the
/// recomputed mean value against the model objective (to the separation
/// tolerance — relaxation distance values are no more accurate than that).
///
/// # Errors
/// [`Error::Inconsistent`] on fractional binaries, broken path structure,
/// or a value disagreement; these indicate a model or solver bug.
pub fn extract_solution(
    model: &Model,
    assignment: &[f64],
) -> Result<(TimeSeries, Vec<WarpingPath>, f64)> {
    if assignment.len() != model.num_vars() {
        return Err(Error::IndexOutOfRange {
            what: "assignment length",
            value: assignment.len(),
            max: model.num_vars(),
        });
    }
    for col in model.binary_cols() {
        let v = assignment[col];
        if (v - v.round()).abs() > INT_TOL {
            return Err(Error::Inconsistent(format!(
                "binary {} is fractional ({v})",
                model.var_name(col)
            )));
        }
    }
    let (n, paths) = decode_paths(model, assignment)?;
    let values: Vec<f64> = (1..=n)
        .map(|j| assignment[model.z_col(j).expect("column within model range")])
        .collect();
    let z = TimeSeries::new(values)?;
    let f = paths
        .iter()
        .zip(model.instance().samples())
        .map(|(path, s)| path.cost(s, &z))
        .sum::<f64>()
        / model.k() as f64;
    let objective = model.objective_value(assignment);
    if (f - objective).abs() > CONSISTENCY_TOL {
        return Err(Error::Inconsistent(format!(
            "decoded mean value {f} disagrees with the model objective {objective}"
        )));
    }
    Ok((z, paths, f))
}

// ======================================================================
// the search
// ======================================================================

/// One open node: bound fixings over the root boxes plus bookkeeping.
struct OpenNode {
    /// Best known lower bound for the node's subtree.
    bound: f64,
    depth: usize,
    /// Creation number; also the unique identity of the node.
    id: u64,
    fixings: Vec<(usize, f64, f64)>,
    /// Pool indices of the cuts binding where the parent left off.
    active: Vec<usize>,
}

impl PartialEq for OpenNode {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl Eq for OpenNode {}

impl Ord for OpenNode {
    /// Pop priority for the max-heap: smaller bound first, then deeper,
    /// then earlier creation.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| self.depth.cmp(&other.depth))
            .then_with(|| other.id.cmp(&self.id))
    }
}

impl PartialOrd for OpenNode {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// What processing one node concluded (internal form).
enum Processed {
    Closed,
    Branched { x: Vec<f64> },
}

struct Search<'a> {
    model: &'a Model,
    config: &'a SolverConfig,
    start: Instant,
    cuts: Vec<Row>,
    /// One pool slot per (group, snapped support cell); see
    /// [`Self::separate_groups`].
    tangent_keys: HashMap<(usize, i64), usize>,
    heap: BinaryHeap<OpenNode>,
    incumbent: Option<(TimeSeries, f64, Vec<WarpingPath>)>,
    processed: u64,
    created: u64,
}

impl<'a> Search<'a> {
    fn new(model: &'a Model, config: &'a SolverConfig) -> Self {
        Search {
            model,
            config,
            start: Instant::now(),
            cuts: Vec::new(),
            tangent_keys: HashMap::new(),
            heap: BinaryHeap::new(),
            incumbent: None,
            processed: 0,
            created: 0,
        }
    }

    fn primal(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |inc| inc.1)
    }

    /// The global dual bound right now: the minimum over the open nodes,
    /// the node currently being processed, and the incumbent; the Fréchet
    /// floor before the root is created.
    fn dual_now(&self, in_flight: Option<f64>) -> f64 {
        let mut d = f64::INFINITY;
        if let Some(top) = self.heap.peek() {
            d = d.min(top.bound);
        }
        if let Some(bound) = in_flight {
            d = d.min(bound);
        }
        if self.created == 0 {
            d = d.min(self.model.frechet_floor());
        }
        d.min(self.primal())
    }

    fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn out_of_time(&self) -> bool {
        self.elapsed() >= self.config.time_limit
    }

    /// Records `(z, f, paths)` if it beats the incumbent.
    fn offer_incumbent(
        &mut self,
        z: TimeSeries,
        f: f64,
        paths: Vec<WarpingPath>,
        node_id: u64,
        source: IncumbentSource,
        in_flight: Option<f64>,
        sink: &mut dyn FnMut(&LogEvent),
    ) {
        if f < self.primal() {
            self.incumbent = Some((z, f, paths));
            sink(&LogEvent::Incumbent {
                node_id,
                primal: f,
                dual: self.dual_now(in_flight),
                source,
            });
        }
    }

    /// Best-effort alternating-heuristic run; failures (degenerate windows
    /// under a slope constraint) are silently skipped.
    fn run_heuristic(
        &mut self,
        z0: TimeSeries,
        node_id: u64,
        source: IncumbentSource,
        in_flight: Option<f64>,
        sink: &mut dyn FnMut(&LogEvent),
    ) {
        let inst = self.model.instance();
        let c = inst.constraint();
        if let Ok((z, f, paths, _)) =
            heuristic_steps(inst, c, z0, HEURISTIC_CAP, self.config.feas_tol)
        {
            self.offer_incumbent(z, f, paths, node_id, source, in_flight, sink);
        }
    }

    /// Medoid-seeded heuristic, run once before the tree: the sample
    /// minimizing `Σ dtw²` to the others, resampled onto the nearest
    /// modeled mean length.
    fn root_heuristic(&mut self, sink: &mut dyn FnMut(&LogEvent)) {
        let inst = self.model.instance();
        let medoid = &inst.samples()[medoid_index(inst, inst.constraint())];
        let target = self
            .model
            .mean_lengths()
            .iter()
            .copied()
            .min_by_key(|&len| (len.abs_diff(medoid.len()), len))
            .expect("models have at least one mean length");
        let Ok(z0) = TimeSeries::new(resample(medoid.values(), target)) else {
            return;
        };
        self.run_heuristic(z0, 0, IncumbentSource::RootHeuristic, None, sink);
    }

    /// Heuristic start from a relaxation point: the length with the largest
    /// selector value, paired with the relaxed mean values.
    fn node_heuristic(
        &mut self,
        x: &[f64],
        node_id: u64,
        in_flight: Option<f64>,
        sink: &mut dyn FnMut(&LogEvent),
    ) {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for &len in self.model.mean_lengths() {
            let v = x[self.model.x_col(len).expect("modeled length")];
            if v > best.0 {
                best = (v, len);
            }
        }
        let values: Vec<f64> = (1..=best.1)
            .map(|j| x[self.model.z_col(j).expect("column within model range")])
            .collect();
        let Ok(z0) = TimeSeries::new(values) else {
            return;
        };
        self.run_heuristic(z0, node_id, IncumbentSource::NodeHeuristic, in_flight, sink);
    }

    /// The most fractional binary, ties to the smallest column; `None`
    /// when the point is integral.
    fn branch_col(&self, x: &[f64]) -> Option<usize> {
        let Branching::MostFractional = self.config.branching;
        let mut best: Option<(f64, usize)> = None;
        for col in self.model.binary_cols() {
            let frac = (x[col] - x[col].round()).abs();
            if frac > INT_TOL && best.is_none_or(|(bf, _)| frac > bf) {
                best = Some((frac, col));
            }
        }
        best.map(|(_, col)| col)
    }

    /// Separates every violated convex group at `x`. Support points are
    /// snapped to a fixed grid and each (group, cell) pair contributes one
    /// pool row ever: revisits reactivate the stored row instead of
    /// appending a near-duplicate, keeping the node LPs well-conditioned.
    /// Snapped tangents stay valid (every tangent of a convex function is),
    /// still separate the point (the half-cell outer-approximation gap is
    /// far below the separation tolerance), and converge the same way.
    fn separate_groups(
        &mut self,
        x: &[f64],
        node_id: u64,
        active: &mut Vec<usize>,
        sink: &mut dyn FnMut(&LogEvent),
    ) -> usize {
        let mut added = 0;
        for (g, group) in self.model.groups().iter().enumerate() {
            if group.violation(x) <= self.config.viol_tol {
                continue;
            }
            let Some(p) = group.support(x) else { continue };
            let key = ((p / TANGENT_GRID).round() as i64).clamp(-1_000_000_000, 1_000_000_000);
            if let Some(&idx) = self.tangent_keys.get(&(g, key)) {
                if !active.contains(&idx) {
                    active.push(idx);
                    added += 1;
                }
                continue;
            }
            let cut = group.cut_at(key as f64 * TANGENT_GRID);
            let kind = match group.kind {
                OaKind::BigM { .. } => CutKind::BigM,
                OaKind::Plain => CutKind::Plain,
                OaKind::Perspective { .. } => CutKind::Perspective,
            };
            let violation = group.violation(x);
            self.cuts.push(cut);
            let idx = self.cuts.len() - 1;
            self.tangent_keys.insert((g, key), idx);
            active.push(idx);
            added += 1;
            sink(&LogEvent::Cut {
                node_id,
                kind,
                violation,
                pool: self.cuts.len(),
            });
        }
        added
    }

    /// Moves pool cuts violated at `x` into the active set; returns how
    /// many woke up.
    fn activate_pool(&self, x: &[f64], active: &mut Vec<usize>) -> usize {
        let mut mask = vec![false; self.cuts.len()];
        for &idx in active.iter() {
            mask[idx] = true;
        }
        let mut woken = 0;
        for (idx, cut) in self.cuts.iter().enumerate() {
            if !mask[idx] && row_violation(cut, x) > POOL_ACTIVATION_VIOL {
                active.push(idx);
                woken += 1;
            }
        }
        woken
    }

    /// Solves one node to a conclusion: repeated relaxations with lazy
    /// separation, then prune, record an integral incumbent, or branch.
    fn process_node(
        &mut self,
        node: &OpenNode,
        sink: &mut dyn FnMut(&LogEvent),
    ) -> Result<Processed> {
        let mut bound = node.bound;
        let mut active = node.active.clone();
        for round in 0..MAX_CUT_ROUNDS {
            let rows: Vec<Row> = active.iter().map(|&idx| self.cuts[idx].clone()).collect();
            let (value, x) = match lp_relax(self.model, &rows, &node.fixings)? {
                LpOutcome::Infeasible => {
                    sink(&LogEvent::Node {
                        node_id: node.id,
                        depth: node.depth,
                        bound,
                        action: NodeAction::PrunedInfeasible,
                    });
                    return Ok(Processed::Closed);
                }
                LpOutcome::Optimal { value, x } => (value, x),
            };
            // Cuts only ever tighten the relaxation; keep the bound monotone
            // against harmless float dips.
            bound = bound.max(value);
            if bound >= self.primal() - PRUNE_MARGIN {
                sink(&LogEvent::Node {
                    node_id: node.id,
                    depth: node.depth,
                    bound,
                    action: NodeAction::PrunedBound,
                });
                return Ok(Processed::Closed);
            }
            let woken = self.activate_pool(&x, &mut active);
            let mut added = self.separate_groups(&x, node.id, &mut active, sink);
            match self.branch_col(&x) {
                None => {
                    // Integral point: decode and re-price exactly; for the
                    // implicit objective also separate the epigraph cut.
                    let (_, paths) = decode_paths(self.model, &x)?;
                    let (z, f) = optimal_z_for_paths(self.model.instance(), &paths)?;
                    if self.model.distance_kind() == DistanceKind::Implicit {
                        let cut = implicit_cut(self.model, &paths, f)?;
                        let violation = row_violation(&cut, &x);
                        if violation > self.config.viol_tol {
                            self.cuts.push(cut);
                            active.push(self.cuts.len() - 1);
                            added += 1;
                            sink(&LogEvent::Cut {
                                node_id: node.id,
                                kind: CutKind::Implicit,
                                violation,
                                pool: self.cuts.len(),
                            });
                        }
                    }
                    self.offer_incumbent(
                        z,
                        f,
                        paths,
                        node.id,
                        IncumbentSource::IntegralNode,
                        Some(bound),
                        sink,
                    );
                    if added == 0 && woken == 0 {
                        sink(&LogEvent::Node {
                            node_id: node.id,
                            depth: node.depth,
                            bound,
                            action: NodeAction::Integral,
                        });
                        return Ok(Processed::Closed);
                    }
                }
                Some(col) => {
                    if (added == 0 && woken == 0) || round + 1 >= FRACTIONAL_CUT_ROUNDS {
                        sink(&LogEvent::Node {
                            node_id: node.id,
                            depth: node.depth,
                            bound,
                            action: NodeAction::Branched,
                        });
                        // Children start from the cuts binding here; slack
                        // ones stay dormant in the pool.
                        let inherited: Vec<usize> = active
                            .iter()
                            .copied()
                            .filter(|&idx| {
                                row_violation(&self.cuts[idx], &x) >= -CHILD_INHERIT_SLACK
                            })
                            .collect();
                        for (lo, hi) in [(0.0, 0.0), (1.0, 1.0)] {
                            let mut fixings = node.fixings.clone();
                            fixings.push((col, lo, hi));
                            self.heap.push(OpenNode {
                                bound,
                                depth: node.depth + 1,
                                id: self.created,
                                fixings,
                                active: inherited.clone(),
                            });
                            self.created += 1;
                        }
                        return Ok(Processed::Branched { x });
                    }
                }
            }
        }
        Err(Error::Numeric(format!(
            "cut separation stalled at node {} after {MAX_CUT_ROUNDS} rounds",
            node.id
        )))
    }

    fn run(&mut self, sink: &mut dyn FnMut(&LogEvent)) -> Result<SolveResult> {
        self.root_heuristic(sink);
        self.heap.push(OpenNode {
            bound: self.model.frechet_floor(),
            depth: 0,
            id: 0,
            fixings: Vec::new(),
            active: Vec::new(),
        });
        self.created = 1;
        let mut limit_hit = false;
        while let Some(top) = self.heap.peek() {
            if self.processed >= self.config.node_limit || self.out_of_time() {
                limit_hit = true;
                break;
            }
            let _ = top;
            let node = self.heap.pop().expect("peeked node");
            self.processed += 1;
            if self.processed % 200 == 0 && std::env::var_os("BNB_TRACE").is_some() {
                eprintln!(
                    "processed {} heap {} pool {} primal {} dual {}",
                    self.processed,
                    self.heap.len(),
                    self.cuts.len(),
                    self.primal(),
                    node.bound
                );
            }
            if node.bound >= self.primal() - PRUNE_MARGIN {
                sink(&LogEvent::Node {
                    node_id: node.id,
                    depth: node.depth,
                    bound: node.bound,
                    action: NodeAction::PrunedBound,
                });
                continue;
            }
            match self.process_node(&node, sink)? {
                Processed::Closed => {}
                Processed::Branched { x } => {
                    let freq = self.config.heuristic_frequency;
                    if freq > 0 && self.processed % freq == 0 {
                        self.node_heuristic(&x, node.id, None, sink);
                    }
                }
            }
        }

        let p = self.primal();
        let (status, dual, gap_value) = if limit_hit {
            let d = self.dual_now(None);
            (SolveStatus::Limit, d, gap(p, d))
        } else if self.incumbent.is_some() {
            // Tree exhausted: every subtree was pruned no lower than
            // `p − PRUNE_MARGIN`, so the incumbent is optimal within the
            // margin; snap the dual and report a closed gap.
            (SolveStatus::Optimal, p, 0.0)
        } else {
            (SolveStatus::Infeasible, f64::INFINITY, f64::INFINITY)
        };
        let (incumbent_mean, paths) = match &self.incumbent {
            Some((z, _, paths)) => (Some(z.clone()), Some(paths.clone())),
            None => (None, None),
        };
        Ok(SolveResult {
            status,
            incumbent_mean,
            primal: p,
            dual,
            gap: gap_value,
            nodes: self.processed,
            wall_time: self.elapsed(),
            paths,
        })
    }
}

/// Branch-and-bound solve of `model` under `config`, discarding the run log.
///
/// # Errors
/// [`Error::InvalidTolerance`] for a bad configuration; [`Error::Numeric`]
/// when a node relaxation fails persistently; [`Error::Inconsistent`] when
/// an integral point cannot be decoded (a model bug).
pub fn solve(model: &Model, config: &SolverConfig) -> Result<SolveResult> {
    solve_logged(model, config, &mut |_| {})
}

/// As [`solve`], forwarding every [`LogEvent`] to `sink` as it happens.
pub fn solve_logged(
    model: &Model,
    config: &SolverConfig,
    sink: &mut dyn FnMut(&LogEvent),
) -> Result<SolveResult> {
    Ok(solve_inner(model, config, sink)?.0)
}

/// Full-visibility solve used by the tests: also returns the final cut pool.
fn solve_inner(
    model: &Model,
    config: &SolverConfig,
    sink: &mut dyn FnMut(&LogEvent),
) -> Result<(SolveResult, Vec<Row>)> {
    config.validate()?;
    let mut search = Search::new(model, config);
    let result = search.run(sink)?;
    Ok((result, search.cuts))
}

// ======================================================================
// tests
// ======================================================================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{bound_profile, DEFAULT_TOL};
    use crate::model::{build_model, mean_length_bound, GraphKind};
    use crate::oracle::{brute_force_mean, DEFAULT_GUARD};
    use crate::series::Instance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const GRAPHS: [GraphKind; 2] = [GraphKind::Vertex, GraphKind::Arc];
    const DISTANCES: [DistanceKind; 4] = [
        DistanceKind::Quadratic,
        DistanceKind::Linear,
        DistanceKind::Perspective,
        DistanceKind::Implicit,
    ];

    fn inst(series: &[&[f64]], c: GlobalConstraint) -> Instance {
        let samples = series
            .iter()
            .map(|v| TimeSeries::new(v.to_vec()).unwrap())
            .collect();
        Instance::new("t", samples, c).unwrap()
    }

    fn built(instance: &Instance, graph: GraphKind, distance: DistanceKind) -> Model {
        let c = instance.constraint();
        let profile = bound_profile(instance, c, mean_length_bound(instance), DEFAULT_TOL).unwrap();
        build_model(instance, c, &profile, graph, distance).unwrap()
    }

    fn oracle_f(instance: &Instance) -> f64 {
        brute_force_mean(
            instance,
            instance.constraint(),
            mean_length_bound(instance),
            DEFAULT_GUARD,
        )
        .unwrap()
        .f
    }

    fn random_instance(seed: u64) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..=2);
        let samples = (0..k)
            .map(|_| {
                let m = rng.gen_range(2..=3);
                TimeSeries::new((0..m).map(|_| rng.gen_range(-2..=2) as f64).collect()).unwrap()
            })
            .collect();
        Instance::new("rnd", samples, GlobalConstraint::None).unwrap()
    }

    /// The full assignment representing `(z, paths)` with exact distance
    /// values, for direct row evaluation.
    fn embed(model: &Model, z: &TimeSeries, paths: &[WarpingPath]) -> Vec<f64> {
        let find = |name: &str| {
            model
                .variables()
                .iter()
                .position(|v| v.name == name)
                .unwrap_or_else(|| panic!("missing variable {name}"))
        };
        let mut x: Vec<f64> = model.variables().iter().map(|v| v.lower).collect();
        x[model.x_col(z.len()).unwrap()] = 1.0;
        for j in 1..=z.len() {
            x[model.z_col(j).unwrap()] = z.values()[j - 1];
        }
        let mut total = 0.0;
        for (l, path) in paths.iter().enumerate() {
            if model.graph_kind() == GraphKind::Arc {
                for w in path.vertices().windows(2) {
                    let ((i, j), (ni, nj)) = (w[0], w[1]);
                    x[find(&format!("f_{}_{i}_{j}_{ni}_{nj}", l + 1))] = 1.0;
                }
            }
            for &(i, j) in path.vertices() {
                if model.graph_kind() == GraphKind::Vertex {
                    x[find(&format!("y_{}_{i}_{j}", l + 1))] = 1.0;
                }
                let cell = model.cell(l, i, j).unwrap();
                let residual = cell.s - z.values()[j - 1];
                total += residual * residual;
                if let Some(w) = cell.w {
                    x[w] = residual.abs();
                }
                if let Some(zbar) = cell.zbar {
                    x[zbar] = z.values()[j - 1];
                }
                if let Some(d) = cell.d {
                    x[d] = residual * residual;
                }
            }
        }
        if let Some(eta) = model.eta_col() {
            x[eta] = total / model.k() as f64;
        }
        x
    }

    // ------------------------------------------------------------------
    // gap and configuration
    // ------------------------------------------------------------------

    #[test]
    fn gap_examples() {
        assert_eq!(gap(1.0, 1.0), 0.0);
        assert!((gap(1.1, 1.0) - 0.1).abs() < 1e-12);
        assert_eq!(gap(1.0, 0.0), f64::INFINITY);
        assert_eq!(gap(f64::INFINITY, 5.0), f64::INFINITY);
    }

    #[test]
    fn config_defaults_and_validation() {
        let config = SolverConfig::default();
        assert_eq!(config.time_limit, 3600.0);
        assert_eq!(config.viol_tol, 1e-6);
        assert_eq!(config.feas_tol, 1e-9);
        assert_eq!(config.heuristic_frequency, 100);
        assert!(config.validate().is_ok());

        let bad = SolverConfig {
            viol_tol: 0.0,
            ..SolverConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidTolerance(_))));
        let bad = SolverConfig {
            time_limit: f64::NAN,
            ..SolverConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidTolerance(_))));
    }

    #[test]
    fn heap_pops_best_bound_then_depth_then_creation() {
        let node = |bound, depth, id| OpenNode {
            bound,
            depth,
            id,
            fixings: Vec::new(),
            active: Vec::new(),
        };
        let mut heap = BinaryHeap::new();
        heap.push(node(2.0, 5, 0));
        heap.push(node(1.0, 1, 1));
        heap.push(node(1.0, 2, 2));
        heap.push(node(1.0, 2, 3));
        let order: Vec<u64> = std::iter::from_fn(|| heap.pop().map(|n| n.id)).collect();
        assert_eq!(order, vec![2, 3, 1, 0]);
    }

    // ------------------------------------------------------------------
    // alternating heuristic
    // ------------------------------------------------------------------

    #[test]
    fn heuristic_fixed_point_on_duplicate_samples() {
        let instance = inst(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]], GlobalConstraint::None);
        let z0 = TimeSeries::new(vec![1.0, 2.0, 3.0]).unwrap();
        let (z, f) = primal_heuristic(&instance, GlobalConstraint::None, z0).unwrap();
        assert_eq!(z.values(), &[1.0, 2.0, 3.0]);
        assert_eq!(f, 0.0);
    }

    #[test]
    fn heuristic_descends_monotonically() {
        for seed in 0..6 {
            let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
            let samples = (0..3)
                .map(|_| {
                    TimeSeries::new((0..5).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap()
                })
                .collect();
            let instance = Instance::new("h", samples, GlobalConstraint::None).unwrap();
            let z0 = TimeSeries::new((0..4).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
            let (_, _, _, trace) =
                heuristic_steps(&instance, GlobalConstraint::None, z0, 50, 1e-9).unwrap();
            for pair in trace.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-12,
                    "seed {seed}: value rose from {} to {}",
                    pair[0],
                    pair[1]
                );
            }
        }
    }

    #[test]
    fn heuristic_reaches_the_two_series_optimum() {
        let instance = inst(&[&[0.0, 0.0], &[2.0, 2.0]], GlobalConstraint::None);
        let z0 = TimeSeries::new(vec![0.0, 2.0]).unwrap();
        let (z, f) = primal_heuristic(&instance, GlobalConstraint::None, z0).unwrap();
        assert!((f - 2.0).abs() < 1e-12, "converged to {f}");
        for &v in z.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn heuristic_rejects_incompatible_start_lengths() {
        let instance = inst(&[&[0.0, 1.0]], GlobalConstraint::sakoe_chiba(1));
        let z0 = TimeSeries::new(vec![0.0; 4]).unwrap();
        let result = primal_heuristic(&instance, GlobalConstraint::sakoe_chiba(1), z0);
        assert!(matches!(result, Err(Error::Incompatible { m: 2, n: 4 })));
    }

    // ------------------------------------------------------------------
    // relaxations and cuts
    // ------------------------------------------------------------------

    #[test]
    fn root_relaxation_never_exceeds_the_oracle_value() {
        for seed in [11, 12, 13] {
            let instance = random_instance(seed);
            let f_star = oracle_f(&instance);
            for graph in GRAPHS {
                for distance in DISTANCES {
                    let model = built(&instance, graph, distance);
                    let LpOutcome::Optimal { value, .. } =
                        lp_relax(&model, &[], &[]).unwrap()
                    else {
                        panic!("root relaxation infeasible");
                    };
                    assert!(
                        value <= f_star + 1e-9,
                        "seed {seed} {graph}:{distance}: root {value} > optimum {f_star}"
                    );
                }
            }
        }
    }

    #[test]
    fn cut_loop_is_monotone_and_converges_on_fixed_binaries() {
        // {(0),(4)} has a single admissible assignment, so the loop of
        // relaxation plus separation must climb monotonically to the exact
        // value 4 (oracle: mean (2) at squared costs 4 + 4 over two series).
        let instance = inst(&[&[0.0], &[4.0]], GlobalConstraint::None);
        let model = built(&instance, GraphKind::Vertex, DistanceKind::Quadratic);
        let mut cuts: Vec<Row> = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for _ in 0..50 {
            let LpOutcome::Optimal { value, x } = lp_relax(&model, &cuts, &[]).unwrap() else {
                panic!("relaxation infeasible");
            };
            assert!(value >= last - 1e-9, "value fell from {last} to {value}");
            last = value;
            let mut added = 0;
            for g in model.groups() {
                if let Some(cut) = g.separate(&x, 1e-6) {
                    cuts.push(cut);
                    added += 1;
                }
            }
            if added == 0 {
                break;
            }
        }
        assert!((last - 4.0).abs() < 1e-4, "converged to {last}");
    }

    #[test]
    fn fixing_a_box_empty_is_reported_infeasible() {
        let instance = inst(&[&[0.0], &[4.0]], GlobalConstraint::None);
        let model = built(&instance, GraphKind::Vertex, DistanceKind::Quadratic);
        let col = model.binary_cols()[0];
        let outcome = lp_relax(&model, &[], &[(col, 1.0, 1.0), (col, 0.0, 0.0)]).unwrap();
        assert_eq!(outcome, LpOutcome::Infeasible);
    }

    // ------------------------------------------------------------------
    // end-to-end solves
    // ------------------------------------------------------------------

    #[test]
    fn single_series_solves_to_itself_for_all_formulations() {
        let instance = inst(&[&[1.5, -0.5, 2.0]], GlobalConstraint::None);
        for graph in GRAPHS {
            for distance in DISTANCES {
                let model = built(&instance, graph, distance);
                let result = solve(&model, &SolverConfig::default()).unwrap();
                assert_eq!(result.status, SolveStatus::Optimal, "{graph}:{distance}");
                assert!(result.primal.abs() <= 1e-9, "{graph}:{distance}");
                assert_eq!(result.gap, 0.0);
                let z = result.incumbent_mean.unwrap();
                assert_eq!(z.len(), 3);
                for (a, b) in z.values().iter().zip(instance.samples()[0].values()) {
                    assert!((a - b).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn two_singletons_meet_in_the_middle_end_to_end() {
        let instance = inst(&[&[0.0], &[4.0]], GlobalConstraint::None);
        let f_star = oracle_f(&instance);
        assert!((f_star - 4.0).abs() < 1e-12);
        let model = built(&instance, GraphKind::Vertex, DistanceKind::Quadratic);
        let result = solve(&model, &SolverConfig::default()).unwrap();
        assert_eq!(result.status, SolveStatus::Optimal);
        assert!((result.primal - 4.0).abs() <= 1e-6);
        assert_eq!(result.dual, result.primal);
        assert_eq!(result.gap, 0.0);
        assert!(result.nodes >= 1);
        let z = result.incumbent_mean.unwrap();
        assert_eq!(z.len(), 1);
        assert!((z.values()[0] - 2.0).abs() <= 1e-6);
        let paths = result.paths.unwrap();
        assert_eq!(paths.len(), 2);
    }

    #[test]
    fn narrow_itakura_two_by_two_matches_oracle() {
        let c = GlobalConstraint::itakura(1.1).unwrap();
        let instance = inst(&[&[0.0, 0.0], &[2.0, 2.0]], c);
        let f_star = oracle_f(&instance);
        assert!((f_star - 2.0).abs() < 1e-12);
        let model = built(&instance, GraphKind::Arc, DistanceKind::Quadratic);
        let result = solve(&model, &SolverConfig::default()).unwrap();
        assert_eq!(result.status, SolveStatus::Optimal);
        assert!((result.primal - 2.0).abs() <= 1e-6);
    }

    #[test]
    fn sakoe_chiba_band_is_respected_end_to_end() {
        let c = GlobalConstraint::sakoe_chiba(1);
        let instance = inst(&[&[0.0, 1.0], &[0.0, 1.0, 2.0, 3.0]], c);
        let f_star = oracle_f(&instance);
        for graph in GRAPHS {
            let model = built(&instance, graph, DistanceKind::Quadratic);
            let result = solve(&model, &SolverConfig::default()).unwrap();
            assert_eq!(result.status, SolveStatus::Optimal, "{graph}");
            assert!(
                (result.primal - f_star).abs() <= 1e-6,
                "{graph}: {} vs oracle {f_star}",
                result.primal
            );
            // The band leaves exactly one compatible mean length.
            assert_eq!(result.incumbent_mean.unwrap().len(), 3);
        }
    }

    #[test]
    fn solver_matches_oracle_on_random_tiny_instances() {
        for seed in [21, 22, 23, 24] {
            let instance = random_instance(seed);
            let f_star = oracle_f(&instance);
            for graph in GRAPHS {
                for distance in DISTANCES {
                    let clock = std::time::Instant::now();
                    let model = built(&instance, graph, distance);
                    let result = solve(&model, &SolverConfig::default()).unwrap();
                    if std::env::var_os("BNB_TRACE").is_some() {
                        eprintln!(
                            "case seed={seed} {graph}:{distance} nodes={} in {:.2}s",
                            result.nodes,
                            clock.elapsed().as_secs_f64()
                        );
                    }
                    assert_eq!(
                        result.status,
                        SolveStatus::Optimal,
                        "seed {seed} {graph}:{distance}"
                    );
                    assert!(
                        (result.primal - f_star).abs() <= 1e-6,
                        "seed {seed} {graph}:{distance}: {} vs oracle {f_star}",
                        result.primal
                    );
                    assert!(result.dual <= result.primal + 1e-9);
                }
            }
        }
    }

    #[test]
    fn heuristic_frequency_zero_still_solves_to_optimality() {
        let instance = random_instance(31);
        let f_star = oracle_f(&instance);
        let config = SolverConfig {
            heuristic_frequency: 0,
            ..SolverConfig::default()
        };
        let model = built(&instance, GraphKind::Arc, DistanceKind::Quadratic);
        let result = solve(&model, &config).unwrap();
        assert_eq!(result.status, SolveStatus::Optimal);
        assert!((result.primal - f_star).abs() <= 1e-6);
    }

    // ------------------------------------------------------------------
    // logs, cut validity, determinism, limits
    // ------------------------------------------------------------------

    #[test]
    fn logged_bounds_respect_the_optimum_and_move_monotonically() {
        let instance = random_instance(41);
        let f_star = oracle_f(&instance);
        let model = built(&instance, GraphKind::Vertex, DistanceKind::Quadratic);
        let mut events = Vec::new();
        let result = solve_logged(&model, &SolverConfig::default(), &mut |e| {
            events.push(e.clone());
        })
        .unwrap();
        assert_eq!(result.status, SolveStatus::Optimal);
        assert!(!events.is_empty());

        let floor = model.frechet_floor();
        let mut last_primal = f64::INFINITY;
        let mut last_dual = f64::NEG_INFINITY;
        let mut last_pool = 0usize;
        for event in &events {
            match *event {
                // Subtree bounds may exceed the optimum once a subtree
                // excludes it, but the root bound never can, and no bound
                // ever falls below the distance-floor the root started from.
                LogEvent::Node { depth, bound, .. } => {
                    assert!(bound >= floor - 1e-12, "bound {bound} below the floor");
                    if depth == 0 {
                        assert!(bound <= f_star + 1e-6, "root bound {bound} > {f_star}");
                    }
                }
                LogEvent::Incumbent { primal, dual, .. } => {
                    assert!(primal < last_primal, "incumbents must improve");
                    assert!(dual >= last_dual - 1e-12, "dual bound regressed");
                    assert!(dual <= f_star + 1e-6);
                    last_primal = primal;
                    last_dual = dual;
                }
                LogEvent::Cut { pool, .. } => {
                    assert!(pool > last_pool, "pool must grow with each cut");
                    last_pool = pool;
                }
            }
        }
    }

    #[test]
    fn pool_cuts_hold_at_the_oracle_optimum() {
        for (graph, distance) in [
            (GraphKind::Vertex, DistanceKind::Quadratic),
            (GraphKind::Arc, DistanceKind::Perspective),
            (GraphKind::Vertex, DistanceKind::Implicit),
        ] {
            let instance = random_instance(51);
            let best = brute_force_mean(
                &instance,
                instance.constraint(),
                mean_length_bound(&instance),
                DEFAULT_GUARD,
            )
            .unwrap();
            let model = built(&instance, graph, distance);
            let (result, cuts) =
                solve_inner(&model, &SolverConfig::default(), &mut |_| {}).unwrap();
            assert_eq!(result.status, SolveStatus::Optimal);
            let point = embed(&model, &best.z, &best.paths);
            for (idx, cut) in cuts.iter().enumerate() {
                assert!(
                    row_violation(cut, &point) <= 1e-9,
                    "{graph}:{distance}: cut {idx} violated at the optimum by {}",
                    row_violation(cut, &point)
                );
            }
        }
    }

    #[test]
    fn repeat_runs_are_identical() {
        let instance = random_instance(61);
        let model = built(&instance, GraphKind::Arc, DistanceKind::Linear);
        let run = || {
            let mut events = Vec::new();
            let result = solve_logged(&model, &SolverConfig::default(), &mut |e| {
                events.push(e.clone());
            })
            .unwrap();
            (result, events)
        };
        let (first, first_events) = run();
        let (second, second_events) = run();
        assert_eq!(first.nodes, second.nodes);
        assert_eq!(first.primal, second.primal);
        assert_eq!(first.dual, second.dual);
        assert_eq!(first_events, second_events);
    }

    #[test]
    fn node_limit_stops_with_limit_status() {
        let instance = random_instance(71);
        let model = built(&instance, GraphKind::Vertex, DistanceKind::Quadratic);
        let config = SolverConfig {
            node_limit: 0,
            ..SolverConfig::default()
        };
        let result = solve(&model, &config).unwrap();
        assert_eq!(result.status, SolveStatus::Limit);
        assert_eq!(result.nodes, 0);
        // The medoid heuristic still provides an incumbent before the tree.
        assert!(result.primal.is_finite());
        assert!(result.dual <= result.primal + 1e-9);
        assert!(result.dual >= model.frechet_floor() - 1e-12);
    }

    #[test]
    fn zero_time_limit_stops_immediately() {
        let instance = random_instance(72);
        let model = built(&instance, GraphKind::Arc, DistanceKind::Quadratic);
        let config = SolverConfig {
            time_limit: 0.0,
            ..SolverConfig::default()
        };
        let result = solve(&model, &config).unwrap();
        assert_eq!(result.status, SolveStatus::Limit);
        assert_eq!(result.nodes, 0);
    }

    // ------------------------------------------------------------------
    // solution extraction
    // ------------------------------------------------------------------

    #[test]
    fn extract_round_trips_an_embedded_optimum() {
        let instance = inst(&[&[0.0], &[4.0]], GlobalConstraint::None);
        let best = brute_force_mean(&instance, GlobalConstraint::None, 1, DEFAULT_GUARD).unwrap();
        for graph in GRAPHS {
            for distance in DISTANCES {
                let model = built(&instance, graph, distance);
                let point = embed(&model, &best.z, &best.paths);
                let (z, paths, f) = extract_solution(&model, &point).unwrap();
                assert_eq!(z.values(), best.z.values(), "{graph}:{distance}");
                assert!((f - best.f).abs() <= 1e-9);
                for (path, s) in paths.iter().zip(instance.samples()) {
                    assert_eq!(path.terminal(), (s.len(), 1));
                }
            }
        }
    }

    #[test]
    fn extract_trivial_single_point_instance() {
        let instance = inst(&[&[3.5]], GlobalConstraint::None);
        let model = built(&instance, GraphKind::Vertex, DistanceKind::Quadratic);
        let best = brute_force_mean(&instance, GlobalConstraint::None, 1, DEFAULT_GUARD).unwrap();
        let point = embed(&model, &best.z, &best.paths);
        let (z, paths, f) = extract_solution(&model, &point).unwrap();
        assert_eq!(z.values(), &[3.5]);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].vertices(), &[(1, 1)]);
        assert_eq!(f, 0.0);
    }

    #[test]
    fn extract_rejects_fractional_and_lengthless_points() {
        let instance = inst(&[&[0.0], &[4.0]], GlobalConstraint::None);
        let model = built(&instance, GraphKind::Vertex, DistanceKind::Quadratic);
        let best = brute_force_mean(&instance, GlobalConstraint::None, 1, DEFAULT_GUARD).unwrap();
        let mut fractional = embed(&model, &best.z, &best.paths);
        fractional[model.binary_cols()[0]] = 0.4;
        assert!(matches!(
            extract_solution(&model, &fractional),
            Err(Error::Inconsistent(_))
        ));

        let mut lengthless = embed(&model, &best.z, &best.paths);
        lengthless[model.x_col(1).unwrap()] = 0.0;
        assert!(matches!(
            extract_solution(&model, &lengthless),
            Err(Error::Inconsistent(_))
        ));

        assert!(matches!(
            extract_solution(&model, &[0.0]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }
}
