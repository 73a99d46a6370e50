//! Mixed-integer models of the constrained mean problem.
//!
//! A model selects a mean length (binary `x_L`), routes one warping path per
//! input series through its admissible alignment grid, and charges each
//! visited grid vertex the squared gap between the mean value at that column
//! and the input value at that row. Two path encodings are available:
//!
//! - **vertex**: binary membership variables `y_l_i_j` with downstream
//!   covering rows (an on-vertex needs an on-successor or the selected
//!   terminal), and
//! - **arc**: binary unit flows `f_l_i_j_i'_j'` with exact conservation, the
//!   membership of a vertex being its outflow (plus `x_j` at terminals).
//!   The arc relaxation is tighter: its feasible points project onto
//!   vertex-feasible points.
//!
//! Four distance encodings share those graphs:
//!
//! - **quadratic**: `d ≥ (z_j − s)² − M²(1 − y)` per vertex, objective
//!   `(1/k)·Σ d`;
//! - **linear**: residual variables `w ≥ ±(z_j − s) − M(1 − y)` with the
//!   squares moved to epigraphs `d ≥ w²`;
//! - **perspective**: per-vertex copies `zbar` with envelope rows scaling
//!   everything by the membership, plus outer-approximation rows of the
//!   scaled parabola;
//! - **implicit**: a single epigraph `eta` bounded below by the Fréchet
//!   floor, tightened at integral points by subgradient cuts built from the
//!   exact aligned-mean value.
//!
//! All convex-quadratic content is stored as [`OaGroup`] records, so every
//! node relaxation stays a pure LP; groups know how to report violation and
//! emit supporting cuts. Models are immutable once built and carry enough
//! metadata (cells, memberships, big-M values) to decode solutions and to
//! generate cuts without re-deriving the geometry.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::bounds::{self, BoundProfile};
use crate::error::{Error, Result};
use crate::series::Instance;
use crate::simplex::{LinearProgram, Row, Sense};
use crate::warping::{GlobalConstraint, WarpingPath};

mod export;

pub use export::{export_lp, parse_lp, ParsedLp};

/// Path encoding of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Vertex,
    Arc,
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphKind::Vertex => "vertex",
            GraphKind::Arc => "arc",
        })
    }
}

impl FromStr for GraphKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vertex" => Ok(GraphKind::Vertex),
            "arc" => Ok(GraphKind::Arc),
            other => Err(Error::Parse {
                line: 0,
                msg: format!("unknown graph kind '{other}' (expected vertex|arc)"),
            }),
        }
    }
}

/// Distance encoding of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    Quadratic,
    Linear,
    Perspective,
    Implicit,
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceKind::Quadratic => "quadratic",
            DistanceKind::Linear => "linear",
            DistanceKind::Perspective => "perspective",
            DistanceKind::Implicit => "implicit",
        })
    }
}

impl FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(DistanceKind::Quadratic),
            "linear" => Ok(DistanceKind::Linear),
            "perspective" => Ok(DistanceKind::Perspective),
            "implicit" => Ok(DistanceKind::Implicit),
            other => Err(Error::Parse {
                line: 0,
                msg: format!(
                    "unknown distance kind '{other}' \
                     (expected quadratic|linear|perspective|implicit)"
                ),
            }),
        }
    }
}

/// Integrality class of a variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Binary,
    Continuous,
}

/// One model variable with its box.
#[derive(Clone, Debug)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

/// One named linear constraint row.
#[derive(Clone, Debug)]
pub struct LinRow {
    pub name: String,
    pub coefs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinRow {
    /// The anonymous solver form of this row.
    pub fn as_row(&self) -> Row {
        Row {
            coefs: self.coefs.clone(),
            sense: self.sense,
            rhs: self.rhs,
        }
    }
}

/// The convex shape a group enforces between its columns.
#[derive(Clone, Debug)]
pub enum OaKind {
    /// `d ≥ (arg − shift)² − M²·(1 − membership)`.
    BigM {
        membership: Vec<(usize, f64)>,
        m_big: f64,
    },
    /// `d ≥ arg²` (plain epigraph of a square).
    Plain,
    /// `membership · (arg/membership − shift)² ≤ d` — the perspective of the
    /// shifted parabola; its linear envelope rows are installed at build
    /// time, the curved part is approximated by lazily separated rows.
    Perspective { membership: Vec<(usize, f64)> },
}

/// One convex-quadratic constraint managed by outer approximation.
///
/// `d` is the epigraph column, `arg` the curved column (`z`, `w`, or `zbar`
/// depending on the kind), and `shift` the input value the parabola is
/// centred on.
#[derive(Clone, Debug)]
pub struct OaGroup {
    pub name: String,
    pub d: usize,
    pub arg: usize,
    pub shift: f64,
    pub kind: OaKind,
}

/// Tolerance below which a membership value counts as zero during
/// perspective separation (the scaled constraint is vacuous there).
const MEMBERSHIP_EPS: f64 = 1e-9;

impl OaGroup {
    /// The membership value at `x` (1 for plain epigraph groups).
    pub fn membership_value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            OaKind::BigM { membership, .. } | OaKind::Perspective { membership } => {
                eval_expr(membership, x)
            }
            OaKind::Plain => 1.0,
        }
    }

    /// How much the exact convex constraint is violated at `x`
    /// (non-positive means satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let d = x[self.d];
        let arg = x[self.arg];
        match &self.kind {
            OaKind::BigM { m_big, .. } => {
                let y = self.membership_value(x);
                (arg - self.shift).powi(2) - m_big * m_big * (1.0 - y) - d
            }
            OaKind::Plain => arg * arg - d,
            OaKind::Perspective { .. } => {
                let y = self.membership_value(x);
                if y > MEMBERSHIP_EPS {
                    y * (arg / y - self.shift).powi(2) - d
                } else {
                    // At membership 0 the envelope rows already pin
                    // `arg = 0`; only `d ≥ 0` remains, which the bounds give.
                    -d
                }
            }
        }
    }

    /// The support point to cut at, from the relaxation values `x`.
    /// `None` when no cut applies (perspective groups at membership ≈ 0).
    pub fn support(&self, x: &[f64]) -> Option<f64> {
        match &self.kind {
            OaKind::BigM { .. } | OaKind::Plain => Some(x[self.arg]),
            OaKind::Perspective { .. } => {
                let y = self.membership_value(x);
                (y > MEMBERSHIP_EPS).then(|| x[self.arg] / y)
            }
        }
    }

    /// The supporting cut of the group's constraint at support point `p`.
    /// Every returned row is valid for all points satisfying the exact
    /// constraint and is tight at the support.
    pub fn cut_at(&self, p: f64) -> Row {
        let s = self.shift;
        let mut coefs = vec![(self.arg, 2.0 * (p - s)), (self.d, -1.0)];
        let rhs;
        match &self.kind {
            OaKind::BigM { membership, m_big } => {
                let msq = m_big * m_big;
                for &(col, coef) in membership {
                    coefs.push((col, msq * coef));
                }
                rhs = msq + p * p - s * s;
            }
            OaKind::Plain => {
                rhs = p * p;
            }
            OaKind::Perspective { membership } => {
                let scale = p * p - s * s;
                for &(col, coef) in membership {
                    coefs.push((col, -scale * coef));
                }
                rhs = 0.0;
            }
        }
        Row {
            coefs: merge_coefs(coefs),
            sense: Sense::Le,
            rhs,
        }
    }

    /// Violation check plus cut construction in one step.
    pub fn separate(&self, x: &[f64], viol_tol: f64) -> Option<Row> {
        if self.violation(x) > viol_tol {
            self.support(x).map(|p| self.cut_at(p))
        } else {
            None
        }
    }
}

/// Decides whether a perspective-scaled parabola is violated at a relaxation
/// point and, if so, returns the new support point `zbar_val / y_val`.
pub fn separate_oa_cut(
    zbar_val: f64,
    d_val: f64,
    s: f64,
    y_val: f64,
    viol_tol: f64,
) -> Option<f64> {
    if y_val <= MEMBERSHIP_EPS {
        return None;
    }
    let p = zbar_val / y_val;
    if y_val * (p - s).powi(2) - d_val > viol_tol {
        Some(p)
    } else {
        None
    }
}

/// One admissible alignment-grid vertex of one input series, with everything
/// needed to decode solutions and build cuts: the input value `s`, the big-M
/// constant, and the linear expression whose value is the vertex membership
/// (a single `y` column for vertex models; outflow plus terminal `x` for arc
/// models).
#[derive(Clone, Debug)]
pub struct DistanceCell {
    /// 0-based series index.
    pub series: usize,
    /// 1-based input row.
    pub i: usize,
    /// 1-based mean column.
    pub j: usize,
    /// Input value `s^l_i`.
    pub s: f64,
    /// `max(|s − lb_j|, |ub_j − s|)`.
    pub m_big: f64,
    /// Linear expression equal to the vertex membership.
    pub membership: Vec<(usize, f64)>,
    /// Distance/epigraph column, absent in implicit models.
    pub d: Option<usize>,
    /// Residual column, linear models only.
    pub w: Option<usize>,
    /// Scaled mean-copy column, perspective models only.
    pub zbar: Option<usize>,
}

/// Variable, row, and structure counts of a model, as exported in the JSON
/// summary.
#[derive(Clone, Debug, Serialize)]
pub struct ModelCounts {
    pub variables: usize,
    pub binaries: usize,
    pub rows: usize,
    pub quadratic_rows: usize,
    pub cells: usize,
    pub mean_lengths: Vec<usize>,
}

/// JSON-facing model summary.
#[derive(Clone, Debug, Serialize)]
pub struct ModelSummary {
    pub kinds: ModelKinds,
    pub counts: ModelCounts,
    pub digest: String,
}

/// The two axes a model is built on.
#[derive(Clone, Debug, Serialize)]
pub struct ModelKinds {
    pub graph: GraphKind,
    pub distance: DistanceKind,
}

/// An immutable mixed-integer model: variables, linear rows, lazily managed
/// convex groups, and decode metadata.
#[derive(Clone, Debug)]
pub struct Model {
    graph: GraphKind,
    distance: DistanceKind,
    digest: String,
    instance: Instance,
    n_model: usize,
    mean_lengths: Vec<usize>,
    variables: Vec<Variable>,
    rows: Vec<LinRow>,
    groups: Vec<OaGroup>,
    cells: Vec<DistanceCell>,
    cell_lookup: BTreeMap<(usize, usize, usize), usize>,
    objective: Vec<(usize, f64)>,
    x_cols: BTreeMap<usize, usize>,
    z_cols: Vec<usize>,
    eta: Option<usize>,
    floor: f64,
    attached: bool,
}

impl Model {
    pub fn graph_kind(&self) -> GraphKind {
        self.graph
    }

    pub fn distance_kind(&self) -> DistanceKind {
        self.distance
    }

    /// Hex digest of the underlying instance (values, lengths, constraint).
    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// The instance the model was built from (constraint already applied).
    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn k(&self) -> usize {
        self.instance.k()
    }

    /// Largest modeled mean length; mean columns are `1..=n()`.
    pub fn n(&self) -> usize {
        self.n_model
    }

    /// The selectable mean lengths, ascending (one `x` column each).
    pub fn mean_lengths(&self) -> &[usize] {
        &self.mean_lengths
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn rows(&self) -> &[LinRow] {
        &self.rows
    }

    pub fn groups(&self) -> &[OaGroup] {
        &self.groups
    }

    pub fn cells(&self) -> &[DistanceCell] {
        &self.cells
    }

    /// The cell of series `l` (0-based) at grid vertex `(i, j)` (1-based).
    pub fn cell(&self, series: usize, i: usize, j: usize) -> Option<&DistanceCell> {
        self.cell_lookup
            .get(&(series, i, j))
            .map(|&idx| &self.cells[idx])
    }

    /// Sparse minimization objective.
    pub fn objective(&self) -> &[(usize, f64)] {
        &self.objective
    }

    /// Objective value at a full assignment.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        eval_expr(&self.objective, x)
    }

    /// Column of the length selector `x_len`, if that length is modeled.
    pub fn x_col(&self, len: usize) -> Option<usize> {
        self.x_cols.get(&len).copied()
    }

    /// Column of the mean value `z_j` (1-based `j ∈ [1, n()]`).
    pub fn z_col(&self, j: usize) -> Option<usize> {
        (j >= 1 && j <= self.z_cols.len()).then(|| self.z_cols[j - 1])
    }

    /// Column of the implicit-objective epigraph, when present.
    pub fn eta_col(&self) -> Option<usize> {
        self.eta
    }

    /// Columns of all binary variables, ascending.
    pub fn binary_cols(&self) -> Vec<usize> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(c, _)| c)
            .collect()
    }

    pub fn var_name(&self, col: usize) -> &str {
        &self.variables[col].name
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    /// Valid lower bound on the model optimum (the Fréchet floor).
    pub fn frechet_floor(&self) -> f64 {
        self.floor
    }

    /// The base LP relaxation: all linear rows, boxes as built, integrality
    /// dropped, convex groups omitted (they enter through lazy cuts).
    pub fn lp(&self) -> LinearProgram {
        let n = self.num_vars();
        let mut objective = vec![0.0; n];
        for &(col, coef) in &self.objective {
            objective[col] += coef;
        }
        LinearProgram {
            objective,
            lower: self.variables.iter().map(|v| v.lower).collect(),
            upper: self.variables.iter().map(|v| v.upper).collect(),
            rows: self.rows.iter().map(LinRow::as_row).collect(),
        }
    }

    /// Renders the model in the text export format.
    pub fn to_lp_text(&self) -> Result<String> {
        export_lp(self)
    }

    /// The JSON-facing summary.
    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            kinds: ModelKinds {
                graph: self.graph,
                distance: self.distance,
            },
            counts: ModelCounts {
                variables: self.variables.len(),
                binaries: self.binary_cols().len(),
                rows: self.rows.len(),
                quadratic_rows: self
                    .groups
                    .iter()
                    .filter(|g| !matches!(g.kind, OaKind::Perspective { .. }))
                    .count(),
                cells: self.cells.len(),
                mean_lengths: self.mean_lengths.clone(),
            },
            digest: self.digest.clone(),
        }
    }

    /// Checks the structural invariants; a failure indicates a builder bug.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let check_col = |col: usize, what: &str| -> Result<()> {
            if col >= n {
                return Err(Error::Inconsistent(format!(
                    "{what} references column {col} of {n}"
                )));
            }
            Ok(())
        };
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::Inconsistent(format!(
                    "variable {} has bad bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
            if v.kind == VarKind::Binary && (v.lower != 0.0 || v.upper != 1.0) {
                return Err(Error::Inconsistent(format!(
                    "binary {} must be boxed [0, 1]",
                    v.name
                )));
            }
        }
        for row in &self.rows {
            if !row.rhs.is_finite() {
                return Err(Error::Inconsistent(format!(
                    "row {} has non-finite rhs",
                    row.name
                )));
            }
            for &(col, coef) in &row.coefs {
                check_col(col, &row.name)?;
                if !coef.is_finite() {
                    return Err(Error::Inconsistent(format!(
                        "row {} has a non-finite coefficient",
                        row.name
                    )));
                }
            }
        }
        for &(col, _) in &self.objective {
            check_col(col, "objective")?;
        }
        for g in &self.groups {
            check_col(g.d, &g.name)?;
            check_col(g.arg, &g.name)?;
            let membership = match &g.kind {
                OaKind::BigM { membership, m_big } => {
                    if !(*m_big >= 0.0) {
                        return Err(Error::Inconsistent(format!(
                            "group {} has negative big-M {}",
                            g.name, m_big
                        )));
                    }
                    Some(membership)
                }
                OaKind::Plain => None,
                OaKind::Perspective { membership } => Some(membership),
            };
            if let Some(membership) = membership {
                for &(col, _) in membership {
                    check_col(col, &g.name)?;
                }
                if self.graph == GraphKind::Vertex
                    && !(membership.len() == 1
                        && membership[0].1 == 1.0
                        && self.variables[membership[0].0].kind == VarKind::Binary)
                {
                    return Err(Error::Inconsistent(format!(
                        "group {} of a vertex model must reference one binary membership",
                        g.name
                    )));
                }
            }
        }
        for cell in &self.cells {
            if let Some(d) = cell.d {
                check_col(d, "cell distance")?;
                let hi = self.variables[d].upper;
                let msq = cell.m_big * cell.m_big;
                if (hi - msq).abs() > 1e-9 * (1.0 + msq) {
                    return Err(Error::Inconsistent(format!(
                        "distance column {} boxed to {hi}, expected {msq}",
                        self.variables[d].name
                    )));
                }
            }
            for &(col, _) in &cell.membership {
                check_col(col, "cell membership")?;
            }
        }
        Ok(())
    }
}

/// Value of a sparse linear expression at `x`.
pub fn eval_expr(expr: &[(usize, f64)], x: &[f64]) -> f64 {
    expr.iter().map(|&(col, coef)| coef * x[col]).sum()
}

/// Signed violation of a solver row at `x` (positive means violated).
pub fn row_violation(row: &Row, x: &[f64]) -> f64 {
    let lhs = eval_expr(&row.coefs, x);
    match row.sense {
        Sense::Le => lhs - row.rhs,
        Sense::Ge => row.rhs - lhs,
        Sense::Eq => (lhs - row.rhs).abs(),
    }
}

/// Merges duplicate columns and drops exact zeros, keeping ascending order.
fn merge_coefs(coefs: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let mut map: BTreeMap<usize, f64> = BTreeMap::new();
    for (col, coef) in coefs {
        *map.entry(col).or_insert(0.0) += coef;
    }
    map.into_iter().filter(|&(_, c)| c != 0.0).collect()
}

/// Largest mean length worth modeling: `Σ m_l − 2(k−1)`, floored at 1.
pub fn mean_length_bound(inst: &Instance) -> usize {
    let total: usize = inst.lengths().iter().sum();
    total.saturating_sub(2 * (inst.k() - 1)).max(1)
}

/// The big-M constant of one cell: the largest distance the mean value at
/// column `j` (boxed in `[lb_j, ub_j]`) can have from the input value `s`.
pub fn big_m(s_value: f64, lb_j: f64, ub_j: f64) -> f64 {
    debug_assert!(lb_j <= ub_j, "inverted interval [{lb_j}, {ub_j}]");
    (s_value - lb_j).abs().max((ub_j - s_value).abs())
}

/// FNV-1a hash of the instance content: k, lengths, values, constraint.
/// Stable across graph/distance kinds, so models of the same instance share
/// a digest.
pub fn instance_digest(inst: &Instance) -> String {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(&(inst.k() as u64).to_le_bytes());
    for s in inst.samples() {
        eat(&(s.len() as u64).to_le_bytes());
        for &v in s.values() {
            eat(&v.to_bits().to_le_bytes());
        }
    }
    eat(inst.constraint().label().as_bytes());
    format!("{h:016x}")
}

/// State shared by both graph builders while a model is under construction.
struct Skeleton {
    model: Model,
}

impl Skeleton {
    fn add_var(&mut self, name: String, kind: VarKind, lower: f64, upper: f64) -> usize {
        self.model.variables.push(Variable {
            name,
            kind,
            lower,
            upper,
        });
        self.model.variables.len() - 1
    }

    fn add_row(&mut self, name: String, coefs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.model.rows.push(LinRow {
            name,
            coefs: merge_coefs(coefs),
            sense,
            rhs,
        });
    }
}

/// Builds the graph-independent part (length selectors, mean values, cells)
/// and the per-graph structure rows, leaving the distance block to the
/// attach functions.
fn graph_skeleton(
    inst: &Instance,
    c: GlobalConstraint,
    profile: &BoundProfile,
    graph: GraphKind,
) -> Result<Skeleton> {
    let inst = inst.with_constraint(c)?;
    let n = profile.n();
    let compatible = bounds::compatible_lengths(&inst, c, n);
    let feasible = |j: usize| profile.bounds(j).is_some();
    // A length is selectable only if every column on the way to it is
    // feasible; a gap column would make the length unreachable anyway.
    let mean_lengths: Vec<usize> = compatible
        .iter()
        .copied()
        .filter(|&len| (1..=len).all(feasible))
        .collect();
    let Some(&n_model) = mean_lengths.last() else {
        return Err(Error::InfeasibleModel(format!(
            "no feasible mean length in [1, {n}] under constraint {}",
            c.label()
        )));
    };

    let mut sk = Skeleton {
        model: Model {
            graph,
            // Provisional; the attach pass records the real kind.
            distance: DistanceKind::Quadratic,
            digest: instance_digest(&inst),
            n_model,
            mean_lengths: mean_lengths.clone(),
            variables: Vec::new(),
            rows: Vec::new(),
            groups: Vec::new(),
            cells: Vec::new(),
            cell_lookup: BTreeMap::new(),
            objective: Vec::new(),
            x_cols: BTreeMap::new(),
            z_cols: Vec::new(),
            eta: None,
            floor: bounds::frechet_lb(&inst, profile),
            attached: false,
            instance: inst,
        },
    };

    for &len in &mean_lengths {
        let col = sk.add_var(format!("x_{len}"), VarKind::Binary, 0.0, 1.0);
        sk.model.x_cols.insert(len, col);
    }
    for j in 1..=n_model {
        let (lb, ub) = profile.bounds(j).expect("prefix-feasible column");
        let col = sk.add_var(format!("z_{j}"), VarKind::Continuous, lb, ub);
        sk.model.z_cols.push(col);
    }

    // Admissible cells per series, column-major for a stable ordering.
    let samples: Vec<Vec<f64>> = sk
        .model
        .instance
        .samples()
        .iter()
        .map(|s| s.values().to_vec())
        .collect();
    for (l, values) in samples.iter().enumerate() {
        let m_l = values.len();
        for j in 1..=n_model {
            let Some((lo, hi)) = bounds::union_window(c, m_l, j, &compatible) else {
                return Err(Error::Inconsistent(format!(
                    "column {j} lost its window for series {l} after length pruning"
                )));
            };
            let (lb, ub) = profile.bounds(j).expect("prefix-feasible column");
            for i in lo..=hi {
                let s = values[i - 1];
                let idx = sk.model.cells.len();
                sk.model.cells.push(DistanceCell {
                    series: l,
                    i,
                    j,
                    s,
                    m_big: big_m(s, lb, ub),
                    membership: Vec::new(),
                    d: None,
                    w: None,
                    zbar: None,
                });
                sk.model.cell_lookup.insert((l, i, j), idx);
            }
        }
    }

    let x_sum: Vec<(usize, f64)> = sk.model.x_cols.values().map(|&c| (c, 1.0)).collect();
    sk.add_row("len".into(), x_sum, Sense::Eq, 1.0);

    match graph {
        GraphKind::Vertex => build_vertex_structure(&mut sk)?,
        GraphKind::Arc => build_arc_structure(&mut sk)?,
    }
    Ok(sk)
}

/// The grid successors of `(i, j)` that are admissible cells of series `l`.
fn admissible_successors(model: &Model, l: usize, i: usize, j: usize) -> Vec<(usize, usize)> {
    [(i + 1, j), (i, j + 1), (i + 1, j + 1)]
        .into_iter()
        .filter(|&(ni, nj)| model.cell_lookup.contains_key(&(l, ni, nj)))
        .collect()
}

/// Vertex encoding: one binary `y` per cell, the start vertex forced on,
/// and a covering row per cell — an on-vertex needs an on-successor or, on
/// the last input row, the matching length selector.
fn build_vertex_structure(sk: &mut Skeleton) -> Result<()> {
    let k = sk.model.instance.k();
    let lengths = sk.model.instance.lengths();
    let cell_ids: Vec<usize> = (0..sk.model.cells.len()).collect();
    for &idx in &cell_ids {
        let (l, i, j) = {
            let c = &sk.model.cells[idx];
            (c.series, c.i, c.j)
        };
        let col = sk.add_var(format!("y_{}_{i}_{j}", l + 1), VarKind::Binary, 0.0, 1.0);
        sk.model.cells[idx].membership = vec![(col, 1.0)];
    }
    for l in 0..k {
        let Some(&start) = sk.model.cell_lookup.get(&(l, 1, 1)) else {
            return Err(Error::Inconsistent(format!(
                "start vertex of series {l} is not admissible"
            )));
        };
        let start_col = sk.model.cells[start].membership[0].0;
        sk.add_row(
            format!("src_{}", l + 1),
            vec![(start_col, 1.0)],
            Sense::Eq,
            1.0,
        );
    }
    for &idx in &cell_ids {
        let (l, i, j, y_col) = {
            let c = &sk.model.cells[idx];
            (c.series, c.i, c.j, c.membership[0].0)
        };
        let mut coefs = vec![(y_col, 1.0)];
        for (ni, nj) in admissible_successors(&sk.model, l, i, j) {
            let succ = sk.model.cell_lookup[&(l, ni, nj)];
            coefs.push((sk.model.cells[succ].membership[0].0, -1.0));
        }
        if i == lengths[l] {
            if let Some(x_col) = sk.model.x_col(j) {
                coefs.push((x_col, -1.0));
            }
        }
        sk.add_row(format!("mem_{}_{i}_{j}", l + 1), coefs, Sense::Le, 0.0);
    }
    Ok(())
}

/// Arc encoding: one binary unit flow per admissible arc, exact conservation
/// (source supplies 1, terminals demand `x_j`), and memberships equal to the
/// outflow plus the terminal selector.
fn build_arc_structure(sk: &mut Skeleton) -> Result<()> {
    let lengths = sk.model.instance.lengths();
    // inflow/outflow column lists per cell, built while creating arcs.
    let mut outflow: Vec<Vec<usize>> = vec![Vec::new(); sk.model.cells.len()];
    let mut inflow: Vec<Vec<usize>> = vec![Vec::new(); sk.model.cells.len()];
    let cell_ids: Vec<usize> = (0..sk.model.cells.len()).collect();
    for &idx in &cell_ids {
        let (l, i, j) = {
            let c = &sk.model.cells[idx];
            (c.series, c.i, c.j)
        };
        for (ni, nj) in admissible_successors(&sk.model, l, i, j) {
            let succ = sk.model.cell_lookup[&(l, ni, nj)];
            let col = sk.add_var(
                format!("f_{}_{i}_{j}_{ni}_{nj}", l + 1),
                VarKind::Binary,
                0.0,
                1.0,
            );
            outflow[idx].push(col);
            inflow[succ].push(col);
        }
    }
    for &idx in &cell_ids {
        let (l, i, j) = {
            let c = &sk.model.cells[idx];
            (c.series, c.i, c.j)
        };
        let mut membership: Vec<(usize, f64)> =
            outflow[idx].iter().map(|&col| (col, 1.0)).collect();
        let mut coefs = membership.clone();
        for &col in &inflow[idx] {
            coefs.push((col, -1.0));
        }
        let is_source = i == 1 && j == 1;
        if i == lengths[l] {
            if let Some(x_col) = sk.model.x_col(j) {
                membership.push((x_col, 1.0));
                coefs.push((x_col, 1.0));
            }
        }
        sk.add_row(
            format!("flow_{}_{i}_{j}", l + 1),
            coefs,
            Sense::Eq,
            if is_source { 1.0 } else { 0.0 },
        );
        sk.model.cells[idx].membership = merge_coefs(membership);
    }
    Ok(())
}

/// Attaches the quadratic big-M distance block: one distance variable and
/// one managed convex row per cell, objective `(1/k)·Σ d`.
///
/// # Errors
/// [`Error::Inconsistent`] if a distance block is already attached.
pub fn attach_quadratic_distances(model: &mut Model) -> Result<()> {
    check_unattached(model)?;
    let inv_k = 1.0 / model.instance.k() as f64;
    for idx in 0..model.cells.len() {
        let (l, i, j, s, m_big, membership) = {
            let c = &model.cells[idx];
            (c.series, c.i, c.j, c.s, c.m_big, c.membership.clone())
        };
        let d = push_var(
            model,
            format!("d_{}_{i}_{j}", l + 1),
            VarKind::Continuous,
            0.0,
            m_big * m_big,
        );
        model.cells[idx].d = Some(d);
        model.groups.push(OaGroup {
            name: format!("qd_{}_{i}_{j}", l + 1),
            d,
            arg: model.z_cols[j - 1],
            shift: s,
            kind: OaKind::BigM { membership, m_big },
        });
        model.objective.push((d, inv_k));
    }
    model.distance = DistanceKind::Quadratic;
    model.attached = true;
    Ok(())
}

/// Attaches the linearized distance block: residuals `w ≥ ±(z − s) − M(1−y)`
/// as plain rows, squares moved to epigraphs `d ≥ w²`, objective `(1/k)·Σ d`.
///
/// # Errors
/// As [`attach_quadratic_distances`].
pub fn attach_linear_distances(model: &mut Model) -> Result<()> {
    check_unattached(model)?;
    let inv_k = 1.0 / model.instance.k() as f64;
    for idx in 0..model.cells.len() {
        let (l, i, j, s, m_big, membership) = {
            let c = &model.cells[idx];
            (c.series, c.i, c.j, c.s, c.m_big, c.membership.clone())
        };
        let z = model.z_cols[j - 1];
        let w = push_var(
            model,
            format!("w_{}_{i}_{j}", l + 1),
            VarKind::Continuous,
            0.0,
            m_big,
        );
        let d = push_var(
            model,
            format!("d_{}_{i}_{j}", l + 1),
            VarKind::Continuous,
            0.0,
            m_big * m_big,
        );
        model.cells[idx].w = Some(w);
        model.cells[idx].d = Some(d);
        let scaled: Vec<(usize, f64)> = membership
            .iter()
            .map(|&(col, coef)| (col, m_big * coef))
            .collect();
        let mut pos = vec![(z, 1.0), (w, -1.0)];
        pos.extend_from_slice(&scaled);
        push_row(
            model,
            format!("wl_{}_{i}_{j}_p", l + 1),
            pos,
            Sense::Le,
            m_big + s,
        );
        let mut neg = vec![(z, -1.0), (w, -1.0)];
        neg.extend_from_slice(&scaled);
        push_row(
            model,
            format!("wl_{}_{i}_{j}_n", l + 1),
            neg,
            Sense::Le,
            m_big - s,
        );
        model.groups.push(OaGroup {
            name: format!("qw_{}_{i}_{j}", l + 1),
            d,
            arg: w,
            shift: 0.0,
            kind: OaKind::Plain,
        });
        model.objective.push((d, inv_k));
    }
    model.distance = DistanceKind::Linear;
    model.attached = true;
    Ok(())
}

/// Attaches the perspective distance block: per cell a scaled mean copy
/// `zbar` with envelope rows
/// `z − zbar ∈ [(1−y)·lb, (1−y)·ub]`, `zbar ∈ [y·lb, y·ub]`, `d ≤ y·M²`,
/// the initial support row at the input value (which reads `−d ≤ 0`), and a
/// managed perspective group for lazy separation. Objective `(1/k)·Σ d`.
///
/// # Errors
/// As [`attach_quadratic_distances`].
pub fn attach_perspective_oa(model: &mut Model) -> Result<()> {
    check_unattached(model)?;
    let inv_k = 1.0 / model.instance.k() as f64;
    for idx in 0..model.cells.len() {
        let (l, i, j, s, m_big, membership) = {
            let c = &model.cells[idx];
            (c.series, c.i, c.j, c.s, c.m_big, c.membership.clone())
        };
        let z = model.z_cols[j - 1];
        let (lb, ub) = {
            let v = &model.variables[z];
            (v.lower, v.upper)
        };
        let zbar = push_var(
            model,
            format!("zbar_{}_{i}_{j}", l + 1),
            VarKind::Continuous,
            lb.min(0.0),
            ub.max(0.0),
        );
        let d = push_var(
            model,
            format!("d_{}_{i}_{j}", l + 1),
            VarKind::Continuous,
            0.0,
            m_big * m_big,
        );
        model.cells[idx].zbar = Some(zbar);
        model.cells[idx].d = Some(d);
        let tag = format!("{}_{i}_{j}", l + 1);
        let with_members = |base: Vec<(usize, f64)>, scale: f64| -> Vec<(usize, f64)> {
            let mut coefs = base;
            coefs.extend(membership.iter().map(|&(col, coef)| (col, scale * coef)));
            coefs
        };
        push_row(
            model,
            format!("pzu_{tag}"),
            with_members(vec![(z, 1.0), (zbar, -1.0)], ub),
            Sense::Le,
            ub,
        );
        push_row(
            model,
            format!("pzl_{tag}"),
            with_members(vec![(z, 1.0), (zbar, -1.0)], lb),
            Sense::Ge,
            lb,
        );
        push_row(
            model,
            format!("pbu_{tag}"),
            with_members(vec![(zbar, 1.0)], -ub),
            Sense::Le,
            0.0,
        );
        push_row(
            model,
            format!("pbl_{tag}"),
            with_members(vec![(zbar, 1.0)], -lb),
            Sense::Ge,
            0.0,
        );
        push_row(
            model,
            format!("pdy_{tag}"),
            with_members(vec![(d, 1.0)], -m_big * m_big),
            Sense::Le,
            0.0,
        );
        // The support set starts at the input value itself; that first
        // outer-approximation row degenerates to −d ≤ 0.
        push_row(model, format!("poa_{tag}_0"), vec![(d, -1.0)], Sense::Le, 0.0);
        model.groups.push(OaGroup {
            name: format!("qp_{tag}"),
            d,
            arg: zbar,
            shift: s,
            kind: OaKind::Perspective { membership },
        });
        model.objective.push((d, inv_k));
    }
    model.distance = DistanceKind::Perspective;
    model.attached = true;
    Ok(())
}

/// Attaches the implicit objective: a single epigraph `eta` boxed between
/// the Fréchet floor and the loosest possible mean value, tightened later by
/// integral-point subgradient cuts.
fn attach_implicit_objective(model: &mut Model) -> Result<()> {
    check_unattached(model)?;
    let inv_k = 1.0 / model.instance.k() as f64;
    let ceiling: f64 = model.cells.iter().map(|c| c.m_big * c.m_big).sum::<f64>() * inv_k;
    let eta = push_var(
        model,
        "eta".into(),
        VarKind::Continuous,
        model.floor,
        ceiling.max(model.floor),
    );
    model.eta = Some(eta);
    model.objective.push((eta, 1.0));
    model.distance = DistanceKind::Implicit;
    model.attached = true;
    Ok(())
}

fn check_unattached(model: &Model) -> Result<()> {
    if model.attached {
        return Err(Error::Inconsistent(
            "distance block already attached".into(),
        ));
    }
    Ok(())
}

fn push_var(model: &mut Model, name: String, kind: VarKind, lower: f64, upper: f64) -> usize {
    model.variables.push(Variable {
        name,
        kind,
        lower,
        upper,
    });
    model.variables.len() - 1
}

fn push_row(model: &mut Model, name: String, coefs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
    model.rows.push(LinRow {
        name,
        coefs: merge_coefs(coefs),
        sense,
        rhs,
    });
}

/// Dispatches the distance block and installs the global dual floor.
fn finish(mut sk: Skeleton, kind: DistanceKind) -> Result<Model> {
    match kind {
        DistanceKind::Quadratic => attach_quadratic_distances(&mut sk.model)?,
        DistanceKind::Linear => attach_linear_distances(&mut sk.model)?,
        DistanceKind::Perspective => attach_perspective_oa(&mut sk.model)?,
        DistanceKind::Implicit => attach_implicit_objective(&mut sk.model)?,
    }
    if kind != DistanceKind::Implicit {
        // The Fréchet floor holds for every selectable length, so the
        // objective can carry it as an explicit valid row. The implicit
        // variant carries it as eta's lower bound instead.
        let coefs = sk.model.objective.clone();
        let rhs = sk.model.floor;
        sk.add_row("dual_floor".into(), coefs, Sense::Ge, rhs);
    }
    sk.model.validate()?;
    Ok(sk.model)
}

/// Builds the vertex-membership model of the mean problem.
///
/// # Errors
/// [`Error::InfeasibleModel`] if no mean length is feasible under `c`;
/// [`Error::Inconsistent`] on internal invariant failures.
pub fn build_vertex_model(
    inst: &Instance,
    c: GlobalConstraint,
    profile: &BoundProfile,
    distance_kind: DistanceKind,
) -> Result<Model> {
    let sk = graph_skeleton(inst, c, profile, GraphKind::Vertex)?;
    finish(sk, distance_kind)
}

/// Builds the arc-flow model of the mean problem (memberships eliminated in
/// favour of flows).
///
/// # Errors
/// As [`build_vertex_model`].
pub fn build_arc_model(
    inst: &Instance,
    c: GlobalConstraint,
    profile: &BoundProfile,
    distance_kind: DistanceKind,
) -> Result<Model> {
    let sk = graph_skeleton(inst, c, profile, GraphKind::Arc)?;
    finish(sk, distance_kind)
}

/// Builds the model of `formulation` ("graph:distance").
pub fn build_model(
    inst: &Instance,
    c: GlobalConstraint,
    profile: &BoundProfile,
    graph: GraphKind,
    distance: DistanceKind,
) -> Result<Model> {
    match graph {
        GraphKind::Vertex => build_vertex_model(inst, c, profile, distance),
        GraphKind::Arc => build_arc_model(inst, c, profile, distance),
    }
}

/// Parses a `graph:distance` formulation label.
pub fn parse_formulation(text: &str) -> Result<(GraphKind, DistanceKind)> {
    let Some((graph, distance)) = text.split_once(':') else {
        return Err(Error::Parse {
            line: 0,
            msg: format!("formulation '{text}' must look like vertex:quadratic"),
        });
    };
    Ok((graph.parse()?, distance.parse()?))
}

/// Builds the subgradient cut of the implicit objective at an integral path
/// assignment: `eta ≥ f_hat + Σ_chosen (M²/k)·(membership − 1)`, returned as
/// a `≥` row over `eta` and the membership columns.
///
/// `f_hat` must be the exact mean value of the assignment (aligned-mean
/// formula on the decoded paths).
///
/// # Errors
/// [`Error::NotPathShaped`] if the paths do not fit the model's grids or end
/// at an unmodeled length; [`Error::MismatchedTerminals`] if they disagree
/// on the terminal column; [`Error::Inconsistent`] if the model has no
/// epigraph variable.
pub fn implicit_cut(model: &Model, paths: &[WarpingPath], f_hat: f64) -> Result<Row> {
    let Some(eta) = model.eta_col() else {
        return Err(Error::Inconsistent(
            "subgradient cuts need the implicit objective epigraph".into(),
        ));
    };
    let k = model.k();
    if paths.len() != k {
        return Err(Error::NotPathShaped(format!(
            "expected {k} paths, got {}",
            paths.len()
        )));
    }
    let lengths = model.instance.lengths();
    let terminals: Vec<usize> = paths.iter().map(|p| p.terminal().1).collect();
    for (l, path) in paths.iter().enumerate() {
        if path.terminal().0 != lengths[l] {
            return Err(Error::NotPathShaped(format!(
                "path {l} ends at row {} of {}",
                path.terminal().0,
                lengths[l]
            )));
        }
    }
    let len = terminals[0];
    if terminals.iter().any(|&t| t != len) {
        return Err(Error::MismatchedTerminals(terminals));
    }
    if model.x_col(len).is_none() {
        return Err(Error::NotPathShaped(format!(
            "paths end at unmodeled mean length {len}"
        )));
    }
    let inv_k = 1.0 / k as f64;
    let mut coefs: Vec<(usize, f64)> = vec![(eta, 1.0)];
    let mut rhs = f_hat;
    for (l, path) in paths.iter().enumerate() {
        for &(i, j) in path.vertices() {
            let Some(cell) = model.cell(l, i, j) else {
                return Err(Error::NotPathShaped(format!(
                    "path {l} visits inadmissible vertex ({i}, {j})"
                )));
            };
            let weight = cell.m_big * cell.m_big * inv_k;
            for &(col, coef) in &cell.membership {
                coefs.push((col, -weight * coef));
            }
            rhs -= weight;
        }
    }
    Ok(Row {
        coefs: merge_coefs(coefs),
        sense: Sense::Ge,
        rhs,
    })
}

/// Projects a point of the arc model's LP relaxation onto the vertex model's
/// variable space: `x`, `z`, and the distance-block columns are copied
/// cell-by-cell, and each vertex membership is set to the arc point's
/// membership value (outflow plus terminal selector).
///
/// Both models must stem from the same instance, profile, and distance kind.
///
/// # Errors
/// [`Error::Inconsistent`] if the models do not pair up.
pub fn project_arc_point(arc: &Model, vertex: &Model, point: &[f64]) -> Result<Vec<f64>> {
    if arc.graph_kind() != GraphKind::Arc
        || vertex.graph_kind() != GraphKind::Vertex
        || arc.digest() != vertex.digest()
        || arc.distance_kind() != vertex.distance_kind()
        || arc.n() != vertex.n()
        || arc.cells.len() != vertex.cells.len()
    {
        return Err(Error::Inconsistent(
            "projection needs an arc/vertex pair of the same instance and kind".into(),
        ));
    }
    if point.len() != arc.num_vars() {
        return Err(Error::Inconsistent(format!(
            "projection point has {} coordinates, arc model has {}",
            point.len(),
            arc.num_vars()
        )));
    }
    let mut out = vec![0.0; vertex.num_vars()];
    for (&len, &vcol) in &vertex.x_cols {
        let acol = arc.x_col(len).ok_or_else(|| {
            Error::Inconsistent(format!("arc model misses length selector {len}"))
        })?;
        out[vcol] = point[acol];
    }
    for j in 1..=vertex.n() {
        out[vertex.z_cols[j - 1]] = point[arc.z_cols[j - 1]];
    }
    for vcell in &vertex.cells {
        let acell = arc.cell(vcell.series, vcell.i, vcell.j).ok_or_else(|| {
            Error::Inconsistent(format!(
                "arc model misses cell ({}, {}, {})",
                vcell.series, vcell.i, vcell.j
            ))
        })?;
        out[vcell.membership[0].0] = eval_expr(&acell.membership, point);
        for (vvar, avar) in [
            (vcell.d, acell.d),
            (vcell.w, acell.w),
            (vcell.zbar, acell.zbar),
        ] {
            match (vvar, avar) {
                (Some(vv), Some(av)) => out[vv] = point[av],
                (None, None) => {}
                _ => {
                    return Err(Error::Inconsistent(
                        "distance blocks of the projected pair disagree".into(),
                    ))
                }
            }
        }
    }
    if let (Some(ve), Some(ae)) = (vertex.eta_col(), arc.eta_col()) {
        out[ve] = point[ae];
    }
    Ok(out)
}

// ======================================================================
// tests
// ======================================================================
