//! Diagonal grid graphs, global warping constraints, the constrained
//! quadratic-time DTW dynamic program with path recovery, and exhaustive
//! path enumeration for small orders.
//!
//! Vertices are 1-based pairs `(i, j)` with `i ∈ [m]` indexing the first
//! series and `j ∈ [n]` the second. Arcs step right `(i, j+1)`, down
//! `(i+1, j)`, or diagonally `(i+1, j+1)`. A warping path runs from the
//! origin `(1, 1)` to a terminal `(m, j)`; the dtw-distance uses the
//! terminal `(m, n)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// A global constraint restricting admissible alignment cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConstraintRepr", into = "ConstraintRepr")]
pub enum GlobalConstraint {
    /// No restriction: every cell of `[m] × [n]` is admissible.
    None,
    /// Sakoe-Chiba band `|i − j| ≤ r`.
    SakoeChiba { r: usize },
    /// Itakura parallelogram: `1/σ ≤ j/i ≤ σ` and `1/σ ≤ (n−j+1)/(m−i+1) ≤ σ`
    /// with slope `σ ≥ 1`.
    Itakura { sigma: f64 },
}

/// Wire shape: `{"kind": "none"}`, `{"kind": "sakoe-chiba", "r": 2}`,
/// `{"kind": "itakura", "sigma": 1.5}`.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum ConstraintRepr {
    None,
    SakoeChiba { r: usize },
    Itakura { sigma: f64 },
}

impl TryFrom<ConstraintRepr> for GlobalConstraint {
    type Error = Error;

    fn try_from(repr: ConstraintRepr) -> Result<Self> {
        let c = match repr {
            ConstraintRepr::None => GlobalConstraint::None,
            ConstraintRepr::SakoeChiba { r } => GlobalConstraint::SakoeChiba { r },
            ConstraintRepr::Itakura { sigma } => GlobalConstraint::Itakura { sigma },
        };
        c.validate()?;
        Ok(c)
    }
}

impl From<GlobalConstraint> for ConstraintRepr {
    fn from(c: GlobalConstraint) -> Self {
        match c {
            GlobalConstraint::None => ConstraintRepr::None,
            GlobalConstraint::SakoeChiba { r } => ConstraintRepr::SakoeChiba { r },
            GlobalConstraint::Itakura { sigma } => ConstraintRepr::Itakura { sigma },
        }
    }
}

impl Default for GlobalConstraint {
    fn default() -> Self {
        GlobalConstraint::None
    }
}

impl GlobalConstraint {
    /// Band constraint of radius `r` (any `r ≥ 0` is valid).
    pub fn sakoe_chiba(r: usize) -> Self {
        GlobalConstraint::SakoeChiba { r }
    }

    /// Parallelogram constraint of slope `sigma`.
    ///
    /// # Errors
    /// [`Error::InvalidConstraint`] unless `sigma` is finite and ≥ 1.
    pub fn itakura(sigma: f64) -> Result<Self> {
        let c = GlobalConstraint::Itakura { sigma };
        c.validate()?;
        Ok(c)
    }

    /// Checks the parameter invariants (`σ ≥ 1`).
    pub fn validate(&self) -> Result<()> {
        match *self {
            GlobalConstraint::Itakura { sigma } if !(sigma.is_finite() && sigma >= 1.0) => Err(
                Error::InvalidConstraint(format!("itakura slope must be >= 1, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }

    /// Short label used in reports: `none`, `sakoe-chiba:<r>`, `itakura:<σ>`.
    pub fn label(&self) -> String {
        match *self {
            GlobalConstraint::None => "none".into(),
            GlobalConstraint::SakoeChiba { r } => format!("sakoe-chiba:{r}"),
            GlobalConstraint::Itakura { sigma } => format!("itakura:{sigma}"),
        }
    }
}

/// The admissible row interval `{i ∈ [m] : (i, j) admissible}` for column `j`
/// of the `m × n` grid, or `None` when empty.
///
/// Ratio conditions are evaluated in multiplied form (`i ≤ σ·j` etc.), never
/// by division, so boundary cells are classified exactly.
///
/// # Errors
/// [`Error::IndexOutOfRange`] unless `1 ≤ j ≤ n`.
pub fn constraint_window(
    c: GlobalConstraint,
    m: usize,
    n: usize,
    j: usize,
) -> Result<Option<(usize, usize)>> {
    if j < 1 || j > n {
        return Err(Error::IndexOutOfRange {
            what: "column j",
            value: j,
            max: n,
        });
    }
    let window = match c {
        GlobalConstraint::None => Some((1, m)),
        GlobalConstraint::SakoeChiba { r } => {
            let a = j.saturating_sub(r).max(1);
            let b = (j + r).min(m);
            (a <= b).then_some((a, b))
        }
        GlobalConstraint::Itakura { sigma } => {
            let admit = |i: usize| {
                let (fi, fj) = (i as f64, j as f64);
                let (tail_i, tail_j) = ((m - i + 1) as f64, (n - j + 1) as f64);
                fi <= sigma * fj
                    && fj <= sigma * fi
                    && tail_i <= sigma * tail_j
                    && tail_j <= sigma * tail_i
            };
            let a = (1..=m).find(|&i| admit(i));
            // The window is an interval (intersection of two intervals in i),
            // so scanning from both ends is exact.
            a.map(|a| (a, (a..=m).rev().find(|&i| admit(i)).unwrap_or(a)))
        }
    };
    Ok(window)
}

/// Whether any warping path of order `m × n` satisfies the constraint.
pub fn is_compatible(c: GlobalConstraint, m: usize, n: usize) -> bool {
    match c {
        GlobalConstraint::None => true,
        GlobalConstraint::SakoeChiba { r } => m.abs_diff(n) <= r,
        GlobalConstraint::Itakura { sigma } => {
            let (fm, fn_) = (m as f64, n as f64);
            fm <= sigma * fn_ && fn_ <= sigma * fm
        }
    }
}

/// An `m × n` diagonal grid with per-column admissible row intervals.
#[derive(Clone, Debug)]
pub struct DiagonalGrid {
    m: usize,
    n: usize,
    windows: Vec<Option<(usize, usize)>>,
}

impl DiagonalGrid {
    /// Builds the grid for `m × n` under `c`.
    ///
    /// # Errors
    /// [`Error::IndexOutOfRange`] if `m` or `n` is zero.
    pub fn new(m: usize, n: usize, c: GlobalConstraint) -> Result<Self> {
        if m == 0 {
            return Err(Error::IndexOutOfRange {
                what: "row count m",
                value: 0,
                max: usize::MAX,
            });
        }
        let windows = (1..=n)
            .map(|j| constraint_window(c, m, n, j))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { m, n, windows })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The admissible row interval of column `j` (1-based).
    pub fn window(&self, j: usize) -> Option<(usize, usize)> {
        self.windows[j - 1]
    }

    /// Whether vertex `(i, j)` is admissible.
    pub fn admissible(&self, i: usize, j: usize) -> bool {
        i >= 1
            && i <= self.m
            && j >= 1
            && j <= self.n
            && matches!(self.windows[j - 1], Some((a, b)) if a <= i && i <= b)
    }

    /// Admissible out-neighbors of `(i, j)` in step order right, down,
    /// diagonal.
    pub fn out_neighbors(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        [(i, j + 1), (i + 1, j), (i + 1, j + 1)]
            .into_iter()
            .filter(move |&(a, b)| self.admissible(a, b))
    }
}

/// A warping path: starts at `(1, 1)`, steps `(+0,+1)`, `(+1,+0)` or
/// `(+1,+1)`, per-column row sets contiguous.
///
/// Serializes as the bare vertex array; deserialization is deliberately
/// absent so paths always pass [`WarpingPath::new`] validation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct WarpingPath {
    vertices: Vec<(usize, usize)>,
}

impl WarpingPath {
    /// Validates the start vertex and the step pattern.
    ///
    /// # Errors
    /// [`Error::InvalidPath`] if empty, not starting at `(1, 1)`, or
    /// containing a non-step transition.
    pub fn new(vertices: Vec<(usize, usize)>) -> Result<Self> {
        match vertices.first() {
            None => return Err(Error::InvalidPath("empty".into())),
            Some(&(1, 1)) => {}
            Some(&v) => {
                return Err(Error::InvalidPath(format!("starts at {v:?}, not (1, 1)")));
            }
        }
        for pair in vertices.windows(2) {
            let ((i0, j0), (i1, j1)) = (pair[0], pair[1]);
            let step_ok = (i1 == i0 || i1 == i0 + 1)
                && (j1 == j0 || j1 == j0 + 1)
                && (i1, j1) != (i0, j0);
            if !step_ok {
                return Err(Error::InvalidPath(format!(
                    "illegal step {:?} -> {:?}",
                    (i0, j0),
                    (i1, j1)
                )));
            }
        }
        Ok(Self { vertices })
    }

    /// The vertex sequence, origin first.
    pub fn vertices(&self) -> &[(usize, usize)] {
        &self.vertices
    }

    /// The final vertex `(m, j)`.
    pub fn terminal(&self) -> (usize, usize) {
        *self.vertices.last().expect("paths are nonempty")
    }

    /// The squared path cost `Σ (s_i − t_j)²` over the path's vertices.
    pub fn cost(&self, s: &TimeSeries, t: &TimeSeries) -> f64 {
        self.vertices
            .iter()
            .map(|&(i, j)| {
                let d = s.values()[i - 1] - t.values()[j - 1];
                d * d
            })
            .sum()
    }

    /// Whether every vertex lies inside its column's window.
    pub fn admissible_in(&self, grid: &DiagonalGrid) -> bool {
        self.vertices.iter().all(|&(i, j)| grid.admissible(i, j))
    }
}

/// Infinite sentinel for inadmissible DP cells; never enters arithmetic.
const INF: f64 = f64::INFINITY;

/// The constrained dtw-distance and one optimal warping path.
///
/// The distance is `min over admissible paths of sqrt(Σ (s_i − s'_j)²)`;
/// internal computation stays in squared costs, the root is taken at the
/// boundary. Cost ties during path recovery prefer diagonal over down over
/// right steps, so outputs are deterministic.
///
/// # Errors
/// [`Error::Incompatible`] when no admissible path exists for the lengths.
pub fn dtw(s: &TimeSeries, t: &TimeSeries, c: GlobalConstraint) -> Result<(f64, WarpingPath)> {
    let (m, n) = (s.len(), t.len());
    if !is_compatible(c, m, n) {
        return Err(Error::Incompatible { m, n });
    }
    let grid = DiagonalGrid::new(m, n, c)?;
    let idx = |i: usize, j: usize| (i - 1) * n + (j - 1);
    let mut dp = vec![INF; m * n];
    // Step taken INTO the cell: 0 = origin, 1 = diagonal, 2 = down, 3 = right.
    let mut step = vec![0u8; m * n];
    for j in 1..=n {
        let Some((a, b)) = grid.window(j) else {
            continue;
        };
        for i in a..=b {
            let d = s.values()[i - 1] - t.values()[j - 1];
            let cell = d * d;
            if (i, j) == (1, 1) {
                dp[idx(1, 1)] = cell;
                continue;
            }
            let mut best = INF;
            let mut how = 0u8;
            if i > 1 && j > 1 && grid.admissible(i - 1, j - 1) && dp[idx(i - 1, j - 1)] < best {
                best = dp[idx(i - 1, j - 1)];
                how = 1;
            }
            if i > 1 && grid.admissible(i - 1, j) && dp[idx(i - 1, j)] < best {
                best = dp[idx(i - 1, j)];
                how = 2;
            }
            if j > 1 && grid.admissible(i, j - 1) && dp[idx(i, j - 1)] < best {
                best = dp[idx(i, j - 1)];
                how = 3;
            }
            if best < INF {
                dp[idx(i, j)] = cell + best;
                step[idx(i, j)] = how;
            }
        }
    }
    let total = dp[idx(m, n)];
    if !total.is_finite() {
        // Ratio-compatible Itakura shapes can still have an empty interior
        // column on small integer grids (e.g. 2 × 3 at slope 1.5, where
        // m/n sits exactly on the 1/σ boundary); no path exists then.
        return Err(Error::Incompatible { m, n });
    }
    let mut vertices = Vec::new();
    let (mut i, mut j) = (m, n);
    loop {
        vertices.push((i, j));
        match step[idx(i, j)] {
            0 => break,
            1 => {
                i -= 1;
                j -= 1;
            }
            2 => i -= 1,
            3 => j -= 1,
            _ => unreachable!(),
        }
    }
    vertices.reverse();
    Ok((total.sqrt(), WarpingPath::new(vertices)?))
}

/// Default size cap for exhaustive enumeration: refuse when `m + n` exceeds it.
pub const DEFAULT_ENUMERATION_CAP: usize = 16;

/// All admissible warping paths from `(1, 1)` to `(m, n)`, unique, in
/// lexicographic vertex-sequence order. Guarded by
/// [`DEFAULT_ENUMERATION_CAP`].
///
/// # Errors
/// [`Error::EnumerationCap`] when `m + n` exceeds the cap.
pub fn enumerate_paths(m: usize, n: usize, c: GlobalConstraint) -> Result<Vec<WarpingPath>> {
    enumerate_paths_capped(m, n, c, DEFAULT_ENUMERATION_CAP)
}

/// [`enumerate_paths`] with an explicit cap, for callers with their own
/// size guards.
pub fn enumerate_paths_capped(
    m: usize,
    n: usize,
    c: GlobalConstraint,
    cap: usize,
) -> Result<Vec<WarpingPath>> {
    if m + n > cap {
        return Err(Error::EnumerationCap { m, n, cap });
    }
    let grid = DiagonalGrid::new(m, n, c)?;
    let mut paths = Vec::new();
    if !grid.admissible(1, 1) {
        return Ok(paths);
    }
    let mut stack = vec![(1usize, 1usize)];
    // Depth-first in step order right < down < diagonal, which equals
    // lexicographic order of the vertex sequences.
    fn recurse(
        grid: &DiagonalGrid,
        stack: &mut Vec<(usize, usize)>,
        paths: &mut Vec<WarpingPath>,
    ) {
        let &(i, j) = stack.last().expect("stack nonempty");
        if (i, j) == (grid.m(), grid.n()) {
            paths.push(WarpingPath::new(stack.clone()).expect("construction is step-valid"));
            return;
        }
        for (a, b) in [(i, j + 1), (i + 1, j), (i + 1, j + 1)] {
            if grid.admissible(a, b) {
                stack.push((a, b));
                recurse(grid, stack, paths);
                stack.pop();
            }
        }
    }
    recurse(&grid, &mut stack, &mut paths);
    Ok(paths)
}

/// All admissible warping paths of order `m × j` ending at `(m, j)` — the
/// grid geometry is that of `D(m, j)` itself, since a path ending at column
/// `j` aligns against a mean of length `j`. The ambient `n` only validates
/// the column index; the size guard applies to `m + j`.
///
/// # Errors
/// [`Error::IndexOutOfRange`] unless `1 ≤ j ≤ n`; [`Error::EnumerationCap`]
/// as in [`enumerate_paths`].
pub fn enumerate_paths_to_column(
    m: usize,
    n: usize,
    j: usize,
    c: GlobalConstraint,
) -> Result<Vec<WarpingPath>> {
    if j < 1 || j > n {
        return Err(Error::IndexOutOfRange {
            what: "column j",
            value: j,
            max: n,
        });
    }
    enumerate_paths(m, j, c)
}

/// Number of admissible `(1,1) → (m,n)` paths, saturating at `limit`.
/// Supports oracle size guards without materializing paths.
pub fn count_paths_saturating(m: usize, n: usize, c: GlobalConstraint, limit: u128) -> u128 {
    let Ok(grid) = DiagonalGrid::new(m, n, c) else {
        return 0;
    };
    let idx = |i: usize, j: usize| (i - 1) * n + (j - 1);
    let mut ways = vec![0u128; m * n];
    if grid.admissible(1, 1) {
        ways[idx(1, 1)] = 1;
    }
    for j in 1..=n {
        let Some((a, b)) = grid.window(j) else {
            continue;
        };
        for i in a..=b {
            if (i, j) == (1, 1) {
                continue;
            }
            let mut total: u128 = 0;
            if i > 1 && j > 1 && grid.admissible(i - 1, j - 1) {
                total += ways[idx(i - 1, j - 1)];
            }
            if i > 1 && grid.admissible(i - 1, j) {
                total += ways[idx(i - 1, j)];
            }
            if j > 1 && grid.admissible(i, j - 1) {
                total += ways[idx(i, j - 1)];
            }
            ways[idx(i, j)] = total.min(limit);
        }
    }
    ways[idx(m, n)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::synthetic_pool;
    use proptest::prelude::*;

    fn ts(values: &[f64]) -> TimeSeries {
        TimeSeries::new(values.to_vec()).unwrap()
    }

    const SC2: GlobalConstraint = GlobalConstraint::SakoeChiba { r: 2 };

    fn itakura(sigma: f64) -> GlobalConstraint {
        GlobalConstraint::itakura(sigma).unwrap()
    }

    // ---------------- constraint_window ----------------

    #[test]
    fn window_examples() {
        assert_eq!(
            constraint_window(GlobalConstraint::sakoe_chiba(1), 3, 3, 2).unwrap(),
            Some((1, 3))
        );
        assert_eq!(
            constraint_window(GlobalConstraint::None, 5, 7, 4).unwrap(),
            Some((1, 5))
        );
        assert_eq!(constraint_window(itakura(1.5), 4, 4, 1).unwrap(), Some((1, 1)));
    }

    #[test]
    fn window_rejects_out_of_range_column() {
        assert!(matches!(
            constraint_window(GlobalConstraint::None, 3, 3, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            constraint_window(GlobalConstraint::None, 3, 3, 4),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn window_can_be_empty_for_distant_columns() {
        // m=2, n=9, r=1: column 9 needs i >= 8 > m.
        assert_eq!(
            constraint_window(GlobalConstraint::sakoe_chiba(1), 2, 9, 9).unwrap(),
            None
        );
    }

    #[test]
    fn sakoe_chiba_windows_nest_monotonically() {
        for (m, n) in [(4, 6), (6, 4), (5, 5)] {
            for r in 0..4usize {
                for j in 1..=n {
                    let small = constraint_window(GlobalConstraint::sakoe_chiba(r), m, n, j)
                        .unwrap();
                    let big = constraint_window(GlobalConstraint::sakoe_chiba(r + 1), m, n, j)
                        .unwrap();
                    if let Some((a, b)) = small {
                        let (a2, b2) = big.expect("superset window nonempty");
                        assert!(a2 <= a && b <= b2, "r={r} j={j}");
                    }
                }
            }
        }
    }

    #[test]
    fn endpoints_admissible_whenever_compatible() {
        let constraints = [
            GlobalConstraint::None,
            GlobalConstraint::sakoe_chiba(0),
            GlobalConstraint::sakoe_chiba(2),
            itakura(1.1),
            itakura(1.5),
            itakura(3.0),
        ];
        for c in constraints {
            for m in 1..=8usize {
                for n in 1..=8usize {
                    if !is_compatible(c, m, n) {
                        continue;
                    }
                    let grid = DiagonalGrid::new(m, n, c).unwrap();
                    assert!(grid.admissible(1, 1), "{c:?} {m}x{n} origin");
                    assert!(grid.admissible(m, n), "{c:?} {m}x{n} corner");
                }
            }
        }
    }

    // ---------------- is_compatible ----------------

    #[test]
    fn compatibility_examples() {
        assert!(!is_compatible(GlobalConstraint::sakoe_chiba(5), 10, 18));
        assert!(is_compatible(GlobalConstraint::sakoe_chiba(8), 10, 18));
        assert!(!is_compatible(itakura(1.5), 10, 20));
        assert!(is_compatible(itakura(1.1), 10, 10));
        assert!(is_compatible(itakura(2.0), 10, 20));
    }

    // ---------------- dtw ----------------

    #[test]
    fn dtw_identity_is_zero_with_diagonal_path() {
        let s = ts(&[0.3, -1.0, 4.0, 2.5]);
        let (d, p) = dtw(&s, &s, GlobalConstraint::None).unwrap();
        assert_eq!(d, 0.0);
        let diagonal: Vec<(usize, usize)> = (1..=4).map(|i| (i, i)).collect();
        assert_eq!(p.vertices(), diagonal.as_slice());
    }

    #[test]
    fn dtw_three_two_example() {
        let (d, p) = dtw(&ts(&[0.0, 1.0, 2.0]), &ts(&[0.0, 2.0]), GlobalConstraint::None).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        // Cost ties at the corner; the diagonal-first tie-break picks this path.
        assert_eq!(p.vertices(), &[(1, 1), (2, 1), (3, 2)]);
    }

    #[test]
    fn dtw_singletons() {
        let (d, p) = dtw(&ts(&[-1.5]), &ts(&[2.0]), GlobalConstraint::None).unwrap();
        assert!((d - 3.5).abs() < 1e-12);
        assert_eq!(p.vertices(), &[(1, 1)]);
    }

    #[test]
    fn dtw_incompatible_is_an_infeasible_error() {
        let err = dtw(
            &ts(&[0.0; 10]),
            &ts(&[0.0; 18]),
            GlobalConstraint::sakoe_chiba(5),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Incompatible { m: 10, n: 18 }));
    }

    #[test]
    fn dtw_unconstrained_distance_is_symmetric() {
        let pool = synthetic_pool(6, 7, 5);
        for pair in pool.chunks(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let (dab, _) = dtw(a, b, GlobalConstraint::None).unwrap();
            let (dba, _) = dtw(b, a, GlobalConstraint::None).unwrap();
            assert!((dab - dba).abs() < 1e-12);
        }
    }

    #[test]
    fn dtw_triangle_inequality_violation_pinned() {
        // Collapsible alignments break the triangle inequality: the middle
        // series (0, 1) is close to both flats, but the flats are √5 apart.
        let x = ts(&[0.0; 5]);
        let y = ts(&[0.0, 1.0]);
        let z = ts(&[1.0; 5]);
        let (dxz, _) = dtw(&x, &z, GlobalConstraint::None).unwrap();
        let (dxy, _) = dtw(&x, &y, GlobalConstraint::None).unwrap();
        let (dyz, _) = dtw(&y, &z, GlobalConstraint::None).unwrap();
        assert!((dxz - 5.0_f64.sqrt()).abs() < 1e-12);
        assert!((dxy - 1.0).abs() < 1e-12);
        assert!((dyz - 1.0).abs() < 1e-12);
        assert!(dxz > dxy + dyz + 0.2);
    }

    #[test]
    fn dp_matches_enumeration_on_small_grids() {
        let pool = synthetic_pool(24, 6, 11);
        let constraints = [
            GlobalConstraint::None,
            GlobalConstraint::sakoe_chiba(0),
            GlobalConstraint::sakoe_chiba(1),
            SC2,
            itakura(1.1),
            itakura(1.5),
        ];
        let mut checked = 0usize;
        for m in 1..=6usize {
            for n in 1..=6usize {
                let s = ts(&pool[m].values()[..m]);
                let t = ts(&pool[6 + n].values()[..n]);
                for c in constraints {
                    if !is_compatible(c, m, n) {
                        continue;
                    }
                    let paths = enumerate_paths(m, n, c).unwrap();
                    match dtw(&s, &t, c) {
                        Ok((d, path)) => {
                            let best =
                                paths.iter().map(|p| p.cost(&s, &t)).fold(INF, f64::min);
                            assert!((d * d - best).abs() < 1e-9, "{c:?} {m}x{n}");
                            let grid = DiagonalGrid::new(m, n, c).unwrap();
                            assert!(path.admissible_in(&grid));
                            checked += 1;
                        }
                        // Ratio-compatible but an interior column is empty:
                        // enumeration must agree that no path exists.
                        Err(Error::Incompatible { .. }) => {
                            assert!(paths.is_empty());
                            checked += 1;
                        }
                        Err(other) => panic!("unexpected error {other:?}"),
                    }
                }
            }
        }
        assert!(checked > 100);
    }

    // ---------------- enumeration ----------------

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_paths(2, 2, GlobalConstraint::None).unwrap().len(), 3);
        assert_eq!(enumerate_paths(3, 3, GlobalConstraint::None).unwrap().len(), 13);
        assert_eq!(enumerate_paths(2, 1, GlobalConstraint::None).unwrap().len(), 1);
    }

    #[test]
    fn enumeration_is_lexicographic_and_unique() {
        let paths = enumerate_paths(3, 3, GlobalConstraint::None).unwrap();
        for pair in paths.windows(2) {
            assert!(pair[0] < pair[1]);
        }
    }

    #[test]
    fn enumeration_respects_windows() {
        let c = GlobalConstraint::sakoe_chiba(1);
        let paths = enumerate_paths(4, 4, c).unwrap();
        let grid = DiagonalGrid::new(4, 4, c).unwrap();
        assert!(!paths.is_empty());
        for p in &paths {
            assert!(p.admissible_in(&grid));
        }
        // The band excludes some unconstrained paths.
        assert!(paths.len() < enumerate_paths(4, 4, GlobalConstraint::None).unwrap().len());
    }

    #[test]
    fn enumeration_cap_refusal() {
        let err = enumerate_paths(9, 8, GlobalConstraint::None).unwrap_err();
        assert!(matches!(
            err,
            Error::EnumerationCap {
                m: 9,
                n: 8,
                cap: DEFAULT_ENUMERATION_CAP
            }
        ));
        assert!(enumerate_paths_capped(9, 8, GlobalConstraint::None, 17). is_ok());
    }

    #[test]
    fn paths_to_column_examples() {
        let p = enumerate_paths_to_column(1, 3, 2, GlobalConstraint::None).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].vertices(), &[(1, 1), (1, 2)]);

        let p = enumerate_paths_to_column(2, 2, 1, GlobalConstraint::None).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].vertices(), &[(1, 1), (2, 1)]);

        assert_eq!(
            enumerate_paths_to_column(3, 3, 3, GlobalConstraint::None)
                .unwrap()
                .len(),
            13
        );
        assert!(matches!(
            enumerate_paths_to_column(3, 3, 4, GlobalConstraint::None),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn count_paths_matches_enumeration() {
        for (m, n) in [(1, 1), (2, 2), (3, 3), (4, 2), (5, 5)] {
            for c in [GlobalConstraint::None, GlobalConstraint::sakoe_chiba(1), itakura(1.5)] {
                let count = count_paths_saturating(m, n, c, u128::MAX);
                let listed = enumerate_paths(m, n, c).unwrap().len() as u128;
                assert_eq!(count, listed, "{c:?} {m}x{n}");
            }
        }
    }

    #[test]
    fn path_constructor_rejects_bad_sequences() {
        assert!(WarpingPath::new(vec![]).is_err());
        assert!(WarpingPath::new(vec![(2, 1)]).is_err());
        assert!(WarpingPath::new(vec![(1, 1), (3, 1)]).is_err());
        assert!(WarpingPath::new(vec![(1, 1), (1, 1)]).is_err());
        assert!(WarpingPath::new(vec![(1, 1), (2, 2), (2, 1)]).is_err());
        assert!(WarpingPath::new(vec![(1, 1), (2, 2), (3, 2)]).is_ok());
    }

    // ---------------- properties ----------------

    proptest! {
        #[test]
        fn dp_cost_is_at_most_any_sampled_path_cost(
            m in 1usize..7,
            n in 1usize..7,
            seed in 0u64..50,
        ) {
            let pool = synthetic_pool(2, 7, seed);
            let s = ts(&pool[0].values()[..m]);
            let t = ts(&pool[1].values()[..n]);
            let (d, _) = dtw(&s, &t, GlobalConstraint::None).unwrap();
            for p in enumerate_paths(m, n, GlobalConstraint::None).unwrap() {
                prop_assert!(d * d <= p.cost(&s, &t) + 1e-9);
            }
        }

        #[test]
        fn windows_union_covers_every_admissible_cell(
            m in 1usize..7,
            n in 1usize..7,
            r in 0usize..3,
        ) {
            // Every path vertex must fall inside its column window.
            let c = GlobalConstraint::sakoe_chiba(r);
            if is_compatible(c, m, n) {
                for p in enumerate_paths(m, n, c).unwrap() {
                    for &(i, j) in p.vertices() {
                        let (a, b) = constraint_window(c, m, n, j).unwrap().unwrap();
                        prop_assert!(a <= i && i <= b);
                    }
                }
            }
        }
    }
}
