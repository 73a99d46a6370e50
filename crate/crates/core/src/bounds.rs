//! Bounds on the values a mean series can take, and the derived lower bound
//! on the Fréchet function.
//!
//! The simple bounds `ub_sim`/`lb_sim` are the extreme input values. The
//! improved bound `ub_imp` is the largest combined average over one interval
//! per series,
//! `max { Σ_l Σ_{i∈I_l} s^l_i / Σ_l |I_l| }`,
//! found as the unique root of the piecewise-linear decreasing function
//! `f(K) = Σ_l max_{I_l} (Σ_{i∈I_l} s^l_i − K·|I_l|)`
//! by bisection; `lb_imp` is symmetric via negated series. Restricting the
//! intervals to per-column constraint windows yields per-index bounds
//! `lb_j ≤ z_j ≤ ub_j`, collected in a [`BoundProfile`] together with a
//! lower bound on the Fréchet function built from squared clip distances.
//!
//! Upper bounds are rounded up and lower bounds down by the search
//! tolerance, so every profile entry is a valid bound; downstream big-M
//! values and pruning steps rely on this one-sidedness.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::series::Instance;
use crate::warping::{constraint_window, is_compatible, GlobalConstraint};

/// Default bisection tolerance (absolute, in signal units).
pub const DEFAULT_TOL: f64 = 1e-9;

/// Per-index value bounds for mean positions `1..=N` plus the Fréchet floor.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundProfile {
    per_index: Vec<Option<(f64, f64)>>,
    frechet_lb: f64,
}

impl BoundProfile {
    /// The maximum mean length N covered by the profile.
    pub fn n(&self) -> usize {
        self.per_index.len()
    }

    /// `(lb_j, ub_j)` for a feasible position `j` (1-based), else `None`.
    pub fn bounds(&self, j: usize) -> Option<(f64, f64)> {
        self.per_index.get(j - 1).copied().flatten()
    }

    /// The feasible mean positions, ascending.
    pub fn feasible_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.per_index
            .iter()
            .enumerate()
            .filter_map(|(idx, b)| b.map(|_| idx + 1))
    }

    /// Lower bound on the Fréchet function; `+∞` when no position is feasible.
    pub fn frechet_lb(&self) -> f64 {
        self.frechet_lb
    }
}

/// Largest value occurring in the input.
pub fn ub_sim(inst: &Instance) -> f64 {
    fold_values(inst, f64::NEG_INFINITY, f64::max)
}

/// Smallest value occurring in the input.
pub fn lb_sim(inst: &Instance) -> f64 {
    fold_values(inst, f64::INFINITY, f64::min)
}

fn fold_values(inst: &Instance, init: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
    inst.samples()
        .iter()
        .flat_map(|s| s.values().iter().copied())
        .fold(init, f)
}

/// Checks one 1-based inclusive window per series against the series lengths.
fn validate_windows(inst: &Instance, windows: &[(usize, usize)]) -> Result<()> {
    if windows.len() != inst.k() {
        return Err(Error::IndexOutOfRange {
            what: "window count",
            value: windows.len(),
            max: inst.k(),
        });
    }
    for (l, (&(a, b), s)) in windows.iter().zip(inst.samples()).enumerate() {
        if a < 1 || b > s.len() {
            return Err(Error::IndexOutOfRange {
                what: "window bound",
                value: b.max(a),
                max: s.len(),
            });
        }
        if a > b {
            return Err(Error::EmptyWindow { series: l + 1 });
        }
    }
    Ok(())
}

/// `max over intervals [a,b] ⊆ window of (Σ values[a..=b] − K·(b−a+1))`,
/// with 1-based window bounds.
fn max_interval_excess(values: &[f64], window: (usize, usize), k_val: f64) -> f64 {
    let (a0, b0) = window;
    // prefix[i] = Σ values[..i] over the original indexing.
    let mut prefix = vec![0.0; values.len() + 1];
    for (i, v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let mut best = f64::NEG_INFINITY;
    for a in a0..=b0 {
        for b in a..=b0 {
            let excess = prefix[b] - prefix[a - 1] - k_val * (b - a + 1) as f64;
            best = best.max(excess);
        }
    }
    best
}

/// Exact value of `f(K)` by interval enumeration over prefix sums;
/// `O(Σ m_l²)` time. `windows` restricts the intervals per series
/// (default: full ranges).
///
/// # Errors
/// [`Error::EmptyWindow`] / [`Error::IndexOutOfRange`] on an unusable window
/// restriction.
pub fn eval_f(inst: &Instance, k_val: f64, windows: Option<&[(usize, usize)]>) -> Result<f64> {
    if let Some(windows) = windows {
        validate_windows(inst, windows)?;
    }
    Ok(inst
        .samples()
        .iter()
        .enumerate()
        .map(|(l, s)| {
            let window = windows.map_or((1, s.len()), |w| w[l]);
            max_interval_excess(s.values(), window, k_val)
        })
        .sum())
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidTolerance(tol));
    }
    Ok(())
}

/// The improved upper bound: the root of `f`, bisected within the bracket
/// `(1/k)·Σ_l max_i s^l_i ≤ ub_imp ≤ ub_sim` and rounded up by `tol` so the
/// returned value satisfies `f(result) ≤ 0` (a valid bound).
///
/// # Errors
/// [`Error::InvalidTolerance`] on a bad `tol`; window errors as in [`eval_f`].
pub fn ub_imp(inst: &Instance, windows: Option<&[(usize, usize)]>, tol: f64) -> Result<f64> {
    check_tol(tol)?;
    if let Some(windows) = windows {
        validate_windows(inst, windows)?;
    }
    let series_max = |l: usize| {
        let s = inst.samples()[l].values();
        let (a, b) = windows.map_or((1, s.len()), |w| w[l]);
        s[a - 1..b].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    };
    let k = inst.k();
    let mut lo = (0..k).map(series_max).sum::<f64>() / k as f64;
    let mut hi = (0..k).map(series_max).fold(f64::NEG_INFINITY, f64::max);
    // f(lo) ≥ 0 (per-series singleton maxima attain it) and f(hi) ≤ 0
    // (every interval average is ≤ hi); bisection keeps f(hi) ≤ 0.
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if eval_f(inst, mid, windows)? <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // The loop certifies every accepted midpoint, but the initial bracket
    // end is only mathematically certified: prefix-sum rounding can leave
    // the computed f a few ulps above zero when no midpoint replaced it
    // (e.g. k = 1, where the bracket starts degenerate). Slope ≤ −k ≤ −1
    // makes the repair step at most the computed excess.
    let mut guard = 0;
    loop {
        let excess = eval_f(inst, hi, windows)?;
        if excess <= 0.0 {
            return Ok(hi);
        }
        hi += excess.max(hi.abs().max(1.0) * f64::EPSILON);
        guard += 1;
        if guard > 64 {
            return Err(Error::Numeric(
                "upper-bound root certificate did not stabilize".into(),
            ));
        }
    }
}

/// The improved lower bound, via [`ub_imp`] on negated series; rounded down
/// by `tol`.
///
/// # Errors
/// As [`ub_imp`].
pub fn lb_imp(inst: &Instance, windows: Option<&[(usize, usize)]>, tol: f64) -> Result<f64> {
    let negated = negate(inst);
    Ok(-ub_imp(&negated, windows, tol)?)
}

fn negate(inst: &Instance) -> Instance {
    let samples = inst
        .samples()
        .iter()
        .map(|s| {
            crate::series::TimeSeries::new(s.values().iter().map(|v| -v).collect())
                .expect("negation preserves validity")
        })
        .collect();
    Instance::new(inst.name(), samples, inst.constraint()).expect("same shape")
}

/// The candidate mean lengths `L ∈ [1, n]` compatible with every series
/// under `c` (the pure ratio/band test).
pub fn compatible_lengths(inst: &Instance, c: GlobalConstraint, n: usize) -> Vec<usize> {
    (1..=n)
        .filter(|&len| inst.samples().iter().all(|s| is_compatible(c, s.len(), len)))
        .collect()
}

/// The column-`j` window for series length `m`: the union over all
/// compatible terminal lengths `L ≥ j` of `constraint_window(c, m, L, j)`.
/// The union is contiguous because windows slide monotonically with `L`.
/// Model builders use the same sets, so vertex admissibility and the value
/// bounds can never drift apart.
pub fn union_window(
    c: GlobalConstraint,
    m: usize,
    j: usize,
    lengths: &[usize],
) -> Option<(usize, usize)> {
    let mut acc: Option<(usize, usize)> = None;
    for &len in lengths.iter().filter(|&&len| len >= j) {
        if let Some((a, b)) = constraint_window(c, m, len, j).expect("j <= len") {
            acc = Some(match acc {
                None => (a, b),
                Some((lo, hi)) => (lo.min(a), hi.max(b)),
            });
        }
    }
    acc
}

/// Builds the per-index bound profile for mean positions `1..=n` under `c`,
/// marking positions with an empty window for some series as infeasible,
/// and installs the Fréchet floor.
///
/// # Errors
/// [`Error::IndexOutOfRange`] if `n < 1`; tolerance/window errors as above.
pub fn bound_profile(
    inst: &Instance,
    c: GlobalConstraint,
    n: usize,
    tol: f64,
) -> Result<BoundProfile> {
    if n < 1 {
        return Err(Error::IndexOutOfRange {
            what: "mean length bound N",
            value: n,
            max: usize::MAX,
        });
    }
    check_tol(tol)?;
    let lengths = compatible_lengths(inst, c, n);
    let mut per_index = Vec::with_capacity(n);
    for j in 1..=n {
        let windows: Option<Vec<(usize, usize)>> = inst
            .samples()
            .iter()
            .map(|s| union_window(c, s.len(), j, &lengths))
            .collect();
        let entry = match windows {
            None => None,
            Some(windows) => Some((
                lb_imp(inst, Some(&windows), tol)?,
                ub_imp(inst, Some(&windows), tol)?,
            )),
        };
        per_index.push(entry);
    }
    let mut profile = BoundProfile {
        per_index,
        frechet_lb: 0.0,
    };
    profile.frechet_lb = frechet_lb(inst, &profile);
    Ok(profile)
}

/// Squared distance from `v` to the interval `[lb, ub]` (0 inside).
fn clip_sq(v: f64, lb: f64, ub: f64) -> f64 {
    if v > ub {
        (v - ub) * (v - ub)
    } else if v < lb {
        (v - lb) * (v - lb)
    } else {
        0.0
    }
}

/// Lower bound on the Fréchet function: `(1/k)·Σ_l Σ_i min_j clip²` where
/// the min runs over the profile's feasible positions (the weakest case, so
/// the bound is valid for every feasible mean length). With a single
/// distinct `[lb, ub]` entry this is the plain clip-distance bound. Returns
/// `+∞` when no position is feasible.
pub fn frechet_lb(inst: &Instance, profile: &BoundProfile) -> f64 {
    let envelopes: Vec<(f64, f64)> = profile.per_index.iter().filter_map(|b| *b).collect();
    if envelopes.is_empty() {
        return f64::INFINITY;
    }
    let total: f64 = inst
        .samples()
        .iter()
        .map(|s| {
            s.values()
                .iter()
                .map(|&v| {
                    envelopes
                        .iter()
                        .map(|&(lb, ub)| clip_sq(v, lb, ub))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>()
        })
        .sum();
    total / inst.k() as f64
}

/// One per-index entry of the CLI-facing bounds report.
#[derive(Debug, Serialize)]
pub struct PerIndexBound {
    pub j: usize,
    pub lb: f64,
    pub ub: f64,
}

/// CLI-facing JSON report of all bound quantities.
#[derive(Debug, Serialize)]
pub struct BoundsReport {
    pub ub_sim: f64,
    pub lb_sim: f64,
    pub ub_imp: f64,
    pub lb_imp: f64,
    pub per_index: Vec<PerIndexBound>,
    pub frechet_lb: f64,
}

/// Assembles the full report for mean positions `1..=n` under `c`.
///
/// # Errors
/// As [`bound_profile`].
pub fn report(inst: &Instance, c: GlobalConstraint, n: usize, tol: f64) -> Result<BoundsReport> {
    let profile = bound_profile(inst, c, n, tol)?;
    let per_index = profile
        .feasible_positions()
        .map(|j| {
            let (lb, ub) = profile.bounds(j).expect("feasible position");
            PerIndexBound { j, lb, ub }
        })
        .collect();
    Ok(BoundsReport {
        ub_sim: ub_sim(inst),
        lb_sim: lb_sim(inst),
        ub_imp: ub_imp(inst, None, tol)?,
        lb_imp: lb_imp(inst, None, tol)?,
        per_index,
        frechet_lb: profile.frechet_lb(),
    })
}
