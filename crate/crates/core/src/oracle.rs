//! Exhaustive exact mean solver for tiny instances.
//!
//! For every candidate mean length `L` compatible with the active
//! constraint, the solver enumerates all tuples of admissible warping paths
//! (one per sample, all ending at column `L`), closes each tuple with the
//! aligned-mean formula `z_j = (Σ_l Σ_{(i,j)∈P_l} s^l_i) / (Σ_l #{(i,j)∈P_l})`
//! — the least-squares optimum for fixed paths — and keeps the minimum
//! Fréchet value. A hard tuple-count guard keeps this at desk scale, and
//! the clip-distance floor from [`crate::bounds`] stops the scan early once
//! the incumbent provably cannot improve.
//!
//! Results are the ground truth the solver formulations are tested against.

use serde::Serialize;

use crate::bounds::{bound_profile, compatible_lengths, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::series::{Instance, TimeSeries};
use crate::warping::{count_paths_saturating, enumerate_paths_capped, GlobalConstraint, WarpingPath};

/// Default refusal threshold on the total path-tuple count.
pub const DEFAULT_GUARD: u128 = 10_000_000;

/// An exact optimum: the mean, its Fréchet value, and the witnessing paths.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    /// The optimal mean series (length `length`).
    pub z: TimeSeries,
    /// The Fréchet value `(1/k)·Σ_l C_{P_l}(s^l, z)`, recomputed from `z`
    /// and `paths` rather than carried through the search.
    pub f: f64,
    /// One optimal warping path per sample, each ending at column `length`.
    pub paths: Vec<WarpingPath>,
    /// The optimal mean length `L`.
    pub length: usize,
}

/// Least-squares-optimal mean for fixed paths: `z_j` is the arithmetic mean
/// of all sample values aligned to column `j`, and the returned value is the
/// averaged total squared cost.
///
/// # Errors
/// [`Error::IndexOutOfRange`] if the path count differs from `k`;
/// [`Error::InvalidPath`] if a path does not end in its series' last row;
/// [`Error::MismatchedTerminals`] if terminal columns differ;
/// [`Error::Inconsistent`] if some path skips a column (cannot happen for
/// step-valid paths; checked, not assumed).
pub fn optimal_z_for_paths(
    inst: &Instance,
    paths: &[WarpingPath],
) -> Result<(TimeSeries, f64)> {
    let k = inst.k();
    if paths.len() != k {
        return Err(Error::IndexOutOfRange {
            what: "path count",
            value: paths.len(),
            max: k,
        });
    }
    let terminals: Vec<(usize, usize)> = paths.iter().map(WarpingPath::terminal).collect();
    for (l, (&(i, _), s)) in terminals.iter().zip(inst.samples()).enumerate() {
        if i != s.len() {
            return Err(Error::InvalidPath(format!(
                "path {} ends in row {i}, series has length {}",
                l + 1,
                s.len()
            )));
        }
    }
    let len = terminals[0].1;
    if terminals.iter().any(|&(_, j)| j != len) {
        return Err(Error::MismatchedTerminals(
            terminals.iter().map(|&(_, j)| j).collect(),
        ));
    }

    let mut sums = vec![0.0f64; len];
    let mut counts = vec![0usize; len];
    for (path, s) in paths.iter().zip(inst.samples()) {
        let mut covered = vec![false; len];
        for &(i, j) in path.vertices() {
            sums[j - 1] += s.values()[i - 1];
            counts[j - 1] += 1;
            covered[j - 1] = true;
        }
        if !covered.iter().all(|&c| c) {
            return Err(Error::Inconsistent(
                "warping path skips a mean column".into(),
            ));
        }
    }
    let z = TimeSeries::new(
        sums.iter()
            .zip(&counts)
            .map(|(&s, &c)| s / c as f64)
            .collect(),
    )?;
    let f = paths
        .iter()
        .zip(inst.samples())
        .map(|(path, s)| path.cost(s, &z))
        .sum::<f64>()
        / k as f64;
    Ok((z, f))
}

/// Total path-tuple count over all compatible lengths, saturating at
/// `guard + 1` (any value above `guard` means refusal).
fn total_tuples(inst: &Instance, c: GlobalConstraint, lengths: &[usize], guard: u128) -> u128 {
    let probe = guard.saturating_add(1);
    let mut total: u128 = 0;
    for &len in lengths {
        let mut product: u128 = 1;
        for s in inst.samples() {
            product = product.saturating_mul(count_paths_saturating(s.len(), len, c, probe));
        }
        total = total.saturating_add(product);
        if total > guard {
            return total;
        }
    }
    total
}

/// Exact optimum by exhaustive enumeration of path tuples over all mean
/// lengths `L ∈ [1, max_n]` compatible with `c`. Ties are broken toward the
/// smaller length, then the lexicographically smaller path tuple. The scan
/// stops early once the incumbent value reaches the clip-distance floor.
///
/// # Errors
/// [`Error::OracleGuard`] when the total tuple count exceeds `guard` (the
/// error reports the count); [`Error::InfeasibleModel`] when no admissible
/// tuple exists for any length; [`Error::IndexOutOfRange`] if `max_n < 1`.
pub fn brute_force_mean(
    inst: &Instance,
    c: GlobalConstraint,
    max_n: usize,
    guard: u128,
) -> Result<OracleResult> {
    if max_n < 1 {
        return Err(Error::IndexOutOfRange {
            what: "mean length bound N",
            value: max_n,
            max: usize::MAX,
        });
    }
    let lengths = compatible_lengths(inst, c, max_n);
    let total = total_tuples(inst, c, &lengths, guard);
    if total > guard {
        return Err(Error::OracleGuard {
            count: total,
            guard,
        });
    }
    let floor = bound_profile(inst, c, max_n, DEFAULT_TOL)?.frechet_lb();

    let mut best: Option<OracleResult> = None;
    'lengths: for &len in &lengths {
        let per_series: Vec<Vec<WarpingPath>> = inst
            .samples()
            .iter()
            .map(|s| enumerate_paths_capped(s.len(), len, c, s.len() + len))
            .collect::<Result<_>>()?;
        if per_series.iter().any(Vec::is_empty) {
            continue;
        }
        // Odometer over one index per series; incrementing the last digit
        // first yields lexicographic tuple order.
        let mut idx = vec![0usize; inst.k()];
        loop {
            let tuple: Vec<WarpingPath> = idx
                .iter()
                .zip(&per_series)
                .map(|(&i, paths)| paths[i].clone())
                .collect();
            let (z, f) = optimal_z_for_paths(inst, &tuple)?;
            if best.as_ref().is_none_or(|b| f < b.f) {
                best = Some(OracleResult {
                    z,
                    f,
                    paths: tuple,
                    length: len,
                });
                if f <= floor {
                    break 'lengths;
                }
            }
            let mut pos = idx.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < per_series[pos].len() {
                    break;
                }
                idx[pos] = 0;
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
    }
    best.ok_or_else(|| {
        Error::InfeasibleModel(format!(
            "no admissible path tuple for any mean length L <= {max_n} under {}",
            c.label()
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::synthetic_pool;
    use proptest::prelude::*;

    fn inst(series: &[&[f64]]) -> Instance {
        let samples = series
            .iter()
            .map(|v| TimeSeries::new(v.to_vec()).unwrap())
            .collect();
        Instance::new("t", samples, GlobalConstraint::None).unwrap()
    }

    fn path(vertices: &[(usize, usize)]) -> WarpingPath {
        WarpingPath::new(vertices.to_vec()).unwrap()
    }

    fn random_inst(seed: u64, k: usize, m: usize) -> Instance {
        let pool = synthetic_pool(k, m, seed);
        Instance::new("r", pool, GlobalConstraint::None).unwrap()
    }

    fn thm1_bound(i: &Instance) -> usize {
        let total: usize = i.lengths().iter().sum();
        total.saturating_sub(2 * (i.k() - 1)).max(1)
    }

    // ---------------- optimal_z_for_paths ----------------

    #[test]
    fn column_mean_of_zero_and_four_is_two() {
        let i = inst(&[&[0.0], &[4.0]]);
        let paths = [path(&[(1, 1)]), path(&[(1, 1)])];
        let (z, f) = optimal_z_for_paths(&i, &paths).unwrap();
        assert_eq!(z.values(), &[2.0]);
        assert_eq!(f, 4.0);
    }

    #[test]
    fn single_series_diagonal_reproduces_input() {
        let i = inst(&[&[1.0, -2.0, 0.5]]);
        let paths = [path(&[(1, 1), (2, 2), (3, 3)])];
        let (z, f) = optimal_z_for_paths(&i, &paths).unwrap();
        assert_eq!(z.values(), i.samples()[0].values());
        assert_eq!(f, 0.0);
    }

    #[test]
    fn two_diagonals_average_to_one() {
        let i = inst(&[&[0.0, 0.0], &[2.0, 2.0]]);
        let paths = [path(&[(1, 1), (2, 2)]), path(&[(1, 1), (2, 2)])];
        let (z, f) = optimal_z_for_paths(&i, &paths).unwrap();
        assert_eq!(z.values(), &[1.0, 1.0]);
        assert_eq!(f, 2.0);
    }

    #[test]
    fn mismatched_terminals_are_reported() {
        let i = inst(&[&[0.0, 0.0], &[2.0, 2.0]]);
        let paths = [path(&[(1, 1), (2, 1)]), path(&[(1, 1), (2, 2)])];
        match optimal_z_for_paths(&i, &paths) {
            Err(Error::MismatchedTerminals(cols)) => assert_eq!(cols, vec![1, 2]),
            other => panic!("expected mismatched terminals, got {other:?}"),
        }
    }

    #[test]
    fn wrong_final_row_is_rejected() {
        let i = inst(&[&[0.0, 0.0]]);
        let paths = [path(&[(1, 1)])];
        assert!(matches!(
            optimal_z_for_paths(&i, &paths),
            Err(Error::InvalidPath(_))
        ));
    }

    #[test]
    fn wrong_path_count_is_rejected() {
        let i = inst(&[&[0.0], &[1.0]]);
        let paths = [path(&[(1, 1)])];
        assert!(matches!(
            optimal_z_for_paths(&i, &paths),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    // ---------------- brute_force_mean ----------------

    #[test]
    fn single_series_mean_is_the_series() {
        let i = inst(&[&[0.5, -1.0]]);
        let res = brute_force_mean(&i, GlobalConstraint::None, 2, DEFAULT_GUARD).unwrap();
        assert_eq!(res.z.values(), i.samples()[0].values());
        assert!(res.f.abs() < 1e-12);
        assert_eq!(res.length, 2);
    }

    #[test]
    fn opposed_singletons_meet_in_the_middle() {
        let i = inst(&[&[0.0], &[4.0]]);
        let res = brute_force_mean(&i, GlobalConstraint::None, 1, DEFAULT_GUARD).unwrap();
        assert_eq!(res.z.values(), &[2.0]);
        assert!((res.f - 4.0).abs() < 1e-12);
        assert_eq!(res.length, 1);
    }

    #[test]
    fn constant_pair_ties_break_to_shortest_length() {
        // Both L=1 and L=2 attain F=2; the tie goes to L=1.
        let i = inst(&[&[0.0, 0.0], &[2.0, 2.0]]);
        let res = brute_force_mean(&i, GlobalConstraint::None, 2, DEFAULT_GUARD).unwrap();
        assert!((res.f - 2.0).abs() < 1e-12);
        assert_eq!(res.length, 1);
        assert_eq!(res.z.values(), &[1.0]);
        assert_eq!(res.paths.len(), 2);
        for p in &res.paths {
            assert_eq!(p.terminal(), (2, 1));
        }
    }

    #[test]
    fn result_value_is_reproducible_from_its_witness() {
        for seed in 0..10u64 {
            let i = random_inst(seed, 2, 3);
            let res = brute_force_mean(&i, GlobalConstraint::None, thm1_bound(&i), DEFAULT_GUARD)
                .unwrap();
            let recomputed: f64 = res
                .paths
                .iter()
                .zip(i.samples())
                .map(|(p, s)| p.cost(s, &res.z))
                .sum::<f64>()
                / i.k() as f64;
            assert_eq!(res.f, recomputed);
            let (z, f) = optimal_z_for_paths(&i, &res.paths).unwrap();
            assert_eq!(z, res.z);
            assert_eq!(f, res.f);
        }
    }

    #[test]
    fn guard_refusal_reports_the_count() {
        let i = random_inst(7, 2, 10);
        match brute_force_mean(&i, GlobalConstraint::None, thm1_bound(&i), DEFAULT_GUARD) {
            Err(Error::OracleGuard { count, guard }) => {
                assert!(count > guard);
                assert_eq!(guard, DEFAULT_GUARD);
            }
            other => panic!("expected guard refusal, got {other:?}"),
        }
    }

    #[test]
    fn incompatible_lengths_are_infeasible() {
        let pool = synthetic_pool(2, 9, 3);
        let i = Instance::new(
            "gap",
            vec![
                TimeSeries::new(pool[0].values()[..4].to_vec()).unwrap(),
                pool[1].clone(),
            ],
            GlobalConstraint::None,
        )
        .unwrap();
        assert!(matches!(
            brute_force_mean(&i, GlobalConstraint::sakoe_chiba(1), 11, DEFAULT_GUARD),
            Err(Error::InfeasibleModel(_))
        ));
    }

    #[test]
    fn zero_length_bound_is_rejected() {
        let i = inst(&[&[1.0]]);
        assert!(matches!(
            brute_force_mean(&i, GlobalConstraint::None, 0, DEFAULT_GUARD),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn determinism_across_runs() {
        let i = random_inst(11, 2, 3);
        let a = brute_force_mean(&i, GlobalConstraint::None, thm1_bound(&i), DEFAULT_GUARD)
            .unwrap();
        let b = brute_force_mean(&i, GlobalConstraint::None, thm1_bound(&i), DEFAULT_GUARD)
            .unwrap();
        assert_eq!(a, b);
    }

    // ---------------- properties ----------------

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn lemma_values_are_first_order_optimal(seed in 0u64..200, k in 1usize..3, m in 2usize..4) {
            let i = random_inst(seed, k, m);
            let res =
                brute_force_mean(&i, GlobalConstraint::None, thm1_bound(&i), DEFAULT_GUARD)
                    .unwrap();
            let eval = |z: &TimeSeries| -> f64 {
                res.paths
                    .iter()
                    .zip(i.samples())
                    .map(|(p, s)| p.cost(s, z))
                    .sum::<f64>()
                    / i.k() as f64
            };
            for j in 0..res.z.len() {
                for delta in [1e-3, -1e-3] {
                    let mut values = res.z.values().to_vec();
                    values[j] += delta;
                    let perturbed = TimeSeries::new(values).unwrap();
                    prop_assert!(eval(&perturbed) >= res.f - 1e-12);
                }
            }
        }

        #[test]
        fn length_bound_saturates(seed in 0u64..200, m in 2usize..4) {
            let i = random_inst(seed, 2, m);
            let n = thm1_bound(&i);
            let total: usize = i.lengths().iter().sum();
            let tight =
                brute_force_mean(&i, GlobalConstraint::None, n, DEFAULT_GUARD).unwrap();
            let loose =
                brute_force_mean(&i, GlobalConstraint::None, total, DEFAULT_GUARD).unwrap();
            prop_assert!((tight.f - loose.f).abs() <= 1e-12);
        }

        #[test]
        fn constraints_never_improve_the_optimum(
            seed in 0u64..200,
            m in 2usize..4,
            which in 0usize..3,
        ) {
            let i = random_inst(seed, 2, m);
            let c = match which {
                0 => GlobalConstraint::sakoe_chiba(0),
                1 => GlobalConstraint::sakoe_chiba(1),
                _ => GlobalConstraint::itakura(1.5).unwrap(),
            };
            let free =
                brute_force_mean(&i, GlobalConstraint::None, thm1_bound(&i), DEFAULT_GUARD)
                    .unwrap();
            if let Ok(constrained) = brute_force_mean(&i, c, thm1_bound(&i), DEFAULT_GUARD) {
                prop_assert!(constrained.f >= free.f - 1e-9);
            }
        }
    }
}
