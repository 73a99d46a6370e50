//! Time-series containers, UCR-format ingestion, block-averaging reduction,
//! and seeded instance sampling.
//!
//! Numbers are stored as `f64`; all downstream tolerances are explicit.
//! Sampling uses a deterministic generator with an explicit 64-bit seed so
//! benchmark tables are reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::warping::GlobalConstraint;

/// A finite univariate time series; length ≥ 1, all values finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeSeries {
    values: Vec<f64>,
}

impl TimeSeries {
    /// Builds a series, enforcing the invariants.
    ///
    /// # Errors
    /// [`Error::InvalidSeries`] if `values` is empty or contains a non-finite
    /// value.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSeries("length must be >= 1".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite value {bad}")));
        }
        Ok(Self { values })
    }

    /// Number of elements; always ≥ 1.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Never true; present for API completeness.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// The raw values, 0-indexed.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl TryFrom<Vec<f64>> for TimeSeries {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<TimeSeries> for Vec<f64> {
    fn from(s: TimeSeries) -> Self {
        s.values
    }
}

/// A time series tagged with an integer class label, as in UCR archive rows.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSeries {
    pub label: i64,
    pub series: TimeSeries,
}

/// A sample of k ≥ 1 series together with the active global constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceRepr", into = "InstanceRepr")]
pub struct Instance {
    name: String,
    samples: Vec<TimeSeries>,
    constraint: GlobalConstraint,
}

/// Wire shape of [`Instance`]: `{"name", "constraint": {"kind", ...}, "series": [[...]]}`.
#[derive(Serialize, Deserialize)]
struct InstanceRepr {
    name: String,
    #[serde(default)]
    constraint: GlobalConstraint,
    series: Vec<TimeSeries>,
}

impl TryFrom<InstanceRepr> for Instance {
    type Error = Error;

    fn try_from(repr: InstanceRepr) -> Result<Self> {
        Instance::new(repr.name, repr.series, repr.constraint)
    }
}

impl From<Instance> for InstanceRepr {
    fn from(inst: Instance) -> Self {
        InstanceRepr {
            name: inst.name,
            constraint: inst.constraint,
            series: inst.samples,
        }
    }
}

impl Instance {
    /// Builds an instance, enforcing k ≥ 1.
    ///
    /// # Errors
    /// [`Error::InvalidSeries`] if `samples` is empty;
    /// [`Error::InvalidConstraint`] if the constraint parameters are invalid.
    pub fn new(
        name: impl Into<String>,
        samples: Vec<TimeSeries>,
        constraint: GlobalConstraint,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidSeries("instance needs k >= 1 series".into()));
        }
        constraint.validate()?;
        Ok(Self {
            name: name.into(),
            samples,
            constraint,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// The sample series s^1, …, s^k.
    pub fn samples(&self) -> &[TimeSeries] {
        &self.samples
    }

    /// Number of series k ≥ 1.
    pub fn k(&self) -> usize {
        self.samples.len()
    }

    /// Series lengths m_1, …, m_k.
    pub fn lengths(&self) -> Vec<usize> {
        self.samples.iter().map(TimeSeries::len).collect()
    }

    pub fn constraint(&self) -> GlobalConstraint {
        self.constraint
    }

    /// Returns a copy with a different active constraint.
    pub fn with_constraint(&self, constraint: GlobalConstraint) -> Result<Self> {
        Self::new(self.name.clone(), self.samples.clone(), constraint)
    }

    /// Parses the JSON instance format, validating all invariants.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Renders the JSON instance format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }
}

/// Parses UCR-style text: one series per nonempty line, the first field an
/// integer class label, fields separated by commas or whitespace runs.
///
/// # Errors
/// [`Error::Parse`] with a 1-based line number on a malformed numeric token
/// or a line that has a label but no values.
pub fn parse_ucr(text: &str) -> Result<Vec<LabeledSeries>> {
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let mut fields = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty());
        let Some(first) = fields.next() else {
            continue; // blank line
        };
        let label = first.parse::<f64>().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad label token {first:?}"),
        })? as i64;
        let values = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("bad numeric token {f:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "label without values".into(),
            });
        }
        rows.push(LabeledSeries {
            label,
            series: TimeSeries::new(values)?,
        });
    }
    Ok(rows)
}

/// Renders rows in the UCR text format accepted by [`parse_ucr`]
/// (tab-separated; exact round-trip since values print shortest-round-trip).
pub fn serialize_ucr(rows: &[LabeledSeries]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&row.label.to_string());
        for v in row.series.values() {
            out.push('\t');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

/// Reduces `s` to length exactly `m` by averaging successive disjoint blocks
/// of ⌊len/m⌋ values; trailing values beyond m·⌊len/m⌋ are discarded.
///
/// # Errors
/// [`Error::InvalidReduction`] if `m = 0` or `m > len`.
pub fn block_reduce(s: &TimeSeries, m: usize) -> Result<TimeSeries> {
    let len = s.len();
    if m == 0 || m > len {
        return Err(Error::InvalidReduction { m, len });
    }
    let block = len / m;
    let values = (0..m)
        .map(|j| {
            let chunk = &s.values()[j * block..(j + 1) * block];
            chunk.iter().sum::<f64>() / block as f64
        })
        .collect();
    TimeSeries::new(values)
}

/// Draws k series from the pool — uniformly without replacement, or with
/// replacement iff k > |pool| — and block-reduces each to length `m`.
/// Deterministic for a fixed seed; the result carries no constraint.
///
/// # Errors
/// [`Error::EmptyPool`] on an empty pool; [`Error::InvalidReduction`] if `m`
/// exceeds the shortest pool series.
pub fn sample_instance(pool: &[TimeSeries], k: usize, m: usize, seed: u64) -> Result<Instance> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let min_len = pool.iter().map(TimeSeries::len).min().expect("nonempty");
    if m == 0 || m > min_len {
        return Err(Error::InvalidReduction { m, len: min_len });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if k <= pool.len() {
        // Partial Fisher-Yates: the first k entries are a uniform draw
        // without replacement.
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        for t in 0..k {
            let swap = rng.gen_range(t..idx.len());
            idx.swap(t, swap);
        }
        idx.truncate(k);
        idx
    } else {
        (0..k).map(|_| rng.gen_range(0..pool.len())).collect()
    };
    let samples = picks
        .iter()
        .map(|&i| block_reduce(&pool[i], m))
        .collect::<Result<Vec<_>>>()?;
    Instance::new(
        format!("sample_k{k}_m{m}_seed{seed}"),
        samples,
        GlobalConstraint::None,
    )
}

/// Deterministic pool of smooth, mean-reverting random walks. Stands in for
/// archive data in benchmarks and tests; the default series length elsewhere
/// in the crate is 270 to match common archive shapes.
pub fn synthetic_pool(count: usize, len: usize, seed: u64) -> Vec<TimeSeries> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut x: f64 = 2.0 * rng.gen::<f64>() - 1.0;
            let values = (0..len)
                .map(|_| {
                    let step = 2.0 * rng.gen::<f64>() - 1.0;
                    x = 0.95 * x + 0.4 * step;
                    x
                })
                .collect();
            TimeSeries::new(values).expect("synthetic series is valid")
        })
        .collect()
}
