//! Sampling-rate matrices under the uniform and insert-length models.
//!
//! Rates are stored as exact rationals `a_{i,j} / n`; the read total `n` is
//! kept alongside so the real rate is `n * rate`. Insert-length rates are
//! ratios of integer histogram counts, so every entry stays exact and
//! proportionality between columns can be decided without tolerances.

use std::collections::BTreeMap;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::model::{GeneModel, ReadType};

/// Exact rate coefficient; the sampling rate is this value times `n`.
pub type Rate = Ratio<i128>;

pub(crate) fn rate_to_f64(r: &Rate) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone)]
pub struct RateColumn {
    pub read: ReadType,
    pub rates: Vec<Rate>,
}

#[derive(Debug, Clone)]
pub struct RateMatrix {
    n: u64,
    num_isoforms: usize,
    columns: Vec<RateColumn>,
    /// Read types left out because no isoform can produce them under the
    /// rate model.
    dropped: Vec<ReadType>,
}

impl RateMatrix {
    /// Builds a matrix from explicit columns. Columns must have one entry per
    /// isoform, no negative entries and at least one positive entry.
    pub fn from_columns(n: u64, num_isoforms: usize, columns: Vec<RateColumn>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("read total n must be positive".into()));
        }
        for col in &columns {
            if col.rates.len() != num_isoforms {
                return Err(Error::Dimension { expected: num_isoforms, got: col.rates.len() });
            }
            if col.rates.iter().any(|r| *r < Rate::zero()) {
                return Err(Error::InvalidArgument(format!("negative rate for {}", col.read)));
            }
            if col.rates.iter().all(Zero::is_zero) {
                return Err(Error::ZeroRateColumn);
            }
        }
        Ok(RateMatrix { n, num_isoforms, columns, dropped: Vec::new() })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn num_isoforms(&self) -> usize {
        self.num_isoforms
    }

    pub fn columns(&self) -> &[RateColumn] {
        &self.columns
    }

    pub fn dropped(&self) -> &[ReadType] {
        &self.dropped
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Real-valued `a_{i,j}`.
    pub fn rate(&self, isoform: usize, column: usize) -> f64 {
        rate_to_f64(&self.columns[column].rates[isoform]) * self.n as f64
    }

    /// Exact row sums `Σ_j a_{i,j} / n`.
    pub fn row_sums(&self) -> Vec<Rate> {
        let mut sums = vec![Rate::zero(); self.num_isoforms];
        for col in &self.columns {
            for (s, r) in sums.iter_mut().zip(&col.rates) {
                *s += r;
            }
        }
        sums
    }

    pub fn position(&self, read: &ReadType) -> Option<usize> {
        self.columns.iter().position(|c| &c.read == read)
    }
}

/// Uniform sampling model: `a_{i,j} = n` when isoform `i` can produce read
/// `j`, zero otherwise.
pub fn uniform_rates(gene: &GeneModel, read_types: &[ReadType], n: u64) -> Result<RateMatrix> {
    let columns = read_types
        .iter()
        .map(|rt| RateColumn {
            read: rt.clone(),
            rates: (0..gene.num_isoforms())
                .map(|i| if rt.is_compatible(i) { Rate::from_integer(1) } else { Rate::zero() })
                .collect(),
        })
        .collect();
    RateMatrix::from_columns(n, gene.num_isoforms(), columns)
}

/// Insert-length model: `a_{i,j} = q(l_{i,j}) n`. Columns that come out all
/// zero are moved to [`RateMatrix::dropped`].
pub fn insert_length_rates(
    gene: &GeneModel,
    read_types: &[ReadType],
    q: &InsertLengthDist,
    n: u64,
) -> Result<RateMatrix> {
    let mut columns = Vec::with_capacity(read_types.len());
    let mut dropped = Vec::new();
    for rt in read_types {
        let rates: Vec<Rate> = (0..gene.num_isoforms())
            .map(|i| match rt.placement(i) {
                Some(p) => q.pmf(p.fragment_length()),
                None => Rate::zero(),
            })
            .collect();
        if rates.iter().all(Zero::is_zero) {
            dropped.push(rt.clone());
        } else {
            columns.push(RateColumn { read: rt.clone(), rates });
        }
    }
    let mut m = RateMatrix::from_columns(n, gene.num_isoforms(), columns)?;
    m.dropped = dropped;
    Ok(m)
}

/// Empirical fragment-length distribution; `q(l) = count(l) / total`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InsertLengthDist {
    histogram: BTreeMap<u32, u64>,
    total: u64,
}

impl InsertLengthDist {
    pub fn from_histogram(histogram: BTreeMap<u32, u64>) -> Result<Self> {
        let histogram: BTreeMap<u32, u64> = histogram.into_iter().filter(|&(_, c)| c > 0).collect();
        let total: u64 = histogram.values().sum();
        if total == 0 {
            return Err(Error::InvalidArgument("insert-length histogram is empty".into()));
        }
        if histogram.contains_key(&0) {
            return Err(Error::InvalidArgument("insert length 0 in histogram".into()));
        }
        Ok(InsertLengthDist { histogram, total })
    }

    /// A distribution putting all mass on one length.
    pub fn point_mass(length: u32) -> Result<Self> {
        Self::from_histogram(BTreeMap::from([(length, 1)]))
    }

    /// Uniform on the integer lengths `lo..=hi`.
    pub fn uniform(lo: u32, hi: u32) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidArgument(format!("empty length range {lo}..={hi}")));
        }
        Self::from_histogram((lo..=hi).map(|l| (l, 1)).collect())
    }

    pub fn histogram(&self) -> &BTreeMap<u32, u64> {
        &self.histogram
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn pmf(&self, length: u32) -> Rate {
        match self.histogram.get(&length) {
            Some(&c) => Rate::new(c as i128, self.total as i128),
            None => Rate::zero(),
        }
    }

    pub fn support(&self) -> (u32, u32) {
        let lo = *self.histogram.keys().next().expect("nonempty histogram");
        let hi = *self.histogram.keys().next_back().expect("nonempty histogram");
        (lo, hi)
    }

    pub fn lengths(&self) -> impl Iterator<Item = u32> + '_ {
        self.histogram.keys().copied()
    }

    pub fn mean(&self) -> f64 {
        self.histogram.iter().map(|(&l, &c)| f64::from(l) * c as f64).sum::<f64>() / self.total as f64
    }
}

/// Histogram of the fragment lengths inside the central `trim` probability
/// mass. Lengths below the `(1 - trim) / 2` empirical quantile or above the
/// `(1 + trim) / 2` quantile are excluded; ties at a cut point are kept.
pub fn estimate_insert_distribution(fragment_lengths: &[u32], trim: f64) -> Result<InsertLengthDist> {
    if fragment_lengths.is_empty() {
        return Err(Error::InvalidArgument("no fragment lengths given".into()));
    }
    if !(trim > 0.0 && trim <= 1.0) {
        return Err(Error::InvalidArgument(format!("trim must lie in (0, 1], got {trim}")));
    }
    let mut sorted = fragment_lengths.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let tail = (1.0 - trim) / 2.0;
    let lo_idx = ((tail * n as f64).floor() as usize).min(n - 1);
    let hi_idx = (((1.0 - tail) * n as f64).ceil() as usize).clamp(1, n) - 1;
    let (lo, hi) = (sorted[lo_idx], sorted[hi_idx.max(lo_idx)]);
    let mut histogram = BTreeMap::new();
    for &l in sorted.iter().filter(|&&l| l >= lo && l <= hi) {
        *histogram.entry(l).or_insert(0u64) += 1;
    }
    InsertLengthDist::from_histogram(histogram)
}

/// The rate model used to build columns and row sums.
#[derive(Debug, Clone)]
pub enum RateModel {
    Uniform { read_length: u32 },
    Insert { q: InsertLengthDist, read_length: u32 },
}

impl RateModel {
    pub fn rates(&self, gene: &GeneModel, read_types: &[ReadType], n: u64) -> Result<RateMatrix> {
        match self {
            RateModel::Uniform { .. } => uniform_rates(gene, read_types, n),
            RateModel::Insert { q, .. } => insert_length_rates(gene, read_types, q, n),
        }
    }
}

/// Exact `W_i / n = Σ_j a_{i,j} / n` over all read types, in closed form.
///
/// Uniform: `l_i - r + 1`. Insert: `Σ_l q(l) (l_i - l + 1)` over the support
/// lengths with `r <= l <= l_i`.
pub fn rate_row_sums_exact(gene: &GeneModel, model: &RateModel) -> Vec<Rate> {
    gene.isoform_lengths()
        .into_iter()
        .map(|len| match model {
            RateModel::Uniform { read_length } if len >= *read_length => {
                Rate::from_integer(i128::from(len - read_length + 1))
            }
            RateModel::Uniform { .. } => Rate::zero(),
            RateModel::Insert { q, read_length } => q
                .histogram()
                .range(*read_length..=len)
                .map(|(&l, _)| q.pmf(l) * Rate::from_integer(i128::from(len - l + 1)))
                .fold(Rate::zero(), |acc, x| acc + x),
        })
        .collect()
}

/// The `W` vector: per-isoform total sampling rate.
pub fn rate_row_sums(gene: &GeneModel, model: &RateModel, n: u64) -> Vec<f64> {
    rate_row_sums_exact(gene, model).iter().map(|r| rate_to_f64(r) * n as f64).collect()
}
