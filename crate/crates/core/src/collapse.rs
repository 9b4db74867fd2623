//! Maximal collapsing of read types into categories with proportional
//! sampling-rate vectors. Counts on the maximal collapsing are minimal
//! sufficient statistics for the abundance vector.

use std::collections::{BTreeMap, HashMap};

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::model::{CountsVector, ReadType};
use crate::rates::{rate_to_f64, Rate, RateMatrix};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    /// Canonical direction: the rate vector scaled so its first nonzero
    /// entry is 1.
    pub direction: Vec<Rate>,
    /// `a^(k) / n`, the summed member rate vectors.
    pub rate_sum: Vec<Rate>,
    /// `n_{C_k}`.
    pub count: u64,
    /// Number of member read types `m_k`.
    pub members: usize,
}

/// Categories in lexicographic order of their direction vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategorySet {
    n: u64,
    num_isoforms: usize,
    categories: Vec<Category>,
}

/// Rate vector scaled so that its first nonzero coordinate is 1.
pub fn canonical_direction(rates: &[Rate]) -> Option<Vec<Rate>> {
    let lead = *rates.iter().find(|r| !r.is_zero())?;
    Some(rates.iter().map(|r| r / lead).collect())
}

impl CategorySet {
    /// Groups `(rate vector / n, count)` columns by proportionality.
    pub fn from_columns<I>(n: u64, num_isoforms: usize, columns: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<Rate>, u64)>,
    {
        if n == 0 {
            return Err(Error::InvalidArgument("read total n must be positive".into()));
        }
        let mut groups: BTreeMap<Vec<Rate>, Category> = BTreeMap::new();
        for (rates, count) in columns {
            if rates.len() != num_isoforms {
                return Err(Error::Dimension { expected: num_isoforms, got: rates.len() });
            }
            if rates.iter().any(|r| *r < Rate::zero()) {
                return Err(Error::InvalidArgument("negative sampling rate".into()));
            }
            let direction = canonical_direction(&rates).ok_or(Error::ZeroRateColumn)?;
            let cat = groups.entry(direction.clone()).or_insert_with(|| Category {
                direction,
                rate_sum: vec![Rate::zero(); num_isoforms],
                count: 0,
                members: 0,
            });
            for (s, r) in cat.rate_sum.iter_mut().zip(&rates) {
                *s += r;
            }
            cat.count += count;
            cat.members += 1;
        }
        Ok(CategorySet { n, num_isoforms, categories: groups.into_values().collect() })
    }

    /// The uncollapsed problem: one category per rate-matrix column.
    pub fn singletons(rates: &RateMatrix, counts: &CountsVector) -> Result<Self> {
        check_counts(rates, counts)?;
        let categories = rates
            .columns()
            .iter()
            .map(|col| {
                Ok(Category {
                    direction: canonical_direction(&col.rates).ok_or(Error::ZeroRateColumn)?,
                    rate_sum: col.rates.clone(),
                    count: counts.get(&col.read),
                    members: 1,
                })
            })
            .collect::<Result<_>>()?;
        Ok(CategorySet { n: rates.n(), num_isoforms: rates.num_isoforms(), categories })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn num_isoforms(&self) -> usize {
        self.num_isoforms
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn counts(&self) -> Vec<u64> {
        self.categories.iter().map(|c| c.count).collect()
    }

    pub fn total_count(&self) -> u64 {
        self.categories.iter().map(|c| c.count).sum()
    }

    /// Real-valued `a^(k)` per category.
    pub fn rates(&self) -> Vec<Vec<f64>> {
        let n = self.n as f64;
        self.categories.iter().map(|c| c.rate_sum.iter().map(|r| rate_to_f64(r) * n).collect()).collect()
    }

    /// `Σ_k a^(k)`, which equals `W` when no read type was omitted.
    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![Rate::zero(); self.num_isoforms];
        for c in &self.categories {
            for (s, r) in sums.iter_mut().zip(&c.rate_sum) {
                *s += r;
            }
        }
        sums.iter().map(|r| rate_to_f64(r) * self.n as f64).collect()
    }
}

fn check_counts(rates: &RateMatrix, counts: &CountsVector) -> Result<()> {
    let index: HashMap<&ReadType, usize> = rates.columns().iter().enumerate().map(|(j, c)| (&c.read, j)).collect();
    let mut unsupported = Vec::new();
    for (read, count) in counts.iter() {
        if count == 0 || index.contains_key(read) {
            continue;
        }
        if rates.dropped().contains(read) {
            unsupported.push(read.to_string());
        } else {
            return Err(Error::UnknownReadType(read.to_string()));
        }
    }
    if unsupported.is_empty() {
        Ok(())
    } else {
        Err(Error::UnsupportedReads(unsupported))
    }
}

/// The maximal collapsing over every column of `rates`.
pub fn maximal_collapse(rates: &RateMatrix, counts: &CountsVector) -> Result<CategorySet> {
    check_counts(rates, counts)?;
    CategorySet::from_columns(
        rates.n(),
        rates.num_isoforms(),
        rates.columns().iter().map(|c| (c.rates.clone(), counts.get(&c.read))),
    )
}

/// The maximal collapsing of the observed (count > 0) columns only, for use
/// with a closed-form `W` vector.
pub fn maximal_collapse_observed(rates: &RateMatrix, counts: &CountsVector) -> Result<CategorySet> {
    check_counts(rates, counts)?;
    CategorySet::from_columns(
        rates.n(),
        rates.num_isoforms(),
        rates.columns().iter().filter_map(|c| {
            let k = counts.get(&c.read);
            (k > 0).then(|| (c.rates.clone(), k))
        }),
    )
}

fn poisson_terms<'a>(columns: impl Iterator<Item = (&'a [Rate], u64)>, n: f64, theta: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (k, (rates, count)) in columns.enumerate() {
        let mean: f64 = rates.iter().zip(theta).map(|(r, t)| rate_to_f64(r) * n * t).sum();
        if count > 0 {
            if mean <= 0.0 {
                return Err(Error::Infeasible { category: k, count });
            }
            total += count as f64 * mean.ln();
        }
        total -= mean;
    }
    Ok(total)
}

/// Difference between the raw and collapsed log-likelihoods at `theta_a`,
/// minus the same difference at `theta_b`. The factor separating the two
/// likelihoods does not involve θ, so the result is zero up to rounding.
pub fn collapsed_loglik_residual(
    rates: &RateMatrix,
    counts: &CountsVector,
    theta_a: &[f64],
    theta_b: &[f64],
) -> Result<f64> {
    for theta in [theta_a, theta_b] {
        if theta.len() != rates.num_isoforms() {
            return Err(Error::Dimension { expected: rates.num_isoforms(), got: theta.len() });
        }
        if theta.iter().any(|&t| !(t > 0.0)) {
            return Err(Error::InvalidArgument("θ must be strictly positive".into()));
        }
    }
    let collapsed = maximal_collapse(rates, counts)?;
    let n = rates.n() as f64;
    let gap = |theta: &[f64]| -> Result<f64> {
        let raw = poisson_terms(rates.columns().iter().map(|c| (c.rates.as_slice(), counts.get(&c.read))), n, theta)?;
        let coll = poisson_terms(collapsed.categories().iter().map(|c| (c.rate_sum.as_slice(), c.count)), n, theta)?;
        Ok(raw - coll)
    };
    Ok(gap(theta_a)? - gap(theta_b)?)
}
