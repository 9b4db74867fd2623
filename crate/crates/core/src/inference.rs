//! Fisher information, single- versus paired-end design comparisons and
//! posterior credible intervals.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, OrderStatistics};

use crate::collapse::CategorySet;
use crate::error::{Error, Result};
use crate::mle::{solve_mle, SolverOptions};

/// Expected information `Σ_k a^(k) a^(k)ᵀ / (a^(k)·θ)`.
pub fn expected_fisher(theta: &[f64], cats: &CategorySet) -> Result<DMatrix<f64>> {
    let dim = cats.num_isoforms();
    if theta.len() != dim {
        return Err(Error::Dimension { expected: dim, got: theta.len() });
    }
    let mut info = DMatrix::zeros(dim, dim);
    for (k, a) in cats.rates().iter().enumerate() {
        let mean: f64 = a.iter().zip(theta).map(|(a, t)| a * t).sum();
        if !(mean > 0.0) {
            return Err(Error::Infeasible { category: k, count: cats.categories()[k].count });
        }
        for i in 0..dim {
            for j in 0..dim {
                info[(i, j)] += a[i] * a[j] / mean;
            }
        }
    }
    Ok(info)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfoVariant {
    /// `n(α/θ₁ + β/θ₂ + (ᾱ−β̄)/(θ₁(ᾱ−β̄)+β̄))`, the commonly quoted form.
    #[default]
    Printed,
    /// The exact score variance, with `(ᾱ−β̄)²` in the last numerator.
    Squared,
}

impl std::str::FromStr for InfoVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "printed" | "as-printed" => Ok(InfoVariant::Printed),
            "squared" => Ok(InfoVariant::Squared),
            other => Err(Error::InvalidArgument(format!("unknown information variant {other:?}"))),
        }
    }
}

/// Information on θ₁ (with θ₂ = 1 − θ₁) in the three-category model
/// `n₁ ~ Po(nαθ₁)`, `n₂ ~ Po(nβθ₂)`, `n₃ ~ Po(n(ᾱθ₁ + β̄θ₂))`.
pub fn three_category_info(theta1: f64, alpha: f64, beta: f64, n: f64, variant: InfoVariant) -> Result<f64> {
    let open_unit = |x: f64| x > 0.0 && x < 1.0;
    if !open_unit(theta1) || !open_unit(alpha) || !open_unit(beta) {
        return Err(Error::InvalidArgument(format!("need 0 < θ₁, α, β < 1 (got θ₁={theta1}, α={alpha}, β={beta})")));
    }
    if !(n > 0.0) {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let theta2 = 1.0 - theta1;
    let d = (1.0 - alpha) - (1.0 - beta);
    let shared = theta1 * d + (1.0 - beta);
    let numer = match variant {
        InfoVariant::Printed => d,
        InfoVariant::Squared => d * d,
    };
    Ok(n * (alpha / theta1 + beta / theta2 + numer / shared))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// Length of each of the two constitutive flanking exons.
    pub flank: u32,
    /// Alternatively spliced exon length.
    pub exon: u32,
    pub read_length: u32,
    pub insert: u32,
    pub theta1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignProtocol {
    Single,
    Paired,
}

/// `(α, β)`: probabilities that a read (or pair) covers the alternative
/// exon, and that it spans the skipping junction.
pub fn design_alpha_beta(spec: &DesignSpec, protocol: DesignProtocol) -> Result<(f64, f64)> {
    if spec.flank == 0 || spec.read_length == 0 {
        return Err(Error::InvalidArgument("flank and read lengths must be positive".into()));
    }
    if !(spec.theta1 > 0.0 && spec.theta1 < 1.0) {
        return Err(Error::InvalidArgument(format!("θ₁ must lie in (0, 1), got {}", spec.theta1)));
    }
    let total = 2.0 * f64::from(spec.flank);
    let e = f64::from(spec.exon);
    let span = match protocol {
        DesignProtocol::Single => spec.read_length,
        DesignProtocol::Paired => {
            if spec.insert <= spec.read_length {
                return Err(Error::InvalidArgument(format!(
                    "insert size {} must exceed read length {}",
                    spec.insert, spec.read_length
                )));
            }
            spec.insert
        }
    };
    // beyond one flank length every fragment overlaps the exon or the junction
    if span > spec.flank {
        return Err(Error::InvalidArgument(format!(
            "fragment span {span} must not exceed the flank length {}",
            spec.flank
        )));
    }
    let s = f64::from(span);
    let alpha = (s - 1.0 + e) / (total + e - s + 1.0);
    let beta = (s - 1.0) / (total - s + 1.0);
    Ok((alpha, beta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignComparison {
    pub alpha_s: f64,
    pub beta_s: f64,
    pub alpha_p: f64,
    pub beta_p: f64,
    /// Information from `2n` single-end reads, per `n`.
    #[serde(rename = "I_s_per_n")]
    pub info_single_per_n: f64,
    /// Information from `n` pairs, per `n`.
    #[serde(rename = "I_p_per_n")]
    pub info_paired_per_n: f64,
    pub ratio: f64,
}

/// Compares `2n` single-end reads against `n` read pairs, which cost the
/// same number of sequenced nucleotides.
pub fn compare_designs(spec: &DesignSpec, variant: InfoVariant) -> Result<DesignComparison> {
    let (alpha_s, beta_s) = design_alpha_beta(spec, DesignProtocol::Single)?;
    let (alpha_p, beta_p) = design_alpha_beta(spec, DesignProtocol::Paired)?;
    let info_single_per_n = three_category_info(spec.theta1, alpha_s, beta_s, 2.0, variant)?;
    let info_paired_per_n = three_category_info(spec.theta1, alpha_p, beta_p, 1.0, variant)?;
    Ok(DesignComparison {
        alpha_s,
        beta_s,
        alpha_p,
        beta_p,
        info_single_per_n,
        info_paired_per_n,
        ratio: info_single_per_n / info_paired_per_n,
    })
}

/// `I_s / I_p` under the printed information formula.
pub fn single_vs_paired_ratio(spec: &DesignSpec) -> Result<f64> {
    Ok(compare_designs(spec, InfoVariant::Printed)?.ratio)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    /// One θ vector per retained draw.
    pub draws: Vec<Vec<f64>>,
    pub seed: u64,
    /// Acceptance rate over the retained (post burn-in) iterations.
    pub acceptance_rate: f64,
}

impl PosteriorSample {
    pub fn marginal(&self, i: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[i]).collect()
    }
}

const TARGET_ACCEPTANCE: f64 = 0.3;
const ADAPT_WINDOW: usize = 50;

/// Random-walk Metropolis on `log θ` targeting the flat-prior posterior
/// `exp(ℓ(θ))` on `θ ≥ 0`. Each sweep proposes every coordinate in turn;
/// step sizes adapt during burn-in and are frozen afterwards.
pub fn posterior_sample(
    cats: &CategorySet,
    w: &[f64],
    seed: u64,
    num_draws: usize,
    burn_in: usize,
) -> Result<PosteriorSample> {
    if num_draws == 0 {
        return Err(Error::InvalidArgument("num_draws must be at least 1".into()));
    }
    let dim = cats.num_isoforms();
    let est = solve_mle(cats, w, &SolverOptions::default())?;
    // start at the mode, nudged off the boundary by a posterior-scale amount
    let mut phi: Vec<f64> = est.theta.iter().zip(w).map(|(t, w)| (t + 0.5 / w).ln()).collect();
    let observed: Vec<(Vec<f64>, f64)> =
        cats.rates().into_iter().zip(cats.counts()).filter(|&(_, c)| c > 0).map(|(a, c)| (a, c as f64)).collect();
    // log posterior density of φ = log θ, including the Jacobian Σφ
    let log_post = |phi: &[f64]| -> f64 {
        let theta: Vec<f64> = phi.iter().map(|p| p.exp()).collect();
        let mut l: f64 = phi.iter().sum::<f64>() - w.iter().zip(&theta).map(|(w, t)| w * t).sum::<f64>();
        for (a, c) in &observed {
            let mean: f64 = a.iter().zip(&theta).map(|(a, t)| a * t).sum();
            if !(mean > 0.0) {
                return f64::NEG_INFINITY;
            }
            l += c * mean.ln();
        }
        l
    };
    let mut current = log_post(&phi);
    if !current.is_finite() {
        return Err(Error::InvalidArgument("posterior is zero at the starting point".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut step = vec![1.0; dim];
    let mut window_accepts = vec![0usize; dim];
    let mut accepted = 0usize;
    let mut draws = Vec::with_capacity(num_draws);

    for iter in 0..burn_in + num_draws {
        for i in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            let old = phi[i];
            phi[i] = old + step[i] * z;
            let proposed = log_post(&phi);
            let u: f64 = rng.random();
            if proposed.is_finite() && u.ln() < proposed - current {
                current = proposed;
                if iter < burn_in {
                    window_accepts[i] += 1;
                } else {
                    accepted += 1;
                }
            } else {
                phi[i] = old;
            }
        }
        if iter < burn_in && (iter + 1) % ADAPT_WINDOW == 0 {
            for i in 0..dim {
                let rate = window_accepts[i] as f64 / ADAPT_WINDOW as f64;
                step[i] *= ((rate - TARGET_ACCEPTANCE) * 2.0).exp();
                window_accepts[i] = 0;
            }
        }
        if iter >= burn_in {
            draws.push(phi.iter().map(|p| p.exp()).collect());
        }
    }
    Ok(PosteriorSample { draws, seed, acceptance_rate: accepted as f64 / (num_draws * dim) as f64 })
}

/// Equal-tailed empirical quantile intervals, one per coordinate.
pub fn credible_interval(sample: &PosteriorSample, level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {level}")));
    }
    let tail = (1.0 - level) / 2.0;
    let s = sample.draws.len();
    if (s as f64) * tail < 1.0 {
        return Err(Error::InvalidArgument(format!("{s} draws are too few for a {level} interval")));
    }
    let dim = sample.draws[0].len();
    Ok((0..dim)
        .map(|i| {
            let mut data = Data::new(sample.marginal(i));
            (data.quantile(tail), data.quantile(1.0 - tail))
        })
        .collect())
}
