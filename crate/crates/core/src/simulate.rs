//! Synthetic read generation and the relative-error simulation harness.

use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalCdf};

use crate::collapse::maximal_collapse_observed;
use crate::error::{Error, Result};
use crate::mle::{solve_mle, SolverOptions};
use crate::model::{CountsVector, GeneModel, ReadType};
use crate::rates::{
    estimate_insert_distribution, insert_length_rates, rate_row_sums, rate_row_sums_exact, rate_to_f64, uniform_rates,
    InsertLengthDist, RateModel,
};

/// Cuts `copies` transcripts of length `transcript_len` by a rate-`lambda`
/// Poisson process (cut points rounded to integers) and returns both
/// endpoints of every fragment whose length lies in `window`.
pub fn simulate_fragmentation<R: Rng>(
    transcript_len: u32,
    copies: usize,
    lambda: f64,
    window: (u32, u32),
    rng: &mut R,
) -> Result<Vec<u32>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("λ must be positive, got {lambda}")));
    }
    if window.0 > window.1 {
        return Err(Error::InvalidArgument(format!("empty window {:?}", window)));
    }
    let gaps = Exp::new(lambda).expect("positive rate");
    let len = f64::from(transcript_len);
    let mut endpoints = Vec::new();
    let mut cuts = Vec::new();
    for _ in 0..copies {
        cuts.clear();
        cuts.push(0u32);
        let mut x = gaps.sample(rng);
        while x < len {
            let c = x.round() as u32;
            if c > *cuts.last().expect("seeded with 0") && c < transcript_len {
                cuts.push(c);
            }
            x += gaps.sample(rng);
        }
        cuts.push(transcript_len);
        for pair in cuts.windows(2) {
            let frag = pair[1] - pair[0];
            if frag >= window.0 && frag <= window.1 {
                endpoints.push(pair[0]);
                endpoints.push(pair[1]);
            }
        }
    }
    Ok(endpoints)
}

/// Kolmogorov-Smirnov distance between the endpoints inside
/// `[exclusion, transcript_len - exclusion]` and the uniform law on that range.
pub fn qq_uniformity_stat(endpoints: &[f64], transcript_len: f64, exclusion: f64) -> Result<f64> {
    let (lo, hi) = (exclusion, transcript_len - exclusion);
    if !(hi > lo) {
        return Err(Error::InvalidArgument("boundary exclusion leaves no interior".into()));
    }
    let mut inner: Vec<f64> = endpoints.iter().copied().filter(|&x| x >= lo && x <= hi).collect();
    if inner.is_empty() {
        return Err(Error::InvalidArgument("every endpoint falls in the excluded zones".into()));
    }
    inner.sort_by(f64::total_cmp);
    let m = inner.len() as f64;
    Ok(inner
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = (x - lo) / (hi - lo);
            (f - k as f64 / m).max((k + 1) as f64 / m - f)
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum RateLaw {
    #[default]
    Uniform,
    /// i.i.d. lognormal sampling rate per (isoform, start position).
    LogNormal { mu: f64, sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum InsertLaw {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Integer lengths uniform on `lo..=hi`.
    Uniform {
        lo: u32,
        hi: u32,
    },
}

impl InsertLaw {
    /// The law as an integer-length histogram: Gaussian mass within six
    /// standard deviations, binned to the nearest integer.
    pub fn discretize(&self) -> Result<InsertLengthDist> {
        match *self {
            InsertLaw::Uniform { lo, hi } => InsertLengthDist::uniform(lo.max(1), hi),
            InsertLaw::Normal { mean, sd } => {
                let dist = NormalCdf::new(mean, sd).map_err(|e| Error::InvalidArgument(format!("insert law: {e}")))?;
                let lo = (mean - 6.0 * sd).ceil().max(1.0) as u32;
                let hi = (mean + 6.0 * sd).floor().max(1.0) as u32;
                let hist = (lo..=hi)
                    .map(|l| {
                        let l = f64::from(l);
                        (l as u32, (1e9 * (dist.cdf(l + 0.5) - dist.cdf(l - 0.5))).round() as u64)
                    })
                    .collect::<BTreeMap<_, _>>();
                InsertLengthDist::from_histogram(hist)
            }
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> i64 {
        match *self {
            InsertLaw::Uniform { lo, hi } => i64::from(rng.random_range(lo..=hi)),
            InsertLaw::Normal { mean, sd } => {
                let x: f64 = Normal::new(mean, sd).expect("validated law").sample(rng);
                x.round() as i64
            }
        }
    }
}

fn check_theta(gene: &GeneModel, theta: &[f64]) -> Result<()> {
    if theta.len() != gene.num_isoforms() {
        return Err(Error::Dimension { expected: gene.num_isoforms(), got: theta.len() });
    }
    if theta.iter().any(|&t| !(t >= 0.0 && t.is_finite())) || theta.iter().all(|&t| t == 0.0) {
        return Err(Error::InvalidArgument("θ must be nonnegative and not all zero".into()));
    }
    Ok(())
}

fn into_counts(tally: HashMap<ReadType, u64>, total: u64) -> Result<CountsVector> {
    CountsVector::new(tally.into_iter().collect(), total)
}

/// `n` single-end reads of length `r`. The isoform is drawn in proportion to
/// `θ_i` times its total sampling rate; the start position is uniform or,
/// under the lognormal law, proportional to per-position rates drawn once
/// per call.
pub fn simulate_single_end<R: Rng>(
    gene: &GeneModel,
    theta: &[f64],
    n: u64,
    r: u32,
    law: &RateLaw,
    rng: &mut R,
) -> Result<CountsVector> {
    check_theta(gene, theta)?;
    if r == 0 || r > gene.min_isoform_length() {
        return Err(Error::InvalidProtocol(format!("read length {r} must lie in 1..={}", gene.min_isoform_length())));
    }
    let positions: Vec<u32> = gene.isoform_lengths().iter().map(|l| l - r + 1).collect();
    let per_position: Option<Vec<WeightedIndex<f64>>> = match *law {
        RateLaw::Uniform => None,
        RateLaw::LogNormal { mu, sigma } => {
            let ln = LogNormal::new(mu, sigma).map_err(|e| Error::InvalidArgument(format!("lognormal law: {e}")))?;
            Some(
                positions
                    .iter()
                    .map(|&p| {
                        let w: Vec<f64> = (0..p).map(|_| ln.sample(rng)).collect();
                        WeightedIndex::new(w).expect("positive weights")
                    })
                    .collect(),
            )
        }
    };
    let mass: Vec<f64> = match &per_position {
        None => positions.iter().map(|&p| f64::from(p)).collect(),
        Some(w) => w.iter().map(|w| w.total_weight()).collect(),
    };
    let pick = WeightedIndex::new(theta.iter().zip(&mass).map(|(t, m)| t * m))
        .map_err(|e| Error::InvalidArgument(format!("isoform weights: {e}")))?;

    let mut starts: HashMap<(usize, u32), u64> = HashMap::new();
    for _ in 0..n {
        let iso = pick.sample(rng);
        let start = match &per_position {
            None => rng.random_range(1..=positions[iso]),
            Some(w) => w[iso].sample(rng) as u32 + 1,
        };
        *starts.entry((iso, start)).or_default() += 1;
    }
    let mut tally: HashMap<ReadType, u64> = HashMap::new();
    for ((iso, start), c) in starts {
        *tally.entry(gene.single_read(iso, start, r)?).or_default() += c;
    }
    into_counts(tally, n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub counts: CountsVector,
    /// True fragment length of every simulated pair.
    pub fragment_lengths: Vec<u32>,
    /// Insert draws rejected as infeasible or by length tilting.
    pub rejections: u64,
}

const MAX_INSERT_ATTEMPTS: u32 = 1_000_000;

/// `pairs` read pairs with mates of length `r`. The isoform is drawn in
/// proportion to `θ_i Σ_l q(l)(l_i − l + 1)`, the fragment length from the
/// insert law restricted to feasible lengths and tilted by the number of
/// start positions, and the start uniformly among those positions.
pub fn simulate_paired_end<R: Rng>(
    gene: &GeneModel,
    theta: &[f64],
    pairs: u64,
    r: u32,
    law: &InsertLaw,
    rng: &mut R,
) -> Result<PairedSample> {
    check_theta(gene, theta)?;
    if r == 0 {
        return Err(Error::InvalidProtocol("read length must be positive".into()));
    }
    let q = law.discretize()?;
    let model = RateModel::Insert { q: q.clone(), read_length: r };
    let mass: Vec<f64> = rate_row_sums_exact(gene, &model).iter().map(rate_to_f64).collect();
    let weights: Vec<f64> = theta.iter().zip(&mass).map(|(t, m)| t * m).collect();
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidProtocol(
            "no isoform with positive abundance can hold a fragment from the insert law".into(),
        ));
    }
    let pick = WeightedIndex::new(&weights).map_err(|e| Error::InvalidArgument(format!("isoform weights: {e}")))?;
    let lengths = gene.isoform_lengths();
    // shortest feasible length per isoform, for the tilting bound
    let shortest: Vec<Option<u32>> =
        lengths.iter().map(|&l| q.histogram().range(r..=l).next().map(|(&x, _)| x)).collect();

    let mut starts: HashMap<(usize, u32, u32), u64> = HashMap::new();
    let mut fragment_lengths = Vec::with_capacity(pairs as usize);
    let mut rejections = 0;
    for _ in 0..pairs {
        let iso = pick.sample(rng);
        let len_i = lengths[iso];
        let min_len = shortest[iso].expect("isoforms with zero mass are never picked");
        let mut attempts = 0u32;
        let frag = loop {
            attempts += 1;
            if attempts > MAX_INSERT_ATTEMPTS {
                return Err(Error::InvalidProtocol(format!(
                    "insert law rarely yields a fragment that fits isoform {iso} (length {len_i})"
                )));
            }
            let x = law.draw(rng);
            let feasible = x >= i64::from(r) && x <= i64::from(len_i) && q.histogram().contains_key(&(x as u32));
            if feasible {
                let x = x as u32;
                let accept = f64::from(len_i - x + 1) / f64::from(len_i - min_len + 1);
                if rng.random::<f64>() < accept {
                    break x;
                }
            }
            rejections += 1;
        };
        let start = rng.random_range(1..=len_i - frag + 1);
        fragment_lengths.push(frag);
        *starts.entry((iso, start, frag)).or_default() += 1;
    }
    let mut tally: HashMap<ReadType, u64> = HashMap::new();
    for ((iso, start, frag), c) in starts {
        *tally.entry(gene.paired_read(iso, start, frag, r)?).or_default() += c;
    }
    Ok(PairedSample { counts: into_counts(tally, pairs)?, fragment_lengths, rejections })
}

/// `‖θ − θ̂‖₂ / ‖θ‖₂` after scaling both vectors to unit sum. An all-zero
/// estimate has error 1.
pub fn relative_error(theta_hat: &[f64], theta_true: &[f64]) -> f64 {
    let sum_hat: f64 = theta_hat.iter().sum();
    if !(sum_hat > 0.0) {
        return 1.0;
    }
    let sum_true: f64 = theta_true.iter().sum();
    let (num, den) = theta_hat.iter().zip(theta_true).fold((0.0, 0.0), |(num, den), (h, t)| {
        let t = t / sum_true;
        (num + (t - h / sum_hat).powi(2), den + t * t)
    });
    (num / den).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SimProtocol {
    Single {
        read_length: u32,
        #[serde(default)]
        rate_law: RateLaw,
    },
    /// A sample size of `n` sequenced reads yields `n / 2` pairs.
    Paired {
        read_length: u32,
        insert_law: InsertLaw,
        /// Estimate with the empirical fragment-length histogram of each
        /// replicate instead of the discretized generating law.
        #[serde(default)]
        empirical_q: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub gene: GeneModel,
    pub theta: Vec<f64>,
    pub sample_sizes: Vec<u64>,
    pub replicates: usize,
    pub protocol: SimProtocol,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub sample_size: u64,
    pub mean_error: f64,
    /// Sample standard deviation over √(successful replicates).
    pub se: f64,
    pub replicates: usize,
    pub failures: usize,
    pub rejections: u64,
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub cells: Vec<SimCell>,
}

impl SimResult {
    pub fn cell(&self, sample_size: u64) -> Option<&SimCell> {
        self.cells.iter().find(|c| c.sample_size == sample_size)
    }
}

/// Generator for replicate `rep` of sample-size index `size_idx`: one
/// ChaCha stream per work unit, so results do not depend on scheduling.
pub fn replicate_rng(seed: u64, size_idx: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((size_idx as u64) << 32) | rep as u64);
    rng
}

struct Outcome {
    error: Option<f64>,
    rejections: u64,
}

fn estimate_counts(gene: &GeneModel, counts: &CountsVector, model: &RateModel) -> Result<Option<Vec<f64>>> {
    let reads: Vec<ReadType> = counts.read_types().cloned().collect();
    let n = counts.total();
    let rates = match model {
        RateModel::Uniform { .. } => uniform_rates(gene, &reads, n)?,
        RateModel::Insert { q, .. } => insert_length_rates(gene, &reads, q, n)?,
    };
    let cats = maximal_collapse_observed(&rates, counts)?;
    let w = rate_row_sums(gene, model, n);
    let est = solve_mle(&cats, &w, &SolverOptions::default())?;
    Ok(est.converged.then_some(est.theta))
}

fn run_replicate(config: &SimConfig, n: u64, rng: &mut ChaCha8Rng) -> Result<Outcome> {
    let gene = &config.gene;
    match &config.protocol {
        SimProtocol::Single { read_length, rate_law } => {
            let counts = simulate_single_end(gene, &config.theta, n, *read_length, rate_law, rng)?;
            let model = RateModel::Uniform { read_length: *read_length };
            let theta = estimate_counts(gene, &counts, &model)?;
            Ok(Outcome { error: theta.map(|t| relative_error(&t, &config.theta)), rejections: 0 })
        }
        SimProtocol::Paired { read_length, insert_law, empirical_q } => {
            let pairs = n / 2;
            let sample = simulate_paired_end(gene, &config.theta, pairs, *read_length, insert_law, rng)?;
            let q = if *empirical_q {
                estimate_insert_distribution(&sample.fragment_lengths, 1.0)?
            } else {
                insert_law.discretize()?
            };
            let model = RateModel::Insert { q, read_length: *read_length };
            let theta = estimate_counts(gene, &sample.counts, &model)?;
            Ok(Outcome { error: theta.map(|t| relative_error(&t, &config.theta)), rejections: sample.rejections })
        }
    }
}

fn validate(config: &SimConfig) -> Result<()> {
    check_theta(&config.gene, &config.theta)?;
    if config.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be at least 1".into()));
    }
    if config.sample_sizes.is_empty() {
        return Err(Error::InvalidArgument("no sample sizes given".into()));
    }
    let min_size = match config.protocol {
        SimProtocol::Single { .. } => 1,
        SimProtocol::Paired { .. } => 2,
    };
    if let Some(&n) = config.sample_sizes.iter().find(|&&n| n < min_size) {
        return Err(Error::InvalidArgument(format!("sample size {n} is too small for the protocol")));
    }
    if let SimProtocol::Paired { insert_law, .. } = &config.protocol {
        insert_law.discretize()?;
    }
    Ok(())
}

/// Runs `replicates` simulate-estimate rounds for every sample size. Work
/// units run on the current rayon pool; the result depends only on the
/// configuration. Estimation failures (solver errors or non-convergence) are
/// counted per cell and left out of the error statistics.
pub fn run_experiment(config: &SimConfig) -> Result<SimResult> {
    validate(config)?;
    let units: Vec<(usize, usize)> =
        (0..config.sample_sizes.len()).flat_map(|s| (0..config.replicates).map(move |r| (s, r))).collect();
    let outcomes: Vec<Outcome> = units
        .par_iter()
        .map(|&(s, rep)| {
            let mut rng = replicate_rng(config.seed, s, rep);
            run_replicate(config, config.sample_sizes[s], &mut rng).unwrap_or(Outcome { error: None, rejections: 0 })
        })
        .collect();

    let cells = config
        .sample_sizes
        .iter()
        .enumerate()
        .map(|(s, &n)| {
            let chunk = &outcomes[s * config.replicates..(s + 1) * config.replicates];
            let errors: Vec<f64> = chunk.iter().filter_map(|o| o.error).collect();
            let m = errors.len() as f64;
            let mean = errors.iter().sum::<f64>() / m;
            let se = if errors.len() > 1 {
                (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt() / m.sqrt()
            } else {
                f64::NAN
            };
            SimCell {
                sample_size: n,
                mean_error: mean,
                se,
                replicates: errors.len(),
                failures: chunk.len() - errors.len(),
                rejections: chunk.iter().map(|o| o.rejections).sum(),
                errors,
            }
        })
        .collect();
    Ok(SimResult { cells })
}
