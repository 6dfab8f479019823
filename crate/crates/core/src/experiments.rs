//! Seeded Monte Carlo harness: synthetic data, estimator sweeps, detector
//! evaluation and sampling-rate comparisons.
//!
//! Every trial draws from its own ChaCha8 stream, derived from the config
//! seed and a counter, so results do not depend on scheduling. Records carry
//! the SHA-256 hash of the config and the seed.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, Normal};

use crate::detector::{snr_gain, ElementwiseDetector, TubalDetector};
use crate::error::{Error, Result};
use crate::estimator::{
    bound_elementwise, bound_tubal, residual_energy_elementwise, residual_energy_tubal, BoundReport, TubalNorms,
    VectorNorms,
};
use crate::distributions::fill_normals;
use crate::sampling::{sampled_values, SampleKind, SampleSet};
use crate::subspace::{EmbeddedSubspace, Subspace};
use crate::tensor::Tensor3;
use crate::transform::{LinearTransform, TransformKind};

const SWEEP_TAG: u64 = 1;
const DETECT_TAG: u64 = 2;
const FALSE_ALARM_TAG: u64 = 3;
const RATE_TAG: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalClass {
    InSubspace,
    Orthogonal,
}

impl FromStr for SignalClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in_subspace" | "in-subspace" | "in" => Ok(SignalClass::InSubspace),
            "orthogonal" | "out" => Ok(SignalClass::Orthogonal),
            other => Err(Error::InvalidConfig(format!("unknown signal class `{other}`"))),
        }
    }
}

/// A transform paired with a sampling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Method {
    pub transform: TransformKind,
    pub sampling: SampleKind,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method { transform: TransformKind::Dft, sampling: SampleKind::Tubal },
        Method { transform: TransformKind::Dft, sampling: SampleKind::Elementwise },
        Method { transform: TransformKind::Dct, sampling: SampleKind::Tubal },
        Method { transform: TransformKind::Dct, sampling: SampleKind::Elementwise },
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = match self.transform {
            TransformKind::Dft => "dft",
            TransformKind::Dct => "dct",
            TransformKind::Custom => "custom",
        };
        let s = match self.sampling {
            SampleKind::Tubal => "tubal",
            SampleKind::Elementwise => "elementwise",
        };
        write!(f, "{t}-{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub transform: TransformKind,
    pub sampling: SampleKind,
    pub n1: usize,
    pub r: usize,
    pub n3: usize,
    pub m_grid: Vec<usize>,
    pub delta: f64,
    pub p_fa: Vec<f64>,
    /// Signal-to-noise ratios in dB.
    pub snr_db: Vec<f64>,
    /// Sampling rates `m/n1` (tubal) or `m/(n1·n3)` (elementwise).
    pub rates: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub signal_class: SignalClass,
    pub replacement: bool,
    /// Distinct sample sets behind a false-alarm run; the trials are split
    /// evenly across them.
    pub h0_sample_sets: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            transform: TransformKind::Dft,
            sampling: SampleKind::Tubal,
            n1: 50,
            r: 10,
            n3: 50,
            m_grid: vec![11],
            delta: 0.05,
            p_fa: vec![1e-2],
            snr_db: (0..=10).map(f64::from).collect(),
            rates: vec![0.22, 0.24, 0.26, 0.28, 0.30, 0.40, 0.50, 1.00],
            trials: 100,
            seed: 1,
            signal_class: SignalClass::Orthogonal,
            replacement: false,
            h0_sample_sets: 100,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.transform == TransformKind::Custom {
            return bad("experiments support the dft and dct transforms".into());
        }
        if self.n1 == 0 || self.n3 == 0 || self.r == 0 {
            return bad("n1, r and n3 must be positive".into());
        }
        if self.r >= self.n1 {
            return bad(format!("r = {} must be below n1 = {}", self.r, self.n1));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.m_grid.is_empty() || self.p_fa.is_empty() || self.snr_db.is_empty() || self.rates.is_empty() {
            return bad("grids must be nonempty".into());
        }
        if self.m_grid.contains(&0) {
            return bad("sample sizes must be positive".into());
        }
        if !self.replacement {
            let cap = self.sample_space(self.sampling);
            if let Some(&m) = self.m_grid.iter().find(|&&m| m > cap) {
                return bad(format!("m = {m} exceeds the {cap} available positions without replacement"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta = {} must lie in (0, 1)", self.delta));
        }
        if let Some(p) = self.p_fa.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return bad(format!("false-alarm probability {p} must lie in (0, 1)"));
        }
        if let Some(r) = self.rates.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
            return bad(format!("sampling rate {r} must lie in (0, 1]"));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("SNR values must be finite".into());
        }
        if self.h0_sample_sets == 0 {
            return bad("h0_sample_sets must be at least 1".into());
        }
        Ok(())
    }

    pub fn method(&self) -> Method {
        Method { transform: self.transform, sampling: self.sampling }
    }

    fn sample_space(&self, kind: SampleKind) -> usize {
        match kind {
            SampleKind::Tubal => self.n1,
            SampleKind::Elementwise => self.n1 * self.n3,
        }
    }

    /// Sample size for a sampling rate, rounded to the nearest integer.
    pub fn m_for_rate(&self, kind: SampleKind, rate: f64) -> usize {
        ((rate * self.sample_space(kind) as f64).round() as usize).max(1)
    }

    pub fn transform_for(&self, kind: TransformKind) -> Result<LinearTransform> {
        match kind {
            TransformKind::Dft => LinearTransform::dft(self.n3),
            TransformKind::Dct => LinearTransform::dct(self.n3),
            TransformKind::Custom => Err(Error::UnsupportedTransform(kind)),
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("configs always serialize");
        hex::encode(Sha256::digest(&json))
    }
}

/// Per-trial generator: the config seed with a counter-derived stream.
pub fn trial_rng(seed: u64, tag: u64, block: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((tag << 56) | ((block as u64 & 0xff_ffff) << 32) | (trial as u64 & 0xffff_ffff));
    rng
}

/// A random subspace with both halves of its full L-SVD basis, and one
/// normalized signal on each side.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub subspace: Subspace,
    /// Columns `r..n1` of the full basis, spanning the orthogonal complement.
    pub complement: Tensor3,
    pub signal_in: Tensor3,
    pub signal_out: Tensor3,
}

impl Synthetic {
    /// `U_r • C` for fresh uniform coefficients, normalized.
    pub fn fresh_in<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<Tensor3> {
        combine(self.subspace.transform(), self.subspace.basis(), rng)
    }

    /// `Ũ_r • C` for fresh uniform coefficients, normalized.
    pub fn fresh_out<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Result<Tensor3> {
        combine(self.subspace.transform(), &self.complement, rng)
    }

    pub fn signal(&self, class: SignalClass) -> &Tensor3 {
        match class {
            SignalClass::InSubspace => &self.signal_in,
            SignalClass::Orthogonal => &self.signal_out,
        }
    }
}

fn combine<R: rand::Rng + ?Sized>(t: &LinearTransform, basis: &Tensor3, rng: &mut R) -> Result<Tensor3> {
    let c = Tensor3::random_uniform(basis.n2(), 1, t.n3(), rng);
    let x = t.product(basis, &c)?;
    let norm = x.frobenius();
    if norm == 0.0 {
        return Err(Error::ZeroSignal);
    }
    Ok(x.scale(1.0 / norm))
}

/// Uniform `n1 × r × n3` tensor, its full L-SVD basis split at column `r`,
/// and one unit-energy signal inside and outside the span.
pub fn gen_synthetic(cfg: &ExperimentConfig, seed: u64) -> Result<Synthetic> {
    cfg.validate()?;
    gen_synthetic_with(&cfg.transform_for(cfg.transform)?, cfg.n1, cfg.r, seed)
}

pub fn gen_synthetic_with(t: &LinearTransform, n1: usize, r: usize, seed: u64) -> Result<Synthetic> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Tensor3::random_uniform(n1, r, t.n3(), &mut rng);
    let u = t.svd(&a)?.u;
    let subspace = Subspace::new(t, &u.columns(0, r)?)?;
    let complement = u.columns(r, n1 - r)?;
    let signal_in = combine(t, subspace.basis(), &mut rng)?;
    let signal_out = combine(t, &complement, &mut rng)?;
    Ok(Synthetic { subspace, complement, signal_in, signal_out })
}

fn is_sample_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::RankDeficientSample { .. }
            | Error::DegenerateSpectrum
            | Error::InvalidDegrees(_)
            | Error::DecompositionFailed(_)
            | Error::ZeroSignal
    )
}

/// Keeps per-trial results, counting sampling failures instead of aborting.
fn split_failures<T>(results: Vec<Result<T>>) -> Result<(Vec<T>, usize)> {
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = 0;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) if is_sample_failure(&e) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((ok, failures))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub config_hash: String,
    pub seed: u64,
    pub m: usize,
    pub trials: usize,
    pub failures: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// `(m/n1)·full` (tubal) or `cos²θ·(m/(n1n3))·full` (elementwise).
    pub reference: f64,
    pub lower: f64,
    pub upper: f64,
    pub m_min: usize,
    pub bound_valid: bool,
    /// Fraction of trials inside `[lower, upper]`.
    pub coverage: f64,
    pub cos_sq_theta: f64,
    pub full_residual: f64,
}

/// Residual estimates of one fixed signal over fresh sample sets for every m.
pub fn run_estimator_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRecord>> {
    let syn = gen_synthetic(cfg, cfg.seed)?;
    run_estimator_sweep_on(cfg, &syn, syn.signal(cfg.signal_class))
}

/// Same as [`run_estimator_sweep`] for a caller-supplied subspace and signal.
pub fn run_estimator_sweep_on(cfg: &ExperimentConfig, syn: &Synthetic, x: &Tensor3) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let s = &syn.subspace;
    let (n1, r, n3) = (cfg.n1, cfg.r, cfg.n3);
    let y = s.project_out(x)?;
    let full = y.frobenius_sq();
    let embedded = match cfg.sampling {
        SampleKind::Elementwise => Some(s.embed()?),
        SampleKind::Tubal => None,
    };
    let cos_theta = match &embedded {
        Some(e) if full > 0.0 => e.principal_angle_cos(&y)?,
        Some(_) => 0.0,
        None => 1.0,
    };
    let hash = cfg.hash();
    let mut out = Vec::with_capacity(cfg.m_grid.len());
    for (block, &m) in cfg.m_grid.iter().enumerate() {
        let bound = match &embedded {
            None => bound_tubal(cfg.delta, m, n1, r, n3, s.coherence(), s.transform().energy_scale_sq(), TubalNorms::of(&y)?, full)?,
            Some(e) => bound_elementwise(cfg.delta, m, n1, r, n3, e.coherence(n1, r), VectorNorms::of(&y), cos_theta, full)?,
        };
        let results: Vec<Result<f64>> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let mut rng = trial_rng(cfg.seed, SWEEP_TAG, block, trial);
                let shape = (n1, n3);
                let omega = SampleSet::draw_with(cfg.sampling, m, shape, cfg.replacement, &mut rng)?;
                match &embedded {
                    None => residual_energy_tubal(&omega, s, x),
                    Some(e) => residual_energy_elementwise(&omega, e, x),
                }
            })
            .collect();
        let (values, failures) = split_failures(results)?;
        out.push(sweep_record(&hash, cfg.seed, m, &values, failures, &bound, cos_theta, full, cfg));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn sweep_record(
    hash: &str,
    seed: u64,
    m: usize,
    values: &[f64],
    failures: usize,
    bound: &BoundReport,
    cos_theta: f64,
    full: f64,
    cfg: &ExperimentConfig,
) -> SweepRecord {
    let n = values.len();
    let (min, max, mean) = if n == 0 {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Summation rounding can push the mean of equal values past them.
        (min, max, (values.iter().sum::<f64>() / n as f64).clamp(min, max))
    };
    let cos_sq = cos_theta * cos_theta;
    let reference = match cfg.sampling {
        SampleKind::Tubal => m as f64 / cfg.n1 as f64 * full,
        SampleKind::Elementwise => cos_sq * m as f64 / (cfg.n1 * cfg.n3) as f64 * full,
    };
    let inside = values.iter().filter(|&&v| bound.contains(v)).count();
    SweepRecord {
        config_hash: hash.to_string(),
        seed,
        m,
        trials: n,
        failures,
        min,
        max,
        mean,
        reference,
        lower: bound.lower,
        upper: bound.upper,
        m_min: bound.m_min,
        bound_valid: bound.valid,
        coverage: if n == 0 { 0.0 } else { inside as f64 / n as f64 },
        cos_sq_theta: cos_sq,
        full_residual: full,
    }
}

/// Subspace data a method needs, built once per experiment.
struct Setting {
    method: Method,
    syn: Synthetic,
    embedded: Option<EmbeddedSubspace>,
}

impl Setting {
    fn new(cfg: &ExperimentConfig, method: Method) -> Result<Self> {
        let t = cfg.transform_for(method.transform)?;
        let syn = gen_synthetic_with(&t, cfg.n1, cfg.r, cfg.seed)?;
        let embedded = match method.sampling {
            SampleKind::Elementwise => Some(syn.subspace.embed()?),
            SampleKind::Tubal => None,
        };
        Ok(Setting { method, syn, embedded })
    }

    fn subspace(&self) -> &Subspace {
        &self.syn.subspace
    }
}

/// A detector bound to one sample set; observations are flat real vectors
/// (slice-major rows for tubal sets, distinct positions for elementwise sets).
enum Observer {
    Tubal { omega: SampleSet, det: TubalDetector },
    Elementwise { omega: SampleSet, det: ElementwiseDetector },
}

impl Observer {
    fn build(setting: &Setting, omega: SampleSet) -> Result<Self> {
        match &setting.embedded {
            None => {
                let det = TubalDetector::new(&omega, setting.subspace())?;
                Ok(Observer::Tubal { omega, det })
            }
            Some(e) => {
                let det = ElementwiseDetector::new(&omega, e)?;
                Ok(Observer::Elementwise { omega, det })
            }
        }
    }

    /// Length of an observation, which is also the expected noise energy.
    fn len(&self) -> usize {
        match self {
            Observer::Tubal { omega, .. } => omega.m() * omega.shape().1,
            Observer::Elementwise { det, .. } => det.projector().m(),
        }
    }

    fn restrict(&self, x: &Tensor3) -> Result<Vec<f64>> {
        match self {
            Observer::Tubal { omega, .. } => omega.restrict_signal_tubal(x)?.real_values(),
            Observer::Elementwise { omega, .. } => sampled_values(omega, x),
        }
    }

    fn tubal_tensor(&self, v: Vec<f64>) -> Tensor3 {
        let (m, n3) = (v.len() / self.n3(), self.n3());
        Tensor3::from_slice_major(m, 1, n3, v.into_iter().map(|x| crate::C64::new(x, 0.0)).collect())
    }

    fn n3(&self) -> usize {
        match self {
            Observer::Tubal { omega, .. } | Observer::Elementwise { omega, .. } => omega.shape().1,
        }
    }

    fn threshold(&self, p: f64) -> Result<f64> {
        match self {
            Observer::Tubal { det, .. } => det.threshold(p),
            Observer::Elementwise { det, .. } => det.threshold(p),
        }
    }

    fn statistic(&self, s: &Subspace, w: Vec<f64>) -> Result<f64> {
        match self {
            Observer::Tubal { det, .. } => det.statistic(s, &self.tubal_tensor(w)),
            Observer::Elementwise { det, .. } => Ok(det.statistic(&DVector::from_vec(w))),
        }
    }

    fn p_detect(&self, s: &Subspace, clean: Vec<f64>, eta: f64) -> Result<f64> {
        match self {
            Observer::Tubal { det, .. } => det.detection_probability(s, &self.tubal_tensor(clean), eta),
            Observer::Elementwise { det, .. } => det.detection_probability(&DVector::from_vec(clean), eta),
        }
    }
}

/// Order-insensitive identity of a sample set.
fn sample_key(omega: &SampleSet) -> Vec<usize> {
    let mut key = match omega.kind() {
        SampleKind::Tubal => omega.rows().to_vec(),
        SampleKind::Elementwise => omega.cells().iter().map(|&(i, k)| k * omega.shape().0 + i).collect(),
    };
    key.sort_unstable();
    key
}

/// Builds one observer per distinct sample set. Trials sharing a set reuse
/// the first draw's row order, which only permutes i.i.d. coordinates.
fn build_observers(setting: &Setting, sets: Vec<Result<SampleSet>>) -> Result<Vec<Result<std::sync::Arc<Observer>>>> {
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut unique: Vec<SampleSet> = Vec::new();
    let mut slot = Vec::with_capacity(sets.len());
    for set in sets {
        let set = set?;
        let key = sample_key(&set);
        let next = unique.len();
        let id = *index.entry(key).or_insert(next);
        if id == next {
            unique.push(set);
        }
        slot.push(id);
    }
    let built: Vec<Result<std::sync::Arc<Observer>>> = unique
        .into_par_iter()
        .map(|omega| Observer::build(setting, omega).map(std::sync::Arc::new))
        .collect();
    Ok(slot
        .into_iter()
        .map(|id| match &built[id] {
            Ok(o) => Ok(o.clone()),
            Err(e) => Err(e.clone()),
        })
        .collect())
}

/// Wilson score interval for `k` successes in `n` trials at two-sided `level`.
pub fn wilson_interval(k: usize, n: usize, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    let (nf, ph) = (n as f64, k as f64 / n as f64);
    let denom = 1.0 + z * z / nf;
    let centre = (ph + z * z / (2.0 * nf)) / denom;
    let half = z / denom * (ph * (1.0 - ph) / nf + z * z / (4.0 * nf * nf)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Central `level` acceptance region for the rate of `Binomial(n, p)`.
pub fn binomial_acceptance(p: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    let b = Binomial::new(p, n as u64).map_err(|e| Error::InvalidArg(e.to_string()))?;
    let tail = (1.0 - level) / 2.0;
    let lo = b.inverse_cdf(tail) as f64 / n as f64;
    let hi = b.inverse_cdf(1.0 - tail) as f64 / n as f64;
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub config_hash: String,
    pub seed: u64,
    pub method: String,
    pub m: usize,
    pub snr_db: f64,
    pub p_fa: f64,
    pub trials: usize,
    pub failures: usize,
    pub detections: usize,
    pub empirical_p_d: f64,
    pub p_d_lo: f64,
    pub p_d_hi: f64,
    /// Mean over trials of the analytic detection probability.
    pub analytic_p_d: f64,
    pub false_alarms: usize,
    pub empirical_p_fa: f64,
}

struct TrialOutcome {
    /// Per false-alarm target.
    alarms: Vec<bool>,
    /// `[snr][p]`.
    detections: Vec<Vec<bool>>,
    analytic: Vec<Vec<f64>>,
}

fn detection_trial(
    setting: &Setting,
    obs: &Observer,
    rng: &mut ChaCha8Rng,
    snr_db: &[f64],
    p_fa: &[f64],
) -> Result<TrialOutcome> {
    let s = setting.subspace();
    let x = setting.syn.fresh_out(rng)?;
    let clean = obs.restrict(&x)?;
    let n = obs.len();
    let noise_h0 = fill_normals(rng, n);
    let noise_h1 = fill_normals(rng, n);
    let clean_energy: f64 = clean.iter().map(|v| v * v).sum();
    let thresholds = p_fa.iter().map(|&p| obs.threshold(p)).collect::<Result<Vec<_>>>()?;
    let h0 = obs.statistic(s, noise_h0)?;
    let alarms = thresholds.iter().map(|&eta| h0 > eta).collect();
    let mut detections = Vec::with_capacity(snr_db.len());
    let mut analytic = Vec::with_capacity(snr_db.len());
    for &snr in snr_db {
        let g = snr_gain(snr, clean_energy, n as f64)?;
        let scaled: Vec<f64> = clean.iter().map(|v| g * v).collect();
        let w: Vec<f64> = scaled.iter().zip(&noise_h1).map(|(a, b)| a + b).collect();
        let h1 = obs.statistic(s, w)?;
        detections.push(thresholds.iter().map(|&eta| h1 > eta).collect());
        analytic.push(
            thresholds
                .iter()
                .map(|&eta| obs.p_detect(s, scaled.clone(), eta))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(TrialOutcome { alarms, detections, analytic })
}

/// Fresh sample set, signal and noise per trial; every SNR and false-alarm
/// target reuses the trial's draws.
fn detection_trials(
    cfg: &ExperimentConfig,
    setting: &Setting,
    m: usize,
    tag: u64,
    block: usize,
    snr_db: &[f64],
    p_fa: &[f64],
) -> Result<(Vec<TrialOutcome>, usize)> {
    let shape = (cfg.n1, cfg.n3);
    let kind = setting.method.sampling;
    let mut rngs: Vec<ChaCha8Rng> = (0..cfg.trials).map(|t| trial_rng(cfg.seed, tag, block, t)).collect();
    let sets = rngs
        .iter_mut()
        .map(|rng| SampleSet::draw_with(kind, m, shape, cfg.replacement, rng))
        .collect();
    let observers = build_observers(setting, sets)?;
    let results: Vec<Result<TrialOutcome>> = observers
        .into_par_iter()
        .zip(rngs.into_par_iter())
        .map(|(obs, mut rng)| detection_trial(setting, &*obs?, &mut rng, snr_db, p_fa))
        .collect();
    split_failures(results)
}

/// Detection and false-alarm rates over the SNR and false-alarm grids at
/// the first sample size of the grid.
pub fn run_detector_eval(cfg: &ExperimentConfig) -> Result<Vec<DetectionRecord>> {
    cfg.validate()?;
    let method = cfg.method();
    let setting = Setting::new(cfg, method)?;
    let m = cfg.m_grid[0];
    let (outcomes, failures) = detection_trials(cfg, &setting, m, DETECT_TAG, 0, &cfg.snr_db, &cfg.p_fa)?;
    let hash = cfg.hash();
    let n = outcomes.len();
    let mut out = Vec::new();
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        for (pi, &p) in cfg.p_fa.iter().enumerate() {
            let detections = outcomes.iter().filter(|o| o.detections[si][pi]).count();
            let false_alarms = outcomes.iter().filter(|o| o.alarms[pi]).count();
            let analytic = outcomes.iter().map(|o| o.analytic[si][pi]).sum::<f64>() / n.max(1) as f64;
            let (lo, hi) = wilson_interval(detections, n, 0.95);
            out.push(DetectionRecord {
                config_hash: hash.clone(),
                seed: cfg.seed,
                method: method.to_string(),
                m,
                snr_db: snr,
                p_fa: p,
                trials: n,
                failures,
                detections,
                empirical_p_d: rate(detections, n),
                p_d_lo: lo,
                p_d_hi: hi,
                analytic_p_d: analytic,
                false_alarms,
                empirical_p_fa: rate(false_alarms, n),
            });
        }
    }
    Ok(out)
}

fn rate(k: usize, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        k as f64 / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FalseAlarmRecord {
    pub config_hash: String,
    pub seed: u64,
    pub method: String,
    pub m: usize,
    pub p_fa: f64,
    pub sample_sets: usize,
    pub trials: usize,
    pub failures: usize,
    pub false_alarms: usize,
    pub empirical_p_fa: f64,
    /// 99% acceptance region of the false-alarm rate under the target.
    pub accept_lo: f64,
    pub accept_hi: f64,
    pub within: bool,
}

/// Noise-only trials: `h0_sample_sets` sample sets, each reused for an equal
/// share of `trials` independent noise draws.
pub fn run_false_alarm(cfg: &ExperimentConfig) -> Result<Vec<FalseAlarmRecord>> {
    cfg.validate()?;
    let method = cfg.method();
    let setting = Setting::new(cfg, method)?;
    let m = cfg.m_grid[0];
    let sets = cfg.h0_sample_sets.min(cfg.trials);
    let per_set = cfg.trials.div_ceil(sets);
    let draws: Vec<Result<SampleSet>> = (0..sets)
        .map(|i| {
            let mut rng = trial_rng(cfg.seed, FALSE_ALARM_TAG, 0, i);
            SampleSet::draw_with(method.sampling, m, (cfg.n1, cfg.n3), cfg.replacement, &mut rng)
        })
        .collect();
    let observers = build_observers(&setting, draws)?;
    let s = setting.subspace();
    let results: Vec<Result<Vec<usize>>> = observers
        .into_par_iter()
        .enumerate()
        .map(|(i, obs)| {
            let obs = obs?;
            let thresholds = cfg.p_fa.iter().map(|&p| obs.threshold(p)).collect::<Result<Vec<_>>>()?;
            let mut rng = trial_rng(cfg.seed, FALSE_ALARM_TAG, 1, i);
            let mut counts = vec![0; thresholds.len()];
            let share = per_set.min(cfg.trials - i * per_set);
            for _ in 0..share {
                let stat = obs.statistic(s, fill_normals(&mut rng, obs.len()))?;
                for (c, &eta) in counts.iter_mut().zip(&thresholds) {
                    *c += usize::from(stat > eta);
                }
            }
            counts.push(share);
            Ok(counts)
        })
        .collect();
    let (counts, failures) = split_failures(results)?;
    let trials: usize = counts.iter().map(|c| *c.last().unwrap()).sum();
    let hash = cfg.hash();
    cfg.p_fa
        .iter()
        .enumerate()
        .map(|(pi, &p)| {
            let false_alarms: usize = counts.iter().map(|c| c[pi]).sum();
            let (lo, hi) = binomial_acceptance(p, trials.max(1), 0.99)?;
            let empirical = rate(false_alarms, trials);
            Ok(FalseAlarmRecord {
                config_hash: hash.clone(),
                seed: cfg.seed,
                method: method.to_string(),
                m,
                p_fa: p,
                sample_sets: counts.len(),
                trials,
                failures,
                false_alarms,
                empirical_p_fa: empirical,
                accept_lo: lo,
                accept_hi: hi,
                within: lo <= empirical && empirical <= hi,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRecord {
    pub config_hash: String,
    pub seed: u64,
    pub method: String,
    pub rate: f64,
    pub m: usize,
    pub snr_db: f64,
    pub p_fa: f64,
    pub trials: usize,
    pub failures: usize,
    pub detections: usize,
    pub empirical_p_d: f64,
    pub p_d_lo: f64,
    pub p_d_hi: f64,
    pub analytic_p_d: f64,
}

/// Detection probability of all four methods over the sampling-rate grid at
/// the first SNR and false-alarm target.
pub fn run_rate_comparison(cfg: &ExperimentConfig) -> Result<Vec<RateRecord>> {
    run_rate_comparison_for(cfg, &Method::ALL)
}

pub fn run_rate_comparison_for(cfg: &ExperimentConfig, methods: &[Method]) -> Result<Vec<RateRecord>> {
    cfg.validate()?;
    let (snr, p) = (cfg.snr_db[0], cfg.p_fa[0]);
    let hash = cfg.hash();
    let mut out = Vec::new();
    for (mi, &method) in methods.iter().enumerate() {
        let setting = Setting::new(cfg, method)?;
        for (ri, &r) in cfg.rates.iter().enumerate() {
            let m = cfg.m_for_rate(method.sampling, r);
            let block = mi * cfg.rates.len() + ri;
            let (outcomes, failures) = detection_trials(cfg, &setting, m, RATE_TAG, block, &[snr], &[p])?;
            let n = outcomes.len();
            let detections = outcomes.iter().filter(|o| o.detections[0][0]).count();
            let (lo, hi) = wilson_interval(detections, n, 0.95);
            out.push(RateRecord {
                config_hash: hash.clone(),
                seed: cfg.seed,
                method: method.to_string(),
                rate: r,
                m,
                snr_db: snr,
                p_fa: p,
                trials: n,
                failures,
                detections,
                empirical_p_d: rate(detections, n),
                p_d_lo: lo,
                p_d_hi: hi,
                analytic_p_d: outcomes.iter().map(|o| o.analytic[0][0]).sum::<f64>() / n.max(1) as f64,
            });
        }
    }
    Ok(out)
}

/// One header row followed by one row per record.
pub fn write_csv<T: Serialize, W: Write>(records: &[T], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct Sidecar<'a, T: Serialize> {
    config_hash: String,
    seed: u64,
    config: &'a ExperimentConfig,
    records: &'a [T],
}

/// JSON document with the full config, its hash and the records.
pub fn write_json<T: Serialize, W: Write>(cfg: &ExperimentConfig, records: &[T], mut w: W) -> Result<()> {
    let doc = Sidecar { config_hash: cfg.hash(), seed: cfg.seed, config: cfg, records };
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

/// Writes `path` as CSV and `path` with a `.json` extension as the sidecar.
pub fn write_table<T: Serialize>(cfg: &ExperimentConfig, records: &[T], path: &Path) -> Result<()> {
    write_csv(records, std::io::BufWriter::new(std::fs::File::create(path)?))?;
    let sidecar = path.with_extension("json");
    write_json(cfg, records, std::io::BufWriter::new(std::fs::File::create(sidecar)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(transform: TransformKind, sampling: SampleKind) -> ExperimentConfig {
        ExperimentConfig {
            transform,
            sampling,
            n1: 8,
            r: 2,
            n3: 4,
            m_grid: vec![4, 8],
            trials: 12,
            seed: 3,
            snr_db: vec![0.0, 40.0],
            p_fa: vec![0.1],
            rates: vec![0.5, 1.0],
            h0_sample_sets: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let ok = small(TransformKind::Dft, SampleKind::Tubal);
        assert!(ok.validate().is_ok());
        for bad in [
            ExperimentConfig { r: 8, ..ok.clone() },
            ExperimentConfig { trials: 0, ..ok.clone() },
            ExperimentConfig { m_grid: vec![], ..ok.clone() },
            ExperimentConfig { m_grid: vec![9], ..ok.clone() },
            ExperimentConfig { p_fa: vec![1.5], ..ok.clone() },
            ExperimentConfig { delta: 0.0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        }
        assert!(ExperimentConfig { m_grid: vec![9], replacement: true, ..ok }.validate().is_ok());
    }

    #[test]
    fn synthetic_signals_are_normalized_and_split() {
        for kind in [TransformKind::Dft, TransformKind::Dct] {
            let cfg = small(kind, SampleKind::Tubal);
            let syn = gen_synthetic(&cfg, 5).unwrap();
            assert!((syn.signal_in.frobenius_sq() - 1.0).abs() < 1e-10);
            assert!((syn.signal_out.frobenius_sq() - 1.0).abs() < 1e-10);
            let s = &syn.subspace;
            assert!(s.project_out(&syn.signal_in).unwrap().frobenius_sq() < 1e-9);
            assert!((s.project_out(&syn.signal_out).unwrap().frobenius_sq() - 1.0).abs() < 1e-8);
            assert!(syn.signal_in.is_real() && syn.signal_out.is_real());
        }
    }

    #[test]
    fn hash_tracks_config_changes() {
        let a = small(TransformKind::Dft, SampleKind::Tubal);
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), ExperimentConfig { seed: 4, ..a.clone() }.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn trial_streams_are_distinct_and_repeatable() {
        use rand::Rng;
        let a: u64 = trial_rng(1, SWEEP_TAG, 0, 0).random();
        let b: u64 = trial_rng(1, SWEEP_TAG, 0, 1).random();
        let c: u64 = trial_rng(1, SWEEP_TAG, 1, 0).random();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, trial_rng(1, SWEEP_TAG, 0, 0).random::<u64>());
    }

    #[test]
    fn sweep_records_are_ordered_and_full_sample_is_exact() {
        let cfg = small(TransformKind::Dct, SampleKind::Tubal);
        let recs = run_estimator_sweep(&cfg).unwrap();
        assert_eq!(recs.len(), 2);
        for r in &recs {
            assert!(r.min <= r.mean && r.mean <= r.max && r.min >= 0.0);
        }
        let full = &recs[1];
        assert!((full.mean - full.full_residual).abs() < 1e-9);
        let inside = run_estimator_sweep(&ExperimentConfig { signal_class: SignalClass::InSubspace, ..cfg }).unwrap();
        assert!(inside.iter().all(|r| r.max < 1e-10));
    }

    #[test]
    fn sweep_output_is_deterministic() {
        let cfg = small(TransformKind::Dft, SampleKind::Elementwise);
        let cfg = ExperimentConfig { m_grid: vec![10, 20], ..cfg };
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&run_estimator_sweep(&cfg).unwrap(), &mut a).unwrap();
        write_csv(&run_estimator_sweep(&cfg).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().starts_with("config_hash,seed,m,"));
    }

    #[test]
    fn strong_signal_is_always_detected() {
        for method in Method::ALL {
            let mut cfg = small(method.transform, method.sampling);
            cfg.m_grid = vec![cfg.m_for_rate(method.sampling, 0.75)];
            let recs = run_detector_eval(&cfg).unwrap();
            let strong = recs.iter().find(|r| r.snr_db == 40.0).unwrap();
            assert_eq!(strong.empirical_p_d, 1.0, "{method}");
            assert!(strong.analytic_p_d > 0.999);
        }
    }

    #[test]
    fn false_alarm_run_counts_every_trial() {
        let cfg = ExperimentConfig { trials: 40, m_grid: vec![5], ..small(TransformKind::Dct, SampleKind::Tubal) };
        let recs = run_false_alarm(&cfg).unwrap();
        assert_eq!(recs[0].trials, 40);
        assert_eq!(recs[0].sample_sets, 3);
    }

    #[test]
    fn repeated_full_sample_sets_share_one_observer() {
        let cfg = small(TransformKind::Dct, SampleKind::Tubal);
        let setting = Setting::new(&cfg, cfg.method()).unwrap();
        let sets = (0..3)
            .map(|t| SampleSet::draw_with(SampleKind::Tubal, 8, (8, 4), false, &mut trial_rng(1, 9, 0, t)))
            .collect();
        let obs = build_observers(&setting, sets).unwrap();
        let a = obs[0].as_ref().unwrap();
        assert!(obs.iter().all(|o| std::sync::Arc::ptr_eq(o.as_ref().unwrap(), a)));
    }

    #[test]
    fn binomial_helpers() {
        let (lo, hi) = binomial_acceptance(0.1, 10_000, 0.99).unwrap();
        assert!(lo < 0.1 && hi > 0.1 && hi - lo < 0.02);
        let (lo, hi) = wilson_interval(50, 100, 0.95);
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3);
    }

    #[test]
    fn rate_comparison_reports_every_method() {
        let cfg = ExperimentConfig { trials: 4, ..small(TransformKind::Dft, SampleKind::Tubal) };
        let recs = run_rate_comparison(&cfg).unwrap();
        assert_eq!(recs.len(), 8);
        assert_eq!(recs[1].m, 8);
        assert_eq!(recs[3].m, 32);
    }
}
