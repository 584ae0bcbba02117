//! Self-normalized importance sampling over (switch vector, injections),
//! with a population-Monte-Carlo adaptation loop.
//!
//! Proposals are independent per parameter: Bernoulli per switch, Gaussian
//! per injection (clamped to ±3σ bounds). Weights are computed in log space;
//! the posterior is likelihood-only because the prior (Bernoulli(0.5) ×
//! uniform box) is constant within the sampled support.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::measurement::{LikelihoodMode, MeasurementSet};
use crate::netmodel::{Network, SwitchVector};
use crate::powerflow::{InjectionState, PfConfig, TopologyModel};

/// Proposal Bernoulli probabilities stay inside this band so no topology's
/// proposal mass ever collapses to zero.
pub const P_BINO_MIN: f64 = 0.15;
pub const P_BINO_MAX: f64 = 0.85;

/// Final closed-probabilities inside this band flag a low-confidence switch.
pub const LOW_CONFIDENCE_BAND: (f64, f64) = (0.45, 0.55);

const LOG_2PI: f64 = 1.8378770664093453;

#[derive(Debug, thiserror::Error)]
pub enum InferError {
    #[error("degenerate ensemble at iteration {iteration}: {finite} of {total} finite weights, ess {ess:.2}")]
    Degenerate {
        iteration: usize,
        finite: usize,
        total: usize,
        ess: f64,
    },
    #[error("empty ensemble")]
    Empty,
    #[error(transparent)]
    Meas(#[from] crate::measurement::MeasError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Samples per iteration (K).
    pub samples: usize,
    /// Adaptation iterations (j_max); 1 = plain importance sampling.
    pub iterations: usize,
    pub mode: LikelihoodMode,
    pub seed: u64,
    pub pf: PfConfig,
    /// When set, injections are not sampled: every sample carries this state
    /// and the continuous proposal terms drop out. Used by oracle-equivalence
    /// tests that condition on the true injections.
    pub fix_injections: Option<InjectionState>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            samples: 1000,
            iterations: 6,
            mode: LikelihoodMode::Robust,
            seed: 0,
            pf: PfConfig::default(),
            fix_injections: None,
        }
    }
}

/// Independent per-parameter proposal distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalParams {
    /// Closed probability per switch, in [P_BINO_MIN, P_BINO_MAX] after
    /// every update (the initial 0.5 is inside the band).
    pub p_bino: Vec<f64>,
    pub loc_p: Vec<f64>,
    pub loc_q: Vec<f64>,
    pub scale_p: Vec<f64>,
    pub scale_q: Vec<f64>,
    pub bounds_p: Vec<(f64, f64)>,
    pub bounds_q: Vec<(f64, f64)>,
}

/// Maximum-entropy switch prior plus forecast/meter-centered injections.
pub fn init_proposals(net: &Network, ms: &MeasurementSet) -> ProposalParams {
    let bounds = ms.injection_bounds();
    ProposalParams {
        p_bino: vec![0.5; net.n_switches()],
        loc_p: ms.inj_mean_p.clone(),
        loc_q: ms.inj_mean_q.clone(),
        scale_p: ms.inj_sigma_p.clone(),
        scale_q: ms.inj_sigma_q.clone(),
        bounds_p: bounds.iter().map(|b| b.0).collect(),
        bounds_q: bounds.iter().map(|b| b.1).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub b: SwitchVector,
    pub s: InjectionState,
    /// Log-posterior (likelihood) value; −∞ for unconverged candidates.
    pub log_posterior: f64,
    pub log_weight: f64,
    pub norm_weight: f64,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    pub samples: Vec<Sample>,
    pub iteration: usize,
}

impl Ensemble {
    /// Effective sample size 1/Σ w̄² of a normalized ensemble.
    pub fn ess(&self) -> f64 {
        let ssq: f64 = self.samples.iter().map(|s| s.norm_weight * s.norm_weight).sum();
        if ssq > 0.0 {
            1.0 / ssq
        } else {
            0.0
        }
    }

    pub fn finite_count(&self) -> usize {
        self.samples.iter().filter(|s| s.log_weight.is_finite()).count()
    }
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    v.max(lo).min(hi)
}

/// Draw K candidate (topology, injection) pairs from the proposal.
///
/// Draws beyond the ±3σ bounds land exactly on the bound. All randomness is
/// consumed here, single-threaded, so downstream evaluation order cannot
/// affect the result.
pub fn draw<R: Rng>(
    params: &ProposalParams,
    k: usize,
    fix: Option<&InjectionState>,
    rng: &mut R,
) -> Vec<(SwitchVector, InjectionState)> {
    let n_inj = params.loc_p.len();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let bits: Vec<bool> = params.p_bino.iter().map(|p| rng.gen_bool(*p)).collect();
        let s = match fix {
            Some(s) => s.clone(),
            None => {
                let mut p = Vec::with_capacity(n_inj);
                let mut q = Vec::with_capacity(n_inj);
                for i in 0..n_inj {
                    p.push(draw_clamped(
                        params.loc_p[i],
                        params.scale_p[i],
                        params.bounds_p[i],
                        rng,
                    ));
                    q.push(draw_clamped(
                        params.loc_q[i],
                        params.scale_q[i],
                        params.bounds_q[i],
                        rng,
                    ));
                }
                InjectionState { p, q }
            }
        };
        out.push((SwitchVector::from_bits(bits), s));
    }
    out
}

fn draw_clamped<R: Rng>(loc: f64, scale: f64, (lo, hi): (f64, f64), rng: &mut R) -> f64 {
    if scale <= 0.0 || lo >= hi {
        return clamp(loc, lo, hi);
    }
    let v = Normal::new(loc, scale).unwrap().sample(rng);
    clamp(v, lo, hi)
}

/// Log proposal density of one drawn sample. Clamped continuous draws are
/// scored by the Gaussian pdf at the clamped point (boundary atoms ignored —
/// a documented approximation that fades as the proposal adapts inward).
fn log_q(params: &ProposalParams, b: &SwitchVector, s: &InjectionState, fixed: bool) -> f64 {
    let mut lq = 0.0;
    for (bit, p) in b.bits.iter().zip(&params.p_bino) {
        lq += if *bit { p.ln() } else { (1.0 - p).ln() };
    }
    if fixed {
        return lq;
    }
    for i in 0..s.p.len() {
        lq += gauss_term(s.p[i], params.loc_p[i], params.scale_p[i], params.bounds_p[i]);
        lq += gauss_term(s.q[i], params.loc_q[i], params.scale_q[i], params.bounds_q[i]);
    }
    lq
}

fn gauss_term(v: f64, loc: f64, scale: f64, (lo, hi): (f64, f64)) -> f64 {
    if scale <= 0.0 || lo >= hi {
        return 0.0; // point mass: identical across samples, drops out
    }
    let z = (v - loc) / scale;
    -0.5 * z * z - scale.ln() - 0.5 * LOG_2PI
}

/// Log prior density of the injections (the switch prior Bernoulli(0.5)^N
/// and the truncation constants are dropped as sample-independent).
///
/// Every injection parameter carries exactly one Gaussian data term. Metered
/// injections are scored by the likelihood (meter vs served power), and in
/// naive mode so are the forecasts, so their prior here is flat. Pseudo
/// injections in robust mode are excluded from the measurement model; their
/// forecast Gaussian enters as the prior instead. This keeps the weights
/// well-conditioned: each data term cancels the matching proposal density at
/// the first iteration, and afterwards only adapted location offsets survive.
fn log_prior(prior: &ProposalParams, ms: &MeasurementSet, s: &InjectionState, mode: LikelihoodMode) -> f64 {
    if mode == LikelihoodMode::Naive {
        return 0.0;
    }
    let mut lp = 0.0;
    for i in 0..s.p.len() {
        if ms.metered_phase[i] {
            continue;
        }
        lp += gauss_term(s.p[i], prior.loc_p[i], prior.scale_p[i], prior.bounds_p[i]);
        lp += gauss_term(s.q[i], prior.loc_q[i], prior.scale_q[i], prior.bounds_q[i]);
    }
    lp
}

/// Evaluate log-posteriors and raw log-weights for a set of draws.
///
/// `prior` carries the initial (forecast-centered) proposal parameters,
/// whose Gaussians double as the injection prior.
///
/// Samples sharing a topology share one factorization: draws are grouped by
/// switch-vector key, each group is solved in parallel, and results are
/// written back by sample index, so the ensemble is identical for any worker
/// count.
pub fn weigh(
    net: &Network,
    ms: &MeasurementSet,
    draws: Vec<(SwitchVector, InjectionState)>,
    params: &ProposalParams,
    prior: &ProposalParams,
    cfg: &InferenceConfig,
    iteration: usize,
) -> Result<Ensemble, InferError> {
    if draws.is_empty() {
        return Err(InferError::Empty);
    }
    let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, (b, _)) in draws.iter().enumerate() {
        groups.entry(b.key()).or_default().push(i);
    }

    let mut log_post = vec![f64::NEG_INFINITY; draws.len()];
    for indices in groups.values() {
        let b = &draws[indices[0]].0;
        match TopologyModel::new(net, b) {
            Ok(model) => {
                let scores: Vec<f64> = indices
                    .par_iter()
                    .map(|&i| {
                        let sol = model.solve(net, &draws[i].1, &cfg.pf);
                        ms.score(net, &sol, cfg.mode).unwrap_or(f64::NEG_INFINITY)
                    })
                    .collect();
                for (&i, sc) in indices.iter().zip(scores) {
                    log_post[i] = sc;
                }
            }
            Err(_) => { /* unphysical topology: leave −∞ */ }
        }
    }

    let fixed = cfg.fix_injections.is_some();
    let samples: Vec<Sample> = draws
        .into_iter()
        .zip(log_post)
        .map(|((b, s), ll)| {
            let (lp, lw) = if ll.is_finite() {
                let lp = if fixed { ll } else { ll + log_prior(prior, ms, &s, cfg.mode) };
                (lp, lp - log_q(params, &b, &s, fixed))
            } else {
                (f64::NEG_INFINITY, f64::NEG_INFINITY)
            };
            Sample {
                b,
                s,
                log_posterior: lp,
                log_weight: lw,
                norm_weight: 0.0,
            }
        })
        .collect();
    Ok(Ensemble { samples, iteration })
}

/// Self-normalize the weights (softmax with max-subtraction).
pub fn normalize(e: &mut Ensemble) -> Result<(), InferError> {
    let max = e
        .samples
        .iter()
        .map(|s| s.log_weight)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(InferError::Degenerate {
            iteration: e.iteration,
            finite: 0,
            total: e.samples.len(),
            ess: 0.0,
        });
    }
    let mut total = 0.0;
    for s in &mut e.samples {
        s.norm_weight = (s.log_weight - max).exp();
        total += s.norm_weight;
    }
    for s in &mut e.samples {
        s.norm_weight /= total;
    }
    Ok(())
}

/// m independent categorical draws by normalized weight.
pub fn resample_equal_weight<R: Rng>(e: &Ensemble, m: usize, rng: &mut R) -> Vec<Sample> {
    let mut cdf = Vec::with_capacity(e.samples.len());
    let mut acc = 0.0;
    for s in &e.samples {
        acc += s.norm_weight;
        cdf.push(acc);
    }
    (0..m)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..1.0);
            let idx = cdf.partition_point(|c| *c < u).min(e.samples.len() - 1);
            e.samples[idx].clone()
        })
        .collect()
}

/// Posterior mean: per-switch closed probability and mean injections.
pub fn mean_estimate(e: &Ensemble) -> (Vec<f64>, InjectionState) {
    let n_s = e.samples[0].b.len();
    let n_i = e.samples[0].s.p.len();
    let mut p_closed = vec![0.0; n_s];
    let mut inj = InjectionState {
        p: vec![0.0; n_i],
        q: vec![0.0; n_i],
    };
    for s in &e.samples {
        let w = s.norm_weight;
        if w == 0.0 {
            continue;
        }
        for (acc, bit) in p_closed.iter_mut().zip(&s.b.bits) {
            if *bit {
                *acc += w;
            }
        }
        for i in 0..n_i {
            inj.p[i] += w * s.s.p[i];
            inj.q[i] += w * s.s.q[i];
        }
    }
    for p in &mut p_closed {
        *p = clamp(*p, 0.0, 1.0); // guard against rounding past the ends
    }
    (p_closed, inj)
}

/// The evaluated sample with the highest posterior value. Exact ties (common
/// when a flipped switch lies in a de-energized island and cannot affect the
/// flows) break toward the smaller topology key, matching the oracle ranking.
pub fn map_estimate(e: &Ensemble) -> &Sample {
    e.samples
        .iter()
        .min_by(|a, b| {
            b.log_posterior
                .total_cmp(&a.log_posterior)
                .then(a.b.key().cmp(&b.b.key()))
        })
        .expect("non-empty ensemble")
}

/// PMC update: locations move to the weighted mean, scales stay fixed.
/// Geometric shrink applied to the injection proposal scales after each
/// iteration. Without it every iteration re-draws all injections at the full
/// forecast spread, so the joint score is dominated by injection-draw luck
/// rather than by topology improvements and the sampler cannot refine.
pub const SCALE_DECAY: f64 = 0.5;

pub fn pmc_update(params: &ProposalParams, e: &Ensemble) -> ProposalParams {
    let (p_closed, inj) = mean_estimate(e);
    let mut next = params.clone();
    for (dst, p) in next.p_bino.iter_mut().zip(&p_closed) {
        *dst = clamp(*p, P_BINO_MIN, P_BINO_MAX);
    }
    for i in 0..next.loc_p.len() {
        next.loc_p[i] = clamp(inj.p[i], next.bounds_p[i].0, next.bounds_p[i].1);
        next.loc_q[i] = clamp(inj.q[i], next.bounds_q[i].0, next.bounds_q[i].1);
        next.scale_p[i] *= SCALE_DECAY;
        next.scale_q[i] *= SCALE_DECAY;
    }
    next
}

/// Threshold the final closed-probabilities: closed iff p > 0.5 (exactly 0.5
/// ties toward closed), low-confidence flag for p in the 0.45..0.55 band.
pub fn decide_switches(p_bino: &[f64]) -> (SwitchVector, Vec<bool>) {
    let bits = p_bino.iter().map(|p| *p >= 0.5).collect();
    let flags = p_bino
        .iter()
        .map(|p| *p >= LOW_CONFIDENCE_BAND.0 && *p <= LOW_CONFIDENCE_BAND.1)
        .collect();
    (SwitchVector::from_bits(bits), flags)
}

/// Per-iteration diagnostics retained in the result.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationDiag {
    pub iteration: usize,
    pub ess: f64,
    pub finite_weights: usize,
    pub p_bino: Vec<f64>,
    pub max_log_posterior: f64,
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub b_hat: SwitchVector,
    /// Final unclamped posterior closed-probability per switch.
    pub p_bino_final: Vec<f64>,
    pub s_hat: InjectionState,
    /// Low-confidence flag per switch.
    pub flags: Vec<bool>,
    /// Best-posterior sample seen across all iterations.
    pub map_b: SwitchVector,
    pub map_s: InjectionState,
    pub map_log_posterior: f64,
    pub iterations: usize,
    pub diagnostics: Vec<IterationDiag>,
    pub posterior: Ensemble,
}

/// Plain importance sampling: a single draw-weigh-normalize pass.
pub fn run_is(
    net: &Network,
    ms: &MeasurementSet,
    cfg: &InferenceConfig,
) -> Result<EstimationResult, InferError> {
    let mut one = cfg.clone();
    one.iterations = 1;
    run_ais(net, ms, &one)
}

/// Adaptive importance sampling (population Monte Carlo) loop.
pub fn run_ais(
    net: &Network,
    ms: &MeasurementSet,
    cfg: &InferenceConfig,
) -> Result<EstimationResult, InferError> {
    assert!(cfg.samples >= 1 && cfg.iterations >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let prior = init_proposals(net, ms);
    let mut params = prior.clone();
    let mut diagnostics = Vec::with_capacity(cfg.iterations);
    let mut best: Option<(f64, SwitchVector, InjectionState)> = None;
    let mut last: Option<Ensemble> = None;

    for j in 1..=cfg.iterations {
        let draws = draw(&params, cfg.samples, cfg.fix_injections.as_ref(), &mut rng);
        let mut e = weigh(net, ms, draws, &params, &prior, cfg, j)?;
        // A first-iteration ESS near 1 is normal here (the discrete topology
        // terms make one best sample dominate); an iteration is degenerate
        // only when the ensemble carries almost no finite-weight signal.
        let degenerate =
            normalize(&mut e).is_err() || (cfg.samples > 1 && e.finite_count() < 2);
        if degenerate {
            // one recovery attempt: widen the continuous proposal and redraw
            let mut wide = params.clone();
            for s in wide.scale_p.iter_mut().chain(wide.scale_q.iter_mut()) {
                *s *= 2.0;
            }
            let draws = draw(&wide, cfg.samples, cfg.fix_injections.as_ref(), &mut rng);
            e = weigh(net, ms, draws, &wide, &prior, cfg, j)?;
            normalize(&mut e)?;
            if cfg.samples > 1 && e.finite_count() < 2 {
                return Err(InferError::Degenerate {
                    iteration: j,
                    finite: e.finite_count(),
                    total: e.samples.len(),
                    ess: e.ess(),
                });
            }
        }

        let m = map_estimate(&e);
        let better = best.as_ref().map_or(true, |(lp, b, _)| {
            m.log_posterior > *lp || (m.log_posterior == *lp && m.b.key() < b.key())
        });
        if better {
            best = Some((m.log_posterior, m.b.clone(), m.s.clone()));
        }
        let (p_closed, _) = mean_estimate(&e);
        diagnostics.push(IterationDiag {
            iteration: j,
            ess: e.ess(),
            finite_weights: e.finite_count(),
            p_bino: p_closed,
            max_log_posterior: m.log_posterior,
        });
        if j < cfg.iterations {
            params = pmc_update(&params, &e);
        }
        last = Some(e);
    }

    let posterior = last.expect("at least one iteration");
    let (p_final, s_hat) = mean_estimate(&posterior);
    let (b_hat, flags) = decide_switches(&p_final);
    let (map_lp, map_b, map_s) = best.expect("at least one finite iteration");
    Ok(EstimationResult {
        b_hat,
        p_bino_final: p_final,
        s_hat,
        flags,
        map_b,
        map_s,
        map_log_posterior: map_lp,
        iterations: cfg.iterations,
        diagnostics,
        posterior,
    })
}
