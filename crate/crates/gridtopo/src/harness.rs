//! Experiment driver: repeated scenario generation + estimation over seeds,
//! aggregated into CSV reports and per-iteration convergence traces.

use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

use crate::inference::{decide_switches, run_ais, InferenceConfig};
use crate::measurement::{simulate, LikelihoodMode, MeasurementConfig};
use crate::netmodel::{parse_feeder, Network, SwitchVector};
use crate::powerflow::{InjectionState, PfConfig};
use crate::twostage::{accuracy, correct, Stage};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] crate::netmodel::NetError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Ground-truth topology supplied directly or generated per repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthSpec {
    Bits { bits: String },
    RandomOpen { random_open: usize },
}

impl TruthSpec {
    pub fn for_repetition(&self, net: &Network, seed: u64) -> Result<SwitchVector, HarnessError> {
        match self {
            TruthSpec::Bits { bits } => {
                let b = SwitchVector::parse(bits)
                    .ok_or_else(|| HarnessError::Config(format!("bad truth bits `{bits}`")))?;
                if b.len() != net.n_switches() {
                    return Err(HarnessError::Config(format!(
                        "truth has {} bits, feeder has {} switches",
                        b.len(),
                        net.n_switches()
                    )));
                }
                Ok(b)
            }
            TruthSpec::RandomOpen { random_open } => {
                let n = net.n_switches();
                if *random_open > n {
                    return Err(HarnessError::Config(format!(
                        "cannot open {random_open} of {n} switches"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut b = SwitchVector::all_closed(n);
                for i in index_sample(&mut rng, n, *random_open) {
                    b.bits[i] = false;
                }
                Ok(b)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceBlock {
    pub samples: usize,
    pub iterations: usize,
    pub mode: LikelihoodMode,
    #[serde(default)]
    pub seed: u64,
}

/// Optional per-variant overrides of the base configuration; unset fields
/// inherit the base value. One CSV row is emitted per variant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantOverride {
    pub samples: Option<usize>,
    pub iterations: Option<usize>,
    pub mode: Option<LikelihoodMode>,
    pub meter_sigma: Option<f64>,
    pub forecast_sigma: Option<f64>,
    pub meter_ratio: Option<f64>,
    pub rx_scale: Option<f64>,
}

fn default_repetitions() -> usize {
    100
}
fn default_rx() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub feeder: String,
    pub truth: TruthSpec,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    pub measurement: MeasurementConfig,
    pub inference: InferenceBlock,
    #[serde(default = "default_rx")]
    pub rx_scale: f64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub variants: Vec<VariantOverride>,
    /// When false, the CSV time column is written as 0.000 so report bytes
    /// are reproducible across runs and machines.
    #[serde(default = "default_true")]
    pub report_timing: bool,
    #[serde(default)]
    pub pf_tol: Option<f64>,
    #[serde(default)]
    pub pf_max_iter: Option<usize>,
}

impl ExperimentConfig {
    pub fn load<P: AsRef<Path>>(path: P) -> Result<ExperimentConfig, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.repetitions == 0 {
            return Err(HarnessError::Config("repetitions must be >= 1".into()));
        }
        if self.rx_scale <= 0.0 || self.variants.iter().any(|v| v.rx_scale.unwrap_or(1.0) <= 0.0) {
            return Err(HarnessError::Config("rx_scale must be > 0".into()));
        }
        Ok(())
    }
}

/// Scale every line's series resistance, leaving reactance and shunts alone.
pub fn scale_rx(net: &Network, factor: f64) -> Network {
    net.with_rx_scaled(factor)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub samples: usize,
    pub iterations: usize,
    pub meter_sigma: f64,
    pub forecast_sigma: f64,
    pub meter_ratio: f64,
    pub rx_scale: f64,
    pub time_s: f64,
    /// Mean first-stage accuracy, percent.
    pub rho1: f64,
    /// Mean second-stage accuracy, percent.
    pub rho2: f64,
    pub fail_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    /// Per variant: mean decided accuracy after each iteration 1..j_max,
    /// then one final post-correction point.
    pub traces: Vec<Vec<f64>>,
}

impl ExperimentReport {
    pub fn csv(&self) -> String {
        let mut out = String::from(
            "samples,iterations,meter_sigma,forecast_sigma,meter_ratio,rx_scale,time_s,rho1,rho2,fail_count\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.3},{:.4},{:.4},{}\n",
                r.samples,
                r.iterations,
                r.meter_sigma,
                r.forecast_sigma,
                r.meter_ratio,
                r.rx_scale,
                r.time_s,
                r.rho1,
                r.rho2,
                r.fail_count
            ));
        }
        out
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("variant,point,label,mean_accuracy\n");
        for (v, trace) in self.traces.iter().enumerate() {
            for (i, acc) in trace.iter().enumerate() {
                let label = if i + 1 == trace.len() {
                    "post_correction".to_string()
                } else {
                    format!("iteration_{}", i + 1)
                };
                out.push_str(&format!("{},{},{},{:.4}\n", v, i, label, acc));
            }
        }
        out
    }
}

/// Derive independent seed streams for one repetition.
pub fn repetition_seeds(base: u64, rep: usize) -> (u64, u64, u64) {
    // simple splitmix-style mixing keeps streams decorrelated across reps
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }
    let r = rep as u64;
    (
        mix(base.wrapping_add(r.wrapping_mul(3).wrapping_add(1))),
        mix(base.wrapping_add(r.wrapping_mul(3).wrapping_add(2))),
        mix(base.wrapping_add(r.wrapping_mul(3).wrapping_add(3))),
    )
}

struct Variant {
    samples: usize,
    iterations: usize,
    mode: LikelihoodMode,
    meter_sigma: f64,
    forecast_sigma: f64,
    meter_ratio: f64,
    rx_scale: f64,
}

fn variants_of(cfg: &ExperimentConfig) -> Vec<Variant> {
    let base = Variant {
        samples: cfg.inference.samples,
        iterations: cfg.inference.iterations,
        mode: cfg.inference.mode,
        meter_sigma: cfg.measurement.meter_sigma,
        forecast_sigma: cfg.measurement.forecast_sigma,
        meter_ratio: cfg.measurement.meter_ratio,
        rx_scale: cfg.rx_scale,
    };
    if cfg.variants.is_empty() {
        return vec![base];
    }
    cfg.variants
        .iter()
        .map(|v| Variant {
            samples: v.samples.unwrap_or(base.samples),
            iterations: v.iterations.unwrap_or(base.iterations),
            mode: v.mode.unwrap_or(base.mode),
            meter_sigma: v.meter_sigma.unwrap_or(base.meter_sigma),
            forecast_sigma: v.forecast_sigma.unwrap_or(base.forecast_sigma),
            meter_ratio: v.meter_ratio.unwrap_or(base.meter_ratio),
            rx_scale: v.rx_scale.unwrap_or(base.rx_scale),
        })
        .collect()
}

/// Run every variant × repetition, writing report.csv / trace.csv when an
/// output directory is configured.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let base_net = parse_feeder(&cfg.feeder)?;
    let mut rows = Vec::new();
    let mut traces = Vec::new();

    for variant in variants_of(cfg) {
        let net = if variant.rx_scale == 1.0 {
            base_net.clone()
        } else {
            scale_rx(&base_net, variant.rx_scale)
        };
        let start = Instant::now();
        let mut rho1_sum = 0.0;
        let mut rho2_sum = 0.0;
        let mut fail_count = 0usize;
        let mut ok_count = 0usize;
        let mut trace_sum = vec![0.0; variant.iterations + 1];

        for rep in 0..cfg.repetitions {
            let (truth_seed, meas_seed, inf_seed) =
                repetition_seeds(cfg.measurement.rng_seed ^ cfg.inference.seed, rep);
            let truth_b = cfg.truth.for_repetition(&net, truth_seed)?;
            let truth_s = InjectionState::nominal(&net);
            let mcfg = MeasurementConfig {
                meter_ratio: variant.meter_ratio,
                meter_sigma: variant.meter_sigma,
                forecast_sigma: variant.forecast_sigma,
                rng_seed: meas_seed,
            };
            let ms = match simulate(&net, &truth_b, &truth_s, &mcfg) {
                Ok(ms) => ms,
                Err(_) => {
                    fail_count += 1;
                    continue;
                }
            };
            let icfg = InferenceConfig {
                samples: variant.samples,
                iterations: variant.iterations,
                mode: variant.mode,
                seed: inf_seed,
                pf: PfConfig {
                    tol: cfg.pf_tol.unwrap_or_else(|| PfConfig::default().tol),
                    max_iter: cfg.pf_max_iter.unwrap_or_else(|| PfConfig::default().max_iter),
                },
                fix_injections: None,
            };
            let result = match run_ais(&net, &ms, &icfg) {
                Ok(r) => r,
                Err(_) => {
                    fail_count += 1;
                    continue;
                }
            };
            let corrected = correct(&net, &result);
            rho1_sum += accuracy(&net, &truth_b, &corrected, Stage::First);
            let rho2 = accuracy(&net, &truth_b, &corrected, Stage::Second);
            rho2_sum += rho2;
            ok_count += 1;
            for (j, diag) in result.diagnostics.iter().enumerate() {
                let (b_j, _) = decide_switches(&diag.p_bino);
                let hits = b_j
                    .bits
                    .iter()
                    .zip(&truth_b.bits)
                    .filter(|(a, b)| a == b)
                    .count();
                trace_sum[j] += hits as f64 / truth_b.len() as f64;
            }
            trace_sum[variant.iterations] += rho2;
        }

        let denom = ok_count.max(1) as f64;
        let elapsed = if cfg.report_timing {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        rows.push(ReportRow {
            samples: variant.samples,
            iterations: variant.iterations,
            meter_sigma: variant.meter_sigma,
            forecast_sigma: variant.forecast_sigma,
            meter_ratio: variant.meter_ratio,
            rx_scale: variant.rx_scale,
            time_s: elapsed,
            rho1: 100.0 * rho1_sum / denom,
            rho2: 100.0 * rho2_sum / denom,
            fail_count,
        });
        traces.push(trace_sum.iter().map(|t| 100.0 * t / denom).collect());
    }

    let report = ExperimentReport { rows, traces };
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(Path::new(dir).join("report.csv"), report.csv())?;
        std::fs::write(Path::new(dir).join("trace.csv"), report.trace_csv())?;
    }
    Ok(report)
}

/// Resolve the worker count: explicit flag beats `GRIDTOPO_WORKERS`, beats
/// the rayon default. Call once at process start.
pub fn configure_workers(flag: Option<usize>) -> Result<(), HarnessError> {
    let n = flag.or_else(|| {
        std::env::var("GRIDTOPO_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        if n == 0 {
            return Err(HarnessError::Config("worker count must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}
