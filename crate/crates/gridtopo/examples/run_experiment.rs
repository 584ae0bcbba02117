//! Batch accuracy experiment: repeated scenario generation + estimation with
//! per-variant overrides, reporting mean first- and second-stage accuracy.
//!
//! Usage: cargo run --release --example run_experiment -- [feeder] [reps]

use anyhow::Result;
use gridtopo::harness::{run_experiment, ExperimentConfig, InferenceBlock, TruthSpec, VariantOverride};
use gridtopo::measurement::{LikelihoodMode, MeasurementConfig};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let feeder = args.next().unwrap_or_else(|| "feeders/ieee123_analog.json".to_string());
    let repetitions: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);

    let cfg = ExperimentConfig {
        feeder,
        truth: TruthSpec::Bits { bits: "1101001001101".to_string() },
        repetitions,
        measurement: MeasurementConfig {
            meter_ratio: 0.3,
            meter_sigma: 0.01,
            forecast_sigma: 0.10,
            rng_seed: 1,
        },
        inference: InferenceBlock {
            samples: 1000,
            iterations: 3,
            mode: LikelihoodMode::Robust,
            seed: 2,
        },
        rx_scale: 1.0,
        output_dir: None,
        variants: vec![
            VariantOverride { iterations: Some(1), ..Default::default() },
            VariantOverride { iterations: Some(2), ..Default::default() },
            VariantOverride { iterations: Some(3), ..Default::default() },
        ],
        report_timing: true,
        pf_tol: None,
        pf_max_iter: None,
    };

    let report = run_experiment(&cfg)?;
    print!("{}", report.csv());
    println!();
    print!("{}", report.trace_csv());
    Ok(())
}
