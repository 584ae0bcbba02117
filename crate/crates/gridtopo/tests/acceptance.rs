//! End-to-end acceptance suite. Each test prints a single summary line of the
//! form `C<n> <name>: PASS/FAIL (<metrics>)` before asserting, so a captured
//! run (`cargo test --test acceptance -- --nocapture`) reads as a checklist.

use std::path::PathBuf;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gridtopo::harness::{repetition_seeds, run_experiment, ExperimentConfig, InferenceBlock, TruthSpec, VariantOverride};
use gridtopo::inference::{normalize, run_ais, Ensemble, InferenceConfig, Sample};
use gridtopo::measurement::{simulate, LikelihoodMode, MeasurementConfig, MeasurementSet};
use gridtopo::netmodel::energized_set;
use gridtopo::oracle::exhaustive_map;
use gridtopo::powerflow::solve;
use gridtopo::twostage::correct;
use gridtopo::{parse_feeder, InjectionState, Network, PfConfig, SwitchVector};

const TRUTH_123: &str = "1101001001101";
const TRUTH_1282: &str = "11101011010101101010";

fn feeder_path(name: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../feeders").join(name);
    p.to_string_lossy().into_owned()
}

fn report_line(criterion: &str, pass: bool, detail: &str) {
    println!("{criterion}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
}

fn base_experiment(feeder: &str, truth: &str, iterations: usize) -> ExperimentConfig {
    ExperimentConfig {
        feeder: feeder_path(feeder),
        truth: TruthSpec::Bits { bits: truth.to_string() },
        repetitions: 100,
        measurement: MeasurementConfig {
            meter_ratio: 0.3,
            meter_sigma: 0.01,
            forecast_sigma: 0.10,
            rng_seed: 1,
        },
        inference: InferenceBlock {
            samples: 1000,
            iterations,
            mode: LikelihoodMode::Robust,
            seed: 2,
        },
        rx_scale: 1.0,
        output_dir: None,
        variants: Vec::new(),
        report_timing: false,
        pf_tol: None,
        pf_max_iter: None,
    }
}

/// C1: on the two small fixtures, with injections pinned at truth and tight
/// meters, the sampler's MAP topology must agree with the exhaustive oracle.
#[test]
fn c1_oracle_equivalence() {
    let started = std::time::Instant::now();
    let mut total_ok = 0;
    let mut detail = String::new();
    for feeder in ["toy4.json", "toy6.json"] {
        let net = parse_feeder(feeder_path(feeder)).unwrap();
        let truth_spec = TruthSpec::RandomOpen { random_open: 1 };
        let truth_s = InjectionState::nominal(&net);
        let mut ok = 0;
        for rep in 0..100 {
            let (truth_seed, meas_seed, inf_seed) = repetition_seeds(77, rep);
            let truth_b = truth_spec.for_repetition(&net, truth_seed).unwrap();
            let mcfg = MeasurementConfig {
                meter_ratio: 0.5,
                meter_sigma: 0.001,
                forecast_sigma: 0.10,
                rng_seed: meas_seed,
            };
            let ms = simulate(&net, &truth_b, &truth_s, &mcfg).unwrap();
            let cfg = InferenceConfig {
                samples: 200,
                iterations: 4,
                mode: LikelihoodMode::Robust,
                seed: inf_seed,
                pf: PfConfig::default(),
                fix_injections: Some(truth_s.clone()),
            };
            let res = run_ais(&net, &ms, &cfg).unwrap();
            let scores =
                exhaustive_map(&net, &ms, &truth_s, LikelihoodMode::Robust, &PfConfig::default())
                    .unwrap();
            if res.map_b == scores[0].b {
                ok += 1;
            }
        }
        detail.push_str(&format!("{feeder} {ok}/100 "));
        total_ok += usize::from(ok >= 95);
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = total_ok == 2 && elapsed < 120.0;
    report_line("C1 oracle equivalence", pass, &format!("{detail}in {elapsed:.1}s"));
    assert!(pass, "{detail}in {elapsed:.1}s");
}

/// C2: accuracy versus iteration budget on the 123-bus analog.
#[test]
fn c2_accuracy_vs_iterations() {
    let mut cfg = base_experiment("ieee123_analog.json", TRUTH_123, 3);
    cfg.variants = vec![
        VariantOverride { iterations: Some(1), ..Default::default() },
        VariantOverride { iterations: Some(2), ..Default::default() },
        VariantOverride { iterations: Some(3), ..Default::default() },
    ];
    let report = run_experiment(&cfg).unwrap();
    let (r1, r2, r3) = (report.rows[0].rho2, report.rows[1].rho2, report.rows[2].rho2);
    let pass = r2 >= 95.0 && r3 >= 98.0 && r3 >= r1 + 5.0;
    report_line(
        "C2 accuracy vs iterations",
        pass,
        &format!("rho2 j1={r1:.2} j2={r2:.2} j3={r3:.2}"),
    );
    assert!(pass, "rho2 j1={r1:.2} j2={r2:.2} j3={r3:.2}");
}

/// C3: adaptation beats a one-shot importance sampler with a 10x sample
/// budget on the largest fixture, under identical scenarios.
#[test]
fn c3_ais_beats_is() {
    let mut cfg = base_experiment("large1282_analog.json", TRUTH_1282, 10);
    cfg.repetitions = 6;
    cfg.variants = vec![
        VariantOverride { samples: Some(1000), iterations: Some(10), ..Default::default() },
        VariantOverride { samples: Some(10000), iterations: Some(1), ..Default::default() },
    ];
    let report = run_experiment(&cfg).unwrap();
    let (ais, is) = (report.rows[0].rho2, report.rows[1].rho2);
    let pass = ais >= is + 5.0;
    report_line("C3 AIS vs IS", pass, &format!("AIS={ais:.2} IS={is:.2}"));
    assert!(pass, "AIS={ais:.2} IS={is:.2}");
}

/// C4: accuracy must not improve when meters are removed.
#[test]
fn c4_observability_trend() {
    let mut cfg = base_experiment("ieee123_analog.json", TRUTH_123, 3);
    cfg.variants = vec![
        VariantOverride { meter_ratio: Some(0.3), ..Default::default() },
        VariantOverride { meter_ratio: Some(0.2), ..Default::default() },
        VariantOverride { meter_ratio: Some(0.1), ..Default::default() },
    ];
    let report = run_experiment(&cfg).unwrap();
    let r: Vec<f64> = report.rows.iter().map(|x| x.rho2).collect();
    let pass = r[0] >= r[1] && r[1] >= r[2];
    report_line(
        "C4 observability trend",
        pass,
        &format!("rho2 30%={:.2} 20%={:.2} 10%={:.2}", r[0], r[1], r[2]),
    );
    assert!(pass, "rho2 {r:?}");
}

/// C5: line-parameter stress. Power flow must converge on every fixture with
/// R/X scaled up, and accuracy may degrade only mildly.
#[test]
fn c5_rx_robustness() {
    // convergence on every fixture at every scale, truth and all-closed
    let fixtures = [
        ("toy4.json", "11"),
        ("toy6.json", "111111"),
        ("ieee123_analog.json", TRUTH_123),
        ("ieee123_loop1.json", TRUTH_123),
        ("ieee123_loop2.json", TRUTH_123),
        ("large1282_analog.json", TRUTH_1282),
    ];
    let mut all_converged = true;
    for (name, truth) in fixtures {
        let base: Network = parse_feeder(feeder_path(name)).unwrap();
        for scale in [1.5, 2.0] {
            let net = base.with_rx_scaled(scale);
            let s = InjectionState::nominal(&net);
            for b in [
                SwitchVector::parse(truth).unwrap(),
                SwitchVector::all_closed(net.n_switches()),
            ] {
                let sol = solve(&net, &b, &s, &PfConfig::default()).unwrap();
                all_converged &= sol.converged;
            }
        }
    }

    let mut cfg = base_experiment("ieee123_analog.json", TRUTH_123, 3);
    cfg.variants = vec![
        VariantOverride { rx_scale: Some(1.0), ..Default::default() },
        VariantOverride { rx_scale: Some(1.5), ..Default::default() },
        VariantOverride { rx_scale: Some(2.0), ..Default::default() },
    ];
    let report = run_experiment(&cfg).unwrap();
    let r: Vec<f64> = report.rows.iter().map(|x| x.rho2).collect();
    let degrade = (r[0] - r[1]).max(r[0] - r[2]);
    let pass = all_converged && degrade <= 6.0;
    report_line(
        "C5 R/X robustness",
        pass,
        &format!(
            "converged={all_converged} rho2 x1.0={:.2} x1.5={:.2} x2.0={:.2}",
            r[0], r[1], r[2]
        ),
    );
    assert!(pass, "converged={all_converged} rho2 {r:?}");
}

/// C6: weakly-meshed variants of the 123-bus fixture.
#[test]
fn c6_loop_structures() {
    let mut detail = String::new();
    let mut pass = true;
    for name in ["ieee123_loop1.json", "ieee123_loop2.json"] {
        let cfg = base_experiment(name, TRUTH_123, 3);
        let report = run_experiment(&cfg).unwrap();
        let rho2 = report.rows[0].rho2;
        detail.push_str(&format!("{name} rho2={rho2:.2} "));
        pass &= rho2 >= 95.0;
    }
    report_line("C6 loop structures", pass, detail.trim());
    assert!(pass, "{detail}");
}

/// C7: numerical invariants — weight normalization, power-flow residual and
/// energy balance, and the Gaussian likelihood against a pdf-product oracle.
#[test]
fn c7_numerical_invariants() {
    // (a) normalized weights sum to one, including extreme log spreads
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_sum_err = 0.0f64;
    for case in 0..1000 {
        let n = rng.gen_range(2..50);
        let spread = if case % 3 == 0 { 1000.0 } else { 10.0 };
        let samples: Vec<Sample> = (0..n)
            .map(|_| Sample {
                b: SwitchVector::all_closed(1),
                s: InjectionState { p: vec![], q: vec![] },
                log_posterior: 0.0,
                log_weight: rng.gen_range(-spread..spread),
                norm_weight: 0.0,
            })
            .collect();
        let mut e = Ensemble { samples, iteration: 1 };
        normalize(&mut e).unwrap();
        let sum: f64 = e.samples.iter().map(|s| s.norm_weight).sum();
        worst_sum_err = worst_sum_err.max((sum - 1.0).abs());
    }
    let weights_ok = worst_sum_err <= 1e-12;

    // (b) power-flow residual and relative energy balance on every fixture
    let mut worst_res = 0.0f64;
    let mut worst_bal = 0.0f64;
    for (name, truth) in [
        ("toy4.json", "11"),
        ("toy6.json", "111111"),
        ("ieee123_analog.json", TRUTH_123),
        ("ieee123_loop1.json", TRUTH_123),
        ("ieee123_loop2.json", TRUTH_123),
        ("large1282_analog.json", TRUTH_1282),
    ] {
        let net = parse_feeder(feeder_path(name)).unwrap();
        let s = InjectionState::nominal(&net);
        for b in [
            SwitchVector::parse(truth).unwrap(),
            SwitchVector::all_closed(net.n_switches()),
        ] {
            let sol = solve(&net, &b, &s, &PfConfig::default()).unwrap();
            assert!(sol.converged, "{name} unconverged");
            worst_res = worst_res.max(sol.max_residual);
            worst_bal = worst_bal.max(sol.energy_balance_error(&net));
        }
    }
    let pf_ok = worst_res < 1e-8 && worst_bal < 1e-6;

    // (c) log-likelihood versus an independently-coded pdf-product oracle
    let mut worst_ll_err = 0.0f64;
    for _ in 0..100 {
        let d = rng.gen_range(1..20);
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let sigma: Vec<f64> = (0..d).map(|_| rng.gen_range(0.1..10.0)).collect();
        let predicted: Vec<f64> = y
            .iter()
            .zip(&sigma)
            .map(|(v, s)| v + rng.gen_range(-3.0..3.0) * s)
            .collect();
        let ms = MeasurementSet {
            y: y.clone(),
            sigma: sigma.clone(),
            metered_load_ids: vec![],
            inj_mean_p: vec![],
            inj_mean_q: vec![],
            inj_sigma_p: vec![],
            inj_sigma_q: vec![],
            metered_phase: vec![],
        };
        let ll = ms.log_likelihood(Some(&predicted)).unwrap();
        // oracle: evaluate each pdf factor numerically, then take one log
        let product: f64 = y
            .iter()
            .zip(&sigma)
            .zip(&predicted)
            .map(|((v, s), p)| {
                let z = (p - v) / s;
                (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
            })
            .product();
        let rel = (ll - product.ln()).abs() / ll.abs().max(1.0);
        worst_ll_err = worst_ll_err.max(rel);
    }
    let ll_ok = worst_ll_err <= 1e-12;

    let pass = weights_ok && pf_ok && ll_ok;
    report_line(
        "C7 numerical invariants",
        pass,
        &format!(
            "weight_sum_err={worst_sum_err:.2e} pf_residual={worst_res:.2e} \
             energy_bal={worst_bal:.2e} loglik_err={worst_ll_err:.2e}"
        ),
    );
    assert!(pass);
}

/// C8: the naive likelihood (forecast residuals on served power) must show
/// the pseudomeasurement bias the robust mode avoids.
#[test]
fn c8_naive_bias() {
    let net = parse_feeder(feeder_path("ieee123_analog.json")).unwrap();
    let truth_b = SwitchVector::parse(TRUTH_123).unwrap();
    let truth_s = InjectionState::nominal(&net);
    let truth_energized = energized_set(&net, &truth_b).unwrap();
    let estimable: Vec<bool> = (0..net.n_switches())
        .map(|i| {
            let (f, t) = net.line_endpoints(net.switch_line(i));
            truth_energized.contains(f) || truth_energized.contains(t)
        })
        .collect();

    let mut biased_reps = 0;
    for rep in 0..100 {
        let (_, meas_seed, inf_seed) = repetition_seeds(3, rep);
        let mcfg = MeasurementConfig {
            meter_ratio: 0.3,
            meter_sigma: 0.01,
            forecast_sigma: 0.10,
            rng_seed: meas_seed,
        };
        let ms = simulate(&net, &truth_b, &truth_s, &mcfg).unwrap();
        let run = |mode| {
            let cfg = InferenceConfig {
                samples: 1000,
                iterations: 3,
                mode,
                seed: inf_seed,
                pf: PfConfig::default(),
                fix_injections: None,
            };
            correct(&net, &run_ais(&net, &ms, &cfg).unwrap())
        };
        let robust = run(LikelihoodMode::Robust);
        let naive = run(LikelihoodMode::Naive);
        let naive_only_wrong = (0..net.n_switches()).any(|i| {
            estimable[i]
                && naive.b_hat.bits[i] != truth_b.bits[i]
                && robust.b_hat.bits[i] == truth_b.bits[i]
        });
        if naive_only_wrong {
            biased_reps += 1;
        }
    }
    let pass = biased_reps >= 60;
    report_line("C8 naive-mode bias", pass, &format!("biased {biased_reps}/100"));
    assert!(pass, "biased {biased_reps}/100");
}

/// C9: every CLI subcommand is byte-deterministic, at 1 and at 4 workers.
#[test]
fn c9_cli_determinism() {
    let bin = env!("CARGO_BIN_EXE_gridtopo");
    let dir = tempfile::tempdir().unwrap();
    let feeder = feeder_path("toy6.json");

    let exp_cfg = dir.path().join("exp.json");
    std::fs::write(
        &exp_cfg,
        format!(
            r#"{{
  "feeder": "{feeder}",
  "truth": {{ "random_open": 1 }},
  "repetitions": 5,
  "measurement": {{ "meter_ratio": 0.5, "meter_sigma": 0.01, "forecast_sigma": 0.1, "rng_seed": 4 }},
  "inference": {{ "samples": 100, "iterations": 2, "mode": "robust", "seed": 5 }},
  "report_timing": false
}}"#
        ),
    )
    .unwrap();

    let scenario = dir.path().join("scenario.json").to_string_lossy().into_owned();
    // first command materializes the scenario consumed by the others
    let commands: Vec<(&str, Vec<String>)> = vec![
        (
            "simulate",
            vec![
                "simulate".into(),
                feeder.clone(),
                "--truth".into(),
                "110111".into(),
                "--seed".into(),
                "9".into(),
                "--output".into(),
                scenario.clone(),
            ],
        ),
        (
            "estimate",
            vec![
                "estimate".into(),
                feeder.clone(),
                "--scenario".into(),
                scenario.clone(),
                "--samples".into(),
                "200".into(),
                "--iterations".into(),
                "3".into(),
                "--seed".into(),
                "6".into(),
                "--output".into(),
                dir.path().join("result.json").to_string_lossy().into_owned(),
            ],
        ),
        (
            "oracle",
            vec![
                "oracle".into(),
                feeder.clone(),
                "--scenario".into(),
                scenario.clone(),
                "--output".into(),
                dir.path().join("ranking.csv").to_string_lossy().into_owned(),
            ],
        ),
        (
            "experiment",
            vec!["experiment".into(), exp_cfg.to_string_lossy().into_owned()],
        ),
    ];

    let mut pass = true;
    let mut detail = String::new();
    for (name, args) in &commands {
        let out_file = match *name {
            "simulate" => Some(dir.path().join("scenario.json")),
            "estimate" => Some(dir.path().join("result.json")),
            "oracle" => Some(dir.path().join("ranking.csv")),
            _ => None,
        };
        let mut outputs: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
        for workers in ["1", "4"] {
            for _run in 0..2 {
                let output = Command::new(bin)
                    .arg("--workers")
                    .arg(workers)
                    .args(args)
                    .output()
                    .unwrap();
                assert!(
                    output.status.success(),
                    "{name} failed: {}",
                    String::from_utf8_lossy(&output.stderr)
                );
                let file_bytes =
                    out_file.as_ref().map(|p| std::fs::read(p).unwrap()).unwrap_or_default();
                outputs.push((output.stdout, file_bytes));
            }
        }
        let identical = outputs.windows(2).all(|w| w[0] == w[1]);
        pass &= identical;
        detail.push_str(&format!("{name}={} ", if identical { "ok" } else { "DIFFERS" }));
    }
    report_line("C9 CLI determinism", pass, detail.trim());
    assert!(pass, "{detail}");
}
