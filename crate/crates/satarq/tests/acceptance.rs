#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Acceptance suite: one test per release criterion, each printing a single
//! PASS/FAIL line (run with `cargo test --test acceptance -- --nocapture` to
//! see them). Tolerances are pinned in the assertions.

use std::time::Instant;

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use satarq::mdap::{stationary_oracle, stationary_series};
use satarq::metrics::{self, NarqMetrics};
use satarq::model::{
    self, derive, ChannelSpec, LinkParams, MonotonicityCondition, PowerMonotonicity, Scenario,
    SourceSpec,
};
use satarq::optimize::{self, GridDimension, GridSpec, ParamKind};
use satarq::sim::{self, SimConfig};

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

fn report(id: &str, outcome: Result<String, String>) {
    match outcome {
        Ok(detail) => println!("{id} PASS: {detail}"),
        Err(detail) => {
            println!("{id} FAIL: {detail}");
            panic!("{id} failed: {detail}");
        }
    }
}

fn direct(q: f64, l: u32, gamma: f64, power: f64) -> SourceSpec {
    SourceSpec {
        q,
        max_tx_time: l,
        channel: ChannelSpec::Direct { gamma, power },
    }
}

fn rayleigh(q: f64, l: u32, power: f64, rate: f64) -> SourceSpec {
    SourceSpec {
        q,
        max_tx_time: l,
        channel: ChannelSpec::Rayleigh { power, rate },
    }
}

fn scenario(sources: Vec<SourceSpec>, sim: SimConfig) -> Scenario {
    Scenario {
        sources,
        sim,
        objective: None,
    }
}

fn quick_sim() -> SimConfig {
    SimConfig {
        slots: 100_000,
        warmup: Some(1_000),
        seed: 42,
        replications: 1,
        aoi_cap: None,
    }
}

fn run_cli(args: &[&str]) -> i32 {
    let cli = satarq::cli::Cli::parse_from(args);
    satarq::cli::run(cli)
}

fn read_json(path: &std::path::Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).expect("output file readable");
    serde_json::from_str(&text).expect("output file is JSON")
}

/// A1: analyzing the symmetric two-source system at gamma = 0.8 reports the
/// frozen mean AoIs for caps 1 and 2 and a 12.96% relative reduction.
#[test]
fn a1_cap_two_reduces_mean_aoi_by_12_96_percent() {
    report("A1", check_a1());
}

fn check_a1() -> Result<String, String> {
    let dir = tempfile::tempdir().expect("tempdir");
    let start = Instant::now();
    let mut means = Vec::new();
    for (tag, l) in [("l1", 1u32), ("l2", 2u32)] {
        let sc = scenario(
            vec![direct(0.1, l, 0.8, 1.0), direct(0.1, l, 0.8, 1.0)],
            quick_sim(),
        );
        let path = dir.path().join(format!("{tag}.json"));
        std::fs::write(&path, serde_json::to_string(&sc).unwrap()).unwrap();
        let out = dir.path().join(tag);
        let code = run_cli(&[
            "satarq",
            "analyze",
            "--scenario",
            path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        ensure!(code == 0, "analyze exited with {code}");
        let metrics = read_json(&out.join("metrics.json"));
        means.push(metrics["per_source"][0]["mean_aoi"].as_f64().unwrap());
    }
    let elapsed = start.elapsed();
    let (aoi_l1, aoi_l2) = (means[0], means[1]);
    ensure!(
        (aoi_l1 - 14.157895).abs() < 1e-6,
        "mean AoI at L=1 is {aoi_l1}, expected 14.157895"
    );
    ensure!(
        (aoi_l2 - 12.323490).abs() < 1e-6,
        "mean AoI at L=2 is {aoi_l2}, expected 12.323490"
    );
    let reduction_pct = (aoi_l1 - aoi_l2) / aoi_l1 * 100.0;
    ensure!(
        (reduction_pct - 12.96).abs() <= 0.01,
        "reduction is {reduction_pct:.4}%, expected 12.96% within 0.01pp"
    );
    ensure!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1s");
    Ok(format!(
        "14.157895 -> 12.323490, reduction {reduction_pct:.4}% in {elapsed:?}"
    ))
}

/// A2: at gamma = 0.95 the cap-2 mean AoI exceeds the unbounded-ARQ mean by
/// 0.15%.
#[test]
fn a2_cap_two_sits_0_15_percent_above_the_unbounded_limit() {
    report("A2", check_a2());
}

fn check_a2() -> Result<String, String> {
    let start = Instant::now();
    let link = LinkParams {
        max_tx_time: 2,
        overall_gen_prob: 0.19,
        selection_prob: 0.095,
        success_prob: 0.95,
    };
    let truncated = metrics::aoi_mean(&link).map_err(|e| e.to_string())?;
    let carq = metrics::carq_metrics(0.19, 0.095, 0.95, 1e-10).map_err(|e| e.to_string())?;
    let gap_pct = (truncated - carq.aoi_mean) / carq.aoi_mean * 100.0;
    let elapsed = start.elapsed();
    ensure!(
        (gap_pct - 0.15).abs() <= 0.01,
        "gap is {gap_pct:.4}%, expected 0.15% within 0.01pp"
    );
    ensure!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1s");
    Ok(format!(
        "L=2 mean {truncated:.6} vs unbounded {:.6}, gap {gap_pct:.4}%",
        carq.aoi_mean
    ))
}

/// A3: energy-efficiency maxima over transmit power for rates 2 and 1.5
/// nats, in closed form and through the grid optimizer.
#[test]
fn a3_energy_efficiency_maxima_match_frozen_values() {
    report("A3", check_a3());
}

fn check_a3() -> Result<String, String> {
    let start = Instant::now();
    let expectations = [
        (2.0, 0.0576, 0.058, 20.0, 0.25),
        (1.5, 0.1057, 0.106, 10.0, 0.2),
    ];
    let mut details = Vec::new();
    for (rate, frozen, rounded, p_max, step) in expectations {
        let k = f64::exp_m1(rate);
        let peak = (-1.0f64).exp() / k;
        ensure!(
            (peak - frozen).abs() < 5e-5,
            "closed-form peak for R={rate} is {peak:.6}, expected {frozen}"
        );
        ensure!(
            ((peak * 1000.0).round() / 1000.0 - rounded).abs() < 1e-12,
            "peak for R={rate} rounds to {:.3}, expected {rounded}",
            (peak * 1000.0).round() / 1000.0
        );
        let template = scenario(vec![rayleigh(0.3, 2, 5.0, rate)], quick_sim());
        let grid = GridSpec {
            dimensions: vec![GridDimension {
                param: ParamKind::TxPower,
                source: 1,
                min: 1.0,
                max: p_max,
                step,
            }],
        };
        let result = optimize::optimize_ee(&template, &grid).map_err(|e| e.to_string())?;
        let argmax = result.argopt["P1"];
        ensure!(
            (argmax - k).abs() <= step + 1e-12,
            "argmax {argmax} is more than one grid step from k = {k:.4}"
        );
        ensure!(
            (result.value - peak).abs() < 1e-3,
            "grid peak {:.6} far from closed form {peak:.6}",
            result.value
        );
        details.push(format!("R={rate}: peak {peak:.4} at P*≈{argmax}"));
    }
    let elapsed = start.elapsed();
    ensure!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1s");
    Ok(details.join("; "))
}

/// A4: a 20M-slot run of the heterogeneous two-source scenario passes
/// `validate` at the default tolerances (1% scalars, 0.005 TV).
#[test]
fn a4_simulation_agrees_with_theory_at_scale() {
    report("A4", check_a4());
}

fn check_a4() -> Result<String, String> {
    let dir = tempfile::tempdir().expect("tempdir");
    let sc = scenario(
        vec![direct(0.1, 3, 0.8, 15.0), direct(0.3, 2, 0.6, 10.0)],
        SimConfig {
            slots: 2_500_000,
            warmup: Some(10_000),
            seed: 42,
            replications: 8,
            aoi_cap: None,
        },
    );
    let path = dir.path().join("scenario.json");
    std::fs::write(&path, serde_json::to_string(&sc).unwrap()).unwrap();
    let out = dir.path().join("out");
    let start = Instant::now();
    let code = run_cli(&[
        "satarq",
        "validate",
        "--scenario",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let elapsed = start.elapsed();
    ensure!(code == 0, "validate exited with {code}, expected 0");
    let report = read_json(&out.join("validation.json"));
    ensure!(
        report["pass"].as_bool() == Some(true),
        "validation report did not pass"
    );
    let mut worst_rel: f64 = 0.0;
    let mut worst_tv: f64 = 0.0;
    for source in report["sources"].as_array().unwrap() {
        worst_tv = worst_tv
            .max(source["tv_aoi"].as_f64().unwrap())
            .max(source["tv_paoi"].as_f64().unwrap());
        for check in source["checks"].as_array().unwrap() {
            worst_rel = worst_rel.max(check["rel_error"].as_f64().unwrap());
        }
    }
    ensure!(
        elapsed.as_secs() < 180,
        "took {elapsed:?}, budget a few minutes"
    );
    Ok(format!(
        "20M slots in {elapsed:?}; worst scalar error {:.3}% (<=1%), worst TV {worst_tv:.4} (<0.005)",
        worst_rel * 100.0
    ))
}

/// A5: the generating-function series matches the truncated-matrix oracle
/// entrywise to 1e-9 across the reference grid.
#[test]
fn a5_series_matches_matrix_oracle_entrywise() {
    report("A5", check_a5());
}

fn check_a5() -> Result<String, String> {
    let n_max = 400u32;
    let mut points = 0usize;
    for l in [1u32, 2, 5] {
        for gamma in [0.3, 0.8] {
            for (p, p_i) in [(0.19, 0.095), (0.6, 0.45)] {
                let link = LinkParams {
                    max_tx_time: l,
                    overall_gen_prob: p,
                    selection_prob: p_i,
                    success_prob: gamma,
                };
                let series = stationary_series(&link, 1e-13).map_err(|e| e.to_string())?;
                let oracle = stationary_oracle(&link, n_max).map_err(|e| e.to_string())?;
                for n in 2..n_max {
                    let ys = series.y(n).unwrap_or(0.0);
                    let gs = series.g(n).unwrap_or(0.0);
                    let yo = oracle.y(n).unwrap();
                    let go = oracle.g(n).unwrap();
                    ensure!(
                        (ys - yo).abs() < 1e-9,
                        "y({n}) differs by {:.2e} at L={l}, gamma={gamma}, p_i={p_i}",
                        (ys - yo).abs()
                    );
                    ensure!(
                        (gs - go).abs() < 1e-9,
                        "g({n}) differs by {:.2e} at L={l}, gamma={gamma}, p_i={p_i}",
                        (gs - go).abs()
                    );
                }
                points += 1;
            }
        }
    }
    Ok(format!(
        "{points} parameter points, entries n in [2, {n_max}) within 1e-9"
    ))
}

/// A6: exact identities on 1000 randomized parameter sets, all within 1e-9.
#[test]
fn a6_exact_identities_on_randomized_parameters() {
    report("A6", check_a6());
}

fn check_a6() -> Result<String, String> {
    let mut rng = ChaCha12Rng::seed_from_u64(2024);
    for draw in 0..1000 {
        let n = rng.random_range(1..=5usize);
        let gen_probs: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..=1.0)).collect();
        let p = model::overall_ugp(&gen_probs);
        let selection = model::selection_probabilities(&gen_probs);
        let sum: f64 = selection.iter().sum();
        ensure!(
            (sum - p).abs() < 1e-9,
            "draw {draw}: selection probabilities sum to {sum}, expected {p}"
        );
        let mut per_source = Vec::with_capacity(n);
        for &p_i in &selection {
            let link = LinkParams {
                max_tx_time: rng.random_range(1..=30),
                overall_gen_prob: p,
                selection_prob: p_i,
                success_prob: rng.random_range(0.05..=1.0),
            };
            let power = rng.random_range(0.1..=100.0);
            let m = metrics::source_metrics(&link, power).map_err(|e| e.to_string())?;
            ensure!(
                (m.mean_paoi - m.mean_success_interval - m.mean_tx_time).abs() < 1e-9,
                "draw {draw}: mean PAoI != E[X] + E[T]"
            );
            ensure!(
                (m.mean_aoi - m.mean_success_interval - 1.0).abs() < 1e-9,
                "draw {draw}: mean AoI != E[X] + 1"
            );
            ensure!(
                (m.ee * (m.mean_aoi - 1.0) * m.avg_power - 1.0).abs() < 1e-9,
                "draw {draw}: ee * (mean AoI - 1) * power != 1"
            );
            per_source.push(m);
        }
        let sys = metrics::system_metrics(&per_source, 0.5, None).map_err(|e| e.to_string())?;
        let identity = sys.overall_ee * sys.harmonic_timeliness * sys.total_power;
        ensure!(
            (identity - n as f64).abs() < 1e-9,
            "draw {draw}: overall identity gives {identity}, expected {n}"
        );
    }
    Ok("1000 randomized draws, every identity within 1e-9".into())
}

/// A7: without retransmission the AoI and peak-AoI laws coincide —
/// analytically to 1e-12 and indistinguishably in simulation.
#[test]
fn a7_no_retransmission_collapses_aoi_and_peak_aoi() {
    report("A7", check_a7());
}

fn check_a7() -> Result<String, String> {
    for gamma in [0.3, 0.8, 0.95] {
        let link = LinkParams {
            max_tx_time: 1,
            overall_gen_prob: 0.19,
            selection_prob: 0.095,
            success_prob: gamma,
        };
        let aoi = metrics::aoi_pmf(&link, 1e-12).map_err(|e| e.to_string())?;
        let paoi = metrics::paoi_pmf(&link, 1e-12).map_err(|e| e.to_string())?;
        let end = aoi.support_end().min(paoi.support_end());
        for age in 2..=end {
            ensure!(
                (aoi.prob(age) - paoi.prob(age)).abs() < 1e-12,
                "pmfs differ at n={age} for gamma={gamma}"
            );
        }
        let NarqMetrics { mean, .. } =
            metrics::narq_metrics(0.095, gamma, 1e-12).map_err(|e| e.to_string())?;
        ensure!(
            (metrics::aoi_mean(&link).unwrap() - mean).abs() < 1e-12
                && (metrics::paoi_mean(&link).unwrap() - mean).abs() < 1e-12,
            "means differ for gamma={gamma}"
        );
    }

    // Simulation side: TV between the empirical AoI and PAoI laws of one run
    // must sit below the seed-to-seed PAoI noise floor.
    let narq_scenario = |seed: u64| {
        scenario(
            vec![direct(0.1, 1, 0.8, 1.0), direct(0.1, 1, 0.8, 1.0)],
            SimConfig {
                slots: 4_000_000,
                warmup: Some(10_000),
                seed,
                replications: 1,
                aoi_cap: None,
            },
        )
    };
    let empirical = |seed: u64| -> Result<Vec<sim::EmpiricalSource>, String> {
        let sc = narq_scenario(seed);
        let d = derive(&sc).map_err(|e| e.to_string())?;
        let counters = sim::run_scenario(&sc, &d).map_err(|e| e.to_string())?;
        sim::empirical_metrics(&counters, &d)
            .into_iter()
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())
    };
    let run_a = empirical(42)?;
    let run_b = empirical(142)?;
    for i in 0..run_a.len() {
        let tv_same_run = sim::total_variation(&run_a[i].aoi_pmf, &run_a[i].paoi_pmf);
        let noise_floor = sim::total_variation(&run_a[i].paoi_pmf, &run_b[i].paoi_pmf);
        ensure!(
            tv_same_run < noise_floor,
            "source {i}: TV(aoi, paoi) = {tv_same_run:.5} not below noise floor {noise_floor:.5}"
        );
    }
    Ok("analytic pmfs within 1e-12; simulated TV below the seed-to-seed noise floor".into())
}

/// A8: cap 200 reproduces the unbounded-retransmission closed forms to 1e-6.
#[test]
fn a8_large_cap_converges_to_the_unbounded_limit() {
    report("A8", check_a8());
}

fn check_a8() -> Result<String, String> {
    for gamma in [0.3, 0.8] {
        for (p, p_i) in [(0.19, 0.095), (0.6, 0.45)] {
            let link = LinkParams {
                max_tx_time: 200,
                overall_gen_prob: p,
                selection_prob: p_i,
                success_prob: gamma,
            };
            let carq = metrics::carq_metrics(p, p_i, gamma, 1e-10).map_err(|e| e.to_string())?;
            let aoi = metrics::aoi_mean(&link).unwrap();
            let paoi = metrics::paoi_mean(&link).unwrap();
            ensure!(
                (aoi - carq.aoi_mean).abs() < 1e-6,
                "mean AoI gap {:.2e} at gamma={gamma}, p_i={p_i}",
                (aoi - carq.aoi_mean).abs()
            );
            ensure!(
                (paoi - carq.paoi_mean).abs() < 1e-6,
                "mean PAoI gap {:.2e} at gamma={gamma}, p_i={p_i}",
                (paoi - carq.paoi_mean).abs()
            );
            let truncated = metrics::aoi_pmf(&link, 1e-10).unwrap();
            let truncated_peak = metrics::paoi_pmf(&link, 1e-10).unwrap();
            for n in 2..=60 {
                ensure!(
                    (truncated.prob(n) - carq.aoi_pmf.prob(n)).abs() < 1e-6,
                    "AoI pmf gap at n={n}, gamma={gamma}"
                );
                ensure!(
                    (truncated_peak.prob(n) - carq.paoi_pmf.prob(n)).abs() < 1e-6,
                    "PAoI pmf gap at n={n}, gamma={gamma}"
                );
            }
        }
    }
    Ok("means and pmfs at L=200 within 1e-6 of the closed forms".into())
}

/// A9: monotonicity and dominance: mean AoI falls and power rises with the
/// cap; the optimal source-aware assignment dominates every baseline; a
/// certified link's average power is numerically non-decreasing in transmit
/// power.
#[test]
fn a9_monotonicity_and_dominance() {
    report("A9", check_a9());
}

fn check_a9() -> Result<String, String> {
    // Cap monotonicity on L = 1..50, strict while increments resolve in f64.
    for gamma in [0.3, 0.8] {
        let mut prev_aoi = f64::INFINITY;
        let mut prev_power = 0.0;
        for l in 1..=50u32 {
            let link = LinkParams {
                max_tx_time: l,
                overall_gen_prob: 0.19,
                selection_prob: 0.095,
                success_prob: gamma,
            };
            let aoi = metrics::aoi_mean(&link).unwrap();
            let power = metrics::avg_power(&link, 15.0).unwrap();
            ensure!(aoi <= prev_aoi, "mean AoI rose at L={l}, gamma={gamma}");
            ensure!(power >= prev_power, "power fell at L={l}, gamma={gamma}");
            if link.hold_prob().powi(l as i32) > 1e-14 {
                ensure!(
                    aoi < prev_aoi && power > prev_power,
                    "saturated early at L={l}, gamma={gamma}"
                );
            }
            prev_aoi = aoi;
            prev_power = power;
        }
    }

    // Weighted-sum dominance on the 1..15 cap grid at weight 0.5.
    let template = scenario(
        vec![rayleigh(0.1, 2, 15.0, 2.0), rayleigh(0.1, 2, 15.0, 1.5)],
        quick_sim(),
    );
    let grid = GridSpec {
        dimensions: vec![
            GridDimension {
                param: ParamKind::MaxTxTime,
                source: 1,
                min: 1.0,
                max: 15.0,
                step: 1.0,
            },
            GridDimension {
                param: ParamKind::MaxTxTime,
                source: 2,
                min: 1.0,
                max: 15.0,
                step: 1.0,
            },
        ],
    };
    let result = optimize::optimize_ws(&template, &grid, 0.5).map_err(|e| e.to_string())?;
    let agnostic = result.baselines["source_agnostic"].value;
    let narq = result.baselines["narq"].value;
    let near_carq = result.baselines["near_carq"].value;
    ensure!(
        result.value <= agnostic && agnostic <= narq && agnostic <= near_carq,
        "dominance chain violated: opt {} agnostic {agnostic} narq {narq} near_carq {near_carq}",
        result.value
    );

    // Certified power monotonicity: each sufficient condition, scanned on a
    // fine transmit-power grid under the outage channel model.
    let cases = [
        (2u32, 0.19, 2.0, 1.0, MonotonicityCondition::SmallMaxTxTime),
        (
            10,
            0.20,
            2.0,
            1.0,
            MonotonicityCondition::GenerationThreshold,
        ),
        (
            10,
            0.05,
            1.0,
            f64::exp_m1(1.0), // start where gamma(P) = 1/e
            MonotonicityCondition::SuccessThreshold,
        ),
    ];
    for (l, p, rate, p_min, expected) in cases {
        let k = f64::exp_m1(rate);
        let gamma_at_min = (-k / p_min).exp();
        match model::power_monotonicity_certificate(l, p, gamma_at_min) {
            PowerMonotonicity::CertifiedIncreasing(condition) if condition == expected => {}
            other => {
                return Err(format!(
                    "expected certificate {expected:?} for L={l}, p={p}, got {other:?}"
                ))
            }
        }
        let p_i = p / 2.0;
        let mut prev = 0.0;
        for step in 0..3000 {
            let power = p_min + step as f64 * (20.0 - p_min) / 2999.0;
            let link = LinkParams {
                max_tx_time: l,
                overall_gen_prob: p,
                selection_prob: p_i,
                success_prob: (-k / power).exp(),
            };
            let energy = metrics::avg_power(&link, power).unwrap();
            ensure!(
                energy >= prev - 1e-9,
                "certified case {expected:?}: E(P) dropped at P={power}"
            );
            prev = energy;
        }
    }

    // And on randomized parameter combos: every certified link must scan
    // non-decreasing over its transmit-power range.
    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let mut certified = 0;
    for _ in 0..200 {
        let l = rng.random_range(1..=25u32);
        let p = rng.random_range(0.01..=0.6);
        let rate = rng.random_range(0.5..=2.5);
        let p_min = rng.random_range(1.0..=10.0);
        let p_max = p_min + rng.random_range(5.0..=40.0);
        let k = f64::exp_m1(rate);
        // gamma rises with power, so certifying at the low end covers the range.
        let gamma_at_min = (-k / p_min).exp();
        if model::power_monotonicity_certificate(l, p, gamma_at_min)
            == PowerMonotonicity::Unknown
        {
            continue;
        }
        certified += 1;
        let p_i = p * rng.random_range(0.2..=1.0);
        let mut prev = 0.0;
        for step in 0..500 {
            let power = p_min + step as f64 * (p_max - p_min) / 499.0;
            let link = LinkParams {
                max_tx_time: l,
                overall_gen_prob: p,
                selection_prob: p_i,
                success_prob: (-k / power).exp(),
            };
            let energy = metrics::avg_power(&link, power).unwrap();
            ensure!(
                energy >= prev - 1e-9,
                "randomized certified combo (L={l}, p={p:.3}, R={rate:.2}): E(P) dropped at P={power}"
            );
            prev = energy;
        }
    }
    ensure!(certified > 50, "too few certified combos ({certified}) drawn");
    Ok(format!(
        "cap monotonicity, weighted-sum dominance, and {} certified power scans (3 targeted + {certified} randomized) all hold",
        certified + 3
    ))
}

/// A10: figure-level improvement percentages are not reproducible from the
/// stated parameters and are out of scope; the replacement behavior is the
/// degeneracy flag on energy-efficiency optima that silence a dominated
/// source (zero or grid-minimum generation probability / transmit power).
#[test]
fn a10_energy_efficiency_degeneracy_flags() {
    report("A10", check_a10());
}

fn check_a10() -> Result<String, String> {
    // Generation-probability sweep: source 1 (rate 2) has the lower peak
    // efficiency, so the optimum pushes its generation to the grid minimum.
    let template = scenario(
        vec![rayleigh(0.1, 2, 15.0, 2.0), rayleigh(0.1, 2, 15.0, 1.5)],
        quick_sim(),
    );
    let q_grid = GridSpec {
        dimensions: vec![
            GridDimension {
                param: ParamKind::GenProb,
                source: 1,
                min: 0.01,
                max: 1.0,
                step: 0.09,
            },
            GridDimension {
                param: ParamKind::GenProb,
                source: 2,
                min: 0.01,
                max: 1.0,
                step: 0.09,
            },
        ],
    };
    let by_gen = optimize::optimize_ee(&template, &q_grid).map_err(|e| e.to_string())?;
    ensure!(
        by_gen.argopt["q1"] == 0.01,
        "expected source 1 at the grid minimum, got q1 = {}",
        by_gen.argopt["q1"]
    );
    ensure!(
        by_gen.degenerate_sources == vec![1],
        "expected source 1 flagged, got {:?}",
        by_gen.degenerate_sources
    );

    // Transmit-power sweep with source 2 pinned at its own optimum: every
    // positive power for source 1 dilutes the blend, so its optimum is zero.
    let template = scenario(
        vec![
            rayleigh(0.2, 2, 15.0, 2.0),
            rayleigh(0.2, 2, f64::exp_m1(1.5), 1.5),
        ],
        quick_sim(),
    );
    let p_grid = GridSpec {
        dimensions: vec![GridDimension {
            param: ParamKind::TxPower,
            source: 1,
            min: 0.0,
            max: 15.0,
            step: 3.0,
        }],
    };
    let by_power = optimize::optimize_ee(&template, &p_grid).map_err(|e| e.to_string())?;
    ensure!(
        by_power.argopt["P1"] == 0.0,
        "expected a zero-power optimum for source 1, got {}",
        by_power.argopt["P1"]
    );
    ensure!(
        by_power.degenerate_sources == vec![1],
        "expected source 1 flagged, got {:?}",
        by_power.degenerate_sources
    );
    Ok(
        "zero/minimum optima detected and flagged for dominated sources; \
         figure-level percentages replaced by A6/A9 property checks"
            .into(),
    )
}
