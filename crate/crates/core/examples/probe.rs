// Scratch probe for tuning acceptance-critical constants. Not shipped.

use simforge_core::data::{split_dataset, SplitFractions, SplitTag};
use simforge_core::env::{GenEnvironment, RewardConfig};
use simforge_core::generator::{filter_valid, generate_batch, histogram_outcomes, summarize_ranges};
use simforge_core::oracle::{rupture_space, synth_dataset, OracleKind};
use simforge_core::ppo::{train_agent, PolicyBundle, PolicyNetwork, PpoConfig, ValueNetwork};
use simforge_core::surrogate::{evaluate_binary, fit, GbdtConfig, Task};
use simforge_core::util::rng_from_seed;

fn main() {
    let t0 = std::time::Instant::now();
    let space = rupture_space();
    let ds = synth_dataset(OracleKind::Rupture, 2000, 11, &space).unwrap();
    let pos = ds.outcomes.iter().filter(|&&y| y == 1.0).count();
    println!("[{:?}] positives: {} / 2000", t0.elapsed(), pos);

    let split = split_dataset(
        &ds,
        SplitFractions { train: 0.8, validation: 0.0, test: 0.2 },
        12,
    )
    .unwrap();
    let train = split.select_rows(&split.split_indices(SplitTag::Train));
    let test = split.select_rows(&split.split_indices(SplitTag::Test));
    let cfg = GbdtConfig { seed: 13, ..GbdtConfig::default() };
    let model = fit(&train, &cfg, Task::Binary).unwrap();
    let metrics = evaluate_binary(&model, &test).unwrap();
    println!(
        "[{:?}] test AUC {:.4}, macro F1 {:.4}, acc {:.4}",
        t0.elapsed(),
        metrics.roc_auc.unwrap(),
        metrics.macro_f1.unwrap(),
        metrics.accuracy.unwrap()
    );

    // Environment from full-data ranges + scaling (model embeds scaling).
    let ranges = ds.parameter_ranges();
    let outcome_range = ds.outcome_range();
    for entropy_coef in [0.05] {
        for total_steps in [102_400usize] {
            let mut env = GenEnvironment::new(
                model.clone(),
                RewardConfig::default(),
                ranges.clone(),
                outcome_range,
                14,
            )
            .unwrap();
            let ppo_cfg = PpoConfig {
                total_steps,
                entropy_coef,
                seed: 15,
                ..PpoConfig::default()
            };
            // Random-policy baseline: fresh nets, one rollout of rewards.
            let mut rng = rng_from_seed(15);
            let policy0 = PolicyNetwork::new(8, &mut rng);
            let value0 = ValueNetwork::new(8, &mut rng);
            let baseline = {
                let mut env2 = GenEnvironment::new(
                    model.clone(),
                    RewardConfig::default(),
                    ranges.clone(),
                    outcome_range,
                    14,
                )
                .unwrap();
                let batch = simforge_core::ppo::collect_rollouts(
                    &mut env2, &policy0, &value0, 2048, &mut rng,
                )
                .unwrap();
                batch.mean_reward()
            };
            let t1 = std::time::Instant::now();
            let (bundle, curve) = train_agent(&mut env, &ppo_cfg).unwrap();
            let train_time = t1.elapsed();

            let first5: f64 = curve.entries.iter().take(5).map(|e| e.mean_reward).sum::<f64>() / 5.0;
            let last5: f64 = curve.entries.iter().rev().take(5).map(|e| e.mean_reward).sum::<f64>() / 5.0;

            // Generated batch reward + histogram spread.
            let gen_env = GenEnvironment::new(
                model.clone(),
                RewardConfig::default(),
                ranges.clone(),
                outcome_range,
                14,
            )
            .unwrap();
            let gd = generate_batch(&bundle, &gen_env, 5000, 16).unwrap();
            let filtered = filter_valid(&gd);
            let mean_reward: f64 = gd
                .predicted
                .iter()
                .zip(&gd.valid)
                .map(|(&p, &v)| if v { p } else { -1.0 })
                .sum::<f64>()
                / gd.predicted.len() as f64;
            let hist = histogram_outcomes(&filtered.predicted, 10).unwrap();
            let occupied = hist.iter().filter(|&&c| c > 0).count();
            println!(
                "ec={entropy_coef} steps={total_steps}: baseline {baseline:.3}, first5 {first5:.3}, last5 {last5:.3}, gen reward {mean_reward:.3}, retained {:.3}, bins {occupied}/10 {hist:?}, log_std {:?}, train {train_time:?}",
                filtered.retained_fraction(),
                bundle.policy.log_std.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(),
            );

            probe_bo_and_contour(&model, &bundle, &gen_env, t0);
        }
    }
}

fn probe_bo_and_contour(
    model: &simforge_core::surrogate::SurrogateModel,
    bundle: &PolicyBundle,
    gen_env: &GenEnvironment<simforge_core::surrogate::SurrogateModel>,
    t0: std::time::Instant,
) {
    use rand::Rng;
    let gd = generate_batch(bundle, gen_env, 5000, 16).unwrap();
    let filtered = filter_valid(&gd);
    let ranges = summarize_ranges(&filtered).unwrap().ranges();

    // Random-search oracle, 10^6 points.
    let t1 = std::time::Instant::now();
    let mut rng = rng_from_seed(77);
    let mut rs_best = f64::NEG_INFINITY;
    for _ in 0..1_000_000 {
        let p: Vec<f64> = ranges
            .iter()
            .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..hi) } else { lo })
            .collect();
        rs_best = rs_best.max(model.predict_params(&p).unwrap());
    }
    println!("[{:?}] random search best: {rs_best:.5} in {:?}", t0.elapsed(), t1.elapsed());

    let t1 = std::time::Instant::now();
    let study = simforge_core::bayesopt::run_study(
        |p| model.predict_params(p).unwrap_or(f64::NAN),
        ranges.clone(),
        1000,
        20,
        78,
    )
    .unwrap();
    let bo_best = study.best.as_ref().unwrap().value;
    println!(
        "[{:?}] BO best: {bo_best:.5} (diff {:.5}) in {:?}",
        t0.elapsed(),
        rs_best - bo_best,
        t1.elapsed()
    );

    // Contour monotonicity on the surrogate grid (height=7, width=6).
    let baseline = study.best.as_ref().unwrap().params.clone();
    println!(
        "generated ranges: h [{:.3},{:.3}] w [{:.3},{:.3}]; baseline h {:.3} w {:.3}",
        ranges[7].0, ranges[7].1, ranges[6].0, ranges[6].1, baseline[7], baseline[6]
    );
    let grid = simforge_core::bayesopt::contour_grid(model, (7, 6), &ranges, 50, &baseline).unwrap();
    let (mut gmin, mut gmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in grid.grid.iter() {
        gmin = gmin.min(v);
        gmax = gmax.max(v);
    }
    let mut violations = 0usize;
    let mut worst: f64 = 0.0;
    for a in 0..50 {
        for b in 0..49 {
            let d = grid.grid[(a, b + 1)] - grid.grid[(a, b)];
            if d > 0.0 {
                violations += 1;
                worst = worst.max(d);
            }
            let d = grid.grid[(b + 1, a)] - grid.grid[(b, a)];
            if d > 0.0 {
                violations += 1;
                worst = worst.max(d);
            }
        }
    }
    println!(
        "surrogate contour: grid range [{gmin:.6}, {gmax:.6}], {} violations of 4900 adjacent pairs, worst uptick {:.3e}",
        violations, worst
    );

    // Same check over the FULL training box ranges (wider slice).
    let full_ranges: Vec<(f64, f64)> = model
        .space
        .specs
        .iter()
        .map(|s| (s.lower, s.upper))
        .collect();
    let mid: Vec<f64> = full_ranges.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
    let grid = simforge_core::bayesopt::contour_grid(model, (7, 6), &full_ranges, 50, &mid).unwrap();
    let (mut gmin, mut gmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in grid.grid.iter() {
        gmin = gmin.min(v);
        gmax = gmax.max(v);
    }
    let mut violations = 0usize;
    let mut worst: f64 = 0.0;
    for a in 0..50 {
        for b in 0..49 {
            let d = grid.grid[(a, b + 1)] - grid.grid[(a, b)];
            if d > 0.0 {
                violations += 1;
                worst = worst.max(d);
            }
            let d = grid.grid[(b + 1, a)] - grid.grid[(b, a)];
            if d > 0.0 {
                violations += 1;
                worst = worst.max(d);
            }
        }
    }
    println!(
        "midpoint-baseline full-box contour: grid range [{gmin:.6}, {gmax:.6}], {} violations, worst uptick {:.3e}",
        violations, worst
    );

    // Oracle-score contour for comparison.
    use simforge_core::oracle::{rupture_score, RuptureParams};
    let mut oviol = 0usize;
    for a in 0..50 {
        for b in 0..49 {
            let mut p1 = baseline.clone();
            p1[7] = grid.axis_i[a];
            p1[6] = grid.axis_j[b];
            let mut p2 = p1.clone();
            p2[6] = grid.axis_j[b + 1];
            let s1 = rupture_score(&RuptureParams::from_row(&p1).unwrap());
            let s2 = rupture_score(&RuptureParams::from_row(&p2).unwrap());
            if s2 > s1 {
                oviol += 1;
            }
        }
    }
    println!("oracle contour: {oviol} violations along width sweeps");
}
