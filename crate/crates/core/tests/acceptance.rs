//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_consensus::analysis::{fisher_check, optimal_gain, CovarianceForm};
use robust_consensus::config::ExperimentConfig;
use robust_consensus::engine::{rc_step_with_noise, CheckpointPlan, RcSystem};
use robust_consensus::ensemble::{compare_empirical_analytic, ensemble_stats, run_ensemble};
use robust_consensus::graph::{build_named, build_random, Family, RandomModel};
use robust_consensus::maps::{ReceiveMap, TransmitMap};
use robust_consensus::noise::{functionals, McSettings, NoiseModel};
use robust_consensus::presets::{preset, FIGURES};
use robust_consensus::Result;

type Outcome = Result<(bool, String)>;

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 linear failure / robust success", c1_linear_vs_robust),
        ("2 closed-form algebraic connectivity", c2_spectra),
        ("3 noise ratio and Fisher bound", c3_fisher),
        ("4 unbiasedness and MSE bound", c4_unbiased),
        ("5 asymptotic covariance", c5_covariance),
        ("6 scale invariance", c6_scale_invariance),
        ("7 graph-family scaling", c7_family_scaling),
        ("8 oracle equivalence", c8_oracle),
        ("9 determinism of presets", c9_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let (ok, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {name}: {} ({detail}) [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

/// Fraction of trials whose final dispersion, relative to the initial one,
/// satisfies `keep`.
fn dispersion_fraction(cfg: &ExperimentConfig, keep: impl Fn(f64) -> bool) -> Result<(f64, f64)> {
    let mut ex = cfg.resolve(Path::new("."))?;
    let gain = ex.gain()?;
    let mut spec = ex.ensemble_spec(gain)?;
    spec.plan = CheckpointPlan::At(vec![cfg.t_max]);
    let trs = run_ensemble(&spec)?;
    let mut ratios: Vec<f64> = trs.iter().map(|t| t.final_dispersion() / t.dispersion[0]).collect();
    let frac = ratios.iter().filter(|&&r| keep(r)).count() as f64 / ratios.len() as f64;
    ratios.sort_by(f64::total_cmp);
    Ok((frac, ratios[ratios.len() / 2]))
}

fn c1_linear_vs_robust() -> Outcome {
    let mut lin = preset("fig1").unwrap().series[0].1.clone();
    lin.trials = 100;
    let (lin_frac, lin_med) = dispersion_fraction(&lin, |r| r >= 0.5)?;
    let mut rob = preset("fig3").unwrap().series[0].1.clone();
    rob.trials = 100;
    let (rob_frac, rob_med) = dispersion_fraction(&rob, |r| r <= 0.05)?;
    Ok((
        lin_frac >= 0.9 && rob_frac >= 0.9,
        format!(
            "linear: {:.0}% of trials keep >= 0.5 of initial dispersion at t=500 (median ratio {lin_med:.3}); \
             robust: {:.0}% reach <= 5% at t=200 (median ratio {rob_med:.4})",
            100.0 * lin_frac,
            100.0 * rob_frac
        ),
    ))
}

fn c2_spectra() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for n in 4..=128usize {
        let mut fams = vec![
            Family::Ring,
            Family::Line,
            Family::Complete,
            Family::Star,
            Family::BipartiteComplete { p: n / 2, q: n - n / 2 },
            Family::BipartiteComplete { p: 1.max(n / 5), q: n - 1.max(n / 5) },
            Family::KRegularLattice { k: 2 },
        ];
        if n > 4 {
            fams.push(Family::KRegularLattice { k: 4 });
        }
        if n > 8 {
            fams.push(Family::KRegularLattice { k: 8 });
        }
        for fam in fams {
            let g = build_named(fam, n)?;
            let l2 = g.spectrum()?.lambda2();
            let closed = fam.algebraic_connectivity(n).unwrap();
            worst = worst.max((l2 - closed).abs() / closed);
            checked += 1;
        }
    }
    Ok((worst <= 1e-9, format!("{checked} graphs, worst relative error {worst:.2e}")))
}

fn c3_fisher() -> Outcome {
    let mc = McSettings::default();
    let lap = NoiseModel::Laplacian { scale: 1.0 };
    let lin = functionals(&lap, &ReceiveMap::identity(), &mc)?;
    let tanh = functionals(&lap, &ReceiveMap::tanh(1.0), &mc)?;
    let mut ok = (lin.ratio - 2.0).abs() <= 1e-8 && (tanh.ratio - 1.317).abs() <= 0.005;
    let noises = [
        NoiseModel::Gaussian { sigma: 1.0 },
        NoiseModel::Gaussian { sigma: 0.3 },
        NoiseModel::Laplacian { scale: 1.0 },
        NoiseModel::Laplacian { scale: 2.5 },
        NoiseModel::Cauchy { scale: 1.0 },
        NoiseModel::Cauchy { scale: 0.413 },
        NoiseModel::AlphaStable { alpha: 2.0, scale: 0.7 },
        NoiseModel::AlphaStable { alpha: 1.0, scale: 0.5 },
    ];
    let maps = [
        ReceiveMap::identity(),
        ReceiveMap::tanh(1.0),
        ReceiveMap::tanh(2.0),
        ReceiveMap::tanh(5.0),
        ReceiveMap::rational(1.5),
        ReceiveMap::scaled_atan(3.0, 0.05),
    ];
    let mut worst_margin = f64::INFINITY;
    let mut pairs = 0;
    for noise in noises {
        let j = noise.fisher_information_closed_form().expect("closed-form J");
        for f in maps {
            if matches!(noise, NoiseModel::Cauchy { .. } | NoiseModel::AlphaStable { alpha: 1.0, .. }) && !f.is_bounded()
            {
                continue;
            }
            let fx = functionals(&noise, &f, &mc)?;
            let margin = fx.ratio - 1.0 / j;
            worst_margin = worst_margin.min(margin);
            ok &= fisher_check(&fx).satisfied == Some(true) && margin >= -1e-6;
            pairs += 1;
        }
    }
    Ok((
        ok,
        format!(
            "identity ratio {:.10}, tanh ratio {:.6}; {pairs} (noise, f) pairs, worst ratio - 1/J = {worst_margin:.3e}",
            lin.ratio, tanh.ratio
        ),
    ))
}

const C4_CONFIG: &str = r#"
seed = 1
trials = 2000
t_max = 2000
checkpoints = [2000]

[graph]
kind = "erdos_renyi"
n = 20
p = 0.3

[f]
kind = "tanh"
slope = 2.0

[noise]
kind = "gaussian"
sigma = 1.0

[sensing]
theta = 5.0
noise = { kind = "gaussian", sigma = 1.0 }
initial = "shared"

[schedule]
a = 1.0
"#;

fn c4_unbiased() -> Outcome {
    let cfg = ExperimentConfig::from_toml(C4_CONFIG)?;
    let mut ex = cfg.resolve(Path::new("."))?;
    let fx = ex.functionals()?;
    let gain = ex.gain()?;
    let spec = ex.ensemble_spec(gain)?;
    let stats = ensemble_stats(&run_ensemble(&spec)?)?;
    let bound = robust_consensus::analysis::mse_bound(&ex.graph, &fx, spec.schedule).mse_bound;
    let ok = stats.bias.abs() <= 4.0 * stats.bias_se && stats.mse <= bound;
    Ok((
        ok,
        format!(
            "|mean(theta_hat) - x_bar| = {:.4} vs 4 SE = {:.4}; MSE {:.4} vs bound {:.4}",
            stats.bias.abs(),
            4.0 * stats.bias_se,
            stats.mse,
            bound
        ),
    ))
}

fn c5_covariance() -> Outcome {
    let text = C4_CONFIG
        .replace("t_max = 2000", "t_max = 800")
        .replace("checkpoints = [2000]", "checkpoints = [200, 400, 800]")
        .replace("sigma = 1.0 }", "sigma = 0.5 }")
        .replace("[schedule]\na = 1.0", "[schedule]\na = \"optimal\"");
    let cfg = ExperimentConfig::from_toml(&text)?;
    let mut ex = cfg.resolve(Path::new("."))?;
    let gain = ex.gain()?;
    let model = ex.covariance_model()?;
    let spec = ex.ensemble_spec(gain)?;
    let stats = ensemble_stats(&run_ensemble(&spec)?)?;
    let cmp = compare_empirical_analytic(&stats, &model, cfg.t_max)?;
    let last = cmp.rows.last().unwrap();
    let ok = last.t == 800 && last.rel_err_finite <= 0.15 && cmp.limit_error_non_increasing;
    let rows: Vec<String> = cmp
        .rows
        .iter()
        .map(|r| {
            format!(
                "t={} emp {:.3} pred {:.3} ({:.1}%) limit-err {:.1}%",
                r.t,
                r.empirical_norm,
                r.finite_norm,
                100.0 * r.rel_err_finite,
                100.0 * r.rel_err_limit
            )
        })
        .collect();
    Ok((
        ok,
        format!(
            "a* = {gain:.4}, limit norm {:.3}; {}; limit error non-increasing: {}",
            model.limit(CovarianceForm::Validated).norm,
            rows.join("; "),
            cmp.limit_error_non_increasing
        ),
    ))
}

fn c6_scale_invariance() -> Outcome {
    let mc = McSettings::default();
    let noise = NoiseModel::Cauchy { scale: 0.413 };
    let g = build_named(Family::Ring, 12)?;
    let s = g.spectrum()?;
    let base_f = ReceiveMap::rational(2.0);
    let base = functionals(&noise, &base_f, &mc)?;
    let base_opt = optimal_gain(&g, &s, &base, &TransmitMap::Identity, 0.0)?;
    let mut worst: f64 = 0.0;
    for kappa in [0.5, 2.0, 10.0] {
        let fx = functionals(&noise, &base_f.scaled(kappa), &mc)?;
        let opt = optimal_gain(&g, &s, &fx, &TransmitMap::Identity, 0.0)?;
        worst = worst
            .max((opt.c_star_norm - base_opt.c_star_norm).abs() / base_opt.c_star_norm)
            .max((fx.ratio - base.ratio).abs() / base.ratio)
            .max((opt.a_star * fx.e_f_prime - base_opt.a_star * base.e_f_prime).abs() / (base_opt.a_star * base.e_f_prime));
    }
    let analytic_ok = worst <= 1e-10;

    let fig = preset("fig5").unwrap();
    let mut norms = Vec::new();
    let mut trials = 0;
    for (_, cfg) in &fig.series {
        let mut ex = cfg.resolve(Path::new("."))?;
        let gain = ex.gain()?;
        let mut spec = ex.ensemble_spec(gain)?;
        spec.plan = CheckpointPlan::At(vec![cfg.t_max]);
        trials = spec.trials;
        let stats = ensemble_stats(&run_ensemble(&spec)?)?;
        norms.push(stats.checkpoints.last().unwrap().norm);
    }
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    let se = mean * (2.0 / trials as f64).sqrt();
    let spread = norms.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
    Ok((
        analytic_ok && spread <= 3.0 * se,
        format!(
            "worst analytic relative change {worst:.2e}; final ||Cov|| for kappa = 0.5, 1, 2: {:.4}, {:.4}, {:.4} \
             (max deviation {spread:.2e}, 3 SE = {:.3})",
            norms[0],
            norms[1],
            norms[2],
            3.0 * se
        ),
    ))
}

fn c7_family_scaling() -> Outcome {
    let fx = functionals(&NoiseModel::Gaussian { sigma: 1.0 }, &ReceiveMap::tanh(2.0), &McSettings::default())?;
    let ns = [8usize, 16, 32, 64];
    let mut ok = true;
    let mut parts = Vec::new();
    for (fam, expected) in [(Family::Complete, -2.0), (Family::Star, -1.0), (Family::Ring, 3.0)] {
        let mut pts = Vec::new();
        for &n in &ns {
            let g = build_named(fam, n)?;
            let c = optimal_gain(&g, &g.spectrum()?, &fx, &TransmitMap::Identity, 0.0)?.c_star_norm;
            pts.push(((n as f64).ln(), c.ln()));
        }
        let slope = least_squares_slope(&pts);
        ok &= (slope - expected).abs() <= 0.2;
        parts.push(format!("{} {slope:.3} (expected {expected})", fam.name()));
    }
    Ok((ok, parts.join(", ")))
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn c8_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for k in 0..100u64 {
        let n = rng.random_range(2..40);
        let g = build_random(RandomModel::ErdosRenyi { n, p: rng.random_range(0.1..0.9) }, k)?;
        let h = match k % 4 {
            0 => TransmitMap::Identity,
            1 => TransmitMap::ScaledAtan { power: rng.random_range(1.0..40.0), slope: rng.random_range(0.001..0.5) },
            2 => TransmitMap::TanhScaled { power: rng.random_range(1.0..10.0), slope: rng.random_range(0.01..2.0) },
            _ => TransmitMap::LinearClip { power: rng.random_range(1.0..100.0) },
        };
        let f = match k % 3 {
            0 => ReceiveMap::tanh(rng.random_range(0.1..5.0)),
            1 => ReceiveMap::rational(rng.random_range(0.1..5.0)),
            _ => ReceiveMap::scaled_atan(rng.random_range(0.5..3.0), rng.random_range(0.01..1.0)),
        };
        let noise_law = NoiseModel::Cauchy { scale: rng.random_range(0.01..2.0) };
        let sys = RcSystem::new(&g, h, f, noise_law)?;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..150.0)).collect();
        let dense: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| noise_law.sample(&mut rng)).collect()).collect();
        let alpha = rng.random_range(0.001..1.0);
        let mut out = vec![0.0; n];
        let mut buf = vec![0.0; n];
        rc_step_with_noise(&sys, &x, &common::slot_noise(&g, &dense), alpha, &mut buf, &mut out);
        let expected = common::oracle_step(&g, &h, &f, &x, &dense, alpha);
        for (a, b) in out.iter().zip(&expected) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    Ok((worst <= 1e-12, format!("100 instances, worst discrepancy {worst:.2e}")))
}

fn c9_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_rcons");
    let root = tempfile::tempdir()?;
    let mut files = 0;
    for fig in FIGURES {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let dir = root.path().join(format!("{fig}-{rep}"));
            let status = Command::new(bin)
                .args(["figdata", fig, "--trials", "3", "--t-max", "60", "--out"])
                .arg(&dir)
                .output()?;
            if !status.status.success() {
                return Ok((false, format!("{fig} exited with {}", status.status)));
            }
            let mut entries: Vec<_> = std::fs::read_dir(dir.join(fig))?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
            entries.sort();
            let contents: Vec<(String, Vec<u8>)> = entries
                .iter()
                .map(|p| Ok((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(p)?)))
                .collect::<std::io::Result<_>>()?;
            outputs.push(contents);
        }
        if outputs[0] != outputs[1] {
            return Ok((false, format!("{fig} outputs differ between runs")));
        }
        files += outputs[0].len();
    }
    Ok((true, format!("7 presets run twice (3 trials, t_max 60), {files} files byte-identical")))
}
