//! Bundled experiment presets behind `figdata fig1` .. `figdata fig7`.

use crate::config::{
    ExperimentConfig, FKind, FSpec, GainKeyword, GainSpec, GraphSpec, HSpec, McSpec, ScheduleSpec, SensingSpec,
};
use crate::ensemble::InitialMode;
use crate::noise::NoiseModel;

/// Ensemble size for the covariance figures.
pub const DEFAULT_TRIALS: usize = 2000;
/// Master seed of every preset.
pub const PRESET_SEED: u64 = 20_240_601;
/// Seed of the random topologies, fixed so `--seed` only changes the noise.
pub const GRAPH_SEED: u64 = 11;

pub const FIGURES: [&str; 7] = ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    /// Node trajectories of individual runs.
    Trajectories,
    /// `||Cov[sqrt(t)(X(t) - theta_hat 1)]||` against `t`, one curve per series.
    CovarianceNorm,
    /// First-node trajectories of repeated runs from one initial state.
    FirstNode,
}

#[derive(Debug, Clone)]
pub struct FigurePreset {
    pub name: &'static str,
    pub title: &'static str,
    pub kind: FigureKind,
    pub series: Vec<(String, ExperimentConfig)>,
}

/// Every iteration up to 10, then `per_decade` log-spaced points, then `t_max`.
pub fn log_checkpoints(t_max: usize, per_decade: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (1..=t_max.min(10)).collect();
    let mut k = 0;
    loop {
        let t = (10.0 * 10f64.powf(k as f64 / per_decade as f64)).round() as usize;
        if t > t_max {
            break;
        }
        v.push(t);
        k += 1;
    }
    v.push(t_max);
    v.sort_unstable();
    v.dedup();
    v
}

fn er(n: usize, p: f64) -> GraphSpec {
    GraphSpec::ErdosRenyi { n, p, seed: Some(GRAPH_SEED) }
}

fn sensing(theta: f64, initial: InitialMode) -> SensingSpec {
    SensingSpec {
        theta,
        noise: NoiseModel::Gaussian { sigma: 10.0 },
        initial,
        fixed_initials: None,
    }
}

fn base(graph: GraphSpec, noise: NoiseModel, f: FSpec, t_max: usize) -> ExperimentConfig {
    ExperimentConfig {
        seed: PRESET_SEED,
        trials: 1,
        t_max,
        checkpoints: None,
        output: None,
        graph,
        h: HSpec::Identity,
        f,
        noise,
        sensing: sensing(0.0, InitialMode::PerTrial),
        schedule: ScheduleSpec { a: GainSpec::Fixed(1.0) },
        mc: McSpec::default(),
    }
}

fn f(kind: FKind, slope: f64, amplitude: f64) -> FSpec {
    FSpec { kind, slope, amplitude }
}

fn covariance_series(mut cfg: ExperimentConfig, theta: f64) -> ExperimentConfig {
    cfg.trials = DEFAULT_TRIALS;
    cfg.checkpoints = Some(log_checkpoints(cfg.t_max, 20));
    cfg.sensing = sensing(theta, InitialMode::Shared);
    cfg
}

pub fn preset(name: &str) -> Option<FigurePreset> {
    let cauchy = |scale| NoiseModel::Cauchy { scale };
    let fig = match name {
        "fig1" => {
            let mut c = base(er(75, 0.1), cauchy(1.0), FSpec::default(), 500);
            c.sensing = sensing(134.31, InitialMode::PerTrial);
            FigurePreset {
                name: "fig1",
                title: "linear consensus under Cauchy noise (gamma = 1), N = 75",
                kind: FigureKind::Trajectories,
                series: vec![("linear".into(), c)],
            }
        }
        "fig2" | "fig3" => {
            let (n, p, db, title) = if name == "fig2" {
                (10, 0.5, 15.0, "robust consensus, N = 10, rho = 15 dB, Cauchy gamma = 0.1")
            } else {
                (75, 0.3, 5.0, "robust consensus, N = 75, rho = 5 dB, Cauchy gamma = 0.1")
            };
            let mut c = base(er(n, p), cauchy(0.1), f(FKind::Tanh, 5.0, 1.0), 200);
            c.h = HSpec::ScaledAtan { power: None, power_db: Some(db), slope: 0.01 };
            FigurePreset {
                name: if name == "fig2" { "fig2" } else { "fig3" },
                title,
                kind: FigureKind::Trajectories,
                series: vec![("robust".into(), c)],
            }
        }
        "fig4" => {
            let fr = f(FKind::Rational, 1.5, 1.0);
            FigurePreset {
                name: "fig4",
                title: "sparse versus dense graph, N = 75, f = 1.5x/(1+|1.5x|), Cauchy gamma = 0.413",
                kind: FigureKind::CovarianceNorm,
                series: [("sparse_p0.1", 0.1), ("dense_p0.5", 0.5)]
                    .into_iter()
                    .map(|(label, p)| {
                        (label.to_string(), covariance_series(base(er(75, p), cauchy(0.413), fr.clone(), 500), 84.31))
                    })
                    .collect(),
            }
        }
        "fig5" => FigurePreset {
            name: "fig5",
            title: "scaling f leaves the convergence speed unchanged, N = 10, Cauchy gamma = 0.413",
            kind: FigureKind::CovarianceNorm,
            series: [("kappa0.5", 0.5), ("kappa1", 1.0), ("kappa2", 2.0)]
                .into_iter()
                .map(|(label, kappa)| {
                    let mut c = base(er(10, 0.5), cauchy(0.413), f(FKind::Rational, 2.0, kappa), 500);
                    c.schedule.a = GainSpec::Keyword(GainKeyword::Optimal);
                    (label.to_string(), covariance_series(c, 34.31))
                })
                .collect(),
        },
        "fig6" => FigurePreset {
            name: "fig6",
            title: "robustness across noise laws, N = 75, f = tanh(2x)",
            kind: FigureKind::CovarianceNorm,
            series: [
                ("gaussian", NoiseModel::Gaussian { sigma: 1.0 }),
                ("laplacian", NoiseModel::Laplacian { scale: 1.0 }),
                ("cauchy", cauchy(0.413)),
                ("alpha_stable", NoiseModel::AlphaStable { alpha: 1.5, scale: 0.5 }),
            ]
            .into_iter()
            .map(|(label, noise)| {
                (label.to_string(), covariance_series(base(er(75, 0.3), noise, f(FKind::Tanh, 2.0, 1.0), 500), 124.31))
            })
            .collect(),
        },
        "fig7" => {
            let mut c = base(er(75, 0.3), cauchy(0.413), f(FKind::Atan, 0.05, 3.0), 500);
            c.trials = 20;
            c.sensing = sensing(94.31, InitialMode::Shared);
            FigurePreset {
                name: "fig7",
                title: "variance of the limit versus asymptotic variance, N = 75, f = 3 atan(0.05x)",
                kind: FigureKind::FirstNode,
                series: vec![("runs".into(), c)],
            }
        }
        _ => return None,
    };
    Some(fig)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_is_valid() {
        for name in FIGURES {
            let p = preset(name).unwrap();
            assert_eq!(p.name, name);
            for (_, cfg) in &p.series {
                cfg.validate().unwrap();
                let text = cfg.to_toml().unwrap();
                assert_eq!(&ExperimentConfig::from_toml(&text).unwrap(), cfg);
            }
        }
        assert!(preset("fig8").is_none());
    }

    #[test]
    fn log_grid() {
        let v = log_checkpoints(500, 20);
        assert_eq!(&v[..10], &(1..=10).collect::<Vec<_>>()[..]);
        assert_eq!(*v.last().unwrap(), 500);
        assert!(v.windows(2).all(|w| w[1] > w[0]));
    }
}
