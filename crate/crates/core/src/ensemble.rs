//! Monte-Carlo ensembles of independent trials and their statistics.
//!
//! Trials run in parallel; each owns keyed random streams so results do not
//! depend on scheduling, and every reduction walks trials in index order.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{min_eigenvalue, spectral_norm, CovarianceForm, CovarianceModel};
use crate::engine::{initial_state, run_trial, CheckpointPlan, RcSystem, SensingConfig, StepSchedule, TrialTrajectory};
use crate::error::{Error, Result};
use crate::rng::{sensing_stream, shared_sensing_stream, TrialStream};

/// Whether all trials start from one sensed state or sense afresh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialMode {
    /// One initial state drawn once from the master seed.
    Shared,
    #[default]
    PerTrial,
}

/// Everything needed to run `trials` independent copies of the recursion.
#[derive(Debug, Clone)]
pub struct EnsembleSpec<'g> {
    pub system: RcSystem<'g>,
    pub schedule: StepSchedule,
    pub sensing: SensingConfig,
    pub initial: InitialMode,
    pub trials: usize,
    pub t_max: usize,
    pub plan: CheckpointPlan,
    pub seed: u64,
}

/// Runs all trials. The first failing trial (by index) aborts the ensemble.
pub fn run_ensemble(spec: &EnsembleSpec<'_>) -> Result<Vec<TrialTrajectory>> {
    if spec.trials == 0 {
        return Err(Error::param("trial count must be at least 1"));
    }
    let n = spec.system.graph.node_count();
    let shared = match spec.initial {
        InitialMode::Shared => Some(initial_state(&spec.sensing, n, &mut shared_sensing_stream(spec.seed))?),
        InitialMode::PerTrial => None,
    };
    let results: Vec<Result<TrialTrajectory>> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let init = match &shared {
                Some(s) => s.clone(),
                None => initial_state(&spec.sensing, n, &mut sensing_stream(spec.seed, trial))?,
            };
            let mut stream = TrialStream::new(spec.seed, trial);
            run_trial(&spec.system, spec.schedule, &init.values, spec.t_max, &spec.plan, &mut stream)
        })
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(trial, r)| {
            r.map_err(|e| Error::Trial {
                trial,
                seed: spec.seed,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Ensemble statistics at one checkpoint.
#[derive(Debug, Clone)]
pub struct CheckpointStats {
    pub t: usize,
    /// Unbiased sample covariance of `sqrt(t) (X(t) - theta_hat 1)`.
    pub covariance: DMatrix<f64>,
    pub norm: f64,
    pub min_eigenvalue: f64,
    pub mean_dispersion: f64,
}

#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub trials: usize,
    pub checkpoints: Vec<CheckpointStats>,
    pub theta_hat_mean: f64,
    /// Unbiased sample variance of the per-trial `theta_hat`.
    pub theta_hat_var: f64,
    /// Mean of `theta_hat - x_bar(0)`.
    pub bias: f64,
    /// Standard error of [`Self::bias`].
    pub bias_se: f64,
    /// Mean of `(theta_hat - x_bar(0))^2`.
    pub mse: f64,
}

/// Reduces trajectories (all sharing one checkpoint schedule) to statistics.
/// Each trial is centred at its own `theta_hat = x_bar(T_max)`.
pub fn ensemble_stats(trajectories: &[TrialTrajectory]) -> Result<EnsembleStats> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::Precondition("no trajectories to summarise".into()))?;
    let times: Vec<usize> = first.checkpoints.iter().map(|c| c.0).collect();
    if trajectories
        .iter()
        .any(|tr| tr.checkpoints.len() != times.len() || tr.checkpoints.iter().zip(&times).any(|(c, t)| c.0 != *t))
    {
        return Err(Error::Precondition("trajectories have different checkpoints".into()));
    }
    let m = trajectories.len();
    let mf = m as f64;
    let n = first.checkpoints[0].1.len();

    let checkpoints = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let scale = (t as f64).sqrt();
            let samples: Vec<Vec<f64>> = trajectories
                .iter()
                .map(|tr| tr.checkpoints[k].1.iter().map(|x| scale * (x - tr.theta_hat)).collect())
                .collect();
            let covariance = sample_covariance(&samples, n);
            CheckpointStats {
                t,
                norm: spectral_norm(&covariance),
                min_eigenvalue: min_eigenvalue(&covariance),
                covariance,
                mean_dispersion: trajectories.iter().map(|tr| tr.dispersion[k]).sum::<f64>() / mf,
            }
        })
        .collect();

    let theta: Vec<f64> = trajectories.iter().map(|tr| tr.theta_hat).collect();
    let theta_hat_mean = theta.iter().sum::<f64>() / mf;
    let theta_hat_var = unbiased_variance(&theta, theta_hat_mean);
    let err: Vec<f64> = trajectories.iter().map(|tr| tr.theta_hat - tr.initial_mean).collect();
    let bias = err.iter().sum::<f64>() / mf;
    let bias_se = (unbiased_variance(&err, bias) / mf).sqrt();
    let mse = err.iter().map(|e| e * e).sum::<f64>() / mf;
    Ok(EnsembleStats {
        trials: m,
        checkpoints,
        theta_hat_mean,
        theta_hat_var,
        bias,
        bias_se,
        mse,
    })
}

fn unbiased_variance(v: &[f64], mean: f64) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

/// Unbiased covariance of row samples; zero for a single sample.
fn sample_covariance(samples: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    let m = samples.len();
    let mut cov = DMatrix::zeros(n, n);
    if m < 2 {
        return cov;
    }
    let mut mu = vec![0.0; n];
    for s in samples {
        for (acc, v) in mu.iter_mut().zip(s) {
            *acc += v;
        }
    }
    mu.iter_mut().for_each(|v| *v /= m as f64);
    let mut d = vec![0.0; n];
    for s in samples {
        for i in 0..n {
            d[i] = s[i] - mu[i];
        }
        for j in 0..n {
            for i in j..n {
                cov[(i, j)] += d[i] * d[j];
            }
        }
    }
    for j in 0..n {
        for i in j..n {
            let v = cov[(i, j)] / (m - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    cov
}

/// One row of [`Comparison`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub t: usize,
    pub empirical_norm: f64,
    /// Linearised prediction at this `t` with the ensemble's centring horizon.
    pub finite_norm: f64,
    /// `t -> inf` limit.
    pub limit_norm: f64,
    pub rel_err_finite: f64,
    pub rel_err_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub stability_margin: f64,
    pub rows: Vec<ComparisonRow>,
    /// `rel_err_limit` never increases from one row to the next.
    pub limit_error_non_increasing: bool,
}

/// Empirical covariance norms against the closed form at every checkpoint
/// with `t >= 1`. `center_horizon` is the `T_max` at which trials were centred.
pub fn compare_empirical_analytic(
    stats: &EnsembleStats,
    model: &CovarianceModel,
    center_horizon: usize,
) -> Result<Comparison> {
    let margin = model.stability_margin();
    if !(margin > 0.0) {
        return Err(Error::Precondition(format!(
            "comparison refused: stability margin {margin:.6} is not positive"
        )));
    }
    let limit_norm = model.limit(CovarianceForm::Validated).norm;
    let rows: Vec<ComparisonRow> = stats
        .checkpoints
        .iter()
        .filter(|c| c.t >= 1)
        .map(|c| {
            let finite_norm = spectral_norm(&model.finite_horizon(c.t, Some(center_horizon)));
            ComparisonRow {
                t: c.t,
                empirical_norm: c.norm,
                finite_norm,
                limit_norm,
                rel_err_finite: (c.norm - finite_norm).abs() / finite_norm,
                rel_err_limit: (c.norm - limit_norm).abs() / limit_norm,
            }
        })
        .collect();
    let limit_error_non_increasing = rows.windows(2).all(|w| w[1].rel_err_limit <= w[0].rel_err_limit);
    Ok(Comparison {
        stability_margin: margin,
        rows,
        limit_error_non_increasing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_named, Family, Graph};
    use crate::maps::{ReceiveMap, TransmitMap};
    use crate::noise::NoiseModel;

    fn spec<'g>(g: &'g Graph, noise: NoiseModel, trials: usize) -> EnsembleSpec<'g> {
        EnsembleSpec {
            system: RcSystem::new(g, TransmitMap::Identity, ReceiveMap::tanh(2.0), noise).unwrap(),
            schedule: StepSchedule::new(1.0).unwrap(),
            sensing: SensingConfig {
                theta: 3.0,
                sensing_noise: NoiseModel::Gaussian { sigma: 1.0 },
                fixed_initials: None,
            },
            initial: InitialMode::PerTrial,
            trials,
            t_max: 50,
            plan: CheckpointPlan::At(vec![10, 50]),
            seed: 17,
        }
    }

    #[test]
    fn single_trial_has_zero_covariance() {
        let g = build_named(Family::Ring, 6).unwrap();
        let trs = run_ensemble(&spec(&g, NoiseModel::Gaussian { sigma: 1.0 }, 1)).unwrap();
        let st = ensemble_stats(&trs).unwrap();
        for c in &st.checkpoints {
            assert_eq!(c.covariance, DMatrix::zeros(6, 6));
        }
        assert_eq!(st.trials, 1);
    }

    #[test]
    fn noise_free_ensemble_conserves_mean() {
        let g = build_named(Family::Star, 6).unwrap();
        let mut s = spec(&g, NoiseModel::Zero, 10);
        s.initial = InitialMode::Shared;
        let trs = run_ensemble(&s).unwrap();
        let st = ensemble_stats(&trs).unwrap();
        assert!(trs.iter().all(|t| t.theta_hat == trs[0].theta_hat));
        assert!(st.mse < 1e-24);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let g = build_named(Family::Complete, 5).unwrap();
        let s = spec(&g, NoiseModel::Cauchy { scale: 1.0 }, 12);
        let a = run_ensemble(&s).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_ensemble(&s)).unwrap();
        assert_eq!(a, b);
        let c = run_trial(
            &s.system,
            s.schedule,
            &initial_state(&s.sensing, 5, &mut sensing_stream(17, 7)).unwrap().values,
            s.t_max,
            &s.plan,
            &mut TrialStream::new(17, 7),
        )
        .unwrap();
        assert_eq!(a[7], c);
    }

    #[test]
    fn failing_trial_reports_index_and_seed() {
        let g = build_named(Family::Complete, 4).unwrap();
        let mut s = spec(&g, NoiseModel::Zero, 3);
        s.sensing = SensingConfig::fixed(vec![0.0; 3]);
        match run_ensemble(&s).unwrap_err() {
            Error::Trial { trial, seed, .. } => {
                assert_eq!(trial, 0);
                assert_eq!(seed, 17);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn covariance_is_psd() {
        let g = build_named(Family::Line, 5).unwrap();
        let trs = run_ensemble(&spec(&g, NoiseModel::Laplacian { scale: 1.0 }, 40)).unwrap();
        for c in ensemble_stats(&trs).unwrap().checkpoints {
            assert!(c.min_eigenvalue >= -1e-9 * c.norm.max(1e-300));
            assert_eq!(c.covariance, c.covariance.transpose());
        }
    }

    #[test]
    fn comparison_refuses_unstable_gain() {
        use crate::analysis::CovarianceModel;
        use crate::noise::{functionals, McSettings};
        let g = build_named(Family::Ring, 6).unwrap();
        let s = g.spectrum().unwrap();
        let fx = functionals(&NoiseModel::Gaussian { sigma: 1.0 }, &ReceiveMap::tanh(2.0), &McSettings::default())
            .unwrap();
        let err = CovarianceModel::new(&g, &s, &fx, &TransmitMap::Identity, 0.0, 0.01).unwrap_err();
        assert!(err.to_string().contains("margin"));
    }

    #[test]
    fn identical_inputs_give_zero_error() {
        use crate::analysis::CovarianceModel;
        use crate::noise::{functionals, McSettings};
        let g = build_named(Family::Ring, 5).unwrap();
        let s = g.spectrum().unwrap();
        let fx = functionals(&NoiseModel::Gaussian { sigma: 1.0 }, &ReceiveMap::tanh(2.0), &McSettings::default())
            .unwrap();
        let model = CovarianceModel::new(&g, &s, &fx, &TransmitMap::Identity, 0.0, 2.0).unwrap();
        let stats = EnsembleStats {
            trials: 2,
            checkpoints: [100, 200]
                .iter()
                .map(|&t| {
                    let c = model.finite_horizon(t, Some(200));
                    CheckpointStats {
                        t,
                        norm: spectral_norm(&c),
                        min_eigenvalue: 0.0,
                        covariance: c,
                        mean_dispersion: 0.0,
                    }
                })
                .collect(),
            theta_hat_mean: 0.0,
            theta_hat_var: 0.0,
            bias: 0.0,
            bias_se: 0.0,
            mse: 0.0,
        };
        let cmp = compare_empirical_analytic(&stats, &model, 200).unwrap();
        assert!(cmp.rows.iter().all(|r| r.rel_err_finite == 0.0));
    }
}
