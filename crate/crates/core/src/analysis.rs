//! Closed-form performance predictions: aggregate noise variance, asymptotic
//! covariance of `sqrt(t) (X(t) - theta_0 1)`, the optimal gain, the MSE
//! bound on the consensus value and the Fisher-information limit.
//!
//! # Covariance conventions
//!
//! Write `X = x_bar 1 + Phi y` with `y = Phi^T X`. Linearising the mean field
//! around `theta_0 1` gives `y(t+1) = y(t) - alpha(t) (k Lambda y(t) + w(t))`
//! with `k = g'(0) h'(theta_0)` and `Cov[w] = Q = E[f^2(n)] Phi^T D Phi`,
//! because node `i` aggregates `d_i` independent receptions. The limit
//! covariance of `sqrt(t) y(t)` solves a Lyapunov equation whose solution in
//! the Laplacian eigenbasis is
//!
//! ```text
//! S_ij = a^2 Q_ij / (a k (lambda_i + lambda_j) - 1)
//! ```
//!
//! and the state covariance is `a^2 sigma_n^2 1 1^T + Phi S Phi^T`. This is
//! [`CovarianceForm::Validated`]; ensemble runs reproduce it. For regular
//! graphs `Q = N sigma_n^2 I` and it reduces to [`CovarianceForm::Isotropic`].
//! [`CovarianceForm::Literal`] carries an extra `1/N` on the `Phi S Phi^T`
//! term and is kept for comparison only.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::engine::StepSchedule;
use crate::error::{Error, Result};
use crate::graph::{Graph, Spectrum};
use crate::maps::TransmitMap;
use crate::noise::NoiseFunctionals;

/// Slack allowed when checking `ratio >= 1/J`.
pub const FISHER_TOL: f64 = 1e-6;

/// `sigma_n^2 = (sum_i d_i / N^2) E[f^2(n)]`.
pub fn sigma_n_sq(graph: &Graph, fx: &NoiseFunctionals) -> f64 {
    let n = graph.node_count() as f64;
    graph.degree_sum() as f64 / (n * n) * fx.e_f_squared
}

/// `2 a g'(0) h'(theta_0) lambda_2 - 1`; positive iff the linearised
/// recursion has a finite asymptotic covariance.
pub fn stability_margin(gain: f64, slope: f64, lambda2: f64) -> f64 {
    2.0 * gain * slope * lambda2 - 1.0
}

/// Which closed form to use for the disagreement part of the covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceForm {
    /// Full Lyapunov solution with degree-weighted noise.
    Validated,
    /// `S_ii = a^2 N sigma_n^2 / (2 a k lambda_{i+1} - 1)`, no `1/N` prefactor.
    Isotropic,
    /// Isotropic `S` with a `1/N` prefactor on `Phi S Phi^T`.
    Literal,
}

/// Limit covariance under one [`CovarianceForm`].
#[derive(Debug, Clone)]
pub struct CovarianceLimit {
    pub form: CovarianceForm,
    /// Diagonal of `S` in the Laplacian eigenbasis (modes 2..N).
    pub s_diag: Vec<f64>,
    pub matrix: DMatrix<f64>,
    pub norm: f64,
}

/// Linearised second-order model of the recursion near consensus.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    n: usize,
    gain: f64,
    slope: f64,
    lambdas: Vec<f64>,
    phi: DMatrix<f64>,
    q: DMatrix<f64>,
    sigma_n_sq: f64,
}

impl CovarianceModel {
    /// Fails with a precondition error when the stability margin is not positive.
    pub fn new(
        graph: &Graph,
        spectrum: &Spectrum,
        fx: &NoiseFunctionals,
        h: &TransmitMap,
        theta0: f64,
        gain: f64,
    ) -> Result<Self> {
        let slope = fx.e_f_prime * h.deriv(theta0);
        if !(slope > 0.0) {
            return Err(Error::Precondition(format!(
                "g'(0) h'(theta_0) = {slope} must be positive"
            )));
        }
        let margin = stability_margin(gain, slope, spectrum.lambda2());
        if !(margin > 0.0) {
            return Err(Error::Precondition(format!(
                "stability condition 2 a g'(0) h'(theta_0) lambda_2 > 1 violated: margin {margin:.6} \
                 (a = {gain}, g'(0) h'(theta_0) = {slope}, lambda_2 = {})",
                spectrum.lambda2()
            )));
        }
        let degrees = DVector::from_iterator(graph.node_count(), graph.degrees().into_iter().map(|d| d as f64));
        let phi = spectrum.phi.clone();
        let weighted = DMatrix::from_fn(phi.nrows(), phi.ncols(), |r, c| phi[(r, c)] * degrees[r]);
        let q = (phi.transpose() * weighted) * fx.e_f_squared;
        Ok(Self {
            n: graph.node_count(),
            gain,
            slope,
            lambdas: spectrum.nonzero_eigenvalues().to_vec(),
            phi,
            q: symmetrize(q),
            sigma_n_sq: sigma_n_sq(graph, fx),
        })
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// `g'(0) h'(theta_0)`.
    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn sigma_n_sq(&self) -> f64 {
        self.sigma_n_sq
    }

    pub fn stability_margin(&self) -> f64 {
        stability_margin(self.gain, self.slope, self.lambdas[0])
    }

    /// Limit covariance of `sqrt(t) (X(t) - theta_0 1)` as `t -> inf`.
    pub fn limit(&self, form: CovarianceForm) -> CovarianceLimit {
        let a = self.gain;
        let m = self.lambdas.len();
        let nf = self.n as f64;
        let (s, prefactor) = match form {
            CovarianceForm::Validated => {
                let s = DMatrix::from_fn(m, m, |i, j| {
                    a * a * self.q[(i, j)] / (a * self.slope * (self.lambdas[i] + self.lambdas[j]) - 1.0)
                });
                (s, 1.0)
            }
            CovarianceForm::Isotropic | CovarianceForm::Literal => {
                let diag = DVector::from_iterator(
                    m,
                    self.lambdas
                        .iter()
                        .map(|&l| a * a * nf * self.sigma_n_sq / (2.0 * a * self.slope * l - 1.0)),
                );
                let pre = if form == CovarianceForm::Literal { 1.0 / nf } else { 1.0 };
                (DMatrix::from_diagonal(&diag), pre)
            }
        };
        let consensus = DMatrix::from_element(self.n, self.n, a * a * self.sigma_n_sq);
        let matrix = symmetrize(consensus + (&self.phi * &s * self.phi.transpose()) * prefactor);
        CovarianceLimit {
            form,
            s_diag: s.diagonal().iter().copied().collect(),
            norm: spectral_norm(&matrix),
            matrix,
        }
    }

    /// Covariance of `sqrt(t) (X(t) - x_bar(T_c) 1)` at finite `t` for a
    /// linearised run started at consensus, propagated exactly through the
    /// step schedule. `center = None` centres at the limit value (`T_c = inf`).
    pub fn finite_horizon(&self, t: usize, center: Option<usize>) -> DMatrix<f64> {
        let a = self.gain;
        let m = self.lambdas.len();
        let mut p = DMatrix::<f64>::zeros(m, m);
        for s in 0..t {
            let alpha = a / (s as f64 + 1.0);
            let contraction: Vec<f64> = self.lambdas.iter().map(|l| 1.0 - alpha * self.slope * l).collect();
            for j in 0..m {
                for i in 0..m {
                    p[(i, j)] = contraction[i] * contraction[j] * p[(i, j)] + alpha * alpha * self.q[(i, j)];
                }
            }
        }
        let tail = match center {
            Some(tc) if tc <= t => 0.0,
            Some(tc) => (t + 1..=tc).map(|k| (k as f64).powi(-2)).sum::<f64>(),
            None => trigamma((t + 1) as f64),
        };
        let tf = t as f64;
        let consensus = DMatrix::from_element(self.n, self.n, a * a * self.sigma_n_sq * tail * tf);
        symmetrize(consensus + (&self.phi * p * self.phi.transpose()) * tf)
    }
}

/// `psi_1(x) = sum_{k >= 0} 1 / (x + k)^2` for `x >= 1`.
fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = x * x;
    acc + 1.0 / x + 1.0 / (2.0 * x2) + 1.0 / (6.0 * x2 * x) - 1.0 / (30.0 * x2 * x2 * x)
        + 1.0 / (42.0 * x2 * x2 * x2 * x)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}

/// Optimal gain and the corresponding covariance size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalGain {
    pub a_star: f64,
    /// `(sum d_i / N^2) ((N+1)/(2N))^2 (E[f^2]/E[f']^2) / (lambda_2^2 h'(theta_0)^2)`.
    pub c_star_norm: f64,
}

/// `a* = (N+1) / (2 N lambda_2 g'(0) h'(theta_0))` and its covariance size.
pub fn optimal_gain(
    graph: &Graph,
    spectrum: &Spectrum,
    fx: &NoiseFunctionals,
    h: &TransmitMap,
    theta0: f64,
) -> Result<OptimalGain> {
    let hp = h.deriv(theta0);
    let slope = fx.e_f_prime * hp;
    if !(slope > 0.0 && slope.is_finite()) {
        return Err(Error::Precondition(format!(
            "g'(0) h'(theta_0) = {slope} must be positive"
        )));
    }
    let n = graph.node_count() as f64;
    let l2 = spectrum.lambda2();
    let a_star = (n + 1.0) / (2.0 * n * l2 * slope);
    let c_star_norm = graph.degree_sum() as f64 / (n * n)
        * ((n + 1.0) / (2.0 * n)).powi(2)
        * fx.ratio
        / (l2 * l2)
        / (hp * hp);
    Ok(OptimalGain { a_star, c_star_norm })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseBound {
    /// Certified `N d_max sigma^2` bound on `E||n(t, x)||^2`.
    pub varrho: f64,
    /// `varrho N^-2 sum_t alpha(t)^2`.
    pub mse_bound: f64,
}

pub fn mse_bound(graph: &Graph, fx: &NoiseFunctionals, schedule: StepSchedule) -> MseBound {
    let n = graph.node_count() as f64;
    let varrho = n * graph.max_degree() as f64 * fx.sup_var;
    MseBound {
        varrho,
        mse_bound: varrho / (n * n) * schedule.sum_of_squares(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FisherCheck {
    pub ratio: f64,
    pub one_over_j: Option<f64>,
    /// `ratio >= 1/J - 1e-6`; `None` when `J` is unknown.
    pub satisfied: Option<bool>,
}

pub fn fisher_check(fx: &NoiseFunctionals) -> FisherCheck {
    let one_over_j = fx.fisher_info.map(|j| 1.0 / j);
    FisherCheck {
        ratio: fx.ratio,
        one_over_j,
        satisfied: one_over_j.map(|b| fx.ratio >= b - FISHER_TOL),
    }
}

/// Every analytic prediction for one configuration.
#[derive(Debug, Clone, Serialize)]
pub struct AnalyticReport {
    pub node_count: usize,
    pub edge_count: usize,
    pub d_max: usize,
    pub lambda2: f64,
    pub lambda_max: f64,
    pub gain: f64,
    pub theta0: f64,
    pub g_prime_zero: f64,
    pub h_prime_theta0: f64,
    pub e_f_squared: f64,
    pub sup_var: f64,
    pub sigma_n_sq: f64,
    pub stability_margin: f64,
    pub covariance_form: CovarianceForm,
    pub s_diag: Vec<f64>,
    pub c_rc: Vec<Vec<f64>>,
    pub c_rc_norm: f64,
    /// Norms of the isotropic and literal closed forms at the same gain.
    pub c_rc_norm_isotropic: f64,
    pub c_rc_norm_literal: f64,
    pub a_star: f64,
    pub c_star_norm: f64,
    /// Validated covariance norm evaluated at `a_star`.
    pub c_rc_norm_at_a_star: f64,
    pub varrho: f64,
    pub mse_bound: f64,
    pub fisher_ratio: f64,
    pub one_over_j: Option<f64>,
    pub fisher_satisfied: Option<bool>,
}

/// Assembles the full [`AnalyticReport`] at gain `gain`.
pub fn analyze(
    graph: &Graph,
    spectrum: &Spectrum,
    fx: &NoiseFunctionals,
    h: &TransmitMap,
    theta0: f64,
    gain: f64,
) -> Result<AnalyticReport> {
    let schedule = StepSchedule::new(gain)?;
    let model = CovarianceModel::new(graph, spectrum, fx, h, theta0, gain)?;
    let validated = model.limit(CovarianceForm::Validated);
    let opt = optimal_gain(graph, spectrum, fx, h, theta0)?;
    let at_opt = CovarianceModel::new(graph, spectrum, fx, h, theta0, opt.a_star)?
        .limit(CovarianceForm::Validated)
        .norm;
    let mse = mse_bound(graph, fx, schedule);
    let fisher = fisher_check(fx);
    Ok(AnalyticReport {
        node_count: graph.node_count(),
        edge_count: graph.edge_count(),
        d_max: graph.max_degree(),
        lambda2: spectrum.lambda2(),
        lambda_max: spectrum.lambda_max(),
        gain,
        theta0,
        g_prime_zero: fx.e_f_prime,
        h_prime_theta0: h.deriv(theta0),
        e_f_squared: fx.e_f_squared,
        sup_var: fx.sup_var,
        sigma_n_sq: model.sigma_n_sq(),
        stability_margin: model.stability_margin(),
        covariance_form: CovarianceForm::Validated,
        s_diag: validated.s_diag.clone(),
        c_rc: validated
            .matrix
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        c_rc_norm: validated.norm,
        c_rc_norm_isotropic: model.limit(CovarianceForm::Isotropic).norm,
        c_rc_norm_literal: model.limit(CovarianceForm::Literal).norm,
        a_star: opt.a_star,
        c_star_norm: opt.c_star_norm,
        c_rc_norm_at_a_star: at_opt,
        varrho: mse.varrho,
        mse_bound: mse.mse_bound,
        fisher_ratio: fisher.ratio,
        one_over_j: fisher.one_over_j,
        fisher_satisfied: fisher.satisfied,
    })
}

/// `pi^2 / 6`, the sum of `1 / (t+1)^2` over `t >= 0`.
pub const BASEL: f64 = PI * PI / 6.0;
