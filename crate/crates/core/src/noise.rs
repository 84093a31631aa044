//! Symmetric zero-median noise laws and the expectations the analysis needs.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::ReceiveMap;
use crate::quadrature::{integrate_real_line, ABS_TOL};

/// Channel or sensing noise. Every kind is symmetric about zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    /// Degenerate law at zero (noise-free links).
    Zero,
    Gaussian { sigma: f64 },
    Laplacian { scale: f64 },
    Cauchy { scale: f64 },
    /// Symmetric stable law with characteristic function `exp(-|c u|^alpha)`.
    AlphaStable { alpha: f64, scale: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match *self {
            NoiseModel::Zero => Ok(()),
            NoiseModel::Gaussian { sigma } => positive("sigma", sigma),
            NoiseModel::Laplacian { scale } | NoiseModel::Cauchy { scale } => positive("scale", scale),
            NoiseModel::AlphaStable { alpha, scale } => {
                if !(alpha > 0.0 && alpha <= 2.0) {
                    return Err(Error::param(format!("stability index must be in (0, 2], got {alpha}")));
                }
                positive("scale", scale)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            NoiseModel::Zero => "zero".into(),
            NoiseModel::Gaussian { sigma } => format!("gaussian(sigma={sigma})"),
            NoiseModel::Laplacian { scale } => format!("laplacian(b={scale})"),
            NoiseModel::Cauchy { scale } => format!("cauchy(gamma={scale})"),
            NoiseModel::AlphaStable { alpha, scale } => format!("alpha_stable(alpha={alpha},c={scale})"),
        }
    }

    /// One draw. Stable laws use the Chambers-Mallows-Stuck construction.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::Zero => 0.0,
            NoiseModel::Gaussian { sigma } => Normal::new(0.0, sigma).expect("validated sigma").sample(rng),
            NoiseModel::Laplacian { scale } => {
                let u: f64 = rng.random::<f64>() - 0.5;
                -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            NoiseModel::Cauchy { scale } => Cauchy::new(0.0, scale).expect("validated scale").sample(rng),
            NoiseModel::AlphaStable { alpha, scale } => scale * symmetric_stable(alpha, rng),
        }
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match *self {
            NoiseModel::Zero => out.fill(0.0),
            NoiseModel::Gaussian { sigma } => {
                let d = Normal::new(0.0, sigma).expect("validated sigma");
                out.iter_mut().for_each(|v| *v = d.sample(rng));
            }
            _ => out.iter_mut().for_each(|v| *v = self.sample(rng)),
        }
    }

    /// Closed-form density where one exists.
    pub fn density(&self, x: f64) -> Result<f64> {
        match self.closed_form()? {
            ClosedForm::Gaussian(s) => Ok((-0.5 * (x / s).powi(2)).exp() / (s * (2.0 * PI).sqrt())),
            ClosedForm::Laplacian(b) => Ok((-x.abs() / b).exp() / (2.0 * b)),
            ClosedForm::Cauchy(g) => Ok(g / (PI * (g * g + x * x))),
        }
    }

    /// `p'(x) / p(x)`.
    fn score(&self, x: f64) -> Result<f64> {
        match self.closed_form()? {
            ClosedForm::Gaussian(s) => Ok(-x / (s * s)),
            ClosedForm::Laplacian(b) => Ok(-x.signum() / b),
            ClosedForm::Cauchy(g) => Ok(-2.0 * x / (g * g + x * x)),
        }
    }

    fn closed_form(&self) -> Result<ClosedForm> {
        match *self {
            NoiseModel::Gaussian { sigma } => Ok(ClosedForm::Gaussian(sigma)),
            NoiseModel::Laplacian { scale } => Ok(ClosedForm::Laplacian(scale)),
            NoiseModel::Cauchy { scale } => Ok(ClosedForm::Cauchy(scale)),
            NoiseModel::AlphaStable { alpha, scale } if alpha == 2.0 => {
                Ok(ClosedForm::Gaussian(std::f64::consts::SQRT_2 * scale))
            }
            NoiseModel::AlphaStable { alpha, scale } if alpha == 1.0 => Ok(ClosedForm::Cauchy(scale)),
            other => Err(Error::Capability(format!("{} has no closed-form density", other.describe()))),
        }
    }

    pub fn has_density(&self) -> bool {
        self.closed_form().is_ok()
    }

    /// Fisher information for a location parameter, by quadrature of `p'^2 / p`.
    pub fn fisher_information(&self) -> Result<f64> {
        if *self == NoiseModel::Zero {
            return Ok(f64::INFINITY);
        }
        integrate_real_line(
            |x| {
                let p = self.density(x).unwrap_or(0.0);
                let s = self.score(x).unwrap_or(0.0);
                s * s * p
            },
            &[0.0],
            ABS_TOL,
        )
    }

    /// Known closed forms: `1/sigma^2`, `1/b^2`, `1/(2 gamma^2)`.
    pub fn fisher_information_closed_form(&self) -> Option<f64> {
        match *self {
            NoiseModel::Zero => Some(f64::INFINITY),
            _ => match self.closed_form().ok()? {
                ClosedForm::Gaussian(s) => Some(1.0 / (s * s)),
                ClosedForm::Laplacian(b) => Some(1.0 / (b * b)),
                ClosedForm::Cauchy(g) => Some(1.0 / (2.0 * g * g)),
            },
        }
    }

    /// Builds the integrator used for `E_n[.]` under this law.
    pub fn integrator(&self, mc: &McSettings) -> Result<Integrator> {
        self.validate()?;
        if *self == NoiseModel::Zero {
            return Ok(Integrator::PointMass);
        }
        if self.has_density() {
            return Ok(Integrator::Quadrature(*self));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
        let mut draws = vec![0.0; mc.draws];
        self.fill(&mut rng, &mut draws);
        Ok(Integrator::MonteCarlo(draws))
    }
}

#[derive(Debug, Clone, Copy)]
enum ClosedForm {
    Gaussian(f64),
    Laplacian(f64),
    Cauchy(f64),
}

/// Standard symmetric stable variate (skewness 0, unit scale).
fn symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    if alpha == 1.0 {
        return v.tan();
    }
    let w: f64 = Exp1.sample(rng);
    let num = (alpha * v).sin() / v.cos().powf(1.0 / alpha);
    num * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Monte Carlo budget for laws without a closed-form density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McSettings {
    pub draws: usize,
    /// Draws used per grid point when searching `sup_x var[f(x + n)]`.
    pub sup_var_draws: usize,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            draws: 1_000_000,
            sup_var_draws: 100_000,
            seed: 0x5eed_0f_f00d,
        }
    }
}

/// An expectation with its Monte Carlo standard error, if sampled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: Option<f64>,
}

/// Computes `E_n[phi(n)]` either by quadrature against the density or by
/// averaging over a fixed sample.
#[derive(Debug, Clone)]
pub enum Integrator {
    PointMass,
    Quadrature(NoiseModel),
    MonteCarlo(Vec<f64>),
}

impl Integrator {
    pub fn expect<F: Fn(f64) -> f64>(&self, phi: F, breaks: &[f64]) -> Result<Estimate> {
        match self {
            Integrator::PointMass => Ok(Estimate { value: phi(0.0), std_error: None }),
            Integrator::Quadrature(model) => {
                let value = integrate_real_line(
                    |x| phi(x) * model.density(x).unwrap_or(0.0),
                    breaks,
                    ABS_TOL,
                )?;
                Ok(Estimate { value, std_error: None })
            }
            Integrator::MonteCarlo(draws) => Ok(sample_mean(draws, phi)),
        }
    }

    fn expect_truncated<F: Fn(f64) -> f64>(&self, phi: F, breaks: &[f64], limit: usize) -> Result<Estimate> {
        match self {
            Integrator::MonteCarlo(draws) => Ok(sample_mean(&draws[..limit.min(draws.len())], phi)),
            _ => self.expect(phi, breaks),
        }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self, Integrator::MonteCarlo(_))
    }
}

fn sample_mean<F: Fn(f64) -> f64>(draws: &[f64], phi: F) -> Estimate {
    let m = draws.len() as f64;
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, &x) in draws.iter().enumerate() {
        let v = phi(x);
        let delta = v - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (v - mean);
    }
    let var = if draws.len() > 1 { m2 / (m - 1.0) } else { 0.0 };
    Estimate {
        value: mean,
        std_error: Some((var / m).sqrt()),
    }
}

/// Noise functionals entering the MSE and covariance formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseFunctionals {
    /// `E_n[f^2(n)]`.
    pub e_f_squared: f64,
    /// `E_n[f'(n)]`, which is also `g'(0)`.
    pub e_f_prime: f64,
    /// `E_n[f^2(n)] / (E_n[f'(n)])^2`.
    pub ratio: f64,
    /// Location Fisher information `J`; `None` without a density.
    pub fisher_info: Option<f64>,
    /// `sup_x var[f(x + n)]`.
    pub sup_var: f64,
    /// Standard errors of `(e_f_squared, e_f_prime)` when sampled.
    pub std_errors: Option<(f64, f64)>,
}

/// Half-width and resolution of the grid searched for `sup_x var[f(x + n)]`.
pub const SUP_VAR_HALF_WIDTH: f64 = 50.0;
pub const SUP_VAR_GRID_POINTS: usize = 2001;

/// Computes [`NoiseFunctionals`] for receive map `f` under `noise`.
pub fn functionals(noise: &NoiseModel, f: &ReceiveMap, mc: &McSettings) -> Result<NoiseFunctionals> {
    let integrator = noise.integrator(mc)?;
    functionals_with(noise, f, &integrator, mc)
}

pub(crate) fn functionals_with(
    noise: &NoiseModel,
    f: &ReceiveMap,
    integrator: &Integrator,
    mc: &McSettings,
) -> Result<NoiseFunctionals> {
    let breaks = f.quadrature_breaks(0.0);
    let e_f2 = integrator.expect(|n| f.eval(n).powi(2), &breaks)?;
    let e_fp = integrator.expect(|n| f.deriv(n), &breaks)?;
    if !(e_f2.value.is_finite() && e_fp.value.is_finite()) || e_fp.value <= 0.0 {
        return Err(Error::numeric(format!(
            "degenerate noise functionals for {} under {}",
            f.formula(),
            noise.describe()
        )));
    }
    let fisher_info = if noise.has_density() || *noise == NoiseModel::Zero {
        Some(noise.fisher_information()?)
    } else {
        noise.fisher_information_closed_form()
    };
    let sup_var = sup_variance(f, integrator, mc)?;
    let std_errors = match (e_f2.std_error, e_fp.std_error) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    Ok(NoiseFunctionals {
        e_f_squared: e_f2.value,
        e_f_prime: e_fp.value,
        ratio: e_f2.value / (e_fp.value * e_fp.value),
        fisher_info,
        sup_var,
        std_errors,
    })
}

/// Grid search of `var[f(x + n)]` over `x` in `[-50, 50]`.
///
/// The variance is even in `x` for odd `f` and symmetric noise, so only the
/// non-negative half of the grid is evaluated. The `x -> +-inf` limit is 0
/// for saturating maps and is dominated by any grid value.
pub fn sup_variance(f: &ReceiveMap, integrator: &Integrator, mc: &McSettings) -> Result<f64> {
    let step = 2.0 * SUP_VAR_HALF_WIDTH / (SUP_VAR_GRID_POINTS - 1) as f64;
    let mut best: f64 = 0.0;
    for k in 0..=SUP_VAR_GRID_POINTS / 2 {
        let x = k as f64 * step;
        let breaks = f.quadrature_breaks(x);
        let m1 = integrator.expect_truncated(|n| f.eval(x + n), &breaks, mc.sup_var_draws)?;
        let m2 = integrator.expect_truncated(|n| f.eval(x + n).powi(2), &breaks, mc.sup_var_draws)?;
        let var = (m2.value - m1.value * m1.value).max(0.0);
        if !var.is_finite() {
            return Err(Error::numeric(format!("var[f(x+n)] not finite at x={x}")));
        }
        best = best.max(var);
    }
    Ok(best)
}
