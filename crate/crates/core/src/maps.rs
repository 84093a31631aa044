//! Transmit maps `h`, receive maps `f`, and the noise-smoothed map
//! `g(x) = E_n[f(x + n)]`.
//!
//! Both map families are closed enumerations so that derivatives are exact.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::noise::{Integrator, McSettings, NoiseModel};

/// Power-constraining transmit map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransmitMap {
    Identity,
    /// `sqrt(power) * (2/pi) * atan((pi/2) * slope * x)`.
    ScaledAtan { power: f64, slope: f64 },
    /// `sqrt(power) * tanh(slope * x)`.
    TanhScaled { power: f64, slope: f64 },
    /// `x` clipped to `[-sqrt(power), sqrt(power)]`. Only non-decreasing.
    LinearClip { power: f64 },
}

/// Converts a power in dB to linear units.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl TransmitMap {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("transmit {name} must be positive, got {v}")))
            }
        };
        match *self {
            TransmitMap::Identity => Ok(()),
            TransmitMap::ScaledAtan { power, slope } | TransmitMap::TanhScaled { power, slope } => {
                check("power", power)?;
                check("slope", slope)
            }
            TransmitMap::LinearClip { power } => check("power", power),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TransmitMap::Identity => x,
            TransmitMap::ScaledAtan { power, slope } => {
                odd(x, |u| power.sqrt() * (2.0 / PI) * (FRAC_PI_2 * slope * u).atan())
            }
            TransmitMap::TanhScaled { power, slope } => odd(x, |u| power.sqrt() * (slope * u).tanh()),
            TransmitMap::LinearClip { power } => x.clamp(-power.sqrt(), power.sqrt()),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match *self {
            TransmitMap::Identity => 1.0,
            TransmitMap::ScaledAtan { power, slope } => {
                let u = FRAC_PI_2 * slope * x;
                power.sqrt() * slope / (1.0 + u * u)
            }
            TransmitMap::TanhScaled { power, slope } => power.sqrt() * slope / (slope * x).cosh().powi(2),
            TransmitMap::LinearClip { power } => {
                if x.abs() < power.sqrt() {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `sup_x h'(x)`.
    pub fn max_slope(&self) -> f64 {
        match *self {
            TransmitMap::Identity | TransmitMap::LinearClip { .. } => 1.0,
            TransmitMap::ScaledAtan { power, slope } | TransmitMap::TanhScaled { power, slope } => {
                power.sqrt() * slope
            }
        }
    }

    /// `sup_x h^2(x)`, infinite for the identity.
    pub fn peak_power(&self) -> f64 {
        match *self {
            TransmitMap::Identity => f64::INFINITY,
            TransmitMap::ScaledAtan { power, .. }
            | TransmitMap::TanhScaled { power, .. }
            | TransmitMap::LinearClip { power } => power,
        }
    }

    pub fn formula(&self) -> String {
        match self {
            TransmitMap::Identity => "h(x) = x".into(),
            TransmitMap::ScaledAtan { power, slope } => {
                format!("h(x) = sqrt({power}) * (2/pi) * atan((pi/2) * {slope} * x)")
            }
            TransmitMap::TanhScaled { power, slope } => format!("h(x) = sqrt({power}) * tanh({slope} * x)"),
            TransmitMap::LinearClip { power } => format!("h(x) = clamp(x, -sqrt({power}), sqrt({power}))"),
        }
    }
}

/// Shape of a receive map before amplitude scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReceiveShape {
    /// Linear baseline; unbounded, so outside the robust setting.
    Identity,
    /// `tanh(slope * x)`.
    Tanh { slope: f64 },
    /// `slope * x / (1 + |slope * x|)`.
    Rational { slope: f64 },
    /// `atan(slope * x)`.
    Atan { slope: f64 },
}

/// Receive nonlinearity `f = amplitude * shape`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiveMap {
    pub shape: ReceiveShape,
    pub amplitude: f64,
}

impl ReceiveMap {
    pub fn identity() -> Self {
        Self { shape: ReceiveShape::Identity, amplitude: 1.0 }
    }

    pub fn tanh(slope: f64) -> Self {
        Self { shape: ReceiveShape::Tanh { slope }, amplitude: 1.0 }
    }

    pub fn rational(slope: f64) -> Self {
        Self { shape: ReceiveShape::Rational { slope }, amplitude: 1.0 }
    }

    /// `amplitude * atan(slope * x)`.
    pub fn scaled_atan(amplitude: f64, slope: f64) -> Self {
        Self { shape: ReceiveShape::Atan { slope }, amplitude }
    }

    /// The same map multiplied by `kappa`.
    pub fn scaled(self, kappa: f64) -> Self {
        Self { amplitude: self.amplitude * kappa, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::param(format!("receive amplitude must be positive, got {}", self.amplitude)));
        }
        match self.shape {
            ReceiveShape::Identity => Ok(()),
            ReceiveShape::Tanh { slope } | ReceiveShape::Rational { slope } | ReceiveShape::Atan { slope } => {
                if slope > 0.0 && slope.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param(format!("receive slope must be positive, got {slope}")))
                }
            }
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.shape != ReceiveShape::Identity
    }

    /// Bit-exactly odd: `eval(-x) == -eval(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let a = self.amplitude;
        match self.shape {
            ReceiveShape::Identity => a * x,
            ReceiveShape::Tanh { slope } => odd(x, |u| a * (slope * u).tanh()),
            ReceiveShape::Rational { slope } => odd(x, |u| a * (slope * u) / (1.0 + slope * u)),
            ReceiveShape::Atan { slope } => odd(x, |u| a * (slope * u).atan()),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let a = self.amplitude;
        match self.shape {
            ReceiveShape::Identity => a,
            ReceiveShape::Tanh { slope } => a * slope / (slope * x).cosh().powi(2),
            ReceiveShape::Rational { slope } => a * slope / (1.0 + (slope * x).abs()).powi(2),
            ReceiveShape::Atan { slope } => a * slope / (1.0 + (slope * x).powi(2)),
        }
    }

    /// `sup_x |f(x)|`.
    pub fn bound(&self) -> f64 {
        let a = self.amplitude;
        match self.shape {
            ReceiveShape::Identity => f64::INFINITY,
            ReceiveShape::Tanh { .. } | ReceiveShape::Rational { .. } => a,
            ReceiveShape::Atan { .. } => a * FRAC_PI_2,
        }
    }

    /// Points where `n -> f(shift + n)` varies fastest, used to seed
    /// adaptive quadrature.
    pub fn quadrature_breaks(&self, shift: f64) -> Vec<f64> {
        let center = -shift;
        match self.shape {
            ReceiveShape::Identity => vec![0.0],
            ReceiveShape::Tanh { slope } | ReceiveShape::Rational { slope } | ReceiveShape::Atan { slope } => {
                let w = 1.0 / slope;
                vec![0.0, center - 4.0 * w, center - w, center, center + w, center + 4.0 * w]
            }
        }
    }

    pub fn formula(&self) -> String {
        let a = self.amplitude;
        let prefix = if a == 1.0 { String::new() } else { format!("{a} * ") };
        match self.shape {
            ReceiveShape::Identity => format!("f(x) = {prefix}x"),
            ReceiveShape::Tanh { slope } => format!("f(x) = {prefix}tanh({slope} * x)"),
            ReceiveShape::Rational { slope } => {
                format!("f(x) = {prefix}{slope} * x / (1 + |{slope} * x|)")
            }
            ReceiveShape::Atan { slope } => format!("f(x) = {prefix}atan({slope} * x)"),
        }
    }
}

#[inline]
fn odd(x: f64, positive: impl Fn(f64) -> f64) -> f64 {
    if x < 0.0 {
        -positive(-x)
    } else {
        positive(x)
    }
}

/// `g(x) = E_n[f(x + n)]` for a receive map under a noise law.
#[derive(Debug, Clone)]
pub struct SmoothedMap {
    f: ReceiveMap,
    noise: NoiseModel,
    integrator: Integrator,
    g_prime_zero: f64,
}

impl SmoothedMap {
    pub fn new(f: ReceiveMap, noise: NoiseModel, mc: &McSettings) -> Result<Self> {
        f.validate()?;
        let integrator = noise.integrator(mc)?;
        let g_prime_zero = integrator.expect(|n| f.deriv(n), &f.quadrature_breaks(0.0))?.value;
        Ok(Self { f, noise, integrator, g_prime_zero })
    }

    pub fn receive_map(&self) -> &ReceiveMap {
        &self.f
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let f = self.f;
        Ok(self
            .integrator
            .expect(|n| f.eval(x + n), &f.quadrature_breaks(x))?
            .value)
    }

    /// `g'(0) = E_n[f'(n)]`.
    pub fn g_prime_zero(&self) -> f64 {
        self.g_prime_zero
    }
}
