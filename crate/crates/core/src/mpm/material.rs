//! Constitutive models: SVD-free Neo-Hookean solids and a weakly compressible
//! equation-of-state fluid.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::math::Mat3;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialKind {
    Fluid,
    NeoHookean,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialParams<T> {
    pub kind: MaterialKind,
    pub density: T,
    pub youngs: T,
    pub poisson: T,
    pub bulk: T,
    pub gamma: T,
}

impl<T: Real> MaterialParams<T> {
    pub fn elastic(density: f64, youngs: f64, poisson: f64) -> Self {
        Self {
            kind: MaterialKind::NeoHookean,
            density: T::lit(density),
            youngs: T::lit(youngs),
            poisson: T::lit(poisson),
            bulk: T::zero(),
            gamma: T::one(),
        }
    }

    pub fn fluid(density: f64, bulk: f64, gamma: f64) -> Self {
        Self {
            kind: MaterialKind::Fluid,
            density: T::lit(density),
            youngs: T::zero(),
            poisson: T::zero(),
            bulk: T::lit(bulk),
            gamma: T::lit(gamma),
        }
    }

    /// Lamé parameters `(μ, λ)`.
    pub fn lame(&self) -> (T, T) {
        let (e, nu) = (self.youngs, self.poisson);
        let one = T::one();
        let two = T::lit(2.0);
        (e / (two * (one + nu)), e * nu / ((one + nu) * (one - two * nu)))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if !(self.density > T::zero()) {
            return bad("material density must be positive");
        }
        match self.kind {
            MaterialKind::NeoHookean => {
                if !(self.youngs > T::zero()) {
                    return bad("Young's modulus must be positive");
                }
                if !(self.poisson > T::zero() && self.poisson < T::lit(0.5)) {
                    return bad("Poisson ratio must lie in (0, 0.5)");
                }
            }
            MaterialKind::Fluid => {
                if !(self.bulk > T::zero()) {
                    return bad("bulk modulus must be positive");
                }
                if !(self.gamma >= T::one()) {
                    return bad("equation-of-state exponent must be >= 1");
                }
            }
        }
        Ok(())
    }
}

/// Kirchhoff stress `τ = P Fᵀ`.
///
/// Neo-Hookean: `τ = μ(F Fᵀ − I) + λ ln(det F) I`.
/// Fluid: pressure `p = κ(J^(−γ) − 1)`, `τ = −p J I`.
#[inline]
pub fn kirchhoff<T: Real>(params: &MaterialParams<T>, f: &Mat3<T>, j: T) -> std::result::Result<Mat3<T>, T> {
    match params.kind {
        MaterialKind::NeoHookean => {
            let det = f.det();
            if !(det > T::zero()) {
                return Err(det);
            }
            let (mu, la) = params.lame();
            let fft = *f * f.transpose();
            Ok((fft - Mat3::identity()) * mu + Mat3::scaled_identity(la * det.ln()))
        }
        MaterialKind::Fluid => {
            if !(j > T::zero()) {
                return Err(j);
            }
            let k = params.bulk;
            let p_j = k * (j.powf(T::one() - params.gamma) - j);
            Ok(Mat3::scaled_identity(-p_j))
        }
    }
}

/// Volume-weighted stress `V₀·τ` consumed by the particle-to-grid transfer.
pub fn stress<T: Real>(params: &MaterialParams<T>, f: &Mat3<T>, volume0: T, j: T, particle: usize) -> Result<Mat3<T>> {
    kirchhoff(params, f, j)
        .map(|t| t * volume0)
        .map_err(|det| SimError::DegenerateElement { particle, det: det.as_f64() })
}

/// VJP of [`kirchhoff`]: returns `(F̄, J̄)` for stress cotangent `τ̄`.
#[inline]
pub fn kirchhoff_vjp<T: Real>(params: &MaterialParams<T>, f: &Mat3<T>, j: T, tau_bar: &Mat3<T>) -> (Mat3<T>, T) {
    match params.kind {
        MaterialKind::NeoHookean => {
            let (mu, la) = params.lame();
            let sym = (*tau_bar + tau_bar.transpose()) * mu;
            let mut fb = sym * *f;
            if let Some(inv) = f.inverse() {
                fb += inv.transpose() * (la * tau_bar.trace());
            }
            (fb, T::zero())
        }
        MaterialKind::Fluid => {
            let k = params.bulk;
            let g = params.gamma;
            let d = -k * ((T::one() - g) * j.powf(-g) - T::one());
            (Mat3::zero(), tau_bar.trace() * d)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rest_states_are_stress_free() {
        let e = MaterialParams::<f64>::elastic(1.0, 1000.0, 0.3);
        assert_eq!(kirchhoff(&e, &Mat3::identity(), 1.0).unwrap().max_abs(), 0.0);
        let f = MaterialParams::<f64>::fluid(1.0, 40.0, 7.0);
        assert_eq!(kirchhoff(&f, &Mat3::identity(), 1.0).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn inverted_element_is_reported() {
        let e = MaterialParams::<f64>::elastic(1.0, 1000.0, 0.3);
        let f = Mat3::diag(-1.0, 1.0, 1.0);
        assert!(matches!(stress(&e, &f, 1.0, 1.0, 7), Err(SimError::DegenerateElement { particle: 7, .. })));
    }
}
