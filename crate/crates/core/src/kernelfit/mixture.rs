//! Simplex-weighted bivariate Gaussian mixture: the learned transition kernel.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::charfn::CharFn;
use crate::error::{config_err, Result};

/// Box constraints on the component parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureBounds {
    pub mu_bar: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho_bar: f64,
}

impl Default for MixtureBounds {
    fn default() -> Self {
        Self { mu_bar: 2.0, sigma_min: 1e-3, sigma_max: 2.0, rho_bar: 0.95 }
    }
}

impl MixtureBounds {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_bar > 0.0 && self.mu_bar.is_finite()) {
            return Err(config_err("mu_bar must be positive and finite"));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < self.sigma_max && self.sigma_max.is_finite()) {
            return Err(config_err("need 0 < sigma_min < sigma_max < inf"));
        }
        if !(self.rho_bar > 0.0 && self.rho_bar < 1.0) {
            return Err(config_err("rho_bar must lie in (0,1)"));
        }
        Ok(())
    }
}

/// One Gaussian component `β φ(·; μ, Σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub beta: f64,
    pub mu: [f64; 2],
    pub sigma_s: f64,
    pub sigma_b: f64,
    pub rho: f64,
}

impl Component {
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let c = self.rho * self.sigma_s * self.sigma_b;
        [[self.sigma_s * self.sigma_s, c], [c, self.sigma_b * self.sigma_b]]
    }

    /// Unweighted density `φ(y; μ, Σ)`.
    pub fn density(&self, y: [f64; 2]) -> f64 {
        let zs = (y[0] - self.mu[0]) / self.sigma_s;
        let zb = (y[1] - self.mu[1]) / self.sigma_b;
        let one_m = 1.0 - self.rho * self.rho;
        let quad = (zs * zs - 2.0 * self.rho * zs * zb + zb * zb) / one_m;
        (-0.5 * quad).exp() / (2.0 * PI * self.sigma_s * self.sigma_b * one_m.sqrt())
    }

    /// Unweighted CF `exp(i ηᵀμ − ½ ηᵀΣη)`.
    pub fn cf(&self, eta: [f64; 2]) -> Complex64 {
        let q = self.quad_form(eta);
        let phase = eta[0] * self.mu[0] + eta[1] * self.mu[1];
        Complex64::from_polar((-0.5 * q).exp(), phase)
    }

    pub fn quad_form(&self, eta: [f64; 2]) -> f64 {
        let (a, b) = (self.sigma_s * eta[0], self.sigma_b * eta[1]);
        a * a + b * b + 2.0 * self.rho * a * b
    }
}

/// Mixture kernel `ĝ(y) = Σ β_n φ(y; μ_n, Σ_n)` for a fixed step `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub components: Vec<Component>,
    pub bounds: MixtureBounds,
    pub dt: f64,
}

impl MixtureParams {
    pub fn new(components: Vec<Component>, bounds: MixtureBounds, dt: f64) -> Result<Self> {
        let m = Self { components, bounds, dt };
        m.validate()?;
        Ok(m)
    }

    /// Single component with the given moments; handy for tests and oracles.
    pub fn gaussian(mu: [f64; 2], sigma_s: f64, sigma_b: f64, rho: f64, dt: f64) -> Self {
        Self {
            components: vec![Component { beta: 1.0, mu, sigma_s, sigma_b, rho }],
            bounds: MixtureBounds {
                mu_bar: mu[0].abs().max(mu[1].abs()).max(1.0) * 2.0,
                sigma_min: sigma_s.min(sigma_b) * 0.5,
                sigma_max: sigma_s.max(sigma_b) * 2.0,
                rho_bar: ((rho.abs() + 1.0) / 2.0).max(0.5),
            },
            dt,
        }
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.components.is_empty() {
            return Err(config_err("mixture needs at least one component"));
        }
        if !(self.dt > 0.0) {
            return Err(config_err("mixture dt must be > 0"));
        }
        let b = &self.bounds;
        let mut total = 0.0;
        for (n, c) in self.components.iter().enumerate() {
            let fields = [c.beta, c.mu[0], c.mu[1], c.sigma_s, c.sigma_b, c.rho];
            if fields.iter().any(|v| !v.is_finite()) {
                return Err(config_err(format!("component {n} has non-finite fields")));
            }
            if c.beta < 0.0 {
                return Err(config_err(format!("component {n}: negative weight {}", c.beta)));
            }
            let tol = 1e-12;
            if c.mu[0].abs() > b.mu_bar + tol || c.mu[1].abs() > b.mu_bar + tol {
                return Err(config_err(format!("component {n}: mean outside ±mu_bar")));
            }
            for s in [c.sigma_s, c.sigma_b] {
                if s < b.sigma_min * (1.0 - tol) || s > b.sigma_max * (1.0 + tol) {
                    return Err(config_err(format!("component {n}: sigma {s} outside bounds")));
                }
            }
            if c.rho.abs() > b.rho_bar + tol {
                return Err(config_err(format!("component {n}: |rho| exceeds rho_bar")));
            }
            total += c.beta;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(config_err(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(())
    }

    /// `ĝ(y; θ)`; nonnegative by construction.
    pub fn density(&self, y: [f64; 2]) -> f64 {
        self.components.iter().map(|c| c.beta * c.density(y)).sum()
    }

    /// `Ĝ(η; θ)` in closed form.
    pub fn cf_real(&self, eta: [f64; 2]) -> Complex64 {
        self.components.iter().map(|c| c.beta * c.cf(eta)).sum()
    }

    /// Smallest eigenvalue over all component covariances.
    pub fn min_cov_eigenvalue(&self) -> f64 {
        self.components
            .iter()
            .map(|c| crate::charfn::min_eigenvalue(c.covariance()))
            .fold(f64::INFINITY, f64::min)
    }
}

impl CharFn for MixtureParams {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn cf_complex(&self, eta: [Complex64; 2]) -> Result<Complex64> {
        let mut acc = Complex64::new(0.0, 0.0);
        for c in &self.components {
            let cov = c.covariance();
            let q = cov[0][0] * eta[0] * eta[0] + 2.0 * cov[0][1] * eta[0] * eta[1] + cov[1][1] * eta[1] * eta[1];
            let lin = Complex64::new(0.0, 1.0) * (eta[0] * c.mu[0] + eta[1] * c.mu[1]);
            acc += c.beta * (lin - 0.5 * q).exp();
        }
        Ok(acc)
    }

    fn cf(&self, eta: [f64; 2]) -> Complex64 {
        self.cf_real(eta)
    }
}

/// Number of unconstrained coordinates per component.
pub const COORDS_PER_COMPONENT: usize = 6;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Smooth map from unconstrained coordinates onto the bounded parameter set.
///
/// Per component the coordinates are `[logit, μ_s, μ_b, x_σs, x_σb, x_ρ]`:
/// weights are a softmax of the logits, means are clamped to `±μ̄`,
/// volatilities are a scaled sigmoid into `[σ_min, σ_max]` and correlations a
/// scaled tanh into `[−ρ̄, ρ̄]`. Every image is feasible.
#[derive(Debug, Clone, Copy)]
pub struct Reparam {
    pub bounds: MixtureBounds,
}

impl Reparam {
    pub fn new(bounds: MixtureBounds) -> Self {
        Self { bounds }
    }

    pub fn to_theta(&self, coords: &[f64], dt: f64) -> MixtureParams {
        assert_eq!(coords.len() % COORDS_PER_COMPONENT, 0);
        let b = self.bounds;
        let n = coords.len() / COORDS_PER_COMPONENT;
        let max_logit = (0..n)
            .map(|k| coords[k * COORDS_PER_COMPONENT])
            .fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = (0..n).map(|k| (coords[k * COORDS_PER_COMPONENT] - max_logit).exp()).collect();
        let total: f64 = w.iter().sum();
        let span = b.sigma_max - b.sigma_min;
        let components = (0..n)
            .map(|k| {
                let x = &coords[k * COORDS_PER_COMPONENT..(k + 1) * COORDS_PER_COMPONENT];
                Component {
                    beta: w[k] / total,
                    mu: [x[1].clamp(-b.mu_bar, b.mu_bar), x[2].clamp(-b.mu_bar, b.mu_bar)],
                    sigma_s: b.sigma_min + span * sigmoid(x[3]),
                    sigma_b: b.sigma_min + span * sigmoid(x[4]),
                    rho: b.rho_bar * x[5].tanh(),
                }
            })
            .collect();
        MixtureParams { components, bounds: b, dt }
    }

    /// Inverse map for interior points (positive weights, strict bounds).
    pub fn to_coords(&self, theta: &MixtureParams) -> Vec<f64> {
        let b = self.bounds;
        let span = b.sigma_max - b.sigma_min;
        let logit = |u: f64| (u / (1.0 - u)).ln();
        let mut out = Vec::with_capacity(theta.len() * COORDS_PER_COMPONENT);
        for c in &theta.components {
            out.push(c.beta.max(1e-300).ln());
            out.push(c.mu[0]);
            out.push(c.mu[1]);
            out.push(logit((c.sigma_s - b.sigma_min) / span));
            out.push(logit((c.sigma_b - b.sigma_min) / span));
            out.push((c.rho / b.rho_bar).atanh());
        }
        out
    }

    /// Chain rule from `∂L/∂θ` (per component `[β, μ_s, μ_b, σ_s, σ_b, ρ]`)
    /// to `∂L/∂coords`.
    pub fn pullback(&self, coords: &[f64], theta: &MixtureParams, grad_theta: &[f64]) -> Vec<f64> {
        let b = self.bounds;
        let span = b.sigma_max - b.sigma_min;
        let n = theta.len();
        let k = COORDS_PER_COMPONENT;
        let weighted: f64 = (0..n).map(|i| theta.components[i].beta * grad_theta[i * k]).sum();
        let mut out = vec![0.0; coords.len()];
        for i in 0..n {
            let x = &coords[i * k..(i + 1) * k];
            let g = &grad_theta[i * k..(i + 1) * k];
            let beta = theta.components[i].beta;
            out[i * k] = beta * (g[0] - weighted);
            out[i * k + 1] = if x[1].abs() < b.mu_bar { g[1] } else { 0.0 };
            out[i * k + 2] = if x[2].abs() < b.mu_bar { g[2] } else { 0.0 };
            let s3 = sigmoid(x[3]);
            let s4 = sigmoid(x[4]);
            out[i * k + 3] = g[3] * span * s3 * (1.0 - s3);
            out[i * k + 4] = g[4] * span * s4 * (1.0 - s4);
            let t = x[5].tanh();
            out[i * k + 5] = g[5] * b.rho_bar * (1.0 - t * t);
        }
        out
    }
}
