//! Fourier-domain empirical loss and its analytic gradient.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mixture::{MixtureParams, Reparam, COORDS_PER_COMPONENT};
use super::sample::FreqSample;

/// Affine rescaling of the Re/Im targets: `x ↦ (x − min)/(max − min)`.
///
/// Applied to target and model alike, so only the residual scale
/// `1/(max − min)` enters the loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescale {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub enabled: bool,
}

impl Rescale {
    pub fn identity() -> Self {
        Self { re_min: 0.0, re_max: 1.0, im_min: 0.0, im_max: 1.0, enabled: false }
    }

    pub fn from_sample(sample: &FreqSample, enabled: bool) -> Self {
        if !enabled {
            return Self::identity();
        }
        let mut r = Self {
            re_min: f64::INFINITY,
            re_max: f64::NEG_INFINITY,
            im_min: f64::INFINITY,
            im_max: f64::NEG_INFINITY,
            enabled: true,
        };
        for g in &sample.targets {
            r.re_min = r.re_min.min(g.re);
            r.re_max = r.re_max.max(g.re);
            r.im_min = r.im_min.min(g.im);
            r.im_max = r.im_max.max(g.im);
        }
        r
    }

    /// Residual multipliers `(c_re, c_im)`; 1 when disabled or degenerate.
    pub fn coefficients(&self) -> (f64, f64) {
        if !self.enabled {
            return (1.0, 1.0);
        }
        let inv = |lo: f64, hi: f64| if hi - lo > 1e-300 { 1.0 / (hi - lo) } else { 1.0 };
        (inv(self.re_min, self.re_max), inv(self.im_min, self.im_max))
    }
}

const CHUNK: usize = 256;

/// Loss over the nodes `idx` (all nodes when `None`) and, if requested, its
/// gradient with respect to θ in per-component order `[β, μ_s, μ_b, σ_s, σ_b, ρ]`.
pub fn loss_theta(
    theta: &MixtureParams,
    sample: &FreqSample,
    idx: Option<&[usize]>,
    rescale: &Rescale,
    want_grad: bool,
) -> (f64, Vec<f64>) {
    let n = theta.len();
    let k = COORDS_PER_COMPONENT;
    let count = idx.map_or(sample.len(), <[usize]>::len);
    if count == 0 {
        return (0.0, vec![0.0; n * k]);
    }
    let (cr, ci) = rescale.coefficients();
    let comps = &theta.components;

    let chunk_eval = |range: std::ops::Range<usize>| {
        let mut loss = 0.0;
        let mut grad = if want_grad { vec![0.0; n * k] } else { Vec::new() };
        let mut cache = vec![(0.0f64, 0.0f64, 0.0f64); n];
        for j in range {
            let p = idx.map_or(j, |ix| ix[j]);
            let eta = sample.nodes[p];
            let target = sample.targets[p];
            let mut model = Complex64::new(0.0, 0.0);
            for (c, slot) in comps.iter().zip(cache.iter_mut()) {
                let e = (-0.5 * c.quad_form(eta)).exp();
                let (s, co) = (eta[0] * c.mu[0] + eta[1] * c.mu[1]).sin_cos();
                *slot = (e, co, s);
                model.re += c.beta * e * co;
                model.im += c.beta * e * s;
            }
            let dr = cr * (target.re - model.re);
            let di = ci * (target.im - model.im);
            loss += dr * dr + di * di + dr.abs() + di.abs();
            if !want_grad {
                continue;
            }
            // ∂loss/∂Re Ĝ and ∂loss/∂Im Ĝ
            let gre = -cr * (2.0 * dr + sign(dr));
            let gim = -ci * (2.0 * di + sign(di));
            for (i, (c, &(e, co, s))) in comps.iter().zip(cache.iter()).enumerate() {
                let a = gre * co + gim * s; // pairs with ∂/∂(scalar multiplier)
                let b = gim * co - gre * s; // pairs with ∂/∂phase
                let g = &mut grad[i * k..(i + 1) * k];
                g[0] += e * a;
                let be = c.beta * e;
                g[1] += be * b * eta[0];
                g[2] += be * b * eta[1];
                let dq_ss = 2.0 * c.sigma_s * eta[0] * eta[0] + 2.0 * c.rho * c.sigma_b * eta[0] * eta[1];
                let dq_sb = 2.0 * c.sigma_b * eta[1] * eta[1] + 2.0 * c.rho * c.sigma_s * eta[0] * eta[1];
                let dq_r = 2.0 * c.sigma_s * c.sigma_b * eta[0] * eta[1];
                let h = -0.5 * be * a;
                g[3] += h * dq_ss;
                g[4] += h * dq_sb;
                g[5] += h * dq_r;
            }
        }
        (loss, grad)
    };

    // fixed chunking keeps the reduction order independent of the thread count
    let parts: Vec<(f64, Vec<f64>)> = (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| chunk_eval(c * CHUNK..((c + 1) * CHUNK).min(count)))
        .collect();
    let inv = 1.0 / count as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n * k];
    for (l, g) in parts {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    grad.iter_mut().for_each(|g| *g *= inv);
    (loss * inv, grad)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Full-sample loss.
pub fn loss(theta: &MixtureParams, sample: &FreqSample, rescale: &Rescale) -> f64 {
    loss_theta(theta, sample, None, rescale, false).0
}

/// Loss and gradient with respect to the unconstrained coordinates.
pub fn loss_and_grad(
    coords: &[f64],
    reparam: &Reparam,
    dt: f64,
    sample: &FreqSample,
    idx: Option<&[usize]>,
    rescale: &Rescale,
) -> (f64, Vec<f64>) {
    let theta = reparam.to_theta(coords, dt);
    let (l, g) = loss_theta(&theta, sample, idx, rescale, true);
    (l, reparam.pullback(coords, &theta, &g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernelfit::mixture::{Component, MixtureBounds};
    use crate::kernelfit::sample::sample_frequencies;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn self_target_has_zero_loss() {
        let theta = MixtureParams::gaussian([0.05, 0.01], 0.2, 0.1, 0.3, 1.0);
        let s = sample_frequencies(&theta, 20.0, 500, 0.7).unwrap();
        assert_eq!(loss(&theta, &s, &Rescale::from_sample(&s, true)), 0.0);
    }

    #[test]
    fn unit_target_against_vanishing_model() {
        // σ = 1 at |η| = 100 makes Ĝ underflow to exactly 0
        let theta = MixtureParams::gaussian([0.0, 0.0], 1.0, 1.0, 0.0, 1.0);
        let s = FreqSample {
            nodes: vec![[100.0, 0.0]],
            weights: vec![1.0],
            targets: vec![Complex64::new(1.0, 0.0)],
            eta_prime: 100.0,
            core: [100.0; 2],
            delta_min: f64::INFINITY,
            delta_max: 0.0,
        };
        assert_eq!(loss(&theta, &s, &Rescale::identity()), 2.0);
    }

    #[test]
    fn rescale_is_identity_when_disabled() {
        let r = Rescale::identity();
        assert_eq!(r.coefficients(), (1.0, 1.0));
    }

    #[test]
    fn gradient_is_order_independent_of_chunking() {
        let target = MixtureParams::gaussian([0.0, 0.0], 0.3, 0.2, 0.1, 1.0);
        let s = sample_frequencies(&target, 10.0, 3000, 0.7).unwrap();
        let theta = MixtureParams::new(
            vec![
                Component { beta: 0.4, mu: [0.1, 0.0], sigma_s: 0.2, sigma_b: 0.3, rho: 0.2 },
                Component { beta: 0.6, mu: [-0.1, 0.05], sigma_s: 0.4, sigma_b: 0.1, rho: -0.3 },
            ],
            MixtureBounds::default(),
            1.0,
        )
        .unwrap();
        let r = Rescale::identity();
        let (l1, g1) = loss_theta(&theta, &s, None, &r, true);
        let (l2, g2) = loss_theta(&theta, &s, None, &r, true);
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert_eq!(g1, g2);
    }

    #[test]
    fn coordinate_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let target = crate::charfn::Kou2DParams::synthetic();
        let s = sample_frequencies(&target, 30.0, 400, 0.7).unwrap();
        let reparam = Reparam::new(MixtureBounds::default());
        for _ in 0..20 {
            let n = rng.gen_range(1..4);
            let coords: Vec<f64> = (0..n * COORDS_PER_COMPONENT).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let rescale = Rescale::from_sample(&s, rng.gen_bool(0.5));
            let (_, g) = loss_and_grad(&coords, &reparam, 1.0, &s, None, &rescale);
            let h = 1e-6;
            for j in 0..coords.len() {
                let mut up = coords.clone();
                let mut dn = coords.clone();
                up[j] += h;
                dn[j] -= h;
                let lu = loss(&reparam.to_theta(&up, 1.0), &s, &rescale);
                let ld = loss(&reparam.to_theta(&dn, 1.0), &s, &rescale);
                let fd = (lu - ld) / (2.0 * h);
                let rel = (fd - g[j]).abs() / g[j].abs().max(fd.abs()).max(1e-4);
                assert!(rel <= 1e-5, "coord {j}: fd {fd} vs analytic {}, rel {rel}", g[j]);
            }
        }
    }
}
