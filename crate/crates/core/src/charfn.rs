//! Closed-form characteristic functions of the one-step log increment.
//!
//! The increment `ΔX = (ΔS, ΔB)` over one inter-decision interval has
//! characteristic function `G(η) = E[exp(i η·ΔX)]`. For the coupled 2D Kou
//! model it is `G(η) = exp(Δt Ψ(η))` with
//!
//! ```text
//! Ψ(η) = i(η_s μ_s* + η_b μ_b*) − ½ ηᵀ C η
//!        + λ_s (φ_s(η_s) − 1) + λ_b (φ_b(η_b) − 1) + λ_c (φ_cs(η_s) φ_cb(η_b) − 1)
//! ```
//!
//! where each `φ` is a double-exponential jump CF and the drifts are
//! compensated so that `E[exp(ΔS)] = exp(μ_s Δt)` and `E[exp(ΔB)] = exp(μ_b Δt)`.
//!
//! Complex arguments are accepted everywhere so that exponential moments
//! `E[exp(a·ΔX)] = G(−i a)` come out of the same code path.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Exponent pair `a` used for boundary propagation of `exp(a·x)` profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Selector {
    /// `(0,0)`: constant profile.
    None,
    /// `(1,0)`: `exp(s)` profile.
    S,
    /// `(0,1)`: `exp(b)` profile.
    B,
    /// `(1,1)`: `exp(s+b)` profile.
    Both,
}

impl Selector {
    pub const ALL: [Selector; 4] = [Selector::None, Selector::S, Selector::B, Selector::Both];

    pub fn exponents(self) -> [f64; 2] {
        match self {
            Selector::None => [0.0, 0.0],
            Selector::S => [1.0, 0.0],
            Selector::B => [0.0, 1.0],
            Selector::Both => [1.0, 1.0],
        }
    }

    pub fn index(self) -> usize {
        match self {
            Selector::None => 0,
            Selector::S => 1,
            Selector::B => 2,
            Selector::Both => 3,
        }
    }
}

/// A translation-invariant one-step increment law given through its CF.
pub trait CharFn: Send + Sync {
    /// Inter-decision interval the CF refers to.
    fn dt(&self) -> f64;

    /// `G(η)` for complex `η` (analytic continuation where it exists).
    fn cf_complex(&self, eta: [Complex64; 2]) -> Result<Complex64>;

    /// `G(η)` for real `η`. Never hits a pole.
    fn cf(&self, eta: [f64; 2]) -> Complex64 {
        self.cf_complex([Complex64::new(eta[0], 0.0), Complex64::new(eta[1], 0.0)])
            .expect("real frequencies cannot hit a pole")
    }

    /// `E[exp(a·ΔX)] = G(−i a)`.
    fn exp_moment(&self, sel: Selector) -> Result<f64> {
        let a = sel.exponents();
        let g = self.cf_complex([Complex64::new(0.0, -a[0]), Complex64::new(0.0, -a[1])])?;
        let v = g.re;
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Pole(format!("exponential moment {a:?} is not finite and positive ({v})")));
        }
        Ok(v)
    }

    /// Mean vector and covariance of the increment, by central differences of
    /// `ln G` at the origin.
    fn increment_moments(&self) -> ([f64; 2], [[f64; 2]; 2]) {
        let h = 1e-4;
        let lg = |x: f64, y: f64| self.cf([x, y]).ln();
        let l0 = lg(0.0, 0.0);
        let mean = [
            (lg(h, 0.0) - lg(-h, 0.0)).im / (2.0 * h),
            (lg(0.0, h) - lg(0.0, -h)).im / (2.0 * h),
        ];
        let css = -(lg(h, 0.0) + lg(-h, 0.0) - 2.0 * l0).re / (h * h);
        let cbb = -(lg(0.0, h) + lg(0.0, -h) - 2.0 * l0).re / (h * h);
        let csb = -(lg(h, h) - lg(h, -h) - lg(-h, h) + lg(-h, -h)).re / (4.0 * h * h);
        (mean, [[css, csb], [csb, cbb]])
    }
}

/// Parameters of the fully coupled 2D Kou jump-diffusion.
///
/// Rates are annualised; `dt` is the inter-decision interval in years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kou2DParams {
    pub mu_s: f64,
    pub mu_b: f64,
    pub sigma_s: f64,
    pub sigma_b: f64,
    pub rho: f64,
    pub lambda_s: f64,
    pub lambda_b: f64,
    pub lambda_c: f64,
    pub p_s: f64,
    pub p_b: f64,
    pub p_cs: f64,
    pub p_cb: f64,
    pub eta1_s: f64,
    pub eta2_s: f64,
    pub eta1_b: f64,
    pub eta2_b: f64,
    pub eta1_cs: f64,
    pub eta2_cs: f64,
    pub eta1_cb: f64,
    pub eta2_cb: f64,
    pub dt: f64,
}

/// CF of a double-exponential jump size: `+Exp(eta1)` w.p. `p`, `−Exp(eta2)` otherwise.
fn double_exp_cf(p: f64, eta1: f64, eta2: f64, z: Complex64, what: &str) -> Result<Complex64> {
    let up = eta1 - I * z;
    let down = eta2 + I * z;
    if up.norm() < 1e-12 || down.norm() < 1e-12 {
        return Err(Error::Pole(format!("{what} jump CF evaluated at a pole (z = {z})")));
    }
    Ok(p * eta1 / up + (1.0 - p) * eta2 / down)
}

impl Kou2DParams {
    /// Synthetic parameter set used for the kernel-learning experiment.
    pub fn synthetic() -> Self {
        Self {
            mu_s: 0.08,
            mu_b: 0.02,
            sigma_s: 0.03,
            sigma_b: 0.04,
            rho: 0.05,
            lambda_s: 0.6,
            lambda_b: 0.8,
            lambda_c: 0.2,
            p_s: 0.4,
            p_b: 0.5,
            p_cs: 0.5,
            p_cb: 0.6,
            eta1_s: 6.5,
            eta2_s: 6.5,
            eta1_b: 20.5,
            eta2_b: 22.5,
            eta1_cs: 25.0,
            eta2_cs: 30.0,
            eta1_cb: 20.0,
            eta2_cb: 35.0,
            dt: 1.0,
        }
    }

    /// Annualised equity/bond parameters calibrated to long-horizon index data.
    pub fn calibrated() -> Self {
        Self {
            mu_s: 0.0898,
            mu_b: 0.0204,
            sigma_s: 0.1326,
            sigma_b: 0.0466,
            rho: 0.0721,
            lambda_s: 0.5960,
            lambda_b: 0.9495,
            lambda_c: 0.1010,
            p_s: 0.373,
            p_b: 0.479,
            p_cs: 0.300,
            p_cb: 0.500,
            eta1_s: 6.701,
            eta2_s: 6.634,
            eta1_b: 20.764,
            eta2_b: 22.551,
            eta1_cs: 9.825,
            eta2_cs: 7.146,
            eta1_cb: 16.982,
            eta2_cb: 19.914,
            dt: 1.0,
        }
    }

    /// Look up a named preset.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "kou-synthetic" | "synthetic" => Some(Self::synthetic()),
            "kou-calibrated" | "calibrated" => Some(Self::calibrated()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.mu_s, self.mu_b, self.sigma_s, self.sigma_b, self.rho, self.lambda_s,
            self.lambda_b, self.lambda_c, self.p_s, self.p_b, self.p_cs, self.p_cb,
            self.eta1_s, self.eta2_s, self.eta1_b, self.eta2_b, self.eta1_cs, self.eta2_cs,
            self.eta1_cb, self.eta2_cb, self.dt,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(config_err("Kou parameters must be finite"));
        }
        if self.rho.abs() >= 1.0 {
            return Err(config_err(format!("|rho| must be < 1, got {}", self.rho)));
        }
        if self.sigma_s <= 0.0 || self.sigma_b <= 0.0 {
            return Err(config_err("diffusion volatilities must be > 0"));
        }
        if self.lambda_s < 0.0 || self.lambda_b < 0.0 || self.lambda_c < 0.0 {
            return Err(config_err("jump intensities must be >= 0"));
        }
        for (name, p) in [("p_s", self.p_s), ("p_b", self.p_b), ("p_cs", self.p_cs), ("p_cb", self.p_cb)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(config_err(format!("{name} must lie in [0,1], got {p}")));
            }
        }
        for (name, e) in [
            ("eta1_s", self.eta1_s),
            ("eta1_b", self.eta1_b),
            ("eta1_cs", self.eta1_cs),
            ("eta1_cb", self.eta1_cb),
        ] {
            if e <= 1.0 {
                return Err(config_err(format!(
                    "{name} must exceed 1 for finite exponential moments, got {e}"
                )));
            }
        }
        for (name, e) in [
            ("eta2_s", self.eta2_s),
            ("eta2_b", self.eta2_b),
            ("eta2_cs", self.eta2_cs),
            ("eta2_cb", self.eta2_cb),
        ] {
            if e <= 0.0 {
                return Err(config_err(format!("{name} must be > 0, got {e}")));
            }
        }
        if self.dt <= 0.0 {
            return Err(config_err("dt must be > 0"));
        }
        Ok(())
    }

    pub fn phi_s(&self, z: Complex64) -> Result<Complex64> {
        double_exp_cf(self.p_s, self.eta1_s, self.eta2_s, z, "idiosyncratic s")
    }

    pub fn phi_b(&self, z: Complex64) -> Result<Complex64> {
        double_exp_cf(self.p_b, self.eta1_b, self.eta2_b, z, "idiosyncratic b")
    }

    pub fn phi_cs(&self, z: Complex64) -> Result<Complex64> {
        double_exp_cf(self.p_cs, self.eta1_cs, self.eta2_cs, z, "common-jump s")
    }

    pub fn phi_cb(&self, z: Complex64) -> Result<Complex64> {
        double_exp_cf(self.p_cb, self.eta1_cb, self.eta2_cb, z, "common-jump b")
    }

    /// Compensated drifts `(μ_s*, μ_b*)`.
    pub fn compensated_drifts(&self) -> [f64; 2] {
        let mi = Complex64::new(0.0, -1.0);
        let zero = Complex64::new(0.0, 0.0);
        // eta1 > 1 is validated, so these never hit a pole.
        let kappa_s = self.phi_s(mi).map(|v| v.re - 1.0).unwrap_or(f64::NAN);
        let kappa_b = self.phi_b(mi).map(|v| v.re - 1.0).unwrap_or(f64::NAN);
        let kappa_cs = self
            .phi_cs(mi)
            .and_then(|a| self.phi_cb(zero).map(|b| (a * b).re - 1.0))
            .unwrap_or(f64::NAN);
        let kappa_cb = self
            .phi_cs(zero)
            .and_then(|a| self.phi_cb(mi).map(|b| (a * b).re - 1.0))
            .unwrap_or(f64::NAN);
        [
            self.mu_s - 0.5 * self.sigma_s * self.sigma_s - self.lambda_s * kappa_s - self.lambda_c * kappa_cs,
            self.mu_b - 0.5 * self.sigma_b * self.sigma_b - self.lambda_b * kappa_b - self.lambda_c * kappa_cb,
        ]
    }

    /// Characteristic exponent `Ψ(η)`.
    pub fn char_exponent(&self, eta: [Complex64; 2]) -> Result<Complex64> {
        let [es, eb] = eta;
        let [ms, mb] = self.compensated_drifts();
        let (ss, sb) = (self.sigma_s, self.sigma_b);
        let drift = I * (es * ms + eb * mb);
        let diffusion = -0.5 * (ss * ss * es * es + sb * sb * eb * eb + 2.0 * self.rho * ss * sb * es * eb);
        let jumps = self.lambda_s * (self.phi_s(es)? - 1.0)
            + self.lambda_b * (self.phi_b(eb)? - 1.0)
            + self.lambda_c * (self.phi_cs(es)? * self.phi_cb(eb)? - 1.0);
        let psi = drift + diffusion + jumps;
        if !(psi.re.is_finite() && psi.im.is_finite()) {
            return Err(Error::NonFinite(format!("Ψ({es}, {eb}) = {psi}")));
        }
        Ok(psi)
    }

    /// Diffusion covariance per unit time.
    pub fn diffusion_cov(&self) -> [[f64; 2]; 2] {
        let c = self.rho * self.sigma_s * self.sigma_b;
        [[self.sigma_s * self.sigma_s, c], [c, self.sigma_b * self.sigma_b]]
    }

    /// Fourier tail constants: `|G(η)| ≤ exp(−c0 Δt ‖η‖²)` for `‖η‖ ≥ r_tail`.
    ///
    /// `c0` is half the smallest eigenvalue of the diffusion covariance.
    /// `r_tail` is the smallest radius from which the bound holds along eight
    /// rays sampled out to `r_scan`.
    pub fn tail_spec(&self) -> TailSpec {
        let c0 = 0.5 * min_eigenvalue(self.diffusion_cov());
        let r_scan = 200.0;
        let steps = 4000;
        let mut r_tail: f64 = 0.0;
        for ray in 0..8 {
            let ang = ray as f64 * std::f64::consts::PI / 4.0;
            let dir = [ang.cos(), ang.sin()];
            // last radius where the bound fails along this ray
            for k in (0..=steps).rev() {
                let r = r_scan * k as f64 / steps as f64;
                let g = self.cf([r * dir[0], r * dir[1]]).norm();
                let bound = (-c0 * self.dt * r * r).exp();
                if g > bound * (1.0 + 1e-12) {
                    r_tail = r_tail.max(r + r_scan / steps as f64);
                    break;
                }
            }
        }
        TailSpec { c0, alpha_tail: 2.0, r_tail }
    }

    /// The four exponential moments `G(−i a)` indexed by [`Selector::index`].
    pub fn boundary_factors(&self) -> Result<[f64; 4]> {
        boundary_factors(self)
    }
}

impl CharFn for Kou2DParams {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn cf_complex(&self, eta: [Complex64; 2]) -> Result<Complex64> {
        Ok((self.dt * self.char_exponent(eta)?).exp())
    }
}

/// `[G(0,0), G(−i,0), G(0,−i), G(−i,−i)]` for any CF model.
pub fn boundary_factors(cf: &dyn CharFn) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for sel in Selector::ALL {
        out[sel.index()] = if sel == Selector::None { 1.0 } else { cf.exp_moment(sel)? };
    }
    Ok(out)
}

pub(crate) fn min_eigenvalue(m: [[f64; 2]; 2]) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    0.5 * tr - disc
}

/// Fourier tail decay `|G(η)| ≤ exp(−c0 Δt ‖η‖^α)` for `‖η‖ ≥ r_tail`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSpec {
    pub c0: f64,
    pub alpha_tail: f64,
    pub r_tail: f64,
}

/// Gaussian tail envelope `|Ĝ(η)| ≤ amplitude · exp(−decay ‖η‖²)` of a mixture CF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureTail {
    pub amplitude: f64,
    pub decay: f64,
}

impl MixtureTail {
    /// Worst case over the bounded parameter set: every component covariance
    /// dominates `(1 − ρ̄) σ_min² I`, and simplex weights sum to one.
    pub fn from_bounds(sigma_min: f64, rho_bar: f64) -> Self {
        Self { amplitude: 1.0, decay: 0.5 * (1.0 - rho_bar) * sigma_min * sigma_min }
    }
}

/// `amp^p · 2π ∫_{r0}^∞ r exp(−p c r^α) dr` by composite Simpson quadrature.
fn radial_tail(amp: f64, c: f64, alpha: f64, p: f64, r0: f64) -> f64 {
    let rate = p * c;
    // integrate until the exponent has dropped by 60 beyond its value at r0
    let r_end = ((rate * r0.powf(alpha) + 60.0) / rate).powf(1.0 / alpha).max(r0 + 1e-9);
    let n = 4000usize;
    let h = (r_end - r0) / n as f64;
    let f = |r: f64| r * (-rate * r.powf(alpha)).exp();
    let mut acc = f(r0) + f(r_end);
    for k in 1..n {
        let r = r0 + k as f64 * h;
        acc += if k % 2 == 1 { 4.0 * f(r) } else { 2.0 * f(r) };
    }
    amp.powf(p) * 2.0 * std::f64::consts::PI * acc * h / 3.0
}

/// Smallest truncation half-width `η′ ≥ r_tail` such that the tail integrals of
/// `|G|^p` and `|Ĝ|^p` outside `[−η′, η′]²` are both at most `h^{1+κ}`.
///
/// The tail outside the square is bounded by the tail outside the inscribed
/// disc, which is integrated radially from the decay envelopes.
pub fn choose_eta_prime(
    tail: &TailSpec,
    dt: f64,
    mixture: &MixtureTail,
    h: f64,
    kappa: f64,
    p: u32,
) -> Result<f64> {
    if !(tail.c0 > 0.0) || !(tail.alpha_tail > 0.0 && tail.alpha_tail <= 2.0) || tail.r_tail < 0.0 {
        return Err(config_err(format!("invalid tail constants {tail:?}")));
    }
    if !(mixture.decay > 0.0) || !(mixture.amplitude > 0.0) || !(dt > 0.0) {
        return Err(config_err(format!("invalid mixture tail constants {mixture:?} (dt = {dt})")));
    }
    if !(h > 0.0 && h < 1.0) || !(kappa > 0.0 && kappa <= 1.0) || !(p == 1 || p == 2) {
        return Err(config_err(format!("choose_eta_prime: need h in (0,1), kappa in (0,1], p in {{1,2}}; got h={h}, kappa={kappa}, p={p}")));
    }
    let target = h.powf(1.0 + kappa);
    let pf = p as f64;
    let tails = |r: f64| {
        radial_tail(1.0, tail.c0 * dt, tail.alpha_tail, pf, r)
            .max(radial_tail(mixture.amplitude, mixture.decay, 2.0, pf, r))
    };
    let lo0 = tail.r_tail;
    if tails(lo0) <= target {
        return Ok(lo0);
    }
    let mut lo = lo0;
    let mut hi = lo0.max(1.0);
    while tails(hi) > target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NonFinite("eta' bracket diverged".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tails(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi {
            break;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn exponent_vanishes_at_origin() {
        for p in [Kou2DParams::synthetic(), Kou2DParams::calibrated()] {
            let psi = p.char_exponent([c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
            assert!(psi.norm() < 1e-15);
            assert_relative_eq!(p.cf([0.0, 0.0]).re, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn moment_identities() {
        for p in [Kou2DParams::synthetic(), Kou2DParams::calibrated()] {
            let psi = p.char_exponent([c(0.0, -1.0), c(0.0, 0.0)]).unwrap();
            assert!((psi.re - p.mu_s).abs() < 1e-12 && psi.im.abs() < 1e-12);
            assert!((p.exp_moment(Selector::S).unwrap() - (p.mu_s * p.dt).exp()).abs() < 1e-12);
            assert!((p.exp_moment(Selector::B).unwrap() - (p.mu_b * p.dt).exp()).abs() < 1e-12);
            assert_eq!(p.exp_moment(Selector::None).unwrap(), 1.0);
        }
        let syn = Kou2DParams::synthetic();
        assert!((syn.exp_moment(Selector::S).unwrap() - 0.08f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn pole_is_reported() {
        let p = Kou2DParams::synthetic();
        // phi_s has a pole at z = -i eta1_s
        let err = p.char_exponent([c(0.0, -p.eta1_s), c(0.0, 0.0)]).unwrap_err();
        assert!(matches!(err, Error::Pole(_)));
    }

    #[test]
    fn hermitian_symmetry_and_unit_bound() {
        let p = Kou2DParams::synthetic();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let eta = [rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0)];
            let g = p.cf(eta);
            let gm = p.cf([-eta[0], -eta[1]]);
            assert!((g - gm.conj()).norm() < 1e-15);
            assert!(g.norm() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn random_parameter_sets_normalise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut p = Kou2DParams::synthetic();
            p.mu_s = rng.gen_range(-0.2..0.2);
            p.sigma_s = rng.gen_range(0.01..0.5);
            p.sigma_b = rng.gen_range(0.01..0.5);
            p.rho = rng.gen_range(-0.9..0.9);
            p.lambda_s = rng.gen_range(0.0..2.0);
            p.eta1_s = rng.gen_range(1.5..40.0);
            p.p_cb = rng.gen_range(0.0..1.0);
            p.dt = rng.gen_range(0.1..2.0);
            p.validate().unwrap();
            assert!((p.cf([0.0, 0.0]) - 1.0).norm() < 1e-15);
            assert!((p.exp_moment(Selector::S).unwrap() - (p.mu_s * p.dt).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn validation_rejects_bad_params() {
        let mut p = Kou2DParams::synthetic();
        p.eta1_s = 0.9;
        assert!(p.validate().is_err());
        let mut p = Kou2DParams::synthetic();
        p.rho = 1.0;
        assert!(p.validate().is_err());
        let mut p = Kou2DParams::synthetic();
        p.p_b = 1.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn tail_bound_holds_on_ray_sweep() {
        for p in [Kou2DParams::synthetic(), Kou2DParams::calibrated()] {
            let t = p.tail_spec();
            assert_eq!(t.alpha_tail, 2.0);
            assert_relative_eq!(t.c0, 0.5 * min_eigenvalue(p.diffusion_cov()));
            for ray in 0..16 {
                let ang = ray as f64 * std::f64::consts::PI / 8.0 + 0.1;
                for k in 0..400 {
                    let r = t.r_tail + k as f64 * 0.5;
                    let g = p.cf([r * ang.cos(), r * ang.sin()]).norm();
                    assert!(g <= (-t.c0 * p.dt * r * r).exp() * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn eta_prime_defaults_to_r_tail_when_already_tiny() {
        let tail = TailSpec { c0: 10.0, alpha_tail: 2.0, r_tail: 50.0 };
        let mix = MixtureTail { amplitude: 1.0, decay: 10.0 };
        assert_eq!(choose_eta_prime(&tail, 1.0, &mix, 0.999, 1.0, 2).unwrap(), 50.0);
    }

    #[test]
    fn eta_prime_increases_as_tolerance_shrinks() {
        let tail = Kou2DParams::calibrated().tail_spec();
        let mix = MixtureTail::from_bounds(0.03, 0.95);
        let mut prev = 0.0;
        for h in [0.5, 0.1, 0.01, 1e-3, 1e-4] {
            let e = choose_eta_prime(&tail, 1.0, &mix, h, 0.5, 2).unwrap();
            assert!(e > prev, "h = {h}: {e} <= {prev}");
            prev = e;
        }
    }

    #[test]
    fn eta_prime_matches_closed_form_tail() {
        // For α = 2 the radial tail is (π / (p c)) exp(−p c r²); bisection must land on its root.
        let tail = TailSpec { c0: 1e-3, alpha_tail: 2.0, r_tail: 0.0 };
        let mix = MixtureTail { amplitude: 1.0, decay: 1.0 };
        let (h, kappa, p) = (0.01f64, 1.0, 2u32);
        let e = choose_eta_prime(&tail, 1.0, &mix, h, kappa, p).unwrap();
        let rate = 2.0 * 1e-3;
        let expect = ((std::f64::consts::PI / rate / h.powi(2)).ln() / rate).sqrt();
        assert_relative_eq!(e, expect, max_relative = 1e-6);
    }

    #[test]
    fn eta_prime_rejects_bad_constants() {
        let tail = TailSpec { c0: 0.0, alpha_tail: 2.0, r_tail: 0.0 };
        let mix = MixtureTail { amplitude: 1.0, decay: 1.0 };
        assert!(choose_eta_prime(&tail, 1.0, &mix, 0.1, 1.0, 2).is_err());
        let tail = TailSpec { c0: 1.0, alpha_tail: 2.0, r_tail: 0.0 };
        assert!(choose_eta_prime(&tail, 1.0, &mix, 1.5, 1.0, 2).is_err());
    }

    #[test]
    fn fd_moments_match_analytic_drift() {
        let p = Kou2DParams::calibrated();
        let (mean, cov) = p.increment_moments();
        // analytic mean: μ* + λ E[J] terms
        let ej = |pp: f64, e1: f64, e2: f64| pp / e1 - (1.0 - pp) / e2;
        let [ms, mb] = p.compensated_drifts();
        let mean_s = ms + p.lambda_s * ej(p.p_s, p.eta1_s, p.eta2_s) + p.lambda_c * ej(p.p_cs, p.eta1_cs, p.eta2_cs);
        let mean_b = mb + p.lambda_b * ej(p.p_b, p.eta1_b, p.eta2_b) + p.lambda_c * ej(p.p_cb, p.eta1_cb, p.eta2_cb);
        assert_relative_eq!(mean[0], mean_s, max_relative = 1e-6);
        assert_relative_eq!(mean[1], mean_b, max_relative = 1e-6);
        let ej2 = |pp: f64, e1: f64, e2: f64| 2.0 * pp / (e1 * e1) + 2.0 * (1.0 - pp) / (e2 * e2);
        let var_s = p.sigma_s.powi(2) + p.lambda_s * ej2(p.p_s, p.eta1_s, p.eta2_s) + p.lambda_c * ej2(p.p_cs, p.eta1_cs, p.eta2_cs);
        assert_relative_eq!(cov[0][0], var_s, max_relative = 1e-5);
        let cov_sb = p.rho * p.sigma_s * p.sigma_b
            + p.lambda_c * ej(p.p_cs, p.eta1_cs, p.eta2_cs) * ej(p.p_cb, p.eta1_cb, p.eta2_cb);
        assert_relative_eq!(cov[0][1], cov_sb, max_relative = 1e-4);
    }
}
