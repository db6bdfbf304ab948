//! Forward Monte Carlo under a stored policy.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bellman::{state_update_log, PolicyTable, ProblemSpec};
use crate::charfn::Kou2DParams;
use crate::error::{config_err, Result};
use crate::lattice::Lattice;

/// Two-sided 99% normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Paths per parallel work item.
    pub batch: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { n_paths: 100_000, seed: 2024, alpha: 0.05, batch: 4096 }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 100 {
            return Err(config_err("n_paths must be at least 100"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(config_err("alpha must lie in (0, 1)"));
        }
        if self.batch == 0 {
            return Err(config_err("batch must be positive"));
        }
        Ok(())
    }
}

/// Random number stream for path `i`; independent of the thread layout.
pub fn path_rng(seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

struct DoubleExp {
    p: f64,
    up: Exp<f64>,
    down: Exp<f64>,
}

impl DoubleExp {
    fn new(p: f64, eta1: f64, eta2: f64) -> Result<Self> {
        let mk = |e: f64| Exp::new(e).map_err(|_| config_err(format!("invalid jump rate {e}")));
        Ok(Self { p, up: mk(eta1)?, down: mk(eta2)? })
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if rng.gen::<f64>() < self.p {
            self.up.sample(rng)
        } else {
            -self.down.sample(rng)
        }
    }
}

fn poisson(mean: f64) -> Result<Option<Poisson<f64>>> {
    if mean <= 0.0 {
        return Ok(None);
    }
    Poisson::new(mean).map(Some).map_err(|e| config_err(format!("jump intensity: {e}")))
}

fn count<R: Rng + ?Sized>(d: &Option<Poisson<f64>>, rng: &mut R) -> u64 {
    d.as_ref().map_or(0, |d| d.sample(rng) as u64)
}

/// Exact one-period sampler for the coupled Kou increment.
pub struct IncrementSampler {
    drift: [f64; 2],
    chol: [f64; 3],
    n_s: Option<Poisson<f64>>,
    n_b: Option<Poisson<f64>>,
    n_c: Option<Poisson<f64>>,
    j_s: DoubleExp,
    j_b: DoubleExp,
    j_cs: DoubleExp,
    j_cb: DoubleExp,
}

impl IncrementSampler {
    pub fn new(p: &Kou2DParams) -> Result<Self> {
        let dt = p.dt;
        let [ms, mb] = p.compensated_drifts();
        if !(ms.is_finite() && mb.is_finite() && dt > 0.0) {
            return Err(config_err("increment law has no finite drift"));
        }
        let (a, c) = (p.sigma_s * dt.sqrt(), p.sigma_b * dt.sqrt());
        let chol = [a, p.rho * c, c * (1.0 - p.rho * p.rho).max(0.0).sqrt()];
        Ok(Self {
            drift: [ms * dt, mb * dt],
            chol,
            n_s: poisson(p.lambda_s * dt)?,
            n_b: poisson(p.lambda_b * dt)?,
            n_c: poisson(p.lambda_c * dt)?,
            j_s: DoubleExp::new(p.p_s, p.eta1_s, p.eta2_s)?,
            j_b: DoubleExp::new(p.p_b, p.eta1_b, p.eta2_b)?,
            j_cs: DoubleExp::new(p.p_cs, p.eta1_cs, p.eta2_cs)?,
            j_cb: DoubleExp::new(p.p_cb, p.eta1_cb, p.eta2_cb)?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let mut ds = self.drift[0] + self.chol[0] * z1;
        let mut db = self.drift[1] + self.chol[1] * z1 + self.chol[2] * z2;
        for _ in 0..count(&self.n_s, rng) {
            ds += self.j_s.sample(rng);
        }
        for _ in 0..count(&self.n_b, rng) {
            db += self.j_b.sample(rng);
        }
        for _ in 0..count(&self.n_c, rng) {
            ds += self.j_cs.sample(rng);
            db += self.j_cb.sample(rng);
        }
        (ds, db)
    }
}

/// One draw of `(ΔS, ΔB)` over `params.dt`.
pub fn sample_increment<R: Rng + ?Sized>(params: &Kou2DParams, rng: &mut R) -> Result<(f64, f64)> {
    Ok(IncrementSampler::new(params)?.sample(rng))
}

#[derive(Debug, Clone)]
pub struct Rollout {
    /// Terminal wealth per path, in path order.
    pub terminal: Vec<f64>,
    /// Fraction of paths whose state rose above the padded rectangle at some time.
    pub escape_fraction: f64,
    /// Policy lookups that were clamped to the interior node rectangle.
    pub clamped_lookups: u64,
}

/// Simulates `sim.n_paths` paths forward under `policy`. The first decision
/// uses the stored initial control; later ones interpolate the policy layer.
pub fn rollout(
    policy: &PolicyTable,
    spec: &ProblemSpec,
    lat: &Lattice,
    params: &Kou2DParams,
    sim: &SimConfig,
) -> Result<Rollout> {
    sim.validate()?;
    if policy.layers.len() != spec.periods {
        return Err(config_err(format!(
            "policy has {} layers but the problem has {} periods",
            policy.layers.len(),
            spec.periods
        )));
    }
    if let Some(m) = policy.layers.iter().position(|l| l.len() != policy.shape.0 * policy.shape.1) {
        return Err(config_err(format!("policy layer {m} is incomplete")));
    }
    if (params.dt - spec.dt()).abs() > 1e-12 {
        return Err(config_err("increment dt does not match the period length"));
    }
    let sampler = IncrementSampler::new(params)?;
    let floor = lat.config.w_floor_log;
    let init = spec.initial_state(floor);
    // Below the padded rectangle a holding is worth less than e^{pad_lo}, and
    // the floor state always lies there, so only upward exits count.
    let inside = |s: f64, b: f64| s <= lat.s.pad_hi && b <= lat.b.pad_hi;

    let path = |i: usize| -> (f64, bool, u64) {
        let mut rng = path_rng(sim.seed, i as u64);
        let [mut s, mut b] = init;
        let mut escaped = false;
        let mut clamped = 0u64;
        for m in 0..spec.periods {
            let u = if m == 0 {
                policy.u0_value()
            } else {
                let (u, c) = policy.lookup(lat, m, s, b);
                clamped += c as u64;
                u
            };
            let ln_w = (s.exp() + b.exp() + spec.contributions[m]).ln();
            (s, b) = state_update_log(ln_w, u.ln(), (1.0 - u).ln(), floor);
            let (ds, db) = sampler.sample(&mut rng);
            s += ds;
            b += db;
            escaped |= !inside(s, b);
        }
        (s.exp() + b.exp(), escaped, clamped)
    };

    let chunks: Vec<(Vec<f64>, usize, u64)> = (0..sim.n_paths)
        .collect::<Vec<_>>()
        .par_chunks(sim.batch)
        .map(|idx| {
            let mut out = Vec::with_capacity(idx.len());
            let (mut esc, mut cl) = (0usize, 0u64);
            for &i in idx {
                let (w, e, c) = path(i);
                out.push(w);
                esc += e as usize;
                cl += c;
            }
            (out, esc, cl)
        })
        .collect();
    let mut terminal = Vec::with_capacity(sim.n_paths);
    let (mut esc, mut cl) = (0usize, 0u64);
    for (v, e, c) in chunks {
        terminal.extend(v);
        esc += e;
        cl += c;
    }
    Ok(Rollout { terminal, escape_fraction: esc as f64 / sim.n_paths as f64, clamped_lookups: cl })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleStats {
    pub n: usize,
    pub mean: f64,
    /// Mean of the worst `⌈α n⌉` outcomes.
    pub cvar: f64,
    pub median: f64,
    pub std_dev: f64,
    pub ci99_halfwidth: f64,
}

/// Summary statistics; larger outcomes are better.
pub fn estimate_stats(samples: &[f64], alpha: f64) -> Result<SampleStats> {
    let n = samples.len();
    if n == 0 {
        return Err(config_err("no samples"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(config_err("alpha must lie in (0, 1]"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(crate::Error::NonFinite("terminal wealth sample".into()));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    let sd = var.sqrt();

    let mut buf = samples.to_vec();
    let tail = ((alpha * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let tail = tail.min(n);
    if tail < n {
        buf.select_nth_unstable_by(tail, f64::total_cmp);
    }
    let cvar = buf[..tail].iter().sum::<f64>() / tail as f64;

    let median = if n % 2 == 1 {
        *buf.select_nth_unstable_by(n / 2, f64::total_cmp).1
    } else {
        let (lo, hi, _) = buf.select_nth_unstable_by(n / 2, f64::total_cmp);
        let hi = *hi;
        let lo = lo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    };
    Ok(SampleStats { n, mean, cvar, median, std_dev: sd, ci99_halfwidth: Z99 * sd / (n as f64).sqrt() })
}

/// `w + mean(min(W − w, 0))/α`, whose supremum over `w` is the lower-tail CVaR.
pub fn cvar_dual_objective(samples: &[f64], alpha: f64, w: f64) -> f64 {
    w + samples.iter().map(|x| (x - w).min(0.0)).sum::<f64>() / (alpha * samples.len() as f64)
}

/// Runs `rollout` and summarises it in one step.
pub fn simulate(
    policy: &PolicyTable,
    spec: &ProblemSpec,
    lat: &Lattice,
    params: &Kou2DParams,
    sim: &SimConfig,
) -> Result<(Rollout, SampleStats)> {
    let r = rollout(policy, spec, lat, params, sim)?;
    let s = estimate_stats(&r.terminal, sim.alpha)?;
    Ok((r, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples() {
        let s = estimate_stats(&[7.5; 333], 0.05).unwrap();
        assert_eq!((s.mean, s.median, s.cvar), (7.5, 7.5, 7.5));
        assert_eq!(s.ci99_halfwidth, 0.0);
    }

    #[test]
    fn one_to_hundred() {
        let v: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        let s = estimate_stats(&v, 0.05).unwrap();
        assert!((s.cvar - 3.0).abs() < 1e-12);
        assert!((s.median - 50.5).abs() < 1e-12);
        assert!((s.mean - 50.5).abs() < 1e-12);
        let s = estimate_stats(&v[..99], 0.05).unwrap();
        assert_eq!(s.median, 51.0);
    }

    #[test]
    fn cvar_matches_dual_supremum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &alpha in &[0.01, 0.05, 0.2] {
            let v: Vec<f64> = (0..2000).map(|_| rng.gen_range(0.0..1.0f64).powi(3) * 1000.0).collect();
            let s = estimate_stats(&v, alpha).unwrap();
            // the dual objective is piecewise linear with kinks at the samples
            let best = v.iter().map(|&w| cvar_dual_objective(&v, alpha, w)).fold(f64::NEG_INFINITY, f64::max);
            assert!((best - s.cvar).abs() < 1e-9 * s.cvar.abs().max(1.0), "{alpha}: {best} vs {}", s.cvar);
            let grid_best = (0..=4000)
                .map(|t| cvar_dual_objective(&v, alpha, t as f64 * 0.25))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(grid_best <= s.cvar + 1e-9 && s.cvar - grid_best < 0.25);
        }
    }

    #[test]
    fn degenerate_law_is_deterministic_drift() {
        let p = Kou2DParams {
            sigma_s: 0.0,
            sigma_b: 0.0,
            lambda_s: 0.0,
            lambda_b: 0.0,
            lambda_c: 0.0,
            ..Kou2DParams::synthetic()
        };
        let mut rng = path_rng(1, 0);
        for _ in 0..10 {
            let (ds, db) = sample_increment(&p, &mut rng).unwrap();
            assert!((ds - p.mu_s * p.dt).abs() < 1e-15);
            assert!((db - p.mu_b * p.dt).abs() < 1e-15);
        }
    }

    #[test]
    fn streams_are_independent_of_order() {
        let p = Kou2DParams::calibrated();
        let s = IncrementSampler::new(&p).unwrap();
        let a: Vec<_> = (0..5).map(|i| s.sample(&mut path_rng(9, i))).collect();
        let b: Vec<_> = (0..5).rev().map(|i| s.sample(&mut path_rng(9, i))).collect();
        assert_eq!(a, b.into_iter().rev().collect::<Vec<_>>());
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn config_validation() {
        SimConfig::default().validate().unwrap();
        assert!(SimConfig { n_paths: 99, ..Default::default() }.validate().is_err());
        assert!(estimate_stats(&[], 0.05).is_err());
    }
}
