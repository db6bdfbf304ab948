//! Two-stage minibatch training of the mixture kernel.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::loss::{loss, loss_and_grad, Rescale};
use super::mixture::{MixtureBounds, MixtureParams, Reparam, COORDS_PER_COMPONENT};
use super::optim::{Adam, AdamSettings};
use super::sample::{sample_frequencies, FreqSample};
use crate::charfn::CharFn;
use crate::error::{config_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Number of mixture components `N`.
    pub components: usize,
    /// Frequency sample count `P`.
    pub samples: usize,
    pub epochs1: usize,
    pub epochs2: usize,
    /// Stage-1 (AMSGrad) learning rate.
    pub lr1: f64,
    /// Stage-2 (Adam) learning rate.
    pub lr2: f64,
    /// When set, stage 2 decays geometrically from `lr2` to this value.
    pub lr2_final: Option<f64>,
    pub batch: usize,
    /// Half-width `η′` of the truncation box.
    pub eta_prime: f64,
    /// Affine Re/Im target rescaling.
    pub rescale: bool,
    /// Fraction of frequency nodes placed in the core box.
    pub f_core: f64,
    pub seed: u64,
    pub bounds: MixtureBounds,
    /// Relative spread of the initial volatilities around the marginal
    /// standard deviation (0 puts every component at the same σ).
    pub sigma_spread: f64,
    /// Standard deviation of the initial mean jitter, in units of the
    /// marginal standard deviation.
    pub mean_jitter: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            components: 60,
            samples: 1_000_000,
            epochs1: 20,
            epochs2: 100,
            lr1: 0.04,
            lr2: 0.00025,
            lr2_final: None,
            batch: 1024,
            eta_prime: 80.0,
            rescale: true,
            f_core: 0.7,
            seed: 7,
            bounds: MixtureBounds::default(),
            sigma_spread: 0.0,
            mean_jitter: 0.1,
        }
    }
}

impl TrainConfig {
    /// Reduced budget that finishes in a few minutes on one core.
    pub fn desk() -> Self {
        Self { samples: 200_000, epochs1: 10, epochs2: 40, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 || self.samples < 4 || self.batch == 0 {
            return Err(config_err("components, samples (>= 4) and batch must be positive"));
        }
        if self.epochs1 + self.epochs2 == 0 {
            return Err(config_err("at least one training epoch is required"));
        }
        for (name, v) in [("lr1", self.lr1), ("lr2", self.lr2), ("eta_prime", self.eta_prime)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(f) = self.lr2_final {
            if !(f > 0.0 && f.is_finite()) {
                return Err(config_err("lr2_final must be positive"));
            }
        }
        if !(self.sigma_spread >= 0.0 && self.mean_jitter >= 0.0) {
            return Err(config_err("sigma_spread and mean_jitter must be nonnegative"));
        }
        self.bounds.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub theta: MixtureParams,
    pub coords: Vec<f64>,
    pub rescale: Rescale,
    /// Full-sample loss after initialisation and after every epoch.
    pub history: Vec<f64>,
    pub final_loss: f64,
    pub steps: u64,
    pub spacing_constants: (f64, f64),
}

/// Initial mixture: means jittered around the increment mean, volatilities at
/// the marginal standard deviations, uniform weights.
pub fn initial_theta(target: &dyn CharFn, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> MixtureParams {
    let b = cfg.bounds;
    let (mean, cov) = target.increment_moments();
    let sd = [cov[0][0].max(0.0).sqrt(), cov[1][1].max(0.0).sqrt()];
    let corr = if sd[0] > 0.0 && sd[1] > 0.0 { cov[0][1] / (sd[0] * sd[1]) } else { 0.0 };
    let inner = |lo: f64, hi: f64, x: f64| {
        let pad = 1e-6 * (hi - lo);
        x.clamp(lo + pad, hi - pad)
    };
    let std = Normal::new(0.0, 1.0).unwrap();
    let n = cfg.components;
    let components = (0..n)
        .map(|i| {
            // log-spaced multipliers in [e^{-spread}, e^{spread}]
            let f = if n > 1 { 2.0 * i as f64 / (n - 1) as f64 - 1.0 } else { 0.0 };
            let mult = (cfg.sigma_spread * f).exp();
            let mut mu = [0.0; 2];
            for a in 0..2 {
                let m = mean[a] + cfg.mean_jitter * sd[a] * std.sample(rng);
                mu[a] = inner(-b.mu_bar, b.mu_bar, m);
            }
            super::mixture::Component {
                beta: 1.0 / n as f64,
                mu,
                sigma_s: inner(b.sigma_min, b.sigma_max, sd[0] * mult),
                sigma_b: inner(b.sigma_min, b.sigma_max, sd[1] * mult),
                rho: inner(-b.rho_bar, b.rho_bar, corr),
            }
        })
        .collect();
    MixtureParams { components, bounds: b, dt: target.dt() }
}

/// Fit a mixture to `target` on a freshly drawn frequency sample.
pub fn train(target: &dyn CharFn, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let sample = sample_frequencies(target, cfg.eta_prime, cfg.samples, cfg.f_core)?;
    train_on(target, &sample, cfg)
}

/// Fit on a prepared sample; useful when several runs share one sample.
pub fn train_on(target: &dyn CharFn, sample: &FreqSample, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let reparam = Reparam::new(cfg.bounds);
    let dt = target.dt();
    let init = initial_theta(target, cfg, &mut rng);
    let mut coords = reparam.to_coords(&init);
    let rescale = Rescale::from_sample(sample, cfg.rescale);

    let mut order: Vec<usize> = (0..sample.len()).collect();
    let mut history = vec![loss(&reparam.to_theta(&coords, dt), sample, &rescale)];
    let batches = sample.len().div_ceil(cfg.batch);
    let total2 = (cfg.epochs2 * batches).max(1) as f64;
    let mut iteration = 0usize;
    let mut steps = 0u64;

    for stage in 0..2 {
        let (epochs, settings) = if stage == 0 {
            (cfg.epochs1, AdamSettings::amsgrad(cfg.lr1))
        } else {
            (cfg.epochs2, AdamSettings::adam(cfg.lr2))
        };
        let mut opt = Adam::new(settings, coords.len());
        let mut local = 0usize;
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch) {
                let (l, g) = loss_and_grad(&coords, &reparam, dt, sample, Some(chunk), &rescale);
                if !l.is_finite() || g.iter().any(|v| !v.is_finite()) {
                    let component = g.iter().position(|v| !v.is_finite()).unwrap_or(0) / COORDS_PER_COMPONENT;
                    return Err(Error::TrainingDiverged {
                        iteration,
                        component,
                        detail: format!("minibatch loss {l}"),
                    });
                }
                let lr = match (stage, cfg.lr2_final) {
                    (1, Some(fin)) => cfg.lr2 * (fin / cfg.lr2).powf(local as f64 / total2),
                    _ => settings.lr,
                };
                opt.step_lr(&mut coords, &g, lr);
                iteration += 1;
                local += 1;
            }
            let full = loss(&reparam.to_theta(&coords, dt), sample, &rescale);
            if !full.is_finite() {
                return Err(Error::TrainingDiverged { iteration, component: 0, detail: format!("epoch loss {full}") });
            }
            log::debug!("stage {} epoch loss {full:.6e}", stage + 1);
            history.push(full);
        }
        steps += opt.steps();
    }
    let theta = reparam.to_theta(&coords, dt);
    theta.validate()?;
    let final_loss = *history.last().unwrap();
    Ok(TrainReport {
        theta,
        coords,
        rescale,
        history,
        final_loss,
        steps,
        spacing_constants: sample.spacing_constants(),
    })
}
