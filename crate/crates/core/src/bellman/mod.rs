//! Monotone backward recursion for the lifted mean-CVaR problem.

pub mod fft2;
pub mod interp;
pub mod kernel;
pub mod solve;
pub mod step;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

pub use interp::{bilinear, locate, Cell};
pub use kernel::KernelTable;
pub use solve::{outer_search, solve_fixed_w, BoundaryMode, FixedWSolution, OuterResult, PolicyTable, SolveOptions};
pub use step::{intervene, propagate_boundary, propagate_interior};

/// Reward `W + γ (w + min(W − w, 0)/α)` with `W = e^s + e^b`.
pub fn terminal_payoff(s: f64, b: f64, w: f64, gamma: f64, alpha: f64) -> f64 {
    payoff_wealth(s.exp() + b.exp(), w, gamma, alpha)
}

#[inline]
pub fn payoff_wealth(wealth: f64, w: f64, gamma: f64, alpha: f64) -> f64 {
    wealth + gamma * (w + (wealth - w).min(0.0) / alpha)
}

/// Post-decision log state after contributing `q` and investing a fraction `u`
/// of total wealth in the first asset.
pub fn state_update(s: f64, b: f64, q: f64, u: f64, w_floor_log: f64) -> (f64, f64) {
    let ln_w = (s.exp() + b.exp() + q).ln();
    state_update_log(ln_w, u.ln(), (1.0 - u).ln(), w_floor_log)
}

/// [`state_update`] from precomputed logarithms.
#[inline]
pub fn state_update_log(ln_wealth: f64, ln_u: f64, ln_1mu: f64, w_floor_log: f64) -> (f64, f64) {
    ((ln_u + ln_wealth).max(w_floor_log), (ln_1mu + ln_wealth).max(w_floor_log))
}

/// Horizon, contributions and risk preferences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemSpec {
    /// Scalarisation weight on CVaR.
    pub gamma: f64,
    /// CVaR level.
    pub alpha: f64,
    /// Horizon in years.
    pub horizon: f64,
    pub periods: usize,
    /// Contribution at each decision time `t_0 … t_{M−1}` (currency).
    pub contributions: Vec<f64>,
    /// Initial wealth, split evenly between the two assets.
    pub initial_wealth: f64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self::dc_reference()
    }
}

impl ProblemSpec {
    /// Thirty annual contributions of 20,000 from zero initial wealth,
    /// `γ = 10`, `α = 5%`.
    pub fn dc_reference() -> Self {
        Self { gamma: 10.0, alpha: 0.05, horizon: 30.0, periods: 30, contributions: vec![20_000.0; 30], initial_wealth: 0.0 }
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.periods.max(1) as f64
    }

    pub fn validate(&self, kernel_dt: f64) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(config_err("gamma must be finite and nonnegative"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(config_err("alpha must lie in (0, 1)"));
        }
        if self.contributions.len() != self.periods {
            return Err(config_err(format!(
                "expected {} contributions, got {}",
                self.periods,
                self.contributions.len()
            )));
        }
        if self.contributions.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
            return Err(config_err("contributions must be finite and nonnegative"));
        }
        if !(self.initial_wealth >= 0.0 && self.initial_wealth.is_finite()) {
            return Err(config_err("initial wealth must be finite and nonnegative"));
        }
        if self.periods > 0 && (self.dt() - kernel_dt).abs() > 1e-12 * kernel_dt.max(1.0) {
            return Err(config_err(format!("period length {} does not match kernel dt {kernel_dt}", self.dt())));
        }
        Ok(())
    }

    /// Initial log state; zero wealth sits at the floor in both assets.
    pub fn initial_state(&self, w_floor_log: f64) -> [f64; 2] {
        if self.initial_wealth > 0.0 {
            let h = (0.5 * self.initial_wealth).ln().max(w_floor_log);
            [h, h]
        } else {
            [w_floor_log, w_floor_log]
        }
    }
}
