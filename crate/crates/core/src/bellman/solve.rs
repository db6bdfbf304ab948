//! Fixed-threshold backward sweeps and the outer threshold search.

use serde::{Deserialize, Serialize};

use super::interp::Cell;
use super::kernel::KernelTable;
use super::step::{control_cell, intervene_batch, propagate_batch, sup_norms, ControlLogs, WorkPool};
use super::{payoff_wealth, ProblemSpec};
use crate::error::{Error, Result};
use crate::lattice::Lattice;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// Multiply by the exponential moment of the selected asset(s).
    Asymptotic,
    /// Carry boundary values unchanged.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub boundary: BoundaryMode,
    /// Threshold nodes swept together in one batch.
    pub batch: usize,
    pub check_stability: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { boundary: BoundaryMode::Asymptotic, batch: 32, check_stability: true }
    }
}

impl SolveOptions {
    pub fn factors(&self, kernel: &KernelTable) -> [f64; 4] {
        match self.boundary {
            BoundaryMode::Asymptotic => kernel.factors,
            BoundaryMode::Constant => [1.0; 4],
        }
    }
}

/// Optimal control indices for one threshold: `layers[m]` covers the
/// interior nodes row-major; `u0` is the decision at the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    pub w: f64,
    pub u_nodes: Vec<f64>,
    pub u0: u16,
    /// Interior node counts along `s` and `b`.
    pub shape: (usize, usize),
    /// Local lattice index of the first interior node along `s` and `b`.
    pub origin: (usize, usize),
    pub layers: Vec<Vec<u16>>,
}

impl PolicyTable {
    pub fn u(&self, m: usize, ii: usize, jj: usize) -> f64 {
        self.u_nodes[self.layers[m][ii * self.shape.1 + jj] as usize]
    }

    pub fn u0_value(&self) -> f64 {
        self.u_nodes[self.u0 as usize]
    }

    /// Control at log state `(s, b)` and period `m`: bilinear in the interior
    /// node values, with the state clamped to the interior node rectangle.
    /// Also reports whether clamping occurred.
    pub fn lookup(&self, lat: &Lattice, m: usize, s: f64, b: f64) -> (f64, bool) {
        let axis = |x: f64, nodes: &[f64], first: usize, count: usize, delta: f64| {
            let (lo, hi) = (nodes[first], nodes[first + count - 1]);
            let clamped = !(x >= lo && x <= hi);
            let xc = if x.is_nan() { lo } else { x.clamp(lo, hi) };
            if count == 1 {
                return (0usize, 0.0, clamped);
            }
            let pos = (xc - lo) / delta;
            let i = (pos.floor() as usize).min(count - 2);
            (i, (pos - i as f64).clamp(0.0, 1.0), clamped)
        };
        let (i, ts, cs) = axis(s, &lat.s.nodes, self.origin.0, self.shape.0, lat.s.delta);
        let (j, tb, cb) = axis(b, &lat.b.nodes, self.origin.1, self.shape.1, lat.b.delta);
        let cell = Cell { i, j, ts, tb, clamped: cs || cb };
        let i1 = (i + 1).min(self.shape.0 - 1);
        let j1 = (j + 1).min(self.shape.1 - 1);
        let u = cell.eval(self.u(m, i, j), self.u(m, i, j1), self.u(m, i1, j), self.u(m, i1, j1));
        (u.clamp(0.0, 1.0), cell.clamped)
    }
}

#[derive(Debug, Clone)]
pub struct FixedWSolution {
    pub w: f64,
    /// Value at the initial state.
    pub value: f64,
    pub u0: u16,
    /// `V^{0,−}` on the full lattice (only when captured).
    pub slice0: Option<Vec<f64>>,
    /// `E[W_T]` under the computed policy (only when captured).
    pub expected_wealth: Option<f64>,
    pub policy: Option<PolicyTable>,
    pub clamped: u64,
    /// Largest `‖V^{m,−}‖ / bound` seen over all steps.
    pub envelope_ratio: f64,
}

/// Backward sweep for a batch of thresholds. With `capture`, every value
/// slice carries a companion expectation slice and the policy is recorded.
fn solve_batch(
    ws: &[f64],
    spec: &ProblemSpec,
    lat: &Lattice,
    kernel: &KernelTable,
    opts: &SolveOptions,
    capture: bool,
) -> Result<Vec<FixedWSolution>> {
    let n_val = ws.len();
    let k = if capture { 2 * n_val } else { n_val };
    let floor = lat.config.w_floor_log;
    let init = spec.initial_state(floor);
    let m_total = spec.periods;
    let (g, a) = (spec.gamma, spec.alpha);

    if m_total == 0 {
        let wealth = init[0].exp() + init[1].exp();
        return Ok(ws
            .iter()
            .map(|&w| FixedWSolution {
                w,
                value: payoff_wealth(wealth, w, g, a),
                u0: 0,
                slice0: None,
                expected_wealth: capture.then_some(wealth),
                policy: None,
                clamped: 0,
                envelope_ratio: 0.0,
            })
            .collect());
    }

    let nodes = lat.len();
    let nb = lat.nb();
    let mut v = vec![0.0; nodes * k];
    for i in 0..lat.ns() {
        for j in 0..nb {
            let wealth = lat.s.nodes[i].exp() + lat.b.nodes[j].exp();
            let base = (i * nb + j) * k;
            for (c, &w) in ws.iter().enumerate() {
                v[base + c] = payoff_wealth(wealth, w, g, a);
                if capture {
                    v[base + n_val + c] = wealth;
                }
            }
        }
    }
    let norm_terminal = sup_norms(&v, k);
    let factors = opts.factors(kernel);
    let growth = kernel.growth_exponent(&factors);
    let logs = ControlLogs::new(&lat.u_nodes);
    let pool = WorkPool::new();
    let mut vp = vec![0.0; nodes * k];
    let mut layers: Vec<Vec<u16>> = if capture { vec![Vec::new(); m_total] } else { Vec::new() };
    let mut clamped = 0u64;
    let mut ratio = vec![0.0f64; n_val];

    for m in (0..m_total).rev() {
        propagate_batch(lat, kernel, &factors, &v, &mut vp, k, &pool)?;
        let mut pol = if capture { Some(vec![0u16; lat.interior_count() * n_val]) } else { None };
        let st = intervene_batch(lat, &logs, spec.contributions[m], floor, &vp, &mut v, k, n_val, pol.as_deref_mut());
        clamped += st.clamped;
        if let Some(p) = pol {
            layers[m] = p;
        }
        let norms = sup_norms(&v, k);
        for c in 0..n_val {
            if !norms[c].is_finite() {
                return Err(Error::NonFinite(format!("value slice at m={m}, w={}", ws[c])));
            }
            let bound = ((m_total - m) as f64 * growth).exp() * norm_terminal[c];
            if bound > 0.0 {
                ratio[c] = ratio[c].max(norms[c] / bound);
            }
            if opts.check_stability && norms[c] > bound * (1.0 + 1e-12) {
                return Err(Error::StabilityViolation { m, w: ws[c], norm: norms[c], bound });
            }
        }
    }

    // decision at the initial state from V^{0,+}
    let ln_w = (init[0].exp() + init[1].exp() + spec.contributions[0]).ln();
    let mut out = Vec::with_capacity(n_val);
    for (c, &w) in ws.iter().enumerate() {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0usize;
        for iota in 0..logs.u.len() {
            let cell = control_cell(lat, &logs, ln_w, iota, floor);
            clamped += cell.clamped as u64;
            let val = eval(&cell, &vp, nb, k, c);
            if val > best {
                best = val;
                arg = iota;
            }
        }
        let (slice0, expected_wealth, policy) = if capture {
            let cell = control_cell(lat, &logs, ln_w, arg, floor);
            let slice: Vec<f64> = (0..nodes).map(|n| v[n * k + c]).collect();
            let table = PolicyTable {
                w,
                u_nodes: lat.u_nodes.clone(),
                u0: arg as u16,
                shape: (lat.s.n - 1, lat.b.n - 1),
                origin: (*lat.s.interior().start(), *lat.b.interior().start()),
                layers: layers.iter().map(|l| l.iter().skip(c).step_by(n_val).copied().collect()).collect(),
            };
            (Some(slice), Some(eval(&cell, &vp, nb, k, n_val + c)), Some(table))
        } else {
            (None, None, None)
        };
        out.push(FixedWSolution {
            w,
            value: best,
            u0: arg as u16,
            slice0,
            expected_wealth,
            policy,
            clamped,
            envelope_ratio: ratio[c],
        });
    }
    Ok(out)
}

#[inline]
fn eval(cell: &Cell, v: &[f64], nb: usize, k: usize, col: usize) -> f64 {
    let n00 = cell.i * nb + cell.j;
    let n10 = n00 + nb;
    cell.eval(v[n00 * k + col], v[(n00 + 1) * k + col], v[n10 * k + col], v[(n10 + 1) * k + col])
}

/// Full recursion for one threshold, capturing `V^{0,−}`, the policy and
/// the companion expectation `E[W_T]`.
pub fn solve_fixed_w(
    w: f64,
    spec: &ProblemSpec,
    lat: &Lattice,
    kernel: &KernelTable,
    opts: &SolveOptions,
) -> Result<FixedWSolution> {
    spec.validate(spec.dt())?;
    Ok(solve_batch(&[w], spec, lat, kernel, opts, true)?.remove(0))
}

/// Values at every threshold node for the given options.
pub fn threshold_values(spec: &ProblemSpec, lat: &Lattice, kernel: &KernelTable, opts: &SolveOptions) -> Result<Vec<FixedWSolution>> {
    let mut out = Vec::with_capacity(lat.w_nodes.len());
    for chunk in lat.w_nodes.chunks(opts.batch.max(1)) {
        out.extend(solve_batch(chunk, spec, lat, kernel, opts, false)?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct OuterResult {
    pub w_star: f64,
    pub c_star: usize,
    /// Scalarised objective at `w*`.
    pub value: f64,
    /// Objective at every threshold node.
    pub values: Vec<f64>,
    pub expected_wealth: f64,
    /// `(value − E[W_T]) / γ`; NaN when `γ = 0`.
    pub cvar: f64,
    pub policy: PolicyTable,
    pub slice0: Vec<f64>,
    /// `w* < 0.9 w_max`.
    pub w_star_interior: bool,
    pub clamped: u64,
    pub envelope_ratio: f64,
    /// Largest `|F(w_{c+1}) − F(w_c)| / (γ(1 + 1/α) Δw + slack)`.
    pub lipschitz_ratio: f64,
}

/// Exhaustive scan over the threshold grid (smallest `w` on ties), then a
/// capturing rerun at `w*`.
pub fn outer_search(spec: &ProblemSpec, lat: &Lattice, kernel: &KernelTable, opts: &SolveOptions) -> Result<OuterResult> {
    spec.validate(spec.dt())?;
    let sols = threshold_values(spec, lat, kernel, opts)?;
    let values: Vec<f64> = sols.iter().map(|s| s.value).collect();
    let mut c_star = 0;
    for (c, v) in values.iter().enumerate() {
        if *v > values[c_star] {
            c_star = c;
        }
    }
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let lw = spec.gamma * (1.0 + 1.0 / spec.alpha);
    let slack = 2.0 * 1e-8 * sup;
    let mut lipschitz_ratio = 0.0f64;
    for c in 0..values.len().saturating_sub(1) {
        let dw = lat.w_nodes[c + 1] - lat.w_nodes[c];
        let allowed = lw * dw + slack;
        let diff = (values[c + 1] - values[c]).abs();
        if allowed > 0.0 {
            lipschitz_ratio = lipschitz_ratio.max(diff / allowed);
        }
        if diff > allowed {
            return Err(Error::Contract(format!(
                "threshold objective jumps by {diff:.6e} between w={} and w={} (allowed {allowed:.6e})",
                lat.w_nodes[c],
                lat.w_nodes[c + 1]
            )));
        }
    }
    let w_star = lat.w_nodes[c_star];
    let w_star_interior = w_star < 0.9 * lat.config.w_max;
    if !w_star_interior {
        log::warn!("optimal threshold {w_star} is not interior to [0, {}]", lat.config.w_max);
    }
    let best = solve_batch(&[w_star], spec, lat, kernel, opts, true)?.remove(0);
    let rel = (best.value - values[c_star]).abs() / values[c_star].abs().max(1.0);
    if rel > 1e-8 {
        return Err(Error::Contract(format!(
            "rerun at w* disagrees with the scan: {} vs {}",
            best.value, values[c_star]
        )));
    }
    let expected_wealth = best.expected_wealth.unwrap_or(f64::NAN);
    let value = values[c_star];
    let cvar = if spec.gamma > 0.0 { (value - expected_wealth) / spec.gamma } else { f64::NAN };
    Ok(OuterResult {
        w_star,
        c_star,
        value,
        values,
        expected_wealth,
        cvar,
        policy: best.policy.expect("captured policy"),
        slice0: best.slice0.expect("captured slice"),
        w_star_interior,
        clamped: sols.iter().map(|s| s.clamped).max().unwrap_or(0) + best.clamped,
        envelope_ratio: sols.iter().map(|s| s.envelope_ratio).fold(best.envelope_ratio, f64::max),
        lipschitz_ratio,
    })
}
