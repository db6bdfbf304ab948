//! Padded tensor grids over `(s, b)` plus the control and threshold grids.
//!
//! Each spatial axis covers the interior `[z_min, z_max]` with `N` intervals
//! and is padded by half the interior width on both sides, giving `2N + 1`
//! nodes with global indices `−N..=N`. Arrays are stored with local index
//! `i = global + N`, row-major in `s` (`idx = i_s · (2N_b + 1) + i_b`).

use serde::{Deserialize, Serialize};

use crate::charfn::Selector;
use crate::error::{config_err, Error, Result};

pub const DEFAULT_W_FLOOR_LOG: f64 = -23.025850929940457; // ln(1e-10)

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub s_min: f64,
    pub s_max: f64,
    pub b_min: f64,
    pub b_max: f64,
    /// Interval counts on the interior (even).
    pub n_s: usize,
    pub n_b: usize,
    pub n_u: usize,
    pub n_w: usize,
    /// Threshold cap in currency units.
    pub w_max: f64,
    pub w_floor_log: f64,
    pub level: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self::reference(0)
    }
}

impl GridConfig {
    /// Reference domain `ln(1e5) ± 8`, counts `(512, 512, 256, 512)` doubled per level.
    pub fn reference(level: u32) -> Self {
        let c = 1e5f64.ln();
        let f = 1usize << level;
        Self {
            s_min: c - 8.0,
            s_max: c + 8.0,
            b_min: c - 8.0,
            b_max: c + 8.0,
            n_s: 512 * f,
            n_b: 512 * f,
            n_u: 256 * f,
            n_w: 512 * f,
            w_max: 1e8,
            w_floor_log: DEFAULT_W_FLOOR_LOG,
            level,
        }
    }

    /// Same domain at a quarter of the reference resolution (level 0 has
    /// `N_s = N_b = 256`, `N_u = 64`, `N_w = 128`) and a threshold cap of 2e6.
    pub fn desk(level: u32) -> Self {
        let f = 1usize << level;
        Self { n_s: 256 * f, n_b: 256 * f, n_u: 64 * f, n_w: 128 * f, w_max: 2e6, ..Self::reference(level) }
    }

    pub fn preset(name: &str, level: u32) -> Option<Self> {
        match name {
            "reference" => Some(Self::reference(level)),
            "desk" => Some(Self::desk(level)),
            _ => None,
        }
    }

    /// Re-centre both axes at their midpoints with a new interior
    /// half-width, keeping the spacings (interval counts rescale).
    pub fn with_half_width(&self, half_width: f64) -> Result<Self> {
        let rescale = |lo: f64, hi: f64, n: usize| -> Result<(f64, f64, usize)> {
            let mid = 0.5 * (lo + hi);
            let d = (hi - lo) / n as f64;
            let m = 2.0 * half_width / d;
            let n_new = m.round() as usize;
            if (m - n_new as f64).abs() > 1e-9 * m || n_new % 2 != 0 || n_new == 0 {
                return Err(config_err(format!(
                    "half-width {half_width} is not an even multiple of the spacing {d}"
                )));
            }
            Ok((mid - half_width, mid + half_width, n_new))
        };
        let (s_min, s_max, n_s) = rescale(self.s_min, self.s_max, self.n_s)?;
        let (b_min, b_max, n_b) = rescale(self.b_min, self.b_max, self.n_b)?;
        Ok(Self { s_min, s_max, b_min, b_max, n_s, n_b, ..self.clone() })
    }

    /// Next refinement level: all four counts double.
    pub fn refined(&self) -> Self {
        Self { n_s: 2 * self.n_s, n_b: 2 * self.n_b, n_u: 2 * self.n_u, n_w: 2 * self.n_w, level: self.level + 1, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, lo, hi) in [("s", self.s_min, self.s_max), ("b", self.b_min, self.b_max)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(config_err(format!("{name} bounds inverted or non-finite: [{lo}, {hi}]")));
            }
        }
        for (name, n) in [("n_s", self.n_s), ("n_b", self.n_b)] {
            if n < 2 || n % 2 != 0 {
                return Err(config_err(format!("{name} must be even and >= 2, got {n}")));
            }
        }
        if self.n_u < 1 || self.n_w < 1 {
            return Err(config_err("n_u and n_w must be at least 1"));
        }
        if !(self.w_max > 0.0 && self.w_max.is_finite()) {
            return Err(config_err("w_max must be positive"));
        }
        if !self.w_floor_log.is_finite() {
            return Err(config_err("w_floor_log must be finite"));
        }
        Ok(())
    }
}

/// Subdomain labels of the padded rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Subdomain {
    Interior,
    SMax,
    BMax,
    Corner,
    SMinBMin,
}

impl Subdomain {
    pub fn selector(self) -> Option<Selector> {
        match self {
            Subdomain::Interior => None,
            Subdomain::SMax => Some(Selector::S),
            Subdomain::BMax => Some(Selector::B),
            Subdomain::Corner => Some(Selector::Both),
            Subdomain::SMinBMin => Some(Selector::None),
        }
    }
}

/// One padded axis: `2N + 1` uniform nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
    pub pad_lo: f64,
    pub pad_hi: f64,
    pub delta: f64,
    pub nodes: Vec<f64>,
}

impl Axis {
    fn new(lo: f64, hi: f64, n: usize) -> Self {
        let width = hi - lo;
        let delta = width / n as f64;
        let centre = 0.5 * (lo + hi);
        let nodes = (0..=2 * n).map(|i| centre + (i as f64 - n as f64) * delta).collect();
        Self { n, lo, hi, pad_lo: lo - 0.5 * width, pad_hi: hi + 0.5 * width, delta, nodes }
    }

    pub fn len(&self) -> usize {
        2 * self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Local indices of nodes strictly inside `(lo, hi)`.
    pub fn interior(&self) -> std::ops::RangeInclusive<usize> {
        self.n / 2 + 1..=3 * self.n / 2 - 1
    }

    /// Local index of the interior upper bound `hi`.
    pub fn hi_index(&self) -> usize {
        3 * self.n / 2
    }

    /// Local index of the interior lower bound `lo`.
    pub fn lo_index(&self) -> usize {
        self.n / 2
    }

    /// Global index `local − N`.
    pub fn global(&self, local: usize) -> isize {
        local as isize - self.n as isize
    }
}

#[derive(Debug, Clone)]
pub struct Lattice {
    pub config: GridConfig,
    pub s: Axis,
    pub b: Axis,
    pub u_nodes: Vec<f64>,
    pub w_nodes: Vec<f64>,
    pub du: f64,
    pub dw: f64,
    labels: Vec<Subdomain>,
}

impl Lattice {
    pub fn build(config: &GridConfig) -> Result<Self> {
        config.validate()?;
        let s = Axis::new(config.s_min, config.s_max, config.n_s);
        let b = Axis::new(config.b_min, config.b_max, config.n_b);
        let du = 1.0 / config.n_u as f64;
        let dw = config.w_max / config.n_w as f64;
        let u_nodes = (0..=config.n_u).map(|i| i as f64 * du).collect();
        let w_nodes = (0..=config.n_w).map(|i| i as f64 * dw).collect();
        let mut lat = Self { config: config.clone(), s, b, u_nodes, w_nodes, du, dw, labels: Vec::new() };
        let mut labels = Vec::with_capacity(lat.len());
        for i in 0..lat.s.len() {
            for j in 0..lat.b.len() {
                labels.push(lat.classify_index(i, j));
            }
        }
        lat.labels = labels;
        Ok(lat)
    }

    pub fn ns(&self) -> usize {
        self.s.len()
    }

    pub fn nb(&self) -> usize {
        self.b.len()
    }

    /// Total number of padded nodes.
    pub fn len(&self) -> usize {
        self.s.len() * self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.b.len() + j
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [self.s.nodes[i], self.b.nodes[j]]
    }

    /// Label from local indices; ties on shared edges resolve in the order
    /// interior, `s_max`, corner, `b_max`, then the `s_min`/`b_min` remainder.
    fn classify_index(&self, i: usize, j: usize) -> Subdomain {
        let (s_lo, s_hi) = (self.s.lo_index(), self.s.hi_index());
        let (b_lo, b_hi) = (self.b.lo_index(), self.b.hi_index());
        if i > s_lo && i < s_hi && j > b_lo && j < b_hi {
            Subdomain::Interior
        } else if i >= s_hi && j < b_hi {
            Subdomain::SMax
        } else if i >= s_hi {
            Subdomain::Corner
        } else if j >= b_hi {
            Subdomain::BMax
        } else {
            Subdomain::SMinBMin
        }
    }

    pub fn classify(&self, i: usize, j: usize) -> Subdomain {
        self.labels[self.index(i, j)]
    }

    pub fn labels(&self) -> &[Subdomain] {
        &self.labels
    }

    pub fn boundary_selector(&self, i: usize, j: usize) -> Result<Selector> {
        self.classify(i, j)
            .selector()
            .ok_or_else(|| Error::Contract(format!("boundary selector requested at interior node ({i}, {j})")))
    }

    /// Composite trapezoid weight: 1 inside, ½ on edges, ¼ at corners.
    pub fn trapezoid_weight(&self, i: usize, j: usize) -> f64 {
        let edge = |k: usize, len: usize| if k == 0 || k + 1 == len { 0.5 } else { 1.0 };
        edge(i, self.s.len()) * edge(j, self.b.len())
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        self.classify(i, j) == Subdomain::Interior
    }

    /// Number of interior nodes `(N_s − 1)(N_b − 1)`.
    pub fn interior_count(&self) -> usize {
        (self.s.n - 1) * (self.b.n - 1)
    }

    pub fn padded_area(&self) -> f64 {
        (self.s.pad_hi - self.s.pad_lo) * (self.b.pad_hi - self.b.pad_lo)
    }
}
