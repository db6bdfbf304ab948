//! Kernel values at lattice index differences plus boundary CF factors.

use num_complex::Complex64;
use rayon::prelude::*;

use super::fft2::{good_size, Conv2};
use crate::charfn::Selector;
use crate::error::{Error, Result};
use crate::lattice::Lattice;

pub struct KernelTable {
    /// Offset half-ranges: `e ∈ [−e_s, e_s]`, `f ∈ [−e_b, e_b]`.
    pub e_s: usize,
    pub e_b: usize,
    /// `ĝ(eΔs, fΔb)`, row-major over `(e + e_s, f + e_b)`.
    values: Vec<f64>,
    /// `G(−i·a; Δt)` indexed by [`Selector::index`].
    pub factors: [f64; 4],
    /// Discrete mass `ΔsΔb Σ φ ĝ` over interior anchors (min, max).
    pub mass_min: f64,
    pub mass_max: f64,
    pub conv: Conv2,
}

impl KernelTable {
    /// Tabulate `density` on the lattice with the default FFT size.
    pub fn new(lattice: &Lattice, density: impl Fn([f64; 2]) -> f64 + Sync, factors: [f64; 4]) -> Result<Self> {
        let size = (good_size(3 * lattice.s.n - 1), good_size(3 * lattice.b.n - 1));
        Self::with_fft_size(lattice, density, factors, size)
    }

    pub fn with_fft_size(
        lattice: &Lattice,
        density: impl Fn([f64; 2]) -> f64 + Sync,
        factors: [f64; 4],
        size: (usize, usize),
    ) -> Result<Self> {
        if factors.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::NonFinite(format!("boundary factors must be finite and positive: {factors:?}")));
        }
        if (factors[Selector::None.index()] - 1.0).abs() > 1e-12 {
            return Err(Error::Contract("the (0,0) boundary factor must equal 1".into()));
        }
        let (ns, nb) = (lattice.s.n, lattice.b.n);
        let (e_s, e_b) = (3 * ns / 2 - 1, 3 * nb / 2 - 1);
        let (ds, db) = (lattice.s.delta, lattice.b.delta);
        let width_b = 2 * e_b + 1;
        let values: Vec<f64> = (0..(2 * e_s + 1) * width_b)
            .into_par_iter()
            .map(|p| {
                let e = (p / width_b) as f64 - e_s as f64;
                let f = (p % width_b) as f64 - e_b as f64;
                density([e * ds, f * db])
            })
            .collect();
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::NonFinite(format!("kernel density value {v} is not a finite nonnegative number")));
        }
        let (e_si, e_bi) = (e_s as isize, e_b as isize);
        let conv = Conv2::new(
            lattice.ns(),
            lattice.nb(),
            lattice.s.interior().start().to_owned()..lattice.s.interior().end() + 1,
            lattice.b.interior().start().to_owned()..lattice.b.interior().end() + 1,
            size,
            ds * db,
            |e, f| values[((e + e_si) as usize) * width_b + (f + e_bi) as usize],
        );
        let mut table = Self { e_s, e_b, values, factors, mass_min: 0.0, mass_max: 0.0, conv };
        let mut work = table.conv.work();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        table.conv.apply(
            &mut work,
            |i, j| Complex64::new(lattice.trapezoid_weight(i, j), 0.0),
            |_, _, z| {
                lo = lo.min(z.re);
                hi = hi.max(z.re);
            },
        );
        table.mass_min = lo;
        table.mass_max = hi;
        Ok(table)
    }

    /// `ĝ(eΔs, fΔb)` for `|e| ≤ e_s`, `|f| ≤ e_b`.
    pub fn g(&self, e: isize, f: isize) -> f64 {
        let w = 2 * self.e_b + 1;
        self.values[(e + self.e_s as isize) as usize * w + (f + self.e_b as isize) as usize]
    }

    pub fn factor(&self, sel: Selector) -> f64 {
        self.factors[sel.index()]
    }

    /// Per-step growth bound `Δt·κ_max + ε(h)` of the stability envelope.
    pub fn growth_exponent(&self, factors: &[f64; 4]) -> f64 {
        let kappa = factors.iter().map(|f| f.ln()).fold(0.0f64, f64::max);
        let eps = self.mass_max.max(1.0).ln();
        kappa + eps + 1e-12
    }
}
