//! One backward step on a batch of value slices.
//!
//! A batch holds `K` slices in node-major interleaved layout
//! (`data[node · K + k]`), so the interpolation cell of every
//! `(node, control)` pair is computed once and applied to all slices.

use std::sync::Mutex;

use num_complex::Complex64;
use rayon::prelude::*;

use super::fft2::ConvWork;
use super::interp::{locate, Cell};
use super::kernel::KernelTable;
use super::state_update_log;
use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// Scratch pool so parallel FFT tasks reuse their large buffers.
pub struct WorkPool(Mutex<Vec<ConvWork>>);

impl WorkPool {
    pub fn new() -> Self {
        Self(Mutex::new(Vec::new()))
    }

    fn with<R>(&self, kernel: &KernelTable, f: impl FnOnce(&mut ConvWork) -> R) -> R {
        let mut w = self.0.lock().unwrap().pop().unwrap_or_else(|| kernel.conv.work());
        let r = f(&mut w);
        self.0.lock().unwrap().push(w);
        r
    }
}

impl Default for WorkPool {
    fn default() -> Self {
        Self::new()
    }
}

/// `V^{m,+}` from `V^{m+1,−}`: kernel quadrature on interior nodes and
/// CF-factor scaling on the boundary, for all `k` slices.
pub fn propagate_batch(
    lat: &Lattice,
    kernel: &KernelTable,
    factors: &[f64; 4],
    vin: &[f64],
    vout: &mut [f64],
    k: usize,
    pool: &WorkPool,
) -> Result<()> {
    assert_eq!(vin.len(), lat.len() * k);
    assert_eq!(vout.len(), lat.len() * k);
    if vin.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("value slice entering propagation".into()));
    }
    let labels = lat.labels();
    for (node, label) in labels.iter().enumerate() {
        if let Some(sel) = label.selector() {
            let f = factors[sel.index()];
            for c in 0..k {
                vout[node * k + c] = f * vin[node * k + c];
            }
        }
    }
    let nb = lat.nb();
    let is = lat.s.interior();
    let ib = lat.b.interior();
    let (i0, j0) = (*is.start(), *ib.start());
    let nbi = ib.end() - j0 + 1;
    // two real slices per complex transform
    let pairs: Vec<usize> = (0..k).step_by(2).collect();
    let results: Vec<Vec<Complex64>> = pairs
        .par_iter()
        .map(|&c0| {
            let c1 = c0 + 1;
            let mut out = vec![Complex64::new(0.0, 0.0); (is.end() - i0 + 1) * nbi];
            pool.with(kernel, |work| {
                kernel.conv.apply(
                    work,
                    |i, j| {
                        let node = i * nb + j;
                        let w = lat.trapezoid_weight(i, j);
                        let im = if c1 < k { vin[node * k + c1] } else { 0.0 };
                        Complex64::new(w * vin[node * k + c0], w * im)
                    },
                    |i, j, z| out[(i - i0) * nbi + (j - j0)] = z,
                );
            });
            out
        })
        .collect();
    for (&c0, out) in pairs.iter().zip(results) {
        for i in is.clone() {
            for j in ib.clone() {
                let z = out[(i - i0) * nbi + (j - j0)];
                let node = i * nb + j;
                vout[node * k + c0] = z.re;
                if c0 + 1 < k {
                    vout[node * k + c0 + 1] = z.im;
                }
            }
        }
    }
    Ok(())
}

/// Precomputed logarithms of the control grid.
pub struct ControlLogs {
    pub u: Vec<f64>,
    pub ln_u: Vec<f64>,
    pub ln_1mu: Vec<f64>,
}

impl ControlLogs {
    pub fn new(u: &[f64]) -> Self {
        Self { u: u.to_vec(), ln_u: u.iter().map(|x| x.ln()).collect(), ln_1mu: u.iter().map(|x| (1.0 - x).ln()).collect() }
    }
}

/// Cell reached from log-wealth `ln_w` under control index `iota`.
#[inline]
pub fn control_cell(lat: &Lattice, logs: &ControlLogs, ln_w: f64, iota: usize, floor: f64) -> Cell {
    let (sp, bp) = state_update_log(ln_w, logs.ln_u[iota], logs.ln_1mu[iota], floor);
    locate(lat, sp, bp)
}

#[inline]
fn eval_col(cell: &Cell, v: &[f64], nb: usize, k: usize, col: usize) -> f64 {
    let n00 = cell.i * nb + cell.j;
    let n10 = n00 + nb;
    cell.eval(v[n00 * k + col], v[(n00 + 1) * k + col], v[n10 * k + col], v[(n10 + 1) * k + col])
}

/// Output of [`intervene_batch`].
pub struct InterventionStats {
    /// Queries that fell outside the padded rectangle and were clamped.
    pub clamped: u64,
}

/// `V^{m,−}` from `V^{m,+}`. The first `n_val` slices are maximised over
/// the control grid (smallest index on ties); slice `n_val + c`, if present,
/// is a companion evaluated under the maximiser of slice `c`. Boundary
/// nodes are copied. When `policy` is given it receives the maximising
/// control index per interior node (row-major) and value slice.
#[allow(clippy::too_many_arguments)]
pub fn intervene_batch(
    lat: &Lattice,
    logs: &ControlLogs,
    q: f64,
    floor: f64,
    vplus: &[f64],
    vminus: &mut [f64],
    k: usize,
    n_val: usize,
    policy: Option<&mut [u16]>,
) -> InterventionStats {
    assert!(n_val >= 1 && (k == n_val || k == 2 * n_val));
    let nb = lat.nb();
    let row_len = nb * k;
    let is = lat.s.interior();
    let ib = lat.b.interior();
    let (i0, i1) = (*is.start(), *is.end());
    let (j0, j1) = (*ib.start(), *ib.end());
    let nbi = j1 - j0 + 1;
    let exp_b: Vec<f64> = lat.b.nodes.iter().map(|b| b.exp()).collect();

    vminus[..i0 * row_len].copy_from_slice(&vplus[..i0 * row_len]);
    vminus[(i1 + 1) * row_len..].copy_from_slice(&vplus[(i1 + 1) * row_len..]);

    let rows = &mut vminus[i0 * row_len..(i1 + 1) * row_len];
    let mut scratch = Vec::new();
    let pol = match policy {
        Some(p) => {
            assert_eq!(p.len(), lat.interior_count() * n_val);
            p
        }
        None => {
            scratch.resize(lat.interior_count() * n_val, 0u16);
            &mut scratch[..]
        }
    };
    let n_u = logs.u.len();

    let clamped: u64 = rows
        .par_chunks_mut(row_len)
        .zip(pol.par_chunks_mut(nbi * n_val))
        .enumerate()
        .map(|(r, (out, prow))| {
            let i = i0 + r;
            let exp_s = lat.s.nodes[i].exp();
            let mut clamped = 0u64;
            out[..j0 * k].copy_from_slice(&vplus[i * row_len..(i * nb + j0) * k]);
            out[(j1 + 1) * k..].copy_from_slice(&vplus[(i * nb + j1 + 1) * k..(i + 1) * row_len]);
            let mut best = vec![f64::NEG_INFINITY; n_val];
            let mut arg = vec![0u16; n_val];
            for j in j0..=j1 {
                let ln_w = (exp_s + exp_b[j] + q).ln();
                best.fill(f64::NEG_INFINITY);
                arg.fill(0);
                for iota in 0..n_u {
                    let cell = control_cell(lat, logs, ln_w, iota, floor);
                    clamped += cell.clamped as u64;
                    let n00 = cell.i * nb + cell.j;
                    let n10 = n00 + nb;
                    let a = &vplus[n00 * k..n00 * k + n_val];
                    let b = &vplus[(n00 + 1) * k..(n00 + 1) * k + n_val];
                    let c = &vplus[n10 * k..n10 * k + n_val];
                    let d = &vplus[(n10 + 1) * k..(n10 + 1) * k + n_val];
                    let best = &mut best[..n_val];
                    let arg = &mut arg[..n_val];
                    let it = iota as u16;
                    for col in 0..n_val {
                        let v = cell.eval(a[col], b[col], c[col], d[col]);
                        let better = v > best[col];
                        best[col] = if better { v } else { best[col] };
                        arg[col] = if better { it } else { arg[col] };
                    }
                }
                let o = &mut out[j * k..(j + 1) * k];
                o[..n_val].copy_from_slice(&best);
                if k > n_val {
                    for col in 0..n_val {
                        let cell = control_cell(lat, logs, ln_w, arg[col] as usize, floor);
                        o[n_val + col] = eval_col(&cell, vplus, nb, k, n_val + col);
                    }
                }
                prow[(j - j0) * n_val..(j - j0 + 1) * n_val].copy_from_slice(&arg);
            }
            clamped
        })
        .sum();
    InterventionStats { clamped }
}

/// Per-slice sup norms of a batch.
pub fn sup_norms(v: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; k];
    for chunk in v.chunks_exact(k) {
        for (o, x) in out.iter_mut().zip(chunk) {
            *o = o.max(x.abs());
        }
    }
    out
}

/// Single-slice interior propagation; boundary entries of the result are 0.
pub fn propagate_interior(slice_next: &[f64], kernel: &KernelTable, lat: &Lattice) -> Result<Vec<f64>> {
    let mut out = vec![0.0; lat.len()];
    propagate_batch(lat, kernel, &[0.0; 4], slice_next, &mut out, 1, &WorkPool::new())?;
    Ok(out)
}

/// Boundary values `G(−i·a; Δt)·V^{m+1,−}` written into `out` on `Ω_out`.
pub fn propagate_boundary(slice_next: &[f64], factors: &[f64; 4], lat: &Lattice, out: &mut [f64]) {
    for (node, label) in lat.labels().iter().enumerate() {
        if let Some(sel) = label.selector() {
            out[node] = factors[sel.index()] * slice_next[node];
        }
    }
}

/// Single-slice intervention: returns `V^{m,−}` and the optimal control
/// index at every interior node.
pub fn intervene(slice_plus: &[f64], lat: &Lattice, q: f64, floor: f64) -> (Vec<f64>, Vec<u16>, u64) {
    let logs = ControlLogs::new(&lat.u_nodes);
    let mut out = vec![0.0; lat.len()];
    let mut pol = vec![0u16; lat.interior_count()];
    let st = intervene_batch(lat, &logs, q, floor, slice_plus, &mut out, 1, 1, Some(&mut pol));
    (out, pol, st.clamped)
}
