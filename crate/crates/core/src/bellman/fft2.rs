//! 2D circular convolution by FFT, restricted to the interior output window.
//!
//! The input lives on `n_s × n_b` padded nodes; the kernel covers offsets
//! `e ∈ [−(n_s − 1 − lo_s), …]`. Embedding in an `L_s × L_b` torus with
//! `L ≥ 3N − 1` per axis makes circular and linear correlation agree on the
//! interior window. The spectrum is kept in transposed (`b`-major) layout so
//! that forward and inverse passes each need a single transpose; only the
//! nonzero input rows and the wanted output rows are transformed along `b`.

use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Smallest `n' ≥ n` of the form `2^a 3^b 5^c`.
pub fn good_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

pub struct Conv2 {
    pub ls: usize,
    pub lb: usize,
    /// Input extent (padded node counts).
    pub ns: usize,
    pub nb: usize,
    /// Output window in input coordinates.
    pub out_s: Range<usize>,
    pub out_b: Range<usize>,
    fwd_s: Arc<dyn Fft<f64>>,
    inv_s: Arc<dyn Fft<f64>>,
    fwd_b: Arc<dyn Fft<f64>>,
    inv_b: Arc<dyn Fft<f64>>,
    /// Kernel spectrum, transposed layout `[c · L_s + r]`, scale folded in.
    spectrum: Vec<Complex64>,
}

/// Per-thread scratch buffers.
pub struct ConvWork {
    a: Vec<Complex64>,
    t: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Conv2 {
    /// `kernel(e, f)` is the correlation weight for output `(k, j)` and input
    /// `(k + e, j + f)`; it is queried for all offsets that can occur
    /// between an input node and an output-window node. `scale` multiplies
    /// every output.
    pub fn new(
        ns: usize,
        nb: usize,
        out_s: Range<usize>,
        out_b: Range<usize>,
        size: (usize, usize),
        scale: f64,
        kernel: impl Fn(isize, isize) -> f64,
    ) -> Self {
        let (ls, lb) = size;
        let (es_lo, es_hi) = (-(out_s.end as isize - 1), (ns - 1) as isize - out_s.start as isize);
        let (eb_lo, eb_hi) = (-(out_b.end as isize - 1), (nb - 1) as isize - out_b.start as isize);
        assert!(ls as isize > es_hi - es_lo && lb as isize > eb_hi - eb_lo, "FFT size too small for alias-free correlation");
        let mut planner = FftPlanner::new();
        let fwd_s = planner.plan_fft_forward(ls);
        let inv_s = planner.plan_fft_inverse(ls);
        let fwd_b = planner.plan_fft_forward(lb);
        let inv_b = planner.plan_fft_inverse(lb);

        // correlation out[k] = Σ x[l] ker(l − k) is convolution with kr[d] = ker(−d)
        let mut a = vec![Complex64::new(0.0, 0.0); ls * lb];
        for e in es_lo..=es_hi {
            let r = (-e).rem_euclid(ls as isize) as usize;
            for f in eb_lo..=eb_hi {
                let c = (-f).rem_euclid(lb as isize) as usize;
                a[r * lb + c] = Complex64::new(kernel(e, f), 0.0);
            }
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len(&[&fwd_s, &inv_s, &fwd_b, &inv_b])];
        fwd_b.process_with_scratch(&mut a, &mut scratch);
        let mut t = vec![Complex64::new(0.0, 0.0); ls * lb];
        transpose(&a, &mut t, ls, lb, 0..ls);
        fwd_s.process_with_scratch(&mut t, &mut scratch);
        let norm = scale / (ls * lb) as f64;
        t.iter_mut().for_each(|z| *z *= norm);
        Self { ls, lb, ns, nb, out_s, out_b, fwd_s, inv_s, fwd_b, inv_b, spectrum: t }
    }

    pub fn work(&self) -> ConvWork {
        let len = scratch_len(&[&self.fwd_s, &self.inv_s, &self.fwd_b, &self.inv_b]);
        ConvWork {
            a: vec![Complex64::new(0.0, 0.0); self.ls * self.lb],
            t: vec![Complex64::new(0.0, 0.0); self.ls * self.lb],
            scratch: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// Correlate a complex input (two packed real fields) with the kernel.
    /// `input(i, j)` is read for every padded node; `output(i, j, z)` is
    /// called for every node of the output window.
    pub fn apply(
        &self,
        work: &mut ConvWork,
        input: impl Fn(usize, usize) -> Complex64,
        mut output: impl FnMut(usize, usize, Complex64),
    ) {
        let (ls, lb, ns, nb) = (self.ls, self.lb, self.ns, self.nb);
        let zero = Complex64::new(0.0, 0.0);
        let a = &mut work.a[..ns * lb];
        for i in 0..ns {
            let row = &mut a[i * lb..(i + 1) * lb];
            for (j, z) in row[..nb].iter_mut().enumerate() {
                *z = input(i, j);
            }
            row[nb..].fill(zero);
        }
        self.fwd_b.process_with_scratch(a, &mut work.scratch);
        transpose(a, &mut work.t, ls, lb, 0..ns);
        for c in 0..lb {
            work.t[c * ls + ns..(c + 1) * ls].fill(zero);
        }
        self.fwd_s.process_with_scratch(&mut work.t, &mut work.scratch);
        for (z, k) in work.t.iter_mut().zip(&self.spectrum) {
            *z *= k;
        }
        self.inv_s.process_with_scratch(&mut work.t, &mut work.scratch);
        let rows = self.out_s.len();
        let a = &mut work.a[..rows * lb];
        transpose_back(&work.t, a, ls, lb, self.out_s.clone());
        self.inv_b.process_with_scratch(a, &mut work.scratch);
        for (r, i) in self.out_s.clone().enumerate() {
            let row = &a[r * lb..(r + 1) * lb];
            for j in self.out_b.clone() {
                output(i, j, row[j]);
            }
        }
    }
}

fn scratch_len(ffts: &[&Arc<dyn Fft<f64>>]) -> usize {
    ffts.iter().map(|f| f.get_inplace_scratch_len()).max().unwrap_or(0)
}

const BLOCK: usize = 32;

/// `t[c · ls + r] = a[r · lb + c]` for `r` in `rows` (rows of `a` are
/// indexed from 0 even when `rows` starts later).
fn transpose(a: &[Complex64], t: &mut [Complex64], ls: usize, lb: usize, rows: Range<usize>) {
    for r0 in rows.clone().step_by(BLOCK) {
        let r1 = (r0 + BLOCK).min(rows.end);
        for c0 in (0..lb).step_by(BLOCK) {
            let c1 = (c0 + BLOCK).min(lb);
            for r in r0..r1 {
                for c in c0..c1 {
                    t[c * ls + r] = a[r * lb + c];
                }
            }
        }
    }
}

/// Gather rows `rows` of the untransposed field from `t` into `a`
/// (`a` row 0 holds field row `rows.start`).
fn transpose_back(t: &[Complex64], a: &mut [Complex64], ls: usize, lb: usize, rows: Range<usize>) {
    for r0 in rows.clone().step_by(BLOCK) {
        let r1 = (r0 + BLOCK).min(rows.end);
        for c0 in (0..lb).step_by(BLOCK) {
            let c1 = (c0 + BLOCK).min(lb);
            for r in r0..r1 {
                for c in c0..c1 {
                    a[(r - rows.start) * lb + c] = t[c * ls + r];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn good_sizes() {
        assert_eq!(good_size(767), 768);
        assert_eq!(good_size(23), 24);
        assert_eq!(good_size(1), 1);
        assert_eq!(good_size(97), 100);
    }

    #[test]
    fn matches_direct_correlation_on_odd_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (ns, nb) = (9usize, 7usize);
        let (out_s, out_b) = (2..7, 1..6);
        let ker: Vec<f64> = (0..400).map(|_| rng.gen_range(0.0..1.0)).collect();
        let kf = |e: isize, f: isize| ker[((e + 10) * 20 + (f + 10)) as usize];
        let x: Vec<Complex64> = (0..ns * nb).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        for size in [(ns + out_s.len(), nb + out_b.len()), (24, 20)] {
            let conv = Conv2::new(ns, nb, out_s.clone(), out_b.clone(), size, 0.5, kf);
            let mut work = conv.work();
            let mut got = vec![Complex64::new(0.0, 0.0); ns * nb];
            conv.apply(&mut work, |i, j| x[i * nb + j], |i, j, z| got[i * nb + j] = z);
            for k in out_s.clone() {
                for j in out_b.clone() {
                    let mut want = Complex64::new(0.0, 0.0);
                    for l in 0..ns {
                        for d in 0..nb {
                            want += x[l * nb + d] * kf(l as isize - k as isize, d as isize - j as isize);
                        }
                    }
                    assert!((got[k * nb + j] - 0.5 * want).norm() < 1e-12, "({k},{j}) size {size:?}");
                }
            }
        }
    }
}
