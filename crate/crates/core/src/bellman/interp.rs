//! Bilinear interpolation on the padded lattice.

use crate::lattice::Lattice;

/// Enclosing cell `[i, i+1] × [j, j+1]` and local coordinates in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub i: usize,
    pub j: usize,
    pub ts: f64,
    pub tb: f64,
    /// The query lay outside the padded rectangle and was clamped.
    pub clamped: bool,
}

impl Cell {
    /// Corner weights `[w00, w01, w10, w11]` (first index along `s`).
    pub fn weights(&self) -> [f64; 4] {
        let (ts, tb) = (self.ts, self.tb);
        [(1.0 - ts) * (1.0 - tb), (1.0 - ts) * tb, ts * (1.0 - tb), ts * tb]
    }

    /// Nested-lerp form of the interpolant; reproduces constants exactly.
    #[inline]
    pub fn eval(&self, v00: f64, v01: f64, v10: f64, v11: f64) -> f64 {
        let lo = v00 + self.tb * (v01 - v00);
        let hi = v10 + self.tb * (v11 - v10);
        lo + self.ts * (hi - lo)
    }
}

#[inline]
fn axis_cell(x: f64, lo: f64, delta: f64, intervals: usize) -> (usize, f64, bool) {
    let hi = lo + intervals as f64 * delta;
    let clamped = !(x >= lo && x <= hi);
    let xc = if x.is_nan() { lo } else { x.clamp(lo, hi) };
    let pos = (xc - lo) / delta;
    let i = (pos.floor() as usize).min(intervals - 1);
    let t = (pos - i as f64).clamp(0.0, 1.0);
    (i, t, clamped)
}

pub fn locate(lat: &Lattice, s: f64, b: f64) -> Cell {
    let (i, ts, cs) = axis_cell(s, lat.s.nodes[0], lat.s.delta, 2 * lat.s.n);
    let (j, tb, cb) = axis_cell(b, lat.b.nodes[0], lat.b.delta, 2 * lat.b.n);
    Cell { i, j, ts, tb, clamped: cs || cb }
}

/// Interpolated value of a full-grid slice and whether the query was clamped.
pub fn bilinear(slice: &[f64], lat: &Lattice, point: [f64; 2]) -> (f64, bool) {
    let c = locate(lat, point[0], point[1]);
    let nb = lat.nb();
    let at = |i: usize, j: usize| slice[i * nb + j];
    (c.eval(at(c.i, c.j), at(c.i, c.j + 1), at(c.i + 1, c.j), at(c.i + 1, c.j + 1)), c.clamped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::GridConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lat() -> Lattice {
        Lattice::build(&GridConfig { n_s: 8, n_b: 6, ..GridConfig::reference(0) }).unwrap()
    }

    fn field(lat: &Lattice, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(lat.len());
        for i in 0..lat.ns() {
            for j in 0..lat.nb() {
                v.push(f(lat.s.nodes[i], lat.b.nodes[j]));
            }
        }
        v
    }

    #[test]
    fn exact_at_nodes_and_averages_at_centres() {
        let l = lat();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..l.len()).map(|_| rng.gen_range(-5.0..5.0)).collect();
        for i in 0..l.ns() {
            for j in 0..l.nb() {
                let (x, clamped) = bilinear(&v, &l, l.node(i, j));
                assert!(!clamped);
                assert!((x - v[l.index(i, j)]).abs() < 1e-12);
            }
        }
        let (i, j) = (3, 2);
        let centre = [l.s.nodes[i] + 0.5 * l.s.delta, l.b.nodes[j] + 0.5 * l.b.delta];
        let avg = 0.25 * (v[l.index(i, j)] + v[l.index(i + 1, j)] + v[l.index(i, j + 1)] + v[l.index(i + 1, j + 1)]);
        assert!((bilinear(&v, &l, centre).0 - avg).abs() < 1e-12);
    }

    #[test]
    fn affine_functions_are_reproduced() {
        let l = lat();
        let f = |s: f64, b: f64| 2.0 * s - 3.0 * b + 1.0;
        let v = field(&l, f);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let p = [rng.gen_range(l.s.pad_lo..l.s.pad_hi), rng.gen_range(l.b.pad_lo..l.b.pad_hi)];
            let (x, _) = bilinear(&v, &l, p);
            assert!((x - f(p[0], p[1])).abs() <= 1e-13, "{x} vs {}", f(p[0], p[1]));
            let w = locate(&l, p[0], p[1]).weights();
            assert!(w.iter().all(|w| *w >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn outside_queries_clamp_and_flag() {
        let l = lat();
        let v = field(&l, |s, b| s + b);
        let (x, clamped) = bilinear(&v, &l, [l.s.pad_hi + 3.0, l.b.pad_lo - 1.0]);
        assert!(clamped);
        assert!((x - (l.s.pad_hi + l.b.pad_lo)).abs() < 1e-12);
        assert!(!locate(&l, l.s.pad_hi, l.b.pad_hi).clamped);
    }
}
