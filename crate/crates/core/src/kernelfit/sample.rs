//! Quasi-uniform frequency sampling of the truncation box `[−η′, η′]²`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::charfn::CharFn;
use crate::error::{config_err, Result};

/// Frequency nodes with quadrature weights and cached CF targets.
#[derive(Debug, Clone)]
pub struct FreqSample {
    pub nodes: Vec<[f64; 2]>,
    /// Area of the sampling cell owning each node.
    pub weights: Vec<f64>,
    pub targets: Vec<Complex64>,
    pub eta_prime: f64,
    /// Half-widths of the denser core box.
    pub core: [f64; 2],
    pub delta_min: f64,
    pub delta_max: f64,
}

impl FreqSample {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Measured quasi-uniformity constants `(δ_min √P, δ_max √P)`.
    pub fn spacing_constants(&self) -> (f64, f64) {
        let sp = (self.len() as f64).sqrt();
        (self.delta_min * sp, self.delta_max * sp)
    }

    /// Build a sample from explicit nodes (unit weights); used by tests.
    pub fn from_nodes(nodes: Vec<[f64; 2]>, target: &dyn CharFn) -> Self {
        let targets = nodes.iter().map(|&e| target.cf(e)).collect();
        let eta_prime = nodes.iter().fold(0.0f64, |m, e| m.max(e[0].abs()).max(e[1].abs()));
        let (delta_min, delta_max) = spacing(&nodes);
        let n = nodes.len();
        Self { nodes, weights: vec![1.0; n], targets, eta_prime, core: [eta_prime; 2], delta_min, delta_max }
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Rect {
    fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Place `n` nodes at cell centres of a near-square grid covering `r`.
fn grid_fill(r: Rect, n: usize, nodes: &mut Vec<[f64; 2]>, weights: &mut Vec<f64>) {
    if n == 0 {
        return;
    }
    let (w, h) = (r.x1 - r.x0, r.y1 - r.y0);
    let cols = ((n as f64 * w / h).sqrt().round() as usize).clamp(1, n);
    let rows = n.div_ceil(cols);
    for row in 0..rows {
        let in_row = if row + 1 == rows { n - cols * (rows - 1) } else { cols };
        let y = r.y0 + (row as f64 + 0.5) * h / rows as f64;
        let cw = w / in_row as f64;
        for c in 0..in_row {
            nodes.push([r.x0 + (c as f64 + 0.5) * cw, y]);
            weights.push(cw * h / rows as f64);
        }
    }
}

/// Bounding half-widths of `{|G| ≥ level}` inside the box, scanned on a grid.
fn core_box(target: &dyn CharFn, eta_prime: f64, level: f64) -> [f64; 2] {
    let n = 200usize;
    let mut ext = [0.0f64; 2];
    for i in 0..=n {
        let es = -eta_prime + 2.0 * eta_prime * i as f64 / n as f64;
        for j in 0..=n / 2 {
            // Hermitian symmetry: half the box suffices
            let eb = -eta_prime + 2.0 * eta_prime * j as f64 / n as f64;
            if target.cf([es, eb]).norm() >= level {
                ext[0] = ext[0].max(es.abs());
                ext[1] = ext[1].max(eb.abs());
            }
        }
    }
    // round out by one scan cell
    let cell = 2.0 * eta_prime / n as f64;
    [(ext[0] + cell).min(eta_prime), (ext[1] + cell).min(eta_prime)]
}

/// Stratified quasi-uniform node set.
///
/// A fraction `f_core` of the nodes is laid on a cell-centred grid over the
/// box where `|G| ≥ 0.01`; the remainder covers the rest of `[−η′, η′]²`.
/// When the core box fills (almost) the whole box, or is empty, a single
/// uniform grid is used.
pub fn sample_frequencies(
    target: &dyn CharFn,
    eta_prime: f64,
    count: usize,
    f_core: f64,
) -> Result<FreqSample> {
    if !(eta_prime > 0.0 && eta_prime.is_finite()) {
        return Err(config_err(format!("degenerate truncation box: eta' = {eta_prime}")));
    }
    if count < 4 {
        return Err(config_err(format!("need at least 4 frequency nodes, got {count}")));
    }
    if !(0.0..=1.0).contains(&f_core) {
        return Err(config_err("f_core must lie in [0,1]"));
    }
    let full = Rect { x0: -eta_prime, x1: eta_prime, y0: -eta_prime, y1: eta_prime };
    let core = core_box(target, eta_prime, 0.01);
    let core_rect = Rect { x0: -core[0], x1: core[0], y0: -core[1], y1: core[1] };
    let rest_frac = 1.0 - core_rect.area() / full.area();

    let mut nodes = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    let stratify = count >= 64 && rest_frac > 0.01 && core_rect.area() > 0.0 && f_core > 0.0 && f_core < 1.0;
    if !stratify {
        grid_fill(full, count, &mut nodes, &mut weights);
    } else {
        let n_core = ((f_core * count as f64).round() as usize).clamp(1, count - 1);
        let n_rest = count - n_core;
        grid_fill(core_rect, n_core, &mut nodes, &mut weights);
        let frame = [
            Rect { x0: -eta_prime, x1: -core[0], y0: -eta_prime, y1: eta_prime },
            Rect { x0: core[0], x1: eta_prime, y0: -eta_prime, y1: eta_prime },
            Rect { x0: -core[0], x1: core[0], y0: -eta_prime, y1: -core[1] },
            Rect { x0: -core[0], x1: core[0], y0: core[1], y1: eta_prime },
        ];
        let total: f64 = frame.iter().map(Rect::area).sum();
        // largest-remainder apportionment by area
        let quotas: Vec<f64> = frame.iter().map(|r| n_rest as f64 * r.area() / total).collect();
        let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut left = n_rest - alloc.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            if frame[i].area() > 0.0 {
                alloc[i] += 1;
                left -= 1;
            }
        }
        for (r, n) in frame.iter().zip(alloc) {
            if r.area() > 0.0 {
                grid_fill(*r, n, &mut nodes, &mut weights);
            }
        }
    }

    let (delta_min, delta_max) = spacing(&nodes);
    if !(delta_min > 0.0) {
        return Err(config_err("frequency nodes are not distinct"));
    }
    if delta_max / delta_min > 50.0 {
        return Err(config_err(format!(
            "frequency sample is not quasi-uniform: delta_max/delta_min = {}",
            delta_max / delta_min
        )));
    }
    let targets = nodes.par_iter().map(|&e| target.cf(e)).collect();
    Ok(FreqSample { nodes, weights, targets, eta_prime, core, delta_min, delta_max })
}

/// `(min_{p≠q} |η_p − η_q|, max_p min_{q≠p} |η_p − η_q|)` via bucketing.
pub fn spacing(nodes: &[[f64; 2]]) -> (f64, f64) {
    let n = nodes.len();
    if n < 2 {
        return (f64::INFINITY, 0.0);
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in nodes {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let ext = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-300);
    let g = ((n as f64).sqrt().ceil() as usize).max(1);
    let cell = ext / g as f64 * (1.0 + 1e-12);
    let idx = |v: f64, a: usize| (((v - lo[a]) / cell) as usize).min(g - 1);
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); g * g];
    for (i, p) in nodes.iter().enumerate() {
        buckets[idx(p[0], 0) * g + idx(p[1], 1)].push(i as u32);
    }
    let nn: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let p = nodes[i];
            let (ci, cj) = (idx(p[0], 0) as isize, idx(p[1], 1) as isize);
            let mut best = f64::INFINITY;
            let mut ring = 0isize;
            loop {
                for di in -ring..=ring {
                    for dj in -ring..=ring {
                        if di.abs() != ring && dj.abs() != ring {
                            continue;
                        }
                        let (a, b) = (ci + di, cj + dj);
                        if a < 0 || b < 0 || a >= g as isize || b >= g as isize {
                            continue;
                        }
                        for &q in &buckets[a as usize * g + b as usize] {
                            if q as usize != i {
                                let d = ((nodes[q as usize][0] - p[0]).powi(2) + (nodes[q as usize][1] - p[1]).powi(2)).sqrt();
                                best = best.min(d);
                            }
                        }
                    }
                }
                // every unvisited bucket is at least `ring * cell` away
                if best <= ring as f64 * cell || ring > g as isize {
                    break;
                }
                ring += 1;
            }
            best
        })
        .collect();
    let dmin = nn.iter().copied().fold(f64::INFINITY, f64::min);
    let dmax = nn.iter().copied().fold(0.0, f64::max);
    (dmin, dmax)
}
