//! Fast self-checks run by `monocvar test-properties`.

use monocvar::bellman::step::{intervene_batch, propagate_batch, ControlLogs, WorkPool};
use monocvar::bellman::{bilinear, locate, outer_search, propagate_interior, KernelTable, ProblemSpec, SolveOptions};
use monocvar::charfn::{boundary_factors, CharFn, Kou2DParams, Selector};
use monocvar::kernelfit::mixture::COORDS_PER_COMPONENT;
use monocvar::kernelfit::{loss, loss_and_grad, sample_frequencies, MixtureBounds, MixtureParams, Rescale, Reparam};
use monocvar::lattice::{GridConfig, Lattice, DEFAULT_W_FLOOR_LOG};
use monocvar::mcvalidate::{cvar_dual_objective, estimate_stats};
use std::f64::consts::PI;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {} ({})", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn small_lattice(n: usize, half_width: f64, centre: f64) -> Lattice {
    Lattice::build(&GridConfig {
        s_min: centre - half_width,
        s_max: centre + half_width,
        b_min: centre - half_width,
        b_max: centre + half_width,
        n_s: n,
        n_b: n,
        n_u: 8,
        n_w: 8,
        w_max: 5.0,
        w_floor_log: DEFAULT_W_FLOOR_LOG,
        level: 0,
    })
    .expect("valid test lattice")
}

fn test_kernel(lat: &Lattice) -> (MixtureParams, KernelTable) {
    let mix = MixtureParams::gaussian([0.3, -0.2], 0.9, 0.7, 0.4, 1.0);
    let f = boundary_factors(&mix).expect("finite moments");
    let k = KernelTable::new(lat, |y| mix.density(y), f).expect("kernel");
    (mix, k)
}

pub fn fft_matches_direct_sum() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for n in [4usize, 8, 16] {
        let lat = small_lattice(n, 2.0, 0.0);
        let (_, ker) = test_kernel(&lat);
        let nb = lat.nb();
        let v: Vec<f64> = (0..lat.len()).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let fast = propagate_interior(&v, &ker, &lat).expect("finite input");
        for k in lat.s.interior() {
            for j in lat.b.interior() {
                let mut acc = 0.0;
                for l in 0..lat.ns() {
                    for d in 0..nb {
                        acc += lat.trapezoid_weight(l, d) * ker.g(l as isize - k as isize, d as isize - j as isize) * v[l * nb + d];
                    }
                }
                worst = worst.max((lat.s.delta * lat.b.delta * acc - fast[k * nb + j]).abs());
            }
        }
    }
    Check::new("fft-equals-direct-sum", worst <= 1e-10, format!("max abs diff {worst:.3e} on grids up to 16x16"))
}

pub fn backward_step_is_monotone() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let lat = small_lattice(8, 2.0, 1.0);
    let (mix, ker) = test_kernel(&lat);
    let factors = boundary_factors(&mix).expect("finite moments");
    let logs = ControlLogs::new(&lat.u_nodes);
    let pool = WorkPool::new();
    let mut violations = 0usize;
    for _ in 0..100 {
        let lo: Vec<f64> = (0..lat.len()).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|v| v + rng.gen_range(0.0..1.0)).collect();
        let step = |v: &[f64]| {
            let mut plus = vec![0.0; v.len()];
            propagate_batch(&lat, &ker, &factors, v, &mut plus, 1, &pool).expect("finite");
            let mut minus = vec![0.0; v.len()];
            intervene_batch(&lat, &logs, 0.5, DEFAULT_W_FLOOR_LOG, &plus, &mut minus, 1, 1, None);
            minus
        };
        let (a, b) = (step(&lo), step(&hi));
        violations += a.iter().zip(&b).filter(|(x, y)| x > y).count();
    }
    Check::new("backward-step-monotone", violations == 0, format!("{violations} order violations over 100 pairs"))
}

pub fn moment_identities() -> Check {
    let mut worst = 0.0f64;
    for p in [Kou2DParams::synthetic(), Kou2DParams::calibrated()] {
        let gs = p.exp_moment(Selector::S).expect("finite");
        let gb = p.exp_moment(Selector::B).expect("finite");
        worst = worst.max((gs - (p.mu_s * p.dt).exp()).abs());
        worst = worst.max((gb - (p.mu_b * p.dt).exp()).abs());
        worst = worst.max((p.cf([0.0, 0.0]) - 1.0).norm());
    }
    Check::new("cf-moment-identities", worst <= 1e-12, format!("max abs deviation {worst:.3e}"))
}

pub fn bilinear_reproduces_affine() -> Check {
    let lat = small_lattice(8, 2.0, 0.0);
    let f = |s: f64, b: f64| 2.0 * s - 3.0 * b + 1.0;
    let mut v = Vec::with_capacity(lat.len());
    for i in 0..lat.ns() {
        for j in 0..lat.nb() {
            v.push(f(lat.s.nodes[i], lat.b.nodes[j]));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut weights_ok) = (0.0f64, true);
    for _ in 0..10_000 {
        let p = [rng.gen_range(lat.s.pad_lo..lat.s.pad_hi), rng.gen_range(lat.b.pad_lo..lat.b.pad_hi)];
        worst = worst.max((bilinear(&v, &lat, p).0 - f(p[0], p[1])).abs());
        let w = locate(&lat, p[0], p[1]).weights();
        weights_ok &= w.iter().all(|x| *x >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-15;
    }
    Check::new("bilinear-affine-exact", worst <= 1e-13 && weights_ok, format!("max error {worst:.3e}, weights ok {weights_ok}"))
}

pub fn loss_gradient_matches_fd() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let target = Kou2DParams::synthetic();
    let s = sample_frequencies(&target, 30.0, 400, 0.7).expect("sample");
    let reparam = Reparam::new(MixtureBounds::default());
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(1..4);
        let coords: Vec<f64> = (0..n * COORDS_PER_COMPONENT).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let rescale = Rescale::from_sample(&s, rng.gen_bool(0.5));
        let (_, g) = loss_and_grad(&coords, &reparam, 1.0, &s, None, &rescale);
        let h = 1e-6;
        for j in 0..coords.len() {
            let (mut up, mut dn) = (coords.clone(), coords.clone());
            up[j] += h;
            dn[j] -= h;
            let fd = (loss(&reparam.to_theta(&up, 1.0), &s, &rescale) - loss(&reparam.to_theta(&dn, 1.0), &s, &rescale)) / (2.0 * h);
            worst = worst.max((fd - g[j]).abs() / g[j].abs().max(fd.abs()).max(1e-4));
        }
    }
    Check::new("loss-gradient-fd", worst <= 1e-5, format!("max relative error {worst:.3e} over 20 configurations"))
}

pub fn outer_search_contracts() -> Check {
    let mix = MixtureParams::gaussian([0.06, 0.02], 0.2, 0.1, 0.1, 1.0);
    let lat = small_lattice(32, 3.0, 0.5);
    let ker = KernelTable::new(&lat, |y| mix.density(y), boundary_factors(&mix).expect("finite")).expect("kernel");
    let spec = ProblemSpec { gamma: 1.0, alpha: 0.1, horizon: 3.0, periods: 3, contributions: vec![1.0; 3], initial_wealth: 0.0 };
    match outer_search(&spec, &lat, &ker, &SolveOptions::default()) {
        Ok(r) => Check::new(
            "outer-lipschitz-and-envelope",
            r.lipschitz_ratio <= 1.0 && r.envelope_ratio <= 1.0,
            format!("lipschitz ratio {:.3}, envelope ratio {:.3}", r.lipschitz_ratio, r.envelope_ratio),
        ),
        Err(e) => Check::new("outer-lipschitz-and-envelope", false, e.to_string()),
    }
}

pub fn cvar_dual_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let v: Vec<f64> = (0..5000).map(|_| rng.gen_range(0.0..1.0f64).powi(3) * 1000.0).collect();
    let alpha = 0.05;
    let st = estimate_stats(&v, alpha).expect("samples");
    let best = v.iter().map(|&w| cvar_dual_objective(&v, alpha, w)).fold(f64::NEG_INFINITY, f64::max);
    let gap = (best - st.cvar).abs();
    Check::new("cvar-dual-identity", gap <= 1e-9 * st.cvar.abs().max(1.0), format!("tail mean {:.6}, dual {:.6}", st.cvar, best))
}

/// Kernel mass of a trained kernel on the interior anchors of a lattice.
pub fn kernel_mass(theta: &MixtureParams, grid: &GridConfig, params: &Kou2DParams) -> Check {
    let res = Lattice::build(grid).and_then(|lat| {
        KernelTable::new(&lat, |y| theta.density(y), params.boundary_factors()?)
    });
    match res {
        Ok(k) => Check::new("kernel-mass-bound", k.mass_max <= 1.01, format!("mass in [{:.9}, {:.9}]", k.mass_min, k.mass_max)),
        Err(e) => Check::new("kernel-mass-bound", false, e.to_string()),
    }
}

/// Squared kernel error measured in real space and in Fourier space. Both
/// sides use one exact discrete Fourier pair on `[-A, A)^2`, so the two
/// sums agree up to aliasing and truncation.
pub fn plancherel(theta: &MixtureParams, params: &Kou2DParams) -> Check {
    let m = 384usize;
    let a = 4.0;
    let dy = 2.0 * a / m as f64;
    let deta = 2.0 * PI / (m as f64 * dy);
    let etas: Vec<f64> = (0..m).map(|k| (k as f64 - (m / 2) as f64) * deta).collect();
    let ys: Vec<f64> = (0..m).map(|k| -a + k as f64 * dy).collect();
    let scale = deta * deta / (4.0 * PI * PI);

    let mut g = vec![Complex64::new(0.0, 0.0); m * m];
    let mut fourier = 0.0;
    for (i, &es) in etas.iter().enumerate() {
        for (j, &eb) in etas.iter().enumerate() {
            let t = params.cf([es, eb]);
            g[i * m + j] = t;
            fourier += (theta.cf([es, eb]) - t).norm_sqr();
        }
    }
    fourier *= scale;

    // reference density by separable inverse sums
    let phase: Vec<Complex64> = ys.iter().flat_map(|&y| etas.iter().map(move |&e| Complex64::from_polar(1.0, -e * y))).collect();
    let mut half = vec![Complex64::new(0.0, 0.0); m * m];
    for i in 0..m {
        for jy in 0..m {
            half[i * m + jy] = (0..m).map(|j| g[i * m + j] * phase[jy * m + j]).sum();
        }
    }
    let mut real_space = 0.0;
    for iy in 0..m {
        for jy in 0..m {
            let v: Complex64 = (0..m).map(|i| half[i * m + jy] * phase[iy * m + i]).sum::<Complex64>() * scale;
            real_space += (theta.density([ys[iy], ys[jy]]) - v.re).powi(2);
        }
    }
    real_space *= dy * dy;
    let rel = (real_space - fourier).abs() / fourier;
    Check::new(
        "plancherel-consistency",
        rel <= 0.05,
        format!("real-space {real_space:.6e}, fourier {fourier:.6e}, relative gap {rel:.3e}"),
    )
}

pub fn quick_suite() -> Vec<Check> {
    vec![
        fft_matches_direct_sum(),
        backward_step_is_monotone(),
        moment_identities(),
        bilinear_reproduces_affine(),
        loss_gradient_matches_fd(),
        outer_search_contracts(),
        cvar_dual_identity(),
    ]
}
