use monocvar::bellman::{outer_search, solve_fixed_w, KernelTable, PolicyTable, ProblemSpec, SolveOptions};
use monocvar::charfn::{boundary_factors, CharFn, Kou2DParams, Selector};
use monocvar::kernelfit::MixtureParams;
use monocvar::lattice::{GridConfig, Lattice, DEFAULT_W_FLOOR_LOG};
use monocvar::mcvalidate::*;
use rayon::prelude::*;

fn draws(p: &Kou2DParams, n: usize, seed: u64) -> Vec<(f64, f64)> {
    let s = IncrementSampler::new(p).unwrap();
    (0..n as u64).into_par_iter().map(|i| s.sample(&mut path_rng(seed, i))).collect()
}

fn mean_se(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let m = xs.clone().sum::<f64>() / n;
    let v = xs.map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

#[test]
fn exponential_moment_within_ci() {
    for p in [Kou2DParams::synthetic(), Kou2DParams::calibrated()] {
        let d = draws(&p, 10_000_000, 11);
        for sel in [Selector::S, Selector::B, Selector::Both] {
            let a = sel.exponents();
            let (m, se) = mean_se(d.iter().map(|(x, y)| (a[0] * x + a[1] * y).exp()));
            let exact = p.exp_moment(sel).unwrap();
            assert!((m - exact).abs() <= Z99 * se, "{sel:?}: {m} vs {exact} (se {se})");
        }
    }
}

#[test]
fn empirical_cf_matches_closed_form() {
    let p = Kou2DParams::calibrated();
    let d = draws(&p, 200_000, 12);
    let n = d.len() as f64;
    let mut worst = 0.0f64;
    for a in -10..=10 {
        for b in -10..=10 {
            let eta = [a as f64, b as f64];
            let (mut sc, mut ss, mut sc2, mut ss2) = (0.0, 0.0, 0.0, 0.0);
            for (x, y) in &d {
                let ph = eta[0] * x + eta[1] * y;
                let (s, c) = ph.sin_cos();
                sc += c;
                ss += s;
                sc2 += c * c;
                ss2 += s * s;
            }
            let (mc, ms) = (sc / n, ss / n);
            let se_c = ((sc2 / n - mc * mc) / n).sqrt().max(1e-12);
            let se_s = ((ss2 / n - ms * ms) / n).sqrt().max(1e-12);
            let g = p.cf(eta);
            worst = worst.max((mc - g.re).abs() / se_c).max((ms - g.im).abs() / se_s);
        }
    }
    assert!(worst <= 4.0, "largest deviation {worst} standard errors");
}

#[test]
fn increment_moments_match_cumulants() {
    let p = Kou2DParams::calibrated();
    let d = draws(&p, 2_000_000, 13);
    let (mean, cov) = p.increment_moments();
    let (ms, se_s) = mean_se(d.iter().map(|v| v.0));
    let (mb, se_b) = mean_se(d.iter().map(|v| v.1));
    assert!((ms - mean[0]).abs() <= 4.0 * se_s, "{ms} vs {}", mean[0]);
    assert!((mb - mean[1]).abs() <= 4.0 * se_b, "{mb} vs {}", mean[1]);
    let checks = [
        ("var_s", cov[0][0], mean_se(d.iter().map(|v| (v.0 - ms).powi(2)))),
        ("var_b", cov[1][1], mean_se(d.iter().map(|v| (v.1 - mb).powi(2)))),
        ("cov", cov[0][1], mean_se(d.iter().map(|v| (v.0 - ms) * (v.1 - mb)))),
    ];
    for (name, exact, (m, se)) in checks {
        assert!((m - exact).abs() <= 4.0 * se, "{name}: {m} vs {exact} (se {se})");
    }
}

fn lattice(n: usize, half_width: f64, centre: f64, n_u: usize) -> Lattice {
    Lattice::build(&GridConfig {
        s_min: centre - half_width,
        s_max: centre + half_width,
        b_min: centre - half_width,
        b_max: centre + half_width,
        n_s: n,
        n_b: n,
        n_u,
        n_w: 16,
        w_max: 10.0,
        w_floor_log: DEFAULT_W_FLOOR_LOG,
        level: 0,
    })
    .unwrap()
}

#[test]
fn deterministic_compounding() {
    let p = Kou2DParams {
        sigma_s: 0.0,
        sigma_b: 0.0,
        lambda_s: 0.0,
        lambda_b: 0.0,
        lambda_c: 0.0,
        ..Kou2DParams::calibrated()
    };
    let lat = lattice(16, 8.0, 2.0, 8);
    let spec = ProblemSpec { gamma: 1.0, alpha: 0.05, horizon: 6.0, periods: 6, contributions: vec![1.5; 6], initial_wealth: 0.0 };
    let top = (lat.u_nodes.len() - 1) as u16;
    assert_eq!(lat.u_nodes[top as usize], 1.0);
    let cells = (lat.s.n - 1) * (lat.b.n - 1);
    let policy = PolicyTable {
        w: 0.0,
        u_nodes: lat.u_nodes.clone(),
        u0: top,
        shape: (lat.s.n - 1, lat.b.n - 1),
        origin: (*lat.s.interior().start(), *lat.b.interior().start()),
        layers: vec![vec![top; cells]; 6],
    };
    let sim = SimConfig { n_paths: 100, seed: 1, alpha: 0.05, batch: 7 };
    let r = rollout(&policy, &spec, &lat, &p, &sim).unwrap();
    let exact: f64 = (0..6).map(|m| 1.5 * (p.mu_s * (6 - m) as f64).exp()).sum();
    for w in &r.terminal {
        assert!((w - exact).abs() < 1e-9 * exact, "{w} vs {exact}");
    }
}

fn gaussian_setup() -> (Kou2DParams, MixtureParams) {
    let p = Kou2DParams {
        sigma_s: 0.2,
        sigma_b: 0.08,
        rho: 0.1,
        lambda_s: 0.0,
        lambda_b: 0.0,
        lambda_c: 0.0,
        ..Kou2DParams::calibrated()
    };
    let d = p.compensated_drifts();
    let mix = MixtureParams::gaussian(d, p.sigma_s, p.sigma_b, p.rho, 1.0);
    (p, mix)
}

#[test]
fn rollout_is_reproducible_and_thread_independent() {
    let (p, mix) = gaussian_setup();
    let lat = lattice(32, 4.0, 1.0, 8);
    let ker = KernelTable::new(&lat, |y| mix.density(y), boundary_factors(&mix).unwrap()).unwrap();
    let spec = ProblemSpec { gamma: 1.0, alpha: 0.1, horizon: 4.0, periods: 4, contributions: vec![1.0; 4], initial_wealth: 0.0 };
    let sol = solve_fixed_w(2.0, &spec, &lat, &ker, &SolveOptions::default()).unwrap();
    let policy = sol.policy.unwrap();
    let sim = SimConfig { n_paths: 1000, seed: 5, alpha: 0.1, batch: 64 };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| rollout(&policy, &spec, &lat, &p, &sim).unwrap().terminal)
    };
    let a = run(1);
    assert_eq!(a, run(3));
    assert_eq!(a, run(1));
    let other = rollout(&policy, &spec, &lat, &p, &SimConfig { seed: 6, ..sim.clone() }).unwrap();
    assert_ne!(a, other.terminal);
}

#[test]
fn scheme_and_simulation_agree() {
    let (p, mix) = gaussian_setup();
    let lat = lattice(128, 4.0, 1.0, 33);
    let ker = KernelTable::new(&lat, |y| mix.density(y), boundary_factors(&mix).unwrap()).unwrap();
    let spec = ProblemSpec { gamma: 1.0, alpha: 0.1, horizon: 5.0, periods: 5, contributions: vec![1.0; 5], initial_wealth: 0.0 };
    let res = outer_search(&spec, &lat, &ker, &SolveOptions::default()).unwrap();
    let sim = SimConfig { n_paths: 200_000, seed: 17, alpha: spec.alpha, batch: 4096 };
    let (r, st) = simulate(&res.policy, &spec, &lat, &p, &sim).unwrap();
    let gap = (res.expected_wealth - st.mean).abs();
    eprintln!(
        "scheme E={:.5} MC E={:.5} ci={:.5} cvar scheme={:.5} mc={:.5} escape={} clamped={}",
        res.expected_wealth, st.mean, st.ci99_halfwidth, res.cvar, st.cvar, r.escape_fraction, r.clamped_lookups
    );
    assert!(gap <= st.ci99_halfwidth, "gap {gap} exceeds ci {}", st.ci99_halfwidth);
    let dual = cvar_dual_objective(&r.terminal, sim.alpha, st.cvar);
    assert!(dual <= st.cvar + 1e-9);
}
