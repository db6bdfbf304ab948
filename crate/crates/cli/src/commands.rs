//! The experiment commands. Each `run_*` function does the numerical work
//! and returns structured results; each `cmd_*` wraps it with file output.

use std::path::{Path, PathBuf};

use monocvar::bellman::{outer_search, BoundaryMode, KernelTable, OuterResult, PolicyTable, ProblemSpec};
use monocvar::charfn::{CharFn, Kou2DParams};
use monocvar::kernelfit::{fit_metrics, read_kernel, train, write_kernel, AdamSettings, FitMetrics, MixtureParams, TrainReport};
use monocvar::lattice::{GridConfig, Lattice};
use monocvar::mcvalidate::{simulate, SampleStats};
use serde::{Deserialize, Serialize};

use crate::config::{selftest_target, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{k, sci, Run};

/// Grid used for the CF error metrics, per axis.
pub const METRIC_GRID: usize = 401;

// ---------------------------------------------------------------- training

pub struct TrainOutcome {
    pub report: TrainReport,
    pub metrics: FitMetrics,
}

pub fn run_train(cfg: &RunConfig) -> CliResult<TrainOutcome> {
    let tc = &cfg.kernel.train;
    let (report, metrics) = if cfg.kernel.target == "mixture-selftest" {
        let target = selftest_target();
        let r = train(&target, tc)?;
        let m = fit_metrics(&r.theta, &target, tc.eta_prime, METRIC_GRID)?;
        (r, m)
    } else {
        let target = cfg.model_params()?;
        let r = train(&target, tc)?;
        let m = fit_metrics(&r.theta, &target, tc.eta_prime, METRIC_GRID)?;
        (r, m)
    };
    Ok(TrainOutcome { report, metrics })
}

fn kernel_manifest(cfg: &RunConfig, r: &TrainReport) -> Vec<(String, String)> {
    let tc = &cfg.kernel.train;
    let a1 = AdamSettings::amsgrad(tc.lr1);
    let rs = &r.rescale;
    let kv = |k: &str, v: String| (k.to_string(), v);
    vec![
        kv("config_sha256", cfg.hash()),
        kv("target", cfg.kernel.target.clone()),
        kv("model_preset", cfg.model.preset.clone()),
        kv("seed", tc.seed.to_string()),
        kv("components", tc.components.to_string()),
        kv("samples", tc.samples.to_string()),
        kv("epochs", format!("{}+{}", tc.epochs1, tc.epochs2)),
        kv("learning_rates", format!("{}:{}", tc.lr1, tc.lr2)),
        kv("adam_beta1", a1.beta1.to_string()),
        kv("adam_beta2", a1.beta2.to_string()),
        kv("adam_eps", a1.eps.to_string()),
        kv("rescale", format!("{} re[{:e},{:e}] im[{:e},{:e}]", rs.enabled, rs.re_min, rs.re_max, rs.im_min, rs.im_max)),
        kv("final_loss", format!("{:e}", r.final_loss)),
        kv("delta_min", format!("{:e}", r.spacing_constants.0)),
        kv("delta_max", format!("{:e}", r.spacing_constants.1)),
    ]
}

pub fn cmd_train_kernel(cfg: &RunConfig, out: &Path) -> CliResult<TrainOutcome> {
    let mut run = Run::new(out, "train-kernel", &cfg.hash())?;
    run.preset("model", &cfg.model.preset);
    run.preset("kernel_target", &cfg.kernel.target);
    run.seed("train", cfg.kernel.train.seed);
    let outcome = run.stage("train", || run_train(cfg))?;
    let r = &outcome.report;
    run.write_text("kernel.txt", &write_kernel(&r.theta, &kernel_manifest(cfg, r)))?;
    run.write_csv("fit_metrics.csv", &["part", "L1", "L2", "MPE"], &metric_rows(&outcome.metrics))?;
    let hist: Vec<Vec<String>> = r.history.iter().enumerate().map(|(e, l)| vec![e.to_string(), sci(*l)]).collect();
    run.write_csv("training_history.csv", &["epoch", "loss"], &hist)?;
    run.write_csv(
        "training_summary.csv",
        &["final_loss", "steps", "delta_min", "delta_max"],
        &[vec![sci(r.final_loss), r.steps.to_string(), sci(r.spacing_constants.0), sci(r.spacing_constants.1)]],
    )?;
    run.finish()?;
    Ok(outcome)
}

fn metric_rows(m: &FitMetrics) -> Vec<Vec<String>> {
    vec![
        vec!["Re".into(), sci(m.l1_re), sci(m.l2_re), sci(m.mpe_re)],
        vec!["Im".into(), sci(m.l1_im), sci(m.l2_im), sci(m.mpe_im)],
    ]
}

pub fn load_kernel(path: &Path) -> CliResult<MixtureParams> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(read_kernel(&text)?.theta)
}

// ------------------------------------------------------------------- solve

pub struct SolveLevel {
    pub level: u32,
    pub grid: GridConfig,
    pub result: OuterResult,
    pub mass_min: f64,
    pub mass_max: f64,
}

/// Outer search at one lattice configuration.
pub fn solve_grid(
    grid: &GridConfig,
    spec: &ProblemSpec,
    theta: &MixtureParams,
    params: &Kou2DParams,
    cfg: &RunConfig,
    boundary: BoundaryMode,
) -> CliResult<SolveLevel> {
    spec.validate(theta.dt())?;
    let lat = Lattice::build(grid)?;
    let kernel = KernelTable::new(&lat, |y| theta.density(y), params.boundary_factors()?)?;
    let opts = monocvar::bellman::SolveOptions { boundary, ..cfg.solve_options() };
    let result = outer_search(spec, &lat, &kernel, &opts)?;
    log::info!(
        "level {}: objective {:.4} E {:.4} CVaR {:.4} w* {:.4} (thousands)",
        grid.level,
        result.value / 1e3,
        result.expected_wealth / 1e3,
        result.cvar / 1e3,
        result.w_star / 1e3
    );
    Ok(SolveLevel { level: grid.level, grid: grid.clone(), result, mass_min: kernel.mass_min, mass_max: kernel.mass_max })
}

pub fn run_solve(cfg: &RunConfig, theta: &MixtureParams) -> CliResult<Vec<SolveLevel>> {
    let params = cfg.model_params()?;
    let spec = cfg.problem_spec();
    cfg.lattice
        .levels
        .iter()
        .map(|&l| solve_grid(&cfg.grid(l)?, &spec, theta, &params, cfg, cfg.solve.boundary))
        .collect()
}

pub const SOLVE_HEADER: [&str; 16] = [
    "level",
    "n_s",
    "n_b",
    "n_u",
    "n_w",
    "objective_k",
    "mean_k",
    "cvar_k",
    "w_star_k",
    "u0",
    "w_star_interior",
    "kernel_mass_min",
    "kernel_mass_max",
    "envelope_ratio",
    "lipschitz_ratio",
    "clamped",
];

fn solve_row(s: &SolveLevel) -> Vec<String> {
    let r = &s.result;
    let g = &s.grid;
    vec![
        s.level.to_string(),
        g.n_s.to_string(),
        g.n_b.to_string(),
        g.n_u.to_string(),
        g.n_w.to_string(),
        k(r.value),
        k(r.expected_wealth),
        k(r.cvar),
        k(r.w_star),
        format!("{:.6}", r.policy.u0_value()),
        r.w_star_interior.to_string(),
        format!("{:.12}", s.mass_min),
        format!("{:.12}", s.mass_max),
        format!("{:.9}", r.envelope_ratio),
        format!("{:.9}", r.lipschitz_ratio),
        r.clamped.to_string(),
    ]
}

/// Metadata stored next to the policy layers of one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub level: u32,
    pub grid: GridConfig,
    pub problem: ProblemSpec,
    pub w_star: f64,
    pub c_star: usize,
    pub u0: u16,
    pub shape: [usize; 2],
    pub origin: [usize; 2],
    pub scheme_objective: f64,
    pub scheme_mean: f64,
    pub scheme_cvar: f64,
}

fn layer_name(m: usize, c: usize) -> String {
    format!("layer_m{m:03}_c{c:04}.txt")
}

fn write_policy(run: &mut Run, s: &SolveLevel, spec: &ProblemSpec) -> CliResult<()> {
    let r = &s.result;
    let p = &r.policy;
    let dir = format!("policy/level{}", s.level);
    let meta = PolicyMeta {
        level: s.level,
        grid: s.grid.clone(),
        problem: spec.clone(),
        w_star: r.w_star,
        c_star: r.c_star,
        u0: p.u0,
        shape: [p.shape.0, p.shape.1],
        origin: [p.origin.0, p.origin.1],
        scheme_objective: r.value,
        scheme_mean: r.expected_wealth,
        scheme_cvar: r.cvar,
    };
    run.write_text(&format!("{dir}/meta.toml"), &toml::to_string(&meta).map_err(|e| CliError::Config(e.to_string()))?)?;
    for (m, layer) in p.layers.iter().enumerate() {
        let mut text = String::with_capacity(layer.len() * 4);
        for row in layer.chunks(p.shape.1) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            text.push_str(&line.join(" "));
            text.push('\n');
        }
        run.write_text(&format!("{dir}/{}", layer_name(m, r.c_star)), &text)?;
    }
    Ok(())
}

/// Reads one level's policy directory. Missing layers are reported together.
pub fn read_policy(dir: &Path) -> CliResult<(PolicyMeta, PolicyTable)> {
    let meta_path = dir.join("meta.toml");
    let text = std::fs::read_to_string(&meta_path).map_err(|e| CliError::io(&meta_path, e))?;
    let meta: PolicyMeta = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", meta_path.display())))?;
    let lat = Lattice::build(&meta.grid)?;
    let cells = meta.shape[0] * meta.shape[1];
    let mut missing = Vec::new();
    let mut layers = Vec::with_capacity(meta.problem.periods);
    for m in 0..meta.problem.periods {
        let path = dir.join(layer_name(m, meta.c_star));
        let layer: Option<Vec<u16>> = std::fs::read_to_string(&path)
            .ok()
            .and_then(|t| t.split_whitespace().map(|v| v.parse().ok()).collect())
            .filter(|l: &Vec<u16>| l.len() == cells && l.iter().all(|v| (*v as usize) < lat.u_nodes.len()));
        match layer {
            Some(l) => layers.push(l),
            None => missing.push(format!("(m={m}, w_c={})", meta.c_star)),
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Config(format!("policy in {} is incomplete; missing or invalid keys: {}", dir.display(), missing.join(", "))));
    }
    let table = PolicyTable {
        w: meta.w_star,
        u_nodes: lat.u_nodes.clone(),
        u0: meta.u0,
        shape: (meta.shape[0], meta.shape[1]),
        origin: (meta.origin[0], meta.origin[1]),
        layers,
    };
    Ok((meta, table))
}

/// Allocation to the first asset against time and pre-contribution wealth,
/// read along the equal-split diagonal.
pub fn heatmap_rows(s: &SolveLevel, spec: &ProblemSpec) -> CliResult<Vec<Vec<String>>> {
    let lat = Lattice::build(&s.grid)?;
    let p = &s.result.policy;
    let n = 121;
    let (lo, hi) = (1e3f64.ln(), 1e7f64.ln());
    let mut rows = Vec::with_capacity(n * spec.periods);
    for m in 0..spec.periods {
        for i in 0..n {
            let w = (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp();
            let x = (0.5 * w).ln();
            let (u, _) = p.lookup(&lat, m, x, x);
            rows.push(vec![m.to_string(), format!("{:.6}", m as f64 * spec.dt()), k(w), format!("{u:.6}")]);
        }
    }
    Ok(rows)
}

pub fn cmd_solve(cfg: &RunConfig, kernel_path: &Path, out: &Path) -> CliResult<Vec<SolveLevel>> {
    let mut run = Run::new(out, "solve", &cfg.hash())?;
    run.preset("model", &cfg.model.preset);
    run.preset("lattice", &cfg.lattice.preset);
    run.preset("kernel_file", kernel_path.display().to_string());
    let theta = load_kernel(kernel_path)?;
    let params = cfg.model_params()?;
    let spec = cfg.problem_spec();
    let mut levels = Vec::new();
    for &l in &cfg.lattice.levels {
        let grid = cfg.grid(l)?;
        let s = run.stage(&format!("solve_level{l}"), || solve_grid(&grid, &spec, &theta, &params, cfg, cfg.solve.boundary))?;
        write_policy(&mut run, &s, &spec)?;
        let thr: Vec<Vec<String>> =
            s.result.values.iter().zip(&Lattice::build(&grid)?.w_nodes).map(|(v, w)| vec![k(*w), k(*v)]).collect();
        run.write_csv(&format!("thresholds_level{l}.csv"), &["w_k", "objective_k"], &thr)?;
        run.write_csv(&format!("heatmap_level{l}.csv"), &["m", "t", "wealth_k", "u"], &heatmap_rows(&s, &spec)?)?;
        levels.push(s);
    }
    let rows: Vec<Vec<String>> = levels.iter().map(solve_row).collect();
    run.write_csv("solve.csv", &SOLVE_HEADER, &rows)?;
    run.finish()?;
    Ok(levels)
}

// ---------------------------------------------------------------- frontier

pub struct FrontierPoint {
    pub gamma: f64,
    pub result: OuterResult,
}

pub fn run_frontier(cfg: &RunConfig, theta: &MixtureParams, gammas: &[f64]) -> CliResult<Vec<FrontierPoint>> {
    if gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
        return Err(CliError::Config("gammas must be positive".into()));
    }
    let mut gs = gammas.to_vec();
    gs.sort_by(f64::total_cmp);
    gs.dedup();
    let params = cfg.model_params()?;
    let level = *cfg.lattice.levels.iter().max().expect("validated nonempty");
    let grid = cfg.grid(level)?;
    let mut out = Vec::with_capacity(gs.len());
    for g in gs {
        let spec = ProblemSpec { gamma: g, ..cfg.problem_spec() };
        let s = solve_grid(&grid, &spec, theta, &params, cfg, cfg.solve.boundary)?;
        out.push(FrontierPoint { gamma: g, result: s.result });
    }
    Ok(out)
}

pub fn cmd_frontier(cfg: &RunConfig, kernel_path: &Path, gammas: &[f64], out: &Path) -> CliResult<Vec<FrontierPoint>> {
    let mut run = Run::new(out, "frontier", &cfg.hash())?;
    run.preset("lattice", &cfg.lattice.preset);
    let theta = load_kernel(kernel_path)?;
    let pts = run.stage("frontier", || run_frontier(cfg, &theta, gammas))?;
    let rows: Vec<Vec<String>> = pts
        .iter()
        .map(|p| vec![format!("{}", p.gamma), k(p.result.cvar), k(p.result.expected_wealth), k(p.result.w_star), k(p.result.value)])
        .collect();
    run.write_csv("frontier.csv", &["gamma", "cvar_k", "mean_k", "w_star_k", "objective_k"], &rows)?;
    run.finish()?;
    Ok(pts)
}

// ---------------------------------------------------------------- validate

/// Scheme/simulation comparison for one level.
#[derive(Debug, Clone)]
pub struct McComparison {
    pub level: u32,
    pub stats: SampleStats,
    pub scheme_mean: f64,
    pub scheme_cvar: f64,
    pub escape_fraction: f64,
    pub clamped_lookups: u64,
    pub terminal: Vec<f64>,
}

/// CVaR agreement tolerance: the larger of 0.5 thousand and the 99% CI half-width of the mean.
pub const CVAR_TOL_FLOOR: f64 = 500.0;

impl McComparison {
    pub fn mean_gap(&self) -> f64 {
        (self.scheme_mean - self.stats.mean).abs()
    }
    pub fn mean_within_ci(&self) -> bool {
        self.mean_gap() <= self.stats.ci99_halfwidth
    }
    pub fn cvar_gap(&self) -> f64 {
        (self.scheme_cvar - self.stats.cvar).abs()
    }
    pub fn cvar_tolerance(&self) -> f64 {
        CVAR_TOL_FLOOR.max(self.stats.ci99_halfwidth)
    }
    pub fn cvar_within_tol(&self) -> bool {
        self.cvar_gap() <= self.cvar_tolerance()
    }
}

pub fn run_validate_level(
    cfg: &RunConfig,
    meta_level: u32,
    grid: &GridConfig,
    spec: &ProblemSpec,
    policy: &PolicyTable,
    scheme: (f64, f64),
) -> CliResult<McComparison> {
    let params = cfg.model_params()?;
    let lat = Lattice::build(grid)?;
    let sim = monocvar::mcvalidate::SimConfig { alpha: spec.alpha, ..cfg.sim() };
    let (r, stats) = simulate(policy, spec, &lat, &params, &sim)?;
    Ok(McComparison {
        level: meta_level,
        stats,
        scheme_mean: scheme.0,
        scheme_cvar: scheme.1,
        escape_fraction: r.escape_fraction,
        clamped_lookups: r.clamped_lookups,
        terminal: r.terminal,
    })
}

pub const MC_HEADER: [&str; 14] = [
    "level",
    "paths",
    "scheme_mean_k",
    "scheme_cvar_k",
    "mc_mean_k",
    "ci99_k",
    "mc_cvar_k",
    "mc_median_k",
    "mean_gap_k",
    "mean_within_ci",
    "cvar_gap_k",
    "cvar_within_tol",
    "escape_fraction",
    "clamped_lookups",
];

pub fn mc_row(c: &McComparison) -> Vec<String> {
    vec![
        c.level.to_string(),
        c.stats.n.to_string(),
        k(c.scheme_mean),
        k(c.scheme_cvar),
        k(c.stats.mean),
        k(c.stats.ci99_halfwidth),
        k(c.stats.cvar),
        k(c.stats.median),
        k(c.mean_gap()),
        c.mean_within_ci().to_string(),
        k(c.cvar_gap()),
        c.cvar_within_tol().to_string(),
        format!("{:.6}", c.escape_fraction),
        c.clamped_lookups.to_string(),
    ]
}

/// Level directories `level<L>` under a policy directory, in level order.
pub fn policy_levels(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut levels: Vec<(u32, PathBuf)> = rd
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().to_string();
            name.strip_prefix("level").and_then(|l| l.parse().ok()).map(|l| (l, e.path()))
        })
        .collect();
    levels.sort();
    if levels.is_empty() {
        return Err(CliError::Config(format!("no level directories in {}", dir.display())));
    }
    Ok(levels.into_iter().map(|(_, p)| p).collect())
}

pub fn cmd_validate(cfg: &RunConfig, policy_dir: &Path, out: &Path) -> CliResult<Vec<McComparison>> {
    let mut run = Run::new(out, "validate", &cfg.hash())?;
    run.preset("model", &cfg.model.preset);
    run.seed("mc", cfg.mc.seed);
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for dir in policy_levels(policy_dir)? {
        let (meta, policy) = read_policy(&dir)?;
        let c = run.stage(&format!("mc_level{}", meta.level), || {
            run_validate_level(cfg, meta.level, &meta.grid, &meta.problem, &policy, (meta.scheme_mean, meta.scheme_cvar))
        })?;
        if cfg.mc.dump_samples > 0 {
            let dump: Vec<Vec<String>> =
                c.terminal.iter().take(cfg.mc.dump_samples).enumerate().map(|(i, w)| vec![i.to_string(), k(*w)]).collect();
            run.write_csv(&format!("mc_samples_level{}.csv", meta.level), &["path", "terminal_wealth_k"], &dump)?;
        }
        rows.push(mc_row(&c));
        all.push(c);
    }
    run.write_csv("mc.csv", &MC_HEADER, &rows)?;
    run.finish()?;
    Ok(all)
}

// -------------------------------------------------------------- robustness

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobustnessMode {
    LargerDomain,
    SmallerDomain,
    ConstantBc,
    ConstantBcLarge,
}

/// Interior half-widths used by the domain variants.
pub const LARGER_HALF_WIDTH: f64 = 10.0;
pub const SMALLER_HALF_WIDTH: f64 = 6.25;

impl RobustnessMode {
    pub fn parse(s: &str) -> CliResult<Self> {
        match s {
            "larger-domain" => Ok(Self::LargerDomain),
            "smaller-domain" => Ok(Self::SmallerDomain),
            "constant-bc" => Ok(Self::ConstantBc),
            "constant-bc-large" => Ok(Self::ConstantBcLarge),
            _ => Err(CliError::Config(format!(
                "unknown robustness mode `{s}` (expected larger-domain, smaller-domain, constant-bc or constant-bc-large)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::LargerDomain => "larger-domain",
            Self::SmallerDomain => "smaller-domain",
            Self::ConstantBc => "constant-bc",
            Self::ConstantBcLarge => "constant-bc-large",
        }
    }

    pub fn grid(self, base: &GridConfig) -> CliResult<GridConfig> {
        Ok(match self {
            Self::LargerDomain | Self::ConstantBcLarge => base.with_half_width(LARGER_HALF_WIDTH)?,
            Self::SmallerDomain => base.with_half_width(SMALLER_HALF_WIDTH)?,
            Self::ConstantBc => base.clone(),
        })
    }

    pub fn boundary(self) -> BoundaryMode {
        match self {
            Self::ConstantBc | Self::ConstantBcLarge => BoundaryMode::Constant,
            _ => BoundaryMode::Asymptotic,
        }
    }
}

pub struct RobustnessRow {
    pub level: u32,
    pub variant: SolveLevel,
    pub baseline_value: f64,
    pub baseline_mean: f64,
    pub baseline_cvar: f64,
    pub baseline_w_star: f64,
}

impl RobustnessRow {
    pub fn objective_rel_diff(&self) -> f64 {
        (self.variant.result.value - self.baseline_value).abs() / self.baseline_value.abs()
    }
}

/// Reruns each level under the modified preset. A precomputed baseline may
/// be passed to avoid solving it again.
pub fn run_robustness(
    cfg: &RunConfig,
    theta: &MixtureParams,
    mode: RobustnessMode,
    baseline: Option<&[SolveLevel]>,
) -> CliResult<Vec<RobustnessRow>> {
    let owned;
    let base = match baseline {
        Some(b) => b,
        None => {
            owned = run_solve(cfg, theta)?;
            &owned[..]
        }
    };
    let params = cfg.model_params()?;
    let spec = cfg.problem_spec();
    base.iter()
        .map(|b| {
            let grid = mode.grid(&b.grid)?;
            let v = solve_grid(&grid, &spec, theta, &params, cfg, mode.boundary())?;
            Ok(RobustnessRow {
                level: b.level,
                variant: v,
                baseline_value: b.result.value,
                baseline_mean: b.result.expected_wealth,
                baseline_cvar: b.result.cvar,
                baseline_w_star: b.result.w_star,
            })
        })
        .collect()
}

pub fn cmd_robustness(cfg: &RunConfig, kernel_path: &Path, mode: RobustnessMode, out: &Path) -> CliResult<Vec<RobustnessRow>> {
    let mut run = Run::new(out, &format!("robustness-{}", mode.name()), &cfg.hash())?;
    run.preset("lattice", &cfg.lattice.preset);
    run.preset("mode", mode.name());
    let theta = load_kernel(kernel_path)?;
    let rows = run.stage("robustness", || run_robustness(cfg, &theta, mode, None))?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let v = &r.variant.result;
            vec![
                r.level.to_string(),
                r.variant.grid.n_s.to_string(),
                k(v.expected_wealth),
                k(v.cvar),
                k(v.w_star),
                k(v.value),
                k(r.baseline_mean),
                k(r.baseline_cvar),
                k(r.baseline_w_star),
                k(r.baseline_value),
                sci(r.objective_rel_diff()),
            ]
        })
        .collect();
    run.write_csv(
        &format!("robustness_{}.csv", mode.name()),
        &[
            "level",
            "variant_n",
            "variant_mean_k",
            "variant_cvar_k",
            "variant_w_star_k",
            "variant_objective_k",
            "base_mean_k",
            "base_cvar_k",
            "base_w_star_k",
            "base_objective_k",
            "objective_rel_diff",
        ],
        &table,
    )?;
    run.finish()?;
    Ok(rows)
}
