//! Sectioned run configuration.
//!
//! Precedence, lowest first: built-in defaults, the config file, `--set`
//! overrides in the order given, then command-specific flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use monocvar::bellman::{BoundaryMode, ProblemSpec, SolveOptions};
use monocvar::charfn::Kou2DParams;
use monocvar::kernelfit::{Component, MixtureBounds, MixtureParams, TrainConfig};
use monocvar::lattice::GridConfig;
use monocvar::mcvalidate::SimConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("out"), threads: 0 }
    }
}

/// A named parameter preset plus optional per-field overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub preset: String,
    #[serde(flatten)]
    pub overrides: BTreeMap<String, toml::Value>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { preset: "kou-calibrated".into(), overrides: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelSection {
    /// `model` fits the model CF; `mixture-selftest` fits a known
    /// two-component mixture.
    pub target: String,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self { target: "model".into(), train: TrainConfig::desk() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeSection {
    /// `desk` or `reference`.
    pub preset: String,
    pub levels: Vec<u32>,
    /// Interior half-width of both log axes, keeping the preset spacing.
    pub half_width: Option<f64>,
    /// Level-0 interval counts replacing the preset's; doubled per level.
    pub n_s: Option<usize>,
    pub n_b: Option<usize>,
    pub n_u: Option<usize>,
    pub n_w: Option<usize>,
    /// Threshold cap in currency units.
    pub w_max: Option<f64>,
}

impl Default for LatticeSection {
    fn default() -> Self {
        Self { preset: "desk".into(), levels: vec![0], half_width: None, n_s: None, n_b: None, n_u: None, n_w: None, w_max: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub gamma: f64,
    pub alpha: f64,
    pub horizon: f64,
    pub periods: usize,
    /// Contribution at every decision time, unless `contributions` is given.
    pub contribution: f64,
    pub contributions: Option<Vec<f64>>,
    pub initial_wealth: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        let p = ProblemSpec::dc_reference();
        Self {
            gamma: p.gamma,
            alpha: p.alpha,
            horizon: p.horizon,
            periods: p.periods,
            contribution: p.contributions[0],
            contributions: None,
            initial_wealth: p.initial_wealth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    pub boundary: BoundaryMode,
    pub batch: usize,
    pub check_stability: bool,
}

impl Default for SolveSection {
    fn default() -> Self {
        let o = SolveOptions::default();
        Self { boundary: o.boundary, batch: o.batch, check_stability: o.check_stability }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n_paths: usize,
    pub seed: u64,
    pub batch: usize,
    /// Raw terminal-wealth rows to dump per level (0 disables).
    pub dump_samples: usize,
}

impl Default for McSection {
    fn default() -> Self {
        let s = SimConfig::default();
        Self { n_paths: s.n_paths, seed: s.seed, batch: s.batch, dump_samples: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontierSection {
    pub gammas: Vec<f64>,
}

impl Default for FrontierSection {
    fn default() -> Self {
        Self { gammas: vec![0.01, 0.1, 1.0, 3.0, 10.0, 30.0, 100.0, 1000.0] }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub model: ModelSection,
    pub kernel: KernelSection,
    pub lattice: LatticeSection,
    pub problem: ProblemSection,
    pub solve: SolveSection,
    pub mc: McSection,
    pub frontier: FrontierSection,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses `a.b.c=value`; the value is read as a TOML literal, or as a bare
/// string when that fails.
fn apply_set(table: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let mut cur = table;
    for p in &path[..path.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str, sets: &[String]) -> CliResult<Self> {
        let mut table = toml::Table::try_from(RunConfig::default()).map_err(|e| CliError::Config(e.to_string()))?;
        let file: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        merge(&mut table, file);
        for s in sets {
            apply_set(&mut table, s)?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| CliError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, sets: &[String]) -> CliResult<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("reading {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, sets)
    }

    /// Core validation failures are reported as configuration errors.
    pub fn validate(&self) -> CliResult<()> {
        self.check().map_err(|e| match e {
            CliError::Core(c) => CliError::Config(c.to_string()),
            other => other,
        })
    }

    fn check(&self) -> CliResult<()> {
        self.model_params()?;
        self.kernel.train.validate()?;
        if !["model", "mixture-selftest"].contains(&self.kernel.target.as_str()) {
            return Err(CliError::Config(format!("unknown kernel target `{}`", self.kernel.target)));
        }
        if self.lattice.levels.is_empty() {
            return Err(CliError::Config("lattice.levels is empty".into()));
        }
        for &l in &self.lattice.levels {
            self.grid(l)?.validate()?;
        }
        self.problem_spec().validate(self.problem_spec().dt())?;
        if self.solve.batch == 0 {
            return Err(CliError::Config("solve.batch must be positive".into()));
        }
        self.sim().validate()?;
        if self.frontier.gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(CliError::Config("frontier gammas must be positive".into()));
        }
        Ok(())
    }

    /// Preset parameters with the section's overrides applied.
    pub fn model_params(&self) -> CliResult<Kou2DParams> {
        let base = Kou2DParams::preset(&self.model.preset)
            .ok_or_else(|| CliError::Config(format!("unknown model preset `{}`", self.model.preset)))?;
        let mut table = toml::Table::try_from(&base).map_err(|e| CliError::Config(e.to_string()))?;
        for (k, v) in &self.model.overrides {
            if !table.contains_key(k) {
                return Err(CliError::Config(format!("unknown model parameter `{k}`")));
            }
            let v = match v {
                toml::Value::Integer(i) => toml::Value::Float(*i as f64),
                other => other.clone(),
            };
            table.insert(k.clone(), v);
        }
        let p: Kou2DParams = table.try_into().map_err(|e: toml::de::Error| CliError::Config(format!("model: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn grid(&self, level: u32) -> CliResult<GridConfig> {
        let mut g = GridConfig::preset(&self.lattice.preset, level)
            .ok_or_else(|| CliError::Config(format!("unknown lattice preset `{}`", self.lattice.preset)))?;
        let l = &self.lattice;
        let f = 1usize << level;
        for (slot, v) in [(&mut g.n_s, l.n_s), (&mut g.n_b, l.n_b), (&mut g.n_u, l.n_u), (&mut g.n_w, l.n_w)] {
            if let Some(n) = v {
                *slot = n * f;
            }
        }
        if let Some(w) = l.w_max {
            g.w_max = w;
        }
        Ok(match self.lattice.half_width {
            Some(hw) => g.with_half_width(hw)?,
            None => g,
        })
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        let p = &self.problem;
        ProblemSpec {
            gamma: p.gamma,
            alpha: p.alpha,
            horizon: p.horizon,
            periods: p.periods,
            contributions: p.contributions.clone().unwrap_or_else(|| vec![p.contribution; p.periods]),
            initial_wealth: p.initial_wealth,
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions { boundary: self.solve.boundary, batch: self.solve.batch, check_stability: self.solve.check_stability }
    }

    pub fn sim(&self) -> SimConfig {
        SimConfig { n_paths: self.mc.n_paths, seed: self.mc.seed, alpha: self.problem.alpha, batch: self.mc.batch }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the resolved configuration in canonical TOML form. The
    /// `run` section (output path, threads) does not affect results and is
    /// left out.
    pub fn hash(&self) -> String {
        let canonical = Self { run: RunSection::default(), ..self.clone() };
        hex(&Sha256::digest(canonical.to_toml().as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Known two-component mixture used as an in-class training target.
pub fn selftest_target() -> MixtureParams {
    MixtureParams::new(
        vec![
            Component { beta: 0.6, mu: [0.05, 0.02], sigma_s: 0.15, sigma_b: 0.06, rho: 0.2 },
            Component { beta: 0.4, mu: [-0.1, 0.0], sigma_s: 0.3, sigma_b: 0.1, rho: -0.3 },
        ],
        MixtureBounds::default(),
        1.0,
    )
    .expect("valid self-test mixture")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.problem_spec(), ProblemSpec::dc_reference());
        assert_eq!(c.model_params().unwrap(), Kou2DParams::calibrated());
    }

    #[test]
    fn precedence_file_then_sets() {
        let text = "[problem]\ngamma = 3.0\n[kernel]\nsamples = 5000\n[model]\nmu_s = 0.07\n";
        let c = RunConfig::from_toml_str(text, &["problem.gamma=4".into(), "lattice.preset=reference".into()]).unwrap();
        assert_eq!(c.problem.gamma, 4.0);
        assert_eq!(c.kernel.train.samples, 5000);
        assert_eq!(c.lattice.preset, "reference");
        assert_eq!(c.model_params().unwrap().mu_s, 0.07);
        // later overrides win
        let c = RunConfig::from_toml_str(text, &["problem.gamma=4".into(), "problem.gamma=5".into()]).unwrap();
        assert_eq!(c.problem.gamma, 5.0);
    }

    #[test]
    fn bad_inputs_are_config_errors() {
        for (text, sets) in [
            ("[model]\npreset = \"nope\"\n", vec![]),
            ("[model]\nmu_x = 1.0\n", vec![]),
            ("[lattice]\nbogus = 1\n", vec![]),
            ("", vec!["problem.alpha=2".to_string()]),
            ("", vec!["novalue".to_string()]),
            ("[kernel]\ntarget = \"x\"\n", vec![]),
            ("not toml [", vec![]),
        ] {
            assert!(matches!(RunConfig::from_toml_str(text, &sets), Err(CliError::Config(_))), "{text} {sets:?}");
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        assert_eq!(a.hash(), RunConfig::default().hash());
        assert_eq!(a.hash().len(), 64);
        let b = RunConfig::from_toml_str("", &["mc.seed=3".into()]).unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::from_toml_str("", &["lattice.half_width=10.0".into()]).unwrap();
        assert_eq!(RunConfig::from_toml_str(&c.to_toml(), &[]).unwrap(), c);
    }
}
