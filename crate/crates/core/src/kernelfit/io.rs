//! Versioned plain-text kernel files.
//!
//! ```text
//! monocvar-kernel 1
//! dt <f64>
//! bounds <mu_bar> <sigma_min> <sigma_max> <rho_bar>
//! components <N>
//! <beta> <mu_s> <mu_b> <sigma_s> <sigma_b> <rho>     (N lines)
//! manifest <key> <value...>                          (any number)
//! ```
//! Floats are written with 17 significant digits so a round trip is exact.

use std::fmt::Write as _;

use super::mixture::{Component, MixtureBounds, MixtureParams};
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "monocvar-kernel";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelFile {
    pub theta: MixtureParams,
    pub manifest: Vec<(String, String)>,
}

impl KernelFile {
    pub fn manifest_value(&self, key: &str) -> Option<&str> {
        self.manifest.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_kernel(theta: &MixtureParams, manifest: &[(String, String)]) -> String {
    let b = theta.bounds;
    let mut s = String::new();
    writeln!(s, "{FORMAT_TAG} {FORMAT_VERSION}").unwrap();
    writeln!(s, "dt {}", f(theta.dt)).unwrap();
    writeln!(s, "bounds {} {} {} {}", f(b.mu_bar), f(b.sigma_min), f(b.sigma_max), f(b.rho_bar)).unwrap();
    writeln!(s, "components {}", theta.len()).unwrap();
    for c in &theta.components {
        writeln!(s, "{} {} {} {} {} {}", f(c.beta), f(c.mu[0]), f(c.mu[1]), f(c.sigma_s), f(c.sigma_b), f(c.rho)).unwrap();
    }
    for (k, v) in manifest {
        assert!(!k.contains(char::is_whitespace), "manifest keys must not contain whitespace");
        writeln!(s, "manifest {k} {}", v.replace('\n', " ")).unwrap();
    }
    s
}

fn perr(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("kernel file line {line}: {msg}"))
}

fn floats(line: usize, fields: &[&str], n: usize) -> Result<Vec<f64>> {
    if fields.len() != n {
        return Err(perr(line, format!("expected {n} numbers, found {}", fields.len())));
    }
    fields.iter().map(|t| t.parse::<f64>().map_err(|e| perr(line, format!("{t:?}: {e}")))).collect()
}

/// Parse and validate a kernel file.
pub fn read_kernel(text: &str) -> Result<KernelFile> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let mut next = |what: &str| lines.next().ok_or_else(|| Error::Parse(format!("kernel file truncated before {what}")));

    let (ln, head) = next("header")?;
    let h: Vec<&str> = head.split_whitespace().collect();
    if h.len() != 2 || h[0] != FORMAT_TAG {
        return Err(perr(ln, "not a kernel file"));
    }
    if h[1] != FORMAT_VERSION.to_string() {
        return Err(perr(ln, format!("unsupported version {}", h[1])));
    }
    let mut keyed = |key: &str, n: usize| -> Result<Vec<f64>> {
        let (ln, l) = next(key)?;
        let fs: Vec<&str> = l.split_whitespace().collect();
        if fs.first() != Some(&key) {
            return Err(perr(ln, format!("expected `{key}`")));
        }
        floats(ln, &fs[1..], n)
    };
    let dt = keyed("dt", 1)?[0];
    let b = keyed("bounds", 4)?;
    let n = keyed("components", 1)?[0];
    if n < 1.0 || n.fract() != 0.0 {
        return Err(Error::Parse(format!("invalid component count {n}")));
    }
    let mut components = Vec::with_capacity(n as usize);
    let mut manifest = Vec::new();
    for (ln, l) in lines {
        let fs: Vec<&str> = l.split_whitespace().collect();
        if fs[0] == "manifest" {
            if fs.len() < 2 {
                return Err(perr(ln, "manifest entry without key"));
            }
            let value = l.splitn(3, char::is_whitespace).nth(2).unwrap_or("").trim();
            manifest.push((fs[1].to_string(), value.to_string()));
        } else {
            if components.len() == n as usize || !manifest.is_empty() {
                return Err(perr(ln, "unexpected component row"));
            }
            let v = floats(ln, &fs, 6)?;
            components.push(Component { beta: v[0], mu: [v[1], v[2]], sigma_s: v[3], sigma_b: v[4], rho: v[5] });
        }
    }
    if components.len() != n as usize {
        return Err(Error::Parse(format!("expected {n} components, found {}", components.len())));
    }
    let bounds = MixtureBounds { mu_bar: b[0], sigma_min: b[1], sigma_max: b[2], rho_bar: b[3] };
    let theta = MixtureParams::new(components, bounds, dt)?;
    Ok(KernelFile { theta, manifest })
}
