//! Run configuration: a line-based sectioned key-value text file.
//!
//! Three sections are recognized: `[model]`, `[run]`, `[truncation]`.
//! Unknown sections or keys are hard errors, as are malformed values; error
//! messages carry the offending 1-based line number.
//!
//! ```text
//! [model]
//! dimension        = 1
//! box_length       = 1.0
//! particle_modes   = 0:1          # per-axis inclusive ranges, ';' between axes
//! field_modes      = -1:1
//! mass             = 1.0
//! g_profile        = constant     # constant | gaussian | sharp
//! g_amplitude      = 0.6
//! g_cutoff         = 2.0          # gaussian width or sharp cutoff radius
//! exclude_zero_mode = false
//!
//! [run]
//! kind             = convergence  # skg-only | bogoliubov | hierarchy | convergence | densities
//! t_final          = 0.5
//! dt               = 1e-3
//! expansion_order  = 2
//! particle_numbers = 4 8 16 32
//! seed             = 7
//! integrator       = rk4          # rk4 | strang
//! alpha_norm_sq    = 0.05
//! skg_substeps     = 2
//! norm_tol         = 1e-6
//!
//! [truncation]
//! excitation_cap   = 6            # max particle excitations n_b
//! quanta_cap       = 8            # max field quanta n_a in the double Fock space
//! fock_field_cap   = 16           # field cap of the exact many-body space
//! basis_hard_cap   = 5000000
//! tail_tol         = 1e-8
//! ```

use std::collections::HashSet;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{FormFactor, GProfile, ModelConfig};
use crate::skg::Scheme;
use crate::Real;

/// What a run computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    SkgOnly,
    Bogoliubov,
    Hierarchy,
    Convergence,
    Densities,
}

impl FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "skg-only" => Ok(Self::SkgOnly),
            "bogoliubov" => Ok(Self::Bogoliubov),
            "hierarchy" => Ok(Self::Hierarchy),
            "convergence" => Ok(Self::Convergence),
            "densities" => Ok(Self::Densities),
            other => Err(format!("unknown scenario kind '{other}'")),
        }
    }
}

/// Everything a scenario needs, parsed and validated.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub kind: ScenarioKind,
    pub t_final: Real,
    pub dt: Real,
    pub expansion_order: usize,
    pub particle_numbers: Vec<u32>,
    pub seed: u64,
    pub integrator: Scheme,
    pub alpha_norm_sq: Real,
    pub skg_substeps: usize,
    pub norm_tol: Real,
    pub excitation_cap: usize,
    pub quanta_cap: usize,
    pub fock_field_cap: usize,
    pub basis_hard_cap: usize,
    pub tail_tol: Real,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::d1(1.0, 0, 1, 1, 1.0, FormFactor::constant(0.5)),
            kind: ScenarioKind::SkgOnly,
            t_final: 0.5,
            dt: 1e-3,
            expansion_order: 0,
            particle_numbers: vec![4, 8, 16, 32],
            seed: 1,
            integrator: Scheme::Rk4,
            alpha_norm_sq: 0.05,
            skg_substeps: 2,
            norm_tol: 1e-6,
            excitation_cap: 4,
            quanta_cap: 6,
            fock_field_cap: 12,
            basis_hard_cap: 5_000_000,
            tail_tol: 1e-8,
        }
    }
}

fn parse_axis_ranges(value: &str, line: usize) -> Result<[(i64, i64); 3]> {
    let mut out = [(0i64, 0i64); 3];
    for (axis, part) in value.split(';').enumerate() {
        if axis >= 3 {
            return Err(Error::Config { line, msg: "more than three axes".into() });
        }
        let part = part.trim();
        let (lo, hi) = part.split_once(':').ok_or_else(|| Error::Config {
            line,
            msg: format!("range '{part}' must look like lo:hi"),
        })?;
        let lo: i64 = lo.trim().parse().map_err(|_| Error::Config {
            line,
            msg: format!("bad integer '{}'", lo.trim()),
        })?;
        let hi: i64 = hi.trim().parse().map_err(|_| Error::Config {
            line,
            msg: format!("bad integer '{}'", hi.trim()),
        })?;
        out[axis] = (lo, hi);
    }
    Ok(out)
}

fn parse_scalar<T: FromStr>(value: &str, line: usize, what: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config {
        line,
        msg: format!("bad {what} '{}'", value.trim()),
    })
}

/// Parse the sectioned key-value format. `#` starts a comment.
pub fn parse(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut section = String::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut g_profile = GProfile::Constant;
    let mut g_amplitude: Real = 0.5;
    let mut g_cutoff: Real = 0.0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.split_once('#') {
            Some((head, _)) => head,
            None => raw,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        if stripped.starts_with('[') {
            let name = stripped
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| Error::Config { line, msg: "malformed section header".into() })?
                .trim()
                .to_string();
            match name.as_str() {
                "model" | "run" | "truncation" => section = name,
                other => {
                    return Err(Error::Config { line, msg: format!("unknown section [{other}]") })
                }
            }
            continue;
        }
        let (key, value) = stripped.split_once('=').ok_or_else(|| Error::Config {
            line,
            msg: format!("expected key = value, got '{stripped}'"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim();
        if section.is_empty() {
            return Err(Error::Config { line, msg: "key before any [section]".into() });
        }
        if !seen.insert((section.clone(), key.clone())) {
            return Err(Error::Config { line, msg: format!("duplicate key '{key}'") });
        }
        match (section.as_str(), key.as_str()) {
            ("model", "dimension") => cfg.model.dimension = parse_scalar(value, line, "integer")?,
            ("model", "box_length") => cfg.model.box_length = parse_scalar(value, line, "number")?,
            ("model", "particle_modes") => {
                cfg.model.particle_range = parse_axis_ranges(value, line)?
            }
            ("model", "field_modes") => cfg.model.field_range = parse_axis_ranges(value, line)?,
            ("model", "mass") => cfg.model.mass = parse_scalar(value, line, "number")?,
            ("model", "g_profile") => {
                g_profile = match value {
                    "constant" => GProfile::Constant,
                    "gaussian" => GProfile::Gaussian,
                    "sharp" => GProfile::Sharp,
                    other => {
                        return Err(Error::Config {
                            line,
                            msg: format!("unknown g_profile '{other}'"),
                        })
                    }
                }
            }
            ("model", "g_amplitude") => g_amplitude = parse_scalar(value, line, "number")?,
            ("model", "g_cutoff") => g_cutoff = parse_scalar(value, line, "number")?,
            ("model", "exclude_zero_mode") => {
                cfg.model.exclude_zero_mode = parse_scalar(value, line, "boolean")?
            }
            ("run", "kind") => {
                cfg.kind = value.parse().map_err(|msg| Error::Config { line, msg })?
            }
            ("run", "t_final") => cfg.t_final = parse_scalar(value, line, "number")?,
            ("run", "dt") => cfg.dt = parse_scalar(value, line, "number")?,
            ("run", "expansion_order") => {
                cfg.expansion_order = parse_scalar(value, line, "integer")?
            }
            ("run", "particle_numbers") => {
                cfg.particle_numbers = value
                    .split_whitespace()
                    .map(|v| parse_scalar(v, line, "integer"))
                    .collect::<Result<Vec<u32>>>()?;
            }
            ("run", "seed") => cfg.seed = parse_scalar(value, line, "integer")?,
            ("run", "integrator") => {
                cfg.integrator = match value {
                    "rk4" => Scheme::Rk4,
                    "strang" => Scheme::Strang,
                    other => {
                        return Err(Error::Config {
                            line,
                            msg: format!("unknown integrator '{other}'"),
                        })
                    }
                }
            }
            ("run", "alpha_norm_sq") => cfg.alpha_norm_sq = parse_scalar(value, line, "number")?,
            ("run", "skg_substeps") => cfg.skg_substeps = parse_scalar(value, line, "integer")?,
            ("run", "norm_tol") => cfg.norm_tol = parse_scalar(value, line, "number")?,
            ("truncation", "excitation_cap") => {
                cfg.excitation_cap = parse_scalar(value, line, "integer")?
            }
            ("truncation", "quanta_cap") => cfg.quanta_cap = parse_scalar(value, line, "integer")?,
            ("truncation", "fock_field_cap") => {
                cfg.fock_field_cap = parse_scalar(value, line, "integer")?
            }
            ("truncation", "basis_hard_cap") => {
                cfg.basis_hard_cap = parse_scalar(value, line, "integer")?
            }
            ("truncation", "tail_tol") => cfg.tail_tol = parse_scalar(value, line, "number")?,
            (sec, other) => {
                return Err(Error::Config {
                    line,
                    msg: format!("unknown key '{other}' in section [{sec}]"),
                })
            }
        }
    }

    cfg.model.g = FormFactor { profile: g_profile, amplitude: g_amplitude, cutoff: g_cutoff };
    if cfg.dt <= 0.0 {
        return Err(Error::Config { line: 0, msg: "dt must be positive".into() });
    }
    if cfg.t_final <= 0.0 {
        return Err(Error::Config { line: 0, msg: "t_final must be positive".into() });
    }
    if cfg.skg_substeps == 0 {
        return Err(Error::Config { line: 0, msg: "skg_substeps must be at least 1".into() });
    }
    cfg.model.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
[model]
dimension = 1
box_length = 1.0
particle_modes = 0:1
field_modes = -1:1
mass = 1.0
g_profile = constant
g_amplitude = 0.6

[run]
kind = convergence
t_final = 0.5
dt = 1e-3
expansion_order = 2
particle_numbers = 4 8 16 32
seed = 7

[truncation]
excitation_cap = 6
quanta_cap = 8
fock_field_cap = 16
";

    #[test]
    fn parses_complete_config() {
        let cfg = parse(GOOD).unwrap();
        assert_eq!(cfg.kind, ScenarioKind::Convergence);
        assert_eq!(cfg.particle_numbers, vec![4, 8, 16, 32]);
        assert_eq!(cfg.model.particle_range[0], (0, 1));
        assert_eq!(cfg.model.field_range[0], (-1, 1));
        assert_eq!(cfg.expansion_order, 2);
        assert_eq!(cfg.excitation_cap, 6);
        assert!((cfg.model.g.amplitude - 0.6).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_reports_line_number() {
        let bad = format!("{GOOD}\nnot_a_key = 1\n");
        match parse(&bad) {
            Err(Error::Config { line, msg }) => {
                assert!(msg.contains("not_a_key"));
                assert!(line > 20, "line was {line}");
            }
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_section_is_rejected() {
        let bad = "[models]\ndimension = 1\n";
        assert!(matches!(parse(bad), Err(Error::Config { line: 1, .. })));
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let bad = "[model]\nmass = 1.0\nmass = 2.0\n";
        assert!(matches!(parse(bad), Err(Error::Config { line: 3, .. })));
    }

    #[test]
    fn asymmetric_field_range_is_rejected() {
        let bad = GOOD.replace("field_modes = -1:1", "field_modes = 0:1");
        assert!(parse(&bad).is_err());
    }
}
