//! Experiment configuration: a plain `key=value` format (one key per line,
//! `#` comments) with strict validation and a canonical echo used for config
//! hashing. No structured-markup parser is involved on purpose; the files
//! stay trivially diffable.

use crate::optim::OptimizerKind;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing required key `kind` (coverage | gap_vs_n | gap_vs_T | stability)")]
    MissingKind,
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: expected `key=value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: invalid value for `{key}`: {message}")]
    InvalidValue {
        key: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Coverage,
    GapVsN,
    GapVsT,
    Stability,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::GapVsN => "gap_vs_n",
            ExperimentKind::GapVsT => "gap_vs_T",
            ExperimentKind::Stability => "stability",
        }
    }

    pub fn parse(s: &str) -> Option<ExperimentKind> {
        match s {
            "coverage" => Some(ExperimentKind::Coverage),
            "gap_vs_n" | "gap-n" => Some(ExperimentKind::GapVsN),
            "gap_vs_T" | "gap_vs_t" | "gap-T" | "gap-t" => Some(ExperimentKind::GapVsT),
            "stability" => Some(ExperimentKind::Stability),
            _ => None,
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Resolved experiment configuration. Defaults depend on the kind; see
/// [`ExperimentConfig::default_for`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub d: usize,
    pub d_eff: usize,
    /// Rare-direction probabilities swept by the coverage experiment.
    pub p_list: Vec<f64>,
    /// Sample sizes swept by all experiments.
    pub n_list: Vec<usize>,
    /// Largest optimization-step count for the gap-vs-steps sweep.
    pub t_max: u64,
    /// Replicates per sweep point (neighbor pairs for stability).
    pub seeds: usize,
    pub master_seed: u64,
    pub test_set_size: usize,
    pub optimizer: OptimizerKind,
    /// Monte Carlo trials per coverage point.
    pub m_trials: usize,
    /// Gradient-norm tolerance of the stationary proxy.
    pub tol: f64,
    /// Override for the SGA full-gradient evaluation stride.
    pub stride: Option<u64>,
}

impl ExperimentConfig {
    pub fn default_for(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig {
            kind,
            d: 32,
            d_eff: 24,
            p_list: vec![0.01, 0.02, 0.05, 0.1],
            n_list: (7..=22).collect(),
            t_max: 10_000_000,
            seeds: 20,
            master_seed: 0,
            test_set_size: 15_000,
            optimizer: OptimizerKind::Ga,
            m_trials: 10_000,
            tol: 1e-8,
            stride: None,
        };
        match kind {
            ExperimentKind::Coverage => ExperimentConfig {
                d: 20,
                n_list: vec![5, 10, 20, 40, 80, 160, 320, 640, 1280, 2560],
                ..base
            },
            ExperimentKind::GapVsN => base,
            ExperimentKind::GapVsT => ExperimentConfig {
                d: 18,
                d_eff: 14,
                n_list: vec![7, 10],
                ..base
            },
            ExperimentKind::Stability => ExperimentConfig {
                // a two-dimensional effective subspace is covered by every
                // sample, so the residual term vanishes and the measured
                // sensitivity isolates the sample-size rate; the fixed
                // horizon keeps the trained map data-sensitive at every n
                d: 16,
                d_eff: 2,
                n_list: vec![8, 12, 16, 24, 32],
                t_max: 2000,
                ..base
            },
        }
    }

    /// Canonical `key=value` echo of the resolved configuration, in a fixed
    /// key order. This is what gets hashed and written into manifests.
    pub fn canonical_text(&self) -> String {
        let join_f = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let join_u = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = String::new();
        out.push_str(&format!("kind={}\n", self.kind));
        out.push_str(&format!("d={}\n", self.d));
        out.push_str(&format!("d_eff={}\n", self.d_eff));
        out.push_str(&format!("p_list={}\n", join_f(&self.p_list)));
        out.push_str(&format!("n_list={}\n", join_u(&self.n_list)));
        out.push_str(&format!("t_max={}\n", self.t_max));
        out.push_str(&format!("seeds={}\n", self.seeds));
        out.push_str(&format!("master_seed={}\n", self.master_seed));
        out.push_str(&format!("test_set_size={}\n", self.test_set_size));
        out.push_str(&format!("optimizer={}\n", self.optimizer));
        out.push_str(&format!("m_trials={}\n", self.m_trials));
        out.push_str(&format!("tol={}\n", self.tol));
        match self.stride {
            Some(s) => out.push_str(&format!("stride={s}\n")),
            None => out.push_str("stride=auto\n"),
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        // coverage sweeps run on the orthonormal family and never read d_eff
        if self.kind != ExperimentKind::Coverage && self.d_eff > self.d {
            return Err(ConfigError::Invalid(format!(
                "d_eff exceeds d ({} > {})",
                self.d_eff, self.d
            )));
        }
        if self.d < 2 {
            return Err(ConfigError::Invalid("d must be at least 2".into()));
        }
        if self.n_list.is_empty() {
            return Err(ConfigError::Invalid("n_list must be nonempty".into()));
        }
        if self.n_list.iter().any(|&n| n == 0) {
            return Err(ConfigError::Invalid("sample sizes must be >= 1".into()));
        }
        if self.test_set_size < 1000 {
            return Err(ConfigError::Invalid(format!(
                "test_set_size must be >= 1000 (got {})",
                self.test_set_size
            )));
        }
        if self.seeds == 0 {
            return Err(ConfigError::Invalid("seeds must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(ConfigError::Invalid("tol must be positive".into()));
        }
        if self.p_list.is_empty() || self.p_list.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(ConfigError::Invalid(
                "p_list entries must lie strictly in (0,1)".into(),
            ));
        }
        if self.m_trials < 100 {
            return Err(ConfigError::Invalid(
                "m_trials must be at least 100".into(),
            ));
        }
        if self.t_max < 10 {
            return Err(ConfigError::Invalid("t_max must be at least 10".into()));
        }
        Ok(())
    }
}

fn parse_u64(key: &str, value: &str, line: usize) -> Result<u64, ConfigError> {
    // accept scientific notation for large step counts, e.g. t_max=1e7
    if let Ok(v) = value.parse::<u64>() {
        return Ok(v);
    }
    if let Ok(f) = value.parse::<f64>() {
        if f.fract() == 0.0 && f >= 0.0 && f <= u64::MAX as f64 {
            return Ok(f as u64);
        }
    }
    Err(ConfigError::InvalidValue {
        key: key.into(),
        line,
        message: format!("`{value}` is not a nonnegative integer"),
    })
}

fn parse_usize(key: &str, value: &str, line: usize) -> Result<usize, ConfigError> {
    parse_u64(key, value, line).map(|v| v as usize)
}

fn parse_f64(key: &str, value: &str, line: usize) -> Result<f64, ConfigError> {
    value.parse::<f64>().map_err(|_| ConfigError::InvalidValue {
        key: key.into(),
        line,
        message: format!("`{value}` is not a number"),
    })
}

/// Parses the plain key=value experiment configuration format.
///
/// Unknown keys are errors; `n` and `n_range`/`n_list` are alternative ways
/// to populate the sample-size grid, and `p` is shorthand for a single-entry
/// `p_list`.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    struct Raw<'a> {
        key: &'a str,
        value: &'a str,
        line: usize,
    }
    let mut entries: Vec<Raw> = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let stripped = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        };
        let stripped = stripped.trim();
        if stripped.is_empty() {
            continue;
        }
        let Some(eq) = stripped.find('=') else {
            return Err(ConfigError::Malformed {
                line: line_no,
                text: stripped.to_string(),
            });
        };
        entries.push(Raw {
            key: stripped[..eq].trim(),
            value: stripped[eq + 1..].trim(),
            line: line_no,
        });
    }

    // relation checks on explicitly given keys come first, so they are
    // reported even when `kind` is missing
    let explicit = |k: &str| entries.iter().rev().find(|e| e.key == k);
    if let (Some(de), Some(d)) = (explicit("d_eff"), explicit("d")) {
        let de_v = parse_usize(de.key, de.value, de.line)?;
        let d_v = parse_usize(d.key, d.value, d.line)?;
        if de_v > d_v {
            return Err(ConfigError::Invalid(format!(
                "d_eff exceeds d ({de_v} > {d_v})"
            )));
        }
    }

    let kind = entries
        .iter()
        .find(|e| e.key == "kind")
        .map(|e| {
            ExperimentKind::parse(e.value).ok_or(ConfigError::InvalidValue {
                key: "kind".into(),
                line: e.line,
                message: format!(
                    "`{}` is not one of coverage | gap_vs_n | gap_vs_T | stability",
                    e.value
                ),
            })
        })
        .transpose()?
        .ok_or(ConfigError::MissingKind)?;

    let mut cfg = ExperimentConfig::default_for(kind);
    for e in &entries {
        match e.key {
            "kind" => {}
            "d" => cfg.d = parse_usize(e.key, e.value, e.line)?,
            "d_eff" => cfg.d_eff = parse_usize(e.key, e.value, e.line)?,
            "p" => cfg.p_list = vec![parse_f64(e.key, e.value, e.line)?],
            "p_list" => {
                let mut out = Vec::new();
                for part in e.value.split(',') {
                    out.push(parse_f64(e.key, part.trim(), e.line)?);
                }
                cfg.p_list = out;
            }
            "n" => cfg.n_list = vec![parse_usize(e.key, e.value, e.line)?],
            "n_list" => {
                let mut out = Vec::new();
                for part in e.value.split(',') {
                    out.push(parse_usize(e.key, part.trim(), e.line)?);
                }
                cfg.n_list = out;
            }
            "n_range" => {
                let parts: Vec<&str> = e.value.split("..").collect();
                if parts.len() != 2 {
                    return Err(ConfigError::InvalidValue {
                        key: e.key.into(),
                        line: e.line,
                        message: format!("`{}` is not of the form lo..hi (inclusive)", e.value),
                    });
                }
                let lo = parse_usize(e.key, parts[0].trim(), e.line)?;
                let hi = parse_usize(e.key, parts[1].trim(), e.line)?;
                if hi < lo {
                    return Err(ConfigError::InvalidValue {
                        key: e.key.into(),
                        line: e.line,
                        message: format!("empty range {lo}..{hi}"),
                    });
                }
                cfg.n_list = (lo..=hi).collect();
            }
            "t_max" => cfg.t_max = parse_u64(e.key, e.value, e.line)?,
            "seeds" => cfg.seeds = parse_usize(e.key, e.value, e.line)?,
            "master_seed" => cfg.master_seed = parse_u64(e.key, e.value, e.line)?,
            "test_set_size" => cfg.test_set_size = parse_usize(e.key, e.value, e.line)?,
            "optimizer" => {
                cfg.optimizer = match e.value {
                    "GA" | "ga" => OptimizerKind::Ga,
                    "SGA" | "sga" => OptimizerKind::Sga,
                    other => {
                        return Err(ConfigError::InvalidValue {
                            key: e.key.into(),
                            line: e.line,
                            message: format!("`{other}` is not GA or SGA"),
                        })
                    }
                }
            }
            "m_trials" => cfg.m_trials = parse_usize(e.key, e.value, e.line)?,
            "tol" => cfg.tol = parse_f64(e.key, e.value, e.line)?,
            "stride" => {
                cfg.stride = if e.value == "auto" {
                    None
                } else {
                    Some(parse_u64(e.key, e.value, e.line)?)
                }
            }
            other => {
                return Err(ConfigError::UnknownKey {
                    key: other.to_string(),
                    line: e.line,
                })
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// FNV-1a 64-bit hash; used for config hashes in manifests.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_coverage_config() {
        let cfg = parse_config("d=20\np=0.02\nkind=coverage").unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Coverage);
        assert_eq!(cfg.d, 20);
        assert_eq!(cfg.p_list, vec![0.02]);
        assert_eq!(cfg.m_trials, 10_000);
    }

    #[test]
    fn d_eff_exceeding_d_is_an_error() {
        let err = parse_config("kind=gap_vs_n\nd_eff=40\nd=32").unwrap_err();
        assert!(err.to_string().contains("d_eff exceeds d"), "{err}");
    }

    #[test]
    fn missing_kind_is_named() {
        let err = parse_config("d=20\np=0.02").unwrap_err();
        assert!(err.to_string().contains("kind"), "{err}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse_config("kind=coverage\nbogus=1").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn comments_ranges_and_scientific_notation() {
        let cfg = parse_config(
            "# a comment\nkind=gap_vs_T\nn_list=7,10\nt_max=1e7  # ten million\nseeds=4\n",
        )
        .unwrap();
        assert_eq!(cfg.t_max, 10_000_000);
        assert_eq!(cfg.n_list, vec![7, 10]);
        assert_eq!(cfg.seeds, 4);

        let cfg = parse_config("kind=gap_vs_n\nn_range=7..9").unwrap();
        assert_eq!(cfg.n_list, vec![7, 8, 9]);
    }

    #[test]
    fn canonical_text_round_trips_and_hashes() {
        let cfg = parse_config("kind=stability\nseeds=5").unwrap();
        let echo = cfg.canonical_text();
        let reparsed = parse_config(&echo).unwrap();
        assert_eq!(cfg, reparsed);
        assert_eq!(fnv1a64(echo.as_bytes()), fnv1a64(echo.as_bytes()));
        assert_ne!(fnv1a64(b"a"), fnv1a64(b"b"));
    }

    #[test]
    fn semantic_validation() {
        assert!(parse_config("kind=coverage\ntest_set_size=10").is_err());
        assert!(parse_config("kind=coverage\np=1.5").is_err());
        assert!(parse_config("kind=gap_vs_n\nseeds=0").is_err());
        assert!(parse_config("kind=gap_vs_n\nn_list=").is_err());
    }
}
