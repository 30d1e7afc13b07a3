//! Run configuration: flat `key = value` lines grouped under `[section]`
//! headers. Repeated sections and repeated keys are permitted and order is
//! preserved (the two-stage problem file format relies on this).

use crate::schedules::{Schedule, ScheduleError};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("schedule: {0}")]
    Schedule(#[from] ScheduleError),
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
}

/// One `[name]` block with its key/value lines in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub entries: Vec<(String, String)>,
}

impl Section {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> {
        self.entries
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn parse_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| ConfigError::Invalid(format!("[{}] {key}: not a number: {v}", self.name)))
            })
            .transpose()
    }

    pub fn parse_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| ConfigError::Invalid(format!("[{}] {key}: not an integer: {v}", self.name)))
            })
            .transpose()
    }

    /// Comma- or whitespace-separated list of floats.
    pub fn parse_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => parse_number_list(v)
                .map(Some)
                .map_err(|e| ConfigError::Invalid(format!("[{}] {key}: {e}", self.name))),
        }
    }
}

pub fn parse_number_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t}")))
        .collect()
}

/// Parse `[section]` / `key = value` text. Lines starting with `#` and blank
/// lines are skipped; keys before the first section header go into a section
/// named "".
pub fn parse_sections(text: &str) -> Result<Vec<Section>, ConfigError> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Parse {
                    line: idx + 1,
                    message: "unterminated section header".into(),
                })?
                .trim()
                .to_string();
            sections.push(Section { name, entries: Vec::new() });
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Parse {
            line: idx + 1,
            message: format!("expected 'key = value', got: {line}"),
        })?;
        // Allow trailing comments after the value.
        let value = value.split('#').next().unwrap_or("").trim().to_string();
        let key = key.trim().to_string();
        if sections.is_empty() {
            sections.push(Section { name: String::new(), entries: Vec::new() });
        }
        sections.last_mut().unwrap().entries.push((key, value));
    }
    Ok(sections)
}

/// Which built-in problem the harness should run.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSelector {
    LeastSquares { matrix: PathBuf, rhs: PathBuf },
    Hinge { data: PathBuf },
    TwoStage { file: PathBuf },
    SyntheticHinge { examples: usize, features: usize, sparsity: f64, data_seed: u64 },
    SyntheticLeastSquares { cols: usize, rank: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetSelector {
    WholeSpace,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Scalar bounds replicated to the problem dimension.
    SymmetricBox { lower: f64, upper: f64 },
    Ball { center: Option<Vec<f64>>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialPoint {
    Zero,
    Constant(f64),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Budget {
    Iterations(u64),
    WallClockSeconds(f64),
}

/// Parsed and validated experiment configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: ProblemSelector,
    pub mu_h: f64,
    pub set: SetSelector,
    pub schedule: Schedule,
    pub x0: InitialPoint,
    pub budget: Budget,
    pub paths: usize,
    pub seed: u64,
    pub threads: usize,
    pub eval_exact: bool,
    pub override_validation: bool,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_str_with_base(&text, base)
    }

    /// Parse config text; relative data paths resolve against `base`.
    pub fn from_str_with_base(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let sections = parse_sections(text)?;
        let known: HashSet<&str> = ["problem", "set", "schedule", "run", "output", ""].into();
        for s in &sections {
            if !known.contains(s.name.as_str()) {
                return Err(ConfigError::Invalid(format!("unknown section [{}]", s.name)));
            }
        }
        let find = |name: &str| sections.iter().find(|s| s.name == name);

        let problem_sec = find("problem")
            .ok_or_else(|| ConfigError::Invalid("missing [problem] section".into()))?;
        let resolve = |p: &str| -> PathBuf {
            let pb = PathBuf::from(p);
            if pb.is_absolute() {
                pb
            } else {
                base.join(pb)
            }
        };
        let need_path = |key: &str| -> Result<PathBuf, ConfigError> {
            let raw = problem_sec
                .get(key)
                .ok_or_else(|| ConfigError::Invalid(format!("[problem] requires key '{key}'")))?;
            let p = resolve(raw);
            if !p.exists() {
                return Err(ConfigError::MissingFile(p));
            }
            Ok(p)
        };
        let kind = problem_sec
            .get("kind")
            .ok_or_else(|| ConfigError::Invalid("[problem] requires key 'kind'".into()))?;
        let problem = match kind {
            "least-squares" => ProblemSelector::LeastSquares {
                matrix: need_path("matrix")?,
                rhs: need_path("rhs")?,
            },
            "hinge" => ProblemSelector::Hinge { data: need_path("data")? },
            "two-stage" => ProblemSelector::TwoStage { file: need_path("file")? },
            "synthetic-hinge" => ProblemSelector::SyntheticHinge {
                examples: problem_sec.parse_u64("examples")?.unwrap_or(5000) as usize,
                features: problem_sec.parse_u64("features")?.unwrap_or(1000) as usize,
                sparsity: problem_sec.parse_f64("sparsity")?.unwrap_or(0.01),
                data_seed: problem_sec.parse_u64("data_seed")?.unwrap_or(0),
            },
            "synthetic-least-squares" => ProblemSelector::SyntheticLeastSquares {
                cols: problem_sec.parse_u64("cols")?.unwrap_or(10) as usize,
                rank: problem_sec.parse_u64("rank")?.unwrap_or(5) as usize,
            },
            other => {
                return Err(ConfigError::Invalid(format!("unknown problem kind: {other}")));
            }
        };
        let mu_h = problem_sec.parse_f64("mu_h")?.unwrap_or(0.5);
        if mu_h.is_nan() || mu_h <= 0.0 {
            return Err(ConfigError::Invalid("mu_h must be positive".into()));
        }

        let set = match find("set") {
            None => SetSelector::WholeSpace,
            Some(s) => match s.get("kind").unwrap_or("whole-space") {
                "whole-space" => SetSelector::WholeSpace,
                "box" => {
                    let lower = s.parse_f64_list("lower")?.ok_or_else(|| {
                        ConfigError::Invalid("[set] box requires 'lower'".into())
                    })?;
                    let upper = s.parse_f64_list("upper")?.ok_or_else(|| {
                        ConfigError::Invalid("[set] box requires 'upper'".into())
                    })?;
                    if lower.len() == 1 && upper.len() == 1 {
                        SetSelector::SymmetricBox { lower: lower[0], upper: upper[0] }
                    } else {
                        SetSelector::Box { lower, upper }
                    }
                }
                "ball" => SetSelector::Ball {
                    center: s.parse_f64_list("center")?,
                    radius: s.parse_f64("radius")?.ok_or_else(|| {
                        ConfigError::Invalid("[set] ball requires 'radius'".into())
                    })?,
                },
                other => {
                    return Err(ConfigError::Invalid(format!("unknown set kind: {other}")));
                }
            },
        };

        let sched_sec = find("schedule")
            .ok_or_else(|| ConfigError::Invalid("missing [schedule] section".into()))?;
        let gamma0 = sched_sec.parse_f64("gamma0")?.unwrap_or(1.0);
        let lambda0 = sched_sec.parse_f64("lambda0")?.unwrap_or(1.0);
        let r = sched_sec.parse_f64("r")?.unwrap_or(0.0);
        let delta = sched_sec.parse_f64("delta")?;
        let a = sched_sec.parse_f64("a")?;
        let b = sched_sec.parse_f64("b")?;
        let schedule = match (delta, a, b) {
            (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
                return Err(ConfigError::Invalid(
                    "[schedule] delta is mutually exclusive with a/b".into(),
                ));
            }
            (Some(d), None, None) => Schedule::with_rate_exponent(d, gamma0, lambda0, r)?,
            (None, Some(a), Some(b)) => Schedule::new(gamma0, lambda0, a, b, r)?,
            _ => {
                return Err(ConfigError::Invalid(
                    "[schedule] requires either delta or both a and b".into(),
                ));
            }
        };

        let run_sec = find("run");
        let get_run = |key: &str| run_sec.and_then(|s| s.get(key));
        let iterations = run_sec.map(|s| s.parse_u64("iterations")).transpose()?.flatten();
        let wall = run_sec
            .map(|s| s.parse_f64("wall_clock_seconds"))
            .transpose()?
            .flatten();
        let budget = match (iterations, wall) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "[run] iterations and wall_clock_seconds are mutually exclusive".into(),
                ));
            }
            (Some(n), None) => Budget::Iterations(n),
            (None, Some(s)) => {
                if s.is_nan() || s <= 0.0 {
                    return Err(ConfigError::Invalid("wall_clock_seconds must be positive".into()));
                }
                Budget::WallClockSeconds(s)
            }
            (None, None) => Budget::Iterations(10_000),
        };
        let paths = run_sec
            .map(|s| s.parse_u64("paths"))
            .transpose()?
            .flatten()
            .unwrap_or(1) as usize;
        if paths == 0 {
            return Err(ConfigError::Invalid("paths must be >= 1".into()));
        }
        let seed = run_sec.map(|s| s.parse_u64("seed")).transpose()?.flatten().unwrap_or(0);
        let threads = run_sec
            .map(|s| s.parse_u64("threads"))
            .transpose()?
            .flatten()
            .unwrap_or(0) as usize;
        let eval_exact = match get_run("eval_exact") {
            None => true,
            Some("true") | Some("1") => true,
            Some("false") | Some("0") => false,
            Some(v) => {
                return Err(ConfigError::Invalid(format!("eval_exact must be true/false, got {v}")));
            }
        };
        let override_validation = matches!(get_run("override_validation"), Some("true") | Some("1"));
        let x0 = match get_run("x0").unwrap_or("zero") {
            "zero" => InitialPoint::Zero,
            v if v.starts_with("const:") => {
                let c = v["const:".len()..].trim().parse::<f64>().map_err(|_| {
                    ConfigError::Invalid(format!("x0 constant is not a number: {v}"))
                })?;
                InitialPoint::Constant(c)
            }
            v if v.starts_with("file:") => {
                let p = resolve(v["file:".len()..].trim());
                if !p.exists() {
                    return Err(ConfigError::MissingFile(p));
                }
                InitialPoint::File(p)
            }
            other => {
                return Err(ConfigError::Invalid(format!(
                    "x0 must be zero, const:<v>, or file:<path>, got {other}"
                )));
            }
        };

        let output_dir = find("output")
            .and_then(|s| s.get("dir"))
            .map(resolve)
            .unwrap_or_else(|| PathBuf::from("out"));

        Ok(RunConfig {
            problem,
            mu_h,
            set,
            schedule,
            x0,
            budget,
            paths,
            seed,
            threads,
            eval_exact,
            override_validation,
            output_dir,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(extra: &str) -> String {
        format!(
            "[problem]\nkind = synthetic-hinge\nexamples = 10\nfeatures = 4\nmu_h = 0.5\n\n\
             [schedule]\ndelta = 0.1\ngamma0 = 1\nlambda0 = 1\n{extra}"
        )
    }

    #[test]
    fn accepts_valid_rate_config() {
        let cfg = RunConfig::from_str_with_base(&minimal(""), Path::new(".")).unwrap();
        // delta = 0.1, mu_h = 0.5 -> product 1 <= 1/0.5 = 2.
        assert!(cfg.schedule.initial_product_ok(1.0, cfg.mu_h));
        assert!((cfg.schedule.exponent_a() - 0.55).abs() < 1e-15);
        assert_eq!(cfg.paths, 1);
    }

    #[test]
    fn rejects_both_budgets() {
        let text = minimal("\n[run]\niterations = 100\nwall_clock_seconds = 5\n");
        let err = RunConfig::from_str_with_base(&text, Path::new(".")).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)));
    }

    #[test]
    fn rejects_delta_with_exponents() {
        let text =
            "[problem]\nkind = synthetic-hinge\n[schedule]\ndelta = 0.1\na = 0.55\nb = 0.4\n";
        assert!(RunConfig::from_str_with_base(text, Path::new(".")).is_err());
    }

    #[test]
    fn missing_data_path_is_rejected() {
        let text = "[problem]\nkind = least-squares\nmatrix = nope.csv\nrhs = nope2.csv\n\
                    [schedule]\ndelta = 0.1\n";
        let err = RunConfig::from_str_with_base(text, Path::new("/definitely/absent")).unwrap_err();
        assert!(matches!(err, ConfigError::MissingFile(_)));
    }

    #[test]
    fn section_parser_keeps_repeats() {
        let text = "[s]\nk = 1\nk = 2\n[s]\nk = 3\n";
        let sections = parse_sections(text).unwrap();
        assert_eq!(sections.len(), 2);
        let all: Vec<&str> = sections[0].get_all("k").collect();
        assert_eq!(all, vec!["1", "2"]);
        assert_eq!(sections[1].get("k"), Some("3"));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = "# top\n[s]\n# inner\nk = 1 # trailing\n\n";
        let sections = parse_sections(text).unwrap();
        assert_eq!(sections[0].get("k"), Some("1"));
    }
}
