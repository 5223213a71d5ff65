//! Line-oriented scenario files.
//!
//! ```text
//! # two passes
//! seed 7
//! window 0 20
//! window 5880 5900
//! down 2000000 5 0.01
//! up 9600 5 0.01
//! adu image.bin
//! suite sha256
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use super::plan::{ContactPlan, LinkParams, Window};
use crate::saratoga::ChecksumKind;

pub const DEFAULT_LIFETIME_S: u64 = 86_400;
pub const DEFAULT_SAFETY: f64 = 0.8;
pub const DEFAULT_MAX_TIME_S: u64 = 86_400;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub plan: ContactPlan,
    /// Input ADU, resolved against the scenario file's directory.
    pub adu: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub lifetime_s: u64,
    pub suite: ChecksumKind,
    pub safety: f64,
    pub max_time_s: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            plan: ContactPlan::default(),
            adu: None,
            out: None,
            lifetime_s: DEFAULT_LIFETIME_S,
            suite: ChecksumKind::Sha256,
            safety: DEFAULT_SAFETY,
            max_time_s: DEFAULT_MAX_TIME_S,
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn arg<T: FromStr>(args: &[&str], i: usize, what: &str) -> Result<T, String> {
    let raw = args.get(i).ok_or_else(|| format!("missing {what}"))?;
    raw.parse().map_err(|_| format!("invalid {what} '{raw}'"))
}

fn arity(args: &[&str], n: usize, directive: &str) -> Result<(), String> {
    if args.len() == n {
        Ok(())
    } else {
        Err(format!("'{directive}' takes {n} argument(s), got {}", args.len()))
    }
}

fn link(args: &[&str]) -> Result<LinkParams, String> {
    let l = LinkParams::new(
        arg(args, 0, "rate_bps")?,
        arg(args, 1, "delay_ms")?,
        arg(args, 2, "loss_prob")?,
    );
    l.validate()?;
    Ok(l)
}

fn window(args: &[&str]) -> Result<Window, String> {
    let w = Window::new(arg(args, 0, "start_s")?, arg(args, 1, "end_s")?);
    if !(w.start_s >= 0.0 && w.end_s > w.start_s && w.end_s.is_finite()) {
        return Err(format!("interval {}..{} must satisfy 0 <= start < end", w.start_s, w.end_s));
    }
    Ok(w)
}

impl Scenario {
    /// Parses scenario text; relative paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ScenarioError> {
        let mut s = Scenario::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut words = content.split_whitespace();
            let directive = words.next().expect("non-empty line");
            let args: Vec<&str> = words.collect();
            s.apply(directive, &args, base_dir)
                .map_err(|msg| ScenarioError::Parse { line, msg })?;
        }
        s.plan.validate().map_err(ScenarioError::Invalid)?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn apply(&mut self, directive: &str, args: &[&str], base: &Path) -> Result<(), String> {
        let expected = match directive {
            "down" | "up" => 3,
            "window" | "outage" => 2,
            _ => 1,
        };
        let known = matches!(
            directive,
            "seed" | "orbit_period_s" | "window" | "outage" | "down" | "up" | "adu" | "out"
                | "lifetime_s" | "suite" | "safety" | "max_time_s"
        );
        if !known {
            return Err(format!("unknown directive '{directive}'"));
        }
        arity(args, expected, directive)?;
        match directive {
            "seed" => self.plan.seed = arg(args, 0, "seed")?,
            "orbit_period_s" => {
                self.plan.orbit_period_s = arg(args, 0, "orbit_period_s")?;
                if self.plan.orbit_period_s == 0 {
                    return Err("orbit_period_s must be positive".into());
                }
            }
            "window" => {
                let w = window(args)?;
                if let Some(prev) = self.plan.windows.last() {
                    if w.start_s < prev.end_s {
                        return Err(format!(
                            "window {}..{} overlaps or precedes {}..{}",
                            w.start_s, w.end_s, prev.start_s, prev.end_s
                        ));
                    }
                }
                self.plan.windows.push(w);
            }
            "outage" => self.plan.outages.push(window(args)?),
            "down" => self.plan.down = link(args)?,
            "up" => self.plan.up = link(args)?,
            "adu" => self.adu = Some(base.join(args[0])),
            "out" => self.out = Some(base.join(args[0])),
            "lifetime_s" => {
                self.lifetime_s = arg(args, 0, "lifetime_s")?;
                if self.lifetime_s == 0 {
                    return Err("lifetime_s must be positive".into());
                }
            }
            "suite" => self.suite = args[0].parse()?,
            "safety" => {
                self.safety = arg(args, 0, "safety")?;
                if !(self.safety > 0.0 && self.safety <= 1.0) {
                    return Err(format!("safety {} must lie in (0, 1]", self.safety));
                }
            }
            "max_time_s" => self.max_time_s = arg(args, 0, "max_time_s")?,
            _ => unreachable!("checked above"),
        }
        Ok(())
    }
}
