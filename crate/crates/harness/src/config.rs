//! Sweep configuration: flat `key = value` lines, `#` comments.
//!
//! | key              | default        | meaning                                   |
//! |------------------|----------------|-------------------------------------------|
//! | `input`          | required       | dataset directory, `.evt` or `.vox` file  |
//! | `output`         | required       | result CSV path                           |
//! | `mode`           | `under_report` | `under_report` or `noise_inject`          |
//! | `levels`         | required       | comma-separated ratios in `[0, 1]`        |
//! | `bins`           | `6`            | temporal bins of the voxel grid           |
//! | `theta`          | `0.2`          | contrast threshold for frame inputs       |
//! | `noise_lambda`   | `0`            | shot-noise rate                           |
//! | `noise_sigma`    | `0`            | read-noise standard deviation             |
//! | `noise_centered` | `true`         | subtract the shot-noise mean              |
//! | `seed`           | `0`            | overridden by `EVROBUST_SEED`             |
//! | `weights`        | none           | `MRMW1` file enabling forward smoke runs  |
//! | `crop`           | `64`           | square crop edge for smoke runs           |
//! | `workers`        | `0`            | thread count, `0` for all cores           |
//!
//! Relative paths resolve against the config file's directory. The config
//! hash is FNV-1a 64 over the effective settings rendered one `key=value`
//! per line in key order, so it ignores layout, comments and line order.

use std::collections::BTreeMap;
use std::fmt;
use std::hash::Hasher;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use evrobust_core::dvs::NoiseModel;
use fnv::FnvHasher;

use crate::error::{Error, Result};

pub const SEED_ENV: &str = "EVROBUST_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    UnderReport,
    NoiseInject,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::UnderReport => "under_report",
            Mode::NoiseInject => "noise_inject",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "under_report" => Ok(Mode::UnderReport),
            "noise_inject" => Ok(Mode::NoiseInject),
            other => Err(format!("unknown mode `{other}` (expected under_report or noise_inject)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub mode: Mode,
    pub levels: Vec<f64>,
    pub bins: usize,
    pub theta: f64,
    pub noise: NoiseModel,
    pub seed: u64,
    pub weights: Option<PathBuf>,
    pub crop: usize,
    pub workers: usize,
}

const KEYS: &[&str] = &[
    "bins",
    "crop",
    "input",
    "levels",
    "mode",
    "noise_centered",
    "noise_lambda",
    "noise_sigma",
    "output",
    "seed",
    "theta",
    "weights",
    "workers",
];

impl SweepConfig {
    /// Defaults for everything except the required keys.
    pub fn new(input: impl Into<PathBuf>, output: impl Into<PathBuf>, levels: Vec<f64>) -> Result<Self> {
        let cfg = Self {
            input: input.into(),
            output: output.into(),
            mode: Mode::UnderReport,
            levels,
            bins: evrobust_core::events::DEFAULT_BINS,
            theta: 0.2,
            noise: NoiseModel::none(),
            seed: 0,
            weights: None,
            crop: 64,
            workers: 0,
        };
        cfg.validate().map_err(Error::Input)?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::parse(&text, base, path)?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    /// Parses without consulting the environment.
    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Config {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(i + 1, format!("expected `key = value`, got `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(err(i + 1, format!("unknown key `{k}`")));
            }
            if map.insert(k.to_string(), (i + 1, v.to_string())).is_some() {
                return Err(err(i + 1, format!("duplicate key `{k}`")));
            }
        }
        let required = |k: &str| {
            map.get(k)
                .cloned()
                .ok_or_else(|| err(0, format!("missing required key `{k}`")))
        };
        fn num<T: FromStr>(v: &str, line: usize, key: &str, err: &dyn Fn(usize, String) -> Error) -> Result<T> {
            v.parse().map_err(|_| err(line, format!("invalid value `{v}` for `{key}`")))
        }
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };

        let (_, input) = required("input")?;
        let (_, output) = required("output")?;
        let (lline, levels) = required("levels")?;
        let levels = levels
            .split(',')
            .map(|s| num::<f64>(s.trim(), lline, "levels", &err))
            .collect::<Result<Vec<_>>>()?;
        let mut cfg = Self::new(resolve(&input), resolve(&output), vec![0.0]).expect("defaults are valid");
        cfg.levels = levels;
        if let Some((l, v)) = map.get("mode") {
            cfg.mode = v.parse().map_err(|e| err(*l, e))?;
        }
        if let Some((l, v)) = map.get("bins") {
            cfg.bins = num(v, *l, "bins", &err)?;
        }
        if let Some((l, v)) = map.get("theta") {
            cfg.theta = num(v, *l, "theta", &err)?;
        }
        if let Some((l, v)) = map.get("seed") {
            cfg.seed = num(v, *l, "seed", &err)?;
        }
        if let Some((l, v)) = map.get("crop") {
            cfg.crop = num(v, *l, "crop", &err)?;
        }
        if let Some((l, v)) = map.get("workers") {
            cfg.workers = num(v, *l, "workers", &err)?;
        }
        if let Some((_, v)) = map.get("weights") {
            cfg.weights = Some(resolve(v));
        }
        let lambda = match map.get("noise_lambda") {
            Some((l, v)) => num(v, *l, "noise_lambda", &err)?,
            None => 0.0,
        };
        let sigma = match map.get("noise_sigma") {
            Some((l, v)) => num(v, *l, "noise_sigma", &err)?,
            None => 0.0,
        };
        let centered = match map.get("noise_centered") {
            Some((l, v)) => num::<bool>(v, *l, "noise_centered", &err)?,
            None => true,
        };
        let noise = NoiseModel::new(lambda, sigma).map_err(|e| err(0, e.to_string()))?;
        cfg.noise = if centered { noise } else { noise.uncentered() };
        cfg.validate().map_err(|m| err(lline, m))?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Input(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.levels.is_empty() {
            return Err("at least one level is required".into());
        }
        if let Some(l) = self.levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(format!("level {l} lies outside [0, 1]"));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err("levels must be strictly increasing".into());
        }
        if self.bins == 0 {
            return Err("bins must be positive".into());
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(format!("theta must be > 0, got {}", self.theta));
        }
        if self.crop < 2 {
            return Err("crop must be at least 2".into());
        }
        Ok(())
    }

    /// Effective settings, one `key=value` per line in key order.
    pub fn canonical_text(&self) -> String {
        let levels: Vec<String> = self.levels.iter().map(|l| l.to_string()).collect();
        let mut pairs = vec![
            ("bins", self.bins.to_string()),
            ("crop", self.crop.to_string()),
            ("input", self.input.display().to_string()),
            ("levels", levels.join(",")),
            ("mode", self.mode.to_string()),
            ("noise_centered", self.noise.is_centered().to_string()),
            ("noise_lambda", self.noise.lambda().to_string()),
            ("noise_sigma", self.noise.sigma_n().to_string()),
            ("output", self.output.display().to_string()),
            ("seed", self.seed.to_string()),
            ("theta", self.theta.to_string()),
        ];
        if let Some(w) = &self.weights {
            pairs.push(("weights", w.display().to_string()));
        }
        // worker count never changes results, so it stays out of the hash
        pairs.sort_by_key(|(k, _)| *k);
        pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn hash(&self) -> u64 {
        let mut h = FnvHasher::default();
        h.write(self.canonical_text().as_bytes());
        h.finish()
    }
}
