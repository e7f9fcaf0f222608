use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use droplet_core::dynamics::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Spectrum,
    Evolve,
    Stability,
    SweepMu,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Spectrum => "spectrum",
            Self::Evolve => "evolve",
            Self::Stability => "stability",
            Self::SweepMu => "sweep-mu",
            Self::Validate => "validate",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "solve" => Ok(Self::Solve),
            "spectrum" => Ok(Self::Spectrum),
            "evolve" => Ok(Self::Evolve),
            "stability" => Ok(Self::Stability),
            "sweep-mu" | "sweep_mu" => Ok(Self::SweepMu),
            "validate" => Ok(Self::Validate),
            _ => Err("expected one of solve, spectrum, evolve, stability, sweep-mu, validate".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err("expected csv or json".into()),
        }
    }
}

/// Error raised while assembling a [`Config`]; always names the offending key
/// when there is one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Fully resolved scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub command: Command,
    pub a: f64,
    pub b: f64,
    pub mu: f64,
    pub volume: f64,
    pub n_modes: usize,
    /// `None` selects `4 N`.
    pub n_grid: Option<usize>,
    pub dt: f64,
    pub t_end: f64,
    pub frame: Frame,
    /// Inline perturbation `k:a:b,...` meaning `Σ a cos kθ + b sin kθ`.
    pub shape: String,
    pub shape_file: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub format: Format,
    pub seed: u64,
    pub record_every: usize,
    pub mu_max: f64,
    pub mu_steps: usize,
    pub tail_fraction: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            command: Command::Solve,
            a: 1.0,
            b: 1.0,
            mu: 0.1,
            volume: std::f64::consts::FRAC_PI_4,
            n_modes: 16,
            n_grid: None,
            dt: 1e-3,
            t_end: 10.0,
            frame: Frame::Lab,
            shape: String::new(),
            shape_file: None,
            out_dir: PathBuf::from("out"),
            format: Format::Csv,
            seed: 0,
            record_every: 100,
            mu_max: 8.0,
            mu_steps: 33,
            tail_fraction: 0.5,
        }
    }
}

/// Recognized keys, in the order they appear in output headers.
pub const KEYS: &[&str] = &[
    "command",
    "a",
    "b",
    "mu",
    "volume",
    "n_modes",
    "n_grid",
    "dt",
    "t_end",
    "frame",
    "shape",
    "shape_file",
    "out_dir",
    "format",
    "seed",
    "record_every",
    "mu_max",
    "mu_steps",
    "tail_fraction",
];

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    raw.trim()
        .parse()
        .map_err(|e| ConfigError(format!("invalid value `{raw}` for key `{key}`: {e}")))
}

impl Config {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let key = normalize(key);
        let k = key.as_str();
        match k {
            "command" => self.command = parse(k, raw)?,
            "a" => self.a = parse(k, raw)?,
            "b" => self.b = parse(k, raw)?,
            "mu" => self.mu = parse(k, raw)?,
            "volume" => self.volume = parse(k, raw)?,
            "n_modes" => self.n_modes = parse(k, raw)?,
            "n_grid" => {
                self.n_grid = match raw.trim() {
                    "" | "auto" => None,
                    _ => Some(parse(k, raw)?),
                }
            }
            "dt" => self.dt = parse(k, raw)?,
            "t_end" => self.t_end = parse(k, raw)?,
            "frame" => self.frame = parse(k, raw)?,
            "shape" => {
                parse_inline_shape(raw)?;
                self.shape = raw.trim().to_string();
            }
            "shape_file" => {
                self.shape_file = match raw.trim() {
                    "" => None,
                    p => Some(PathBuf::from(p)),
                }
            }
            "out_dir" => self.out_dir = PathBuf::from(raw.trim()),
            "format" => self.format = parse(k, raw)?,
            "seed" => self.seed = parse(k, raw)?,
            "record_every" => self.record_every = parse(k, raw)?,
            "mu_max" => self.mu_max = parse(k, raw)?,
            "mu_steps" => self.mu_steps = parse(k, raw)?,
            "tail_fraction" => self.tail_fraction = parse(k, raw)?,
            _ => return Err(ConfigError(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file; `#` starts a comment.
    pub fn apply_file_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        let mut seen: Vec<String> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                ConfigError(format!("{origin}:{}: expected `key = value`, got `{line}`", lineno + 1))
            })?;
            let key = normalize(key);
            if seen.contains(&key) {
                return Err(ConfigError(format!("{origin}:{}: duplicate key `{key}`", lineno + 1)));
            }
            self.set(&key, value)
                .map_err(|e| ConfigError(format!("{origin}:{}: {e}", lineno + 1)))?;
            seen.push(key);
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &std::path::Path) -> Result<(), ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config file `{}`: {e}", path.display())))?;
        self.apply_file_text(&text, &path.display().to_string())
    }

    /// Range checks that do not need the numerics.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("a", self.a),
            ("b", self.b),
            ("volume", self.volume),
            ("dt", self.dt),
            ("mu_max", self.mu_max),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError(format!("key `{k}` must be positive, got {v}")));
            }
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(ConfigError(format!("key `mu` must be nonnegative, got {}", self.mu)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(ConfigError(format!("key `t_end` must be nonnegative, got {}", self.t_end)));
        }
        if self.n_modes < 4 {
            return Err(ConfigError(format!("key `n_modes` must be at least 4, got {}", self.n_modes)));
        }
        if let Some(m) = self.n_grid {
            if m < 2 * self.n_modes + 2 {
                return Err(ConfigError(format!(
                    "key `n_grid` must be at least 2 n_modes + 2 = {}, got {m}",
                    2 * self.n_modes + 2
                )));
            }
        }
        if self.record_every == 0 {
            return Err(ConfigError("key `record_every` must be positive".into()));
        }
        if self.mu_steps < 2 {
            return Err(ConfigError(format!("key `mu_steps` must be at least 2, got {}", self.mu_steps)));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(ConfigError(format!(
                "key `tail_fraction` must lie in (0, 1], got {}",
                self.tail_fraction
            )));
        }
        if let Some(p) = &self.shape_file {
            if !p.is_file() {
                return Err(ConfigError(format!("key `shape_file`: no such file `{}`", p.display())));
            }
        }
        Ok(())
    }

    pub fn grid_points(&self) -> usize {
        self.n_grid.unwrap_or(4 * self.n_modes)
    }

    /// Textual value of a key as it appears in output headers.
    pub fn value_of(&self, key: &str) -> String {
        match key {
            "command" => self.command.name().into(),
            "a" => self.a.to_string(),
            "b" => self.b.to_string(),
            "mu" => self.mu.to_string(),
            "volume" => self.volume.to_string(),
            "n_modes" => self.n_modes.to_string(),
            "n_grid" => self.grid_points().to_string(),
            "dt" => self.dt.to_string(),
            "t_end" => self.t_end.to_string(),
            "frame" => match self.frame {
                Frame::Lab => "lab".into(),
                Frame::Comoving => "comoving".into(),
            },
            "shape" => self.shape.clone(),
            "shape_file" => self
                .shape_file
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "out_dir" => self.out_dir.display().to_string(),
            "format" => match self.format {
                Format::Csv => "csv".into(),
                Format::Json => "json".into(),
            },
            "seed" => self.seed.to_string(),
            "record_every" => self.record_every.to_string(),
            "mu_max" => self.mu_max.to_string(),
            "mu_steps" => self.mu_steps.to_string(),
            "tail_fraction" => self.tail_fraction.to_string(),
            _ => String::new(),
        }
    }

    /// `key = value` lines for every key.
    pub fn header(&self) -> String {
        let mut out = format!("droplet {}\n", env!("CARGO_PKG_VERSION"));
        for k in KEYS {
            out.push_str(&format!("{k} = {}\n", self.value_of(k)));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for k in KEYS {
            map.insert((*k).into(), serde_json::Value::String(self.value_of(k)));
        }
        serde_json::Value::Object(map)
    }
}

/// Parses `k:a:b` entries separated by commas or whitespace.
pub fn parse_inline_shape(raw: &str) -> Result<Vec<(usize, f64, f64)>, ConfigError> {
    let mut modes = Vec::new();
    for entry in raw.split(|c: char| c == ',' || c.is_whitespace()).filter(|e| !e.is_empty()) {
        let parts: Vec<&str> = entry.split(':').collect();
        if parts.len() != 3 {
            return Err(ConfigError(format!(
                "invalid value `{entry}` for key `shape`: expected `k:cos_amplitude:sin_amplitude`"
            )));
        }
        let k: usize = parse("shape", parts[0])?;
        let a: f64 = parse("shape", parts[1])?;
        let b: f64 = parse("shape", parts[2])?;
        modes.push((k, a, b));
    }
    Ok(modes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_sets_keys_and_rejects_unknown() {
        let mut c = Config::default();
        c.apply_file_text("# comment\nmu = 0.05\nn-modes = 8 # inline\n\nframe=comoving\n", "f")
            .unwrap();
        assert_eq!(c.mu, 0.05);
        assert_eq!(c.n_modes, 8);
        assert_eq!(c.frame, Frame::Comoving);
        let err = Config::default().apply_file_text("bogus = 1\n", "f").unwrap_err();
        assert!(err.0.contains("bogus"));
        let err = Config::default().apply_file_text("mu = 1\nmu = 2\n", "f").unwrap_err();
        assert!(err.0.contains("duplicate"));
    }

    #[test]
    fn malformed_number_names_key() {
        let err = Config::default().set("dt", "1e-x").unwrap_err();
        assert!(err.0.contains("`dt`"), "{}", err.0);
        let err = Config::default().set("t-end", "soon").unwrap_err();
        assert!(err.0.contains("`t_end`"), "{}", err.0);
    }

    #[test]
    fn inline_shape() {
        assert_eq!(
            parse_inline_shape("2:0.01:0, 3:0:0.005").unwrap(),
            vec![(2, 0.01, 0.0), (3, 0.0, 0.005)]
        );
        assert!(parse_inline_shape("2:0.01").unwrap_err().0.contains("shape"));
        assert!(parse_inline_shape("").unwrap().is_empty());
    }

    #[test]
    fn range_checks() {
        let mut c = Config::default();
        c.n_modes = 3;
        assert!(c.validate().unwrap_err().0.contains("n_modes"));
        let mut c = Config::default();
        c.n_grid = Some(10);
        assert!(c.validate().unwrap_err().0.contains("n_grid"));
        assert!(Config::default().validate().is_ok());
    }

    #[test]
    fn header_lists_every_key() {
        let h = Config::default().header();
        for k in KEYS {
            assert!(h.lines().any(|l| l.starts_with(&format!("{k} = "))), "{k}");
        }
        assert!(h.contains("n_grid = 64"));
    }
}
