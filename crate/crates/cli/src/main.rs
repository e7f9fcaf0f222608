mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::{run, Failure};
use config::Config;

/// Sliding droplet on an inclined plane: spectral boundary evolution and
/// stability of the translating circle.
///
/// Settings come from built-in defaults, then `--config FILE` (`key = value`
/// lines, `#` comments), then flags. Outputs go to `--out-dir`; a summary is
/// printed as JSON. Exit status: 0 success, 1 configuration error,
/// 2 numerical failure (error JSON on stderr).
#[derive(Debug, Parser)]
#[command(name = "droplet", version, allow_negative_numbers = true)]
struct Args {
    /// solve | spectrum | evolve | stability | sweep-mu | validate [default: solve]
    #[arg(value_name = "COMMAND")]
    positional: Option<String>,
    /// Same as the positional COMMAND.
    #[arg(long)]
    command: Option<String>,
    /// `key = value` configuration file, applied before flags.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Contact-line law slope `a` in F(q) = a q - b [default: 1]
    #[arg(long)]
    a: Option<String>,
    /// Contact-line law offset `b` [default: 1]
    #[arg(long)]
    b: Option<String>,
    /// Incline parameter mu [default: 0.1]
    #[arg(long)]
    mu: Option<String>,
    /// Droplet volume V [default: pi/4]
    #[arg(long)]
    volume: Option<String>,
    /// Fourier truncation N [default: 16]
    #[arg(long = "n-modes", short = 'N')]
    n_modes: Option<String>,
    /// Boundary grid points M [default: 4N]
    #[arg(long = "n-grid")]
    n_grid: Option<String>,
    /// RK4 time step [default: 0.001]
    #[arg(long)]
    dt: Option<String>,
    /// Final time [default: 10]
    #[arg(long = "t-end")]
    t_end: Option<String>,
    /// lab | comoving (evolve only) [default: lab]
    #[arg(long)]
    frame: Option<String>,
    /// Inline perturbation `k:a:b,...` = sum of a cos(k t) + b sin(k t) [default: none]
    #[arg(long)]
    shape: Option<String>,
    /// Shape record (`R_ref N M` then `n re im` lines) [default: none]
    #[arg(long = "shape-file")]
    shape_file: Option<String>,
    /// Output directory [default: out]
    #[arg(long = "out-dir")]
    out_dir: Option<String>,
    /// csv | json [default: csv]
    #[arg(long)]
    format: Option<String>,
    /// Seed of the random directions used by validate [default: 0]
    #[arg(long)]
    seed: Option<String>,
    /// Keep every k-th time step [default: 100]
    #[arg(long = "record-every")]
    record_every: Option<String>,
    /// Upper end of the sweep-mu range [default: 8]
    #[arg(long = "mu-max")]
    mu_max: Option<String>,
    /// Number of sweep-mu points [default: 33]
    #[arg(long = "mu-steps")]
    mu_steps: Option<String>,
    /// Fraction of the run used by the decay fit [default: 0.5]
    #[arg(long = "tail-fraction")]
    tail_fraction: Option<String>,
}

impl Args {
    fn flags(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("a", &self.a),
            ("b", &self.b),
            ("mu", &self.mu),
            ("volume", &self.volume),
            ("n_modes", &self.n_modes),
            ("n_grid", &self.n_grid),
            ("dt", &self.dt),
            ("t_end", &self.t_end),
            ("frame", &self.frame),
            ("shape", &self.shape),
            ("shape_file", &self.shape_file),
            ("out_dir", &self.out_dir),
            ("format", &self.format),
            ("seed", &self.seed),
            ("record_every", &self.record_every),
            ("mu_max", &self.mu_max),
            ("mu_steps", &self.mu_steps),
            ("tail_fraction", &self.tail_fraction),
        ]
    }
}

fn resolve(args: &Args) -> Result<Config, String> {
    let mut cfg = Config::default();
    if let Some(path) = &args.config {
        cfg.apply_file(path).map_err(|e| e.0)?;
    }
    let command = match (&args.positional, &args.command) {
        (Some(p), Some(c)) if p != c => {
            return Err(format!("command given twice: `{p}` and `--command {c}`"));
        }
        (Some(c), _) | (None, Some(c)) => Some(c),
        (None, None) => None,
    };
    if let Some(c) = command {
        cfg.set("command", c).map_err(|e| e.0)?;
    }
    for (key, value) in args.flags() {
        if let Some(v) = value {
            cfg.set(key, v).map_err(|e| e.0)?;
        }
    }
    Ok(cfg)
}

fn fail(f: &Failure) -> ExitCode {
    eprintln!("{}", f.to_json());
    ExitCode::from(f.exit_code())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match resolve(&args) {
        Ok(c) => c,
        Err(m) => return fail(&Failure::Config(m)),
    };
    match run(&cfg) {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            println!("{}", serde_json::to_string_pretty(&report.summary).expect("json values serialize"));
            ExitCode::SUCCESS
        }
        Err(f) => fail(&f),
    }
}
