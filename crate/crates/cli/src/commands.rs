use std::fs;
use std::io::{self, Write};
use std::path::Path;

use droplet_core::decomposition::{evolve_decomposed, recenter, DecompositionConfig, DecomposedTrajectory};
use droplet_core::dynamics::{ContactLineLaw, EvolutionConfig, HaltReason, Model, Trajectory};
use droplet_core::elliptic::{min_contact_slope, EllipticSolver, ModelParams};
use droplet_core::geometry::{make_shape, read_shape, BoundaryShape, FourierCoeffs, ReferenceCircle};
use droplet_core::linearization::{
    assemble_dh0, assemble_dh0_perp, critical_incline, principal_symbol_coefficient, spectral_threshold_mu,
    spectrum,
};
use droplet_core::scalar::cplx;
use droplet_core::validation::run_checks;
use droplet_core::Error;
use serde_json::{json, Value};

use crate::config::{parse_inline_shape, Command, Config, Format};

/// Why a run did not succeed.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(Error),
    Io(String),
    /// Some validation checks failed; carries the summary.
    Checks(Value),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            _ => 2,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Self::Config(m) => json!({ "error": { "kind": "config", "message": m } }),
            Self::Numerical(e) => json!({ "error": { "kind": e.kind(), "message": e.to_string() } }),
            Self::Io(m) => json!({ "error": { "kind": "io", "message": m } }),
            Self::Checks(summary) => json!({ "error": { "kind": "validation_failed", "summary": summary } }),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::Numerical(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

/// Outcome of a successful run.
pub struct Report {
    pub lines: Vec<String>,
    pub summary: Value,
}

fn params(cfg: &Config) -> Result<ModelParams<f64>, Failure> {
    ModelParams::new(cfg.a, cfg.b, cfg.mu, cfg.volume).map_err(|e| Failure::Config(e.to_string()))
}

/// Initial shape over the circle of radius `R0` (or the file's `R_ref`).
fn initial_shape(cfg: &Config, p: &ModelParams<f64>) -> Result<BoundaryShape<f64>, Failure> {
    let bad = |e: Error| Failure::Config(format!("initial shape: {e}"));
    let n = cfg.n_modes;
    let (radius, mut coeffs) = match &cfg.shape_file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("key `shape_file`: cannot read `{}`: {e}", path.display())))?;
            let s: BoundaryShape<f64> = read_shape(&text).map_err(bad)?;
            (s.reference().radius(), s.coeffs().resized(n))
        }
        None => (p.r0(), FourierCoeffs::zeros(n)),
    };
    for (k, a, b) in parse_inline_shape(&cfg.shape).map_err(|e| Failure::Config(e.0))? {
        if k > n {
            return Err(Failure::Config(format!(
                "key `shape`: mode {k} exceeds n_modes = {n}"
            )));
        }
        if k == 0 {
            coeffs.set(0, coeffs.get(0) + cplx(a, 0.0));
        } else {
            coeffs.set_real_mode(k, coeffs.get(k as i64) + cplx(a / 2.0, -b / 2.0));
        }
    }
    let reference = ReferenceCircle::with_grid(radius, n, cfg.grid_points()).map_err(bad)?;
    make_shape(&reference, &coeffs).map_err(bad)
}

fn commented(header: &str) -> String {
    header.lines().map(|l| format!("# {l}\n")).collect()
}

fn write_file(dir: &Path, name: &str, body: &[u8]) -> Result<String, Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Io(format!("cannot create `{}`: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Failure::Io(format!("cannot write `{}`: {e}", path.display())))?;
    Ok(path.display().to_string())
}

fn write_json(cfg: &Config, name: &str, mut body: Value) -> Result<String, Failure> {
    body["config"] = cfg.to_json();
    let mut text = serde_json::to_string_pretty(&body).expect("json values serialize");
    text.push('\n');
    write_file(&cfg.out_dir, name, text.as_bytes())
}

fn num(x: f64) -> Value {
    json!(x)
}

pub fn run(cfg: &Config) -> Result<Report, Failure> {
    cfg.validate().map_err(|e| Failure::Config(e.0))?;
    match cfg.command {
        Command::Solve => solve(cfg),
        Command::Spectrum => spectrum_cmd(cfg),
        Command::Evolve => evolve(cfg),
        Command::Stability => stability(cfg),
        Command::SweepMu => sweep_mu(cfg),
        Command::Validate => validate(cfg),
    }
}

fn solve(cfg: &Config) -> Result<Report, Failure> {
    let p = params(cfg)?;
    let shape = initial_shape(cfg, &p)?;
    let field = EllipticSolver::default().solve_full(&shape, &p)?;
    let symbol = principal_symbol_coefficient(&shape, &p, &ContactLineLaw::from_params(&p))?;
    let slopes = field.contact_slope();
    let reference = shape.reference();
    let lambda = field.lambda.unwrap_or(f64::NAN);
    let min_slope = min_contact_slope(&field);
    let summary = json!({
        "command": "solve",
        "lambda": lambda,
        "volume": field.volume,
        "volume_residual": (field.volume - p.volume).abs() / p.volume,
        "min_contact_slope": min_slope,
        "min_symbol_coefficient": symbol.iter().copied().fold(f64::INFINITY, f64::min),
        "parabolic": min_slope > 0.0,
        "boundary_residual": field.boundary_residual,
        "condition": field.condition,
        "r0": p.r0(),
        "positivity_limit": p.positivity_limit(),
    });
    let mut files = Vec::new();
    match cfg.format {
        Format::Csv => {
            let mut s = commented(&cfg.header());
            s.push_str("key,value\n");
            for (k, v) in summary.as_object().unwrap() {
                s.push_str(&format!("{k},{v}\n"));
            }
            files.push(write_file(&cfg.out_dir, "solve_summary.csv", s.as_bytes())?);
            let mut t = commented(&cfg.header());
            t.push_str("theta,rho,contact_slope,symbol_coefficient\n");
            for j in 0..reference.n_grid() {
                t.push_str(&format!(
                    "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    reference.theta(j),
                    shape.grid()[j],
                    slopes[j],
                    symbol[j]
                ));
            }
            files.push(write_file(&cfg.out_dir, "solve_trace.csv", t.as_bytes())?);
        }
        Format::Json => {
            let body = json!({
                "summary": summary,
                "trace": {
                    "theta": reference.thetas(),
                    "rho": shape.grid(),
                    "contact_slope": slopes,
                    "symbol_coefficient": symbol,
                }
            });
            files.push(write_json(cfg, "solve.json", body)?);
        }
    }
    Ok(report(summary, files, Vec::new()))
}

fn report(mut summary: Value, files: Vec<String>, lines: Vec<String>) -> Report {
    summary["files"] = json!(files);
    Report { lines, summary }
}

fn spectrum_cmd(cfg: &Config) -> Result<Report, Failure> {
    let p = params(cfg)?;
    let dh = assemble_dh0(cfg.n_modes, &p)?;
    let s = spectrum(&dh)?;
    let perp = spectrum(&assemble_dh0_perp(cfg.n_modes, &p)?)?;
    let summary = json!({
        "command": "spectrum",
        "n_eigenvalues": s.eigenvalues.len(),
        "kernel_count": s.kernel_count,
        "kernel_tol": s.kernel_tol,
        "leading_nonzero_real": s.leading_nonzero_real().map(num),
        "gap_perp": perp.gap().map(num),
        "omega": p.omega(),
        "reality_defect": dh.reality_defect(),
    });
    let mut files = Vec::new();
    let mut dump = commented(&cfg.header()).into_bytes();
    writeln!(dump, "# row col re im")?;
    dh.write_dump(&mut dump)?;
    files.push(write_file(&cfg.out_dir, "dh0_matrix.txt", &dump)?);
    match cfg.format {
        Format::Csv => {
            let mut out = commented(&cfg.header()).into_bytes();
            for (k, v) in summary.as_object().unwrap() {
                writeln!(out, "# {k} = {v}")?;
            }
            s.write_csv(&mut out)?;
            files.push(write_file(&cfg.out_dir, "spectrum.csv", &out)?);
        }
        Format::Json => {
            let eig: Vec<[f64; 2]> = s.eigenvalues.iter().map(|z| [z.re, z.im]).collect();
            files.push(write_json(cfg, "spectrum.json", json!({ "summary": summary, "eigenvalues": eig }))?);
        }
    }
    Ok(report(summary, files, Vec::new()))
}

fn trajectory_json(traj: &Trajectory<f64>) -> Value {
    let records: Vec<Value> = traj
        .records
        .iter()
        .map(|r| {
            let rho: Vec<[f64; 2]> = (0..=r.rho_hat.n_max() as i64)
                .map(|k| [r.rho_hat.get(k).re, r.rho_hat.get(k).im])
                .collect();
            json!({
                "t": r.t,
                "lambda": r.lambda,
                "min_contact_slope": r.min_contact_slope,
                "volume_residual": r.volume_residual,
                "sup_rho": r.sup_rho,
                "rho_hat": rho,
            })
        })
        .collect();
    json!(records)
}

fn halt_failure(halt: &HaltReason) -> Option<Failure> {
    match halt {
        HaltReason::Failed { error, .. } => Some(Failure::Numerical(error.clone())),
        _ => None,
    }
}

fn evolve(cfg: &Config) -> Result<Report, Failure> {
    let p = params(cfg)?;
    let shape = initial_shape(cfg, &p)?;
    let model = Model::new(p);
    let ec = EvolutionConfig::new(cfg.dt, cfg.t_end, cfg.frame).record_every(cfg.record_every);
    let traj = model.evolve(&shape, &ec);
    let mut summary = traj.halt.to_json();
    summary["command"] = json!("evolve");
    summary["records"] = json!(traj.records.len());
    summary["warnings"] = json!(traj.warnings);
    if let Some(last) = traj.last() {
        summary["final"] = json!({
            "t": last.t,
            "lambda": last.lambda,
            "min_contact_slope": last.min_contact_slope,
            "volume_residual": last.volume_residual,
            "sup_rho": last.sup_rho,
        });
    }
    let mut files = Vec::new();
    match cfg.format {
        Format::Csv => {
            let mut out = Vec::new();
            traj.write_csv(&mut out, &cfg.header())?;
            files.push(write_file(&cfg.out_dir, "trajectory.csv", &out)?);
        }
        Format::Json => {
            let body = json!({ "summary": summary.clone(), "records": trajectory_json(&traj) });
            files.push(write_json(cfg, "trajectory.json", body)?);
        }
    }
    if let Some(f) = halt_failure(&traj.halt) {
        return Err(f);
    }
    Ok(report(summary, files, traj.warnings.clone()))
}

fn decomposed_json(traj: &DecomposedTrajectory<f64>) -> Value {
    let records: Vec<Value> = traj
        .records
        .iter()
        .map(|r| {
            let rho: Vec<[f64; 2]> = (0..=r.rho_bar_hat.n_max() as i64)
                .map(|k| [r.rho_bar_hat.get(k).re, r.rho_bar_hat.get(k).im])
                .collect();
            json!({
                "t": r.t,
                "z": r.z,
                "norm_rho_bar": r.norm_rho_bar,
                "kernel_drift": r.kernel_drift,
                "lambda": r.lambda,
                "min_contact_slope": r.min_contact_slope,
                "rho_bar_hat": rho,
            })
        })
        .collect();
    json!(records)
}

fn stability(cfg: &Config) -> Result<Report, Failure> {
    let p = params(cfg)?;
    let shape = initial_shape(cfg, &p)?;
    let state = recenter(&shape)?;
    let model = Model::new(p);
    let mut dc = DecompositionConfig::new(cfg.dt, cfg.t_end).record_every(cfg.record_every);
    dc.tail_fraction = cfg.tail_fraction;
    let traj = evolve_decomposed(&model, &state, &dc);
    let gap = spectrum(&assemble_dh0_perp(cfg.n_modes, &p)?)?.gap();
    let mut summary = traj.summary_json();
    summary["command"] = json!("stability");
    summary["z_initial"] = json!(state.z);
    summary["gap_perp"] = json!(gap);
    summary["z_tail_ratio"] = json!(traj.z_tail_ratio());
    if let (Some(fit), Some(g)) = (traj.fit, gap) {
        summary["rate_relative_deviation"] = json!((fit.omega0 - g).abs() / g);
    }
    if let Some(last) = traj.last() {
        summary["final_norm_rho_bar"] = json!(last.norm_rho_bar);
    }
    let mut files = Vec::new();
    match cfg.format {
        Format::Csv => {
            let mut out = Vec::new();
            traj.write_csv(&mut out, &cfg.header())?;
            files.push(write_file(&cfg.out_dir, "stability.csv", &out)?);
        }
        Format::Json => {
            let body = json!({ "summary": summary.clone(), "records": decomposed_json(&traj) });
            files.push(write_json(cfg, "stability.json", body)?);
        }
    }
    if let Some(f) = halt_failure(&traj.halt) {
        return Err(f);
    }
    Ok(report(summary, files, traj.warnings.clone()))
}

fn sweep_mu(cfg: &Config) -> Result<Report, Failure> {
    let p = params(cfg)?;
    let shape = initial_shape(cfg, &p)?;
    let comps = EllipticSolver::default().solve_components(&shape)?;
    let mut rows = Vec::with_capacity(cfg.mu_steps);
    for k in 0..cfg.mu_steps {
        let mu = cfg.mu_max * k as f64 / (cfg.mu_steps - 1) as f64;
        let slope = comps.min_contact_slope_at(&p, mu)?;
        let lead = spectrum(&assemble_dh0(cfg.n_modes, &p.with_mu(mu))?)?.leading_nonzero_real();
        rows.push((mu, slope, lead));
    }
    let (mu_star, bracket_note) = match critical_incline(&shape, &p, (0.0, cfg.mu_max), 1e-10) {
        Ok(m) => (Some(m), Value::Null),
        Err(e @ Error::BracketInvalid { .. }) => (None, json!(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let threshold = spectral_threshold_mu(&p, cfg.n_modes, (0.0, cfg.mu_max), 1e-8)?;
    let summary = json!({
        "command": "sweep-mu",
        "mu_star": mu_star,
        "mu_star_note": bracket_note,
        "positivity_limit": p.positivity_limit(),
        "mu_spectral_threshold": threshold,
        "points": rows.len(),
    });
    let mut files = Vec::new();
    match cfg.format {
        Format::Csv => {
            let mut out = commented(&cfg.header()).into_bytes();
            for (k, v) in summary.as_object().unwrap() {
                writeln!(out, "# {k} = {v}")?;
            }
            writeln!(out, "mu,min_contact_slope,leading_nonzero_real")?;
            for (mu, slope, lead) in &rows {
                let lead = lead.map_or("nan".to_string(), |l| format!("{l:.16e}"));
                writeln!(out, "{mu:.16e},{slope:.16e},{lead}")?;
            }
            files.push(write_file(&cfg.out_dir, "sweep_mu.csv", &out)?);
        }
        Format::Json => {
            let table: Vec<Value> = rows
                .iter()
                .map(|(mu, s, l)| json!({ "mu": mu, "min_contact_slope": s, "leading_nonzero_real": l }))
                .collect();
            files.push(write_json(cfg, "sweep_mu.json", json!({ "summary": summary, "table": table }))?);
        }
    }
    Ok(report(summary, files, Vec::new()))
}

fn validate(cfg: &Config) -> Result<Report, Failure> {
    let p = params(cfg)?;
    let checks = run_checks(&p, cfg.n_modes, cfg.seed)?;
    let lines: Vec<String> = checks
        .iter()
        .map(|c| {
            format!(
                "[{}] {}: {:.3e} (tolerance {:.1e})",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.tolerance
            )
        })
        .collect();
    let failed = checks.iter().filter(|c| !c.pass).count();
    let summary = json!({
        "command": "validate",
        "checks": checks.len(),
        "failed": failed,
    });
    let mut files = Vec::new();
    match cfg.format {
        Format::Csv => {
            let mut out = commented(&cfg.header()).into_bytes();
            writeln!(out, "check,value,tolerance,pass")?;
            for c in &checks {
                writeln!(out, "{},{:.6e},{:.1e},{}", c.name, c.value, c.tolerance, c.pass)?;
            }
            files.push(write_file(&cfg.out_dir, "validate.csv", &out)?);
        }
        Format::Json => {
            files.push(write_json(cfg, "validate.json", json!({ "summary": summary, "checks": checks }))?);
        }
    }
    if failed > 0 {
        for l in &lines {
            println!("{l}");
        }
        return Err(Failure::Checks(summary));
    }
    Ok(report(summary, files, lines))
}

