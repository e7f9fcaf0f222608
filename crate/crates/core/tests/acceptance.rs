//! Acceptance criteria 1-10. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use droplet_core::decomposition::{evolve_decomposed, recenter, DecomposedState, DecompositionConfig};
use droplet_core::dynamics::{EvolutionConfig, Frame, HaltReason, Model};
use droplet_core::elliptic::{EllipticSolver, ModelParams, RhsTag};
use droplet_core::geometry::{make_shape, BoundaryShape, FourierCoeffs, ReferenceCircle};
use droplet_core::linearization::{
    assemble_dh0, assemble_dh0_perp, critical_incline, fd_jacobian_h, spectrum, variation_lambda,
    variation_volume_unit, variation_volume_x1,
};
use droplet_core::scalar::{cplx, modulus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn params(mu: f64) -> ModelParams<f64> {
    ModelParams::default().with_mu(mu)
}

fn disk(n: usize) -> BoundaryShape<f64> {
    BoundaryShape::circle(ReferenceCircle::new(1.0, n).unwrap())
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn closed_form_disk() -> Outcome {
    let start = Instant::now();
    let p = params(0.1);
    let field = EllipticSolver::default().solve_full(&disk(16), &p).unwrap();
    let lambda = field.lambda.unwrap();
    let mut err: f64 = 0.0;
    for i in 0..64 {
        let r = i as f64 / 63.0;
        for k in 0..64 {
            let t = 2.0 * PI * k as f64 / 64.0;
            let exact = (1.0 - r * r) * (2.0 / 4.0 + 0.1 * r * t.cos() / 8.0);
            err = err.max((field.value(r, t) - exact).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        err <= 1e-10 && (lambda - 2.0).abs() <= 1e-12 && elapsed < Duration::from_secs(1),
        format!("max |u - u0| = {err:.2e}, |λ - 2| = {:.2e}, {elapsed:.2?}", (lambda - 2.0).abs()),
    )
}

fn dtn_multiplier() -> Outcome {
    let shape = disk(16);
    let reference = shape.reference().clone();
    let solver = EllipticSolver::default();
    let mut err: f64 = 0.0;
    for n in 0..=14usize {
        for sine in [false, true] {
            if sine && n == 0 {
                continue;
            }
            let data: Vec<f64> = (0..reference.n_grid())
                .map(|j| if sine { reference.sin_n(n as i64, j) } else { reference.cos_n(n as i64, j) })
                .collect();
            let out = solver.dtn(&shape, &data).unwrap();
            let expected: Vec<f64> = data.iter().map(|d| n as f64 * d).collect();
            err = err.max(max_diff(&out, &expected));
        }
    }
    outcome(err <= 1e-8, format!("max |DtN e_n - |n| e_n| over |n| <= 14 = {err:.2e}"))
}

fn stationary_circle() -> Outcome {
    let mut worst: f64 = 0.0;
    for mu in [0.0, 0.05, 0.1] {
        let v = Model::new(params(mu)).velocity_h(&disk(16)).unwrap();
        worst = worst.max(v.values.iter().fold(0.0, |m, x| m.max(x.abs())));
    }
    outcome(worst <= 1e-10, format!("max ‖H(0)‖∞ over μ ∈ {{0, 0.05, 0.1}} = {worst:.2e}"))
}

fn linearization_identity() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for mu in [0.0, 0.05, 0.1] {
        let p = params(mu);
        let fd = fd_jacobian_h(&p, 8, 1e-5).unwrap();
        let dh = assemble_dh0(8, &p).unwrap();
        worst = worst.max(fd.frobenius_distance(&dh) / dh.frobenius_norm());
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-4 && elapsed < Duration::from_secs(30),
        format!("max relative Frobenius error = {worst:.2e}, {elapsed:.2?}"),
    )
}

fn kernel_and_gap() -> Outcome {
    let s = spectrum(&assemble_dh0(16, &params(0.05)).unwrap()).unwrap();
    let kernel = s.eigenvalues.iter().filter(|z| modulus(**z) <= 1e-10).count();
    let lead = s.leading_nonzero_real().unwrap();
    outcome(
        kernel == 2 && lead <= -0.2,
        format!("kernel eigenvalues = {kernel}, leading nonzero Re λ = {lead:.6}"),
    )
}

fn hadamard_variations() -> Outcome {
    let p = params(0.1);
    let n = 8;
    let reference = ReferenceCircle::new(1.0, n).unwrap();
    let solver = EllipticSolver::default();
    let eps = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let mut h = FourierCoeffs::zeros(n);
        h.set(0, cplx(rng.random_range(-1.0..1.0), 0.0));
        for k in 1..=n {
            let scale = 1.0 / (k * k) as f64;
            h.set_real_mode(
                k,
                cplx(rng.random_range(-0.5..0.5) * scale, rng.random_range(-0.5..0.5) * scale),
            );
        }
        let at = |s: f64| {
            let shape = make_shape(&reference, &h.scale(s)).unwrap();
            let unit = solver.solve_component(&shape, RhsTag::Unit).unwrap().volume;
            let x1 = solver.solve_component(&shape, RhsTag::X1).unwrap().volume;
            let lambda = solver.lagrange_multiplier(&shape, &p).unwrap();
            [unit, x1, lambda]
        };
        let (plus, minus) = (at(eps), at(-eps));
        let fd: Vec<f64> = (0..3).map(|i| (plus[i] - minus[i]) / (2.0 * eps)).collect();
        let exact = [
            variation_volume_unit(&h, 1.0),
            variation_volume_x1(&h, 1.0),
            variation_lambda(&h, &p),
        ];
        worst = worst.max(max_diff(&fd, &exact));
    }
    outcome(worst <= 1e-5, format!("max |closed form - FD| over 5 directions = {worst:.2e}"))
}

fn criterion7_initial() -> BoundaryShape<f64> {
    let reference = ReferenceCircle::new(1.0, 16).unwrap();
    let mut c = FourierCoeffs::zeros(16);
    c.set_real_mode(2, cplx(0.005, 0.0));
    c.set_real_mode(3, cplx(0.0, -0.0025));
    make_shape(&reference, &c).unwrap()
}

struct StabilityRun {
    traj: droplet_core::decomposition::DecomposedTrajectory<f64>,
    elapsed: Duration,
}

fn stability_run() -> StabilityRun {
    let start = Instant::now();
    let model = Model::new(params(0.05));
    let state = DecomposedState::new([0.0, 0.0], &criterion7_initial()).unwrap();
    let traj = evolve_decomposed(&model, &state, &DecompositionConfig::new(1e-3, 10.0).record_every(100));
    StabilityRun {
        traj,
        elapsed: start.elapsed(),
    }
}

fn nonlinear_stability(run: &StabilityRun) -> Outcome {
    let traj = &run.traj;
    if !traj.halt.is_completed() {
        return outcome(false, format!("evolution halted: {:?}", traj.halt));
    }
    let gap = spectrum(&assemble_dh0_perp(16, &params(0.05)).unwrap())
        .unwrap()
        .gap()
        .unwrap();
    let fit = traj.fit.unwrap();
    let rel = (fit.omega0 - gap).abs() / gap;
    let last = traj.last().unwrap();
    let ratio = traj.z_tail_ratio().unwrap();
    outcome(
        rel <= 0.2 && last.norm_rho_bar <= 1e-6 && ratio <= 1.0 && run.elapsed < Duration::from_secs(120),
        format!(
            "ω0_fit = {:.4}, gap = {gap:.4} (rel {rel:.3}), ‖ρ̄(T)‖∞ = {:.2e}, z tail ratio = {ratio:.3}, z_∞ = ({:.3e}, {:.3e}), {:.2?}",
            fit.omega0, last.norm_rho_bar, fit.z_inf[0], fit.z_inf[1], run.elapsed
        ),
    )
}

fn rigid_translation() -> Outcome {
    let p = params(0.05);
    let model = Model::new(p);
    let traj = model.evolve(&disk(16), &EvolutionConfig::new(1e-3, 1.0, Frame::Lab).record_every(1000));
    if !traj.halt.is_completed() {
        return outcome(false, format!("evolution halted: {:?}", traj.halt));
    }
    let last = traj.last().unwrap();
    let shape = make_shape(disk(16).reference(), &last.rho_hat).unwrap();
    let d = recenter(&shape).unwrap();
    let v0 = p.v0();
    let dz = ((d.z[0] - v0).powi(2) + d.z[1].powi(2)).sqrt();
    let rb = d.rho_bar.sup_norm();
    outcome(
        (v0 - 0.0125).abs() < 1e-15 && dz <= 0.01 * v0 && rb <= 1e-4,
        format!("z(1) = ({:.6e}, {:.2e}), |z - v0 e1| = {dz:.2e}, ‖ρ̄‖∞ = {rb:.2e}", d.z[0], d.z[1]),
    )
}

fn critical_incline_check() -> Outcome {
    let mu = critical_incline(&disk(16), &params(0.0), (0.0, 10.0), 1e-10).unwrap();
    let traj = Model::new(params(5.0)).evolve(&disk(16), &EvolutionConfig::new(1e-3, 1.0, Frame::Lab));
    let halted = matches!(traj.halt, HaltReason::ParabolicityLost { t, .. } if t == 0.0);
    outcome(
        (mu - 4.0).abs() <= 1e-6 && halted,
        format!("μ* = {mu:.10}, evolve at μ = 5 → {}", traj.halt.to_json()),
    )
}

fn decomposition_consistency(run: &StabilityRun) -> Outcome {
    let model = Model::new(params(0.05));
    let direct = model.evolve(
        &criterion7_initial(),
        &EvolutionConfig::new(1e-3, 5.0, Frame::Comoving).record_every(100),
    );
    if !direct.halt.is_completed() {
        return outcome(false, format!("direct evolution halted: {:?}", direct.halt));
    }
    let reference = criterion7_initial().reference().clone();
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for rec in &direct.records {
        let Some(dec) = run.traj.records.iter().find(|r| (r.t - rec.t).abs() < 1e-9) else {
            continue;
        };
        let rho_bar = make_shape(&reference, &dec.rho_bar_hat).unwrap();
        let rebuilt = DecomposedState { z: dec.z, rho_bar }.reconstruct().unwrap();
        let shape = make_shape(&reference, &rec.rho_hat).unwrap();
        worst = worst.max(max_diff(rebuilt.grid(), shape.grid()));
        compared += 1;
    }
    outcome(
        compared == direct.records.len() && compared >= 50 && worst <= 1e-6,
        format!("max pointwise curve difference over {compared} times in [0, 5] = {worst:.2e}"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "closed-form disk solution", closed_form_disk()),
        (2, "DtN multiplier on the disk", dtn_multiplier()),
        (3, "stationary translating circle", stationary_circle()),
        (4, "linearization vs finite differences", linearization_identity()),
        (5, "kernel and spectral gap", kernel_and_gap()),
        (6, "Hadamard variations", hadamard_variations()),
    ];
    let run = stability_run();
    results.push((7, "nonlinear stability", nonlinear_stability(&run)));
    results.push((8, "rigid translation in the lab frame", rigid_translation()));
    results.push((9, "critical incline and parabolicity loss", critical_incline_check()));
    results.push((10, "decomposition consistency", decomposition_consistency(&run)));
    let mut failed = 0;
    for (id, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {id:>2}: {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
