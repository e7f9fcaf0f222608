//! Self-checks of the numerics against closed forms and finite differences,
//! for a given parameter set on its translating circle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::decomposition::{
    decomposed_velocity, kernel_defect, reassembled_velocity, recenter, translation_identity_defect,
    DecomposedState,
};
use crate::dynamics::Model;
use crate::elliptic::{EllipticSolver, ModelParams, RhsTag};
use crate::error::Result;
use crate::geometry::{make_shape, BoundaryShape, FourierCoeffs, ReferenceCircle};
use crate::linearization::{
    assemble_dh0, critical_incline, fd_jacobian_h, spectrum, variation_lambda, variation_volume_unit,
    variation_volume_x1,
};
use crate::scalar::{cplx, modulus};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn perturbed(reference: &ReferenceCircle<f64>, modes: &[(usize, f64, f64)]) -> Result<BoundaryShape<f64>> {
    let mut c = FourierCoeffs::zeros(reference.n_modes());
    for &(k, a, b) in modes {
        c.set_real_mode(k, cplx(a / 2.0, -b / 2.0));
    }
    make_shape(reference, &c)
}

/// Runs every check; `n` is the truncation order, `seed` drives the random
/// directions of the domain-variation check.
pub fn run_checks(params: &ModelParams<f64>, n: usize, seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let r0 = params.r0();
    let reference = params.reference_circle(n)?;
    let circle = BoundaryShape::circle(reference.clone());
    let solver = EllipticSolver::default();
    let model = Model::new(*params);

    let field = solver.solve_full(&circle, params)?;
    let lambda0 = params.lambda0();
    let mut err: f64 = 0.0;
    for i in 0..32 {
        let r = r0 * i as f64 / 31.0;
        for k in 0..32 {
            let th = std::f64::consts::TAU * k as f64 / 32.0;
            let exact = (r0 * r0 - r * r) * (lambda0 / 4.0 + params.mu * r * th.cos() / 8.0);
            err = err.max((field.value(r, th) - exact).abs());
        }
    }
    checks.push(Check::below("disk_solution_max_error", err, 1e-10));
    checks.push(Check::below(
        "disk_lambda_error",
        (field.lambda.unwrap_or(f64::NAN) - lambda0).abs(),
        1e-12 * lambda0.max(1.0),
    ));

    let mut err: f64 = 0.0;
    for k in 0..=(n.saturating_sub(2)) as i64 {
        let data: Vec<f64> = (0..reference.n_grid()).map(|j| reference.cos_n(k, j)).collect();
        let out = solver.dtn(&circle, &data)?;
        let expected: Vec<f64> = data.iter().map(|d| k as f64 / r0 * d).collect();
        err = err.max(sup_diff(&out, &expected));
    }
    checks.push(Check::below("dtn_multiplier_error", err, 1e-8));

    let h0 = model.velocity_h(&circle)?;
    checks.push(Check::below(
        "translating_circle_velocity",
        h0.values.iter().fold(0.0, |m, x| m.max(x.abs())),
        1e-10,
    ));

    let fd_n = n.min(8);
    let fd = fd_jacobian_h(params, fd_n, 1e-5)?;
    let dh = assemble_dh0(fd_n, params)?;
    checks.push(Check::below(
        "jacobian_relative_error",
        fd.frobenius_distance(&dh) / dh.frobenius_norm(),
        1e-4,
    ));

    let s = spectrum(&assemble_dh0(n, params)?)?;
    let kernel = s.eigenvalues.iter().filter(|z| modulus(**z) <= 1e-10).count();
    checks.push(Check::below("kernel_dimension_mismatch", (kernel as f64 - 2.0).abs(), 0.0));
    let lead = s.leading_nonzero_real().unwrap_or(f64::NAN);
    checks.push(Check::below(
        "leading_nonzero_real_part",
        lead,
        -0.8 * params.omega(),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-4 * r0;
    let mut err: f64 = 0.0;
    for _ in 0..5 {
        let mut h = FourierCoeffs::zeros(n);
        h.set(0, cplx(rng.random_range(-1.0..1.0) * r0, 0.0));
        for k in 1..=n {
            let scale = r0 / (k * k) as f64;
            h.set_real_mode(
                k,
                cplx(rng.random_range(-0.5..0.5) * scale, rng.random_range(-0.5..0.5) * scale),
            );
        }
        let at = |s: f64| -> Result<[f64; 3]> {
            let shape = make_shape(&reference, &h.scale(s))?;
            Ok([
                solver.solve_component(&shape, RhsTag::Unit)?.volume,
                solver.solve_component(&shape, RhsTag::X1)?.volume,
                solver.lagrange_multiplier(&shape, params)?,
            ])
        };
        let (p, m) = (at(eps)?, at(-eps)?);
        let fd: Vec<f64> = (0..3).map(|i| (p[i] - m[i]) / (2.0 * eps)).collect();
        let exact = [
            variation_volume_unit(&h, r0),
            variation_volume_x1(&h, r0),
            variation_lambda(&h, params),
        ];
        err = err.max(sup_diff(&fd, &exact));
    }
    checks.push(Check::below("domain_variation_error", err, 1e-5));

    let limit = params.positivity_limit();
    let mu_star = critical_incline(&circle, params, (0.0, 2.5 * limit), 1e-10)?;
    checks.push(Check::below("critical_incline_error", (mu_star - limit).abs(), 1e-6));

    let z0 = [0.03 * r0, -0.02 * r0];
    let rb = perturbed(&reference, &[(2, 0.01 * r0, 0.0), (3, 0.0, 0.005 * r0)])?;
    let state = DecomposedState::new(z0, &rb)?;
    let back = recenter(&state.reconstruct()?)?;
    let err = (back.z[0] - z0[0]).abs().max((back.z[1] - z0[1]).abs());
    checks.push(Check::below("recenter_translation_error", err, 1e-9));
    checks.push(Check::below("recenter_kernel_residual", kernel_defect(back.rho_bar.coeffs()), 1e-12));

    checks.push(Check::below(
        "translation_invariance_defect",
        translation_identity_defect(&model, &state)?,
        1e-8,
    ));

    let d = decomposed_velocity(&model, &rb)?;
    let h = reference.synthesize(&reference.analyze(&d.velocity.values));
    checks.push(Check::below(
        "decomposed_velocity_reassembly",
        sup_diff(&reassembled_velocity(&rb, &d), &h),
        1e-8,
    ));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_parameters_pass() {
        let checks = run_checks(&ModelParams::default().with_mu(0.05), 16, 7).unwrap();
        for c in &checks {
            assert!(c.pass, "{c:?}");
        }
        assert_eq!(checks.len(), 13);
    }

    #[test]
    fn other_parameters_pass() {
        let p = ModelParams::new(1.5, 0.8, 0.1, 2.0).unwrap();
        for c in run_checks(&p, 12, 1).unwrap() {
            assert!(c.pass, "{c:?}");
        }
    }
}
