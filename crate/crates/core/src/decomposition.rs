//! Splitting a near-circular shape into a rigid translation `z` and a
//! perturbation `ρ̄` without `e^{±iθ}` content, and the evolution of `(z, ρ̄)`.
//!
//! Points correspond through `(R+ρ(θ))ν0(θ) = z + (R+ρ̄(φ))ν0(φ)`. Writing
//! `g = ∂_φρ̄/(R+ρ̄)`, the co-moving flow becomes
//!
//! ```text
//! ż  = M(ρ̄)⁻¹ Π(H(ρ̄))
//! ρ̄̇ = Π⊥H(ρ̄) + Π⊥(g τ0·ż)
//! ```
//!
//! with `Π(H) = (Ĥ_1, Ĥ_{-1})` and `M(ρ̄)` the 2×2 matrix of [`assemble_m`].

use std::io::{self, Write};

use nalgebra::{Matrix2, Vector2};
use serde_json::json;

use crate::dynamics::{stiffness_warning, EvolutionConfig, Frame, HaltReason, Model, Velocity};
use crate::elliptic::min_contact_slope;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryShape, FourierCoeffs};
use crate::scalar::{cplx, from_usize, lit, modulus, to_f64, Complex, Real};

/// `(Π^{(+1)}h, Π^{(-1)}h)` as the coefficients of `e^{±iθ}`.
pub fn project_pm1<T: Real>(h: &FourierCoeffs<T>) -> (Complex<T>, Complex<T>) {
    (h.get(1), h.get(-1))
}

/// `h` with the `±1` modes removed.
pub fn project_perp<T: Real>(h: &FourierCoeffs<T>) -> FourierCoeffs<T> {
    let mut out = h.clone();
    let zero = cplx(T::zero(), T::zero());
    out.set(1, zero);
    out.set(-1, zero);
    out
}

/// Largest `|ĥ_{±1}|`.
pub fn kernel_defect<T: Real>(h: &FourierCoeffs<T>) -> T {
    modulus(h.get(1)).max(modulus(h.get(-1)))
}

/// A shape written as `z + Γ_ρ̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedState<T: Real> {
    pub z: [T; 2],
    pub rho_bar: BoundaryShape<T>,
}

impl<T: Real> DecomposedState<T> {
    /// Projects `rho_bar` onto the kernel complement.
    pub fn new(z: [T; 2], rho_bar: &BoundaryShape<T>) -> Result<Self> {
        Ok(Self {
            z,
            rho_bar: rho_bar.with_coeffs(&project_perp(rho_bar.coeffs()))?,
        })
    }

    /// `ρ̄ = 0` translated by `z`.
    pub fn translated_circle(z: [T; 2], reference: crate::geometry::ReferenceCircle<T>) -> Self {
        Self {
            z,
            rho_bar: BoundaryShape::circle(reference),
        }
    }

    /// Radial graph of `z + Γ_ρ̄` over the same reference circle.
    pub fn reconstruct(&self) -> Result<BoundaryShape<T>> {
        self.rho_bar.translated(self.z)
    }
}

/// Tolerance on `|ρ̄̂_{±1}|` after recentering.
pub const RECENTER_TOL: f64 = 1e-13;
const RECENTER_ACCEPT: f64 = 1e-12;
const RECENTER_MAX_ITER: usize = 30;

/// Finds `z` such that the radial graph of `Γ_ρ - z` has no `±1` modes.
///
/// Newton's method with Jacobian `-M(ρ̄)`, started from the translation
/// whose first-order graph has the same `±1` modes as `ρ`.
pub fn recenter<T: Real>(shape: &BoundaryShape<T>) -> Result<DecomposedState<T>> {
    let c1 = shape.coeffs().get(1);
    let two: T = lit(2.0);
    let mut z = [two * c1.re, -two * c1.im];
    let tol: T = lit(RECENTER_TOL);
    let mut best = T::max_value().unwrap();
    let mut residual = T::zero();
    for it in 0..RECENTER_MAX_ITER {
        let rho_bar = shape.translated([-z[0], -z[1]]).map_err(|_| Error::RecenterDiverged {
            residual: to_f64(residual),
            iterations: it,
        })?;
        residual = kernel_defect(rho_bar.coeffs());
        let stalled = residual >= best && residual <= lit(RECENTER_ACCEPT);
        if residual <= tol || stalled {
            return DecomposedState::new(z, &rho_bar);
        }
        best = best.min(residual);
        let m = assemble_m(&rho_bar)?;
        let (p, q) = project_pm1(rho_bar.coeffs());
        let dz = solve_real(&m, p, q)?;
        z = [z[0] + dz[0], z[1] + dz[1]];
        if !(z[0].is_finite() && z[1].is_finite()) {
            break;
        }
    }
    Err(Error::RecenterDiverged {
        residual: to_f64(residual),
        iterations: RECENTER_MAX_ITER,
    })
}

/// `g = ∂_φρ̄/(R+ρ̄)` on the grid.
fn slope_ratio<T: Real>(rho_bar: &BoundaryShape<T>) -> Vec<T> {
    let r = rho_bar.reference().radius();
    rho_bar
        .grid()
        .iter()
        .zip(rho_bar.grid_derivative())
        .map(|(v, d)| *d / (r + *v))
        .collect()
}

/// `M(ρ̄)`: the matrix mapping a translation velocity to the `±1` modes it
/// induces on the graph of `ρ̄`.
pub fn assemble_m<T: Real>(rho_bar: &BoundaryShape<T>) -> Result<Matrix2<Complex<T>>> {
    let reference = rho_bar.reference();
    let g = slope_ratio(rho_bar);
    let m_grid = reference.n_grid();
    let mut s = [cplx(T::zero(), T::zero()); 4];
    for (j, gj) in g.iter().enumerate() {
        let (c2, s2) = (reference.cos_n(2, j), reference.sin_n(2, j));
        let e_minus = cplx(c2, -s2);
        let e_plus = cplx(c2, s2);
        let one = cplx(T::one(), T::zero());
        s[0] += (one - e_minus) * *gj;
        s[1] += (e_minus + one) * *gj;
        s[2] += (e_plus - one) * *gj;
        s[3] += (e_plus + one) * *gj;
    }
    // trapezoid: ∫ ≈ (2π/M) Σ, and the prefactors carry 1/(4π)
    let w = T::one() / (lit::<T>(2.0) * from_usize::<T>(m_grid));
    let inv_i = cplx(T::zero(), -T::one());
    let half = lit::<T>(0.5);
    let m = Matrix2::new(
        cplx(half, T::zero()) + inv_i * s[0] * w,
        cplx(T::zero(), -half) - s[1] * w,
        cplx(half, T::zero()) + inv_i * s[2] * w,
        cplx(T::zero(), half) - s[3] * w,
    );
    let sv = m.singular_values();
    let condition = sv.max() / sv.min();
    if !(condition <= lit(1e8)) {
        return Err(Error::SingularM {
            condition: to_f64(condition),
        });
    }
    Ok(m)
}

/// Solves `M x = (p, q)` and returns the real solution, failing if the
/// imaginary residue is not round-off.
fn solve_real<T: Real>(m: &Matrix2<Complex<T>>, p: Complex<T>, q: Complex<T>) -> Result<[T; 2]> {
    let x = m
        .lu()
        .solve(&Vector2::new(p, q))
        .ok_or(Error::SingularM {
            condition: f64::INFINITY,
        })?;
    let scale = T::one().max(modulus(x[0])).max(modulus(x[1]));
    let imag = x[0].im.abs().max(x[1].im.abs());
    if imag > lit::<T>(1e-10) * scale {
        return Err(Error::NonRealVelocity(to_f64(imag)));
    }
    Ok([x[0].re, x[1].re])
}

/// Right-hand side of the decomposed system at `ρ̄`.
#[derive(Debug, Clone)]
pub struct DecomposedVelocity<T: Real> {
    pub z_dot: [T; 2],
    /// `Π⊥H(ρ̄) + f(ρ̄)`.
    pub rho_bar_dot: FourierCoeffs<T>,
    /// `f(ρ̄) = Π⊥(g τ0·ż)`.
    pub correction: FourierCoeffs<T>,
    /// `H(ρ̄)` on the grid, with its field.
    pub velocity: Velocity<T>,
}

pub fn decomposed_velocity<T: Real>(model: &Model<T>, rho_bar: &BoundaryShape<T>) -> Result<DecomposedVelocity<T>> {
    let velocity = model.velocity(rho_bar, Frame::Comoving)?;
    let reference = rho_bar.reference();
    let h = reference.analyze(&velocity.values);
    let m = assemble_m(rho_bar)?;
    let (p, q) = project_pm1(&h);
    let z_dot = solve_real(&m, p, q)?;
    let g = slope_ratio(rho_bar);
    let tangential: Vec<T> = g
        .iter()
        .enumerate()
        .map(|(j, gj)| *gj * (-reference.sin_n(1, j) * z_dot[0] + reference.cos_n(1, j) * z_dot[1]))
        .collect();
    let correction = project_perp(&reference.analyze(&tangential));
    let rho_bar_dot = project_perp(&h).axpy(T::one(), &correction);
    Ok(DecomposedVelocity {
        z_dot,
        rho_bar_dot,
        correction,
        velocity,
    })
}

/// `ż = M(ρ̄)⁻¹Π(H(ρ̄))`.
pub fn z_velocity<T: Real>(model: &Model<T>, rho_bar: &BoundaryShape<T>) -> Result<[T; 2]> {
    Ok(decomposed_velocity(model, rho_bar)?.z_dot)
}

/// `ρ̄̇ = Π⊥H(ρ̄) + f(ρ̄)` on the grid.
pub fn rhobar_velocity<T: Real>(model: &Model<T>, rho_bar: &BoundaryShape<T>) -> Result<Vec<T>> {
    let d = decomposed_velocity(model, rho_bar)?;
    Ok(rho_bar.reference().synthesize(&d.rho_bar_dot))
}

/// The nonlinear remainder `f(ρ̄)`.
pub fn correction<T: Real>(model: &Model<T>, rho_bar: &BoundaryShape<T>) -> Result<FourierCoeffs<T>> {
    Ok(decomposed_velocity(model, rho_bar)?.correction)
}

/// Full normal-velocity factor rebuilt from `(ż, ρ̄̇)`:
/// `(g sinφ + cosφ)ż1 + (-g cosφ + sinφ)ż2 + ρ̄̇`, which must equal `H(ρ̄)`.
pub fn reassembled_velocity<T: Real>(rho_bar: &BoundaryShape<T>, d: &DecomposedVelocity<T>) -> Vec<T> {
    let reference = rho_bar.reference();
    let g = slope_ratio(rho_bar);
    let rb = reference.synthesize(&d.rho_bar_dot);
    (0..reference.n_grid())
        .map(|j| {
            let (c, s) = (reference.cos_n(1, j), reference.sin_n(1, j));
            (g[j] * s + c) * d.z_dot[0] + (-g[j] * c + s) * d.z_dot[1] + rb[j]
        })
        .collect()
}

/// Largest difference of the contact slope `-∂_ν u` between `Γ_ρ̄` (on its
/// grid) and `Γ_ρ = z + Γ_ρ̄` at the corresponding points. Zero up to
/// discretization error by translation invariance.
pub fn translation_identity_defect<T: Real>(model: &Model<T>, state: &DecomposedState<T>) -> Result<T> {
    let shape = state.reconstruct()?;
    let bar = model.solver.solve_full(&state.rho_bar, &model.params)?;
    let full = model.solver.solve_full(&shape, &model.params)?;
    let geo = crate::geometry::frame(&state.rho_bar);
    let reference = state.rho_bar.reference();
    let mut worst = T::zero();
    for j in 0..reference.n_grid() {
        let r = reference.radius() + state.rho_bar.grid()[j];
        let (c, s) = (reference.cos_n(1, j), reference.sin_n(1, j));
        let p = [state.z[0] + r * c, state.z[1] + r * s];
        let rp = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let th = p[1].atan2(p[0]);
        let (ur, ut) = full.polar_gradient(rp, th);
        let (ct, st) = (th.cos(), th.sin());
        let grad = [ur * ct - ut * st / rp, ur * st + ut * ct / rp];
        let nu = geo.normal[j];
        let dnu_full = grad[0] * nu[0] + grad[1] * nu[1];
        worst = worst.max((dnu_full - bar.boundary_normal_derivative[j]).abs());
    }
    Ok(worst)
}

/// Settings of [`evolve_decomposed`].
#[derive(Debug, Clone, Copy)]
pub struct DecompositionConfig<T: Real> {
    /// `frame` is ignored; the decomposed flow is always co-moving.
    pub evolution: EvolutionConfig<T>,
    /// Fraction of the run, counted from the end, used by the decay fit.
    pub tail_fraction: T,
}

impl<T: Real> DecompositionConfig<T> {
    pub fn new(dt: T, t_end: T) -> Self {
        Self {
            evolution: EvolutionConfig::new(dt, t_end, Frame::Comoving),
            tail_fraction: lit(0.5),
        }
    }

    pub fn record_every(mut self, every: usize) -> Self {
        self.evolution.record_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.evolution.validate()?;
        if !(self.tail_fraction > T::zero() && self.tail_fraction <= T::one()) {
            return Err(Error::InvalidConfig(format!(
                "tail_fraction must lie in (0, 1], got {}",
                to_f64(self.tail_fraction)
            )));
        }
        Ok(())
    }
}

/// Snapshot of the decomposed state.
#[derive(Debug, Clone)]
pub struct DecomposedRecord<T: Real> {
    pub t: T,
    pub z: [T; 2],
    pub z_dot: [T; 2],
    pub rho_bar_hat: FourierCoeffs<T>,
    /// `max_θ |ρ̄|` on the grid.
    pub norm_rho_bar: T,
    /// `|ρ̄̂_{±1}|` accumulated by the last step before re-projection.
    pub kernel_drift: T,
    pub lambda: T,
    pub min_contact_slope: T,
}

/// Least-squares fit `‖ρ̄(t)‖∞ ≈ C e^{-ω0 t}` over the tail of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit<T: Real> {
    pub omega0: T,
    pub c: T,
    /// Extrapolated limit `z(T) + ż(T)/ω0`.
    pub z_inf: [T; 2],
    pub t_start: T,
    pub samples: usize,
}

/// Fits the decay of `norm_rho_bar` over the last `tail_fraction` of the
/// records. Needs at least three positive samples.
pub fn fit_decay<T: Real>(records: &[DecomposedRecord<T>], tail_fraction: T) -> Option<DecayFit<T>> {
    let last = records.last()?;
    let t_start = last.t - (last.t - records[0].t) * tail_fraction;
    let pts: Vec<(T, T)> = records
        .iter()
        .filter(|r| r.t >= t_start && r.norm_rho_bar > T::zero())
        .map(|r| (r.t, r.norm_rho_bar.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = from_usize::<T>(pts.len());
    let mt = pts.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let my = pts.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let sxx = pts.iter().fold(T::zero(), |a, p| a + (p.0 - mt) * (p.0 - mt));
    let sxy = pts.iter().fold(T::zero(), |a, p| a + (p.0 - mt) * (p.1 - my));
    if !(sxx > T::zero()) {
        return None;
    }
    let slope = sxy / sxx;
    let omega0 = -slope;
    let c = (my - slope * mt).exp();
    let z_inf = if omega0 > T::zero() {
        [last.z[0] + last.z_dot[0] / omega0, last.z[1] + last.z_dot[1] / omega0]
    } else {
        last.z
    };
    Some(DecayFit {
        omega0,
        c,
        z_inf,
        t_start,
        samples: pts.len(),
    })
}

/// Time series of [`evolve_decomposed`].
#[derive(Debug, Clone)]
pub struct DecomposedTrajectory<T: Real> {
    pub records: Vec<DecomposedRecord<T>>,
    pub halt: HaltReason,
    pub warnings: Vec<String>,
    pub fit: Option<DecayFit<T>>,
}

impl<T: Real> DecomposedTrajectory<T> {
    pub fn last(&self) -> Option<&DecomposedRecord<T>> {
        self.records.last()
    }

    pub fn max_kernel_drift(&self) -> T {
        self.records.iter().fold(T::zero(), |a, r| a.max(r.kernel_drift))
    }

    /// Worst ratio of `|z(t) - z(T)|` to the bound `(K C/ω0) e^{-ω0 t}` over the
    /// fit window, where `K = max |ż|/‖ρ̄‖∞` along the run. Values `<= 1` mean
    /// `z` converges as fast as `ρ̄` decays.
    pub fn z_tail_ratio(&self) -> Option<T> {
        let fit = self.fit?;
        let last = self.last()?;
        let k = self
            .records
            .iter()
            .filter(|r| r.norm_rho_bar > T::zero())
            .map(|r| norm2(r.z_dot) / r.norm_rho_bar)
            .fold(T::zero(), |a, b| a.max(b));
        let scale = k * fit.c / fit.omega0;
        if !(scale > T::zero()) {
            return Some(T::zero());
        }
        Some(
            self.records
                .iter()
                .filter(|r| r.t >= fit.t_start)
                .map(|r| {
                    let d = norm2([r.z[0] - last.z[0], r.z[1] - last.z[1]]);
                    d / (scale * (-fit.omega0 * r.t).exp())
                })
                .fold(T::zero(), |a, b| a.max(b)),
        )
    }

    pub fn summary_json(&self) -> serde_json::Value {
        let mut summary = self.halt.to_json();
        summary["records"] = json!(self.records.len());
        summary["warnings"] = json!(self.warnings);
        summary["max_kernel_drift"] = json!(to_f64(self.max_kernel_drift()));
        match &self.fit {
            Some(f) => {
                summary["omega0_fit"] = json!(to_f64(f.omega0));
                summary["C_fit"] = json!(to_f64(f.c));
                summary["z_inf"] = json!([to_f64(f.z_inf[0]), to_f64(f.z_inf[1])]);
                summary["fit_t_start"] = json!(to_f64(f.t_start));
            }
            None => {
                summary["omega0_fit"] = serde_json::Value::Null;
                summary["C_fit"] = serde_json::Value::Null;
                summary["z_inf"] = serde_json::Value::Null;
            }
        }
        summary
    }

    /// CSV with `z1, z2, norm_rho_bar` channels and a trailing `#summary` line.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &str) -> io::Result<()> {
        for line in header.lines() {
            writeln!(w, "# {line}")?;
        }
        let n = self.records.first().map_or(0, |r| r.rho_bar_hat.n_max());
        write!(w, "t,z1,z2,norm_rho_bar,kernel_drift,lambda,min_contact_slope")?;
        for k in 0..=n {
            write!(w, ",re_rho_bar_{k},im_rho_bar_{k}")?;
        }
        writeln!(w)?;
        for r in &self.records {
            write!(
                w,
                "{:.10e},{:.16e},{:.16e},{:.16e},{:.3e},{:.16e},{:.16e}",
                to_f64(r.t),
                to_f64(r.z[0]),
                to_f64(r.z[1]),
                to_f64(r.norm_rho_bar),
                to_f64(r.kernel_drift),
                to_f64(r.lambda),
                to_f64(r.min_contact_slope)
            )?;
            for k in 0..=n as i64 {
                let c = r.rho_bar_hat.get(k);
                write!(w, ",{:.16e},{:.16e}", to_f64(c.re), to_f64(c.im))?;
            }
            writeln!(w)?;
        }
        writeln!(w, "#summary {}", self.summary_json())
    }
}

fn norm2<T: Real>(v: [T; 2]) -> T {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

struct Stage<T: Real> {
    z_dot: [T; 2],
    rho_bar_dot: FourierCoeffs<T>,
}

fn stage<T: Real>(model: &Model<T>, rho_bar: &BoundaryShape<T>) -> Result<Stage<T>> {
    let d = decomposed_velocity(model, rho_bar)?;
    Ok(Stage {
        z_dot: d.z_dot,
        rho_bar_dot: d.rho_bar_dot,
    })
}

/// One RK4 step of the decomposed system given the first stage. Returns the
/// new state and the kernel drift removed by re-projection.
fn rk4_step<T: Real>(
    model: &Model<T>,
    state: &DecomposedState<T>,
    k1: &Stage<T>,
    dt: T,
) -> Result<(DecomposedState<T>, T)> {
    let half = dt * lit(0.5);
    let c0 = state.rho_bar.coeffs();
    let k2 = stage(model, &state.rho_bar.with_coeffs(&c0.axpy(half, &k1.rho_bar_dot))?)?;
    let k3 = stage(model, &state.rho_bar.with_coeffs(&c0.axpy(half, &k2.rho_bar_dot))?)?;
    let k4 = stage(model, &state.rho_bar.with_coeffs(&c0.axpy(dt, &k3.rho_bar_dot))?)?;
    let sixth = dt / lit(6.0);
    let third = dt / lit(3.0);
    let next = c0
        .axpy(sixth, &k1.rho_bar_dot)
        .axpy(third, &k2.rho_bar_dot)
        .axpy(third, &k3.rho_bar_dot)
        .axpy(sixth, &k4.rho_bar_dot);
    let drift = kernel_defect(&next);
    let z = [0, 1].map(|i| {
        state.z[i]
            + sixth * (k1.z_dot[i] + k4.z_dot[i])
            + third * (k2.z_dot[i] + k3.z_dot[i])
    });
    let rho_bar = state.rho_bar.with_coeffs(&project_perp(&next))?;
    Ok((DecomposedState { z, rho_bar }, drift))
}

/// Integrates `(z, ρ̄)` with RK4, re-projecting `ρ̄` after every step, and
/// fits the decay of `‖ρ̄‖∞` at the end.
pub fn evolve_decomposed<T: Real>(
    model: &Model<T>,
    initial: &DecomposedState<T>,
    config: &DecompositionConfig<T>,
) -> DecomposedTrajectory<T> {
    let mut traj = DecomposedTrajectory {
        records: Vec::new(),
        halt: HaltReason::Completed,
        warnings: Vec::new(),
        fit: None,
    };
    let fail = |traj: &mut DecomposedTrajectory<T>, t: T, error: Error| {
        traj.halt = HaltReason::Failed {
            t: to_f64(t),
            error,
        };
    };
    if let Err(e) = config.validate() {
        fail(&mut traj, T::zero(), e);
        return traj;
    }
    if !model.law.is_affine() {
        fail(&mut traj, T::zero(), Error::NonAffineLaw);
        return traj;
    }
    let ev = &config.evolution;
    if let Some(w) = stiffness_warning(&model.params, initial.rho_bar.reference().n_modes(), ev.dt) {
        traj.warnings.push(w.to_string());
    }
    let mut state = match DecomposedState::new(initial.z, &initial.rho_bar) {
        Ok(s) => s,
        Err(e) => {
            fail(&mut traj, T::zero(), e);
            return traj;
        }
    };
    let mut drift = kernel_defect(initial.rho_bar.coeffs());
    let steps = ev.n_steps();
    for k in 0..=steps {
        let t = ev.dt * from_usize::<T>(k);
        let d = match decomposed_velocity(model, &state.rho_bar) {
            Ok(d) => d,
            Err(e) => {
                fail(&mut traj, t, e);
                break;
            }
        };
        let halt_now = d.velocity.parabolicity_lost && ev.halt_on_parabolicity_loss;
        if k % ev.record_every.max(1) == 0 || k == steps || halt_now {
            traj.records.push(DecomposedRecord {
                t,
                z: state.z,
                z_dot: d.z_dot,
                rho_bar_hat: state.rho_bar.coeffs().clone(),
                norm_rho_bar: state.rho_bar.sup_norm(),
                kernel_drift: drift,
                lambda: d.velocity.field.lambda.unwrap_or_else(T::zero),
                min_contact_slope: min_contact_slope(&d.velocity.field),
            });
        }
        if halt_now {
            traj.halt = HaltReason::ParabolicityLost {
                t: to_f64(t),
                min_contact_slope: to_f64(d.velocity.min_contact_slope),
            };
            break;
        }
        if k == steps {
            break;
        }
        let k1 = Stage {
            z_dot: d.z_dot,
            rho_bar_dot: d.rho_bar_dot,
        };
        match rk4_step(model, &state, &k1, ev.dt) {
            Ok((next, dr)) => {
                state = next;
                drift = dr;
            }
            Err(e) => {
                fail(&mut traj, t + ev.dt, e);
                break;
            }
        }
    }
    traj.fit = fit_decay(&traj.records, config.tail_fraction);
    traj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elliptic::ModelParams;
    use crate::geometry::{make_shape, ReferenceCircle};
    use crate::linearization::assemble_dh0_perp;
    use approx::assert_abs_diff_eq;

    fn reference(n: usize) -> ReferenceCircle<f64> {
        ReferenceCircle::new(1.0, n).unwrap()
    }

    fn shape(n: usize, modes: &[(usize, f64, f64)]) -> BoundaryShape<f64> {
        let mut c = FourierCoeffs::zeros(n);
        for (k, a, b) in modes {
            c.set_real_mode(*k, cplx(*a / 2.0, -*b / 2.0));
        }
        make_shape(&reference(n), &c).unwrap()
    }

    fn model(mu: f64) -> Model<f64> {
        Model::new(ModelParams::default().with_mu(mu))
    }

    #[test]
    fn projections_partition_modes() {
        let h = FourierCoeffs::from_cos_sin(0.0, &[1.0], &[]);
        let (p, q) = project_pm1(&h);
        assert_eq!((p, q), (cplx(0.5, 0.0), cplx(0.5, 0.0)));
        assert_eq!(project_perp(&h).max_abs(), 0.0);
        let h2 = FourierCoeffs::from_cos_sin(0.0, &[0.0, 1.0], &[]);
        assert_eq!(project_pm1(&h2), (cplx(0.0, 0.0), cplx(0.0, 0.0)));
        assert_eq!(project_perp(&h2), h2);
        let h3 = FourierCoeffs::from_cos_sin(0.3, &[0.2, -0.1, 0.05], &[0.7, 0.0, 0.4]);
        let mut sum = project_perp(&h3);
        let (p, q) = project_pm1(&h3);
        sum.set(1, p);
        sum.set(-1, q);
        assert_eq!(sum, h3);
    }

    #[test]
    fn m_at_zero() {
        let m = assemble_m(&BoundaryShape::circle(reference(16))).unwrap();
        assert_eq!(m[(0, 0)], cplx(0.5, 0.0));
        assert_eq!(m[(0, 1)], cplx(0.0, -0.5));
        assert_eq!(m[(1, 0)], cplx(0.5, 0.0));
        assert_eq!(m[(1, 1)], cplx(0.0, 0.5));
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        // -1/(2i) = i/2
        assert_abs_diff_eq!(det.re, 0.0, epsilon = 1e-16);
        assert_abs_diff_eq!(det.im, 0.5, epsilon = 1e-16);
    }

    #[test]
    fn m_first_order_correction() {
        // ρ̄ = ε cos2φ gives g = -2ε sin2φ + O(ε²), so ∫g = 0 and
        // ∫g e^{∓2iφ} = ±2πiε to first order.
        let eps = 0.05;
        let s = shape(16, &[(2, eps, 0.0)]);
        let m = assemble_m(&s).unwrap();
        let i_minus = cplx(0.0, 2.0 * std::f64::consts::PI * eps); // ∫g e^{-2iφ}
        let i_plus = cplx(0.0, -2.0 * std::f64::consts::PI * eps); // ∫g e^{2iφ}
        let inv4pii = cplx(0.0, -1.0 / (4.0 * std::f64::consts::PI));
        let q = 1.0 / (4.0 * std::f64::consts::PI);
        let expect = [
            cplx(0.5, 0.0) + inv4pii * (-i_minus),
            cplx(0.0, -0.5) - i_minus * q,
            cplx(0.5, 0.0) + inv4pii * i_plus,
            cplx(0.0, 0.5) - i_plus * q,
        ];
        let got = [m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]];
        for (g, e) in got.iter().zip(&expect) {
            assert!(modulus(g - e) < 5.0 * eps * eps, "{g} vs {e}");
            assert!(modulus(g - e) > 0.0);
        }
        let sv = m.singular_values();
        assert!(sv.min() > 0.1);
    }

    #[test]
    fn recenter_orthogonal_shape_is_identity() {
        let s = shape(16, &[(2, 0.02, 0.0), (3, 0.0, 0.01)]);
        let d = recenter(&s).unwrap();
        assert!(norm2(d.z) < 1e-15);
        assert!(d.rho_bar.coeffs().axpy(-1.0, s.coeffs()).max_abs() < 1e-14);
    }

    #[test]
    fn recenter_translated_circle() {
        let z0 = [0.03, -0.04];
        let s = BoundaryShape::circle(reference(16)).translated(z0).unwrap();
        let d = recenter(&s).unwrap();
        assert_abs_diff_eq!(d.z[0], z0[0], epsilon = 1e-10);
        assert_abs_diff_eq!(d.z[1], z0[1], epsilon = 1e-10);
        assert!(d.rho_bar.sup_norm() < 1e-10);
        assert!(kernel_defect(d.rho_bar.coeffs()) <= 1e-12);
    }

    #[test]
    fn recenter_mixed_shape_reconstructs() {
        let s = shape(16, &[(1, 0.01, 0.0), (2, 0.02, 0.0)]);
        let d = recenter(&s).unwrap();
        assert!((d.z[0] - 0.01).abs() < 0.01 * 0.05);
        assert!(d.z[1].abs() < 1e-14);
        assert!(kernel_defect(d.rho_bar.coeffs()) <= 1e-12);
        assert!((d.rho_bar.coeffs().get(2).re - 0.01).abs() < 1e-3);
        let back = d.reconstruct().unwrap();
        let err = back
            .grid()
            .iter()
            .zip(s.grid())
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn velocities_vanish_at_circle() {
        let d = decomposed_velocity(&model(0.05), &BoundaryShape::circle(reference(16))).unwrap();
        assert!(norm2(d.z_dot) < 1e-10);
        assert!(d.rho_bar_dot.max_abs() < 1e-10);
    }

    #[test]
    fn z_velocity_is_along_incline() {
        let s = shape(16, &[(2, 0.01, 0.0)]);
        let zd = z_velocity(&model(0.05), &s).unwrap();
        assert!(zd[1].abs() <= 1e-10);
        assert!(zd[0].abs() > 1e-5 && zd[0].abs() < 0.1);
    }

    #[test]
    fn reassembled_velocity_matches_h() {
        let m = model(0.05);
        let s = shape(16, &[(2, 0.01, 0.0), (3, 0.0, 0.005)]);
        let d = decomposed_velocity(&m, &s).unwrap();
        let rebuilt = reassembled_velocity(&s, &d);
        let h = &d.velocity.values;
        // Identity on the resolved modes; compare after truncation to N.
        let reference = s.reference();
        let hr = reference.synthesize(&reference.analyze(h));
        let err = rebuilt.iter().zip(&hr).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn correction_is_quadratic() {
        let m = model(0.05);
        let f1 = correction(&m, &shape(16, &[(2, 0.01, 0.0), (3, 0.0, 0.005)])).unwrap().max_abs();
        let f2 = correction(&m, &shape(16, &[(2, 0.005, 0.0), (3, 0.0, 0.0025)])).unwrap().max_abs();
        assert!(f1 > 0.0);
        assert!((f1 / f2 - 4.0).abs() < 0.2, "{}", f1 / f2);
        let zero = correction(&m, &BoundaryShape::circle(reference(16))).unwrap();
        assert!(zero.max_abs() < 1e-12);
    }

    #[test]
    fn rhobar_velocity_linearizes_to_dh0_perp() {
        let m = model(0.05);
        let eps = 1e-4;
        let s = shape(16, &[(2, eps, 0.0), (3, 0.0, eps / 2.0)]);
        let d = decomposed_velocity(&m, &s).unwrap();
        let lin = assemble_dh0_perp(16, &m.params).unwrap().apply(s.coeffs());
        let err = d.rho_bar_dot.axpy(-1.0, &lin).max_abs();
        assert!(err < 10.0 * eps * eps, "{err}");
    }

    #[test]
    fn translation_identity_holds() {
        let m = model(0.05);
        let rb = shape(16, &[(2, 0.01, 0.0), (3, 0.0, 0.005)]);
        let state = DecomposedState::new([0.02, -0.01], &rb).unwrap();
        let defect = translation_identity_defect(&m, &state).unwrap();
        assert!(defect < 1e-8, "{defect}");
    }

    #[test]
    fn zero_perturbation_stays_put() {
        let state = DecomposedState::translated_circle([0.1, 0.0], reference(8));
        let traj = evolve_decomposed(&model(0.05), &state, &DecompositionConfig::new(0.01, 0.1));
        assert!(traj.halt.is_completed());
        for r in &traj.records {
            assert!((r.z[0] - 0.1).abs() < 1e-10 && r.z[1].abs() < 1e-10);
            assert!(r.norm_rho_bar < 1e-10);
        }
    }

    #[test]
    fn short_decay_run() {
        let rb = shape(8, &[(2, 0.01, 0.0)]);
        let state = DecomposedState::new([0.0, 0.0], &rb).unwrap();
        let traj = evolve_decomposed(&model(0.0), &state, &DecompositionConfig::new(0.01, 2.0));
        assert!(traj.halt.is_completed());
        let fit = traj.fit.unwrap();
        assert!((fit.omega0 - 1.0).abs() < 0.05, "{}", fit.omega0);
        assert!(traj.max_kernel_drift() < 1e-10);
        // without incline the translation stays second order in ‖ρ̄0‖
        assert!(norm2(fit.z_inf) < 1e-3);
    }

    #[test]
    fn agrees_with_undecomposed_comoving_run() {
        use crate::dynamics::{EvolutionConfig, Frame};
        let rho0 = shape(8, &[(1, 0.01, 0.0), (2, 0.01, 0.0), (3, 0.0, 0.005)]);
        let m = model(0.05);
        let plain = m.evolve(&rho0, &EvolutionConfig::new(0.005, 0.5, Frame::Comoving));
        assert!(plain.halt.is_completed());
        let end = make_shape(&reference(8), &plain.last().unwrap().rho_hat).unwrap();
        let direct = recenter(&end).unwrap();

        let start = recenter(&rho0).unwrap();
        let split = evolve_decomposed(&m, &start, &DecompositionConfig::new(0.005, 0.5));
        let last = split.last().unwrap();
        assert!((last.t - 0.5).abs() < 1e-12);
        for i in 0..2 {
            assert_abs_diff_eq!(last.z[i], direct.z[i], epsilon = 1e-8);
        }
        for k in 0..=8i64 {
            let d = last.rho_bar_hat.get(k) - direct.rho_bar.coeffs().get(k);
            assert!(d.norm() < 1e-8, "mode {k}: {d}");
        }
    }

    #[test]
    fn fit_recovers_exponential() {
        let recs: Vec<DecomposedRecord<f64>> = (0..=20)
            .map(|k| {
                let t = k as f64 * 0.5;
                DecomposedRecord {
                    t,
                    z: [1.0 - (-2.0 * t).exp(), 0.0],
                    z_dot: [2.0 * (-2.0 * t).exp(), 0.0],
                    rho_bar_hat: FourierCoeffs::zeros(2),
                    norm_rho_bar: 3.0 * (-2.0 * t).exp(),
                    kernel_drift: 0.0,
                    lambda: 0.0,
                    min_contact_slope: 1.0,
                }
            })
            .collect();
        let fit = fit_decay(&recs, 0.5).unwrap();
        assert_abs_diff_eq!(fit.omega0, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.c, 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.z_inf[0], 1.0, epsilon = 1e-12);
        assert_eq!(fit.samples, 11);
    }

    #[test]
    fn non_affine_law_rejected() {
        let m = model(0.05).with_law(crate::dynamics::ContactLineLaw::custom(|q| q, |_| 1.0));
        let state = DecomposedState::translated_circle([0.0, 0.0], reference(8));
        let traj = evolve_decomposed(&m, &state, &DecompositionConfig::new(0.01, 0.1));
        assert!(matches!(traj.halt, HaltReason::Failed { error: Error::NonAffineLaw, .. }));
    }
}
