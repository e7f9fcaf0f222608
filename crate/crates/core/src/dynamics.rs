//! Boundary velocities and time integration of the contact line.
//!
//! In the lab frame the radial perturbation obeys
//! `ρ̇ = F(-∂_ν u) / (ν_0·ν_ρ)`; in the frame moving with the translating
//! circle the term `-v0 e_1·ν_ρ` is added inside the bracket. Both are
//! integrated by classical RK4 on the Fourier coefficients of `ρ`.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use crate::elliptic::{min_contact_slope, EllipticSolver, FieldSolution, ModelParams};
use crate::error::{Error, Result};
use crate::geometry::{frame, BoundaryShape, FourierCoeffs};
use crate::scalar::{from_usize, lit, modulus, to_f64, Real};

type ScalarMap<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Kinematic law `V = F(-∂_ν u)` relating normal speed and contact slope.
#[derive(Clone)]
pub enum ContactLineLaw<T: Real> {
    /// `F(q) = a q - b`.
    Affine { a: T, b: T },
    /// Arbitrary smooth increasing law.
    Custom { f: ScalarMap<T>, f_prime: ScalarMap<T> },
}

impl<T: Real> fmt::Debug for ContactLineLaw<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Affine { a, b } => f
                .debug_struct("Affine")
                .field("a", &to_f64(*a))
                .field("b", &to_f64(*b))
                .finish(),
            Self::Custom { .. } => f.write_str("Custom"),
        }
    }
}

impl<T: Real> ContactLineLaw<T> {
    /// Affine law with the model's `a`, `b`.
    pub fn from_params(params: &ModelParams<T>) -> Self {
        Self::Affine {
            a: params.a,
            b: params.b,
        }
    }

    pub fn custom(
        f: impl Fn(T) -> T + Send + Sync + 'static,
        f_prime: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self::Custom {
            f: Arc::new(f),
            f_prime: Arc::new(f_prime),
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, Self::Affine { .. })
    }

    pub fn value(&self, q: T) -> T {
        match self {
            Self::Affine { a, b } => *a * q - *b,
            Self::Custom { f, .. } => f(q),
        }
    }

    pub fn derivative(&self, q: T) -> T {
        match self {
            Self::Affine { a, .. } => *a,
            Self::Custom { f_prime, .. } => f_prime(q),
        }
    }

    fn check_monotone(&self, slopes: &[T]) -> Result<()> {
        if let Self::Custom { f_prime, .. } = self {
            for q in slopes {
                let d = f_prime(*q);
                if !(d > T::zero()) {
                    return Err(Error::NonMonotoneLaw {
                        slope: to_f64(*q),
                        derivative: to_f64(d),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Reference frame of the evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Lab,
    Comoving,
}

impl std::str::FromStr for Frame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lab" => Ok(Self::Lab),
            "comoving" | "co-moving" => Ok(Self::Comoving),
            other => Err(Error::InvalidConfig(format!(
                "unknown frame `{other}` (expected lab or comoving)"
            ))),
        }
    }
}

/// Grid values of a boundary velocity together with the field that produced it.
#[derive(Debug, Clone)]
pub struct Velocity<T: Real> {
    pub values: Vec<T>,
    pub field: FieldSolution<T>,
    pub min_contact_slope: T,
    /// Set when `min(-∂_ν u) <= 0`: the evolution is no longer parabolic.
    pub parabolicity_lost: bool,
}

/// Parameters, contact-line law and elliptic solver bundled together.
#[derive(Debug, Clone)]
pub struct Model<T: Real> {
    pub params: ModelParams<T>,
    pub law: ContactLineLaw<T>,
    pub solver: EllipticSolver<T>,
}

impl<T: Real> Model<T> {
    /// Affine law taken from `params`.
    pub fn new(params: ModelParams<T>) -> Self {
        Self {
            law: ContactLineLaw::from_params(&params),
            params,
            solver: EllipticSolver::default(),
        }
    }

    pub fn with_law(mut self, law: ContactLineLaw<T>) -> Self {
        self.law = law;
        self
    }

    pub fn with_solver(mut self, solver: EllipticSolver<T>) -> Self {
        self.solver = solver;
        self
    }

    /// Lab-frame velocity `G(ρ)`.
    pub fn velocity_g(&self, shape: &BoundaryShape<T>) -> Result<Velocity<T>> {
        self.velocity(shape, Frame::Lab)
    }

    /// Co-moving velocity `H(ρ)`; requires the affine law.
    pub fn velocity_h(&self, shape: &BoundaryShape<T>) -> Result<Velocity<T>> {
        self.velocity(shape, Frame::Comoving)
    }

    pub fn velocity(&self, shape: &BoundaryShape<T>, frame_kind: Frame) -> Result<Velocity<T>> {
        if frame_kind == Frame::Comoving && !self.law.is_affine() {
            return Err(Error::NonAffineLaw);
        }
        let field = self.solver.solve_full(shape, &self.params)?;
        let slopes = field.contact_slope();
        self.law.check_monotone(&slopes)?;
        let geo = frame(shape);
        let v0 = match frame_kind {
            Frame::Lab => T::zero(),
            Frame::Comoving => self.params.v0(),
        };
        let values = slopes
            .iter()
            .zip(geo.normal.iter().zip(&geo.normal_factor))
            .map(|(q, (nu, factor))| (self.law.value(*q) - v0 * nu[0]) / *factor)
            .collect();
        let min_slope = min_contact_slope(&field);
        Ok(Velocity {
            values,
            field,
            min_contact_slope: min_slope,
            parabolicity_lost: !(min_slope > T::zero()),
        })
    }

    /// Fourier coefficients of the velocity, truncated to the shape's `N`.
    fn rate(
        &self,
        shape: &BoundaryShape<T>,
        frame_kind: Frame,
        dealias: bool,
    ) -> Result<(FourierCoeffs<T>, Velocity<T>)> {
        let v = self.velocity(shape, frame_kind)?;
        let reference = shape.reference();
        let mut coeffs = reference.analyze(&v.values);
        if dealias {
            let keep = 2 * reference.n_modes() / 3;
            for n in keep + 1..=reference.n_modes() {
                coeffs.set(n as i64, num_zero());
                coeffs.set(-(n as i64), num_zero());
            }
        }
        Ok((coeffs, v))
    }

    fn finish_rk4(
        &self,
        shape: &BoundaryShape<T>,
        k1: &FourierCoeffs<T>,
        dt: T,
        frame_kind: Frame,
        dealias: bool,
    ) -> Result<BoundaryShape<T>> {
        let half = dt * lit(0.5);
        let c0 = shape.coeffs();
        let s2 = shape.with_coeffs(&c0.axpy(half, k1))?;
        let (k2, _) = self.rate(&s2, frame_kind, dealias)?;
        let s3 = shape.with_coeffs(&c0.axpy(half, &k2))?;
        let (k3, _) = self.rate(&s3, frame_kind, dealias)?;
        let s4 = shape.with_coeffs(&c0.axpy(dt, &k3))?;
        let (k4, _) = self.rate(&s4, frame_kind, dealias)?;
        let sixth = dt / lit(6.0);
        let third = dt / lit(3.0);
        let next = c0
            .axpy(sixth, k1)
            .axpy(third, &k2)
            .axpy(third, &k3)
            .axpy(sixth, &k4);
        shape.with_coeffs(&next)
    }

    /// One RK4 step of size `dt`.
    pub fn step(&self, shape: &BoundaryShape<T>, dt: T, frame_kind: Frame) -> Result<BoundaryShape<T>> {
        let (k1, _) = self.rate(shape, frame_kind, false)?;
        self.finish_rk4(shape, &k1, dt, frame_kind, false)
    }

    /// Step-doubling error estimate: one step of `dt` against two of `dt/2`,
    /// largest coefficient difference.
    pub fn step_doubling_error(&self, shape: &BoundaryShape<T>, dt: T, frame_kind: Frame) -> Result<T> {
        let full = self.step(shape, dt, frame_kind)?;
        let half = dt * lit(0.5);
        let two = self.step(&self.step(shape, half, frame_kind)?, half, frame_kind)?;
        Ok(full.coeffs().axpy(-T::one(), two.coeffs()).max_abs())
    }

    /// Integrates from `initial` according to `config`.
    ///
    /// Always returns the trajectory computed so far; the halt reason says
    /// whether the horizon was reached.
    pub fn evolve(&self, initial: &BoundaryShape<T>, config: &EvolutionConfig<T>) -> Trajectory<T> {
        let mut traj = Trajectory {
            records: Vec::new(),
            halt: HaltReason::Completed,
            warnings: Vec::new(),
        };
        if let Err(e) = config.validate() {
            traj.halt = HaltReason::Failed {
                t: 0.0,
                error: e,
            };
            return traj;
        }
        if let Some(w) = stiffness_warning(&self.params, initial.reference().n_modes(), config.dt) {
            traj.warnings.push(w.to_string());
        }
        let steps = config.n_steps();
        let mut shape = initial.clone();
        for k in 0..=steps {
            let t = config.dt * from_usize::<T>(k);
            let (k1, v) = match self.rate(&shape, config.frame, config.dealias_two_thirds) {
                Ok(r) => r,
                Err(e) => {
                    traj.halt = HaltReason::Failed {
                        t: to_f64(t),
                        error: e,
                    };
                    return traj;
                }
            };
            let halt_now = v.parabolicity_lost && config.halt_on_parabolicity_loss;
            if k % config.record_every.max(1) == 0 || k == steps || halt_now {
                traj.records.push(Record::new(t, &shape, &v.field, &self.params));
            }
            if halt_now {
                traj.halt = HaltReason::ParabolicityLost {
                    t: to_f64(t),
                    min_contact_slope: to_f64(v.min_contact_slope),
                };
                return traj;
            }
            if v.parabolicity_lost && !traj.warnings.iter().any(|w| w.starts_with("parabolicity")) {
                traj.warnings
                    .push(format!("parabolicity lost at t = {:.6}", to_f64(t)));
            }
            if k == steps {
                break;
            }
            match self.finish_rk4(&shape, &k1, config.dt, config.frame, config.dealias_two_thirds) {
                Ok(next) => shape = next,
                Err(e) => {
                    traj.halt = HaltReason::Failed {
                        t: to_f64(t + config.dt),
                        error: e,
                    };
                    return traj;
                }
            }
        }
        traj
    }
}

fn num_zero<T: Real>() -> crate::scalar::Complex<T> {
    crate::scalar::Complex::new(T::zero(), T::zero())
}

/// Lab-frame velocity `G(ρ)` with the given law.
pub fn velocity_g<T: Real>(
    shape: &BoundaryShape<T>,
    params: &ModelParams<T>,
    law: &ContactLineLaw<T>,
) -> Result<Velocity<T>> {
    Model::new(*params).with_law(law.clone()).velocity_g(shape)
}

/// Co-moving velocity `H(ρ)` with the affine law of `params`.
pub fn velocity_h<T: Real>(shape: &BoundaryShape<T>, params: &ModelParams<T>) -> Result<Velocity<T>> {
    Model::new(*params).velocity_h(shape)
}

/// Raised when `dt` makes the fastest linear mode grow under RK4.
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessWarning {
    pub dt: f64,
    pub fastest_rate: f64,
    pub growth_factor: f64,
}

impl fmt::Display for StiffnessWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "stiffness: dt = {:.3e} amplifies the fastest linear mode (rate {:.3e}) by {:.3} per step",
            self.dt, self.fastest_rate, self.growth_factor
        )
    }
}

/// Checks the RK4 amplification `|R(-κ dt)|` of the fastest decaying linear
/// mode, `κ = max(12ω, 4ω(N-1))`.
pub fn stiffness_warning<T: Real>(params: &ModelParams<T>, n_modes: usize, dt: T) -> Option<StiffnessWarning> {
    let omega = to_f64(params.omega());
    let kappa = (12.0 * omega).max(4.0 * omega * (n_modes as f64 - 1.0));
    let z = -kappa * to_f64(dt);
    let growth = (1.0 + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0).abs();
    (growth > 1.0).then_some(StiffnessWarning {
        dt: to_f64(dt),
        fastest_rate: kappa,
        growth_factor: growth,
    })
}

/// Settings of [`Model::evolve`].
#[derive(Debug, Clone, Copy)]
pub struct EvolutionConfig<T: Real> {
    pub dt: T,
    pub t_end: T,
    pub frame: Frame,
    /// Keep every `record_every`-th step (the last step is always kept).
    pub record_every: usize,
    pub halt_on_parabolicity_loss: bool,
    /// Zero modes above `2N/3` in every velocity evaluation.
    pub dealias_two_thirds: bool,
}

impl<T: Real> EvolutionConfig<T> {
    pub fn new(dt: T, t_end: T, frame: Frame) -> Self {
        Self {
            dt,
            t_end,
            frame,
            record_every: 1,
            halt_on_parabolicity_loss: true,
            dealias_two_thirds: false,
        }
    }

    pub fn record_every(mut self, every: usize) -> Self {
        self.record_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) {
            return Err(Error::InvalidConfig(format!(
                "dt must be positive, got {}",
                to_f64(self.dt)
            )));
        }
        if !(self.t_end >= T::zero()) {
            return Err(Error::InvalidConfig(format!(
                "t_end must be nonnegative, got {}",
                to_f64(self.t_end)
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (to_f64(self.t_end) / to_f64(self.dt)).round() as usize
    }
}

/// Snapshot of the evolving boundary.
#[derive(Debug, Clone)]
pub struct Record<T: Real> {
    pub t: T,
    pub rho_hat: FourierCoeffs<T>,
    pub lambda: T,
    pub min_contact_slope: T,
    /// `|∫u - V| / V`.
    pub volume_residual: T,
    pub sup_rho: T,
    /// `|ρ̂_n|`, `n = 0..=N`.
    pub mode_magnitudes: Vec<T>,
}

impl<T: Real> Record<T> {
    fn new(t: T, shape: &BoundaryShape<T>, field: &FieldSolution<T>, params: &ModelParams<T>) -> Self {
        let c = shape.coeffs();
        Self {
            t,
            rho_hat: c.clone(),
            lambda: field.lambda.unwrap_or_else(T::zero),
            min_contact_slope: min_contact_slope(field),
            volume_residual: (field.volume - params.volume).abs() / params.volume,
            sup_rho: shape.sup_norm(),
            mode_magnitudes: (0..=c.n_max() as i64).map(|n| modulus(c.get(n))).collect(),
        }
    }
}

/// Why an evolution stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum HaltReason {
    Completed,
    ParabolicityLost { t: f64, min_contact_slope: f64 },
    Failed { t: f64, error: Error },
}

impl HaltReason {
    pub fn is_completed(&self) -> bool {
        matches!(self, Self::Completed)
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Self::Completed => json!({ "halt": "completed" }),
            Self::ParabolicityLost {
                t,
                min_contact_slope,
            } => json!({
                "halt": "parabolicity_lost",
                "t": t,
                "min_contact_slope": min_contact_slope,
            }),
            Self::Failed { t, error } => json!({
                "halt": "failed",
                "t": t,
                "error": error.to_string(),
            }),
        }
    }
}

/// Time series produced by [`Model::evolve`].
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub records: Vec<Record<T>>,
    pub halt: HaltReason,
    pub warnings: Vec<String>,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> Option<&Record<T>> {
        self.records.last()
    }

    /// CSV with one row per record and a trailing `#summary` JSON line.
    /// `header` lines are emitted first as `#` comments.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &str) -> io::Result<()> {
        for line in header.lines() {
            writeln!(w, "# {line}")?;
        }
        let n = self.records.first().map_or(0, |r| r.rho_hat.n_max());
        write!(w, "t,lambda,min_contact_slope,volume_residual,sup_rho")?;
        for k in 0..=n {
            write!(w, ",re_rho_{k},im_rho_{k}")?;
        }
        writeln!(w)?;
        for r in &self.records {
            write!(
                w,
                "{:.10e},{:.16e},{:.16e},{:.6e},{:.16e}",
                to_f64(r.t),
                to_f64(r.lambda),
                to_f64(r.min_contact_slope),
                to_f64(r.volume_residual),
                to_f64(r.sup_rho)
            )?;
            for k in 0..=n as i64 {
                let c = r.rho_hat.get(k);
                write!(w, ",{:.16e},{:.16e}", to_f64(c.re), to_f64(c.im))?;
            }
            writeln!(w)?;
        }
        let mut summary = self.halt.to_json();
        summary["records"] = json!(self.records.len());
        summary["warnings"] = json!(self.warnings);
        writeln!(w, "#summary {summary}")
    }
}
