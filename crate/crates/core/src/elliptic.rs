//! Volume-constrained Dirichlet problem `-Δu = μx¹ + λ`, `u = 0` on `Γ`,
//! `∫u = V`, on star-shaped domains.
//!
//! Each source term has a closed-form particular solution
//! (`-r²/4` for `f = 1`, `-x¹r²/8` for `f = x¹`); the boundary condition is
//! then met by a harmonic polynomial `Σ c_n (r/R_ref)^{|n|} e^{inθ}` fitted by
//! least squares at the grid collocation points.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{BoundaryShape, FourierCoeffs, ReferenceCircle};
use crate::scalar::{cplx, from_mode, lit, to_f64, Real};

/// Physical constants of the model and the translating-circle data they fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams<T: Real> {
    /// Slope of the affine contact-line law `F(q) = a q - b`.
    pub a: T,
    /// Offset of the affine contact-line law.
    pub b: T,
    /// Incline parameter.
    pub mu: T,
    /// Droplet volume.
    pub volume: T,
}

impl<T: Real> ModelParams<T> {
    pub fn new(a: T, b: T, mu: T, volume: T) -> Result<Self> {
        let p = Self { a, b, mu, volume };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, v: T| {
            Err(Error::InvalidConfig(format!(
                "parameter `{name}` out of range: {}",
                to_f64(v)
            )))
        };
        if !(self.a > T::zero()) {
            return bad("a", self.a);
        }
        if !(self.b > T::zero()) {
            return bad("b", self.b);
        }
        if !(self.mu >= T::zero()) {
            return bad("mu", self.mu);
        }
        if !(self.volume > T::zero()) {
            return bad("volume", self.volume);
        }
        Ok(())
    }

    pub fn with_mu(mut self, mu: T) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_volume(mut self, volume: T) -> Self {
        self.volume = volume;
        self
    }

    /// Radius of the translating circle, `(4Va/(πb))^{1/3}`.
    pub fn r0(&self) -> T {
        (lit::<T>(4.0) * self.volume * self.a / (T::pi() * self.b)).cbrt()
    }

    /// Sliding speed `μ a R0² / 4`.
    pub fn v0(&self) -> T {
        let r0 = self.r0();
        self.mu * self.a * r0 * r0 / lit(4.0)
    }

    /// Multiplier of the circular solution, `8V/(πR0⁴)`.
    pub fn lambda0(&self) -> T {
        lit::<T>(8.0) * self.volume / (T::pi() * self.r0().powi(4))
    }

    /// Rate scale `Va/(πR0⁴)` of the linearized spectrum.
    pub fn omega(&self) -> T {
        self.volume * self.a / (T::pi() * self.r0().powi(4))
    }

    /// Largest incline `16V/(πR0⁵)` for which the circular profile stays nonnegative.
    pub fn positivity_limit(&self) -> T {
        lit::<T>(16.0) * self.volume / (T::pi() * self.r0().powi(5))
    }

    pub fn is_nonnegative_regime(&self) -> bool {
        self.mu <= self.positivity_limit()
    }

    /// Circle of radius `R0` with `n_modes` retained modes and the default grid.
    pub fn reference_circle(&self, n_modes: usize) -> Result<ReferenceCircle<T>> {
        ReferenceCircle::new(self.r0(), n_modes)
    }
}

impl Default for ModelParams<f64> {
    /// `a = b = 1`, `V = π/4`, `μ = 0`: `R0 = 1`, `ω = 1/4`, `λ0 = 2`.
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            mu: 0.0,
            volume: std::f64::consts::FRAC_PI_4,
        }
    }
}

/// Which right-hand side a [`FieldSolution`] solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RhsTag {
    /// `f = 1`
    Unit,
    /// `f = x¹`
    X1,
    /// `f = μx¹ + λ` with `λ` fixed by the volume constraint.
    Full,
}

/// Numerical knobs of the collocation solver.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T: Real> {
    /// Gauss–Legendre nodes in the radial volume quadrature.
    pub radial_nodes: usize,
    /// Largest accepted condition number of the collocation matrix.
    pub max_condition: T,
    /// Degree of the harmonic polynomial; `None` uses the shape's `N`.
    pub harmonic_modes: Option<usize>,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            radial_nodes: 32,
            max_condition: lit(1e12),
            harmonic_modes: None,
        }
    }
}

/// Solution of `-Δu = f`, `u|_Γ = 0` with `f = unit_weight + x1_weight·x¹`.
#[derive(Debug, Clone)]
pub struct FieldSolution<T: Real> {
    pub shape: BoundaryShape<T>,
    pub rhs_tag: RhsTag,
    /// Coefficient of the constant source.
    pub unit_weight: T,
    /// Coefficient of the `x¹` source.
    pub x1_weight: T,
    /// `c_n` of the harmonic part in the basis `(r/R_ref)^{|n|} e^{inθ}`.
    pub harmonic_coeffs: FourierCoeffs<T>,
    /// Only set for [`RhsTag::Full`].
    pub lambda: Option<T>,
    /// `∂_ν u(θ_j)` along the outer normal.
    pub boundary_normal_derivative: Vec<T>,
    /// `∫_Ω u dx`.
    pub volume: T,
    /// `max_j |u|` at the collocation points.
    pub boundary_residual: T,
    /// Condition number of the collocation matrix.
    pub condition: T,
}

impl<T: Real> FieldSolution<T> {
    /// `u` at polar coordinates `(r, θ)`.
    pub fn value(&self, r: T, theta: T) -> T {
        let q: T = lit(0.25);
        let e: T = lit(0.125);
        let particular =
            -self.unit_weight * q * r * r - self.x1_weight * e * r * r * r * theta.cos();
        particular + harmonic_value(&self.harmonic_coeffs, self.shape.reference().radius(), r, theta)
    }

    /// `u` at a Cartesian point.
    pub fn value_at(&self, x: [T; 2]) -> T {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        self.value(r, x[1].atan2(x[0]))
    }

    /// `(∂_r u, ∂_θ u)` at `(r, θ)`.
    pub fn polar_gradient(&self, r: T, theta: T) -> (T, T) {
        let (c, s) = (theta.cos(), theta.sin());
        let e: T = lit(0.125);
        let dr_p = -self.unit_weight * r * lit(0.5) - self.x1_weight * lit::<T>(3.0) * e * r * r * c;
        let dt_p = self.x1_weight * e * r * r * r * s;
        let (dr_h, dt_h) =
            harmonic_gradient(&self.harmonic_coeffs, self.shape.reference().radius(), r, theta);
        (dr_p + dr_h, dt_p + dt_h)
    }

    /// `-∂_ν u` on the grid.
    pub fn contact_slope(&self) -> Vec<T> {
        self.boundary_normal_derivative.iter().map(|d| -*d).collect()
    }

    /// `α·self + β·other`, coefficientwise.
    fn combine(&self, alpha: T, other: &Self, beta: T, tag: RhsTag) -> Self {
        let coeffs = self.harmonic_coeffs.scale(alpha).axpy(beta, &other.harmonic_coeffs);
        Self {
            shape: self.shape.clone(),
            rhs_tag: tag,
            unit_weight: alpha * self.unit_weight + beta * other.unit_weight,
            x1_weight: alpha * self.x1_weight + beta * other.x1_weight,
            harmonic_coeffs: coeffs,
            lambda: None,
            boundary_normal_derivative: self
                .boundary_normal_derivative
                .iter()
                .zip(&other.boundary_normal_derivative)
                .map(|(p, q)| alpha * *p + beta * *q)
                .collect(),
            volume: alpha * self.volume + beta * other.volume,
            boundary_residual: T::zero(),
            condition: self.condition,
        }
    }
}

fn harmonic_value<T: Real>(c: &FourierCoeffs<T>, r_ref: T, r: T, theta: T) -> T {
    let s = r / r_ref;
    let step = cplx(theta.cos(), theta.sin());
    let mut phase = step;
    let mut pow = s;
    let mut v = c.get(0).re;
    let two: T = lit(2.0);
    for n in 1..=c.n_max() as i64 {
        v += two * pow * (c.get(n) * phase).re;
        phase *= step;
        pow *= s;
    }
    v
}

fn harmonic_gradient<T: Real>(c: &FourierCoeffs<T>, r_ref: T, r: T, theta: T) -> (T, T) {
    let s = r / r_ref;
    let step = cplx(theta.cos(), theta.sin());
    let mut phase = step;
    // s^{n-1}
    let mut pow = T::one();
    let two: T = lit(2.0);
    let (mut dr, mut dt) = (T::zero(), T::zero());
    for n in 1..=c.n_max() as i64 {
        let k: T = from_mode(n);
        let z = c.get(n) * phase;
        dr += two * k * pow / r_ref * z.re;
        dt -= two * k * pow * s * z.im;
        phase *= step;
        pow *= s;
    }
    (dr, dt)
}

/// Least-squares collocation of harmonic polynomials on `Γ`.
struct Collocation<T: Real> {
    q: DMatrix<T>,
    r: DMatrix<T>,
    degree: usize,
    condition: T,
}

impl<T: Real> Collocation<T> {
    fn new(shape: &BoundaryShape<T>, degree: usize, max_condition: T) -> Result<Self> {
        let reference = shape.reference();
        let m = reference.n_grid();
        if m < 2 * degree + 1 {
            return Err(Error::InvalidConfig(format!(
                "harmonic degree {degree} needs at least {} collocation points, have {m}",
                2 * degree + 1
            )));
        }
        let r_ref = reference.radius();
        let mut a = DMatrix::<T>::zeros(m, 2 * degree + 1);
        for j in 0..m {
            let s = (r_ref + shape.grid()[j]) / r_ref;
            a[(j, 0)] = T::one();
            let mut pow = s;
            for n in 1..=degree {
                a[(j, 2 * n - 1)] = pow * reference.cos_n(n as i64, j);
                a[(j, 2 * n)] = pow * reference.sin_n(n as i64, j);
                pow *= s;
            }
        }
        // QR for the fit: nalgebra's SVD factors drift on some of these matrices
        let singular = a.singular_values();
        let (mut smax, mut smin) = (T::zero(), T::max_value().unwrap());
        for s in singular.iter() {
            smax = smax.max(*s);
            smin = smin.min(*s);
        }
        let condition = if smin > T::zero() {
            smax / smin
        } else {
            T::max_value().unwrap()
        };
        if !(condition <= max_condition) {
            return Err(Error::IllConditioned {
                condition: to_f64(condition),
            });
        }
        let qr = a.qr();
        Ok(Self {
            q: qr.q(),
            r: qr.r(),
            degree,
            condition,
        })
    }

    /// Harmonic coefficients whose boundary values best match `data`.
    fn fit(&self, data: &[T]) -> FourierCoeffs<T> {
        let b = DVector::from_column_slice(data);
        let x = self
            .r
            .solve_upper_triangular(&self.q.tr_mul(&b))
            .expect("R is nonsingular once the condition check passed");
        let mut out = FourierCoeffs::zeros(self.degree);
        let half: T = lit(0.5);
        out.set(0, cplx(x[0], T::zero()));
        for n in 1..=self.degree {
            out.set_real_mode(n, cplx(x[2 * n - 1] * half, -x[2 * n] * half));
        }
        out
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (
        nodes.into_iter().map(lit).collect(),
        weights.into_iter().map(lit).collect(),
    )
}

/// `∫_Ω u dx` by Gauss–Legendre in `r` and the trapezoid rule in `θ`.
pub fn volume_integral<T: Real>(shape: &BoundaryShape<T>, field: &FieldSolution<T>) -> T {
    volume_integral_with(shape, field, 32)
}

/// [`volume_integral`] with a chosen number of radial nodes.
pub fn volume_integral_with<T: Real>(
    shape: &BoundaryShape<T>,
    field: &FieldSolution<T>,
    radial_nodes: usize,
) -> T {
    let reference = shape.reference();
    let r_ref = reference.radius();
    let (x, w) = gauss_legendre::<T>(radial_nodes);
    let half: T = lit(0.5);
    let quarter: T = lit(0.25);
    let eighth: T = lit(0.125);
    let two: T = lit(2.0);
    let c = &field.harmonic_coeffs;
    let mut amplitude = vec![T::zero(); c.n_max() + 1];
    let per_ray: Vec<T> = (0..reference.n_grid())
        .map(|j| {
            let big_r = r_ref + shape.grid()[j];
            let cos = reference.cos_n(1, j);
            amplitude[0] = c.get(0).re;
            for n in 1..=c.n_max() {
                let z = c.get(n as i64);
                amplitude[n] = two
                    * (z.re * reference.cos_n(n as i64, j) - z.im * reference.sin_n(n as i64, j));
            }
            let mut acc = T::zero();
            for (xk, wk) in x.iter().zip(&w) {
                let r = big_r * half * (T::one() + *xk);
                let s = r / r_ref;
                let mut h = T::zero();
                for a in amplitude.iter().rev() {
                    h = h * s + *a;
                }
                let u = h
                    - field.unit_weight * quarter * r * r
                    - field.x1_weight * eighth * r * r * r * cos;
                acc += *wk * u * r;
            }
            acc * big_r * half
        })
        .collect();
    reference.integrate(&per_ray)
}

/// Collocation solver with fixed options.
#[derive(Debug, Clone, Copy)]
pub struct EllipticSolver<T: Real> {
    pub options: SolverOptions<T>,
}

impl<T: Real> Default for EllipticSolver<T> {
    fn default() -> Self {
        Self {
            options: SolverOptions::default(),
        }
    }
}

/// `u^{(1)}` and `u^{(x¹)}` on one shape, sharing a factorization.
#[derive(Debug, Clone)]
pub struct ComponentSolutions<T: Real> {
    pub unit: FieldSolution<T>,
    pub x1: FieldSolution<T>,
}

impl<T: Real> ComponentSolutions<T> {
    /// `λ = (V - μ∫u^{(x¹)}) / ∫u^{(1)}`.
    pub fn lagrange_multiplier(&self, params: &ModelParams<T>) -> Result<T> {
        if !(self.unit.volume > T::zero()) {
            return Err(Error::DegenerateVolume(to_f64(self.unit.volume)));
        }
        Ok((params.volume - params.mu * self.x1.volume) / self.unit.volume)
    }

    /// `u = μu^{(x¹)} + λu^{(1)}` with the volume constraint enforced.
    pub fn combine(&self, params: &ModelParams<T>, radial_nodes: usize) -> Result<FieldSolution<T>> {
        let lambda = self.lagrange_multiplier(params)?;
        let mut full = self.x1.combine(params.mu, &self.unit, lambda, RhsTag::Full);
        full.lambda = Some(lambda);
        full.volume = volume_integral_with(&full.shape, &full, radial_nodes);
        full.boundary_residual = boundary_residual(&full);
        Ok(full)
    }

    /// Minimum of `-∂_ν u` over the grid at incline `mu`, reusing both solves.
    pub fn min_contact_slope_at(&self, params: &ModelParams<T>, mu: T) -> Result<T> {
        let p = params.with_mu(mu);
        let lambda = self.lagrange_multiplier(&p)?;
        Ok(self
            .x1
            .boundary_normal_derivative
            .iter()
            .zip(&self.unit.boundary_normal_derivative)
            .map(|(dx, du)| -(mu * *dx + lambda * *du))
            .fold(T::max_value().unwrap(), |a, b| a.min(b)))
    }
}

fn boundary_residual<T: Real>(field: &FieldSolution<T>) -> T {
    let shape = &field.shape;
    let reference = shape.reference();
    (0..reference.n_grid())
        .map(|j| {
            let r = reference.radius() + shape.grid()[j];
            field.value(r, reference.theta(j)).abs()
        })
        .fold(T::zero(), |a, b| a.max(b))
}

fn normal_derivative<T: Real>(field: &FieldSolution<T>) -> Vec<T> {
    let shape = &field.shape;
    let reference = shape.reference();
    (0..reference.n_grid())
        .map(|j| {
            let r = reference.radius() + shape.grid()[j];
            let dr = shape.grid_derivative()[j];
            let (ur, ut) = field.polar_gradient(r, reference.theta(j));
            (r * ur - dr * ut / r) / (dr * dr + r * r).sqrt()
        })
        .collect()
}

impl<T: Real> EllipticSolver<T> {
    pub fn new(options: SolverOptions<T>) -> Self {
        Self { options }
    }

    fn collocation(&self, shape: &BoundaryShape<T>) -> Result<Collocation<T>> {
        let degree = self
            .options
            .harmonic_modes
            .unwrap_or(shape.reference().n_modes());
        Collocation::new(shape, degree, self.options.max_condition)
    }

    fn solve_with(
        &self,
        shape: &BoundaryShape<T>,
        colloc: &Collocation<T>,
        tag: RhsTag,
    ) -> FieldSolution<T> {
        let (unit_weight, x1_weight) = match tag {
            RhsTag::Unit => (T::one(), T::zero()),
            RhsTag::X1 => (T::zero(), T::one()),
            RhsTag::Full => unreachable!("full solves go through ComponentSolutions"),
        };
        let reference = shape.reference();
        let data: Vec<T> = (0..reference.n_grid())
            .map(|j| {
                let r = reference.radius() + shape.grid()[j];
                unit_weight * lit::<T>(0.25) * r * r
                    + x1_weight * lit::<T>(0.125) * r * r * r * reference.cos_n(1, j)
            })
            .collect();
        let mut field = FieldSolution {
            shape: shape.clone(),
            rhs_tag: tag,
            unit_weight,
            x1_weight,
            harmonic_coeffs: colloc.fit(&data),
            lambda: None,
            boundary_normal_derivative: Vec::new(),
            volume: T::zero(),
            boundary_residual: T::zero(),
            condition: colloc.condition,
        };
        field.boundary_normal_derivative = normal_derivative(&field);
        field.volume = volume_integral_with(shape, &field, self.options.radial_nodes);
        field.boundary_residual = boundary_residual(&field);
        field
    }

    /// Solves `-Δu = f`, `u|_Γ = 0` for `f ∈ {1, x¹}`.
    pub fn solve_component(&self, shape: &BoundaryShape<T>, tag: RhsTag) -> Result<FieldSolution<T>> {
        if tag == RhsTag::Full {
            return Err(Error::InvalidConfig(
                "solve_component takes the unit or x1 source".into(),
            ));
        }
        let colloc = self.collocation(shape)?;
        Ok(self.solve_with(shape, &colloc, tag))
    }

    pub fn solve_components(&self, shape: &BoundaryShape<T>) -> Result<ComponentSolutions<T>> {
        let colloc = self.collocation(shape)?;
        Ok(ComponentSolutions {
            unit: self.solve_with(shape, &colloc, RhsTag::Unit),
            x1: self.solve_with(shape, &colloc, RhsTag::X1),
        })
    }

    pub fn lagrange_multiplier(&self, shape: &BoundaryShape<T>, params: &ModelParams<T>) -> Result<T> {
        self.solve_components(shape)?.lagrange_multiplier(params)
    }

    pub fn solve_full(&self, shape: &BoundaryShape<T>, params: &ModelParams<T>) -> Result<FieldSolution<T>> {
        self.solve_components(shape)?
            .combine(params, self.options.radial_nodes)
    }

    /// Solve-based Dirichlet-to-Neumann map: boundary data `h(θ_j)` to the
    /// normal derivative of its harmonic extension.
    pub fn dtn(&self, shape: &BoundaryShape<T>, data: &[T]) -> Result<Vec<T>> {
        let colloc = self.collocation(shape)?;
        let field = FieldSolution {
            shape: shape.clone(),
            rhs_tag: RhsTag::Unit,
            unit_weight: T::zero(),
            x1_weight: T::zero(),
            harmonic_coeffs: colloc.fit(data),
            lambda: None,
            boundary_normal_derivative: Vec::new(),
            volume: T::zero(),
            boundary_residual: T::zero(),
            condition: colloc.condition,
        };
        Ok(normal_derivative(&field))
    }
}

pub fn solve_component<T: Real>(shape: &BoundaryShape<T>, tag: RhsTag) -> Result<FieldSolution<T>> {
    EllipticSolver::default().solve_component(shape, tag)
}

pub fn lagrange_multiplier<T: Real>(shape: &BoundaryShape<T>, params: &ModelParams<T>) -> Result<T> {
    EllipticSolver::default().lagrange_multiplier(shape, params)
}

pub fn solve_full<T: Real>(shape: &BoundaryShape<T>, params: &ModelParams<T>) -> Result<FieldSolution<T>> {
    EllipticSolver::default().solve_full(shape, params)
}

/// `min_j -∂_ν u(θ_j)`; positive values certify the parabolic regime.
pub fn min_contact_slope<T: Real>(field: &FieldSolution<T>) -> T {
    field
        .boundary_normal_derivative
        .iter()
        .map(|d| -*d)
        .fold(T::max_value().unwrap(), |a, b| a.min(b))
}

/// Dirichlet-to-Neumann map of the disk of radius `r0`: multiplier `|n|/r0`.
pub fn dtn_disk<T: Real>(h: &FourierCoeffs<T>, r0: T) -> FourierCoeffs<T> {
    let mut out = h.clone();
    for n in -(h.n_max() as i64)..=h.n_max() as i64 {
        let k: T = from_mode(n.abs());
        out.set(n, h.get(n) * (k / r0));
    }
    out
}
