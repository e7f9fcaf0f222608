//! Star-shaped closed curves written as radial graphs over a reference circle.
//!
//! A curve is `Γ_ρ = {(R_ref + ρ(θ)) (cos θ, sin θ)}` where `ρ` is a real
//! trigonometric polynomial of degree `N`, stored through its complex Fourier
//! coefficients `ρ̂_n`, `n = -N..=N`, with `ρ̂_{-n} = conj(ρ̂_n)`.
//! Grid quantities live on the uniform angles `θ_j = 2πj/M`.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{cplx, from_mode, from_usize, lit, modulus, to_f64, Complex, Real};

/// Fourier coefficients `c_n`, `n = -n_max..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoeffs<T: Real> {
    n_max: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> FourierCoeffs<T> {
    pub fn zeros(n_max: usize) -> Self {
        Self {
            n_max,
            data: vec![Complex::new(T::zero(), T::zero()); 2 * n_max + 1],
        }
    }

    /// Builds from a slice ordered `-n_max..=n_max`.
    pub fn from_vec(data: Vec<Complex<T>>) -> Result<Self> {
        if data.len() % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "coefficient vector must have odd length 2N+1, got {}",
                data.len()
            )));
        }
        Ok(Self {
            n_max: data.len() / 2,
            data,
        })
    }

    /// Real cosine/sine expansion `c0 + Σ a_n cos nθ + b_n sin nθ`, `n = 1..`.
    pub fn from_cos_sin(c0: T, cos: &[T], sin: &[T]) -> Self {
        let n_max = cos.len().max(sin.len());
        let mut out = Self::zeros(n_max);
        out.set(0, cplx(c0, T::zero()));
        let half: T = lit(0.5);
        for n in 1..=n_max {
            let a = cos.get(n - 1).copied().unwrap_or_else(T::zero);
            let b = sin.get(n - 1).copied().unwrap_or_else(T::zero);
            out.set_real_mode(n, cplx(a * half, -b * half));
        }
        out
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    #[inline]
    fn index(&self, n: i64) -> Option<usize> {
        let k = n + self.n_max as i64;
        (0..self.data.len() as i64).contains(&k).then_some(k as usize)
    }

    /// Coefficient of mode `n`; zero outside the stored range.
    #[inline]
    pub fn get(&self, n: i64) -> Complex<T> {
        self.index(n)
            .map(|k| self.data[k])
            .unwrap_or_else(|| Complex::new(T::zero(), T::zero()))
    }

    /// Sets mode `n`; out-of-range modes are ignored.
    pub fn set(&mut self, n: i64, value: Complex<T>) {
        if let Some(k) = self.index(n) {
            self.data[k] = value;
        }
    }

    /// Sets `c_n = value` and `c_{-n} = conj(value)`.
    pub fn set_real_mode(&mut self, n: usize, value: Complex<T>) {
        let n = n as i64;
        if n == 0 {
            self.set(0, cplx(value.re, T::zero()));
        } else {
            self.set(n, value);
            self.set(-n, value.conj());
        }
    }

    /// Averages `c_n` with `conj(c_{-n})` so the represented function is real.
    pub fn symmetrized(&self) -> Self {
        let mut out = Self::zeros(self.n_max);
        let half: T = lit(0.5);
        for n in 0..=self.n_max as i64 {
            let v = (self.get(n) + self.get(-n).conj()) * half;
            out.set_real_mode(n as usize, v);
        }
        out
    }

    /// Copy with `n_max` changed (truncating or zero-padding).
    pub fn resized(&self, n_max: usize) -> Self {
        let mut out = Self::zeros(n_max);
        let m = n_max.min(self.n_max) as i64;
        for n in -m..=m {
            out.set(n, self.get(n));
        }
        out
    }

    /// Largest violation of `c_{-n} = conj(c_n)`.
    pub fn symmetry_defect(&self) -> T {
        (0..=self.n_max as i64)
            .map(|n| modulus(self.get(-n) - self.get(n).conj()))
            .fold(T::zero(), |a, b| a.max(b))
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            n_max: self.n_max,
            data: self.data.iter().map(|c| c * s).collect(),
        }
    }

    /// `self + s * other` (modes beyond `self.n_max` are dropped).
    pub fn axpy(&self, s: T, other: &Self) -> Self {
        let mut out = self.clone();
        for n in -(self.n_max as i64)..=self.n_max as i64 {
            let v = out.get(n) + other.get(n) * s;
            out.set(n, v);
        }
        out
    }

    /// Multiplies mode `n` by `i n` (derivative in θ).
    pub fn derivative(&self) -> Self {
        let mut out = self.clone();
        for n in -(self.n_max as i64)..=self.n_max as i64 {
            let c = self.get(n);
            let k: T = from_mode(n);
            out.set(n, cplx(-c.im * k, c.re * k));
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .map(|c| modulus(*c))
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Evaluates `Σ c_n e^{inθ}` and returns its real part.
    pub fn eval(&self, theta: T) -> T {
        let (value, _) = self.eval_with_derivative(theta);
        value
    }

    /// Returns `(f(θ), f'(θ))` for the real function with these coefficients.
    pub fn eval_with_derivative(&self, theta: T) -> (T, T) {
        let two: T = lit(2.0);
        let step = cplx(theta.cos(), theta.sin());
        let mut phase = step;
        let mut value = self.get(0).re;
        let mut deriv = T::zero();
        for n in 1..=self.n_max as i64 {
            let c = self.get(n) * phase;
            let k: T = from_mode(n);
            value += two * c.re;
            deriv -= two * k * c.im;
            phase *= step;
        }
        (value, deriv)
    }
}

#[derive(Debug)]
struct Tables<T> {
    cos: Vec<T>,
    sin: Vec<T>,
}

/// Reference circle `R_ref·S¹` together with the Fourier truncation and grid.
#[derive(Debug, Clone)]
pub struct ReferenceCircle<T: Real> {
    radius: T,
    n_modes: usize,
    n_grid: usize,
    r_tube: T,
    tables: Arc<Tables<T>>,
}

impl<T: Real> PartialEq for ReferenceCircle<T> {
    fn eq(&self, other: &Self) -> bool {
        self.radius == other.radius
            && self.n_modes == other.n_modes
            && self.n_grid == other.n_grid
            && self.r_tube == other.r_tube
    }
}

impl<T: Real> ReferenceCircle<T> {
    /// Default tubular radius as a fraction of `R_ref`.
    pub const DEFAULT_TUBE: f64 = 0.5;

    /// Circle with the default grid `M = 4N`.
    pub fn new(radius: T, n_modes: usize) -> Result<Self> {
        Self::with_grid(radius, n_modes, 4 * n_modes)
    }

    pub fn with_grid(radius: T, n_modes: usize, n_grid: usize) -> Result<Self> {
        if !(radius > T::zero()) {
            return Err(Error::InvalidConfig(format!(
                "reference radius must be positive, got {}",
                to_f64(radius)
            )));
        }
        if n_modes < 4 {
            return Err(Error::InvalidConfig(format!(
                "n_modes must be at least 4, got {n_modes}"
            )));
        }
        if n_grid < 2 * n_modes + 2 {
            return Err(Error::InvalidConfig(format!(
                "n_grid = {n_grid} aliases the retained modes (need >= {})",
                2 * n_modes + 2
            )));
        }
        let step = T::two_pi() / from_usize::<T>(n_grid);
        let angles = (0..n_grid).map(|k| step * from_usize::<T>(k));
        let tables = Tables {
            cos: angles.clone().map(|a| a.cos()).collect(),
            sin: angles.map(|a| a.sin()).collect(),
        };
        Ok(Self {
            radius,
            n_modes,
            n_grid,
            r_tube: lit(Self::DEFAULT_TUBE),
            tables: Arc::new(tables),
        })
    }

    pub fn with_tube(mut self, r_tube: T) -> Result<Self> {
        if !(r_tube > T::zero() && r_tube < T::one()) {
            return Err(Error::InvalidConfig(format!(
                "r_tube must lie in (0, 1), got {}",
                to_f64(r_tube)
            )));
        }
        self.r_tube = r_tube;
        Ok(self)
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn r_tube(&self) -> T {
        self.r_tube
    }

    pub fn theta(&self, j: usize) -> T {
        T::two_pi() * from_usize::<T>(j) / from_usize::<T>(self.n_grid)
    }

    pub fn thetas(&self) -> Vec<T> {
        (0..self.n_grid).map(|j| self.theta(j)).collect()
    }

    #[inline]
    fn table_index(&self, n: i64, j: usize) -> usize {
        (n * j as i64).rem_euclid(self.n_grid as i64) as usize
    }

    /// `cos(n θ_j)` from the periodic table.
    #[inline]
    pub fn cos_n(&self, n: i64, j: usize) -> T {
        self.tables.cos[self.table_index(n, j)]
    }

    /// `sin(n θ_j)` from the periodic table.
    #[inline]
    pub fn sin_n(&self, n: i64, j: usize) -> T {
        self.tables.sin[self.table_index(n, j)]
    }

    /// Grid values of the real function with the given coefficients.
    pub fn synthesize(&self, coeffs: &FourierCoeffs<T>) -> Vec<T> {
        let two: T = lit(2.0);
        (0..self.n_grid)
            .map(|j| {
                let mut v = coeffs.get(0).re;
                for n in 1..=coeffs.n_max() as i64 {
                    let c = coeffs.get(n);
                    v += two * (c.re * self.cos_n(n, j) - c.im * self.sin_n(n, j));
                }
                v
            })
            .collect()
    }

    /// Discrete Fourier analysis keeping modes `|n| <= n_max`.
    pub fn analyze_to(&self, values: &[T], n_max: usize) -> FourierCoeffs<T> {
        assert_eq!(values.len(), self.n_grid, "grid length mismatch");
        let inv_m = T::one() / from_usize::<T>(self.n_grid);
        let mut out = FourierCoeffs::zeros(n_max);
        for n in 0..=n_max as i64 {
            let (mut re, mut im) = (T::zero(), T::zero());
            for (j, v) in values.iter().enumerate() {
                re += *v * self.cos_n(n, j);
                im -= *v * self.sin_n(n, j);
            }
            out.set_real_mode(n as usize, cplx(re * inv_m, im * inv_m));
        }
        out
    }

    /// Discrete Fourier analysis truncated to the circle's `N`.
    pub fn analyze(&self, values: &[T]) -> FourierCoeffs<T> {
        self.analyze_to(values, self.n_modes)
    }

    /// Trapezoid rule `∫_0^{2π} f dθ` on the grid.
    pub fn integrate(&self, values: &[T]) -> T {
        let sum = values.iter().fold(T::zero(), |a, b| a + *b);
        sum * T::two_pi() / from_usize::<T>(self.n_grid)
    }
}

/// Radial graph `ρ` over a reference circle.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryShape<T: Real> {
    reference: ReferenceCircle<T>,
    coeffs: FourierCoeffs<T>,
    grid: Vec<T>,
    grid_derivative: Vec<T>,
}

impl<T: Real> BoundaryShape<T> {
    /// Validates and wraps a coefficient set.
    ///
    /// Modes above the circle's `N` are dropped and conjugate symmetry is
    /// enforced before the star-shape and tubular checks.
    pub fn new(reference: ReferenceCircle<T>, coeffs: &FourierCoeffs<T>) -> Result<Self> {
        let coeffs = coeffs.resized(reference.n_modes()).symmetrized();
        let grid = reference.synthesize(&coeffs);
        let grid_derivative = reference.synthesize(&coeffs.derivative());
        let radius = reference.radius();
        let (j_min, r_min) = grid
            .iter()
            .map(|r| radius + *r)
            .enumerate()
            .fold((0, T::max_value().unwrap()), |acc, (j, r)| {
                if r < acc.1 {
                    (j, r)
                } else {
                    acc
                }
            });
        if !(r_min > T::zero()) {
            return Err(Error::StarShapeViolation {
                min_radius: to_f64(r_min),
                theta: to_f64(reference.theta(j_min)),
            });
        }
        let max_abs = grid.iter().fold(T::zero(), |a, r| a.max(r.abs()));
        let bound = reference.r_tube() * radius;
        if !(max_abs < bound) {
            return Err(Error::TubularViolation {
                max_abs: to_f64(max_abs),
                bound: to_f64(bound),
            });
        }
        Ok(Self {
            reference,
            coeffs,
            grid,
            grid_derivative,
        })
    }

    /// The reference circle itself (`ρ ≡ 0`).
    pub fn circle(reference: ReferenceCircle<T>) -> Self {
        let n = reference.n_modes();
        Self::new(reference, &FourierCoeffs::zeros(n)).expect("zero shape is always valid")
    }

    /// Shape from grid samples of `ρ`.
    pub fn from_grid(reference: ReferenceCircle<T>, values: &[T]) -> Result<Self> {
        let coeffs = reference.analyze(values);
        Self::new(reference, &coeffs)
    }

    pub fn reference(&self) -> &ReferenceCircle<T> {
        &self.reference
    }

    pub fn coeffs(&self) -> &FourierCoeffs<T> {
        &self.coeffs
    }

    /// `ρ(θ_j)`.
    pub fn grid(&self) -> &[T] {
        &self.grid
    }

    /// `ρ'(θ_j)`, computed spectrally.
    pub fn grid_derivative(&self) -> &[T] {
        &self.grid_derivative
    }

    /// `R(θ_j) = R_ref + ρ(θ_j)`.
    pub fn radii(&self) -> Vec<T> {
        let r = self.reference.radius();
        self.grid.iter().map(|p| r + *p).collect()
    }

    pub fn sup_norm(&self) -> T {
        self.grid.iter().fold(T::zero(), |a, r| a.max(r.abs()))
    }

    /// `(ρ(θ), ρ'(θ))` at an arbitrary angle.
    pub fn eval(&self, theta: T) -> (T, T) {
        self.coeffs.eval_with_derivative(theta)
    }

    /// Point of the curve at parameter `θ`.
    pub fn point(&self, theta: T) -> [T; 2] {
        let (rho, _) = self.eval(theta);
        let r = self.reference.radius() + rho;
        [r * theta.cos(), r * theta.sin()]
    }

    /// Area enclosed by the curve, `½∫R(θ)² dθ`.
    pub fn enclosed_area(&self) -> T {
        let sq: Vec<T> = self.radii().iter().map(|r| *r * *r).collect();
        self.reference.integrate(&sq) * lit(0.5)
    }

    /// Radial graph of the translated curve `Γ_ρ + shift` over the same circle.
    ///
    /// For every grid angle `φ_j` the parameter `θ` with
    /// `arg(P(θ) + shift) = φ_j` is located by Newton's method.
    pub fn translated(&self, shift: [T; 2]) -> Result<Self> {
        let m = self.reference.n_grid();
        let r_ref = self.reference.radius();
        let tol: T = T::EPS * lit(16.0);
        let mut values = Vec::with_capacity(m);
        for j in 0..m {
            let phi = self.reference.theta(j);
            let mut theta = phi;
            let mut radius = T::zero();
            for _ in 0..50 {
                let (rho, drho) = self.eval(theta);
                let r = r_ref + rho;
                let (c, s) = (theta.cos(), theta.sin());
                let q = [r * c + shift[0], r * s + shift[1]];
                let dq = [drho * c - r * s, drho * s + r * c];
                let q2 = q[0] * q[0] + q[1] * q[1];
                radius = q2.sqrt();
                let angle = q[1].atan2(q[0]);
                let g = wrap_angle(angle - phi);
                let dg = (q[0] * dq[1] - q[1] * dq[0]) / q2;
                if !(dg > T::zero()) {
                    return Err(Error::StarShapeViolation {
                        min_radius: to_f64(radius),
                        theta: to_f64(phi),
                    });
                }
                let delta = g / dg;
                theta -= delta;
                if delta.abs() <= tol {
                    let (rho, _) = self.eval(theta);
                    let r = r_ref + rho;
                    let q = [r * theta.cos() + shift[0], r * theta.sin() + shift[1]];
                    radius = (q[0] * q[0] + q[1] * q[1]).sqrt();
                    break;
                }
            }
            values.push(radius - r_ref);
        }
        Self::from_grid(self.reference.clone(), &values)
    }

    /// Same circle, new coefficients.
    pub fn with_coeffs(&self, coeffs: &FourierCoeffs<T>) -> Result<Self> {
        Self::new(self.reference.clone(), coeffs)
    }
}

fn wrap_angle<T: Real>(a: T) -> T {
    let pi = T::pi();
    let two_pi = T::two_pi();
    let mut a = a;
    while a > pi {
        a -= two_pi;
    }
    while a <= -pi {
        a += two_pi;
    }
    a
}

/// Builds a validated shape from coefficients `ρ̂_n`.
pub fn make_shape<T: Real>(
    reference: &ReferenceCircle<T>,
    coeffs: &FourierCoeffs<T>,
) -> Result<BoundaryShape<T>> {
    BoundaryShape::new(reference.clone(), coeffs)
}

/// Grid values `ρ(θ_j)`.
pub fn to_grid<T: Real>(shape: &BoundaryShape<T>) -> Vec<T> {
    shape.grid().to_vec()
}

/// Coefficients `ρ̂_n`, `|n| <= N`, of grid samples.
pub fn from_grid<T: Real>(reference: &ReferenceCircle<T>, values: &[T]) -> FourierCoeffs<T> {
    reference.analyze(values)
}

/// Geometric data along the curve at every grid angle.
#[derive(Debug, Clone)]
pub struct BoundaryFrame<T: Real> {
    /// Outer unit normal `ν_ρ`.
    pub normal: Vec<[T; 2]>,
    /// Unit tangent `τ_ρ` (counter-clockwise).
    pub tangent: Vec<[T; 2]>,
    /// `ν_0 · ν_ρ`.
    pub normal_factor: Vec<T>,
    /// `ds/dθ`.
    pub arc_element: Vec<T>,
}

/// Normals, tangents and metric factors of the curve on the grid.
pub fn frame<T: Real>(shape: &BoundaryShape<T>) -> BoundaryFrame<T> {
    let reference = shape.reference();
    let m = reference.n_grid();
    let mut out = BoundaryFrame {
        normal: Vec::with_capacity(m),
        tangent: Vec::with_capacity(m),
        normal_factor: Vec::with_capacity(m),
        arc_element: Vec::with_capacity(m),
    };
    for j in 0..m {
        let r = reference.radius() + shape.grid()[j];
        let dr = shape.grid_derivative()[j];
        let (c, s) = (reference.cos_n(1, j), reference.sin_n(1, j));
        // ν ∝ -ρ' τ_0 + R ν_0, τ ∝ ρ' ν_0 + R τ_0
        let n = [dr * s + r * c, -dr * c + r * s];
        let t = [dr * c - r * s, dr * s + r * c];
        let len = (dr * dr + r * r).sqrt();
        let len_n = (n[0] * n[0] + n[1] * n[1]).sqrt();
        let len_t = (t[0] * t[0] + t[1] * t[1]).sqrt();
        out.normal.push([n[0] / len_n, n[1] / len_n]);
        out.tangent.push([t[0] / len_t, t[1] / len_t]);
        out.normal_factor.push(r / len);
        out.arc_element.push(len);
    }
    out
}

/// Enclosed area of the curve.
pub fn enclosed_area<T: Real>(shape: &BoundaryShape<T>) -> T {
    shape.enclosed_area()
}

/// Plain-text shape record: a line `R_ref N M`, then `n re im` for `n = 0..=N`.
pub fn write_shape<T: Real>(shape: &BoundaryShape<T>) -> String {
    let reference = shape.reference();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:.17e} {} {}",
        to_f64(reference.radius()),
        reference.n_modes(),
        reference.n_grid()
    );
    for n in 0..=reference.n_modes() as i64 {
        let c = shape.coeffs().get(n);
        let _ = writeln!(out, "{} {:.17e} {:.17e}", n, to_f64(c.re), to_f64(c.im));
    }
    out
}

/// Parses the format produced by [`write_shape`]. Blank lines and `#`
/// comments are skipped; missing modes default to zero.
pub fn read_shape<T: Real>(text: &str) -> Result<BoundaryShape<T>> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidConfig("shape record is empty".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 {
        return Err(Error::InvalidConfig(format!(
            "shape header must be `R_ref N M`, got `{header}`"
        )));
    }
    let radius: f64 = parse_field(fields[0], "R_ref")?;
    let n_modes: usize = parse_field(fields[1], "N")?;
    let n_grid: usize = parse_field(fields[2], "M")?;
    let reference = ReferenceCircle::with_grid(lit::<T>(radius), n_modes, n_grid)?;
    let mut coeffs = FourierCoeffs::zeros(n_modes);
    for line in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::InvalidConfig(format!(
                "shape mode line must be `n re im`, got `{line}`"
            )));
        }
        let n: usize = parse_field(f[0], "n")?;
        if n > n_modes {
            return Err(Error::InvalidConfig(format!(
                "mode {n} exceeds N = {n_modes}"
            )));
        }
        let re: f64 = parse_field(f[1], "re")?;
        let im: f64 = parse_field(f[2], "im")?;
        coeffs.set_real_mode(n, cplx(lit(re), lit(im)));
    }
    BoundaryShape::new(reference, &coeffs)
}

fn parse_field<F: std::str::FromStr>(s: &str, key: &str) -> Result<F> {
    s.parse()
        .map_err(|_| Error::InvalidConfig(format!("malformed value `{s}` for `{key}`")))
}
