//! Fourier-space linearization of the co-moving velocity at the translating
//! circle, its spectrum, first-order domain variations, and finite-difference
//! Jacobians used to cross-check all of it.
//!
//! With `ω = Va/(πR0⁴)` the linearization is `DH(0) = A + μB` where
//!
//! ```text
//! (A h)_0 = -12ω ĥ_0,        (A h)_n = -4ω(|n|-1) ĥ_n,   n ≠ 0
//! (B h)_n = -(aR0/8)[(|n|+n-4) ĥ_{n-1} + (|n|-n-4) ĥ_{n+1}],  n ≠ 0
//! ```
//!
//! and `(B h)_0 = 0`.

use std::cmp::Ordering;
use std::io::{self, Write};

use nalgebra::{DMatrix, Schur};

use crate::dynamics::{ContactLineLaw, Frame, Model};
use crate::elliptic::{EllipticSolver, ModelParams};
use crate::error::{Error, Result};
use crate::geometry::{frame, BoundaryShape, FourierCoeffs, ReferenceCircle};
use crate::scalar::{cplx, from_mode, lit, modulus, to_f64, Complex, Real};

/// Which operator a matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorLabel {
    A,
    B,
    DH0,
    DH0Perp,
    /// Finite-difference Jacobian.
    Numerical,
}

/// Dense truncation of a linear operator acting on Fourier modes.
#[derive(Debug, Clone)]
pub struct OperatorMatrix<T: Real> {
    modes: Vec<i64>,
    entries: DMatrix<Complex<T>>,
    pub label: OperatorLabel,
}

impl<T: Real> OperatorMatrix<T> {
    /// Zero operator on modes `-n..=n`.
    pub fn zeros(n: usize, label: OperatorLabel) -> Self {
        Self::zeros_on((-(n as i64)..=n as i64).collect(), label)
    }

    fn zeros_on(modes: Vec<i64>, label: OperatorLabel) -> Self {
        let k = modes.len();
        Self {
            modes,
            entries: DMatrix::from_element(k, k, Complex::new(T::zero(), T::zero())),
            label,
        }
    }

    /// Mode labels of rows and columns.
    pub fn modes(&self) -> &[i64] {
        &self.modes
    }

    pub fn entries(&self) -> &DMatrix<Complex<T>> {
        &self.entries
    }

    pub fn n_modes(&self) -> usize {
        self.modes.iter().map(|m| m.unsigned_abs() as usize).max().unwrap_or(0)
    }

    fn position(&self, n: i64) -> Option<usize> {
        self.modes.iter().position(|m| *m == n)
    }

    /// Entry `(n, m)`; zero if either mode is not represented.
    pub fn get(&self, row: i64, col: i64) -> Complex<T> {
        match (self.position(row), self.position(col)) {
            (Some(i), Some(j)) => self.entries[(i, j)],
            _ => Complex::new(T::zero(), T::zero()),
        }
    }

    /// Sets entry `(n, m)`; ignored if either mode is not represented.
    pub fn set(&mut self, row: i64, col: i64, value: Complex<T>) {
        if let (Some(i), Some(j)) = (self.position(row), self.position(col)) {
            self.entries[(i, j)] = value;
        }
    }

    /// `self + s·other` on the same modes.
    pub fn add_scaled(&self, s: T, other: &Self, label: OperatorLabel) -> Self {
        let mut out = self.clone();
        out.label = label;
        for &n in &self.modes {
            for &m in &self.modes {
                out.set(n, m, self.get(n, m) + other.get(n, m) * s);
            }
        }
        out
    }

    /// Removes the given modes from rows and columns.
    pub fn without_modes(&self, removed: &[i64], label: OperatorLabel) -> Self {
        let kept: Vec<i64> = self.modes.iter().copied().filter(|m| !removed.contains(m)).collect();
        let mut out = Self::zeros_on(kept.clone(), label);
        for &n in &kept {
            for &m in &kept {
                out.set(n, m, self.get(n, m));
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> T {
        self.entries
            .iter()
            .fold(T::zero(), |a, z| a + z.re * z.re + z.im * z.im)
            .sqrt()
    }

    /// Frobenius norm of `self - other` over the union of their modes.
    pub fn frobenius_distance(&self, other: &Self) -> T {
        let mut modes = self.modes.clone();
        modes.extend(other.modes.iter().filter(|m| !self.modes.contains(m)));
        let mut acc = T::zero();
        for &n in &modes {
            for &m in &modes {
                let d = self.get(n, m) - other.get(n, m);
                acc += d.re * d.re + d.im * d.im;
            }
        }
        acc.sqrt()
    }

    /// Largest `|entry(-n,-m) - conj(entry(n,m))|`.
    pub fn reality_defect(&self) -> T {
        let mut worst = T::zero();
        for &n in &self.modes {
            for &m in &self.modes {
                worst = worst.max(modulus(self.get(-n, -m) - self.get(n, m).conj()));
            }
        }
        worst
    }

    /// Applies the operator to a coefficient set (modes outside the matrix
    /// are ignored on input and zero on output).
    pub fn apply(&self, h: &FourierCoeffs<T>) -> FourierCoeffs<T> {
        let mut out = FourierCoeffs::zeros(self.n_modes());
        for &n in &self.modes {
            let mut acc = Complex::new(T::zero(), T::zero());
            for &m in &self.modes {
                acc += self.get(n, m) * h.get(m);
            }
            out.set(n, acc);
        }
        out
    }

    /// Plain-text dump, one `row col re im` line per entry.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        for &n in &self.modes {
            for &m in &self.modes {
                let z = self.get(n, m);
                writeln!(w, "{} {} {:.17e} {:.17e}", n, m, to_f64(z.re), to_f64(z.im))?;
            }
        }
        Ok(())
    }
}

fn check_order(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "operator truncation needs N >= 2, got {n}"
        )));
    }
    Ok(())
}

/// Diagonal part `A` of the linearization.
pub fn assemble_a<T: Real>(n: usize, params: &ModelParams<T>) -> Result<OperatorMatrix<T>> {
    check_order(n)?;
    let omega = params.omega();
    let mut a = OperatorMatrix::zeros(n, OperatorLabel::A);
    a.set(0, 0, cplx(-lit::<T>(12.0) * omega, T::zero()));
    for k in 1..=n as i64 {
        let d = -lit::<T>(4.0) * omega * from_mode::<T>(k - 1);
        a.set(k, k, cplx(d, T::zero()));
        a.set(-k, -k, cplx(d, T::zero()));
    }
    Ok(a)
}

/// Incline coupling `B` (tridiagonal, zero diagonal, zero row 0).
pub fn assemble_b<T: Real>(n: usize, params: &ModelParams<T>) -> Result<OperatorMatrix<T>> {
    check_order(n)?;
    let scale = -params.a * params.r0() / lit(8.0);
    let mut b = OperatorMatrix::zeros(n, OperatorLabel::B);
    for row in -(n as i64)..=n as i64 {
        if row == 0 {
            continue;
        }
        let lower = from_mode::<T>(row.abs() + row - 4);
        let upper = from_mode::<T>(row.abs() - row - 4);
        b.set(row, row - 1, cplx(scale * lower, T::zero()));
        b.set(row, row + 1, cplx(scale * upper, T::zero()));
    }
    Ok(b)
}

/// `DH(0) = A + μB`.
pub fn assemble_dh0<T: Real>(n: usize, params: &ModelParams<T>) -> Result<OperatorMatrix<T>> {
    let a = assemble_a(n, params)?;
    let b = assemble_b(n, params)?;
    Ok(a.add_scaled(params.mu, &b, OperatorLabel::DH0))
}

/// `Π^⊥ DH(0)` on the complement of the kernel modes `±1`.
pub fn assemble_dh0_perp<T: Real>(n: usize, params: &ModelParams<T>) -> Result<OperatorMatrix<T>> {
    Ok(assemble_dh0(n, params)?.without_modes(&[1, -1], OperatorLabel::DH0Perp))
}

/// Eigenvalues of a truncated operator.
#[derive(Debug, Clone)]
pub struct Spectrum<T: Real> {
    /// Sorted by real part, descending (ties by imaginary part, descending).
    pub eigenvalues: Vec<Complex<T>>,
    /// Number of eigenvalues with `|λ| <= kernel_tol`.
    pub kernel_count: usize,
    pub kernel_tol: T,
}

impl<T: Real> Spectrum<T> {
    /// Eigenvalues outside the kernel ball.
    pub fn nonzero(&self) -> impl Iterator<Item = &Complex<T>> {
        self.eigenvalues
            .iter()
            .filter(move |z| modulus(**z) > self.kernel_tol)
    }

    /// Largest real part among nonzero eigenvalues.
    pub fn leading_nonzero_real(&self) -> Option<T> {
        self.nonzero().map(|z| z.re).reduce(|a, b| a.max(b))
    }

    /// Distance of the nonzero spectrum from the imaginary axis.
    pub fn gap(&self) -> Option<T> {
        self.leading_nonzero_real().map(|r| -r)
    }

    /// `re,im` CSV sorted by real part.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "re,im")?;
        for z in &self.eigenvalues {
            writeln!(w, "{:.17e},{:.17e}", to_f64(z.re), to_f64(z.im))?;
        }
        Ok(())
    }
}

/// Default threshold separating exact kernel eigenvalues from round-off.
pub const KERNEL_TOL: f64 = 1e-10;

/// Dense eigenvalues via Hessenberg reduction and shifted QR (complex Schur form).
pub fn spectrum<T: Real>(matrix: &OperatorMatrix<T>) -> Result<Spectrum<T>> {
    spectrum_with_tol(matrix, lit(KERNEL_TOL))
}

pub fn spectrum_with_tol<T: Real>(matrix: &OperatorMatrix<T>, kernel_tol: T) -> Result<Spectrum<T>> {
    let schur = Schur::try_new(matrix.entries.clone(), T::EPS, 10_000).ok_or(Error::NoConvergence)?;
    let (_, t) = schur.unpack();
    let mut eigenvalues: Vec<Complex<T>> = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    eigenvalues.sort_by(|x, y| {
        y.re.partial_cmp(&x.re)
            .unwrap_or(Ordering::Equal)
            .then(y.im.partial_cmp(&x.im).unwrap_or(Ordering::Equal))
    });
    let kernel_count = eigenvalues.iter().filter(|z| modulus(**z) <= kernel_tol).count();
    Ok(Spectrum {
        eigenvalues,
        kernel_count,
        kernel_tol,
    })
}

/// Central-difference Jacobian of the velocity at `base`, expressed in the
/// complex mode basis of the base shape's truncation.
///
/// Columns are formed from the real directions `1`, `cos mθ`, `sin mθ` and
/// combined as `D(e^{±imθ}) = D(cos mθ) ± i D(sin mθ)`.
pub fn fd_jacobian<T: Real>(
    model: &Model<T>,
    base: &BoundaryShape<T>,
    frame_kind: Frame,
    eps: T,
) -> Result<OperatorMatrix<T>> {
    let reference = base.reference();
    let n = reference.n_modes();
    let derivative = |direction: &FourierCoeffs<T>| -> Result<FourierCoeffs<T>> {
        let plus = base.with_coeffs(&base.coeffs().axpy(eps, direction))?;
        let minus = base.with_coeffs(&base.coeffs().axpy(-eps, direction))?;
        let vp = model.velocity(&plus, frame_kind)?.values;
        let vm = model.velocity(&minus, frame_kind)?.values;
        let diff: Vec<T> = vp
            .iter()
            .zip(&vm)
            .map(|(p, m)| (*p - *m) / (eps + eps))
            .collect();
        Ok(reference.analyze(&diff))
    };
    let mut jac = OperatorMatrix::zeros(n, OperatorLabel::Numerical);
    let mut dir = FourierCoeffs::zeros(n);
    dir.set(0, cplx(T::one(), T::zero()));
    let d0 = derivative(&dir)?;
    for row in -(n as i64)..=n as i64 {
        jac.set(row, 0, d0.get(row));
    }
    let half: T = lit(0.5);
    for m in 1..=n {
        let mut cos_dir = FourierCoeffs::zeros(n);
        cos_dir.set_real_mode(m, cplx(half, T::zero()));
        let mut sin_dir = FourierCoeffs::zeros(n);
        sin_dir.set_real_mode(m, cplx(T::zero(), -half));
        let dc = derivative(&cos_dir)?;
        let ds = derivative(&sin_dir)?;
        let i = cplx(T::zero(), T::one());
        for row in -(n as i64)..=n as i64 {
            jac.set(row, m as i64, dc.get(row) + i * ds.get(row));
            jac.set(row, -(m as i64), dc.get(row) - i * ds.get(row));
        }
    }
    Ok(jac)
}

/// Finite-difference Jacobian of the co-moving velocity at the translating circle.
pub fn fd_jacobian_h<T: Real>(params: &ModelParams<T>, n: usize, eps: T) -> Result<OperatorMatrix<T>> {
    if !(eps >= lit(1e-6) && eps <= lit(1e-3)) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step {} outside [1e-6, 1e-3]",
            to_f64(eps)
        )));
    }
    let reference = ReferenceCircle::new(params.r0(), n)?;
    let base = BoundaryShape::circle(reference);
    fd_jacobian(&Model::new(*params), &base, Frame::Comoving, eps)
}

/// First variation of `∫u^{(1)}` on the disk of radius `r0` in direction `h`:
/// `(πR0³/2) ĥ_0`.
pub fn variation_volume_unit<T: Real>(h: &FourierCoeffs<T>, r0: T) -> T {
    T::pi() * r0.powi(3) / lit(2.0) * h.get(0).re
}

/// First variation of `∫u^{(x¹)}`: `(πR0⁴/8)(ĥ_{-1} + ĥ_1)`.
pub fn variation_volume_x1<T: Real>(h: &FourierCoeffs<T>, r0: T) -> T {
    T::pi() * r0.powi(4) / lit(8.0) * (h.get(-1) + h.get(1)).re
}

/// First variation of the multiplier:
/// `-(32V/(πR0⁵)) ĥ_0 - μ(ĥ_{-1} + ĥ_1)`.
pub fn variation_lambda<T: Real>(h: &FourierCoeffs<T>, params: &ModelParams<T>) -> T {
    let r0 = params.r0();
    -lit::<T>(32.0) * params.volume / (T::pi() * r0.powi(5)) * h.get(0).re
        - params.mu * (h.get(-1) + h.get(1)).re
}

/// Coefficient `a_0 = F'(-∂_ν u)(-∂_r u)/(e_r·ν)` of the principal symbol
/// `a_0|ξ|` on the grid. Positive everywhere means the evolution is parabolic.
pub fn principal_symbol_coefficient<T: Real>(
    shape: &BoundaryShape<T>,
    params: &ModelParams<T>,
    law: &ContactLineLaw<T>,
) -> Result<Vec<T>> {
    let field = EllipticSolver::default().solve_full(shape, params)?;
    let geo = frame(shape);
    let reference = shape.reference();
    Ok((0..reference.n_grid())
        .map(|j| {
            let r = reference.radius() + shape.grid()[j];
            let (ur, _) = field.polar_gradient(r, reference.theta(j));
            let q = -field.boundary_normal_derivative[j];
            law.derivative(q) * (-ur) / geo.normal_factor[j]
        })
        .collect())
}

/// Incline `μ*` at which `min_Γ(-∂_ν u)` changes sign, by bisection on
/// `bracket = (lo, hi)` to `|Δμ| <= tol`.
pub fn critical_incline<T: Real>(
    shape: &BoundaryShape<T>,
    params: &ModelParams<T>,
    bracket: (T, T),
    tol: T,
) -> Result<T> {
    let comps = EllipticSolver::default().solve_components(shape)?;
    let f = |mu: T| comps.min_contact_slope_at(params, mu);
    let (mut lo, mut hi) = bracket;
    let (f_lo, f_hi) = (f(lo)?, f(hi)?);
    if !(f_lo > T::zero() && f_hi < T::zero()) {
        return Err(Error::BracketInvalid {
            lo: to_f64(lo),
            hi: to_f64(hi),
            f_lo: to_f64(f_lo),
            f_hi: to_f64(f_hi),
        });
    }
    while hi - lo > tol {
        let mid = (lo + hi) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * lit(0.5))
}

/// Smallest `μ` in `bracket` at which a nonzero eigenvalue of `DH(0)` has
/// real part above `-ω/2`, by bisection; `None` if none does at `bracket.1`.
pub fn spectral_threshold_mu<T: Real>(
    params: &ModelParams<T>,
    n: usize,
    bracket: (T, T),
    tol: T,
) -> Result<Option<T>> {
    let threshold = -params.omega() * lit(0.5);
    let crosses = |mu: T| -> Result<bool> {
        let s = spectrum(&assemble_dh0(n, &params.with_mu(mu))?)?;
        Ok(s.leading_nonzero_real().is_some_and(|r| r > threshold))
    };
    let (mut lo, mut hi) = bracket;
    if crosses(lo)? {
        return Ok(Some(lo));
    }
    if !crosses(hi)? {
        return Ok(None);
    }
    while hi - lo > tol {
        let mid = (lo + hi) * lit(0.5);
        if crosses(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}
