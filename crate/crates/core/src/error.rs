use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("star-shape violation: R_ref + rho = {min_radius:.3e} <= 0 at theta = {theta:.4}")]
    StarShapeViolation { min_radius: f64, theta: f64 },
    #[error("tubular violation: max|rho| = {max_abs:.3e} >= {bound:.3e}")]
    TubularViolation { max_abs: f64, bound: f64 },
    #[error("collocation system ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error("degenerate volume: integral of u^(1) = {0:.3e}")]
    DegenerateVolume(f64),
    #[error("co-moving velocity requires the affine contact-line law")]
    NonAffineLaw,
    #[error("eigenvalue iteration did not converge")]
    NoConvergence,
    #[error("bracket [{lo}, {hi}] does not enclose a sign change (values {f_lo:.3e}, {f_hi:.3e})")]
    BracketInvalid { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("recentering diverged (residual {residual:.3e} after {iterations} iterations)")]
    RecenterDiverged { residual: f64, iterations: usize },
    #[error("translation matrix M is singular (condition {condition:.3e})")]
    SingularM { condition: f64 },
    #[error("translation velocity has imaginary residual {0:.3e}")]
    NonRealVelocity(f64),
    #[error("contact-line law derivative not positive (F'({slope:.3e}) = {derivative:.3e})")]
    NonMonotoneLaw { slope: f64, derivative: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable snake_case identifier of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidConfig(_) => "invalid_config",
            Self::StarShapeViolation { .. } => "star_shape_violation",
            Self::TubularViolation { .. } => "tubular_violation",
            Self::IllConditioned { .. } => "ill_conditioned",
            Self::DegenerateVolume(_) => "degenerate_volume",
            Self::NonAffineLaw => "non_affine_law",
            Self::NoConvergence => "no_convergence",
            Self::BracketInvalid { .. } => "bracket_invalid",
            Self::RecenterDiverged { .. } => "recenter_diverged",
            Self::SingularM { .. } => "singular_m",
            Self::NonRealVelocity(_) => "non_real_velocity",
            Self::NonMonotoneLaw { .. } => "non_monotone_law",
        }
    }
}
