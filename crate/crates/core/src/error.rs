use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("root finder did not converge after {iterations} iterations ({unconverged} roots still moving)")]
    NotConverged { iterations: usize, unconverged: usize },

    #[error("root at |z| = {modulus} lies within {gap:e} of the disk boundary r = {radius}; enlarge the disk")]
    RootNearBoundary { radius: f64, modulus: f64, gap: f64 },

    #[error("a zero lies within {distance:e} of the contour |z| = {radius}")]
    ZeroNearContour { radius: f64, distance: f64 },

    #[error("winding value {value} is not within 0.01 of an integer")]
    WindingNotInteger { value: f64 },

    #[error("|psi| = {modulus:e} at z = ({re}, {im}) is below the underflow floor")]
    AtZero { re: f64, im: f64, modulus: f64 },

    #[error("valid region is empty after eroding by the kernel radius")]
    EmptyValidRegion,

    #[error("neighborhood of radius {radius} reaches the window boundary")]
    NeighborhoodClipped { radius: f64 },

    #[error("partition of unity: unnormalized bump sum drops to {min_sum} (covering defect)")]
    CoveringDefect { min_sum: f64 },

    #[error("Hall condition fails on this trial: {0}")]
    HallViolated(String),

    #[error("imperfect matching: {unmatched_lattice} interior lattice points and {unmatched_zeros} interior zeros unmatched (first at {first:?})")]
    ImperfectMatching {
        unmatched_lattice: usize,
        unmatched_zeros: usize,
        first: Option<(f64, f64)>,
    },

    #[error("window too small: needs half-width {needed}, has {available}")]
    InsufficientWindow { needed: f64, available: f64 },

    #[error("degenerate samples: {0}")]
    Degenerate(String),

    #[error("slope confidence half-width {half_width:.3} exceeds 0.3; increase trials")]
    SlopeCiTooWide { half_width: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
