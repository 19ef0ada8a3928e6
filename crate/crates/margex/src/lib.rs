//! Pricing library for European and American exchange options on two
//! assets whose joint dynamics are a correlated diffusion with common
//! jumps. A change of numeraire reduces the problem to a single ratio
//! process; European values come from a Fourier inversion of its
//! characteristic function, American values from a quadratic
//! approximation of the early-exercise premium, and a Monte Carlo layer
//! provides simulation-based checks and the premium decomposition.

pub mod american;
pub mod charfn;
pub mod mc;
pub mod model;
pub mod quad;

pub use american::{
    american_price, build_boundary_curve, premium_decomposition, solve_alpha, solve_boundary_at,
    terminal_boundary, AmericanError, AmericanQuote, ApproxSolution, ApproxSurface,
    ExerciseBoundary, PremiumBreakdown,
};
pub use charfn::{
    char_fn, european_call_ratio, european_delta_r, european_price_physical, european_put_ratio,
    gil_pelaez, EuropeanQuote, PriceError, QuadratureSpec,
};
pub use mc::{lsmc_american, mc_european, simulate_ratio_paths, EuropeanMc, MCConfig, McError, PathBatch};
pub use model::{reduce, JumpAtom, JumpSpec, ModelError, ReducedModel, TwoAssetModel};
