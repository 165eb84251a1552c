//! Comparison methods: log-barrier multistart (`unc`, `d-lb`, `s-lb`), direct
//! grid minimization (`dm`), regularized multilateration (`n/t/f-mult`) and
//! pairwise-independent delay estimation (`pi`).

mod barrier;
mod grids;
mod mult;
mod pairwise;

pub use barrier::{
    delta_gradient, delta_hessian, solve_logbarrier, solve_multistart, LbConfig, LbOutcome,
};
pub use grids::{make_grid, solve_dm, GridConfig, GridKind, InitGrid};
pub use mult::{
    default_lambda, fibonacci_sphere, mult_cost, mult_gradient, mult_hessian, multilaterate,
    solve_mult, MultConfig,
};
pub use pairwise::estimate_pairwise_delays;

#[cfg(test)]
mod tests;
