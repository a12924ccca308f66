//! Left-curtain martingale couplings between atomic measures in convex order.
//!
//! The coupling is built geometrically: for each quantile level `u` the hull of
//! `E_u = P_nu - P_{mu_u}` fixes where the mass at `G(u)` goes, either down to
//! `R(u)` or up to `S(u)`. [`curtain::build_curtain`] computes these functions
//! exactly as a piecewise-constant table in `u`; [`oracle`] provides independent
//! brute-force references and [`verify`] the checks used to compare them.

pub mod cli;
pub mod curtain;
pub mod decompose;
pub mod measures;
pub mod oracle;
pub mod pwl;
pub mod shadow;
pub mod verify;

pub use curtain::{build_curtain, coupling, point_construction, CurtainTable, LiftedCoupling};
pub use measures::{DiscreteMeasure, JointMeasure};
pub use pwl::PiecewiseLinear;
