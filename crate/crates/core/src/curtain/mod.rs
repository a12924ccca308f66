//! Curtain functions `R, Q, S, phi`, their piecewise-constant table, and the
//! lifted left-curtain coupling.

mod coupling;
mod table;

pub use coupling::{coupling, sample_y, td_tu, CouplingInterval, LiftedCoupling, MapPoint, TransportMaps};
pub use table::{assemble_components, build_curtain, build_curtain_with, CurtainConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measures::{check_convex_order, ConvexOrder, DiscreteMeasure, OrderViolation};
use crate::pwl::{contact_points, PiecewiseLinear, PwlError, CONTACT_TOL};

/// Kernels with `S - R` below this are treated as `δ_G`.
pub const DEGENERATE_WIDTH: f64 = 1e-13;

/// Tolerance used when validating the order of the inputs.
pub const ORDER_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurtainError {
    #[error("pair is not in convex order: {0:?}")]
    NotOrdered(OrderViolation),
    #[error("quantile level {u} outside (0, {mass}]")]
    LevelOutOfRange { u: f64, mass: f64 },
    #[error("source measure is empty")]
    Empty,
    #[error("geometry failure: {0}")]
    InternalGeometry(String),
    #[error("table exceeds {0} intervals")]
    BreakpointOverflow(usize),
    #[error(transparent)]
    Pwl(#[from] PwlError),
}

pub(crate) fn require_order(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(), CurtainError> {
    if mu.is_empty() {
        return Err(CurtainError::Empty);
    }
    match check_convex_order(mu, nu, ORDER_TOL) {
        ConvexOrder::Fails(v) => Err(CurtainError::NotOrdered(v)),
        _ => Ok(()),
    }
}

/// `E_u = P_nu - P_{mu_u}` together with its lower convex envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcessPotential {
    pub u: f64,
    pub g: f64,
    pub excess: PiecewiseLinear,
    pub hull: PiecewiseLinear,
}

pub fn excess_potential(mu: &DiscreteMeasure, nu: &DiscreteMeasure, u: f64) -> Result<ExcessPotential, CurtainError> {
    require_order(mu, nu)?;
    excess_unchecked(mu, nu, u)
}

fn excess_unchecked(mu: &DiscreteMeasure, nu: &DiscreteMeasure, u: f64) -> Result<ExcessPotential, CurtainError> {
    let mass = mu.mass();
    if !(u > 0.0 && u <= mass) {
        return Err(CurtainError::LevelOutOfRange { u, mass });
    }
    let excess = nu.put_potential().sub(&mu.restricted_unchecked(u).put_potential());
    let hull = excess.convex_hull()?;
    Ok(ExcessPotential { u, g: mu.quantile_unchecked(u), excess, hull })
}

/// Values of the curtain functions at one quantile level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurtainPoint {
    pub u: f64,
    pub r: f64,
    pub q: f64,
    pub g: f64,
    pub s: f64,
    pub phi: f64,
}

/// Direct evaluation of `(R, Q, G, S, phi)` at level `u` from the hull of `E_u`.
pub fn point_construction(mu: &DiscreteMeasure, nu: &DiscreteMeasure, u: f64) -> Result<CurtainPoint, CurtainError> {
    require_order(mu, nu)?;
    let ep = excess_unchecked(mu, nu, u)?;
    let g = ep.g;
    let (q, s) = contact_points(&ep.excess, &ep.hull, g);
    if !q.is_finite() || !s.is_finite() {
        return Err(CurtainError::InternalGeometry(format!("no contact around G = {g} at u = {u}")));
    }
    let phi = ep.hull.one_sided_slopes(s).0;
    let d = nu.put_potential().sub(&mu.put_potential());
    let r = lowest_contact(&d, g, ep.hull.evaluate(g), phi)
        .ok_or_else(|| CurtainError::InternalGeometry(format!("ray misses D left of {g} at u = {u}")))?;
    Ok(CurtainPoint { u, r, q, g, s, phi })
}

/// Leftmost `k <= g` where `D` meets the line through `(g, level)` with slope `phi`.
///
/// When the ray runs along the whole left tail of `D`, the answer is `g` if
/// `g` itself is a zero of `D` and the tail's right end otherwise.
fn lowest_contact(d: &PiecewiseLinear, g: f64, level: f64, phi: f64) -> Option<f64> {
    let ray = |k: f64| level + phi * (k - g);
    let hit = |k: f64| d.evaluate(k) - ray(k) <= CONTACT_TOL * (1.0 + (g - k).abs());
    let first = d.breakpoints()[0].0;
    if first < g && hit(first) && (d.slope_left() - phi).abs() <= crate::pwl::EPS_GEOM {
        return Some(if d.evaluate(g).abs() <= CONTACT_TOL { g } else { first });
    }
    d.breakpoints()
        .iter()
        .map(|p| p.0)
        .filter(|&k| k < g)
        .chain(std::iter::once(g))
        .find(|&k| hit(k))
}

/// Constant curtain values over `(u_lo, u_hi]`; `phi` is affine with slope `dphi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurtainInterval {
    pub u_lo: f64,
    pub u_hi: f64,
    pub g: f64,
    pub r: f64,
    pub q: f64,
    pub s: f64,
    /// `phi(u_lo+)`.
    pub phi: f64,
    pub dphi: f64,
}

impl CurtainInterval {
    pub fn phi_at(&self, u: f64) -> f64 {
        self.phi + self.dphi * (u - self.u_lo)
    }

    pub fn phi_end(&self) -> f64 {
        self.phi_at(self.u_hi)
    }

    /// Mass stays at `G` on this interval.
    pub fn is_stationary(&self) -> bool {
        self.s - self.g <= DEGENERATE_WIDTH
    }

    pub fn width(&self) -> f64 {
        self.u_hi - self.u_lo
    }

    pub fn point(&self, u: f64) -> CurtainPoint {
        CurtainPoint { u, r: self.r, q: self.q, g: self.g, s: self.s, phi: self.phi_at(u) }
    }
}

/// Piecewise-constant description of the curtain functions on `(0, mass]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurtainTable {
    pub intervals: Vec<CurtainInterval>,
    pub mass: f64,
}

impl CurtainTable {
    /// Interval containing `u`, with `(u_lo, u_hi]` conventions.
    pub fn locate(&self, u: f64) -> Option<&CurtainInterval> {
        if !(u > 0.0 && u <= self.mass) {
            return None;
        }
        let i = self.intervals.partition_point(|iv| iv.u_hi < u);
        self.intervals.get(i.min(self.intervals.len().saturating_sub(1)))
    }

    pub fn eval(&self, u: f64) -> Option<CurtainPoint> {
        self.locate(u).map(|iv| iv.point(u))
    }

    /// `phi(u+)`; at `u = 0` this is the initial slope.
    pub fn phi_right(&self, u: f64) -> f64 {
        let i = self.intervals.partition_point(|iv| iv.u_hi <= u);
        match self.intervals.get(i) {
            Some(iv) => iv.phi_at(u.max(iv.u_lo)),
            None => 0.0,
        }
    }

    /// Left-continuous `phi(u)`; `phi(0)` is taken as `phi(0+)`.
    pub fn phi_left(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return self.phi_right(0.0);
        }
        match self.locate(u) {
            Some(iv) => iv.phi_at(u),
            None => 0.0,
        }
    }

    /// Right-continuous inverse `sup{u : S(u) <= y}`, with `sup ∅ = 0`.
    pub fn s_inverse(&self, y: f64) -> f64 {
        self.intervals
            .iter()
            .rev()
            .find(|iv| iv.s <= y)
            .map(|iv| iv.u_hi)
            .unwrap_or(0.0)
    }

    /// `P[Y <= y]` computed from the kernels.
    pub fn law_cdf(&self, y: f64) -> f64 {
        self.intervals
            .iter()
            .map(|iv| {
                let mass_below: f64 = coupling::kernel(iv).iter().filter(|p| p.0 <= y).map(|p| p.1).sum();
                iv.width() * mass_below
            })
            .sum()
    }
}
