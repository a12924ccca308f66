//! Shadow of one measure in another through the put-potential formula.

use thiserror::Error;

use crate::measures::{check_convex_order, ConvexOrder, DiscreteMeasure, POSITION_TOL};
use crate::pwl::{PiecewiseLinear, PwlError};

/// Slack allowed when checking that the shadow sits below the target.
pub const DOMINATION_SLACK: f64 = 1e-10;

/// Tolerance for the post-hoc mass, mean and convex-order checks.
pub const SHADOW_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShadowError {
    #[error("source mass {mu} exceeds target mass {nu}")]
    MassExceeds { mu: f64, nu: f64 },
    #[error("shadow invalid: {0}")]
    ShadowInvalid(String),
    #[error(transparent)]
    Geometry(#[from] PwlError),
}

/// `P_nu - (P_nu - P_mu)^c`.
pub fn shadow_potential(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<PiecewiseLinear, ShadowError> {
    let (mm, nm) = (mu.mass(), nu.mass());
    if mm > nm + DOMINATION_SLACK {
        return Err(ShadowError::MassExceeds { mu: mm, nu: nm });
    }
    let pn = nu.put_potential();
    let d = pn.sub(&mu.put_potential());
    Ok(pn.sub(&d.convex_hull()?))
}

/// The shadow `S^nu(mu)`, validated against its defining properties.
pub fn shadow(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<DiscreteMeasure, ShadowError> {
    let p = shadow_potential(mu, nu)?;
    let s = p
        .measure_from_potential()
        .map_err(|e| ShadowError::ShadowInvalid(format!("potential is not a measure: {e}")))?;
    validate(mu, nu, &s)?;
    Ok(s)
}

fn validate(mu: &DiscreteMeasure, nu: &DiscreteMeasure, s: &DiscreteMeasure) -> Result<(), ShadowError> {
    for a in s.atoms() {
        let cap: f64 = nu
            .atoms()
            .iter()
            .filter(|b| (b.x - a.x).abs() <= POSITION_TOL)
            .map(|b| b.w)
            .sum();
        if a.w > cap + DOMINATION_SLACK {
            return Err(ShadowError::ShadowInvalid(format!(
                "weight {} at {} exceeds target weight {}",
                a.w, a.x, cap
            )));
        }
    }
    match check_convex_order(mu, s, SHADOW_TOL) {
        ConvexOrder::Fails(v) => Err(ShadowError::ShadowInvalid(format!("source not dominated: {v:?}"))),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{random_cx_pair, tv_distance};

    fn m(pairs: &[(f64, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn shadow_of_full_law_is_target() {
        let nu = m(&[(-1.0, 0.25), (0.0, 0.5), (2.0, 0.25)]);
        assert!(tv_distance(&shadow(&nu, &nu).unwrap(), &nu) < 1e-15);
    }

    #[test]
    fn two_point_shadow() {
        let s = shadow(&m(&[(0.0, 0.5)]), &m(&[(-1.0, 0.5), (1.0, 0.5)])).unwrap();
        assert!(tv_distance(&s, &m(&[(-1.0, 0.25), (1.0, 0.25)])) < 1e-15);
    }

    #[test]
    fn three_point_shadow() {
        let t = 1.0 / 3.0;
        let s = shadow(&m(&[(0.0, 0.5)]), &m(&[(-1.0, t), (0.0, t), (1.0, t)])).unwrap();
        let want = m(&[(-1.0, 1.0 / 12.0), (0.0, t), (1.0, 1.0 / 12.0)]);
        assert!(tv_distance(&s, &want) < 1e-15);
    }

    #[test]
    fn rejects_excess_mass() {
        let err = shadow(&m(&[(0.0, 1.0)]), &m(&[(0.0, 0.5)]));
        assert!(matches!(err, Err(ShadowError::MassExceeds { .. })));
    }

    #[test]
    fn rejects_source_outside_target_hull() {
        // no measure on {0} dominates a mass at 5 in convex order
        let err = shadow(&m(&[(5.0, 0.5)]), &m(&[(0.0, 1.0)]));
        assert!(matches!(err, Err(ShadowError::ShadowInvalid(_))), "{err:?}");
    }

    #[test]
    fn shadows_increase_with_level() {
        for seed in 0..60 {
            let (mu, nu) = random_cx_pair(seed, 5, 8);
            let mut prev = DiscreteMeasure::empty();
            for i in 1..=20 {
                let u = i as f64 / 20.0;
                let s = shadow(&mu.restricted_unchecked(u), &nu).unwrap();
                assert!((s.mass() - u).abs() < 1e-12);
                assert!((s.first_moment() - mu.restricted_unchecked(u).first_moment()).abs() < 1e-12);
                assert!(prev.dominated_by(&s, 1e-12), "seed {seed} u {u}");
                prev = s;
            }
            assert!(tv_distance(&prev, &nu) < 1e-12);
        }
    }
}
