//! Splitting a convex-ordered pair at the zeros of `D = P_nu - P_mu`.

use serde::Serialize;
use thiserror::Error;

use crate::measures::{check_convex_order, ConvexOrder, DiscreteMeasure, OrderViolation};

/// `|D|` below this at a breakpoint counts as a zero.
pub const ZERO_TOL: f64 = 1e-11;

/// Tolerance on per-component mass and mean balance.
pub const BALANCE_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecomposeError {
    #[error("pair is not in convex order: {0:?}")]
    NotOrdered(OrderViolation),
    #[error("component ({lo}, {hi}) does not balance: {what} differs by {gap}")]
    Unbalanced { lo: f64, hi: f64, what: &'static str, gap: f64 },
    #[error("negative allocation {lambda} of the target atom at {x}")]
    NegativeAllocation { x: f64, lambda: f64 },
}

/// Pair restricted to one maximal interval where `D > 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IrreducibleComponent {
    /// Open interval `(lo, hi)`; both ends are zeros of `D`.
    pub lo: f64,
    pub hi: f64,
    #[serde(skip)]
    pub mu_part: DiscreteMeasure,
    #[serde(skip)]
    pub nu_part: DiscreteMeasure,
    /// Target mass of the endpoint atoms assigned to this component.
    pub nu_at_lo: f64,
    pub nu_at_hi: f64,
    pub mass: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decomposition {
    pub components: Vec<IrreducibleComponent>,
    /// Source atoms sitting at zeros of `D`; they are transported to themselves.
    pub static_part: DiscreteMeasure,
}

impl Decomposition {
    pub fn zeros(&self) -> Vec<f64> {
        let mut z: Vec<f64> = self.components.iter().flat_map(|c| [c.lo, c.hi]).collect();
        z.extend(self.static_part.atoms().iter().map(|a| a.x));
        z.sort_by(f64::total_cmp);
        z.dedup();
        z
    }
}

pub fn decompose(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<Decomposition, DecomposeError> {
    if let ConvexOrder::Fails(v) = check_convex_order(mu, nu, 1e-10) {
        return Err(DecomposeError::NotOrdered(v));
    }
    let d = nu.put_potential().sub(&mu.put_potential());
    let mut pts: Vec<f64> = mu.atoms().iter().chain(nu.atoms()).map(|a| a.x).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let zero: Vec<bool> = pts.iter().map(|&k| d.evaluate(k).abs() < ZERO_TOL).collect();

    let mut static_pairs = Vec::new();
    for (&k, &z) in pts.iter().zip(&zero) {
        if z {
            let w = mu.weight_at(k);
            if w > 0.0 {
                static_pairs.push((k, w));
            }
        }
    }

    let split = |z: f64| -> Result<(f64, f64), DecomposeError> {
        let left = mu.cdf_left(z) - nu.cdf_left(z);
        let right = nu.weight_at(z) - mu.weight_at(z) - left;
        for lambda in [left, right] {
            if lambda < -BALANCE_TOL {
                return Err(DecomposeError::NegativeAllocation { x: z, lambda });
            }
        }
        Ok((left.max(0.0), right.max(0.0)))
    };

    let mut components = Vec::new();
    let zero_idx: Vec<usize> = (0..pts.len()).filter(|&i| zero[i]).collect();
    for w in zero_idx.windows(2) {
        let (i, j) = (w[0], w[1]);
        if j == i + 1 {
            // D vanishes on the whole gap: nothing moves there
            continue;
        }
        let (lo, hi) = (pts[i], pts[j]);
        let (_, at_lo) = split(lo)?;
        let (at_hi, _) = split(hi)?;
        let mu_part = mu.restrict(lo, hi, false, false);
        let mut nu_part = nu.restrict(lo, hi, false, false);
        nu_part = nu_part.add(&DiscreteMeasure::new([(lo, at_lo), (hi, at_hi)]).expect("finite"));
        let gap = mu_part.mass() - nu_part.mass();
        if gap.abs() > BALANCE_TOL {
            return Err(DecomposeError::Unbalanced { lo, hi, what: "mass", gap });
        }
        let gap = mu_part.first_moment() - nu_part.first_moment();
        if gap.abs() > BALANCE_TOL * (1.0 + lo.abs().max(hi.abs())) {
            return Err(DecomposeError::Unbalanced { lo, hi, what: "mean", gap });
        }
        components.push(IrreducibleComponent {
            lo,
            hi,
            mass: mu_part.mass(),
            mean: mu_part.first_moment(),
            mu_part,
            nu_part,
            nu_at_lo: at_lo,
            nu_at_hi: at_hi,
        });
    }
    Ok(Decomposition {
        components,
        static_part: DiscreteMeasure::new(static_pairs).expect("finite"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{random_cx_pair, tv_distance};

    fn m(pairs: &[(f64, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn single_component() {
        let dec = decompose(&DiscreteMeasure::dirac(0.0), &m(&[(-1.0, 0.5), (1.0, 0.5)])).unwrap();
        assert_eq!(dec.components.len(), 1);
        assert_eq!((dec.components[0].lo, dec.components[0].hi), (-1.0, 1.0));
        assert!(dec.static_part.is_empty());
    }

    #[test]
    fn split_at_interior_zero() {
        let mu = m(&[(-1.0, 0.5), (1.0, 0.5)]);
        let nu = m(&[(-2.0, 0.25), (0.0, 0.5), (2.0, 0.25)]);
        let dec = decompose(&mu, &nu).unwrap();
        assert_eq!(dec.components.len(), 2);
        let (l, r) = (&dec.components[0], &dec.components[1]);
        assert_eq!((l.lo, l.hi, r.lo, r.hi), (-2.0, 0.0, 0.0, 2.0));
        assert_eq!(l.mu_part, m(&[(-1.0, 0.5)]));
        assert_eq!(l.nu_part, m(&[(-2.0, 0.25), (0.0, 0.25)]));
        assert_eq!(r.mu_part, m(&[(1.0, 0.5)]));
        assert_eq!(r.nu_part, m(&[(0.0, 0.25), (2.0, 0.25)]));
    }

    #[test]
    fn equal_laws_are_static() {
        let nu = m(&[(-1.0, 0.25), (0.5, 0.75)]);
        let dec = decompose(&nu, &nu).unwrap();
        assert!(dec.components.is_empty());
        assert_eq!(dec.static_part, nu);
    }

    #[test]
    fn source_atom_at_zero_stays() {
        // D(0) = 0 with a source atom there; the target keeps extra mass at 0
        let mu = m(&[(-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)]);
        let nu = m(&[(-2.0, 0.125), (0.0, 0.75), (2.0, 0.125)]);
        let dec = decompose(&mu, &nu).unwrap();
        assert_eq!(dec.static_part, m(&[(0.0, 0.5)]));
        assert_eq!(dec.components.len(), 2);
        assert_eq!(dec.components[0].nu_at_hi, 0.125);
        assert_eq!(dec.components[1].nu_at_lo, 0.125);
    }

    #[test]
    fn reassembly_recovers_marginals() {
        for seed in 0..300 {
            let (mu, nu) = random_cx_pair(seed, 1 + seed as usize % 8, seed as usize % 12);
            let dec = decompose(&mu, &nu).unwrap();
            let mut mu_back = dec.static_part.clone();
            let mut nu_back = dec.static_part.clone();
            for c in &dec.components {
                mu_back = mu_back.add(&c.mu_part);
                nu_back = nu_back.add(&c.nu_part);
                let dc = c.nu_part.put_potential().sub(&c.mu_part.put_potential());
                for a in c.mu_part.atoms() {
                    assert!(dc.evaluate(a.x) > 0.0);
                }
            }
            assert!(tv_distance(&mu_back, &mu) < 1e-12, "seed {seed}");
            assert!(tv_distance(&nu_back, &nu) < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn rejects_unordered() {
        let r = decompose(&m(&[(-1.0, 0.5), (1.0, 0.5)]), &DiscreteMeasure::dirac(0.0));
        assert!(matches!(r, Err(DecomposeError::NotOrdered(_))));
    }
}
