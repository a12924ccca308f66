//! Brute-force references: shadows by linear programming and the left-curtain
//! coupling assembled from increments of shadows.

pub mod simplex;

use thiserror::Error;

use crate::measures::{DiscreteMeasure, JointMeasure};
use simplex::{Cmp, LinearProgram, LpError};

/// Most negative increment accepted before reporting a bad kernel.
pub const NEGATIVE_KERNEL_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("no feasible shadow: {0}")]
    Infeasible(LpError),
    #[error("kernel of source atom {x} has weight {w} at {y}")]
    NegativeKernel { x: f64, y: f64, w: f64 },
}

/// Shadow of `mu` in `nu` as the measure on `supp nu` with minimal summed
/// put-potential among those dominating `mu` in convex order.
pub fn shadow_lp(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<DiscreteMeasure, OracleError> {
    let ys: Vec<f64> = nu.atoms().iter().map(|a| a.x).collect();
    let n = ys.len();
    let pmu = mu.put_potential();
    let mut rows = Vec::new();
    for (j, a) in nu.atoms().iter().enumerate() {
        let mut row = vec![0.0; n];
        row[j] = 1.0;
        rows.push((row, Cmp::Le, a.w));
    }
    rows.push((vec![1.0; n], Cmp::Eq, mu.mass()));
    rows.push((ys.clone(), Cmp::Eq, mu.first_moment()));
    let mut ks: Vec<f64> = mu.atoms().iter().chain(nu.atoms()).map(|a| a.x).collect();
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    for &k in &ks {
        let row = ys.iter().map(|&y| (k - y).max(0.0)).collect();
        rows.push((row, Cmp::Ge, pmu.evaluate(k)));
    }
    let cost = ys
        .iter()
        .map(|&y| ys.iter().map(|&k| (k - y).max(0.0)).sum())
        .collect();
    let sol = LinearProgram { cost, rows }.solve().map_err(OracleError::Infeasible)?;
    Ok(DiscreteMeasure::new(ys.into_iter().zip(sol.x).map(|(y, w)| (y, w.max(0.0))))
        .expect("finite solution"))
}

/// Left-curtain coupling from shadow increments at source-atom boundaries.
pub fn curtain_incremental(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<JointMeasure, OracleError> {
    let mut joint = Vec::new();
    let mut prev = DiscreteMeasure::empty();
    let mut cum = 0.0;
    for (i, a) in mu.atoms().iter().enumerate() {
        cum += a.w;
        let level = if i + 1 == mu.len() { mu.mass() } else { cum };
        let s = shadow_lp(&mu.restricted_unchecked(level), nu)?;
        let mut ys: Vec<f64> = s.atoms().iter().chain(prev.atoms()).map(|t| t.x).collect();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        for y in ys {
            let w = s.weight_at(y) - prev.weight_at(y);
            if w < -NEGATIVE_KERNEL_TOL {
                return Err(OracleError::NegativeKernel { x: a.x, y, w });
            }
            if w > 0.0 {
                joint.push((a.x, y, w));
            }
        }
        prev = s;
    }
    Ok(JointMeasure::new(joint))
}
