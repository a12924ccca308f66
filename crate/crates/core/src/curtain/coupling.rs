//! Lifted coupling, sampling and transport-map views of a curtain table.

use serde::{Deserialize, Serialize};

use crate::measures::JointMeasure;

use super::{CurtainInterval, CurtainTable, DEGENERATE_WIDTH};

/// Two-point law `χ_{R,G,S}` of one interval as `[(R, p_R), (S, p_S)]`.
pub(crate) fn kernel(iv: &CurtainInterval) -> [(f64, f64); 2] {
    let span = iv.s - iv.r;
    if span < DEGENERATE_WIDTH {
        return [(iv.g, 1.0), (iv.g, 0.0)];
    }
    [(iv.r, (iv.s - iv.g) / span), (iv.s, (iv.g - iv.r) / span)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingInterval {
    pub u_lo: f64,
    pub u_hi: f64,
    pub x: f64,
    pub r: f64,
    pub s: f64,
}

/// Coupling in quantile coordinates plus its flattened law on `(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedCoupling {
    pub intervals: Vec<CouplingInterval>,
    pub joint: JointMeasure,
}

impl LiftedCoupling {
    /// Rebuilds the joint law from the interval list alone.
    pub fn from_intervals(intervals: Vec<CouplingInterval>) -> Self {
        let mut atoms = Vec::with_capacity(2 * intervals.len());
        for c in &intervals {
            let iv = CurtainInterval {
                u_lo: c.u_lo,
                u_hi: c.u_hi,
                g: c.x,
                r: c.r,
                q: c.r,
                s: c.s,
                phi: 0.0,
                dphi: 0.0,
            };
            for (y, p) in kernel(&iv) {
                if p > 0.0 {
                    atoms.push((c.x, y, p * iv.width()));
                }
            }
        }
        Self { intervals, joint: JointMeasure::new(atoms) }
    }
}

pub fn coupling(table: &CurtainTable) -> LiftedCoupling {
    LiftedCoupling::from_intervals(
        table
            .intervals
            .iter()
            .map(|iv| CouplingInterval { u_lo: iv.u_lo, u_hi: iv.u_hi, x: iv.g, r: iv.r, s: iv.s })
            .collect(),
    )
}

/// `Y(u, v)`: lower target `R` when `v <= (S - G) / (S - R)`, else `S`.
pub fn sample_y(table: &CurtainTable, u: f64, v: f64) -> f64 {
    let Some(iv) = table.locate(u) else {
        return f64::NAN;
    };
    if iv.s - iv.r < DEGENERATE_WIDTH {
        return iv.g;
    }
    if v <= (iv.s - iv.g) / (iv.s - iv.r) {
        iv.r
    } else {
        iv.s
    }
}

/// Range of `T_d` and `T_u` over the quantile levels of one source atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapPoint {
    pub x: f64,
    pub td_min: f64,
    pub td_max: f64,
    pub tu_min: f64,
    pub tu_max: f64,
    pub multi_valued: bool,
}

/// `T_d = R ∘ G^{-1}` and `T_u = S ∘ G^{-1}` as right-continuous step functions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportMaps {
    pub points: Vec<MapPoint>,
}

impl TransportMaps {
    fn at(&self, x: f64) -> Option<&MapPoint> {
        let i = self.points.partition_point(|p| p.x <= x);
        i.checked_sub(1).map(|i| &self.points[i])
    }

    /// `(T_d(x), T_u(x))`, taking the upper end at multi-valued atoms.
    pub fn eval(&self, x: f64) -> Option<(f64, f64)> {
        self.at(x).map(|p| (p.td_min, p.tu_max))
    }

    pub fn tu_non_decreasing(&self, tol: f64) -> bool {
        self.points.windows(2).all(|w| w[1].tu_min >= w[0].tu_max - tol)
    }

    /// `T_d` non-increasing on atoms at or beyond `from`.
    pub fn td_non_increasing_from(&self, from: f64, tol: f64) -> bool {
        self.points
            .windows(2)
            .filter(|w| w[0].x >= from)
            .all(|w| w[1].td_max <= w[0].td_min + tol)
    }
}

pub fn td_tu(table: &CurtainTable) -> TransportMaps {
    let mut points: Vec<MapPoint> = Vec::new();
    for iv in &table.intervals {
        // mass that stays put has `T_d = T_u = x`
        let (td, tu) = if iv.is_stationary() { (iv.g, iv.g) } else { (iv.r, iv.s) };
        match points.last_mut() {
            Some(p) if p.x == iv.g => {
                p.td_min = p.td_min.min(td);
                p.td_max = p.td_max.max(td);
                p.tu_min = p.tu_min.min(tu);
                p.tu_max = p.tu_max.max(tu);
                p.multi_valued = p.td_min != p.td_max || p.tu_min != p.tu_max;
            }
            _ => points.push(MapPoint {
                x: iv.g,
                td_min: td,
                td_max: td,
                tu_min: tu,
                tu_max: tu,
                multi_valued: false,
            }),
        }
    }
    TransportMaps { points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curtain::build_curtain;
    use crate::measures::DiscreteMeasure;

    fn m(pairs: &[(f64, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(pairs.iter().copied()).unwrap()
    }

    fn three_atom() -> CurtainTable {
        let t = 1.0 / 3.0;
        build_curtain(&m(&[(-1.0, 0.5), (1.0, 0.5)]), &m(&[(-3.0, t), (0.0, t), (3.0, t)])).unwrap()
    }

    #[test]
    fn two_point_coupling() {
        let t = build_curtain(&DiscreteMeasure::dirac(0.0), &m(&[(-1.0, 0.5), (1.0, 0.5)])).unwrap();
        let c = coupling(&t);
        assert_eq!(c.joint.atoms(), &[(0.0, -1.0, 0.5), (0.0, 1.0, 0.5)]);
        assert_eq!(sample_y(&t, 0.3, 0.25), -1.0);
        assert_eq!(sample_y(&t, 0.3, 0.5), -1.0);
        assert_eq!(sample_y(&t, 0.3, 0.5000001), 1.0);
    }

    #[test]
    fn three_atom_coupling() {
        let c = coupling(&three_atom());
        let k = c.joint.kernel_at(-1.0);
        assert!((k.weight_at(-3.0) - 1.0 / 6.0).abs() < 1e-15);
        assert!((k.weight_at(0.0) - 1.0 / 3.0).abs() < 1e-15);
        let k = c.joint.kernel_at(1.0);
        assert!((k.weight_at(-3.0) - 1.0 / 6.0).abs() < 1e-15);
        assert!((k.weight_at(3.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(sample_y(&three_atom(), 0.75, 0.5), 3.0);
        assert_eq!(sample_y(&three_atom(), 0.75, 0.3), -3.0);
    }

    #[test]
    fn stationary_sampling_and_identity_maps() {
        let nu = m(&[(-1.0, 0.25), (0.0, 0.25), (2.0, 0.5)]);
        let t = build_curtain(&nu, &nu).unwrap();
        assert_eq!(sample_y(&t, 0.6, 0.01), 2.0);
        let maps = td_tu(&t);
        for p in &maps.points {
            assert_eq!((p.td_min, p.tu_max), (p.x, p.x));
        }
        assert_eq!(maps.eval(0.5), Some((0.0, 0.0)));
        let c = coupling(&t);
        assert_eq!(c.joint.atoms().len(), 3);
        assert!(c.joint.atoms().iter().all(|a| a.0 == a.1));
    }

    #[test]
    fn three_atom_maps() {
        let maps = td_tu(&three_atom());
        assert_eq!(maps.eval(1.0), Some((-3.0, 3.0)));
        assert!(maps.tu_non_decreasing(0.0));
    }

    #[test]
    fn quantized_dispersion_maps() {
        let n = 200;
        let mu = crate::measures::quantize_density(&[-1.0, 1.0], &[0.5, 0.5], n).unwrap();
        let nu = crate::measures::quantize_density(&[-2.0, 2.0], &[0.25, 0.25], n).unwrap();
        let maps = td_tu(&build_curtain(&mu, &nu).unwrap());
        assert!(maps.tu_non_decreasing(1e-12));
        // the lowest target cell is exhausted inside the second source cell
        let rises: Vec<usize> =
            (1..maps.points.len()).filter(|&i| maps.points[i].td_max > maps.points[i - 1].td_min + 1e-12).collect();
        assert_eq!(rises, vec![1]);
        assert!(maps.points[2..].windows(2).all(|w| w[1].td_max <= w[0].td_min + 1e-12));
    }
}
