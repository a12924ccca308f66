//! Continuous piecewise-linear functions with affine tails.

use thiserror::Error;

use crate::measures::DiscreteMeasure;

/// Default absolute tolerance for slope-jump and collinearity tests.
pub const EPS_GEOM: f64 = 1e-12;

/// Absolute tolerance on `f - f^c` when deciding contact.
pub const CONTACT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PwlError {
    #[error("piecewise-linear function needs at least one breakpoint")]
    Empty,
    #[error("non-finite value in breakpoint list or slopes")]
    NonFinite,
    #[error("breakpoints not strictly increasing at x = {0}")]
    NotIncreasing(f64),
    #[error("chord endpoints out of order: {x} > {z}")]
    ChordOrder { x: f64, z: f64 },
    #[error("lower convex envelope is -inf: left slope {left} exceeds right slope {right}")]
    UnboundedHull { left: f64, right: f64 },
    #[error("not convex: slope drops by {jump} at x = {x}")]
    NotConvex { x: f64, jump: f64 },
    #[error("not a potential: left slope {0} is not zero")]
    NotPotential(f64),
}

/// Line `y0 + slope * (k - x0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineLine {
    pub x0: f64,
    pub y0: f64,
    pub slope: f64,
}

impl AffineLine {
    pub fn eval(&self, k: f64) -> f64 {
        self.y0 + self.slope * (k - self.x0)
    }
}

/// Continuous piecewise-linear function on the whole line.
///
/// Values are linear between consecutive breakpoints and follow
/// `slope_left` / `slope_right` outside them.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
    slope_left: f64,
    slope_right: f64,
}

fn seg_slope(a: (f64, f64), b: (f64, f64)) -> f64 {
    (b.1 - a.1) / (b.0 - a.0)
}

impl PiecewiseLinear {
    pub fn new(points: Vec<(f64, f64)>, slope_left: f64, slope_right: f64) -> Result<Self, PwlError> {
        Self::with_eps(points, slope_left, slope_right, EPS_GEOM)
    }

    /// Builds the function, merging breakpoints whose slope change is below `eps`.
    pub fn with_eps(
        points: Vec<(f64, f64)>,
        slope_left: f64,
        slope_right: f64,
        eps: f64,
    ) -> Result<Self, PwlError> {
        if points.is_empty() {
            return Err(PwlError::Empty);
        }
        if !slope_left.is_finite() || !slope_right.is_finite() {
            return Err(PwlError::NonFinite);
        }
        for (i, p) in points.iter().enumerate() {
            if !p.0.is_finite() || !p.1.is_finite() {
                return Err(PwlError::NonFinite);
            }
            if i > 0 && points[i - 1].0 >= p.0 {
                return Err(PwlError::NotIncreasing(p.0));
            }
        }
        let mut kept: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for p in points {
            while let Some(&top) = kept.last() {
                let incoming = if kept.len() >= 2 {
                    seg_slope(kept[kept.len() - 2], top)
                } else {
                    slope_left
                };
                if (seg_slope(top, p) - incoming).abs() < eps {
                    kept.pop();
                } else {
                    break;
                }
            }
            kept.push(p);
        }
        while kept.len() > 1 {
            let n = kept.len();
            if (seg_slope(kept[n - 2], kept[n - 1]) - slope_right).abs() < eps {
                kept.pop();
            } else {
                break;
            }
        }
        if kept.len() == 1 && (slope_left - slope_right).abs() < eps {
            // A single line: keep the slope on both sides identical.
            return Ok(Self { points: kept, slope_left, slope_right: slope_left });
        }
        Ok(Self { points: kept, slope_left, slope_right })
    }

    pub fn zero() -> Self {
        Self { points: vec![(0.0, 0.0)], slope_left: 0.0, slope_right: 0.0 }
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn slope_left(&self) -> f64 {
        self.slope_left
    }

    pub fn slope_right(&self) -> f64 {
        self.slope_right
    }

    pub fn evaluate(&self, k: f64) -> f64 {
        let pts = &self.points;
        let first = pts[0];
        let last = pts[pts.len() - 1];
        if k <= first.0 {
            return first.1 + self.slope_left * (k - first.0);
        }
        if k >= last.0 {
            return last.1 + self.slope_right * (k - last.0);
        }
        let j = pts.partition_point(|p| p.0 <= k);
        let a = pts[j - 1];
        if a.0 == k {
            return a.1;
        }
        let b = pts[j];
        a.1 + (b.1 - a.1) * (k - a.0) / (b.0 - a.0)
    }

    /// Left and right derivatives at `k`.
    pub fn one_sided_slopes(&self, k: f64) -> (f64, f64) {
        let pts = &self.points;
        let n = pts.len();
        let slope_of = |seg: usize| -> f64 {
            // segment `seg` lies between points seg-1 and seg; 0 and n are the tails
            if seg == 0 {
                self.slope_left
            } else if seg == n {
                self.slope_right
            } else {
                seg_slope(pts[seg - 1], pts[seg])
            }
        };
        let j = pts.partition_point(|p| p.0 < k);
        if j < n && pts[j].0 == k {
            (slope_of(j), slope_of(j + 1))
        } else {
            let s = slope_of(j);
            (s, s)
        }
    }

    pub fn chord(&self, x: f64, z: f64) -> Result<AffineLine, PwlError> {
        if x > z {
            return Err(PwlError::ChordOrder { x, z });
        }
        let fx = self.evaluate(x);
        if x == z {
            return Ok(AffineLine { x0: x, y0: fx, slope: 0.0 });
        }
        let fz = self.evaluate(z);
        Ok(AffineLine { x0: x, y0: fx, slope: (fz - fx) / (z - x) })
    }

    pub fn ray(&self, a: f64, slope: f64) -> AffineLine {
        AffineLine { x0: a, y0: self.evaluate(a), slope }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        let mut xs: Vec<f64> = self
            .points
            .iter()
            .chain(other.points.iter())
            .map(|p| p.0)
            .collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let pts = xs
            .into_iter()
            .map(|x| (x, a * self.evaluate(x) + b * other.evaluate(x)))
            .collect();
        Self::new(
            pts,
            a * self.slope_left + b * other.slope_left,
            a * self.slope_right + b * other.slope_right,
        )
        .expect("combination of valid functions is valid")
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(1.0, other, -1.0)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(1.0, other, 1.0)
    }

    /// Largest convex function below `self`.
    pub fn convex_hull(&self) -> Result<Self, PwlError> {
        self.convex_hull_with_eps(EPS_GEOM)
    }

    pub fn convex_hull_with_eps(&self, eps: f64) -> Result<Self, PwlError> {
        let (sl, sr) = (self.slope_left, self.slope_right);
        if sl > sr + eps {
            return Err(PwlError::UnboundedHull { left: sl, right: sr });
        }
        let mut hull: Vec<(f64, f64)> = Vec::with_capacity(self.points.len());
        for &p in &self.points {
            while let Some(&top) = hull.last() {
                let incoming = if hull.len() >= 2 {
                    seg_slope(hull[hull.len() - 2], top)
                } else {
                    sl
                };
                if incoming >= seg_slope(top, p) - eps {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        while hull.len() > 1 {
            let n = hull.len();
            if seg_slope(hull[n - 2], hull[n - 1]) >= sr - eps {
                hull.pop();
            } else {
                break;
            }
        }
        Self::with_eps(hull, sl, sr.max(sl), eps)
    }

    pub fn is_convex(&self, eps: f64) -> bool {
        self.first_negative_jump(eps).is_none()
    }

    fn first_negative_jump(&self, eps: f64) -> Option<(f64, f64)> {
        self.points.iter().find_map(|&(x, _)| {
            let (l, r) = self.one_sided_slopes(x);
            (r - l < -eps).then_some((x, r - l))
        })
    }

    /// Second-derivative measure of a convex potential with zero left slope.
    pub fn measure_from_potential(&self) -> Result<DiscreteMeasure, PwlError> {
        if self.slope_left.abs() > EPS_GEOM {
            return Err(PwlError::NotPotential(self.slope_left));
        }
        if let Some((x, jump)) = self.first_negative_jump(EPS_GEOM) {
            return Err(PwlError::NotConvex { x, jump });
        }
        let atoms = self.points.iter().filter_map(|&(x, _)| {
            let (l, r) = self.one_sided_slopes(x);
            let w = r - l;
            (w > EPS_GEOM).then_some((x, w))
        });
        Ok(DiscreteMeasure::from_sorted_atoms(atoms.collect()))
    }
}

/// Contact points `X^f(y)` and `Z^f(y)` of `f` with its hull `fc`.
///
/// Returns infinite sentinels when no contact exists on the relevant side.
pub fn contact_points(f: &PiecewiseLinear, fc: &PiecewiseLinear, y: f64) -> (f64, f64) {
    let touches = |k: f64| f.evaluate(k) - fc.evaluate(k) <= CONTACT_TOL;
    if touches(y) {
        return (y, y);
    }
    let mut xs: Vec<f64> = f
        .points
        .iter()
        .chain(fc.points.iter())
        .map(|p| p.0)
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let x = xs
        .iter()
        .rev()
        .copied()
        .find(|&k| k < y && touches(k))
        .unwrap_or(f64::NEG_INFINITY);
    let z = xs
        .iter()
        .copied()
        .find(|&k| k > y && touches(k))
        .unwrap_or(f64::INFINITY);
    (x, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn put_delta0() -> PiecewiseLinear {
        PiecewiseLinear::new(vec![(0.0, 0.0)], 0.0, 1.0).unwrap()
    }

    fn tent() -> PiecewiseLinear {
        PiecewiseLinear::new(vec![(-1.0, 0.0), (0.0, 1.0), (1.0, 0.0)], 0.0, 0.0).unwrap()
    }

    #[test]
    fn evaluates_put_payoff() {
        let f = put_delta0();
        assert_eq!(f.evaluate(1.0), 1.0);
        assert_eq!(f.evaluate(-1.0), 0.0);
        assert_eq!(f.one_sided_slopes(0.0), (0.0, 1.0));
        assert_eq!(f.one_sided_slopes(0.5), (1.0, 1.0));
    }

    #[test]
    fn rejects_unsorted_breakpoints() {
        let err = PiecewiseLinear::new(vec![(1.0, 0.0), (0.0, 0.0)], 0.0, 0.0);
        assert_eq!(err, Err(PwlError::NotIncreasing(0.0)));
    }

    #[test]
    fn merges_collinear_points() {
        let f = PiecewiseLinear::new(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)], 0.0, 1.0).unwrap();
        assert_eq!(f.breakpoints(), &[(0.0, 0.0)]);
        let g = PiecewiseLinear::new(vec![(-1.0, -1.0), (3.0, 3.0)], 1.0, 1.0).unwrap();
        assert_eq!(g.breakpoints().len(), 1);
        assert_eq!(g.evaluate(10.0), 10.0);
    }

    #[test]
    fn chords_and_rays() {
        let f = put_delta0();
        let c = f.chord(-1.0, 1.0).unwrap();
        assert_eq!(c.eval(0.0), 0.5);
        let d = f.chord(2.0, 2.0).unwrap();
        assert_eq!(d.eval(-7.0), 2.0);
        assert_eq!(f.ray(3.0, 0.0).eval(100.0), 3.0);
        assert!(f.chord(1.0, 0.0).is_err());
    }

    #[test]
    fn hull_of_tent_is_zero() {
        let h = tent().convex_hull().unwrap();
        for k in [-3.0, -1.0, 0.0, 0.3, 2.0] {
            assert_eq!(h.evaluate(k), 0.0);
        }
        assert_eq!(contact_points(&tent(), &h, 0.0), (-1.0, 1.0));
    }

    #[test]
    fn hull_of_convex_is_identity() {
        let f = PiecewiseLinear::new(vec![(-1.0, 1.0), (0.0, 0.0), (2.0, 1.0)], -2.0, 3.0).unwrap();
        assert_eq!(f.convex_hull().unwrap(), f);
        assert_eq!(contact_points(&f, &f, 0.7), (0.7, 0.7));
    }

    #[test]
    fn hull_rejects_unbounded() {
        let f = PiecewiseLinear::new(vec![(0.0, 0.0)], 1.0, 0.0).unwrap();
        assert!(matches!(f.convex_hull(), Err(PwlError::UnboundedHull { .. })));
    }

    #[test]
    fn contact_sentinels() {
        // hull touches only on the left tail side of the bump
        let f = PiecewiseLinear::new(vec![(0.0, 0.0), (1.0, 1.0)], 0.0, 0.5).unwrap();
        let h = f.convex_hull().unwrap();
        let (x, z) = contact_points(&f, &h, 2.0);
        assert_eq!(x, 0.0);
        assert_eq!(z, f64::INFINITY);
    }

    #[test]
    fn measure_round_trip_simple() {
        let p = PiecewiseLinear::new(vec![(-1.0, 0.0), (1.0, 1.0)], 0.0, 1.0).unwrap();
        let m = p.measure_from_potential().unwrap();
        assert_eq!(m.atoms().len(), 2);
        assert_eq!(m.atoms()[0].w, 0.5);
        assert_eq!(m.atoms()[1].w, 0.5);
        assert!(matches!(tent().measure_from_potential(), Err(PwlError::NotConvex { .. })));
    }

    fn arb_pwl() -> impl Strategy<Value = PiecewiseLinear> {
        (
            prop::collection::vec((-50i32..50, -20i32..20), 1..12),
            -3i32..3,
            -3i32..3,
        )
            .prop_map(|(raw, a, b)| {
                let mut pts: Vec<(f64, f64)> =
                    raw.into_iter().map(|(x, y)| (x as f64 / 4.0, y as f64 / 8.0)).collect();
                pts.sort_by(|p, q| p.0.total_cmp(&q.0));
                pts.dedup_by(|p, q| p.0 == q.0);
                let (sl, sr) = (a.min(b) as f64, a.max(b) as f64);
                PiecewiseLinear::new(pts, sl, sr).unwrap()
            })
    }

    proptest! {
        #[test]
        fn hull_is_idempotent_and_below(f in arb_pwl()) {
            let h = f.convex_hull().unwrap();
            prop_assert!(h.is_convex(1e-12));
            prop_assert_eq!(h.convex_hull().unwrap(), h.clone());
            for &(x, _) in f.breakpoints() {
                prop_assert!(h.evaluate(x) <= f.evaluate(x) + 1e-12);
            }
        }

        #[test]
        fn hull_contact_chord(f in arb_pwl(), ys in prop::collection::vec(-15.0f64..15.0, 50)) {
            let h = f.convex_hull().unwrap();
            for y in ys {
                let (x, z) = contact_points(&f, &h, y);
                prop_assert!(x <= y && y <= z);
                if x.is_finite() && z.is_finite() {
                    let c = f.chord(x, z).unwrap();
                    prop_assert!((c.eval(y) - h.evaluate(y)).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn hull_matches_brute_force(f in arb_pwl(), ys in prop::collection::vec(-15.0f64..15.0, 30)) {
            let h = f.convex_hull().unwrap();
            let pts = f.breakpoints();
            for y in ys {
                let mut best = f.evaluate(y);
                for &(px, py) in pts {
                    if px <= y {
                        best = best.min(py + f.slope_right() * (y - px));
                    } else {
                        best = best.min(py - f.slope_left() * (px - y));
                    }
                    for &(qx, qy) in pts {
                        if px <= y && y <= qx && px < qx {
                            best = best.min(py + (qy - py) * (y - px) / (qx - px));
                        }
                    }
                }
                prop_assert!((best - h.evaluate(y)).abs() < 1e-9, "y={} brute={} hull={}", y, best, h.evaluate(y));
            }
        }
    }
}
