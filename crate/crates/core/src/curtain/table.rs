//! Exact construction of the curtain table by tracking hull contacts in `u`.
//!
//! Inside the quantile range of a source atom at `x`, `E_u` equals `D` left of
//! `x` and `P_nu(k) - P_mu(x) - u (k - x)` right of it. The hull edge over `x`
//! joins a left pivot `R` (a breakpoint of `D`) to a target atom `S`; its slope
//! is affine in `u`, so the levels where either pivot changes solve linear
//! equations.

use crate::decompose::Decomposition;
use crate::measures::DiscreteMeasure;
use crate::pwl::{PiecewiseLinear, CONTACT_TOL, EPS_GEOM};

use super::{require_order, CurtainError, CurtainInterval, CurtainTable};

/// Events closer than this in `u` are treated as simultaneous.
const TOL_U: f64 = 1e-14;

/// `|D(x)|` below this puts a source atom at a zero of `D`.
const ZERO_D: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurtainConfig {
    pub max_intervals: usize,
    /// Slope tolerance used to detect ties and collinearity.
    pub eps: f64,
}

impl Default for CurtainConfig {
    fn default() -> Self {
        Self { max_intervals: 1_000_000, eps: EPS_GEOM }
    }
}

struct Geometry<'a> {
    mu: &'a DiscreteMeasure,
    d: PiecewiseLinear,
    pmu: PiecewiseLinear,
    pnu: PiecewiseLinear,
    ys: Vec<f64>,
    /// `F_nu(y_j)`.
    fnu: Vec<f64>,
    /// `P_nu(y_j)`.
    pnu_y: Vec<f64>,
    eps: f64,
}

impl<'a> Geometry<'a> {
    fn new(mu: &'a DiscreteMeasure, nu: &DiscreteMeasure, eps: f64) -> Self {
        let pmu = mu.put_potential();
        let pnu = nu.put_potential();
        let d = pnu.sub(&pmu);
        let ys: Vec<f64> = nu.atoms().iter().map(|a| a.x).collect();
        let mut acc = 0.0;
        let fnu = nu
            .atoms()
            .iter()
            .map(|a| {
                acc += a.w;
                acc
            })
            .collect();
        let pnu_y = ys.iter().map(|&y| pnu.evaluate(y)).collect();
        Self { mu, d, pmu, pnu, ys, fnu, pnu_y, eps }
    }

    fn cdf_nu(&self, x: f64) -> f64 {
        let j = self.ys.partition_point(|&y| y <= x);
        if j == 0 {
            0.0
        } else {
            self.fnu[j - 1]
        }
    }

    /// Largest chord slope of `D` into `(anchor, value)` from breakpoints left of
    /// `anchor`, with the leftmost breakpoint attaining it.
    fn steepest_left(&self, anchor: f64, value: f64) -> Option<(f64, f64)> {
        let pts = self.d.breakpoints();
        let end = pts.partition_point(|p| p.0 < anchor);
        let slopes: Vec<(f64, f64)> = pts[..end]
            .iter()
            .map(|&(k, dk)| ((value - dk) / (anchor - k), k))
            .collect();
        let best = slopes.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        slopes
            .iter()
            .find(|s| s.0 >= best - self.eps)
            .map(|&(_, k)| (best, k))
    }

    fn first_atom_above(&self, x: f64) -> Option<usize> {
        let j = self.ys.partition_point(|&y| y <= x);
        (j < self.ys.len()).then_some(j)
    }

    fn atom_index(&self, y: f64) -> Option<usize> {
        let j = self.ys.partition_point(|&t| t < y);
        [j.checked_sub(1), Some(j)]
            .into_iter()
            .flatten()
            .filter(|&i| i < self.ys.len())
            .min_by(|&i, &k| (self.ys[i] - y).abs().total_cmp(&(self.ys[k] - y).abs()))
            .filter(|&i| (self.ys[i] - y).abs() <= 1e-9 * (1.0 + y.abs()))
    }

    /// Hull edge over `x` of `E_a`, as (left pivot, target atom index).
    fn edge_at(&self, x: f64, a: f64) -> Option<(f64, usize)> {
        let e = self.pnu.sub(&self.mu.restricted_unchecked(a).put_potential());
        let hull = e.convex_hull().ok()?;
        if e.evaluate(x) - hull.evaluate(x) <= CONTACT_TOL {
            return None;
        }
        let hv = hull.breakpoints();
        let j = hv.partition_point(|p| p.0 <= x);
        if j == 0 || j == hv.len() || hv[j - 1].0 >= x {
            return None;
        }
        Some((hv[j - 1].0, self.atom_index(hv[j].0)?))
    }
}

/// Builds the curtain table of `(mu, nu)` with default settings.
pub fn build_curtain(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<CurtainTable, CurtainError> {
    build_curtain_with(mu, nu, &CurtainConfig::default())
}

pub fn build_curtain_with(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cfg: &CurtainConfig,
) -> Result<CurtainTable, CurtainError> {
    require_order(mu, nu)?;
    let geo = Geometry::new(mu, nu, cfg.eps);
    let total = mu.mass();
    let mut out: Vec<CurtainInterval> = Vec::new();
    let push = |iv: CurtainInterval, out: &mut Vec<CurtainInterval>| -> Result<(), CurtainError> {
        if iv.u_hi <= iv.u_lo {
            return Ok(());
        }
        if let Some(last) = out.last_mut() {
            let same = last.g == iv.g && last.r == iv.r && last.q == iv.q && last.s == iv.s;
            if same
                && (last.dphi - iv.dphi).abs() <= 1e-12
                && (last.phi_end() - iv.phi).abs() <= 1e-10
            {
                last.u_hi = iv.u_hi;
                return Ok(());
            }
        }
        if out.len() >= cfg.max_intervals {
            return Err(CurtainError::BreakpointOverflow(cfg.max_intervals));
        }
        out.push(iv);
        Ok(())
    };

    let atoms = mu.atoms();
    let mut a = 0.0;
    for (i, atom) in atoms.iter().enumerate() {
        let x = atom.x;
        let b = if i + 1 == atoms.len() { total } else { a + atom.w };
        let dx = geo.d.evaluate(x);
        let left = geo.steepest_left(x, dx);
        let theta = left.map_or(0.0, |l| l.0.max(0.0));
        let r_still = match left {
            Some((_, k)) if dx > ZERO_D => k,
            _ => x,
        };
        let u_star = if dx > ZERO_D { geo.cdf_nu(x) - theta } else { f64::INFINITY };

        if u_star > a + TOL_U {
            let hi = if u_star >= b - TOL_U { b } else { u_star };
            push(
                CurtainInterval { u_lo: a, u_hi: hi, g: x, r: r_still, q: x, s: x, phi: theta, dphi: 0.0 },
                &mut out,
            )?;
            if hi == b {
                a = b;
                continue;
            }
        }
        let mut u = a.max(u_star);
        let transition = || geo.first_atom_above(x).map(|j| (r_still, j));
        let start = if u_star >= a - TOL_U { transition() } else { geo.edge_at(x, a).or_else(transition) };
        let (mut r, mut js) = start.ok_or_else(|| {
            CurtainError::InternalGeometry(format!("no target atom above source atom {x}"))
        })?;
        let pmu_x = geo.pmu.evaluate(x);
        loop {
            let s = geo.ys[js];
            let dr = geo.d.evaluate(r);
            let alpha = geo.pnu_y[js] - pmu_x - dr;
            let beta = s - x;
            let gamma = s - r;
            let u_s = if js + 1 < geo.ys.len() && x > r {
                (gamma * geo.fnu[js] - alpha) / (x - r)
            } else {
                f64::INFINITY
            };
            let next_r = geo.steepest_left(r, dr);
            let u_r = next_r.map_or(f64::INFINITY, |(smax, _)| (alpha - gamma * smax) / beta);
            let mut u_next = u_s.min(u_r).min(b).max(u);
            if u_next >= b - TOL_U {
                u_next = b;
            }
            let phi = (alpha - u * beta) / gamma;
            push(
                CurtainInterval { u_lo: u, u_hi: u_next, g: x, r, q: r, s, phi, dphi: -beta / gamma },
                &mut out,
            )?;
            if u_next == b {
                break;
            }
            let mut moved = false;
            if u_r <= u_next + TOL_U {
                if let Some((_, k)) = next_r {
                    r = k;
                    moved = true;
                }
            }
            if u_s <= u_next + TOL_U && js + 1 < geo.ys.len() {
                js += 1;
                moved = true;
            }
            if !moved {
                return Err(CurtainError::InternalGeometry(format!("stalled at u = {u_next} on atom {x}")));
            }
            u = u_next;
        }
        a = b;
    }
    Ok(CurtainTable { intervals: out, mass: total })
}

/// Glues per-component tables and stationary atoms into one table on the
/// global quantile scale.
pub fn assemble_components(
    mu: &DiscreteMeasure,
    dec: &Decomposition,
    cfg: &CurtainConfig,
) -> Result<CurtainTable, CurtainError> {
    enum Piece<'a> {
        Still(f64, f64),
        Part(&'a crate::decompose::IrreducibleComponent),
    }
    let mut pieces: Vec<(f64, Piece)> = dec
        .static_part
        .atoms()
        .iter()
        .map(|a| (a.x, Piece::Still(a.x, a.w)))
        .chain(
            dec.components
                .iter()
                .filter(|c| !c.mu_part.is_empty())
                .map(|c| (c.mu_part.atoms()[0].x, Piece::Part(c))),
        )
        .collect();
    pieces.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut out = Vec::new();
    let mut offset = 0.0;
    for (_, piece) in pieces {
        match piece {
            Piece::Still(x, w) => {
                out.push(CurtainInterval {
                    u_lo: offset,
                    u_hi: offset + w,
                    g: x,
                    r: x,
                    q: x,
                    s: x,
                    phi: 0.0,
                    dphi: 0.0,
                });
                offset += w;
            }
            Piece::Part(c) => {
                let t = build_curtain_with(&c.mu_part, &c.nu_part, cfg)?;
                for iv in t.intervals {
                    out.push(CurtainInterval { u_lo: iv.u_lo + offset, u_hi: iv.u_hi + offset, ..iv });
                }
                offset += t.mass;
            }
        }
    }
    if let Some(last) = out.last_mut() {
        last.u_hi = mu.mass();
    }
    Ok(CurtainTable { intervals: out, mass: mu.mass() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curtain::point_construction;
    use crate::measures::random_cx_pair;

    fn m(pairs: &[(f64, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn two_point_target_single_interval() {
        let t = build_curtain(&DiscreteMeasure::dirac(0.0), &m(&[(-1.0, 0.5), (1.0, 0.5)])).unwrap();
        assert_eq!(t.intervals.len(), 1);
        let iv = t.intervals[0];
        assert_eq!((iv.u_lo, iv.u_hi, iv.r, iv.g, iv.s), (0.0, 1.0, -1.0, 0.0, 1.0));
        assert_eq!(iv.dphi, -0.5);
        assert_eq!(iv.phi, 0.5);
    }

    #[test]
    fn three_atom_example_table() {
        let th = 1.0 / 3.0;
        let t = build_curtain(&m(&[(-1.0, 0.5), (1.0, 0.5)]), &m(&[(-3.0, th), (0.0, th), (3.0, th)])).unwrap();
        let got: Vec<_> = t.intervals.iter().map(|iv| (iv.u_lo, iv.u_hi, iv.r, iv.g, iv.s)).collect();
        assert_eq!(got, vec![(0.0, 0.5, -3.0, -1.0, 0.0), (0.5, 1.0, -3.0, 1.0, 3.0)]);
    }

    #[test]
    fn split_example_global_and_assembled() {
        let mu = m(&[(-1.0, 0.5), (1.0, 0.5)]);
        let nu = m(&[(-2.0, 0.25), (0.0, 0.5), (2.0, 0.25)]);
        let t = build_curtain(&mu, &nu).unwrap();
        let got: Vec<_> = t.intervals.iter().map(|iv| (iv.r, iv.g, iv.s)).collect();
        assert_eq!(got, vec![(-2.0, -1.0, 0.0), (0.0, 1.0, 2.0)]);
        let dec = crate::decompose::decompose(&mu, &nu).unwrap();
        let a = assemble_components(&mu, &dec, &CurtainConfig::default()).unwrap();
        let got: Vec<_> = a.intervals.iter().map(|iv| (iv.u_lo, iv.u_hi, iv.r, iv.g, iv.s)).collect();
        assert_eq!(got, vec![(0.0, 0.5, -2.0, -1.0, 0.0), (0.5, 1.0, 0.0, 1.0, 2.0)]);
    }

    #[test]
    fn equal_laws_are_stationary() {
        let nu = m(&[(-1.0, 0.25), (0.0, 0.25), (2.0, 0.5)]);
        let t = build_curtain(&nu, &nu).unwrap();
        assert_eq!(t.intervals.len(), 3);
        for iv in &t.intervals {
            assert_eq!((iv.r, iv.q, iv.s), (iv.g, iv.g, iv.g));
        }
    }

    #[test]
    fn overflow_is_reported() {
        let (mu, nu) = random_cx_pair(3, 6, 10);
        let cfg = CurtainConfig { max_intervals: 1, ..Default::default() };
        assert!(matches!(build_curtain_with(&mu, &nu, &cfg), Err(CurtainError::BreakpointOverflow(1))));
    }

    #[test]
    fn table_matches_pointwise_construction() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for seed in 0..150 {
            let (mu, nu) = random_cx_pair(seed, 1 + seed as usize % 8, 2 + seed as usize % 12);
            let t = build_curtain(&mu, &nu).unwrap();
            for _ in 0..50 {
                let u: f64 = rng.gen_range(1e-9..1.0);
                let iv = t.locate(u).unwrap();
                // stay off breakpoints, where pointwise values pick a side
                if u - iv.u_lo < 1e-9 || iv.u_hi - u < 1e-9 {
                    continue;
                }
                let p = point_construction(&mu, &nu, u).unwrap();
                let q = iv.point(u);
                assert_eq!((p.g, p.s, p.q), (q.g, q.s, q.q), "seed {seed} u {u} {iv:?}");
                assert!((p.r - q.r).abs() < 1e-12, "seed {seed} u {u} R {} vs {}", p.r, q.r);
                assert!((p.phi - q.phi).abs() < 1e-9, "seed {seed} u {u} phi {} vs {}", p.phi, q.phi);
            }
        }
    }

    #[test]
    fn assembled_matches_global() {
        for seed in 0..300 {
            let (mu, nu) = random_cx_pair(seed, 1 + seed as usize % 8, seed as usize % 12);
            let g = build_curtain(&mu, &nu).unwrap();
            let dec = crate::decompose::decompose(&mu, &nu).unwrap();
            let a = assemble_components(&mu, &dec, &CurtainConfig::default()).unwrap();
            for k in 1..200 {
                let u = k as f64 / 200.0 + 1.3e-4;
                let (p, q) = (g.eval(u).unwrap(), a.eval(u).unwrap());
                assert_eq!((p.g, p.s), (q.g, q.s), "seed {seed} u {u}");
                if p.s > p.g {
                    assert_eq!(p.r, q.r, "seed {seed} u {u}");
                    assert!((p.phi - q.phi).abs() < 1e-9, "seed {seed} u {u}");
                }
            }
        }
    }
}
