//! Finite atomic measures, put-potentials and convex-order utilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pwl::PiecewiseLinear;

/// Absolute tolerance on mass and mean equality.
pub const MASS_TOL: f64 = 1e-12;

/// Positions closer than this are merged before comparing measures.
pub const POSITION_TOL: f64 = 1e-11;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("atom has non-finite position or weight ({x}, {w})")]
    NonFinite { x: f64, w: f64 },
    #[error("atom at {x} has negative weight {w}")]
    NegativeWeight { x: f64, w: f64 },
    #[error("quantile level {0} outside (0, 1)")]
    LevelOutOfRange(f64),
    #[error("expected a probability measure, mass is {0}")]
    NotProbability(f64),
    #[error("measure is empty")]
    Empty,
    #[error("density grid is malformed: {0}")]
    BadGrid(&'static str),
    #[error("density has non-positive total mass {0}")]
    NoMass(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub w: f64,
}

/// Finite measure with strictly increasing atom positions and positive weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiscreteMeasure {
    atoms: Vec<Atom>,
}

impl DiscreteMeasure {
    /// Builds a measure from unsorted `(x, w)` pairs; equal positions are summed
    /// and zero weights dropped.
    pub fn new<I: IntoIterator<Item = (f64, f64)>>(pairs: I) -> Result<Self, MeasureError> {
        let mut v: Vec<(f64, f64)> = Vec::new();
        for (x, w) in pairs {
            if !x.is_finite() || !w.is_finite() {
                return Err(MeasureError::NonFinite { x, w });
            }
            if w < 0.0 {
                return Err(MeasureError::NegativeWeight { x, w });
            }
            v.push((x, w));
        }
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self::from_sorted_atoms(v))
    }

    /// Like [`DiscreteMeasure::new`] for pairs already sorted by position.
    pub(crate) fn from_sorted_atoms(v: Vec<(f64, f64)>) -> Self {
        let mut atoms: Vec<Atom> = Vec::with_capacity(v.len());
        for (x, w) in v {
            match atoms.last_mut() {
                Some(a) if a.x == x => a.w += w,
                _ => atoms.push(Atom { x, w }),
            }
        }
        atoms.retain(|a| a.w > 0.0);
        Self { atoms }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn dirac(x: f64) -> Self {
        Self { atoms: vec![Atom { x, w: 1.0 }] }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    /// Unnormalized first moment `sum x w`.
    pub fn first_moment(&self) -> f64 {
        self.atoms.iter().map(|a| a.x * a.w).sum()
    }

    pub fn weight_at(&self, x: f64) -> f64 {
        match self.atoms.binary_search_by(|a| a.x.total_cmp(&x)) {
            Ok(i) => self.atoms[i].w,
            Err(_) => 0.0,
        }
    }

    /// Leftmost atom position.
    pub fn lower(&self) -> Option<f64> {
        self.atoms.first().map(|a| a.x)
    }

    /// Rightmost atom position.
    pub fn upper(&self) -> Option<f64> {
        self.atoms.last().map(|a| a.x)
    }

    /// `F(x) = eta((-inf, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.atoms.iter().take_while(|a| a.x <= x).map(|a| a.w).sum()
    }

    /// `eta((-inf, x))`.
    pub fn cdf_left(&self, x: f64) -> f64 {
        self.atoms.iter().take_while(|a| a.x < x).map(|a| a.w).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_sorted_atoms(self.atoms.iter().map(|a| (a.x, a.w * c)).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut v: Vec<(f64, f64)> =
            self.atoms.iter().chain(other.atoms.iter()).map(|a| (a.x, a.w)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self::from_sorted_atoms(v)
    }

    /// Restriction to the interval between `lo` and `hi`, endpoints included as flagged.
    pub fn restrict(&self, lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Self {
        let keep = |x: f64| {
            (x > lo || (lo_closed && x == lo)) && (x < hi || (hi_closed && x == hi))
        };
        Self {
            atoms: self.atoms.iter().copied().filter(|a| keep(a.x)).collect(),
        }
    }

    fn check_level(&self, u: f64) -> Result<(), MeasureError> {
        let m = self.mass();
        if (m - 1.0).abs() > MASS_TOL {
            return Err(MeasureError::NotProbability(m));
        }
        if !(u > 0.0 && u < 1.0) {
            return Err(MeasureError::LevelOutOfRange(u));
        }
        Ok(())
    }

    /// Left-continuous quantile `G(u) = inf{x : F(x) >= u}`.
    pub fn quantile_left(&self, u: f64) -> Result<f64, MeasureError> {
        self.check_level(u)?;
        Ok(self.quantile_unchecked(u))
    }

    /// Left-continuous quantile for any mass and any `u` in `(0, mass]`.
    pub fn quantile_unchecked(&self, u: f64) -> f64 {
        let mut cum = 0.0;
        for a in &self.atoms {
            cum += a.w;
            if cum >= u {
                return a.x;
            }
        }
        self.atoms.last().map(|a| a.x).unwrap_or(f64::NAN)
    }

    /// `mu_u`: all mass strictly below `G(u)` plus a partial atom at `G(u)`.
    pub fn restricted_measure(&self, u: f64) -> Result<Self, MeasureError> {
        self.check_level(u)?;
        Ok(self.restricted_unchecked(u))
    }

    /// Restriction of the first `u` units of mass, for any `u >= 0`.
    pub fn restricted_unchecked(&self, u: f64) -> Self {
        let mut out = Vec::new();
        let mut cum = 0.0;
        for a in &self.atoms {
            if cum + a.w >= u {
                if u > cum {
                    out.push(Atom { x: a.x, w: u - cum });
                }
                return Self { atoms: out };
            }
            cum += a.w;
            out.push(*a);
        }
        Self { atoms: out }
    }

    /// `P(k) = sum w (k - x)^+`.
    pub fn put_potential(&self) -> PiecewiseLinear {
        if self.atoms.is_empty() {
            return PiecewiseLinear::zero();
        }
        let mut pts = Vec::with_capacity(self.atoms.len());
        let mut value = 0.0;
        let mut cum = 0.0;
        let mut prev = self.atoms[0].x;
        for a in &self.atoms {
            value += cum * (a.x - prev);
            pts.push((a.x, value));
            cum += a.w;
            prev = a.x;
        }
        PiecewiseLinear::new(pts, 0.0, cum).expect("sorted finite atoms")
    }

    /// Call potential `sum w (x - k)^+`.
    pub fn call_potential_at(&self, k: f64) -> f64 {
        self.atoms.iter().map(|a| a.w * (a.x - k).max(0.0)).sum()
    }

    /// Atomwise `self <= other + slack`.
    pub fn dominated_by(&self, other: &Self, slack: f64) -> bool {
        merged_difference(self, other).iter().all(|&(_, d)| d <= slack)
    }
}

/// Signed atomwise difference `a - b`, after merging positions within [`POSITION_TOL`].
fn merged_difference(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = a
        .atoms
        .iter()
        .map(|t| (t.x, t.w))
        .chain(b.atoms.iter().map(|t| (t.x, -t.w)))
        .collect();
    v.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    let mut anchor = f64::NEG_INFINITY;
    for (x, w) in v {
        match out.last_mut() {
            Some(last) if x - anchor <= POSITION_TOL => last.1 += w,
            _ => {
                out.push((x, w));
                anchor = x;
            }
        }
    }
    out
}

/// Total variation distance `sup_A |a(A) - b(A)|`.
pub fn tv_distance(a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
    let diff = merged_difference(a, b);
    let pos: f64 = diff.iter().map(|d| d.1.max(0.0)).sum();
    let neg: f64 = diff.iter().map(|d| (-d.1).max(0.0)).sum();
    pos.max(neg)
}

/// Finite measure on the plane, used for couplings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointMeasure {
    atoms: Vec<(f64, f64, f64)>,
}

impl JointMeasure {
    /// Sorts lexicographically, sums duplicates and drops zero weights.
    pub fn new(mut atoms: Vec<(f64, f64, f64)>) -> Self {
        atoms.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
        let mut out: Vec<(f64, f64, f64)> = Vec::with_capacity(atoms.len());
        for (x, y, w) in atoms {
            match out.last_mut() {
                Some(last) if last.0 == x && last.1 == y => last.2 += w,
                _ => out.push((x, y, w)),
            }
        }
        out.retain(|a| a.2 != 0.0);
        Self { atoms: out }
    }

    pub fn atoms(&self) -> &[(f64, f64, f64)] {
        &self.atoms
    }

    pub fn first_marginal(&self) -> DiscreteMeasure {
        DiscreteMeasure::new(self.atoms.iter().map(|a| (a.0, a.2.max(0.0)))).unwrap_or_default()
    }

    pub fn second_marginal(&self) -> DiscreteMeasure {
        DiscreteMeasure::new(self.atoms.iter().map(|a| (a.1, a.2.max(0.0)))).unwrap_or_default()
    }

    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.2).sum()
    }

    /// Conditional law of `y` given `x`, unnormalized.
    pub fn kernel_at(&self, x: f64) -> DiscreteMeasure {
        DiscreteMeasure::new(
            self.atoms
                .iter()
                .filter(|a| (a.0 - x).abs() <= POSITION_TOL)
                .map(|a| (a.1, a.2.max(0.0))),
        )
        .unwrap_or_default()
    }
}

/// Total variation between planar measures, merging coordinates within [`POSITION_TOL`].
pub fn joint_tv_distance(a: &JointMeasure, b: &JointMeasure) -> f64 {
    let mut v: Vec<(f64, f64, f64)> = a
        .atoms
        .iter()
        .copied()
        .chain(b.atoms.iter().map(|&(x, y, w)| (x, y, -w)))
        .collect();
    v.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    // group on x first, then on y inside each x-group
    let mut groups: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut anchor = f64::NEG_INFINITY;
    for (x, y, w) in v {
        if groups.is_empty() || x - anchor > POSITION_TOL {
            groups.push(Vec::new());
            anchor = x;
        }
        groups.last_mut().unwrap().push((y, w));
    }
    let (mut pos, mut neg) = (0.0f64, 0.0f64);
    for mut g in groups {
        g.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut acc: Vec<f64> = Vec::new();
        let mut ya = f64::NEG_INFINITY;
        for (y, w) in g {
            if acc.is_empty() || y - ya > POSITION_TOL {
                acc.push(w);
                ya = y;
            } else {
                *acc.last_mut().unwrap() += w;
            }
        }
        for d in acc {
            pos += d.max(0.0);
            neg += (-d).max(0.0);
        }
    }
    pos.max(neg)
}

/// Why a pair fails the convex order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OrderViolation {
    Mass { mu: f64, nu: f64 },
    Mean { mu: f64, nu: f64 },
    Potential { witness: f64, gap: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexOrder {
    Ordered,
    EqualLaw,
    Fails(OrderViolation),
}

impl ConvexOrder {
    pub fn holds(&self) -> bool {
        !matches!(self, ConvexOrder::Fails(_))
    }
}

/// Tests `mu <=cx nu` through masses, means and put-potentials at all atoms.
pub fn check_convex_order(mu: &DiscreteMeasure, nu: &DiscreteMeasure, tol: f64) -> ConvexOrder {
    let (mm, nm) = (mu.mass(), nu.mass());
    if (mm - nm).abs() > tol {
        return ConvexOrder::Fails(OrderViolation::Mass { mu: mm, nu: nm });
    }
    let (ma, na) = (mu.first_moment(), nu.first_moment());
    if (ma - na).abs() > tol {
        return ConvexOrder::Fails(OrderViolation::Mean { mu: ma, nu: na });
    }
    if tv_distance(mu, nu) <= tol {
        return ConvexOrder::EqualLaw;
    }
    let (pm, pn) = (mu.put_potential(), nu.put_potential());
    let mut worst: Option<(f64, f64)> = None;
    for k in mu.atoms.iter().chain(nu.atoms.iter()).map(|a| a.x) {
        let gap = pn.evaluate(k) - pm.evaluate(k);
        if gap < -tol && worst.is_none_or(|w| gap < w.1) {
            worst = Some((k, gap));
        }
    }
    match worst {
        Some((witness, gap)) => ConvexOrder::Fails(OrderViolation::Potential { witness, gap }),
        None => ConvexOrder::Ordered,
    }
}

/// Collapses a piecewise-linear density into `n` equal-mass cells, each placed
/// at its conditional mean.
pub fn quantize_density(xs: &[f64], pdf: &[f64], n: usize) -> Result<DiscreteMeasure, MeasureError> {
    if xs.len() != pdf.len() || xs.len() < 2 {
        return Err(MeasureError::BadGrid("need at least two grid points and one density per point"));
    }
    if n == 0 {
        return Err(MeasureError::BadGrid("cell count must be positive"));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MeasureError::BadGrid("grid must be strictly increasing"));
    }
    if pdf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(MeasureError::BadGrid("density must be finite and non-negative"));
    }
    let seg_mass = |j: usize| 0.5 * (xs[j + 1] - xs[j]) * (pdf[j] + pdf[j + 1]);
    let total: f64 = (0..xs.len() - 1).map(seg_mass).sum();
    if !(total > 0.0) {
        return Err(MeasureError::NoMass(total));
    }
    let dens = |j: usize, x: f64| {
        let t = (x - xs[j]) / (xs[j + 1] - xs[j]);
        pdf[j] + (pdf[j + 1] - pdf[j]) * t
    };
    // Simpson is exact for the linear density and the quadratic x * density.
    let piece = |j: usize, a: f64, b: f64| {
        let m = 0.5 * (a + b);
        let (pa, pm, pb) = (dens(j, a), dens(j, m), dens(j, b));
        let h = (b - a) / 6.0;
        (h * (pa + 4.0 * pm + pb), h * (a * pa + 4.0 * m * pm + b * pb))
    };
    let target = total / n as f64;
    let mut atoms = Vec::with_capacity(n);
    let (mut cell_mass, mut cell_moment) = (0.0, 0.0);
    for j in 0..xs.len() - 1 {
        let mut a = xs[j];
        let b = xs[j + 1];
        let slope = (pdf[j + 1] - pdf[j]) / (b - a);
        loop {
            let (m, mo) = piece(j, a, b);
            let need = target - cell_mass;
            if atoms.len() + 1 == n || m < need {
                cell_mass += m;
                cell_moment += mo;
                break;
            }
            let pa = dens(j, a);
            let disc = (pa * pa + 2.0 * slope * need).max(0.0);
            let t = 2.0 * need / (pa + disc.sqrt());
            let cut = if t.is_finite() { (a + t).min(b) } else { b };
            let (m1, mo1) = piece(j, a, cut);
            cell_mass += m1;
            cell_moment += mo1;
            if cell_mass > 0.0 {
                atoms.push((cell_moment / cell_mass, cell_mass / total));
            }
            cell_mass = 0.0;
            cell_moment = 0.0;
            a = cut;
            if a >= b {
                break;
            }
        }
    }
    if cell_mass > 0.0 {
        atoms.push((cell_moment / cell_mass, cell_mass / total));
    }
    DiscreteMeasure::new(atoms)
}

/// Upper bound on the number of atoms of the generated target.
pub const MAX_SPREAD_ATOMS: usize = 14;

/// Seeded random pair `mu <=cx nu` on an integer lattice.
///
/// `mu` has `m_atoms` positions drawn from `[-8, 8]` with weights proportional to
/// integers in `1..=4`. Each spread step replaces a random atom `w δ_x` of the
/// current target by `w χ_{x-a, x, x+b}` with `a, b` in `1..=4`. Steps stop
/// early once the target reaches [`MAX_SPREAD_ATOMS`] atoms. The generator is
/// ChaCha8 seeded through `seed_from_u64`.
pub fn random_cx_pair(seed: u64, m_atoms: usize, spread_steps: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = m_atoms.clamp(1, 17);
    let mut pool: Vec<i32> = (-8..=8).collect();
    let mut xs = Vec::with_capacity(m);
    for _ in 0..m {
        let i = rng.gen_range(0..pool.len());
        xs.push(pool.swap_remove(i));
    }
    let ws: Vec<f64> = (0..m).map(|_| rng.gen_range(1..=4) as f64).collect();
    let tot: f64 = ws.iter().sum();
    let mu = DiscreteMeasure::new(xs.iter().zip(&ws).map(|(&x, &w)| (x as f64, w / tot))).unwrap();
    let mut nu = mu.clone();
    for _ in 0..spread_steps {
        if nu.len() >= MAX_SPREAD_ATOMS {
            break;
        }
        let i = rng.gen_range(0..nu.len());
        let Atom { x, w } = nu.atoms[i];
        let a = rng.gen_range(1..=4) as f64;
        let b = rng.gen_range(1..=4) as f64;
        let mut pairs: Vec<(f64, f64)> = nu.atoms.iter().map(|t| (t.x, t.w)).collect();
        pairs.remove(i);
        pairs.push((x - a, w * b / (a + b)));
        pairs.push((x + b, w * a / (a + b)));
        let cand = DiscreteMeasure::new(pairs).unwrap();
        if cand.len() > MAX_SPREAD_ATOMS {
            break;
        }
        nu = cand;
    }
    (mu, nu)
}

/// JSON measure schema shared by the command-line tools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum MeasureSpec {
    Atoms { atoms: Vec<[f64; 2]> },
    GridDensity { xs: Vec<f64>, pdf: Vec<f64>, n: usize },
}

impl MeasureSpec {
    pub fn to_measure(&self) -> Result<DiscreteMeasure, MeasureError> {
        match self {
            MeasureSpec::Atoms { atoms } => DiscreteMeasure::new(atoms.iter().map(|a| (a[0], a[1]))),
            MeasureSpec::GridDensity { xs, pdf, n } => quantize_density(xs, pdf, *n),
        }
    }

    pub fn from_measure(m: &DiscreteMeasure) -> Self {
        MeasureSpec::Atoms { atoms: m.atoms.iter().map(|a| [a.x, a.w]).collect() }
    }
}
