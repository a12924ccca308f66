//! Executable checks on curtain tables and couplings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curtain::{point_construction, CouplingInterval, CurtainInterval, CurtainTable, LiftedCoupling};
use crate::measures::{tv_distance, DiscreteMeasure};
use crate::shadow::shadow;

/// Slack on the open interval `(R_i, S_i)` in the left-monotonicity test.
pub const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(residual: f64, tolerance: f64) -> Self {
        Self { residual, tolerance, pass: residual <= tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub marginal_mu_tv: Check,
    pub marginal_nu_tv: Check,
    pub martingale_residual_max: Check,
    pub monotonicity_violations: usize,
    pub monotonicity_pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proby_residual_max: Option<Check>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shadow_consistency_tv_max: Option<Check>,
    pub pass: bool,
}

impl VerificationReport {
    fn refresh(&mut self) {
        self.pass = self.marginal_mu_tv.pass
            && self.marginal_nu_tv.pass
            && self.martingale_residual_max.pass
            && self.monotonicity_pass
            && self.proby_residual_max.is_none_or(|c| c.pass)
            && self.shadow_consistency_tv_max.is_none_or(|c| c.pass);
    }

    /// Adds the checks that need the full table.
    pub fn with_table_checks(mut self, table: &CurtainTable, mu: &DiscreteMeasure, nu: &DiscreteMeasure, tol: f64) -> Self {
        self.proby_residual_max = Some(Check::new(verify_marginal_bracket(table, nu, 100, 0), tol));
        self.shadow_consistency_tv_max = Some(Check::new(verify_shadow_consistency(table, mu, nu, 20), tol));
        self.monotonicity_violations = verify_left_monotone(table);
        self.monotonicity_pass = self.monotonicity_violations == 0;
        self.refresh();
        self
    }
}

/// Marginals, martingale property and left-monotonicity of a coupling.
pub fn verify_coupling(
    pi: &LiftedCoupling,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    tol: f64,
) -> VerificationReport {
    let mu_tv = tv_distance(&pi.joint.first_marginal(), mu);
    let nu_tv = tv_distance(&pi.joint.second_marginal(), nu);
    let mut drift = 0.0f64;
    let atoms = pi.joint.atoms();
    let mut i = 0;
    while i < atoms.len() {
        let x = atoms[i].0;
        let mut acc = 0.0;
        while i < atoms.len() && atoms[i].0 == x {
            acc += (atoms[i].1 - x) * atoms[i].2;
            i += 1;
        }
        drift = drift.max(acc.abs());
    }
    let violations = count_monotone_violations(&pi.intervals);
    let mut report = VerificationReport {
        marginal_mu_tv: Check::new(mu_tv, tol),
        marginal_nu_tv: Check::new(nu_tv, tol),
        martingale_residual_max: Check::new(drift, tol),
        monotonicity_violations: violations,
        monotonicity_pass: violations == 0,
        proby_residual_max: None,
        shadow_consistency_tv_max: None,
        pass: false,
    };
    report.refresh();
    report
}

fn count_monotone_violations(iv: &[CouplingInterval]) -> usize {
    let mut bad = 0;
    for (i, a) in iv.iter().enumerate() {
        for b in &iv[i + 1..] {
            let r_inside = b.r > a.r + MONOTONE_SLACK && b.r < a.s - MONOTONE_SLACK;
            if b.s < a.s - MONOTONE_SLACK || r_inside {
                bad += 1;
            }
        }
    }
    bad
}

/// Number of violating interval pairs plus intervals breaking `R <= Q <= G <= S`.
pub fn verify_left_monotone(table: &CurtainTable) -> usize {
    let ordered = |iv: &CurtainInterval| {
        iv.r <= iv.q + MONOTONE_SLACK && iv.q <= iv.g + MONOTONE_SLACK && iv.g <= iv.s + MONOTONE_SLACK
    };
    let local = table.intervals.iter().filter(|iv| !ordered(iv)).count();
    let pairs: Vec<CouplingInterval> = table
        .intervals
        .iter()
        .map(|iv| CouplingInterval { u_lo: iv.u_lo, u_hi: iv.u_hi, x: iv.g, r: iv.r, s: iv.s })
        .collect();
    local + count_monotone_violations(&pairs)
}

/// Residual of `P[Y <= y] = S^{-1}(y) + phi(S^{-1}(y))` against `F_nu(y)` at one `y`.
pub fn proby_residual(table: &CurtainTable, nu: &DiscreteMeasure, y: f64) -> f64 {
    let v = table.s_inverse(y);
    (v + table.phi_left(v) - nu.cdf(y)).abs()
}

/// Distance of `F_nu(y) - S^{-1}(y)` from the bracket `[phi(v), phi(v+)]`.
pub fn proby_bracket_residual(table: &CurtainTable, nu: &DiscreteMeasure, y: f64) -> f64 {
    let v = table.s_inverse(y);
    let lo = if v > 0.0 { table.phi_left(v) } else { 0.0 };
    let hi = table.phi_right(v);
    let t = nu.cdf(y) - v;
    (lo - t).max(t - hi).max(0.0)
}

/// Draws `y` uniformly on `[l_nu - 1, r_nu + 1]`, skipping atoms of both
/// marginals, and returns the largest [`proby_residual`].
pub fn verify_marginal_identity(table: &CurtainTable, nu: &DiscreteMeasure, samples: usize, seed: u64) -> f64 {
    sample_off_atoms(table, nu, samples, seed)
        .into_iter()
        .map(|y| proby_residual(table, nu, y))
        .fold(0.0, f64::max)
}

/// As [`verify_marginal_identity`] but with [`proby_bracket_residual`].
pub fn verify_marginal_bracket(table: &CurtainTable, nu: &DiscreteMeasure, samples: usize, seed: u64) -> f64 {
    sample_off_atoms(table, nu, samples, seed)
        .into_iter()
        .map(|y| proby_bracket_residual(table, nu, y))
        .fold(0.0, f64::max)
}

/// Non-atom sample points used by the identity checks.
pub fn sample_off_atoms(table: &CurtainTable, nu: &DiscreteMeasure, samples: usize, seed: u64) -> Vec<f64> {
    let (Some(lo), Some(hi)) = (nu.lower(), nu.upper()) else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let is_atom = |y: f64| nu.weight_at(y) > 0.0 || table.intervals.iter().any(|iv| iv.g == y);
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let y = rng.gen_range(lo - 1.0..=hi + 1.0);
        if !is_atom(y) {
            out.push(y);
        }
    }
    out
}

/// Second marginal of the coupling restricted to levels `(0, u]`.
pub fn restricted_second_marginal(table: &CurtainTable, u: f64) -> DiscreteMeasure {
    let mut pairs = Vec::new();
    for iv in &table.intervals {
        if iv.u_lo >= u {
            break;
        }
        let w = iv.u_hi.min(u) - iv.u_lo;
        let span = iv.s - iv.r;
        if span < crate::curtain::DEGENERATE_WIDTH {
            pairs.push((iv.g, w));
        } else {
            pairs.push((iv.r, w * (iv.s - iv.g) / span));
            pairs.push((iv.s, w * (iv.g - iv.r) / span));
        }
    }
    DiscreteMeasure::new(pairs).unwrap_or_default()
}

/// Largest TV distance between the restricted second marginal and
/// `shadow(mu_u, nu)` over all table breakpoints and `grid` equispaced levels.
pub fn verify_shadow_consistency(table: &CurtainTable, mu: &DiscreteMeasure, nu: &DiscreteMeasure, grid: usize) -> f64 {
    let mut levels: Vec<f64> = table.intervals.iter().map(|iv| iv.u_hi).collect();
    levels.extend((1..=grid).map(|k| table.mass * k as f64 / grid as f64));
    levels
        .into_iter()
        .filter(|&u| u > 0.0)
        .map(|u| match shadow(&mu.restricted_unchecked(u), nu) {
            Ok(s) => tv_distance(&restricted_second_marginal(table, u), &s),
            Err(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

/// Residuals of the slope laws for `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiLaws {
    /// Largest `phi(u) - (v - u) - phi(v)` over `u < v`.
    pub lipschitz_excess: f64,
    /// Largest increase of `phi` along a run where `G < S`.
    pub run_increase: f64,
    /// Largest gap between finite differences of pointwise `phi` and `-(S-G)/(S-R)`.
    pub derivative_gap: f64,
}

/// Maximal runs of intervals on which `G(u+) < S(u)` throughout.
fn runs_below_s(iv: &[CurtainInterval]) -> Vec<&[CurtainInterval]> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 0..=iv.len() {
        let cut = i == iv.len() || iv[i].is_stationary() || (i > start && iv[i - 1].s <= iv[i].g);
        if cut {
            if i > start {
                runs.push(&iv[start..i]);
            }
            start = if i < iv.len() && iv[i].is_stationary() { i + 1 } else { i };
        }
    }
    runs
}

/// Checks `phi(v) >= phi(u) - (v - u)`, monotonicity on runs with `G < S`, and
/// the a.e. derivative from finite differences at `per_run` interior points.
pub fn verify_phi_laws(table: &CurtainTable, mu: &DiscreteMeasure, nu: &DiscreteMeasure, per_run: usize) -> PhiLaws {
    // phi(u) + u non-decreasing is equivalent to the one-sided Lipschitz bound
    let mut lipschitz = 0.0f64;
    let mut running = f64::NEG_INFINITY;
    for iv in &table.intervals {
        for (u, phi) in [(iv.u_lo, iv.phi), (iv.u_hi, iv.phi_end())] {
            lipschitz = lipschitz.max(running - (phi + u));
            running = running.max(phi + u);
        }
    }
    let mut increase = 0.0f64;
    let mut gap = 0.0f64;
    for run in runs_below_s(&table.intervals) {
        let mut prev = f64::INFINITY;
        for iv in run {
            increase = increase.max(iv.phi - prev).max(iv.phi_end() - iv.phi);
            prev = iv.phi_end();
        }
        let (lo, hi) = (run[0].u_lo, run[run.len() - 1].u_hi);
        for k in 1..=per_run {
            let u = lo + (hi - lo) * k as f64 / (per_run + 1) as f64;
            let Some(iv) = table.locate(u) else { continue };
            let h = 1e-7f64.min(0.25 * (u - iv.u_lo)).min(0.25 * (iv.u_hi - u));
            if h <= 1e-12 {
                continue;
            }
            let (Ok(a), Ok(b)) = (point_construction(mu, nu, u - h), point_construction(mu, nu, u + h)) else {
                gap = f64::INFINITY;
                continue;
            };
            let fd = (b.phi - a.phi) / (2.0 * h);
            let want = -(iv.s - iv.g) / (iv.s - iv.r);
            gap = gap.max((fd - want).abs());
        }
    }
    PhiLaws { lipschitz_excess: lipschitz, run_increase: increase, derivative_gap: gap }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curtain::{build_curtain, coupling};
    use crate::measures::JointMeasure;

    fn m(pairs: &[(f64, f64)]) -> DiscreteMeasure {
        DiscreteMeasure::new(pairs.iter().copied()).unwrap()
    }

    fn three_atom() -> (DiscreteMeasure, DiscreteMeasure) {
        let t = 1.0 / 3.0;
        (m(&[(-1.0, 0.5), (1.0, 0.5)]), m(&[(-3.0, t), (0.0, t), (3.0, t)]))
    }

    #[test]
    fn identity_coupling_passes() {
        let nu = m(&[(-1.0, 0.25), (0.0, 0.25), (2.0, 0.5)]);
        let t = build_curtain(&nu, &nu).unwrap();
        let r = verify_coupling(&coupling(&t), &nu, &nu, 1e-9);
        assert!(r.pass);
        assert_eq!(r.martingale_residual_max.residual, 0.0);
        assert_eq!(r.marginal_nu_tv.residual, 0.0);
    }

    #[test]
    fn three_atom_coupling_passes() {
        let (mu, nu) = three_atom();
        let t = build_curtain(&mu, &nu).unwrap();
        let r = verify_coupling(&coupling(&t), &mu, &nu, 1e-12).with_table_checks(&t, &mu, &nu, 1e-12);
        assert!(r.pass, "{r:?}");
        assert_eq!(verify_left_monotone(&t), 0);
    }

    #[test]
    fn single_valued_identity_breaks_below_support() {
        // S^{-1}(y) = 0 and phi(0+) = 1/3 while F_nu(y) = 0
        let (mu, nu) = three_atom();
        let t = build_curtain(&mu, &nu).unwrap();
        assert!((proby_residual(&t, &nu, 1.5)).abs() < 1e-12);
        let y = -4.0;
        assert!((proby_residual(&t, &nu, y) - 1.0 / 3.0).abs() < 1e-12);
        assert!(proby_bracket_residual(&t, &nu, y) < 1e-12);
        assert!(t.law_cdf(y).abs() < 1e-12);
    }

    #[test]
    fn corrupted_kernel_is_flagged() {
        let (mu, nu) = three_atom();
        let c = coupling(&build_curtain(&mu, &nu).unwrap());
        let mut atoms = c.joint.atoms().to_vec();
        atoms[0].2 += 1e-3;
        atoms[1].2 -= 1e-3;
        let bad = LiftedCoupling { intervals: c.intervals.clone(), joint: JointMeasure::new(atoms) };
        let r = verify_coupling(&bad, &mu, &nu, 1e-9);
        assert!(!r.pass);
        assert!(r.martingale_residual_max.residual > 1e-4);
    }

    #[test]
    fn swapped_lower_targets_are_flagged() {
        let mu = m(&[(-1.0, 0.5), (1.0, 0.5)]);
        let nu = m(&[(-2.0, 0.25), (0.0, 0.5), (2.0, 0.25)]);
        let mut t = build_curtain(&mu, &nu).unwrap();
        assert_eq!(verify_left_monotone(&t), 0);
        // put the second lower target strictly inside the first interval's span
        t.intervals[1].r = -0.5;
        assert!(verify_left_monotone(&t) > 0);
    }

    #[test]
    fn identity_at_examples() {
        let nu = m(&[(-1.0, 0.5), (1.0, 0.5)]);
        let t = build_curtain(&DiscreteMeasure::dirac(0.0), &nu).unwrap();
        assert!(proby_residual(&t, &nu, 0.0) < 1e-15);
        assert!(proby_residual(&t, &nu, 3.0) < 1e-15);
        assert!(proby_bracket_residual(&t, &nu, -3.0) < 1e-15);
    }

    #[test]
    fn shadow_consistency_examples() {
        let (mu, nu) = three_atom();
        let t = build_curtain(&mu, &nu).unwrap();
        let half = restricted_second_marginal(&t, 0.5);
        assert!(tv_distance(&half, &m(&[(-3.0, 1.0 / 6.0), (0.0, 1.0 / 3.0)])) < 1e-15);
        assert!(tv_distance(&restricted_second_marginal(&t, 1.0), &nu) < 1e-15);
        assert!(restricted_second_marginal(&t, 0.0).is_empty());
        assert!(verify_shadow_consistency(&t, &mu, &nu, 10) < 1e-12);
    }

    #[test]
    fn phi_laws_on_example() {
        let (mu, nu) = three_atom();
        let t = build_curtain(&mu, &nu).unwrap();
        let laws = verify_phi_laws(&t, &mu, &nu, 20);
        assert!(laws.lipschitz_excess <= 1e-10);
        assert!(laws.run_increase <= 1e-12);
        assert!(laws.derivative_gap <= 1e-6, "{laws:?}");
    }
}
