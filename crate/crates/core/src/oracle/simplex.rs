//! Dense two-phase simplex with Bland's rule, for small linear programs.

use thiserror::Error;

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase-one residual {0})")]
    Infeasible(f64),
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("row has {got} coefficients, expected {want}")]
    Shape { got: usize, want: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

/// `minimize c·x` subject to rows `a·x (cmp) b` and `x >= 0`.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Cmp, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

struct Tableau {
    /// `m` constraint rows followed by the objective row; last column is the rhs.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.cols]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pr = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, q) in r.iter_mut().zip(&pr) {
                    *v -= f * q;
                }
            }
        }
        self.basis[row] = col;
    }

    /// Runs simplex iterations on the objective row, entering only `allowed` columns.
    fn optimize(&mut self, allowed: &dyn Fn(usize) -> bool) -> Result<(), LpError> {
        let m = self.basis.len();
        loop {
            let obj = &self.t[m];
            let Some(col) = (0..self.cols).find(|&j| allowed(j) && obj[j] < -PIVOT_TOL) else {
                return Ok(());
            };
            let mut best: Option<(f64, usize)> = None;
            for i in 0..m {
                let a = self.t[i][col];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    best = match best {
                        None => Some((ratio, i)),
                        Some((r, _)) if ratio < r - 1e-12 => Some((ratio, i)),
                        Some((r, k)) if ratio <= r + 1e-12 && self.basis[i] < self.basis[k] => Some((ratio, i)),
                        keep => keep,
                    };
                }
            }
            let Some((_, row)) = best else {
                return Err(LpError::Unbounded);
            };
            self.pivot(row, col);
        }
    }
}

impl LinearProgram {
    pub fn solve(&self) -> Result<LpSolution, LpError> {
        let n = self.cost.len();
        for (a, _, _) in &self.rows {
            if a.len() != n {
                return Err(LpError::Shape { got: a.len(), want: n });
            }
        }
        // normalize to non-negative right-hand sides
        let rows: Vec<(Vec<f64>, Cmp, f64)> = self
            .rows
            .iter()
            .map(|(a, c, b)| {
                if *b < 0.0 {
                    let flip = match c {
                        Cmp::Le => Cmp::Ge,
                        Cmp::Ge => Cmp::Le,
                        Cmp::Eq => Cmp::Eq,
                    };
                    (a.iter().map(|v| -v).collect(), flip, -b)
                } else {
                    (a.clone(), *c, *b)
                }
            })
            .collect();
        let m = rows.len();
        let n_slack = rows.iter().filter(|r| r.1 != Cmp::Eq).count();
        let n_art = rows.iter().filter(|r| r.1 != Cmp::Le).count();
        let cols = n + n_slack + n_art;
        let art_start = n + n_slack;
        let mut t = vec![vec![0.0; cols + 1]; m + 1];
        let mut basis = vec![0; m];
        let (mut si, mut ai) = (n, art_start);
        for (i, (a, c, b)) in rows.iter().enumerate() {
            t[i][..n].copy_from_slice(a);
            t[i][cols] = *b;
            match c {
                Cmp::Le => {
                    t[i][si] = 1.0;
                    basis[i] = si;
                    si += 1;
                }
                Cmp::Ge => {
                    t[i][si] = -1.0;
                    si += 1;
                    t[i][ai] = 1.0;
                    basis[i] = ai;
                    ai += 1;
                }
                Cmp::Eq => {
                    t[i][ai] = 1.0;
                    basis[i] = ai;
                    ai += 1;
                }
            }
        }
        let mut tab = Tableau { t, basis, cols };

        // phase one: minimize the sum of artificials
        for j in art_start..cols {
            tab.t[m][j] = 1.0;
        }
        for i in 0..m {
            if tab.basis[i] >= art_start {
                let r = tab.t[i].clone();
                for (v, q) in tab.t[m].iter_mut().zip(&r) {
                    *v -= q;
                }
            }
        }
        tab.optimize(&|_| true)?;
        let residual = -tab.t[m][cols];
        if residual > FEAS_TOL {
            return Err(LpError::Infeasible(residual));
        }
        // drive remaining artificials out of the basis
        for i in 0..m {
            if tab.basis[i] >= art_start {
                if let Some(j) = (0..art_start).find(|&j| tab.t[i][j].abs() > PIVOT_TOL) {
                    tab.pivot(i, j);
                }
            }
        }

        // phase two
        let mut obj = vec![0.0; cols + 1];
        obj[..n].copy_from_slice(&self.cost);
        for i in 0..m {
            let bj = tab.basis[i];
            if bj < cols && obj[bj] != 0.0 {
                let f = obj[bj];
                for (v, q) in obj.iter_mut().zip(&tab.t[i]) {
                    *v -= f * q;
                }
            }
        }
        tab.t[m] = obj;
        tab.optimize(&|j| j < art_start)?;

        let mut x = vec![0.0; n];
        for i in 0..m {
            if tab.basis[i] < n {
                x[tab.basis[i]] = tab.rhs(i);
            }
        }
        let objective = self.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution { x, objective })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18  ->  (2, 6), value 36
        let lp = LinearProgram {
            cost: vec![-3.0, -5.0],
            rows: vec![
                (vec![1.0, 0.0], Cmp::Le, 4.0),
                (vec![0.0, 2.0], Cmp::Le, 12.0),
                (vec![3.0, 2.0], Cmp::Le, 18.0),
            ],
        };
        let s = lp.solve().unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
        assert!((s.objective + 36.0).abs() < 1e-12);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + 2y, x + y = 3, x >= 1, y >= 1  ->  (2, 1)
        let lp = LinearProgram {
            cost: vec![1.0, 2.0],
            rows: vec![
                (vec![1.0, 1.0], Cmp::Eq, 3.0),
                (vec![1.0, 0.0], Cmp::Ge, 1.0),
                (vec![0.0, 1.0], Cmp::Ge, 1.0),
            ],
        };
        let s = lp.solve().unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let lp = LinearProgram {
            cost: vec![1.0],
            rows: vec![(vec![1.0], Cmp::Le, 1.0), (vec![1.0], Cmp::Ge, 2.0)],
        };
        assert!(matches!(lp.solve(), Err(LpError::Infeasible(_))));
        let lp = LinearProgram { cost: vec![-1.0], rows: vec![(vec![1.0], Cmp::Ge, 1.0)] };
        assert_eq!(lp.solve(), Err(LpError::Unbounded));
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // -x <= -2 means x >= 2
        let lp = LinearProgram { cost: vec![1.0], rows: vec![(vec![-1.0], Cmp::Le, -2.0)] };
        assert!((lp.solve().unwrap().x[0] - 2.0).abs() < 1e-12);
    }
}
