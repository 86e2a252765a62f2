//! Dense two-phase primal simplex with Bland's anti-cycling rule.
//!
//! The solver keeps a dictionary with one row per constraint and one column per
//! nonbasic variable, so a problem with many inequality rows and few structural
//! variables (the dual LPs) costs `rows x structural` memory rather than a full
//! tableau including every slack.

use crate::{Error, Result};

/// Pivot entries smaller than this are treated as zero.
const PIVOT_TOL: f64 = 1e-11;
/// Reduced costs above `-OPT_TOL` count as optimal.
const OPT_TOL: f64 = 1e-11;
/// Phase-1 residual above this means infeasible.
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

/// `minimize c·x  s.t.  A x (sense) b,  x >= 0` with a dense row-major `A`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    coeffs: Vec<f64>,
    senses: Vec<Sense>,
    rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub objective: f64,
    pub x: Vec<f64>,
    /// Basic variable per constraint row at termination. Indices `>= num_vars`
    /// denote slack or artificial variables.
    pub basis: Vec<usize>,
    pub pivots: usize,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        LinearProgram {
            num_vars: objective.len(),
            objective,
            coeffs: Vec::new(),
            senses: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn add_row(&mut self, row: &[f64], sense: Sense, rhs: f64) -> Result<()> {
        if row.len() != self.num_vars {
            return Err(Error::Dimension {
                op: "lp-row",
                operand: "row",
                expected: format!("{} coefficients", self.num_vars),
                found: vec![row.len()],
            });
        }
        self.coeffs.extend_from_slice(row);
        self.senses.push(sense);
        self.rhs.push(rhs);
        Ok(())
    }

    pub fn solve(&self) -> Result<LpSolution> {
        Dictionary::build(self).run(self)
    }
}

struct Dictionary {
    m: usize,
    cols: usize,
    // Row i reads: x_{basis[i]} + sum_j t[i*cols + j] x_{nonbasic[j]} = beta[i].
    t: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    nonbasic: Vec<usize>,
    // Objective reads: w = z + sum_j d[j] x_{nonbasic[j]}.
    d: Vec<f64>,
    z: f64,
    first_artificial: usize,
    pivots: usize,
}

impl Dictionary {
    fn build(lp: &LinearProgram) -> Dictionary {
        let n = lp.num_vars;
        let m = lp.num_rows();
        // Normalize to nonnegative right-hand sides.
        let mut senses = lp.senses.clone();
        let mut sign = vec![1.0; m];
        for i in 0..m {
            if lp.rhs[i] < 0.0 {
                sign[i] = -1.0;
                senses[i] = match senses[i] {
                    Sense::Le => Sense::Ge,
                    Sense::Ge => Sense::Le,
                    Sense::Eq => Sense::Eq,
                };
            }
        }
        // Variable numbering: structural, then one slack per inequality row, then artificials.
        let mut slack_of = vec![usize::MAX; m];
        let mut next = n;
        for i in 0..m {
            if senses[i] != Sense::Eq {
                slack_of[i] = next;
                next += 1;
            }
        }
        let first_artificial = next;
        let mut basis = vec![0; m];
        let mut surplus_rows = Vec::new();
        for i in 0..m {
            match senses[i] {
                Sense::Le => basis[i] = slack_of[i],
                Sense::Ge => {
                    basis[i] = next;
                    next += 1;
                    surplus_rows.push(i);
                }
                Sense::Eq => {
                    basis[i] = next;
                    next += 1;
                }
            }
        }
        let mut nonbasic: Vec<usize> = (0..n).collect();
        nonbasic.extend(surplus_rows.iter().map(|&i| slack_of[i]));
        let cols = nonbasic.len();
        let mut t = vec![0.0; m * cols];
        for i in 0..m {
            let src = &lp.coeffs[i * n..(i + 1) * n];
            let dst = &mut t[i * cols..i * cols + n];
            for (o, &a) in dst.iter_mut().zip(src) {
                *o = sign[i] * a;
            }
        }
        for (k, &i) in surplus_rows.iter().enumerate() {
            t[i * cols + n + k] = -1.0;
        }
        let beta = (0..m).map(|i| sign[i] * lp.rhs[i]).collect();
        Dictionary {
            m,
            cols,
            t,
            beta,
            basis,
            nonbasic,
            d: vec![0.0; cols],
            z: 0.0,
            first_artificial,
            pivots: 0,
        }
    }

    fn is_artificial(&self, var: usize) -> bool {
        var >= self.first_artificial
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution> {
        // Phase 1: minimize the sum of artificials.
        let art_rows: Vec<usize> = (0..self.m)
            .filter(|&i| self.is_artificial(self.basis[i]))
            .collect();
        if !art_rows.is_empty() {
            self.d.iter_mut().for_each(|v| *v = 0.0);
            self.z = 0.0;
            for &i in &art_rows {
                self.z += self.beta[i];
                let row = &self.t[i * self.cols..(i + 1) * self.cols];
                for (dj, tij) in self.d.iter_mut().zip(row) {
                    *dj -= tij;
                }
            }
            self.optimize(false)?;
            let scale = 1.0 + self.beta.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if self.z > FEAS_TOL * scale {
                return Err(Error::Infeasible);
            }
            self.drive_out_artificials();
        }

        // Phase 2.
        let cost = |var: usize| if var < lp.num_vars { lp.objective[var] } else { 0.0 };
        for j in 0..self.cols {
            self.d[j] = cost(self.nonbasic[j]);
        }
        self.z = 0.0;
        for i in 0..self.m {
            let cb = cost(self.basis[i]);
            if cb != 0.0 {
                self.z += cb * self.beta[i];
                let row = &self.t[i * self.cols..(i + 1) * self.cols];
                for (dj, tij) in self.d.iter_mut().zip(row) {
                    *dj -= cb * tij;
                }
            }
        }
        self.optimize(true)?;

        let mut x = vec![0.0; lp.num_vars];
        for i in 0..self.m {
            if self.basis[i] < lp.num_vars {
                x[self.basis[i]] = self.beta[i].max(0.0);
            }
        }
        let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
        Ok(LpSolution {
            objective,
            x,
            basis: self.basis,
            pivots: self.pivots,
        })
    }

    fn optimize(&mut self, block_artificials: bool) -> Result<()> {
        loop {
            // Bland: the eligible nonbasic variable with the smallest index enters.
            let mut enter: Option<usize> = None;
            for j in 0..self.cols {
                let var = self.nonbasic[j];
                if block_artificials && self.is_artificial(var) {
                    continue;
                }
                if self.d[j] < -OPT_TOL && enter.map_or(true, |e| var < self.nonbasic[e]) {
                    enter = Some(j);
                }
            }
            let Some(s) = enter else { return Ok(()) };

            // Ratio test, ties broken by the smallest basic variable index.
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.t[i * self.cols + s];
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.beta[i].max(0.0) / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                        if (!tie && ratio < best) || (tie && self.basis[i] < self.basis[r]) {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Err(Error::Unbounded);
            };
            self.pivot(r, s);
        }
    }

    fn drive_out_artificials(&mut self) {
        for r in 0..self.m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let row = &self.t[r * self.cols..(r + 1) * self.cols];
            let col = (0..self.cols)
                .filter(|&j| !self.is_artificial(self.nonbasic[j]) && row[j].abs() > 1e-9)
                .min_by_key(|&j| self.nonbasic[j]);
            // A row with no usable column is redundant; its artificial stays basic at zero.
            if let Some(s) = col {
                self.pivot(r, s);
            }
        }
    }

    fn pivot(&mut self, r: usize, s: usize) {
        let cols = self.cols;
        let p = self.t[r * cols + s];
        let inv = 1.0 / p;
        {
            let row = &mut self.t[r * cols..(r + 1) * cols];
            for v in row.iter_mut() {
                *v *= inv;
            }
            row[s] = inv;
        }
        self.beta[r] *= inv;
        let pivot_row: Vec<f64> = self.t[r * cols..(r + 1) * cols].to_vec();
        let beta_r = self.beta[r];
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let row = &mut self.t[i * cols..(i + 1) * cols];
            let f = row[s];
            if f == 0.0 {
                continue;
            }
            for (v, pr) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            row[s] = -f * inv;
            self.beta[i] -= f * beta_r;
        }
        let ds = self.d[s];
        if ds != 0.0 {
            for (dj, pr) in self.d.iter_mut().zip(&pivot_row) {
                *dj -= ds * pr;
            }
            self.d[s] = -ds * inv;
            self.z += ds * beta_r;
        }
        std::mem::swap(&mut self.basis[r], &mut self.nonbasic[s]);
        self.pivots += 1;
    }
}
