//! Dense two-phase primal simplex for the small equality-form programs used by
//! the hull membership test: maximize `cᵀx` subject to `Ax = b`, `x ≥ 0`.
//!
//! Problems here have `d + 1` rows and a few hundred columns, so a dense
//! tableau is the simplest thing that is fast enough.

const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct LpResult {
    /// Primal point. When infeasible, the phase-one minimizer of the
    /// artificial residual.
    pub x: Vec<f64>,
    /// Sum of absolute constraint residuals at `x`.
    pub infeasibility: f64,
    pub feasible: bool,
    #[allow(dead_code)]
    pub objective: f64,
}

struct Tableau {
    rows: usize,
    cols: usize,
    // rows x (cols + 1); last column is the right-hand side
    data: Vec<f64>,
    basis: Vec<usize>,
    active_row: Vec<bool>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.cols + 1) + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.data[r * w + c];
        for j in 0..w {
            self.data[r * w + j] /= p;
        }
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.data[i * w + c];
            if f == 0.0 {
                continue;
            }
            for j in 0..w {
                self.data[i * w + j] -= f * self.data[r * w + j];
            }
            self.data[i * w + c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Maximizes `cost` over the current basis; `allowed[j]` gates entering
    /// columns. Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> bool {
        let max_iter = 50 * (self.rows + self.cols);
        for iter in 0..max_iter {
            // Dantzig pricing, falling back to Bland's rule if it stalls.
            let bland = iter > 10 * (self.rows + self.cols);
            let mut entering = None;
            let mut best = PIVOT_EPS;
            for j in 0..self.cols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut r = cost[j];
                for i in 0..self.rows {
                    if self.active_row[i] {
                        r -= cost[self.basis[i]] * self.at(i, j);
                    }
                }
                if r > best {
                    entering = Some(j);
                    if bland {
                        break;
                    }
                    best = r;
                }
            }
            let Some(c) = entering else {
                return true;
            };
            let mut leaving = None;
            let mut ratio = f64::INFINITY;
            for i in 0..self.rows {
                if !self.active_row[i] {
                    continue;
                }
                let a = self.at(i, c);
                if a > PIVOT_EPS {
                    let q = self.rhs(i).max(0.0) / a;
                    if q < ratio - 1e-15
                        || (q <= ratio + 1e-15
                            && leaving.is_some_and(|l: usize| self.basis[i] < self.basis[l]))
                    {
                        ratio = q;
                        leaving = Some(i);
                    }
                }
            }
            match leaving {
                Some(r) => self.pivot(r, c),
                None => return false,
            }
        }
        true
    }

    fn value(&self, cost: &[f64]) -> f64 {
        (0..self.rows)
            .filter(|&i| self.active_row[i])
            .map(|i| cost[self.basis[i]] * self.rhs(i))
            .sum()
    }
}

/// Solves `max cᵀx s.t. Ax = b, x ≥ 0` where `a` is row-major `m × n`.
/// `feas_tol` bounds the phase-one residual (sum of absolute violations).
pub(crate) fn maximize(a: &[Vec<f64>], b: &[f64], c: &[f64], feas_tol: f64) -> LpResult {
    let m = a.len();
    let n = c.len();
    let cols = n + m;
    let w = cols + 1;
    let mut data = vec![0.0; m * w];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            data[i * w + j] = sign * a[i][j];
        }
        data[i * w + n + i] = 1.0;
        data[i * w + cols] = sign * b[i];
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        data,
        basis: (n..n + m).collect(),
        active_row: vec![true; m],
    };

    // Phase one: minimize the artificial sum.
    let mut phase1 = vec![0.0; cols];
    for v in phase1.iter_mut().skip(n) {
        *v = -1.0;
    }
    let all = vec![true; cols];
    tab.optimize(&phase1, &all);
    let infeasibility = -tab.value(&phase1);

    let extract = |tab: &Tableau| {
        let mut x = vec![0.0; n];
        for i in 0..m {
            if tab.active_row[i] && tab.basis[i] < n {
                x[tab.basis[i]] = tab.rhs(i).max(0.0);
            }
        }
        x
    };

    if infeasibility > feas_tol {
        return LpResult {
            x: extract(&tab),
            infeasibility,
            feasible: false,
            objective: f64::NAN,
        };
    }

    // Drive zero-level artificials out of the basis; drop redundant rows.
    for i in 0..m {
        if tab.basis[i] < n {
            continue;
        }
        let col = (0..n)
            .filter(|j| !tab.basis.contains(j))
            .find(|&j| tab.at(i, j).abs() > 1e-9);
        match col {
            Some(j) => tab.pivot(i, j),
            None => tab.active_row[i] = false,
        }
    }

    let mut phase2 = c.to_vec();
    phase2.resize(cols, 0.0);
    let mut allowed = vec![true; cols];
    for v in allowed.iter_mut().skip(n) {
        *v = false;
    }
    let bounded = tab.optimize(&phase2, &allowed);
    let objective = if bounded {
        tab.value(&phase2)
    } else {
        f64::INFINITY
    };
    LpResult {
        x: extract(&tab),
        infeasibility,
        feasible: true,
        objective,
    }
}
