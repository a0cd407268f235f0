//! Exact linear programming over rationals.
//!
//! A dense two-phase simplex with Bland's rule: slow by LP-solver standards
//! but exact, deterministic, and guaranteed to terminate, which is what the
//! equilibrium conditions need — they hinge on equalities like a bid tying a
//! reserve, where floating point would misclassify.

use num::{One, Signed, Zero};

use crate::rational::Q;

/// Constraint sense.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

/// `maximize c·x subject to rows, x >= 0`.
#[derive(Clone, Debug, Default)]
pub struct LpProblem {
    pub num_vars: usize,
    pub objective: Vec<(usize, Q)>,
    pub rows: Vec<LpRow>,
}

#[derive(Clone, Debug)]
pub struct LpRow {
    pub coeffs: Vec<(usize, Q)>,
    pub rel: Rel,
    pub rhs: Q,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpResult {
    Optimal { objective: Q, point: Vec<Q> },
    Infeasible,
    Unbounded,
}

impl LpProblem {
    pub fn new(num_vars: usize) -> Self {
        LpProblem { num_vars, objective: Vec::new(), rows: Vec::new() }
    }

    pub fn constrain(&mut self, coeffs: Vec<(usize, Q)>, rel: Rel, rhs: Q) {
        debug_assert!(coeffs.iter().all(|(j, _)| *j < self.num_vars));
        self.rows.push(LpRow { coeffs, rel, rhs });
    }

    pub fn set_objective(&mut self, coeffs: Vec<(usize, Q)>) {
        self.objective = coeffs;
    }

    /// Feasibility of the system alone (zero objective).
    pub fn feasible_point(&self) -> Option<Vec<Q>> {
        let mut p = self.clone();
        p.objective.clear();
        match p.maximize() {
            LpResult::Optimal { point, .. } => Some(point),
            _ => None,
        }
    }

    pub fn maximize(&self) -> LpResult {
        Tableau::build(self).solve()
    }
}

struct Tableau {
    // rows[r][c]: m constraint rows over `cols` columns plus rhs at index cols
    rows: Vec<Vec<Q>>,
    basis: Vec<usize>,
    num_structural: usize,
    cols: usize,
    artificial_start: usize,
    objective: Vec<Q>, // dense over structural vars
}

impl Tableau {
    fn build(p: &LpProblem) -> Tableau {
        let n = p.num_vars;
        let m = p.rows.len();
        let mut num_slack = 0;
        let mut num_art = 0;
        for row in &p.rows {
            // rows are normalized to rhs >= 0 below; the slack/artificial
            // pattern depends on the normalized sense
            let flip = row.rhs.is_negative();
            let rel = normalized_rel(row.rel, flip);
            match rel {
                Rel::Le => num_slack += 1,
                Rel::Ge => {
                    num_slack += 1;
                    num_art += 1;
                }
                Rel::Eq => num_art += 1,
            }
        }
        let cols = n + num_slack + num_art;
        let artificial_start = n + num_slack;
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut next_slack = n;
        let mut next_art = artificial_start;
        for row in &p.rows {
            let flip = row.rhs.is_negative();
            let rel = normalized_rel(row.rel, flip);
            let mut dense = vec![Q::zero(); cols + 1];
            for (j, c) in &row.coeffs {
                let v = if flip { -c.clone() } else { c.clone() };
                dense[*j] += v;
            }
            dense[cols] = if flip { -row.rhs.clone() } else { row.rhs.clone() };
            match rel {
                Rel::Le => {
                    dense[next_slack] = Q::one();
                    basis.push(next_slack);
                    next_slack += 1;
                }
                Rel::Ge => {
                    dense[next_slack] = -Q::one();
                    next_slack += 1;
                    dense[next_art] = Q::one();
                    basis.push(next_art);
                    next_art += 1;
                }
                Rel::Eq => {
                    dense[next_art] = Q::one();
                    basis.push(next_art);
                    next_art += 1;
                }
            }
            rows.push(dense);
        }
        let mut objective = vec![Q::zero(); n];
        for (j, c) in &p.objective {
            objective[*j] += c.clone();
        }
        Tableau { rows, basis, num_structural: n, cols, artificial_start, objective }
    }

    fn solve(mut self) -> LpResult {
        if self.artificial_start < self.cols {
            // phase 1: minimize the artificial sum, priced out over the rows
            // whose basic variable is artificial
            let mut w = vec![Q::zero(); self.cols + 1];
            for (r, &b) in self.basis.iter().enumerate() {
                if b >= self.artificial_start {
                    for c in 0..=self.cols {
                        let v = self.rows[r][c].clone();
                        w[c] += v;
                    }
                }
            }
            loop {
                // Bland: smallest non-artificial column that still reduces w
                let enter = (0..self.artificial_start).find(|&j| w[j].is_positive());
                let Some(enter) = enter else { break };
                let Some(leave) = self.ratio_test(enter) else {
                    // a positive phase-1 column with no blocking row cannot
                    // happen for a bounded artificial objective
                    break;
                };
                self.pivot(leave, enter, Some(&mut w));
            }
            if w[self.cols].is_positive() {
                return LpResult::Infeasible;
            }
            self.evict_artificials();
        }

        // phase 2 over the original objective
        let mut z = vec![Q::zero(); self.cols + 1];
        for (j, c) in self.objective.clone().iter().enumerate() {
            z[j] = -c.clone();
        }
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.num_structural && !self.objective[b].is_zero() {
                let scale = self.objective[b].clone();
                for c in 0..=self.cols {
                    let v = self.rows[r][c].clone() * scale.clone();
                    z[c] += v;
                }
            }
        }
        loop {
            let enter = (0..self.artificial_start).find(|&j| z[j].is_negative());
            let Some(enter) = enter else { break };
            let Some(leave) = self.ratio_test(enter) else {
                return LpResult::Unbounded;
            };
            self.pivot(leave, enter, Some(&mut z));
        }

        let mut point = vec![Q::zero(); self.num_structural];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.num_structural {
                point[b] = self.rows[r][self.cols].clone();
            }
        }
        LpResult::Optimal { objective: z[self.cols].clone(), point }
    }

    /// Leaving row by minimum ratio; ties broken by smallest basic variable
    /// index (Bland), which rules out cycling.
    fn ratio_test(&self, enter: usize) -> Option<usize> {
        let mut best: Option<(Q, usize, usize)> = None; // (ratio, basis var, row)
        for r in 0..self.rows.len() {
            let a = &self.rows[r][enter];
            if a.is_positive() {
                let ratio = self.rows[r][self.cols].clone() / a.clone();
                let replace = match &best {
                    None => true,
                    Some((br, bvar, _)) => {
                        ratio < *br || (ratio == *br && self.basis[r] < *bvar)
                    }
                };
                if replace {
                    best = Some((ratio, self.basis[r], r));
                }
            }
        }
        best.map(|(_, _, r)| r)
    }

    fn pivot(&mut self, row: usize, col: usize, cost: Option<&mut Vec<Q>>) {
        let piv = self.rows[row][col].clone();
        for c in 0..=self.cols {
            self.rows[row][c] = self.rows[row][c].clone() / piv.clone();
        }
        for r in 0..self.rows.len() {
            if r != row && !self.rows[r][col].is_zero() {
                let f = self.rows[r][col].clone();
                for c in 0..=self.cols {
                    let delta = self.rows[row][c].clone() * f.clone();
                    self.rows[r][c] -= delta;
                }
            }
        }
        if let Some(cost) = cost {
            if !cost[col].is_zero() {
                let f = cost[col].clone();
                for c in 0..=self.cols {
                    let delta = self.rows[row][c].clone() * f.clone();
                    cost[c] -= delta;
                }
            }
        }
        self.basis[row] = col;
    }

    /// After phase 1, pivot any artificial variables out of the basis (their
    /// value is zero); rows with no eligible pivot are redundant and dropped.
    fn evict_artificials(&mut self) {
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] >= self.artificial_start {
                let col = (0..self.artificial_start).find(|&j| !self.rows[r][j].is_zero());
                match col {
                    Some(col) => self.pivot(r, col, None),
                    None => {
                        self.rows.remove(r);
                        self.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        // zero the artificial columns so they can never re-enter
        for row in &mut self.rows {
            for c in self.artificial_start..self.cols {
                row[c] = Q::zero();
            }
        }
    }
}

fn normalized_rel(rel: Rel, flip: bool) -> Rel {
    match (rel, flip) {
        (Rel::Le, true) => Rel::Ge,
        (Rel::Ge, true) => Rel::Le,
        (r, _) => r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{q, qi};

    fn objective_of(r: LpResult) -> Q {
        match r {
            LpResult::Optimal { objective, .. } => objective,
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn maximizes_a_textbook_lp() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18
        let mut p = LpProblem::new(2);
        p.set_objective(vec![(0, qi(3)), (1, qi(5))]);
        p.constrain(vec![(0, qi(1))], Rel::Le, qi(4));
        p.constrain(vec![(1, qi(2))], Rel::Le, qi(12));
        p.constrain(vec![(0, qi(3)), (1, qi(2))], Rel::Le, qi(18));
        assert_eq!(objective_of(p.maximize()), qi(36));
    }

    #[test]
    fn handles_equalities_and_ge() {
        // max x + y s.t. x + y = 1, x >= 1/4  ->  opt 1
        let mut p = LpProblem::new(2);
        p.set_objective(vec![(0, qi(1)), (1, qi(1))]);
        p.constrain(vec![(0, qi(1)), (1, qi(1))], Rel::Eq, qi(1));
        p.constrain(vec![(0, qi(1))], Rel::Ge, q(1, 4));
        assert_eq!(objective_of(p.maximize()), qi(1));
    }

    #[test]
    fn detects_infeasible() {
        let mut p = LpProblem::new(1);
        p.constrain(vec![(0, qi(1))], Rel::Ge, qi(2));
        p.constrain(vec![(0, qi(1))], Rel::Le, qi(1));
        assert_eq!(p.maximize(), LpResult::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let mut p = LpProblem::new(1);
        p.set_objective(vec![(0, qi(1))]);
        p.constrain(vec![(0, qi(1))], Rel::Ge, qi(1));
        assert_eq!(p.maximize(), LpResult::Unbounded);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // x - y <= -1 with x, y >= 0: y >= x + 1 feasible; max x - y = -1
        let mut p = LpProblem::new(2);
        p.set_objective(vec![(0, qi(1)), (1, qi(-1))]);
        p.constrain(vec![(0, qi(1)), (1, qi(-1))], Rel::Le, qi(-1));
        p.constrain(vec![(0, qi(1))], Rel::Le, qi(5));
        p.constrain(vec![(1, qi(1))], Rel::Le, qi(10));
        assert_eq!(objective_of(p.maximize()), qi(-1));
    }

    #[test]
    fn exact_fraction_solution() {
        // max y s.t. 3y <= 1  ->  y = 1/3 exactly
        let mut p = LpProblem::new(1);
        p.set_objective(vec![(0, qi(1))]);
        p.constrain(vec![(0, qi(3))], Rel::Le, qi(1));
        match p.maximize() {
            LpResult::Optimal { objective, point } => {
                assert_eq!(objective, q(1, 3));
                assert_eq!(point[0], q(1, 3));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn degenerate_ties_terminate() {
        // degenerate vertex at origin; Bland must not cycle
        let mut p = LpProblem::new(3);
        p.set_objective(vec![(0, q(3, 4)), (1, qi(-150)), (2, q(1, 50))]);
        p.constrain(vec![(0, q(1, 4)), (1, qi(-60)), (2, q(-1, 25))], Rel::Le, qi(0));
        p.constrain(vec![(0, q(1, 2)), (1, qi(-90)), (2, q(-1, 50))], Rel::Le, qi(0));
        p.constrain(vec![(2, qi(1))], Rel::Le, qi(1));
        match p.maximize() {
            LpResult::Optimal { objective, .. } => assert_eq!(objective, q(1, 20)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn redundant_equalities_survive_phase_one() {
        let mut p = LpProblem::new(2);
        p.set_objective(vec![(0, qi(1))]);
        p.constrain(vec![(0, qi(1)), (1, qi(1))], Rel::Eq, qi(1));
        p.constrain(vec![(0, qi(2)), (1, qi(2))], Rel::Eq, qi(2));
        assert_eq!(objective_of(p.maximize()), qi(1));
    }
}
