//! Dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Solves `minimize c.x` subject to linear rows and `x >= 0`.

const PIVOT_EPS: f64 = 1e-10;
const FEASIBILITY_EPS: f64 = 1e-8;
const MAX_PIVOTS: usize = 200_000;

type Row = (Vec<(usize, f64)>, Relation, f64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    /// Sparse `(variable, coefficient)` terms.
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpSolution {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram { num_vars, objective: vec![0.0; num_vars], constraints: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn set_objective(&mut self, objective: Vec<f64>) {
        assert_eq!(objective.len(), self.num_vars);
        self.objective = objective;
    }

    pub fn add_constraint(&mut self, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        debug_assert!(terms.iter().all(|&(v, _)| v < self.num_vars));
        self.constraints.push(Constraint { terms, relation, rhs });
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn solve(&self) -> LpSolution {
        Tableau::build(self).run(&self.objective)
    }
}

struct Tableau {
    /// `rows x (cols + 1)`, last column is the right-hand side.
    cells: Vec<Vec<f64>>,
    basis: Vec<usize>,
    num_vars: usize,
    first_artificial: usize,
    cols: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let rows = lp.constraints.len();
        let n = lp.num_vars;
        // normalize to rhs >= 0
        let normalized: Vec<Row> = lp
            .constraints
            .iter()
            .map(|c| {
                if c.rhs < 0.0 {
                    let flipped = match c.relation {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (c.terms.iter().map(|&(v, a)| (v, -a)).collect(), flipped, -c.rhs)
                } else {
                    (c.terms.clone(), c.relation, c.rhs)
                }
            })
            .collect();
        let num_slack = normalized.iter().filter(|c| c.1 != Relation::Eq).count();
        let num_artificial = normalized.iter().filter(|c| c.1 != Relation::Le).count();
        let first_artificial = n + num_slack;
        let cols = first_artificial + num_artificial;

        let mut cells = vec![vec![0.0; cols + 1]; rows];
        let mut basis = vec![0; rows];
        let (mut slack, mut artificial) = (n, first_artificial);
        for (r, (terms, relation, rhs)) in normalized.into_iter().enumerate() {
            let row = &mut cells[r];
            for (v, a) in terms {
                row[v] += a;
            }
            row[cols] = rhs;
            match relation {
                Relation::Le => {
                    row[slack] = 1.0;
                    basis[r] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                    row[artificial] = 1.0;
                    basis[r] = artificial;
                    artificial += 1;
                }
                Relation::Eq => {
                    row[artificial] = 1.0;
                    basis[r] = artificial;
                    artificial += 1;
                }
            }
        }
        Tableau { cells, basis, num_vars: n, first_artificial, cols }
    }

    /// Reduced-cost row for `costs` (indexed by column) under the current basis.
    fn price_out(&self, costs: &[f64]) -> Vec<f64> {
        let mut z = costs.to_vec();
        z.push(0.0);
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = costs[b];
            if cb != 0.0 {
                for (zj, a) in z.iter_mut().zip(&self.cells[r]) {
                    *zj -= cb * a;
                }
            }
        }
        z
    }

    fn pivot(&mut self, z: &mut [f64], row: usize, col: usize) {
        let p = self.cells[row][col];
        for a in self.cells[row].iter_mut() {
            *a /= p;
        }
        let pivot_row = self.cells[row].clone();
        for (r, other) in self.cells.iter_mut().enumerate() {
            let f = other[col];
            if r != row && f != 0.0 {
                for (a, pr) in other.iter_mut().zip(&pivot_row) {
                    *a -= f * pr;
                }
                other[col] = 0.0;
            }
        }
        let f = z[col];
        if f != 0.0 {
            for (a, pr) in z.iter_mut().zip(&pivot_row) {
                *a -= f * pr;
            }
            z[col] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Bland's rule iterations over columns `< allowed`. `Ok(true)` = optimal,
    /// `Ok(false)` = unbounded.
    fn iterate(&mut self, z: &mut [f64], allowed: usize, pivots: &mut usize) -> Result<bool, ()> {
        loop {
            let Some(col) = (0..allowed).find(|&j| z[j] < -PIVOT_EPS) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.cells.iter().enumerate() {
                let a = row[col];
                if a > PIVOT_EPS {
                    let ratio = row[self.cols] / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - PIVOT_EPS
                                || (ratio <= lratio + PIVOT_EPS && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Ok(false);
            };
            *pivots += 1;
            if *pivots > MAX_PIVOTS {
                return Err(());
            }
            self.pivot(z, row, col);
        }
    }

    fn run(mut self, objective: &[f64]) -> LpSolution {
        let mut pivots = 0;
        if self.first_artificial < self.cols {
            let mut phase_one = vec![0.0; self.cols];
            phase_one[self.first_artificial..].iter_mut().for_each(|c| *c = 1.0);
            let mut z = self.price_out(&phase_one);
            match self.iterate(&mut z, self.cols, &mut pivots) {
                Err(()) => return LpSolution::IterationLimit,
                Ok(false) => unreachable!("phase one is bounded below by zero"),
                Ok(true) => {}
            }
            let scale = self.cells.iter().map(|r| r[self.cols].abs()).fold(1.0, f64::max);
            if -z[self.cols] > FEASIBILITY_EPS * scale {
                return LpSolution::Infeasible;
            }
            self.drive_out_artificials(&mut z);
        }

        let mut costs = objective.to_vec();
        costs.resize(self.cols, 0.0);
        let mut z = self.price_out(&costs);
        match self.iterate(&mut z, self.first_artificial, &mut pivots) {
            Err(()) => LpSolution::IterationLimit,
            Ok(false) => LpSolution::Unbounded,
            Ok(true) => {
                let mut x = vec![0.0; self.num_vars];
                for (r, &b) in self.basis.iter().enumerate() {
                    if b < self.num_vars {
                        x[b] = self.cells[r][self.cols].max(0.0);
                    }
                }
                let value = x.iter().zip(objective).map(|(a, b)| a * b).sum();
                LpSolution::Optimal { x, objective: value }
            }
        }
    }

    /// Pivots zero-valued artificials out of the basis; rows where that is
    /// impossible are linearly dependent and get dropped.
    fn drive_out_artificials(&mut self, z: &mut [f64]) {
        let mut r = 0;
        while r < self.cells.len() {
            if self.basis[r] >= self.first_artificial {
                let col = (0..self.first_artificial).find(|&j| self.cells[r][j].abs() > PIVOT_EPS);
                match col {
                    Some(col) => self.pivot(z, r, col),
                    None => {
                        self.cells.remove(r);
                        self.basis.remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(sol: LpSolution) -> (Vec<f64>, f64) {
        match sol {
            LpSolution::Optimal { x, objective } => (x, objective),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  ->  (2, 6), 36
        let mut lp = LinearProgram::new(2);
        lp.set_objective(vec![-3.0, -5.0]);
        lp.add_constraint(vec![(0, 1.0)], Relation::Le, 4.0);
        lp.add_constraint(vec![(1, 2.0)], Relation::Le, 12.0);
        lp.add_constraint(vec![(0, 3.0), (1, 2.0)], Relation::Le, 18.0);
        let (x, obj) = optimal(lp.solve());
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
        assert!((obj + 36.0).abs() < 1e-9);
    }

    #[test]
    fn needs_phase_one() {
        // min x + y s.t. x + y >= 2, x - y = 1  ->  (1.5, 0.5)
        let mut lp = LinearProgram::new(2);
        lp.set_objective(vec![1.0, 1.0]);
        lp.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Ge, 2.0);
        lp.add_constraint(vec![(0, 1.0), (1, -1.0)], Relation::Eq, 1.0);
        let (x, obj) = optimal(lp.solve());
        assert!((obj - 2.0).abs() < 1e-9);
        assert!((x[0] - x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // -x <= -3  <=>  x >= 3
        let mut lp = LinearProgram::new(1);
        lp.set_objective(vec![1.0]);
        lp.add_constraint(vec![(0, -1.0)], Relation::Le, -3.0);
        let (x, _) = optimal(lp.solve());
        assert!((x[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.add_constraint(vec![(0, 1.0)], Relation::Le, 1.0);
        lp.add_constraint(vec![(0, 1.0)], Relation::Ge, 2.0);
        assert_eq!(lp.solve(), LpSolution::Infeasible);

        let mut lp = LinearProgram::new(2);
        lp.set_objective(vec![-1.0, 0.0]);
        lp.add_constraint(vec![(0, 1.0), (1, -1.0)], Relation::Le, 1.0);
        assert_eq!(lp.solve(), LpSolution::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(2);
        lp.set_objective(vec![1.0, 2.0]);
        lp.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 1.0);
        lp.add_constraint(vec![(0, 2.0), (1, 2.0)], Relation::Eq, 2.0);
        let (x, obj) = optimal(lp.solve());
        assert!((x[0] - 1.0).abs() < 1e-9);
        assert!((obj - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_cycling_example() {
        // Beale's example cycles under the textbook largest-coefficient rule
        let mut lp = LinearProgram::new(4);
        lp.set_objective(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add_constraint(vec![(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Relation::Le, 0.0);
        lp.add_constraint(vec![(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Relation::Le, 0.0);
        lp.add_constraint(vec![(2, 1.0)], Relation::Le, 1.0);
        let (_, obj) = optimal(lp.solve());
        assert!((obj + 0.05).abs() < 1e-9);
    }
}
