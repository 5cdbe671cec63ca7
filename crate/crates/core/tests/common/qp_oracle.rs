//! Brute-force active-set enumeration for small strictly convex QPs.

use dlc_core::optimizer::qp::QpProblem;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Dense instance: minimize ½xᵀPx + cᵀx s.t. Ax = b, Gx ≤ h.
pub struct DenseQp {
    pub p: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl DenseQp {
    /// Random strictly convex instance with a known interior point so the
    /// feasible set is nonempty.
    pub fn random(rng: &mut ChaCha8Rng, n: usize, me: usize, mi: usize) -> Self {
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let p = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
        let c = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
        let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let a = DMatrix::from_fn(me, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = &a * &x0;
        let g = DMatrix::from_fn(mi, n, |_, _| rng.gen_range(-1.0..1.0));
        let slack = DVector::from_fn(mi, |_, _| rng.gen_range(0.0..0.5));
        let h = &g * &x0 + slack;
        DenseQp { p, c, a, b, g, h }
    }

    pub fn to_sparse(&self) -> QpProblem {
        let n = self.c.len();
        let mut qp = QpProblem::new(n);
        for i in 0..n {
            for j in i..n {
                qp.add_hessian(i, j, self.p[(i, j)]);
            }
            qp.c[i] = self.c[i];
        }
        for r in 0..self.a.nrows() {
            let row = (0..n).map(|j| (j, self.a[(r, j)])).collect();
            qp.add_eq(row, self.b[r], format!("eq{r}"));
        }
        for r in 0..self.g.nrows() {
            let row = (0..n).map(|j| (j, self.g[(r, j)])).collect();
            qp.add_le(row, self.h[r], format!("ineq{r}"));
        }
        qp
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.c.dot(x)
    }

    /// Enumerates working sets by increasing size; the first set whose
    /// equality-constrained optimum is primal feasible with nonnegative
    /// inequality multipliers is the unique optimum.
    pub fn solve_by_enumeration(&self) -> Option<DVector<f64>> {
        let n = self.c.len();
        let me = self.a.nrows();
        let mi = self.g.nrows();
        let max_active = n.saturating_sub(me).min(mi);
        for size in 0..=max_active {
            let mut found = None;
            for_each_subset(mi, size, &mut |set| {
                if found.is_some() {
                    return;
                }
                let k = me + set.len();
                let dim = n + k;
                let mut kkt = DMatrix::zeros(dim, dim);
                let mut rhs = DVector::zeros(dim);
                kkt.view_mut((0, 0), (n, n)).copy_from(&self.p);
                for i in 0..n {
                    rhs[i] = -self.c[i];
                }
                for r in 0..me {
                    for j in 0..n {
                        kkt[(n + r, j)] = self.a[(r, j)];
                        kkt[(j, n + r)] = self.a[(r, j)];
                    }
                    rhs[n + r] = self.b[r];
                }
                for (q, &r) in set.iter().enumerate() {
                    for j in 0..n {
                        kkt[(n + me + q, j)] = self.g[(r, j)];
                        kkt[(j, n + me + q)] = self.g[(r, j)];
                    }
                    rhs[n + me + q] = self.h[r];
                }
                let Some(sol) = kkt.lu().solve(&rhs) else {
                    return;
                };
                let x = sol.rows(0, n).into_owned();
                let slack_ok = (0..mi).all(|r| (self.g.row(r) * &x)[0] <= self.h[r] + 1e-9);
                let dual_ok = (0..set.len()).all(|q| sol[n + me + q] >= -1e-9);
                if slack_ok && dual_ok {
                    found = Some(x);
                }
            });
            if found.is_some() {
                return found;
            }
        }
        None
    }
}

fn for_each_subset(m: usize, size: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(start: usize, m: usize, size: usize, cur: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if cur.len() == size {
            f(cur);
            return;
        }
        for i in start..m {
            if m - i < size - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, size, cur, f);
            cur.pop();
        }
    }
    rec(0, m, size, &mut Vec::new(), f);
}

/// Runs `count` random instances and returns the worst relative objective
/// gap between the interior-point solver and enumeration.
pub fn worst_gap(seed: u64, count: usize) -> f64 {
    use dlc_core::optimizer::qp::{solve_qp, QpOptions};
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let n = rng.gen_range(2..=20);
        let me = rng.gen_range(0..=3.min(n - 1));
        let mi = rng.gen_range(1..=15 - me);
        let dense = DenseQp::random(&mut rng, n, me, mi);
        let x_ref = dense
            .solve_by_enumeration()
            .expect("oracle found no optimum");
        let sol = solve_qp(&dense.to_sparse(), &QpOptions::default()).expect("ipm failed");
        let f_ref = dense.objective(&x_ref);
        let gap = (sol.objective - f_ref).abs() / (1.0 + f_ref.abs());
        worst = worst.max(gap);
    }
    worst
}
