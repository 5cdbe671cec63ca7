//! Convex quadratic programs and an embedded primal-dual interior-point
//! solver.
//!
//! Problems are stored in minimization form
//!
//! ```text
//! minimize    ½ xᵀ P x + cᵀ x + c0
//! subject to  A x  = b
//!             G x ≤ h
//!             lb ≤ x ≤ ub
//! ```
//!
//! with P symmetric positive semidefinite (the DLC objective is maximized, so
//! the builder stores its negation). The solver eliminates fixed variables,
//! equilibrates the data (modified Ruiz scaling) and runs Mehrotra
//! predictor-corrector steps on the quasi-definite reduced KKT system
//!
//! ```text
//! [ P + Gᵀ W G + ρI   Aᵀ ] [dx]   [r1]
//! [ A               -δI ] [dy] = [r2]
//! ```
//!
//! factored with [`crate::optimizer::ldl`] and polished by iterative
//! refinement against the unregularized matrix.

use super::ldl::{LdlError, LdlFactor, LdlSymbolic, UpperCsc};
use log::{debug, trace};
use thiserror::Error;

/// Sparse row: (column, coefficient) pairs.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, Default)]
pub struct QpProblem {
    pub n: usize,
    /// Hessian entries (i, j, value); duplicates are summed and each
    /// off-diagonal entry is stored once (either triangle).
    pub p: Vec<(usize, usize, f64)>,
    pub c: Vec<f64>,
    pub c0: f64,
    pub a: Vec<SparseRow>,
    pub b: Vec<f64>,
    pub g: Vec<SparseRow>,
    pub h: Vec<f64>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub var_labels: Vec<String>,
    pub eq_labels: Vec<String>,
    pub ineq_labels: Vec<String>,
}

impl QpProblem {
    pub fn new(n: usize) -> Self {
        QpProblem {
            n,
            c: vec![0.0; n],
            lb: vec![f64::NEG_INFINITY; n],
            ub: vec![f64::INFINITY; n],
            ..Default::default()
        }
    }

    pub fn add_eq(&mut self, row: SparseRow, rhs: f64, label: impl Into<String>) {
        self.a.push(row);
        self.b.push(rhs);
        self.eq_labels.push(label.into());
    }

    pub fn add_le(&mut self, row: SparseRow, rhs: f64, label: impl Into<String>) {
        self.g.push(row);
        self.h.push(rhs);
        self.ineq_labels.push(label.into());
    }

    /// Adds `w * x_i * x_j` (i ≠ j) or `½ w x_i²` (i = j) to the objective.
    pub fn add_hessian(&mut self, i: usize, j: usize, w: f64) {
        if w != 0.0 {
            self.p.push((i, j, w));
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut v = self.c0;
        for (ci, xi) in self.c.iter().zip(x) {
            v += ci * xi;
        }
        for &(i, j, w) in &self.p {
            if i == j {
                v += 0.5 * w * x[i] * x[i];
            } else {
                v += w * x[i] * x[j];
            }
        }
        v
    }

    /// vᵀ P v using the symmetric interpretation of `p`.
    pub fn hessian_quadratic_form(&self, v: &[f64]) -> f64 {
        self.p
            .iter()
            .map(|&(i, j, w)| {
                if i == j {
                    w * v[i] * v[i]
                } else {
                    2.0 * w * v[i] * v[j]
                }
            })
            .sum()
    }

    fn var_label(&self, i: usize) -> String {
        self.var_labels
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("x[{i}]"))
    }

    fn eq_label(&self, i: usize) -> String {
        self.eq_labels
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("eq[{i}]"))
    }

    fn ineq_label(&self, i: usize) -> String {
        self.ineq_labels
            .get(i)
            .cloned()
            .unwrap_or_else(|| format!("ineq[{i}]"))
    }

    fn check_dimensions(&self) -> Result<(), QpError> {
        let n = self.n;
        let bad = self.c.len() != n
            || self.lb.len() != n
            || self.ub.len() != n
            || self.a.len() != self.b.len()
            || self.g.len() != self.h.len()
            || self.p.iter().any(|&(i, j, _)| i >= n || j >= n)
            || self
                .a
                .iter()
                .chain(self.g.iter())
                .any(|r| r.iter().any(|&(j, _)| j >= n));
        if bad {
            return Err(QpError::Dimension);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    /// Relative tolerance on primal/dual residuals and complementarity in
    /// scaled units.
    pub tol: f64,
    /// Residual level still accepted when progress stalls.
    pub tol_inaccurate: f64,
    pub max_iter: usize,
    pub ruiz_iterations: usize,
    pub regularization: f64,
    pub refinement_steps: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            tol: 1e-9,
            tol_inaccurate: 1e-6,
            max_iter: 120,
            ruiz_iterations: 15,
            regularization: 1e-8,
            refinement_steps: 3,
        }
    }
}

/// Scaled, relative KKT residuals at the returned point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.complementarity)
    }

    /// Componentwise maximum.
    pub fn worst_with(&self, other: &KktResiduals) -> KktResiduals {
        KktResiduals {
            primal: self.primal.max(other.primal),
            dual: self.dual.max(other.dual),
            complementarity: self.complementarity.max(other.complementarity),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers of `A x = b` (zero for rows removed by presolve).
    pub y: Vec<f64>,
    /// Multipliers of `G x ≤ h`.
    pub z: Vec<f64>,
    pub objective: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
}

#[derive(Debug, Error)]
pub enum QpError {
    #[error("problem dimensions are inconsistent")]
    Dimension,
    #[error("problem is infeasible; active rows at final iterate: {}", active_rows.join(", "))]
    Infeasible { active_rows: Vec<String> },
    #[error("no convergence after {iterations} iterations (residuals {residuals:?})")]
    MaxIterations {
        iterations: usize,
        residuals: KktResiduals,
    },
    #[error("factorization failed: {0}")]
    Factorization(#[from] LdlError),
}

/// Where an inequality row of the reduced problem came from.
#[derive(Debug, Clone, Copy)]
enum RowOrigin {
    Ineq(usize),
    Upper(usize),
    Lower(usize),
}

#[derive(Debug, Clone)]
struct Csr {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    fn from_rows(rows: &[SparseRow]) -> Self {
        let mut ptr = vec![0];
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for r in rows {
            let mut sorted = r.clone();
            sorted.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (j, v) in sorted {
                if last == Some(j) {
                    *val.last_mut().unwrap() += v;
                } else {
                    idx.push(j);
                    val.push(v);
                    last = Some(j);
                }
            }
            ptr.push(idx.len());
        }
        Csr { ptr, idx, val }
    }

    fn rows(&self) -> usize {
        self.ptr.len() - 1
    }

    fn row(&self, i: usize) -> std::ops::Range<usize> {
        self.ptr[i]..self.ptr[i + 1]
    }

    fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|k| self.val[k] * x[self.idx[k]]).sum();
        }
    }

    /// y += Mᵀ v
    fn mul_t_add(&self, v: &[f64], y: &mut [f64]) {
        for (i, vi) in v.iter().enumerate() {
            if *vi != 0.0 {
                for k in self.row(i) {
                    y[self.idx[k]] += self.val[k] * vi;
                }
            }
        }
    }
}

/// Reduced problem after eliminating fixed variables and turning bounds into
/// inequality rows.
struct Reduced {
    n: usize,
    keep: Vec<usize>,
    /// value of every original variable that was fixed (NaN for kept ones)
    fixed: Vec<f64>,
    p: Vec<(usize, usize, f64)>,
    c: Vec<f64>,
    a: Csr,
    a_origin: Vec<usize>,
    b: Vec<f64>,
    g: Csr,
    g_origin: Vec<RowOrigin>,
    h: Vec<f64>,
    /// objective constant including the fixed variables' contribution
    c0: f64,
}

fn presolve(qp: &QpProblem) -> Result<Reduced, QpError> {
    let n0 = qp.n;
    let mut newidx = vec![usize::MAX; n0];
    let mut keep = Vec::new();
    let mut fixed = vec![f64::NAN; n0];
    for i in 0..n0 {
        let (l, u) = (qp.lb[i], qp.ub[i]);
        if l > u + 1e-12 * (1.0 + l.abs().max(u.abs())) {
            return Err(QpError::Infeasible {
                active_rows: vec![format!("bounds({})", qp.var_label(i))],
            });
        }
        if l.is_finite() && u.is_finite() && (u - l).abs() <= 1e-14 * (1.0 + l.abs()) {
            fixed[i] = 0.5 * (l + u);
        } else {
            newidx[i] = keep.len();
            keep.push(i);
        }
    }
    let n = keep.len();
    let mut c: Vec<f64> = keep.iter().map(|&i| qp.c[i]).collect();
    let mut c0 = qp.c0;
    for i in 0..n0 {
        if !fixed[i].is_nan() {
            c0 += qp.c[i] * fixed[i];
        }
    }
    let mut p = Vec::new();
    for &(i, j, w) in &qp.p {
        let (fi, fj) = (!fixed[i].is_nan(), !fixed[j].is_nan());
        match (fi, fj) {
            (false, false) => p.push((newidx[i], newidx[j], w)),
            (true, false) => c[newidx[j]] += w * fixed[i],
            (false, true) => c[newidx[i]] += w * fixed[j],
            (true, true) if i == j => c0 += 0.5 * w * fixed[i] * fixed[i],
            (true, true) => c0 += w * fixed[i] * fixed[j],
        }
    }

    let reduce_row = |row: &SparseRow, rhs: f64| -> (SparseRow, f64) {
        let mut out = Vec::with_capacity(row.len());
        let mut r = rhs;
        for &(j, v) in row {
            if fixed[j].is_nan() {
                out.push((newidx[j], v));
            } else {
                r -= v * fixed[j];
            }
        }
        (out, r)
    };

    let mut a_rows = Vec::new();
    let mut a_origin = Vec::new();
    let mut b = Vec::new();
    for (k, row) in qp.a.iter().enumerate() {
        let (r, rhs) = reduce_row(row, qp.b[k]);
        if r.iter().all(|e| e.1 == 0.0) {
            if rhs.abs() > 1e-9 * (1.0 + qp.b[k].abs()) {
                return Err(QpError::Infeasible {
                    active_rows: vec![qp.eq_label(k)],
                });
            }
            continue;
        }
        a_rows.push(r);
        a_origin.push(k);
        b.push(rhs);
    }

    let mut g_rows = Vec::new();
    let mut g_origin = Vec::new();
    let mut h = Vec::new();
    for (k, row) in qp.g.iter().enumerate() {
        let (r, rhs) = reduce_row(row, qp.h[k]);
        if r.iter().all(|e| e.1 == 0.0) {
            if rhs < -1e-9 * (1.0 + qp.h[k].abs()) {
                return Err(QpError::Infeasible {
                    active_rows: vec![qp.ineq_label(k)],
                });
            }
            continue;
        }
        g_rows.push(r);
        g_origin.push(RowOrigin::Ineq(k));
        h.push(rhs);
    }
    for (ni, &i) in keep.iter().enumerate() {
        if qp.ub[i].is_finite() {
            g_rows.push(vec![(ni, 1.0)]);
            g_origin.push(RowOrigin::Upper(i));
            h.push(qp.ub[i]);
        }
        if qp.lb[i].is_finite() {
            g_rows.push(vec![(ni, -1.0)]);
            g_origin.push(RowOrigin::Lower(i));
            h.push(-qp.lb[i]);
        }
    }

    Ok(Reduced {
        n,
        keep,
        fixed,
        p,
        c,
        a: Csr::from_rows(&a_rows),
        a_origin,
        b,
        g: Csr::from_rows(&g_rows),
        g_origin,
        h,
        c0,
    })
}

/// Diagonal equilibration: x = D x̃, rows of A and G scaled by E, objective
/// scaled by `cost`.
struct Scaling {
    d: Vec<f64>,
    ea: Vec<f64>,
    eg: Vec<f64>,
    cost: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn clamp_norm(x: f64) -> f64 {
    if x < 1e-8 {
        1.0
    } else {
        x.clamp(1e-4, 1e4)
    }
}

fn ruiz(red: &mut Reduced, iterations: usize) -> Scaling {
    let n = red.n;
    let (me, mi) = (red.a.rows(), red.g.rows());
    let mut d = vec![1.0; n];
    let mut ea = vec![1.0; me];
    let mut eg = vec![1.0; mi];
    for _ in 0..iterations {
        let mut col = vec![0.0f64; n];
        for &(i, j, w) in &red.p {
            col[i] = col[i].max(w.abs());
            col[j] = col[j].max(w.abs());
        }
        let mut row_a = vec![0.0f64; me];
        for (r, ra) in row_a.iter_mut().enumerate() {
            for k in red.a.row(r) {
                let v = red.a.val[k].abs();
                *ra = ra.max(v);
                col[red.a.idx[k]] = col[red.a.idx[k]].max(v);
            }
        }
        let mut row_g = vec![0.0f64; mi];
        for (r, rg) in row_g.iter_mut().enumerate() {
            for k in red.g.row(r) {
                let v = red.g.val[k].abs();
                *rg = rg.max(v);
                col[red.g.idx[k]] = col[red.g.idx[k]].max(v);
            }
        }
        let dc: Vec<f64> = col.iter().map(|&v| 1.0 / clamp_norm(v).sqrt()).collect();
        let da: Vec<f64> = row_a.iter().map(|&v| 1.0 / clamp_norm(v).sqrt()).collect();
        let dg: Vec<f64> = row_g.iter().map(|&v| 1.0 / clamp_norm(v).sqrt()).collect();
        for e in red.p.iter_mut() {
            e.2 *= dc[e.0] * dc[e.1];
        }
        for (ci, s) in red.c.iter_mut().zip(&dc) {
            *ci *= s;
        }
        for r in 0..me {
            for k in red.a.row(r) {
                red.a.val[k] *= da[r] * dc[red.a.idx[k]];
            }
            red.b[r] *= da[r];
        }
        for r in 0..mi {
            for k in red.g.row(r) {
                red.g.val[k] *= dg[r] * dc[red.g.idx[k]];
            }
            red.h[r] *= dg[r];
        }
        d.iter_mut().zip(&dc).for_each(|(a, b)| *a *= b);
        ea.iter_mut().zip(&da).for_each(|(a, b)| *a *= b);
        eg.iter_mut().zip(&dg).for_each(|(a, b)| *a *= b);
    }
    // objective scaling
    let mut col = vec![0.0f64; n];
    for &(i, j, w) in &red.p {
        col[i] = col[i].max(w.abs());
        col[j] = col[j].max(w.abs());
    }
    let mean_col = if n > 0 {
        col.iter().sum::<f64>() / n as f64
    } else {
        0.0
    };
    let cost = 1.0 / clamp_norm(mean_col.max(inf_norm(&red.c)));
    for e in red.p.iter_mut() {
        e.2 *= cost;
    }
    for ci in red.c.iter_mut() {
        *ci *= cost;
    }
    red.c0 *= cost;
    Scaling { d, ea, eg, cost }
}

/// Reduced KKT matrix with precomputed value slots. Inequality rows keep
/// their own block with diagonal −s/z instead of being folded into the
/// Hessian, which keeps the pivots bounded as slacks vanish.
struct Kkt {
    mat: UpperCsc,
    sym: LdlSymbolic,
    signs: Vec<f64>,
    p_slots: Vec<usize>,
    a_slots: Vec<usize>,
    g_slots: Vec<usize>,
    diag: Vec<usize>,
    reg: Vec<f64>,
}

impl Kkt {
    fn new(red: &Reduced, regularization: f64) -> Result<Self, QpError> {
        let n = red.n;
        let me = red.a.rows();
        let mi = red.g.rows();
        let dim = n + me + mi;
        let mut entries: Vec<(usize, usize)> = Vec::new();
        for &(i, j, _) in &red.p {
            entries.push((i, j));
        }
        let p_count = entries.len();
        for r in 0..me {
            for k in red.a.row(r) {
                entries.push((red.a.idx[k], n + r));
            }
        }
        let a_count = entries.len();
        for r in 0..mi {
            for k in red.g.row(r) {
                entries.push((red.g.idx[k], n + me + r));
            }
        }
        let (mat, slots) = UpperCsc::from_pattern(dim, &entries);
        let diag: Vec<usize> = (0..dim).map(|i| mat.slot(i, i).unwrap()).collect();
        let sym = LdlSymbolic::analyze(&mat)?;
        trace!(
            "kkt dim {} nnz {} factor nnz {}",
            dim,
            mat.nnz(),
            sym.factor_nnz()
        );
        let signs = (0..dim).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let reg = (0..dim)
            .map(|i| {
                if i < n {
                    regularization
                } else {
                    -regularization
                }
            })
            .collect();
        Ok(Kkt {
            p_slots: slots[..p_count].to_vec(),
            a_slots: slots[p_count..a_count].to_vec(),
            g_slots: slots[a_count..].to_vec(),
            mat,
            sym,
            signs,
            diag,
            reg,
        })
    }

    /// `w` holds z/s for every inequality row.
    fn assemble(&mut self, red: &Reduced, w: &[f64]) {
        let n = red.n;
        let me = red.a.rows();
        let v = &mut self.mat.values;
        v.iter_mut().for_each(|x| *x = 0.0);
        for (k, &(_, _, val)) in red.p.iter().enumerate() {
            v[self.p_slots[k]] += val;
        }
        for (k, &val) in red.a.val.iter().enumerate() {
            v[self.a_slots[k]] += val;
        }
        for (k, &val) in red.g.val.iter().enumerate() {
            v[self.g_slots[k]] += val;
        }
        for (r, wr) in w.iter().enumerate() {
            v[self.diag[n + me + r]] -= 1.0 / wr;
        }
        for (i, &s) in self.diag.iter().enumerate() {
            v[s] += self.reg[i];
        }
    }

    fn factor(&self) -> Result<LdlFactor, QpError> {
        Ok(LdlFactor::factor(
            &self.sym,
            &self.mat.values,
            &self.signs,
            1e-13,
            1e-7,
        )?)
    }

    /// Solves with iterative refinement against the unregularized matrix.
    fn solve(&self, f: &LdlFactor, rhs: &[f64], steps: usize) -> Vec<f64> {
        let mut x = rhs.to_vec();
        f.solve_in_place(&mut x);
        let mut kx = vec![0.0; rhs.len()];
        let residual = |x: &[f64], kx: &mut Vec<f64>| -> Vec<f64> {
            self.mat.sym_matvec(x, kx);
            rhs.iter()
                .zip(kx.iter())
                .zip(x.iter().zip(&self.reg))
                .map(|((b, k), (xi, ri))| b - (k - ri * xi))
                .collect()
        };
        let mut r = residual(&x, &mut kx);
        let mut rnorm = inf_norm(&r);
        for _ in 0..steps {
            if !rnorm.is_finite() || rnorm <= 1e-14 * (1.0 + inf_norm(rhs)) {
                break;
            }
            f.solve_in_place(&mut r);
            let trial: Vec<f64> = x.iter().zip(&r).map(|(a, b)| a + b).collect();
            let r_trial = residual(&trial, &mut kx);
            let n_trial = inf_norm(&r_trial);
            // refinement diverges when the regularized factor is a poor
            // preconditioner; keep the better point
            if !(n_trial < rnorm) {
                break;
            }
            x = trial;
            r = r_trial;
            rnorm = n_trial;
        }
        x
    }
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    let mut a = f64::INFINITY;
    for (x, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            a = a.min(-x / d);
        }
    }
    a
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
}

struct Residuals {
    rd: Vec<f64>,
    rp: Vec<f64>,
    rg: Vec<f64>,
    kkt: KktResiduals,
}

fn residuals(red: &Reduced, it: &Iterate) -> Residuals {
    let n = red.n;
    let mut px = vec![0.0; n];
    for &(i, j, w) in &red.p {
        px[i] += w * it.x[j];
        if i != j {
            px[j] += w * it.x[i];
        }
    }
    let mut aty = vec![0.0; n];
    red.a.mul_t_add(&it.y, &mut aty);
    let mut gtz = vec![0.0; n];
    red.g.mul_t_add(&it.z, &mut gtz);
    let rd: Vec<f64> = (0..n).map(|i| px[i] + red.c[i] + aty[i] + gtz[i]).collect();
    let mut ax = vec![0.0; red.a.rows()];
    red.a.mul(&it.x, &mut ax);
    let rp: Vec<f64> = ax.iter().zip(&red.b).map(|(a, b)| a - b).collect();
    let mut gx = vec![0.0; red.g.rows()];
    red.g.mul(&it.x, &mut gx);
    let rg: Vec<f64> = (0..gx.len()).map(|i| gx[i] + it.s[i] - red.h[i]).collect();

    let pscale = 1.0
        + inf_norm(&red.b)
            .max(inf_norm(&red.h))
            .max(inf_norm(&ax))
            .max(inf_norm(&gx));
    let dscale = 1.0
        + inf_norm(&red.c)
            .max(inf_norm(&px))
            .max(inf_norm(&aty))
            .max(inf_norm(&gtz));
    let m = it.s.len();
    // total gap against the full objective: large constant parts of the
    // quadratic cancel in practice and must not loosen the test
    let gap = if m > 0 { dot(&it.s, &it.z) } else { 0.0 };
    let pobj = 0.5 * dot(&it.x, &px) + dot(&red.c, &it.x) + red.c0;
    let kkt = KktResiduals {
        primal: inf_norm(&rp).max(inf_norm(&rg)) / pscale,
        dual: inf_norm(&rd) / dscale,
        complementarity: gap / (1.0 + pobj.abs()),
    };
    Residuals { rd, rp, rg, kkt }
}

/// Solves the QP. Deterministic for identical input.
pub fn solve_qp(qp: &QpProblem, opts: &QpOptions) -> Result<QpSolution, QpError> {
    qp.check_dimensions()?;
    let mut red = presolve(qp)?;
    let scaling = ruiz(&mut red, opts.ruiz_iterations);
    let n = red.n;
    let me = red.a.rows();
    let mi = red.g.rows();
    let mut kkt = Kkt::new(&red, opts.regularization)?;

    // initial point: least-squares fit of the inequalities, W = I
    kkt.assemble(&red, &vec![1.0; mi]);
    let f = kkt.factor()?;
    let mut rhs = vec![0.0; n + me + mi];
    for i in 0..n {
        rhs[i] = -red.c[i];
    }
    rhs[n..n + me].copy_from_slice(&red.b);
    rhs[n + me..].copy_from_slice(&red.h);
    let sol = kkt.solve(&f, &rhs, opts.refinement_steps);
    let x = sol[..n].to_vec();
    let y = sol[n..n + me].to_vec();
    let mut gx = vec![0.0; mi];
    red.g.mul(&x, &mut gx);
    let mut s: Vec<f64> = red.h.iter().zip(&gx).map(|(h, g)| h - g).collect();
    let mut z: Vec<f64> = s.iter().map(|v| -v).collect();
    let shift = |v: &mut Vec<f64>| {
        let a = -v.iter().cloned().fold(f64::INFINITY, f64::min);
        if a >= -1e-8 {
            v.iter_mut().for_each(|e| *e += 1.0 + a);
        }
    };
    shift(&mut s);
    shift(&mut z);
    let mut it = Iterate { x, y, z, s };

    let mut iterations = 0;
    let mut stalls = 0;
    let mut last: Residuals;
    let mut best: Option<(f64, Iterate)> = None;
    loop {
        let mut res = residuals(&red, &it);
        let finite = [res.kkt.primal, res.kkt.dual, res.kkt.complementarity]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            // numerical breakdown near the boundary: fall back to the best
            // iterate seen and let the accuracy tests below decide
            let Some((_, b)) = best.take() else {
                return Err(QpError::MaxIterations {
                    iterations,
                    residuals: res.kkt,
                });
            };
            it = b;
            res = residuals(&red, &it);
            stalls = usize::MAX;
            iterations = iterations.max(1);
        } else if best.as_ref().is_none_or(|(v, _)| res.kkt.max() < *v) {
            best = Some((res.kkt.max(), it.clone()));
        }
        trace!(
            "ipm {:3} pres {:.2e} dres {:.2e} gap {:.2e}",
            iterations,
            res.kkt.primal,
            res.kkt.dual,
            res.kkt.complementarity
        );
        last = res;
        if last.kkt.max() <= opts.tol {
            break;
        }
        if let Some(rows) = infeasibility_certificate(&red, &it) {
            return Err(QpError::Infeasible {
                active_rows: label_rows(qp, &red, &rows),
            });
        }
        if iterations >= opts.max_iter || stalls >= 5 {
            if last.kkt.max() <= opts.tol_inaccurate {
                debug!("ipm stopped at reduced accuracy {:?}", last.kkt);
                break;
            }
            if last.kkt.primal > opts.tol_inaccurate {
                return Err(QpError::Infeasible {
                    active_rows: label_rows(qp, &red, &active_set(&it)),
                });
            }
            return Err(QpError::MaxIterations {
                iterations,
                residuals: last.kkt,
            });
        }
        iterations += 1;

        let w: Vec<f64> = it.z.iter().zip(&it.s).map(|(z, s)| z / s).collect();
        kkt.assemble(&red, &w);
        let f = kkt.factor()?;
        let mu = if mi > 0 {
            dot(&it.s, &it.z) / mi as f64
        } else {
            0.0
        };

        let newton = |rsz: &[f64]| -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
            let mut rhs = vec![0.0; n + me + mi];
            for i in 0..n {
                rhs[i] = -last.rd[i];
            }
            for i in 0..me {
                rhs[n + i] = -last.rp[i];
            }
            for i in 0..mi {
                rhs[n + me + i] = -last.rg[i] + rsz[i] / it.z[i];
            }
            let sol = kkt.solve(&f, &rhs, opts.refinement_steps);
            let dx = sol[..n].to_vec();
            let dy = sol[n..n + me].to_vec();
            let dz = sol[n + me..].to_vec();
            let mut gdx = vec![0.0; mi];
            red.g.mul(&dx, &mut gdx);
            let ds: Vec<f64> = (0..mi).map(|i| -last.rg[i] - gdx[i]).collect();
            (dx, dy, dz, ds)
        };

        let rsz: Vec<f64> = it.s.iter().zip(&it.z).map(|(s, z)| s * z).collect();
        let (_, _, dz_a, ds_a) = newton(&rsz);
        let alpha_aff = max_step(&it.s, &ds_a).min(max_step(&it.z, &dz_a)).min(1.0);
        let sigma = if mi > 0 {
            let mu_aff = (0..mi)
                .map(|i| (it.s[i] + alpha_aff * ds_a[i]) * (it.z[i] + alpha_aff * dz_a[i]))
                .sum::<f64>()
                / mi as f64;
            (mu_aff / mu).powi(3).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let rsz: Vec<f64> = (0..mi)
            .map(|i| it.s[i] * it.z[i] + ds_a[i] * dz_a[i] - sigma * mu)
            .collect();
        let (dx, dy, dz, ds) = newton(&rsz);
        let alpha = (0.99 * max_step(&it.s, &ds).min(max_step(&it.z, &dz))).min(1.0);
        if alpha < 1e-8 {
            stalls += 1;
        }
        let direction_ok = dx
            .iter()
            .chain(&dy)
            .chain(&dz)
            .chain(&ds)
            .all(|v| v.is_finite())
            && alpha.is_finite();
        if !direction_ok {
            // the KKT system lost accuracy; finish from the best iterate
            if let Some((_, b)) = best.take() {
                it = b;
            }
            stalls = usize::MAX;
            continue;
        }
        for i in 0..n {
            it.x[i] += alpha * dx[i];
        }
        for i in 0..me {
            it.y[i] += alpha * dy[i];
        }
        for i in 0..mi {
            it.z[i] += alpha * dz[i];
            it.s[i] += alpha * ds[i];
        }
    }

    if mi > 0 {
        if let Some((p_it, p_res)) = polish(&red, &mut kkt, &it, opts) {
            if p_res.kkt.max() <= last.kkt.max().max(opts.tol) {
                trace!("polished: {:?} -> {:?}", last.kkt, p_res.kkt);
                it = p_it;
                last = p_res;
            }
        }
    }

    // unscale
    let mut x = vec![0.0; qp.n];
    for (i, f) in red.fixed.iter().enumerate() {
        if !f.is_nan() {
            x[i] = *f;
        }
    }
    for (k, &i) in red.keep.iter().enumerate() {
        x[i] = scaling.d[k] * it.x[k];
    }
    let mut y = vec![0.0; qp.a.len()];
    for (k, &orig) in red.a_origin.iter().enumerate() {
        y[orig] = scaling.ea[k] * it.y[k] / scaling.cost;
    }
    let mut z = vec![0.0; qp.g.len()];
    for (k, origin) in red.g_origin.iter().enumerate() {
        if let RowOrigin::Ineq(orig) = origin {
            z[*orig] = scaling.eg[k] * it.z[k] / scaling.cost;
        }
    }
    debug!(
        "ipm converged in {} iterations, residuals {:?}",
        iterations, last.kkt
    );
    Ok(QpSolution {
        objective: qp.objective(&x),
        x,
        y,
        z,
        residuals: last.kkt,
        iterations,
    })
}

/// Re-solves the equality system of the active set guessed from the final
/// iterate (rows with z > s). Removes the O(√μ) offset of weakly active
/// bounds that the barrier leaves behind.
fn polish(
    red: &Reduced,
    kkt: &mut Kkt,
    it: &Iterate,
    opts: &QpOptions,
) -> Option<(Iterate, Residuals)> {
    let n = red.n;
    let me = red.a.rows();
    let mi = red.g.rows();
    let mut active: Vec<bool> = it.z.iter().zip(&it.s).map(|(z, s)| z > s).collect();
    let mut best: Option<(Iterate, Residuals)> = None;
    for _ in 0..5 {
        let w: Vec<f64> = active
            .iter()
            .map(|&a| if a { f64::INFINITY } else { 1e-30 })
            .collect();
        kkt.assemble(red, &w);
        let f = kkt.factor().ok()?;
        let mut rhs = vec![0.0; n + me + mi];
        for i in 0..n {
            rhs[i] = -red.c[i];
        }
        rhs[n..n + me].copy_from_slice(&red.b);
        for i in 0..mi {
            // inactive rows: z ≈ 0 regardless of the right-hand side
            rhs[n + me + i] = if active[i] { red.h[i] } else { 0.0 };
        }
        let sol = kkt.solve(&f, &rhs, opts.refinement_steps.max(10));
        if sol.iter().any(|v| !v.is_finite()) {
            break;
        }
        let x = sol[..n].to_vec();
        let y = sol[n..n + me].to_vec();
        let mut gx = vec![0.0; mi];
        red.g.mul(&x, &mut gx);
        let slack: Vec<f64> = red.h.iter().zip(&gx).map(|(h, g)| h - g).collect();
        let mult: Vec<f64> = (0..mi)
            .map(|i| if active[i] { sol[n + me + i] } else { 0.0 })
            .collect();
        let cand = Iterate {
            x,
            y,
            z: mult.iter().map(|v| v.max(0.0)).collect(),
            s: slack.iter().map(|v| v.max(0.0)).collect(),
        };
        let res = residuals(red, &cand);
        if best
            .as_ref()
            .is_none_or(|(_, b)| res.kkt.max() < b.kkt.max())
        {
            best = Some((cand, res));
        }
        // violated rows join the active set, rows pulling the wrong way leave it
        let tol = 1e-12 * (1.0 + inf_norm(&red.h));
        let mut changed = false;
        for i in 0..mi {
            if !active[i] && slack[i] < -tol {
                active[i] = true;
                changed = true;
            } else if active[i] && mult[i] < -tol {
                active[i] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    best
}

/// Detects a Farkas direction: Aᵀy + Gᵀz ≈ 0 with bᵀy + hᵀz < 0 and
/// large multipliers.
fn infeasibility_certificate(red: &Reduced, it: &Iterate) -> Option<Vec<usize>> {
    let scale = inf_norm(&it.z).max(inf_norm(&it.y));
    if scale < 1e8 {
        return None;
    }
    let mut r = vec![0.0; red.n];
    red.a.mul_t_add(&it.y, &mut r);
    red.g.mul_t_add(&it.z, &mut r);
    let farkas = (dot(&red.b, &it.y) + dot(&red.h, &it.z)) / scale;
    if inf_norm(&r) / scale < 1e-6 && farkas < -1e-6 {
        Some(active_set(it))
    } else {
        None
    }
}

/// Inequality rows (reduced numbering) with the largest multipliers.
fn active_set(it: &Iterate) -> Vec<usize> {
    let zmax = inf_norm(&it.z);
    let mut rows: Vec<usize> = (0..it.z.len())
        .filter(|&i| zmax > 0.0 && it.z[i] >= 1e-3 * zmax)
        .collect();
    rows.sort_by(|&a, &b| it.z[b].total_cmp(&it.z[a]).then(a.cmp(&b)));
    rows.truncate(25);
    rows
}

fn label_rows(qp: &QpProblem, red: &Reduced, rows: &[usize]) -> Vec<String> {
    rows.iter()
        .map(|&r| match red.g_origin[r] {
            RowOrigin::Ineq(k) => qp.ineq_label(k),
            RowOrigin::Upper(i) => format!("upper_bound({})", qp.var_label(i)),
            RowOrigin::Lower(i) => format!("lower_bound({})", qp.var_label(i)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> QpOptions {
        QpOptions::default()
    }

    #[test]
    fn clipped_quadratic() {
        // minimize (x-3)^2 s.t. x <= 2
        let mut qp = QpProblem::new(1);
        qp.add_hessian(0, 0, 2.0);
        qp.c[0] = -6.0;
        qp.c0 = 9.0;
        qp.add_le(vec![(0, 1.0)], 2.0, "cap");
        let s = solve_qp(&qp, &opts()).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-7, "{}", s.x[0]);
        assert!((s.objective - 1.0).abs() < 1e-7);
        // multiplier of the active cap: 2(x-3) + z = 0 -> z = 2
        assert!((s.z[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn symmetric_equality_problem() {
        // minimize x^2 + y^2 s.t. x + y = 1
        let mut qp = QpProblem::new(2);
        qp.add_hessian(0, 0, 2.0);
        qp.add_hessian(1, 1, 2.0);
        qp.add_eq(vec![(0, 1.0), (1, 1.0)], 1.0, "sum");
        let s = solve_qp(&qp, &opts()).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-8);
        assert!((s.x[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn fixed_variables_are_eliminated() {
        // minimize (x - 1)^2 + (y - 2)^2 + x y with y fixed to 3
        let mut qp = QpProblem::new(2);
        qp.add_hessian(0, 0, 2.0);
        qp.add_hessian(1, 1, 2.0);
        qp.add_hessian(0, 1, 1.0);
        qp.c = vec![-2.0, -4.0];
        qp.c0 = 5.0;
        qp.lb[1] = 3.0;
        qp.ub[1] = 3.0;
        let s = solve_qp(&qp, &opts()).unwrap();
        // d/dx: 2(x-1) + 3 = 0
        assert!((s.x[0] + 0.5).abs() < 1e-8);
        assert_eq!(s.x[1], 3.0);
    }

    #[test]
    fn linear_program_with_bounds() {
        // minimize -x - 2y s.t. x + y <= 1, 0 <= x, y
        let mut qp = QpProblem::new(2);
        qp.c = vec![-1.0, -2.0];
        qp.lb = vec![0.0, 0.0];
        qp.add_le(vec![(0, 1.0), (1, 1.0)], 1.0, "budget");
        let s = solve_qp(&qp, &opts()).unwrap();
        assert!(s.x[0].abs() < 1e-7);
        assert!((s.x[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn infeasible_problem_reports_rows() {
        let mut qp = QpProblem::new(1);
        qp.add_hessian(0, 0, 1.0);
        qp.add_le(vec![(0, 1.0)], -1.0, "upper");
        qp.add_le(vec![(0, -1.0)], -1.0, "lower");
        match solve_qp(&qp, &opts()) {
            Err(QpError::Infeasible { active_rows }) => {
                assert!(active_rows.iter().any(|r| r == "upper" || r == "lower"));
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_fixed_bounds_are_infeasible() {
        let mut qp = QpProblem::new(1);
        qp.lb[0] = 1.0;
        qp.ub[0] = 0.0;
        assert!(matches!(
            solve_qp(&qp, &opts()),
            Err(QpError::Infeasible { .. })
        ));
    }

    #[test]
    fn solve_is_deterministic() {
        let mut qp = QpProblem::new(3);
        for i in 0..3 {
            qp.add_hessian(i, i, 1.0 + i as f64);
        }
        qp.add_hessian(0, 2, 0.3);
        qp.c = vec![1.0, -2.0, 0.5];
        qp.add_le(vec![(0, 1.0), (1, 1.0), (2, 1.0)], 0.5, "sum");
        qp.add_eq(vec![(0, 1.0), (2, -1.0)], 0.1, "link");
        let a = solve_qp(&qp, &opts()).unwrap();
        let b = solve_qp(&qp, &opts()).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.iterations, b.iterations);
    }
}
