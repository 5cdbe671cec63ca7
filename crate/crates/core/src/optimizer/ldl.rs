//! Sparse LDLᵀ factorization of symmetric quasi-definite matrices.
//!
//! The factorization is split into a symbolic phase (fill-reducing ordering,
//! elimination tree, column counts) that depends only on the sparsity pattern
//! and a numeric phase that can be repeated for new values on the same
//! pattern. The numeric kernel is an up-looking factorization over the
//! elimination tree. No pivoting is performed: the caller supplies the
//! expected sign of every pivot and tiny or wrong-signed pivots are replaced
//! by a signed regularization value, which is the usual treatment for
//! interior-point KKT systems.

use thiserror::Error;

const NONE: usize = usize::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum LdlError {
    #[error("matrix is not square upper-triangular CSC (column {0})")]
    NotUpperTriangular(usize),
    #[error("missing diagonal entry in column {0}")]
    MissingDiagonal(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Compressed sparse column matrix holding the upper triangle of a
/// symmetric matrix. Row indices inside each column are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperCsc {
    pub n: usize,
    pub colptr: Vec<usize>,
    pub rowind: Vec<usize>,
    pub values: Vec<f64>,
}

impl UpperCsc {
    /// Builds the pattern from (row, col) pairs; duplicates are merged and
    /// lower-triangular entries are mirrored into the upper triangle. The
    /// diagonal is always present. Returns the matrix (zero values) and, for
    /// every input pair, the position of its slot in `values`.
    pub fn from_pattern(n: usize, entries: &[(usize, usize)]) -> (Self, Vec<usize>) {
        let mut cols: Vec<Vec<usize>> = (0..n).map(|j| vec![j]).collect();
        for &(i, j) in entries {
            let (r, c) = if i <= j { (i, j) } else { (j, i) };
            cols[c].push(r);
        }
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowind = Vec::new();
        colptr.push(0);
        for col in cols.iter_mut() {
            col.sort_unstable();
            col.dedup();
            rowind.extend_from_slice(col);
            colptr.push(rowind.len());
        }
        let nnz = rowind.len();
        let m = UpperCsc {
            n,
            colptr,
            rowind,
            values: vec![0.0; nnz],
        };
        let slots = entries
            .iter()
            .map(|&(i, j)| {
                let (r, c) = if i <= j { (i, j) } else { (j, i) };
                m.slot(r, c).expect("entry present in pattern")
            })
            .collect();
        (m, slots)
    }

    /// Position of entry (row, col), row ≤ col, in `values`.
    pub fn slot(&self, row: usize, col: usize) -> Option<usize> {
        let range = self.colptr[col]..self.colptr[col + 1];
        self.rowind[range.clone()]
            .binary_search(&row)
            .ok()
            .map(|k| range.start + k)
    }

    pub fn nnz(&self) -> usize {
        self.rowind.len()
    }

    /// y = A x for the full symmetric matrix represented by the upper triangle.
    pub fn sym_matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let i = self.rowind[p];
                let a = self.values[p];
                y[i] += a * x[j];
                if i != j {
                    y[j] += a * x[i];
                }
            }
        }
    }

    /// Symmetric permutation B = P A Pᵀ where `perm[new] = old`. Returns the
    /// permuted matrix and a map from old value positions to new ones.
    pub fn permute(&self, perm: &[usize]) -> (UpperCsc, Vec<usize>) {
        let n = self.n;
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut count = vec![0usize; n];
        for j in 0..n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let (a, b) = (inv[self.rowind[p]], inv[j]);
                count[a.max(b)] += 1;
            }
        }
        let mut colptr = vec![0; n + 1];
        for j in 0..n {
            colptr[j + 1] = colptr[j] + count[j];
        }
        let mut next = colptr.clone();
        let nnz = self.nnz();
        let mut rowind = vec![0; nnz];
        let mut src = vec![0; nnz];
        for j in 0..n {
            for p in self.colptr[j]..self.colptr[j + 1] {
                let (a, b) = (inv[self.rowind[p]], inv[j]);
                let (r, c) = (a.min(b), a.max(b));
                rowind[next[c]] = r;
                src[next[c]] = p;
                next[c] += 1;
            }
        }
        // sort rows within columns, carrying the source positions along
        let mut map = vec![0; nnz];
        let mut new_rowind = vec![0; nnz];
        for c in 0..n {
            let range = colptr[c]..colptr[c + 1];
            let mut idx: Vec<usize> = range.clone().collect();
            idx.sort_unstable_by_key(|&k| rowind[k]);
            for (off, k) in idx.into_iter().enumerate() {
                new_rowind[range.start + off] = rowind[k];
                map[src[k]] = range.start + off;
            }
        }
        let mut values = vec![0.0; nnz];
        for (old, &new) in map.iter().enumerate() {
            values[new] = self.values[old];
        }
        (
            UpperCsc {
                n,
                colptr,
                rowind: new_rowind,
                values,
            },
            map,
        )
    }
}

/// Approximate minimum-degree ordering of the pattern of `a`.
/// Returns `perm` with `perm[k]` = original index eliminated at step k.
pub fn minimum_degree(a: &UpperCsc) -> Vec<usize> {
    let (perm, _, _) = amd::order(a.n, &a.colptr, &a.rowind, &amd::Control::default())
        .expect("CSC pattern from UpperCsc is valid");
    perm
}

/// Symbolic analysis: ordering, permuted pattern and elimination tree.
#[derive(Debug, Clone)]
pub struct LdlSymbolic {
    perm: Vec<usize>,
    /// Maps positions of the caller's matrix values to the permuted matrix.
    value_map: Vec<usize>,
    permuted: UpperCsc,
    etree: Vec<usize>,
    lp: Vec<usize>,
}

impl LdlSymbolic {
    pub fn analyze(a: &UpperCsc) -> Result<Self, LdlError> {
        Self::analyze_with(a, minimum_degree(a))
    }

    pub fn analyze_with(a: &UpperCsc, perm: Vec<usize>) -> Result<Self, LdlError> {
        if perm.len() != a.n {
            return Err(LdlError::Dimension {
                expected: a.n,
                got: perm.len(),
            });
        }
        let (permuted, value_map) = a.permute(&perm);
        let n = a.n;
        let mut work = vec![NONE; n];
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for j in 0..n {
            work[j] = j;
            let mut has_diag = false;
            for p in permuted.colptr[j]..permuted.colptr[j + 1] {
                let mut i = permuted.rowind[p];
                if i > j {
                    return Err(LdlError::NotUpperTriangular(j));
                }
                if i == j {
                    has_diag = true;
                    continue;
                }
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
            if !has_diag {
                return Err(LdlError::MissingDiagonal(j));
            }
        }
        let mut lp = vec![0; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        Ok(LdlSymbolic {
            perm,
            value_map,
            permuted,
            etree,
            lp,
        })
    }

    pub fn n(&self) -> usize {
        self.permuted.n
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.permuted.n]
    }
}

/// Numeric LDLᵀ factors in the permuted ordering.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    /// Number of pivots replaced by the regularization value.
    pub regularized_pivots: usize,
}

impl LdlFactor {
    /// Factors `values` (laid out as the matrix passed to `analyze`).
    /// `signs[k]` is the expected pivot sign of original row k; pivots with
    /// `signs[k] * d < threshold` are replaced by `signs[k] * delta`.
    pub fn factor(
        sym: &LdlSymbolic,
        values: &[f64],
        signs: &[f64],
        threshold: f64,
        delta: f64,
    ) -> Result<Self, LdlError> {
        let n = sym.n();
        let a = &sym.permuted;
        if values.len() != a.nnz() {
            return Err(LdlError::Dimension {
                expected: a.nnz(),
                got: values.len(),
            });
        }
        let mut ax = vec![0.0; a.nnz()];
        for (old, &new) in sym.value_map.iter().enumerate() {
            ax[new] = values[old];
        }
        let psign: Vec<f64> = sym.perm.iter().map(|&o| signs[o]).collect();

        let lp = sym.lp.clone();
        let nnz_l = lp[n];
        let mut li = vec![0usize; nnz_l];
        let mut lx = vec![0.0; nnz_l];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut y_vals = vec![0.0; n];
        let mut y_used = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_space: Vec<usize> = lp[..n].to_vec();
        let mut regularized = 0;

        for k in 0..n {
            let mut nnz_y = 0;
            d[k] = 0.0;
            for p in a.colptr[k]..a.colptr[k + 1] {
                let b = a.rowind[p];
                if b == k {
                    d[k] = ax[p];
                    continue;
                }
                y_vals[b] = ax[p];
                if !y_used[b] {
                    y_used[b] = true;
                    elim[0] = b;
                    let mut ne = 1;
                    let mut nxt = sym.etree[b];
                    while nxt != NONE && nxt < k {
                        if y_used[nxt] {
                            break;
                        }
                        y_used[nxt] = true;
                        elim[ne] = nxt;
                        ne += 1;
                        nxt = sym.etree[nxt];
                    }
                    while ne > 0 {
                        ne -= 1;
                        y_idx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let tmp = next_space[c];
                let yc = y_vals[c];
                for j in lp[c]..tmp {
                    y_vals[li[j]] -= lx[j] * yc;
                }
                li[tmp] = k;
                lx[tmp] = yc * dinv[c];
                d[k] -= yc * lx[tmp];
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            if !(psign[k] * d[k] >= threshold) {
                d[k] = psign[k] * delta;
                regularized += 1;
            }
            dinv[k] = 1.0 / d[k];
        }
        Ok(LdlFactor {
            perm: sym.perm.clone(),
            lp,
            li,
            lx,
            d,
            regularized_pivots: regularized,
        })
    }

    /// Solves A x = b in place (b in the original ordering).
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        let mut x: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        for i in 0..n {
            let xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                x[self.li[j]] -= self.lx[j] * xi;
            }
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for j in self.lp[i]..self.lp[i + 1] {
                xi -= self.lx[j] * x[self.li[j]];
            }
            x[i] = xi;
        }
        for (k, &o) in self.perm.iter().enumerate() {
            b[o] = x[k];
        }
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }
}
