//! Semidefinite programs over Hermitian matrix blocks and nonnegative
//! scalars, with an interior-point solver and an optional external backend.
//!
//! A problem minimizes `sum_b Re tr(C_b X_b) + c^T x` subject to affine
//! constraints `sum_b Re tr(A_ib X_b) + a_i^T x  (=, <=, >=)  b_i` with every
//! `X_b` Hermitian positive semidefinite and `x >= 0`.
//!
//! Constraint coefficients are sparse triplets. A block may carry a basis
//! `U` (n x r); coefficients declared in that basis stand for `U C U^H`,
//! which keeps Schur-complement assembly cheap when many constraints share a
//! low-rank column space.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Natural,
    Basis,
}

/// Hermitian coefficient stored as fully expanded triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub space: Space,
    pub entries: Vec<(usize, usize, Complex64)>,
}

impl Coefficient {
    fn expand(space: Space, entries: impl IntoIterator<Item = (usize, usize, Complex64)>) -> Self {
        let mut out = Vec::new();
        for (p, q, v) in entries {
            if p == q {
                out.push((p, p, Complex64::new(v.re, 0.0)));
            } else {
                out.push((p, q, v));
                out.push((q, p, v.conj()));
            }
        }
        Coefficient { space, entries: out }
    }

    /// Triplet `(p, q, v)` with `p != q` sets both `A[p,q] = v` and `A[q,p] = conj(v)`.
    pub fn hermitian(entries: impl IntoIterator<Item = (usize, usize, Complex64)>) -> Self {
        Self::expand(Space::Natural, entries)
    }

    /// Same as [`Coefficient::hermitian`] but in the block basis.
    pub fn in_basis(entries: impl IntoIterator<Item = (usize, usize, Complex64)>) -> Self {
        Self::expand(Space::Basis, entries)
    }

    pub fn real(entries: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        Self::hermitian(entries.into_iter().map(|(p, q, v)| (p, q, Complex64::new(v, 0.0))))
    }

    /// All entries of a dense Hermitian matrix.
    pub fn dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for q in 0..m.ncols() {
            for p in 0..m.nrows() {
                let v = if p == q { Complex64::new(m[(p, p)].re, 0.0) } else { m[(p, q)] };
                if v != Complex64::new(0.0, 0.0) {
                    entries.push((p, q, v));
                }
            }
        }
        Coefficient { space: Space::Natural, entries }
    }

    pub fn identity(n: usize) -> Self {
        Self::real((0..n).map(|i| (i, i, 1.0)))
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for e in &mut self.entries {
            e.2 *= s;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(usize, Coefficient)>,
    pub scalars: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub dim: usize,
    pub basis: Option<CMatrix>,
    pub label: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProblem {
    pub blocks: Vec<Block>,
    pub objective: Vec<Option<CMatrix>>,
    pub scalar_objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, dim: usize, label: impl Into<String>) -> usize {
        self.blocks.push(Block { dim, basis: None, label: label.into() });
        self.objective.push(None);
        self.blocks.len() - 1
    }

    pub fn add_block_with_basis(&mut self, basis: CMatrix, label: impl Into<String>) -> usize {
        let id = self.add_block(basis.nrows(), label);
        self.blocks[id].basis = Some(basis);
        id
    }

    /// Adds `n` nonnegative scalars and returns the index of the first one.
    pub fn add_scalars(&mut self, n: usize) -> usize {
        let first = self.scalar_objective.len();
        self.scalar_objective.extend(std::iter::repeat(0.0).take(n));
        first
    }

    pub fn scalar_count(&self) -> usize {
        self.scalar_objective.len()
    }

    pub fn set_objective(&mut self, block: usize, c: CMatrix) {
        self.objective[block] = Some(c);
    }

    pub fn add_constraint(&mut self, c: Constraint) -> usize {
        self.constraints.push(c);
        self.constraints.len() - 1
    }

    fn check(&self) -> Result<()> {
        for (i, c) in self.constraints.iter().enumerate() {
            for (b, coef) in &c.terms {
                let blk = self
                    .blocks
                    .get(*b)
                    .ok_or_else(|| Error::Dimension(format!("constraint {i} refers to missing block {b}")))?;
                let lim = match coef.space {
                    Space::Natural => blk.dim,
                    Space::Basis => blk
                        .basis
                        .as_ref()
                        .map(|u| u.ncols())
                        .ok_or_else(|| Error::Dimension(format!("block {b} has no basis")))?,
                };
                if coef.entries.iter().any(|&(p, q, _)| p >= lim || q >= lim) {
                    return Err(Error::Dimension(format!("constraint {i} ({}) indexes past block {b}", c.label)));
                }
            }
            if c.scalars.iter().any(|&(s, _)| s >= self.scalar_count()) {
                return Err(Error::Dimension(format!("constraint {i} refers to a missing scalar")));
            }
        }
        for (b, c) in self.objective.iter().enumerate() {
            if let Some(c) = c {
                if c.shape() != (self.blocks[b].dim, self.blocks[b].dim) {
                    return Err(Error::Dimension(format!("objective of block {b} has the wrong shape")));
                }
            }
        }
        Ok(())
    }

    /// Primal objective at a point.
    pub fn objective_value(&self, blocks: &[CMatrix], scalars: &[f64]) -> f64 {
        let mut v: f64 = self.scalar_objective.iter().zip(scalars).map(|(a, b)| a * b).sum();
        for (c, x) in self.objective.iter().zip(blocks) {
            if let Some(c) = c {
                v += (c * x).trace().re;
            }
        }
        v
    }

    /// Constraint left-hand sides at a point.
    pub fn evaluate(&self, blocks: &[CMatrix], scalars: &[f64]) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|c| {
                let mut v: f64 = c.scalars.iter().map(|&(s, a)| a * scalars[s]).sum();
                for (b, coef) in &c.terms {
                    let x = match coef.space {
                        Space::Natural => blocks[*b].clone(),
                        Space::Basis => {
                            let u = self.blocks[*b].basis.as_ref().expect("checked basis");
                            u.adjoint() * &blocks[*b] * u
                        }
                    };
                    v += coef.entries.iter().map(|&(p, q, a)| (a * x[(q, p)]).re).sum::<f64>();
                }
                v
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
    Numerical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub blocks: Vec<CMatrix>,
    pub scalars: Vec<f64>,
    /// Multipliers of the user constraints, in the sign convention
    /// `C - sum_i y_i A_i = S`.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

impl ConicSolution {
    pub fn require_optimal(self) -> Result<Self> {
        match self.status {
            SolveStatus::Optimal => Ok(self),
            SolveStatus::Infeasible => Err(Error::Infeasible("conic solver certified infeasibility".into())),
            SolveStatus::Unbounded => Err(Error::Unbounded),
            SolveStatus::MaxIterations => Err(Error::Numerical(format!(
                "no convergence in {} iterations (primal {:.1e}, dual {:.1e}, gap {:.1e})",
                self.iterations, self.primal_residual, self.dual_residual, self.gap
            ))),
            SolveStatus::Numerical => Err(Error::Numerical("conic solver broke down".into())),
        }
    }
}

pub trait ConicSolver: Send + Sync {
    fn solve(&self, problem: &ConicProblem) -> Result<ConicSolution>;
}

/// Primal-dual path-following method with the HKM search direction and
/// Mehrotra's predictor-corrector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorPoint {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for InteriorPoint {
    fn default() -> Self {
        InteriorPoint { tolerance: 1e-8, max_iterations: 100 }
    }
}

/// Problem in equality form with inequality slacks appended to the scalars.
struct Standard<'a> {
    problem: &'a ConicProblem,
    dims: Vec<usize>,
    lp: usize,
    c_blocks: Vec<CMatrix>,
    c_lp: DVector<f64>,
    b: DVector<f64>,
    /// Per-row normalization applied to A and b.
    row_scale: Vec<f64>,
    lp_rows: Vec<Vec<(usize, f64)>>,
    /// For each block, the (row, coefficient) pairs touching it.
    by_block: Vec<Vec<(usize, &'a Coefficient)>>,
}

struct BlockCache {
    x: CMatrix,
    zinv: CMatrix,
    xu: Option<CMatrix>,
    ux: Option<CMatrix>,
    su: Option<CMatrix>,
    us: Option<CMatrix>,
    p: Option<CMatrix>,
    q: Option<CMatrix>,
}

fn pair(ci: &Coefficient, cj: &Coefficient, l: &CMatrix, r: &CMatrix) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &(p, q, a) in &ci.entries {
        for &(rr, s, c) in &cj.entries {
            acc += a * c * l[(q, rr)] * r[(s, p)];
        }
    }
    acc.re
}

impl<'a> Standard<'a> {
    fn new(problem: &'a ConicProblem) -> Self {
        let dims: Vec<usize> = problem.blocks.iter().map(|b| b.dim).collect();
        let user_lp = problem.scalar_count();
        let mut lp = user_lp;
        let m = problem.constraints.len();
        let mut lp_rows = vec![Vec::new(); m];
        for (i, c) in problem.constraints.iter().enumerate() {
            lp_rows[i] = c.scalars.clone();
            match c.sense {
                Sense::Eq => {}
                Sense::Le => {
                    lp_rows[i].push((lp, 1.0));
                    lp += 1;
                }
                Sense::Ge => {
                    lp_rows[i].push((lp, -1.0));
                    lp += 1;
                }
            }
        }
        let mut by_block = vec![Vec::new(); dims.len()];
        for (i, c) in problem.constraints.iter().enumerate() {
            for (b, coef) in &c.terms {
                by_block[*b].push((i, coef));
            }
        }
        let c_blocks = problem
            .objective
            .iter()
            .zip(&dims)
            .map(|(c, &n)| c.as_ref().map(|c| (c + c.adjoint()) * Complex64::new(0.5, 0.0)).unwrap_or_else(|| CMatrix::zeros(n, n)))
            .collect();
        let mut c_lp = DVector::zeros(lp);
        c_lp.rows_mut(0, user_lp).copy_from(&DVector::from_column_slice(&problem.scalar_objective));
        let mut s = Standard {
            problem,
            dims,
            lp,
            c_blocks,
            c_lp,
            b: DVector::from_iterator(m, problem.constraints.iter().map(|c| c.rhs)),
            row_scale: vec![1.0; m],
            lp_rows,
            by_block,
        };
        s.normalize_rows();
        s
    }

    fn normalize_rows(&mut self) {
        let m = self.b.len();
        let mut norms = vec![0.0; m];
        for (i, row) in self.lp_rows.iter().enumerate() {
            norms[i] += row.iter().map(|(_, a)| a * a).sum::<f64>();
        }
        for (b, list) in self.by_block.iter().enumerate() {
            let n = self.dims[b];
            let eye = CMatrix::identity(n, n);
            let gram = self.problem.blocks[b].basis.as_ref().map(|u| u.adjoint() * u);
            for (i, coef) in list {
                norms[*i] += match coef.space {
                    Space::Natural => pair(coef, coef, &eye, &eye),
                    Space::Basis => {
                        let g = gram.as_ref().expect("checked basis");
                        pair(coef, coef, g, g)
                    }
                };
            }
        }
        for i in 0..m {
            let s = if norms[i] > 0.0 { 1.0 / norms[i].sqrt() } else { 1.0 };
            self.row_scale[i] = s;
            self.b[i] *= s;
        }
    }

    fn basis(&self, b: usize) -> Option<&CMatrix> {
        self.problem.blocks[b].basis.as_ref()
    }

    /// A(G) for arbitrary square matrices G (only the Hermitian part matters).
    fn apply(&self, g: &[CMatrix], gl: &DVector<f64>) -> DVector<f64> {
        let m = self.b.len();
        let mut out = DVector::zeros(m);
        for (i, row) in self.lp_rows.iter().enumerate() {
            out[i] += row.iter().map(|&(s, a)| a * gl[s]).sum::<f64>();
        }
        for (b, list) in self.by_block.iter().enumerate() {
            let projected = self.basis(b).map(|u| u.adjoint() * &g[b] * u);
            for (i, coef) in list {
                let x = match coef.space {
                    Space::Natural => &g[b],
                    Space::Basis => projected.as_ref().expect("checked basis"),
                };
                out[*i] += coef.entries.iter().map(|&(p, q, a)| (a * x[(q, p)]).re).sum::<f64>();
            }
        }
        for i in 0..m {
            out[i] *= self.row_scale[i];
        }
        out
    }

    /// A^T(y).
    fn adjoint(&self, y: &DVector<f64>) -> (Vec<CMatrix>, DVector<f64>) {
        let mut blocks = Vec::with_capacity(self.dims.len());
        for (b, list) in self.by_block.iter().enumerate() {
            let n = self.dims[b];
            let mut nat = CMatrix::zeros(n, n);
            let mut core = self.basis(b).map(|u| CMatrix::zeros(u.ncols(), u.ncols()));
            for (i, coef) in list {
                let yi = y[*i] * self.row_scale[*i];
                let target = match coef.space {
                    Space::Natural => &mut nat,
                    Space::Basis => core.as_mut().expect("checked basis"),
                };
                for &(p, q, a) in &coef.entries {
                    target[(p, q)] += a * yi;
                }
            }
            if let (Some(core), Some(u)) = (core, self.basis(b)) {
                nat += u * core * u.adjoint();
            }
            blocks.push(nat);
        }
        let mut lp = DVector::zeros(self.lp);
        for (i, row) in self.lp_rows.iter().enumerate() {
            for &(s, a) in row {
                lp[s] += a * y[i] * self.row_scale[i];
            }
        }
        (blocks, lp)
    }

    fn cache(&self, x: &[CMatrix], zinv: &[CMatrix]) -> Vec<BlockCache> {
        (0..self.dims.len())
            .map(|b| {
                let mut c = BlockCache {
                    x: x[b].clone(),
                    zinv: zinv[b].clone(),
                    xu: None,
                    ux: None,
                    su: None,
                    us: None,
                    p: None,
                    q: None,
                };
                if let Some(u) = self.basis(b) {
                    let ux = u.adjoint() * &x[b];
                    let us = u.adjoint() * &zinv[b];
                    c.p = Some(&ux * u);
                    c.q = Some(&us * u);
                    c.xu = Some(&x[b] * u);
                    c.su = Some(&zinv[b] * u);
                    c.ux = Some(ux);
                    c.us = Some(us);
                }
                c
            })
            .collect()
    }

    fn schur(&self, cache: &[BlockCache], xl: &DVector<f64>, zl: &DVector<f64>) -> DMatrix<f64> {
        let m = self.b.len();
        let mut mat = DMatrix::zeros(m, m);
        for (b, list) in self.by_block.iter().enumerate() {
            let c = &cache[b];
            for (a, (i, ci)) in list.iter().enumerate() {
                for (j, cj) in list[a..].iter() {
                    let (l, r) = match (ci.space, cj.space) {
                        (Space::Natural, Space::Natural) => (&c.x, &c.zinv),
                        (Space::Natural, Space::Basis) => (c.xu.as_ref().unwrap(), c.us.as_ref().unwrap()),
                        (Space::Basis, Space::Natural) => (c.ux.as_ref().unwrap(), c.su.as_ref().unwrap()),
                        (Space::Basis, Space::Basis) => (c.p.as_ref().unwrap(), c.q.as_ref().unwrap()),
                    };
                    let v = pair(ci, cj, l, r);
                    if i != j {
                        mat[(*i, *j)] += v;
                        mat[(*j, *i)] += v;
                    } else if std::ptr::eq(*ci, *cj) {
                        mat[(*i, *i)] += v;
                    } else {
                        // two coefficients of one row on the same block
                        mat[(*i, *i)] += 2.0 * v;
                    }
                }
            }
        }
        // Scalar part: sum_l a_il a_jl x_l / z_l.
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.lp];
        for (i, row) in self.lp_rows.iter().enumerate() {
            for &(s, a) in row {
                cols[s].push((i, a));
            }
        }
        for (s, col) in cols.iter().enumerate() {
            let d = xl[s] / zl[s];
            for &(i, a) in col {
                for &(j, c) in col {
                    mat[(i, j)] += a * c * d;
                }
            }
        }
        for i in 0..m {
            for j in 0..m {
                mat[(i, j)] *= self.row_scale[i] * self.row_scale[j];
            }
        }
        mat
    }
}

fn herm(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

fn inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Largest step alpha with X + alpha D still positive semidefinite.
fn max_step(x: &CMatrix, d: &CMatrix) -> Option<f64> {
    let l = x.clone().cholesky()?.l();
    let li = l.try_inverse()?;
    let t = herm(&(&li * d * li.adjoint()));
    let lmin = t.symmetric_eigenvalues().min();
    Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
}

fn max_step_lp(x: &DVector<f64>, d: &DVector<f64>) -> f64 {
    x.iter().zip(d.iter()).filter(|(_, &di)| di < 0.0).map(|(&xi, &di)| -xi / di).fold(f64::INFINITY, f64::min)
}

enum Factor {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factor {
    fn new(m: DMatrix<f64>) -> Option<Factor> {
        let scale = m.diagonal().amax().max(1e-300);
        if let Some(c) = m.clone().cholesky() {
            return Some(Factor::Chol(c));
        }
        let mut reg = m.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += 1e-13 * scale;
        }
        if let Some(c) = reg.cholesky() {
            return Some(Factor::Chol(c));
        }
        let lu = m.lu();
        if lu.is_invertible() {
            Some(Factor::Lu(lu))
        } else {
            None
        }
    }

    fn solve(&self, r: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            Factor::Chol(c) => Some(c.solve(r)),
            Factor::Lu(l) => l.solve(r),
        }
    }
}

impl ConicSolver for InteriorPoint {
    fn solve(&self, problem: &ConicProblem) -> Result<ConicSolution> {
        problem.check()?;
        let st = Standard::new(problem);
        let nb = st.dims.len();
        let m = st.b.len();
        let nu = (st.dims.iter().sum::<usize>() + st.lp) as f64;
        let c_norm = (st.c_blocks.iter().map(|c| c.norm_squared()).sum::<f64>() + st.c_lp.norm_squared()).sqrt();
        let b_norm = st.b.norm();

        let xi = 10f64.max(nu.sqrt()).max(st.b.amax() * 2.0);
        let eta = 10f64.max(nu.sqrt()).max(c_norm);
        let mut x: Vec<CMatrix> = st.dims.iter().map(|&n| CMatrix::identity(n, n) * Complex64::new(xi, 0.0)).collect();
        let mut z: Vec<CMatrix> = st.dims.iter().map(|&n| CMatrix::identity(n, n) * Complex64::new(eta, 0.0)).collect();
        let mut xl = DVector::from_element(st.lp, xi);
        let mut zl = DVector::from_element(st.lp, eta);
        let mut y = DVector::zeros(m);

        let mut status = SolveStatus::MaxIterations;
        let mut it = 0;
        let (mut relp, mut reld, mut gap) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        while it < self.max_iterations {
            let ax = st.apply(&x, &xl);
            let rp = &st.b - &ax;
            let (aty, atyl) = st.adjoint(&y);
            let rd: Vec<CMatrix> = (0..nb).map(|b| &st.c_blocks[b] - &z[b] - &aty[b]).collect();
            let rdl = &st.c_lp - &zl - &atyl;
            let pobj = (0..nb).map(|b| inner(&st.c_blocks[b], &x[b])).sum::<f64>() + st.c_lp.dot(&xl);
            let dobj = st.b.dot(&y);
            let mu = ((0..nb).map(|b| inner(&x[b], &z[b])).sum::<f64>() + xl.dot(&zl)) / nu;
            let rd_norm = (rd.iter().map(|r| r.norm_squared()).sum::<f64>() + rdl.norm_squared()).sqrt();
            relp = rp.norm() / (1.0 + b_norm);
            reld = rd_norm / (1.0 + c_norm);
            gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            log::trace!("ipm {it}: pobj {pobj:.6e} dobj {dobj:.6e} relp {relp:.1e} reld {reld:.1e} gap {gap:.1e}");
            if relp <= self.tolerance && reld <= self.tolerance && gap <= self.tolerance {
                status = SolveStatus::Optimal;
                break;
            }
            // Certificates: a dual ray proves primal infeasibility, a primal ray dual infeasibility.
            if dobj > 0.0 {
                let ray = (aty.iter().zip(&z).map(|(a, s)| (a + s).norm_squared()).sum::<f64>()
                    + (&atyl + &zl).norm_squared())
                .sqrt();
                if ray / dobj < 1e-8 * (1.0 + c_norm) && dobj > 1e6 * (1.0 + c_norm) {
                    status = SolveStatus::Infeasible;
                    break;
                }
            }
            if pobj < 0.0 {
                if ax.norm() / -pobj < 1e-8 * (1.0 + b_norm) && -pobj > 1e6 * (1.0 + b_norm) {
                    status = SolveStatus::Unbounded;
                    break;
                }
            }

            let zinv: Vec<CMatrix> = match z.iter().map(|s| s.clone().cholesky().map(|c| herm(&c.inverse()))).collect::<Option<Vec<_>>>() {
                Some(v) => v,
                None => {
                    status = SolveStatus::Numerical;
                    break;
                }
            };
            let cache = st.cache(&x, &zinv);
            let factor = match Factor::new(st.schur(&cache, &xl, &zl)) {
                Some(f) => f,
                None => {
                    status = SolveStatus::Numerical;
                    break;
                }
            };

            let direction = |sigma: f64, corr: Option<(&[CMatrix], &DVector<f64>)>| -> Option<(Vec<CMatrix>, DVector<f64>, DVector<f64>, Vec<CMatrix>, DVector<f64>)> {
                let mut g: Vec<CMatrix> = (0..nb)
                    .map(|b| &zinv[b] * Complex64::new(sigma * mu, 0.0) - &x[b] - &x[b] * &rd[b] * &zinv[b])
                    .collect();
                let mut gl = DVector::from_fn(st.lp, |s, _| sigma * mu / zl[s] - xl[s] - xl[s] * rdl[s] / zl[s]);
                if let Some((cb, cl)) = corr {
                    for b in 0..nb {
                        g[b] -= &cb[b];
                    }
                    gl -= cl;
                }
                let dy = factor.solve(&(&rp - st.apply(&g, &gl)))?;
                let (ady, adyl) = st.adjoint(&dy);
                let dz: Vec<CMatrix> = (0..nb).map(|b| &rd[b] - &ady[b]).collect();
                let dzl = &rdl - &adyl;
                let mut dx = Vec::with_capacity(nb);
                for b in 0..nb {
                    let mut t = &zinv[b] * Complex64::new(sigma * mu, 0.0) - &x[b] - &x[b] * &dz[b] * &zinv[b];
                    if let Some((cb, _)) = corr {
                        t -= &cb[b];
                    }
                    dx.push(herm(&t));
                }
                let mut dxl = DVector::from_fn(st.lp, |s, _| sigma * mu / zl[s] - xl[s] - xl[s] * dzl[s] / zl[s]);
                if let Some((_, cl)) = corr {
                    dxl -= cl;
                }
                Some((dx, dxl, dy, dz, dzl))
            };
            let steps = |dx: &[CMatrix], dxl: &DVector<f64>, dz: &[CMatrix], dzl: &DVector<f64>| -> Option<(f64, f64)> {
                let mut ap = max_step_lp(&xl, dxl);
                let mut ad = max_step_lp(&zl, dzl);
                for b in 0..nb {
                    ap = ap.min(max_step(&x[b], &dx[b])?);
                    ad = ad.min(max_step(&z[b], &dz[b])?);
                }
                Some((ap, ad))
            };

            let Some((dxa, dxla, _, dza, dzla)) = direction(0.0, None) else {
                status = SolveStatus::Numerical;
                break;
            };
            let Some((apa, ada)) = steps(&dxa, &dxla, &dza, &dzla) else {
                status = SolveStatus::Numerical;
                break;
            };
            let (apa, ada) = (apa.min(1.0), ada.min(1.0));
            let mu_aff = ((0..nb)
                .map(|b| inner(&(&x[b] + &dxa[b] * Complex64::new(apa, 0.0)), &(&z[b] + &dza[b] * Complex64::new(ada, 0.0))))
                .sum::<f64>()
                + (&xl + &dxla * apa).dot(&(&zl + &dzla * ada)))
                / nu;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
            let corr: Vec<CMatrix> = (0..nb).map(|b| &dxa[b] * &dza[b] * &zinv[b]).collect();
            let corrl = DVector::from_fn(st.lp, |s, _| dxla[s] * dzla[s] / zl[s]);
            let Some((dx, dxl, dy, dz, dzl)) = direction(sigma, Some((&corr, &corrl))) else {
                status = SolveStatus::Numerical;
                break;
            };
            let Some((ap, ad)) = steps(&dx, &dxl, &dz, &dzl) else {
                status = SolveStatus::Numerical;
                break;
            };
            let gamma = 0.9 + 0.09 * apa.min(ada);
            let ap = (gamma * ap).min(1.0);
            let ad = (gamma * ad).min(1.0);
            for b in 0..nb {
                x[b] = herm(&(&x[b] + &dx[b] * Complex64::new(ap, 0.0)));
                z[b] = herm(&(&z[b] + &dz[b] * Complex64::new(ad, 0.0)));
            }
            xl += &dxl * ap;
            zl += &dzl * ad;
            y += &dy * ad;
            it += 1;
        }

        let user_lp = problem.scalar_count();
        let duals = (0..m).map(|i| y[i] * st.row_scale[i]).collect();
        Ok(ConicSolution {
            status,
            objective: problem.objective_value(&x, xl.as_slice()),
            blocks: x,
            scalars: xl.as_slice()[..user_lp].to_vec(),
            duals,
            iterations: it,
            primal_residual: relp,
            dual_residual: reld,
            gap,
        })
    }
}

#[cfg(feature = "clarabel")]
pub use self::clarabel_backend::ClarabelBackend;

#[cfg(feature = "clarabel")]
mod clarabel_backend {
    use super::*;
    use clarabel::algebra::CscMatrix;
    use clarabel::solver::{
        DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
    };

    /// External interior-point backend. Complex blocks are embedded as
    /// real blocks [[Re, -Im], [Im, Re]] of twice the size.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct ClarabelBackend {
        pub tolerance: f64,
        pub max_iterations: u32,
    }

    impl Default for ClarabelBackend {
        fn default() -> Self {
            ClarabelBackend { tolerance: 1e-8, max_iterations: 200 }
        }
    }

    fn tri_index(r: usize, c: usize) -> usize {
        // upper triangle, column major
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        c * (c + 1) / 2 + r
    }

    /// Real coefficient of the embedded variable such that
    /// Re tr(A X) = sum_k coef_k * svec_k.
    fn embed_coef(n: usize, entries: &[(usize, usize, Complex64)], offset: usize, out: &mut std::collections::BTreeMap<usize, f64>) {
        let s2 = std::f64::consts::SQRT_2;
        // Re tr(A X) = 1/2 tr(Ae Xe); Ae = [[Re A, -Im A],[Im A, Re A]].
        let mut add = |r: usize, c: usize, v: f64| {
            let w = if r == c { 0.5 * v } else { 0.5 * v / s2 };
            *out.entry(offset + tri_index(r, c)).or_insert(0.0) += w;
        };
        for &(p, q, a) in entries {
            add(p, q, a.re);
            add(p + n, q + n, a.re);
            add(p + n, q, a.im);
            add(p, q + n, -a.im);
        }
    }

    fn dense_entries(m: &CMatrix) -> Vec<(usize, usize, Complex64)> {
        let mut v = Vec::new();
        for q in 0..m.ncols() {
            for p in 0..m.nrows() {
                if m[(p, q)] != Complex64::new(0.0, 0.0) {
                    v.push((p, q, m[(p, q)]));
                }
            }
        }
        v
    }

    fn natural_entries(problem: &ConicProblem, b: usize, coef: &Coefficient) -> Vec<(usize, usize, Complex64)> {
        match coef.space {
            Space::Natural => coef.entries.clone(),
            Space::Basis => {
                let u = problem.blocks[b].basis.as_ref().expect("checked basis");
                let r = u.ncols();
                let mut core = CMatrix::zeros(r, r);
                for &(p, q, a) in &coef.entries {
                    core[(p, q)] += a;
                }
                dense_entries(&(u * core * u.adjoint()))
            }
        }
    }

    impl ConicSolver for ClarabelBackend {
        fn solve(&self, problem: &ConicProblem) -> Result<ConicSolution> {
            problem.check()?;
            let sizes: Vec<usize> = problem.blocks.iter().map(|b| 2 * b.dim).collect();
            let mut offsets = Vec::new();
            let mut nvar = 0;
            for &s in &sizes {
                offsets.push(nvar);
                nvar += s * (s + 1) / 2;
            }
            let lp0 = nvar;
            let user_lp = problem.scalar_count();
            let n_ineq = problem.constraints.iter().filter(|c| c.sense != Sense::Eq).count();
            nvar += user_lp + n_ineq;

            let mut q = vec![0.0; nvar];
            for (b, c) in problem.objective.iter().enumerate() {
                if let Some(c) = c {
                    let mut acc = std::collections::BTreeMap::new();
                    embed_coef(problem.blocks[b].dim, &dense_entries(&herm(c)), offsets[b], &mut acc);
                    for (k, v) in acc {
                        q[k] += v;
                    }
                }
            }
            q[lp0..lp0 + user_lp].copy_from_slice(&problem.scalar_objective);

            let mut trip: Vec<(usize, usize, f64)> = Vec::new();
            let mut rhs = Vec::new();
            let mut slack = lp0 + user_lp;
            for (i, c) in problem.constraints.iter().enumerate() {
                let mut acc = std::collections::BTreeMap::new();
                for (b, coef) in &c.terms {
                    embed_coef(problem.blocks[*b].dim, &natural_entries(problem, *b, coef), offsets[*b], &mut acc);
                }
                for &(s, a) in &c.scalars {
                    *acc.entry(lp0 + s).or_insert(0.0) += a;
                }
                match c.sense {
                    Sense::Eq => {}
                    Sense::Le => {
                        acc.insert(slack, 1.0);
                        slack += 1;
                    }
                    Sense::Ge => {
                        acc.insert(slack, -1.0);
                        slack += 1;
                    }
                }
                for (k, v) in acc {
                    trip.push((i, k, v));
                }
                rhs.push(c.rhs);
            }
            let m_eq = problem.constraints.len();
            let mut row = m_eq;
            for k in lp0..nvar {
                trip.push((row, k, -1.0));
                rhs.push(0.0);
                row += 1;
            }
            for (b, &s) in sizes.iter().enumerate() {
                for k in 0..s * (s + 1) / 2 {
                    trip.push((row, offsets[b] + k, -1.0));
                    rhs.push(0.0);
                    row += 1;
                }
            }
            let a = csc(row, nvar, &trip);
            let p = CscMatrix::zeros((nvar, nvar));
            let mut cones = vec![SupportedConeT::ZeroConeT(m_eq)];
            if nvar > lp0 {
                cones.push(SupportedConeT::NonnegativeConeT(nvar - lp0));
            }
            for &s in &sizes {
                cones.push(SupportedConeT::PSDTriangleConeT(s));
            }
            let settings = DefaultSettingsBuilder::default()
                .verbose(false)
                .tol_gap_abs(self.tolerance)
                .tol_gap_rel(self.tolerance)
                .tol_feas(self.tolerance)
                .max_iter(self.max_iterations)
                .build()
                .map_err(|e| Error::Numerical(format!("clarabel settings: {e:?}")))?;
            let mut solver = DefaultSolver::new(&p, &q, &a, &rhs, &cones, settings)
                .map_err(|e| Error::Numerical(format!("clarabel setup: {e:?}")))?;
            solver.solve();
            let sol = &solver.solution;
            let status = match sol.status {
                SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
                SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
                SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
                SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::MaxIterations,
                _ => SolveStatus::Numerical,
            };
            let s2 = std::f64::consts::SQRT_2;
            let blocks = problem
                .blocks
                .iter()
                .enumerate()
                .map(|(b, blk)| {
                    let n = blk.dim;
                    let s = 2 * n;
                    let mut e = DMatrix::<f64>::zeros(s, s);
                    for c in 0..s {
                        for r in 0..=c {
                            let v = sol.x[offsets[b] + tri_index(r, c)];
                            let v = if r == c { v } else { v / s2 };
                            e[(r, c)] = v;
                            e[(c, r)] = v;
                        }
                    }
                    CMatrix::from_fn(n, n, |r, c| {
                        Complex64::new(
                            0.5 * (e[(r, c)] + e[(r + n, c + n)]),
                            0.5 * (e[(r + n, c)] - e[(r, c + n)]),
                        )
                    })
                })
                .collect::<Vec<_>>();
            let scalars = sol.x[lp0..lp0 + user_lp].to_vec();
            Ok(ConicSolution {
                status,
                objective: problem.objective_value(&blocks, &scalars),
                blocks,
                scalars,
                duals: sol.z[..m_eq].iter().map(|v| -v).collect(),
                iterations: sol.iterations as usize,
                primal_residual: sol.r_prim,
                dual_residual: sol.r_dual,
                gap: (sol.obj_val - sol.obj_val_dual).abs() / (1.0 + sol.obj_val.abs()),
            })
        }
    }

    fn csc(m: usize, n: usize, trip: &[(usize, usize, f64)]) -> CscMatrix<f64> {
        let mut t: Vec<(usize, usize, f64)> = trip.iter().filter(|e| e.2 != 0.0).cloned().collect();
        t.sort_by_key(|&(r, c, _)| (c, r));
        let mut colptr = vec![0usize; n + 1];
        let mut rowval = Vec::with_capacity(t.len());
        let mut nzval = Vec::with_capacity(t.len());
        for &(r, c, v) in &t {
            colptr[c + 1] += 1;
            rowval.push(r);
            nzval.push(v);
        }
        for c in 0..n {
            colptr[c + 1] += colptr[c];
        }
        CscMatrix::new(m, n, colptr, rowval, nzval)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solvers() -> Vec<Box<dyn ConicSolver>> {
        #[allow(unused_mut)]
        let mut v: Vec<Box<dyn ConicSolver>> = vec![Box::new(InteriorPoint::default())];
        #[cfg(feature = "clarabel")]
        v.push(Box::new(ClarabelBackend::default()));
        v
    }

    #[test]
    fn trace_above_identity() {
        for s in solvers() {
            let mut p = ConicProblem::new();
            let x = p.add_block(2, "X");
            p.set_objective(x, CMatrix::identity(2, 2));
            // X - I >= 0 expressed through a slack block.
            let y = p.add_block(2, "Y");
            for (r, c) in [(0, 0), (1, 1), (0, 1)] {
                let rhs = if r == c { 1.0 } else { 0.0 };
                if r == c {
                    p.add_constraint(Constraint {
                        terms: vec![(x, Coefficient::real([(r, c, 1.0)])), (y, Coefficient::real([(r, c, -1.0)]))],
                        scalars: vec![],
                        sense: Sense::Eq,
                        rhs,
                        label: format!("tie {r}{c}"),
                    });
                } else {
                    for v in [Complex64::new(0.5, 0.0), Complex64::new(0.0, 0.5)] {
                        p.add_constraint(Constraint {
                            terms: vec![
                                (x, Coefficient::hermitian([(r, c, v)])),
                                (y, Coefficient::hermitian([(r, c, -v)])),
                            ],
                            scalars: vec![],
                            sense: Sense::Eq,
                            rhs,
                            label: format!("tie {r}{c}"),
                        });
                    }
                }
            }
            let sol = s.solve(&p).unwrap().require_optimal().unwrap();
            assert_relative_eq!(sol.objective, 2.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn minimum_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in solvers() {
            for n in [3, 5] {
                let a = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
                let c = herm(&a);
                let mut p = ConicProblem::new();
                let x = p.add_block(n, "X");
                p.set_objective(x, c.clone());
                p.add_constraint(Constraint {
                    terms: vec![(x, Coefficient::identity(n))],
                    scalars: vec![],
                    sense: Sense::Eq,
                    rhs: 1.0,
                    label: "trace".into(),
                });
                let sol = s.solve(&p).unwrap().require_optimal().unwrap();
                let lmin = c.symmetric_eigenvalues().min();
                assert_relative_eq!(sol.objective, lmin, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn infeasible_trace_bound() {
        for s in solvers() {
            let mut p = ConicProblem::new();
            let x = p.add_block(2, "X");
            p.set_objective(x, CMatrix::identity(2, 2));
            p.add_constraint(Constraint {
                terms: vec![(x, Coefficient::identity(2))],
                scalars: vec![],
                sense: Sense::Le,
                rhs: -1.0,
                label: "negative trace".into(),
            });
            let sol = s.solve(&p).unwrap();
            assert_eq!(sol.status, SolveStatus::Infeasible);
            assert!(matches!(sol.require_optimal(), Err(Error::Infeasible(_))));
        }
    }

    #[test]
    fn unbounded_scalar() {
        for s in solvers() {
            let mut p = ConicProblem::new();
            let x = p.add_block(1, "X");
            let t = p.add_scalars(2);
            p.scalar_objective[t] = -1.0;
            p.add_constraint(Constraint {
                terms: vec![(x, Coefficient::identity(1))],
                scalars: vec![(t + 1, 1.0)],
                sense: Sense::Eq,
                rhs: 1.0,
                label: "x + s = 1".into(),
            });
            assert_eq!(s.solve(&p).unwrap().status, SolveStatus::Unbounded);
        }
    }

    #[test]
    fn basis_coefficients_match_natural() {
        // min tr(C X) s.t. <u u^H, X> >= 1, tr X <= 3 with a low-rank basis.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 4;
        let u = CMatrix::from_fn(n, 2, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let c = herm(&CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen::<f64>(), rng.gen::<f64>() - 0.5)))
            + CMatrix::identity(n, n) * Complex64::new(3.0, 0.0);
        let build = |basis: bool| {
            let mut p = ConicProblem::new();
            let x = if basis { p.add_block_with_basis(u.clone(), "X") } else { p.add_block(n, "X") };
            p.set_objective(x, c.clone());
            let core = [(0usize, 0usize, Complex64::new(1.0, 0.0)), (0, 1, Complex64::new(0.3, -0.2)), (1, 1, Complex64::new(0.5, 0.0))];
            let coef = if basis {
                Coefficient::in_basis(core)
            } else {
                let mut k = CMatrix::zeros(2, 2);
                for &(p, q, v) in &core {
                    k[(p, q)] = v;
                    k[(q, p)] = v.conj();
                }
                Coefficient::dense(&(&u * k * u.adjoint()))
            };
            p.add_constraint(Constraint { terms: vec![(x, coef)], scalars: vec![], sense: Sense::Ge, rhs: 1.0, label: "gain".into() });
            p.add_constraint(Constraint {
                terms: vec![(x, Coefficient::identity(n))],
                scalars: vec![],
                sense: Sense::Le,
                rhs: 3.0,
                label: "power".into(),
            });
            p
        };
        for s in solvers() {
            let a = s.solve(&build(true)).unwrap().require_optimal().unwrap();
            let b = s.solve(&build(false)).unwrap().require_optimal().unwrap();
            assert_relative_eq!(a.objective, b.objective, max_relative = 1e-6);
            let lhs = build(false).evaluate(&a.blocks, &a.scalars);
            assert!(lhs[0] >= 1.0 - 1e-6 && lhs[1] <= 3.0 + 1e-6);
        }
    }

    #[test]
    fn duals_satisfy_stationarity() {
        let mut p = ConicProblem::new();
        let x = p.add_block(3, "X");
        let c = CMatrix::from_fn(3, 3, |r, k| Complex64::new(if r == k { 2.0 + r as f64 } else { 0.3 }, 0.0));
        p.set_objective(x, c.clone());
        p.add_constraint(Constraint {
            terms: vec![(x, Coefficient::identity(3))],
            scalars: vec![],
            sense: Sense::Eq,
            rhs: 2.0,
            label: "trace".into(),
        });
        let sol = InteriorPoint::default().solve(&p).unwrap().require_optimal().unwrap();
        let s = &c - CMatrix::identity(3, 3) * Complex64::new(sol.duals[0], 0.0);
        assert!(s.symmetric_eigenvalues().min() > -1e-6);
        assert_relative_eq!(sol.duals[0], c.symmetric_eigenvalues().min(), epsilon = 1e-6);
    }
}
