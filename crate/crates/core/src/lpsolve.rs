//! Dense linear programs in computational standard form,
//!
//! ```text
//!     min  c^T z   s.t.  A z = b,   lower <= z <= upper,
//! ```
//!
//! solved by a bounded-variable primal revised simplex that keeps an explicit
//! basis inverse. Duals of the equality rows and reduced costs are read from
//! the optimal basis, so they satisfy complementary slackness exactly up to
//! rounding.
//!
//! Problems are equilibrated with power-of-two row/column scales before the
//! solve; all reported quantities are in the original units.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, RldError};

/// Provenance tag for an LP row or column, used to map duals back to the
/// model that produced the LP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag {
    pub kind: &'static str,
    pub index: usize,
}

impl Tag {
    pub const fn new(kind: &'static str, index: usize) -> Self {
        Tag { kind, index }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub row_labels: Vec<Tag>,
    pub var_labels: Vec<Tag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal point (meaningful only when `Optimal`).
    pub z: Vec<f64>,
    pub objective: f64,
    /// Duals of the equality rows: `d objective / d b_eq`.
    pub y: Vec<f64>,
    /// `c - A^T y`, one per variable.
    pub reduced_costs: Vec<f64>,
    /// `b^T y` plus the bound contributions of the reduced costs.
    pub dual_objective: f64,
    /// Basis membership of each variable at termination.
    pub basic: Vec<bool>,
    pub iterations: usize,
}

impl LpSolution {
    fn non_optimal(status: LpStatus, n: usize, m: usize, iterations: usize) -> Self {
        LpSolution {
            status,
            z: vec![f64::NAN; n],
            objective: f64::NAN,
            y: vec![f64::NAN; m],
            reduced_costs: vec![f64::NAN; n],
            dual_objective: f64::NAN,
            basic: vec![false; n],
            iterations,
        }
    }

    pub fn duality_gap(&self) -> f64 {
        (self.objective - self.dual_objective).abs()
    }
}

/// Solver tolerances. Feasibility is absolute on the scaled problem.
#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub tol_feas: f64,
    pub tol_opt: f64,
    pub tol_pivot: f64,
    /// Consecutive degenerate pivots tolerated before switching to Bland's rule.
    pub degenerate_limit: usize,
    pub refactor_every: usize,
    pub max_iter: Option<usize>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            tol_feas: 1e-8,
            tol_opt: 1e-9,
            tol_pivot: 1e-9,
            degenerate_limit: 50,
            refactor_every: 100,
            max_iter: None,
        }
    }
}

impl LinearProgram {
    /// An LP with `n` variables, no rows, zero costs and bounds `[0, +inf)`.
    pub fn new(n: usize) -> Self {
        LinearProgram {
            c: vec![0.0; n],
            a_eq: DMatrix::zeros(0, n),
            b_eq: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
            row_labels: Vec::new(),
            var_labels: vec![Tag::new("x", 0); n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn n_rows(&self) -> usize {
        self.b_eq.len()
    }

    pub fn check_well_formed(&self) -> Result<()> {
        let (m, n) = (self.n_rows(), self.n_vars());
        if self.a_eq.nrows() != m || self.a_eq.ncols() != n {
            return Err(RldError::Dimension(format!(
                "A is {}x{}, expected {m}x{n}",
                self.a_eq.nrows(),
                self.a_eq.ncols()
            )));
        }
        if self.lower.len() != n
            || self.upper.len() != n
            || self.var_labels.len() != n
            || self.row_labels.len() != m
        {
            return Err(RldError::Dimension("bound or label vector length".into()));
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Err(RldError::InvalidArgument(format!(
                    "variable {j}: bounds [{}, {}]",
                    self.lower[j], self.upper[j]
                )));
            }
            if !self.c[j].is_finite() {
                return Err(RldError::InvalidArgument(format!("variable {j}: cost {}", self.c[j])));
            }
        }
        if self.a_eq.iter().chain(&self.b_eq).any(|v| !v.is_finite()) {
            return Err(RldError::InvalidArgument("non-finite constraint data".into()));
        }
        Ok(())
    }

    /// Writes a human-readable dump for failure triage.
    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "# LP {} rows x {} vars", self.n_rows(), self.n_vars());
        for j in 0..self.n_vars() {
            let t = self.var_labels[j];
            let _ = writeln!(
                s,
                "var {j} {}[{}] c={} [{}, {}]",
                t.kind, t.index, self.c[j], self.lower[j], self.upper[j]
            );
        }
        for i in 0..self.n_rows() {
            let t = self.row_labels[i];
            let _ = write!(s, "row {i} {}[{}]:", t.kind, t.index);
            for j in 0..self.n_vars() {
                let a = self.a_eq[(i, j)];
                if a != 0.0 {
                    let _ = write!(s, " {a}*x{j}");
                }
            }
            let _ = writeln!(s, " = {}", self.b_eq[i]);
        }
        let path = path.as_ref();
        std::fs::write(path, s).map_err(|e| RldError::io(path, e))
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    solve_lp_with(lp, &SimplexOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &SimplexOptions) -> Result<LpSolution> {
    lp.check_well_formed()?;
    let scaled = ScaledLp::new(lp);
    match Simplex::new(&scaled, *opts).run() {
        Ok(raw) => Ok(scaled.unscale(lp, raw)),
        Err(RldError::NumericalBreakdown(first)) => {
            // Retry once with Bland's rule throughout and no scaling.
            let plain = ScaledLp::identity(lp);
            let strict = SimplexOptions {
                degenerate_limit: 0,
                refactor_every: 20,
                ..*opts
            };
            match Simplex::new(&plain, strict).run() {
                Ok(raw) => Ok(plain.unscale(lp, raw)),
                Err(e) => Err(RldError::NumericalBreakdown(format!("{first}; retry: {e}"))),
            }
        }
        Err(e) => Err(e),
    }
}

/// Solves each LP independently; results are in input order and errors are
/// collected per item.
pub fn solve_lp_batch(lps: &[LinearProgram]) -> Vec<Result<LpSolution>> {
    lps.iter().map(solve_lp).collect()
}

/// Equilibrated copy of an LP stored column-sparse.
struct ScaledLp {
    m: usize,
    n: usize,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    c: Vec<f64>,
    b: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

fn pow2_round(x: f64) -> f64 {
    if !x.is_finite() || x <= 0.0 {
        1.0
    } else {
        2f64.powi(x.log2().round() as i32)
    }
}

impl ScaledLp {
    fn new(lp: &LinearProgram) -> Self {
        let (m, n) = (lp.n_rows(), lp.n_vars());
        let mut r = vec![1.0; m];
        let mut s = vec![1.0; n];
        for _ in 0..4 {
            for (i, ri) in r.iter_mut().enumerate() {
                let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
                for j in 0..n {
                    let a = (lp.a_eq[(i, j)] * s[j]).abs();
                    if a > 0.0 {
                        lo = lo.min(a);
                        hi = hi.max(a);
                    }
                }
                if hi > 0.0 {
                    *ri = 1.0 / (lo * hi).sqrt();
                }
            }
            for (j, sj) in s.iter_mut().enumerate() {
                let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
                for (i, ri) in r.iter().enumerate() {
                    let a = (lp.a_eq[(i, j)] * ri).abs();
                    if a > 0.0 {
                        lo = lo.min(a);
                        hi = hi.max(a);
                    }
                }
                if hi > 0.0 {
                    *sj = 1.0 / (lo * hi).sqrt();
                }
            }
        }
        r.iter_mut().for_each(|v| *v = pow2_round(*v));
        s.iter_mut().for_each(|v| *v = pow2_round(*v));
        Self::build(lp, r, s)
    }

    fn identity(lp: &LinearProgram) -> Self {
        Self::build(lp, vec![1.0; lp.n_rows()], vec![1.0; lp.n_vars()])
    }

    fn build(lp: &LinearProgram, row_scale: Vec<f64>, col_scale: Vec<f64>) -> Self {
        let (m, n) = (lp.n_rows(), lp.n_vars());
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        col_ptr.push(0);
        for j in 0..n {
            for i in 0..m {
                let a = lp.a_eq[(i, j)];
                if a != 0.0 {
                    row_idx.push(i);
                    vals.push(a * row_scale[i] * col_scale[j]);
                }
            }
            col_ptr.push(row_idx.len());
        }
        let c = (0..n).map(|j| lp.c[j] * col_scale[j]).collect();
        let b = (0..m).map(|i| lp.b_eq[i] * row_scale[i]).collect();
        let lo = (0..n).map(|j| lp.lower[j] / col_scale[j]).collect();
        let hi = (0..n).map(|j| lp.upper[j] / col_scale[j]).collect();
        ScaledLp {
            m,
            n,
            row_scale,
            col_scale,
            col_ptr,
            row_idx,
            vals,
            c,
            b,
            lo,
            hi,
        }
    }

    fn unscale(&self, lp: &LinearProgram, raw: RawSolution) -> LpSolution {
        if raw.status != LpStatus::Optimal {
            return LpSolution::non_optimal(raw.status, self.n, self.m, raw.iterations);
        }
        let z: Vec<f64> = (0..self.n).map(|j| raw.x[j] * self.col_scale[j]).collect();
        let y: Vec<f64> = (0..self.m).map(|i| raw.y[i] * self.row_scale[i]).collect();
        // Reduced costs recomputed in original units from the unscaled duals.
        let reduced_costs: Vec<f64> = (0..self.n)
            .map(|j| {
                let mut d = lp.c[j];
                for (i, yi) in y.iter().enumerate() {
                    d -= lp.a_eq[(i, j)] * yi;
                }
                d
            })
            .collect();
        let objective: f64 = lp.c.iter().zip(&z).map(|(c, z)| c * z).sum();
        let mut dual_objective: f64 = lp.b_eq.iter().zip(&y).map(|(b, y)| b * y).sum();
        for (j, d) in reduced_costs.iter().enumerate() {
            if *d > 0.0 && lp.lower[j].is_finite() {
                dual_objective += d * lp.lower[j];
            } else if *d < 0.0 && lp.upper[j].is_finite() {
                dual_objective += d * lp.upper[j];
            } else {
                // Reduced cost on an infinite bound: only a rounding residue on
                // a basic or free variable; account for it at the primal value.
                dual_objective += d * z[j];
            }
        }
        LpSolution {
            status: LpStatus::Optimal,
            z,
            objective,
            y,
            reduced_costs,
            dual_objective,
            basic: raw.basic,
            iterations: raw.iterations,
        }
    }
}

struct RawSolution {
    status: LpStatus,
    x: Vec<f64>,
    y: Vec<f64>,
    basic: Vec<bool>,
    iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    FreeZero,
}

struct Simplex<'a> {
    lp: &'a ScaledLp,
    opts: SimplexOptions,
    m: usize,
    /// Structural plus artificial columns.
    n_total: usize,
    /// Artificial columns: (row, sign).
    art: Vec<(usize, f64)>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a ScaledLp, opts: SimplexOptions) -> Self {
        let (m, n) = (lp.m, lp.n);
        let mut state = vec![VarState::AtLower; n];
        let mut x = vec![0.0; n];
        for j in 0..n {
            let (l, h) = (lp.lo[j], lp.hi[j]);
            if l.is_finite() {
                x[j] = l;
            } else if h.is_finite() {
                x[j] = h;
                state[j] = VarState::AtUpper;
            } else {
                state[j] = VarState::FreeZero;
            }
        }
        // Residual of the rows with every structural variable nonbasic.
        let mut resid = lp.b.clone();
        for j in 0..n {
            if x[j] != 0.0 {
                for k in lp.col_ptr[j]..lp.col_ptr[j + 1] {
                    resid[lp.row_idx[k]] -= lp.vals[k] * x[j];
                }
            }
        }

        // Crash: cover each row by a column that is a singleton in it and can
        // absorb the residual within its bounds; artificials cover the rest.
        let mut basis = vec![usize::MAX; m];
        let mut binv_diag = vec![0.0; m];
        for j in 0..n {
            let (start, end) = (lp.col_ptr[j], lp.col_ptr[j + 1]);
            if end - start != 1 || state[j] == VarState::Basic {
                continue;
            }
            let i = lp.row_idx[start];
            if basis[i] != usize::MAX {
                continue;
            }
            let a = lp.vals[start];
            let v = (resid[i] + a * x[j]) / a;
            let tol = opts.tol_feas;
            if v >= lp.lo[j] - tol && v <= lp.hi[j] + tol {
                resid[i] += a * x[j];
                x[j] = v.clamp(lp.lo[j], lp.hi[j]);
                resid[i] -= a * x[j];
                state[j] = VarState::Basic;
                basis[i] = j;
                binv_diag[i] = 1.0 / a;
            }
        }
        let mut art = Vec::new();
        let mut n_total = n;
        for i in 0..m {
            if basis[i] == usize::MAX {
                let sign = if resid[i] < 0.0 { -1.0 } else { 1.0 };
                art.push((i, sign));
                basis[i] = n_total;
                binv_diag[i] = sign;
                x.push(resid[i].abs());
                state.push(VarState::Basic);
                n_total += 1;
            }
        }
        let mut lo = lp.lo.clone();
        let mut hi = lp.hi.clone();
        lo.extend(std::iter::repeat_n(0.0, art.len()));
        hi.extend(std::iter::repeat_n(f64::INFINITY, art.len()));

        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = binv_diag[i];
        }
        Simplex {
            lp,
            opts,
            m,
            n_total,
            art,
            cost: vec![0.0; n_total],
            lo,
            hi,
            x,
            state,
            basis,
            binv,
            y: vec![0.0; m],
            d: vec![0.0; n_total],
            iterations: 0,
            since_refactor: 0,
        }
    }

    fn max_iter(&self) -> usize {
        self.opts
            .max_iter
            .unwrap_or(200 * (self.m + self.n_total) + 1000)
    }

    /// Calls `f(row, value)` for each nonzero of column `j`.
    #[inline]
    fn for_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.lp.n {
            for k in self.lp.col_ptr[j]..self.lp.col_ptr[j + 1] {
                f(self.lp.row_idx[k], self.lp.vals[k]);
            }
        } else {
            let (i, s) = self.art[j - self.lp.n];
            f(i, s);
        }
    }

    fn col_dot(&self, j: usize, v: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.for_col(j, |i, a| acc += a * v[i]);
        acc
    }

    fn run(mut self) -> Result<RawSolution> {
        if !self.art.is_empty() {
            for j in 0..self.n_total {
                self.cost[j] = if j >= self.lp.n { 1.0 } else { 0.0 };
            }
            self.recompute_duals();
            let status = self.iterate()?;
            if status == LpStatus::Unbounded {
                return Err(RldError::Internal("phase 1 reported unbounded".into()));
            }
            let infeas: f64 = (self.lp.n..self.n_total).map(|j| self.x[j]).sum();
            let bnorm = self.lp.b.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if infeas > self.opts.tol_feas * (1.0 + bnorm) {
                return Ok(RawSolution {
                    status: LpStatus::Infeasible,
                    x: Vec::new(),
                    y: Vec::new(),
                    basic: Vec::new(),
                    iterations: self.iterations,
                });
            }
            for j in self.lp.n..self.n_total {
                self.hi[j] = 0.0;
                if self.state[j] != VarState::Basic {
                    self.state[j] = VarState::AtLower;
                    self.x[j] = 0.0;
                }
            }
        }
        self.cost[..self.lp.n].copy_from_slice(&self.lp.c);
        for j in self.lp.n..self.n_total {
            self.cost[j] = 0.0;
        }
        self.recompute_duals();
        let status = self.iterate()?;
        let mut x = self.x;
        x.truncate(self.lp.n);
        let basic = self.state[..self.lp.n]
            .iter()
            .map(|s| *s == VarState::Basic)
            .collect();
        Ok(RawSolution {
            status,
            x,
            basic,
            y: self.y,
            iterations: self.iterations,
        })
    }

    fn recompute_duals(&mut self) {
        let m = self.m;
        for (k, yk) in self.y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..m {
                acc += self.cost[self.basis[i]] * self.binv[i * m + k];
            }
            *yk = acc;
        }
        for j in 0..self.n_total {
            self.d[j] = if self.state[j] == VarState::Basic {
                0.0
            } else {
                self.cost[j] - self.col_dot(j, &self.y)
            };
        }
    }

    fn recompute_primal(&mut self) {
        let m = self.m;
        let mut resid = self.lp.b.clone();
        for j in 0..self.n_total {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                self.for_col(j, |i, a| resid[i] -= a * xj);
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.x[self.basis[i]] = row.iter().zip(&resid).map(|(a, b)| a * b).sum();
        }
    }

    /// Recomputes the basis inverse by Gauss-Jordan with partial pivoting.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut bmat = vec![0.0; m * m];
        for (col, &j) in self.basis.iter().enumerate() {
            self.for_col(j, |i, a| bmat[i * m + col] = a);
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for k in 0..m {
            let (mut piv, mut best) = (k, bmat[k * m + k].abs());
            for i in k + 1..m {
                let v = bmat[i * m + k].abs();
                if v > best {
                    piv = i;
                    best = v;
                }
            }
            if best < 1e-11 {
                return Err(RldError::NumericalBreakdown(format!(
                    "singular basis at column {k} (pivot {best:e})"
                )));
            }
            if piv != k {
                for c in 0..m {
                    bmat.swap(k * m + c, piv * m + c);
                    inv.swap(k * m + c, piv * m + c);
                }
            }
            let p = bmat[k * m + k];
            for c in 0..m {
                bmat[k * m + c] /= p;
                inv[k * m + c] /= p;
            }
            for i in 0..m {
                if i == k {
                    continue;
                }
                let f = bmat[i * m + k];
                if f != 0.0 {
                    for c in 0..m {
                        bmat[i * m + c] -= f * bmat[k * m + c];
                        inv[i * m + c] -= f * inv[k * m + c];
                    }
                }
            }
        }
        // Row k of B^{-1} belongs to basis position k, because B was assembled
        // with basis position as its column index.
        self.binv = inv;
        self.since_refactor = 0;
        self.recompute_primal();
        self.recompute_duals();
        Ok(())
    }

    fn primal_residual(&self) -> f64 {
        let mut resid = self.lp.b.clone();
        for j in 0..self.n_total {
            let xj = self.x[j];
            if xj != 0.0 {
                self.for_col(j, |i, a| resid[i] -= a * xj);
            }
        }
        resid.iter().fold(0.0f64, |a, r| a.max(r.abs()))
    }

    fn choose_entering(&self, bland: bool) -> Option<usize> {
        let tol = self.opts.tol_opt;
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.n_total {
            let dj = self.d[j];
            let eligible = match self.state[j] {
                VarState::Basic => false,
                VarState::AtLower => dj < -tol && self.hi[j] > self.lo[j],
                VarState::AtUpper => dj > tol && self.hi[j] > self.lo[j],
                VarState::FreeZero => dj.abs() > tol,
            };
            if !eligible {
                continue;
            }
            if bland {
                return Some(j);
            }
            if best.is_none_or(|(_, v)| dj.abs() > v) {
                best = Some((j, dj.abs()));
            }
        }
        best.map(|(j, _)| j)
    }

    fn iterate(&mut self) -> Result<LpStatus> {
        let m = self.m;
        let mut degenerate_run = 0usize;
        let mut alpha = vec![0.0; m];
        let mut alpha_row = vec![0.0; self.n_total];
        let mut verified = false;
        loop {
            if self.iterations >= self.max_iter() {
                return Err(RldError::NumericalBreakdown(format!(
                    "iteration limit {} reached",
                    self.max_iter()
                )));
            }
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor()?;
            }
            let bland = degenerate_run >= self.opts.degenerate_limit;
            let Some(q) = self.choose_entering(bland) else {
                if verified {
                    return Ok(LpStatus::Optimal);
                }
                // Confirm optimality against freshly computed quantities.
                if self.primal_residual() > self.opts.tol_feas * 1e-2 {
                    self.refactor()?;
                } else {
                    self.recompute_primal();
                    self.recompute_duals();
                }
                verified = true;
                continue;
            };
            verified = false;
            self.iterations += 1;
            self.since_refactor += 1;

            let dir = if self.d[q] < 0.0 { 1.0 } else { -1.0 };
            alpha.iter_mut().for_each(|a| *a = 0.0);
            {
                let binv = &self.binv;
                let mut acc = vec![0.0; m];
                self.for_col(q, |k, a| {
                    for i in 0..m {
                        acc[i] += binv[i * m + k] * a;
                    }
                });
                alpha.copy_from_slice(&acc);
            }

            // Ratio test: x_B(t) = x_B - t * dir * alpha.
            let tol = self.opts.tol_feas;
            let piv_tol = self.opts.tol_pivot;
            let mut t_relaxed = f64::INFINITY;
            for i in 0..m {
                let s = dir * alpha[i];
                let j = self.basis[i];
                if s > piv_tol && self.lo[j].is_finite() {
                    t_relaxed = t_relaxed.min((self.x[j] - self.lo[j] + tol) / s);
                } else if s < -piv_tol && self.hi[j].is_finite() {
                    t_relaxed = t_relaxed.min((self.hi[j] - self.x[j] + tol) / -s);
                }
            }
            let mut leave: Option<(usize, f64, bool)> = None; // (row, t, hits_lower)
            for i in 0..m {
                let s = dir * alpha[i];
                let j = self.basis[i];
                let (t, to_lower) = if s > piv_tol && self.lo[j].is_finite() {
                    ((self.x[j] - self.lo[j]) / s, true)
                } else if s < -piv_tol && self.hi[j].is_finite() {
                    ((self.hi[j] - self.x[j]) / -s, false)
                } else {
                    continue;
                };
                let better = if bland {
                    match leave {
                        None => true,
                        Some((r, tb, _)) => {
                            t < tb - 1e-12 || (t <= tb + 1e-12 && j < self.basis[r])
                        }
                    }
                } else {
                    t <= t_relaxed
                        && leave.is_none_or(|(r, _, _)| alpha[i].abs() > alpha[r].abs())
                };
                if better {
                    leave = Some((i, t.max(0.0), to_lower));
                }
            }
            let range = self.hi[q] - self.lo[q];
            let flip = range.is_finite() && leave.is_none_or(|(_, t, _)| range <= t);

            if leave.is_none() && !flip {
                return Ok(LpStatus::Unbounded);
            }
            let step = if flip { range } else { leave.unwrap().1 };
            if step <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }

            for i in 0..m {
                if alpha[i] != 0.0 {
                    let j = self.basis[i];
                    self.x[j] -= step * dir * alpha[i];
                }
            }
            if flip {
                self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                self.state[q] = if dir > 0.0 {
                    VarState::AtUpper
                } else {
                    VarState::AtLower
                };
                continue;
            }

            let (r, _, to_lower) = leave.unwrap();
            let p = self.basis[r];
            let pivot = alpha[r];

            // Pivot row of B^{-1} A over nonbasic columns, for the dual update.
            let rho: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            for j in 0..self.n_total {
                alpha_row[j] = if self.state[j] == VarState::Basic {
                    0.0
                } else {
                    self.col_dot(j, &rho)
                };
            }
            let theta_d = self.d[q] / pivot;
            for j in 0..self.n_total {
                if self.state[j] != VarState::Basic {
                    self.d[j] -= theta_d * alpha_row[j];
                }
            }
            for (yk, rk) in self.y.iter_mut().zip(&rho) {
                *yk += theta_d * rk;
            }

            // Basis change.
            self.x[q] += step * dir;
            self.x[p] = if to_lower { self.lo[p] } else { self.hi[p] };
            self.state[p] = if to_lower {
                VarState::AtLower
            } else {
                VarState::AtUpper
            };
            self.state[q] = VarState::Basic;
            self.basis[r] = q;
            self.d[q] = 0.0;
            self.d[p] = -theta_d;

            let binv = &mut self.binv;
            for c in 0..m {
                binv[r * m + c] /= pivot;
            }
            for i in 0..m {
                if i == r || alpha[i] == 0.0 {
                    continue;
                }
                let f = alpha[i];
                for c in 0..m {
                    binv[i * m + c] -= f * binv[r * m + c];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp_from(c: &[f64], a: &[&[f64]], b: &[f64]) -> LinearProgram {
        let n = c.len();
        let mut lp = LinearProgram::new(n);
        lp.c = c.to_vec();
        lp.a_eq = DMatrix::from_fn(a.len(), n, |i, j| a[i][j]);
        lp.b_eq = b.to_vec();
        lp.row_labels = vec![Tag::new("row", 0); b.len()];
        lp
    }

    #[test]
    fn single_equality() {
        let mut lp = lp_from(&[1.0], &[&[1.0]], &[1.0]);
        lp.upper = vec![2.0];
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.z[0] - 1.0).abs() < 1e-12);
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!((sol.y[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_variable_without_rows_is_unbounded() {
        let mut lp = LinearProgram::new(1);
        lp.c = vec![-1.0];
        lp.lower = vec![f64::NEG_INFINITY];
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn detects_infeasibility() {
        // x1 + x2 = -1 with x >= 0.
        let lp = lp_from(&[1.0, 1.0], &[&[1.0, 1.0]], &[-1.0]);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn bound_flip_only() {
        // min -x s.t. no rows, 0 <= x <= 3.
        let mut lp = LinearProgram::new(1);
        lp.c = vec![-1.0];
        lp.upper = vec![3.0];
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.z, vec![3.0]);
        assert_eq!(sol.reduced_costs, vec![-1.0]);
        assert!((sol.dual_objective + 3.0).abs() < 1e-12);
    }

    #[test]
    fn beale_cycling_example_terminates() {
        // Beale (1955): cycles under Dantzig's rule with naive tie breaking.
        let lp = lp_from(
            &[0.0, 0.0, 0.0, -0.75, 150.0, -0.02, 6.0],
            &[
                &[1.0, 0.0, 0.0, 0.25, -60.0, -0.04, 9.0],
                &[0.0, 1.0, 0.0, 0.5, -90.0, -0.02, 3.0],
                &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0],
            ],
            &[0.0, 0.0, 1.0],
        );
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 0.05).abs() < 1e-10);
        assert!(sol.duality_gap() < 1e-10);
    }

    #[test]
    fn deterministic_repeat() {
        let lp = lp_from(
            &[1.0, 2.0, -1.0],
            &[&[1.0, 1.0, 1.0], &[1.0, -1.0, 0.0]],
            &[2.0, 0.5],
        );
        let a = solve_lp(&lp).unwrap();
        let b = solve_lp(&lp).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_preserves_order() {
        let one = lp_from(&[1.0], &[&[1.0]], &[1.0]);
        let two = lp_from(&[1.0], &[&[1.0]], &[2.0]);
        let out = solve_lp_batch(&[one.clone(), two, one]);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].as_ref().unwrap().objective, 1.0);
        assert_eq!(out[1].as_ref().unwrap().objective, 2.0);
        assert_eq!(out[2].as_ref().unwrap(), out[0].as_ref().unwrap());
    }

    #[test]
    fn rejects_inverted_bounds() {
        let mut lp = LinearProgram::new(1);
        lp.lower = vec![1.0];
        lp.upper = vec![0.0];
        assert!(matches!(solve_lp(&lp), Err(RldError::InvalidArgument(_))));
    }
}
