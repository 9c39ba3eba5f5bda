//! Real-time (second-stage) dispatch and its dual gradient.
//!
//! For a day-ahead dispatch `u` and realized net demand `d` the recourse cost is
//!
//! ```text
//!   Q(u, d) = min  beta^T g+
//!             s.t. u + g+ - g- - d = B theta      (balance, one row per bus)
//!                  -fmax <= F theta <= fmax       (one row per line)
//!                  g+, g- >= 0,  theta[ref] = 0
//! ```
//!
//! The balance rows are written as `g+ - g- - B theta = d - u`, so their LP
//! duals `y` satisfy `dQ/du = -y`. This module reports `mu_bal = -y`, which is
//! a subgradient of the convex map `u -> Q(u, d)` and lies in `[-beta, 0]`.

use nalgebra::DMatrix;

use crate::error::{Result, RldError};
use crate::grid::{build_flow_matrix, build_susceptance, NetworkCase};
use crate::lpsolve::{solve_lp, LinearProgram, LpSolution, LpStatus, Tag};

pub const BALANCE: &str = "balance";
pub const LINE: &str = "line";
pub const G_PLUS: &str = "g_plus";
pub const G_MINUS: &str = "g_minus";
pub const THETA: &str = "theta";
pub const FLOW: &str = "flow";
pub const DISPATCH: &str = "u";

/// Optimal second-stage dispatch for one `(u, d)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RecourseSolution {
    /// Optimal recourse cost `Q(u, d)` in $.
    pub q: f64,
    /// Signed real-time adjustment `g+ - g-` (MW).
    pub g: Vec<f64>,
    /// Voltage angles in radians; zero at the reference bus.
    pub theta: Vec<f64>,
    /// Line flows (MW).
    pub flow: Vec<f64>,
    /// Balance duals with `grad_u Q = mu_bal`.
    pub mu_bal: Vec<f64>,
    /// Prices on the lower / upper flow limits, both nonnegative.
    pub nu_lo: Vec<f64>,
    pub nu_hi: Vec<f64>,
    /// `mu_bal^T (u - d) - (nu_lo + nu_hi)^T fmax`.
    pub dual_objective: f64,
    /// Smallest distance of a basic variable to one of its finite bounds; a
    /// value near zero marks a degenerate vertex where `Q` may have a kink.
    pub degeneracy_slack: f64,
}

impl RecourseSolution {
    /// How far the optimal basis is from degeneracy. A nondegenerate basis
    /// has a unique dual, so `Q` is differentiable in `u` whenever this is
    /// positive; congested lines sitting at a bound do not count.
    pub fn kink_slack(&self) -> f64 {
        self.degeneracy_slack
    }
}

/// Result of the deterministic full-information dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct HindsightSolution {
    pub u_star: Vec<f64>,
    /// `alpha^T u* + Q(u*, d)`.
    pub objective: f64,
}

/// Options for the joint first/second stage LPs (hindsight and SAA).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DispatchOptions {
    /// Restrict `u >= 0`. Off by default: the dispatch is unbounded below as
    /// in the plain two-stage model.
    pub nonneg_u: bool,
}

/// Per-case precomputation of the MW-valued network matrices.
///
/// `B` and `F` are scaled by `base_mva`, which only rescales `theta`; costs,
/// flows and duals are unaffected.
#[derive(Debug, Clone)]
pub struct RecourseModel {
    pub case: NetworkCase,
    b_mw: DMatrix<f64>,
    f_mw: DMatrix<f64>,
    /// Non-reference buses, in order; one angle variable each.
    theta_buses: Vec<usize>,
}

impl RecourseModel {
    pub fn new(case: &NetworkCase) -> Self {
        let base = case.base_mva;
        let b_mw = build_susceptance(case).0 * base;
        let f_mw = build_flow_matrix(case).0 * base;
        let theta_buses = (0..case.n_bus).filter(|&i| i != case.reference_bus).collect();
        RecourseModel {
            case: case.clone(),
            b_mw,
            f_mw,
            theta_buses,
        }
    }

    pub fn n_bus(&self) -> usize {
        self.case.n_bus
    }

    fn block_width(&self) -> usize {
        2 * self.n_bus() + self.theta_buses.len() + self.case.n_line()
    }

    fn block_rows(&self) -> usize {
        self.n_bus() + self.case.n_line()
    }

    /// Writes one recourse block (variables starting at `col0`, rows starting
    /// at `row0`) with real-time cost weight `weight`.
    fn write_block(&self, lp: &mut LinearProgram, row0: usize, col0: usize, weight: f64, scenario: usize) {
        let n = self.n_bus();
        let nt = self.theta_buses.len();
        let nl = self.case.n_line();
        let (gp, gm, th, fl) = (col0, col0 + n, col0 + 2 * n, col0 + 2 * n + nt);
        for i in 0..n {
            lp.c[gp + i] = weight * self.case.beta[i];
            lp.var_labels[gp + i] = Tag::new(G_PLUS, scenario * n + i);
            lp.var_labels[gm + i] = Tag::new(G_MINUS, scenario * n + i);
            lp.a_eq[(row0 + i, gp + i)] = 1.0;
            lp.a_eq[(row0 + i, gm + i)] = -1.0;
            lp.row_labels[row0 + i] = Tag::new(BALANCE, scenario * n + i);
        }
        for (k, &bus) in self.theta_buses.iter().enumerate() {
            let col = th + k;
            lp.lower[col] = f64::NEG_INFINITY;
            lp.var_labels[col] = Tag::new(THETA, scenario * n + bus);
            for i in 0..n {
                lp.a_eq[(row0 + i, col)] = -self.b_mw[(i, bus)];
            }
            for l in 0..nl {
                lp.a_eq[(row0 + n + l, col)] = self.f_mw[(l, bus)];
            }
        }
        for (l, line) in self.case.lines.iter().enumerate() {
            let col = fl + l;
            lp.lower[col] = -line.capacity_mw;
            lp.upper[col] = line.capacity_mw;
            lp.var_labels[col] = Tag::new(FLOW, scenario * nl + l);
            lp.a_eq[(row0 + n + l, col)] = -1.0;
            lp.row_labels[row0 + n + l] = Tag::new(LINE, scenario * nl + l);
        }
    }

    fn check_len(&self, what: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.n_bus() {
            return Err(RldError::Dimension(format!(
                "{what} has length {}, case has {} buses",
                v.len(),
                self.n_bus()
            )));
        }
        Ok(())
    }

    pub fn assemble(&self, u: &[f64], d: &[f64]) -> Result<LinearProgram> {
        self.check_len("u", u)?;
        self.check_len("d", d)?;
        let (m, nv) = (self.block_rows(), self.block_width());
        let mut lp = LinearProgram::new(nv);
        lp.a_eq = DMatrix::zeros(m, nv);
        lp.b_eq = vec![0.0; m];
        lp.row_labels = vec![Tag::new(LINE, 0); m];
        self.write_block(&mut lp, 0, 0, 1.0, 0);
        for i in 0..self.n_bus() {
            lp.b_eq[i] = d[i] - u[i];
        }
        Ok(lp)
    }

    pub fn solve(&self, u: &[f64], d: &[f64]) -> Result<RecourseSolution> {
        let lp = self.assemble(u, d)?;
        let sol = solve_lp(&lp)?;
        match sol.status {
            LpStatus::Optimal => {}
            other => {
                return Err(RldError::Internal(format!(
                    "recourse LP reported {other:?}; theta = 0, g = d - u is always feasible"
                )))
            }
        }
        self.extract(&lp, &sol, u, d)
    }

    fn extract(&self, lp: &LinearProgram, sol: &LpSolution, u: &[f64], d: &[f64]) -> Result<RecourseSolution> {
        let n = self.n_bus();
        let nt = self.theta_buses.len();
        let nl = self.case.n_line();
        let z = &sol.z;
        let g: Vec<f64> = (0..n).map(|i| z[i] - z[n + i]).collect();
        let mut theta = vec![0.0; n];
        for (k, &bus) in self.theta_buses.iter().enumerate() {
            theta[bus] = z[2 * n + k];
        }
        let flow: Vec<f64> = (0..nl).map(|l| z[2 * n + nt + l]).collect();

        let mut mu_bal = Vec::with_capacity(n);
        for i in 0..n {
            let beta = self.case.beta[i];
            let mu = -sol.y[i];
            let tol = 1e-9 * (1.0 + beta);
            if mu > tol || mu < -beta - tol {
                return Err(RldError::Internal(format!(
                    "balance dual {mu} at bus {i} outside [-{beta}, 0]"
                )));
            }
            // Snap rounding residue into the dual box.
            mu_bal.push(mu.clamp(-beta, 0.0));
        }
        let nu_lo: Vec<f64> = (0..nl).map(|l| sol.y[n + l].max(0.0)).collect();
        let nu_hi: Vec<f64> = (0..nl).map(|l| (-sol.y[n + l]).max(0.0)).collect();
        let caps = self.case.capacities();
        let dual_objective = mu_bal
            .iter()
            .zip(u.iter().zip(d))
            .map(|(m, (u, d))| m * (u - d))
            .sum::<f64>()
            - nu_lo
                .iter()
                .zip(&nu_hi)
                .zip(&caps)
                .map(|((a, b), c)| (a + b) * c)
                .sum::<f64>();

        let mut degeneracy_slack = f64::INFINITY;
        for j in 0..lp.n_vars() {
            if sol.basic[j] {
                for bound in [lp.lower[j], lp.upper[j]] {
                    if bound.is_finite() {
                        degeneracy_slack = degeneracy_slack.min((z[j] - bound).abs());
                    }
                }
            }
        }
        Ok(RecourseSolution {
            q: sol.objective.max(0.0),
            g,
            theta,
            flow,
            mu_bal,
            nu_lo,
            nu_hi,
            dual_objective,
            degeneracy_slack,
        })
    }

    /// Joint LP `min alpha^T u + sum_s w_s Q(u, d_s)` over `u` and every
    /// scenario's recourse variables.
    pub fn assemble_two_stage(&self, scenarios: &[Vec<f64>], opts: DispatchOptions) -> Result<LinearProgram> {
        if scenarios.is_empty() {
            return Err(RldError::InvalidArgument("at least one scenario is required".into()));
        }
        for d in scenarios {
            self.check_len("scenario", d)?;
        }
        let n = self.n_bus();
        let s = scenarios.len();
        let weight = 1.0 / s as f64;
        let (br, bw) = (self.block_rows(), self.block_width());
        let nv = n + s * bw;
        let m = s * br;
        let mut lp = LinearProgram::new(nv);
        lp.a_eq = DMatrix::zeros(m, nv);
        lp.b_eq = vec![0.0; m];
        lp.row_labels = vec![Tag::new(LINE, 0); m];
        for i in 0..n {
            lp.c[i] = self.case.alpha[i];
            lp.var_labels[i] = Tag::new(DISPATCH, i);
            if !opts.nonneg_u {
                lp.lower[i] = f64::NEG_INFINITY;
            }
        }
        for (k, d) in scenarios.iter().enumerate() {
            let row0 = k * br;
            self.write_block(&mut lp, row0, n + k * bw, weight, k);
            for i in 0..n {
                lp.a_eq[(row0 + i, i)] = 1.0;
                lp.b_eq[row0 + i] = d[i];
            }
        }
        Ok(lp)
    }

    fn solve_two_stage(&self, scenarios: &[Vec<f64>], opts: DispatchOptions) -> Result<(Vec<f64>, f64)> {
        let lp = self.assemble_two_stage(scenarios, opts)?;
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(RldError::Internal(format!(
                "two-stage dispatch LP reported {:?}",
                sol.status
            )));
        }
        Ok((sol.z[..self.n_bus()].to_vec(), sol.objective))
    }

    pub fn hindsight(&self, d: &[f64], opts: DispatchOptions) -> Result<HindsightSolution> {
        let (u_star, objective) = self.solve_two_stage(&[d.to_vec()], opts)?;
        Ok(HindsightSolution { u_star, objective })
    }

    pub fn saa(&self, scenarios: &[Vec<f64>], opts: DispatchOptions) -> Result<Vec<f64>> {
        Ok(self.solve_two_stage(scenarios, opts)?.0)
    }

    /// Central differences of `Q(., d)` at `u`.
    pub fn finite_diff_grad(&self, u: &[f64], d: &[f64], h: f64) -> Result<Vec<f64>> {
        if h.is_nan() || h <= 0.0 {
            return Err(RldError::InvalidArgument(format!("step must be positive, got {h}")));
        }
        let mut grad = Vec::with_capacity(u.len());
        let mut probe = u.to_vec();
        for i in 0..u.len() {
            probe[i] = u[i] + h;
            let up = self.solve(&probe, d)?.q;
            probe[i] = u[i] - h;
            let down = self.solve(&probe, d)?.q;
            probe[i] = u[i];
            grad.push((up - down) / (2.0 * h));
        }
        Ok(grad)
    }
}

pub fn assemble_recourse(case: &NetworkCase, u: &[f64], d: &[f64]) -> Result<LinearProgram> {
    RecourseModel::new(case).assemble(u, d)
}

pub fn solve_recourse(case: &NetworkCase, u: &[f64], d: &[f64]) -> Result<RecourseSolution> {
    RecourseModel::new(case).solve(u, d)
}

/// `grad_u Q(u, d)`, a subgradient at kinks.
pub fn recourse_gradient(sol: &RecourseSolution) -> Vec<f64> {
    sol.mu_bal.clone()
}

pub fn finite_diff_grad(case: &NetworkCase, u: &[f64], d: &[f64], h: f64) -> Result<Vec<f64>> {
    RecourseModel::new(case).finite_diff_grad(u, d, h)
}

pub fn hindsight_dispatch(case: &NetworkCase, d: &[f64]) -> Result<HindsightSolution> {
    RecourseModel::new(case).hindsight(d, DispatchOptions::default())
}

pub fn saa_dispatch(case: &NetworkCase, scenarios: &[Vec<f64>]) -> Result<Vec<f64>> {
    RecourseModel::new(case).saa(scenarios, DispatchOptions::default())
}
