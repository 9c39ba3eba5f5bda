//! Primal-dual interior-point LP oracle (Mehrotra predictor-corrector on the
//! normal equations). Written independently of the simplex engine and used
//! only to cross-check it.

use nalgebra::{DMatrix, DVector};
use neural_rld::lpsolve::LinearProgram;

pub struct IpmResult {
    pub x: DVector<f64>,
    pub objective: f64,
    pub converged: bool,
}

/// Solves `min c^T x  s.t.  A x = b, x >= 0`.
pub fn solve_standard(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> IpmResult {
    let (m, n) = a.shape();
    let mut x = DVector::from_element(n, 1.0);
    let mut s = DVector::from_element(n, 1.0);
    let mut y = DVector::zeros(m);
    let scale = 1.0 + b.amax().max(c.amax());
    let mut converged = false;
    for _ in 0..200 {
        let rp = b - a * &x;
        let rd = c - a.transpose() * &y - &s;
        let mu = x.dot(&s) / n as f64;
        if rp.amax() < 1e-10 * scale && rd.amax() < 1e-10 * scale && mu < 1e-12 * scale {
            converged = true;
            break;
        }
        let d = x.component_div(&s);
        let mut normal = a * DMatrix::from_diagonal(&d) * a.transpose();
        for i in 0..m {
            normal[(i, i)] += 1e-14 * (1.0 + normal[(i, i)]);
        }
        let chol = match normal.clone().cholesky() {
            Some(c) => c,
            None => break,
        };
        let solve_dir = |rxs: &DVector<f64>| {
            // rxs is the complementarity right-hand side: X S e target residual.
            let rhs = &rp + a * (d.component_mul(&rd) - rxs.component_div(&s));
            let dy = chol.solve(&rhs);
            let ds = &rd - a.transpose() * &dy;
            let dx = (rxs - x.component_mul(&ds)).component_div(&s);
            (dx, dy, ds)
        };
        let step = |v: &DVector<f64>, dv: &DVector<f64>| {
            let mut t: f64 = 1.0;
            for i in 0..v.len() {
                if dv[i] < 0.0 {
                    t = t.min(-v[i] / dv[i]);
                }
            }
            t
        };
        let aff_rhs = -x.component_mul(&s);
        let (dxa, _, dsa) = solve_dir(&aff_rhs);
        let ap = step(&x, &dxa);
        let ad = step(&s, &dsa);
        let mu_aff = (&x + ap * &dxa).dot(&(&s + ad * &dsa)) / n as f64;
        let sigma = (mu_aff / mu).powi(3);
        let cor_rhs = DVector::from_element(n, sigma * mu) - x.component_mul(&s) - dxa.component_mul(&dsa);
        let (dx, dy, ds) = solve_dir(&cor_rhs);
        let ap = (0.995 * step(&x, &dx)).min(1.0);
        let ad = (0.995 * step(&s, &ds)).min(1.0);
        x += ap * dx;
        y += ad * dy;
        s += ad * ds;
    }
    let objective = c.dot(&x);
    IpmResult { x, objective, converged }
}

/// Rewrites a bounded LP into `x >= 0` standard form and solves it. Returns
/// the optimal objective in the original problem's terms.
pub fn solve_general(lp: &LinearProgram) -> IpmResult {
    let (m, n) = (lp.n_rows(), lp.n_vars());
    // Column map: original j -> list of (std column, coefficient), offset.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut offset = vec![0.0; n];
    let mut n_std = 0;
    let mut upper_rows: Vec<(usize, f64)> = Vec::new(); // (std col, u - l)
    for j in 0..n {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        match (l.is_finite(), u.is_finite()) {
            (true, _) => {
                offset[j] = l;
                cols[j].push((n_std, 1.0));
                if u.is_finite() {
                    upper_rows.push((n_std, u - l));
                }
                n_std += 1;
            }
            (false, true) => {
                offset[j] = u;
                cols[j].push((n_std, -1.0));
                n_std += 1;
            }
            (false, false) => {
                cols[j].push((n_std, 1.0));
                cols[j].push((n_std + 1, -1.0));
                n_std += 2;
            }
        }
    }
    let n_slack = upper_rows.len();
    let total = n_std + n_slack;
    let rows = m + n_slack;
    let mut a = DMatrix::zeros(rows, total);
    let mut b = DVector::zeros(rows);
    let mut c = DVector::zeros(total);
    let mut const_obj = 0.0;
    for j in 0..n {
        const_obj += lp.c[j] * offset[j];
        for &(k, sgn) in &cols[j] {
            c[k] += lp.c[j] * sgn;
            for i in 0..m {
                a[(i, k)] += lp.a_eq[(i, j)] * sgn;
            }
        }
    }
    for i in 0..m {
        let shift: f64 = (0..n).map(|j| lp.a_eq[(i, j)] * offset[j]).sum();
        b[i] = lp.b_eq[i] - shift;
    }
    for (r, &(k, range)) in upper_rows.iter().enumerate() {
        a[(m + r, k)] = 1.0;
        a[(m + r, n_std + r)] = 1.0;
        b[m + r] = range;
    }
    let res = solve_standard(&c, &a, &b);
    let mut x = DVector::zeros(n);
    for j in 0..n {
        x[j] = offset[j] + cols[j].iter().map(|&(k, s)| s * res.x[k]).sum::<f64>();
    }
    IpmResult {
        objective: res.objective + const_obj,
        x,
        converged: res.converged,
    }
}
