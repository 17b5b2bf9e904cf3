//! Dense convex QP solver (dual active-set method).
//!
//! Solves
//! ```text
//!     minimize    1/2 x' H x + g' x
//!     subject to  A_eq x  = b_eq
//!                 A_in x >= b_in
//!                 lb <= x <= ub
//! ```
//! with H positive semidefinite (a diagonal shift of at most 1e-8 relative
//! is applied when the Cholesky factorization requires it). Equality
//! constraints are entered into the active set first and never dropped;
//! their multipliers are sign-free. Pivoting rules are deterministic:
//! most-violated constraint wins, ties break toward the lowest index.

use nalgebra::{DMatrix, DVector};

use crate::error::{FphandError, Result};

/// Maximum relative diagonal shift used to make H factorizable.
pub const MAX_DIAG_SHIFT: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem skeleton; fill in constraint blocks as needed.
    pub fn new(h: DMatrix<f64>, g: DVector<f64>) -> Self {
        let n = g.len();
        Self {
            h,
            g,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
            lb: DVector::from_element(n, f64::NEG_INFINITY),
            ub: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

/// Indices into the combined inequality list: `a_in` rows first, then lower
/// bounds, then upper bounds (finite ones only, in variable order).
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub status: QpStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    /// Multipliers of the equality constraints (sign-free).
    pub lambda_eq: DVector<f64>,
    /// Multipliers of all inequality rows (combined list; >= 0).
    pub lambda_in: DVector<f64>,
    /// Active combined-inequality indices at the solution.
    pub active_set: Vec<usize>,
    pub iterations: usize,
}

struct Constraint {
    normal: DVector<f64>,
    offset: f64,
    equality: bool,
    flipped: bool,
    scale: f64,
    /// Combined-inequality index (usize::MAX for equalities).
    in_index: usize,
}

/// Solve a QP. `tol` is the feasibility/optimality tolerance (1e-9 is a
/// good default at mm/rad scales).
pub fn solve_qp(p: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution> {
    solve_qp_hinted(p, tol, max_iter, &[])
}

/// Like [`solve_qp`] but tries the hinted combined-inequality indices first
/// when choosing the next violated constraint (warm-start for sequences of
/// similar problems). The returned solution is the same optimum either way.
pub fn solve_qp_hinted(p: &QpProblem, tol: f64, max_iter: usize, hint: &[usize]) -> Result<QpSolution> {
    let n = p.dim();
    if p.h.nrows() != n || p.h.ncols() != n || p.a_eq.ncols() != n || p.a_in.ncols() != n {
        return Err(FphandError::Dimension {
            expected: n,
            got: p.h.nrows(),
        });
    }

    // Cholesky with bounded diagonal shift.
    let scale = p.h.diagonal().iter().fold(1.0_f64, |m, &v| m.max(v.abs()));
    let mut chol = None;
    for &shift in &[0.0, 1e-12, 1e-10, MAX_DIAG_SHIFT] {
        let mut h = p.h.clone();
        for i in 0..n {
            h[(i, i)] += shift * scale;
        }
        if let Some(c) = h.cholesky() {
            chol = Some(c);
            break;
        }
    }
    let chol = chol.ok_or_else(|| FphandError::Solver("QP Hessian is not positive semidefinite".into()))?;
    let l = chol.l();

    // J = L^-T, x = unconstrained minimizer.
    let mut j = DMatrix::identity(n, n);
    l.transpose().solve_upper_triangular_mut(&mut j);
    let mut x = chol.solve(&(-&p.g));

    // Build the constraint list: equalities, a_in rows, lower bounds, upper bounds.
    let meq = p.b_eq.len();
    let mut cons: Vec<Constraint> = Vec::new();
    for i in 0..meq {
        let row = p.a_eq.row(i).transpose();
        let nrm = row.norm();
        if nrm < 1e-300 {
            if p.b_eq[i].abs() > tol {
                return Ok(infeasible_solution(p));
            }
            continue; // zero row, zero rhs: vacuous
        }
        cons.push(Constraint {
            normal: row / nrm,
            offset: p.b_eq[i] / nrm,
            equality: true,
            flipped: false,
            scale: nrm,
            in_index: i, // original equality row
        });
    }
    let n_eq_cons = cons.len();
    let mut in_count = 0;
    for i in 0..p.b_in.len() {
        let row = p.a_in.row(i).transpose();
        let nrm = row.norm();
        if nrm < 1e-300 {
            if p.b_in[i] > tol {
                return Ok(infeasible_solution(p));
            }
            in_count += 1;
            continue;
        }
        cons.push(Constraint {
            normal: row / nrm,
            offset: p.b_in[i] / nrm,
            equality: false,
            flipped: false,
            scale: nrm,
            in_index: in_count,
        });
        in_count += 1;
    }
    for i in 0..n {
        if p.lb[i].is_finite() {
            let mut normal = DVector::zeros(n);
            normal[i] = 1.0;
            cons.push(Constraint {
                normal,
                offset: p.lb[i],
                equality: false,
                flipped: false,
                scale: 1.0,
                in_index: in_count,
            });
        }
        in_count += 1;
    }
    for i in 0..n {
        if p.ub[i].is_finite() {
            let mut normal = DVector::zeros(n);
            normal[i] = -1.0;
            cons.push(Constraint {
                normal,
                offset: -p.ub[i],
                equality: false,
                flipped: false,
                scale: 1.0,
                in_index: in_count,
            });
        }
        in_count += 1;
    }
    let total_in = in_count;

    let mut r = DMatrix::<f64>::zeros(n, n);
    let mut active: Vec<usize> = Vec::new();
    let mut lambda: Vec<f64> = Vec::new();
    let mut next_eq = 0;
    let mut iterations = 0;

    let finish = |x: &DVector<f64>,
                  active: &[usize],
                  lambda: &[f64],
                  cons: &[Constraint],
                  status: QpStatus,
                  iterations: usize| {
        let mut lambda_eq = DVector::zeros(meq);
        let mut lambda_in = DVector::zeros(total_in);
        let mut active_out = Vec::new();
        for (slot, &ci) in active.iter().enumerate() {
            let c = &cons[ci];
            let lam = if c.flipped { -lambda[slot] } else { lambda[slot] } / c.scale;
            if c.equality {
                lambda_eq[c.in_index] = lam;
            } else {
                lambda_in[c.in_index] = lam;
                active_out.push(c.in_index);
            }
        }
        active_out.sort_unstable();
        QpSolution {
            status,
            x: x.clone(),
            objective: p.objective(x),
            lambda_eq,
            lambda_in,
            active_set: active_out,
            iterations,
        }
    };

    'outer: loop {
        if iterations > max_iter {
            return Ok(finish(&x, &active, &lambda, &cons, QpStatus::IterationLimit, iterations));
        }

        // Select the next constraint to enforce.
        let (pi, mut s_p) = if next_eq < n_eq_cons {
            let e = next_eq;
            next_eq += 1;
            let s = cons[e].normal.dot(&x) - cons[e].offset;
            if s > 0.0 {
                cons[e].normal = -&cons[e].normal;
                cons[e].offset = -cons[e].offset;
                cons[e].flipped = true;
                (e, -s)
            } else {
                (e, s)
            }
        } else {
            let mut best: Option<(usize, f64)> = None;
            for &hi in hint {
                if let Some(ci) = cons.iter().position(|c| !c.equality && c.in_index == hi) {
                    if active.contains(&ci) {
                        continue;
                    }
                    let s = cons[ci].normal.dot(&x) - cons[ci].offset;
                    if s < -tol {
                        best = Some((ci, s));
                        break;
                    }
                }
            }
            if best.is_none() {
                for (ci, c) in cons.iter().enumerate() {
                    if c.equality || active.contains(&ci) {
                        continue;
                    }
                    let s = c.normal.dot(&x) - c.offset;
                    if s < -tol && best.map_or(true, |(_, bs)| s < bs) {
                        best = Some((ci, s));
                    }
                }
            }
            match best {
                Some(b) => b,
                None => return Ok(finish(&x, &active, &lambda, &cons, QpStatus::Optimal, iterations)),
            }
        };

        let mut lam_p = 0.0;
        // Inner loop: take steps until constraint pi joins the active set.
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Ok(finish(&x, &active, &lambda, &cons, QpStatus::IterationLimit, iterations));
            }
            let q = active.len();
            let d = j.transpose() * &cons[pi].normal;
            // primal direction z = J2 d2
            let mut z = DVector::zeros(n);
            for k in q..n {
                z.axpy(d[k], &j.column(k).into_owned(), 1.0);
            }
            // dual direction r = R^-1 d1
            let mut rvec = DVector::zeros(q);
            for k in (0..q).rev() {
                let mut acc = d[k];
                for m in k + 1..q {
                    acc -= r[(k, m)] * rvec[m];
                }
                rvec[k] = acc / r[(k, k)];
            }

            let z_dot_np = z.dot(&cons[pi].normal);
            let full_ok = z_dot_np > 1e-14;

            // partial step: smallest lambda/r over droppable (inequality) actives
            let mut t1 = f64::INFINITY;
            let mut drop_slot = None;
            for slot in 0..q {
                if cons[active[slot]].equality {
                    continue;
                }
                if rvec[slot] > 1e-12 {
                    let ratio = lambda[slot] / rvec[slot];
                    if ratio < t1 - 1e-15 {
                        t1 = ratio;
                        drop_slot = Some(slot);
                    }
                }
            }
            let t2 = if full_ok { -s_p / z_dot_np } else { f64::INFINITY };

            if !full_ok && drop_slot.is_none() {
                if cons[pi].equality && s_p.abs() <= tol.max(1e-9) {
                    continue 'outer; // linearly dependent but consistent equality
                }
                return Ok(finish(&x, &active, &lambda, &cons, QpStatus::Infeasible, iterations));
            }

            if t2 <= t1 {
                // full step: pi becomes active
                x.axpy(t2, &z, 1.0);
                for slot in 0..q {
                    lambda[slot] -= t2 * rvec[slot];
                }
                lam_p += t2;
                // Givens rotations zero the tail of d; apply to J's columns.
                let mut dwork = d.clone();
                for k in (q + 1..n).rev() {
                    let (a, b) = (dwork[k - 1], dwork[k]);
                    if b.abs() < 1e-300 {
                        continue;
                    }
                    let rho = a.hypot(b);
                    let (c, s) = (a / rho, b / rho);
                    dwork[k - 1] = rho;
                    dwork[k] = 0.0;
                    for row in 0..n {
                        let (j1, j2) = (j[(row, k - 1)], j[(row, k)]);
                        j[(row, k - 1)] = c * j1 + s * j2;
                        j[(row, k)] = -s * j1 + c * j2;
                    }
                }
                for k in 0..q {
                    r[(k, q)] = dwork[k];
                }
                r[(q, q)] = dwork[q];
                active.push(pi);
                lambda.push(lam_p);
                continue 'outer;
            }

            // partial (or dual) step: drop a constraint
            let slot = drop_slot.expect("partial step requires a droppable constraint");
            if full_ok {
                x.axpy(t1, &z, 1.0);
                s_p = cons[pi].normal.dot(&x) - cons[pi].offset;
            }
            for s2 in 0..q {
                lambda[s2] -= t1 * rvec[s2];
            }
            lam_p += t1;
            drop_constraint(&mut j, &mut r, &mut active, &mut lambda, slot);
        }
    }
}

fn infeasible_solution(p: &QpProblem) -> QpSolution {
    QpSolution {
        status: QpStatus::Infeasible,
        x: DVector::zeros(p.dim()),
        objective: f64::NAN,
        lambda_eq: DVector::zeros(p.b_eq.len()),
        lambda_in: DVector::zeros(0),
        active_set: Vec::new(),
        iterations: 0,
    }
}

fn drop_constraint(
    j: &mut DMatrix<f64>,
    r: &mut DMatrix<f64>,
    active: &mut Vec<usize>,
    lambda: &mut Vec<f64>,
    slot: usize,
) {
    let q = active.len();
    let n = j.nrows();
    // shift R columns left past the dropped one
    for col in slot..q - 1 {
        for row in 0..q {
            r[(row, col)] = r[(row, col + 1)];
        }
    }
    for row in 0..q {
        r[(row, q - 1)] = 0.0;
    }
    active.remove(slot);
    lambda.remove(slot);
    let q = active.len();
    // re-triangularize rows slot..q with Givens; mirror rotations into J columns
    for k in slot..q {
        let (a, b) = (r[(k, k)], r[(k + 1, k)]);
        if b.abs() < 1e-300 {
            continue;
        }
        let rho = a.hypot(b);
        let (c, s) = (a / rho, b / rho);
        for col in k..q {
            let (r1, r2) = (r[(k, col)], r[(k + 1, col)]);
            r[(k, col)] = c * r1 + s * r2;
            r[(k + 1, col)] = -s * r1 + c * r2;
        }
        for row in 0..n {
            let (j1, j2) = (j[(row, k)], j[(row, k + 1)]);
            j[(row, k)] = c * j1 + s * j2;
            j[(row, k + 1)] = -s * j1 + c * j2;
        }
    }
    for row in 0..q {
        r[(row + 1, row)] = 0.0;
    }
}

/// Independent KKT check: returns the worst residual among stationarity,
/// primal feasibility, dual feasibility, and complementary slackness.
pub fn kkt_residual(p: &QpProblem, sol: &QpSolution) -> f64 {
    let n = p.dim();
    let mut grad = &p.h * &sol.x + &p.g;
    for i in 0..p.b_eq.len() {
        grad -= p.a_eq.row(i).transpose() * sol.lambda_eq[i];
    }
    let mut worst: f64 = 0.0;
    let mut idx = 0;
    let take = |row: DVector<f64>, rhs: f64, lam: f64, grad: &mut DVector<f64>, worst: &mut f64| {
        *grad -= &row * lam;
        let slack = row.dot(&sol.x) - rhs;
        *worst = worst.max((-slack).max(0.0)); // primal
        *worst = worst.max((-lam).max(0.0)); // dual
        *worst = worst.max((lam * slack).abs()); // complementarity
    };
    for i in 0..p.b_in.len() {
        take(p.a_in.row(i).transpose(), p.b_in[i], sol.lambda_in[idx], &mut grad, &mut worst);
        idx += 1;
    }
    for i in 0..n {
        if p.lb[i].is_finite() {
            let mut row = DVector::zeros(n);
            row[i] = 1.0;
            take(row, p.lb[i], sol.lambda_in[idx], &mut grad, &mut worst);
        }
        idx += 1;
    }
    for i in 0..n {
        if p.ub[i].is_finite() {
            let mut row = DVector::zeros(n);
            row[i] = -1.0;
            take(row, -p.ub[i], sol.lambda_in[idx], &mut grad, &mut worst);
        }
        idx += 1;
    }
    for i in 0..p.b_eq.len() {
        worst = worst.max((p.a_eq.row(i).dot(&sol.x.transpose()) - p.b_eq[i]).abs());
    }
    worst.max(grad.amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn unconstrained_identity() {
        let p = QpProblem::new(DMatrix::identity(3, 3), DVector::zeros(3));
        let sol = solve_qp(&p, 1e-9, 100).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_abs_diff_eq!(sol.x.norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn symmetric_equality_split() {
        // minimize |x|^2 s.t. x1 + x2 = 1 -> (0.5, 0.5)
        let mut p = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(2));
        p.a_eq = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        p.b_eq = DVector::from_element(1, 1.0);
        let sol = solve_qp(&p, 1e-9, 100).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.x[1], 0.5, epsilon = 1e-10);
        assert!(kkt_residual(&p, &sol) < 1e-8);
    }

    #[test]
    fn active_inequality_and_bounds() {
        // minimize (x-1)^2 + (y+2)^2 s.t. x <= 0.25, y >= 0
        let mut p = QpProblem::new(
            DMatrix::identity(2, 2) * 2.0,
            DVector::from_row_slice(&[-2.0, 4.0]),
        );
        p.ub[0] = 0.25;
        p.lb[1] = 0.0;
        let sol = solve_qp(&p, 1e-9, 100).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 0.25, epsilon = 1e-10);
        assert_abs_diff_eq!(sol.x[1], 0.0, epsilon = 1e-10);
        assert!(kkt_residual(&p, &sol) < 1e-8);
    }

    #[test]
    fn detects_infeasible_box() {
        let mut p = QpProblem::new(DMatrix::identity(1, 1), DVector::zeros(1));
        p.a_in = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        p.b_in = DVector::from_row_slice(&[2.0, 2.0]); // x >= 2 and x <= -2
        let sol = solve_qp(&p, 1e-9, 100).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let mut p = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(2));
        p.a_eq = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        p.b_eq = DVector::from_row_slice(&[1.0, 3.0]);
        let sol = solve_qp(&p, 1e-9, 100).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
        // consistent duplicate is fine
        p.b_eq[1] = 2.0;
        let sol = solve_qp(&p, 1e-9, 100).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0] + sol.x[1], 1.0, epsilon = 1e-9);
    }

    /// Accelerated projected gradient on box-constrained QPs; independent of
    /// the active-set path.
    pub fn projected_gradient_box(p: &QpProblem, iters: usize) -> DVector<f64> {
        let n = p.dim();
        let lip = {
            // power iteration for ||H||_2
            let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
            for _ in 0..200 {
                let w = &p.h * &v;
                let nw = w.norm();
                if nw < 1e-300 {
                    break;
                }
                v = w / nw;
            }
            (&p.h * &v).norm().max(1e-12)
        };
        let step = 1.0 / lip;
        let clamp = |mut x: DVector<f64>| {
            for i in 0..n {
                x[i] = x[i].clamp(p.lb[i], p.ub[i]);
            }
            x
        };
        let mut x = clamp(DVector::zeros(n));
        let mut y = x.clone();
        let mut t = 1.0_f64;
        for _ in 0..iters {
            let grad = &p.h * &y + &p.g;
            let x_next = clamp(&y - step * grad);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &x_next + ((t - 1.0) / t_next) * (&x_next - &x);
            x = x_next;
            t = t_next;
        }
        x
    }

    #[test]
    fn random_psd_problems_match_projected_gradient() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for case in 0..50 {
            let n = rng.random_range(2..=20);
            let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let h = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
            let g = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let mut p = QpProblem::new(h, g);
            for i in 0..n {
                p.lb[i] = rng.random_range(-1.0..-0.1);
                p.ub[i] = rng.random_range(0.1..1.0);
            }
            let sol = solve_qp(&p, 1e-10, 500).unwrap();
            assert_eq!(sol.status, QpStatus::Optimal, "case {case}");
            let oracle = projected_gradient_box(&p, 20000);
            let gap = (sol.objective - p.objective(&oracle)).abs();
            assert!(gap < 1e-6, "case {case}: gap = {gap}");
            assert!(kkt_residual(&p, &sol) < 1e-8, "case {case}");
        }
    }

    #[test]
    fn solutions_pass_kkt_on_random_mixed_problems() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        for _ in 0..40 {
            let n = rng.random_range(2..=12);
            let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let h = &m * m.transpose() + DMatrix::identity(n, n) * 0.05;
            let g = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let mut p = QpProblem::new(h, g);
            let meq = rng.random_range(0..=1.min(n - 1));
            p.a_eq = DMatrix::from_fn(meq, n, |_, _| rng.random_range(-1.0..1.0));
            p.b_eq = DVector::from_fn(meq, |_, _| rng.random_range(-0.5..0.5));
            let mi = rng.random_range(0..=4);
            p.a_in = DMatrix::from_fn(mi, n, |_, _| rng.random_range(-1.0..1.0));
            p.b_in = DVector::from_fn(mi, |_, _| rng.random_range(-1.5..-0.5));
            let sol = solve_qp(&p, 1e-10, 500).unwrap();
            if sol.status == QpStatus::Optimal {
                assert!(kkt_residual(&p, &sol) < 1e-7);
            }
        }
    }

    #[test]
    fn deterministic_iterates() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 8;
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = &m * m.transpose() + DMatrix::identity(n, n) * 0.2;
        let g = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let mut p = QpProblem::new(h, g);
        for i in 0..n {
            p.lb[i] = -0.3;
            p.ub[i] = 0.3;
        }
        let a = solve_qp(&p, 1e-10, 500).unwrap();
        let b = solve_qp(&p, 1e-10, 500).unwrap();
        assert_eq!(a.x.as_slice(), b.x.as_slice());
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.active_set, b.active_set);
    }
}
