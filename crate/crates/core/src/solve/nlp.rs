//! SQP solver for small dense nonlinear programs.
//!
//! Minimizes a smooth cost subject to nonlinear equality and inequality
//! constraints plus variable bounds. Each iteration solves a convex QP
//! subproblem (damped-BFGS Hessian model) through the active-set solver and
//! globalizes with an l1-merit backtracking line search. Iterates never
//! leave the bound box. Failures are reported as a status, not an error:
//! callers treat them as sample rejection.

use nalgebra::{DMatrix, DVector};

use super::qp::{solve_qp, QpProblem, QpStatus};
use crate::error::Result;

/// Problem callbacks. Inequalities use the `c(x) >= 0` convention.
pub trait NlpFunctions {
    fn dim(&self) -> usize;
    fn n_eq(&self) -> usize;
    fn n_ineq(&self) -> usize;
    fn cost(&self, x: &[f64]) -> Result<f64>;
    /// Analytic cost gradient; return `None` to use central differences.
    fn cost_grad(&self, _x: &[f64]) -> Option<Result<DVector<f64>>> {
        None
    }
    /// Initial diagonal of the BFGS Hessian model (per-variable curvature
    /// scale); `None` means 0.01 everywhere.
    fn hessian_init(&self) -> Option<DVector<f64>> {
        None
    }
    /// Per-variable trust-region scale (a "natural" step magnitude for each
    /// variable); `None` means 1.0 everywhere.
    fn step_scale(&self) -> Option<DVector<f64>> {
        None
    }
    fn eq_constraints(&self, x: &[f64]) -> Result<DVector<f64>>;
    fn eq_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>>;
    fn ineq_constraints(&self, x: &[f64]) -> Result<DVector<f64>>;
    fn ineq_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>>;
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NlpOptions {
    /// Constraint tolerance (mm-scale residuals).
    pub tol_con: f64,
    /// First-order optimality tolerance.
    pub tol_opt: f64,
    pub max_iter: usize,
    pub qp_max_iter: usize,
}

impl Default for NlpOptions {
    fn default() -> Self {
        Self {
            tol_con: 1e-8,
            tol_opt: 1e-6,
            max_iter: 200,
            qp_max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlpStatus {
    Converged,
    MaxIter,
    LineSearchStall,
    QpFailure,
    EvalError,
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub status: NlpStatus,
    pub x: DVector<f64>,
    pub cost: f64,
    pub constraint_violation: f64,
    pub iterations: usize,
}

impl NlpSolution {
    pub fn converged(&self) -> bool {
        self.status == NlpStatus::Converged
    }
}

struct Eval {
    f: f64,
    grad: DVector<f64>,
    ceq: DVector<f64>,
    jeq: DMatrix<f64>,
    cin: DVector<f64>,
    jin: DMatrix<f64>,
}

fn violation(ceq: &DVector<f64>, cin: &DVector<f64>) -> f64 {
    let mut v = 0.0;
    for e in ceq.iter() {
        v += e.abs();
    }
    for c in cin.iter() {
        v += (-c).max(0.0);
    }
    v
}

fn max_violation(ceq: &DVector<f64>, cin: &DVector<f64>) -> f64 {
    let mut v: f64 = 0.0;
    for e in ceq.iter() {
        v = v.max(e.abs());
    }
    for c in cin.iter() {
        v = v.max(-c);
    }
    v.max(0.0)
}

fn fd_cost_grad(funcs: &dyn NlpFunctions, x: &[f64], lb: &DVector<f64>, ub: &DVector<f64>) -> Result<DVector<f64>> {
    let n = x.len();
    let mut g = DVector::zeros(n);
    let mut xp = x.to_vec();
    for i in 0..n {
        let h = 1e-7 * x[i].abs().max(1.0);
        let hi = (x[i] + h).min(ub[i]);
        let lo = (x[i] - h).max(lb[i]);
        if hi - lo < 1e-14 {
            g[i] = 0.0;
            continue;
        }
        xp[i] = hi;
        let fp = funcs.cost(&xp)?;
        xp[i] = lo;
        let fm = funcs.cost(&xp)?;
        xp[i] = x[i];
        g[i] = (fp - fm) / (hi - lo);
    }
    Ok(g)
}

fn evaluate(funcs: &dyn NlpFunctions, x: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>) -> Result<Eval> {
    let xs = x.as_slice();
    let grad = match funcs.cost_grad(xs) {
        Some(g) => g?,
        None => fd_cost_grad(funcs, xs, lb, ub)?,
    };
    Ok(Eval {
        f: funcs.cost(xs)?,
        grad,
        ceq: funcs.eq_constraints(xs)?,
        jeq: funcs.eq_jacobian(xs)?,
        cin: funcs.ineq_constraints(xs)?,
        jin: funcs.ineq_jacobian(xs)?,
    })
}

/// Solve the NLP starting from `x0` (clamped into the bounds).
pub fn solve_nlp(
    funcs: &dyn NlpFunctions,
    x0: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
    opts: &NlpOptions,
) -> NlpSolution {
    let n = funcs.dim();
    let mut x = x0.clone();
    for i in 0..n {
        x[i] = x[i].clamp(lb[i], ub[i]);
    }

    let mut b = match funcs.hessian_init() {
        Some(diag) => DMatrix::from_diagonal(&diag),
        None => DMatrix::identity(n, n) * 0.01,
    };
    let scale = funcs.step_scale().unwrap_or_else(|| DVector::from_element(n, 1.0));
    let mut trust = 1.0_f64; // radius factor on the per-variable scale
    let mut stalls = 0usize;
    let mut nu = 1.0;
    let fail = |status: NlpStatus, x: &DVector<f64>, ev: Option<&Eval>, it: usize| NlpSolution {
        status,
        x: x.clone(),
        cost: ev.map_or(f64::NAN, |e| e.f),
        constraint_violation: ev.map_or(f64::NAN, |e| max_violation(&e.ceq, &e.cin)),
        iterations: it,
    };

    let mut ev = match evaluate(funcs, &x, lb, ub) {
        Ok(e) => e,
        Err(_) => return fail(NlpStatus::EvalError, &x, None, 0),
    };

    for iter in 0..opts.max_iter {
        // QP subproblem in the step d: min 1/2 d'Bd + grad'd
        // s.t. Jeq d = -ceq, Jin d >= -cin, lb-x <= d <= ub-x
        let mut qp = QpProblem::new(b.clone(), ev.grad.clone());
        qp.a_eq = ev.jeq.clone();
        qp.b_eq = -&ev.ceq;
        qp.a_in = ev.jin.clone();
        qp.b_in = -&ev.cin;
        for i in 0..n {
            qp.lb[i] = (lb[i] - x[i]).max(-trust * scale[i]);
            qp.ub[i] = (ub[i] - x[i]).min(trust * scale[i]);
        }
        let sol = match solve_qp(&qp, 1e-11, opts.qp_max_iter * 4) {
            Ok(s) => s,
            Err(_) => return fail(NlpStatus::QpFailure, &x, Some(&ev), iter),
        };
        let (d, lam_inf) = match sol.status {
            QpStatus::Optimal => {
                let lam = sol.lambda_eq.amax().max(sol.lambda_in.amax());
                (sol.x, lam)
            }
            _ => {
                // Elastic relaxation: slacks on every nonlinear constraint with
                // a large l1 penalty; always feasible at d = 0.
                match elastic_step(&b, &ev, &qp.lb, &qp.ub, opts) {
                    Some(d) => (d, nu),
                    None => return fail(NlpStatus::QpFailure, &x, Some(&ev), iter),
                }
            }
        };

        let bd = (&b * &d).amax();
        let feas = max_violation(&ev.ceq, &ev.cin);
        if std::env::var_os("FPHAND_NLP_TRACE").is_some() {
            eprintln!(
                "it {iter}: f {:.6} feas {:.3e} |d| {:.3e} bd {:.3e} qp {:?} nu {nu:.2e}",
                ev.f, feas, d.amax(), bd, sol.status
            );
        }
        if feas <= opts.tol_con && (bd <= opts.tol_opt || d.amax() <= opts.tol_opt * 1e-3) {
            return NlpSolution {
                status: NlpStatus::Converged,
                x,
                cost: ev.f,
                constraint_violation: feas,
                iterations: iter,
            };
        }

        // l1 merit line search
        nu = nu.max(1.5 * lam_inf + 0.1);
        let viol0 = violation(&ev.ceq, &ev.cin);
        let mut dderiv = ev.grad.dot(&d) - nu * viol0;
        if dderiv > -1e-16 && viol0 > opts.tol_con {
            nu *= 10.0;
            dderiv = ev.grad.dot(&d) - nu * viol0;
        }
        let phi0 = ev.f + nu * viol0;

        let mut alpha = 1.0;
        let mut accepted = None;
        let mut soc_tried = false;
        while alpha >= 1e-9 {
            let mut xt = &x + alpha * &d;
            for i in 0..n {
                xt[i] = xt[i].clamp(lb[i], ub[i]);
            }
            if let Ok(et) = evaluate(funcs, &xt, lb, ub) {
                let phi = et.f + nu * violation(&et.ceq, &et.cin);
                let bound = phi0 + 0.1 * alpha * dderiv.min(0.0) + 1e-14 * phi0.abs().max(1.0);
                if phi <= bound {
                    accepted = Some((xt, et, phi, alpha));
                    break;
                }
                // second-order correction against the Maratos effect: shift
                // the full step by the minimum-norm fix of the constraint
                // values it produced
                if alpha >= 0.99 && !soc_tried {
                    soc_tried = true;
                    if let Some(dc) = min_norm_correction(&ev.jeq, &et.ceq) {
                        let mut xc = &xt + &dc;
                        for i in 0..n {
                            xc[i] = xc[i].clamp(lb[i], ub[i]);
                        }
                        if let Ok(ec) = evaluate(funcs, &xc, lb, ub) {
                            let phic = ec.f + nu * violation(&ec.ceq, &ec.cin);
                            if phic <= bound {
                                accepted = Some((xc, ec, phic, 1.0));
                                break;
                            }
                        }
                    }
                }
            }
            alpha *= 0.5;
        }
        let (x_new, ev_new) = match accepted {
            Some((xt, et, phi, alpha)) => {
                // trust-region update from the merit agreement
                let predicted = -alpha * dderiv.min(-1e-16);
                let actual = phi0 - phi;
                if alpha >= 0.99 && actual >= 0.3 * predicted {
                    trust = (trust * 1.8).min(30.0);
                } else if alpha <= 0.26 {
                    trust = (trust * 0.5).max(1e-4);
                }
                stalls = 0;
                (xt, et)
            }
            None => {
                // no merit progress along d: shrink the trust region and retry
                let feas_now = max_violation(&ev.ceq, &ev.cin);
                if feas_now <= opts.tol_con && bd <= 10.0 * opts.tol_opt {
                    return NlpSolution {
                        status: NlpStatus::Converged,
                        x,
                        cost: ev.f,
                        constraint_violation: feas_now,
                        iterations: iter,
                    };
                }
                trust = (trust * 0.25).max(1e-4);
                stalls += 1;
                if stalls >= 10 {
                    if let Some((xr, evr)) = refine_feasibility(funcs, &x, lb, ub, opts) {
                        return fail(NlpStatus::LineSearchStall, &xr, Some(&evr), iter);
                    }
                    return fail(NlpStatus::LineSearchStall, &x, Some(&ev), iter);
                }
                continue;
            }
        };

        // damped BFGS on the Lagrangian gradient
        let step = &x_new - &x;
        let lag_grad = |e: &Eval| {
            let mut g = e.grad.clone();
            g -= e.jeq.transpose() * &sol.lambda_eq;
            for (k, lam) in sol.lambda_in.iter().enumerate() {
                if *lam != 0.0 && k < e.jin.nrows() {
                    g -= e.jin.row(k).transpose() * *lam;
                }
            }
            g
        };
        let y = lag_grad(&ev_new) - lag_grad(&ev);
        let sts = step.dot(&(&b * &step));
        let sty = step.dot(&y);
        if sts > 1e-16 {
            let theta = if sty >= 0.2 * sts {
                1.0
            } else {
                0.8 * sts / (sts - sty)
            };
            let y_damped = theta * &y + (1.0 - theta) * (&b * &step);
            let sy = step.dot(&y_damped);
            if sy > 1e-12 {
                let bs = &b * &step;
                b = b - (&bs * bs.transpose()) / sts + (&y_damped * y_damped.transpose()) / sy;
            }
        }

        x = x_new;
        ev = ev_new;
    }

    // ran out of iterations: pin the constraints with pure Gauss-Newton so a
    // near-feasible, near-optimal point is returned at full precision
    if let Some((xr, evr)) = refine_feasibility(funcs, &x, lb, ub, opts) {
        x = xr;
        ev = evr;
    }
    fail(NlpStatus::MaxIter, &x, Some(&ev), opts.max_iter)
}

/// Newton-style feasibility polish: minimum-norm corrections of the equality
/// residuals (plus any violated inequalities), clamped into the bounds.
/// Monotone in the violation; stops at the first non-improving step.
fn refine_feasibility(
    funcs: &dyn NlpFunctions,
    x0: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
    opts: &NlpOptions,
) -> Option<(DVector<f64>, Eval)> {
    let n = x0.len();
    let mut x = x0.clone();
    let mut ev = evaluate(funcs, &x, lb, ub).ok()?;
    for _ in 0..20 {
        let viol = max_violation(&ev.ceq, &ev.cin);
        if viol <= 0.01 * opts.tol_con {
            break;
        }
        // minimum-norm correction, bounds- and inequality-aware
        let mut qp = QpProblem::new(DMatrix::identity(n, n), DVector::zeros(n));
        qp.a_eq = ev.jeq.clone();
        qp.b_eq = -&ev.ceq;
        qp.a_in = ev.jin.clone();
        qp.b_in = -&ev.cin;
        for i in 0..n {
            qp.lb[i] = lb[i] - x[i];
            qp.ub[i] = ub[i] - x[i];
        }
        let step = match solve_qp(&qp, 1e-12, 600) {
            Ok(sol) if sol.status == QpStatus::Optimal => sol.x,
            _ => {
                // fall back to the unconstrained minimum-norm fix, clamped
                let mut j = ev.jeq.clone();
                let mut c = ev.ceq.clone();
                let violated: Vec<usize> =
                    ev.cin.iter().enumerate().filter(|(_, &v)| v < 0.0).map(|(i, _)| i).collect();
                if !violated.is_empty() {
                    let rows = j.nrows() + violated.len();
                    let mut js = DMatrix::zeros(rows, n);
                    let mut cs = DVector::zeros(rows);
                    js.view_mut((0, 0), (j.nrows(), n)).copy_from(&j);
                    cs.rows_mut(0, c.len()).copy_from(&c);
                    for (k, &vi) in violated.iter().enumerate() {
                        js.row_mut(j.nrows() + k).copy_from(&ev.jin.row(vi));
                        cs[j.nrows() + k] = ev.cin[vi];
                    }
                    j = js;
                    c = cs;
                }
                min_norm_correction(&j, &c)?
            }
        };
        if step.amax() < 1e-15 {
            break;
        }
        let mut xn = &x + step;
        for i in 0..n {
            xn[i] = xn[i].clamp(lb[i], ub[i]);
        }
        let Ok(evn) = evaluate(funcs, &xn, lb, ub) else { break };
        if max_violation(&evn.ceq, &evn.cin) >= viol {
            break;
        }
        x = xn;
        ev = evn;
    }
    Some((x, ev))
}

/// Minimum-norm step `dc` with `J dc = -c` (underdetermined least squares).
fn min_norm_correction(j: &DMatrix<f64>, c: &DVector<f64>) -> Option<DVector<f64>> {
    let m = j.nrows();
    if m == 0 {
        return None;
    }
    let jjt = j * j.transpose() + DMatrix::identity(m, m) * 1e-12;
    let y = jjt.cholesky()?.solve(&(-c));
    Some(j.transpose() * y)
}

/// Relaxed subproblem with l1 slacks; returns the step block if solvable.
/// `dlb`/`dub` are step bounds (box and trust region already intersected).
fn elastic_step(
    b: &DMatrix<f64>,
    ev: &Eval,
    dlb: &DVector<f64>,
    dub: &DVector<f64>,
    opts: &NlpOptions,
) -> Option<DVector<f64>> {
    let n = dlb.len();
    let me = ev.ceq.len();
    let mi = ev.cin.len();
    let dim = n + 2 * me + mi;
    let rho = 1e4 * ev.grad.amax().max(1.0);
    let mut h = DMatrix::zeros(dim, dim);
    h.view_mut((0, 0), (n, n)).copy_from(b);
    for k in n..dim {
        h[(k, k)] = 1e-6;
    }
    let mut g = DVector::zeros(dim);
    g.rows_mut(0, n).copy_from(&ev.grad);
    for k in n..dim {
        g[k] = rho;
    }
    let mut qp = QpProblem::new(h, g);
    // Jeq d - s+ + s- = -ceq
    qp.a_eq = DMatrix::zeros(me, dim);
    qp.a_eq.view_mut((0, 0), (me, n)).copy_from(&ev.jeq);
    for k in 0..me {
        qp.a_eq[(k, n + k)] = -1.0;
        qp.a_eq[(k, n + me + k)] = 1.0;
    }
    qp.b_eq = -&ev.ceq;
    // Jin d + t >= -cin
    qp.a_in = DMatrix::zeros(mi, dim);
    qp.a_in.view_mut((0, 0), (mi, n)).copy_from(&ev.jin);
    for k in 0..mi {
        qp.a_in[(k, n + 2 * me + k)] = 1.0;
    }
    qp.b_in = -&ev.cin;
    for i in 0..n {
        qp.lb[i] = dlb[i];
        qp.ub[i] = dub[i];
    }
    for k in n..dim {
        qp.lb[k] = 0.0;
    }
    let sol = solve_qp(&qp, 1e-11, opts.qp_max_iter * 8).ok()?;
    if sol.status != QpStatus::Optimal {
        return None;
    }
    Some(sol.x.rows(0, n).into_owned())
}
