//! Dense small-scale constrained solvers: an active-set convex QP solver
//! and an SQP nonlinear programming solver built on it.

pub mod nlp;
pub mod qp;

pub use nlp::{solve_nlp, NlpFunctions, NlpOptions, NlpSolution, NlpStatus};
pub use qp::{kkt_residual, solve_qp, solve_qp_hinted, QpProblem, QpSolution, QpStatus};
