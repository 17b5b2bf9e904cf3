//! Candidate evaluation: three metrics per foundational pose, 0-100 score
//! normalization across the population, and the Pareto front over the nine
//! resulting scores.

use serde::{Deserialize, Serialize};

use crate::contact::fp_rotation_axis;
use crate::error::{FphandError, Result};
use crate::mechanics::{equilibrium_from_assembled, joint_torques, tip_force_world};
use crate::model::{DesignParams, FpName};
use crate::planner::{PathRecord, PlanConfig};
use crate::sampler::FpSolveContext;

/// Which way a raw metric points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    HigherBetter,
    LowerBetter,
}

/// The three per-FP metrics in column order.
pub const METRICS: [(&str, Orientation); 3] = [
    ("motion_range", Orientation::HigherBetter),
    ("mean_sliding", Orientation::LowerBetter),
    ("max_torque", Orientation::LowerBetter),
];

/// Raw metric values of one candidate for one FP.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FpMetrics {
    pub fp: FpName,
    /// Total rotational magnitude over both directions, rad.
    pub motion_range: f64,
    /// Mean of all contacts' sliding speeds along both paths, mm/s.
    pub mean_sliding: f64,
    /// Max joint torque to withstand the tip force along both paths, N*mm.
    pub max_torque: f64,
}

/// One evaluated candidate row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateScores {
    pub id: usize,
    pub design: DesignParams,
    pub metrics: Vec<FpMetrics>,
    /// Nine normalized scores (FP-major, metric-minor), each in [0, 100].
    pub scores: Vec<f64>,
    pub pareto: bool,
    /// All three FP motion ranges strictly positive.
    pub wielding_success: bool,
    /// False when paths were missing/invalid; excluded from normalization.
    pub complete: bool,
}

/// Tool motion range of one FP: `|phi_end(+)| + |phi_end(-)|`.
pub fn metric_motion_range(paths: &[&PathRecord]) -> Result<f64> {
    if paths.len() != 2 {
        return Err(FphandError::Dimension {
            expected: 2,
            got: paths.len(),
        });
    }
    Ok(paths.iter().map(|p| p.motion_range).sum())
}

/// Mean over all steps (both directions) and all contacts of the tangential
/// sliding speed.
pub fn metric_mean_sliding(paths: &[&PathRecord]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for p in paths {
        for s in &p.steps {
            for v in &s.sliding_speeds {
                sum += v;
                count += 1;
            }
        }
    }
    Ok(if count == 0 { 0.0 } else { sum / count as f64 })
}

/// Max over steps, fingers, and joints of the torque magnitude needed to
/// withstand the tip force (minimum-norm contact force set), N*mm.
pub fn metric_max_torque(
    ctx: &FpSolveContext,
    d: &DesignParams,
    paths: &[&PathRecord],
    cfg: &PlanConfig,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in paths {
        let spec = ctx.spec(p.fp);
        for step in &p.steps {
            let asm = crate::contact::assemble_all(&ctx.tmpl, d, &ctx.tool, &step.state)?;
            let f = tip_force_world(&p.axis, &ctx.tool, p.direction as f64, ctx.tip.magnitude, true)?;
            let eq = equilibrium_from_assembled(&asm, &ctx.tool, &f, &ctx.friction)?;
            if !eq.feasible {
                return Err(FphandError::Solver(format!(
                    "{}: recorded step lost equilibrium during evaluation",
                    p.fp
                )));
            }
            let torques = joint_torques(&ctx.tmpl, d, &ctx.tool, &step.state, &eq.forces)?;
            for t in torques.iter().flatten() {
                worst = worst.max(t.abs());
            }
        }
        let _ = (spec, cfg);
    }
    Ok(worst)
}

/// All three metrics of one FP from its two directional paths.
pub fn fp_metrics(
    ctx: &FpSolveContext,
    d: &DesignParams,
    fp: FpName,
    paths: &[&PathRecord],
    cfg: &PlanConfig,
) -> Result<FpMetrics> {
    Ok(FpMetrics {
        fp,
        motion_range: metric_motion_range(paths)?,
        mean_sliding: metric_mean_sliding(paths)?,
        max_torque: metric_max_torque(ctx, d, paths, cfg)?,
    })
}

/// Linear 0-100 normalization: worst maps to 0, best to 100; a constant
/// column maps everywhere to 100.
pub fn normalize_scores(values: &[f64], orientation: Orientation) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo).is_normal() {
        return vec![100.0; values.len()];
    }
    values
        .iter()
        .map(|v| {
            let t = (v - lo) / (hi - lo);
            match orientation {
                Orientation::HigherBetter => 100.0 * t,
                Orientation::LowerBetter => 100.0 * (1.0 - t),
            }
        })
        .collect()
}

/// Indices of non-dominated rows (scores oriented so higher is better).
/// Sort-by-score-sum cull: a dominator always has a strictly larger sum, so
/// it is ranked before anything it dominates.
pub fn pareto_front(scores: &[Vec<f64>]) -> Vec<usize> {
    let n = scores.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let sa: f64 = scores[a].iter().sum();
        let sb: f64 = scores[b].iter().sum();
        sb.partial_cmp(&sa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let dominates = |a: &[f64], b: &[f64]| -> bool {
        let mut strict = false;
        for (x, y) in a.iter().zip(b) {
            if x < y {
                return false;
            }
            if x > y {
                strict = true;
            }
        }
        strict
    };
    let mut front: Vec<usize> = Vec::new();
    for &i in &order {
        if !front.iter().any(|&f| dominates(&scores[f], &scores[i])) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}

/// Assemble the full score table: normalization population = complete rows.
pub fn score_table(mut rows: Vec<CandidateScores>) -> Vec<CandidateScores> {
    let complete: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].complete).collect();
    if complete.is_empty() {
        return rows;
    }
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(9);
    for fp_idx in 0..3 {
        for (m_idx, _) in METRICS.iter().enumerate() {
            let col: Vec<f64> = complete
                .iter()
                .map(|&i| {
                    let m = &rows[i].metrics[fp_idx];
                    match m_idx {
                        0 => m.motion_range,
                        1 => m.mean_sliding,
                        _ => m.max_torque,
                    }
                })
                .collect();
            columns.push(col);
        }
    }
    let mut normalized: Vec<Vec<f64>> = Vec::with_capacity(9);
    for (k, col) in columns.iter().enumerate() {
        normalized.push(normalize_scores(col, METRICS[k % 3].1));
    }
    for (slot, &i) in complete.iter().enumerate() {
        rows[i].scores = (0..9).map(|k| normalized[k][slot]).collect();
        rows[i].wielding_success = rows[i].metrics.iter().all(|m| m.motion_range > 0.0);
    }
    let score_rows: Vec<Vec<f64>> = complete.iter().map(|&i| rows[i].scores.clone()).collect();
    let front = pareto_front(&score_rows);
    for (slot, &i) in complete.iter().enumerate() {
        rows[i].pareto = front.contains(&slot);
    }
    rows
}
