//! Pipeline orchestration: configuration, persistence, and the
//! sample -> plan -> evaluate -> report workflow.

pub mod commands;
pub mod records;
pub mod svg;

use serde::{Deserialize, Serialize};

use crate::error::{FphandError, Result};
use crate::mechanics::{CollisionConfig, FrictionModel, TipForce};
use crate::model::{DesignBounds, FingerJoints, Template, ToolGeom};
use crate::planner::PlanConfig;
use crate::sampler::{FpSolveContext, FpSolved, SamplerConfig};
use crate::seed::{
    construct_seed, default_layouts, default_seed_design, specs_from_layouts, validate_seed, FpBoundsConfig,
    FpLayout, Seed,
};
use crate::solve::NlpOptions;

/// Full pipeline configuration (single JSON file; unknown keys rejected).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub template: Template,
    pub design_bounds: DesignBounds,
    pub tool: ToolGeom,
    pub friction: FrictionModel,
    pub tip_force: TipForce,
    pub collision: CollisionConfig,
    /// Parked posture of fingers without a contact assignment.
    pub idle_joints: [f64; 3],
    /// Weight of the MCP adduction/abduction regularizer in the FP cost.
    pub lambda_abduction: f64,
    /// Contact-Jacobian condition-number guard.
    pub max_condition: f64,
    pub nlp: NlpOptions,
    pub sampler: SamplerConfig,
    pub planner: PlanConfig,
    pub fp_bounds: FpBoundsConfig,
    /// FP contact layouts; `None` uses the built-in defaults.
    pub layouts: Option<Vec<FpLayout>>,
    /// Path to a seed JSON file; `None` constructs the built-in seed.
    pub seed_path: Option<String>,
    /// RNG seed of the deterministic seed-pose search.
    pub seed_search_rng: u64,
    /// Design of the built-in seed; `None` uses the design-box midpoint.
    pub seed_design: Option<crate::model::DesignParams>,
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            template: Template::default(),
            design_bounds: DesignBounds::default(),
            tool: ToolGeom::default(),
            friction: FrictionModel::default(),
            tip_force: TipForce::default(),
            collision: CollisionConfig::default(),
            idle_joints: [1.2, 0.0, 1.5],
            lambda_abduction: 0.5,
            max_condition: 1e6,
            nlp: NlpOptions::default(),
            sampler: SamplerConfig::default(),
            planner: PlanConfig::default(),
            fp_bounds: FpBoundsConfig::default(),
            layouts: None,
            seed_path: None,
            seed_search_rng: 2026,
            seed_design: None,
            workers: 4,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| FphandError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.design_bounds.validate()?;
        self.tool.validate()?;
        self.friction.validate()?;
        self.sampler.validate()?;
        self.planner.validate()?;
        if self.workers == 0 {
            return Err(FphandError::Config("workers must be >= 1".into()));
        }
        Ok(())
    }

    /// FNV-1a digest of the canonical JSON form (reproducibility bookkeeping).
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in json.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

/// A fully assembled pipeline: solver context plus the validated seed.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub ctx: FpSolveContext,
    pub seed: Seed,
    /// Re-solved seed states (candidate zero).
    pub seed_states: Vec<FpSolved>,
}

impl Pipeline {
    pub fn build(config: PipelineConfig) -> Result<Pipeline> {
        config.validate()?;
        let layouts = config.layouts.clone().unwrap_or_else(default_layouts);
        let base = FpSolveContext {
            tmpl: config.template,
            tool: config.tool,
            bounds: config.design_bounds,
            friction: config.friction,
            tip: config.tip_force,
            collision: config.collision,
            idle_joints: FingerJoints::new(config.idle_joints[0], config.idle_joints[1], config.idle_joints[2]),
            lambda_abduction: config.lambda_abduction,
            max_condition: config.max_condition,
            nlp: config.nlp,
            specs: vec![],
        };
        let seed = match &config.seed_path {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str::<Seed>(&text)
                    .map_err(|e| FphandError::Seed(format!("seed file {path}: {e}")))?
            }
            None => {
                let design = config.seed_design.unwrap_or_else(|| default_seed_design(&config.design_bounds));
                construct_seed(&base, &design, &layouts, &config.fp_bounds, config.seed_search_rng)?
            }
        };
        let centers: Vec<_> = seed.states.iter().map(|s| (s.fp, s.state.to_vector())).collect();
        let mut ctx = base;
        ctx.specs = specs_from_layouts(&layouts, &config.fp_bounds, &centers)?;
        let seed_states = validate_seed(&ctx, &seed)?;
        Ok(Pipeline {
            config,
            ctx,
            seed,
            seed_states,
        })
    }

    /// The seed as candidate zero.
    pub fn seed_candidate(&self) -> crate::sampler::CandidateRecord {
        crate::sampler::CandidateRecord {
            id: 0,
            design: self.seed.design,
            parent: 0,
            rrt_call: 0,
            states: self.seed_states.clone(),
        }
    }
}
