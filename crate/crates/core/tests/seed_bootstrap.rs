//! Built-in seed construction and the sampler bootstrap property.

use fphand::mechanics::{CollisionConfig, FrictionModel, TipForce};
use fphand::model::{DesignBounds, FingerJoints, Template, ToolGeom};
use fphand::sampler::FpSolveContext;
use fphand::seed::{construct_seed, default_layouts, default_seed_design, specs_from_layouts, validate_seed, FpBoundsConfig};
use fphand::solve::NlpOptions;

fn base_context() -> FpSolveContext {
    FpSolveContext {
        tmpl: Template::default(),
        tool: ToolGeom::default(),
        bounds: DesignBounds::default(),
        friction: FrictionModel::default(),
        tip: TipForce::default(),
        collision: CollisionConfig::default(),
        idle_joints: FingerJoints::new(1.2, 0.0, 1.5),
        lambda_abduction: 0.5,
        max_condition: 1e6,
        nlp: NlpOptions::default(),
        specs: vec![],
    }
}

#[test]
fn constructs_and_validates_default_seed() {
    let base = base_context();
    let layouts = default_layouts();
    let bcfg = FpBoundsConfig::default();
    let design = default_seed_design(&base.bounds);
    let seed = construct_seed(&base, &design, &layouts, &bcfg, 2026).expect("seed construction");

    let centers: Vec<_> = seed
        .states
        .iter()
        .map(|s| (s.fp, s.state.to_vector()))
        .collect();
    let mut ctx = base;
    ctx.specs = specs_from_layouts(&layouts, &bcfg, &centers).expect("specs");
    let resolved = validate_seed(&ctx, &seed).expect("bootstrap property");
    assert_eq!(resolved.len(), 3);
    for s in &resolved {
        eprintln!("{}: cost {:.4}", s.fp, s.cost);
    }
}
