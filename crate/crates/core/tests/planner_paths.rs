//! Path planning from the built-in seed: residual drift, prescribed-rate
//! law, termination handling, and RK4 order.

use fphand::mechanics::{CollisionConfig, FrictionModel, TipForce};
use fphand::model::*;
use fphand::planner::*;
use fphand::sampler::FpSolveContext;
use fphand::seed::*;
use fphand::solve::NlpOptions;

fn context_and_seed() -> (FpSolveContext, Seed) {
    let base = FpSolveContext {
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
    };
    let layouts = default_layouts();
    let bcfg = FpBoundsConfig::default();
    let design = default_seed_design(&base.bounds);
    let seed = construct_seed(&base, &design, &layouts, &bcfg, 2026).expect("seed");
    let centers: Vec<_> = seed.states.iter().map(|s| (s.fp, s.state.to_vector())).collect();
    let mut ctx = base;
    ctx.specs = specs_from_layouts(&layouts, &bcfg, &centers).expect("specs");
    (ctx, seed)
}

#[test]
fn seed_paths_stay_on_manifold_and_rotate() {
    let (ctx, seed) = context_and_seed();
    let states: Vec<_> = seed.states.iter().map(|s| (s.fp, s.state.clone())).collect();
    let mut cfg = PlanConfig::default();
    cfg.max_steps = 120;
    let paths = plan_all(&ctx, &seed.design, &states, 0, &cfg).expect("plan");
    assert_eq!(paths.len(), 6);
    for p in &paths {
        eprintln!(
            "{} dir {:+}: {} steps, range {:.3} rad, {:?}",
            p.fp,
            p.direction,
            p.steps.len(),
            p.motion_range,
            p.termination
        );
        assert!(!p.steps.is_empty());
        // prescribed-rate law: phi = direction * rate * t exactly
        for (t, s) in p.steps.iter().enumerate() {
            let expect = p.direction as f64 * cfg.tool_rate * cfg.dt * t as f64;
            assert!((s.phi - expect).abs() < 1e-12, "phi law broken");
        }
        // contact residual bound along the whole path
        for s in &p.steps {
            assert!(s.residual < 1e-5, "{}: residual {:.2e}", p.fp, s.residual);
        }
        // stationary fingers' joints bit-identical across steps
        let spec = ctx.specs.iter().find(|sp| sp.name == p.fp).unwrap();
        for &sc in &spec.stationary_contacts {
            let u0 = p.steps[0].state.contacts[sc].finger_joints;
            for s in &p.steps {
                assert_eq!(u0, s.state.contacts[sc].finger_joints);
            }
        }
        // recorded equilibrium flags all true
        assert!(p.steps.iter().all(|s| s.equilibrium_ok));
    }
    // every FP must achieve motion in at least one direction for the seed
    for fp in FpName::ALL {
        let total: f64 = paths
            .iter()
            .filter(|p| p.fp == fp)
            .map(|p| p.motion_range)
            .sum();
        assert!(total > 0.0, "{fp}: zero total motion range");
    }
}

#[test]
fn sliding_speeds_recompute_from_recorded_rates() {
    let (ctx, seed) = context_and_seed();
    let s = &seed.states[1];
    let spec = ctx.spec(s.fp).clone();
    let mut cfg = PlanConfig::default();
    cfg.max_steps = 40;
    let path = plan_path(&ctx, &seed.design, &spec, &s.state, 0, &cfg).unwrap();
    let mut checked = 0;
    for step in &path.steps {
        if step.finger_rates.is_empty() {
            continue;
        }
        let again = recompute_sliding(
            &ctx,
            &seed.design,
            &spec,
            &step.state,
            &path.axis,
            &step.finger_rates,
            &cfg,
        )
        .unwrap();
        for (a, b) in step.sliding_speeds.iter().zip(&again) {
            assert!((a - b).abs() < 1e-9, "sliding mismatch {a} vs {b}");
        }
        checked += 1;
    }
    assert!(checked > 5);
}

#[test]
fn rk4_order_on_smooth_segment() {
    let (ctx, seed) = context_and_seed();
    let s = &seed.states[0]; // carve: all fingers moving, curved rolling
    let spec = ctx.spec(s.fp).clone();
    let axis = fphand::contact::fp_rotation_axis(&ctx.tmpl, &seed.design, &spec, &ctx.tool, &s.state).unwrap();
    let mut base = PlanConfig::default();
    base.tool_rate = 1.0; // excite the nonlinearity
    // fixed rates over the whole segment keep the ODE smooth
    let rates = match plan_step(&ctx, &seed.design, &spec, &s.state, &axis, &base, &[]) {
        Ok(r) => r.finger_rates,
        Err(_) => panic!("seed step should solve"),
    };
    let total_t = 0.2; // 10 steps at the base dt
    let integrate = |dt: f64| -> nalgebra::DVector<f64> {
        let mut cfg = base;
        cfg.dt = dt;
        let steps = (total_t / dt).round() as usize;
        let mut state = s.state.clone();
        for _ in 0..steps {
            state = rk4_raw_step(&ctx, &seed.design, &spec, &state, &axis, &rates, &cfg).unwrap();
        }
        state.to_vector()
    };
    let reference = integrate(total_t / 160.0);
    let e1 = (integrate(total_t / 10.0) - &reference).amax();
    let e2 = (integrate(total_t / 20.0) - &reference).amax();
    let ratio = e1 / e2.max(1e-16);
    eprintln!("rk4 errors: {e1:.3e} vs {e2:.3e}, ratio {ratio:.1}");
    assert!(ratio >= 12.0, "halving dt should cut error ~16x, got {ratio:.1}");
}
