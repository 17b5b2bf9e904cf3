//! Reach-FP residual system, contact Jacobians, and roll-slide evolution
//! against finite-difference and analytic oracles.

use fphand::contact::*;
use fphand::geom::RigidTransform;
use fphand::mechanics::{CollisionConfig, FrictionModel, TipForce};
use fphand::model::chart::CapChart;
use fphand::model::*;
use fphand::sampler::FpSolveContext;
use fphand::seed::*;
use fphand::solve::NlpOptions;
use nalgebra::{DVector, Vector3};
use rand::{Rng, SeedableRng};

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
fn dimension_law() {
    let (ctx, seed) = context_and_seed();
    for s in &seed.states {
        let spec = ctx.spec(s.fp);
        let n = spec.n_contacts();
        let expected_rows = match s.fp {
            FpName::Carve => 18,
            _ => 24,
        };
        assert_eq!(spec.residual_dim(), expected_rows);
        assert_eq!(spec.state_dim(), 8 * n + 6);
        assert_eq!(s.state.to_vector().len(), 8 * n + 6);
        let r = reach_fp_residual(&ctx.tmpl, &seed.design, spec, &ctx.tool, &s.state).unwrap();
        assert_eq!(r.len(), expected_rows);
    }
}

#[test]
fn seed_states_satisfy_residual() {
    let (ctx, seed) = context_and_seed();
    for s in &seed.states {
        let spec = ctx.spec(s.fp);
        let r = reach_fp_residual(&ctx.tmpl, &seed.design, spec, &ctx.tool, &s.state).unwrap();
        let rn = residual_mm_norm(&r, &ctx.tool);
        assert!(rn < 1e-9, "{}: residual {rn:.2e}", s.fp);
    }
}

#[test]
fn single_finger_touching_configuration() {
    // analytic tangency: fingertip cap against the tool cylinder, with the
    // palm posed where the built-in seed holds it (known reachable)
    let (ctx, seed) = context_and_seed();
    let tmpl = ctx.tmpl;
    let tool = ctx.tool;
    let d = seed.design;
    let carve = &seed.states[0].state;
    let pair0 = &carve.contacts[0];
    let (a1, a2) = (pair0.tool_coords.a1, pair0.tool_coords.a2);
    let (s2, c2) = a2.sin_cos();
    let surface = Vector3::new(tool.radius * c2, tool.radius * s2, a1);
    let center = surface + Vector3::new(c2, s2, 0.0) * d.finger_radius;
    let pose = carve.hand_pose;
    let t_oh = pose.to_transform();
    let roots = finger_roots(&d);
    let finger = pair0.finger;
    let t_or: RigidTransform = t_oh.mul(&roots[finger]);
    let local = t_or.inverse().transform_point(&center);
    let joints = finger_ik(&tmpl, &d, &local).expect("seed contact is reachable");
    let r_dist = t_or.rot
        * fphand::geom::rot_x(joints.mcp_flexion)
        * fphand::geom::rot_y(joints.mcp_abduction)
        * fphand::geom::rot_x(joints.ip_flexion);
    let dir_local = r_dist.transpose() * (-Vector3::new(c2, s2, 0.0));
    let psi = dir_local.z.clamp(-1.0, 1.0).asin();
    assert!(psi > 0.0, "contact lands on the cap for this pose");
    let pair = ContactPair {
        finger,
        tool_coords: SurfaceCoords::new(a1, a2, 0.0),
        finger_joints: joints,
        finger_coords: [d.distal_body_len() + d.finger_radius * psi, dir_local.y.atan2(dir_local.x)],
        chart: CapChart::Axial,
    };
    let asm = assemble_contact(&tmpl, &d, &tool, &pose, &pair).unwrap();
    let dp = (asm.tool_point - asm.finger_point).norm();
    let dz = (asm.tool_frame.column(2) + asm.finger_frame.column(2)).norm();
    assert!(dp < 1e-9, "position gap {dp:.2e}");
    assert!(dz < 1e-9, "normal misalignment {dz:.2e}");
}

fn perturbed_states(
    seed: &Seed,
    tool: &ToolGeom,
    rng: &mut impl Rng,
    scale: f64,
) -> Vec<(FpName, SystemState)> {
    seed.states
        .iter()
        .map(|s| {
            let n = s.state.contacts.len();
            let mut v = s.state.to_vector();
            for k in 0..v.len() {
                v[k] += rng.random_range(-scale..scale);
            }
            // keep chart coordinates inside their domains (with FD headroom)
            let body = seed.design.distal_body_len();
            let cap = fphand::model::chart::capsule_domain(seed.design.finger_radius, body);
            for c in 0..n {
                let a_t1 = 6 + 3 * c + 1;
                v[a_t1] = v[a_t1].clamp(0.01, tool.length - 0.01);
                let a_f1 = 6 + 3 * n + 5 * c + 3;
                v[a_f1] = v[a_f1].clamp(0.01, cap - 0.5);
            }
            (s.fp, s.state.with_vector(&v).unwrap())
        })
        .collect()
}

#[test]
fn residual_jacobians_match_finite_differences() {
    let (ctx, seed) = context_and_seed();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for _ in 0..4 {
        for (fp, state) in perturbed_states(&seed, &ctx.tool, &mut rng, 0.02) {
            let spec = ctx.spec(fp);
            for reduced in [false, true] {
                let (j, eval): (_, Box<dyn Fn(&SystemState) -> DVector<f64>>) = if reduced {
                    (
                        reach_fp_jacobian_reduced(&ctx.tmpl, &seed.design, spec, &ctx.tool, &state).unwrap(),
                        Box::new(|s: &SystemState| {
                            reach_fp_residual_reduced(&ctx.tmpl, &seed.design, spec, &ctx.tool, s).unwrap()
                        }),
                    )
                } else {
                    (
                        reach_fp_jacobian(&ctx.tmpl, &seed.design, spec, &ctx.tool, &state).unwrap(),
                        Box::new(|s: &SystemState| {
                            reach_fp_residual(&ctx.tmpl, &seed.design, spec, &ctx.tool, s).unwrap()
                        }),
                    )
                };
                let v0 = state.to_vector();
                let h = 1e-6;
                let mut worst_rel: f64 = 0.0;
                for k in 0..v0.len() {
                    let mut vp = v0.clone();
                    let mut vm = v0.clone();
                    vp[k] += h;
                    vm[k] -= h;
                    let rp = eval(&state.with_vector(&vp).unwrap());
                    let rm = eval(&state.with_vector(&vm).unwrap());
                    let fd = (rp - rm) / (2.0 * h);
                    let col = j.column(k);
                    let denom = fd.amax().max(1.0);
                    worst_rel = worst_rel.max((fd - col).amax() / denom);
                }
                assert!(worst_rel < 1e-6, "{fp} reduced={reduced}: rel err {worst_rel:.2e}");
            }
        }
    }
}

#[test]
fn contact_jacobian_matches_finite_differences() {
    let (ctx, seed) = context_and_seed();
    for s in &seed.states {
        let spec = ctx.spec(s.fp);
        let axis = fp_rotation_axis(&ctx.tmpl, &seed.design, spec, &ctx.tool, &s.state).unwrap();
        let j = contact_jacobian(&ctx.tmpl, &seed.design, spec, &ctx.tool, &s.state, &axis).unwrap();
        let asm = assemble_all(&ctx.tmpl, &seed.design, &ctx.tool, &s.state).unwrap();
        let h = 1e-7;

        // tool-rate column: rotate the hand about the axis by -h (the tool
        // stays put in {O}) and difference the finger contact points
        let rot = fphand::geom::rotation_about_line(&axis.point_vec(), &axis.dir_vec(), -h);
        let pose_rot = {
            let t = s.state.hand_pose.to_transform();
            let m = rot.mul(&t);
            HandPose6D::from_transform(&m)
        };
        for (c, a) in asm.iter().enumerate() {
            let mut moved = s.state.clone();
            moved.hand_pose = pose_rot;
            let asm2 = assemble_all(&ctx.tmpl, &seed.design, &ctx.tool, &moved).unwrap();
            let fd = (asm2[c].finger_point - a.finger_point) / h;
            let expect = a.tool_frame.transpose() * fd;
            for i in 0..3 {
                let rel = (j[(3 * c + i, 0)] - expect[i]).abs() / expect.amax().max(1.0);
                assert!(rel < 1e-5, "{}: contact {c} row {i} rel {rel:.2e}", s.fp);
            }
        }

        // moving-finger joint columns
        let moving = spec.moving_contacts();
        for (slot, &mc) in moving.iter().enumerate() {
            for k in 0..3 {
                let mut vp = s.state.to_vector();
                let n = spec.n_contacts();
                let idx = 6 + 3 * n + 5 * mc + k;
                vp[idx] += h;
                let sp = s.state.with_vector(&vp).unwrap();
                let asm2 = assemble_all(&ctx.tmpl, &seed.design, &ctx.tool, &sp).unwrap();
                let fd = (asm2[mc].finger_point - asm[mc].finger_point) / h;
                let expect = asm[mc].tool_frame.transpose() * fd;
                for i in 0..3 {
                    let rel = (j[(3 * mc + i, 1 + 3 * slot + k)] - expect[i]).abs() / expect.amax().max(1.0);
                    assert!(rel < 1e-5, "{}: joint col rel {rel:.2e}", s.fp);
                }
            }
        }
    }
}

#[test]
fn pure_rolling_rates_match_analytic_speeds() {
    // single tangent contact from the built-in seed; prescribe pure rolling
    // and compare coordinate rates against the curvature-sum formula
    let (ctx, seed) = context_and_seed();
    let tool = ctx.tool;
    let d = seed.design;
    let carve = &seed.states[0].state;
    let pair = carve.contacts[0];
    // the fingertip must sit on the spherical cap for the formula to apply
    assert!(pair.finger_coords[0] > d.distal_body_len());
    let asm = assemble_contact(&ctx.tmpl, &d, &tool, &carve.hand_pose, &pair).unwrap();

    let omega = 0.7;
    let r = d.finger_radius;
    // unspun surface directions at the contact (the stored frame carries the
    // canonical gauge spin)
    let (s2c, c2c) = pair.tool_coords.a2.sin_cos();
    let circumferential = Vector3::new(-s2c, c2c, 0.0);
    let axial = Vector3::new(0.0, 0.0, 1.0);

    // rolling about the circumferential tangent: the contact travels the
    // tool's flat axial direction; only the sphere curves
    let rates = evolve_single_contact(&asm, &Vector3::zeros(), &(omega * circumferential)).unwrap();
    let v_f = (asm.finger_d[3].dp * rates.finger[0] + asm.finger_d[4].dp * rates.finger[1]).norm();
    let v_t = (asm.tool_d[1].dp * rates.tool[1] + asm.tool_d[2].dp * rates.tool[2]).norm();
    approx::assert_relative_eq!(v_f, r * omega, max_relative = 1e-9);
    approx::assert_relative_eq!(v_t, r * omega, max_relative = 1e-9);

    // rolling about the axial tangent: the contact travels the curved
    // circumferential direction; curvatures add
    let rates = evolve_single_contact(&asm, &Vector3::zeros(), &(omega * axial)).unwrap();
    let v_f = (asm.finger_d[3].dp * rates.finger[0] + asm.finger_d[4].dp * rates.finger[1]).norm();
    let expected = omega / (1.0 / r + 1.0 / tool.radius);
    approx::assert_relative_eq!(v_f, expected, max_relative = 1e-9);

    // zero input rates give zero coordinate rates
    let rates = evolve_single_contact(&asm, &Vector3::zeros(), &Vector3::zeros()).unwrap();
    assert!(rates.tool.iter().all(|v| v.abs() < 1e-12));
    assert!(rates.finger.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn evolution_maintains_tangency_to_second_order() {
    let (ctx, seed) = context_and_seed();
    let s = &seed.states[0];
    let spec = ctx.spec(s.fp);
    let axis = fp_rotation_axis(&ctx.tmpl, &seed.design, spec, &ctx.tool, &s.state).unwrap();
    let u_t_rate = 0.4;
    // joint rates that keep the normal relative velocities zero:
    // E_z J [u_t_rate; u_f] = 0 solved in least squares for u_f
    let j = contact_jacobian(&ctx.tmpl, &seed.design, spec, &ctx.tool, &s.state, &axis).unwrap();
    let n = spec.n_contacts();
    let mut ez = nalgebra::DMatrix::zeros(n, j.ncols());
    for c in 0..n {
        ez.row_mut(c).copy_from(&j.row(3 * c + 2));
    }
    let a = ez.columns(1, j.ncols() - 1).into_owned();
    let b = -(ez.column(0) * u_t_rate);
    let uf = a.svd(true, true).solve(&b, 1e-12).unwrap();
    let moving = spec.moving_contacts();
    let rates_in: Vec<[f64; 3]> = moving
        .iter()
        .enumerate()
        .map(|(slot, _)| [uf[3 * slot], uf[3 * slot + 1], uf[3 * slot + 2]])
        .collect();
    let gap_at = |dt: f64| -> f64 {
        let rates = contact_evolution(
            &ctx.tmpl,
            &seed.design,
            spec,
            &ctx.tool,
            &s.state,
            &axis,
            u_t_rate,
            &rates_in,
        )
        .unwrap();
        // Euler step of all coordinates plus the hand counter-rotation
        let rot = fphand::geom::rotation_about_line(&axis.point_vec(), &axis.dir_vec(), -u_t_rate * dt);
        let mut moved = s.state.clone();
        moved.hand_pose = HandPose6D::from_transform(&rot.mul(&s.state.hand_pose.to_transform()));
        for (c, pair) in moved.contacts.iter_mut().enumerate() {
            pair.tool_coords.spin += dt * rates[c].tool[0];
            pair.tool_coords.a1 += dt * rates[c].tool[1];
            pair.tool_coords.a2 += dt * rates[c].tool[2];
            pair.finger_coords[0] += dt * rates[c].finger[0];
            pair.finger_coords[1] += dt * rates[c].finger[1];
            if let Some(slot) = moving.iter().position(|&m| m == c) {
                let u = pair.finger_joints.to_array();
                pair.finger_joints = fphand::model::FingerJoints::new(
                    u[0] + dt * rates_in[slot][0],
                    u[1] + dt * rates_in[slot][1],
                    u[2] + dt * rates_in[slot][2],
                );
            }
        }
        let r = reach_fp_residual(&ctx.tmpl, &seed.design, spec, &ctx.tool, &moved).unwrap();
        residual_mm_norm(&r, &ctx.tool)
    };
    let g1 = gap_at(1e-2);
    let g2 = gap_at(1e-3);
    let slope = (g1 / g2).log10();
    assert!(slope > 1.9, "Euler drift slope {slope:.2} (g1 {g1:.2e}, g2 {g2:.2e})");
}
