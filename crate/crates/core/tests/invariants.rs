//! Property tests for the invariants of the grid, profile, solver and
//! analysis layers.

use proptest::prelude::*;

use thinfb::analysis::{project_cone, project_linear, weiss_rescaling_check};
use thinfb::coefficients::{check_condition_n, generate_field, CoefficientField};
use thinfb::norms::{dirichlet_energy, norm_l2, norm_l2_tilde, NormConvention, Region};
use thinfb::profiles::{ConeProfile, Profile};
use thinfb::quadrature::BallQuadrature;
use thinfb::solver::{assemble, solve_psor, Obstacle, PsorConfig};
use thinfb::{snapshot, Grid, GridField, Parallelism};

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cfg(24))]

    #[test]
    fn ball_quadrature_is_exact_for_quadratics(
        n in 1usize..=2,
        c in prop::array::uniform3(-0.3f64..0.3),
        r in 0.25f64..0.5,
        k in prop::array::uniform3(-1.0f64..1.0),
        q in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let h = r / 16.0;
        let mut x0 = c;
        x0[n + 1..].fill(0.0);
        let quad = BallQuadrature::new(n, x0, r, h);
        let d = n + 1;
        let [v] = quad.integrate_interior(Parallelism::Sequential, |p| {
            let mut s = 1.0;
            for i in 0..d {
                let y = p[i] - x0[i];
                s += k[i] * y + q[i] * y * y;
            }
            [s]
        });
        let m = quad.ball_measure();
        let exact = m * (1.0 + q[..d].iter().sum::<f64>() * r * r / (d as f64 + 2.0));
        prop_assert!((v - exact).abs() <= 1e-6 * exact.abs().max(m));
    }

    #[test]
    fn norms_are_reflection_equivariant(
        a in prop::array::uniform3(-1.0f64..1.0),
        cx in -0.3f64..0.3,
        cy in -0.3f64..0.3,
        r in 0.2f64..0.5,
    ) {
        let g = Grid::new(1, 1.0 / 64.0).unwrap();
        let f = GridField::from_fn(g, |p| a[0] * p[0] + a[1] * p[1] * p[1] + a[2] * p[1] * (1.0 + p[0]));
        let mirrored = f.reflect();
        for region in [Region::ball([cx, cy, 0.0], r), Region::sphere([cx, cy, 0.0], r)] {
            let other = match region {
                Region::Ball { .. } => Region::ball([cx, -cy, 0.0], r),
                Region::Sphere { .. } => Region::sphere([cx, -cy, 0.0], r),
            };
            let (n1, n2) = (norm_l2_tilde(&f, region).unwrap(), norm_l2_tilde(&mirrored, other).unwrap());
            prop_assert!((n1 - n2).abs() <= 1e-9 * (1.0 + n1));
        }
        let (e1, e2) = (
            dirichlet_energy(&f, Region::ball([cx, cy, 0.0], r)).unwrap(),
            dirichlet_energy(&mirrored, Region::ball([cx, -cy, 0.0], r)).unwrap(),
        );
        prop_assert!((e1 - e2).abs() <= 1e-9 * (1.0 + e1));
    }

    #[test]
    fn cone_is_exactly_three_halves_homogeneous(
        psi in 0.0f64..std::f64::consts::TAU,
        x in prop::array::uniform3(-1.0f64..1.0),
        lambda in 0.01f64..4.0,
    ) {
        let p = Profile::Cone(ConeProfile::from_angle(1.3, psi));
        let v = p.evaluate(&x).unwrap();
        let scaled: Vec<f64> = x.iter().map(|t| lambda * t).collect();
        let vs = p.evaluate(&scaled).unwrap();
        prop_assert!((vs - lambda.powf(1.5) * v).abs() <= 1e-12 * (1.0 + vs.abs()));
    }

    #[test]
    fn sphere_norm_scales_with_homogeneity(k in 0usize..6) {
        let g = Grid::new(1, 1.0 / 256.0).unwrap();
        let f = Profile::h32(1).sample(&g);
        let unit = norm_l2(&f, Region::sphere([0.0; 3], 1.0), NormConvention::Mean).unwrap();
        let r = 8.0 * g.h() * 2f64.powf(k as f64 * 0.9);
        let v = norm_l2(&f, Region::sphere([0.0; 3], r), NormConvention::Mean).unwrap();
        prop_assert!((v / (r.powf(1.5) * unit) - 1.0).abs() <= 0.01);
    }

    #[test]
    fn linear_projection_is_idempotent(a in -3.0f64..3.0, x1 in -0.4f64..0.4, r in 0.125f64..0.5) {
        let g = Grid::new(1, 1.0 / 64.0).unwrap();
        let w = Profile::linear(a).sample(&g);
        let got = project_linear(&w, &[x1, 0.0, 0.0], r).unwrap().a0;
        prop_assert!((got - a).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn snapshot_round_trip_is_bitwise(n in 1usize..=2, seed in 0u64..1000) {
        let g = Grid::new(n, 1.0 / 8.0).unwrap();
        let f = GridField::from_fn(g, |p| ((seed as f64 + 1.0) * (p[0] + 2.0 * p[1] - p[2])).sin() / 3.0);
        let bytes = snapshot::encode(&f);
        let back = snapshot::decode(g, &bytes).unwrap();
        prop_assert!(back.iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

proptest! {
    #![proptest_config(cfg(8))]

    #[test]
    fn generated_fields_pass_condition_n(seed in 0u64..10_000, alpha in 0.2f64..0.9, delta0 in 0.0f64..0.2) {
        let g = Grid::new(1, 1.0 / 16.0).unwrap();
        let c = generate_field(alpha, delta0, seed, &g).unwrap();
        prop_assert!(check_condition_n(&c).pass);
    }

    #[test]
    fn psor_solutions_are_complementary_with_monotone_energy(
        c in 0.0f64..2.0,
        a in -1.0f64..1.0,
        b in -0.3f64..0.3,
        q in -0.5f64..0.5,
    ) {
        let g = Grid::new(1, 1.0 / 32.0).unwrap();
        let data = GridField::from_fn(g, |p| {
            c * ConeProfile::unit_value(&[1.0], p) + a * p[1].abs() + b + q * (p[0] * p[0] - p[1] * p[1])
        });
        let p = assemble(&g, &CoefficientField::identity(g), &data, Obstacle::Zero).unwrap();
        let s = solve_psor(&p, &PsorConfig::default()).unwrap();
        let scale = 1.0 + s.w.max_abs();
        prop_assert!(s.complementarity_defect() <= 1e-6 * scale / g.h());
        let interior_plane = (0..g.plane_len()).map(|k| g.plane_node(k)).filter(|&i| !g.is_boundary_node(i));
        prop_assert!(interior_plane.map(|i| s.w.values()[i]).all(|v| v >= -1e-12));
        let e = &s.stats.energy_history;
        prop_assert!(e.windows(2).all(|p| p[1] <= p[0] + 1e-12 * p[0].abs().max(1.0)));
    }

    #[test]
    fn cone_projection_cross_term_is_nonpositive(
        c in 0.2f64..2.0,
        psi in 0.0f64..std::f64::consts::TAU,
        noise in -0.2f64..0.2,
    ) {
        let g = Grid::new(2, 1.0 / 16.0).unwrap();
        let cone = ConeProfile::from_angle(c, psi);
        let w = GridField::from_fn(g, |p| c * ConeProfile::unit_value(&cone.xi, p) + noise * p[0] * p[1]);
        let pr = project_cone(&w, &[0.0; 3], 0.5).unwrap();
        if pr.profile.c > 0.0 {
            prop_assert!(pr.cross_term <= 1e-6);
        }
    }

    #[test]
    fn weiss_rescaling_identity_holds_off_center(x1 in -0.25f64..0.25, k in 16usize..48) {
        let g = Grid::new(1, 1.0 / 128.0).unwrap();
        let w = Profile::h32(1).sample(&g);
        let r = k as f64 * g.h();
        let check = weiss_rescaling_check(&w, &[x1, 0.0, 0.0], r).unwrap();
        prop_assert!(check.defect <= 1e-3 * (1.0 + check.original.abs()));
    }
}
