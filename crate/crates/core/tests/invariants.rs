use std::sync::OnceLock;

use fracbubble::bubble::{nonlinear_term, AnsatzConfig, MeshOptions, ReductionSystem, WeightedNorm};
use fracbubble::constants::{resolve_constants, Bubble};
use fracbubble::energy::{Objective, ReducedEnergy};
use fracbubble::green::{BallRestricted, GreenSource, IntervalSpectral};
use fracbubble::kernel::KernelK;
use fracbubble::spline::CubicSpline;
use fracbubble::{ConstantSet, Criticality, DomainSpec, FracParams};
use proptest::prelude::*;

fn desk() -> &'static ConstantSet {
    static C: OnceLock<ConstantSet> = OnceLock::new();
    C.get_or_init(|| resolve_constants(&FracParams::critical(1, 0.3).unwrap(), 1e-10).unwrap())
}

fn system() -> &'static ReductionSystem {
    static S: OnceLock<ReductionSystem> = OnceLock::new();
    S.get_or_init(|| {
        let cfg = AnsatzConfig::new(
            FracParams::new(1, 0.3, Criticality::Subcritical, 0.04).unwrap(),
            DomainSpec::Interval { a: -1.0, b: 1.0 },
            vec![vec![0.1]],
            vec![1.2],
        )
        .unwrap();
        ReductionSystem::for_ansatz(&cfg, desk(), &MeshOptions::default().with_nodes(400), 0.8).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaled_rate_round_trips(big_lambda in 0.05f64..20.0) {
        let c = desk();
        let back = c.rate_from_scaled(c.scaled_rate(big_lambda));
        prop_assert!((back / big_lambda - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bubble_peaks_at_its_center(lambda in 0.01f64..10.0, xi in -5.0f64..5.0, x in -50.0f64..50.0) {
        let b = Bubble::<1>::new(desk(), lambda, [xi]);
        let v = b.value(&[x]);
        prop_assert!(v > 0.0 && v <= b.value(&[xi]) * (1.0 + 1e-14));
        // w = b λ^{-q/2} at the center
        prop_assert!((b.value(&[xi]) / (desk().b * lambda.powf(-0.5 * desk().decay())) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ball_green_function_is_symmetric_and_below_the_fundamental(x in -0.95f64..0.95, y in -0.95f64..0.95) {
        prop_assume!((x - y).abs() > 1e-3);
        let ball = BallRestricted::new(desk(), vec![0.0], 1.0);
        let (gxy, gyx) = (ball.green(&[x], &[y]), ball.green(&[y], &[x]));
        prop_assert!((gxy - gyx).abs() <= 1e-10 * gxy.abs().max(1.0));
        prop_assert!(gxy > 0.0 && ball.regular(&[x], &[y]) > 0.0);
    }

    #[test]
    fn spectral_interval_regular_part_is_symmetric(x in 0.02f64..0.98, y in 0.02f64..0.98) {
        let src = IntervalSpectral::new(desk(), 0.0, 1.0).unwrap();
        let (a, b) = (src.regular(&[x], &[y]), src.regular(&[y], &[x]));
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn kernel_is_positive_and_increasing_in_r(r in 1e-3f64..50.0, t in 1e-3f64..50.0) {
        let k = KernelK::new(1, 0.3);
        let (v, kr, kt) = k.partials(r, t);
        prop_assert!(v > 0.0 && kr > 0.0 && kt < 0.0);
    }

    #[test]
    fn reduced_energy_is_symmetric_under_relabeling(
        x1 in -0.8f64..0.8, x2 in -0.8f64..0.8, l1 in 0.3f64..3.0, l2 in 0.3f64..3.0,
    ) {
        prop_assume!((x1 - x2).abs() > 0.05);
        let ball = BallRestricted::new(desk(), vec![0.0], 1.0);
        let e = ReducedEnergy::new(&ball, 2, Criticality::Supercritical);
        let (a, _) = e.evaluate(&[x1, x2, l1, l2]).unwrap();
        let (b, _) = e.evaluate(&[x2, x1, l2, l1]).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn weighted_norm_is_homogeneous(scale in -100.0f64..100.0, alpha in 0.61f64..1.19) {
        let wn = WeightedNorm::new(alpha, vec![0.0, 3.0]).unwrap();
        let nodes: Vec<f64> = (0..50).map(|k| -10.0 + 0.4 * k as f64).collect();
        let h: Vec<f64> = nodes.iter().map(|x| (0.7 * x).sin()).collect();
        let scaled: Vec<f64> = h.iter().map(|v| scale * v).collect();
        prop_assert!((wn.norm(&nodes, &scaled) - scale.abs() * wn.norm(&nodes, &h)).abs() < 1e-12 * wn.norm(&nodes, &h).max(1.0) * scale.abs().max(1.0));
    }

    #[test]
    fn nonlinear_term_vanishes_to_second_order(v in 0.1f64..3.0, f in -0.5f64..0.5, p in 3.5f64..4.5) {
        let n = nonlinear_term(p, &[v], &[f])[0];
        prop_assert!(n.abs() <= p * (p - 1.0) * (v + f.abs()).powf(p - 2.0) * f * f);
    }

    #[test]
    fn spline_reproduces_cubic_free_data(a in -3.0f64..3.0, b in -3.0f64..3.0, t in 0.0f64..1.0) {
        let x: Vec<f64> = (0..9).map(|k| (k as f64 / 8.0).powf(1.3)).collect();
        let sp = CubicSpline::new(x.clone(), x.iter().map(|v| a * v + b).collect()).unwrap();
        prop_assert!((sp.eval(t) - (a * t + b)).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn projected_solver_is_linear(c1 in -10.0f64..10.0, c2 in -10.0f64..10.0, k in 1.0f64..6.0) {
        let sys = system();
        let nodes = sys.nodes();
        let l = sys.bubbles[0].lambda;
        let f: Vec<f64> = nodes.iter().map(|&x| sys.norm.weight(x) * (k * x / (l * 30.0)).sin()).collect();
        let g: Vec<f64> = nodes.iter().map(|&x| sys.norm.weight(x) * (1.0 / (1.0 + (x / l).powi(2)))).collect();
        let mix: Vec<f64> = f.iter().zip(&g).map(|(a, b)| c1 * a + c2 * b).collect();
        let (sf, sg, sm) = (
            sys.solve_projected_linear(&f).unwrap(),
            sys.solve_projected_linear(&g).unwrap(),
            sys.solve_projected_linear(&mix).unwrap(),
        );
        let scale = sm.sup_phi().max(c1.abs() * sf.sup_phi()).max(c2.abs() * sg.sup_phi()).max(1e-300);
        for i in 0..nodes.len() {
            prop_assert!((sm.phi[i] - c1 * sf.phi[i] - c2 * sg.phi[i]).abs() <= 1e-10 * scale);
        }
        prop_assert!(sm.orthogonality < 1e-9);
    }
}
