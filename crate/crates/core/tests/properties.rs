use proptest::prelude::*;

use negrasp::data::wrap_half_turn;
use negrasp::metrics::{coverage_rate, emd};
use negrasp::net::GraspScaling;
use negrasp::sampler::{compose, ddim_timesteps};
use negrasp::schedule::NoiseSchedule;
use negrasp::se3::{exp_map, log_map, pose_distance, GraspPose};

fn pose() -> impl Strategy<Value = GraspPose> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        0.0f64..3.1,
        prop::array::uniform3(-0.5f64..0.5),
        0.0f64..0.2021,
    )
        .prop_filter("axis must be non-degenerate", |(a, _, _, _)| a.iter().map(|v| v * v).sum::<f64>() > 1e-4)
        .prop_map(|(axis, angle, tau, width)| {
            let n = axis.iter().map(|v| v * v).sum::<f64>().sqrt();
            GraspPose::new(axis.map(|v| v / n * angle), tau, width)
        })
}

proptest! {
    #[test]
    fn log_inverts_exp(p in pose()) {
        let back = log_map(&exp_map(&p).unwrap()).unwrap();
        let (a, b) = (p.to_vector(), back.to_vector());
        for i in 0..6 {
            prop_assert!((a[i] - b[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn canonicalize_keeps_the_transform(p in pose(), turns in -2i32..=2) {
        // Adding whole turns to the rotation angle leaves the rotation unchanged.
        let n = p.omega.iter().map(|v| v * v).sum::<f64>().sqrt();
        let k = 1.0 + 2.0 * std::f64::consts::PI * turns as f64 / n;
        let wound = GraspPose { omega: p.omega.map(|v| v * k), ..p };
        let c = wound.canonicalize().unwrap();
        let diff = (exp_map(&c).unwrap().to_matrix() - exp_map(&wound).unwrap().to_matrix()).abs().max();
        prop_assert!(diff < 1e-9);
        prop_assert!(c.omega.iter().map(|v| v * v).sum::<f64>().sqrt() <= std::f64::consts::PI + 1e-12);
    }

    #[test]
    fn pose_distance_is_a_metric(a in pose(), b in pose(), c in pose()) {
        let ab = pose_distance(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - pose_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(pose_distance(&a, &a).unwrap() < 1e-7);
        prop_assert!(pose_distance(&a, &c).unwrap() <= ab + pose_distance(&b, &c).unwrap() + 1e-9);
    }

    #[test]
    fn coverage_grows_with_threshold(det in prop::collection::vec(pose(), 1..6), truth in prop::collection::vec(pose(), 1..6), d in 0.0f64..0.5) {
        let small = coverage_rate(&det, &truth, d).unwrap();
        let large = coverage_rate(&det, &truth, d + 0.1).unwrap();
        prop_assert!((0.0..=1.0).contains(&small));
        prop_assert!(small <= large);
    }

    #[test]
    fn emd_is_symmetric_and_zero_on_itself(a in prop::collection::vec(pose(), 1..5), b in prop::collection::vec(pose(), 1..5)) {
        prop_assert!((emd(&a, &b).unwrap() - emd(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert!(emd(&a, &a).unwrap() < 1e-7);
    }

    #[test]
    fn wrapped_angles_stay_in_half_turn(a in -50.0f64..50.0) {
        let w = wrap_half_turn(a);
        prop_assert!(w > -std::f64::consts::FRAC_PI_2 && w <= std::f64::consts::FRAC_PI_2);
        let k = (a - w) / std::f64::consts::PI;
        prop_assert!((k - k.round()).abs() < 1e-9);
    }

    #[test]
    fn scaling_roundtrips(v in prop::array::uniform7(-5.0f64..5.0), data in prop::collection::vec(prop::array::uniform7(-1.0f64..1.0), 1..20)) {
        let s = GraspScaling::fit(&data);
        let back = s.denormalize(&s.normalize(&v));
        for i in 0..7 {
            prop_assert!((back[i] - v[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn ddim_timesteps_descend_to_one(steps in 1usize..=200) {
        let ts = ddim_timesteps(200, steps).unwrap();
        prop_assert_eq!(ts.len(), steps);
        prop_assert_eq!(ts[0], 200);
        prop_assert!(*ts.last().unwrap() >= 1);
        prop_assert!(ts.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn composition_is_affine(
        n in prop::array::uniform7(-3.0f64..3.0),
        t in prop::array::uniform7(-3.0f64..3.0),
        g in prop::array::uniform7(-3.0f64..3.0),
        w in -5.0f64..5.0,
    ) {
        let e0 = compose(&n, &t, &g, 0.0);
        let e1 = compose(&n, &t, &g, 1.0);
        let ew = compose(&n, &t, &g, w);
        for i in 0..7 {
            prop_assert_eq!(e0[i], n[i]);
            prop_assert!((ew[i] - (e0[i] + w * (e1[i] - e0[i]))).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_bar_decreases(start in 1e-5f64..1e-3, end in 1e-2f64..0.05, steps in 2usize..300) {
        let s = NoiseSchedule::linear(steps, start, end).unwrap();
        prop_assert_eq!(s.alpha_bar(0), 1.0);
        for t in 1..=steps {
            prop_assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            prop_assert!(s.alpha_bar(t) > 0.0);
        }
    }
}
