//! Property tests over randomly generated metrics.

use l2flow_core::curvature::{rm_full, PointCurvature};
use l2flow_core::functionals::{jet, zeroth_order_trace};
use l2flow_core::geometry::{all_pairs_distances, DistanceConfig};
use l2flow_core::{CurvatureBundle, MetricField, TorusGrid};
use proptest::prelude::*;

fn metric(n: usize, periods: [f64; 4], eps: f64, seed: u64) -> MetricField {
    let grid = TorusGrid::new(n, periods).unwrap();
    MetricField::band_limited(&grid, eps, 1, seed).unwrap()
}

fn metric_strategy() -> impl Strategy<Value = MetricField> {
    (
        prop_oneof![Just(8usize), Just(9usize)],
        prop::array::uniform4(0.8f64..1.5),
        0.01f64..0.1,
        any::<u64>(),
    )
        .prop_map(|(n, l, eps, seed)| metric(n, l, eps, seed))
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, ..ProptestConfig::default() })]

    #[test]
    fn riemann_symmetries_and_bianchi(m in metric_strategy()) {
        let b = CurvatureBundle::build(&m, 0).unwrap();
        let scale = max_abs(b.riemann.data()).max(1e-300);
        for idx in 0..m.grid().len() {
            let r = rm_full(&b.rm_at(idx));
            for i in 0..4 { for j in 0..4 { for k in 0..4 { for l in 0..4 {
                let v = r[i][j][k][l];
                prop_assert!((v + r[j][i][k][l]).abs() <= 1e-9 * scale);
                prop_assert!((v + r[i][j][l][k]).abs() <= 1e-9 * scale);
                prop_assert!((v - r[k][l][i][j]).abs() <= 1e-9 * scale);
                let bianchi = v + r[j][k][i][l] + r[k][i][j][l];
                prop_assert!(bianchi.abs() <= 1e-9 * scale, "Bianchi {bianchi} at {idx}");
            }}}}
        }
    }

    #[test]
    fn scaling_ladder(m in metric_strategy(), c in prop_oneof![Just(0.5f64), Just(3.7f64), 0.2f64..5.0]) {
        let b = CurvatureBundle::build(&m, 3).unwrap();
        let bc = CurvatureBundle::build(&m.scaled(c).unwrap(), 3).unwrap();
        let close = |a: &[f64], b: &[f64], f: f64| {
            let s = max_abs(a).max(1e-300);
            a.iter().zip(b).all(|(x, y)| (x * f - y).abs() <= 1e-10 * s * f.max(1.0))
        };
        prop_assert!(close(b.scalar.data(), bc.scalar.data(), 1.0 / c));
        prop_assert!(close(b.ricci.data(), bc.ricci.data(), 1.0));
        prop_assert!(close(b.rm_norm_sq.data(), bc.rm_norm_sq.data(), 1.0 / (c * c)));
        for k in 0..=3 {
            prop_assert!(close(&b.fk(k).unwrap(), &bc.fk(k).unwrap(), 1.0 / c), "f_{k}");
        }
    }

    #[test]
    fn zeroth_order_gradient_is_trace_free(m in metric_strategy(), pick in 0usize..4096) {
        let idx = pick % m.grid().len();
        let pc = PointCurvature::from_jet(&jet(&m, idx)).unwrap();
        let rm2 = pc.rm_norm_sq();
        prop_assert!(zeroth_order_trace(&pc).abs() <= 1e-12 * rm2.max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 4, ..ProptestConfig::default() })]

    #[test]
    fn distances_form_a_metric(
        seed in any::<u64>(),
        pts in prop::collection::vec(prop::array::uniform4(0.0f64..1.0), 4),
    ) {
        let m = metric(8, [1.0; 4], 0.05, seed);
        let d = all_pairs_distances(&m, &pts, &DistanceConfig::default());
        for i in 0..pts.len() {
            prop_assert_eq!(d.d[i][i], 0.0);
            for j in 0..pts.len() {
                prop_assert_eq!(d.d[i][j], d.d[j][i]);
                prop_assert!(d.d[i][j] >= 0.0);
            }
        }
        prop_assert!(d.triangle_defect() <= 0.0);
    }
}
