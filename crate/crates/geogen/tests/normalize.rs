use proptest::prelude::*;
use resgen_geogen::{facies_logperm, FieldKind, Grid, Normalization, Realization};

#[test]
fn bounds_map_to_unit_interval_ends() {
    let n = Normalization::new(2.0, 6.0).unwrap();
    assert_eq!(n.forward(2.0), -1.0);
    assert_eq!(n.forward(6.0), 1.0);
    assert!(Normalization::new(3.0, 1.0).is_err());
}

#[test]
fn constant_range_maps_to_zero() {
    let n = Normalization::new(4.0, 4.0).unwrap();
    assert_eq!(n.forward(4.0), 0.0);
}

#[test]
fn facies_levels_stay_distinct_and_ordered() {
    let n = Normalization::new(facies_logperm(0), facies_logperm(2)).unwrap();
    let levels = [0, 1, 2].map(|c| n.forward(facies_logperm(c)));
    assert_eq!(levels[0], -1.0);
    assert!(levels[0] < levels[1] && levels[1] < levels[2]);
    assert!((levels[2] - 1.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn round_trip_is_exact_to_1e6(values in prop::collection::vec(-20.0f64..20.0, 64)) {
        let r = Realization { grid: Grid::square(8), values: values.clone(), kind: FieldKind::ContinuousLogperm };
        let n = Normalization::fit([values.as_slice()]).unwrap();
        let back = n.denormalize(&n.normalize(&r));
        for (a, b) in back.values.iter().zip(&values) {
            prop_assert!((a - b).abs() < 1e-6);
        }
        let u = n.normalize(&r);
        prop_assert!(u.values.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn order_is_preserved(a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let n = Normalization::new(-10.0, 10.0).unwrap();
        prop_assert_eq!(a < b, n.forward(a) < n.forward(b));
    }
}
