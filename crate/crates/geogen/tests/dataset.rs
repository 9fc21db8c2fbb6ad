use resgen_geogen::{generate_dataset, Case, Dataset, DatasetParams, Grid};

#[test]
fn dataset_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for case in [Case::Categorical, Case::Continuous] {
        let d = generate_dataset(case, Grid::square(16), 12, 9, &DatasetParams::default()).unwrap();
        let path = dir.path().join("d.bin");
        d.write(&path).unwrap();
        let back = Dataset::read(&path).unwrap();
        assert_eq!(back, d);
        assert!(d.header.labels.iter().all(|&l| l < d.header.num_classes));
        for k in 0..d.len() {
            assert!(d.normalized(k).iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn generation_is_deterministic() {
    let p = DatasetParams::default();
    let a = generate_dataset(Case::Continuous, Grid::square(16), 5, 3, &p).unwrap();
    let b = generate_dataset(Case::Continuous, Grid::square(16), 5, 3, &p).unwrap();
    assert_eq!(a, b);
}

#[test]
fn categorical_fields_take_three_normalized_levels() {
    let d = generate_dataset(Case::Categorical, Grid::square(16), 4, 1, &DatasetParams::default()).unwrap();
    let levels = d.facies_levels().unwrap();
    for k in 0..d.len() {
        for v in d.normalized(k) {
            assert!(levels.iter().any(|&l| (l - v as f64).abs() < 1e-6));
        }
    }
}

#[test]
fn garbage_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.bin");
    std::fs::write(&path, b"not a dataset").unwrap();
    assert!(Dataset::read(&path).is_err());
}
