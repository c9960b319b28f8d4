use ndarray::Array2;
use proptest::prelude::*;
use sgw_core::io::{config_hash, read_matrix, read_records, write_matrix, write_records, Manifest};
use sgw_core::metrics::MetricRecord;

fn bits(m: &Array2<f64>) -> Vec<u64> {
    m.iter().map(|v| v.to_bits()).collect()
}

fn record() -> impl Strategy<Value = MetricRecord> {
    (
        1usize..200,
        0usize..100,
        prop::sample::select(vec!["MNE", "MCE", "sVB-SCCD", "sgw-SBL"]),
        proptest::option::of(0.0f64..10.0),
        proptest::option::of(0.0f64..0.2),
        proptest::option::of(0.0f64..5.0),
        any::<bool>(),
    )
        .prop_map(|(patch_size, scenario, solver, sd_ratio, w1, l2, converged)| MetricRecord {
            patch_size,
            scenario,
            solver: solver.to_string(),
            sd_ratio,
            wasserstein1: w1,
            l2_ratio: l2,
            sd: sd_ratio.map(|v| v * 0.01),
            sd_ref: 0.01,
            t_max: scenario % 7,
            iterations: scenario * 3,
            converged,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matrices_round_trip_bit_identically(
        rows in 0usize..8,
        cols in 0usize..8,
        raw in proptest::collection::vec(any::<u64>(), 64),
    ) {
        let m = Array2::from_shape_fn((rows, cols), |(r, c)| f64::from_bits(raw[r * 8 + c]));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mtx");
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        prop_assert_eq!(back.dim(), m.dim());
        prop_assert_eq!(bits(&back), bits(&m));
    }

    #[test]
    fn records_round_trip(records in proptest::collection::vec(record(), 0..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_records(&path, &records).unwrap();
        prop_assert_eq!(read_records(&path).unwrap(), records);
    }

    #[test]
    fn hash_tracks_content(seed in any::<u64>(), other in any::<u64>()) {
        let a = Manifest::new("sweep", &seed, seed).unwrap();
        prop_assert_eq!(a.config_hash.len(), 64);
        prop_assert_eq!(&a.config_hash, &config_hash(&seed).unwrap());
        if seed != other {
            prop_assert_ne!(config_hash(&seed).unwrap(), config_hash(&other).unwrap());
        }
    }
}

#[test]
fn truncated_matrix_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.mtx");
    write_matrix(&path, &Array2::from_elem((3, 3), 1.5)).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
    assert!(read_matrix(&path).is_err());
    std::fs::write(&path, b"not a matrix at all").unwrap();
    assert!(read_matrix(&path).is_err());
}
