//! Property tests for the binary containers.

use std::path::Path;

use mstk::tensor_file::{from_bytes, to_bytes};
use mstk_core::ImageTensor;

use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tensor_files_round_trip_bitwise(
        c in 1usize..4,
        h in 1usize..10,
        w in 1usize..10,
        raw in proptest::collection::vec(any::<f64>(), 1..400),
    ) {
        // map arbitrary floats onto finite values, preserving odd bit
        // patterns like subnormals and negative zero
        let data: Vec<f64> = (0..c * h * w)
            .map(|i| {
                let v = raw[i % raw.len()];
                if v.is_finite() { v } else { -0.0 }
            })
            .collect();
        let tensor = ImageTensor::new(c, h, w, data).unwrap();
        let back = from_bytes(&to_bytes(&tensor), Path::new("mem")).unwrap();
        prop_assert_eq!(tensor.shape(), back.shape());
        for (a, b) in tensor.data().iter().zip(back.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncations_never_panic(
        cut in 0usize..60,
        data in proptest::collection::vec(-1.0..1.0f64, 4),
    ) {
        let tensor = ImageTensor::new(1, 2, 2, data).unwrap();
        let bytes = to_bytes(&tensor);
        let cut = cut.min(bytes.len() - 1);
        prop_assert!(from_bytes(&bytes[..cut], Path::new("mem")).is_err());
    }
}
