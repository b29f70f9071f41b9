use proptest::prelude::*;

use cityframe_core::synth::{generate_city, SceneSpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_meshes_are_valid(seed in 0u64..100_000, n in 0usize..12, side in 60.0..300.0f64, cell in 2.0..20.0f64, rotated in 0.0..1.0f64) {
        let spec = SceneSpec { area: side * side, terrain_cell: cell, rotated_fraction: rotated, ..SceneSpec::new(seed, n) };
        match generate_city(&spec) {
            Ok(city) => {
                prop_assert!(city.mesh.validate().is_ok());
                prop_assert_eq!(city.segment_labels.len(), city.mesh.polygons.len());
            }
            // too many buildings for the plot grid is reported, never a bad mesh
            Err(e) => prop_assert!(e.to_string().contains("do not fit"), "{e}"),
        }
    }
}
