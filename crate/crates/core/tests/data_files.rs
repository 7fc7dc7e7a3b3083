use std::path::Path;

use temporal_augmenter::data::{load_csv_signals, CsvSchema};

#[test]
fn bundled_ionosphere_file() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ionosphere.data");
    let ds = load_csv_signals(&path, &CsvSchema::Ionosphere).unwrap();
    assert_eq!(ds.features().shape(), &[351, 17, 2]);
    assert_eq!(ds.class_names(), &["b".to_string(), "g".to_string()]);
    assert_eq!(ds.class_counts(), vec![126, 225]);
    assert!(ds
        .features()
        .data()
        .iter()
        .all(|v| (-1.0..=1.0).contains(v)));
}
