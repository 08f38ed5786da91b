#![no_main]
use libfuzzer_sys::fuzz_target;

use twinbeam::grid::{parse_counts, parse_grid};

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(values) = parse_grid(spec) {
        assert!(values.iter().all(|v| v.is_finite()));
        let text = values
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        assert_eq!(parse_grid(&text).expect("printed grid parses"), values);
    }
    if let Ok(counts) = parse_counts(spec) {
        let text = counts
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(",");
        assert_eq!(parse_counts(&text).expect("printed counts parse"), counts);
    }
});
