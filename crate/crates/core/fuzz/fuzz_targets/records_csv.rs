#![no_main]
use libfuzzer_sys::fuzz_target;

use twinbeam::records::{parse_records, records_to_string};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(set) = parse_records(text, "fuzz") {
        // Whatever parses must survive a write/read cycle unchanged.
        let again = parse_records(&records_to_string(&set), "fuzz").expect("writer output parses");
        assert_eq!(again.records(), set.records());
    }
});
