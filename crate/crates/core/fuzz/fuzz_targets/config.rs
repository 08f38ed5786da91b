#![no_main]
use libfuzzer_sys::fuzz_target;

use twinbeam::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(mut cfg) = RunConfig::parse(text, "fuzz") {
            let _ = cfg.params();
            let _ = cfg.apply_override("seed=1");
        }
    }
});
