#![no_main]

use cnotbench::circuit::Circuit;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = Circuit::from_json_str(text);
    }
});
