#![no_main]

use std::collections::BTreeMap;

use cnotbench::experiment::ground_fraction;
use cnotbench::sim::{bitstring, parse_bitstring, Counts};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Some(index) = parse_bitstring(text) {
        assert_eq!(parse_bitstring(&bitstring(index, text.len())), Some(index));
    }
    if let Ok(map) = serde_json::from_str::<BTreeMap<String, u64>>(text) {
        if let Ok(counts) = Counts::from_pairs(map.iter().map(|(k, v)| (k.as_str(), *v))) {
            if let Ok(g) = ground_fraction(&counts) {
                assert!((0.0..=1.0).contains(&g));
            }
        }
    }
});
