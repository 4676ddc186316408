#![no_main]

use cnotbench::noise::NoiseModel;
use cnotbench::transpiler::CouplingMap;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(model) = NoiseModel::from_json_str(text) {
            let _ = CouplingMap::from_noise_model(&model);
            let back = NoiseModel::from_json_str(&model.to_json()).expect("serialized model reloads");
            assert_eq!(back, model);
        }
    }
});
