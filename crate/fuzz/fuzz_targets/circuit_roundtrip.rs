#![no_main]

use cnotbench::circuit::Circuit;
use cnotbench::sim::MAX_SIM_QUBITS;
use cnotbench::transpiler::verify_equivalence;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(circuit) = Circuit::from_json_str(text) else { return };
    let back = Circuit::from_json_str(&circuit.to_json()).expect("serialized circuit reloads");
    assert_eq!(back, circuit);
    if circuit.num_qubits() <= MAX_SIM_QUBITS && circuit.instructions().len() <= 64 {
        if let Ok(dev) = verify_equivalence(&circuit, &back) {
            assert!(dev < 1e-9);
        }
    }
});
