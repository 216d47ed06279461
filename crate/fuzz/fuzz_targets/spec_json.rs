#![no_main]

use dyson_core::hammodel::{HamiltonianSpec, SparseHamiltonian};
use dyson_core::onesparse::decompose;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let Ok(spec) = HamiltonianSpec::from_json_str(text) else {
        return;
    };
    // Accepted specs must round-trip and load.
    let again = HamiltonianSpec::from_json_str(&spec.to_json_string()).expect("round trip");
    assert_eq!(again, spec);
    if spec.n > 4 {
        return;
    }
    let ham = SparseHamiltonian::new(spec).expect("validated spec loads");
    let t = ham.t0();
    let _ = ham.dense(t);
    let _ = decompose(&ham, 0.25);
});
