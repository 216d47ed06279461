#![no_main]

use dyson_core::lcu::Psi0Spec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let Ok(spec) = Psi0Spec::parse(text) else {
        return;
    };
    assert_eq!(Psi0Spec::parse(&spec.to_string()).expect("display parses"), spec);
    if let Ok(v) = spec.build(16) {
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }
});
