#![no_main]

use dyson_core::clockprep::{compress_decode, compress_encode, gaps_to_times, parse_bitstring};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: (&str, u8)| {
    let (text, k) = data;
    let Ok(bits) = parse_bitstring(text) else {
        return;
    };
    let k = k as usize;
    let Ok(g) = compress_encode(&bits, k) else {
        return;
    };
    assert_eq!(compress_decode(&g).expect("decodes"), bits);
    let (weight, times) = gaps_to_times(&g, k, bits.len()).expect("consistent shape");
    assert_eq!(weight, times.len());
    assert!(times.windows(2).all(|w| w[0] < w[1]));
});
