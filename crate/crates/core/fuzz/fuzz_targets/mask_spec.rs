#![no_main]

use libfuzzer_sys::fuzz_target;
use segloss::harness::{generate_mask, SyntheticMaskSpec};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(spec) = text.parse::<SyntheticMaskSpec>() else {
        return;
    };
    // Keep rasterization cheap.
    if spec.shape.len() > 1 << 16 {
        return;
    }
    let mask = generate_mask(&spec).unwrap();
    assert_eq!(mask.shape(), spec.shape);
    let again: SyntheticMaskSpec = spec.to_string().parse().unwrap();
    assert_eq!(generate_mask(&again).unwrap(), mask);
});
