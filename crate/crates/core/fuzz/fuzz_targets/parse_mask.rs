#![no_main]

use libfuzzer_sys::fuzz_target;
use segloss::formats::{parse_mask, serialize_mask};

fuzz_target!(|data: &[u8]| {
    if let Ok(mask) = parse_mask(data) {
        let text = serialize_mask(&mask);
        assert_eq!(parse_mask(text.as_bytes()).unwrap(), mask);
    }
});
