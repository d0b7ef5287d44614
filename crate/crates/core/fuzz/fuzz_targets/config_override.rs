#![no_main]

use libfuzzer_sys::fuzz_target;
use segloss::LossConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let mut cfg = LossConfig::default();
    for pair in text.split('\n') {
        if cfg.apply_override(pair).is_err() {
            return;
        }
    }
    let _ = cfg.validate();
});
