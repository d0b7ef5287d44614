#![no_main]

use libfuzzer_sys::fuzz_target;
use segloss::formats::{parse_distance_map, parse_grid, parse_probability_map, serialize_grid};

fuzz_target!(|data: &[u8]| {
    let Ok(grid) = parse_grid(data) else {
        return;
    };
    assert!(grid.values().iter().all(|v| v.is_finite()));
    assert_eq!(parse_grid(serialize_grid(&grid).as_bytes()).unwrap(), grid);

    let in_unit = grid.values().iter().all(|v| (0.0..=1.0).contains(v));
    assert_eq!(parse_probability_map(data).is_ok(), in_unit);
    let non_negative = grid.values().iter().all(|&v| v >= 0.0);
    assert_eq!(parse_distance_map(data).is_ok(), non_negative);
});
