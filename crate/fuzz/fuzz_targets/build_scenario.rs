//! Fuzzes the full document pipeline: parse plus model construction.
//! Documents that pass the schema still carry untrusted numbers —
//! topology indices, reactances, limits, step sizes — and every one of
//! them must come back as a structured error, never a panic or a hang
//! inside the numerics.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(file) = gnevolt::scenario::parse_scenario_str(text) {
            let _ = file.build();
        }
    }
});
