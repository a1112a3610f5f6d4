//! Fuzzes the scenario-document parser: arbitrary bytes must either
//! parse or produce a schema error — never panic, hang, or crash.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = gnevolt::scenario::parse_scenario_str(text);
    }
});
