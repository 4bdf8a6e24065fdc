//! Arbitrary text must parse as a states file or return an error.

#![no_main]

use libfuzzer_sys::fuzz_target;
use steering_core::report::parse_states_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_states_csv(text);
    }
});
