//! Parsing arbitrary TOML, and building models from whatever it accepts, must never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use steering_core::config::parse_config;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_config(text) {
            let _ = cfg.uncertainty_model();
            for case in &cfg.cases {
                let _ = cfg.scenario_for_case(*case);
            }
        }
    }
});
