#![no_main]

use esh_cli::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml(text) {
        if cfg.validate().is_ok() {
            // a valid config must round-trip
            let again = ExperimentConfig::from_toml(&cfg.to_toml()).expect("round trip");
            assert_eq!(again.to_json(), cfg.to_json());
        }
    }
});
