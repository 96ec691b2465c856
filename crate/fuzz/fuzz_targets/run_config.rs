#![no_main]

use libfuzzer_sys::fuzz_target;
use vafem::run::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(config) = RunConfig::from_json(text) else { return };
    let json = config.to_json();
    let back = RunConfig::from_json(&json).expect("serialized config reparses");
    assert_eq!(back.to_json(), json);
    if config.validate().is_ok() && config.initial_n <= 64 {
        let _ = config.initial_mesh();
    }
});
