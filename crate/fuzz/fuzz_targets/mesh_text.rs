#![no_main]

use libfuzzer_sys::fuzz_target;
use vafem::meshio::parse_mesh_text;

// accepted input must survive render and reparse unchanged
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(parsed) = parse_mesh_text(text) else { return };
    let again = parse_mesh_text(&parsed.render()).expect("rendered mesh text reparses");
    assert_eq!(parsed, again);
});
