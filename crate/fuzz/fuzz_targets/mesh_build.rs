#![no_main]

use libfuzzer_sys::fuzz_target;
use vafem::meshio::{parse_mesh_text, MeshText};

// any mesh the validator accepts must be conforming and export back
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(parsed) = parse_mesh_text(text) else { return };
    let Ok(mesh) = parsed.to_mesh() else { return };
    mesh.check_conforming().expect("accepted mesh is conforming");
    assert!(mesh.total_area() > 0.0);
    let rebuilt = MeshText::from_mesh(&mesh, parsed.values.as_deref()).to_mesh().expect("exported mesh rebuilds");
    assert_eq!(rebuilt.num_elements(), mesh.num_elements());
});
