#![no_main]

use libfuzzer_sys::fuzz_target;
use np_corner::fem::parse_mesh;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(mesh) = parse_mesh(text) {
        let again = parse_mesh(&mesh.to_text()).expect("serialized mesh parses");
        assert_eq!(again.tris.len(), mesh.tris.len());
        assert_eq!(again.nodes, mesh.nodes);
    }
});
