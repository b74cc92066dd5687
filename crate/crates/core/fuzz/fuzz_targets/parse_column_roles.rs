#![no_main]
use libfuzzer_sys::fuzz_target;
use nngpiu::bench::ColumnRoles;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(roles) = ColumnRoles::parse(text) {
        assert!(!roles.inputs.is_empty() && !roles.outputs.is_empty());
        for d in &roles.deformation {
            assert!(roles.outputs.contains(&d.dy) && roles.outputs.contains(&d.dz));
        }
    }
});
