#![no_main]
use libfuzzer_sys::fuzz_target;
use nngpiu::zoo::deserialize;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = deserialize(text) {
        // errors are fine, panics are not
        let _ = model.predict(&vec![0.5; model.dim()]);
        let _ = model.predict(&[0.5]);
    }
});
