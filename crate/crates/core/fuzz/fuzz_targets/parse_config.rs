#![no_main]
use libfuzzer_sys::fuzz_target;
use nngpiu::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(text) {
        // anything accepted must survive the manifest round trip
        let json = serde_json::to_string(&cfg).expect("valid config serializes");
        let back: RunConfig = serde_json::from_str(&json).expect("serialized config reloads");
        assert_eq!(back, cfg);
    }
});
