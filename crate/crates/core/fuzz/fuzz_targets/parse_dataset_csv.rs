#![no_main]
use libfuzzer_sys::fuzz_target;
use nngpiu::bench::read_table;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = read_table(data) {
        for row in &table.rows {
            assert_eq!(row.len(), table.headers.len());
            assert!(row.iter().all(|v| v.is_finite()));
        }
        let again = read_table(table.to_csv().as_bytes()).expect("written table rereads");
        assert_eq!(again.headers, table.headers);
    }
});
