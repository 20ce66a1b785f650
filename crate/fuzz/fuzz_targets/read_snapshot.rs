#![no_main]

use hot_mpm::harness::read_snapshot;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(snapshot) = read_snapshot(data) {
        assert_eq!(snapshot.to_bytes(), data);
    }
});
