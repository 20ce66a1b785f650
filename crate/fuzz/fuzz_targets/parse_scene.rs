#![no_main]

use hot_mpm::harness::parse_scene;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = parse_scene(text) {
        // accepted scenes survive a round trip through their JSON form
        let again = parse_scene(&config.to_json()).expect("serialized scene parses");
        assert_eq!(again, config);
    }
});
