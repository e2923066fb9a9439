#![no_main]

use libfuzzer_sys::fuzz_target;
use spd_motion::skeleton::PartitionScheme;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = PartitionScheme::from_json(text) {
        let joints = s.parts.iter().flatten().max().map_or(1, |m| m + 1);
        let _ = s.validate(joints);
        assert_eq!(PartitionScheme::from_json(&s.to_json()).expect("written scheme parses"), s);
    }
});
