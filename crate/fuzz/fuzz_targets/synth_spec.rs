#![no_main]

use libfuzzer_sys::fuzz_target;
use spd_motion::io::SyntheticSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = SyntheticSpec::from_json(text) {
        spec.validate().expect("parsed specs are valid");
        let again = SyntheticSpec::from_json(&spec.to_json()).expect("written spec parses");
        assert_eq!(again.to_json(), spec.to_json());
    }
});
