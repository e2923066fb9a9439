#![no_main]

use libfuzzer_sys::fuzz_target;
use spd_motion::io::AnnotationFile;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(a) = AnnotationFile::from_json(text) {
        let labels = a.frame_labels().expect("validated annotations label every frame");
        assert_eq!(labels.len(), a.total_frames);
        assert_eq!(AnnotationFile::from_json(&a.to_json()).expect("written annotations parse"), a);
    }
});
