#![no_main]

use libfuzzer_sys::fuzz_target;
use spd_motion::io::{parse_sequence, sequence_string, SequenceReader};

fuzz_target!(|data: &[u8]| {
    // the streaming reader must agree with the whole-file parser
    let streamed: Option<Vec<_>> = SequenceReader::new(data).ok().and_then(|r| r.collect::<Result<Vec<_>, _>>().ok());
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(seq) = parse_sequence(text) {
        assert_eq!(streamed.as_deref(), Some(seq.frames()));
        let again = parse_sequence(&sequence_string(&seq)).expect("written sequence parses");
        assert_eq!(again, seq);
    }
});
