#![no_main]

use libfuzzer_sys::fuzz_target;
use spd_motion::online::{event_log_string, parse_event_log, segments_from_events, state_samples};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(events) = parse_event_log(text) {
        let _ = segments_from_events(&events);
        let _ = state_samples(&events);
        assert_eq!(parse_event_log(&event_log_string(&events)).expect("written log parses"), events);
    }
});
