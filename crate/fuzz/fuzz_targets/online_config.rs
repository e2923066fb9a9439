#![no_main]

use libfuzzer_sys::fuzz_target;
use spd_motion::online::OnlineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = OnlineConfig::from_json(text) {
        let _ = (cfg.offset(), cfg.deadline_frames(), cfg.min_segment_frames(), cfg.budget_seconds());
        assert_eq!(OnlineConfig::from_json(&cfg.to_json()).expect("written config parses"), cfg);
    }
});
