#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(q) = text.parse::<gacredit::Quarter>() {
        assert_eq!(q.to_string().parse::<gacredit::Quarter>().unwrap(), q);
    }
    let _ = text.parse::<gacredit::panel::Month>();
    let _ = text.parse::<gacredit::analysis::CrisisWindow>();
    let _ = text.parse::<gacredit::panel::GrowthKind>();
    let _ = text.parse::<gacredit::FeatureMap>();
});
