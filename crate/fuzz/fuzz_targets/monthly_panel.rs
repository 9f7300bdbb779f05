#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = gacredit::MonthlyPanel::parse(text) {
        assert_eq!(gacredit::MonthlyPanel::parse(&p.to_csv()).expect("re-parse"), p);
    }
});
