#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // first blank line splits panel from moments
    let (panel, moments) = match text.split_once("\n\n") {
        Some((p, m)) => (p, Some(m)),
        None => (text, None),
    };
    if let Ok(p) = gacredit::QuarterlyPanel::parse(panel, moments) {
        let again = gacredit::QuarterlyPanel::parse(&p.to_csv(), Some(&p.moments_csv())).expect("re-parse");
        assert_eq!(again, p);
    }
});
