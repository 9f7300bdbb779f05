#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = text.parse::<gacredit::Multivector>() {
        if m.is_finite() {
            assert_eq!(m.to_csv().parse::<gacredit::Multivector>().unwrap(), m);
        }
    }
});
