#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(p) = gacredit::artifact::load(text) {
        let saved = gacredit::artifact::save(&p);
        assert_eq!(gacredit::artifact::load(&saved).expect("re-load"), p);
    }
});
