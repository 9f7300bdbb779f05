#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((s, _)) = gacredit::panel::parse_csv(data, "X") {
        let _ = gacredit::panel::to_quarterly(&s);
    }
});
