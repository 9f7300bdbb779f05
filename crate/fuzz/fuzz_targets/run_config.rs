#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = gacredit::config::RunConfig::parse(text) {
        let echoed = c.to_text();
        let back = gacredit::config::RunConfig::parse(&echoed).expect("echo parses");
        assert_eq!(back.to_text(), echoed);
    }
});
