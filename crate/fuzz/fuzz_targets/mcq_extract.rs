#![no_main]

use libfuzzer_sys::fuzz_target;
use omkit::metrics::mcq_extract;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let options = ["Soft yet deeply emotional.", "Energetic and uplifting.", "Dark and brooding.", "Calm."]
        .map(String::from);
    let _ = mcq_extract(text, &options);
});
