#![no_main]

use libfuzzer_sys::fuzz_target;
use omkit::toolcall::{parse_calls, parse_calls_with_diagnostics, score_tool_use};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let out = parse_calls_with_diagnostics(text);
    // Rendered calls parse back to themselves.
    for (call, _) in &out.calls {
        let rendered = call.render();
        assert_eq!(parse_calls(&rendered), vec![call.clone()], "{rendered}");
    }
    if !out.calls.is_empty() {
        assert!(score_tool_use(text, text).unwrap().is_hit());
    }
});
