#![no_main]

use libfuzzer_sys::fuzz_target;
use omkit::bench::{BenchRecord, ClipMetadata};
use omkit::jsonl::{parse_jsonl, to_jsonl};
use omkit::metrics::{McqItem, PredictionRow, ReferenceInput};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(records) = parse_jsonl::<BenchRecord>(text) {
        let back: Vec<BenchRecord> = parse_jsonl(&to_jsonl(&records)).unwrap();
        assert_eq!(back, records);
    }
    if let Ok(metas) = parse_jsonl::<ClipMetadata>(text) {
        for m in &metas {
            let _ = m.validate();
        }
    }
    let _ = parse_jsonl::<PredictionRow>(text);
    let _ = parse_jsonl::<ReferenceInput>(text);
    let _ = parse_jsonl::<McqItem>(text);
});
