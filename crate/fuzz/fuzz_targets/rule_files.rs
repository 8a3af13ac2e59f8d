#![no_main]

use libfuzzer_sys::fuzz_target;
use omkit::bench::{canonicalize_tag, tempo_to_term, PromptTemplate, TagRules, Task, TempoTermTable};
use omkit::mir::KeyProfiles;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rules) = TagRules::from_json(text) {
        for tag in rules.decompound.keys().chain(rules.unify.keys()).chain(rules.expand.keys()).chain([&text.to_string()]) {
            let once = canonicalize_tag(tag, &rules);
            assert_eq!(canonicalize_tag(&once, &rules), once);
        }
    }
    if let Ok(table) = TempoTermTable::from_json(text) {
        for bpm in [0.5, 40.0, 60.0, 90.0, 120.0, 300.0, 1e9] {
            assert!(tempo_to_term(bpm, &table).is_ok());
        }
    }
    let _ = KeyProfiles::from_json(text);
    let _ = PromptTemplate::parse(Task::Captioning, text);
    let _ = serde_json::from_str::<serde_json::Value>(text);
});
