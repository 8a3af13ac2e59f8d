use rand::seq::IndexedRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{make_record, BenchError, BenchRecord, Result};

pub const TOOL_USE_DATASET: &str = "tool_use";

const TEMPO_QUESTIONS: &[&str] = &[
    "How fast is this track in beats per minute?",
    "What tempo is this music played at?",
    "Can you tell me the BPM of this song?",
    "Estimate the tempo of this recording.",
];
const KEY_QUESTIONS: &[&str] = &[
    "What key is this piece in?",
    "Which key is this song written in?",
    "Identify the musical key of this recording.",
    "Tell me the tonal center and mode of this track.",
];
const DOWNBEAT_QUESTIONS: &[&str] = &[
    "Where do the downbeats fall in this clip?",
    "At which times does each bar start?",
    "List the downbeat positions of this music.",
    "When are the first beats of each measure?",
];
const CHORD_QUESTIONS: &[&str] = &[
    "Which chords are played from {a} to {b} seconds?",
    "What is the chord progression between {a} sec and {b} sec?",
    "Name the chords you hear between second {a} and second {b}.",
    "Transcribe the harmony from {a} s to {b} s.",
];

fn question_and_answer(tool: &str, rng: &mut ChaCha8Rng) -> Result<(String, String)> {
    let pick = |pool: &[&str], rng: &mut ChaCha8Rng| pool.choose(rng).copied().unwrap_or_default().to_string();
    Ok(match tool {
        "EstimateTempo" => (
            pick(TEMPO_QUESTIONS, rng),
            "The music has tempo [EstimateTempo()] beats per minute.".to_string(),
        ),
        "GetKey" => (pick(KEY_QUESTIONS, rng), "The music is in the key of [GetKey()].".to_string()),
        "GetDownbeats" => (
            pick(DOWNBEAT_QUESTIONS, rng),
            "The downbeats are at [GetDownbeats()] seconds.".to_string(),
        ),
        "GetMusicChords" => {
            let a: u32 = rng.random_range(0..=20);
            let span = if a + 10 <= 30 && rng.random_bool(0.5) { 10 } else { 5 };
            let b = a + span;
            let q = pick(CHORD_QUESTIONS, rng).replace("{a}", &a.to_string()).replace("{b}", &b.to_string());
            (q, format!("Here are the chords between {a} sec and {b} sec: [GetMusicChords({a}, {b})]."))
        }
        other => return Err(BenchError::UnknownTool(other.to_string())),
    })
}

/// `n` question/answer records, each answer carrying one canonical tool
/// call. Tools rotate through `registry_names` in order; phrasing and time
/// ranges come from `seed`.
pub fn build_tool_use_dataset<S: AsRef<str>>(n: usize, seed: u64, registry_names: &[S]) -> Result<Vec<BenchRecord>> {
    if n == 0 {
        return Err(BenchError::EmptyField("n"));
    }
    if registry_names.is_empty() {
        return Err(BenchError::EmptyField("registry_names"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for name in registry_names {
        question_and_answer(name.as_ref(), &mut ChaCha8Rng::seed_from_u64(0))?;
    }
    (0..n)
        .map(|i| {
            let tool = registry_names[i % registry_names.len()].as_ref();
            let (q, a) = question_and_answer(tool, &mut rng)?;
            make_record(&q, &a, &format!("{TOOL_USE_DATASET}/clip_{i:05}.wav"), "tool_use", TOOL_USE_DATASET)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolcall::{parse_calls, ToolRegistry};

    const ALL: [&str; 4] = ["EstimateTempo", "GetMusicChords", "GetKey", "GetDownbeats"];

    #[test]
    fn one_call_per_record() {
        let recs = build_tool_use_dataset(40, 3, &ALL).unwrap();
        assert_eq!(recs.len(), 40);
        let reg = ToolRegistry::with_defaults();
        for r in &recs {
            let calls = parse_calls(&r.output);
            assert_eq!(calls.len(), 1, "{}", r.output);
            let spec = reg.get(calls[0].name()).unwrap();
            assert_eq!(spec.arity, calls[0].args().len());
            if let [a, b] = calls[0].args() {
                assert!(*a >= 0.0 && a < b && *b <= 30.0);
                assert!(r.output.contains(&format!("between {a} sec and {b} sec")));
            }
        }
        assert_eq!(recs[0].output, "The music has tempo [EstimateTempo()] beats per minute.");
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = build_tool_use_dataset(20, 7, &ALL).unwrap();
        assert_eq!(a, build_tool_use_dataset(20, 7, &ALL).unwrap());
        assert_ne!(a, build_tool_use_dataset(20, 8, &ALL).unwrap());
    }

    #[test]
    fn rejects_unknown_and_empty() {
        assert!(matches!(
            build_tool_use_dataset(3, 0, &["GetKey", "Transcribe"]),
            Err(BenchError::UnknownTool(n)) if n == "Transcribe"
        ));
        assert!(build_tool_use_dataset::<&str>(3, 0, &[]).is_err());
        assert!(build_tool_use_dataset(0, 0, &ALL).is_err());
    }

    #[test]
    fn records_validate() {
        for r in build_tool_use_dataset(8, 1, &ALL).unwrap() {
            let json = serde_json::to_string(&r).unwrap();
            let back: BenchRecord = serde_json::from_str(&json).unwrap();
            assert_eq!(back, r);
        }
    }
}
