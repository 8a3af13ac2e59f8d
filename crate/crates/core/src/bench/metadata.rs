use serde::{Deserialize, Serialize};

use super::{BenchError, Result};

/// Raw per-clip tags as delivered by a source dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipMetadata {
    pub dataset_name: String,
    pub audio_filename: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tempo_bpm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub danceability: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub genres: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub moods: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub instruments: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub others: Vec<String>,
}

impl ClipMetadata {
    pub fn validate(&self) -> Result<()> {
        if let Some(bpm) = self.tempo_bpm {
            if !(bpm > 0.0 && bpm.is_finite()) {
                return Err(BenchError::BadTempo(bpm));
            }
        }
        for (attr, score) in [
            (LevelAttribute::Energy, self.energy),
            (LevelAttribute::Valence, self.valence),
            (LevelAttribute::Danceability, self.danceability),
        ] {
            if let Some(s) = score {
                check_score(s, attr)?;
            }
        }
        Ok(())
    }
}

/// Metadata after every value has been turned into words; the serialized
/// form is what prompts are built from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMetadata {
    pub dataset_name: String,
    pub audio_filename: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tempo: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub valence: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub danceability: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub genre: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mood: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub instrument: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub others: Vec<String>,
}

impl NormalizedMetadata {
    /// Attribute names usable as prompt placeholders.
    pub const KEYS: [&'static str; 10] = [
        "dataset_name",
        "audio_filename",
        "tempo",
        "energy",
        "valence",
        "danceability",
        "genre",
        "mood",
        "instrument",
        "others",
    ];

    /// Rendered value for a placeholder key; lists are joined with ", ".
    /// `None` both for absent attributes and unknown keys.
    pub fn lookup(&self, key: &str) -> Option<String> {
        let list = |v: &Vec<String>| (!v.is_empty()).then(|| v.join(", "));
        let text = |s: &String| (!s.is_empty()).then(|| s.clone());
        match key {
            "dataset_name" => text(&self.dataset_name),
            "audio_filename" => text(&self.audio_filename),
            "tempo" => self.tempo.clone(),
            "energy" => self.energy.clone(),
            "valence" => self.valence.clone(),
            "danceability" => self.danceability.clone(),
            "genre" => list(&self.genre),
            "mood" => list(&self.mood),
            "instrument" => list(&self.instrument),
            "others" => list(&self.others),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TempoRow {
    pub term: String,
    /// English phrase used in text, e.g. "walking pace".
    pub phrase: String,
    /// Inclusive; `None` opens the interval towards 0.
    pub lower_bpm: Option<f64>,
    /// Exclusive; `None` opens the interval towards infinity.
    pub upper_bpm: Option<f64>,
}

/// Ordered, contiguous BPM intervals covering (0, inf).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TempoTermTable {
    rows: Vec<TempoRow>,
}

impl TempoTermTable {
    pub fn new(rows: Vec<TempoRow>) -> Result<Self> {
        let bad = |m: &str| Err(BenchError::TempoTable(m.to_string()));
        let (Some(first), Some(last)) = (rows.first(), rows.last()) else {
            return bad("table is empty");
        };
        if first.lower_bpm.is_some_and(|l| l > 0.0) {
            return bad("first row must be open towards 0");
        }
        if last.upper_bpm.is_some() {
            return bad("last row must be open-ended");
        }
        for pair in rows.windows(2) {
            match (pair[0].upper_bpm, pair[1].lower_bpm) {
                (Some(u), Some(l)) if u == l => {}
                _ => return bad(&format!("rows `{}` and `{}` are not contiguous", pair[0].term, pair[1].term)),
            }
        }
        for row in &rows {
            if let (Some(l), Some(u)) = (row.lower_bpm, row.upper_bpm) {
                if !(l < u) {
                    return bad(&format!("row `{}` is empty or reversed", row.term));
                }
            }
            if row.phrase.trim().is_empty() {
                return bad(&format!("row `{}` has no phrase", row.term));
            }
        }
        Ok(Self { rows })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            rows: Vec<TempoRow>,
        }
        let file: File = serde_json::from_str(text)?;
        Self::new(file.rows)
    }

    pub fn rows(&self) -> &[TempoRow] {
        &self.rows
    }

    /// Index of the row whose half-open interval contains `bpm`.
    pub fn row_index(&self, bpm: f64) -> Result<usize> {
        if !(bpm > 0.0 && bpm.is_finite()) {
            return Err(BenchError::BadTempo(bpm));
        }
        Ok(self
            .rows
            .iter()
            .position(|r| r.upper_bpm.is_none_or(|u| bpm < u))
            .expect("last row is open-ended"))
    }
}

impl Default for TempoTermTable {
    fn default() -> Self {
        Self::from_json(include_str!("../../data/tempo_terms.json")).expect("shipped tempo table is valid")
    }
}

/// Phrase form of a tempo, e.g. 90 BPM -> "walking pace tempo".
pub fn tempo_to_term(bpm: f64, table: &TempoTermTable) -> Result<String> {
    let row = &table.rows[table.row_index(bpm)?];
    Ok(format!("{} tempo", row.phrase))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelAttribute {
    Energy,
    Valence,
    Danceability,
}

impl LevelAttribute {
    pub fn name(self) -> &'static str {
        match self {
            Self::Energy => "energy",
            Self::Valence => "valence",
            Self::Danceability => "danceability",
        }
    }
}

fn check_score(score: f64, attribute: LevelAttribute) -> Result<()> {
    if !(0.0..=1.0).contains(&score) {
        return Err(BenchError::ScoreOutOfRange {
            attribute: attribute.name().to_string(),
            score,
        });
    }
    Ok(())
}

const HIGH: f64 = 0.7;
const MEDIUM: f64 = 0.3;

/// Three-level wording of a [0, 1] score: `s >= 0.7` high, `s >= 0.3` medium,
/// otherwise low.
pub fn level_to_term(score: f64, attribute: LevelAttribute) -> Result<String> {
    check_score(score, attribute)?;
    let level = if score >= HIGH {
        0
    } else if score >= MEDIUM {
        1
    } else {
        2
    };
    Ok(match attribute {
        LevelAttribute::Danceability => ["highly danceable", "medium danceable", "not danceable"][level].to_string(),
        _ => format!("{} {}", ["high", "medium", "low"][level], attribute.name()),
    })
}

/// Tag rewrite rules applied in three passes: de-compounding, unifying,
/// expanding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagRules {
    #[serde(default)]
    pub decompound: std::collections::BTreeMap<String, String>,
    #[serde(default)]
    pub unify: std::collections::BTreeMap<String, String>,
    #[serde(default)]
    pub expand: std::collections::BTreeMap<String, String>,
    #[serde(default)]
    pub vocabulary: Vec<String>,
}

fn normalize_text(tag: &str) -> String {
    tag.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

impl TagRules {
    /// Parses and checks that every rule lands on a fixed point, so that
    /// canonicalization is idempotent.
    pub fn from_json(text: &str) -> Result<Self> {
        let rules: Self = serde_json::from_str(text)?;
        rules.validate()?;
        Ok(rules)
    }

    pub fn validate(&self) -> Result<()> {
        for map in [&self.decompound, &self.unify, &self.expand] {
            for (k, v) in map {
                if normalize_text(k) != *k || normalize_text(v) != *v || v.is_empty() {
                    return Err(BenchError::TagRules(format!(
                        "rule `{k}` -> `{v}` is not in normalized lowercase form"
                    )));
                }
                let once = self.apply(k);
                if self.apply(&once) != once {
                    return Err(BenchError::TagRules(format!(
                        "rule chain from `{k}` does not reach a fixed point"
                    )));
                }
            }
        }
        Ok(())
    }

    fn apply(&self, normalized: &str) -> String {
        let mut tag = normalized.to_string();
        for map in [&self.decompound, &self.unify, &self.expand] {
            if let Some(v) = map.get(&tag) {
                tag = v.clone();
            }
        }
        tag
    }
}

impl Default for TagRules {
    fn default() -> Self {
        Self::from_json(include_str!("../../data/tag_rules.json")).expect("shipped tag rules are valid")
    }
}

/// Lowercases, trims and collapses whitespace, then applies the rule passes.
/// Unknown tags pass through in normalized form.
pub fn canonicalize_tag(tag: &str, rules: &TagRules) -> String {
    rules.apply(&normalize_text(tag))
}

fn canonical_list(tags: &[String], rules: &TagRules) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(tags.len());
    for t in tags {
        let c = canonicalize_tag(t, rules);
        if !c.is_empty() && !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

pub fn normalize_metadata(
    meta: &ClipMetadata,
    table: &TempoTermTable,
    rules: &TagRules,
) -> Result<NormalizedMetadata> {
    meta.validate()?;
    let level = |s: Option<f64>, a| s.map(|s| level_to_term(s, a)).transpose();
    Ok(NormalizedMetadata {
        dataset_name: meta.dataset_name.clone(),
        audio_filename: meta.audio_filename.clone(),
        tempo: meta.tempo_bpm.map(|b| tempo_to_term(b, table)).transpose()?,
        valence: level(meta.valence, LevelAttribute::Valence)?,
        energy: level(meta.energy, LevelAttribute::Energy)?,
        danceability: level(meta.danceability, LevelAttribute::Danceability)?,
        genre: canonical_list(&meta.genres, rules),
        mood: canonical_list(&meta.moods, rules),
        instrument: canonical_list(&meta.instruments, rules),
        others: canonical_list(&meta.others, rules),
    })
}
