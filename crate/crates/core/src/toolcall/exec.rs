use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{parse_calls_with_diagnostics, Result, ToolError};
use crate::audio::WaveformClip;
use crate::mir;

/// An executable estimator: receives the clip and the call arguments and
/// returns the text that replaces the call.
pub type ToolFn = Arc<dyn Fn(&WaveformClip, &[f64]) -> std::result::Result<String, String> + Send + Sync>;

#[derive(Clone)]
pub struct ToolSpec {
    pub name: String,
    pub arity: usize,
    /// Human-readable meaning of each argument, e.g. `["start seconds", "end seconds"]`.
    pub arg_semantics: Vec<String>,
    pub func: ToolFn,
}

impl fmt::Debug for ToolSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolSpec")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("arg_semantics", &self.arg_semantics)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, ToolSpec>,
}

impl ToolRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Adds a tool. Fails if the name is not a valid identifier or is taken.
    pub fn register(&mut self, spec: ToolSpec) -> Result<()> {
        if !super::parse::valid_ident(&spec.name) || self.tools.contains_key(&spec.name) {
            return Err(ToolError::BadName(spec.name));
        }
        self.tools.insert(spec.name.clone(), spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    /// Registered names in sorted order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }
}

fn spec(name: &str, args: &[&str], func: ToolFn) -> ToolSpec {
    ToolSpec {
        name: name.to_string(),
        arity: args.len(),
        arg_semantics: args.iter().map(|s| s.to_string()).collect(),
        func,
    }
}

impl ToolRegistry {
    /// EstimateTempo/0, GetMusicChords/2, GetKey/0 and GetDownbeats/0, backed
    /// by the estimators in [`crate::mir`].
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        let tools = [
            spec(
                "EstimateTempo",
                &[],
                Arc::new(|clip, _| mir::estimate_tempo(clip).map(mir::render_tempo).map_err(|e| e.to_string())),
            ),
            spec(
                "GetMusicChords",
                &["start seconds", "end seconds"],
                Arc::new(|clip, a| {
                    mir::recognize_chords(clip, a[0], a[1]).map(|c| mir::render_chords(&c)).map_err(|e| e.to_string())
                }),
            ),
            spec(
                "GetKey",
                &[],
                Arc::new(|clip, _| mir::detect_key(clip).map(|k| k.to_string()).map_err(|e| e.to_string())),
            ),
            spec(
                "GetDownbeats",
                &[],
                Arc::new(|clip, _| {
                    mir::track_downbeats(clip, mir::DEFAULT_METER)
                        .map(|g| mir::render_downbeats(&g))
                        .map_err(|e| e.to_string())
                }),
            ),
        ];
        for t in tools {
            r.register(t).expect("default tool names are unique identifiers");
        }
        r
    }
}

/// Replaces every call in `text` with its estimator output, in textual order.
/// All calls are resolved against the registry before any estimator runs.
pub fn execute_and_render(text: &str, registry: &ToolRegistry, clip: &WaveformClip) -> Result<String> {
    let parsed = parse_calls_with_diagnostics(text);
    let mut resolved = Vec::with_capacity(parsed.calls.len());
    for (call, span) in &parsed.calls {
        let tool = registry.get(call.name()).ok_or_else(|| ToolError::UnknownTool(call.name().to_string()))?;
        if tool.arity != call.args().len() {
            return Err(ToolError::Arity {
                name: call.name().to_string(),
                expected: tool.arity,
                got: call.args().len(),
            });
        }
        resolved.push((tool, call, span.clone()));
    }
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (tool, call, span) in resolved {
        let rendered = (tool.func)(clip, call.args()).map_err(|message| ToolError::Estimator {
            name: call.name().to_string(),
            offset: span.start,
            message,
        })?;
        out.push_str(&text[last..span.start]);
        out.push_str(&rendered);
        last = span.end;
    }
    out.push_str(&text[last..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip() -> WaveformClip {
        WaveformClip::new(vec![0.0; 16_000], 16_000).unwrap()
    }

    fn echo_registry() -> ToolRegistry {
        let mut r = ToolRegistry::empty();
        r.register(spec("Sum", &["a", "b"], Arc::new(|_, a| Ok(format!("{}", a[0] + a[1]))))).unwrap();
        r.register(spec("Fail", &[], Arc::new(|_, _| Err("boom".into())))).unwrap();
        r
    }

    #[test]
    fn default_registry_contents() {
        let r = ToolRegistry::with_defaults();
        let names: Vec<_> = r.names().collect();
        assert_eq!(names, ["EstimateTempo", "GetDownbeats", "GetKey", "GetMusicChords"]);
        assert_eq!(r.get("GetMusicChords").unwrap().arity, 2);
        assert_eq!(r.get("GetKey").unwrap().arity, 0);
    }

    #[test]
    fn duplicate_and_bad_names_rejected() {
        let mut r = echo_registry();
        assert!(r.register(spec("Sum", &[], Arc::new(|_, _| Ok(String::new())))).is_err());
        assert!(r.register(spec("9x", &[], Arc::new(|_, _| Ok(String::new())))).is_err());
    }

    #[test]
    fn replaces_in_place() {
        let r = echo_registry();
        let out = execute_and_render("a [Sum(1, 2)] b [Sum(3,4)]. [not a call]", &r, &clip()).unwrap();
        assert_eq!(out, "a 3 b 7. [not a call]");
        assert_eq!(execute_and_render("plain text", &r, &clip()).unwrap(), "plain text");
    }

    #[test]
    fn errors_name_the_call() {
        let r = echo_registry();
        match execute_and_render("[NoSuchTool()]", &r, &clip()) {
            Err(ToolError::UnknownTool(n)) => assert_eq!(n, "NoSuchTool"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            execute_and_render("[Sum(1)]", &r, &clip()),
            Err(ToolError::Arity { expected: 2, got: 1, .. })
        ));
        match execute_and_render("xx [Fail()]", &r, &clip()) {
            Err(e @ ToolError::Estimator { offset: 3, .. }) => assert!(e.to_string().contains("Fail")),
            other => panic!("{other:?}"),
        }
    }
}
