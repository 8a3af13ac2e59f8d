use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Result, ToolError};

/// A parsed call: name plus numeric arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallExpr {
    name: String,
    args: Vec<f64>,
}

pub(crate) fn valid_ident(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic()) && chars.all(|c| c.is_ascii_alphanumeric())
}

impl ToolCallExpr {
    pub fn new(name: impl Into<String>, args: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if !valid_ident(&name) {
            return Err(ToolError::BadName(name));
        }
        if let Some(&a) = args.iter().find(|a| !a.is_finite()) {
            return Err(ToolError::NonFinite(a));
        }
        Ok(Self { name, args })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn args(&self) -> &[f64] {
        &self.args
    }

    /// Canonical text: `[Name(a, b)]`, integral values without a decimal point.
    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ToolCallExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}(", self.name)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            // -0 renders as 0 so that numerically equal calls render equally
            let a = if *a == 0.0 { 0.0 } else { *a };
            write!(f, "{a}")?;
        }
        f.write_str(")]")
    }
}

/// A call-shaped fragment that failed to parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// Byte offset of the opening bracket.
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParseOutput {
    /// Calls with the byte span `[start, end)` they occupy in the text.
    pub calls: Vec<(ToolCallExpr, std::ops::Range<usize>)>,
    pub diagnostics: Vec<Diagnostic>,
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && matches!(self.s[self.pos], b' ' | b'\t') {
            self.pos += 1;
        }
    }

    fn eat(&mut self, b: u8) -> bool {
        self.skip_ws();
        if self.s.get(self.pos) == Some(&b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Option<&str> {
        self.skip_ws();
        let start = self.pos;
        if !self.s.get(self.pos).is_some_and(u8::is_ascii_alphabetic) {
            return None;
        }
        while self.s.get(self.pos).is_some_and(u8::is_ascii_alphanumeric) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.s[start..self.pos]).ok()
    }

    fn number(&mut self) -> std::result::Result<f64, String> {
        self.skip_ws();
        let start = self.pos;
        if self.s.get(self.pos) == Some(&b'-') {
            self.pos += 1;
        }
        let digits = |c: &mut Self| {
            let d0 = c.pos;
            while c.s.get(c.pos).is_some_and(u8::is_ascii_digit) {
                c.pos += 1;
            }
            c.pos > d0
        };
        if !digits(self) {
            return Err("expected a number".into());
        }
        if self.s.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            if !digits(self) {
                return Err("expected digits after decimal point".into());
            }
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).expect("ascii");
        let v: f64 = text.parse().map_err(|_| format!("bad number `{text}`"))?;
        if !v.is_finite() {
            return Err(format!("number `{text}` is out of range"));
        }
        Ok(v)
    }
}

/// Tries to read one call starting at the `[` at `start`. `Ok(None)` means
/// the bracket is not call-shaped at all and should be ignored.
fn parse_at(text: &[u8], start: usize) -> std::result::Result<Option<(ToolCallExpr, usize)>, String> {
    let mut c = Cursor { s: text, pos: start + 1 };
    let Some(name) = c.ident().map(str::to_string) else {
        return Ok(None);
    };
    if !c.eat(b'(') {
        return Ok(None);
    }
    let mut args = Vec::new();
    if !c.eat(b')') {
        loop {
            args.push(c.number()?);
            if c.eat(b')') {
                break;
            }
            if !c.eat(b',') {
                return Err("expected `,` or `)`".into());
            }
        }
    }
    if !c.eat(b']') {
        return Err("expected `]` after argument list".into());
    }
    Ok(Some((ToolCallExpr { name, args }, c.pos)))
}

/// Scans `text` for calls in textual order, recording malformed call-shaped
/// fragments as diagnostics instead of failing.
pub fn parse_calls_with_diagnostics(text: &str) -> ParseOutput {
    let bytes = text.as_bytes();
    let mut out = ParseOutput::default();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'[' {
            i += 1;
            continue;
        }
        match parse_at(bytes, i) {
            Ok(Some((call, end))) => {
                out.calls.push((call, i..end));
                i = end;
            }
            Ok(None) => i += 1,
            Err(message) => {
                out.diagnostics.push(Diagnostic { offset: i, message });
                i += 1;
            }
        }
    }
    out
}

pub fn parse_calls(text: &str) -> Vec<ToolCallExpr> {
    parse_calls_with_diagnostics(text)
        .calls
        .into_iter()
        .map(|(c, _)| c)
        .collect()
}
