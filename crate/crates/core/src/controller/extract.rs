//! Recovery of JSON from free-form model output.
//!
//! Only syntactic repairs are made, always in this order: strip a code
//! fence, strip surrounding prose, drop trailing commas, turn single-quoted
//! strings into double-quoted ones. Content is never invented.

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Repair {
    FenceStripped,
    ProseStripped,
    TrailingCommaRemoved,
    SingleQuotesNormalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Unrecoverable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtractionReport {
    pub raw_text: String,
    pub extracted: Option<Value>,
    pub repairs_applied: Vec<Repair>,
    pub outcome: Outcome,
}

impl ExtractionReport {
    fn unrecoverable(raw: &str, repairs: Vec<Repair>) -> Self {
        ExtractionReport {
            raw_text: raw.to_string(),
            extracted: None,
            repairs_applied: repairs,
            outcome: Outcome::Unrecoverable,
        }
    }
}

/// Body of the first ``` fence plus the text outside it. An unterminated fence
/// runs to the end of the input.
fn split_fence(raw: &str) -> Option<(&str, String)> {
    let open = raw.find("```")?;
    let after_marker = &raw[open + 3..];
    // The info string (e.g. `json`) runs to the end of the marker line.
    let body_start = after_marker.find('\n').map(|i| i + 1).unwrap_or(after_marker.len());
    let info = &after_marker[..body_start];
    let body_and_rest = &after_marker[body_start..];
    let (body, rest) = match body_and_rest.find("```") {
        Some(close) => (&body_and_rest[..close], &body_and_rest[close + 3..]),
        None => (body_and_rest, ""),
    };
    let mut outside = String::with_capacity(open + rest.len());
    outside.push_str(&raw[..open]);
    // Anything but an identifier-like info string counts as prose too.
    let info = info.trim();
    if !info.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        outside.push_str(info);
    }
    outside.push_str(rest);
    Some((body, outside))
}

/// Byte range of the first balanced `{...}` or `[...]` region, tracking
/// double-quoted strings and escapes.
pub(crate) fn first_balanced(text: &str) -> Option<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut start = 0;
    while let Some(rel) = text[start..].find(['{', '[']) {
        let s = start + rel;
        if let Some(end) = balanced_from(bytes, s) {
            return Some((s, end));
        }
        start = s + 1;
    }
    None
}

fn balanced_from(bytes: &[u8], s: usize) -> Option<usize> {
    let mut stack: Vec<u8> = Vec::new();
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(s) {
        if in_str {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_str = false;
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.pop() != Some(b) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Removes commas that directly precede a closing bracket (outside strings).
fn remove_trailing_commas(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_str = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_str {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_str = false;
            }
            continue;
        }
        if c == '"' {
            in_str = true;
        }
        if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}') | Some(']')) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

/// Rewrites `'...'` strings as JSON strings, escaping embedded double quotes.
fn normalize_single_quotes(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    let mut in_double = false;
    let mut escaped = false;
    while let Some(c) = chars.next() {
        if in_double {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_double = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_double = true;
                out.push(c);
            }
            '\'' => {
                out.push('"');
                while let Some(d) = chars.next() {
                    match d {
                        '\\' => {
                            if let Some(&n) = chars.peek() {
                                chars.next();
                                if n == '\'' {
                                    out.push('\'');
                                } else {
                                    out.push('\\');
                                    out.push(n);
                                }
                            }
                        }
                        '\'' => break,
                        '"' => out.push_str("\\\""),
                        _ => out.push(d),
                    }
                }
                out.push('"');
            }
            _ => out.push(c),
        }
    }
    out
}

/// Finds and parses the JSON payload in `raw`. Total: every input yields a
/// report, at worst with `outcome = Unrecoverable`.
pub fn extract_json(raw: &str) -> ExtractionReport {
    let mut repairs = Vec::new();
    let (scope, mut outside) = match split_fence(raw) {
        Some((body, outside)) => {
            repairs.push(Repair::FenceStripped);
            (body, outside)
        }
        None => (raw, String::new()),
    };

    // Single-quoted JSON has no double-quoted strings, so the balanced scan
    // over the raw scope still finds its outer brackets.
    let Some((s, e)) = first_balanced(scope) else {
        return ExtractionReport::unrecoverable(raw, repairs);
    };
    outside.push_str(&scope[..s]);
    outside.push_str(&scope[e..]);
    if !outside.trim().is_empty() {
        repairs.push(Repair::ProseStripped);
    }

    let region = &scope[s..e];
    if let Ok(v) = serde_json::from_str::<Value>(region) {
        return ok(raw, v, repairs);
    }

    let no_commas = remove_trailing_commas(region);
    if no_commas != region {
        repairs.push(Repair::TrailingCommaRemoved);
        if let Ok(v) = serde_json::from_str::<Value>(&no_commas) {
            return ok(raw, v, repairs);
        }
    }

    let requoted = normalize_single_quotes(&no_commas);
    if requoted != no_commas {
        repairs.push(Repair::SingleQuotesNormalized);
        // Commas hidden inside single-quoted spans are now visible.
        let cleaned = remove_trailing_commas(&requoted);
        if cleaned != requoted && !repairs.contains(&Repair::TrailingCommaRemoved) {
            repairs.insert(repairs.len() - 1, Repair::TrailingCommaRemoved);
        }
        if let Ok(v) = serde_json::from_str::<Value>(&cleaned) {
            return ok(raw, v, repairs);
        }
    }
    ExtractionReport::unrecoverable(raw, repairs)
}

fn ok(raw: &str, v: Value, repairs: Vec<Repair>) -> ExtractionReport {
    ExtractionReport {
        raw_text: raw.to_string(),
        extracted: Some(v),
        repairs_applied: repairs,
        outcome: Outcome::Ok,
    }
}
