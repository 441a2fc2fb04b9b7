//! Lenient parsing of model replies into strict answer types.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("no JSON payload found in reply")]
    NoPayload,
    #[error("JSON payload has an unrecognized shape")]
    UnrecognizedShape,
    #[error("no true/false verdict found in reply")]
    NoVerdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentEntry {
    pub name: String,
    pub function: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentAnswer {
    pub entries: Vec<ComponentEntry>,
    /// Set when parallel name/function arrays had different lengths and
    /// the longer one was cut.
    #[serde(default)]
    pub truncated: bool,
}

const NAME_KEYS: [&str; 5] = [
    "component_name",
    "component name",
    "name",
    "component",
    "componentName",
];
const FUNCTION_KEYS: [&str; 5] = [
    "component function",
    "component_function",
    "function",
    "componentFunction",
    "description",
];
const WRAPPER_KEYS: [&str; 5] = ["components", "entries", "items", "results", "data"];

/// Removes commas that directly precede a closing bracket or brace,
/// leaving string contents untouched.
fn strip_trailing_commas(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut in_string = false;
    let mut escaped = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
            }
            ',' => {
                let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
                if !matches!(next, Some(']') | Some('}')) {
                    out.push(c);
                }
            }
            _ => out.push(c),
        }
    }
    out
}

fn first_value_at(text: &str) -> Option<Value> {
    let mut stream = serde_json::Deserializer::from_str(text).into_iter::<Value>();
    match stream.next() {
        Some(Ok(v)) if v.is_array() || v.is_object() => Some(v),
        _ => None,
    }
}

/// Every JSON object or array embedded in `raw`, in order of where it starts.
/// Nested values inside an earlier match are skipped.
fn json_values(raw: &str) -> Vec<Value> {
    let cleaned = strip_trailing_commas(raw);
    let mut found = Vec::new();
    let mut skip_until = 0;
    for (i, c) in cleaned.char_indices() {
        if i < skip_until || !(c == '{' || c == '[') {
            continue;
        }
        let rest = &cleaned[i..];
        let mut stream = serde_json::Deserializer::from_str(rest).into_iter::<Value>();
        if let Some(Ok(v)) = stream.next() {
            if v.is_array() || v.is_object() {
                skip_until = i + stream.byte_offset();
                found.push(v);
            }
        }
    }
    found
}

/// The first JSON object or array found in `raw`, tolerating prose, code
/// fences and trailing commas.
pub fn extract_json_payload(raw: &str) -> Option<Value> {
    json_values(raw).into_iter().next().or_else(|| {
        let trimmed = raw.trim();
        first_value_at(trimmed)
    })
}

fn string_of(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn string_list(v: &Value) -> Option<Vec<String>> {
    match v {
        Value::Array(items) => Some(items.iter().map(|i| string_of(i).unwrap_or_default()).collect()),
        Value::String(s) => Some(vec![s.trim().to_string()]),
        _ => None,
    }
}

fn lookup<'a>(obj: &'a serde_json::Map<String, Value>, keys: &[&str]) -> Option<&'a Value> {
    keys.iter().find_map(|k| obj.get(*k))
}

fn from_value(v: &Value) -> Option<ComponentAnswer> {
    match v {
        Value::Array(items) => {
            let mut entries = Vec::new();
            for item in items {
                match item {
                    Value::String(s) => entries.push(ComponentEntry {
                        name: s.trim().to_string(),
                        function: String::new(),
                    }),
                    Value::Object(obj) => {
                        let name = lookup(obj, &NAME_KEYS).and_then(string_of)?;
                        let function = lookup(obj, &FUNCTION_KEYS)
                            .and_then(string_of)
                            .unwrap_or_default();
                        entries.push(ComponentEntry { name, function });
                    }
                    _ => return None,
                }
            }
            Some(ComponentAnswer {
                entries,
                truncated: false,
            })
        }
        Value::Object(obj) => {
            if let Some(names) = lookup(obj, &NAME_KEYS).and_then(string_list) {
                let functions = lookup(obj, &FUNCTION_KEYS).and_then(string_list);
                let truncated = functions.as_ref().is_some_and(|f| f.len() != names.len());
                let entries = match functions {
                    Some(functions) => names
                        .into_iter()
                        .zip(functions)
                        .map(|(name, function)| ComponentEntry { name, function })
                        .collect(),
                    None => names
                        .into_iter()
                        .map(|name| ComponentEntry {
                            name,
                            function: String::new(),
                        })
                        .collect(),
                };
                return Some(ComponentAnswer { entries, truncated });
            }
            lookup(obj, &WRAPPER_KEYS).and_then(from_value)
        }
        _ => None,
    }
}

/// Parses a component list in either the parallel-array form
/// `{"component_name": [...], "component function": [...]}` or the
/// list-of-objects form `[{"name", "function"}]`.
pub fn parse_component_answer(raw: &str) -> Result<ComponentAnswer, ParseError> {
    let values = json_values(raw);
    if values.is_empty() {
        return Err(ParseError::NoPayload);
    }
    let mut answer = values
        .iter()
        .find_map(from_value)
        .ok_or(ParseError::UnrecognizedShape)?;
    answer.entries.retain(|e| !e.name.is_empty());
    Ok(answer)
}

/// Finds the verdict in a yes/no reply. The last verdict word wins.
pub fn parse_boolean_answer(raw: &str) -> Result<bool, ParseError> {
    raw.rsplit(|c: char| !c.is_alphanumeric())
        .find_map(|word| match word.to_ascii_lowercase().as_str() {
            "true" | "yes" => Some(true),
            "false" | "no" => Some(false),
            _ => None,
        })
        .ok_or(ParseError::NoVerdict)
}
