//! Parsers for model output.

use serde_json::Value;

use crate::model::QueryType;

/// Fields of the answering task's JSON reply.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawAnswer {
    pub response: String,
    pub query_type: QueryType,
}

fn strip_fences(s: &str) -> &str {
    let s = s.trim();
    let s = s.strip_prefix("```json").or_else(|| s.strip_prefix("```")).unwrap_or(s);
    s.strip_suffix("```").unwrap_or(s).trim()
}

/// Parse `{"response": ..., "query_type": ...}`, tolerating code fences and
/// prose around the object. A missing or unknown type maps to `Other`.
pub fn parse_answer(raw: &str) -> Option<RawAnswer> {
    let s = strip_fences(raw);
    let start = s.find('{')?;
    let end = s.rfind('}')?;
    if end < start {
        return None;
    }
    let v: Value = serde_json::from_str(&s[start..=end]).ok()?;
    let response = v.get("response")?.as_str()?.trim().to_owned();
    if response.is_empty() {
        return None;
    }
    let query_type = v
        .get("query_type")
        .and_then(Value::as_str)
        .map(QueryType::from_label)
        .unwrap_or(QueryType::Other);
    Some(RawAnswer { response, query_type })
}

/// Parse a list of strings written as JSON or as a Python literal
/// (single or double quotes). Returns `None` for anything else.
pub fn parse_string_list(raw: &str) -> Option<Vec<String>> {
    let s = strip_fences(raw);
    let s = s.strip_prefix("python").unwrap_or(s).trim();
    let start = s.find('[')?;
    let end = s.rfind(']')?;
    if end < start {
        return None;
    }
    let body = &s[start..=end];
    if let Ok(v) = serde_json::from_str::<Vec<String>>(body) {
        return Some(v);
    }
    python_list(body)
}

fn python_list(s: &str) -> Option<Vec<String>> {
    let mut chars = s.chars().peekable();
    if chars.next()? != '[' {
        return None;
    }
    let mut out = Vec::new();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        match chars.next()? {
            ']' => break,
            q @ ('\'' | '"') => {
                let mut item = String::new();
                loop {
                    match chars.next()? {
                        '\\' => {
                            let esc = chars.next()?;
                            item.push(match esc {
                                'n' => '\n',
                                't' => '\t',
                                other => other,
                            });
                        }
                        c if c == q => break,
                        c => item.push(c),
                    }
                }
                out.push(item);
                while chars.peek().is_some_and(|c| c.is_whitespace()) {
                    chars.next();
                }
                match chars.next()? {
                    ',' => continue,
                    ']' => break,
                    _ => return None,
                }
            }
            _ => return None,
        }
    }
    Some(out)
}

/// Render strings as a Python list literal, the shape the related-question
/// prompt asks for.
pub fn python_repr(items: &[String]) -> String {
    let parts: Vec<String> = items
        .iter()
        .map(|s| {
            if s.contains('\'') && !s.contains('"') {
                format!("\"{}\"", s.replace('\\', "\\\\"))
            } else {
                format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
            }
        })
        .collect();
    format!("[{}]", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_json_variants() {
        let a = parse_answer(r#"{"response": "It takes 10 minutes.", "query_type": "medical"}"#).unwrap();
        assert_eq!(a.query_type, QueryType::Medical);
        let b = parse_answer("```json\n{\"response\":\"Hi!\",\"query_type\":\"small-talk\"}\n```").unwrap();
        assert_eq!(b.query_type, QueryType::SmallTalk);
        let c = parse_answer(r#"Sure: {"response": "x", "query_type": "billing"} done"#).unwrap();
        assert_eq!(c.query_type, QueryType::Other);
        assert!(parse_answer("I think the answer is yes").is_none());
        assert!(parse_answer(r#"{"query_type": "medical"}"#).is_none());
        assert!(parse_answer(r#"{"response": "  ", "query_type": "medical"}"#).is_none());
    }

    #[test]
    fn python_and_json_lists() {
        assert_eq!(
            parse_string_list(r#"['What is it?', "Don't I?", 'a\'b']"#).unwrap(),
            vec!["What is it?", "Don't I?", "a'b"]
        );
        assert_eq!(parse_string_list(r#"["x", "y"]"#).unwrap(), vec!["x", "y"]);
        assert_eq!(parse_string_list("[]").unwrap(), Vec::<String>::new());
        assert!(parse_string_list("1. foo\n2. bar").is_none());
        assert!(parse_string_list("['unterminated]").is_none());
    }

    #[test]
    fn repr_round_trips() {
        let items = vec!["Can I swim?".to_owned(), "What's next?".to_owned(), "a\\b 'q' \"d\"".to_owned()];
        assert_eq!(parse_string_list(&python_repr(&items)).unwrap(), items);
    }
}
