//! Expectation matching over a finished transcript and event log.

use expertloop::channel::WirePayload;
use expertloop::events::{Event, EventRecord};
use serde::Serialize;

use crate::script::{EventMatch, Expectation, MessageMatch, ReactionMatch};
use crate::transcript::TranscriptItem;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExpectationResult {
    /// 1-based position in the script.
    pub index: usize,
    pub description: String,
    pub passed: bool,
    /// Why it failed, with the nearest candidates.
    pub detail: String,
}

fn matches(m: &MessageMatch, actor: &str, p: &WirePayload) -> bool {
    actor == m.to
        && m.kind.as_ref().is_none_or(|k| *k == p.kind)
        && m.text.as_ref().is_none_or(|t| p.text.as_ref() == Some(t))
        && m.contains
            .as_ref()
            .is_none_or(|c| p.text.as_ref().or(p.header.as_ref()).is_some_and(|t| t.contains(c.as_str())))
        && m.header.as_ref().is_none_or(|h| p.header.as_ref() == Some(h))
        && m.glyph.as_ref().is_none_or(|g| p.glyph.as_ref() == Some(g))
}

fn outbound(transcript: &[TranscriptItem]) -> Vec<(usize, String, WirePayload)> {
    transcript
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.wire().map(|p| (i, t.actor.clone(), p)))
        .collect()
}

fn describe_message(m: &MessageMatch) -> String {
    let mut parts = vec![format!("message to {}", m.to)];
    if let Some(k) = &m.kind {
        parts.push(format!("kind {k}"));
    }
    if let Some(t) = &m.text {
        parts.push(format!("text {t:?}"));
    }
    if let Some(c) = &m.contains {
        parts.push(format!("containing {c:?}"));
    }
    if let Some(h) = &m.header {
        parts.push(format!("header {h:?}"));
    }
    if let Some(g) = &m.glyph {
        parts.push(format!("glyph {g}"));
    }
    if let Some(n) = m.count {
        parts.push(format!("exactly {n} times"));
    }
    parts.join(", ")
}

fn nearest(out: &[(usize, String, WirePayload)], to: &str) -> String {
    let seen: Vec<String> = out
        .iter()
        .filter(|(_, a, _)| a == to)
        .rev()
        .take(3)
        .map(|(i, _, p)| format!("#{} {} {:?}", i + 1, p.kind, p.text.as_ref().or(p.header.as_ref()).or(p.glyph.as_ref())))
        .collect();
    if seen.is_empty() {
        format!("nothing was sent to {to}")
    } else {
        format!("last messages to {to}: {}", seen.join("; "))
    }
}

fn reaction(r: &ReactionMatch, out: &[(usize, String, WirePayload)]) -> (bool, String) {
    let target = out.iter().rev().find(|(_, a, p)| {
        *a == r.to
            && p.kind != "reaction"
            && r.on_text.as_ref().is_none_or(|t| p.text.as_ref() == Some(t))
            && r.on_contains.as_ref().is_none_or(|c| p.text.as_ref().is_some_and(|t| t.contains(c.as_str())))
    });
    let Some((_, _, target)) = target else {
        return (false, format!("no matching message; {}", nearest(out, &r.to)));
    };
    let glyph = out
        .iter()
        .rev()
        .find(|(_, _, p)| p.kind == "reaction" && p.target_message_id.as_deref() == Some(&target.message_id))
        .and_then(|(_, _, p)| p.glyph.clone());
    match glyph {
        Some(g) if g == r.glyph => (true, String::new()),
        Some(g) => (false, format!("message {} shows {g}", target.message_id)),
        None => (false, format!("message {} has no reaction", target.message_id)),
    }
}

fn event_matches(m: &EventMatch, r: &EventRecord) -> bool {
    if r.event.kind() != m.kind {
        return false;
    }
    let to_ok = match (&m.to, &r.event) {
        (None, _) => true,
        (Some(to), Event::TaskTransition(t)) => format!("{:?}", t.to) == *to,
        (Some(_), _) => false,
    };
    let job_ok = match (&m.job, &r.event) {
        (None, _) => true,
        (Some(job), Event::SchedulerFired { job: j, .. }) => serde_json::to_value(j).ok().and_then(|v| v.as_str().map(str::to_owned)).as_deref() == Some(job),
        (Some(_), _) => false,
    };
    to_ok && job_ok
}

/// Ordered message expectations (those without `count`) must appear as a
/// subsequence of the outbound traffic; the rest are checked globally.
pub fn evaluate(expectations: &[Expectation], transcript: &[TranscriptItem], log: &[EventRecord]) -> Vec<ExpectationResult> {
    let out = outbound(transcript);
    let mut cursor = 0;
    expectations
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let (description, passed, detail) = match e {
                Expectation::Message(m) => {
                    let description = describe_message(m);
                    match m.count {
                        Some(n) => {
                            let got = out.iter().filter(|(_, a, p)| matches(m, a, p)).count();
                            (description, got == n, if got == n { String::new() } else { format!("found {got}") })
                        }
                        None => match out[cursor..].iter().position(|(_, a, p)| matches(m, a, p)) {
                            Some(p) => {
                                cursor += p + 1;
                                (description, true, String::new())
                            }
                            None => {
                                let earlier = out[..cursor].iter().any(|(_, a, p)| matches(m, a, p));
                                let why = if earlier { "only earlier than the previous match; " } else { "" };
                                (description, false, format!("{why}{}", nearest(&out, &m.to)))
                            }
                        },
                    }
                }
                Expectation::Reaction(r) => {
                    let (ok, detail) = reaction(r, &out);
                    let on = r.on_text.as_ref().or(r.on_contains.as_ref()).cloned().unwrap_or_default();
                    (format!("{} on {:?} to {}", r.glyph, on, r.to), ok, detail)
                }
                Expectation::Event(m) => {
                    let got = log.iter().filter(|r| event_matches(m, r)).count();
                    let ok = m.count.map_or(got > 0, |n| n == got);
                    let mut d = format!("event {}", m.kind);
                    if let Some(to) = &m.to {
                        d.push_str(&format!(" to {to}"));
                    }
                    if let Some(job) = &m.job {
                        d.push_str(&format!(" job {job}"));
                    }
                    if let Some(n) = m.count {
                        d.push_str(&format!(" exactly {n} times"));
                    }
                    (d, ok, if ok { String::new() } else { format!("found {got}") })
                }
            };
            ExpectationResult {
                index: i + 1,
                description,
                passed,
                detail,
            }
        })
        .collect()
}
