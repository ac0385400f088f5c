//! Text limits and splitting helpers shared by the gateway and the channel.
//!
//! Lengths are counted in Unicode scalar values, which is how the channel
//! counts them.

/// Maximum body of one channel text message.
pub const MAX_MESSAGE_CHARS: usize = 700;
/// Maximum length of a quick-reply suggestion label.
pub const MAX_SUGGESTION_CHARS: usize = 72;

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

fn byte_index(s: &str, chars: usize) -> usize {
    s.char_indices().nth(chars).map(|(i, _)| i).unwrap_or(s.len())
}

/// Shorten a suggestion label to at most 72 characters: cut at the last
/// word boundary within 69 characters and append `...`.
pub fn fit_suggestion(s: &str) -> String {
    let s = s.trim();
    if char_len(s) <= MAX_SUGGESTION_CHARS {
        return s.to_owned();
    }
    let budget = MAX_SUGGESTION_CHARS - 3;
    let cut = byte_index(s, budget);
    let head = &s[..cut];
    // the cut itself is a boundary when the next char is whitespace
    let at_boundary = s[cut..].starts_with(char::is_whitespace);
    let head = if at_boundary {
        head
    } else {
        match head.rfind(char::is_whitespace) {
            Some(i) if i > 0 => &head[..i],
            _ => head,
        }
    };
    format!("{}...", head.trim_end())
}

fn is_sentence_end(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '।')
}

/// Byte offsets just past each sentence terminator that is followed by
/// whitespace or the end of the text.
fn sentence_ends(s: &str) -> Vec<usize> {
    let mut ends = Vec::new();
    let mut it = s.char_indices().peekable();
    while let Some((i, c)) = it.next() {
        if is_sentence_end(c) {
            let end = i + c.len_utf8();
            match it.peek() {
                None => ends.push(end),
                Some((_, n)) if n.is_whitespace() => ends.push(end),
                _ => {}
            }
        }
    }
    ends
}

/// Truncate to at most `max` characters, preferring the last sentence
/// boundary, then the last word boundary, then a hard cut.
pub fn truncate_at_sentence(s: &str, max: usize) -> String {
    let s = s.trim();
    if char_len(s) <= max {
        return s.to_owned();
    }
    let limit = byte_index(s, max);
    if let Some(end) = sentence_ends(s).into_iter().rfind(|e| *e <= limit) {
        return s[..end].trim_end().to_owned();
    }
    let head = &s[..limit];
    let at_boundary = s[limit..].starts_with(char::is_whitespace);
    if at_boundary {
        return head.trim_end().to_owned();
    }
    match head.rfind(char::is_whitespace) {
        Some(i) if i > 0 => head[..i].trim_end().to_owned(),
        _ => head.to_owned(),
    }
}

/// Split a long text into channel-sized pieces, each at most `max` chars.
pub fn split_for_channel(s: &str, max: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let piece = truncate_at_sentence(rest, max);
        if piece.is_empty() {
            // only whitespace-free overlong input reaches here
            let cut = byte_index(rest, max);
            out.push(rest[..cut].to_owned());
            rest = rest[cut..].trim_start();
            continue;
        }
        let consumed = rest.find(piece.as_str()).map(|i| i + piece.len()).unwrap_or(piece.len());
        rest = rest[consumed..].trim_start();
        out.push(piece);
    }
    out
}

/// Split text into sentences, also breaking on line ends.
pub fn sentences(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    for line in s.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut start = 0;
        for end in sentence_ends(line) {
            let piece = line[start..end].trim();
            if !piece.is_empty() {
                out.push(piece.to_owned());
            }
            start = end;
        }
        let tail = line[start..].trim();
        if !tail.is_empty() {
            out.push(tail.to_owned());
        }
    }
    out
}
