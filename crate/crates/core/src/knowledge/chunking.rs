//! Paragraph-packing chunker.
//!
//! Paragraphs are separated by blank lines. Consecutive paragraphs are packed
//! greedily into chunks of at most `budget` characters (joined by a blank
//! line). The next chunk starts again at the previous chunk's last paragraph
//! when that paragraph still leaves room for its successor; otherwise it
//! starts at the successor. Paragraphs longer than the budget are first cut
//! into budget-sized pieces at sentence or word boundaries.

use crate::text::{char_len, truncate_at_sentence};

pub const DEFAULT_CHUNK_BUDGET: usize = 500;

const JOINER: &str = "\n\n";

pub fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n").trim().to_owned());
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n").trim().to_owned());
    }
    out
}

fn split_long(paragraph: &str, budget: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = paragraph.trim();
    while char_len(rest) > budget {
        let mut piece = truncate_at_sentence(rest, budget);
        if piece.is_empty() {
            piece = rest.chars().take(budget).collect();
        }
        rest = rest[piece.len()..].trim_start();
        out.push(piece);
    }
    if !rest.is_empty() {
        out.push(rest.to_owned());
    }
    out
}

fn packed_len(parts: &[String]) -> usize {
    parts.iter().map(|p| char_len(p)).sum::<usize>() + JOINER.len() * parts.len().saturating_sub(1)
}

pub fn chunk_text(text: &str, budget: usize) -> Vec<String> {
    let paras: Vec<String> = paragraphs(text)
        .iter()
        .flat_map(|p| split_long(p, budget))
        .collect();
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < paras.len() {
        let mut end = start + 1;
        while end < paras.len() && packed_len(&paras[start..=end]) <= budget {
            end += 1;
        }
        chunks.push(paras[start..end].join(JOINER));
        if end >= paras.len() {
            break;
        }
        let last = end - 1;
        start = if last > start && packed_len(&paras[last..=end]) <= budget {
            last
        } else {
            end
        };
    }
    chunks
}
