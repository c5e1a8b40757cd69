//! Mechanical checks for translation artifacts the prompts forbid: altered
//! hashtags, @mentions or URLs, Cyrillic leakage, and empty output.
//!
//! These are pure text checks. Both platform prompts pin the same token
//! classes, so the rules are currently platform-independent; the parameter
//! stays so platform-specific rules have somewhere to live.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Platform;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArtifactViolation {
    /// A hashtag token from the source is not present verbatim in the target.
    HashtagAltered(String),
    /// An @mention from the source is not present verbatim in the target.
    MentionAltered(String),
    /// A URL from the source is not present verbatim in the target.
    UrlAltered(String),
    /// The target contains a code point from a Cyrillic block.
    CyrillicLeakage(char),
    EmptyTarget,
}

/// Flags the union of the four rule violations on one (source, target) pair.
pub fn artifact_checks(src: &str, tgt: &str, _platform: Platform) -> Vec<ArtifactViolation> {
    let mut violations = Vec::new();

    if tgt.trim().is_empty() {
        violations.push(ArtifactViolation::EmptyTarget);
    }

    let tgt_hashtags = sigil_tokens(tgt, '#');
    for tag in sigil_tokens(src, '#') {
        if !tgt_hashtags.contains(&tag) {
            violations.push(ArtifactViolation::HashtagAltered(tag));
        }
    }

    let tgt_mentions = sigil_tokens(tgt, '@');
    for mention in sigil_tokens(src, '@') {
        if !tgt_mentions.contains(&mention) {
            violations.push(ArtifactViolation::MentionAltered(mention));
        }
    }

    let tgt_urls = urls(tgt);
    for url in urls(src) {
        if !tgt_urls.contains(&url) {
            violations.push(ArtifactViolation::UrlAltered(url));
        }
    }

    let mut seen = BTreeSet::new();
    for c in tgt.chars() {
        if is_cyrillic(c) && seen.insert(c) {
            violations.push(ArtifactViolation::CyrillicLeakage(c));
        }
    }

    violations
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Tokens formed by `sigil` plus a maximal run of word characters.
fn sigil_tokens(text: &str, sigil: char) -> BTreeSet<String> {
    let mut tokens = BTreeSet::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == sigil {
            let start = i;
            let mut j = i + 1;
            while j < chars.len() && is_word_char(chars[j]) {
                j += 1;
            }
            if j > i + 1 {
                tokens.insert(chars[start..j].iter().collect());
            }
            i = j;
        } else {
            i += 1;
        }
    }
    tokens
}

/// Maximal non-whitespace runs starting with http:// or https://.
fn urls(text: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for scheme in ["https://", "http://"] {
        let mut rest = text;
        while let Some(pos) = rest.find(scheme) {
            let tail = &rest[pos..];
            let end = tail.find(char::is_whitespace).unwrap_or(tail.len());
            // Avoid double-counting https:// hits when scanning for http://.
            if scheme == "http://" || !out.contains(&tail[..end]) {
                out.insert(tail[..end].to_string());
            }
            rest = &rest[pos + scheme.len()..];
        }
    }
    // The http:// pass also matches the tail of https://; drop those.
    let dupes: Vec<String> = out
        .iter()
        .filter(|u| u.starts_with("http://") && out.contains(&format!("https://{}", &u["http://".len()..])))
        .cloned()
        .collect();
    for d in dupes {
        out.remove(&d);
    }
    out
}

fn is_cyrillic(c: char) -> bool {
    matches!(c,
        '\u{0400}'..='\u{04FF}'   // Cyrillic
        | '\u{0500}'..='\u{052F}' // Cyrillic Supplement
        | '\u{1C80}'..='\u{1C8F}' // Cyrillic Extended-C
        | '\u{2DE0}'..='\u{2DFF}' // Cyrillic Extended-A
        | '\u{A640}'..='\u{A69F}' // Cyrillic Extended-B
    )
}
