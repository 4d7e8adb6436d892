use serde::{Deserialize, Serialize};

/// Weight assigned to a string literal by the weighted basic-feature rule.
///
/// `weight = min(chars, cap)`, multiplied by `special_factor` when the
/// string looks like a URL or a filesystem path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StringWeighting {
    pub cap: f64,
    pub special_factor: f64,
}

impl Default for StringWeighting {
    fn default() -> Self {
        Self {
            cap: 50.0,
            special_factor: 2.0,
        }
    }
}

impl StringWeighting {
    pub fn weight(&self, s: &str) -> f64 {
        let base = (s.chars().count() as f64).min(self.cap);
        if is_special(s) {
            base * self.special_factor
        } else {
            base
        }
    }
}

fn is_special(s: &str) -> bool {
    s.contains("://") || s.contains('/') || s.contains('\\')
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractOptions {
    /// Shortest string literal kept, in characters.
    pub min_string_len: usize,
    pub weighting: StringWeighting,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            min_string_len: 5,
            weighting: StringWeighting::default(),
        }
    }
}

fn printable(c: char) -> bool {
    c == '\t' || !c.is_control()
}

/// Finds NUL-terminated printable runs in `data`.
///
/// Each NUL-delimited segment contributes at most one string: its longest
/// printable suffix, i.e. the run that actually ends at the terminator.
/// Printable means valid UTF-8 without control characters (tab allowed).
/// Bytes after the last NUL are not terminated and are ignored.
pub fn scan_strings(data: &[u8], min_len: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut segments = data.split(|&b| b == 0);
    // The final piece has no terminator.
    let last = segments.next_back();
    debug_assert!(last.is_some());
    for segment in segments {
        if let Some(s) = printable_suffix(segment) {
            if s.chars().count() >= min_len.max(1) {
                out.push(s);
            }
        }
    }
    out
}

fn printable_suffix(segment: &[u8]) -> Option<String> {
    let mut run = String::new();
    for chunk in segment.utf8_chunks() {
        for c in chunk.valid().chars() {
            if printable(c) {
                run.push(c);
            } else {
                run.clear();
            }
        }
        if !chunk.invalid().is_empty() {
            run.clear();
        }
    }
    (!run.is_empty()).then_some(run)
}
