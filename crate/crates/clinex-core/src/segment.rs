//! Sentence segmentation for training and decoding units.

/// Maximum segment length; longer stretches are hard-wrapped.
pub const MAX_SEGMENT_CHARS: usize = 256;

/// A half-open character range of one document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

fn is_boundary(c: char) -> bool {
    matches!(c, '。' | '！' | '？' | '；' | '\n')
}

/// Split a character sequence into sentence segments. The delimiter
/// stays with its sentence; overlong sentences wrap at
/// [`MAX_SEGMENT_CHARS`]. Segments are non-empty, contiguous within the
/// text, and cover every character.
pub fn segment(chars: &[char]) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut start = 0usize;
    let push = |s: usize, e: usize, out: &mut Vec<Segment>| {
        let mut s = s;
        while e - s > MAX_SEGMENT_CHARS {
            out.push(Segment { start: s, end: s + MAX_SEGMENT_CHARS });
            s += MAX_SEGMENT_CHARS;
        }
        if e > s {
            out.push(Segment { start: s, end: e });
        }
    };
    for (i, &c) in chars.iter().enumerate() {
        if is_boundary(c) {
            push(start, i + 1, &mut out);
            start = i + 1;
        }
    }
    push(start, chars.len(), &mut out);
    out
}
