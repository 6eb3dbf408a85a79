//! Target annotations for parsed sentences.
//!
//! One target per line: `sentence<TAB>start<TAB>end<TAB>polarity`, where
//! `sentence` is the 0-based position of the sentence in the CoNLL-U file
//! and `[start, end)` are 0-based token offsets. Blank lines and lines
//! starting with `#` are skipped.

use std::io::BufRead;

use super::conllu::ConllSentence;
use super::instance::{InstanceRecord, Polarity, Span};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetLabel {
    pub sentence: usize,
    pub target: Span,
    pub polarity: Polarity,
}

pub fn read_target_labels<R: BufRead>(reader: R) -> Result<Vec<TargetLabel>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { line: idx + 1, msg };
        let cols: Vec<&str> = text.split('\t').collect();
        if cols.len() != 4 {
            return Err(err(format!("expected 4 tab-separated columns, found {}", cols.len())));
        }
        let num = |s: &str, what: &str| s.parse::<usize>().map_err(|_| err(format!("bad {what} {s:?}")));
        let polarity = Polarity::parse(cols[3]).ok_or_else(|| err(format!("unknown polarity {:?}", cols[3])))?;
        out.push(TargetLabel {
            sentence: num(cols[0], "sentence index")?,
            target: Span::new(num(cols[1], "start")?, num(cols[2], "end")?),
            polarity,
        });
    }
    Ok(out)
}

/// One validated record per label, with id `"{sentence}:{start}-{end}"`.
pub fn attach_targets(sentences: &[ConllSentence], labels: &[TargetLabel]) -> Result<Vec<InstanceRecord>> {
    labels
        .iter()
        .map(|l| {
            let s = sentences.get(l.sentence).ok_or(Error::OutOfRange {
                what: "sentence",
                id: l.sentence,
                size: sentences.len(),
            })?;
            let mut r = InstanceRecord::from_conll(s, l.target, l.polarity);
            r.id = Some(format!("{}:{}-{}", l.sentence, l.target.start, l.target.end));
            r.validate()?;
            Ok(r)
        })
        .collect()
}
