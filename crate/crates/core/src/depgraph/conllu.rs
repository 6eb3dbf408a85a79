//! Minimal CoNLL-U reader and writer.
//!
//! Only the columns needed to build typed dependency graphs are kept: FORM,
//! UPOS, HEAD and DEPREL. Multiword-token ranges (`3-4`) and empty nodes
//! (`5.1`) are skipped.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// One parsed sentence.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConllSentence {
    pub tokens: Vec<String>,
    pub pos_tags: Vec<String>,
    /// 1-based heads, `0` for the root.
    pub heads: Vec<usize>,
    pub labels: Vec<String>,
}

impl ConllSentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn read_conllu<R: BufRead>(reader: R) -> Result<Vec<ConllSentence>> {
    let mut sentences = Vec::new();
    let mut current = ConllSentence::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        id.parse::<usize>().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("token ID {id:?} is not an integer"),
        })?;
        let head = cols[6].parse::<usize>().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("HEAD {:?} is not an integer", cols[6]),
        })?;
        current.tokens.push(cols[1].to_string());
        current.pos_tags.push(cols[3].to_string());
        current.heads.push(head);
        current.labels.push(cols[7].to_string());
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

/// Writes sentences as CoNLL-U; unused columns are `_`.
pub fn write_conllu<W: Write>(mut out: W, sentences: &[ConllSentence]) -> Result<()> {
    for s in sentences {
        for i in 0..s.len() {
            writeln!(
                out,
                "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_",
                i + 1,
                s.tokens[i],
                s.pos_tags[i],
                s.heads[i],
                s.labels[i]
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TWO: &str = "# sent_id = 1\n\
1\tThe\tthe\tDET\tDT\t_\t2\tdet\t_\t_\n\
2\tfood\tfood\tNOUN\tNN\t_\t4\tnsubj\t_\t_\n\
3\twas\tbe\tAUX\tVBD\t_\t4\tcop\t_\t_\n\
4\tgreat\tgreat\tADJ\tJJ\t_\t0\troot\t_\t_\n\
\n\
# sent_id = 2\n\
1\tBad\tbad\tADJ\tJJ\t_\t2\tamod\t_\t_\n\
2\tservice\tservice\tNOUN\tNN\t_\t0\troot\t_\t_\n";

    #[test]
    fn two_sentences() {
        let s = read_conllu(TWO.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].len(), 4);
        assert_eq!(s[1].len(), 2);
        assert_eq!(s[0].heads, vec![2, 4, 4, 0]);
        assert_eq!(s[0].labels[1], "nsubj");
        assert_eq!(s[1].pos_tags, vec!["ADJ", "NOUN"]);
    }

    #[test]
    fn comments_only() {
        let s = read_conllu("# a\n# b\n\n".as_bytes()).unwrap();
        assert!(s.is_empty());
    }

    #[test]
    fn ranges_and_empty_nodes_are_skipped() {
        let text = "1\tI\t_\tPRON\t_\t_\t2\tnsubj\t_\t_\n\
2\tlike\t_\tVERB\t_\t_\t0\troot\t_\t_\n\
3-4\tdella\t_\t_\t_\t_\t_\t_\t_\t_\n\
3\tdi\t_\tADP\t_\t_\t5\tcase\t_\t_\n\
4\tla\t_\tDET\t_\t_\t5\tdet\t_\t_\n\
4.1\tgone\t_\tVERB\t_\t_\t_\t_\t_\t_\n\
5\tpizza\t_\tNOUN\t_\t_\t2\tobj\t_\t_\n";
        let s = read_conllu(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
        // 7 lines, minus the range and the empty node
        assert_eq!(s[0].len(), 5);
        assert_eq!(s[0].tokens, vec!["I", "like", "di", "la", "pizza"]);
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let text = "# c\n1\tA\t_\tX\t_\t_\t0\troot\t_\n";
        match read_conllu(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let text = "1\tA\t_\tX\t_\t_\t0\troot\t_\t_\n2\tB\t_\tX\t_\t_\tone\tdep\t_\t_\n";
        match read_conllu(text.as_bytes()) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("HEAD"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn sentence() -> impl Strategy<Value = ConllSentence> {
        (1usize..8).prop_flat_map(|n| {
            (
                proptest::collection::vec("[a-z]{1,6}", n),
                proptest::collection::vec("[A-Z]{2,4}", n),
                proptest::collection::vec(0..=n, n),
                proptest::collection::vec("[a-z]{2,5}", n),
            )
                .prop_map(|(tokens, pos_tags, heads, labels)| ConllSentence {
                    tokens,
                    pos_tags,
                    heads,
                    labels,
                })
        })
    }

    proptest! {
        #[test]
        fn write_then_read_round_trips(sents in proptest::collection::vec(sentence(), 0..4)) {
            let mut buf = Vec::new();
            write_conllu(&mut buf, &sents).unwrap();
            let back = read_conllu(buf.as_slice()).unwrap();
            prop_assert_eq!(back, sents);
        }
    }
}
