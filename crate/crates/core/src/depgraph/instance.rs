use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::conllu::ConllSentence;
use super::graph::DepGraph;
use super::vocab::{RelationVocab, TokenVocab};
use crate::error::{Error, Result};

/// Sentiment polarity of a target mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub const ALL: [Polarity; 3] = [Polarity::Positive, Polarity::Negative, Polarity::Neutral];
    pub const NUM_CLASSES: usize = 3;

    /// Signed value: positive 1, negative -1, neutral 0.
    pub fn value(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
            Polarity::Neutral => 0,
        }
    }

    /// Output-class index used by the classifier.
    pub fn class_index(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Negative => 1,
            Polarity::Neutral => 2,
        }
    }

    pub fn from_class_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "positive" => Some(Polarity::Positive),
            "negative" => Some(Polarity::Negative),
            "neutral" => Some(Polarity::Neutral),
            _ => None,
        }
    }
}

/// Half-open token interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.start < self.end && self.end <= n {
            Ok(())
        } else {
            Err(Error::InvalidInstance(format!(
                "target span [{}, {}) invalid for {} tokens",
                self.start, self.end, n
            )))
        }
    }
}

impl From<[usize; 2]> for Span {
    fn from(v: [usize; 2]) -> Self {
        Span::new(v[0], v[1])
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

/// One line of an instance JSONL file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    pub head: Vec<usize>,
    pub deprel: Vec<String>,
    pub target: Span,
    pub polarity: Polarity,
}

impl InstanceRecord {
    pub fn from_conll(sentence: &ConllSentence, target: Span, polarity: Polarity) -> Self {
        InstanceRecord {
            id: None,
            tokens: sentence.tokens.clone(),
            pos: sentence.pos_tags.clone(),
            head: sentence.heads.clone(),
            deprel: sentence.labels.clone(),
            target,
            polarity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.tokens.len();
        if n == 0 {
            return Err(Error::InvalidInstance("no tokens".into()));
        }
        for (name, len) in [
            ("pos", self.pos.len()),
            ("head", self.head.len()),
            ("deprel", self.deprel.len()),
        ] {
            if len != n {
                return Err(Error::InvalidInstance(format!(
                    "{name} has {len} entries, tokens has {n}"
                )));
            }
        }
        self.target.check(n)
    }
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<InstanceRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstanceRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        rec.validate().map_err(|e| Error::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[InstanceRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Word, POS and relation vocabularies, built from a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabularies {
    pub words: TokenVocab,
    pub pos: TokenVocab,
    pub relations: RelationVocab,
}

impl Vocabularies {
    /// Collects every word, tag and arc label. Root arcs are not edges, so
    /// their labels are not collected.
    pub fn build(records: &[InstanceRecord]) -> Self {
        let mut words = TokenVocab::new();
        let mut pos = TokenVocab::new();
        let mut relations = RelationVocab::new();
        for r in records {
            for t in &r.tokens {
                words.insert(t);
            }
            for p in &r.pos {
                pos.insert(p);
            }
            for (h, l) in r.head.iter().zip(&r.deprel) {
                if *h != 0 {
                    relations.insert(l);
                }
            }
        }
        Vocabularies {
            words,
            pos,
            relations,
        }
    }

    pub fn encode(&self, record: &InstanceRecord, index: usize) -> Result<Instance> {
        record.validate()?;
        let graph = DepGraph::build(&record.head, &record.deprel, &self.relations)?;
        Ok(Instance {
            id: record.id.clone().unwrap_or_else(|| index.to_string()),
            tokens: record.tokens.clone(),
            word_ids: record.tokens.iter().map(|t| self.words.id(t)).collect(),
            pos_tags: record.pos.iter().map(|p| self.pos.id(p)).collect(),
            target: record.target,
            polarity: record.polarity,
            graph,
        })
    }

    pub fn encode_all(&self, records: &[InstanceRecord]) -> Result<Vec<Instance>> {
        records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                self.encode(r, i)
                    .map_err(|e| Error::InvalidInstance(format!("instance {i}: {e}")))
            })
            .collect()
    }
}

/// A sentence, its target mention, the gold polarity and the typed graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: String,
    pub tokens: Vec<String>,
    pub word_ids: Vec<usize>,
    pub pos_tags: Vec<usize>,
    pub target: Span,
    pub polarity: Polarity,
    pub graph: DepGraph,
}

impl Instance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Same instance over a different graph.
    pub fn with_graph(&self, graph: DepGraph) -> Result<Self> {
        if graph.n() != self.len() {
            return Err(Error::InvalidInstance(format!(
                "graph has {} nodes, sentence has {} tokens",
                graph.n(),
                self.len()
            )));
        }
        Ok(Instance {
            graph,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> InstanceRecord {
        serde_json::from_str(
            r#"{"tokens":["The","food","was","great"],"pos":["DET","NOUN","AUX","ADJ"],
                "head":[2,4,4,0],"deprel":["det","nsubj","cop","root"],
                "target":[1,2],"polarity":"positive"}"#,
        )
        .unwrap()
    }

    #[test]
    fn parses_and_encodes() {
        let r = record();
        assert_eq!(r.target, Span::new(1, 2));
        let v = Vocabularies::build(std::slice::from_ref(&r));
        assert!(v.relations.get("root").is_none());
        assert_eq!(v.relations.len(), RelationVocab::NUM_RESERVED + 3);
        let inst = v.encode(&r, 7).unwrap();
        assert_eq!(inst.id, "7");
        assert_eq!(inst.graph.n(), 4);
        assert_eq!(inst.word_ids, vec![1, 2, 3, 4]);
        assert_eq!(inst.graph.label(1, 3), v.relations.id("nsubj"));
    }

    #[test]
    fn rejects_schema_violations() {
        let bad = r#"{"tokens":["a"],"pos":["X"],"head":[0],"deprel":["root"],"target":[0,2],"polarity":"positive"}"#;
        assert!(read_jsonl(bad.as_bytes()).is_err());
        let bad = r#"{"tokens":["a"],"pos":["X"],"head":[0],"deprel":["root"],"target":[0,1],"polarity":"great"}"#;
        assert!(read_jsonl(bad.as_bytes()).is_err());
        let bad = r#"{"tokens":["a"],"pos":["X"],"head":[0],"deprel":["root"],"target":[0,1],"polarity":"neutral","x":1}"#;
        assert!(read_jsonl(bad.as_bytes()).is_err());
        let bad = r#"{"tokens":["a","b"],"pos":["X"],"head":[0,1],"deprel":["root","x"],"target":[0,1],"polarity":"neutral"}"#;
        assert!(read_jsonl(bad.as_bytes()).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let mut r = record();
        r.id = Some("s1".into());
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &[r.clone(), record()]).unwrap();
        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, vec![r, record()]);
    }

    #[test]
    fn polarity_values() {
        assert_eq!(Polarity::Positive.value(), 1);
        assert_eq!(Polarity::Negative.value(), -1);
        assert_eq!(Polarity::Neutral.value(), 0);
        for p in Polarity::ALL {
            assert_eq!(Polarity::from_class_index(p.class_index()), Some(p));
            assert_eq!(Polarity::parse(p.name()), Some(p));
        }
    }
}
