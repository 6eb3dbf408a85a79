use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer id of a dependency relation label.
pub type LabelId = u32;

/// Relation label vocabulary.
///
/// Ids are contiguous. The first four are reserved and never reassigned:
/// [`NONE`](RelationVocab::NONE) marks non-edges, [`SELF`](RelationVocab::SELF)
/// the self-loop on every node, [`REMOVED`](RelationVocab::REMOVED) an ablated
/// label and [`UNK`](RelationVocab::UNK) a label not seen when the vocabulary
/// was built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationVocab {
    labels: Vec<String>,
    ids: HashMap<String, LabelId>,
}

const RESERVED: [&str; 4] = ["<none>", "<self>", "<removed>", "<unk>"];

impl RelationVocab {
    pub const NONE: LabelId = 0;
    pub const SELF: LabelId = 1;
    pub const REMOVED: LabelId = 2;
    pub const UNK: LabelId = 3;
    pub const NUM_RESERVED: usize = RESERVED.len();

    pub fn new() -> Self {
        let labels: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let ids = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i as LabelId))
            .collect();
        RelationVocab { labels, ids }
    }

    /// Builds a vocabulary from label strings in first-seen order.
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = Self::new();
        for l in labels {
            vocab.insert(l);
        }
        vocab
    }

    /// Adds a label, returning its id. Existing labels keep their id.
    pub fn insert(&mut self, label: &str) -> LabelId {
        if let Some(&id) = self.ids.get(label) {
            return id;
        }
        let id = self.labels.len() as LabelId;
        self.labels.push(label.to_string());
        self.ids.insert(label.to_string(), id);
        id
    }

    /// Id of `label`, or [`UNK`](Self::UNK) when unseen.
    pub fn id(&self, label: &str) -> LabelId {
        self.ids.get(label).copied().unwrap_or(Self::UNK)
    }

    pub fn get(&self, label: &str) -> Option<LabelId> {
        self.ids.get(label).copied()
    }

    pub fn label(&self, id: LabelId) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.len() == Self::NUM_RESERVED
    }

    pub fn is_reserved(id: LabelId) -> bool {
        (id as usize) < Self::NUM_RESERVED
    }

    pub fn non_reserved_ids(&self) -> std::ops::Range<LabelId> {
        Self::NUM_RESERVED as LabelId..self.labels.len() as LabelId
    }

    /// Labels in id order, reserved names included.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Short stable identifier derived from the label list.
    pub fn fingerprint(&self) -> String {
        let joined = self.labels.join("\n");
        format!("rel-{:016x}", crate::rng::fnv1a64(joined.as_bytes()))
    }
}

impl Default for RelationVocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Serialize for RelationVocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.labels.serialize(s)
    }
}

impl<'de> Deserialize<'de> for RelationVocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let labels = Vec::<String>::deserialize(d)?;
        Self::from_saved(labels).map_err(serde::de::Error::custom)
    }
}

impl RelationVocab {
    fn from_saved(labels: Vec<String>) -> Result<Self> {
        if labels.len() < RESERVED.len() || labels.iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(Error::InvalidArgument(
                "relation vocabulary does not start with the reserved labels".into(),
            ));
        }
        let mut vocab = Self::new();
        for l in &labels[RESERVED.len()..] {
            if vocab.ids.contains_key(l) {
                return Err(Error::InvalidArgument(format!("duplicate relation label {l:?}")));
            }
            vocab.insert(l);
        }
        Ok(vocab)
    }
}

/// Token vocabulary (words or POS tags); id 0 is the unknown entry.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenVocab {
    entries: Vec<String>,
    ids: HashMap<String, usize>,
}

impl TokenVocab {
    pub const UNK: usize = 0;
    const UNK_NAME: &'static str = "<unk>";

    pub fn new() -> Self {
        let mut v = TokenVocab {
            entries: Vec::new(),
            ids: HashMap::new(),
        };
        v.insert(Self::UNK_NAME);
        v
    }

    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Self::new();
        for t in tokens {
            v.insert(t);
        }
        v
    }

    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.entries.len();
        self.entries.push(token.to_string());
        self.ids.insert(token.to_string(), id);
        id
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(Self::UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.entries.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.len() <= 1
    }

    pub fn tokens(&self) -> &[String] {
        &self.entries
    }
}

impl Serialize for TokenVocab {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TokenVocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<String>::deserialize(d)?;
        if entries.first().map(String::as_str) != Some(Self::UNK_NAME) {
            return Err(serde::de::Error::custom("token vocabulary must start with <unk>"));
        }
        let mut v = TokenVocab::new();
        for e in &entries[1..] {
            v.insert(e);
        }
        if v.len() != entries.len() {
            return Err(serde::de::Error::custom("duplicate entries in token vocabulary"));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_ids_are_fixed() {
        let v = RelationVocab::from_labels(["nsubj", "amod", "nsubj"]);
        assert_eq!(v.len(), 6);
        assert_eq!(v.id("nsubj"), 4);
        assert_eq!(v.id("amod"), 5);
        assert_eq!(v.id("never-seen"), RelationVocab::UNK);
        assert_eq!(v.label(RelationVocab::SELF), Some("<self>"));
        assert_eq!(v.non_reserved_ids(), 4..6);
    }

    #[test]
    fn relation_vocab_save_load_keeps_ids() {
        let v = RelationVocab::from_labels(["det", "case", "obj"]);
        let json = serde_json::to_string(&v).unwrap();
        let back: RelationVocab = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
        assert_eq!(back.id("case"), 5);
    }

    #[test]
    fn relation_vocab_rejects_bad_reserved_prefix() {
        let err = serde_json::from_str::<RelationVocab>(r#"["<self>","<none>","<removed>","<unk>"]"#);
        assert!(err.is_err());
        let err = serde_json::from_str::<RelationVocab>(
            r#"["<none>","<self>","<removed>","<unk>","a","a"]"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn token_vocab_unknown_falls_back() {
        let v = TokenVocab::from_tokens(["the", "food", "the"]);
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("food"), 2);
        assert_eq!(v.id("pizza"), TokenVocab::UNK);
    }
}
