//! Corpus ingestion for the three-file split layout
//! (`seq.in` / `seq.out` / `label` per split directory), label schema
//! construction, BIO validation and padded batching.
//!
//! Files are UTF-8 with one utterance per line. Written files always end
//! with a newline; a missing final newline is accepted on load. Tokens and
//! tags are separated by single spaces, so canonical files round-trip
//! byte for byte.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::encoder::TokenVocab;
use crate::error::{Error, Result};

pub const TOKENS_FILE: &str = "seq.in";
pub const TAGS_FILE: &str = "seq.out";
pub const INTENT_FILE: &str = "label";

pub const TRAIN_DIR: &str = "train";
pub const VALID_DIR: &str = "dev";
pub const TEST_DIR: &str = "test";

pub const OUTSIDE: &str = "O";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Utterance {
    pub tokens: Vec<String>,
    pub intent: String,
    pub tags: Vec<String>,
}

impl Utterance {
    pub fn new(tokens: Vec<String>, intent: impl Into<String>, tags: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::EmptyUtterance);
        }
        if tokens.len() != tags.len() {
            return Err(Error::Alignment(format!(
                "{} tokens vs {} tags",
                tokens.len(),
                tags.len()
            )));
        }
        Ok(Self {
            tokens,
            intent: intent.into(),
            tags,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Splits a BIO tag into its prefix (`'B'`/`'I'`) and slot type. `O` and
/// malformed tags return `None`.
pub fn split_tag(tag: &str) -> Option<(char, &str)> {
    let (prefix, ty) = tag.split_once('-')?;
    match prefix {
        "B" if !ty.is_empty() => Some(('B', ty)),
        "I" if !ty.is_empty() => Some(('I', ty)),
        _ => None,
    }
}

fn is_valid_tag(tag: &str) -> bool {
    tag == OUTSIDE || split_tag(tag).is_some()
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path).map_err(|e| Error::data(path, None, format!("cannot read: {e}")))?;
    let text = String::from_utf8(bytes).map_err(|_| Error::data(path, None, "not valid UTF-8"))?;
    let mut lines: Vec<String> = text.split('\n').map(str::to_string).collect();
    if lines.last().is_some_and(String::is_empty) {
        lines.pop();
    }
    Ok(lines)
}

/// Loads one split directory. Line `i` of the three files forms utterance `i`.
pub fn load_split(dir: &Path) -> Result<Vec<Utterance>> {
    let tok_path = dir.join(TOKENS_FILE);
    let tag_path = dir.join(TAGS_FILE);
    let int_path = dir.join(INTENT_FILE);
    let tokens = read_lines(&tok_path)?;
    let tags = read_lines(&tag_path)?;
    let intents = read_lines(&int_path)?;
    if tags.len() != tokens.len() {
        return Err(Error::data(
            &tag_path,
            None,
            format!("{} lines but {} has {}", tags.len(), TOKENS_FILE, tokens.len()),
        ));
    }
    if intents.len() != tokens.len() {
        return Err(Error::data(
            &int_path,
            None,
            format!("{} lines but {} has {}", intents.len(), TOKENS_FILE, tokens.len()),
        ));
    }
    let mut out = Vec::with_capacity(tokens.len());
    for (i, ((tok_line, tag_line), intent)) in tokens.iter().zip(&tags).zip(&intents).enumerate() {
        let line = i + 1;
        let toks: Vec<String> = tok_line.split_whitespace().map(str::to_string).collect();
        let tgs: Vec<String> = tag_line.split_whitespace().map(str::to_string).collect();
        if toks.is_empty() {
            return Err(Error::data(&tok_path, Some(line), "empty line"));
        }
        if tgs.is_empty() {
            return Err(Error::data(&tag_path, Some(line), "empty line"));
        }
        let intent = intent.trim();
        if intent.is_empty() {
            return Err(Error::data(&int_path, Some(line), "empty line"));
        }
        if toks.len() != tgs.len() {
            return Err(Error::data(
                &tag_path,
                Some(line),
                format!("{} tokens vs {} tags", toks.len(), tgs.len()),
            ));
        }
        if let Some(bad) = tgs.iter().find(|t| !is_valid_tag(t)) {
            return Err(Error::data(&tag_path, Some(line), format!("malformed tag {bad:?}")));
        }
        out.push(Utterance {
            tokens: toks,
            intent: intent.to_string(),
            tags: tgs,
        });
    }
    Ok(out)
}

/// Writes a split in the three-file layout, creating `dir` if needed.
pub fn write_split(dir: &Path, utterances: &[Utterance]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut tokens = String::new();
    let mut tags = String::new();
    let mut intents = String::new();
    for u in utterances {
        tokens.push_str(&u.tokens.join(" "));
        tokens.push('\n');
        tags.push_str(&u.tags.join(" "));
        tags.push('\n');
        intents.push_str(&u.intent);
        intents.push('\n');
    }
    fs::write(dir.join(TOKENS_FILE), tokens)?;
    fs::write(dir.join(TAGS_FILE), tags)?;
    fs::write(dir.join(INTENT_FILE), intents)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BioViolation {
    pub position: usize,
    pub tag: String,
}

/// Reports every `I-x` not preceded by `B-x` or `I-x`.
pub fn validate_bio<S: AsRef<str>>(tags: &[S]) -> Vec<BioViolation> {
    let mut out = Vec::new();
    let mut prev: Option<&str> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let cur = split_tag(tag);
        if let Some(('I', ty)) = cur {
            if prev != Some(ty) {
                out.push(BioViolation {
                    position: i,
                    tag: tag.to_string(),
                });
            }
        }
        prev = cur.map(|(_, ty)| ty);
    }
    out
}

/// Intent labels and BIO tag inventory. Orderings are lexicographic; the
/// tag list is `O` followed by `B-x`, `I-x` for each slot type `x`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LabelSchema {
    intents: Vec<String>,
    slot_types: Vec<String>,
    bio_tags: Vec<String>,
    #[serde(skip)]
    intent_index: HashMap<String, usize>,
    #[serde(skip)]
    tag_index: HashMap<String, usize>,
}

impl LabelSchema {
    pub fn new(intents: Vec<String>, slot_types: Vec<String>) -> Result<Self> {
        let unique = |v: &[String]| v.iter().collect::<BTreeSet<_>>().len() == v.len();
        if !unique(&intents) || !unique(&slot_types) {
            return Err(Error::Contract("duplicate labels in schema".into()));
        }
        let mut bio_tags = vec![OUTSIDE.to_string()];
        for ty in &slot_types {
            bio_tags.push(format!("B-{ty}"));
            bio_tags.push(format!("I-{ty}"));
        }
        let index = |v: &[String]| v.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Self {
            intent_index: index(&intents),
            tag_index: index(&bio_tags),
            intents,
            slot_types,
            bio_tags,
        })
    }

    /// Union of labels over all given splits.
    pub fn build(splits: &[&[Utterance]]) -> Self {
        let mut intents = BTreeSet::new();
        let mut types = BTreeSet::new();
        for u in splits.iter().flat_map(|s| s.iter()) {
            intents.insert(u.intent.clone());
            for t in &u.tags {
                if let Some((_, ty)) = split_tag(t) {
                    types.insert(ty.to_string());
                }
            }
        }
        Self::new(intents.into_iter().collect(), types.into_iter().collect()).expect("sets are unique")
    }

    pub fn intents(&self) -> &[String] {
        &self.intents
    }

    pub fn slot_types(&self) -> &[String] {
        &self.slot_types
    }

    pub fn bio_tags(&self) -> &[String] {
        &self.bio_tags
    }

    pub fn num_intents(&self) -> usize {
        self.intents.len()
    }

    pub fn num_tags(&self) -> usize {
        self.bio_tags.len()
    }

    pub fn intent_id(&self, intent: &str) -> Option<usize> {
        self.intent_index.get(intent).copied()
    }

    pub fn tag_id(&self, tag: &str) -> Option<usize> {
        self.tag_index.get(tag).copied()
    }
}

#[derive(Clone, Debug)]
pub struct CorpusSplits {
    pub train: Vec<Utterance>,
    pub valid: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SplitStats {
    pub utterances: usize,
    /// Slot spans, each multi-token span counted once.
    pub slots: usize,
}

impl CorpusSplits {
    /// Loads `train/`, `dev/` and `test/` under `data_dir`.
    pub fn load(data_dir: &Path) -> Result<Self> {
        Ok(Self {
            train: load_split(&data_dir.join(TRAIN_DIR))?,
            valid: load_split(&data_dir.join(VALID_DIR))?,
            test: load_split(&data_dir.join(TEST_DIR))?,
        })
    }

    pub fn write(&self, data_dir: &Path) -> Result<()> {
        write_split(&data_dir.join(TRAIN_DIR), &self.train)?;
        write_split(&data_dir.join(VALID_DIR), &self.valid)?;
        write_split(&data_dir.join(TEST_DIR), &self.test)
    }

    pub fn schema(&self) -> LabelSchema {
        LabelSchema::build(&[&self.train, &self.valid, &self.test])
    }

    pub fn stats(split: &[Utterance]) -> SplitStats {
        SplitStats {
            utterances: split.len(),
            slots: split
                .iter()
                .map(|u| crate::evaluation::extract_spans(&u.tags).len())
                .sum(),
        }
    }
}

/// An utterance mapped to ids: `[CLS]`-prefixed token ids, intent id and
/// tag ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedUtterance {
    pub token_ids: Vec<usize>,
    pub intent: usize,
    pub tags: Vec<usize>,
}

impl EncodedUtterance {
    /// Number of real tokens, excluding `[CLS]`.
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

pub fn encode_utterance(u: &Utterance, vocab: &TokenVocab, schema: &LabelSchema) -> Result<EncodedUtterance> {
    let token_ids = crate::encoder::tokenize_and_index(&u.tokens, vocab)?;
    let intent = schema
        .intent_id(&u.intent)
        .ok_or_else(|| Error::Contract(format!("intent {:?} not in schema", u.intent)))?;
    let tags = u
        .tags
        .iter()
        .map(|t| {
            schema
                .tag_id(t)
                .ok_or_else(|| Error::Contract(format!("tag {t:?} not in schema")))
        })
        .collect::<Result<_>>()?;
    Ok(EncodedUtterance {
        token_ids,
        intent,
        tags,
    })
}

pub fn encode_all(utts: &[Utterance], vocab: &TokenVocab, schema: &LabelSchema) -> Result<Vec<EncodedUtterance>> {
    utts.iter().map(|u| encode_utterance(u, vocab, schema)).collect()
}

/// A padded batch. `token_ids[b]` is `[CLS]` followed by the tokens and then
/// `[PAD]` up to the longest utterance in the batch; `mask[b][i]` is true iff
/// token position `i` (excluding `[CLS]`) is real.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub token_ids: Vec<Vec<usize>>,
    pub mask: Vec<Vec<bool>>,
    pub intents: Vec<usize>,
    pub tags: Vec<Vec<usize>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn lengths(&self) -> Vec<usize> {
        self.mask.iter().map(|m| m.iter().filter(|&&b| b).count()).collect()
    }
}

/// Shuffles with `seed` and cuts into batches of `batch_size` (the last may
/// be shorter).
pub fn make_batches(utts: &[EncodedUtterance], batch_size: usize, seed: u64) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be positive");
    let mut order: Vec<usize> = (0..utts.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
        .chunks(batch_size)
        .map(|chunk| {
            let width = chunk.iter().map(|&i| utts[i].len()).max().unwrap_or(0);
            let mut batch = Batch {
                indices: chunk.to_vec(),
                token_ids: Vec::with_capacity(chunk.len()),
                mask: Vec::with_capacity(chunk.len()),
                intents: Vec::with_capacity(chunk.len()),
                tags: Vec::with_capacity(chunk.len()),
            };
            for &i in chunk {
                let u = &utts[i];
                let mut ids = u.token_ids.clone();
                ids.resize(width + 1, TokenVocab::PAD);
                let mut mask = vec![true; u.len()];
                mask.resize(width, false);
                batch.token_ids.push(ids);
                batch.mask.push(mask);
                batch.intents.push(u.intent);
                batch.tags.push(u.tags.clone());
            }
            batch
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn write_files(dir: &Path, tokens: &str, tags: &str, label: &str) {
        fs::create_dir_all(dir).unwrap();
        fs::write(dir.join(TOKENS_FILE), tokens).unwrap();
        fs::write(dir.join(TAGS_FILE), tags).unwrap();
        fs::write(dir.join(INTENT_FILE), label).unwrap();
    }

    #[test]
    fn load_single_line() {
        let tmp = tempfile::tempdir().unwrap();
        write_files(tmp.path(), "a b\n", "O B-x\n", "flight\n");
        let utts = load_split(tmp.path()).unwrap();
        assert_eq!(utts.len(), 1);
        assert_eq!(utts[0].len(), 2);
        assert_eq!(utts[0].intent, "flight");
        assert_eq!(utts[0].tags, s(&["O", "B-x"]));
    }

    #[test]
    fn load_rejects_token_tag_mismatch_with_line() {
        let tmp = tempfile::tempdir().unwrap();
        write_files(tmp.path(), "a b\n", "O\n", "flight\n");
        let err = load_split(tmp.path()).unwrap_err();
        match &err {
            Error::Data { line, path, .. } => {
                assert_eq!(*line, Some(1));
                assert!(path.ends_with(TAGS_FILE));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn load_errors() {
        let tmp = tempfile::tempdir().unwrap();
        // missing file
        assert!(matches!(load_split(tmp.path()), Err(Error::Data { .. })));
        // line count mismatch
        write_files(tmp.path(), "a\nb\n", "O\nO\n", "x\n");
        assert!(matches!(load_split(tmp.path()), Err(Error::Data { line: None, .. })));
        // empty line
        write_files(tmp.path(), "a\n\n", "O\nO\n", "x\nx\n");
        assert!(matches!(load_split(tmp.path()), Err(Error::Data { line: Some(2), .. })));
        // malformed tag
        write_files(tmp.path(), "a\n", "Q-x\n", "x\n");
        assert!(matches!(load_split(tmp.path()), Err(Error::Data { line: Some(1), .. })));
        // invalid utf-8
        write_files(tmp.path(), "a\n", "O\n", "x\n");
        fs::write(tmp.path().join(TOKENS_FILE), [0xffu8, b'\n']).unwrap();
        assert!(matches!(load_split(tmp.path()), Err(Error::Data { .. })));
    }

    #[test]
    fn missing_final_newline_is_accepted() {
        let tmp = tempfile::tempdir().unwrap();
        write_files(tmp.path(), "a b", "O B-x", "flight");
        assert_eq!(load_split(tmp.path()).unwrap().len(), 1);
    }

    #[test]
    fn validate_bio_examples() {
        assert!(validate_bio(&["O", "B-x", "I-x"]).is_empty());
        let v = validate_bio(&["I-x"]);
        assert_eq!(
            v,
            vec![BioViolation {
                position: 0,
                tag: "I-x".into()
            }]
        );
        let v = validate_bio(&["B-x", "I-y"]);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].position, 1);
        assert_eq!(validate_bio(&["O", "I-x", "I-x"]).len(), 1);
    }

    #[test]
    fn schema_examples() {
        let u = Utterance::new(s(&["a"]), "flight", s(&["B-x"])).unwrap();
        let schema = LabelSchema::build(&[std::slice::from_ref(&u)]);
        assert_eq!(schema.slot_types(), &s(&["x"]));
        assert_eq!(schema.bio_tags(), &s(&["O", "B-x", "I-x"]));

        let a = Utterance::new(s(&["t"]), "b", s(&["O"])).unwrap();
        let b = Utterance::new(s(&["t"]), "a", s(&["O"])).unwrap();
        let schema = LabelSchema::build(&[&[a], &[b]]);
        assert_eq!(schema.intents(), &s(&["a", "b"]));
        assert_eq!(schema.intent_id("b"), Some(1));
        assert_eq!(schema.num_tags(), 1);
    }

    #[test]
    fn multi_intent_labels_are_atomic() {
        let u = Utterance::new(s(&["t"]), "airfare#flight", s(&["O"])).unwrap();
        let schema = LabelSchema::build(&[&[u]]);
        assert_eq!(schema.intents(), &s(&["airfare#flight"]));
    }

    fn encoded(lens: &[usize]) -> Vec<EncodedUtterance> {
        lens.iter()
            .map(|&n| EncodedUtterance {
                token_ids: (0..=n).map(|i| i + 2).collect(),
                intent: n % 2,
                tags: vec![0; n],
            })
            .collect()
    }

    #[test]
    fn batches_sizes_masks_and_order() {
        let utts = encoded(&[3, 1, 4, 2, 5]);
        let batches = make_batches(&utts, 2, 7);
        assert_eq!(batches.iter().map(Batch::len).collect::<Vec<_>>(), vec![2, 2, 1]);
        for b in &batches {
            for (k, &i) in b.indices.iter().enumerate() {
                assert_eq!(b.lengths()[k], utts[i].len());
                assert_eq!(b.token_ids[k].len(), b.mask[k].len() + 1);
                assert_eq!(b.token_ids[k][..=utts[i].len()], utts[i].token_ids[..]);
            }
        }
        assert_eq!(batches, make_batches(&utts, 2, 7));
    }

    proptest! {
        #[test]
        fn split_round_trips_bit_exactly(
            lines in prop::collection::vec(
                (prop::collection::vec("[a-zàáảãạăâđèéêìíòóôơùúưýỹ_0-9]{1,6}", 1..6), "[a-z#_]{1,8}", any::<u64>()),
                1..8,
            )
        ) {
            let tmp = tempfile::tempdir().unwrap();
            let mut tok = String::new();
            let mut tag = String::new();
            let mut lab = String::new();
            for (tokens, intent, bits) in &lines {
                tok.push_str(&tokens.join(" "));
                tok.push('\n');
                let tags: Vec<&str> = (0..tokens.len())
                    .map(|i| match (bits >> (2 * i)) & 3 { 0 => "O", 1 => "B-x", 2 => "I-x", _ => "B-y.z" })
                    .collect();
                tag.push_str(&tags.join(" "));
                tag.push('\n');
                lab.push_str(intent);
                lab.push('\n');
            }
            write_files(tmp.path(), &tok, &tag, &lab);
            let utts = load_split(tmp.path()).unwrap();
            let out = tmp.path().join("out");
            write_split(&out, &utts).unwrap();
            prop_assert_eq!(fs::read_to_string(out.join(TOKENS_FILE)).unwrap(), tok);
            prop_assert_eq!(fs::read_to_string(out.join(TAGS_FILE)).unwrap(), tag);
            prop_assert_eq!(fs::read_to_string(out.join(INTENT_FILE)).unwrap(), lab);
        }
    }
}
