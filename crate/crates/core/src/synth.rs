//! Small generated languages with known part-of-speech structure, for
//! fixtures, demos and end-to-end checks.
//!
//! Every language shares the same tag templates; only the lexicon (and its
//! script) differs. Tags are fully determined by word identity, while
//! sentence position alone leaves them ambiguous.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Corpus;
use crate::digest::derive_seed;
use crate::error::Result;
use crate::mlm::{train, Architecture, MlmConfig, MlmState};
use crate::tagger::{ComparisonInputs, TagDataset, TaggedSentence};
use crate::translit::TransliterationScheme;
use crate::wordpiece::train_vocabulary;

/// The bundled Cyrillic-to-Latin table.
pub const CYRILLIC_LATIN_TSV: &str = include_str!("../data/schemes/cyrillic_latin.tsv");

pub fn cyrillic_latin_scheme() -> TransliterationScheme {
    TransliterationScheme::parse(CYRILLIC_LATIN_TSV, "cyrillic_latin.tsv").expect("bundled table parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Script {
    Latin,
    Cyrillic,
}

impl Script {
    fn letters(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            Script::Latin => (
                &[
                    "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "x", "z",
                ],
                &["a", "e", "i", "o", "u", "y"],
            ),
            Script::Cyrillic => (
                &[
                    "б", "в", "г", "д", "ж", "з", "к", "л", "м", "н", "п", "р", "с", "т", "ф", "х", "ц", "ч", "ш",
                ],
                &["а", "е", "и", "о", "у", "ы", "э", "ю", "я"],
            ),
        }
    }
}

/// (tag, number of word types)
const CLASSES: &[(&str, usize)] = &[
    ("ADJ", 10),
    ("ADP", 5),
    ("ADV", 6),
    ("DET", 4),
    ("NOUN", 20),
    ("PRON", 5),
    ("VERB", 14),
];

const TEMPLATES: &[&[&str]] = &[
    &["DET", "NOUN", "VERB", "PUNCT"],
    &["PRON", "VERB", "ADV", "PUNCT"],
    &["DET", "ADJ", "NOUN", "VERB", "DET", "NOUN", "PUNCT"],
    &["NOUN", "VERB", "ADP", "DET", "NOUN", "PUNCT"],
    &["ADV", "PRON", "VERB", "DET", "ADJ", "NOUN", "PUNCT"],
    &["DET", "NOUN", "ADP", "NOUN", "VERB", "ADV", "PUNCT"],
    &["PRON", "VERB", "ADJ", "PUNCT"],
    &["ADV", "NOUN", "VERB", "ADP", "PRON", "PUNCT"],
];

#[derive(Debug, Clone)]
pub struct SyntheticLanguage {
    pub name: String,
    pub lexicon: BTreeMap<String, Vec<String>>,
}

impl SyntheticLanguage {
    /// A fresh lexicon in `script`. Word types are unique across tags.
    pub fn generate(name: &str, script: Script, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (consonants, vowels) = script.letters();
        let mut used = BTreeSet::new();
        let mut lexicon = BTreeMap::new();
        for &(tag, size) in CLASSES {
            let mut words = Vec::with_capacity(size);
            while words.len() < size {
                let syllables = rng.random_range(1..=3);
                let mut w = String::new();
                for _ in 0..syllables {
                    w.push_str(consonants[rng.random_range(0..consonants.len())]);
                    w.push_str(vowels[rng.random_range(0..vowels.len())]);
                }
                if rng.random_bool(0.3) {
                    w.push_str(consonants[rng.random_range(0..consonants.len())]);
                }
                if used.insert(w.clone()) {
                    words.push(w);
                }
            }
            lexicon.insert(tag.to_string(), words);
        }
        lexicon.insert("PUNCT".to_string(), vec![".".to_string()]);
        SyntheticLanguage {
            name: name.to_string(),
            lexicon,
        }
    }

    pub fn word_types(&self) -> usize {
        self.lexicon.values().map(Vec::len).sum()
    }

    pub fn sentence(&self, rng: &mut impl Rng) -> TaggedSentence {
        let template = TEMPLATES[rng.random_range(0..TEMPLATES.len())];
        let mut tokens = Vec::with_capacity(template.len());
        let mut tags = Vec::with_capacity(template.len());
        for &tag in template {
            let words = &self.lexicon[tag];
            tokens.push(words[rng.random_range(0..words.len())].clone());
            tags.push(tag.to_string());
        }
        TaggedSentence { tokens, tags }
    }

    pub fn tagged(&self, sentences: usize, seed: u64) -> TagDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = (0..sentences).map(|_| self.sentence(&mut rng)).collect();
        TagDataset::from_sentences(format!("synthetic:{}", self.name), s).expect("tokens and tags align")
    }

    pub fn corpus(&self, sentences: usize, seed: u64) -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lines: Vec<String> = (0..sentences)
            .map(|_| self.sentence(&mut rng).tokens.join(" "))
            .collect();
        Corpus::from_sentences(self.name.clone(), lines)
    }
}

/// Sizes for [`unseen_script_inputs`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureSizes {
    pub base_sentences: usize,
    pub base_vocab_size: usize,
    pub target_train: usize,
    pub target_valid: usize,
    pub tag_train: usize,
    pub tag_test: usize,
}

impl Default for FixtureSizes {
    fn default() -> Self {
        FixtureSizes {
            base_sentences: 1200,
            base_vocab_size: 300,
            target_train: 1200,
            target_valid: 150,
            tag_train: 120,
            tag_test: 300,
        }
    }
}

/// A Latin-script "high-resource" language trains the base vocabulary and
/// model; the target is a Cyrillic-script language none of whose letters
/// the base vocabulary has seen.
pub fn unseen_script_inputs(
    sizes: FixtureSizes,
    arch: Architecture,
    pretrain: &MlmConfig,
    seed: u64,
) -> Result<ComparisonInputs> {
    let high = SyntheticLanguage::generate("high", Script::Latin, derive_seed(seed, "synth/high"));
    let target = SyntheticLanguage::generate("target", Script::Cyrillic, derive_seed(seed, "synth/target"));
    let base_train = high.corpus(sizes.base_sentences, derive_seed(seed, "synth/high/train"));
    let base_valid = high.corpus(sizes.target_valid, derive_seed(seed, "synth/high/valid"));
    let base_vocab = train_vocabulary(&base_train, sizes.base_vocab_size, 2)?;
    let (fresh, reserved) = MlmState::fresh(&base_vocab, arch, derive_seed(seed, "synth/init"))?;
    let config = MlmConfig {
        seed: derive_seed(seed, "synth/pretrain"),
        ..*pretrain
    };
    let (base_state, _) = train(&fresh, &base_train, &base_valid, &reserved, &config)?;
    Ok(ComparisonInputs {
        base_vocab,
        base_state,
        train_corpus: target.corpus(sizes.target_train, derive_seed(seed, "synth/target/train")),
        valid_corpus: target.corpus(sizes.target_valid, derive_seed(seed, "synth/target/valid")),
        tag_train: target.tagged(sizes.tag_train, derive_seed(seed, "synth/target/tag-train")),
        tag_test: target.tagged(sizes.tag_test, derive_seed(seed, "synth/target/tag-test")),
    })
}
