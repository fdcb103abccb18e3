//! Corpus data model: tokens, utterances, vocabularies, stratified splits and
//! the grammar-driven synthetic corpus generator.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contextmap::{classify_context, DialogueAct, DialogueContext, LmClassId};
use crate::error::{Error, Result};
use crate::semantics::{CaseFrame, SemanticLexicon};

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const NOISE: &str = "<noise>";

/// A normalized word: lowercase, no whitespace, never empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Token(String);

impl Token {
    /// Normalize a raw word. Returns `None` when nothing survives.
    pub fn new(raw: &str) -> Option<Token> {
        let s = normalize(raw);
        (!s.is_empty()).then_some(Token(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

fn normalize(raw: &str) -> String {
    if raw.starts_with('<') && raw.ends_with('>') && raw.len() > 2 {
        // markup tokens such as `<noise>` pass through unchanged
        return raw.to_lowercase();
    }
    raw.chars()
        .filter(|c| c.is_alphanumeric() || *c == '_')
        .flat_map(char::to_lowercase)
        .collect()
}

impl AsRef<str> for Token {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Lowercase, strip punctuation, and join known multiword names with `_`.
pub fn tokenize<S: AsRef<str>>(text: &str, multiword: &[S]) -> Vec<Token> {
    let spaced: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '_' { c } else { ' ' })
        .collect();
    let words: Vec<String> = spaced
        .split_whitespace()
        .filter_map(|w| Token::new(w).map(|t| t.0))
        .collect();

    let mut names: Vec<Vec<String>> = multiword
        .iter()
        .map(|n| n.as_ref().split_whitespace().map(str::to_lowercase).collect::<Vec<_>>())
        .filter(|n| n.len() > 1)
        .collect();
    // longest match first
    names.sort_by_key(|n| std::cmp::Reverse(n.len()));

    let mut out = Vec::with_capacity(words.len());
    let mut i = 0;
    while i < words.len() {
        let hit = names
            .iter()
            .find(|n| words.len() - i >= n.len() && words[i..i + n.len()] == n[..]);
        match hit {
            Some(n) => {
                out.push(Token(n.join("_")));
                i += n.len();
            }
            None => {
                out.push(Token(words[i].clone()));
                i += 1;
            }
        }
    }
    out
}

/// One user utterance with the context it answered and its reference frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub context: DialogueContext,
    pub ref_frame: CaseFrame,
    pub tokens: Vec<Token>,
}

impl Utterance {
    pub fn lm_class(&self) -> LmClassId {
        classify_context(&self.context)
    }

    pub fn text(&self) -> String {
        let words: Vec<&str> = self.tokens.iter().map(Token::as_str).collect();
        words.join(" ")
    }
}

/// Dense word index with reserved unknown and boundary symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub const UNK_ID: u32 = 0;
    pub const BOS_ID: u32 = 1;
    pub const EOS_ID: u32 = 2;

    /// Build from ordinary words; specials are added in front. Duplicates
    /// and specials in the input are ignored.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut ordinary: Vec<String> = words
            .into_iter()
            .map(|w| w.as_ref().to_string())
            .filter(|w| w != UNK && w != BOS && w != EOS)
            .collect();
        ordinary.sort();
        ordinary.dedup();
        let mut all = vec![UNK.to_string(), BOS.to_string(), EOS.to_string()];
        all.extend(ordinary);
        Self::from_ordered(all).expect("specials are in place")
    }

    /// Rebuild from a full ordered entry list, as stored in model files.
    pub fn from_ordered(words: Vec<String>) -> Result<Self> {
        if words.len() < 3 || words[0] != UNK || words[1] != BOS || words[2] != EOS {
            return Err(Error::invalid("vocabulary", "first entries must be <unk>, <s>, </s>"));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::invalid("vocabulary", format!("duplicate entry `{w}`")));
            }
        }
        Ok(Vocabulary { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Index of `word`, or the unknown id.
    pub fn id(&self, word: &str) -> u32 {
        self.index.get(word).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn is_boundary(id: u32) -> bool {
        id == Self::BOS_ID || id == Self::EOS_ID
    }
}

pub fn build_vocabulary(corpus: &[Utterance], min_count: usize) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if min_count == 0 {
        return Err(Error::invalid("min_count", "must be at least 1"));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for u in corpus {
        for t in &u.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    Ok(Vocabulary::from_words(
        counts.into_iter().filter(|&(_, c)| c >= min_count).map(|(w, _)| w),
    ))
}

/// Training-material distribution of the ten specific classes:
/// (class, utterances, words).
pub const REFERENCE_CLASS_SIZES: [(LmClassId, usize, usize); 10] = [
    (LmClassId::ReqDepCity, 375, 873),
    (LmClassId::ReqDepArrCity, 1808, 6954),
    (LmClassId::ReqArrCity, 374, 846),
    (LmClassId::ReqTime, 1291, 3945),
    (LmClassId::ReqDate, 1797, 4943),
    (LmClassId::VerDepCity, 506, 914),
    (LmClassId::VerDepArrCity, 1804, 3508),
    (LmClassId::VerArrCity, 398, 655),
    (LmClassId::VerTime, 1386, 2056),
    (LmClassId::VerDate, 1565, 2317),
];

/// Per-class utterance counts proportional to the field-trial distribution.
pub fn class_size_counts(scale: f64) -> BTreeMap<LmClassId, usize> {
    REFERENCE_CLASS_SIZES
        .iter()
        .map(|&(c, n, _)| (c, (n as f64 * scale).round() as usize))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SlotKind {
    Dep,
    Arr,
    Hour,
    PartDay,
    Date,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Part {
    Word(String),
    Slot(SlotKind),
}

#[derive(Debug, Clone)]
struct Template {
    weight: f64,
    parts: Vec<Part>,
}

#[derive(Debug, Clone, Default)]
struct ClassGrammar {
    contexts: Vec<DialogueContext>,
    templates: Vec<Template>,
}

/// Context-conditioned template grammar, grouped by LM class.
#[derive(Debug, Clone, Default)]
pub struct Grammar {
    classes: BTreeMap<LmClassId, ClassGrammar>,
}

impl Grammar {
    pub fn builtin() -> Self {
        Self::parse(include_str!("../data/default.grammar")).expect("bundled grammar is valid")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut grammar = Grammar::default();
        let mut current: Option<LmClassId> = None;
        for (n, raw) in text.lines().enumerate() {
            let lineno = n + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("[CLASS ") {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::parse(lineno, "unterminated class header"))?;
                let class: LmClassId = name
                    .parse()
                    .map_err(|_| Error::parse(lineno, format!("unknown class `{name}`")))?;
                grammar.classes.entry(class).or_default();
                current = Some(class);
                continue;
            }
            let class = current.ok_or_else(|| Error::parse(lineno, "template before any [CLASS] header"))?;
            let section = grammar.classes.get_mut(&class).expect("section exists");
            if let Some(rest) = line.strip_prefix("@context") {
                let mut it = rest.split_whitespace();
                let act = it.next().unwrap_or_default();
                let params = it.collect::<Vec<_>>().join("");
                let ctx =
                    DialogueContext::parse_parts(act, &params).map_err(|e| Error::parse(lineno, e.to_string()))?;
                if classify_context(&ctx) != class {
                    return Err(Error::parse(
                        lineno,
                        format!("context `{ctx}` does not belong to class `{class}`"),
                    ));
                }
                section.contexts.push(ctx);
                continue;
            }
            let (weight, body) = match line.split_once('|') {
                Some((w, b)) => (
                    w.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|w| w.is_finite() && *w >= 0.0)
                        .ok_or_else(|| Error::parse(lineno, format!("bad weight `{w}`")))?,
                    b,
                ),
                None => (1.0, line),
            };
            let parts = body
                .split_whitespace()
                .map(|w| match w {
                    "{dep}" => Ok(Part::Slot(SlotKind::Dep)),
                    "{arr}" => Ok(Part::Slot(SlotKind::Arr)),
                    "{hour}" => Ok(Part::Slot(SlotKind::Hour)),
                    "{partday}" => Ok(Part::Slot(SlotKind::PartDay)),
                    "{date}" => Ok(Part::Slot(SlotKind::Date)),
                    w if w.starts_with('{') => Err(Error::parse(lineno, format!("unknown placeholder `{w}`"))),
                    w => Token::new(w)
                        .map(|t| Part::Word(t.0))
                        .ok_or_else(|| Error::parse(lineno, format!("bad word `{w}`"))),
                })
                .collect::<Result<Vec<_>>>()?;
            if parts.is_empty() {
                return Err(Error::parse(lineno, "empty template"));
            }
            section.templates.push(Template { weight, parts });
        }
        for (class, section) in grammar.classes.iter_mut() {
            if section.contexts.is_empty() {
                if let Some(ctx) = class.canonical_context() {
                    section.contexts.push(ctx);
                }
            }
        }
        Ok(grammar)
    }

    pub fn classes(&self) -> impl Iterator<Item = LmClassId> + '_ {
        self.classes.keys().copied()
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorOptions {
    /// Probability of inserting a `<noise>` token into an utterance.
    pub noise_rate: f64,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        GeneratorOptions { noise_rate: 0.0 }
    }
}

/// Split `total` into integer parts proportional to `weights` (largest
/// remainder, ties to the earlier entry).
pub(crate) fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut parts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = parts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        parts[i] += 1;
    }
    parts
}

/// Generate a synthetic corpus with `class_counts[c]` utterances per class.
///
/// Template usage follows the grammar weights exactly (largest-remainder
/// apportionment), slot fillers and contexts are drawn from a seeded RNG.
/// Reference frames are built from the fillers, so the semantic parser must
/// reproduce them on the generated tokens.
pub fn generate_synthetic_corpus(
    grammar: &Grammar,
    lexicon: &SemanticLexicon,
    class_counts: &BTreeMap<LmClassId, usize>,
    seed: u64,
    options: &GeneratorOptions,
) -> Result<Vec<Utterance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let stations = lexicon.stations();
    let hours = lexicon.hour_words();
    let part_days = lexicon.part_day_words();
    let dates = lexicon.date_words();
    if stations.len() < 2 || hours.is_empty() || part_days.is_empty() || dates.is_empty() {
        return Err(Error::invalid("lexicon", "lexicon lacks filler words"));
    }

    for (&class, &count) in class_counts {
        if count == 0 {
            continue;
        }
        if class == LmClassId::ContextIndependent {
            return Err(Error::invalid("class_counts", "the fallback class has no grammar"));
        }
        let section = grammar
            .classes
            .get(&class)
            .filter(|s| !s.templates.is_empty())
            .ok_or_else(|| Error::invalid("grammar", format!("class `{class}` has no templates")))?;
        let weights: Vec<f64> = section.templates.iter().map(|t| t.weight).collect();
        let mut plan: Vec<usize> = apportion(count, &weights)
            .into_iter()
            .enumerate()
            .flat_map(|(i, n)| std::iter::repeat_n(i, n))
            .collect();
        plan.shuffle(&mut rng);

        for ti in plan {
            let template = &section.templates[ti];
            let context = section.contexts[rng.random_range(0..section.contexts.len())].clone();
            let mut frame = CaseFrame::default();
            let mut tokens = Vec::with_capacity(template.parts.len() + 1);

            let dep = rng.random_range(0..stations.len());
            let mut arr = rng.random_range(0..stations.len() - 1);
            if arr >= dep {
                arr += 1;
            }
            let (hour_word, hour) = &hours[rng.random_range(0..hours.len())];
            let (pd_word, pd) = &part_days[rng.random_range(0..part_days.len())];
            let date = &dates[rng.random_range(0..dates.len())];

            for part in &template.parts {
                let word = match part {
                    Part::Word(w) => {
                        if let Some(c) = lexicon.confirm_of(w) {
                            frame.confirm.get_or_insert(c);
                        }
                        w.clone()
                    }
                    Part::Slot(SlotKind::Dep) => {
                        frame.dep_city = Some(stations[dep].to_ascii_uppercase());
                        stations[dep].clone()
                    }
                    Part::Slot(SlotKind::Arr) => {
                        frame.arr_city = Some(stations[arr].to_ascii_uppercase());
                        stations[arr].clone()
                    }
                    Part::Slot(SlotKind::Hour) => {
                        frame.hour = Some(*hour);
                        hour_word.clone()
                    }
                    Part::Slot(SlotKind::PartDay) => {
                        frame.part_day = Some(*pd);
                        pd_word.clone()
                    }
                    Part::Slot(SlotKind::Date) => {
                        frame.dep_date = Some(date.to_ascii_uppercase());
                        date.clone()
                    }
                };
                tokens.push(Token(word));
            }
            if options.noise_rate > 0.0 && rng.random_bool(options.noise_rate.min(1.0)) {
                let at = rng.random_range(0..=tokens.len());
                tokens.insert(at, Token(NOISE.to_string()));
            }
            out.push(Utterance {
                id: format!("syn{seed}-{:06}", out.len()),
                context,
                ref_frame: frame,
                tokens,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct CorpusSplit {
    pub train: Vec<Utterance>,
    pub test: Vec<Utterance>,
    pub seed: u64,
    pub warnings: Vec<String>,
}

/// Stratified (by LM class) train/test split with `round(ratio * n)` test
/// utterances. Each class keeps at least one training utterance whenever
/// the requested test size allows it.
pub fn split_corpus(corpus: &[Utterance], test_ratio: f64, seed: u64) -> Result<CorpusSplit> {
    if !(test_ratio > 0.0 && test_ratio < 1.0) {
        return Err(Error::invalid("test_ratio", format!("{test_ratio} is outside (0, 1)")));
    }
    if corpus.len() < 2 {
        return Err(Error::invalid("corpus", "need at least two utterances to split"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: BTreeMap<LmClassId, Vec<usize>> = BTreeMap::new();
    for (i, u) in corpus.iter().enumerate() {
        strata.entry(u.lm_class()).or_default().push(i);
    }
    let total_test = (test_ratio * corpus.len() as f64).round() as usize;

    let classes: Vec<LmClassId> = strata.keys().copied().collect();
    let sizes: Vec<usize> = classes.iter().map(|c| strata[c].len()).collect();
    let quotas: Vec<f64> = sizes.iter().map(|&n| n as f64 * test_ratio).collect();
    let mut take: Vec<usize> = quotas
        .iter()
        .zip(&sizes)
        .map(|(q, &n)| (q.floor() as usize).min(n - 1))
        .collect();

    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.shuffle(&mut rng);
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - take[a] as f64;
        let fb = quotas[b] - take[b] as f64;
        fb.total_cmp(&fa)
    });
    let mut remaining = total_test.saturating_sub(take.iter().sum());
    for &i in &order {
        if remaining == 0 {
            break;
        }
        if take[i] + 1 < sizes[i] {
            take[i] += 1;
            remaining -= 1;
        }
    }
    let mut warnings = Vec::new();
    for &i in &order {
        if remaining == 0 {
            break;
        }
        if take[i] < sizes[i] {
            take[i] += 1;
            remaining -= 1;
            if take[i] == sizes[i] {
                let msg = format!("class `{}` has no training utterances left", classes[i]);
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let mut in_test = vec![false; corpus.len()];
    for (ci, class) in classes.iter().enumerate() {
        let mut idx = strata[class].clone();
        idx.shuffle(&mut rng);
        for &i in idx.iter().take(take[ci]) {
            in_test[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (u, t) in corpus.iter().zip(in_test) {
        if t {
            test.push(u.clone());
        } else {
            train.push(u.clone());
        }
    }
    Ok(CorpusSplit {
        train,
        test,
        seed,
        warnings,
    })
}

/// Write utterances as `id<TAB>act<TAB>params<TAB>frame<TAB>tokens` lines.
pub fn write_corpus<W: Write>(mut w: W, corpus: &[Utterance]) -> Result<()> {
    for u in corpus {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            u.id,
            u.context.act,
            u.context.params_str(),
            u.ref_frame,
            u.text()
        )?;
    }
    Ok(())
}

pub fn read_corpus<R: BufRead>(r: R) -> Result<Vec<Utterance>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::parse(
                lineno,
                format!("expected 5 columns, found {}", cols.len()),
            ));
        }
        let context =
            DialogueContext::parse_parts(cols[1], cols[2]).map_err(|e| Error::parse(lineno, e.to_string()))?;
        let ref_frame: CaseFrame = cols[3]
            .parse()
            .map_err(|e: Error| Error::parse(lineno, e.to_string()))?;
        let tokens: Vec<Token> = cols[4].split_whitespace().filter_map(Token::new).collect();
        if tokens.is_empty() {
            return Err(Error::parse(lineno, "utterance has no tokens"));
        }
        out.push(Utterance {
            id: cols[0].to_string(),
            context,
            ref_frame,
            tokens,
        });
    }
    Ok(out)
}

/// Requests vs confirms grouping key of an utterance.
pub fn act_group(u: &Utterance) -> DialogueAct {
    u.context.act
}
