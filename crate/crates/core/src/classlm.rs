//! Word-class n-gram language models.
//!
//! `P(w_i | history) = P(w_i | c_i) · P(c_i | class history)`, with class
//! transitions smoothed by interpolated Witten-Bell and class-conditional
//! emissions estimated by relative frequency (zero-count members, `<unk>`
//! included, get a floor before renormalization).

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Utterance, Vocabulary};
use crate::error::{Error, Result};
use crate::wordclass::WordClassMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    /// Plain relative frequencies; unseen events get probability zero.
    None,
    WittenBell,
}

impl Smoothing {
    fn tag(self) -> u8 {
        match self {
            Smoothing::None => 0,
            Smoothing::WittenBell => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Smoothing::None),
            1 => Some(Smoothing::WittenBell),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub method: Smoothing,
    /// Relative weight given to zero-count class members before the class
    /// emission distribution is renormalized.
    pub unk_floor: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            method: Smoothing::WittenBell,
            unk_floor: 1e-6,
        }
    }
}

impl SmoothingConfig {
    pub fn unsmoothed() -> Self {
        SmoothingConfig {
            method: Smoothing::None,
            unk_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub label: String,
    pub utterances: u64,
    /// Training utterances longer than one token.
    pub multiword: u64,
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    backoff: f64,
    /// Explicit probabilities of seen successors, sorted by class id.
    seen: Vec<(u32, f64)>,
}

impl Node {
    fn lookup(&self, c: u32) -> Option<f64> {
        self.seen
            .binary_search_by_key(&c, |&(k, _)| k)
            .ok()
            .map(|i| self.seen[i].1)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Transitions {
    unigram: Vec<f64>,
    bigram: HashMap<u32, Node>,
    trigram: HashMap<(u32, u32), Node>,
}

/// A trained class n-gram model (order 2 or 3).
#[derive(Debug, Clone)]
pub struct ClassNGramModel {
    order: u8,
    vocab: Vocabulary,
    classmap: WordClassMap,
    emission: Vec<f64>,
    transitions: Transitions,
    smoothing: SmoothingConfig,
    meta: ModelMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub order: u8,
    pub smoothing: SmoothingConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            order: 2,
            smoothing: SmoothingConfig::default(),
        }
    }
}

/// Anything that can assign a natural-log probability to a token sequence.
pub trait SentenceScorer {
    fn sentence_logprob(&self, tokens: &[&str]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub perplexity: f64,
    /// Scored tokens: every word plus one `</s>` per sentence.
    pub tokens: u64,
    pub logprob: f64,
    pub oov: u64,
}

impl PerplexityReport {
    pub fn from_totals(logprob: f64, tokens: u64, oov: u64) -> Self {
        PerplexityReport {
            perplexity: (-logprob / tokens as f64).exp(),
            tokens,
            logprob,
            oov,
        }
    }
}

fn class_sequences(corpus: &[Utterance], vocab: &Vocabulary, map: &WordClassMap) -> Vec<Vec<u32>> {
    corpus
        .iter()
        .map(|u| u.tokens.iter().map(|t| map.class_of(vocab.id(t.as_str()))).collect())
        .collect()
}

fn meta_for(corpus: &[Utterance], label: &str) -> ModelMeta {
    ModelMeta {
        label: label.to_string(),
        utterances: corpus.len() as u64,
        multiword: corpus.iter().filter(|u| u.tokens.len() > 1).count() as u64,
        tokens: corpus.iter().map(|u| u.tokens.len() as u64).sum(),
    }
}

fn estimate_emissions(corpus: &[Utterance], vocab: &Vocabulary, map: &WordClassMap, floor: f64) -> Vec<f64> {
    let mut counts = vec![0u64; vocab.len()];
    for u in corpus {
        for t in &u.tokens {
            counts[vocab.id(t.as_str()) as usize] += 1;
        }
    }
    let t = map.total_classes() as usize;
    let mut class_total = vec![0u64; t];
    let mut class_size = vec![0u64; t];
    for (w, &n) in counts.iter().enumerate() {
        let c = map.class_of(w as u32) as usize;
        class_total[c] += n;
        class_size[c] += 1;
    }
    // unnormalized weights, then per-class normalization
    let weights: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(w, &n)| {
            let c = map.class_of(w as u32) as usize;
            if class_total[c] == 0 {
                1.0
            } else if n == 0 {
                floor
            } else {
                n as f64 / class_total[c] as f64
            }
        })
        .collect();
    let mut norm = vec![0.0; t];
    for (w, &q) in weights.iter().enumerate() {
        norm[map.class_of(w as u32) as usize] += q;
    }
    weights
        .iter()
        .enumerate()
        .map(|(w, &q)| q / norm[map.class_of(w as u32) as usize])
        .collect()
}

/// Classes that can be predicted: any class with members, except `<s>`.
fn predictable(map: &WordClassMap) -> Vec<bool> {
    let mut p = vec![false; map.total_classes() as usize];
    for &c in map.assignment() {
        p[c as usize] = true;
    }
    p[map.bos_class() as usize] = false;
    p
}

fn estimate_transitions(seqs: &[Vec<u32>], map: &WordClassMap, order: u8, method: Smoothing) -> Transitions {
    let t = map.total_classes() as usize;
    let bos = map.bos_class();
    let eos = map.eos_class();
    let targets = predictable(map);
    let m = targets.iter().filter(|&&b| b).count() as f64;

    let mut uni = vec![0u64; t];
    let mut bi: BTreeMap<u32, BTreeMap<u32, u64>> = BTreeMap::new();
    let mut tri: BTreeMap<(u32, u32), BTreeMap<u32, u64>> = BTreeMap::new();
    for s in seqs {
        let mut h1 = bos;
        let mut h2 = bos;
        for &c in s.iter().chain(std::iter::once(&eos)) {
            uni[c as usize] += 1;
            *bi.entry(h2).or_default().entry(c).or_default() += 1;
            if order >= 3 {
                *tri.entry((h1, h2)).or_default().entry(c).or_default() += 1;
            }
            h1 = h2;
            h2 = c;
        }
    }

    let n1: u64 = uni.iter().sum();
    let seen0 = uni.iter().filter(|&&n| n > 0).count() as f64;
    let unigram: Vec<f64> = (0..t)
        .map(|c| {
            if !targets[c] {
                return 0.0;
            }
            match method {
                Smoothing::None => uni[c] as f64 / n1 as f64,
                Smoothing::WittenBell => (uni[c] as f64 + seen0 / m) / (n1 as f64 + seen0),
            }
        })
        .collect();

    let build = |succ: &BTreeMap<u32, u64>, lower: &dyn Fn(u32) -> f64| -> Node {
        let total: u64 = succ.values().sum();
        let types = succ.len() as f64;
        match method {
            Smoothing::None => Node {
                backoff: 0.0,
                seen: succ.iter().map(|(&c, &n)| (c, n as f64 / total as f64)).collect(),
            },
            Smoothing::WittenBell => {
                let denom = total as f64 + types;
                Node {
                    backoff: types / denom,
                    seen: succ
                        .iter()
                        .map(|(&c, &n)| (c, (n as f64 + types * lower(c)) / denom))
                        .collect(),
                }
            }
        }
    };

    let uni_p = |c: u32| unigram[c as usize];
    let bigram: HashMap<u32, Node> = bi.iter().map(|(&h, s)| (h, build(s, &uni_p))).collect();
    let bi_p = |h: u32, c: u32| -> f64 {
        match bigram.get(&h) {
            Some(node) => node.lookup(c).unwrap_or_else(|| node.backoff * unigram[c as usize]),
            None => unigram[c as usize],
        }
    };
    let trigram: HashMap<(u32, u32), Node> = tri
        .iter()
        .map(|(&(h1, h2), s)| ((h1, h2), build(s, &|c| bi_p(h2, c))))
        .collect();

    Transitions {
        unigram,
        bigram,
        trigram,
    }
}

impl ClassNGramModel {
    /// Train a model with maximum-likelihood emissions from `corpus`.
    pub fn train(
        corpus: &[Utterance],
        vocab: &Vocabulary,
        classmap: &WordClassMap,
        config: &TrainConfig,
        label: &str,
    ) -> Result<Self> {
        check_order(config.order)?;
        if corpus.is_empty() {
            return Err(Error::InsufficientData(format!("no training utterances for `{label}`")));
        }
        if classmap.vocab_len() != vocab.len() {
            return Err(Error::invalid("classmap", "class map does not cover the vocabulary"));
        }
        let emission = estimate_emissions(corpus, vocab, classmap, config.smoothing.unk_floor);
        let seqs = class_sequences(corpus, vocab, classmap);
        Ok(ClassNGramModel {
            order: config.order,
            vocab: vocab.clone(),
            classmap: classmap.clone(),
            emission,
            transitions: estimate_transitions(&seqs, classmap, config.order, config.smoothing.method),
            smoothing: config.smoothing,
            meta: meta_for(corpus, label),
        })
    }

    /// Train class transitions on `corpus` while keeping the vocabulary,
    /// class map and emission table of `base`.
    pub fn adapt(base: &ClassNGramModel, corpus: &[Utterance], config: &TrainConfig, label: &str) -> Result<Self> {
        check_order(config.order)?;
        if corpus.is_empty() {
            return Err(Error::InsufficientData(format!("no training utterances for `{label}`")));
        }
        let seqs = class_sequences(corpus, &base.vocab, &base.classmap);
        Ok(ClassNGramModel {
            order: config.order,
            vocab: base.vocab.clone(),
            classmap: base.classmap.clone(),
            emission: base.emission.clone(),
            transitions: estimate_transitions(&seqs, &base.classmap, config.order, config.smoothing.method),
            smoothing: config.smoothing,
            meta: meta_for(corpus, label),
        })
    }

    /// Bigram model assigning equal probability to every symbol except `<s>`.
    pub fn uniform(vocab: &Vocabulary) -> Self {
        let classmap = WordClassMap::identity(vocab);
        let t = classmap.total_classes() as usize;
        let p = 1.0 / (t - 1) as f64;
        let unigram = (0..t)
            .map(|c| if c as u32 == classmap.bos_class() { 0.0 } else { p })
            .collect();
        ClassNGramModel {
            order: 2,
            vocab: vocab.clone(),
            emission: vec![1.0; vocab.len()],
            classmap,
            transitions: Transitions {
                unigram,
                bigram: HashMap::new(),
                trigram: HashMap::new(),
            },
            smoothing: SmoothingConfig::unsmoothed(),
            meta: ModelMeta {
                label: "uniform".into(),
                ..ModelMeta::default()
            },
        }
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn classmap(&self) -> &WordClassMap {
        &self.classmap
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn smoothing(&self) -> SmoothingConfig {
        self.smoothing
    }

    pub fn emission(&self, word: u32) -> f64 {
        self.emission[word as usize]
    }

    /// Number of explicitly stored transition entries (all orders).
    pub fn num_transition_entries(&self) -> usize {
        self.transitions.bigram.values().map(|n| n.seen.len()).sum::<usize>()
            + self.transitions.trigram.values().map(|n| n.seen.len()).sum::<usize>()
    }

    fn bigram_prob(&self, h: u32, c: u32) -> f64 {
        let tr = &self.transitions;
        match tr.bigram.get(&h) {
            Some(node) => node.lookup(c).unwrap_or_else(|| node.backoff * tr.unigram[c as usize]),
            None => tr.unigram[c as usize],
        }
    }

    /// `P(c | h1 h2)` for trigram models, `P(c | h2)` for bigrams.
    pub fn class_prob(&self, h1: u32, h2: u32, c: u32) -> f64 {
        if self.order < 3 {
            return self.bigram_prob(h2, c);
        }
        match self.transitions.trigram.get(&(h1, h2)) {
            Some(node) => node.lookup(c).unwrap_or_else(|| node.backoff * self.bigram_prob(h2, c)),
            None => self.bigram_prob(h2, c),
        }
    }

    /// `ln P(w | history)` for a word id given the previous two word ids.
    pub fn word_logprob(&self, prev2: u32, prev1: u32, word: u32) -> f64 {
        let cls = |w: u32| self.classmap.class_of(w);
        let c = cls(word);
        (self.class_prob(cls(prev2), cls(prev1), c) * self.emission[word as usize]).ln()
    }

    pub fn sentence_logprob_ids(&self, ids: &[u32]) -> f64 {
        let mut prev2 = Vocabulary::BOS_ID;
        let mut prev1 = Vocabulary::BOS_ID;
        let mut total = 0.0;
        for &w in ids.iter().chain(std::iter::once(&Vocabulary::EOS_ID)) {
            total += self.word_logprob(prev2, prev1, w);
            prev2 = prev1;
            prev1 = w;
        }
        total
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.vocab.id(t.as_ref())).collect()
    }

    /// Natural-log probability of `tokens` followed by `</s>`.
    pub fn logprob<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        self.sentence_logprob_ids(&self.encode(tokens))
    }

    pub fn perplexity(&self, testset: &[Utterance]) -> Result<PerplexityReport> {
        if testset.is_empty() {
            return Err(Error::invalid("testset", "no test utterances"));
        }
        let mut logprob = 0.0;
        let mut tokens = 0u64;
        let mut oov = 0u64;
        for u in testset {
            let ids = self.encode(&u.tokens);
            oov += ids
                .iter()
                .zip(&u.tokens)
                .filter(|(&id, t)| id == Vocabulary::UNK_ID && t.as_str() != crate::corpus::UNK)
                .count() as u64;
            logprob += self.sentence_logprob_ids(&ids);
            tokens += ids.len() as u64 + 1;
        }
        Ok(PerplexityReport::from_totals(logprob, tokens, oov))
    }

    /// Every class distribution `P(· | h)` for the stored histories plus the
    /// unigram, as `(history description, sum)` pairs.
    pub fn transition_sums(&self) -> Vec<(String, f64)> {
        let t = self.classmap.total_classes();
        let mut out = vec![("unigram".to_string(), self.transitions.unigram.iter().sum::<f64>())];
        let mut his: Vec<u32> = self.transitions.bigram.keys().copied().collect();
        his.sort_unstable();
        for h in his {
            out.push((format!("{h}"), (0..t).map(|c| self.bigram_prob(h, c)).sum()));
        }
        if self.order >= 3 {
            let mut his: Vec<(u32, u32)> = self.transitions.trigram.keys().copied().collect();
            his.sort_unstable();
            for (h1, h2) in his {
                out.push((format!("{h1},{h2}"), (0..t).map(|c| self.class_prob(h1, h2, c)).sum()));
            }
        }
        out
    }

    /// Emission sum per class that has members (boundary classes excluded).
    pub fn emission_sums(&self) -> Vec<(u32, f64)> {
        let mut sums: BTreeMap<u32, f64> = BTreeMap::new();
        for w in 0..self.vocab.len() as u32 {
            if Vocabulary::is_boundary(w) {
                continue;
            }
            *sums.entry(self.classmap.class_of(w)).or_default() += self.emission[w as usize];
        }
        sums.into_iter().collect()
    }
}

impl SentenceScorer for ClassNGramModel {
    fn sentence_logprob(&self, tokens: &[&str]) -> f64 {
        self.logprob(tokens)
    }
}

fn check_order(order: u8) -> Result<()> {
    if order == 2 || order == 3 {
        Ok(())
    } else {
        Err(Error::invalid("order", format!("{order} is not 2 or 3")))
    }
}

// ---------------------------------------------------------------------------
// Binary model format

pub const MAGIC: &[u8; 6] = b"CTXLM1";

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }
    fn node(&mut self, node: &Node) {
        self.f64(node.backoff);
        self.u32(node.seen.len() as u32);
        for &(c, p) in &node.seen {
            self.u32(c);
            self.f64(p);
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated: need {n} bytes, {} left",
                self.data.len() - self.pos
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let at = self.pos;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::Format {
            offset: at,
            reason: "string is not valid UTF-8".into(),
        })
    }
    fn class(&mut self, t: u32) -> Result<u32> {
        let at = self.pos;
        let c = self.u32()?;
        if c >= t {
            return Err(Error::Format {
                offset: at,
                reason: format!("class id {c} out of range"),
            });
        }
        Ok(c)
    }
    fn node(&mut self, t: u32) -> Result<Node> {
        let backoff = self.f64()?;
        let n = self.u32()? as usize;
        if n > t as usize {
            return Err(self.err("successor list longer than the class inventory"));
        }
        let mut seen = Vec::with_capacity(n);
        for _ in 0..n {
            let c = self.class(t)?;
            seen.push((c, self.f64()?));
        }
        if seen.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(self.err("successor list is not sorted"));
        }
        Ok(Node { backoff, seen })
    }
}

impl ClassNGramModel {
    /// Serialize: magic, header, vocabulary, class map, emissions, then the
    /// transition tables. Integers are little-endian, probabilities `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(MAGIC);
        w.u8(self.order);
        w.u32(self.classmap.num_classes());
        w.u32(self.vocab.len() as u32);
        w.u8(self.smoothing.method.tag());
        w.f64(self.smoothing.unk_floor);
        // quantization: none
        w.u8(0);
        w.str(&self.meta.label);
        w.u64(self.meta.utterances);
        w.u64(self.meta.multiword);
        w.u64(self.meta.tokens);
        for word in self.vocab.words() {
            w.str(word);
        }
        for &c in self.classmap.assignment() {
            w.u32(c);
        }
        for &p in &self.emission {
            w.f64(p);
        }
        let tr = &self.transitions;
        w.u32(tr.unigram.len() as u32);
        for &p in &tr.unigram {
            w.f64(p);
        }
        let mut bi: Vec<(&u32, &Node)> = tr.bigram.iter().collect();
        bi.sort_by_key(|(h, _)| **h);
        w.u32(bi.len() as u32);
        for (&h, node) in bi {
            w.u32(h);
            w.node(node);
        }
        if self.order >= 3 {
            let mut tri: Vec<(&(u32, u32), &Node)> = tr.trigram.iter().collect();
            tri.sort_by_key(|(h, _)| **h);
            w.u32(tri.len() as u32);
            for (&(h1, h2), node) in tri {
                w.u32(h1);
                w.u32(h2);
                w.node(node);
            }
        }
        w.buf
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader { data, pos: 0 };
        let magic = r.take(MAGIC.len())?;
        if magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                reason: "bad magic or unsupported format version".into(),
            });
        }
        let order = r.u8()?;
        if order != 2 && order != 3 {
            return Err(Error::Format {
                offset: r.pos - 1,
                reason: format!("unsupported order {order}"),
            });
        }
        let k = r.u32()?;
        let vlen = r.u32()? as usize;
        let tag = r.u8()?;
        let method = Smoothing::from_tag(tag).ok_or_else(|| Error::Format {
            offset: r.pos - 1,
            reason: format!("unknown smoothing tag {tag}"),
        })?;
        let unk_floor = r.f64()?;
        let quant = r.u8()?;
        if quant != 0 {
            return Err(Error::Format {
                offset: r.pos - 1,
                reason: format!("unsupported quantization {quant}"),
            });
        }
        let meta = ModelMeta {
            label: r.str()?,
            utterances: r.u64()?,
            multiword: r.u64()?,
            tokens: r.u64()?,
        };
        if vlen > data.len() {
            return Err(r.err(format!("vocabulary size {vlen} exceeds the file size")));
        }
        let at = r.pos;
        let mut words = Vec::with_capacity(vlen);
        for _ in 0..vlen {
            words.push(r.str()?);
        }
        let vocab = Vocabulary::from_ordered(words).map_err(|e| Error::Format {
            offset: at,
            reason: e.to_string(),
        })?;
        let at = r.pos;
        let mut assignment = Vec::with_capacity(vlen);
        for _ in 0..vlen {
            assignment.push(r.u32()?);
        }
        let classmap = WordClassMap::new(assignment, k).map_err(|e| Error::Format {
            offset: at,
            reason: e.to_string(),
        })?;
        let mut emission = Vec::with_capacity(vlen);
        for _ in 0..vlen {
            emission.push(r.f64()?);
        }
        let t = r.u32()?;
        if t != classmap.total_classes() {
            return Err(r.err(format!("{t} unigram entries for {} classes", classmap.total_classes())));
        }
        let mut unigram = Vec::with_capacity(t as usize);
        for _ in 0..t {
            unigram.push(r.f64()?);
        }
        let nb = r.u32()? as usize;
        let mut bigram = HashMap::with_capacity(nb.min(t as usize));
        for _ in 0..nb {
            let h = r.class(t)?;
            bigram.insert(h, r.node(t)?);
        }
        let mut trigram = HashMap::new();
        if order >= 3 {
            let nt = r.u32()? as usize;
            for _ in 0..nt {
                let h1 = r.class(t)?;
                let h2 = r.class(t)?;
                trigram.insert((h1, h2), r.node(t)?);
            }
        }
        if r.pos != data.len() {
            return Err(r.err("trailing bytes after transition table"));
        }
        Ok(ClassNGramModel {
            order,
            vocab,
            classmap,
            emission,
            transitions: Transitions {
                unigram,
                bigram,
                trigram,
            },
            smoothing: SmoothingConfig { method, unk_floor },
            meta,
        })
    }
}
