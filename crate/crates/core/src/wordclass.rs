//! Maximum-likelihood word clustering with the exchange algorithm.
//!
//! Words are moved one at a time to the class that maximizes the class
//! bigram log-likelihood
//!
//! ```text
//! LL = Σ N(c1,c2)·ln N(c1,c2) − 2·Σ N(c)·ln N(c) + Σ N(w)·ln N(w)
//! ```
//!
//! Counts run over sentences padded with `<s>` and `</s>`; the two boundary
//! symbols sit in their own reserved classes and are never moved.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Utterance, Vocabulary};
use crate::error::{Error, Result};

/// Total assignment of vocabulary words to `k` clusterable classes. The
/// sentence-start symbol occupies class `k` and the sentence-end symbol
/// class `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordClassMap {
    assignment: Vec<u32>,
    k: u32,
}

impl WordClassMap {
    pub fn new(assignment: Vec<u32>, k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k", "need at least one class"));
        }
        if assignment.len() < 3 {
            return Err(Error::invalid("assignment", "vocabulary lacks the reserved symbols"));
        }
        for (w, &c) in assignment.iter().enumerate() {
            let w = w as u32;
            let ok = match w {
                Vocabulary::BOS_ID => c == k,
                Vocabulary::EOS_ID => c == k + 1,
                _ => c < k,
            };
            if !ok {
                return Err(Error::invalid(
                    "assignment",
                    format!("word {w} has class {c}, not valid for k={k}"),
                ));
            }
        }
        Ok(WordClassMap { assignment, k })
    }

    /// Every word in its own class.
    pub fn identity(vocab: &Vocabulary) -> Self {
        let n = vocab.len() as u32;
        let k = n - 2;
        let mut next = 0;
        let assignment = (0..n)
            .map(|w| match w {
                Vocabulary::BOS_ID => k,
                Vocabulary::EOS_ID => k + 1,
                _ => {
                    next += 1;
                    next - 1
                }
            })
            .collect();
        WordClassMap { assignment, k }
    }

    /// All ordinary words in one class.
    pub fn single(vocab: &Vocabulary) -> Self {
        let assignment = (0..vocab.len() as u32)
            .map(|w| match w {
                Vocabulary::BOS_ID => 1,
                Vocabulary::EOS_ID => 2,
                _ => 0,
            })
            .collect();
        WordClassMap { assignment, k: 1 }
    }

    /// Number of clusterable classes.
    pub fn num_classes(&self) -> u32 {
        self.k
    }

    /// Clusterable classes plus the two reserved boundary classes.
    pub fn total_classes(&self) -> u32 {
        self.k + 2
    }

    pub fn bos_class(&self) -> u32 {
        self.k
    }

    pub fn eos_class(&self) -> u32 {
        self.k + 1
    }

    pub fn class_of(&self, word: u32) -> u32 {
        self.assignment[word as usize]
    }

    pub fn vocab_len(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    pub fn write<W: Write>(&self, vocab: &Vocabulary, mut w: W) -> Result<()> {
        writeln!(w, "K={}", self.k)?;
        let mut rows: Vec<(&str, u32)> = (0..vocab.len() as u32)
            .filter(|&id| !Vocabulary::is_boundary(id))
            .map(|id| (vocab.word(id), self.class_of(id)))
            .collect();
        rows.sort();
        for (word, class) in rows {
            writeln!(w, "{word}\t{class}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(vocab: &Vocabulary, r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let k: u32 = header
            .trim()
            .strip_prefix("K=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(1, "expected `K=<int>` header"))?;
        let mut assignment: Vec<Option<u32>> = vec![None; vocab.len()];
        assignment[Vocabulary::BOS_ID as usize] = Some(k);
        assignment[Vocabulary::EOS_ID as usize] = Some(k + 1);
        for (n, line) in lines.enumerate() {
            let line = line?;
            let lineno = n + 2;
            if line.trim().is_empty() {
                continue;
            }
            let (word, class) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(lineno, "expected `word<TAB>class`"))?;
            let class: u32 = class
                .trim()
                .parse()
                .map_err(|_| Error::parse(lineno, format!("bad class id `{class}`")))?;
            if !vocab.contains(word) {
                return Err(Error::parse(lineno, format!("word `{word}` not in vocabulary")));
            }
            assignment[vocab.id(word) as usize] = Some(class);
        }
        let assignment = assignment
            .into_iter()
            .enumerate()
            .map(|(id, c)| {
                c.ok_or_else(|| Error::invalid("class map", format!("word `{}` has no class", vocab.word(id as u32))))
            })
            .collect::<Result<Vec<_>>>()?;
        WordClassMap::new(assignment, k)
    }
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Sufficient statistics of the class bigram objective.
#[derive(Debug, Clone)]
pub struct ClusterStats {
    /// Dense `total_classes × total_classes` row-major bigram counts.
    pub bigram: Vec<u64>,
    pub class_counts: Vec<u64>,
    pub word_counts: Vec<u64>,
    /// Tokens including one `<s>` and one `</s>` per sentence.
    pub total: u64,
    pub sentences: u64,
}

impl ClusterStats {
    pub fn collect(sentences: &[Vec<u32>], map: &WordClassMap) -> Self {
        let t = map.total_classes() as usize;
        let mut stats = ClusterStats {
            bigram: vec![0; t * t],
            class_counts: vec![0; t],
            word_counts: vec![0; map.vocab_len()],
            total: 0,
            sentences: sentences.len() as u64,
        };
        for s in sentences {
            let mut prev = Vocabulary::BOS_ID;
            stats.word_counts[prev as usize] += 1;
            stats.class_counts[map.class_of(prev) as usize] += 1;
            stats.total += 1;
            for &w in s.iter().chain(std::iter::once(&Vocabulary::EOS_ID)) {
                stats.word_counts[w as usize] += 1;
                stats.class_counts[map.class_of(w) as usize] += 1;
                stats.total += 1;
                stats.bigram[map.class_of(prev) as usize * t + map.class_of(w) as usize] += 1;
                prev = w;
            }
        }
        stats
    }
}

/// Class bigram log-likelihood (natural log, constant terms dropped).
pub fn class_log_likelihood(stats: &ClusterStats) -> Result<f64> {
    let t = stats.class_counts.len();
    if stats.bigram.len() != t * t {
        return Err(Error::InconsistentStats(
            "bigram table is not square over the classes".into(),
        ));
    }
    let words: u64 = stats.word_counts.iter().sum();
    let classes: u64 = stats.class_counts.iter().sum();
    let pairs: u64 = stats.bigram.iter().sum();
    if words != stats.total || classes != stats.total {
        return Err(Error::InconsistentStats(format!(
            "word total {words} and class total {classes} must both equal {}",
            stats.total
        )));
    }
    if stats.total < stats.sentences || pairs != stats.total - stats.sentences {
        return Err(Error::InconsistentStats(format!(
            "{pairs} bigrams for {} tokens in {} sentences",
            stats.total, stats.sentences
        )));
    }
    let pair_term: f64 = stats.bigram.iter().map(|&n| xlogx(n as f64)).sum();
    let class_term: f64 = stats.class_counts.iter().map(|&n| xlogx(n as f64)).sum();
    let word_term: f64 = stats.word_counts.iter().map(|&n| xlogx(n as f64)).sum();
    Ok(pair_term - 2.0 * class_term + word_term)
}

/// One accepted exchange move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Move {
    pub word: u32,
    pub from: u32,
    pub to: u32,
}

#[derive(Debug, Clone)]
pub struct ClusterOutcome {
    pub map: WordClassMap,
    pub log_likelihood: f64,
    /// Objective after initialization, then after every accepted move.
    pub trace: Vec<f64>,
    pub initial: WordClassMap,
    pub moves: Vec<Move>,
    pub sweeps: usize,
}

/// Map utterances to word-id sequences (unknown words to `<unk>`).
pub fn encode_corpus(corpus: &[Utterance], vocab: &Vocabulary) -> Vec<Vec<u32>> {
    corpus
        .iter()
        .map(|u| u.tokens.iter().map(|t| vocab.id(t.as_str())).collect())
        .collect()
}

/// Frequency-based starting point: the `k − 1` most frequent words get
/// singleton classes, everything else shares class `k − 1`.
pub fn initial_map(word_counts: &[u64], k: u32) -> Result<WordClassMap> {
    let clusterable = word_counts.len().saturating_sub(2);
    if k < 1 || k as usize > clusterable {
        return Err(Error::invalid(
            "k",
            format!("{k} classes requested for {clusterable} clusterable words"),
        ));
    }
    let mut order: Vec<u32> = (0..word_counts.len() as u32)
        .filter(|&w| !Vocabulary::is_boundary(w))
        .collect();
    order.sort_by(|&a, &b| word_counts[b as usize].cmp(&word_counts[a as usize]).then(a.cmp(&b)));
    let mut assignment = vec![0u32; word_counts.len()];
    assignment[Vocabulary::BOS_ID as usize] = k;
    assignment[Vocabulary::EOS_ID as usize] = k + 1;
    for (rank, &w) in order.iter().enumerate() {
        assignment[w as usize] = (rank as u32).min(k - 1);
    }
    WordClassMap::new(assignment, k)
}

struct Neighbors {
    left: Vec<(u32, u64)>,
    right: Vec<(u32, u64)>,
    self_loops: u64,
}

struct Exchange {
    t: usize,
    bigram: Vec<f64>,
    class_counts: Vec<f64>,
    class_of: Vec<u32>,
    left_acc: Vec<f64>,
    right_acc: Vec<f64>,
    touched: Vec<u32>,
}

impl Exchange {
    fn gather(&mut self, nb: &Neighbors) {
        for &c in &self.touched {
            self.left_acc[c as usize] = 0.0;
            self.right_acc[c as usize] = 0.0;
        }
        self.touched.clear();
        for &(x, n) in &nb.left {
            let c = self.class_of[x as usize];
            if self.left_acc[c as usize] == 0.0 && self.right_acc[c as usize] == 0.0 {
                self.touched.push(c);
            }
            self.left_acc[c as usize] += n as f64;
        }
        for &(y, n) in &nb.right {
            let c = self.class_of[y as usize];
            if self.left_acc[c as usize] == 0.0 && self.right_acc[c as usize] == 0.0 {
                self.touched.push(c);
            }
            self.right_acc[c as usize] += n as f64;
        }
    }

    /// Objective change from adding the gathered word to class `b`, or the
    /// negative of removing it when `sign` is −1.
    fn delta(&self, b: usize, count: f64, self_loops: f64, sign: f64) -> f64 {
        let t = self.t;
        let mut d = 0.0;
        let mut bb_extra = sign * self_loops;
        for &c in &self.touched {
            let c = c as usize;
            let (l, r) = (self.left_acc[c], self.right_acc[c]);
            if c == b {
                bb_extra += sign * (l + r);
                continue;
            }
            if l != 0.0 {
                let m = self.bigram[c * t + b];
                d += xlogx(m + sign * l) - xlogx(m);
            }
            if r != 0.0 {
                let m = self.bigram[b * t + c];
                d += xlogx(m + sign * r) - xlogx(m);
            }
        }
        let m = self.bigram[b * t + b];
        d += xlogx(m + bb_extra) - xlogx(m);
        let n = self.class_counts[b];
        d - 2.0 * (xlogx(n + sign * count) - xlogx(n))
    }

    fn apply(&mut self, b: usize, count: f64, self_loops: f64, sign: f64) {
        let t = self.t;
        let mut bb_extra = sign * self_loops;
        for &c in &self.touched {
            let c = c as usize;
            let (l, r) = (self.left_acc[c], self.right_acc[c]);
            if c == b {
                bb_extra += sign * (l + r);
                continue;
            }
            self.bigram[c * t + b] += sign * l;
            self.bigram[b * t + c] += sign * r;
        }
        self.bigram[b * t + b] += bb_extra;
        self.class_counts[b] += sign * count;
    }
}

/// Settings of the exchange search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExchangeOptions {
    pub max_sweeps: usize,
    /// Independent runs. The first starts from the frequency-based map and
    /// the others from random maps; the best final objective wins.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for ExchangeOptions {
    fn default() -> Self {
        ExchangeOptions {
            max_sweeps: 20,
            restarts: 1,
            seed: 0,
        }
    }
}

/// Cluster the clusterable vocabulary into `k` classes.
///
/// Sweeps visit words in a seed-determined order; a word moves only when
/// some other class strictly improves the objective, so the objective never
/// decreases and a run stops after a sweep without moves or after
/// `max_sweeps` sweeps. The returned trace and moves belong to the winning
/// run.
pub fn cluster_words(
    corpus: &[Utterance],
    vocab: &Vocabulary,
    k: u32,
    opts: &ExchangeOptions,
) -> Result<ClusterOutcome> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    cluster_sentences(&encode_corpus(corpus, vocab), vocab.len(), k, opts)
}

pub fn cluster_sentences(
    sentences: &[Vec<u32>],
    vocab_len: usize,
    k: u32,
    opts: &ExchangeOptions,
) -> Result<ClusterOutcome> {
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if opts.restarts == 0 {
        return Err(Error::invalid("restarts", "need at least one run"));
    }
    let mut word_counts = vec![0u64; vocab_len];
    let mut pairs: HashMap<(u32, u32), u64> = HashMap::new();
    for s in sentences {
        word_counts[Vocabulary::BOS_ID as usize] += 1;
        let mut prev = Vocabulary::BOS_ID;
        for &w in s.iter().chain(std::iter::once(&Vocabulary::EOS_ID)) {
            word_counts[w as usize] += 1;
            *pairs.entry((prev, w)).or_default() += 1;
            prev = w;
        }
    }

    let initial = initial_map(&word_counts, k)?;
    let mut neighbors: Vec<Neighbors> = (0..vocab_len)
        .map(|_| Neighbors {
            left: Vec::new(),
            right: Vec::new(),
            self_loops: 0,
        })
        .collect();
    let mut sorted_pairs: Vec<((u32, u32), u64)> = pairs.into_iter().collect();
    sorted_pairs.sort_unstable();
    for ((a, b), n) in sorted_pairs {
        if a == b {
            neighbors[a as usize].self_loops += n;
        } else {
            neighbors[b as usize].left.push((a, n));
            neighbors[a as usize].right.push((b, n));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<ClusterOutcome> = None;
    for run in 0..opts.restarts {
        let start = if run == 0 {
            initial.clone()
        } else {
            random_map(&word_counts, k, &mut rng)?
        };
        let out = exchange(sentences, &neighbors, &word_counts, start, opts.max_sweeps, &mut rng)?;
        if best.as_ref().is_none_or(|b| out.log_likelihood > b.log_likelihood) {
            best = Some(out);
        }
    }
    Ok(best.expect("at least one run"))
}

fn random_map(word_counts: &[u64], k: u32, rng: &mut ChaCha8Rng) -> Result<WordClassMap> {
    let assignment = (0..word_counts.len() as u32)
        .map(|w| match w {
            Vocabulary::BOS_ID => k,
            Vocabulary::EOS_ID => k + 1,
            _ => rng.random_range(0..k),
        })
        .collect();
    WordClassMap::new(assignment, k)
}

fn exchange(
    sentences: &[Vec<u32>],
    neighbors: &[Neighbors],
    word_counts: &[u64],
    initial: WordClassMap,
    max_sweeps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ClusterOutcome> {
    let k = initial.num_classes();
    let stats = ClusterStats::collect(sentences, &initial);
    let mut ll = class_log_likelihood(&stats)?;
    let t = initial.total_classes() as usize;
    let mut ex = Exchange {
        t,
        bigram: stats.bigram.iter().map(|&n| n as f64).collect(),
        class_counts: stats.class_counts.iter().map(|&n| n as f64).collect(),
        class_of: initial.assignment().to_vec(),
        left_acc: vec![0.0; t],
        right_acc: vec![0.0; t],
        touched: Vec::new(),
    };

    let mut order: Vec<u32> = (0..word_counts.len() as u32)
        .filter(|&w| !Vocabulary::is_boundary(w) && word_counts[w as usize] > 0)
        .collect();
    order.shuffle(rng);

    let mut trace = vec![ll];
    let mut moves = Vec::new();
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut moved = false;
        for &w in &order {
            let nb = &neighbors[w as usize];
            let count = word_counts[w as usize] as f64;
            let loops = nb.self_loops as f64;
            let from = ex.class_of[w as usize] as usize;
            ex.gather(nb);
            let removal = ex.delta(from, count, loops, -1.0);
            ex.apply(from, count, loops, -1.0);

            let stay = ex.delta(from, count, loops, 1.0);
            let mut best = (from, stay);
            for b in 0..k as usize {
                if b == from {
                    continue;
                }
                let g = ex.delta(b, count, loops, 1.0);
                if g > best.1 + 1e-9 * (1.0 + best.1.abs()) {
                    best = (b, g);
                }
            }
            let (to, gain) = best;
            ex.apply(to, count, loops, 1.0);
            ex.class_of[w as usize] = to as u32;
            if to != from {
                ll += removal + gain;
                trace.push(ll);
                moves.push(Move {
                    word: w,
                    from: from as u32,
                    to: to as u32,
                });
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }

    let map = WordClassMap::new(ex.class_of, k)?;
    let log_likelihood = class_log_likelihood(&ClusterStats::collect(sentences, &map))?;
    Ok(ClusterOutcome {
        map,
        log_likelihood,
        trace,
        initial,
        moves,
        sweeps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(max_sweeps: usize, seed: u64) -> ExchangeOptions {
        ExchangeOptions {
            max_sweeps,
            restarts: 1,
            seed,
        }
    }

    fn vocab_of(words: &[&str]) -> Vocabulary {
        Vocabulary::from_words(words.iter().copied())
    }

    fn encode(vocab: &Vocabulary, sents: &[&str]) -> Vec<Vec<u32>> {
        sents
            .iter()
            .map(|s| s.split_whitespace().map(|w| vocab.id(w)).collect())
            .collect()
    }

    #[test]
    fn abab_identity_value() {
        // <s> a b a b </s>: pairs (<s>,a)=1 (a,b)=2 (b,a)=1 (b,</s>)=1,
        // class counts 1,2,2,1 → 2ln2 − 2·4ln2 + 4ln2 = −2ln2
        let vocab = vocab_of(&["a", "b"]);
        let sents = encode(&vocab, &["a b a b"]);
        let ll = class_log_likelihood(&ClusterStats::collect(&sents, &WordClassMap::identity(&vocab))).unwrap();
        assert!((ll - (-2.0 * 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn abab_single_class_value() {
        // {a,b} merged: (<s>,A)=1 (A,A)=3 (A,</s>)=1, N(A)=4 → 3ln3 − 16ln2 + 4ln2
        let vocab = vocab_of(&["a", "b"]);
        let sents = encode(&vocab, &["a b a b"]);
        let ll = class_log_likelihood(&ClusterStats::collect(&sents, &WordClassMap::single(&vocab))).unwrap();
        assert!((ll - (3.0 * 3f64.ln() - 12.0 * 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn unused_class_leaves_objective_unchanged() {
        let vocab = vocab_of(&["a", "b"]);
        let sents = encode(&vocab, &["a b a b", "b b"]);
        let base = WordClassMap::identity(&vocab);
        let k = base.num_classes();
        let shifted: Vec<u32> = base
            .assignment()
            .iter()
            .map(|&c| if c >= k { c + 1 } else { c })
            .collect();
        let wider = WordClassMap::new(shifted, k + 1).unwrap();
        let a = class_log_likelihood(&ClusterStats::collect(&sents, &base)).unwrap();
        let b = class_log_likelihood(&ClusterStats::collect(&sents, &wider)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inconsistent_stats_rejected() {
        let vocab = vocab_of(&["a", "b"]);
        let sents = encode(&vocab, &["a b"]);
        let mut stats = ClusterStats::collect(&sents, &WordClassMap::identity(&vocab));
        stats.word_counts[3] += 1;
        assert!(matches!(class_log_likelihood(&stats), Err(Error::InconsistentStats(_))));
        let mut stats = ClusterStats::collect(&sents, &WordClassMap::identity(&vocab));
        stats.bigram[0] += 1;
        assert!(class_log_likelihood(&stats).is_err());
    }

    #[test]
    fn k_bounds() {
        let vocab = vocab_of(&["x", "a", "y", "b"]);
        let sents = encode(&vocab, &["x a y b x a y b"]);
        // clusterable words: <unk>, x, a, y, b
        assert!(cluster_sentences(&sents, vocab.len(), 0, &opts(10, 0)).is_err());
        assert!(cluster_sentences(&sents, vocab.len(), 6, &opts(10, 0)).is_err());
        let full = cluster_sentences(&sents, vocab.len(), 5, &opts(10, 0)).unwrap();
        let ident = class_log_likelihood(&ClusterStats::collect(&sents, &WordClassMap::identity(&vocab))).unwrap();
        assert!((full.log_likelihood - ident).abs() < 1e-9);
        let one = cluster_sentences(&sents, vocab.len(), 1, &opts(10, 0)).unwrap();
        let single = class_log_likelihood(&ClusterStats::collect(&sents, &WordClassMap::single(&vocab))).unwrap();
        assert!((one.log_likelihood - single).abs() < 1e-9);
        assert!(one.moves.is_empty());
    }

    #[test]
    fn incremental_objective_matches_recount() {
        let vocab = vocab_of(&["a", "b", "c", "d", "e", "f"]);
        let sents = encode(&vocab, &["a b c d e f", "a c e", "b d f a", "f e d c b a", "a a b b"]);
        let out = cluster_sentences(&sents, vocab.len(), 3, &opts(20, 4)).unwrap();
        assert!((out.trace.last().unwrap() - out.log_likelihood).abs() < 1e-9);
    }

    #[test]
    fn class_map_file_round_trip() {
        let vocab = vocab_of(&["b", "a", "c"]);
        let sents = encode(&vocab, &["a b c", "c b a"]);
        let out = cluster_sentences(&sents, vocab.len(), 2, &opts(5, 0)).unwrap();
        let mut buf = Vec::new();
        out.map.write(&vocab, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("K=2\n<unk>\t"));
        let back = WordClassMap::read(&vocab, &buf[..]).unwrap();
        assert_eq!(back, out.map);
        assert!(WordClassMap::read(&vocab, &b"K=2\na\t0\n"[..]).is_err());
    }
}
