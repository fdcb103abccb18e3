//! Simulated noisy-channel recognizer: n-best generation from a reference,
//! LM rescoring and word accuracy.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::classlm::SentenceScorer;
use crate::error::{Error, Result};

/// Standard deviation of the per-segment acoustic perturbation at
/// `noise = 1`, in cost units.
pub const NOISE_SCALE: f64 = 2.0;

const DEL: &str = "<del>";
const INS: &str = "<ins>";
const ANY: &str = "*";

#[derive(Debug, Clone, PartialEq)]
pub struct Alternative {
    /// Replacement tokens; empty for a deletion.
    pub tokens: Vec<String>,
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfusionTable {
    entries: BTreeMap<String, Vec<Alternative>>,
    /// Cost of deleting a token without a specific deletion entry.
    deletion: Option<f64>,
    insertions: Vec<(String, f64)>,
}

impl ConfusionTable {
    pub fn builtin() -> Self {
        Self::parse(include_str!("../data/default.confusions")).expect("builtin confusion table parses")
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::read(text.as_bytes())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut table = ConfusionTable::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::parse(i + 1, "expected token, alternative and cost"));
            }
            let cost: f64 = f[2]
                .trim()
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad cost `{}`", f[2])))?;
            if !cost.is_finite() || cost < 0.0 {
                return Err(Error::parse(i + 1, "cost must be finite and non-negative"));
            }
            let alt: Vec<String> = f[1].split_whitespace().map(str::to_string).collect();
            match (f[0], alt.as_slice()) {
                (INS, [tok]) => table.insertions.push((tok.clone(), cost)),
                (INS, _) => return Err(Error::parse(i + 1, "insertion rows take one token")),
                (ANY, [d]) if d == DEL => table.deletion = Some(cost),
                (ANY, _) => return Err(Error::parse(i + 1, "`*` rows only define deletions")),
                (_, []) => return Err(Error::parse(i + 1, "empty alternative")),
                (tok, [d]) if d == DEL => table.add(tok, Vec::new(), cost),
                (tok, _) => table.add(tok, alt, cost),
            }
        }
        Ok(table)
    }

    pub fn add(&mut self, token: &str, alternative: Vec<String>, cost: f64) {
        self.entries.entry(token.to_string()).or_default().push(Alternative {
            tokens: alternative,
            cost,
        });
    }

    pub fn alternatives(&self, token: &str) -> &[Alternative] {
        self.entries.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every way `token` can surface, identity first.
    fn options(&self, token: &str) -> Vec<Alternative> {
        let mut out = vec![Alternative {
            tokens: vec![token.to_string()],
            cost: 0.0,
        }];
        out.extend(self.alternatives(token).iter().cloned());
        if let Some(cost) = self.deletion {
            if !out.iter().any(|a| a.tokens.is_empty()) {
                out.push(Alternative {
                    tokens: Vec::new(),
                    cost,
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<String>,
    /// Log-domain acoustic score; higher is better.
    pub acoustic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NBestList {
    pub reference: Vec<String>,
    /// Sorted by acoustic score, best first.
    pub hypotheses: Vec<Hypothesis>,
}

impl NBestList {
    /// One line per hypothesis: `rank<TAB>score<TAB>tokens`.
    pub fn dump(&self) -> String {
        let mut s = format!("#ref\t{}\n", self.reference.join(" "));
        for (i, h) in self.hypotheses.iter().enumerate() {
            let _ = writeln!(s, "{}\t{:.4}\t{}", i + 1, h.acoustic, h.tokens.join(" "));
        }
        s
    }

    pub fn contains(&self, tokens: &[&str]) -> bool {
        self.hypotheses
            .iter()
            .any(|h| h.tokens.iter().map(String::as_str).eq(tokens.iter().copied()))
    }
}

#[derive(Clone)]
struct Partial {
    tokens: Vec<String>,
    score: f64,
}

fn prune(mut beam: Vec<Partial>, n: usize) -> Vec<Partial> {
    beam.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut seen = HashSet::new();
    beam.retain(|p| seen.insert(p.tokens.clone()));
    beam.truncate(n);
    beam
}

/// Produce the `n` best-scoring channel outputs for `reference`.
///
/// Every surface option of every token (and every optional insertion) gets
/// score `-cost + noise·NOISE_SCALE·z` with `z` standard normal drawn from a
/// generator seeded by `seed`; a hypothesis scores the sum over its options.
pub fn generate_nbest<S: AsRef<str>>(
    reference: &[S],
    table: &ConfusionTable,
    n: usize,
    noise: f64,
    seed: u64,
) -> Result<NBestList> {
    if n == 0 {
        return Err(Error::invalid("n", "n-best size must be at least 1"));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::invalid("noise", "must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = noise * NOISE_SCALE;
    let mut jitter = move || -> f64 {
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    };

    let mut beam = vec![Partial {
        tokens: Vec::new(),
        score: 0.0,
    }];
    for (i, tok) in reference.iter().enumerate() {
        let options: Vec<(Alternative, f64)> = table
            .options(tok.as_ref())
            .into_iter()
            .map(|a| {
                let s = -a.cost + jitter();
                (a, s)
            })
            .collect();
        let mut next = Vec::with_capacity(beam.len() * options.len());
        for p in &beam {
            for (a, s) in &options {
                let mut tokens = p.tokens.clone();
                tokens.extend(a.tokens.iter().cloned());
                next.push(Partial {
                    tokens,
                    score: p.score + s,
                });
            }
        }
        beam = prune(next, n);

        if i + 1 < reference.len() && !table.insertions.is_empty() {
            let stay = jitter();
            let ins: Vec<(String, f64)> = table
                .insertions
                .iter()
                .map(|(t, c)| (t.clone(), -c + jitter()))
                .collect();
            let mut next = Vec::with_capacity(beam.len() * (ins.len() + 1));
            for p in &beam {
                next.push(Partial {
                    tokens: p.tokens.clone(),
                    score: p.score + stay,
                });
                for (t, s) in &ins {
                    let mut tokens = p.tokens.clone();
                    tokens.push(t.clone());
                    next.push(Partial {
                        tokens,
                        score: p.score + s,
                    });
                }
            }
            beam = prune(next, n);
        }
    }

    Ok(NBestList {
        reference: reference.iter().map(|t| t.as_ref().to_string()).collect(),
        hypotheses: beam
            .into_iter()
            .map(|p| Hypothesis {
                tokens: p.tokens,
                acoustic: p.score,
            })
            .collect(),
    })
}

/// Index of the hypothesis maximizing `acoustic + λ·trigram`; ties go to
/// the higher bigram score, then to the earlier hypothesis.
pub fn rescore_index(
    nbest: &NBestList,
    bigram: &dyn SentenceScorer,
    trigram: &dyn SentenceScorer,
    lambda: f64,
) -> usize {
    if nbest.hypotheses.len() <= 1 {
        return 0;
    }
    let scored: Vec<(f64, f64)> = nbest
        .hypotheses
        .iter()
        .map(|h| {
            let toks: Vec<&str> = h.tokens.iter().map(String::as_str).collect();
            let combined = if lambda == 0.0 {
                h.acoustic
            } else {
                h.acoustic + lambda * trigram.sentence_logprob(&toks)
            };
            (combined, bigram.sentence_logprob(&toks))
        })
        .collect();
    let mut best = 0;
    for i in 1..scored.len() {
        let ord = scored[i]
            .0
            .total_cmp(&scored[best].0)
            .then(scored[i].1.total_cmp(&scored[best].1));
        if ord == Ordering::Greater {
            best = i;
        }
    }
    best
}

pub fn rescore<'a>(
    nbest: &'a NBestList,
    bigram: &dyn SentenceScorer,
    trigram: &dyn SentenceScorer,
    lambda: f64,
) -> &'a Hypothesis {
    &nbest.hypotheses[rescore_index(nbest, bigram, trigram, lambda)]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub reference_len: usize,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn accuracy(&self) -> f64 {
        (self.reference_len as f64 - self.errors() as f64) / self.reference_len as f64
    }

    pub fn add(&mut self, other: EditCounts) {
        self.reference_len += other.reference_len;
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
    }
}

/// Minimum-edit alignment with unit costs.
pub fn align<A: AsRef<str>, B: AsRef<str>>(hyp: &[A], reference: &[B]) -> EditCounts {
    let (n, m) = (reference.len(), hyp.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(reference[i - 1].as_ref() != hyp[j - 1].as_ref());
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let mut counts = EditCounts {
        reference_len: n,
        ..EditCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1].as_ref() == hyp[j - 1].as_ref();
            if d[i][j] == d[i - 1][j - 1] + usize::from(!same) {
                counts.substitutions += usize::from(!same);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    counts
}

/// `(N − S − D − I) / N`; negative when insertions dominate.
pub fn word_accuracy<A: AsRef<str>, B: AsRef<str>>(hyp: &[A], reference: &[B]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::invalid("reference", "word accuracy needs a non-empty reference"));
    }
    Ok(align(hyp, reference).accuracy())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    /// Scores sentences from a fixed probability table.
    struct Fixture(HashMap<&'static str, f64>);

    impl SentenceScorer for Fixture {
        fn sentence_logprob(&self, tokens: &[&str]) -> f64 {
            self.0
                .get(tokens.join(" ").as_str())
                .map_or(f64::NEG_INFINITY, |p| p.ln())
        }
    }

    fn flat(hyps: &[&str]) -> NBestList {
        NBestList {
            reference: vec![],
            hypotheses: hyps
                .iter()
                .map(|h| Hypothesis {
                    tokens: h.split_whitespace().map(str::to_string).collect(),
                    acoustic: -1.0,
                })
                .collect(),
        }
    }

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn contextual_probabilities_flip_the_winner() {
        let list = flat(&["alessandria", "alle sette", "a lecce"]);
        let single = Fixture(HashMap::from([
            ("alessandria", 0.25),
            ("alle sette", 0.30),
            ("a lecce", 0.35),
        ]));
        let ctx = Fixture(HashMap::from([
            ("alessandria", 0.05),
            ("alle sette", 0.60),
            ("a lecce", 0.20),
        ]));
        assert_eq!(rescore(&list, &single, &single, 1.0).tokens, words("a lecce"));
        assert_eq!(rescore(&list, &ctx, &ctx, 1.0).tokens, words("alle sette"));
    }

    #[test]
    fn lambda_zero_and_singletons() {
        let mut list = flat(&["a", "b"]);
        list.hypotheses[0].acoustic = 0.0;
        let lm = Fixture(HashMap::from([("a", 0.1), ("b", 0.9)]));
        assert_eq!(rescore(&list, &lm, &lm, 0.0).tokens, ["a"]);
        assert_eq!(rescore(&list, &lm, &lm, 5.0).tokens, ["b"]);
        let one = flat(&["zzz"]);
        assert_eq!(rescore(&one, &lm, &lm, 1.0).tokens, ["zzz"]);
    }

    #[test]
    fn bigram_breaks_ties() {
        let list = flat(&["a", "b"]);
        let tri = Fixture(HashMap::from([("a", 0.5), ("b", 0.5)]));
        let bi = Fixture(HashMap::from([("a", 0.2), ("b", 0.4)]));
        assert_eq!(rescore(&list, &bi, &tri, 1.0).tokens, ["b"]);
        assert_eq!(rescore(&list, &tri, &tri, 1.0).tokens, ["a"]);
    }

    #[test]
    fn noiseless_channel_returns_reference() {
        let t = ConfusionTable::builtin();
        for r in ["from milano to roma", "at eight in the evening", "yes"] {
            let nb = generate_nbest(&words(r), &t, 10, 0.0, 3).unwrap();
            assert_eq!(nb.hypotheses[0].tokens, words(r));
            assert_eq!(nb.hypotheses[0].acoustic, 0.0);
            assert!(nb.hypotheses.windows(2).all(|w| w[0].acoustic >= w[1].acoustic));
        }
    }

    #[test]
    fn table_triple_is_reachable() {
        let t = ConfusionTable::builtin();
        let nb = generate_nbest(&["alle", "sette"], &t, 10, 0.0, 1).unwrap();
        assert!(nb.contains(&["alessandria"]), "{}", nb.dump());
        assert!(nb.contains(&["a", "lecce"]), "{}", nb.dump());
    }

    #[test]
    fn channel_is_deterministic() {
        let t = ConfusionTable::builtin();
        let r = words("i want to go from milano to roma");
        let a = generate_nbest(&r, &t, 10, 0.7, 42).unwrap();
        assert_eq!(a, generate_nbest(&r, &t, 10, 0.7, 42).unwrap());
        let one = generate_nbest(&r, &t, 1, 1.0, 9).unwrap();
        assert_eq!(one.hypotheses.len(), 1);
        assert_eq!(one, generate_nbest(&r, &t, 1, 1.0, 9).unwrap());
        assert!(generate_nbest(&r, &t, 0, 0.5, 9).is_err());
    }

    #[test]
    fn word_accuracy_examples() {
        let wa = |h: &str, r: &str| word_accuracy(&words(h), &words(r)).unwrap();
        assert_eq!(wa("da milano a roma", "da milano a roma"), 1.0);
        assert_eq!(wa("da milano a lecce", "da milano a roma"), 0.75);
        assert_eq!(wa("alle sette e mezza", "alle sette"), 0.0);
        assert_eq!(wa("", "a b"), 0.0);
        assert!(wa("x y z w", "a") < 0.0);
        assert!(word_accuracy(&words("a"), &words("")).is_err());
    }

    #[test]
    fn table_parsing() {
        let t = ConfusionTable::parse("a\tb c\t1.5\na\t<del>\t2\n*\t<del>\t3\n<ins>\tuh\t1\n").unwrap();
        assert_eq!(t.alternatives("a").len(), 2);
        assert_eq!(t.options("zz").len(), 2);
        assert_eq!(t.options("a").len(), 3);
        assert!(ConfusionTable::parse("a\tb\t-1\n").is_err());
        assert!(ConfusionTable::parse("a\tb\n").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn oracle(a: &[u8], b: &[u8]) -> usize {
            // plain recursion with memo over suffixes
            fn go(a: &[u8], b: &[u8], memo: &mut HashMap<(usize, usize), usize>) -> usize {
                if a.is_empty() {
                    return b.len();
                }
                if b.is_empty() {
                    return a.len();
                }
                if let Some(&v) = memo.get(&(a.len(), b.len())) {
                    return v;
                }
                let v = (go(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]))
                    .min(go(&a[1..], b, memo) + 1)
                    .min(go(a, &b[1..], memo) + 1);
                memo.insert((a.len(), b.len()), v);
                v
            }
            go(a, b, &mut HashMap::new())
        }

        proptest! {
            #[test]
            fn alignment_is_optimal(h in prop::collection::vec(0u8..4, 0..=10), r in prop::collection::vec(0u8..4, 0..=10)) {
                let hs: Vec<String> = h.iter().map(|x| x.to_string()).collect();
                let rs: Vec<String> = r.iter().map(|x| x.to_string()).collect();
                let c = align(&hs, &rs);
                prop_assert_eq!(c.errors(), oracle(&h, &r));
                prop_assert_eq!(c.reference_len, r.len());
            }

            #[test]
            fn equal_acoustics_follow_the_lm(ps in prop::collection::vec(0.01f64..1.0, 2..6), lambda in 0.01f64..10.0) {
                let names = ["a", "b", "c", "d", "e", "f"];
                let list = flat(&names[..ps.len()]);
                let lm = Fixture(names.iter().copied().zip(ps.iter().copied()).collect());
                let got = rescore_index(&list, &lm, &lm, lambda);
                let best = (0..ps.len()).fold(0, |b, i| if ps[i] > ps[b] { i } else { b });
                prop_assert_eq!(got, best);
            }
        }
    }
}
