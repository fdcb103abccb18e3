//! Experiment pipeline: corpus, clustering, model training and the
//! context-independent vs context-dependent comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classlm::{ClassNGramModel, SmoothingConfig, TrainConfig};
use crate::config::Config;
use crate::contextmap::{DialogueAct, LmClassId};
use crate::corpus::{
    build_vocabulary, class_size_counts, generate_synthetic_corpus, split_corpus, CorpusSplit, GeneratorOptions,
    Grammar, Utterance, Vocabulary,
};
use crate::error::Result;
use crate::recsim::{align, generate_nbest, rescore, ConfusionTable, EditCounts};
use crate::registry::{LMRegistry, ModelPair};
use crate::semantics::{su_match, SemanticLexicon};
use crate::wordclass::{cluster_words, WordClassMap};

/// External resources named by a configuration.
#[derive(Debug, Clone)]
pub struct Resources {
    pub grammar: Grammar,
    pub lexicon: SemanticLexicon,
    pub confusions: ConfusionTable,
}

impl Resources {
    pub fn load(cfg: &Config) -> Result<Self> {
        let grammar = match &cfg.corpus.grammar {
            Some(p) => Grammar::parse(&std::fs::read_to_string(p)?)?,
            None => Grammar::builtin(),
        };
        let confusions = match &cfg.recognizer.confusions {
            Some(p) => ConfusionTable::read(std::io::BufReader::new(std::fs::File::open(p)?))?,
            None => ConfusionTable::builtin(),
        };
        Ok(Resources {
            grammar,
            lexicon: SemanticLexicon::default(),
            confusions,
        })
    }
}

pub fn generate_corpus(cfg: &Config, res: &Resources, seed: u64) -> Result<Vec<Utterance>> {
    let counts = class_size_counts(cfg.corpus.scale);
    let opts = GeneratorOptions {
        noise_rate: cfg.corpus.noise_rate,
    };
    generate_synthetic_corpus(&res.grammar, &res.lexicon, &counts, seed, &opts)
}

pub fn prepare_split(cfg: &Config, res: &Resources, seed: u64) -> Result<CorpusSplit> {
    split_corpus(&generate_corpus(cfg, res, seed)?, cfg.corpus.test_ratio, seed)
}

/// Vocabulary and word-class map estimated on the training set.
pub fn build_classes(cfg: &Config, train: &[Utterance], seed: u64) -> Result<(Vocabulary, WordClassMap)> {
    let vocab = build_vocabulary(train, cfg.corpus.min_count)?;
    let map = cluster_map(cfg, train, &vocab, seed)?;
    Ok((vocab, map))
}

fn cluster_map(cfg: &Config, data: &[Utterance], vocab: &Vocabulary, seed: u64) -> Result<WordClassMap> {
    let clusterable = (vocab.len() - 2) as u32;
    let k = cfg.clustering.classes;
    if k == 0 || k >= clusterable {
        return Ok(WordClassMap::identity(vocab));
    }
    let out = cluster_words(data, vocab, k, &cfg.exchange_options(seed))?;
    log::debug!(
        "clustered {clusterable} words into {k} classes, LL {:.3}",
        out.log_likelihood
    );
    Ok(out.map)
}

/// The trained model set for one corpus.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub vocab: Vocabulary,
    pub classmap: WordClassMap,
    pub fallback: ModelPair,
    pub specific: BTreeMap<LmClassId, ModelPair>,
}

pub fn train_models(cfg: &Config, train: &[Utterance], vocab: &Vocabulary, map: &WordClassMap) -> Result<ModelSet> {
    let smoothing = SmoothingConfig {
        method: cfg.lm.smoothing,
        unk_floor: cfg.lm.unk_floor,
    };
    let bi = TrainConfig { order: 2, smoothing };
    let tri = TrainConfig { order: 3, smoothing };
    let ci_label = LmClassId::ContextIndependent.label();
    let ci_bi = ClassNGramModel::train(train, vocab, map, &bi, ci_label)?;
    let ci_tri = ClassNGramModel::train(train, vocab, map, &tri, ci_label)?;
    let fallback = ModelPair::new(ci_bi, ci_tri);

    let mut by_class: BTreeMap<LmClassId, Vec<Utterance>> = BTreeMap::new();
    for u in train {
        let c = u.lm_class();
        if c != LmClassId::ContextIndependent {
            by_class.entry(c).or_default().push(u.clone());
        }
    }
    let specific = by_class
        .into_par_iter()
        .map(|(class, data)| -> Result<(LmClassId, ModelPair)> {
            let label = class.label();
            let own_map = if cfg.clustering.per_model {
                Some(cluster_map(cfg, &data, vocab, class.index() as u64)?)
            } else {
                None
            };
            let fit = |tc: &TrainConfig, base: &ClassNGramModel| match &own_map {
                Some(m) => ClassNGramModel::train(&data, vocab, m, tc, label),
                None if cfg.lm.shared_emissions => ClassNGramModel::adapt(base, &data, tc, label),
                None => ClassNGramModel::train(&data, vocab, map, tc, label),
            };
            let b = fit(&bi, &fallback.bigram)?;
            let trigram = if cfg.lm.shared_trigram {
                Arc::clone(&fallback.trigram)
            } else {
                Arc::new(fit(&tri, &fallback.trigram)?)
            };
            Ok((
                class,
                ModelPair {
                    bigram: Arc::new(b),
                    trigram,
                },
            ))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(ModelSet {
        vocab: vocab.clone(),
        classmap: map.clone(),
        fallback,
        specific,
    })
}

impl ModelSet {
    pub fn registry(&self, cfg: &Config) -> Result<LMRegistry> {
        LMRegistry::from_models(self.fallback.clone(), self.specific.clone(), cfg.policy())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    Requests,
    Confirms,
    Global,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Requests, Group::Confirms, Group::Global];

    pub fn of(act: DialogueAct) -> Group {
        match act {
            DialogueAct::Request => Group::Requests,
            DialogueAct::Verify => Group::Confirms,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Requests => "Requests",
            Group::Confirms => "Confirms",
            Group::Global => "Global",
        }
    }
}

/// Sufficient statistics of one condition on one group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub utterances: u64,
    /// PP tokens (words plus one end marker per utterance).
    pub tokens: u64,
    pub logprob: f64,
    pub ref_words: u64,
    pub word_errors: u64,
    pub su_matches: u64,
}

impl Totals {
    fn add(&mut self, o: &Totals) {
        self.utterances += o.utterances;
        self.tokens += o.tokens;
        self.logprob += o.logprob;
        self.ref_words += o.ref_words;
        self.word_errors += o.word_errors;
        self.su_matches += o.su_matches;
    }

    pub fn perplexity(&self) -> f64 {
        (-self.logprob / self.tokens as f64).exp()
    }

    /// Percent.
    pub fn word_accuracy(&self) -> f64 {
        100.0 * (self.ref_words as f64 - self.word_errors as f64) / self.ref_words as f64
    }

    /// Percent.
    pub fn su_rate(&self) -> f64 {
        100.0 * self.su_matches as f64 / self.utterances as f64
    }
}

/// Per-utterance outcome under one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub logprob: f64,
    pub tokens: u64,
    pub edits: EditCounts,
    pub su: bool,
    pub hypothesis: Vec<String>,
}

/// Score one test utterance: LM log-probability with `pair.bigram`, and the
/// recognizer outcome after rescoring `nbest` with `pair`.
fn score(
    u: &Utterance,
    pair: &ModelPair,
    nbest: &crate::recsim::NBestList,
    lambda: f64,
    lex: &SemanticLexicon,
) -> Scored {
    let ids = pair.bigram.encode(&u.tokens);
    let logprob = pair.bigram.sentence_logprob_ids(&ids);
    let best = rescore(nbest, pair.bigram.as_ref(), pair.trigram.as_ref(), lambda);
    let hypothesis = best.tokens.clone();
    Scored {
        logprob,
        tokens: ids.len() as u64 + 1,
        edits: align(&hypothesis, &u.tokens),
        su: su_match(&lex.parse(&hypothesis), &u.ref_frame),
        hypothesis,
    }
}

/// Seed of the simulated channel for the `index`-th test utterance.
pub fn channel_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedOutcome {
    pub group: Group,
    pub routed: LmClassId,
    pub ci: Scored,
    pub cd: Scored,
}

/// Run both conditions over the identical test set and channel draws.
pub fn evaluate(
    cfg: &Config,
    res: &Resources,
    registry: &LMRegistry,
    test: &[Utterance],
    seed: u64,
) -> Result<Vec<PairedOutcome>> {
    let rc = &cfg.recognizer;
    test.par_iter()
        .enumerate()
        .map(|(i, u)| {
            let nbest = generate_nbest(&u.tokens, &res.confusions, rc.nbest, rc.noise, channel_seed(seed, i))?;
            let fallback = registry.fallback();
            let routed = if cfg.control {
                LmClassId::ContextIndependent
            } else {
                registry.route(u.lm_class())
            };
            let cd_pair = registry.pool().pair(routed).expect("routes point at loaded models");
            Ok(PairedOutcome {
                group: Group::of(u.context.act),
                routed,
                ci: score(u, fallback, &nbest, rc.lambda, &res.lexicon),
                cd: score(u, cd_pair, &nbest, rc.lambda, &res.lexicon),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupTotals {
    pub ci: Totals,
    pub cd: Totals,
}

pub fn accumulate(outcomes: &[PairedOutcome]) -> BTreeMap<&'static str, GroupTotals> {
    let mut out: BTreeMap<&'static str, GroupTotals> = Group::ALL
        .iter()
        .map(|g| (g.as_str(), GroupTotals::default()))
        .collect();
    for o in outcomes {
        let t = |s: &Scored| Totals {
            utterances: 1,
            tokens: s.tokens,
            logprob: s.logprob,
            ref_words: s.edits.reference_len as u64,
            word_errors: s.edits.errors() as u64,
            su_matches: u64::from(s.su),
        };
        for g in [o.group, Group::Global] {
            let e = out.get_mut(g.as_str()).expect("all groups present");
            e.ci.add(&t(&o.ci));
            e.cd.add(&t(&o.cd));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub pp: f64,
    pub wa: f64,
    pub su: f64,
}

impl Metrics {
    fn of(t: &Totals) -> Self {
        Metrics {
            pp: t.perplexity(),
            wa: t.word_accuracy(),
            su: t.su_rate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: Group,
    pub utterances: u64,
    pub tokens: u64,
    pub context_independent: Metrics,
    pub context_dependent: Metrics,
    /// Relative PP reduction, percent.
    pub pp_reduction: f64,
    /// Relative word-error reduction, percent.
    pub wa_error_reduction: f64,
    /// Relative understanding-error reduction, percent.
    pub su_error_reduction: f64,
}

fn relative(before: f64, after: f64) -> f64 {
    if before == 0.0 {
        0.0
    } else {
        100.0 * (before - after) / before
    }
}

fn rows(totals: &BTreeMap<&'static str, GroupTotals>) -> Vec<GroupRow> {
    Group::ALL
        .iter()
        .map(|&g| {
            let t = &totals[g.as_str()];
            let (ci, cd) = (Metrics::of(&t.ci), Metrics::of(&t.cd));
            GroupRow {
                group: g,
                utterances: t.ci.utterances,
                tokens: t.ci.tokens,
                pp_reduction: relative(ci.pp, cd.pp),
                wa_error_reduction: relative(100.0 - ci.wa, 100.0 - cd.wa),
                su_error_reduction: relative(100.0 - ci.su, 100.0 - cd.su),
                context_independent: ci,
                context_dependent: cd,
            }
        })
        .collect()
}

/// Per-group metrics of one evaluation run.
pub fn group_rows(outcomes: &[PairedOutcome]) -> Vec<GroupRow> {
    rows(&accumulate(outcomes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    /// Specific classes routed to the context-independent model.
    pub substituted: Vec<String>,
    pub rows: Vec<GroupRow>,
    pub totals: BTreeMap<String, GroupTotals>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: Config,
    pub seeds: Vec<SeedReport>,
    /// Pooled over all seeds.
    pub aggregate: Vec<GroupRow>,
}

impl ComparisonReport {
    pub fn row(&self, group: Group) -> &GroupRow {
        self.aggregate
            .iter()
            .find(|r| r.group == group)
            .expect("all groups present")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Tab-separated table with one decimal place.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from(
            "scope\tgroup\tutterances\tpp_ci\tpp_cd\tpp_red\twa_ci\twa_cd\twa_err_red\tsu_ci\tsu_cd\tsu_err_red\n",
        );
        let scopes = self
            .seeds
            .iter()
            .map(|r| (format!("seed={}", r.seed), &r.rows))
            .chain(std::iter::once(("all".to_string(), &self.aggregate)));
        for (scope, rows) in scopes {
            for r in rows {
                let (a, b) = (&r.context_independent, &r.context_dependent);
                let _ = writeln!(
                    s,
                    "{scope}\t{}\t{}\t{:.1}\t{:.1}\t{:.1}\t{:.1}\t{:.1}\t{:.1}\t{:.1}\t{:.1}\t{:.1}",
                    r.group.as_str(),
                    r.utterances,
                    a.pp,
                    b.pp,
                    r.pp_reduction,
                    a.wa,
                    b.wa,
                    r.wa_error_reduction,
                    a.su,
                    b.su,
                    r.su_error_reduction
                );
            }
        }
        s
    }
}

/// Everything one seed produces.
pub struct SeedRun {
    pub split: CorpusSplit,
    pub models: ModelSet,
    pub registry: LMRegistry,
    pub outcomes: Vec<PairedOutcome>,
    pub report: SeedReport,
}

pub fn run_seed(cfg: &Config, res: &Resources, seed: u64) -> Result<SeedRun> {
    let split = prepare_split(cfg, res, seed)?;
    let (vocab, map) = build_classes(cfg, &split.train, seed)?;
    let models = train_models(cfg, &split.train, &vocab, &map)?;
    let registry = models.registry(cfg)?;
    let outcomes = evaluate(cfg, res, &registry, &split.test, seed)?;
    let totals = accumulate(&outcomes);
    let substituted = LmClassId::SPECIFIC
        .iter()
        .filter(|&&c| registry.route(c) != c)
        .map(|c| c.label().to_string())
        .collect();
    let report = SeedReport {
        seed,
        substituted,
        rows: rows(&totals),
        totals: totals.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    };
    Ok(SeedRun {
        split,
        models,
        registry,
        outcomes,
        report,
    })
}

/// Both conditions over every configured seed.
pub fn run_compare(cfg: &Config) -> Result<ComparisonReport> {
    cfg.validate()?;
    let res = Resources::load(cfg)?;
    let seeds = cfg
        .seed_list()
        .into_iter()
        .map(|s| run_seed(cfg, &res, s).map(|r| r.report))
        .collect::<Result<Vec<_>>>()?;
    let mut pooled: BTreeMap<&'static str, GroupTotals> = Group::ALL
        .iter()
        .map(|g| (g.as_str(), GroupTotals::default()))
        .collect();
    for s in &seeds {
        for g in Group::ALL {
            let t = &s.totals[g.as_str()];
            let e = pooled.get_mut(g.as_str()).expect("all groups present");
            e.ci.add(&t.ci);
            e.cd.add(&t.cd);
        }
    }
    Ok(ComparisonReport {
        config: cfg.clone(),
        aggregate: rows(&pooled),
        seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Config {
        let mut cfg = Config {
            seeds: 1,
            ..Config::default()
        };
        cfg.corpus.scale = 0.03;
        cfg
    }

    #[test]
    fn group_accounting() {
        let rep = run_compare(&small()).unwrap();
        let (r, c, g) = (
            rep.row(Group::Requests),
            rep.row(Group::Confirms),
            rep.row(Group::Global),
        );
        assert_eq!(r.utterances + c.utterances, g.utterances);
        assert_eq!(r.tokens + c.tokens, g.tokens);
    }

    #[test]
    fn control_run_has_zero_deltas() {
        let mut cfg = small();
        cfg.control = true;
        let rep = run_compare(&cfg).unwrap();
        for r in &rep.aggregate {
            assert_eq!(r.context_independent, r.context_dependent);
            assert_eq!(r.pp_reduction, 0.0);
            assert_eq!(r.wa_error_reduction, 0.0);
            assert_eq!(r.su_error_reduction, 0.0);
        }
    }

    #[test]
    fn per_model_clustering_runs() {
        let mut cfg = small();
        cfg.clustering.per_model = true;
        let rep = run_compare(&cfg).unwrap();
        assert!(rep.row(Group::Global).context_dependent.pp.is_finite());
    }

    #[test]
    fn report_is_reproducible() {
        let cfg = small();
        let a = run_compare(&cfg).unwrap();
        let b = run_compare(&cfg).unwrap();
        assert_eq!(a.to_tsv(), b.to_tsv());
        assert_eq!(a.to_json(), b.to_json());
    }
}
