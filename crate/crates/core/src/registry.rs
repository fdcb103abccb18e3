//! Resident model pool with per-turn switching.
//!
//! Every model is read once by [`LMRegistry::load_all`]; [`LMRegistry::switch`]
//! only consults a precomputed routing table.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::classlm::ClassNGramModel;
use crate::contextmap::{classify_context, effective_lm, ClassStats, DialogueContext, LmClassId, RobustnessPolicy};
use crate::error::{Error, Result};

static FILE_OPERATIONS: AtomicU64 = AtomicU64::new(0);

/// Number of file reads and writes performed by this module since start-up.
pub fn file_operations() -> u64 {
    FILE_OPERATIONS.load(Ordering::Relaxed)
}

fn count_op() {
    FILE_OPERATIONS.fetch_add(1, Ordering::Relaxed);
}

/// First-pass bigram and rescoring trigram of one LM class.
#[derive(Debug, Clone)]
pub struct ModelPair {
    pub bigram: Arc<ClassNGramModel>,
    pub trigram: Arc<ClassNGramModel>,
}

impl ModelPair {
    pub fn new(bigram: ClassNGramModel, trigram: ClassNGramModel) -> Self {
        ModelPair {
            bigram: Arc::new(bigram),
            trigram: Arc::new(trigram),
        }
    }

    pub fn stats(&self) -> ClassStats {
        let m = self.bigram.meta();
        ClassStats {
            utterances: m.utterances,
            multiword: m.multiword,
        }
    }
}

/// Immutable models shared by every session.
#[derive(Debug)]
pub struct ModelPool {
    pairs: [Option<ModelPair>; 11],
    routes: [LmClassId; 11],
    policy: RobustnessPolicy,
    warnings: Vec<String>,
}

impl ModelPool {
    pub fn pair(&self, class: LmClassId) -> Option<&ModelPair> {
        self.pairs[class.index()].as_ref()
    }

    pub fn route(&self, class: LmClassId) -> LmClassId {
        self.routes[class.index()]
    }

    pub fn policy(&self) -> RobustnessPolicy {
        self.policy
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Training statistics of every loaded specific model.
    pub fn stats(&self) -> BTreeMap<LmClassId, ClassStats> {
        LmClassId::SPECIFIC
            .iter()
            .filter_map(|&c| self.pair(c).map(|p| (c, p.stats())))
            .collect()
    }
}

/// A session's view of the pool: the shared models plus its active class.
#[derive(Debug, Clone)]
pub struct LMRegistry {
    pool: Arc<ModelPool>,
    active: LmClassId,
}

impl LMRegistry {
    /// Build a registry from models already in memory. `fallback` is the
    /// context-independent pair.
    pub fn from_models(
        fallback: ModelPair,
        specific: BTreeMap<LmClassId, ModelPair>,
        policy: RobustnessPolicy,
    ) -> Result<Self> {
        Self::assemble(fallback, specific, policy, Vec::new())
    }

    fn assemble(
        fallback: ModelPair,
        specific: BTreeMap<LmClassId, ModelPair>,
        policy: RobustnessPolicy,
        mut warnings: Vec<String>,
    ) -> Result<Self> {
        let mut pairs: [Option<ModelPair>; 11] = Default::default();
        pairs[LmClassId::ContextIndependent.index()] = Some(fallback);
        for (class, pair) in specific {
            if class == LmClassId::ContextIndependent {
                return Err(Error::invalid(
                    "specific",
                    "the fallback cannot be given as a specific model",
                ));
            }
            pairs[class.index()] = Some(pair);
        }
        let stats: BTreeMap<LmClassId, ClassStats> = LmClassId::SPECIFIC
            .iter()
            .filter_map(|&c| pairs[c.index()].as_ref().map(|p| (c, p.stats())))
            .collect();
        let mut routes = [LmClassId::ContextIndependent; 11];
        for class in LmClassId::SPECIFIC {
            if pairs[class.index()].is_none() {
                continue;
            }
            routes[class.index()] = effective_lm(class, &stats, &policy)?;
            if routes[class.index()] != class {
                let s = stats[&class];
                let msg = format!(
                    "{class}: {} utterances, {} multiword below thresholds; using fallback",
                    s.utterances, s.multiword
                );
                log::info!("{msg}");
                warnings.push(msg);
            }
        }
        Ok(LMRegistry {
            pool: Arc::new(ModelPool {
                pairs,
                routes,
                policy,
                warnings,
            }),
            active: LmClassId::ContextIndependent,
        })
    }

    /// Load every model named in a manifest of
    /// `class-label<TAB>bigram-path<TAB>trigram-path` rows. Relative paths
    /// are resolved against the manifest's directory; a path shared by
    /// several rows is read once.
    pub fn load_all(manifest: &Path, policy: RobustnessPolicy) -> Result<Self> {
        count_op();
        let file = fs::File::open(manifest)?;
        let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut rows: Vec<(LmClassId, PathBuf, PathBuf)> = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::parse(i + 1, "expected class, bigram path and trigram path"));
            }
            let class: LmClassId = f[0]
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("unknown class `{}`", f[0])))?;
            if rows.iter().any(|r| r.0 == class) {
                return Err(Error::parse(i + 1, format!("duplicate row for `{class}`")));
            }
            rows.push((class, base.join(f[1]), base.join(f[2])));
        }

        let mut cache: HashMap<PathBuf, Arc<ClassNGramModel>> = HashMap::new();
        let mut read = |path: &Path| -> Result<Arc<ClassNGramModel>> {
            if let Some(m) = cache.get(path) {
                return Ok(m.clone());
            }
            count_op();
            let bytes = fs::read(path)?;
            let m = Arc::new(ClassNGramModel::from_bytes(&bytes)?);
            cache.insert(path.to_path_buf(), m.clone());
            Ok(m)
        };

        let mut fallback = None;
        let mut specific = BTreeMap::new();
        let mut warnings = Vec::new();
        for (class, bi, tri) in rows {
            let pair = read(&bi).and_then(|b| {
                Ok(ModelPair {
                    bigram: b,
                    trigram: read(&tri)?,
                })
            });
            match (class, pair) {
                (LmClassId::ContextIndependent, pair) => fallback = Some(pair?),
                (_, Ok(pair)) => {
                    specific.insert(class, pair);
                }
                (_, Err(e)) => {
                    let msg = format!("{class}: {e}; routed to fallback");
                    log::warn!("{msg}");
                    warnings.push(msg);
                }
            }
        }
        let fallback = fallback.ok_or(Error::MissingFallback)?;
        Self::assemble(fallback, specific, policy, warnings)
    }

    /// Write each pair under `dir` and a manifest listing them; returns the
    /// manifest path.
    pub fn write_all(dir: &Path, fallback: &ModelPair, specific: &BTreeMap<LmClassId, ModelPair>) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let mut manifest = String::new();
        let rows =
            std::iter::once((LmClassId::ContextIndependent, fallback)).chain(specific.iter().map(|(c, p)| (*c, p)));
        for (class, pair) in rows {
            let stem = format!("lm{:02}", class.index());
            let bi = format!("{stem}.bigram.bin");
            let tri = if Arc::ptr_eq(&pair.bigram, &pair.trigram) {
                bi.clone()
            } else {
                format!("{stem}.trigram.bin")
            };
            count_op();
            fs::write(dir.join(&bi), pair.bigram.to_bytes())?;
            if tri != bi {
                count_op();
                fs::write(dir.join(&tri), pair.trigram.to_bytes())?;
            }
            manifest.push_str(&format!("{}\t{bi}\t{tri}\n", class.label()));
        }
        let path = dir.join("models.tsv");
        count_op();
        fs::write(&path, manifest)?;
        Ok(path)
    }

    /// Select the model for the next user turn.
    #[inline]
    pub fn switch(&mut self, ctx: &DialogueContext) -> LmClassId {
        self.active = self.pool.routes[classify_context(ctx).index()];
        self.active
    }

    pub fn reset(&mut self) {
        self.active = LmClassId::ContextIndependent;
    }

    pub fn active(&self) -> LmClassId {
        self.active
    }

    pub fn active_pair(&self) -> &ModelPair {
        self.pool.pairs[self.active.index()]
            .as_ref()
            .expect("routes only point at loaded models")
    }

    pub fn fallback(&self) -> &ModelPair {
        self.pool.pairs[LmClassId::ContextIndependent.index()]
            .as_ref()
            .expect("fallback is always loaded")
    }

    /// Resolved class for `class` without changing the active model.
    pub fn route(&self, class: LmClassId) -> LmClassId {
        self.pool.route(class)
    }

    /// Classes that have a resident model, fallback included.
    pub fn routable(&self) -> Vec<LmClassId> {
        LmClassId::ALL
            .iter()
            .copied()
            .filter(|c| self.pool.pairs[c.index()].is_some())
            .collect()
    }

    pub fn pool(&self) -> &Arc<ModelPool> {
        &self.pool
    }

    /// An independent selector over the same models.
    pub fn session(&self) -> LMRegistry {
        LMRegistry {
            pool: Arc::clone(&self.pool),
            active: LmClassId::ContextIndependent,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classlm::TrainConfig;
    use crate::contextmap::{enumerate_contexts, DialogueAct, TaskParameter};
    use crate::corpus::{build_vocabulary, Token, Utterance};
    use crate::semantics::CaseFrame;
    use crate::wordclass::WordClassMap;

    fn utts(class: LmClassId, n: usize, text: &str) -> Vec<Utterance> {
        (0..n)
            .map(|i| Utterance {
                id: format!("{i}"),
                context: class.canonical_context().unwrap(),
                ref_frame: CaseFrame::default(),
                tokens: text.split_whitespace().map(|w| Token::new(w).unwrap()).collect(),
            })
            .collect()
    }

    fn pair(corpus: &[Utterance], label: &str) -> ModelPair {
        let v = build_vocabulary(corpus, 1).unwrap();
        let map = WordClassMap::identity(&v);
        let b = ClassNGramModel::train(corpus, &v, &map, &TrainConfig::default(), label).unwrap();
        let t = ClassNGramModel::train(
            corpus,
            &v,
            &map,
            &TrainConfig {
                order: 3,
                ..TrainConfig::default()
            },
            label,
        )
        .unwrap();
        ModelPair::new(b, t)
    }

    fn full_registry(policy: RobustnessPolicy) -> LMRegistry {
        let mut all = Vec::new();
        let mut specific = BTreeMap::new();
        for (i, c) in LmClassId::SPECIFIC.iter().enumerate() {
            // VERIFY single-city classes get few, mostly one-word utterances
            let n = if matches!(c, LmClassId::VerDepCity | LmClassId::VerArrCity) {
                3
            } else {
                10 + i
            };
            let u = utts(*c, n, "from milano to roma");
            specific.insert(*c, pair(&u, c.label()));
            all.extend(u);
        }
        LMRegistry::from_models(pair(&all, "ci"), specific, policy).unwrap()
    }

    #[test]
    fn routing_matches_mapping_for_every_context() {
        let policy = RobustnessPolicy {
            min_utterances: 5,
            min_multiword: 5,
        };
        let mut reg = full_registry(policy);
        let stats = reg.pool().stats();
        assert_eq!(reg.routable().len(), 11);
        for ctx in enumerate_contexts(3) {
            let want = effective_lm(classify_context(&ctx), &stats, &policy).unwrap();
            assert_eq!(reg.switch(&ctx), want, "{ctx}");
            assert_eq!(reg.active(), want);
        }
    }

    #[test]
    fn weak_classes_route_to_fallback() {
        let policy = RobustnessPolicy {
            min_utterances: 5,
            min_multiword: 5,
        };
        let mut reg = full_registry(policy);
        let ver_dep = DialogueContext::verify(&[TaskParameter::DepCity]);
        assert_eq!(reg.switch(&ver_dep), LmClassId::ContextIndependent);
        let req_time = DialogueContext::request(&[TaskParameter::DepTime]);
        assert_eq!(reg.switch(&req_time), LmClassId::ReqTime);
        assert_eq!(reg.switch(&req_time), LmClassId::ReqTime);
        assert_eq!(reg.pool().warnings().len(), 2);
    }

    #[test]
    fn fallback_only_registry() {
        let u = utts(LmClassId::ReqDepCity, 4, "milano");
        let mut reg = LMRegistry::from_models(pair(&u, "ci"), BTreeMap::new(), RobustnessPolicy::ALL_PASS).unwrap();
        for ctx in enumerate_contexts(2) {
            assert_eq!(reg.switch(&ctx), LmClassId::ContextIndependent);
        }
    }

    #[test]
    fn sessions_are_independent() {
        let mut a = full_registry(RobustnessPolicy::ALL_PASS);
        let b = a.session();
        a.switch(&DialogueContext::new(DialogueAct::Request, vec![TaskParameter::Hour]).unwrap());
        assert_eq!(a.active(), LmClassId::ReqTime);
        assert_eq!(b.active(), LmClassId::ContextIndependent);
        assert!(Arc::ptr_eq(a.pool(), b.pool()));
    }

    #[test]
    fn load_round_trip_and_degraded_modes() {
        let dir = tempfile::tempdir().unwrap();
        let reg = full_registry(RobustnessPolicy::ALL_PASS);
        let specific: BTreeMap<_, _> = LmClassId::SPECIFIC
            .iter()
            .map(|&c| (c, reg.pool().pair(c).unwrap().clone()))
            .collect();
        let manifest = LMRegistry::write_all(dir.path(), reg.fallback(), &specific).unwrap();

        let mut loaded = LMRegistry::load_all(&manifest, RobustnessPolicy::ALL_PASS).unwrap();
        assert_eq!(loaded.routable().len(), 11);
        assert_eq!(loaded.active(), LmClassId::ContextIndependent);
        let ctx = DialogueContext::request(&[TaskParameter::DepCity, TaskParameter::ArrCity]);
        assert_eq!(loaded.switch(&ctx), LmClassId::ReqDepArrCity);
        let s = ["from", "milano"];
        assert_eq!(
            loaded.active_pair().bigram.logprob(&s).to_bits(),
            reg.pool()
                .pair(LmClassId::ReqDepArrCity)
                .unwrap()
                .bigram
                .logprob(&s)
                .to_bits()
        );

        // corrupt one specific model
        let victim = dir
            .path()
            .join(format!("lm{:02}.bigram.bin", LmClassId::ReqTime.index()));
        fs::write(&victim, b"garbage").unwrap();
        let mut degraded = LMRegistry::load_all(&manifest, RobustnessPolicy::ALL_PASS).unwrap();
        assert_eq!(
            degraded.switch(&DialogueContext::request(&[TaskParameter::DepTime])),
            LmClassId::ContextIndependent
        );
        assert_eq!(degraded.pool().warnings().len(), 1);

        // fallback missing
        let text = fs::read_to_string(&manifest).unwrap();
        let without: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
        fs::write(&manifest, without).unwrap();
        assert!(matches!(
            LMRegistry::load_all(&manifest, RobustnessPolicy::ALL_PASS),
            Err(Error::MissingFallback)
        ));
    }
}
