//! Dialogue-context taxonomy and its mapping onto the ten specific LM classes.
//!
//! A raw dialogue context is the system's dialogue act together with the
//! ordered list of task parameters it is about. Contexts are collapsed onto
//! LM classes in three steps: the act kind picks the family, semantically
//! equivalent parameters are merged, and verifications of more than two
//! parameters keep only the first two. Anything that does not land on one of
//! the ten classes is served by the context-independent model.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DialogueAct {
    Request,
    Verify,
}

impl DialogueAct {
    pub fn as_str(self) -> &'static str {
        match self {
            DialogueAct::Request => "DA-REQUEST",
            DialogueAct::Verify => "DA-VERIFY",
        }
    }
}

impl fmt::Display for DialogueAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DialogueAct {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DA-REQUEST" | "REQUEST" => Ok(DialogueAct::Request),
            "DA-VERIFY" | "VERIFY" => Ok(DialogueAct::Verify),
            other => Err(Error::invalid("act", format!("unknown dialogue act `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskParameter {
    DepCity,
    ArrCity,
    DepTime,
    DepDate,
    WeekDay,
    RelativeDay,
    PartDay,
    Hour,
}

impl TaskParameter {
    pub const ALL: [TaskParameter; 8] = [
        TaskParameter::DepCity,
        TaskParameter::ArrCity,
        TaskParameter::DepTime,
        TaskParameter::DepDate,
        TaskParameter::WeekDay,
        TaskParameter::RelativeDay,
        TaskParameter::PartDay,
        TaskParameter::Hour,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskParameter::DepCity => "dep-city",
            TaskParameter::ArrCity => "arr-city",
            TaskParameter::DepTime => "dep-time",
            TaskParameter::DepDate => "dep-date",
            TaskParameter::WeekDay => "week-day",
            TaskParameter::RelativeDay => "relative-day",
            TaskParameter::PartDay => "part-day",
            TaskParameter::Hour => "hour",
        }
    }

    /// Merge parameters that express the same semantic concept.
    pub fn canonical(self) -> TaskParameter {
        match self {
            TaskParameter::WeekDay | TaskParameter::RelativeDay => TaskParameter::DepDate,
            TaskParameter::PartDay | TaskParameter::Hour => TaskParameter::DepTime,
            other => other,
        }
    }
}

impl fmt::Display for TaskParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        TaskParameter::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid("param", format!("unknown task parameter `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DialogueContext {
    pub act: DialogueAct,
    pub params: Vec<TaskParameter>,
}

impl DialogueContext {
    pub fn new(act: DialogueAct, params: impl Into<Vec<TaskParameter>>) -> Result<Self> {
        let params = params.into();
        if params.is_empty() {
            return Err(Error::invalid(
                "params",
                "a dialogue context needs at least one parameter",
            ));
        }
        Ok(DialogueContext { act, params })
    }

    pub fn request(params: &[TaskParameter]) -> Self {
        DialogueContext::new(DialogueAct::Request, params).expect("non-empty params")
    }

    pub fn verify(params: &[TaskParameter]) -> Self {
        DialogueContext::new(DialogueAct::Verify, params).expect("non-empty params")
    }

    /// Comma-joined parameter list, as used in corpus files.
    pub fn params_str(&self) -> String {
        let names: Vec<&str> = self.params.iter().map(|p| p.as_str()).collect();
        names.join(",")
    }

    pub fn parse_parts(act: &str, params: &str) -> Result<Self> {
        let act = act.parse()?;
        let params = params
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<TaskParameter>>>()?;
        DialogueContext::new(act, params)
    }
}

impl fmt::Display for DialogueContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.act, self.params_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LmClassId {
    ReqDepCity,
    ReqDepArrCity,
    ReqArrCity,
    ReqTime,
    ReqDate,
    VerDepCity,
    VerDepArrCity,
    VerArrCity,
    VerTime,
    VerDate,
    ContextIndependent,
}

impl LmClassId {
    /// The ten specific classes, in table order.
    pub const SPECIFIC: [LmClassId; 10] = [
        LmClassId::ReqDepCity,
        LmClassId::ReqDepArrCity,
        LmClassId::ReqArrCity,
        LmClassId::ReqTime,
        LmClassId::ReqDate,
        LmClassId::VerDepCity,
        LmClassId::VerDepArrCity,
        LmClassId::VerArrCity,
        LmClassId::VerTime,
        LmClassId::VerDate,
    ];

    pub const ALL: [LmClassId; 11] = [
        LmClassId::ReqDepCity,
        LmClassId::ReqDepArrCity,
        LmClassId::ReqArrCity,
        LmClassId::ReqTime,
        LmClassId::ReqDate,
        LmClassId::VerDepCity,
        LmClassId::VerDepArrCity,
        LmClassId::VerArrCity,
        LmClassId::VerTime,
        LmClassId::VerDate,
        LmClassId::ContextIndependent,
    ];

    pub fn label(self) -> &'static str {
        match self {
            LmClassId::ReqDepCity => "DA-REQUEST dep-city",
            LmClassId::ReqDepArrCity => "DA-REQUEST dep-city, arr-city",
            LmClassId::ReqArrCity => "DA-REQUEST arr-city",
            LmClassId::ReqTime => "DA-REQUEST time",
            LmClassId::ReqDate => "DA-REQUEST date",
            LmClassId::VerDepCity => "DA-VERIFY dep-city",
            LmClassId::VerDepArrCity => "DA-VERIFY dep-city, arr-city",
            LmClassId::VerArrCity => "DA-VERIFY arr-city",
            LmClassId::VerTime => "DA-VERIFY time",
            LmClassId::VerDate => "DA-VERIFY date",
            LmClassId::ContextIndependent => "CONTEXT_INDEPENDENT",
        }
    }

    /// Dense index in `0..11`, matching [`LmClassId::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn act(self) -> Option<DialogueAct> {
        match self {
            LmClassId::ReqDepCity
            | LmClassId::ReqDepArrCity
            | LmClassId::ReqArrCity
            | LmClassId::ReqTime
            | LmClassId::ReqDate => Some(DialogueAct::Request),
            LmClassId::ContextIndependent => None,
            _ => Some(DialogueAct::Verify),
        }
    }

    /// A representative raw context that classifies onto this class.
    pub fn canonical_context(self) -> Option<DialogueContext> {
        use TaskParameter::*;
        let params: &[TaskParameter] = match self {
            LmClassId::ReqDepCity | LmClassId::VerDepCity => &[DepCity],
            LmClassId::ReqDepArrCity | LmClassId::VerDepArrCity => &[DepCity, ArrCity],
            LmClassId::ReqArrCity | LmClassId::VerArrCity => &[ArrCity],
            LmClassId::ReqTime | LmClassId::VerTime => &[DepTime],
            LmClassId::ReqDate | LmClassId::VerDate => &[DepDate],
            LmClassId::ContextIndependent => return None,
        };
        Some(DialogueContext {
            act: self.act()?,
            params: params.to_vec(),
        })
    }
}

impl fmt::Display for LmClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LmClassId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.split_whitespace().collect::<Vec<_>>().join(" ");
        LmClassId::ALL
            .into_iter()
            .find(|c| c.label() == norm)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

/// Map a raw dialogue context onto its LM class.
///
/// Allocation-free: this sits on the per-turn switching path.
pub fn classify_context(ctx: &DialogueContext) -> LmClassId {
    use TaskParameter::*;

    let mut canon = [DepCity; 2];
    let mut len = 0usize;
    for p in ctx.params.iter().map(|p| p.canonical()) {
        if canon[..len].contains(&p) {
            continue;
        }
        if len == 2 {
            if ctx.act == DialogueAct::Verify {
                // Only the first two parameters of a verification count.
                break;
            }
            return LmClassId::ContextIndependent;
        }
        canon[len] = p;
        len += 1;
    }

    match (ctx.act, &canon[..len]) {
        (DialogueAct::Request, [DepCity]) => LmClassId::ReqDepCity,
        (DialogueAct::Request, [ArrCity]) => LmClassId::ReqArrCity,
        (DialogueAct::Request, [DepTime]) => LmClassId::ReqTime,
        (DialogueAct::Request, [DepDate]) => LmClassId::ReqDate,
        (DialogueAct::Request, [DepCity, ArrCity] | [ArrCity, DepCity]) => LmClassId::ReqDepArrCity,
        (DialogueAct::Verify, [DepCity]) => LmClassId::VerDepCity,
        (DialogueAct::Verify, [ArrCity]) => LmClassId::VerArrCity,
        (DialogueAct::Verify, [DepTime]) => LmClassId::VerTime,
        (DialogueAct::Verify, [DepDate]) => LmClassId::VerDate,
        (DialogueAct::Verify, [DepCity, ArrCity] | [ArrCity, DepCity]) => LmClassId::VerDepArrCity,
        _ => LmClassId::ContextIndependent,
    }
}

/// Training statistics of one LM class, used to decide whether its specific
/// model is robust enough to be used.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    pub utterances: u64,
    /// Utterances longer than one token.
    pub multiword: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPolicy {
    pub min_utterances: u64,
    pub min_multiword: u64,
}

impl Default for RobustnessPolicy {
    fn default() -> Self {
        RobustnessPolicy {
            min_utterances: 500,
            min_multiword: 200,
        }
    }
}

impl RobustnessPolicy {
    pub const ALL_PASS: RobustnessPolicy = RobustnessPolicy {
        min_utterances: 0,
        min_multiword: 0,
    };

    pub fn is_robust(&self, stats: &ClassStats) -> bool {
        stats.utterances >= self.min_utterances && stats.multiword >= self.min_multiword
    }
}

/// Resolve the LM actually used for `class`: weak specific models are
/// replaced by the context-independent one.
pub fn effective_lm(
    class: LmClassId,
    stats: &BTreeMap<LmClassId, ClassStats>,
    policy: &RobustnessPolicy,
) -> Result<LmClassId> {
    if class == LmClassId::ContextIndependent {
        return Ok(class);
    }
    let s = stats
        .get(&class)
        .ok_or_else(|| Error::UnknownClass(class.label().to_string()))?;
    Ok(if policy.is_robust(s) {
        class
    } else {
        LmClassId::ContextIndependent
    })
}

/// Every raw context over the parameter inventory with up to `max_len`
/// distinct parameters, for exhaustive property checks.
pub fn enumerate_contexts(max_len: usize) -> Vec<DialogueContext> {
    fn extend(prefix: &mut Vec<TaskParameter>, max_len: usize, out: &mut Vec<Vec<TaskParameter>>) {
        if !prefix.is_empty() {
            out.push(prefix.clone());
        }
        if prefix.len() == max_len {
            return;
        }
        for p in TaskParameter::ALL {
            if !prefix.contains(&p) {
                prefix.push(p);
                extend(prefix, max_len, out);
                prefix.pop();
            }
        }
    }
    let mut lists = Vec::new();
    extend(&mut Vec::new(), max_len, &mut lists);
    let mut out = Vec::with_capacity(lists.len() * 2);
    for act in [DialogueAct::Request, DialogueAct::Verify] {
        for params in &lists {
            out.push(DialogueContext {
                act,
                params: params.clone(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::TaskParameter::*;
    use super::*;

    fn stats_with(class: LmClassId, s: ClassStats) -> BTreeMap<LmClassId, ClassStats> {
        let mut m: BTreeMap<_, _> = LmClassId::SPECIFIC
            .into_iter()
            .map(|c| {
                (
                    c,
                    ClassStats {
                        utterances: 5000,
                        multiword: 5000,
                    },
                )
            })
            .collect();
        m.insert(class, s);
        m
    }

    #[test]
    fn verification_keeps_first_two() {
        let ctx = DialogueContext::verify(&[DepCity, ArrCity, PartDay]);
        assert_eq!(classify_context(&ctx), LmClassId::VerDepArrCity);
    }

    #[test]
    fn semantic_merges() {
        assert_eq!(
            classify_context(&DialogueContext::request(&[WeekDay])),
            LmClassId::ReqDate
        );
        assert_eq!(
            classify_context(&DialogueContext::request(&[RelativeDay])),
            LmClassId::ReqDate
        );
        assert_eq!(classify_context(&DialogueContext::request(&[Hour])), LmClassId::ReqTime);
        assert_eq!(
            classify_context(&DialogueContext::verify(&[PartDay, Hour])),
            LmClassId::VerTime
        );
    }

    #[test]
    fn conjoint_city_pair_is_order_free() {
        for act in [DialogueAct::Request, DialogueAct::Verify] {
            let a = DialogueContext::new(act, vec![DepCity, ArrCity]).unwrap();
            let b = DialogueContext::new(act, vec![ArrCity, DepCity]).unwrap();
            assert_eq!(classify_context(&a), classify_context(&b));
        }
    }

    #[test]
    fn pairs_outside_inventory_fall_back() {
        assert_eq!(
            classify_context(&DialogueContext::request(&[DepCity, DepTime])),
            LmClassId::ContextIndependent
        );
        assert_eq!(
            classify_context(&DialogueContext::verify(&[DepDate, PartDay, DepCity])),
            LmClassId::ContextIndependent
        );
        // three params on a request are never truncated
        assert_eq!(
            classify_context(&DialogueContext::request(&[DepCity, ArrCity, PartDay])),
            LmClassId::ContextIndependent
        );
    }

    #[test]
    fn image_is_the_eleven_classes() {
        let mut seen = std::collections::BTreeSet::new();
        for ctx in enumerate_contexts(3) {
            seen.insert(classify_context(&ctx));
        }
        assert_eq!(seen.len(), 11);
    }

    #[test]
    fn canonical_contexts_round_trip() {
        for c in LmClassId::SPECIFIC {
            let ctx = c.canonical_context().unwrap();
            assert_eq!(classify_context(&ctx), c);
            let canon = DialogueContext {
                act: ctx.act,
                params: ctx.params.iter().map(|p| p.canonical()).collect(),
            };
            assert_eq!(classify_context(&canon), c);
        }
    }

    #[test]
    fn labels_parse_back() {
        for c in LmClassId::ALL {
            assert_eq!(c.label().parse::<LmClassId>().unwrap(), c);
        }
        assert!("DA-REQUEST nothing".parse::<LmClassId>().is_err());
    }

    #[test]
    fn weak_single_city_verification_is_substituted() {
        let stats = stats_with(
            LmClassId::VerDepCity,
            ClassStats {
                utterances: 506,
                multiword: 150,
            },
        );
        let policy = RobustnessPolicy::default();
        assert_eq!(
            effective_lm(LmClassId::VerDepCity, &stats, &policy).unwrap(),
            LmClassId::ContextIndependent
        );
        let stats = stats_with(
            LmClassId::ReqTime,
            ClassStats {
                utterances: 1291,
                multiword: 900,
            },
        );
        assert_eq!(
            effective_lm(LmClassId::ReqTime, &stats, &policy).unwrap(),
            LmClassId::ReqTime
        );
    }

    #[test]
    fn all_pass_policy_is_identity() {
        let stats = stats_with(LmClassId::VerArrCity, ClassStats::default());
        for c in LmClassId::ALL {
            assert_eq!(effective_lm(c, &stats, &RobustnessPolicy::ALL_PASS).unwrap(), c);
        }
    }

    #[test]
    fn missing_stats_is_an_error() {
        let stats = BTreeMap::new();
        assert!(matches!(
            effective_lm(LmClassId::ReqDate, &stats, &RobustnessPolicy::default()),
            Err(Error::UnknownClass(_))
        ));
    }

    #[test]
    fn context_text_round_trip() {
        let ctx = DialogueContext::verify(&[DepCity, ArrCity, PartDay]);
        assert_eq!(ctx.to_string(), "DA-VERIFY=dep-city,arr-city,part-day");
        let back = DialogueContext::parse_parts("DA-VERIFY", &ctx.params_str()).unwrap();
        assert_eq!(back, ctx);
        assert!(DialogueContext::parse_parts("DA-VERIFY", "").is_err());
    }
}
