//! Fixed-mixed-initiative dialogue manager for timetable enquiries.

use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::contextmap::{DialogueAct, DialogueContext, LmClassId, TaskParameter};
use crate::corpus::tokenize;
use crate::error::{Error, Result};
use crate::recsim::{generate_nbest, rescore, ConfusionTable};
use crate::registry::LMRegistry;
use crate::semantics::{CaseFrame, Confirm, PartDay, SemanticLexicon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    DepCity,
    ArrCity,
    DepDate,
    PartDay,
    Hour,
}

impl Slot {
    pub const ALL: [Slot; 5] = [Slot::DepCity, Slot::ArrCity, Slot::DepDate, Slot::PartDay, Slot::Hour];

    fn index(self) -> usize {
        self as usize
    }

    pub fn param(self) -> TaskParameter {
        match self {
            Slot::DepCity => TaskParameter::DepCity,
            Slot::ArrCity => TaskParameter::ArrCity,
            Slot::DepDate => TaskParameter::DepDate,
            Slot::PartDay => TaskParameter::PartDay,
            Slot::Hour => TaskParameter::Hour,
        }
    }

    fn of_param(p: TaskParameter) -> &'static [Slot] {
        match p {
            TaskParameter::DepCity => &[Slot::DepCity],
            TaskParameter::ArrCity => &[Slot::ArrCity],
            TaskParameter::DepDate | TaskParameter::WeekDay | TaskParameter::RelativeDay => &[Slot::DepDate],
            TaskParameter::DepTime => &[Slot::PartDay, Slot::Hour],
            TaskParameter::PartDay => &[Slot::PartDay],
            TaskParameter::Hour => &[Slot::Hour],
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.param().as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Text(String),
    PartDay(PartDay),
    Hour(u8),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            Value::PartDay(p) => f.write_str(p.as_str()),
            Value::Hour(h) => write!(f, "{h}"),
        }
    }
}

fn get(frame: &CaseFrame, slot: Slot) -> Option<Value> {
    match slot {
        Slot::DepCity => frame.dep_city.clone().map(Value::Text),
        Slot::ArrCity => frame.arr_city.clone().map(Value::Text),
        Slot::DepDate => frame.dep_date.clone().map(Value::Text),
        Slot::PartDay => frame.part_day.map(Value::PartDay),
        Slot::Hour => frame.hour.map(Value::Hour),
    }
}

fn set(frame: &mut CaseFrame, slot: Slot, value: Option<Value>) {
    let text = |v: Option<Value>| match v {
        Some(Value::Text(s)) => Some(s),
        _ => None,
    };
    match slot {
        Slot::DepCity => frame.dep_city = text(value),
        Slot::ArrCity => frame.arr_city = text(value),
        Slot::DepDate => frame.dep_date = text(value),
        Slot::PartDay => {
            frame.part_day = match value {
                Some(Value::PartDay(p)) => Some(p),
                _ => None,
            }
        }
        Slot::Hour => {
            frame.hour = match value {
                Some(Value::Hour(h)) => Some(h),
                _ => None,
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Collecting,
    Confirming,
    Answering,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    /// More matching trains than this triggers a departure-time request.
    pub many_trains: usize,
    pub max_reprompts: usize,
    pub max_turns: usize,
    /// Ask for the travel date once both cities are known.
    pub ask_date: bool,
    /// Verify hour answers explicitly instead of accepting them.
    pub verify_hour: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            many_trains: 3,
            max_reprompts: 3,
            max_turns: 20,
            ask_date: false,
            verify_hour: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Train {
    pub id: String,
    pub dep: String,
    pub arr: String,
    /// Minutes after midnight.
    pub dep_time: u32,
    pub arr_time: u32,
}

fn parse_clock(s: &str) -> Option<u32> {
    let (h, m) = s.split_once(':')?;
    let (h, m): (u32, u32) = (h.parse().ok()?, m.parse().ok()?);
    (h < 24 && m < 60).then_some(h * 60 + m)
}

fn clock(minutes: u32) -> String {
    format!("{:02}:{:02}", minutes / 60 % 24, minutes % 60)
}

fn title(city: &str) -> String {
    city.split('_')
        .map(|w| {
            let mut c = w.chars();
            c.next()
                .map(|f| f.to_uppercase().chain(c.flat_map(char::to_lowercase)).collect())
                .unwrap_or_default()
        })
        .collect::<Vec<String>>()
        .join(" ")
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timetable {
    rows: Vec<Train>,
}

impl Timetable {
    pub fn builtin() -> Self {
        Self::read(include_str!("../data/default.timetable").as_bytes()).expect("builtin timetable parses")
    }

    /// Rows of `train_id<TAB>dep<TAB>arr<TAB>HH:MM<TAB>HH:MM`.
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<Train> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').map(str::trim).collect();
            if f.len() != 5 {
                return Err(Error::parse(i + 1, "expected five tab-separated fields"));
            }
            let time = |s: &str| parse_clock(s).ok_or_else(|| Error::parse(i + 1, format!("bad time `{s}`")));
            if rows.iter().any(|t| t.id == f[0]) {
                return Err(Error::parse(i + 1, format!("duplicate train id `{}`", f[0])));
            }
            let city = |s: &str| s.split_whitespace().collect::<Vec<_>>().join("_").to_uppercase();
            rows.push(Train {
                id: f[0].to_string(),
                dep: city(f[1]),
                arr: city(f[2]),
                dep_time: time(f[3])?,
                arr_time: time(f[4])?,
            });
        }
        Ok(Timetable { rows })
    }

    pub fn trains(&self) -> &[Train] {
        &self.rows
    }

    /// Trains between the two cities, optionally within a part of the day.
    pub fn matching(&self, dep: &str, arr: &str, part_day: Option<PartDay>) -> Vec<&Train> {
        self.rows
            .iter()
            .filter(|t| t.dep == dep && t.arr == arr)
            .filter(|t| {
                part_day.is_none_or(|p| {
                    let (a, b) = p.window();
                    (a..b).contains(&t.dep_time)
                })
            })
            .collect()
    }
}

/// Requested departure in minutes: the hour, moved to the afternoon when the
/// part of the day says so, or the start of the part of the day.
pub fn requested_time(hour: Option<u8>, part_day: Option<PartDay>) -> Option<u32> {
    match (hour, part_day) {
        (Some(h), Some(PartDay::Afternoon | PartDay::Evening)) if h < 12 => Some((h as u32 + 12) * 60),
        (Some(h), _) => Some(h as u32 * 60),
        (None, Some(p)) => Some(p.window().0),
        (None, None) => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SystemAct {
    Ask(DialogueContext),
    Answer { train: String },
    Apology,
}

impl fmt::Display for SystemAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemAct::Ask(ctx) => write!(f, "{ctx}"),
            SystemAct::Answer { train } => write!(f, "ANSWER={train}"),
            SystemAct::Apology => f.write_str("APOLOGY"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemTurn {
    pub act: SystemAct,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    /// A negation with nothing pending to deny was ignored.
    DiscardedNegation,
    Confirmed(Vec<Slot>),
    /// A verification was denied without replacement values.
    Rejected(Vec<Slot>),
    Correction {
        slot: Slot,
        from: Value,
        to: Value,
    },
    Reprompt,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |s: &[Slot]| s.iter().map(Slot::to_string).collect::<Vec<_>>().join(",");
        match self {
            Event::DiscardedNegation => f.write_str("discarded-negation"),
            Event::Confirmed(s) => write!(f, "confirmed={}", list(s)),
            Event::Rejected(s) => write!(f, "rejected={}", list(s)),
            Event::Correction { slot, from, to } => write!(f, "correction={slot}:{from}->{to}"),
            Event::Reprompt => f.write_str("reprompt"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DialogueState {
    pub slots: CaseFrame,
    confirmed: [bool; 5],
    pub pending: Option<DialogueContext>,
    pub history: Vec<(SystemAct, CaseFrame)>,
    pub phase: Phase,
    pub events: Vec<Event>,
    empty_turns: usize,
    apologies: usize,
}

impl Default for DialogueState {
    fn default() -> Self {
        Self::new()
    }
}

impl DialogueState {
    pub fn new() -> Self {
        DialogueState {
            slots: CaseFrame::default(),
            confirmed: [false; 5],
            pending: None,
            history: Vec::new(),
            phase: Phase::Collecting,
            events: Vec::new(),
            empty_turns: 0,
            apologies: 0,
        }
    }

    pub fn is_confirmed(&self, slot: Slot) -> bool {
        self.confirmed[slot.index()]
    }

    pub fn value(&self, slot: Slot) -> Option<Value> {
        get(&self.slots, slot)
    }

    fn unconfirmed(&self) -> Vec<Slot> {
        Slot::ALL
            .iter()
            .copied()
            .filter(|&s| self.value(s).is_some() && !self.is_confirmed(s))
            .collect()
    }

    fn update_phase(&mut self) {
        if self.phase == Phase::Closed || self.phase == Phase::Answering {
            return;
        }
        self.phase = if self.unconfirmed().is_empty() {
            Phase::Collecting
        } else {
            Phase::Confirming
        };
    }
}

fn verify_prompt(state: &DialogueState, slots: &[Slot]) -> String {
    let mut parts = Vec::new();
    for &s in slots {
        let v = state.value(s).expect("verified slots are filled");
        parts.push(match (s, v) {
            (Slot::DepCity, Value::Text(c)) => format!("from {}", title(&c)),
            (Slot::ArrCity, Value::Text(c)) => format!("to {}", title(&c)),
            (Slot::DepDate, d) => format!("on {}", d.to_string().to_lowercase()),
            (Slot::PartDay, Value::PartDay(p)) => format!("in the {}", p.as_str().to_lowercase()),
            (Slot::Hour, Value::Hour(h)) => format!("at {h}"),
            (_, v) => v.to_string(),
        });
    }
    format!("You are travelling {}, is that right?", parts.join(" "))
}

/// Choose the next system act.
pub fn next_act(state: &DialogueState, tt: &Timetable, cfg: &PolicyConfig) -> Result<SystemTurn> {
    if state.phase == Phase::Closed {
        return Err(Error::SessionClosed);
    }
    let ask = |params: &[TaskParameter], prompt: &str| SystemTurn {
        act: SystemAct::Ask(DialogueContext::request(params)),
        prompt: prompt.to_string(),
    };

    let pending = state.unconfirmed();
    if !pending.is_empty() {
        let params: Vec<TaskParameter> = pending.iter().map(|s| s.param()).collect();
        return Ok(SystemTurn {
            act: SystemAct::Ask(DialogueContext::verify(&params)),
            prompt: verify_prompt(state, &pending),
        });
    }

    let (dep, arr) = (&state.slots.dep_city, &state.slots.arr_city);
    match (dep, arr) {
        (None, None) => {
            return Ok(ask(
                &[TaskParameter::DepCity, TaskParameter::ArrCity],
                "Where are you leaving from, and where are you going?",
            ))
        }
        (None, Some(_)) => return Ok(ask(&[TaskParameter::DepCity], "Which station are you leaving from?")),
        (Some(_), None) => return Ok(ask(&[TaskParameter::ArrCity], "Which station are you travelling to?")),
        _ => {}
    }
    let (dep, arr) = (dep.as_deref().unwrap_or_default(), arr.as_deref().unwrap_or_default());
    if cfg.ask_date && state.slots.dep_date.is_none() {
        return Ok(ask(&[TaskParameter::DepDate], "On which day do you want to travel?"));
    }
    let part_day = state.slots.part_day;
    if state.slots.hour.is_none() && tt.matching(dep, arr, part_day).len() > cfg.many_trains {
        let when = part_day
            .map(|p| format!(" in the {}", p.as_str().to_lowercase()))
            .unwrap_or_default();
        return Ok(ask(
            &[TaskParameter::DepTime],
            &format!("Several trains run{when}. At what time would you like to depart?"),
        ));
    }
    Ok(answer(state, tt).0)
}

/// Pick the earliest train at or after the requested time.
pub fn answer(state: &DialogueState, tt: &Timetable) -> (SystemTurn, Phase) {
    let dep = state.slots.dep_city.as_deref().unwrap_or_default();
    let arr = state.slots.arr_city.as_deref().unwrap_or_default();
    let from = requested_time(state.slots.hour, state.slots.part_day).unwrap_or(0);
    let window = if state.slots.hour.is_none() {
        state.slots.part_day
    } else {
        None
    };
    let best = tt
        .matching(dep, arr, window)
        .into_iter()
        .filter(|t| t.dep_time >= from)
        .min_by_key(|t| (t.dep_time, t.id.clone()));
    match best {
        Some(t) => (
            SystemTurn {
                act: SystemAct::Answer { train: t.id.clone() },
                prompt: format!(
                    "Train {} departs {} at {} and reaches {} at {}. Would you like more details on this train?",
                    t.id,
                    title(&t.dep),
                    clock(t.dep_time),
                    title(&t.arr),
                    clock(t.arr_time)
                ),
            },
            Phase::Answering,
        ),
        None => (
            SystemTurn {
                act: SystemAct::Apology,
                prompt: format!(
                    "Sorry, no train from {} to {} fits your request.",
                    title(dep),
                    title(arr)
                ),
            },
            Phase::Collecting,
        ),
    }
}

/// Merge a parsed user frame into the state, keeping only interpretations
/// coherent with the pending system act.
pub fn integrate(state: &mut DialogueState, frame: &CaseFrame, cfg: &PolicyConfig) -> Result<()> {
    match state.phase {
        Phase::Collecting | Phase::Confirming => {}
        Phase::Answering | Phase::Closed => return Err(Error::SessionClosed),
    }
    let act = state.pending.as_ref().map(|c| c.act);
    state.history.push((
        state.pending.clone().map(SystemAct::Ask).unwrap_or(SystemAct::Apology),
        frame.clone(),
    ));

    if frame.is_empty() {
        state.empty_turns += 1;
        if state.empty_turns > cfg.max_reprompts {
            state.phase = Phase::Closed;
        } else {
            state.events.push(Event::Reprompt);
        }
        return Ok(());
    }
    state.empty_turns = 0;

    let verifying: Vec<Slot> = match (&state.pending, act) {
        (Some(ctx), Some(DialogueAct::Verify)) => {
            let mut v: Vec<Slot> = Vec::new();
            for &p in &ctx.params {
                for &s in Slot::of_param(p) {
                    if !v.contains(&s) && state.value(s).is_some() {
                        v.push(s);
                    }
                }
            }
            v
        }
        _ => Vec::new(),
    };

    match frame.confirm {
        Some(Confirm::No) if verifying.is_empty() => state.events.push(Event::DiscardedNegation),
        Some(Confirm::No) if !Slot::ALL.iter().any(|&s| get(frame, s).is_some()) => {
            for &s in &verifying {
                set(&mut state.slots, s, None);
                state.confirmed[s.index()] = false;
            }
            state.events.push(Event::Rejected(verifying.clone()));
        }
        Some(Confirm::Yes) => {
            let agreed: Vec<Slot> = verifying
                .iter()
                .copied()
                .filter(|&s| get(frame, s).is_none_or(|v| Some(v) == state.value(s)))
                .collect();
            for &s in &agreed {
                state.confirmed[s.index()] = true;
            }
            if !agreed.is_empty() {
                state.events.push(Event::Confirmed(agreed));
            }
        }
        _ => {}
    }

    for slot in Slot::ALL {
        let Some(v) = get(frame, slot) else { continue };
        let auto = slot == Slot::Hour && !cfg.verify_hour;
        match state.value(slot) {
            None => {
                set(&mut state.slots, slot, Some(v));
                state.confirmed[slot.index()] = auto;
            }
            Some(old) if old == v => {}
            Some(old) => {
                if state.is_confirmed(slot) || auto {
                    state.events.push(Event::Correction {
                        slot,
                        from: old,
                        to: v.clone(),
                    });
                }
                set(&mut state.slots, slot, Some(v));
                state.confirmed[slot.index()] = auto;
            }
        }
    }
    state.update_phase();
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserTurn {
    pub tokens: Vec<String>,
    pub frame: CaseFrame,
}

/// Supplies user turns; `None` ends the session.
pub trait UserTurnSource {
    fn next_turn(&mut self, prompt: &SystemTurn, registry: &LMRegistry) -> Result<Option<UserTurn>>;
}

/// Replays a fixed list of frames.
pub struct ScriptedFrames {
    frames: std::vec::IntoIter<CaseFrame>,
}

impl ScriptedFrames {
    pub fn new(frames: Vec<CaseFrame>) -> Self {
        ScriptedFrames {
            frames: frames.into_iter(),
        }
    }
}

impl UserTurnSource for ScriptedFrames {
    fn next_turn(&mut self, _: &SystemTurn, _: &LMRegistry) -> Result<Option<UserTurn>> {
        Ok(self.frames.next().map(|frame| UserTurn {
            tokens: Vec::new(),
            frame,
        }))
    }
}

/// Noisy channel between the user's words and the parser: each line is
/// passed through the simulated recognizer and rescored with the active LM.
pub struct Channel {
    pub table: ConfusionTable,
    pub nbest: usize,
    pub noise: f64,
    pub lambda: f64,
    pub seed: u64,
}

/// Typed (or scripted) text lines, optionally through a noisy channel.
pub struct TextInput<I> {
    lines: I,
    lexicon: SemanticLexicon,
    channel: Option<Channel>,
    turn: u64,
}

impl<I: Iterator<Item = String>> TextInput<I> {
    pub fn new(lines: I, lexicon: SemanticLexicon, channel: Option<Channel>) -> Self {
        TextInput {
            lines,
            lexicon,
            channel,
            turn: 0,
        }
    }
}

impl<I: Iterator<Item = String>> UserTurnSource for TextInput<I> {
    fn next_turn(&mut self, _: &SystemTurn, registry: &LMRegistry) -> Result<Option<UserTurn>> {
        let Some(line) = self.lines.next() else {
            return Ok(None);
        };
        self.turn += 1;
        let mut tokens: Vec<String> = tokenize(&line, self.lexicon.multiword_names())
            .into_iter()
            .map(|t| t.as_str().to_string())
            .collect();
        if let (Some(ch), false) = (&self.channel, tokens.is_empty()) {
            let nb = generate_nbest(&tokens, &ch.table, ch.nbest, ch.noise, ch.seed.wrapping_add(self.turn))?;
            let pair = registry.active_pair();
            tokens = rescore(&nb, pair.bigram.as_ref(), pair.trigram.as_ref(), ch.lambda)
                .tokens
                .clone();
        }
        let frame = self.lexicon.parse(&tokens);
        Ok(Some(UserTurn { tokens, frame }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Speaker {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptLine {
    pub turn: usize,
    pub speaker: Speaker,
    /// System act, or the user's case frame.
    pub content: String,
    pub active: LmClassId,
    pub tokens: Option<String>,
    pub prompt: Option<String>,
}

impl fmt::Display for TranscriptLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let who = match self.speaker {
            Speaker::System => "S",
            Speaker::User => "U",
        };
        write!(f, "T{}\t{who}\t{}\t{}", self.turn, self.content, self.active)?;
        if let Some(t) = &self.tokens {
            write!(f, "\t{t}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Transcript {
    pub lines: Vec<TranscriptLine>,
    pub events: Vec<(usize, Event)>,
}

impl Transcript {
    /// System acts in order.
    pub fn acts(&self) -> Vec<&str> {
        self.lines
            .iter()
            .filter(|l| l.speaker == Speaker::System)
            .map(|l| l.content.as_str())
            .collect()
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

/// Drive one session: choose an act, switch the LM for the user's reply,
/// read and integrate the reply, until an answer is given or the session
/// closes.
pub fn run_session(
    cfg: &PolicyConfig,
    registry: &mut LMRegistry,
    tt: &Timetable,
    source: &mut dyn UserTurnSource,
    mut observe: impl FnMut(&TranscriptLine),
) -> Result<(Transcript, DialogueState)> {
    let mut state = DialogueState::new();
    let mut tr = Transcript::default();
    registry.reset();
    let mut push = |tr: &mut Transcript, mut line: TranscriptLine| {
        line.turn = tr.lines.len();
        observe(&line);
        tr.lines.push(line);
    };

    while state.phase != Phase::Closed {
        if tr.lines.len() >= cfg.max_turns {
            state.phase = Phase::Closed;
            break;
        }
        let turn = next_act(&state, tt, cfg)?;
        match &turn.act {
            SystemAct::Ask(ctx) => {
                state.pending = Some(ctx.clone());
                let active = registry.switch(ctx);
                push(
                    &mut tr,
                    TranscriptLine {
                        turn: 0,
                        speaker: Speaker::System,
                        content: turn.act.to_string(),
                        active,
                        tokens: None,
                        prompt: Some(turn.prompt.clone()),
                    },
                );
                let Some(user) = source.next_turn(&turn, registry)? else {
                    state.phase = Phase::Closed;
                    break;
                };
                let before = state.events.len();
                integrate(&mut state, &user.frame, cfg)?;
                let n = tr.lines.len();
                for e in &state.events[before..] {
                    tr.events.push((n, e.clone()));
                }
                push(
                    &mut tr,
                    TranscriptLine {
                        turn: n,
                        speaker: Speaker::User,
                        content: user.frame.to_string(),
                        active: registry.active(),
                        tokens: (!user.tokens.is_empty()).then(|| user.tokens.join(" ")),
                        prompt: None,
                    },
                );
            }
            SystemAct::Answer { .. } | SystemAct::Apology => {
                let (_, phase) = answer(&state, tt);
                push(
                    &mut tr,
                    TranscriptLine {
                        turn: 0,
                        speaker: Speaker::System,
                        content: turn.act.to_string(),
                        active: registry.active(),
                        tokens: None,
                        prompt: Some(turn.prompt.clone()),
                    },
                );
                if phase == Phase::Answering {
                    // the offer of further details ends the session
                    state.phase = Phase::Closed;
                } else {
                    state.apologies += 1;
                    let relaxable = state.slots.hour.is_some() || state.slots.part_day.is_some();
                    if !relaxable || state.apologies > cfg.max_reprompts {
                        state.phase = Phase::Closed;
                    } else {
                        for s in [Slot::Hour, Slot::PartDay] {
                            set(&mut state.slots, s, None);
                            state.confirmed[s.index()] = false;
                        }
                    }
                }
            }
        }
    }
    Ok((tr, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classlm::{ClassNGramModel, TrainConfig};
    use crate::contextmap::{classify_context, effective_lm, RobustnessPolicy};
    use crate::corpus::{build_vocabulary, Token, Utterance};
    use crate::registry::ModelPair;
    use crate::wordclass::WordClassMap;
    use std::collections::BTreeMap;

    fn frame(s: &str) -> CaseFrame {
        s.parse().unwrap()
    }

    fn registry() -> LMRegistry {
        let mut specific = BTreeMap::new();
        let mut all = Vec::new();
        for c in LmClassId::SPECIFIC {
            let u: Vec<Utterance> = (0..4)
                .map(|i| Utterance {
                    id: i.to_string(),
                    context: c.canonical_context().unwrap(),
                    ref_frame: CaseFrame::default(),
                    tokens: vec![Token::new("milano").unwrap(), Token::new("roma").unwrap()],
                })
                .collect();
            all.extend(u.clone());
            specific.insert(c, u);
        }
        let v = build_vocabulary(&all, 1).unwrap();
        let map = WordClassMap::identity(&v);
        let train = |u: &[Utterance], order| {
            ClassNGramModel::train(
                u,
                &v,
                &map,
                &TrainConfig {
                    order,
                    ..TrainConfig::default()
                },
                "x",
            )
            .unwrap()
        };
        let pair = |u: &[Utterance]| ModelPair::new(train(u, 2), train(u, 3));
        let specific = specific.iter().map(|(c, u)| (*c, pair(u))).collect();
        LMRegistry::from_models(pair(&all), specific, RobustnessPolicy::ALL_PASS).unwrap()
    }

    fn sample_frames() -> Vec<CaseFrame> {
        vec![
            frame("confirm=NO;dep-city=MILANO;arr-city=ROMA;part-day=EVENING"),
            frame("confirm=YES;dep-city=MILANO;arr-city=ROMA;part-day=EVENING"),
            frame("hour=8"),
        ]
    }

    #[test]
    fn opening_act_requests_both_cities() {
        let t = next_act(&DialogueState::new(), &Timetable::builtin(), &PolicyConfig::default()).unwrap();
        assert_eq!(t.act.to_string(), "DA-REQUEST=dep-city,arr-city");
    }

    #[test]
    fn spurious_negation_is_discarded() {
        let cfg = PolicyConfig::default();
        let tt = Timetable::builtin();
        let mut s = DialogueState::new();
        s.pending = Some(DialogueContext::request(&[
            TaskParameter::DepCity,
            TaskParameter::ArrCity,
        ]));
        integrate(&mut s, &sample_frames()[0], &cfg).unwrap();
        assert_eq!(s.events, vec![Event::DiscardedNegation]);
        assert_eq!(s.value(Slot::DepCity), Some(Value::Text("MILANO".into())));
        assert!(!s.is_confirmed(Slot::DepCity));
        assert_eq!(s.phase, Phase::Confirming);
        let t = next_act(&s, &tt, &cfg).unwrap();
        assert_eq!(t.act.to_string(), "DA-VERIFY=dep-city,arr-city,part-day");

        s.pending = Some(DialogueContext::verify(&[
            TaskParameter::DepCity,
            TaskParameter::ArrCity,
            TaskParameter::PartDay,
        ]));
        integrate(&mut s, &sample_frames()[1], &cfg).unwrap();
        assert!(s.is_confirmed(Slot::DepCity) && s.is_confirmed(Slot::ArrCity) && s.is_confirmed(Slot::PartDay));
        assert_eq!(next_act(&s, &tt, &cfg).unwrap().act.to_string(), "DA-REQUEST=dep-time");
    }

    #[test]
    fn correction_of_confirmed_slot() {
        let cfg = PolicyConfig::default();
        let mut s = DialogueState::new();
        s.pending = Some(DialogueContext::request(&[TaskParameter::DepCity]));
        integrate(&mut s, &frame("dep-city=MILANO"), &cfg).unwrap();
        s.pending = Some(DialogueContext::verify(&[TaskParameter::DepCity]));
        integrate(&mut s, &frame("confirm=YES"), &cfg).unwrap();
        assert!(s.is_confirmed(Slot::DepCity));
        s.pending = Some(DialogueContext::request(&[TaskParameter::ArrCity]));
        integrate(&mut s, &frame("dep-city=TORINO"), &cfg).unwrap();
        assert_eq!(s.value(Slot::DepCity), Some(Value::Text("TORINO".into())));
        assert!(!s.is_confirmed(Slot::DepCity));
        assert!(matches!(
            s.events.last(),
            Some(Event::Correction {
                slot: Slot::DepCity,
                ..
            })
        ));
        let t = next_act(&s, &Timetable::builtin(), &cfg).unwrap();
        assert_eq!(t.act.to_string(), "DA-VERIFY=dep-city");
    }

    #[test]
    fn denied_verification_rerequests_the_slot() {
        let cfg = PolicyConfig::default();
        let mut s = DialogueState::new();
        s.pending = Some(DialogueContext::request(&[
            TaskParameter::DepCity,
            TaskParameter::ArrCity,
        ]));
        integrate(&mut s, &frame("dep-city=MILANO;arr-city=ROMA"), &cfg).unwrap();
        s.pending = Some(DialogueContext::verify(&[TaskParameter::ArrCity]));
        integrate(&mut s, &frame("confirm=NO"), &cfg).unwrap();
        assert_eq!(s.value(Slot::ArrCity), None);
        let t = next_act(&s, &Timetable::builtin(), &cfg).unwrap();
        // dep-city is still awaiting confirmation
        assert_eq!(t.act.to_string(), "DA-VERIFY=dep-city");
        s.pending = Some(DialogueContext::verify(&[TaskParameter::DepCity]));
        integrate(&mut s, &frame("confirm=YES"), &cfg).unwrap();
        assert_eq!(
            next_act(&s, &Timetable::builtin(), &cfg).unwrap().act.to_string(),
            "DA-REQUEST=arr-city"
        );
    }

    #[test]
    fn answers_from_the_timetable() {
        let tt = Timetable::builtin();
        let mut s = DialogueState::new();
        s.slots = frame("dep-city=MILANO;arr-city=ROMA;part-day=EVENING;hour=8");
        let (t, phase) = answer(&s, &tt);
        assert_eq!(t.act, SystemAct::Answer { train: "243".into() });
        assert!(t.prompt.contains("20:20") && t.prompt.contains("06:00"), "{}", t.prompt);
        assert_eq!(phase, Phase::Answering);

        let (t, phase) = answer(&s, &Timetable::default());
        assert_eq!(t.act, SystemAct::Apology);
        assert_eq!(phase, Phase::Collecting);

        // a single connection is offered without asking for a time
        let mut s = DialogueState::new();
        s.slots = frame("dep-city=GENOVA;arr-city=PISA");
        s.confirmed = [true, true, false, false, false];
        let t = next_act(&s, &tt, &PolicyConfig::default()).unwrap();
        assert_eq!(t.act, SystemAct::Answer { train: "912".into() });
    }

    #[test]
    fn closed_session_rejects_acts() {
        let mut s = DialogueState::new();
        s.phase = Phase::Closed;
        assert!(next_act(&s, &Timetable::builtin(), &PolicyConfig::default()).is_err());
        assert!(integrate(&mut s, &CaseFrame::default(), &PolicyConfig::default()).is_err());
    }

    #[test]
    fn sample_dialogue_replays_exactly() {
        let mut reg = registry();
        let mut src = ScriptedFrames::new(sample_frames());
        let (tr, state) = run_session(
            &PolicyConfig::default(),
            &mut reg,
            &Timetable::builtin(),
            &mut src,
            |_| {},
        )
        .unwrap();
        assert_eq!(
            tr.acts(),
            [
                "DA-REQUEST=dep-city,arr-city",
                "DA-VERIFY=dep-city,arr-city,part-day",
                "DA-REQUEST=dep-time",
                "ANSWER=243"
            ]
        );
        assert_eq!(tr.events[0], (1, Event::DiscardedNegation));
        assert_eq!(state.phase, Phase::Closed);
        let classes: Vec<LmClassId> = tr
            .lines
            .iter()
            .filter(|l| l.speaker == Speaker::User)
            .map(|l| l.active)
            .collect();
        assert_eq!(
            classes,
            [LmClassId::ReqDepArrCity, LmClassId::VerDepArrCity, LmClassId::ReqTime]
        );
    }

    #[test]
    fn silent_user_is_reprompted_then_dropped() {
        let mut reg = registry();
        let mut src = ScriptedFrames::new(vec![CaseFrame::default(); 10]);
        let (tr, state) = run_session(
            &PolicyConfig::default(),
            &mut reg,
            &Timetable::builtin(),
            &mut src,
            |_| {},
        )
        .unwrap();
        assert_eq!(state.phase, Phase::Closed);
        assert_eq!(tr.acts().len(), 4);
        assert_eq!(tr.events.iter().filter(|(_, e)| *e == Event::Reprompt).count(), 3);
    }

    #[test]
    fn typed_cities_lead_to_verification() {
        let mut reg = registry();
        let mut src = TextInput::new(
            vec!["from milano to roma".to_string()].into_iter(),
            SemanticLexicon::default(),
            None,
        );
        let (tr, _) = run_session(
            &PolicyConfig::default(),
            &mut reg,
            &Timetable::builtin(),
            &mut src,
            |_| {},
        )
        .unwrap();
        assert_eq!(tr.acts()[1], "DA-VERIFY=dep-city,arr-city");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_frame() -> impl Strategy<Value = CaseFrame> {
            let city = prop::option::of(prop::sample::select(vec!["MILANO", "ROMA", "TORINO", "GENOVA", "PISA"]));
            (
                prop::option::of(prop::bool::ANY),
                city.clone(),
                city,
                prop::option::of(prop::sample::select(vec![
                    PartDay::Morning,
                    PartDay::Afternoon,
                    PartDay::Evening,
                ])),
                prop::option::of(0u8..24),
            )
                .prop_map(|(c, d, a, p, h)| CaseFrame {
                    confirm: c.map(|y| if y { Confirm::Yes } else { Confirm::No }),
                    dep_city: d.map(str::to_string),
                    arr_city: a.map(str::to_string),
                    dep_date: None,
                    part_day: p,
                    hour: h,
                })
        }

        proptest! {
            #[test]
            fn sessions_terminate_and_keep_linkage(frames in prop::collection::vec(any_frame(), 0..40)) {
                let cfg = PolicyConfig::default();
                let mut reg = registry();
                let stats = reg.pool().stats();
                let mut src = ScriptedFrames::new(frames);
                let (tr, state) = run_session(&cfg, &mut reg, &Timetable::builtin(), &mut src, |_| {}).unwrap();
                prop_assert!(tr.lines.len() <= cfg.max_turns + 1);
                prop_assert_eq!(state.phase, Phase::Closed);
                for pair in tr.lines.windows(2) {
                    if pair[1].speaker == Speaker::User {
                        let (act, params) = pair[0].content.split_once('=').unwrap();
                        let ctx = DialogueContext::parse_parts(act, params).unwrap();
                        let want = effective_lm(classify_context(&ctx), &stats, &RobustnessPolicy::ALL_PASS).unwrap();
                        prop_assert_eq!(pair[1].active, want);
                    }
                }
            }

            #[test]
            fn confirmed_values_change_only_by_correction(frames in prop::collection::vec(any_frame(), 1..15)) {
                let cfg = PolicyConfig::default();
                let tt = Timetable::builtin();
                let mut s = DialogueState::new();
                for f in frames {
                    if s.phase == Phase::Closed {
                        break;
                    }
                    let act = next_act(&s, &tt, &cfg).unwrap();
                    let SystemAct::Ask(ctx) = act.act else { break };
                    s.pending = Some(ctx);
                    let before: Vec<(Slot, Option<Value>, bool)> =
                        Slot::ALL.iter().map(|&sl| (sl, s.value(sl), s.is_confirmed(sl))).collect();
                    let n = s.events.len();
                    integrate(&mut s, &f, &cfg).unwrap();
                    for (sl, v, c) in before {
                        if c && s.value(sl) != v {
                            let corrected = s.events[n..].iter().any(|e| matches!(e, Event::Correction { slot, .. } if *slot == sl));
                            prop_assert!(corrected, "{} changed silently", sl);
                        }
                        if c && s.events[n..].contains(&Event::DiscardedNegation) {
                            prop_assert!(s.is_confirmed(sl) || s.value(sl) != v);
                        }
                    }
                }
            }
        }
    }
}
