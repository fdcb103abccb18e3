//! Robust partial parsing of recognized word strings into case frames, and
//! the sentence-understanding metric built on exact frame matches.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Confirm {
    Yes,
    No,
}

impl Confirm {
    pub fn as_str(self) -> &'static str {
        match self {
            Confirm::Yes => "YES",
            Confirm::No => "NO",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartDay {
    Morning,
    Afternoon,
    Evening,
}

impl PartDay {
    pub fn as_str(self) -> &'static str {
        match self {
            PartDay::Morning => "MORNING",
            PartDay::Afternoon => "AFTERNOON",
            PartDay::Evening => "EVENING",
        }
    }

    /// Departure window in minutes after midnight, `[start, end)`.
    pub fn window(self) -> (u32, u32) {
        match self {
            PartDay::Morning => (5 * 60, 12 * 60),
            PartDay::Afternoon => (12 * 60, 18 * 60),
            PartDay::Evening => (18 * 60, 24 * 60),
        }
    }
}

/// Task-oriented semantic representation of one user utterance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CaseFrame {
    pub confirm: Option<Confirm>,
    pub dep_city: Option<String>,
    pub arr_city: Option<String>,
    pub dep_date: Option<String>,
    pub part_day: Option<PartDay>,
    pub hour: Option<u8>,
}

impl CaseFrame {
    pub fn is_empty(&self) -> bool {
        *self == CaseFrame::default()
    }

    /// True when the frame carries any task value besides a confirmation.
    pub fn has_values(&self) -> bool {
        self.dep_city.is_some()
            || self.arr_city.is_some()
            || self.dep_date.is_some()
            || self.part_day.is_some()
            || self.hour.is_some()
    }
}

/// Canonical text form: `slot=value;...` in fixed slot order, `-` when empty.
impl fmt::Display for CaseFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = Vec::new();
        if let Some(c) = self.confirm {
            parts.push(format!("confirm={}", c.as_str()));
        }
        if let Some(v) = &self.dep_city {
            parts.push(format!("dep-city={v}"));
        }
        if let Some(v) = &self.arr_city {
            parts.push(format!("arr-city={v}"));
        }
        if let Some(v) = &self.dep_date {
            parts.push(format!("dep-date={v}"));
        }
        if let Some(v) = self.part_day {
            parts.push(format!("part-day={}", v.as_str()));
        }
        if let Some(v) = self.hour {
            parts.push(format!("hour={v}"));
        }
        if parts.is_empty() {
            f.write_str("-")
        } else {
            f.write_str(&parts.join(";"))
        }
    }
}

const HOUR_NAMES: [&str; 13] = [
    "ZERO", "ONE", "TWO", "THREE", "FOUR", "FIVE", "SIX", "SEVEN", "EIGHT", "NINE", "TEN", "ELEVEN", "TWELVE",
];

fn parse_hour_value(v: &str) -> Option<u8> {
    if let Ok(h) = v.parse::<u8>() {
        return (h < 24).then_some(h);
    }
    HOUR_NAMES
        .iter()
        .position(|n| n.eq_ignore_ascii_case(v))
        .map(|h| h as u8)
}

impl FromStr for CaseFrame {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut frame = CaseFrame::default();
        let s = s.trim();
        if s.is_empty() || s == "-" {
            return Ok(frame);
        }
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (slot, value) = part
                .split_once('=')
                .ok_or_else(|| Error::parse(0, format!("frame item `{part}` has no `=`")))?;
            let value = value.trim().to_ascii_uppercase();
            let dup = |taken: bool| {
                if taken {
                    Err(Error::parse(0, format!("slot `{slot}` given twice")))
                } else {
                    Ok(())
                }
            };
            match slot.trim() {
                "confirm" => {
                    dup(frame.confirm.is_some())?;
                    frame.confirm = Some(match value.as_str() {
                        "YES" => Confirm::Yes,
                        "NO" => Confirm::No,
                        _ => return Err(Error::parse(0, format!("bad confirm value `{value}`"))),
                    });
                }
                "dep-city" => {
                    dup(frame.dep_city.is_some())?;
                    frame.dep_city = Some(value);
                }
                "arr-city" => {
                    dup(frame.arr_city.is_some())?;
                    frame.arr_city = Some(value);
                }
                "dep-date" => {
                    dup(frame.dep_date.is_some())?;
                    frame.dep_date = Some(value);
                }
                "part-day" => {
                    dup(frame.part_day.is_some())?;
                    frame.part_day = Some(match value.as_str() {
                        "MORNING" => PartDay::Morning,
                        "AFTERNOON" => PartDay::Afternoon,
                        "EVENING" => PartDay::Evening,
                        _ => return Err(Error::parse(0, format!("bad part-day value `{value}`"))),
                    });
                }
                "hour" => {
                    dup(frame.hour.is_some())?;
                    frame.hour = Some(
                        parse_hour_value(&value).ok_or_else(|| Error::parse(0, format!("bad hour value `{value}`")))?,
                    );
                }
                other => return Err(Error::parse(0, format!("unknown slot `{other}`"))),
            }
        }
        Ok(frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    From,
    To,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Entry {
    Station(String),
    Hour(u8),
    PartDay(PartDay),
    Date(String),
    Confirm(Confirm),
    Marker(Marker),
}

/// Word categories the parser spots. Station names are the dominant
/// category, so a surface listed both as a station and as anything else
/// resolves to the station.
#[derive(Debug, Clone)]
pub struct SemanticLexicon {
    entries: HashMap<String, Entry>,
    stations: Vec<String>,
    hours: Vec<(String, u8)>,
    part_days: Vec<(String, PartDay)>,
    dates: Vec<String>,
    multiword: Vec<String>,
}

const STATIONS: &[&str] = &[
    "milano",
    "roma",
    "torino",
    "napoli",
    "venezia",
    "firenze",
    "bologna",
    "genova",
    "bari",
    "lecce",
    "alessandria",
    "verona",
    "padova",
    "trieste",
    "palermo",
    "catania",
    "pisa",
    "ancona",
    "perugia",
    "trento",
    "bolzano",
    "parma",
    "modena",
    "brescia",
    "bergamo",
    "livorno",
    "salerno",
    "udine",
    "como",
    "rimini",
    "reggio calabria",
    "la spezia",
    "ascoli piceno",
];

const HOURS: &[(&str, u8)] = &[
    ("one", 1),
    ("two", 2),
    ("three", 3),
    ("four", 4),
    ("five", 5),
    ("six", 6),
    ("seven", 7),
    ("eight", 8),
    ("nine", 9),
    ("ten", 10),
    ("eleven", 11),
    ("twelve", 12),
];

const PART_DAYS: &[(&str, PartDay)] = &[
    ("morning", PartDay::Morning),
    ("afternoon", PartDay::Afternoon),
    ("evening", PartDay::Evening),
];

const DATES: &[&str] = &[
    "monday",
    "tuesday",
    "wednesday",
    "thursday",
    "friday",
    "saturday",
    "sunday",
    "today",
    "tomorrow",
];

// Italian surfaces seen in recognizer output; understood but never generated.
const EXTRA_HOURS: &[(&str, u8)] = &[("sette", 7), ("otto", 8), ("nove", 9), ("dieci", 10)];
const EXTRA_PART_DAYS: &[(&str, PartDay)] = &[
    ("mattina", PartDay::Morning),
    ("pomeriggio", PartDay::Afternoon),
    ("sera", PartDay::Evening),
];
const EXTRA_DATES: &[(&str, &str)] = &[("oggi", "TODAY"), ("domani", "TOMORROW")];
const YES_WORDS: &[&str] = &["yes", "okay", "right", "correct", "sure", "si"];
const NO_WORDS: &[&str] = &["no", "wrong"];
const FROM_WORDS: &[&str] = &["from", "da"];
const TO_WORDS: &[&str] = &["to", "a", "for"];

impl Default for SemanticLexicon {
    fn default() -> Self {
        let mut lex = SemanticLexicon {
            entries: HashMap::new(),
            stations: Vec::new(),
            hours: Vec::new(),
            part_days: Vec::new(),
            dates: Vec::new(),
            multiword: Vec::new(),
        };
        // Insertion order matters: earlier categories win on a clash.
        for &name in STATIONS {
            lex.add_station(name);
        }
        for &(w, h) in HOURS {
            lex.insert(w, Entry::Hour(h));
            lex.hours.push((w.to_string(), h));
        }
        for &(w, h) in EXTRA_HOURS {
            lex.insert(w, Entry::Hour(h));
        }
        for &(w, p) in PART_DAYS {
            lex.insert(w, Entry::PartDay(p));
            lex.part_days.push((w.to_string(), p));
        }
        for &(w, p) in EXTRA_PART_DAYS {
            lex.insert(w, Entry::PartDay(p));
        }
        for &w in DATES {
            lex.insert(w, Entry::Date(w.to_ascii_uppercase()));
            lex.dates.push(w.to_string());
        }
        for &(w, v) in EXTRA_DATES {
            lex.insert(w, Entry::Date(v.to_string()));
        }
        for &w in YES_WORDS {
            lex.insert(w, Entry::Confirm(Confirm::Yes));
        }
        for &w in NO_WORDS {
            lex.insert(w, Entry::Confirm(Confirm::No));
        }
        for &w in FROM_WORDS {
            lex.insert(w, Entry::Marker(Marker::From));
        }
        for &w in TO_WORDS {
            lex.insert(w, Entry::Marker(Marker::To));
        }
        lex
    }
}

impl SemanticLexicon {
    fn insert(&mut self, surface: &str, entry: Entry) {
        self.entries.entry(surface.to_string()).or_insert(entry);
    }

    /// Add a station. Multiword names are stored in their underscore-joined
    /// token form and remembered for tokenization.
    pub fn add_station(&mut self, name: &str) {
        let name = name.trim().to_lowercase();
        let token = name.split_whitespace().collect::<Vec<_>>().join("_");
        if token.is_empty() || self.stations.contains(&token) {
            return;
        }
        if name.contains(char::is_whitespace) {
            self.multiword
                .push(name.split_whitespace().collect::<Vec<_>>().join(" "));
        }
        // a station name overrides any other category
        self.entries
            .insert(token.clone(), Entry::Station(token.to_ascii_uppercase()));
        self.stations.push(token);
    }

    /// Station tokens (underscore-joined).
    pub fn stations(&self) -> &[String] {
        &self.stations
    }

    pub fn hour_words(&self) -> &[(String, u8)] {
        &self.hours
    }

    pub fn part_day_words(&self) -> &[(String, PartDay)] {
        &self.part_days
    }

    pub fn date_words(&self) -> &[String] {
        &self.dates
    }

    /// Multiword station names in their spoken (space-separated) form.
    pub fn multiword_names(&self) -> &[String] {
        &self.multiword
    }

    pub fn is_station_value(&self, value: &str) -> bool {
        self.stations.iter().any(|s| s.eq_ignore_ascii_case(value))
    }

    pub fn is_date_value(&self, value: &str) -> bool {
        self.entries.values().any(|e| matches!(e, Entry::Date(d) if d == value))
    }

    pub fn confirm_of(&self, token: &str) -> Option<Confirm> {
        match self.entries.get(token) {
            Some(Entry::Confirm(c)) => Some(*c),
            _ => None,
        }
    }

    /// Parse a token sequence into a case frame.
    ///
    /// Never fails: unknown tokens are skipped. Steps: spot the first
    /// confirmation word, spot slot values by category, then give cities
    /// their roles from a preceding from/to marker, falling back to order
    /// (first free city is the departure).
    pub fn parse<T: AsRef<str>>(&self, tokens: &[T]) -> CaseFrame {
        let mut frame = CaseFrame::default();
        let mut cities: Vec<(Option<Marker>, &str)> = Vec::new();

        for (i, tok) in tokens.iter().enumerate() {
            let Some(entry) = self.entries.get(tok.as_ref()) else {
                continue;
            };
            match entry {
                Entry::Confirm(c) => {
                    frame.confirm.get_or_insert(*c);
                }
                Entry::Station(v) => {
                    // markup such as `<noise>` does not separate a marker from its city
                    let marker = tokens[..i]
                        .iter()
                        .rev()
                        .find(|t| !t.as_ref().starts_with('<'))
                        .and_then(|t| match self.entries.get(t.as_ref()) {
                            Some(Entry::Marker(m)) => Some(*m),
                            _ => None,
                        });
                    cities.push((marker, v.as_str()));
                }
                Entry::Hour(h) => {
                    frame.hour.get_or_insert(*h);
                }
                Entry::PartDay(p) => {
                    frame.part_day.get_or_insert(*p);
                }
                Entry::Date(d) => {
                    if frame.dep_date.is_none() {
                        frame.dep_date = Some(d.clone());
                    }
                }
                Entry::Marker(_) => {}
            }
        }

        for &(marker, city) in &cities {
            let (slot, other) = match marker {
                Some(Marker::From) => (&mut frame.dep_city, &frame.arr_city),
                Some(Marker::To) => (&mut frame.arr_city, &frame.dep_city),
                None => continue,
            };
            if slot.is_none() && other.as_deref() != Some(city) {
                *slot = Some(city.to_string());
            }
        }
        for &(marker, city) in &cities {
            if marker.is_some() {
                continue;
            }
            let taken = |s: &Option<String>| s.as_deref() == Some(city);
            if taken(&frame.dep_city) || taken(&frame.arr_city) {
                continue;
            }
            if frame.dep_city.is_none() {
                frame.dep_city = Some(city.to_string());
            } else if frame.arr_city.is_none() {
                frame.arr_city = Some(city.to_string());
            }
        }
        frame
    }
}

/// Sentence-understanding match: every slot identical, absence included.
pub fn su_match(hyp: &CaseFrame, reference: &CaseFrame) -> bool {
    hyp == reference
}

/// Fraction of exactly matching (hypothesis, reference) frame pairs.
pub fn su_rate<'a, I>(pairs: I) -> Result<f64>
where
    I: IntoIterator<Item = (&'a CaseFrame, &'a CaseFrame)>,
{
    let mut total = 0usize;
    let mut hits = 0usize;
    for (h, r) in pairs {
        total += 1;
        hits += usize::from(su_match(h, r));
    }
    if total == 0 {
        return Err(Error::invalid("pairs", "no frame pairs to score"));
    }
    Ok(hits as f64 / total as f64)
}
