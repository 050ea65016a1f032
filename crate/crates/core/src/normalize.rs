//! Placeholder normalization: dates, named entities and numbers are replaced
//! by their kind name (`DATE`, `PER`, `LOC`, `ORG`, `NUM`) before two
//! segments are compared.
//!
//! Producers run in priority order (dates, then entities, then numbers).
//! Every producer after the first sees the text with already claimed bytes
//! masked out, and any span that still overlaps a claimed one is dropped, so
//! the digits of a date are never additionally tagged as a number.
//!
//! Date patterns (Spanish):
//!
//! * `D de <mes> de YYYY`, e.g. `5 de marzo de 2018`
//! * `D/M/YYYY` and `D-M-YYYY` (one or two digit day and month)
//! * `YYYY-MM-DD`
//!
//! Numbers are maximal runs of ASCII digits, optionally joined by single
//! `.` or `,` separators (`1.234,56`).

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPANISH_MONTHS: [&str; 12] = [
    "enero",
    "febrero",
    "marzo",
    "abril",
    "mayo",
    "junio",
    "julio",
    "agosto",
    "septiembre",
    "octubre",
    "noviembre",
    "diciembre",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlaceholderKind {
    Num,
    Date,
    Per,
    Loc,
    Org,
}

impl PlaceholderKind {
    pub fn token(self) -> &'static str {
        match self {
            PlaceholderKind::Num => "NUM",
            PlaceholderKind::Date => "DATE",
            PlaceholderKind::Per => "PER",
            PlaceholderKind::Loc => "LOC",
            PlaceholderKind::Org => "ORG",
        }
    }

    pub fn is_entity(self) -> bool {
        matches!(
            self,
            PlaceholderKind::Per | PlaceholderKind::Loc | PlaceholderKind::Org
        )
    }
}

impl fmt::Display for PlaceholderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for PlaceholderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "NUM" => Ok(PlaceholderKind::Num),
            "DATE" => Ok(PlaceholderKind::Date),
            "PER" => Ok(PlaceholderKind::Per),
            "LOC" => Ok(PlaceholderKind::Loc),
            "ORG" => Ok(PlaceholderKind::Org),
            other => Err(Error::Argument(format!("unknown placeholder kind `{other}`"))),
        }
    }
}

/// Byte range `[start, end)` of the original text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaceholderSpan {
    pub start: usize,
    pub end: usize,
    pub kind: PlaceholderKind,
}

/// Anything that proposes spans to replace.
pub trait SpanProducer: Send + Sync {
    fn name(&self) -> &str;

    /// Non-overlapping spans on char boundaries of `text`.
    fn spans(&self, text: &str) -> Vec<PlaceholderSpan>;
}

/// A named-entity tagger. Must only emit `PER`, `LOC` or `ORG` spans.
pub trait EntityTagger: SpanProducer {
    fn supported_kinds(&self) -> &[PlaceholderKind] {
        &[PlaceholderKind::Per, PlaceholderKind::Loc, PlaceholderKind::Org]
    }
}

fn date_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let months = SPANISH_MONTHS.join("|");
        Regex::new(&format!(
            r"\b(?:[0-9]{{1,2}} de (?:{months}) de [0-9]{{4}}|[0-9]{{4}}-[0-9]{{2}}-[0-9]{{2}}|[0-9]{{1,2}}/[0-9]{{1,2}}/[0-9]{{4}}|[0-9]{{1,2}}-[0-9]{{1,2}}-[0-9]{{4}})\b"
        ))
        .expect("date pattern compiles")
    })
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[0-9]+(?:[.,][0-9]+)*").expect("number pattern compiles"))
}

fn regex_spans(re: &Regex, text: &str, kind: PlaceholderKind) -> Vec<PlaceholderSpan> {
    re.find_iter(text)
        .map(|m| PlaceholderSpan {
            start: m.start(),
            end: m.end(),
            kind,
        })
        .collect()
}

pub fn detect_dates(text: &str) -> Vec<PlaceholderSpan> {
    regex_spans(date_regex(), text, PlaceholderKind::Date)
}

pub fn detect_numbers(text: &str) -> Vec<PlaceholderSpan> {
    regex_spans(number_regex(), text, PlaceholderKind::Num)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DateDetector;

impl SpanProducer for DateDetector {
    fn name(&self) -> &str {
        "dates"
    }

    fn spans(&self, text: &str) -> Vec<PlaceholderSpan> {
        detect_dates(text)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NumberDetector;

impl SpanProducer for NumberDetector {
    fn name(&self) -> &str {
        "numbers"
    }

    fn spans(&self, text: &str) -> Vec<PlaceholderSpan> {
        detect_numbers(text)
    }
}

/// Surface-form entity list. Matching is case-sensitive, prefers the longest
/// entry at each position, and requires the match not to sit inside a word.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    /// Entries sorted by descending byte length.
    entries: Vec<(String, PlaceholderKind)>,
}

impl Gazetteer {
    pub fn new<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, PlaceholderKind)>,
        S: Into<String>,
    {
        let mut map: HashMap<String, PlaceholderKind> = HashMap::new();
        for (surface, kind) in entries {
            let surface: String = surface.into();
            if !kind.is_entity() {
                return Err(Error::Argument(format!(
                    "gazetteer entry `{surface}` has non-entity kind {kind}"
                )));
            }
            if surface.trim().is_empty() {
                return Err(Error::Argument("empty gazetteer surface form".into()));
            }
            map.insert(surface, kind);
        }
        let mut entries: Vec<_> = map.into_iter().collect();
        entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(Self { entries })
    }

    /// Reads `surface<TAB>kind` lines. Blank lines and `#` comments are
    /// ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (surface, kind) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(idx + 1, "expected surface<TAB>kind"))?;
            let kind: PlaceholderKind = kind
                .trim()
                .parse()
                .map_err(|e: Error| Error::parse(idx + 1, e.to_string()))?;
            if !kind.is_entity() {
                return Err(Error::parse(idx + 1, format!("{kind} is not an entity kind")));
            }
            entries.push((surface.trim().to_string(), kind));
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

impl SpanProducer for Gazetteer {
    fn name(&self) -> &str {
        "gazetteer"
    }

    fn spans(&self, text: &str) -> Vec<PlaceholderSpan> {
        let mut spans = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            let rest = &text[pos..];
            let before_ok = text[..pos].chars().next_back().map_or(true, |c| !is_word_char(c));
            let hit = before_ok
                .then(|| {
                    self.entries.iter().find(|(surface, _)| {
                        rest.starts_with(surface.as_str())
                            && rest[surface.len()..]
                                .chars()
                                .next()
                                .map_or(true, |c| !is_word_char(c))
                    })
                })
                .flatten();
            match hit {
                Some((surface, kind)) => {
                    spans.push(PlaceholderSpan {
                        start: pos,
                        end: pos + surface.len(),
                        kind: *kind,
                    });
                    pos += surface.len();
                }
                None => {
                    pos += rest.chars().next().map_or(1, char::len_utf8);
                }
            }
        }
        spans
    }
}

impl EntityTagger for Gazetteer {}

fn check_contract(producer: &dyn SpanProducer, text: &str, spans: &[PlaceholderSpan]) -> Result<()> {
    let fail = |message: String| Error::ProducerContract {
        producer: producer.name().to_string(),
        message,
    };
    let mut sorted = spans.to_vec();
    sorted.sort_by_key(|s| (s.start, s.end));
    for s in &sorted {
        if s.start >= s.end || s.end > text.len() {
            return Err(fail(format!("span {}..{} out of range", s.start, s.end)));
        }
        if !text.is_char_boundary(s.start) || !text.is_char_boundary(s.end) {
            return Err(fail(format!("span {}..{} splits a character", s.start, s.end)));
        }
    }
    for w in sorted.windows(2) {
        if w[1].start < w[0].end {
            return Err(fail(format!(
                "spans {}..{} and {}..{} overlap",
                w[0].start, w[0].end, w[1].start, w[1].end
            )));
        }
    }
    Ok(())
}

/// Resolves spans from `producers` (highest priority first) against `text`.
pub fn resolve_spans(text: &str, producers: &[&dyn SpanProducer]) -> Result<Vec<PlaceholderSpan>> {
    let mut claimed: Vec<PlaceholderSpan> = Vec::new();
    let mut masked = text.to_string();
    for producer in producers {
        let spans = producer.spans(&masked);
        check_contract(*producer, &masked, &spans)?;
        let fresh: Vec<PlaceholderSpan> = spans
            .into_iter()
            .filter(|s| claimed.iter().all(|c| s.end <= c.start || s.start >= c.end))
            .collect();
        if !fresh.is_empty() {
            // NUL keeps byte offsets and never matches a pattern
            let mut bytes = masked.into_bytes();
            for s in &fresh {
                bytes[s.start..s.end].fill(0);
            }
            masked = String::from_utf8(bytes).expect("masking whole chars keeps UTF-8");
            claimed.extend(fresh);
        }
    }
    claimed.sort_by_key(|s| s.start);
    Ok(claimed)
}

/// Replaces every resolved span by its kind token.
pub fn apply_placeholders(text: &str, producers: &[&dyn SpanProducer]) -> Result<String> {
    let spans = resolve_spans(text, producers)?;
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for s in spans {
        out.push_str(&text[pos..s.start]);
        out.push_str(s.kind.token());
        pos = s.end;
    }
    out.push_str(&text[pos..]);
    Ok(out)
}

/// The standard pipeline: dates, then an optional entity tagger, then
/// numbers.
pub struct Normalizer {
    entities: Option<Box<dyn EntityTagger>>,
}

impl Normalizer {
    pub fn new(entities: Option<Box<dyn EntityTagger>>) -> Self {
        Self { entities }
    }

    pub fn with_gazetteer(gazetteer: Gazetteer) -> Self {
        Self::new(Some(Box::new(gazetteer)))
    }

    pub fn normalize(&self, text: &str) -> Result<String> {
        let dates = DateDetector;
        let numbers = NumberDetector;
        let mut producers: Vec<&dyn SpanProducer> = vec![&dates];
        if let Some(tagger) = &self.entities {
            producers.push(tagger.as_ref());
        }
        producers.push(&numbers);
        apply_placeholders(text, &producers)
    }
}

impl Default for Normalizer {
    fn default() -> Self {
        Self::new(None)
    }
}

impl fmt::Debug for Normalizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Normalizer")
            .field("entities", &self.entities.as_ref().map(|t| t.name().to_string()))
            .finish()
    }
}
