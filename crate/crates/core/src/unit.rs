//! Translation units and flat-file ingestion.
//!
//! Two interchange formats are supported:
//!
//! * **TSV**: UTF-8, LF line endings, one unit per line as
//!   `source<TAB>target`. Tabs, newlines and backslashes inside a segment are
//!   written as `\t`, `\n` and `\\`. Ids are assigned `0..n` in file order and
//!   the language pair comes from the caller.
//! * **JSONL**: one object per line with keys `id`, `source`, `target`,
//!   `source_lang`, `target_lang`. Ids must be strictly increasing.
//!
//! Blank lines are skipped in both formats. Leading and trailing whitespace of
//! every segment is stripped; internal whitespace is kept verbatim.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguagePair {
    pub source: String,
    pub target: String,
}

impl LanguagePair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
        }
    }
}

impl Default for LanguagePair {
    fn default() -> Self {
        Self::new("en", "es")
    }
}

/// One source/target segment pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationUnit {
    pub id: u64,
    pub source_text: String,
    pub target_text: String,
    pub source_lang: String,
    pub target_lang: String,
}

impl TranslationUnit {
    /// Builds a unit, trimming both segments. An empty target is allowed; an
    /// empty source is not.
    pub fn new(
        id: u64,
        source: &str,
        target: &str,
        langs: &LanguagePair,
    ) -> Result<Self> {
        let source_text = source.trim();
        if source_text.is_empty() {
            return Err(Error::Argument(format!("unit {id}: empty source segment")));
        }
        Ok(Self {
            id,
            source_text: source_text.to_string(),
            target_text: target.trim().to_string(),
            source_lang: langs.source.clone(),
            target_lang: langs.target.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitFormat {
    Tsv,
    Jsonl,
}

impl UnitFormat {
    /// Guesses the format from a file extension; anything but `.jsonl` /
    /// `.json` is treated as TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => UnitFormat::Jsonl,
            _ => UnitFormat::Tsv,
        }
    }
}

impl FromStr for UnitFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(UnitFormat::Tsv),
            "jsonl" => Ok(UnitFormat::Jsonl),
            other => Err(Error::Argument(format!("unknown unit format `{other}`"))),
        }
    }
}

impl fmt::Display for UnitFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitFormat::Tsv => "tsv",
            UnitFormat::Jsonl => "jsonl",
        })
    }
}

#[derive(Serialize, Deserialize)]
struct JsonUnit {
    id: u64,
    source: String,
    target: String,
    source_lang: String,
    target_lang: String,
}

/// Loads units with the default `en`→`es` language pair for TSV input.
pub fn load_units(path: &Path, format: UnitFormat) -> Result<Vec<TranslationUnit>> {
    load_units_with(path, format, &LanguagePair::default())
}

/// Loads units; `langs` is applied to TSV input (JSONL carries its own).
pub fn load_units_with(
    path: &Path,
    format: UnitFormat,
    langs: &LanguagePair,
) -> Result<Vec<TranslationUnit>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        UnitFormat::Tsv => parse_tsv(&text, langs),
        UnitFormat::Jsonl => parse_jsonl(&text),
    }
}

pub fn parse_tsv(text: &str, langs: &LanguagePair) -> Result<Vec<TranslationUnit>> {
    let mut units = Vec::new();
    for (idx, line) in text.split('\n').enumerate() {
        let lineno = idx + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                lineno,
                format!("expected 2 fields, got {}", fields.len()),
            ));
        }
        let source = unescape(fields[0].trim());
        let target = unescape(fields[1].trim());
        let unit = TranslationUnit::new(units.len() as u64, &source, &target, langs)
            .map_err(|_| Error::parse(lineno, "empty source segment"))?;
        units.push(unit);
    }
    Ok(units)
}

pub fn parse_jsonl(text: &str) -> Result<Vec<TranslationUnit>> {
    let mut units: Vec<TranslationUnit> = Vec::new();
    for (idx, line) in text.split('\n').enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonUnit =
            serde_json::from_str(line).map_err(|e| Error::parse(lineno, e.to_string()))?;
        if let Some(prev) = units.last() {
            if rec.id <= prev.id {
                return Err(Error::parse(
                    lineno,
                    format!("id {} does not follow id {}", rec.id, prev.id),
                ));
            }
        }
        let langs = LanguagePair::new(rec.source_lang, rec.target_lang);
        let unit = TranslationUnit::new(rec.id, &rec.source, &rec.target, &langs)
            .map_err(|_| Error::parse(lineno, "empty source segment"))?;
        units.push(unit);
    }
    Ok(units)
}

/// Writes `units` and returns how many were written.
pub fn write_units(units: &[TranslationUnit], path: &Path, format: UnitFormat) -> Result<usize> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    for unit in units {
        match format {
            UnitFormat::Tsv => {
                writeln!(
                    out,
                    "{}\t{}",
                    escape(&unit.source_text),
                    escape(&unit.target_text)
                )
                .map_err(io_err)?;
            }
            UnitFormat::Jsonl => {
                let rec = JsonUnit {
                    id: unit.id,
                    source: unit.source_text.clone(),
                    target: unit.target_text.clone(),
                    source_lang: unit.source_lang.clone(),
                    target_lang: unit.target_lang.clone(),
                };
                let line = serde_json::to_string(&rec).expect("unit serializes");
                writeln!(out, "{line}").map_err(io_err)?;
            }
        }
    }
    out.flush().map_err(io_err)?;
    Ok(units.len())
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

/// Inverse of [`escape`]. Unknown escape sequences are kept literally.
pub fn unescape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tsv(text: &str) -> Result<Vec<TranslationUnit>> {
        parse_tsv(text, &LanguagePair::default())
    }

    #[test]
    fn tsv_line_maps_to_unit() {
        let units = tsv("hello world\thola mundo\n").unwrap();
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].id, 0);
        assert_eq!(units[0].source_text, "hello world");
        assert_eq!(units[0].target_text, "hola mundo");
        assert_eq!(units[0].source_lang, "en");
        assert_eq!(units[0].target_lang, "es");
    }

    #[test]
    fn empty_input_is_empty_list() {
        assert!(tsv("").unwrap().is_empty());
        assert!(parse_jsonl("").unwrap().is_empty());
    }

    #[test]
    fn wrong_column_count_names_line() {
        let err = tsv("only one column").unwrap_err();
        assert_eq!(err.to_string(), "line 1: expected 2 fields, got 1");
        let err = tsv("a\tb\n\nc\td\te\n").unwrap_err();
        assert_eq!(err.to_string(), "line 3: expected 2 fields, got 3");
    }

    #[test]
    fn trims_edges_and_keeps_inner_whitespace() {
        let units = tsv("  a  b \t  c\n").unwrap();
        assert_eq!(units[0].source_text, "a  b");
        assert_eq!(units[0].target_text, "c");
    }

    #[test]
    fn empty_target_allowed_empty_source_rejected() {
        let units = tsv("source\t\n").unwrap();
        assert_eq!(units[0].target_text, "");
        let err = tsv("ok\tfine\n   \tx\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn blank_lines_do_not_consume_ids() {
        let units = tsv("a\tb\n\n\nc\td\n").unwrap();
        assert_eq!(units.iter().map(|u| u.id).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn jsonl_requires_increasing_ids() {
        let text = r#"{"id":3,"source":"a","target":"b","source_lang":"en","target_lang":"es"}
{"id":3,"source":"c","target":"d","source_lang":"en","target_lang":"es"}"#;
        assert!(matches!(parse_jsonl(text), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_units(Path::new("/nonexistent/units.tsv"), UnitFormat::Tsv).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn write_counts_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.tsv");
        let langs = LanguagePair::default();
        let units: Vec<_> = (0..3)
            .map(|i| TranslationUnit::new(i, &format!("s{i}"), &format!("t{i}"), &langs).unwrap())
            .collect();
        assert_eq!(write_units(&units, &path, UnitFormat::Tsv).unwrap(), 3);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);

        let empty = dir.path().join("e.tsv");
        assert_eq!(write_units(&[], &empty, UnitFormat::Tsv).unwrap(), 0);
        assert_eq!(std::fs::read_to_string(&empty).unwrap(), "");
    }

    #[test]
    fn embedded_tab_survives_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.tsv");
        let langs = LanguagePair::default();
        let units = vec![TranslationUnit::new(0, "a\tb\\n", "x\ny", &langs).unwrap()];
        write_units(&units, &path, UnitFormat::Tsv).unwrap();
        let raw = std::fs::read_to_string(&path).unwrap();
        assert_eq!(raw, "a\\tb\\\\n\tx\\ny\n");
        assert_eq!(load_units(&path, UnitFormat::Tsv).unwrap(), units);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = write_units(&[], Path::new("/nonexistent/dir/x.tsv"), UnitFormat::Tsv);
        assert!(matches!(err, Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn round_trip_identity(
            pairs in proptest::collection::vec(("\\PC*[a-z]\\PC*|[\\t\\n\\\\a-z ]{1,8}x", any::<String>()), 0..12),
            jsonl in any::<bool>(),
        ) {
            let langs = LanguagePair::new("en", "es");
            let units: Vec<TranslationUnit> = pairs
                .iter()
                .enumerate()
                .map(|(i, (s, t))| TranslationUnit::new(i as u64, s, t, &langs).unwrap())
                .collect();
            let format = if jsonl { UnitFormat::Jsonl } else { UnitFormat::Tsv };
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("units");
            prop_assert_eq!(write_units(&units, &path, format).unwrap(), units.len());
            prop_assert_eq!(load_units_with(&path, format, &langs).unwrap(), units);
        }
    }
}
