//! Tweet data model, streaming JSONL ingestion and corpus filtering.
//!
//! Input lines are JSON objects. Recognised fields:
//!
//! | field                 | notes                                                        |
//! |-----------------------|--------------------------------------------------------------|
//! | `id` / `id_str`       | string or integer                                            |
//! | `created_at`          | RFC 3339, or the legacy `Wed Oct 10 20:19:24 +0000 2018` form |
//! | `text` / `full_text`  |                                                              |
//! | `lang`                |                                                              |
//! | `is_repost`           | defaults to `true` when `retweeted_status` is present        |
//! | `user.id` / `user.id_str`, `user.location`, `user.description`, `user.following` |   |
//! | `place.full_name`, `place.country_code` |                                            |
//!
//! Unknown fields are ignored. Timestamps are normalised to UTC.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("invalid study window: start {start} is after end {end}")]
    InvalidWindow { start: NaiveDate, end: NaiveDate },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoPlace {
    pub full_name: String,
    pub country_code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub following: Option<Vec<String>>,
}

/// One original post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub id: String,
    #[serde(with = "rfc3339_secs")]
    pub created_at: DateTime<Utc>,
    pub text: String,
    pub lang: String,
    pub is_repost: bool,
    #[serde(rename = "user")]
    pub author: UserProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place: Option<GeoPlace>,
}

mod rfc3339_secs {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ts.to_rfc3339_opts(SecondsFormat::Secs, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let raw = String::deserialize(d)?;
        super::parse_timestamp(&raw).ok_or_else(|| serde::de::Error::custom("bad timestamp"))
    }
}

/// Parses RFC 3339 or the legacy Twitter v1.1 timestamp layout, truncating to whole seconds.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let parsed = DateTime::parse_from_rfc3339(raw.trim())
        .or_else(|_| DateTime::parse_from_str(raw.trim(), "%a %b %d %H:%M:%S %z %Y"))
        .ok()?;
    let secs = parsed.timestamp();
    DateTime::<Utc>::from_timestamp(secs, 0)
}

/// Why a line or record did not make it into the filtered corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    NonEnglish,
    Repost,
    Duplicate,
    Malformed,
    OutOfWindow,
}

impl RejectReason {
    pub const ALL: [RejectReason; 5] = [
        RejectReason::NonEnglish,
        RejectReason::Repost,
        RejectReason::Duplicate,
        RejectReason::Malformed,
        RejectReason::OutOfWindow,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::NonEnglish => "non_english",
            RejectReason::Repost => "repost",
            RejectReason::Duplicate => "duplicate",
            RejectReason::Malformed => "malformed",
            RejectReason::OutOfWindow => "out_of_window",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RejectionCounts(BTreeMap<RejectReason, u64>);

impl RejectionCounts {
    pub fn get(&self, reason: RejectReason) -> u64 {
        self.0.get(&reason).copied().unwrap_or(0)
    }

    pub fn add(&mut self, reason: RejectReason, n: u64) {
        *self.0.entry(reason).or_insert(0) += n;
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    /// Every reason, in a fixed order, including zero counts.
    pub fn iter(&self) -> impl Iterator<Item = (RejectReason, u64)> + '_ {
        RejectReason::ALL.iter().map(move |r| (*r, self.get(*r)))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["reason", "count"])?;
        for (reason, count) in self.iter() {
            out.write_record([reason.as_str(), &count.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Inclusive range of calendar dates (UTC).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl StudyWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self, CorpusError> {
        if start > end {
            return Err(CorpusError::InvalidWindow { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, ts: &DateTime<Utc>) -> bool {
        let d = ts.date_naive();
        d >= self.start && d <= self.end
    }
}

impl Default for StudyWindow {
    fn default() -> Self {
        Self {
            start: crate::timeline::STUDY_START,
            end: crate::timeline::STUDY_END,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub records: Vec<TweetRecord>,
    pub malformed: u64,
    /// Non-blank lines seen.
    pub lines: u64,
}

#[derive(Debug, Clone, Default)]
pub struct FilteredCorpus {
    pub records: Vec<TweetRecord>,
    pub rejection_counts: RejectionCounts,
}

impl FilteredCorpus {
    pub fn write_jsonl<W: Write>(&self, w: W) -> io::Result<()> {
        write_jsonl(&self.records, w)
    }
}

pub fn write_jsonl<W: Write, T: Serialize>(items: &[T], mut w: W) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Parses line-delimited JSON. Blank lines are skipped and not counted;
/// lines that fail to parse or validate are counted as malformed.
pub fn parse_records<R: BufRead>(reader: R) -> io::Result<ParseOutcome> {
    let mut out = ParseOutcome::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.lines += 1;
        match parse_line(&line) {
            Ok(rec) => out.records.push(rec),
            Err(why) => {
                log::warn!("line {}: malformed record ({why})", lineno + 1);
                out.malformed += 1;
            }
        }
    }
    Ok(out)
}

/// Opens `.jsonl` or `.jsonl.gz` and parses it.
pub fn read_records(path: &Path) -> Result<ParseOutcome, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let gz = path.extension().is_some_and(|e| e == "gz");
    let reader: Box<dyn BufRead> = if gz {
        Box::new(BufReader::new(flate2::read::MultiGzDecoder::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    parse_records(reader).map_err(io_err)
}

fn id_string(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn opt_str(v: Option<&Value>) -> Option<String> {
    v.and_then(Value::as_str).map(str::to_owned)
}

fn parse_line(line: &str) -> Result<TweetRecord, &'static str> {
    let v: Value = serde_json::from_str(line).map_err(|_| "invalid json")?;
    let obj = v.as_object().ok_or("not an object")?;

    let id = id_string(obj.get("id_str"))
        .or_else(|| id_string(obj.get("id")))
        .filter(|s| !s.is_empty())
        .ok_or("missing id")?;
    let created_at = obj
        .get("created_at")
        .and_then(Value::as_str)
        .and_then(parse_timestamp)
        .ok_or("missing or bad created_at")?;
    let text = opt_str(obj.get("full_text"))
        .or_else(|| opt_str(obj.get("text")))
        .ok_or("missing text")?;
    let lang = opt_str(obj.get("lang")).ok_or("missing lang")?;
    let is_repost = match obj.get("is_repost") {
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err("is_repost not boolean"),
        None => obj.contains_key("retweeted_status"),
    };

    let user = obj.get("user").and_then(Value::as_object).ok_or("missing user")?;
    let user_id = id_string(user.get("id_str"))
        .or_else(|| id_string(user.get("id")))
        .filter(|s| !s.is_empty())
        .ok_or("missing user.id")?;
    let following = match user.get("following") {
        Some(Value::Array(items)) => Some(
            items
                .iter()
                .map(|x| id_string(Some(x)).ok_or("bad user.following entry"))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        Some(Value::Null) | None => None,
        // v1.1 payloads use a boolean `following` flag; it carries no account list.
        Some(Value::Bool(_)) => None,
        Some(_) => return Err("bad user.following"),
    };
    let author = UserProfile {
        id: user_id,
        location: opt_str(user.get("location")).filter(|s| !s.trim().is_empty()),
        description: opt_str(user.get("description")).filter(|s| !s.trim().is_empty()),
        following,
    };

    let place = match obj.get("place") {
        Some(Value::Object(p)) => {
            let full_name = opt_str(p.get("full_name")).unwrap_or_default();
            if full_name.trim().is_empty() {
                return Err("empty place.full_name");
            }
            Some(GeoPlace {
                full_name,
                country_code: opt_str(p.get("country_code")).unwrap_or_default(),
            })
        }
        Some(Value::Null) | None => None,
        Some(_) => return Err("bad place"),
    };

    Ok(TweetRecord {
        id,
        created_at,
        text,
        lang,
        is_repost,
        author,
        place,
    })
}

fn stateless_reason(rec: &TweetRecord, window: &StudyWindow) -> Option<RejectReason> {
    if rec.lang != "en" {
        Some(RejectReason::NonEnglish)
    } else if rec.is_repost {
        Some(RejectReason::Repost)
    } else if !window.contains(&rec.created_at) {
        Some(RejectReason::OutOfWindow)
    } else {
        None
    }
}

/// Keeps English, non-repost, in-window records; the first occurrence of an id wins.
pub fn filter_corpus(records: Vec<TweetRecord>, window: &StudyWindow) -> FilteredCorpus {
    let mut out = FilteredCorpus::default();
    let mut seen = HashSet::new();
    for rec in records {
        if let Some(reason) = stateless_reason(&rec, window) {
            out.rejection_counts.add(reason, 1);
        } else if !seen.insert(rec.id.clone()) {
            out.rejection_counts.add(RejectReason::Duplicate, 1);
        } else {
            out.records.push(rec);
        }
    }
    out
}

/// Filters shards in parallel and merges them in shard order, deduplicating at merge.
pub fn filter_shards(shards: Vec<ParseOutcome>, window: &StudyWindow) -> FilteredCorpus {
    let partial: Vec<(Vec<TweetRecord>, RejectionCounts)> = shards
        .into_par_iter()
        .map(|shard| {
            let mut counts = RejectionCounts::default();
            counts.add(RejectReason::Malformed, shard.malformed);
            let kept = shard
                .records
                .into_iter()
                .filter(|r| match stateless_reason(r, window) {
                    Some(reason) => {
                        counts.add(reason, 1);
                        false
                    }
                    None => true,
                })
                .collect();
            (kept, counts)
        })
        .collect();

    let mut out = FilteredCorpus::default();
    let mut seen = HashSet::new();
    for (kept, counts) in partial {
        for (reason, n) in counts.iter() {
            out.rejection_counts.add(reason, n);
        }
        for rec in kept {
            if seen.insert(rec.id.clone()) {
                out.records.push(rec);
            } else {
                out.rejection_counts.add(RejectReason::Duplicate, 1);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn line(id: &str, date: &str, lang: &str, repost: bool) -> String {
        format!(
            r#"{{"id":"{id}","created_at":"{date}T12:00:00Z","text":"hello","lang":"{lang}","is_repost":{repost},"user":{{"id":"u{id}"}}}}"#
        )
    }

    fn rec(id: &str, date: &str, lang: &str, repost: bool) -> TweetRecord {
        parse_line(&line(id, date, lang, repost)).unwrap()
    }

    #[test]
    fn empty_stream() {
        let out = parse_records(&b""[..]).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.malformed, 0);
    }

    #[test]
    fn truncated_line_is_counted() {
        let mut input = String::new();
        for i in 0..3 {
            input.push_str(&line(&i.to_string(), "2020-03-01", "en", false));
            input.push('\n');
        }
        input.push_str(r#"{"id":"9","created_at":"2020-03-0"#);
        let out = parse_records(input.as_bytes()).unwrap();
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.malformed, 1);
        assert_eq!(out.lines, 4);
    }

    #[test]
    fn reposts_survive_parsing() {
        let out = parse_records(line("1", "2020-03-01", "en", true).as_bytes()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert!(out.records[0].is_repost);
    }

    #[test]
    fn twitter_payload_mapping() {
        let raw = r#"{"id":1234567890123,"created_at":"Wed Mar 04 20:19:24 +0500 2020","full_text":"HCQ","lang":"en","retweeted_status":{},"user":{"id_str":"42","location":"Boston, MA","following":false},"place":{"full_name":"Boston, MA","country_code":"US","bbox":[]}}"#;
        let r = parse_line(raw).unwrap();
        assert_eq!(r.id, "1234567890123");
        assert_eq!(r.created_at, Utc.with_ymd_and_hms(2020, 3, 4, 15, 19, 24).unwrap());
        assert!(r.is_repost);
        assert_eq!(r.author.id, "42");
        assert_eq!(r.author.following, None);
        assert_eq!(r.place.unwrap().country_code, "US");
    }

    #[test]
    fn validation_failures_are_malformed() {
        for bad in [
            r#"{"id":"","created_at":"2020-03-01T00:00:00Z","text":"","lang":"en","user":{"id":"1"}}"#,
            r#"{"id":"1","created_at":"2020-03-01T00:00:00Z","text":"","lang":"en","user":{"id":""}}"#,
            r#"{"id":"1","created_at":"2020-03-01T00:00:00Z","text":"","lang":"en","user":{"id":"1"},"place":{"full_name":" "}}"#,
            r#"{"id":"1","created_at":"yesterday","text":"","lang":"en","user":{"id":"1"}}"#,
            r#"[1,2]"#,
        ] {
            assert!(parse_line(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn rejects_non_english() {
        let out = filter_corpus(vec![rec("1", "2020-03-01", "es", false)], &StudyWindow::default());
        assert!(out.records.is_empty());
        assert_eq!(out.rejection_counts.get(RejectReason::NonEnglish), 1);
    }

    #[test]
    fn duplicate_keeps_first() {
        let mut second = rec("1", "2020-03-02", "en", false);
        second.text = "second".into();
        let out = filter_corpus(
            vec![rec("1", "2020-03-01", "en", false), second],
            &StudyWindow::default(),
        );
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].text, "hello");
        assert_eq!(out.rejection_counts.get(RejectReason::Duplicate), 1);
    }

    #[test]
    fn out_of_window() {
        let out = filter_corpus(vec![rec("1", "2019-12-01", "en", false)], &StudyWindow::default());
        assert_eq!(out.rejection_counts.get(RejectReason::OutOfWindow), 1);
        let edge = filter_corpus(
            vec![rec("2", "2020-01-29", "en", false), rec("3", "2021-11-30", "en", false)],
            &StudyWindow::default(),
        );
        assert_eq!(edge.records.len(), 2);
    }

    #[test]
    fn inverted_window_rejected() {
        let a = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let b = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        assert!(StudyWindow::new(a, b).is_err());
    }

    #[test]
    fn serialisation_round_trips() {
        let r = rec("7", "2020-05-05", "en", false);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains(r#""created_at":"2020-05-05T12:00:00Z""#));
        assert_eq!(parse_line(&s).unwrap(), r);
    }
}
