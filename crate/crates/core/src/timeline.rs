//! Tuesday–Monday week binning, pandemic waves, case-count aggregation and
//! the weekly trend series.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, Days, NaiveDate, Utc, Weekday};

use crate::corpus::TweetRecord;
use crate::lexicon::DrugId;

const fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    match NaiveDate::from_ymd_opt(y, m, d) {
        Some(d) => d,
        None => panic!("invalid date"),
    }
}

pub const STUDY_START: NaiveDate = date(2020, 1, 29);
pub const WAVE2_START: NaiveDate = date(2020, 9, 16);
pub const WAVE3_START: NaiveDate = date(2021, 7, 7);
pub const STUDY_END: NaiveDate = date(2021, 11, 30);

#[derive(Debug, thiserror::Error)]
pub enum TimelineError {
    #[error("date {0} is outside the study window {STUDY_START}..={STUDY_END}")]
    OutOfWindow(NaiveDate),
    #[error("case table has gaps at: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join(", "))]
    Gaps(Vec<NaiveDate>),
    #[error("case table dates are not strictly increasing at {0}")]
    Unordered(NaiveDate),
    #[error("case table: {0}")]
    Format(String),
    #[error("cannot read case table {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A week identified by its Tuesday.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WeekId(NaiveDate);

impl WeekId {
    pub fn containing(d: NaiveDate) -> Self {
        let back = (d.weekday().num_days_from_monday() + 6) % 7;
        WeekId(d - Days::new(back as u64))
    }

    /// `None` if `d` is not a Tuesday.
    pub fn starting(d: NaiveDate) -> Option<Self> {
        (d.weekday() == Weekday::Tue).then_some(WeekId(d))
    }

    pub fn start(self) -> NaiveDate {
        self.0
    }

    pub fn end(self) -> NaiveDate {
        self.0 + Days::new(6)
    }

    pub fn next(self) -> Self {
        WeekId(self.0 + Days::new(7))
    }
}

impl fmt::Display for WeekId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

pub fn week_of(ts: &DateTime<Utc>) -> WeekId {
    WeekId::containing(ts.date_naive())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WaveId {
    Wave1,
    Wave2,
    Wave3,
}

impl WaveId {
    pub const ALL: [WaveId; 3] = [WaveId::Wave1, WaveId::Wave2, WaveId::Wave3];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Self::ALL.get(n.checked_sub(1)? as usize).copied()
    }
}

impl fmt::Display for WaveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

pub fn wave_of(d: NaiveDate) -> Result<WaveId, TimelineError> {
    if d < STUDY_START || d > STUDY_END {
        Err(TimelineError::OutOfWindow(d))
    } else if d < WAVE2_START {
        Ok(WaveId::Wave1)
    } else if d < WAVE3_START {
        Ok(WaveId::Wave2)
    } else {
        Ok(WaveId::Wave3)
    }
}

/// Week ids covering `[start, end]`, partial weeks included.
pub fn weeks_between(start: NaiveDate, end: NaiveDate) -> Vec<WeekId> {
    let last = WeekId::containing(end);
    let mut w = WeekId::containing(start);
    let mut out = Vec::new();
    while w <= last {
        out.push(w);
        w = w.next();
    }
    out
}

/// Cumulative confirmed cases per calendar day.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CaseTable {
    rows: Vec<(NaiveDate, u64)>,
}

/// Which rows of a time-series case file to sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegionFilter {
    All,
    /// Matches the country column or the province/state column, case-insensitively.
    Named(String),
}

impl RegionFilter {
    pub fn parse(s: &str) -> Self {
        if s.eq_ignore_ascii_case("all") || s.is_empty() {
            RegionFilter::All
        } else {
            RegionFilter::Named(s.to_owned())
        }
    }
}

fn parse_header_date(h: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(h, "%m/%d/%y")
        .or_else(|_| NaiveDate::parse_from_str(h, "%Y-%m-%d"))
        .ok()
}

impl CaseTable {
    pub fn new(rows: Vec<(NaiveDate, u64)>) -> Result<Self, TimelineError> {
        for w in rows.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(TimelineError::Unordered(w[1].0));
            }
        }
        let mut gaps = Vec::new();
        for w in rows.windows(2) {
            let mut d = w[0].0.succ_opt().expect("date range");
            while d < w[1].0 {
                gaps.push(d);
                d = d.succ_opt().expect("date range");
            }
        }
        if !gaps.is_empty() {
            return Err(TimelineError::Gaps(gaps));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[(NaiveDate, u64)] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Reads the wide time-series layout: one row per region, one column per date.
    pub fn from_time_series<R: Read>(reader: R, region: &RegionFilter) -> Result<Self, TimelineError> {
        let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
        let headers = rdr.headers().map_err(|e| TimelineError::Format(e.to_string()))?.clone();
        let date_cols: Vec<(usize, NaiveDate)> = headers
            .iter()
            .enumerate()
            .filter_map(|(i, h)| parse_header_date(h.trim()).map(|d| (i, d)))
            .collect();
        if date_cols.is_empty() {
            return Err(TimelineError::Format("no date columns".into()));
        }
        let key_cols: Vec<usize> = headers
            .iter()
            .enumerate()
            .filter(|(_, h)| {
                matches!(
                    h.trim(),
                    "Country_Region" | "Country/Region" | "Province_State" | "Province/State" | "iso2" | "iso3"
                )
            })
            .map(|(i, _)| i)
            .collect();

        let mut sums = vec![0u64; date_cols.len()];
        let mut matched = 0usize;
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| TimelineError::Format(e.to_string()))?;
            let keep = match region {
                RegionFilter::All => true,
                RegionFilter::Named(name) => key_cols
                    .iter()
                    .any(|&i| rec.get(i).is_some_and(|v| v.trim().eq_ignore_ascii_case(name))),
            };
            if !keep {
                continue;
            }
            matched += 1;
            for (slot, (col, _)) in sums.iter_mut().zip(&date_cols) {
                let raw = rec.get(*col).unwrap_or("").trim();
                let v: f64 = raw.parse().map_err(|_| {
                    TimelineError::Format(format!("row {}: bad count '{raw}'", n + 2))
                })?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(TimelineError::Format(format!("row {}: bad count '{raw}'", n + 2)));
                }
                *slot += v as u64;
            }
        }
        if matched == 0 {
            return Err(TimelineError::Format(format!("no rows match region {region:?}")));
        }
        let mut rows: Vec<(NaiveDate, u64)> = date_cols.into_iter().map(|(_, d)| d).zip(sums).collect();
        rows.sort_by_key(|r| r.0);
        Self::new(rows)
    }

    pub fn load(path: &Path, region: &RegionFilter) -> Result<Self, TimelineError> {
        let f = std::fs::File::open(path).map_err(|source| TimelineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_time_series(f, region)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeeklyCases {
    pub by_week: BTreeMap<WeekId, u64>,
    /// Days whose cumulative count went down; they contribute zero.
    pub clamped: Vec<NaiveDate>,
}

/// Daily first differences (the first row counts in full), negatives clamped to
/// zero, summed per Tuesday–Monday week.
pub fn weekly_new_cases(cases: &CaseTable) -> WeeklyCases {
    let mut out = WeeklyCases::default();
    let mut prev: Option<u64> = None;
    for &(d, cum) in cases.rows() {
        let new = match prev {
            None => cum,
            Some(p) if cum < p => {
                log::warn!("cumulative cases decrease on {d} ({p} -> {cum}); counting 0 new cases");
                out.clamped.push(d);
                0
            }
            Some(p) => cum - p,
        };
        *out.by_week.entry(WeekId::containing(d)).or_insert(0) += new;
        prev = Some(cum);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrendWeek {
    pub week: WeekId,
    pub tweets: BTreeMap<DrugId, u64>,
    pub new_cases: u64,
}

/// Contiguous weekly series of per-drug tweet counts joined with new cases.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrendSeries {
    pub weeks: Vec<TrendWeek>,
}

impl TrendSeries {
    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["week_start", "drug", "tweet_count", "new_cases"])?;
        for wk in &self.weeks {
            for (drug, n) in &wk.tweets {
                out.write_record([
                    wk.week.to_string(),
                    drug.to_string(),
                    n.to_string(),
                    wk.new_cases.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, TimelineError> {
        let bad = |m: String| TimelineError::Format(m);
        let mut rdr = csv::Reader::from_reader(r);
        let mut weeks: BTreeMap<WeekId, TrendWeek> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let d: NaiveDate = rec[0].parse().map_err(|_| bad(format!("bad week '{}'", &rec[0])))?;
            let week = WeekId::starting(d).ok_or_else(|| bad(format!("{d} is not a Tuesday")))?;
            let drug: DrugId = rec[1].parse().map_err(bad)?;
            let n: u64 = rec[2].parse().map_err(|_| bad("bad tweet_count".into()))?;
            let cases: u64 = rec[3].parse().map_err(|_| bad("bad new_cases".into()))?;
            let entry = weeks.entry(week).or_insert_with(|| TrendWeek {
                week,
                tweets: BTreeMap::new(),
                new_cases: cases,
            });
            entry.tweets.insert(drug, n);
        }
        Ok(Self {
            weeks: weeks.into_values().collect(),
        })
    }
}

/// Counts tweets per drug per week over the union of tweet and case weeks.
pub fn build_trend(
    partitions: &BTreeMap<DrugId, Vec<TweetRecord>>,
    cases: Option<&WeeklyCases>,
) -> TrendSeries {
    let mut counts: BTreeMap<WeekId, BTreeMap<DrugId, u64>> = BTreeMap::new();
    for (drug, recs) in partitions {
        for r in recs {
            *counts.entry(week_of(&r.created_at)).or_default().entry(*drug).or_insert(0) += 1;
        }
    }
    let case_weeks = cases.map(|c| &c.by_week);
    let first = counts
        .keys()
        .next()
        .copied()
        .into_iter()
        .chain(case_weeks.and_then(|c| c.keys().next().copied()))
        .min();
    let last = counts
        .keys()
        .next_back()
        .copied()
        .into_iter()
        .chain(case_weeks.and_then(|c| c.keys().next_back().copied()))
        .max();
    let (Some(first), Some(last)) = (first, last) else {
        return TrendSeries::default();
    };

    let mut weeks = Vec::new();
    let mut w = first;
    while w <= last {
        let per = counts.get(&w);
        weeks.push(TrendWeek {
            week: w,
            tweets: DrugId::ALL
                .iter()
                .map(|d| (*d, per.and_then(|m| m.get(d)).copied().unwrap_or(0)))
                .collect(),
            new_cases: case_weeks.and_then(|c| c.get(&w)).copied().unwrap_or(0),
        });
        w = w.next();
    }
    TrendSeries { weeks }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    /// Day of week by Zeller's congruence, 0 = Saturday.
    fn zeller(date: NaiveDate) -> u32 {
        let (mut y, mut m) = (date.year(), date.month() as i32);
        if m < 3 {
            m += 12;
            y -= 1;
        }
        let k = y % 100;
        let j = y / 100;
        let q = date.day() as i32;
        ((q + 13 * (m + 1) / 5 + k + k / 4 + j / 4 + 5 * j) % 7) as u32
    }

    #[test]
    fn week_examples() {
        assert_eq!(zeller(d("2020-01-28")), 3, "2020-01-28 is a Tuesday");
        assert_eq!(WeekId::containing(d("2020-01-29")).start(), d("2020-01-28"));
        assert_eq!(WeekId::containing(d("2020-02-03")).start(), d("2020-01-28"));
        assert_eq!(WeekId::containing(d("2020-02-04")).start(), d("2020-02-04"));
        assert!(WeekId::starting(d("2020-01-29")).is_none());
    }

    #[test]
    fn wave_examples() {
        assert_eq!(wave_of(d("2020-09-16")).unwrap(), WaveId::Wave2);
        assert_eq!(wave_of(d("2020-09-15")).unwrap(), WaveId::Wave1);
        assert_eq!(wave_of(d("2021-07-07")).unwrap(), WaveId::Wave3);
        assert_eq!(wave_of(d("2021-07-06")).unwrap(), WaveId::Wave2);
        assert_eq!(wave_of(STUDY_START).unwrap(), WaveId::Wave1);
        assert_eq!(wave_of(STUDY_END).unwrap(), WaveId::Wave3);
        assert!(matches!(wave_of(d("2020-01-28")), Err(TimelineError::OutOfWindow(_))));
        assert!(wave_of(d("2021-12-01")).is_err());
    }

    #[test]
    fn study_window_week_count() {
        // Window starts on a Wednesday and ends on a Tuesday, so both ends are
        // partial weeks: 2020-01-28 .. 2021-11-30 spans 97 Tuesday-anchored weeks.
        let weeks = weeks_between(STUDY_START, STUDY_END);
        assert_eq!(weeks.first().unwrap().start(), d("2020-01-28"));
        assert_eq!(weeks.last().unwrap().start(), d("2021-11-30"));
        assert_eq!(weeks.len(), 97);
        assert!(weeks.windows(2).all(|w| w[1].start() - w[0].start() == chrono::Duration::days(7)));
    }

    fn table(start: &str, cum: &[u64]) -> CaseTable {
        let s = d(start);
        CaseTable::new(
            cum.iter()
                .enumerate()
                .map(|(i, c)| (s + Days::new(i as u64), *c))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn new_cases_examples() {
        let w = weekly_new_cases(&table("2020-03-03", &[10, 15, 15]));
        assert_eq!(w.by_week.len(), 1);
        assert_eq!(w.by_week[&WeekId::containing(d("2020-03-03"))], 15);

        let flat = weekly_new_cases(&table("2020-03-03", &[7; 14]));
        let v: Vec<u64> = flat.by_week.values().copied().collect();
        assert_eq!(v, [7, 0]);

        let dip = weekly_new_cases(&table("2020-03-03", &[10, 12, 9, 11]));
        assert_eq!(dip.clamped, [d("2020-03-05")]);
        assert_eq!(dip.by_week.values().sum::<u64>(), 10 + 2 + 0 + 2);
    }

    #[test]
    fn gaps_are_reported() {
        let err = CaseTable::new(vec![(d("2020-03-01"), 1), (d("2020-03-04"), 2)]).unwrap_err();
        match err {
            TimelineError::Gaps(g) => assert_eq!(g, [d("2020-03-02"), d("2020-03-03")]),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn jhu_layout() {
        let csv = "UID,iso2,Province_State,Country_Region,Combined_Key,1/22/20,1/23/20,1/24/20\n\
                   1,US,Alabama,US,\"Alabama, US\",0,1,2\n\
                   2,US,Texas,US,\"Texas, US\",1,1,3\n\
                   3,CA,Ontario,Canada,\"Ontario, Canada\",5,5,5\n";
        let us = CaseTable::from_time_series(csv.as_bytes(), &RegionFilter::parse("US")).unwrap();
        assert_eq!(us.rows(), &[(d("2020-01-22"), 1), (d("2020-01-23"), 2), (d("2020-01-24"), 5)]);
        let tx = CaseTable::from_time_series(csv.as_bytes(), &RegionFilter::parse("texas")).unwrap();
        assert_eq!(tx.rows()[2].1, 3);
        assert!(CaseTable::from_time_series(csv.as_bytes(), &RegionFilter::parse("Mars")).is_err());
    }

    #[test]
    fn empty_partitions_follow_case_range() {
        let parts: BTreeMap<DrugId, Vec<TweetRecord>> =
            DrugId::ALL.iter().map(|d| (*d, Vec::new())).collect();
        let cases = weekly_new_cases(&table("2020-03-03", &[1, 2, 3, 4, 5, 6, 7, 8]));
        let t = build_trend(&parts, Some(&cases));
        assert_eq!(t.weeks.len(), 2);
        assert!(t.weeks.iter().all(|w| w.tweets.values().all(|n| *n == 0)));
        assert!(build_trend(&parts, None).is_empty());
    }
}
