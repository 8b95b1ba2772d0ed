//! Seeded synthetic corpus with planted ground truth.
//!
//! Every quantity the pipeline is expected to recover is recorded in
//! `truth.json` as it is planted, not recomputed from the pipeline's own code:
//! weekly per-drug counts, weekly new cases, per (drug, state, wave) stance
//! sums, group x stance tables, the multi-drug tweet ids and the rejection
//! counts of the noise lines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use pulse_core::stance::{Polarity, RuleBaseline};

pub const CORPUS_FILE: &str = "synthetic_tweets.jsonl";
pub const CASES_FILE: &str = "jhu.csv";
pub const ROSTER_FILE: &str = "roster.csv";
pub const M3_FILE: &str = "m3.csv";
pub const TRUTH_FILE: &str = "truth.json";

const DRUGS: [&str; 4] = ["hydroxychloroquine", "ivermectin", "molnupiravir", "remdesivir"];

/// Surface forms used in generated text, per drug.
const KEYWORDS: [&[&str]; 4] = [
    &["hydroxychloroquine", "HCQ", "Plaquenil", "Hydroxychloroquine", "#hydroxychloroquine"],
    &["ivermectin", "Ivermectin", "IVERMECTIN", "stromectol"],
    &["molnupiravir", "Merck's pill", "Molnupiravir"],
    &["remdesivir", "Veklury", "Remdesivir"],
];

/// Planted (negative, neutral, positive) counts for left, neutral and right users.
const TABLES: [[[u64; 3]; 3]; 4] = [
    [[42, 10, 18], [10, 10, 10], [18, 10, 42]],
    [[35, 5, 15], [5, 5, 5], [15, 5, 35]],
    [[5, 5, 5], [5, 5, 5], [5, 5, 5]],
    [[10, 10, 20], [5, 5, 10], [10, 10, 20]],
];
const GROUPS: [&str; 3] = ["left", "neutral", "right"];

const STATES: [(&str, &str, &str); 8] = [
    ("AZ", "Arizona", "Phoenix"),
    ("TX", "Texas", "Austin"),
    ("CA", "California", "Sacramento"),
    ("NY", "New York", "Buffalo"),
    ("FL", "Florida", "Tampa"),
    ("OH", "Ohio", "Cleveland"),
    ("MA", "Massachusetts", "Boston"),
    ("WA", "Washington", "Seattle"),
];

const FILLER: [&str; 16] = [
    "today", "people", "talking", "again", "news", "thread", "morning", "week", "update", "heard", "friend",
    "online", "about", "everyone", "family", "latest",
];

const HC_BIOS: [&str; 5] = ["ICU nurse", "Family medicine physician", "Pharmacist and runner", "Epidemiologist", "MD, dad"];
const OTHER_BIOS: [&str; 6] = ["coffee lover", "dog mom", "sports fan", "father of three", "nursery owner", "teacher and gardener"];

const ORG_TWEETS: usize = 12;
const MULTI_TWEETS: usize = 15;
const NON_US_TWEETS: usize = 6;
const UNRESOLVED_TWEETS: usize = 5;
const NO_DRUG_TWEETS: usize = 10;
const NON_ENGLISH: usize = 6;
const REPOSTS: usize = 5;
const DUPLICATES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeeklyCount {
    pub week_start: String,
    pub drug: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeeklyCases {
    pub week_start: String,
    pub new_cases: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateCell {
    pub drug: String,
    pub state: String,
    pub wave: u8,
    pub n: u64,
    pub sum: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedTable {
    pub drug: String,
    pub grouping: String,
    pub rows: Vec<String>,
    /// (negative, neutral, positive) per row.
    pub counts: Vec<[u64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub seed: u64,
    pub weekly_counts: Vec<WeeklyCount>,
    pub weekly_new_cases: Vec<WeeklyCases>,
    pub multi_drug_ids: Vec<String>,
    pub state_cells: Vec<StateCell>,
    pub tables: Vec<PlantedTable>,
    pub dependent_drug: String,
    pub independent_drug: String,
    pub rejections: BTreeMap<String, u64>,
    pub us_tweets: u64,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: Vec<String>,
    pub cases_csv: String,
    pub roster_csv: String,
    pub m3_csv: String,
    pub truth: Truth,
}

impl SynthOutput {
    pub fn write(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut corpus = self.corpus.join("\n");
        corpus.push('\n');
        let truth = serde_json::to_string_pretty(&self.truth).expect("truth serialises") + "\n";
        let files = [
            (CORPUS_FILE, corpus),
            (CASES_FILE, self.cases_csv.clone()),
            (ROSTER_FILE, self.roster_csv.clone()),
            (M3_FILE, self.m3_csv.clone()),
            (TRUTH_FILE, truth),
        ];
        let mut out = Vec::new();
        for (name, body) in files {
            let p = dir.join(name);
            crate::io::write_atomic(&p, |w| w.write_all(body.as_bytes()))?;
            out.push(p);
        }
        Ok(out)
    }
}

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).expect("valid date")
}

/// Planted calendar, written out independently of the library's week and wave code.
struct Calendar {
    start: NaiveDate,
    days: i64,
    tuesday: NaiveDate,
}

impl Calendar {
    fn new() -> Self {
        let start = d(2020, 1, 29);
        Self {
            start,
            days: (d(2021, 11, 30) - start).num_days(),
            tuesday: d(2020, 1, 28),
        }
    }

    fn week_start(&self, date: NaiveDate) -> NaiveDate {
        let since = (date - self.tuesday).num_days();
        self.tuesday + Duration::days(since.div_euclid(7) * 7)
    }

    fn wave(&self, date: NaiveDate) -> u8 {
        if date < d(2020, 9, 16) {
            1
        } else if date < d(2021, 7, 7) {
            2
        } else {
            3
        }
    }
}

#[derive(Clone, Copy)]
enum Geo {
    State(usize),
    NonUs,
    Unresolved,
}

struct Builder {
    rng: ChaCha8Rng,
    cal: Calendar,
    next_id: u64,
    next_user: u64,
    lines: Vec<String>,
    weekly: BTreeMap<(String, &'static str), u64>,
    cells: BTreeMap<(&'static str, &'static str, u8), (u64, i64)>,
    m3: Vec<String>,
    pos: Vec<String>,
    neg: Vec<String>,
}

impl Builder {
    fn id(&mut self) -> String {
        self.next_id += 1;
        format!("14{:08}", self.next_id)
    }

    fn user_id(&mut self) -> String {
        self.next_user += 1;
        format!("u{:05}", self.next_user)
    }

    fn date(&mut self) -> NaiveDate {
        let off = self.rng.gen_range(0..=self.cal.days);
        self.cal.start + Duration::days(off)
    }

    fn timestamp(&mut self, date: NaiveDate) -> String {
        let secs: u32 = self.rng.gen_range(0..86_400);
        let t = date.and_hms_opt(secs / 3600, secs / 60 % 60, secs % 60).expect("valid time");
        if self.rng.gen_bool(0.2) {
            t.format("%a %b %d %H:%M:%S +0000 %Y").to_string()
        } else {
            t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
        }
    }

    fn filler(&mut self) -> &'static str {
        FILLER.choose(&mut self.rng).expect("non-empty")
    }

    fn keyword(&mut self, drug: usize) -> &'static str {
        KEYWORDS[drug].choose(&mut self.rng).expect("non-empty")
    }

    /// Text whose rule-baseline label is `stance` (-1, 0, 1) and which names exactly `drug`.
    fn text(&mut self, drug: usize, stance: i8) -> String {
        let kw = self.keyword(drug);
        let (a, b, c) = (self.filler(), self.filler(), self.filler());
        let cue = match stance {
            1 => Some(self.pos.choose(&mut self.rng).expect("cues").clone()),
            -1 => Some(self.neg.choose(&mut self.rng).expect("cues").clone()),
            _ => None,
        };
        let punct = *["", "!", ".", "?!"].choose(&mut self.rng).expect("non-empty");
        match cue {
            Some(cue) if self.rng.gen_bool(0.5) => format!("{a} {kw} {cue} {b}{punct}"),
            Some(cue) => format!("{cue}, {a} {b} {kw} {c}{punct}"),
            None => format!("{a} {b} {kw} {c}{punct}"),
        }
    }

    fn place_fields(&mut self, geo: Geo, obj: &mut serde_json::Map<String, Value>, user: &mut serde_json::Map<String, Value>) {
        match geo {
            Geo::State(i) => {
                let (abbr, name, city) = STATES[i];
                match self.rng.gen_range(0..4) {
                    0 => {
                        obj.insert("place".into(), json!({"full_name": format!("{city}, {abbr}"), "country_code": "US"}));
                    }
                    1 => {
                        user.insert("location".into(), json!(format!("{city}, {name}")));
                    }
                    2 => {
                        user.insert("location".into(), json!(format!("{name}, USA")));
                    }
                    _ => {
                        obj.insert("place".into(), json!({"full_name": format!("{name}, USA"), "country_code": "US"}));
                        user.insert("location".into(), json!("Narnia"));
                    }
                }
            }
            Geo::NonUs => {
                obj.insert("place".into(), json!({"full_name": "Toronto, Ontario", "country_code": "CA"}));
                user.insert("location".into(), json!("Phoenix, AZ"));
            }
            Geo::Unresolved => {
                let loc = *["Narnia", "somewhere over the rainbow", "Earth", "the internet", ""]
                    .choose(&mut self.rng)
                    .expect("non-empty");
                user.insert("location".into(), json!(loc));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn tweet(
        &mut self,
        date: NaiveDate,
        text: String,
        lang: &str,
        geo: Geo,
        user_id: String,
        description: &str,
        following: Vec<String>,
    ) -> (String, Value) {
        let id = self.id();
        let ts = self.timestamp(date);
        let mut user = serde_json::Map::new();
        user.insert("id_str".into(), json!(user_id));
        user.insert("description".into(), json!(description));
        user.insert("following".into(), json!(following));
        let mut obj = serde_json::Map::new();
        obj.insert("id_str".into(), json!(id));
        obj.insert("created_at".into(), json!(ts));
        obj.insert(if self.rng.gen_bool(0.5) { "full_text" } else { "text" }.into(), json!(text));
        obj.insert("lang".into(), json!(lang));
        self.place_fields(geo, &mut obj, &mut user);
        obj.insert("user".into(), Value::Object(user));
        (id, Value::Object(obj))
    }

    fn follows(&mut self, group: usize) -> Vec<String> {
        let (dems, reps) = match group {
            0 => {
                let dn = self.rng.gen_range(1..=3);
                (dn, self.rng.gen_range(0..dn))
            }
            2 => {
                let rn = self.rng.gen_range(1..=3);
                (self.rng.gen_range(0..rn), rn)
            }
            _ => {
                let k = self.rng.gen_range(0..=2);
                (k, k)
            }
        };
        let mut ds: Vec<usize> = (1..=6).collect();
        let mut rs: Vec<usize> = (1..=6).collect();
        ds.shuffle(&mut self.rng);
        rs.shuffle(&mut self.rng);
        let mut out: Vec<String> = ds[..dems].iter().map(|i| format!("dem{i}")).collect();
        out.extend(rs[..reps].iter().map(|i| format!("rep{i}")));
        for _ in 0..self.rng.gen_range(0..3) {
            out.push(format!("acct{}", self.rng.gen_range(0..50)));
        }
        out.shuffle(&mut self.rng);
        out
    }

    fn m3_row(&mut self, user: &str, is_org: bool) {
        const AGES: [[&str; 4]; 4] = [
            ["0.1", "0.3", "0.25", "0.35"],
            ["0.05", "0.15", "0.2", "0.6"],
            ["0.6", "0.2", "0.1", "0.1"],
            ["0.25", "0.25", "0.25", "0.25"],
        ];
        let a = AGES[self.rng.gen_range(0..AGES.len())];
        let male: u32 = self.rng.gen_range(0..=10);
        let male = format!("{}", male as f64 / 10.0);
        let female = format!("{}", 1.0 - male.parse::<f64>().unwrap());
        self.m3.push(format!("{user},{},{},{},{},{male},{female},{is_org}", a[0], a[1], a[2], a[3]));
    }

    fn count_week(&mut self, drug: usize, date: NaiveDate) {
        let week = self.cal.week_start(date).to_string();
        *self.weekly.entry((week, DRUGS[drug])).or_default() += 1;
    }

    fn count_cell(&mut self, drug: usize, state: usize, date: NaiveDate, stance: i8) {
        let c = self.cells.entry((DRUGS[drug], STATES[state].0, self.cal.wave(date))).or_default();
        c.0 += 1;
        c.1 += stance as i64;
    }
}

fn cases_csv(rng: &mut ChaCha8Rng, cal: &Calendar) -> (String, BTreeMap<String, u64>) {
    let first = d(2020, 1, 22);
    let last = d(2021, 11, 30);
    let days = (last - first).num_days() as usize + 1;
    let regions = [("Washington", "US"), ("New York", "US"), ("Texas", "US"), ("Ontario", "Canada")];
    let mut cum = vec![vec![0u64; days]; regions.len()];
    for (r, row) in cum.iter_mut().enumerate() {
        let mut total = 0u64;
        for (i, slot) in row.iter_mut().enumerate() {
            // Three bumps roughly aligned with the waves.
            let x = i as f64;
            let level = 40.0 * (-(x - 90.0).powi(2) / 800.0).exp()
                + 120.0 * (-(x - 350.0).powi(2) / 1500.0).exp()
                + 90.0 * (-(x - 590.0).powi(2) / 900.0).exp();
            total += (level * (1.0 + r as f64 * 0.3)) as u64 + rng.gen_range(0..5);
            *slot = total;
        }
    }
    let mut out = String::from("Province/State,Country/Region,Lat,Long");
    for i in 0..days {
        let day = first + Duration::days(i as i64);
        write!(out, ",{}/{}/{}", day.month(), day.day(), day.year() % 100).unwrap();
    }
    out.push('\n');
    for (r, (prov, country)) in regions.iter().enumerate() {
        write!(out, "{prov},{country},0.0,0.0").unwrap();
        for v in &cum[r] {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }

    let mut weekly: BTreeMap<String, u64> = BTreeMap::new();
    for i in 0..days {
        let day = first + Duration::days(i as i64);
        let new: u64 = (0..3).map(|r| cum[r][i] - if i == 0 { 0 } else { cum[r][i - 1] }).sum();
        *weekly.entry(cal.week_start(day).to_string()).or_default() += new;
    }
    (out, weekly)
}

pub fn generate(seed: u64) -> SynthOutput {
    let baseline = RuleBaseline::bundled();
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(seed),
        cal: Calendar::new(),
        next_id: 0,
        next_user: 0,
        lines: Vec::new(),
        weekly: BTreeMap::new(),
        cells: BTreeMap::new(),
        m3: Vec::new(),
        pos: baseline.cues(Polarity::Positive).into_iter().map(String::from).collect(),
        neg: baseline.cues(Polarity::Negative).into_iter().map(String::from).collect(),
    };
    let mut tables = Vec::new();
    let mut us = 0u64;

    // Planted individual users: (drug, group, stance).
    let mut plan = Vec::new();
    for (drug, table) in TABLES.iter().enumerate() {
        for (group, row) in table.iter().enumerate() {
            for (s, &n) in row.iter().enumerate() {
                plan.extend(std::iter::repeat_n((drug, group, s as i8 - 1), n as usize));
            }
        }
    }
    plan.shuffle(&mut b.rng);
    let mut hc_tables = [[[0u64; 3]; 2]; 4];
    let mut kept: Vec<String> = Vec::new();
    for (drug, group, stance) in plan {
        let date = b.date();
        let state = b.rng.gen_range(0..STATES.len());
        let hc = b.rng.gen_bool(1.0 / 6.0);
        let bio = if hc { *HC_BIOS.choose(&mut b.rng).unwrap() } else { *OTHER_BIOS.choose(&mut b.rng).unwrap() };
        hc_tables[drug][hc as usize][(stance + 1) as usize] += 1;
        let user = b.user_id();
        let following = b.follows(group);
        if b.rng.gen_ratio(24, 25) {
            b.m3_row(&user, false);
        }
        let text = b.text(drug, stance);
        let (_, v) = b.tweet(date, text, "en", Geo::State(state), user, bio, following);
        b.count_week(drug, date);
        b.count_cell(drug, state, date, stance);
        us += 1;
        let line = v.to_string();
        kept.push(line.clone());
        b.lines.push(line);
    }
    for (drug, table) in TABLES.iter().enumerate() {
        tables.push(PlantedTable {
            drug: DRUGS[drug].into(),
            grouping: "partisanship".into(),
            rows: GROUPS.iter().map(|g| g.to_string()).collect(),
            counts: table.to_vec(),
        });
        tables.push(PlantedTable {
            drug: DRUGS[drug].into(),
            grouping: "healthcare".into(),
            rows: vec!["general".into(), "healthcare".into()],
            counts: hc_tables[drug].to_vec(),
        });
    }

    // Organisational accounts: in every state summary, in no group table.
    for i in 0..ORG_TWEETS {
        let drug = i % 4;
        let stance = [1i8, -1, 0][i % 3];
        let date = b.date();
        let state = b.rng.gen_range(0..STATES.len());
        let user = b.user_id();
        b.m3_row(&user, true);
        let following = b.follows(i % 3);
        let text = b.text(drug, stance);
        let (_, v) = b.tweet(date, text, "en", Geo::State(state), user, "Official news account", following);
        b.count_week(drug, date);
        b.count_cell(drug, state, date, stance);
        us += 1;
        b.lines.push(v.to_string());
    }

    let mut multi_drug_ids = Vec::new();
    for i in 0..MULTI_TWEETS {
        let (x, y) = (i % 4, (i + 1 + i / 4) % 4);
        let y = if y == x { (x + 1) % 4 } else { y };
        let text = format!("{} and {} {}", b.keyword(x), b.keyword(y), b.filler());
        let date = b.date();
        let state = b.rng.gen_range(0..STATES.len());
        let user = b.user_id();
        let (id, v) = b.tweet(date, text, "en", Geo::State(state), user, "", vec![]);
        multi_drug_ids.push(id);
        b.lines.push(v.to_string());
    }

    for (count, geo) in [(NON_US_TWEETS, Geo::NonUs), (UNRESOLVED_TWEETS, Geo::Unresolved)] {
        for i in 0..count {
            let drug = i % 4;
            let date = b.date();
            let stance = [1i8, 0, -1][i % 3];
            let text = b.text(drug, stance);
            let user = b.user_id();
            let (_, v) = b.tweet(date, text, "en", geo, user, "", vec![]);
            b.count_week(drug, date);
            b.lines.push(v.to_string());
        }
    }

    for _ in 0..NO_DRUG_TWEETS {
        let date = b.date();
        let text = format!("{} {} {}", b.filler(), b.filler(), b.filler());
        let user = b.user_id();
        let state = b.rng.gen_range(0..STATES.len());
        let (_, v) = b.tweet(date, text, "en", Geo::State(state), user, "", vec![]);
        b.lines.push(v.to_string());
    }

    // Noise rejected at intake.
    let mut rejections = BTreeMap::new();
    for i in 0..NON_ENGLISH {
        let date = b.date();
        let text = format!("la {} funciona", b.keyword(i % 4));
        let user = b.user_id();
        let (_, v) = b.tweet(date, text, "es", Geo::State(0), user, "", vec![]);
        b.lines.push(v.to_string());
    }
    rejections.insert("non_english".to_string(), NON_ENGLISH as u64);
    for i in 0..REPOSTS {
        let date = b.date();
        let text = format!("RT {}", b.text(i % 4, 1));
        let user = b.user_id();
        let (_, mut v) = b.tweet(date, text, "en", Geo::State(1), user, "", vec![]);
        v["retweeted_status"] = json!({"id_str": "1"});
        b.lines.push(v.to_string());
    }
    rejections.insert("repost".to_string(), REPOSTS as u64);
    for i in 0..DUPLICATES {
        let line = kept[i * 37 % kept.len()].clone();
        b.lines.push(line);
    }
    rejections.insert("duplicate".to_string(), DUPLICATES as u64);
    let outside = [d(2019, 12, 15), d(2020, 1, 28), d(2021, 12, 1), d(2022, 2, 1)];
    for (i, date) in outside.into_iter().enumerate() {
        let text = b.text(i % 4, 1);
        let user = b.user_id();
        let (_, v) = b.tweet(date, text, "en", Geo::State(2), user, "", vec![]);
        b.lines.push(v.to_string());
    }
    rejections.insert("out_of_window".to_string(), outside.len() as u64);
    let malformed = ["{not json", r#"{"id_str":"999","lang":"en"}"#, "[]"];
    b.lines.extend(malformed.iter().map(|s| s.to_string()));
    rejections.insert("malformed".to_string(), malformed.len() as u64);

    b.lines.shuffle(&mut b.rng);

    let (cases_csv, weekly_cases) = cases_csv(&mut b.rng, &b.cal);

    let mut roster_csv = String::from("account_id,party\n");
    for i in 1..=6 {
        writeln!(roster_csv, "dem{i},D").unwrap();
    }
    for i in 1..=6 {
        writeln!(roster_csv, "rep{i},R").unwrap();
    }
    let mut m3_csv = String::from("user_id,p_le18,p_19_29,p_30_39,p_ge40,p_male,p_female,is_org\n");
    for row in &b.m3 {
        m3_csv.push_str(row);
        m3_csv.push('\n');
    }

    let truth = Truth {
        seed,
        weekly_counts: b
            .weekly
            .iter()
            .map(|((w, drug), &count)| WeeklyCount { week_start: w.clone(), drug: drug.to_string(), count })
            .collect(),
        weekly_new_cases: weekly_cases
            .into_iter()
            .map(|(week_start, new_cases)| WeeklyCases { week_start, new_cases })
            .collect(),
        multi_drug_ids,
        state_cells: b
            .cells
            .iter()
            .map(|(&(drug, state, wave), &(n, sum))| StateCell {
                drug: drug.into(),
                state: state.into(),
                wave,
                n,
                sum,
            })
            .collect(),
        tables,
        dependent_drug: DRUGS[0].into(),
        independent_drug: DRUGS[3].into(),
        rejections,
        us_tweets: us,
    };
    SynthOutput {
        corpus: b.lines,
        cases_csv,
        roster_csv,
        m3_csv,
        truth,
    }
}
