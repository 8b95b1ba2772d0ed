use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use pulse_core::demographics::{
    build_profiles, bundled_healthcare_lexicon, load_m3, read_profiles_csv, write_profiles_csv, DemographicProfile,
    Gender, Partisanship, PoliticianRoster,
};
use pulse_core::geo::StateCode;
use pulse_core::lexicon::{DrugId, KeywordSet, TaggedTweet};
use pulse_core::stance::StanceLabel;
use pulse_core::stats::{
    contingency, pearson_chi_square, state_stance_summary, write_chisq_csv, write_contingency_csv,
    write_state_stance_csv, ChiSquareRow, StatsError, DEFAULT_DEAD_ZONE,
};
use pulse_core::timeline::{wave_of, WaveId};

use super::stance::read_stance_csv;
use super::{
    Env, Outcome, CHISQ, CONTINGENCY, GEO, PROFILES, SHARES_CSV, SHARES_SVG, STANCE, STATE_MAP, STATE_STANCE,
    US_TWEETS,
};
use crate::error::CliError;
use crate::io::{csv_reader, read_jsonl, require, write_csv, write_text, write_with};

#[derive(Debug, Clone, Default, clap::Args)]
pub struct DemoArgs {
    /// Politician accounts (`account_id,party` with party D or R).
    #[arg(long)]
    pub roster: Option<PathBuf>,
    /// Healthcare keyword CSV (`pattern,boundary_mode`); the bundled one by default.
    #[arg(long)]
    pub healthcare: Option<PathBuf>,
    /// Age, gender and organisation predictions per user.
    #[arg(long)]
    pub m3: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct StatsArgs {
    /// Half-width of the neutral band around a zero state mean.
    #[arg(long)]
    pub dead_zone: Option<f64>,
    /// Drop neutral-stance tweets from the group tables.
    #[arg(long)]
    pub exclude_neutral_stance: bool,
    /// Drop politically neutral users from the partisanship table.
    #[arg(long)]
    pub exclude_neutral_group: bool,
}

fn opt_path(env: &Env, key: &str, flag: &Option<PathBuf>) -> Result<Option<PathBuf>, CliError> {
    let p = env.config.pick_opt(key, flag.clone())?;
    if let Some(p) = &p {
        require(p)?;
    }
    Ok(p)
}

pub fn demo(env: &Env, a: &DemoArgs) -> Result<Outcome, CliError> {
    let input = env.path(US_TWEETS);
    let tweets: Vec<TaggedTweet> = read_jsonl(&input)?;
    let roster_path = opt_path(env, "roster", &a.roster)?
        .ok_or_else(|| CliError::Contract("demo needs a politician roster (--roster)".into()))?;
    let roster = PoliticianRoster::load(&roster_path)?;
    let hc_path = opt_path(env, "healthcare", &a.healthcare)?;
    let hc = match &hc_path {
        Some(p) => KeywordSet::load(p)?,
        None => bundled_healthcare_lexicon(),
    };
    let m3_path = opt_path(env, "m3", &a.m3)?;
    let m3 = m3_path.as_deref().map(load_m3).transpose()?;

    let users: Vec<_> = tweets.iter().map(|t| t.record.author.clone()).collect();
    let profiles = build_profiles(&users, &roster, &hc, m3.as_ref())?;
    let out = env.path(PROFILES);
    write_with(&out, |buf| write_profiles_csv(&profiles, buf))?;

    let mut inputs = vec![input, roster_path];
    inputs.extend(hc_path);
    inputs.extend(m3_path);
    Ok(Outcome { inputs, outputs: vec![out], ..Default::default() }.param("m3_covered", profiles.m3_covered))
}

/// `tweet_id -> state` for US-resolved rows of `geo.csv`.
fn read_geo(path: &Path) -> Result<HashMap<String, StateCode>, CliError> {
    let mut rdr = csv_reader(path)?;
    let mut out = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.get(2) != Some("us") {
            continue;
        }
        let state = rec
            .get(3)
            .unwrap_or("")
            .parse()
            .map_err(|e| CliError::Contract(format!("{} row {}: {e}", path.display(), i + 2)))?;
        out.insert(rec[0].to_string(), state);
    }
    Ok(out)
}

/// Stance rows joined with their tweet's wave and author.
struct Joined<'a> {
    drug: DrugId,
    label: StanceLabel,
    wave: WaveId,
    tweet: &'a TaggedTweet,
}

fn join<'a>(stance_path: &Path, tweets: &'a [TaggedTweet]) -> Result<Vec<Joined<'a>>, CliError> {
    let stances = read_stance_csv(stance_path)?;
    let by_id: HashMap<&str, &TaggedTweet> = tweets.iter().map(|t| (t.record.id.as_str(), t)).collect();
    stances
        .into_iter()
        .map(|s| {
            let tweet = by_id.get(s.tweet_id.as_str()).ok_or_else(|| {
                CliError::Contract(format!("stance row for unknown tweet {} (re-run geo and stance)", s.tweet_id))
            })?;
            Ok(Joined {
                drug: s.drug,
                label: s.label,
                wave: wave_of(tweet.record.created_at.date_naive())?,
                tweet,
            })
        })
        .collect()
}

type GroupFn = fn(&DemographicProfile) -> Option<String>;

const GROUPINGS: [(&str, GroupFn); 4] = [
    ("partisanship", |p| Some(p.partisanship.as_str().to_string())),
    ("healthcare", |p| Some(if p.healthcare { "healthcare" } else { "general" }.to_string())),
    ("age", |p| p.age_bucket.map(|a| a.as_str().to_string())),
    ("gender", |p| (p.gender != Gender::Unknown).then(|| p.gender.as_str().to_string())),
];

pub fn stats(env: &Env, a: &StatsArgs) -> Result<Outcome, CliError> {
    let stance_path = env.path(STANCE);
    require(&stance_path)?;
    let tweets_path = env.path(US_TWEETS);
    let geo_path = env.path(GEO);
    let profiles_path = env.path(PROFILES);
    for p in [&tweets_path, &geo_path, &profiles_path] {
        require(p)?;
    }
    let dead_zone = env.config.pick("dead_zone", a.dead_zone, DEFAULT_DEAD_ZONE)?;
    let excl_stance = a.exclude_neutral_stance || env.config.pick("exclude_neutral_stance", None, false)?;
    let excl_group = a.exclude_neutral_group || env.config.pick("exclude_neutral_group", None, false)?;

    let tweets: Vec<TaggedTweet> = read_jsonl(&tweets_path)?;
    let joined = join(&stance_path, &tweets)?;
    let states = read_geo(&geo_path)?;
    let profiles = read_profiles_csv(
        std::fs::File::open(&profiles_path).map_err(|e| CliError::io(&profiles_path, e))?,
    )?;

    let cells = joined
        .iter()
        .map(|j| {
            let state = states.get(&j.tweet.record.id).ok_or_else(|| {
                CliError::Contract(format!("tweet {} has no US state in {}", j.tweet.record.id, geo_path.display()))
            })?;
            Ok((j.drug, *state, j.wave, j.label))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let summary = state_stance_summary(&cells, dead_zone)?;

    let mut rows = Vec::new();
    for drug in DrugId::ALL {
        for (grouping, group_of) in GROUPINGS {
            let mut stances = Vec::new();
            let mut groups = Vec::new();
            for j in joined.iter().filter(|j| j.drug == drug) {
                if excl_stance && j.label == StanceLabel::Neutral {
                    continue;
                }
                let author = &j.tweet.record.author.id;
                let profile = profiles
                    .get(author)
                    .ok_or_else(|| CliError::Contract(format!("user {author} missing from {}", profiles_path.display())))?;
                if profile.is_org {
                    continue;
                }
                if excl_group && grouping == "partisanship" && profile.partisanship == Partisanship::Neutral {
                    continue;
                }
                if let Some(g) = group_of(profile) {
                    stances.push(j.label);
                    groups.push(g);
                }
            }
            match contingency(&stances, &groups) {
                Ok(table) => {
                    let result = pearson_chi_square(&table);
                    rows.push(ChiSquareRow { drug, grouping: grouping.to_string(), table, result });
                }
                Err(e @ StatsError::Degenerate { .. }) => {
                    log::warn!("stats: {drug} by {grouping} skipped: {e}");
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    let chisq = env.path(CHISQ);
    write_with(&chisq, |buf| write_chisq_csv(&rows, buf))?;
    let cont = env.path(CONTINGENCY);
    write_with(&cont, |buf| write_contingency_csv(&rows, buf))?;
    let state_path = env.path(STATE_STANCE);
    write_with(&state_path, |buf| write_state_stance_csv(&summary, dead_zone, buf))?;

    Ok(Outcome {
        inputs: vec![stance_path, tweets_path, geo_path, profiles_path],
        outputs: vec![chisq, cont, state_path],
        ..Default::default()
    }
    .param("dead_zone", dead_zone)
    .param("exclude_neutral_stance", excl_stance)
    .param("exclude_neutral_group", excl_group))
}

fn read_state_stance(path: &Path) -> Result<BTreeMap<(DrugId, WaveId, StateCode), (f64, StanceLabel)>, CliError> {
    let mut rdr = csv_reader(path)?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| CliError::Contract(format!("{} row {}: {m}", path.display(), i + 2));
        if rec.len() < 6 {
            return Err(bad("expected drug,state,wave,n,mean,class".into()));
        }
        let drug: DrugId = rec[0].parse().map_err(bad)?;
        let state: StateCode = rec[1].parse().map_err(bad)?;
        let wave = rec[2]
            .parse::<u8>()
            .ok()
            .and_then(WaveId::from_number)
            .ok_or_else(|| bad(format!("bad wave '{}'", &rec[2])))?;
        let mean: f64 = rec[4].parse().map_err(|_| bad(format!("bad mean '{}'", &rec[4])))?;
        let class: StanceLabel = rec[5].parse().map_err(bad)?;
        out.insert((drug, wave, state), (mean, class));
    }
    Ok(out)
}

pub fn report(env: &Env) -> Result<Outcome, CliError> {
    let stance_path = env.path(STANCE);
    require(&stance_path)?;
    let tweets_path = env.path(US_TWEETS);
    let state_path = env.path(STATE_STANCE);
    require(&state_path)?;
    let tweets: Vec<TaggedTweet> = read_jsonl(&tweets_path)?;
    let joined = join(&stance_path, &tweets)?;

    let mut shares: BTreeMap<(DrugId, WaveId), [u64; 3]> = BTreeMap::new();
    for j in &joined {
        shares.entry((j.drug, j.wave)).or_default()[j.label.code() as usize] += 1;
    }
    let shares_csv = env.path(SHARES_CSV);
    write_csv(&shares_csv, |w| {
        w.write_record([
            "drug", "wave", "n", "negative", "neutral", "positive", "share_negative", "share_neutral", "share_positive",
        ])?;
        for ((drug, wave), c) in &shares {
            let n: u64 = c.iter().sum();
            let share = |x: u64| format!("{}", x as f64 / n as f64);
            w.write_record([
                drug.as_str().to_string(),
                wave.to_string(),
                n.to_string(),
                c[0].to_string(),
                c[1].to_string(),
                c[2].to_string(),
                share(c[0]),
                share(c[1]),
                share(c[2]),
            ])?;
        }
        Ok(())
    })?;
    let bars: Vec<(String, [u64; 3])> =
        shares.iter().map(|((d, w), c)| (format!("{} w{w}", short_name(*d)), *c)).collect();
    let shares_svg = env.path(SHARES_SVG);
    write_text(&shares_svg, &crate::charts::stance_shares_svg(&bars)?)?;

    let cells = read_state_stance(&state_path)?;
    let map_svg = env.path(STATE_MAP);
    write_text(&map_svg, &crate::charts::state_map_svg(&cells)?)?;

    Ok(Outcome {
        inputs: vec![stance_path, tweets_path, state_path],
        outputs: vec![shares_csv, shares_svg, map_svg],
        ..Default::default()
    })
}

fn short_name(d: DrugId) -> &'static str {
    match d {
        DrugId::Hydroxychloroquine => "HCQ",
        DrugId::Ivermectin => "IVM",
        DrugId::Molnupiravir => "MOL",
        DrugId::Remdesivir => "REM",
    }
}
