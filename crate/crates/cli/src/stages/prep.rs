use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;

use pulse_core::corpus::{filter_shards, read_records, StudyWindow, TweetRecord};
use pulse_core::geo::{Gazetteer, Resolution};
use pulse_core::lexicon::{partition_single_drug, DrugId, TaggedTweet};
use pulse_core::timeline::{build_trend, weekly_new_cases, CaseTable, RegionFilter};

use super::{Env, Outcome, CORPUS, DRUG_TWEETS, EXCLUDED_MULTI, GEO, MATCH_SUMMARY, REJECTIONS, TREND_CSV, TREND_SVG, US_TWEETS};
use crate::error::CliError;
use crate::io::{read_jsonl, require, write_csv, write_jsonl, write_text, write_with};

#[derive(Debug, Clone, Default, clap::Args)]
pub struct IngestArgs {
    /// Input `.jsonl` / `.jsonl.gz` files or directories holding them.
    #[arg(long = "in", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// First day kept (inclusive).
    #[arg(long)]
    pub start: Option<NaiveDate>,
    /// Last day kept (inclusive).
    #[arg(long)]
    pub end: Option<NaiveDate>,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct MatchArgs {
    /// Drug lexicon CSV (`drug,pattern,boundary_mode`); the bundled one by default.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct GeoArgs {
    /// Gazetteer CSV; the bundled one by default.
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrendArgs {
    /// Drug-tagged tweets; `drug_tweets.jsonl` in the work directory by default.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Cumulative case time series (wide CSV).
    #[arg(long)]
    pub cases: Option<PathBuf>,
    /// Country or province to sum from the case file, or `all`.
    #[arg(long)]
    pub region: Option<String>,
}

fn is_corpus_file(p: &Path) -> bool {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name.ends_with(".jsonl") || name.ends_with(".jsonl.gz")
}

fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| CliError::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && is_corpus_file(f))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            require(p)?;
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::Contract("no corpus files found".into()));
    }
    Ok(files)
}

pub fn ingest(env: &Env, a: &IngestArgs) -> Result<Outcome, CliError> {
    let files = expand_inputs(&a.inputs)?;
    let default = StudyWindow::default();
    let start = env.config.pick("start", a.start, default.start)?;
    let end = env.config.pick("end", a.end, default.end)?;
    let window = StudyWindow::new(start, end)?;

    let shards = files
        .par_iter()
        .map(|f| read_records(f))
        .collect::<Result<Vec<_>, _>>()?;
    let lines: u64 = shards.iter().map(|s| s.lines).sum();
    let corpus = filter_shards(shards, &window);
    log::info!(
        "ingest: {lines} records read, {} kept, {} rejected",
        corpus.records.len(),
        corpus.rejection_counts.total()
    );

    let out = env.path(CORPUS);
    write_jsonl(&out, &corpus.records)?;
    let rej = env.path(REJECTIONS);
    write_with(&rej, |buf| corpus.rejection_counts.write_csv(buf))?;
    Ok(Outcome { inputs: files, outputs: vec![out, rej], ..Default::default() }
        .param("start", start)
        .param("end", end))
}

pub fn match_drugs(env: &Env, a: &MatchArgs) -> Result<Outcome, CliError> {
    let input = env.path(CORPUS);
    let records: Vec<TweetRecord> = read_jsonl(&input)?;
    let lexicon_path = a.lexicon.clone().or_else(|| env.config.get("lexicon").map(PathBuf::from));
    let lexicon = match &lexicon_path {
        Some(p) => {
            require(p)?;
            pulse_core::lexicon::DrugLexicon::load(p)?
        }
        None => pulse_core::lexicon::DrugLexicon::bundled(),
    };
    let part = partition_single_drug(records, &lexicon);

    let tagged: Vec<TaggedTweet> = part
        .by_drug
        .iter()
        .flat_map(|(drug, recs)| recs.iter().map(|r| TaggedTweet { drug: *drug, record: r.clone() }))
        .collect();
    let tweets = env.path(DRUG_TWEETS);
    write_jsonl(&tweets, &tagged)?;

    let summary = env.path(MATCH_SUMMARY);
    write_csv(&summary, |w| {
        w.write_record(["category", "count"])?;
        for (drug, recs) in &part.by_drug {
            w.write_record([drug.as_str(), &recs.len().to_string()])?;
        }
        w.write_record(["excluded_multi", &part.excluded_multi.to_string()])?;
        w.write_record(["no_mention", &part.no_mention.to_string()])?;
        w.write_record(["total", &part.total().to_string()])
    })?;

    let multi = env.path(EXCLUDED_MULTI);
    write_csv(&multi, |w| {
        w.write_record(["tweet_id", "drugs"])?;
        for (id, drugs) in &part.multi_ids {
            let names: Vec<&str> = drugs.iter().map(|d| d.as_str()).collect();
            w.write_record([id.as_str(), &names.join(";")])?;
        }
        Ok(())
    })?;

    let mut inputs = vec![input];
    inputs.extend(lexicon_path);
    Ok(Outcome { inputs, outputs: vec![tweets, summary, multi], ..Default::default() })
}

pub fn geo(env: &Env, a: &GeoArgs) -> Result<Outcome, CliError> {
    let input = env.path(DRUG_TWEETS);
    let tweets: Vec<TaggedTweet> = read_jsonl(&input)?;
    let gaz_path = a.gazetteer.clone().or_else(|| env.config.get("gazetteer").map(PathBuf::from));
    let gaz = match &gaz_path {
        Some(p) => {
            require(p)?;
            Gazetteer::load(p)?
        }
        None => Gazetteer::bundled(),
    };
    let resolved: Vec<Resolution> = tweets.par_iter().map(|t| gaz.resolve(&t.record)).collect();

    let geo_csv = env.path(GEO);
    write_csv(&geo_csv, |w| {
        w.write_record(["tweet_id", "drug", "status", "state", "source"])?;
        for (t, r) in tweets.iter().zip(&resolved) {
            let (status, state, source) = match r {
                Resolution::State(s, src) => ("us", s.abbr(), src.as_str()),
                Resolution::NonUs => ("non_us", "", ""),
                Resolution::Unresolved => ("unresolved", "", ""),
            };
            w.write_record([t.record.id.as_str(), t.drug.as_str(), status, state, source])?;
        }
        Ok(())
    })?;

    let us: Vec<&TaggedTweet> = tweets
        .iter()
        .zip(&resolved)
        .filter(|(_, r)| matches!(r, Resolution::State(..)))
        .map(|(t, _)| t)
        .collect();
    log::info!("geo: {} of {} tweets resolved to a US state", us.len(), tweets.len());
    let us_path = env.path(US_TWEETS);
    write_jsonl(&us_path, &us)?;

    let mut inputs = vec![input];
    inputs.extend(gaz_path);
    Ok(Outcome { inputs, outputs: vec![geo_csv, us_path], ..Default::default() })
}

pub fn trend(env: &Env, a: &TrendArgs) -> Result<Outcome, CliError> {
    let input = a.input.clone().unwrap_or_else(|| env.path(DRUG_TWEETS));
    let tweets: Vec<TaggedTweet> = read_jsonl(&input)?;
    let mut partitions: BTreeMap<DrugId, Vec<TweetRecord>> = BTreeMap::new();
    for t in tweets {
        partitions.entry(t.drug).or_default().push(t.record);
    }
    let region = env.config.pick("region", a.region.clone(), "US".to_string())?;
    let cases_path = env.config.pick_opt("cases", a.cases.clone())?;
    let weekly = match &cases_path {
        Some(p) => {
            require(p)?;
            let table = CaseTable::load(p, &RegionFilter::parse(&region))?;
            Some(weekly_new_cases(&table))
        }
        None => {
            log::warn!("trend: no case file given; new_cases is 0 throughout");
            None
        }
    };
    let series = build_trend(&partitions, weekly.as_ref());
    if series.is_empty() {
        return Err(CliError::Contract("trend: nothing to plot (no tweets and no cases)".into()));
    }
    let svg = crate::charts::trend_svg(&series)?;
    let csv_path = env.path(TREND_CSV);
    write_with(&csv_path, |buf| series.write_csv(buf))?;
    let svg_path = env.path(TREND_SVG);
    write_text(&svg_path, &svg)?;

    let mut inputs = vec![input];
    inputs.extend(cases_path);
    Ok(Outcome { inputs, outputs: vec![csv_path, svg_path], ..Default::default() }.param("region", region))
}
