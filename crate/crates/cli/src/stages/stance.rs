use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pulse_core::corpus::TweetRecord;
use pulse_core::lexicon::{DrugId, TaggedTweet};
use pulse_core::registry::stance_classifiers;
use pulse_core::stance::{evaluate as score, load_stance_dataset, sample_per_drug, write_metrics_csv, StanceClassifier, StanceLabel};

use super::{parse_switch, Env, Outcome, DRUG_TWEETS, METRICS, SAMPLE, SAMPLE_METRICS, STANCE, US_TWEETS};
use crate::error::CliError;
use crate::io::{csv_reader, read_jsonl, require, write_csv, write_with};

#[derive(Debug, Clone, Default, clap::Args)]
pub struct StanceArgs {
    /// Classifier strategy: `rule` or `sidecar`.
    #[arg(long)]
    pub classifier: Option<String>,
    /// Replace drug names with `[mask]` before classifying (`on`/`off`).
    #[arg(long, value_parser = parse_switch)]
    pub mask: Option<bool>,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct SampleEvalArgs {
    /// Tweets sampled per drug.
    #[arg(long)]
    pub n: Option<usize>,
    /// Annotated sample (`drug,tweet_id,text,label`); when given, the sample is scored instead of drawn.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub model: StanceArgs,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct EvaluateArgs {
    /// Labelled dataset per drug as `DRUG=PATH` (`text,label` with label codes 0/1/2).
    #[arg(long, num_args = 1.., required = true, value_parser = parse_labelled)]
    pub labels: Vec<(DrugId, PathBuf)>,
    #[command(flatten)]
    pub model: StanceArgs,
}

fn parse_labelled(s: &str) -> Result<(DrugId, PathBuf), String> {
    let (d, p) = s.split_once('=').ok_or_else(|| format!("expected DRUG=PATH, found '{s}'"))?;
    Ok((d.parse()?, PathBuf::from(p)))
}

/// One line of `stance.csv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StanceRow {
    pub tweet_id: String,
    pub drug: DrugId,
    pub label: StanceLabel,
}

pub fn read_stance_csv(path: &Path) -> Result<Vec<StanceRow>, CliError> {
    let mut rdr = csv_reader(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| CliError::Contract(format!("{} row {}: {m}", path.display(), i + 2));
        if rec.len() < 3 {
            return Err(bad("expected tweet_id,drug,label".into()));
        }
        out.push(StanceRow {
            tweet_id: rec[0].to_string(),
            drug: rec[1].parse().map_err(bad)?,
            label: rec[2].parse().map_err(bad)?,
        });
    }
    Ok(out)
}

fn build_classifier(env: &Env, a: &StanceArgs) -> Result<(Box<dyn StanceClassifier>, String, bool), CliError> {
    let name = env.config.pick("classifier", a.classifier.clone(), "rule".to_string())?;
    let mask = match a.mask {
        Some(m) => m,
        None => env.config.get("mask").map(parse_switch).transpose().map_err(CliError::Contract)?.unwrap_or(false),
    };
    let ctx = env.strategy_ctx(name == "sidecar", mask)?;
    Ok((stance_classifiers().build(&name, &ctx)?, name, mask))
}

pub fn stance(env: &Env, a: &StanceArgs) -> Result<Outcome, CliError> {
    let input = env.path(US_TWEETS);
    let tweets: Vec<TaggedTweet> = read_jsonl(&input)?;
    let (clf, name, mask) = build_classifier(env, a)?;
    let texts: Vec<String> = tweets.iter().map(|t| t.record.text.clone()).collect();
    let labels = clf.classify(&texts)?;
    if labels.len() != tweets.len() {
        return Err(CliError::Contract(format!("classifier returned {} labels for {} tweets", labels.len(), tweets.len())));
    }
    let out = env.path(STANCE);
    write_csv(&out, |w| {
        w.write_record(["tweet_id", "drug", "label", "numeric"])?;
        for (t, l) in tweets.iter().zip(&labels) {
            w.write_record([t.record.id.as_str(), t.drug.as_str(), l.as_str(), &l.numeric().to_string()])?;
        }
        Ok(())
    })?;
    Ok(Outcome { inputs: vec![input], outputs: vec![out], ..Default::default() }
        .param("classifier", clf.name())
        .param("strategy", name)
        .param("mask", if mask { "on" } else { "off" }))
}

pub fn sample_eval(env: &Env, a: &SampleEvalArgs) -> Result<Outcome, CliError> {
    match &a.labels {
        None => draw_sample(env, a),
        Some(path) => score_sample(env, a, path),
    }
}

fn draw_sample(env: &Env, a: &SampleEvalArgs) -> Result<Outcome, CliError> {
    let input = env.path(DRUG_TWEETS);
    let tweets: Vec<TaggedTweet> = read_jsonl(&input)?;
    let n = env.config.pick("sample_n", a.n, 100)?;
    let mut partitions: BTreeMap<DrugId, Vec<TweetRecord>> = BTreeMap::new();
    for t in tweets {
        partitions.entry(t.drug).or_default().push(t.record);
    }
    let sample = sample_per_drug(&partitions, n, env.seed);
    let out = env.path(SAMPLE);
    write_csv(&out, |w| {
        w.write_record(["drug", "tweet_id", "text", "label"])?;
        for (drug, recs) in &sample {
            for r in recs {
                w.write_record([drug.as_str(), r.id.as_str(), r.text.as_str(), ""])?;
            }
        }
        Ok(())
    })?;
    Ok(Outcome { inputs: vec![input], outputs: vec![out], ..Default::default() }
        .param("n", n)
        .param("seed", env.seed))
}

fn score_sample(env: &Env, a: &SampleEvalArgs, path: &Path) -> Result<Outcome, CliError> {
    let mut rdr = csv_reader(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Contract(format!("{}: missing column '{name}'", path.display())))
    };
    let (di, ti, li) = (col("drug")?, col("text")?, col("label")?);
    let mut by_drug: BTreeMap<DrugId, (Vec<String>, Vec<StanceLabel>)> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |m: String| CliError::Contract(format!("{} row {}: {m}", path.display(), i + 2));
        let raw = rec.get(li).unwrap_or("").trim();
        if raw.is_empty() {
            continue;
        }
        let gold: StanceLabel = raw.parse().map_err(bad)?;
        let drug: DrugId = rec.get(di).unwrap_or("").parse().map_err(bad)?;
        let slot = by_drug.entry(drug).or_default();
        slot.0.push(rec.get(ti).unwrap_or("").to_string());
        slot.1.push(gold);
    }
    if by_drug.is_empty() {
        return Err(CliError::Contract(format!("{}: no labelled rows", path.display())));
    }
    let (clf, _, _) = build_classifier(env, &a.model)?;
    let mut rows = BTreeMap::new();
    for (drug, (texts, gold)) in by_drug {
        let pred = clf.classify(&texts)?;
        rows.insert((drug, clf.name().to_string()), score(&pred, &gold)?);
    }
    let out = env.path(SAMPLE_METRICS);
    write_with(&out, |buf| write_metrics_csv(&rows, buf))?;
    Ok(Outcome { inputs: vec![path.to_path_buf()], outputs: vec![out], ..Default::default() }.param("classifier", clf.name()))
}

/// Scores the classifier on the held-out 30% of each labelled dataset.
pub fn evaluate(env: &Env, a: &EvaluateArgs) -> Result<Outcome, CliError> {
    let (clf, _, _) = build_classifier(env, &a.model)?;
    let mut rows = BTreeMap::new();
    let mut inputs = Vec::new();
    for (drug, path) in &a.labels {
        require(path)?;
        let (_, valid) = load_stance_dataset(path, env.seed)?;
        if valid.is_empty() {
            return Err(CliError::Contract(format!("{}: validation split is empty", path.display())));
        }
        let texts: Vec<String> = valid.items.iter().map(|i| i.text.clone()).collect();
        let gold: Vec<StanceLabel> = valid.items.iter().map(|i| i.gold).collect();
        let pred = clf.classify(&texts)?;
        rows.insert((*drug, clf.name().to_string()), score(&pred, &gold)?);
        inputs.push(path.clone());
    }
    let out = env.path(METRICS);
    write_with(&out, |buf| write_metrics_csv(&rows, buf))?;
    Ok(Outcome { inputs, outputs: vec![out], ..Default::default() }
        .param("classifier", clf.name())
        .param("split_seed", env.seed))
}
