//! Pipeline stages. Each stage reads named files from the work directory,
//! writes its outputs atomically and reports what it touched for the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use pulse_core::lexicon::DrugLexicon;
use pulse_core::registry::StrategyContext;
use pulse_core::sidecar::SidecarClient;

use crate::config::Config;
use crate::error::CliError;
use crate::manifest::{RunManifest, StageRecord};

mod analysis;
mod content;
mod prep;
mod stance;

pub use analysis::{demo, report, stats, DemoArgs, StatsArgs};
pub use content::{cluster, ner, ClusterArgs, NerArgs};
pub use prep::{geo, ingest, match_drugs, trend, GeoArgs, IngestArgs, MatchArgs, TrendArgs};
pub use stance::{evaluate, sample_eval, stance, EvaluateArgs, SampleEvalArgs, StanceArgs};

pub const CORPUS: &str = "corpus.jsonl";
pub const REJECTIONS: &str = "rejections.csv";
pub const DRUG_TWEETS: &str = "drug_tweets.jsonl";
pub const MATCH_SUMMARY: &str = "match_summary.csv";
pub const EXCLUDED_MULTI: &str = "excluded_multi.csv";
pub const GEO: &str = "geo.csv";
pub const US_TWEETS: &str = "us_tweets.jsonl";
pub const STANCE: &str = "stance.csv";
pub const TREND_CSV: &str = "trend.csv";
pub const TREND_SVG: &str = "trend.svg";
pub const CLUSTERS: &str = "clusters.csv";
pub const REPRESENTATIVES: &str = "representatives.csv";
pub const PCA: &str = "pca.csv";
pub const PROFILES: &str = "profiles.csv";
pub const CHISQ: &str = "chisq.csv";
pub const CONTINGENCY: &str = "contingency.csv";
pub const STATE_STANCE: &str = "state_stance.csv";
pub const ENTITIES: &str = "entities.csv";
pub const SHARES_CSV: &str = "stance_shares.csv";
pub const SHARES_SVG: &str = "stance_shares.svg";
pub const STATE_MAP: &str = "state_map.svg";
pub const SAMPLE: &str = "sample.csv";
pub const SAMPLE_METRICS: &str = "sample_metrics.csv";
pub const METRICS: &str = "metrics.csv";

pub const DEFAULT_SEED: u64 = 0;

/// Settings shared by every stage.
pub struct Env {
    pub work: PathBuf,
    pub config: Config,
    pub seed: u64,
    pub sidecar_cmd: Option<String>,
}

impl Env {
    pub fn path(&self, name: &str) -> PathBuf {
        self.work.join(name)
    }

    pub fn lexicon(&self) -> Result<DrugLexicon, CliError> {
        match self.config.get("lexicon") {
            Some(p) => Ok(DrugLexicon::load(Path::new(p))?),
            None => Ok(DrugLexicon::bundled()),
        }
    }

    /// Strategy inputs; the sidecar is only started when `needs_sidecar` is set.
    pub fn strategy_ctx(&self, needs_sidecar: bool, masking: bool) -> Result<StrategyContext, CliError> {
        let sidecar = match (&self.sidecar_cmd, needs_sidecar) {
            (Some(cmd), true) => Some(Arc::new(SidecarClient::spawn(cmd)?)),
            _ => None,
        };
        Ok(StrategyContext {
            sidecar,
            lexicon: Some(Arc::new(self.lexicon()?)),
            masking,
            embed_dim: None,
        })
    }
}

/// What a stage did, before hashing.
#[derive(Debug, Default)]
pub struct Outcome {
    pub params: BTreeMap<String, String>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Outcome {
    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }
}

/// `on`/`off` style switches, as accepted on the command line and in config files.
pub fn parse_switch(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        other => Err(format!("expected on or off, found '{other}'")),
    }
}

fn manifest_key(work: &Path, p: &Path) -> String {
    p.strip_prefix(work).unwrap_or(p).display().to_string()
}

fn digests(work: &Path, paths: &[PathBuf]) -> Result<BTreeMap<String, String>, CliError> {
    paths
        .iter()
        .map(|p| Ok((manifest_key(work, p), crate::io::sha256_file(p)?)))
        .collect()
}

/// Runs one stage, then records it in the manifest and saves the manifest.
pub fn record<F>(env: &Env, manifest: &mut RunManifest, manifest_path: &Path, name: &str, stage: F) -> Result<(), CliError>
where
    F: FnOnce(&Env) -> Result<Outcome, CliError>,
{
    let t0 = Instant::now();
    log::info!("stage {name}: start");
    let out = stage(env)?;
    let seconds = t0.elapsed().as_secs_f64();
    log::info!("stage {name}: done in {seconds:.3}s");
    manifest.seeds.insert("seed".into(), env.seed);
    manifest.stages.insert(
        name.to_string(),
        StageRecord {
            params: out.params,
            inputs: digests(&env.work, &out.inputs)?,
            outputs: digests(&env.work, &out.outputs)?,
            seconds,
        },
    );
    manifest.save(manifest_path)
}
