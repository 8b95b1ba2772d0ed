use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use pulse_core::content::{
    entity_frequencies, kmeans, pca_fit_transform, representatives, representatives_in, EmbeddingMatrix,
    EmbeddingProvider, KMeansConfig, DEFAULT_CLUSTERS, DEFAULT_MAX_ITER, DEFAULT_PCA_DIM, DEFAULT_REPRESENTATIVES,
};
use pulse_core::lexicon::{DrugId, TaggedTweet};
use pulse_core::registry::{embedding_providers, entity_taggers};
use pulse_core::stance::StanceLabel;
use pulse_core::timeline::{wave_of, WaveId};

use super::stance::read_stance_csv;
use super::{Env, Outcome, CLUSTERS, ENTITIES, PCA, REPRESENTATIVES, STANCE, US_TWEETS};
use crate::error::CliError;
use crate::io::{read_jsonl, write_csv};

#[derive(Debug, Clone, Default, clap::Args)]
pub struct ClusterArgs {
    /// Embedding strategy: `baseline` or `sidecar`.
    #[arg(long)]
    pub embedder: Option<String>,
    /// Target PCA dimension, capped by slice size (default 30).
    #[arg(long)]
    pub pca_dim: Option<usize>,
    /// Clusters per slice (default 15).
    #[arg(long)]
    pub k: Option<usize>,
    /// Representatives listed per cluster.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Lloyd iteration cap (default 300).
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// `drug-stance-wave` (default) or `drug-stance`.
    #[arg(long)]
    pub slice: Option<String>,
    /// Second embedding strategy used only to rank representatives.
    #[arg(long)]
    pub rep_embedder: Option<String>,
    /// Binary embedding cache; reused when its shape matches.
    #[arg(long)]
    pub embedding_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct NerArgs {
    /// Tagger strategy: `heuristic` or `sidecar`.
    #[arg(long)]
    pub tagger: Option<String>,
    /// Terms kept per (drug, wave, class); all by default.
    #[arg(long)]
    pub top: Option<usize>,
}

fn wave_label(w: Option<WaveId>) -> String {
    w.map_or_else(|| "all".to_string(), |w| w.to_string())
}

fn embed_all(
    env: &Env,
    name: &str,
    texts: &[String],
    cache: Option<&PathBuf>,
) -> Result<EmbeddingMatrix, CliError> {
    let provider = embedding_providers().build(name, &env.strategy_ctx(name == "sidecar", false)?)?;
    if let Some(path) = cache.filter(|p| p.is_file()) {
        match EmbeddingMatrix::load(path) {
            Ok(m) if m.rows() == texts.len() && m.dim() == provider.dim() => {
                log::info!("cluster: reusing embedding cache {}", path.display());
                return Ok(m);
            }
            Ok(_) => log::warn!("cluster: cache {} has a different shape; recomputing", path.display()),
            Err(e) => log::warn!("cluster: cache {} unreadable ({e}); recomputing", path.display()),
        }
    }
    let m = provider.embed(texts)?;
    if let Some(path) = cache {
        crate::io::write_with(path, |buf| m.write_cache(buf))?;
    }
    Ok(m)
}

type SliceKey = (DrugId, StanceLabel, Option<WaveId>);

pub fn cluster(env: &Env, a: &ClusterArgs) -> Result<Outcome, CliError> {
    let stance_path = env.path(STANCE);
    let stances = read_stance_csv(&stance_path)?;
    let tweets_path = env.path(US_TWEETS);
    let tweets: Vec<TaggedTweet> = read_jsonl(&tweets_path)?;

    let cfg = &env.config;
    let embedder = cfg.pick("embedder", a.embedder.clone(), "baseline".to_string())?;
    let rep_embedder = cfg.pick_opt("rep_embedder", a.rep_embedder.clone())?;
    let pca_dim = cfg.pick("pca_dim", a.pca_dim, DEFAULT_PCA_DIM)?;
    let k = cfg.pick("k", a.k, DEFAULT_CLUSTERS)?;
    let reps = cfg.pick("reps", a.reps, DEFAULT_REPRESENTATIVES)?;
    let max_iter = cfg.pick("max_iter", a.max_iter, DEFAULT_MAX_ITER)?;
    let slice = cfg.pick("slice", a.slice.clone(), "drug-stance-wave".to_string())?;
    let by_wave = match slice.as_str() {
        "drug-stance-wave" => true,
        "drug-stance" => false,
        other => return Err(CliError::Contract(format!("unknown slice mode '{other}'"))),
    };
    let cache = cfg.pick_opt("embedding_cache", a.embedding_cache.clone())?;
    if pca_dim == 0 || k == 0 {
        return Err(CliError::Contract("pca-dim and k must be positive".into()));
    }

    let label_of: HashMap<&str, StanceLabel> = stances.iter().map(|s| (s.tweet_id.as_str(), s.label)).collect();
    let mut slices: BTreeMap<SliceKey, Vec<usize>> = BTreeMap::new();
    for (i, t) in tweets.iter().enumerate() {
        let Some(&label) = label_of.get(t.record.id.as_str()) else {
            return Err(CliError::Contract(format!("tweet {} has no stance in {}", t.record.id, stance_path.display())));
        };
        let wave = if by_wave { Some(wave_of(t.record.created_at.date_naive())?) } else { None };
        slices.entry((t.drug, label, wave)).or_default().push(i);
    }

    let texts: Vec<String> = tweets.iter().map(|t| t.record.text.clone()).collect();
    let x = embed_all(env, &embedder, &texts, cache.as_ref())?;
    let second = match &rep_embedder {
        Some(name) => Some(embed_all(env, name, &texts, None)?),
        None => None,
    };

    let mut cluster_rows: Vec<[String; 6]> = Vec::new();
    let mut rep_rows: Vec<[String; 8]> = Vec::new();
    let mut pca_rows: Vec<[String; 10]> = Vec::new();
    for ((drug, label, wave), idx) in &slices {
        let n = idx.len();
        if n < 2 {
            log::warn!("cluster: slice {drug}/{label}/{} has {n} tweet(s); skipped", wave_label(*wave));
            continue;
        }
        let sub = x.select(idx);
        let r = pca_dim.min(n - 1).min(sub.dim());
        let (model, y) = pca_fit_transform(&sub, r)?;
        let kk = k.min(n);
        let km = kmeans(&y, &KMeansConfig { k: kk, seed: env.seed, max_iter })?;
        let (d, l, w) = (drug.as_str().to_string(), label.as_str().to_string(), wave_label(*wave));
        for (row, &i) in idx.iter().enumerate() {
            cluster_rows.push([
                tweets[i].record.id.clone(),
                d.clone(),
                l.clone(),
                w.clone(),
                km.assignments[row].to_string(),
                format!("{}", km.distance(&y, row)),
            ]);
        }
        let second_sub = second.as_ref().map(|s| s.select(idx));
        for c in 0..km.k() {
            let ranked = match &second_sub {
                Some(s) => representatives_in(s, &km, c, reps)?,
                None => representatives(&y, &km, c, reps),
            };
            for (rank, &row) in ranked.iter().enumerate() {
                let rec = &tweets[idx[row]].record;
                rep_rows.push([
                    d.clone(),
                    l.clone(),
                    w.clone(),
                    c.to_string(),
                    (rank + 1).to_string(),
                    rec.id.clone(),
                    format!("{}", km.distance(&y, row)),
                    rec.text.clone(),
                ]);
            }
        }
        pca_rows.push([
            d,
            l,
            w,
            n.to_string(),
            r.to_string(),
            format!("{}", model.explained()),
            model.degenerate.to_string(),
            kk.to_string(),
            format!("{}", km.objective),
            km.iterations.to_string(),
        ]);
    }

    let clusters = env.path(CLUSTERS);
    write_csv(&clusters, |w| {
        w.write_record(["tweet_id", "drug", "stance", "wave", "cluster", "dist_to_centroid"])?;
        cluster_rows.iter().try_for_each(|r| w.write_record(r))
    })?;
    let reps_path = env.path(REPRESENTATIVES);
    write_csv(&reps_path, |w| {
        w.write_record(["drug", "stance", "wave", "cluster", "rank", "tweet_id", "dist_to_centroid", "text"])?;
        rep_rows.iter().try_for_each(|r| w.write_record(r))
    })?;
    let pca_path = env.path(PCA);
    write_csv(&pca_path, |w| {
        w.write_record([
            "drug", "stance", "wave", "n", "components", "explained", "degenerate", "k", "objective", "iterations",
        ])?;
        pca_rows.iter().try_for_each(|r| w.write_record(r))
    })?;

    let mut outputs = vec![clusters, reps_path, pca_path];
    outputs.extend(cache);
    Ok(Outcome { inputs: vec![stance_path, tweets_path], outputs, ..Default::default() }
        .param("embedder", embedder)
        .param("rep_embedder", rep_embedder.unwrap_or_default())
        .param("pca_dim", pca_dim)
        .param("k", k)
        .param("reps", reps)
        .param("max_iter", max_iter)
        .param("slice", slice)
        .param("seed", env.seed))
}

pub fn ner(env: &Env, a: &NerArgs) -> Result<Outcome, CliError> {
    let input = env.path(US_TWEETS);
    let tweets: Vec<TaggedTweet> = read_jsonl(&input)?;
    let name = env.config.pick("tagger", a.tagger.clone(), "heuristic".to_string())?;
    let top = env.config.pick_opt("top", a.top)?;
    let tagger = entity_taggers().build(&name, &env.strategy_ctx(name == "sidecar", false)?)?;
    let texts: Vec<String> = tweets.iter().map(|t| t.record.text.clone()).collect();
    let mentions = tagger.tag(&texts)?;
    if mentions.len() != tweets.len() {
        return Err(CliError::Contract(format!("tagger returned {} rows for {} tweets", mentions.len(), tweets.len())));
    }
    let waves = tweets
        .iter()
        .map(|t| wave_of(t.record.created_at.date_naive()))
        .collect::<Result<Vec<_>, _>>()?;
    let table = entity_frequencies(
        tweets
            .iter()
            .zip(&waves)
            .zip(&mentions)
            .flat_map(|((t, w), ms)| ms.iter().map(move |m| (t.drug, *w, m))),
        top,
    );
    let out = env.path(ENTITIES);
    write_csv(&out, |w| {
        w.write_record(["drug", "wave", "class", "term", "count"])?;
        for ((drug, wave, class), terms) in &table {
            for t in terms {
                w.write_record([drug.as_str(), &wave.to_string(), class.as_str(), &t.term, &t.count.to_string()])?;
            }
        }
        Ok(())
    })?;
    Ok(Outcome { inputs: vec![input], outputs: vec![out], ..Default::default() }
        .param("tagger", name)
        .param("top", top.map_or_else(|| "all".to_string(), |t| t.to_string())))
}
