//! Three-class stance labels, drug-name masking, classifiers, COVID-CQ style
//! datasets and per-class evaluation.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TweetRecord;
use crate::lexicon::{DrugId, DrugLexicon, MASK_TOKEN};
use crate::sidecar::SidecarError;
use crate::text::{nfc, tokenize_nfc};

pub const BUNDLED_CUES: &str = include_str!("../data/stance_cues.csv");

#[derive(Debug, thiserror::Error)]
pub enum StanceError {
    #[error(transparent)]
    Sidecar(#[from] SidecarError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("{0}")]
    Contract(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StanceLabel {
    Negative,
    Neutral,
    Positive,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 3] = [StanceLabel::Negative, StanceLabel::Neutral, StanceLabel::Positive];

    pub fn numeric(self) -> i8 {
        match self {
            StanceLabel::Negative => -1,
            StanceLabel::Neutral => 0,
            StanceLabel::Positive => 1,
        }
    }

    /// Dataset code: 0 negative, 1 neutral, 2 positive.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn from_numeric(v: i8) -> Option<Self> {
        match v {
            -1 => Some(StanceLabel::Negative),
            0 => Some(StanceLabel::Neutral),
            1 => Some(StanceLabel::Positive),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::Negative => "negative",
            StanceLabel::Neutral => "neutral",
            StanceLabel::Positive => "positive",
        }
    }
}

impl fmt::Display for StanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StanceLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .or_else(|| s.parse::<i8>().ok().and_then(Self::from_numeric))
            .ok_or_else(|| format!("unknown stance '{s}'"))
    }
}

/// Replaces every maximal span of drug-keyword tokens with `[mask]`.
pub fn mask_drug_names(text: &str, lexicon: &DrugLexicon) -> String {
    let text = nfc(text);
    let toks = tokenize_nfc(&text);
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for hit in lexicon.matcher().hits(&toks) {
        match spans.last_mut() {
            Some(last) if hit.first <= last.1 => last.1 = last.1.max(hit.last),
            _ => spans.push((hit.first, hit.last)),
        }
    }
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for (first, last) in spans {
        out.push_str(&text[pos..toks[first].start]);
        out.push_str(MASK_TOKEN);
        pos = toks[last].end;
    }
    out.push_str(&text[pos..]);
    out
}

/// A stance classifier strategy.
pub trait StanceClassifier: Send + Sync {
    fn name(&self) -> &str;

    /// One label per text, in input order.
    fn classify(&self, texts: &[String]) -> Result<Vec<StanceLabel>, StanceError>;
}

/// Wraps a classifier so that drug names are masked before it sees the text.
pub struct Masked<C> {
    inner: C,
    lexicon: std::sync::Arc<DrugLexicon>,
    name: String,
}

impl<C: StanceClassifier> Masked<C> {
    pub fn new(inner: C, lexicon: impl Into<std::sync::Arc<DrugLexicon>>) -> Self {
        let name = format!("{}+mask", inner.name());
        Self { inner, lexicon: lexicon.into(), name }
    }
}

impl<C: StanceClassifier> StanceClassifier for Masked<C> {
    fn name(&self) -> &str {
        &self.name
    }

    fn classify(&self, texts: &[String]) -> Result<Vec<StanceLabel>, StanceError> {
        let masked: Vec<String> = texts.iter().map(|t| mask_drug_names(t, &self.lexicon)).collect();
        self.inner.classify(&masked)
    }
}

impl StanceClassifier for Box<dyn StanceClassifier> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn classify(&self, texts: &[String]) -> Result<Vec<StanceLabel>, StanceError> {
        (**self).classify(texts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

/// Cue-word scorer: +1 per positive cue, -1 per negative cue, sign flipped
/// when a negator occurs among the three preceding tokens. Positive sum is
/// Positive, negative sum is Negative, zero is Neutral.
#[derive(Debug, Clone)]
pub struct RuleBaseline {
    cues: HashMap<String, Polarity>,
}

pub const NEGATORS: [&str; 17] = [
    "not", "no", "never", "dont", "don", "doesn", "didn", "isn", "wasn", "aren", "won", "cannot",
    "cant", "nothing", "neither", "nor", "without",
];

const NEGATION_WINDOW: usize = 3;

impl RuleBaseline {
    pub fn bundled() -> Self {
        Self::from_csv_str(BUNDLED_CUES).expect("bundled cue table is valid")
    }

    pub fn from_csv_str(src: &str) -> Result<Self, StanceError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(src.as_bytes());
        let mut cues = HashMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| StanceError::Contract(e.to_string()))?;
            let row = rec.position().map_or(0, |p| p.line() as usize);
            let pol = match &rec[1] {
                "positive" => Polarity::Positive,
                "negative" => Polarity::Negative,
                other => {
                    return Err(StanceError::Row {
                        row,
                        message: format!("unknown polarity '{other}'"),
                    })
                }
            };
            cues.insert(rec[0].to_lowercase(), pol);
        }
        Ok(Self { cues })
    }

    /// Cue words of one polarity, sorted.
    pub fn cues(&self, polarity: Polarity) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .cues
            .iter()
            .filter(|(_, p)| **p == polarity)
            .map(|(c, _)| c.as_str())
            .collect();
        v.sort_unstable();
        v
    }

    pub fn is_cue(&self, word: &str) -> bool {
        self.cues.contains_key(word)
    }

    pub fn score(&self, text: &str) -> i32 {
        let words: Vec<String> = tokenize_nfc(&nfc(text)).into_iter().map(|t| t.norm).collect();
        let mut score = 0;
        for (i, w) in words.iter().enumerate() {
            let Some(pol) = self.cues.get(w) else { continue };
            let mut s = match pol {
                Polarity::Positive => 1,
                Polarity::Negative => -1,
            };
            let from = i.saturating_sub(NEGATION_WINDOW);
            if words[from..i].iter().any(|p| NEGATORS.contains(&p.as_str())) {
                s = -s;
            }
            score += s;
        }
        score
    }

    pub fn label(&self, text: &str) -> StanceLabel {
        match self.score(text) {
            s if s > 0 => StanceLabel::Positive,
            s if s < 0 => StanceLabel::Negative,
            _ => StanceLabel::Neutral,
        }
    }
}

impl StanceClassifier for RuleBaseline {
    fn name(&self) -> &str {
        "rule"
    }

    fn classify(&self, texts: &[String]) -> Result<Vec<StanceLabel>, StanceError> {
        use rayon::prelude::*;
        Ok(texts.par_iter().map(|t| self.label(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StanceItem {
    pub text: String,
    pub gold: StanceLabel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StanceDataset {
    pub items: Vec<StanceItem>,
}

impl StanceDataset {
    pub fn class_counts(&self) -> BTreeMap<StanceLabel, usize> {
        let mut m: BTreeMap<StanceLabel, usize> = StanceLabel::ALL.iter().map(|l| (*l, 0)).collect();
        for it in &self.items {
            *m.get_mut(&it.gold).expect("all labels") += 1;
        }
        m
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Reads `text,label` rows (label 0/1/2); extra columns are ignored.
    pub fn from_csv<R: Read>(r: R) -> Result<Self, StanceError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr
            .headers()
            .map_err(|e| StanceError::Row { row: 1, message: e.to_string() })?
            .clone();
        let col = |name: &str| {
            headers.iter().position(|h| h.trim() == name).ok_or_else(|| StanceError::Row {
                row: 1,
                message: format!("missing column '{name}'"),
            })
        };
        let (ti, li) = (col("text")?, col("label")?);
        let mut items = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| StanceError::Row {
                row: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let row = rec.position().map_or(0, |p| p.line() as usize);
            let raw = rec.get(li).unwrap_or("").trim();
            let gold = raw
                .parse::<u8>()
                .ok()
                .and_then(StanceLabel::from_code)
                .ok_or_else(|| StanceError::Row {
                    row,
                    message: format!("unknown label code '{raw}'"),
                })?;
            items.push(StanceItem {
                text: rec.get(ti).unwrap_or("").to_owned(),
                gold,
            });
        }
        Ok(Self { items })
    }

    /// Seeded shuffle, then the first `round(0.7 n)` items train.
    pub fn split(mut self, seed: u64) -> (StanceDataset, StanceDataset) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.items.shuffle(&mut rng);
        let n_train = (7 * self.items.len() + 5) / 10;
        let valid = self.items.split_off(n_train);
        (self, StanceDataset { items: valid })
    }
}

pub fn load_stance_dataset(path: &Path, seed: u64) -> Result<(StanceDataset, StanceDataset), StanceError> {
    let f = std::fs::File::open(path).map_err(|source| StanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(StanceDataset::from_csv(f)?.split(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// `confusion[gold][pred]`.
    pub confusion: [[u64; 3]; 3],
    pub per_class: [ClassScores; 3],
    pub macro_avg: ClassScores,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl MetricsRow {
    pub fn from_confusion(confusion: [[u64; 3]; 3]) -> Self {
        let total: u64 = confusion.iter().flatten().sum();
        let mut per_class = [ClassScores::default(); 3];
        for (c, scores) in per_class.iter_mut().enumerate() {
            let tp = confusion[c][c];
            let predicted: u64 = (0..3).map(|g| confusion[g][c]).sum();
            let support: u64 = confusion[c].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            *scores = ClassScores {
                precision,
                recall,
                f1: harmonic(precision, recall),
                support,
            };
        }
        let mean = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / 3.0;
        let macro_avg = ClassScores {
            precision: mean(|s| s.precision),
            recall: mean(|s| s.recall),
            f1: mean(|s| s.f1),
            support: total,
        };
        let trace: u64 = (0..3).map(|c| confusion[c][c]).sum();
        Self {
            confusion,
            per_class,
            macro_avg,
            accuracy: ratio(trace, total),
        }
    }
}

pub fn evaluate(pred: &[StanceLabel], gold: &[StanceLabel]) -> Result<MetricsRow, StanceError> {
    if pred.len() != gold.len() {
        return Err(StanceError::Contract(format!(
            "{} predictions for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if pred.is_empty() {
        return Err(StanceError::Contract("nothing to evaluate".into()));
    }
    let mut confusion = [[0u64; 3]; 3];
    for (p, g) in pred.iter().zip(gold) {
        confusion[g.code() as usize][p.code() as usize] += 1;
    }
    Ok(MetricsRow::from_confusion(confusion))
}

/// Writes one row per drug and scope (each class plus `macro`).
pub fn write_metrics_csv<W: Write>(
    rows: &BTreeMap<(DrugId, String), MetricsRow>,
    w: W,
) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["drug", "model", "scope", "precision", "recall", "f1", "accuracy", "n"])?;
    for ((drug, model), m) in rows {
        let scopes = StanceLabel::ALL
            .iter()
            .map(|l| (l.as_str(), &m.per_class[l.code() as usize]))
            .chain(std::iter::once(("macro", &m.macro_avg)));
        for (scope, s) in scopes {
            out.write_record([
                drug.as_str(),
                model,
                scope,
                &s.precision.to_string(),
                &s.recall.to_string(),
                &s.f1.to_string(),
                &m.accuracy.to_string(),
                &s.support.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Seeded per-drug sample of at most `n` tweets, for manual annotation.
pub fn sample_per_drug<'a>(
    partitions: &'a BTreeMap<DrugId, Vec<TweetRecord>>,
    n: usize,
    seed: u64,
) -> BTreeMap<DrugId, Vec<&'a TweetRecord>> {
    partitions
        .iter()
        .map(|(drug, recs)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (*drug as u64).wrapping_mul(0x9E37_79B9));
            let mut idx: Vec<usize> = (0..recs.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(n);
            (*drug, idx.into_iter().map(|i| &recs[i]).collect())
        })
        .collect()
}
