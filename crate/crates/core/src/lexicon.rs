//! Drug keyword lexicon and the boundary-guarded keyword matcher.
//!
//! Matching works on alphanumeric tokens of the NFC-normalised, lowercased
//! text, so whitespace, punctuation, emoji and the text edges all count as
//! boundaries. A keyword may span several tokens (`merck's pill` is the token
//! sequence `merck s pill`).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::TweetRecord;
use crate::text::{nfc, tokenize_nfc, Token};

pub const BUNDLED_DRUG_LEXICON: &str = include_str!("../data/drug_lexicon.csv");

/// The replacement token used when drug names are masked.
pub const MASK_TOKEN: &str = "[mask]";

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("lexicon is empty")]
    Empty,
    #[error("lexicon has no keywords for {0}")]
    MissingDrug(DrugId),
    #[error("pattern '{pattern_a}' ({drug_a}) overlaps pattern '{pattern_b}' ({drug_b})")]
    CrossDrug {
        drug_a: DrugId,
        pattern_a: String,
        drug_b: DrugId,
        pattern_b: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrugId {
    Hydroxychloroquine,
    Ivermectin,
    Molnupiravir,
    Remdesivir,
}

impl DrugId {
    pub const ALL: [DrugId; 4] = [
        DrugId::Hydroxychloroquine,
        DrugId::Ivermectin,
        DrugId::Molnupiravir,
        DrugId::Remdesivir,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DrugId::Hydroxychloroquine => "hydroxychloroquine",
            DrugId::Ivermectin => "ivermectin",
            DrugId::Molnupiravir => "molnupiravir",
            DrugId::Remdesivir => "remdesivir",
        }
    }
}

impl fmt::Display for DrugId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DrugId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        DrugId::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown drug '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryMode {
    /// Guarded on the left; the final token may continue (`hydroxych` matches `hydroxychloroquine`).
    TokenPrefix,
    /// A single whole token.
    ExactToken,
    /// A whole token sequence, guarded on both sides.
    SpaceGuard,
}

impl BoundaryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryMode::TokenPrefix => "token-prefix",
            BoundaryMode::ExactToken => "exact-token",
            BoundaryMode::SpaceGuard => "space-guard",
        }
    }
}

impl FromStr for BoundaryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "token-prefix" | "prefix" => Ok(BoundaryMode::TokenPrefix),
            "exact-token" | "exact" => Ok(BoundaryMode::ExactToken),
            "space-guard" | "substring-with-space-guard" | "guard" => Ok(BoundaryMode::SpaceGuard),
            other => Err(format!("unknown boundary mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Keyword {
    /// Normalised pattern text: lowercase tokens joined by single spaces.
    pub pattern: String,
    pub tokens: Vec<String>,
    pub mode: BoundaryMode,
}

impl Keyword {
    pub fn new(raw: &str, mode: BoundaryMode) -> Result<Self, String> {
        let tokens: Vec<String> = tokenize_nfc(&nfc(raw)).into_iter().map(|t| t.norm).collect();
        if tokens.is_empty() {
            return Err(format!("pattern '{raw}' has no alphanumeric content"));
        }
        if mode == BoundaryMode::ExactToken && tokens.len() > 1 {
            return Err(format!("exact-token pattern '{raw}' spans several tokens"));
        }
        Ok(Self {
            pattern: tokens.join(" "),
            tokens,
            mode,
        })
    }

    fn matches_at(&self, toks: &[Token], i: usize) -> bool {
        let n = self.tokens.len();
        if i + n > toks.len() {
            return false;
        }
        let (last, init) = self.tokens.split_last().expect("non-empty");
        if init.iter().zip(&toks[i..]).any(|(p, t)| *p != t.norm) {
            return false;
        }
        let tail = &toks[i + n - 1].norm;
        match self.mode {
            BoundaryMode::TokenPrefix => tail.starts_with(last.as_str()),
            BoundaryMode::ExactToken | BoundaryMode::SpaceGuard => tail == last,
        }
    }
}

/// A keyword hit covering tokens `first..=last`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hit<L> {
    pub label: L,
    pub first: usize,
    pub last: usize,
}

/// Labelled keyword set with an index on the first token.
#[derive(Debug, Clone)]
pub struct KeywordMatcher<L> {
    keywords: Vec<(L, Keyword)>,
    by_first: HashMap<String, Vec<usize>>,
    /// Single-token prefix keywords, checked with `starts_with`.
    prefixes: Vec<usize>,
}

impl<L: Copy> KeywordMatcher<L> {
    pub fn new(keywords: Vec<(L, Keyword)>) -> Self {
        let mut by_first: HashMap<String, Vec<usize>> = HashMap::new();
        let mut prefixes = Vec::new();
        for (i, (_, kw)) in keywords.iter().enumerate() {
            if kw.mode == BoundaryMode::TokenPrefix && kw.tokens.len() == 1 {
                prefixes.push(i);
            } else {
                by_first.entry(kw.tokens[0].clone()).or_default().push(i);
            }
        }
        Self {
            keywords,
            by_first,
            prefixes,
        }
    }

    pub fn keywords(&self) -> impl Iterator<Item = (L, &Keyword)> {
        self.keywords.iter().map(|(l, k)| (*l, k))
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    /// All hits over an already tokenised text, ordered by start token.
    pub fn hits(&self, toks: &[Token]) -> Vec<Hit<L>> {
        let mut out = Vec::new();
        for (i, tok) in toks.iter().enumerate() {
            let indexed = self.by_first.get(&tok.norm).into_iter().flatten();
            for &k in indexed.chain(self.prefixes.iter()) {
                let (label, kw) = &self.keywords[k];
                if kw.matches_at(toks, i) {
                    out.push(Hit {
                        label: *label,
                        first: i,
                        last: i + kw.tokens.len() - 1,
                    });
                }
            }
        }
        out
    }

    pub fn is_match(&self, text: &str) -> bool {
        !self.hits(&tokenize_nfc(&nfc(text))).is_empty()
    }
}

fn read_source(path: &Path) -> Result<String, LexiconError> {
    let mut buf = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut buf))
        .map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
    Ok(buf)
}

fn csv_rows(src: &str, columns: &[&str]) -> Result<Vec<(usize, Vec<String>)>, LexiconError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(src.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| LexiconError::Row { row: 1, message: e.to_string() })?
        .clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers.iter().position(|h| h == *c).ok_or_else(|| LexiconError::Row {
                row: 1,
                message: format!("missing column '{c}'"),
            })
        })
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| LexiconError::Row {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        out.push((row, idx.iter().map(|&i| rec.get(i).unwrap_or("").to_owned()).collect()));
    }
    Ok(out)
}

/// Per-drug keyword sets.
#[derive(Debug, Clone)]
pub struct DrugLexicon {
    matcher: KeywordMatcher<DrugId>,
}

impl DrugLexicon {
    pub fn bundled() -> Self {
        Self::from_csv_str(BUNDLED_DRUG_LEXICON).expect("bundled lexicon is valid")
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        Self::from_csv_str(&read_source(path)?)
    }

    /// Parses `drug,pattern,boundary_mode` rows and validates the result.
    pub fn from_csv_str(src: &str) -> Result<Self, LexiconError> {
        let mut keywords: Vec<(DrugId, Keyword)> = Vec::new();
        for (row, cols) in csv_rows(src, &["drug", "pattern", "boundary_mode"])? {
            let bad = |message: String| LexiconError::Row { row, message };
            let drug: DrugId = cols[0].parse().map_err(bad)?;
            let mode: BoundaryMode = cols[2].parse().map_err(bad)?;
            let kw = Keyword::new(&cols[1], mode).map_err(bad)?;
            if kw.matches_at(&tokenize_nfc(MASK_TOKEN), 0) {
                return Err(bad(format!("pattern '{}' would match the mask token", kw.pattern)));
            }
            if !keywords.iter().any(|(d, k)| *d == drug && *k == kw) {
                keywords.push((drug, kw));
            }
        }
        Self::from_keywords(keywords)
    }

    pub fn from_keywords(keywords: Vec<(DrugId, Keyword)>) -> Result<Self, LexiconError> {
        if keywords.is_empty() {
            return Err(LexiconError::Empty);
        }
        for drug in DrugId::ALL {
            if !keywords.iter().any(|(d, _)| *d == drug) {
                return Err(LexiconError::MissingDrug(drug));
            }
        }
        for (da, ka) in &keywords {
            for (db, kb) in &keywords {
                if da != db && ka.pattern.starts_with(kb.pattern.as_str()) {
                    return Err(LexiconError::CrossDrug {
                        drug_a: *db,
                        pattern_a: kb.pattern.clone(),
                        drug_b: *da,
                        pattern_b: ka.pattern.clone(),
                    });
                }
            }
        }
        Ok(Self {
            matcher: KeywordMatcher::new(keywords),
        })
    }

    pub fn matcher(&self) -> &KeywordMatcher<DrugId> {
        &self.matcher
    }

    pub fn patterns(&self, drug: DrugId) -> Vec<&str> {
        self.matcher
            .keywords()
            .filter(|(d, _)| *d == drug)
            .map(|(_, k)| k.pattern.as_str())
            .collect()
    }

    pub fn match_drugs(&self, text: &str) -> BTreeSet<DrugId> {
        self.matcher
            .hits(&tokenize_nfc(&nfc(text)))
            .into_iter()
            .map(|h| h.label)
            .collect()
    }
}

/// Unlabelled keyword list, e.g. occupational terms matched against profile descriptions.
#[derive(Debug, Clone)]
pub struct KeywordSet {
    matcher: KeywordMatcher<()>,
}

impl KeywordSet {
    /// Parses `pattern,boundary_mode` rows.
    pub fn from_csv_str(src: &str) -> Result<Self, LexiconError> {
        let mut keywords = Vec::new();
        for (row, cols) in csv_rows(src, &["pattern", "boundary_mode"])? {
            let bad = |message: String| LexiconError::Row { row, message };
            let mode: BoundaryMode = cols[1].parse().map_err(bad)?;
            keywords.push(((), Keyword::new(&cols[0], mode).map_err(bad)?));
        }
        if keywords.is_empty() {
            return Err(LexiconError::Empty);
        }
        Ok(Self {
            matcher: KeywordMatcher::new(keywords),
        })
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        Self::from_csv_str(&read_source(path)?)
    }

    pub fn from_keywords(keywords: Vec<Keyword>) -> Self {
        Self {
            matcher: KeywordMatcher::new(keywords.into_iter().map(|k| ((), k)).collect()),
        }
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.matcher.is_match(text)
    }
}

#[derive(Debug, Clone, Default)]
pub struct DrugPartition {
    pub by_drug: BTreeMap<DrugId, Vec<TweetRecord>>,
    pub excluded_multi: u64,
    /// Ids of the multi-drug tweets with the drugs each mentioned.
    pub multi_ids: Vec<(String, BTreeSet<DrugId>)>,
    pub no_mention: u64,
}

impl DrugPartition {
    pub fn total(&self) -> u64 {
        self.by_drug.values().map(|v| v.len() as u64).sum::<u64>() + self.excluded_multi + self.no_mention
    }
}

/// A single-drug tweet carrying its drug tag; the JSONL line shape between stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedTweet {
    pub drug: DrugId,
    #[serde(flatten)]
    pub record: TweetRecord,
}

/// Routes each single-drug tweet to its drug; multi-drug tweets are dropped and counted.
pub fn partition_single_drug(
    records: impl IntoIterator<Item = TweetRecord>,
    lexicon: &DrugLexicon,
) -> DrugPartition {
    let mut out = DrugPartition {
        by_drug: DrugId::ALL.iter().map(|d| (*d, Vec::new())).collect(),
        ..Default::default()
    };
    use rayon::prelude::*;
    let records: Vec<TweetRecord> = records.into_iter().collect();
    let matched: Vec<BTreeSet<DrugId>> = records.par_iter().map(|r| lexicon.match_drugs(&r.text)).collect();
    for (rec, drugs) in records.into_iter().zip(matched) {
        let mut it = drugs.iter();
        match (it.next(), it.next()) {
            (None, _) => out.no_mention += 1,
            (Some(d), None) => out.by_drug.get_mut(d).expect("all drugs present").push(rec),
            _ => {
                out.excluded_multi += 1;
                out.multi_ids.push((rec.id, drugs));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use DrugId::*;

    fn set(ds: &[DrugId]) -> BTreeSet<DrugId> {
        ds.iter().copied().collect()
    }

    #[test]
    fn bundled_lexicon_shape() {
        let lex = DrugLexicon::bundled();
        let hcq = lex.patterns(Hydroxychloroquine);
        for p in ["hydroxych", "hcq", "plaq", "plaquenil", "hydroquin", "axemal"] {
            assert!(hcq.contains(&p), "missing {p}");
        }
        for d in DrugId::ALL {
            assert!(!lex.patterns(d).is_empty());
        }
    }

    #[test]
    fn examples() {
        let lex = DrugLexicon::bundled();
        assert_eq!(lex.match_drugs("I love my Plaquenil"), set(&[Hydroxychloroquine]));
        assert_eq!(
            lex.match_drugs("ivermectin and remdesivir both trending"),
            set(&[Ivermectin, Remdesivir])
        );
        assert_eq!(lex.match_drugs(""), set(&[]));
        assert_eq!(lex.match_drugs("searching archives"), set(&[]));
        assert_eq!(lex.match_drugs("HYDROXYCHLOROQUINE!!"), set(&[Hydroxychloroquine]));
        assert_eq!(lex.match_drugs("thcqx"), set(&[]));
        assert_eq!(lex.match_drugs("#HCQ works"), set(&[Hydroxychloroquine]));
        assert_eq!(lex.match_drugs("Merck’s pill is out"), set(&[Molnupiravir]));
        assert_eq!(lex.match_drugs("merck's stock"), set(&[]));
    }

    #[test]
    fn brute_force_no_keyword_in_searching_archives() {
        // Every keyword, every start offset: nothing lines up on a token boundary.
        let lex = DrugLexicon::bundled();
        let text = "searching archives";
        for (_, kw) in lex.matcher().keywords() {
            for (i, _) in text.char_indices() {
                let rest = &text[i..];
                let left_ok = i == 0 || !text[..i].chars().last().unwrap().is_alphanumeric();
                if left_ok && rest.starts_with(kw.pattern.as_str()) {
                    let after = rest[kw.pattern.len()..].chars().next();
                    let right_ok = kw.mode == BoundaryMode::TokenPrefix
                        || after.is_none_or(|c| !c.is_alphanumeric());
                    assert!(!right_ok, "{} fires", kw.pattern);
                }
            }
        }
    }

    #[test]
    fn duplicate_across_drugs_is_rejected() {
        let src = "drug,pattern,boundary_mode\n\
                   hydroxychloroquine,hcq,exact-token\n\
                   ivermectin,ivermectin,token-prefix\n\
                   molnupiravir,ivermectin,exact-token\n\
                   remdesivir,remdesivir,token-prefix\n";
        let err = DrugLexicon::from_csv_str(src).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ivermectin") && msg.contains("molnupiravir"), "{msg}");
    }

    #[test]
    fn cross_drug_prefix_is_rejected() {
        let src = "drug,pattern,boundary_mode\n\
                   hydroxychloroquine,hydro,token-prefix\n\
                   ivermectin,ivermectin,token-prefix\n\
                   molnupiravir,molnupiravir,exact-token\n\
                   remdesivir,hydrocodone,exact-token\n";
        assert!(matches!(
            DrugLexicon::from_csv_str(src),
            Err(LexiconError::CrossDrug { .. })
        ));
    }

    #[test]
    fn degenerate_files() {
        assert!(DrugLexicon::from_csv_str("").is_err());
        assert!(matches!(
            DrugLexicon::from_csv_str("drug,pattern,boundary_mode\n"),
            Err(LexiconError::Empty)
        ));
        let missing = "drug,pattern,boundary_mode\nhydroxychloroquine,hcq,exact-token\n";
        assert!(matches!(
            DrugLexicon::from_csv_str(missing),
            Err(LexiconError::MissingDrug(Ivermectin))
        ));
        let bad_mode = "drug,pattern,boundary_mode\nhydroxychloroquine,hcq,fuzzy\n";
        assert!(matches!(
            DrugLexicon::from_csv_str(bad_mode),
            Err(LexiconError::Row { row: 2, .. })
        ));
        let multi_exact = "drug,pattern,boundary_mode\nhydroxychloroquine,hcq pill,exact-token\n";
        assert!(DrugLexicon::from_csv_str(multi_exact).is_err());
        let masky = "drug,pattern,boundary_mode\nhydroxychloroquine,mas,token-prefix\n";
        assert!(DrugLexicon::from_csv_str(masky).is_err());
    }

    #[test]
    fn partition() {
        let lex = DrugLexicon::bundled();
        let mk = |id: &str, text: &str| {
            let line = format!(
                r#"{{"id":"{id}","created_at":"2020-03-01T00:00:00Z","text":"{text}","lang":"en","is_repost":false,"user":{{"id":"u"}}}}"#
            );
            crate::corpus::parse_records(line.as_bytes()).unwrap().records.remove(0)
        };
        let recs = vec![
            mk("1", "hydroxychloroquine and ivermectin"),
            mk("2", "molnupiravir"),
            mk("3", "nothing"),
        ];
        let p = partition_single_drug(recs, &lex);
        assert_eq!(p.excluded_multi, 1);
        assert_eq!(p.no_mention, 1);
        assert_eq!(p.by_drug[&Molnupiravir].len(), 1);
        assert_eq!(p.total(), 3);

        let empty = partition_single_drug(Vec::new(), &lex);
        assert_eq!(empty.by_drug.len(), 4);
        assert!(empty.by_drug.values().all(Vec::is_empty));
        assert_eq!(empty.excluded_multi, 0);
    }

    #[test]
    fn keyword_set_boundaries() {
        let set = KeywordSet::from_csv_str("pattern,boundary_mode\nnurse,exact-token\n").unwrap();
        assert!(set.is_match("ICU nurse, mom of two"));
        assert!(!set.is_match("nursery owner"));
        assert!(!set.is_match(""));
    }
}
