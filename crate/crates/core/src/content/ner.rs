use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ContentError;
use crate::geo::StateCode;
use crate::lexicon::DrugId;
use crate::timeline::WaveId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityClass {
    Person,
    Organization,
    Location,
    Miscellaneous,
}

impl EntityClass {
    pub const ALL: [EntityClass; 4] = [Self::Person, Self::Organization, Self::Location, Self::Miscellaneous];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Person => "PER",
            Self::Organization => "ORG",
            Self::Location => "LOC",
            Self::Miscellaneous => "MISC",
        }
    }
}

impl fmt::Display for EntityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "PER" | "PERSON" => Ok(Self::Person),
            "ORG" | "ORGANIZATION" => Ok(Self::Organization),
            "LOC" | "LOCATION" => Ok(Self::Location),
            "MISC" | "MISCELLANEOUS" => Ok(Self::Miscellaneous),
            _ => Err(format!("unknown entity class '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMention {
    pub surface: String,
    pub class: EntityClass,
}

pub trait EntityTagger: Send + Sync {
    fn name(&self) -> &str;
    fn tag(&self, texts: &[String]) -> Result<Vec<Vec<EntityMention>>, ContentError>;
}

impl EntityTagger for Box<dyn EntityTagger> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn tag(&self, texts: &[String]) -> Result<Vec<Vec<EntityMention>>, ContentError> {
        (**self).tag(texts)
    }
}

/// Plumbing stand-in for a real tagger: runs of capitalised words become mentions.
/// All-caps runs are organisations, state names are locations, the rest miscellaneous.
#[derive(Debug, Clone, Default)]
pub struct HeuristicTagger;

const SKIP: &[&str] = &[
    "a", "an", "and", "are", "but", "does", "for", "how", "i", "if", "in", "is", "it", "just", "my", "no", "not",
    "of", "on", "or", "rt", "so", "that", "the", "this", "to", "we", "what", "when", "why", "yes", "you",
];

impl HeuristicTagger {
    pub fn tag_one(&self, text: &str) -> Vec<EntityMention> {
        let mut out = Vec::new();
        let mut run: Vec<&str> = Vec::new();
        let flush = |run: &mut Vec<&str>, out: &mut Vec<EntityMention>| {
            if !run.is_empty() {
                let surface = run.join(" ");
                out.push(EntityMention { class: classify(&surface), surface });
                run.clear();
            }
        };
        for raw in text.split_whitespace() {
            let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
            let capital = word.chars().next().is_some_and(|c| c.is_uppercase())
                && !raw.starts_with(['@', '#'])
                && !SKIP.contains(&word.to_lowercase().as_str());
            if capital {
                run.push(word);
            } else {
                flush(&mut run, &mut out);
            }
            if capital && raw.ends_with([',', '.', '!', '?', ';', ':']) {
                flush(&mut run, &mut out);
            }
        }
        flush(&mut run, &mut out);
        out
    }
}

fn classify(surface: &str) -> EntityClass {
    if StateCode::all().any(|s| s.name().eq_ignore_ascii_case(surface)) {
        EntityClass::Location
    } else if surface.chars().count() >= 2 && surface.chars().all(|c| c.is_uppercase() || c.is_ascii_digit()) {
        EntityClass::Organization
    } else {
        EntityClass::Miscellaneous
    }
}

impl EntityTagger for HeuristicTagger {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn tag(&self, texts: &[String]) -> Result<Vec<Vec<EntityMention>>, ContentError> {
        use rayon::prelude::*;
        Ok(texts.par_iter().map(|t| self.tag_one(t)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermCount {
    /// Most frequent surface form of the case-folded term.
    pub term: String,
    pub count: u64,
}

/// Case-folded counts per (drug, wave, class), ranked by count then alphabetically.
pub fn entity_frequencies<'a, I>(
    mentions: I,
    top_m: Option<usize>,
) -> BTreeMap<(DrugId, WaveId, EntityClass), Vec<TermCount>>
where
    I: IntoIterator<Item = (DrugId, WaveId, &'a EntityMention)>,
{
    type Forms = HashMap<String, u64>;
    let mut cells: BTreeMap<(DrugId, WaveId, EntityClass), HashMap<String, (u64, Forms)>> = BTreeMap::new();
    for (drug, wave, m) in mentions {
        let key = m.surface.to_lowercase();
        let slot = cells.entry((drug, wave, m.class)).or_default().entry(key).or_default();
        slot.0 += 1;
        *slot.1.entry(m.surface.clone()).or_default() += 1;
    }
    cells
        .into_iter()
        .map(|(cell, terms)| {
            let mut ranked: Vec<(String, u64, String)> = terms
                .into_iter()
                .map(|(folded, (count, forms))| {
                    let display = forms
                        .into_iter()
                        .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
                        .map(|(f, _)| f)
                        .unwrap_or_else(|| folded.clone());
                    (folded, count, display)
                })
                .collect();
            ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            ranked.truncate(top_m.unwrap_or(usize::MAX));
            let list = ranked
                .into_iter()
                .map(|(_, count, term)| TermCount { term, count })
                .collect();
            (cell, list)
        })
        .collect()
}
