//! User attributes: partisanship from followed politicians, healthcare
//! background from profile keywords, and age, gender and organisation flags
//! taken from externally produced M3 predictions.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::UserProfile;
use crate::lexicon::{KeywordSet, LexiconError};

pub const BUNDLED_HEALTHCARE_LEXICON: &str = include_str!("../data/healthcare_lexicon.csv");

const PROB_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum DemographicsError {
    #[error("{file} row {row}: {message}")]
    Row { file: &'static str, row: usize, message: String },
    #[error("account {account} is listed as both Democratic and Republican")]
    RosterConflict { account: String },
    #[error("invalid age distribution: {0}")]
    InvalidDistribution(String),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    Democratic,
    Republican,
}

impl FromStr for Party {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "d" | "dem" | "democrat" | "democratic" => Ok(Self::Democratic),
            "r" | "rep" | "gop" | "republican" => Ok(Self::Republican),
            other => Err(format!("unknown party '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PoliticianRoster {
    parties: HashMap<String, Party>,
}

impl PoliticianRoster {
    /// Reads `account_id,party` rows. Repeats under the same party are harmless.
    pub fn from_reader<R: Read>(r: R) -> Result<Self, DemographicsError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["account_id", "party"] {
            return Err(DemographicsError::Row {
                file: "roster",
                row: 1,
                message: format!("expected header account_id,party, found {}", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut parties = HashMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            let bad = |message: String| DemographicsError::Row { file: "roster", row, message };
            let account = rec.get(0).filter(|s| !s.is_empty()).ok_or_else(|| bad("empty account_id".into()))?;
            let party: Party = rec.get(1).unwrap_or("").parse().map_err(bad)?;
            match parties.insert(account.to_string(), party) {
                Some(prev) if prev != party => {
                    return Err(DemographicsError::RosterConflict { account: account.into() })
                }
                _ => {}
            }
        }
        Ok(Self { parties })
    }

    pub fn load(path: &Path) -> Result<Self, DemographicsError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, Party)>) -> Result<Self, DemographicsError> {
        let mut parties = HashMap::new();
        for (a, p) in pairs {
            if parties.insert(a.to_string(), p).is_some_and(|prev| prev != p) {
                return Err(DemographicsError::RosterConflict { account: a.into() });
            }
        }
        Ok(Self { parties })
    }

    pub fn party(&self, account: &str) -> Option<Party> {
        self.parties.get(account).copied()
    }

    pub fn len(&self) -> usize {
        self.parties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parties.is_empty()
    }

    /// The same roster with every party flipped.
    pub fn swapped(&self) -> Self {
        let parties = self
            .parties
            .iter()
            .map(|(a, p)| {
                let q = match p {
                    Party::Democratic => Party::Republican,
                    Party::Republican => Party::Democratic,
                };
                (a.clone(), q)
            })
            .collect();
        Self { parties }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Partisanship {
    Left,
    Neutral,
    Right,
}

impl Partisanship {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Left => "left",
            Self::Neutral => "neutral",
            Self::Right => "right",
        }
    }
}

impl fmt::Display for Partisanship {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Partisanship {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "left" => Ok(Self::Left),
            "neutral" => Ok(Self::Neutral),
            "right" => Ok(Self::Right),
            _ => Err(format!("unknown partisanship '{s}'")),
        }
    }
}

/// Left if more distinct Democratic than Republican accounts are followed,
/// Right for the reverse, Neutral on any tie including none.
pub fn infer_partisanship<S: AsRef<str>>(followed: &[S], roster: &PoliticianRoster) -> Partisanship {
    let distinct: BTreeSet<&str> = followed.iter().map(AsRef::as_ref).collect();
    let (mut d, mut r) = (0usize, 0usize);
    for a in distinct {
        match roster.party(a) {
            Some(Party::Democratic) => d += 1,
            Some(Party::Republican) => r += 1,
            None => {}
        }
    }
    match d.cmp(&r) {
        std::cmp::Ordering::Greater => Partisanship::Left,
        std::cmp::Ordering::Less => Partisanship::Right,
        std::cmp::Ordering::Equal => Partisanship::Neutral,
    }
}

pub fn bundled_healthcare_lexicon() -> KeywordSet {
    KeywordSet::from_csv_str(BUNDLED_HEALTHCARE_LEXICON).expect("bundled healthcare lexicon is valid")
}

pub fn has_healthcare_background(description: &str, lexicon: &KeywordSet) -> bool {
    lexicon.is_match(description)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBucket {
    UpTo18,
    From19To39,
    From40,
}

impl AgeBucket {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::UpTo18 => "<=18",
            Self::From19To39 => "19-39",
            Self::From40 => ">=40",
        }
    }
}

impl fmt::Display for AgeBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgeBucket {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "<=18" => Ok(Self::UpTo18),
            "19-39" => Ok(Self::From19To39),
            ">=40" => Ok(Self::From40),
            _ => Err(format!("unknown age bucket '{s}'")),
        }
    }
}

/// M3's four age classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeProbs {
    pub le18: f64,
    pub from19_29: f64,
    pub from30_39: f64,
    pub ge40: f64,
}

impl AgeProbs {
    pub fn validate(&self) -> Result<(), DemographicsError> {
        let ps = [self.le18, self.from19_29, self.from30_39, self.ge40];
        if ps.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(DemographicsError::InvalidDistribution(format!("{ps:?} has a negative or non-finite entry")));
        }
        let sum: f64 = ps.iter().sum();
        if (sum - 1.0).abs() > PROB_TOLERANCE {
            return Err(DemographicsError::InvalidDistribution(format!("{ps:?} sums to {sum}")));
        }
        Ok(())
    }

    /// Three-bucket distribution with the two middle classes merged.
    pub fn merged(&self) -> [f64; 3] {
        [self.le18, self.from19_29 + self.from30_39, self.ge40]
    }
}

/// Argmax over the merged buckets; ties go to the older bucket.
pub fn age_bucket(p: &AgeProbs) -> Result<AgeBucket, DemographicsError> {
    p.validate()?;
    let m = p.merged();
    let buckets = [AgeBucket::UpTo18, AgeBucket::From19To39, AgeBucket::From40];
    let mut best = 0;
    for i in 1..3 {
        if m[i] >= m[best] {
            best = i;
        }
    }
    Ok(buckets[best])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Male => "male",
            Self::Female => "female",
            Self::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "male" => Ok(Self::Male),
            "female" => Ok(Self::Female),
            "unknown" => Ok(Self::Unknown),
            _ => Err(format!("unknown gender '{s}'")),
        }
    }
}

/// Argmax of the binary gender probabilities; an exact tie is Unknown.
pub fn gender_of(p_male: f64, p_female: f64) -> Gender {
    if p_male > p_female {
        Gender::Male
    } else if p_female > p_male {
        Gender::Female
    } else {
        Gender::Unknown
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M3Prediction {
    pub user_id: String,
    pub p_le18: f64,
    pub p_19_29: f64,
    pub p_30_39: f64,
    pub p_ge40: f64,
    pub p_male: f64,
    pub p_female: f64,
    pub is_org: bool,
}

impl M3Prediction {
    pub fn age(&self) -> AgeProbs {
        AgeProbs {
            le18: self.p_le18,
            from19_29: self.p_19_29,
            from30_39: self.p_30_39,
            ge40: self.p_ge40,
        }
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Ok(true),
        "0" | "false" | "no" => Ok(false),
        other => Err(format!("is_org '{other}' is not a boolean")),
    }
}

const M3_HEADER: [&str; 8] = ["user_id", "p_le18", "p_19_29", "p_30_39", "p_ge40", "p_male", "p_female", "is_org"];

/// Reads an M3 predictions CSV. Row numbers in errors count the header as row 1.
pub fn read_m3<R: Read>(r: R) -> Result<BTreeMap<String, M3Prediction>, DemographicsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != M3_HEADER {
        return Err(DemographicsError::Row {
            file: "m3",
            row: 1,
            message: format!("expected header {}", M3_HEADER.join(",")),
        });
    }
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let bad = |message: String| DemographicsError::Row { file: "m3", row, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != M3_HEADER.len() {
            return Err(bad(format!("expected {} fields, found {}", M3_HEADER.len(), rec.len())));
        }
        let num = |i: usize| -> Result<f64, DemographicsError> {
            let v: f64 = rec[i].parse().map_err(|_| bad(format!("{} '{}' is not a number", M3_HEADER[i], &rec[i])))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(format!("{} = {v} is outside [0, 1]", M3_HEADER[i])));
            }
            Ok(v)
        };
        if rec[0].is_empty() {
            return Err(bad("empty user_id".into()));
        }
        let p = M3Prediction {
            user_id: rec[0].to_string(),
            p_le18: num(1)?,
            p_19_29: num(2)?,
            p_30_39: num(3)?,
            p_ge40: num(4)?,
            p_male: num(5)?,
            p_female: num(6)?,
            is_org: parse_bool(&rec[7]).map_err(bad)?,
        };
        p.age().validate().map_err(|e| bad(e.to_string()))?;
        if out.insert(p.user_id.clone(), p).is_some() {
            return Err(bad(format!("duplicate user_id '{}'", &rec[0])));
        }
    }
    Ok(out)
}

pub fn load_m3(path: &Path) -> Result<BTreeMap<String, M3Prediction>, DemographicsError> {
    read_m3(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicProfile {
    pub user_id: String,
    pub partisanship: Partisanship,
    pub healthcare: bool,
    /// None when no M3 prediction covers the user.
    pub age_bucket: Option<AgeBucket>,
    pub gender: Gender,
    pub is_org: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Profiles {
    pub by_user: BTreeMap<String, DemographicProfile>,
    /// Users that had an M3 prediction.
    pub m3_covered: usize,
}

/// One profile per distinct user id; the first occurrence of an id wins.
pub fn build_profiles(
    users: &[UserProfile],
    roster: &PoliticianRoster,
    healthcare: &KeywordSet,
    m3: Option<&BTreeMap<String, M3Prediction>>,
) -> Result<Profiles, DemographicsError> {
    let mut out = Profiles::default();
    for u in users {
        if out.by_user.contains_key(&u.id) {
            continue;
        }
        let pred = m3.and_then(|m| m.get(&u.id));
        let (age_bucket, gender, is_org) = match pred {
            Some(p) => {
                out.m3_covered += 1;
                (Some(age_bucket(&p.age())?), gender_of(p.p_male, p.p_female), p.is_org)
            }
            None => (None, Gender::Unknown, false),
        };
        let profile = DemographicProfile {
            user_id: u.id.clone(),
            partisanship: infer_partisanship(u.following.as_deref().unwrap_or(&[]), roster),
            healthcare: has_healthcare_background(u.description.as_deref().unwrap_or(""), healthcare),
            age_bucket,
            gender,
            is_org,
        };
        out.by_user.insert(u.id.clone(), profile);
    }
    let total = out.by_user.len();
    if m3.is_none() {
        log::warn!("no M3 predictions supplied; age, gender and organisation flags default for all {total} users");
    } else if out.m3_covered < total {
        log::warn!("M3 predictions cover {} of {total} users", out.m3_covered);
    }
    Ok(out)
}

pub fn write_profiles_csv<W: std::io::Write>(profiles: &Profiles, w: W) -> Result<(), DemographicsError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["user_id", "partisanship", "healthcare", "age_bucket", "gender", "is_org"])?;
    for p in profiles.by_user.values() {
        wtr.write_record([
            p.user_id.as_str(),
            p.partisanship.as_str(),
            if p.healthcare { "true" } else { "false" },
            p.age_bucket.map(AgeBucket::as_str).unwrap_or(""),
            p.gender.as_str(),
            if p.is_org { "true" } else { "false" },
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_profiles_csv<R: Read>(r: R) -> Result<BTreeMap<String, DemographicProfile>, DemographicsError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec?;
        let bad = |message: String| DemographicsError::Row { file: "profiles", row, message };
        if rec.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", rec.len())));
        }
        let p = DemographicProfile {
            user_id: rec[0].to_string(),
            partisanship: rec[1].parse().map_err(bad)?,
            healthcare: parse_bool(&rec[2]).map_err(bad)?,
            age_bucket: if rec[3].is_empty() { None } else { Some(rec[3].parse().map_err(bad)?) },
            gender: rec[4].parse().map_err(bad)?,
            is_org: parse_bool(&rec[5]).map_err(bad)?,
        };
        out.insert(p.user_id.clone(), p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roster() -> PoliticianRoster {
        PoliticianRoster::from_reader("account_id,party\nd1,D\nd2,D\nd3,Democratic\nd4,D\nd5,D\nr1,R\nr2,Republican\n".as_bytes())
            .unwrap()
    }

    #[test]
    fn partisanship_examples() {
        let r = roster();
        assert_eq!(infer_partisanship(&["d1", "d2", "d3", "r1"], &r), Partisanship::Left);
        assert_eq!(infer_partisanship(&["d1", "d2", "r1", "r2"], &r), Partisanship::Neutral);
        assert_eq!(infer_partisanship::<&str>(&[], &r), Partisanship::Neutral);
        assert_eq!(infer_partisanship(&["r1", "r1", "r1", "d1"], &r), Partisanship::Neutral);
        assert_eq!(infer_partisanship(&["r1", "nobody"], &r), Partisanship::Right);
    }

    #[test]
    fn roster_conflict_rejected() {
        let err = PoliticianRoster::from_reader("account_id,party\nx,D\nx,R\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DemographicsError::RosterConflict { .. }));
        assert!(PoliticianRoster::from_reader("account_id,party\nx,D\nx,D\n".as_bytes()).is_ok());
        assert!(PoliticianRoster::from_reader("account_id,party\nx,green\n".as_bytes()).is_err());
    }

    #[test]
    fn healthcare_examples() {
        let hc = bundled_healthcare_lexicon();
        assert!(has_healthcare_background("ICU nurse, mom of two", &hc));
        assert!(!has_healthcare_background("", &hc));
        assert!(!has_healthcare_background("nursery owner", &hc));
        assert!(has_healthcare_background("MD", &hc));
        assert!(has_healthcare_background("Epidemiologist at large", &hc));
    }

    fn probs(a: f64, b: f64, c: f64, d: f64) -> AgeProbs {
        AgeProbs { le18: a, from19_29: b, from30_39: c, ge40: d }
    }

    #[test]
    fn age_examples() {
        assert_eq!(age_bucket(&probs(0.1, 0.3, 0.25, 0.35)).unwrap(), AgeBucket::From19To39);
        assert_eq!(age_bucket(&probs(1.0, 0.0, 0.0, 0.0)).unwrap(), AgeBucket::UpTo18);
        assert_eq!(age_bucket(&probs(0.0, 0.25, 0.25, 0.5)).unwrap(), AgeBucket::From40);
        assert!(age_bucket(&probs(0.5, 0.5, 0.5, 0.0)).is_err());
        assert!(age_bucket(&probs(-0.1, 0.5, 0.5, 0.1)).is_err());
    }

    #[test]
    fn gender_argmax() {
        assert_eq!(gender_of(0.7, 0.3), Gender::Male);
        assert_eq!(gender_of(0.2, 0.8), Gender::Female);
        assert_eq!(gender_of(0.5, 0.5), Gender::Unknown);
    }

    const M3: &str = "user_id,p_le18,p_19_29,p_30_39,p_ge40,p_male,p_female,is_org\n\
                      u1,0.1,0.2,0.2,0.5,0.6,0.4,false\n\
                      u2,0.1,0.2,0.2,0.5,0.6,0.4,true\n";

    #[test]
    fn m3_rows_and_errors() {
        let m = read_m3(M3.as_bytes()).unwrap();
        assert_eq!(m.len(), 2);
        assert!(m["u2"].is_org);
        let bad = format!("{M3}u3,0.1,oops,0.2,0.5,0.6,0.4,false\n");
        match read_m3(bad.as_bytes()) {
            Err(DemographicsError::Row { row, .. }) => assert_eq!(row, 4),
            other => panic!("{other:?}"),
        }
        let short = format!("{M3}u3,0.1\n");
        assert!(matches!(read_m3(short.as_bytes()), Err(DemographicsError::Row { row: 4, .. })));
    }

    fn user(id: &str, desc: &str, following: &[&str]) -> UserProfile {
        UserProfile {
            id: id.into(),
            location: None,
            description: Some(desc.into()),
            following: Some(following.iter().map(|s| s.to_string()).collect()),
        }
    }

    #[test]
    fn profiles_compose_rules() {
        let m3 = read_m3(M3.as_bytes()).unwrap();
        let users = [user("u1", "MD", &["d1", "d2", "d3", "d4", "d5"]), user("u2", "news", &[]), user("u9", "", &["r1"])];
        let p = build_profiles(&users, &roster(), &bundled_healthcare_lexicon(), Some(&m3)).unwrap();
        let u1 = &p.by_user["u1"];
        assert_eq!((u1.partisanship, u1.healthcare, u1.is_org), (Partisanship::Left, true, false));
        assert_eq!(u1.age_bucket, Some(AgeBucket::From40));
        assert!(p.by_user["u2"].is_org);
        assert_eq!(p.by_user["u9"].age_bucket, None);
        assert_eq!(p.m3_covered, 2);

        let bare = build_profiles(&users, &roster(), &bundled_healthcare_lexicon(), None).unwrap();
        assert_eq!(bare.by_user["u1"].partisanship, Partisanship::Left);
        assert_eq!(bare.by_user["u1"].gender, Gender::Unknown);

        let mut buf = Vec::new();
        write_profiles_csv(&p, &mut buf).unwrap();
        assert_eq!(read_profiles_csv(&buf[..]).unwrap(), p.by_user);
    }
}
