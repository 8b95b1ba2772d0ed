//! US state resolution from GPS places and self-reported profile locations.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::corpus::TweetRecord;

pub const BUNDLED_GAZETTEER: &str = include_str!("../data/gazetteer.csv");

const STATES: [(&str, &str); 51] = [
    ("AL", "Alabama"),
    ("AK", "Alaska"),
    ("AZ", "Arizona"),
    ("AR", "Arkansas"),
    ("CA", "California"),
    ("CO", "Colorado"),
    ("CT", "Connecticut"),
    ("DE", "Delaware"),
    ("FL", "Florida"),
    ("GA", "Georgia"),
    ("HI", "Hawaii"),
    ("ID", "Idaho"),
    ("IL", "Illinois"),
    ("IN", "Indiana"),
    ("IA", "Iowa"),
    ("KS", "Kansas"),
    ("KY", "Kentucky"),
    ("LA", "Louisiana"),
    ("ME", "Maine"),
    ("MD", "Maryland"),
    ("MA", "Massachusetts"),
    ("MI", "Michigan"),
    ("MN", "Minnesota"),
    ("MS", "Mississippi"),
    ("MO", "Missouri"),
    ("MT", "Montana"),
    ("NE", "Nebraska"),
    ("NV", "Nevada"),
    ("NH", "New Hampshire"),
    ("NJ", "New Jersey"),
    ("NM", "New Mexico"),
    ("NY", "New York"),
    ("NC", "North Carolina"),
    ("ND", "North Dakota"),
    ("OH", "Ohio"),
    ("OK", "Oklahoma"),
    ("OR", "Oregon"),
    ("PA", "Pennsylvania"),
    ("RI", "Rhode Island"),
    ("SC", "South Carolina"),
    ("SD", "South Dakota"),
    ("TN", "Tennessee"),
    ("TX", "Texas"),
    ("UT", "Utah"),
    ("VT", "Vermont"),
    ("VA", "Virginia"),
    ("WA", "Washington"),
    ("WV", "West Virginia"),
    ("WI", "Wisconsin"),
    ("WY", "Wyoming"),
    ("PR", "Puerto Rico"),
];

/// Trailing profile segments that name the country rather than a state.
const COUNTRY_SUFFIXES: [&str; 6] = [
    "usa",
    "us",
    "u s a",
    "united states",
    "united states of america",
    "america",
];

/// One of the 50 US states or Puerto Rico.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateCode(u8);

impl StateCode {
    pub fn all() -> impl Iterator<Item = StateCode> {
        (0..STATES.len() as u8).map(StateCode)
    }

    pub fn abbr(self) -> &'static str {
        STATES[self.0 as usize].0
    }

    pub fn name(self) -> &'static str {
        STATES[self.0 as usize].1
    }
}

impl fmt::Display for StateCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbr())
    }
}

impl FromStr for StateCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        STATES
            .iter()
            .position(|(abbr, _)| abbr.eq_ignore_ascii_case(s))
            .map(|i| StateCode(i as u8))
            .ok_or_else(|| format!("unknown state code '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeoSource {
    Gps,
    Profile,
}

impl GeoSource {
    pub fn as_str(self) -> &'static str {
        match self {
            GeoSource::Gps => "gps",
            GeoSource::Profile => "profile",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    State(StateCode, GeoSource),
    /// GPS places the tweet outside the US; the profile is not consulted.
    NonUs,
    Unresolved,
}

#[derive(Debug, thiserror::Error)]
pub enum GazetteerError {
    #[error("cannot read gazetteer {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("gazetteer row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("gazetteer is empty")]
    Empty,
    #[error("alias '{alias}' maps to both {a} and {b}")]
    Collision { alias: String, a: StateCode, b: StateCode },
}

/// Lowercase, collapse non-alphanumeric runs to single spaces, trim.
pub fn normalize_place(s: &str) -> String {
    crate::text::words(s).join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CityEntry {
    Unique(StateCode),
    /// Only resolvable together with a state hint.
    HintOnly,
}

#[derive(Debug, Clone)]
pub struct Gazetteer {
    state_aliases: HashMap<String, StateCode>,
    cities: HashMap<String, CityEntry>,
    hinted: HashMap<(String, StateCode), StateCode>,
}

impl Gazetteer {
    pub fn bundled() -> Self {
        Self::from_csv_str(BUNDLED_GAZETTEER).expect("bundled gazetteer is valid")
    }

    pub fn load(path: &Path) -> Result<Self, GazetteerError> {
        let src = std::fs::read_to_string(path).map_err(|source| GazetteerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv_str(&src)
    }

    /// Parses `alias,state_code,kind` rows, `kind` being `state`, `city`, or
    /// `city-hinted` (a city name shared by several states, only resolved with a
    /// state hint). State names and USPS codes are always present.
    pub fn from_csv_str(src: &str) -> Result<Self, GazetteerError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(src.as_bytes());
        let headers = rdr
            .headers()
            .map_err(|e| GazetteerError::Row { row: 1, message: e.to_string() })?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["alias", "state_code", "kind"] {
            return Err(GazetteerError::Row {
                row: 1,
                message: "expected header alias,state_code,kind".into(),
            });
        }

        let mut gaz = Gazetteer {
            state_aliases: HashMap::new(),
            cities: HashMap::new(),
            hinted: HashMap::new(),
        };
        for code in StateCode::all() {
            gaz.add_state_alias(code.abbr(), code)?;
            gaz.add_state_alias(code.name(), code)?;
        }

        let mut city_rows: Vec<(usize, String, StateCode, bool)> = Vec::new();
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| GazetteerError::Row {
                row: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            rows += 1;
            let row = rec.position().map_or(0, |p| p.line() as usize);
            let bad = |message: String| GazetteerError::Row { row, message };
            let alias = normalize_place(&rec[0]);
            if alias.is_empty() {
                return Err(bad("empty alias".into()));
            }
            let code: StateCode = rec[1].parse().map_err(bad)?;
            match &rec[2] {
                "state" => gaz.add_state_alias(&alias, code)?,
                "city" => city_rows.push((row, alias, code, false)),
                "city-hinted" => city_rows.push((row, alias, code, true)),
                other => return Err(bad(format!("unknown kind '{other}'"))),
            }
        }
        if rows == 0 {
            return Err(GazetteerError::Empty);
        }

        for (_, alias, code, hint_only) in city_rows {
            gaz.hinted.insert((alias.clone(), code), code);
            let entry = if hint_only { CityEntry::HintOnly } else { CityEntry::Unique(code) };
            match gaz.cities.get(&alias).copied() {
                None => {
                    gaz.cities.insert(alias, entry);
                }
                Some(CityEntry::Unique(prev)) if prev == code && !hint_only => {}
                Some(CityEntry::HintOnly) if hint_only => {}
                Some(CityEntry::Unique(prev)) => {
                    return Err(GazetteerError::Collision { alias, a: prev, b: code });
                }
                Some(CityEntry::HintOnly) => {
                    let other = gaz
                        .hinted
                        .keys()
                        .find(|(a, c)| *a == alias && *c != code)
                        .map_or(code, |(_, c)| *c);
                    return Err(GazetteerError::Collision { alias, a: other, b: code });
                }
            }
        }
        Ok(gaz)
    }

    fn add_state_alias(&mut self, alias: &str, code: StateCode) -> Result<(), GazetteerError> {
        let alias = normalize_place(alias);
        match self.state_aliases.get(&alias) {
            Some(prev) if *prev != code => Err(GazetteerError::Collision { alias, a: *prev, b: code }),
            _ => {
                self.state_aliases.insert(alias, code);
                Ok(())
            }
        }
    }

    pub fn alias_count(&self) -> usize {
        self.state_aliases.len() + self.cities.len()
    }

    pub fn state_alias(&self, s: &str) -> Option<StateCode> {
        self.state_aliases.get(&normalize_place(s)).copied()
    }

    fn city(&self, city: &str, hint: Option<StateCode>) -> Option<StateCode> {
        match hint {
            Some(h) => self.hinted.get(&(city.to_owned(), h)).copied(),
            None => match self.cities.get(city) {
                Some(CityEntry::Unique(c)) => Some(*c),
                _ => None,
            },
        }
    }

    /// Resolves a free-text place: rightmost segment as a state, then
    /// `(city, hint)` pairs, then bare cities, then the whole string.
    pub fn resolve_text(&self, raw: &str) -> Option<StateCode> {
        let mut segments: Vec<String> = raw
            .split(',')
            .map(normalize_place)
            .filter(|s| !s.is_empty())
            .collect();
        while segments.len() > 1
            && segments.last().is_some_and(|s| COUNTRY_SUFFIXES.contains(&s.as_str()))
        {
            segments.pop();
        }
        let last = segments.last()?;
        if let Some(code) = self.state_aliases.get(last) {
            return Some(*code);
        }
        for pair in segments.windows(2).rev() {
            if let Some(hint) = self.state_aliases.get(&pair[1]) {
                if let Some(code) = self.city(&pair[0], Some(*hint)) {
                    return Some(code);
                }
            }
        }
        for seg in segments.iter().rev() {
            if let Some(code) = self.city(seg, None) {
                return Some(code);
            }
        }
        self.state_aliases.get(&normalize_place(raw)).copied()
    }

    /// GPS place first; the profile location only when there is no usable place.
    pub fn resolve(&self, record: &TweetRecord) -> Resolution {
        if let Some(place) = &record.place {
            let cc = place.country_code.trim().to_ascii_uppercase();
            if !cc.is_empty() && cc != "US" && cc != "PR" {
                return Resolution::NonUs;
            }
            if let Some(code) = self.resolve_text(&place.full_name) {
                return Resolution::State(code, GeoSource::Gps);
            }
            if cc == "PR" {
                return Resolution::State("PR".parse().expect("PR"), GeoSource::Gps);
            }
        }
        match record.author.location.as_deref().and_then(|l| self.resolve_text(l)) {
            Some(code) => Resolution::State(code, GeoSource::Profile),
            None => Resolution::Unresolved,
        }
    }
}

pub fn resolve(record: &TweetRecord, gaz: &Gazetteer) -> Option<(StateCode, GeoSource)> {
    match gaz.resolve(record) {
        Resolution::State(c, s) => Some((c, s)),
        _ => None,
    }
}
