//! Per-district race results: CSV parsing, two-party shares, and grouping
//! into elections.
//!
//! The input schema is a UTF-8 CSV with a header row and the columns
//! `state, chamber, year, district, dem_votes, rep_votes, dem_incumbent,
//! rep_incumbent, winner, multi_member`. Vote counts left empty mark an
//! uncontested race; booleans are `true`/`false`; `winner` is `D` or `R`;
//! `chamber` is `congress` or `state_lower`. Extra columns are ignored.
//!
//! Races are grouped by (state, chamber, year) into [`ElectionGroup`]s.
//! Any group containing a multi-member district is marked excluded rather
//! than dropped, so reports can list the exclusions. Districting-cycle ids
//! come from a [`CycleTable`], which supports mid-decade plan splits;
//! states absent from the table fall back to the national decade rule.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("missing required columns: {}", missing.join(", "))]
    SchemaMismatch { missing: Vec<String> },
    #[error("both vote counts are zero")]
    BothZero,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chamber {
    Congress,
    StateLower,
}

impl Chamber {
    pub fn as_str(self) -> &'static str {
        match self {
            Chamber::Congress => "congress",
            Chamber::StateLower => "state_lower",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "congress" => Some(Chamber::Congress),
            "state_lower" => Some(Chamber::StateLower),
            _ => None,
        }
    }
}

impl fmt::Display for Chamber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Winner {
    D,
    R,
}

impl Winner {
    pub fn as_str(self) -> &'static str {
        match self {
            Winner::D => "D",
            Winner::R => "R",
        }
    }
}

/// One district's raw race result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistrictRaceRecord {
    pub state: String,
    pub chamber: Chamber,
    pub year: i32,
    pub district_id: String,
    /// Absent when the race had no Democratic candidate.
    pub dem_votes: Option<u64>,
    /// Absent when the race had no Republican candidate.
    pub rep_votes: Option<u64>,
    pub dem_incumbent: bool,
    pub rep_incumbent: bool,
    pub winner: Winner,
    pub multi_member: bool,
}

/// Two-party share of a race, or the marker that it must be imputed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TwoPartyShare {
    Contested(f64),
    Uncontested,
}

impl DistrictRaceRecord {
    /// A race is contested when both parties fielded a candidate.
    pub fn is_contested(&self) -> bool {
        self.dem_votes.is_some() && self.rep_votes.is_some()
    }

    /// Democratic fraction of the two-party vote, or the uncontested
    /// marker when either side is absent. Third parties never enter.
    pub fn two_party_share(&self) -> Result<TwoPartyShare, IngestError> {
        match (self.dem_votes, self.rep_votes) {
            (Some(dem), Some(rep)) => {
                let total = dem + rep;
                if total == 0 {
                    Err(IngestError::BothZero)
                } else {
                    Ok(TwoPartyShare::Contested(dem as f64 / total as f64))
                }
            }
            _ => Ok(TwoPartyShare::Uncontested),
        }
    }
}

/// A malformed CSV row; parsing continues past these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: u64,
    pub reason: String,
}

/// Result of parsing a results file: valid records plus per-row errors.
#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub records: Vec<DistrictRaceRecord>,
    pub row_errors: Vec<RowError>,
}

const COLUMNS: [&str; 10] = [
    "state",
    "chamber",
    "year",
    "district",
    "dem_votes",
    "rep_votes",
    "dem_incumbent",
    "rep_incumbent",
    "winner",
    "multi_member",
];

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn parse_votes(s: &str) -> Result<Option<u64>, String> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<u64>()
        .map(Some)
        .map_err(|_| "non-numeric votes".to_owned())
}

/// Parses a results CSV. Rows that fail to parse are reported with their
/// line number and skipped; a missing header column aborts the parse.
pub fn parse_results<R: Read>(input: R) -> Result<ParseOutcome, IngestError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let index_of = |name: &str| headers.iter().position(|h| h == name);
    let missing: Vec<String> = COLUMNS
        .iter()
        .filter(|c| index_of(c).is_none())
        .map(|c| (*c).to_owned())
        .collect();
    if !missing.is_empty() {
        return Err(IngestError::SchemaMismatch { missing });
    }
    let cols: Vec<usize> = COLUMNS.iter().map(|c| index_of(c).unwrap()).collect();

    let mut outcome = ParseOutcome::default();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let fields: Vec<&str> = cols
            .iter()
            .map(|&c| row.get(c).unwrap_or("").trim())
            .collect();
        match parse_row(&fields) {
            Ok(record) => outcome.records.push(record),
            Err(reason) => outcome.row_errors.push(RowError { line, reason }),
        }
    }
    Ok(outcome)
}

fn parse_row(f: &[&str]) -> Result<DistrictRaceRecord, String> {
    let state = f[0].to_owned();
    if state.len() != 2 || !state.chars().all(|c| c.is_ascii_uppercase()) {
        return Err("state must be a two-letter code".to_owned());
    }
    let chamber = Chamber::parse(f[1]).ok_or("unknown chamber")?;
    let year: i32 = f[2].parse().map_err(|_| "non-numeric year")?;
    let district_id = f[3].to_owned();
    if district_id.is_empty() {
        return Err("district must be nonempty".to_owned());
    }
    let dem_votes = parse_votes(f[4])?;
    let rep_votes = parse_votes(f[5])?;
    let dem_incumbent = parse_bool(f[6]).ok_or("bad boolean in dem_incumbent")?;
    let rep_incumbent = parse_bool(f[7]).ok_or("bad boolean in rep_incumbent")?;
    let winner = match f[8] {
        "D" => Winner::D,
        "R" => Winner::R,
        _ => return Err("winner must be D or R".to_owned()),
    };
    let multi_member = parse_bool(f[9]).ok_or("bad boolean in multi_member")?;

    if let (Some(dem), Some(rep)) = (dem_votes, rep_votes) {
        let consistent = match winner {
            Winner::D => dem >= rep,
            Winner::R => rep >= dem,
        };
        if !consistent {
            return Err("winner inconsistent with vote counts".to_owned());
        }
    }

    Ok(DistrictRaceRecord {
        state,
        chamber,
        year,
        district_id,
        dem_votes,
        rep_votes,
        dem_incumbent,
        rep_incumbent,
        winner,
        multi_member,
    })
}

/// Writes records back out in the input schema (round-trips with
/// [`parse_results`]).
pub fn write_records<W: Write>(records: &[DistrictRaceRecord], out: W) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(COLUMNS)?;
    let votes = |v: Option<u64>| v.map_or(String::new(), |x| x.to_string());
    for r in records {
        writer.write_record([
            r.state.as_str(),
            r.chamber.as_str(),
            &r.year.to_string(),
            &r.district_id,
            &votes(r.dem_votes),
            &votes(r.rep_votes),
            if r.dem_incumbent { "true" } else { "false" },
            if r.rep_incumbent { "true" } else { "false" },
            r.winner.as_str(),
            if r.multi_member { "true" } else { "false" },
        ])?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One districting plan's span of years for a state and chamber.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleSpan {
    pub cycle_id: String,
    pub first_year: i32,
    pub last_year: i32,
}

/// Maps `"ST/chamber"` to its districting-cycle spans. Redistricting dates
/// vary by state and some plans split mid-decade, so this is data, not
/// code; anything not listed falls back to [`national_cycle_start`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CycleTable {
    spans: BTreeMap<String, Vec<CycleSpan>>,
}

/// First year of the national districting cycle containing `year`. Cycles
/// run from years ending in 2 through the following decade's year ending
/// in 1 (1972-1981, 1982-1991, ...).
pub fn national_cycle_start(year: i32) -> i32 {
    let offset = (year - 2).rem_euclid(10);
    year - offset
}

impl CycleTable {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_json<R: Read>(input: R) -> Result<Self, IngestError> {
        Ok(serde_json::from_reader(input)?)
    }

    pub fn insert(&mut self, state: &str, chamber: Chamber, spans: Vec<CycleSpan>) {
        self.spans.insert(format!("{state}/{chamber}"), spans);
    }

    /// Cycle id for a race. Table entries win; otherwise the id is
    /// `"ST-<cycle start year>"` under the national decade rule.
    pub fn cycle_id(&self, state: &str, chamber: Chamber, year: i32) -> String {
        if let Some(spans) = self.spans.get(&format!("{state}/{chamber}")) {
            for span in spans {
                if (span.first_year..=span.last_year).contains(&year) {
                    return span.cycle_id.clone();
                }
            }
        }
        format!("{state}-{}", national_cycle_start(year))
    }
}

/// Key identifying one election: a state's chamber races in one year,
/// tagged with the districting cycle the year falls in.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct GroupKey {
    pub state: String,
    pub chamber: Chamber,
    pub year: i32,
    pub cycle_id: String,
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.state, self.chamber, self.year)
    }
}

/// All races of one election, or the reason the election is excluded
/// from analysis.
#[derive(Debug, Clone)]
pub struct ElectionGroup {
    pub key: GroupKey,
    pub records: Vec<DistrictRaceRecord>,
    pub exclusion_reason: Option<String>,
}

/// Groups records by (state, chamber, year), sorted by key. Groups with a
/// multi-member district are marked excluded; exclusions are data, not
/// failures.
pub fn group_elections(records: &[DistrictRaceRecord], cycles: &CycleTable) -> Vec<ElectionGroup> {
    let mut by_key: BTreeMap<(String, Chamber, i32), Vec<DistrictRaceRecord>> = BTreeMap::new();
    for r in records {
        by_key
            .entry((r.state.clone(), r.chamber, r.year))
            .or_default()
            .push(r.clone());
    }
    by_key
        .into_iter()
        .map(|((state, chamber, year), records)| {
            let cycle_id = cycles.cycle_id(&state, chamber, year);
            let exclusion_reason = records
                .iter()
                .any(|r| r.multi_member)
                .then(|| "multi-member district".to_owned());
            ElectionGroup {
                key: GroupKey {
                    state,
                    chamber,
                    year,
                    cycle_id,
                },
                records,
                exclusion_reason,
            }
        })
        .collect()
}
