//! Contingency tables, Pearson's chi-square test and per-state stance averages.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::io::Write;

use crate::geo::StateCode;
use crate::lexicon::DrugId;
use crate::stance::StanceLabel;
use crate::timeline::WaveId;

pub const DEFAULT_DEAD_ZONE: f64 = 0.05;
pub const LOW_EXPECTED: f64 = 5.0;
pub const P_FLOOR: f64 = 1e-15;

const STANCE_COLUMNS: [StanceLabel; 3] = [StanceLabel::Negative, StanceLabel::Neutral, StanceLabel::Positive];

#[derive(Debug, thiserror::Error)]
pub enum StatsError {
    #[error("{stances} stance labels but {groups} group labels")]
    LengthMismatch { stances: usize, groups: usize },
    #[error("table is {rows}x{cols} after dropping empty rows and columns; need at least 2x2")]
    Degenerate { rows: usize, cols: usize },
    #[error("ragged table: row {row} has {found} cells, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("dead zone must be a non-negative number, got {0}")]
    DeadZone(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    /// Labels removed because their marginal was zero.
    pub dropped: Vec<String>,
}

impl ContingencyTable {
    /// Validates shape and drops zero-marginal rows and columns.
    pub fn new(rows: Vec<String>, cols: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, StatsError> {
        for (i, r) in counts.iter().enumerate() {
            if r.len() != cols.len() {
                return Err(StatsError::Ragged { row: i, found: r.len(), expected: cols.len() });
            }
        }
        if counts.len() != rows.len() {
            return Err(StatsError::Ragged { row: counts.len(), found: counts.len(), expected: rows.len() });
        }
        let mut dropped = Vec::new();
        let keep_rows: Vec<usize> = (0..rows.len())
            .filter(|&i| {
                let keep = counts[i].iter().any(|&c| c > 0);
                if !keep {
                    dropped.push(format!("row {}", rows[i]));
                }
                keep
            })
            .collect();
        let keep_cols: Vec<usize> = (0..cols.len())
            .filter(|&j| {
                let keep = keep_rows.iter().any(|&i| counts[i][j] > 0);
                if !keep {
                    dropped.push(format!("column {}", cols[j]));
                }
                keep
            })
            .collect();
        for d in &dropped {
            log::info!("contingency table: dropped empty {d}");
        }
        if keep_rows.len() < 2 || keep_cols.len() < 2 {
            return Err(StatsError::Degenerate { rows: keep_rows.len(), cols: keep_cols.len() });
        }
        Ok(Self {
            rows: keep_rows.iter().map(|&i| rows[i].clone()).collect(),
            cols: keep_cols.iter().map(|&j| cols[j].clone()).collect(),
            counts: keep_rows
                .iter()
                .map(|&i| keep_cols.iter().map(|&j| counts[i][j]).collect())
                .collect(),
            dropped,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Group x stance counts. Rows are groups in sorted order; columns are Negative, Neutral, Positive.
pub fn contingency<G: Ord + Display>(stances: &[StanceLabel], groups: &[G]) -> Result<ContingencyTable, StatsError> {
    if stances.len() != groups.len() || stances.is_empty() {
        return Err(StatsError::LengthMismatch { stances: stances.len(), groups: groups.len() });
    }
    let mut cells: BTreeMap<&G, [u64; 3]> = BTreeMap::new();
    for (s, g) in stances.iter().zip(groups) {
        cells.entry(g).or_default()[s.code() as usize] += 1;
    }
    let rows = cells.keys().map(|g| g.to_string()).collect();
    let counts = cells.values().map(|c| c.to_vec()).collect();
    let cols = STANCE_COLUMNS.iter().map(|s| s.as_str().to_string()).collect();
    ContingencyTable::new(rows, cols, counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub expected: Vec<Vec<f64>>,
    pub min_expected: f64,
    /// Some expected count is below 5.
    pub low_expected: bool,
}

/// Pearson's statistic without continuity correction and its upper-tail p-value.
pub fn pearson_chi_square(t: &ContingencyTable) -> ChiSquareResult {
    let n = t.total() as f64;
    let row_sums: Vec<f64> = t.counts.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> = (0..t.cols.len())
        .map(|j| t.counts.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    let expected: Vec<Vec<f64>> = row_sums
        .iter()
        .map(|r| col_sums.iter().map(|c| r * c / n).collect())
        .collect();
    let mut statistic = 0.0;
    for (obs, exp) in t.counts.iter().zip(&expected) {
        for (&o, &e) in obs.iter().zip(exp) {
            let diff = o as f64 - e;
            statistic += diff * diff / e;
        }
    }
    let min_expected = expected.iter().flatten().fold(f64::INFINITY, |m, &e| m.min(e));
    let df = (t.rows.len() - 1) * (t.cols.len() - 1);
    ChiSquareResult {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df as f64),
        expected,
        min_expected,
        low_expected: min_expected < LOW_EXPECTED,
    }
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(df / 2.0, x / 2.0)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos approximation, with reflection below 0.5).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const EPS: f64 = f64::EPSILON;
const MAX_ITER: usize = 100_000;

/// Regularised lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        series(a, x)
    } else {
        1.0 - continued_fraction(a, x)
    }
}

/// Regularised upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - series(a, x)
    } else {
        continued_fraction(a, x)
    }
}

fn series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

/// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Shortest round-trip form, or `<1e-15` below the floor.
pub fn format_p(p: f64) -> String {
    if p < P_FLOOR {
        format!("<{P_FLOOR:e}")
    } else {
        format!("{p}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateStanceRow {
    pub drug: DrugId,
    pub state: StateCode,
    pub wave: WaveId,
    pub n: u64,
    pub sum: i64,
    pub mean: f64,
    pub class: StanceLabel,
}

/// Average numeric stance per (drug, state, wave). Means within `dead_zone` of 0 are Neutral.
pub fn state_stance_summary(
    tweets: &[(DrugId, StateCode, WaveId, StanceLabel)],
    dead_zone: f64,
) -> Result<Vec<StateStanceRow>, StatsError> {
    if !(dead_zone >= 0.0 && dead_zone.is_finite()) {
        return Err(StatsError::DeadZone(dead_zone));
    }
    let mut cells: BTreeMap<(DrugId, StateCode, WaveId), (u64, i64)> = BTreeMap::new();
    for &(drug, state, wave, label) in tweets {
        let c = cells.entry((drug, state, wave)).or_default();
        c.0 += 1;
        c.1 += label.numeric() as i64;
    }
    Ok(cells
        .into_iter()
        .map(|((drug, state, wave), (n, sum))| {
            let mean = sum as f64 / n as f64;
            let class = if mean > dead_zone {
                StanceLabel::Positive
            } else if mean < -dead_zone {
                StanceLabel::Negative
            } else {
                StanceLabel::Neutral
            };
            StateStanceRow { drug, state, wave, n, sum, mean, class }
        })
        .collect())
}

pub fn write_state_stance_csv<W: Write>(rows: &[StateStanceRow], dead_zone: f64, w: W) -> Result<(), StatsError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["drug", "state", "wave", "n", "mean", "class", "dead_zone"])?;
    for r in rows {
        wtr.write_record([
            r.drug.as_str().to_string(),
            r.state.abbr().to_string(),
            r.wave.to_string(),
            r.n.to_string(),
            format!("{}", r.mean),
            r.class.as_str().to_string(),
            format!("{dead_zone}"),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// One line of the test summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareRow {
    pub drug: DrugId,
    pub grouping: String,
    pub table: ContingencyTable,
    pub result: ChiSquareResult,
}

pub fn write_chisq_csv<W: Write>(rows: &[ChiSquareRow], w: W) -> Result<(), StatsError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["drug", "grouping", "statistic", "df", "p", "min_expected", "warning"])?;
    for r in rows {
        let mut warnings = Vec::new();
        if r.result.low_expected {
            warnings.push("low_expected".to_string());
        }
        warnings.extend(r.table.dropped.iter().map(|d| format!("dropped {d}")));
        wtr.write_record([
            r.drug.as_str().to_string(),
            r.grouping.clone(),
            format!("{}", r.result.statistic),
            r.result.df.to_string(),
            format_p(r.result.p_value),
            format!("{}", r.result.min_expected),
            warnings.join("; "),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Long-form counts: one line per (drug, grouping, group, stance).
pub fn write_contingency_csv<W: Write>(rows: &[ChiSquareRow], w: W) -> Result<(), StatsError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["drug", "grouping", "group", "stance", "count", "expected"])?;
    for r in rows {
        for (i, g) in r.table.rows.iter().enumerate() {
            for (j, s) in r.table.cols.iter().enumerate() {
                wtr.write_record([
                    r.drug.as_str(),
                    &r.grouping,
                    g,
                    s,
                    &r.table.counts[i][j].to_string(),
                    &format!("{}", r.result.expected[i][j]),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use StanceLabel::*;

    fn table(counts: &[&[u64]]) -> ContingencyTable {
        let rows = (0..counts.len()).map(|i| format!("g{i}")).collect();
        let cols = (0..counts[0].len()).map(|j| format!("s{j}")).collect();
        ContingencyTable::new(rows, cols, counts.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn two_by_two_all_ones() {
        let t = contingency(&[Positive, Negative, Positive, Negative], &["Left", "Left", "Right", "Right"]).unwrap();
        assert_eq!(t.rows, ["Left", "Right"]);
        assert_eq!(t.cols, ["negative", "positive"]);
        assert_eq!(t.counts, [[1, 1], [1, 1]]);
        assert_eq!(t.dropped, ["column neutral"]);
    }

    #[test]
    fn degenerate_and_mismatch() {
        assert!(matches!(
            contingency(&[Positive, Positive], &["a", "b"]),
            Err(StatsError::Degenerate { rows: 2, cols: 1 })
        ));
        assert!(matches!(contingency(&[Positive], &["a", "b"]), Err(StatsError::LengthMismatch { .. })));
        let t = ContingencyTable::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["x".into(), "y".into()],
            vec![vec![1, 2], vec![0, 0], vec![3, 1]],
        )
        .unwrap();
        assert_eq!(t.rows, ["a", "c"]);
    }

    #[test]
    fn independence_gives_p_one() {
        let r = pearson_chi_square(&table(&[&[10, 10], &[10, 10]]));
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn textbook_two_by_two() {
        let r = pearson_chi_square(&table(&[&[20, 30], &[30, 20]]));
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert_eq!(r.df, 1);
        assert!((r.p_value - 0.045_500_263_896_358_42).abs() < 1e-12);
        assert!(!r.low_expected);
    }

    #[test]
    fn df_two_closed_form() {
        for x in [0.1, 1.0, 3.7, 10.0, 45.0] {
            assert!((chi_square_sf(x, 2.0) - (-x / 2.0).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn p_formatting() {
        assert_eq!(format_p(1e-20), "<1e-15");
        assert_eq!(format_p(0.5), "0.5");
    }

    #[test]
    fn state_summary_examples() {
        let az: StateCode = "AZ".parse().unwrap();
        let d = DrugId::Ivermectin;
        let rows = state_stance_summary(
            &[
                (d, az, WaveId::Wave1, Positive),
                (d, az, WaveId::Wave1, Neutral),
                (d, az, WaveId::Wave1, Negative),
                (d, az, WaveId::Wave2, Positive),
                (d, az, WaveId::Wave2, Positive),
                (d, az, WaveId::Wave2, Neutral),
            ],
            DEFAULT_DEAD_ZONE,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].mean, rows[0].class), (0.0, Neutral));
        assert_eq!(rows[1].mean, 2.0 / 3.0);
        assert_eq!(rows[1].class, Positive);
        assert!(state_stance_summary(&[], -0.1).is_err());
    }
}
