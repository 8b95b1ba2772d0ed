//! Hand-built, deterministic SVG charts. Coordinates are printed with two
//! decimals so output bytes depend only on the input data.

use std::collections::BTreeMap;
use std::fmt::Write;

use pulse_core::geo::StateCode;
use pulse_core::lexicon::DrugId;
use pulse_core::stance::StanceLabel;
use pulse_core::timeline::{TrendSeries, WaveId};

use crate::error::CliError;

const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";

fn drug_color(d: DrugId) -> &'static str {
    match d {
        DrugId::Hydroxychloroquine => "#d62728",
        DrugId::Ivermectin => "#1f77b4",
        DrugId::Molnupiravir => "#2ca02c",
        DrugId::Remdesivir => "#9467bd",
    }
}

pub fn stance_color(s: StanceLabel) -> &'static str {
    match s {
        StanceLabel::Negative => "#c53030",
        StanceLabel::Neutral => "#a0aec0",
        StanceLabel::Positive => "#2b6cb0",
    }
}

fn header(w: u32, h: u32, title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    )
    .unwrap();
    writeln!(s, "<title>{}</title>", escape(title)).unwrap();
    writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>").unwrap();
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Weekly per-drug tweet counts with the weekly new-case series as a step line on its own scale.
pub fn trend_svg(series: &TrendSeries) -> Result<String, CliError> {
    if series.is_empty() {
        return Err(CliError::Contract("trend series is empty; nothing to chart".into()));
    }
    let (w, h) = (960u32, 420u32);
    let (left, right, top, bottom) = (60.0, 70.0, 30.0, 60.0);
    let pw = w as f64 - left - right;
    let ph = h as f64 - top - bottom;
    let n = series.weeks.len();
    let x = |i: usize| if n == 1 { left + pw / 2.0 } else { left + pw * i as f64 / (n - 1) as f64 };
    let max_tweets = series
        .weeks
        .iter()
        .flat_map(|wk| wk.tweets.values().copied())
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let max_cases = series.weeks.iter().map(|wk| wk.new_cases).max().unwrap_or(0).max(1) as f64;
    let y = |v: f64, max: f64| top + ph - v / max * ph;

    let mut s = header(w, h, "Weekly drug tweets and new cases");
    writeln!(
        s,
        "<line x1=\"{left:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#333333\"/>",
        top + ph,
        left + pw,
        top + ph
    )
    .unwrap();
    writeln!(s, "<line x1=\"{left:.2}\" y1=\"{top:.2}\" x2=\"{left:.2}\" y2=\"{:.2}\" stroke=\"#333333\"/>", top + ph)
        .unwrap();
    writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" {FONT}>{}</text>", left - 6.0, top + 4.0, max_tweets)
        .unwrap();
    writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" {FONT}>0</text>", left - 6.0, top + ph + 4.0).unwrap();
    writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"start\" {FONT} fill=\"#7f7f7f\">{} cases</text>",
        left + pw + 6.0,
        top + 4.0,
        max_cases
    )
    .unwrap();
    let ticks: Vec<usize> = if n == 1 { vec![0] } else { vec![0, (n - 1) / 2, n - 1] };
    for i in ticks {
        writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>{}</text>",
            x(i),
            top + ph + 16.0,
            series.weeks[i].week
        )
        .unwrap();
    }

    // Stepped case line.
    let mut path = String::new();
    let half = if n == 1 { 6.0 } else { pw / (n - 1) as f64 / 2.0 };
    for (i, wk) in series.weeks.iter().enumerate() {
        let yy = y(wk.new_cases as f64, max_cases);
        if i == 0 {
            write!(path, "M{:.2},{yy:.2}", x(0) - half).unwrap();
        } else {
            write!(path, " V{yy:.2}").unwrap();
        }
        write!(path, " H{:.2}", x(i) + half).unwrap();
    }
    writeln!(s, "<path d=\"{path}\" fill=\"none\" stroke=\"#7f7f7f\" stroke-width=\"1.5\"/>").unwrap();

    for drug in DrugId::ALL {
        let pts: Vec<String> = series
            .weeks
            .iter()
            .enumerate()
            .map(|(i, wk)| format!("{:.2},{:.2}", x(i), y(*wk.tweets.get(&drug).unwrap_or(&0) as f64, max_tweets)))
            .collect();
        writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"><title>{drug}</title></polyline>",
            pts.join(" "),
            drug_color(drug)
        )
        .unwrap();
    }
    for (k, drug) in DrugId::ALL.iter().enumerate() {
        let lx = left + 10.0 + 160.0 * k as f64;
        let ly = h as f64 - 18.0;
        writeln!(s, "<rect x=\"{lx:.2}\" y=\"{:.2}\" width=\"12\" height=\"4\" fill=\"{}\"/>", ly - 4.0, drug_color(*drug))
            .unwrap();
        writeln!(s, "<text x=\"{:.2}\" y=\"{ly:.2}\" {FONT}>{drug}</text>", lx + 16.0).unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Integer segment heights from cumulative rounding, so they always sum to `height`.
pub fn stack_heights(counts: [u64; 3], height: u32) -> [u32; 3] {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return [0, 0, 0];
    }
    let mut out = [0u32; 3];
    let mut cum = 0u64;
    let mut prev = 0u32;
    for (i, c) in counts.iter().enumerate() {
        cum += c;
        let edge = ((cum as f64 / total as f64) * height as f64).round() as u32;
        out[i] = edge - prev;
        prev = edge;
    }
    out
}

/// One stacked bar per (label, negative/neutral/positive counts).
pub fn stance_shares_svg(bars: &[(String, [u64; 3])]) -> Result<String, CliError> {
    if bars.is_empty() {
        return Err(CliError::Contract("no stance shares to chart".into()));
    }
    let bar_h = 300u32;
    let (bw, gap, left, top) = (36u32, 14u32, 50u32, 30u32);
    let w = left + bars.len() as u32 * (bw + gap) + 140;
    let h = top + bar_h + 120;
    let mut s = header(w, h, "Stance shares per drug and wave");
    for (i, (label, counts)) in bars.iter().enumerate() {
        let x = left + i as u32 * (bw + gap);
        let heights = stack_heights(*counts, bar_h);
        let total: u64 = counts.iter().sum();
        let mut y = top + bar_h;
        for (k, stance) in StanceLabel::ALL.iter().enumerate() {
            let hh = heights[k];
            y -= hh;
            let pct = if total == 0 { 0.0 } else { 100.0 * counts[k] as f64 / total as f64 };
            writeln!(
                s,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{bw}\" height=\"{hh}\" fill=\"{}\"><title>{} {}: {pct:.1}%</title></rect>",
                stance_color(*stance),
                escape(label),
                stance.as_str()
            )
            .unwrap();
        }
        writeln!(
            s,
            "<text transform=\"translate({},{}) rotate(60)\" {FONT}>{}</text>",
            x + bw / 2,
            top + bar_h + 8,
            escape(label)
        )
        .unwrap();
    }
    let lx = w - 120;
    for (k, stance) in StanceLabel::ALL.iter().rev().enumerate() {
        let ly = top + 20 * k as u32;
        writeln!(s, "<rect x=\"{lx}\" y=\"{ly}\" width=\"12\" height=\"12\" fill=\"{}\"/>", stance_color(*stance)).unwrap();
        writeln!(s, "<text x=\"{}\" y=\"{}\" {FONT}>{} ({})</text>", lx + 16, ly + 10, stance.as_str(), stance.numeric())
            .unwrap();
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Tile-grid position (column, row) of each state.
fn tile(abbr: &str) -> Option<(u32, u32)> {
    const GRID: [(&str, u32, u32); 51] = [
        ("AK", 0, 0), ("ME", 11, 0),
        ("VT", 10, 1), ("NH", 11, 1),
        ("WA", 1, 2), ("ID", 2, 2), ("MT", 3, 2), ("ND", 4, 2), ("MN", 5, 2), ("IL", 6, 2), ("WI", 7, 2),
        ("MI", 8, 2), ("NY", 9, 2), ("RI", 10, 2), ("MA", 11, 2),
        ("OR", 1, 3), ("NV", 2, 3), ("WY", 3, 3), ("SD", 4, 3), ("IA", 5, 3), ("IN", 6, 3), ("OH", 7, 3),
        ("PA", 8, 3), ("NJ", 9, 3), ("CT", 10, 3),
        ("CA", 1, 4), ("UT", 2, 4), ("CO", 3, 4), ("NE", 4, 4), ("MO", 5, 4), ("KY", 6, 4), ("WV", 7, 4),
        ("VA", 8, 4), ("MD", 9, 4), ("DE", 10, 4),
        ("AZ", 2, 5), ("NM", 3, 5), ("KS", 4, 5), ("AR", 5, 5), ("TN", 6, 5), ("NC", 7, 5), ("SC", 8, 5),
        ("OK", 4, 6), ("LA", 5, 6), ("MS", 6, 6), ("AL", 7, 6), ("GA", 8, 6),
        ("HI", 0, 7), ("TX", 4, 7), ("FL", 9, 7), ("PR", 11, 7),
    ];
    GRID.iter().find(|(a, _, _)| *a == abbr).map(|&(_, c, r)| (c, r))
}

/// One tile-grid panel per (drug, wave); tiles coloured by stance class, blank when no tweets.
pub fn state_map_svg(cells: &BTreeMap<(DrugId, WaveId, StateCode), (f64, StanceLabel)>) -> Result<String, CliError> {
    if cells.is_empty() {
        return Err(CliError::Contract("no state summaries to chart".into()));
    }
    let tile_px = 20u32;
    let (pw, ph) = (12 * tile_px + 20, 8 * tile_px + 30);
    let w = 3 * pw + 20;
    let h = 4 * ph + 40;
    let mut s = header(w, h, "Average stance per state and wave");
    for (r, drug) in DrugId::ALL.iter().enumerate() {
        for (c, wave) in WaveId::ALL.iter().enumerate() {
            let ox = 10 + c as u32 * pw;
            let oy = 10 + r as u32 * ph;
            writeln!(s, "<text x=\"{ox}\" y=\"{}\" {FONT}>{drug} wave {wave}</text>", oy + 10).unwrap();
            for state in StateCode::all() {
                let (tc, tr) = tile(state.abbr()).expect("every state has a tile");
                let x = ox + tc * tile_px;
                let y = oy + 16 + tr * tile_px;
                match cells.get(&(*drug, *wave, state)) {
                    Some((mean, class)) => writeln!(
                        s,
                        "<rect x=\"{x}\" y=\"{y}\" width=\"{}\" height=\"{}\" fill=\"{}\"><title>{} {mean:.4}</title></rect>",
                        tile_px - 2,
                        tile_px - 2,
                        stance_color(*class),
                        state.abbr()
                    ),
                    None => writeln!(
                        s,
                        "<rect x=\"{x}\" y=\"{y}\" width=\"{}\" height=\"{}\" fill=\"#ffffff\" stroke=\"#dddddd\"/>",
                        tile_px - 2,
                        tile_px - 2
                    ),
                }
                .unwrap();
                writeln!(
                    s,
                    "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"7\">{}</text>",
                    x + (tile_px - 2) / 2,
                    y + 12,
                    state.abbr()
                )
                .unwrap();
            }
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}
