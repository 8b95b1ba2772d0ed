//! Acceptance suite. Each criterion runs against an oracle written here,
//! independently of the library, and prints one PASS or FAIL line.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::{Datelike, Days, NaiveDate};
use pulse_core::content::{kmeans, kmeans_best_of, pca_fit_transform, EmbeddingMatrix, KMeansConfig};
use pulse_core::lexicon::{BoundaryMode, DrugId, DrugLexicon};
use pulse_core::stats::{chi_square_sf, pearson_chi_square, ContingencyTable};
use pulse_core::timeline::{wave_of, WaveId, WeekId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde_json::Value;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// Chi-square.

/// Upper-tail chi-square probability for integer df from the closed-form
/// expansions of the regularised incomplete gamma function.
fn oracle_sf(x: f64, df: usize) -> f64 {
    let h = x / 2.0;
    if df % 2 == 0 {
        let (mut term, mut sum) = (1.0, 1.0);
        for i in 1..df / 2 {
            term *= h / i as f64;
            sum += term;
        }
        (-h).exp() * sum
    } else {
        let mut sum = 0.0;
        // Gamma(i + 3/2) built up from Gamma(3/2) = sqrt(pi) / 2.
        let mut gamma = std::f64::consts::PI.sqrt() / 2.0;
        let mut pow = h.sqrt();
        for i in 0..(df - 1) / 2 {
            sum += pow / gamma;
            pow *= h;
            gamma *= i as f64 + 1.5;
        }
        erfc(h.sqrt()) + (-h).exp() * sum
    }
}

fn erfc(z: f64) -> f64 {
    if z < 3.0 {
        // Maclaurin series of erf.
        let (mut term, mut sum, mut n) = (z, z, 0.0);
        while term.abs() > 1e-18 {
            n += 1.0;
            term *= -z * z / n;
            sum += term / (2.0 * n + 1.0);
        }
        1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
    } else {
        // Continued fraction evaluated bottom-up.
        let mut f = z;
        for k in (1..200).rev() {
            f = z + (k as f64 / 2.0) / f;
        }
        (-z * z).exp() / std::f64::consts::PI.sqrt() / f
    }
}

fn oracle_statistic(counts: &[Vec<u64>]) -> (f64, usize) {
    let rows: Vec<usize> = (0..counts.len()).filter(|&i| counts[i].iter().sum::<u64>() > 0).collect();
    let cols: Vec<usize> = (0..counts[0].len()).filter(|&j| counts.iter().map(|r| r[j]).sum::<u64>() > 0).collect();
    let n: f64 = counts.iter().flatten().sum::<u64>() as f64;
    let mut s = 0.0;
    for &i in &rows {
        let ri: f64 = counts[i].iter().sum::<u64>() as f64;
        for &j in &cols {
            let cj: f64 = counts.iter().map(|r| r[j]).sum::<u64>() as f64;
            let e = ri * cj / n;
            s += (counts[i][j] as f64 - e).powi(2) / e;
        }
    }
    (s, (rows.len() - 1) * (cols.len() - 1))
}

fn chi_square() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst_s, mut worst_p, mut tables) = (0.0f64, 0.0f64, 0);
    while tables < 50 {
        let (r, c) = (rng.gen_range(2..=5), rng.gen_range(2..=5));
        // Small cells now and then so some tables have empty rows or columns.
        let hi = if rng.gen_bool(0.2) { 2 } else { 500 };
        let counts: Vec<Vec<u64>> = (0..r).map(|_| (0..c).map(|_| rng.gen_range(0..=hi)).collect()).collect();
        let labels = |p: &str, k: usize| (0..k).map(|i| format!("{p}{i}")).collect();
        let Ok(t) = ContingencyTable::new(labels("r", r), labels("c", c), counts.clone()) else { continue };
        tables += 1;
        let got = pearson_chi_square(&t);
        let (s, df) = oracle_statistic(&counts);
        ensure(got.df == df, || format!("df {} vs {df} for {counts:?}", got.df))?;
        worst_s = worst_s.max((got.statistic - s).abs());
        worst_p = worst_p.max((got.p_value - oracle_sf(s, df)).abs());
    }
    ensure(worst_s <= 1e-9, || format!("statistic off by {worst_s:e}"))?;
    ensure(worst_p <= 1e-10, || format!("p off by {worst_p:e}"))?;
    let p4 = chi_square_sf(4.0, 1.0);
    ensure((p4 - 0.0455).abs() < 5e-6, || format!("p(4, df=1) = {p4}"))?;
    ensure((p4 - oracle_sf(4.0, 1)).abs() < 1e-12, || format!("p(4, df=1) = {p4} vs oracle"))?;
    for s in [0.01, 0.5, 2.0, 7.3, 19.0, 60.0] {
        let p = chi_square_sf(s, 2.0);
        ensure((p - (-s / 2.0).exp()).abs() <= 1e-12, || format!("p({s}, df=2) = {p}"))?;
    }
    Ok(format!("50 tables, max |dstat| {worst_s:.1e}, max |dp| {worst_p:.1e}"))
}

// PCA.

/// Classical Jacobi: rotate away the largest off-diagonal entry until none is left.
fn jacobi(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _ in 0..10_000 {
        let (mut p, mut q, mut big) = (0, 0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                if a[i][j].abs() > big {
                    (p, q, big) = (i, j, a[i][j].abs());
                }
            }
        }
        if big < 1e-300 {
            break;
        }
        let theta = 0.5 * (2.0 * a[p][q]).atan2(a[q][q] - a[p][p]);
        let (s, c) = theta.sin_cos();
        for k in 0..n {
            let (akp, akq) = (a[k][p], a[k][q]);
            a[k][p] = c * akp - s * akq;
            a[k][q] = s * akp + c * akq;
        }
        for k in 0..n {
            let (apk, aqk) = (a[p][k], a[q][k]);
            a[p][k] = c * apk - s * aqk;
            a[q][k] = s * apk + c * aqk;
        }
        for row in v.iter_mut() {
            let (vp, vq) = (row[p], row[q]);
            row[p] = c * vp - s * vq;
            row[q] = s * vp + c * vq;
        }
    }
    let values = (0..n).map(|i| a[i][i]).collect();
    let vectors = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
    (values, vectors)
}

fn oriented(mut v: Vec<f64>) -> Vec<f64> {
    let big = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    if big < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, d) = (rows.len(), rows[0].len());
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    (0..d)
        .map(|a| {
            (0..d)
                .map(|b| rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (n - 1) as f64)
                .collect()
        })
        .collect()
}

fn pca() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut compared, mut worst) = (0, 0.0f64);
    for trial in 0..300 {
        let d = rng.gen_range(1..=8);
        let n = rng.gen_range(2..=12);
        let mut rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
        // Some trials get constant columns.
        if trial % 3 == 0 {
            let j = rng.gen_range(0..d);
            rows.iter_mut().for_each(|r| r[j] = 1.5);
        }
        let r = (n - 1).min(d);
        let x = EmbeddingMatrix::from_rows(d, rows.clone()).map_err(|e| e.to_string())?;
        let (model, _) = pca_fit_transform(&x, r).map_err(|e| e.to_string())?;
        let (values, vectors) = jacobi(covariance(&rows));
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let total: f64 = values.iter().sum();
        if total <= 1e-12 {
            ensure(model.degenerate, || "zero-variance input not flagged".into())?;
            continue;
        }
        let scale = values[order[0]];
        for k in 0..r {
            let lam = values[order[k]];
            let ratio = lam.max(0.0) / total;
            worst = worst.max((model.variance_ratios[k] - ratio).abs());
            // Vectors are only defined for isolated eigenvalues.
            let gap = order
                .iter()
                .filter(|&&o| o != order[k])
                .map(|&o| (values[o] - lam).abs())
                .fold(f64::INFINITY, f64::min);
            if lam > 1e-9 * scale && gap > 1e-6 * scale {
                let want = oriented(vectors[order[k]].clone());
                let diff = want.iter().zip(&model.components[k]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                worst = worst.max(diff);
                compared += 1;
            }
        }
    }
    ensure(worst <= 1e-8, || format!("max deviation {worst:e}"))?;

    // Zero variance: ratios 0 and an orthonormal basis.
    let flat = EmbeddingMatrix::from_rows(4, vec![vec![2.0, -1.0, 0.0, 3.0]; 6]).map_err(|e| e.to_string())?;
    let (m, y) = pca_fit_transform(&flat, 3).map_err(|e| e.to_string())?;
    ensure(m.degenerate && m.variance_ratios.iter().all(|&v| v == 0.0), || "zero-variance ratios".into())?;
    ensure(y.as_slice().iter().all(|&v| v == 0.0), || "zero-variance scores".into())?;
    for a in 0..3 {
        for b in 0..3 {
            let dot: f64 = m.components[a].iter().zip(&m.components[b]).map(|(p, q)| p * q).sum();
            ensure((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12, || "zero-variance basis".into())?;
        }
    }
    // Rank deficient: three points in 6 dimensions have rank 2 after centring.
    let thin = EmbeddingMatrix::from_rows(6, vec![vec![1.0, 0.0, 2.0, 0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0, 0.0, 3.0, 0.0], vec![2.0, 2.0, 1.0, 0.0, 1.0, 1.0]])
        .map_err(|e| e.to_string())?;
    let (m, _) = pca_fit_transform(&thin, 2).map_err(|e| e.to_string())?;
    ensure((m.explained() - 1.0).abs() < 1e-12, || format!("rank-2 data explains {}", m.explained()))?;
    ensure(pca_fit_transform(&thin, 3).is_err(), || "r beyond n-1 accepted".into())?;
    Ok(format!("300 matrices up to d = 8, {compared} components compared, max deviation {worst:.1e}"))
}

// K-Means.

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Lowest within-cluster sum of squares over every assignment using all k clusters.
fn brute_force(pts: &[Vec<f64>], k: usize) -> f64 {
    let n = pts.len();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    loop {
        let used: BTreeSet<usize> = labels.iter().copied().collect();
        if used.len() == k {
            let mut obj = 0.0;
            for c in 0..k {
                let members: Vec<&Vec<f64>> = (0..n).filter(|&i| labels[i] == c).map(|i| &pts[i]).collect();
                let d = pts[0].len();
                let centre: Vec<f64> = (0..d).map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64).collect();
                obj += members.iter().map(|p| sq(p, &centre)).sum::<f64>();
            }
            best = best.min(obj);
        }
        let mut i = 0;
        while i < n && labels[i] == k - 1 {
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
        labels[i] += 1;
    }
}

fn kmeans_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for s in 0..100u64 {
        let (n, d) = (rng.gen_range(5..60), rng.gen_range(1..6));
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-4.0..4.0)).collect()).collect();
        let x = EmbeddingMatrix::from_rows(d, rows).map_err(|e| e.to_string())?;
        let m = kmeans(&x, &KMeansConfig { k: rng.gen_range(1..=5.min(n)), seed: s, max_iter: 300 }).map_err(|e| e.to_string())?;
        ensure(m.history.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].max(1.0)), || format!("objective rose, seed {s}"))?;
    }

    for s in 0..100u64 {
        let radius = 1.0;
        let per = 20;
        let mut rows = Vec::new();
        for blob in 0..2 {
            let cx = blob as f64 * 10.0 * radius * 2.0;
            for _ in 0..per {
                let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let r: f64 = rng.gen_range(0.0..radius);
                rows.push(vec![cx + r * a.cos(), r * a.sin()]);
            }
        }
        let x = EmbeddingMatrix::from_rows(2, rows).map_err(|e| e.to_string())?;
        let m = kmeans(&x, &KMeansConfig { k: 2, seed: s, max_iter: 300 }).map_err(|e| e.to_string())?;
        let first = m.assignments[0];
        let ok = (0..2 * per).all(|i| (m.assignments[i] == first) == (i < per));
        ensure(ok, || format!("two blobs not recovered for seed {s}"))?;
    }

    let mut optimal = 0;
    for t in 0..100u64 {
        let n = rng.gen_range(4..=10);
        let k = rng.gen_range(2..=3);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)]).collect();
        let x = EmbeddingMatrix::from_rows(2, pts.clone()).map_err(|e| e.to_string())?;
        let seeds: Vec<u64> = (0..20).map(|i| t * 100 + i).collect();
        let m = kmeans_best_of(&x, k, &seeds, 300).map_err(|e| e.to_string())?;
        if (m.objective - brute_force(&pts, k)).abs() <= 1e-9 {
            optimal += 1;
        }
    }
    ensure(optimal >= 95, || format!("optimal in {optimal}/100 small instances"))?;
    Ok(format!("100 monotone runs, 100/100 blobs, optimal in {optimal}/100"))
}

// Lexicon.

const PUBLISHED: [(DrugId, &[&str]); 3] = [
    (DrugId::Hydroxychloroquine, &["hydroxych", "HCQ", "plaq", "plaquenil", "hydroquin", "axemal"]),
    (DrugId::Ivermectin, &["ivermectin", "stromectol", "soolantra", "sklice"]),
    (DrugId::Molnupiravir, &["molnupiravir", "merck's antiviral", "merck's pill", "merck's drug"]),
];

const PIECES: &[&str] = &[
    "hydroxych", "hydroxychloroquine", "HCQ", "hcq", "Plaq", "plaqu", "plaquenil", "hydroquin", "axemal", "ivermectin",
    "Ivermectins", "stromectol", "soolantra", "sklice", "molnupiravir", "merck's", "Merck", "pill", "antiviral", "drug",
    "remdesivir", "veklury", "hydroxy", "chloroquine", "plaque", "ivermecti", "merck s", "x", "7", "é", "the", "works",
];
const SEPARATORS: &[&str] = &["", " ", "  ", "'", "-", "#", "@", ".", ",", "\n", "🔥", "_", "/", "’"];

fn lexicon() -> Check {
    let lex = DrugLexicon::bundled();
    let mut sentences = 0;
    let mut all: Vec<(DrugId, String)> = PUBLISHED.iter().flat_map(|(d, ks)| ks.iter().map(|k| (*d, k.to_string()))).collect();
    all.extend(lex.matcher().keywords().map(|(d, k)| (d, k.pattern.clone())));
    for (drug, kw) in &all {
        for text in [format!("{kw}"), format!("they said {kw} helps"), format!("Is {}?", kw.to_uppercase()), format!("#{kw}")] {
            let got = lex.match_drugs(&text);
            ensure(got == BTreeSet::from([*drug]), || format!("{text:?} gave {got:?}"))?;
            sentences += 1;
        }
    }

    let sep = r"[^\p{Alphabetic}\p{N}]";
    let rules: Vec<(DrugId, Regex)> = lex
        .matcher()
        .keywords()
        .map(|(d, k)| {
            let body = k.tokens.iter().map(|t| regex::escape(t)).collect::<Vec<_>>().join(&format!("{sep}+"));
            let tail = if k.mode == BoundaryMode::TokenPrefix { String::new() } else { format!("(?:{sep}|$)") };
            (d, Regex::new(&format!("(?:^|{sep}){body}{tail}")).unwrap())
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..10_000 {
        let parts = rng.gen_range(0..8);
        let mut text = String::new();
        for _ in 0..parts {
            let p = PIECES[rng.gen_range(0..PIECES.len())];
            if rng.gen_bool(0.3) {
                text.push_str(&p.to_uppercase());
            } else {
                text.push_str(p);
            }
            text.push_str(SEPARATORS[rng.gen_range(0..SEPARATORS.len())]);
        }
        let lower = text.to_lowercase();
        let want: BTreeSet<DrugId> = rules.iter().filter(|(_, re)| re.is_match(&lower)).map(|(d, _)| *d).collect();
        let got = lex.match_drugs(&text);
        ensure(got == want, || format!("{text:?}: matcher {got:?}, oracle {want:?}"))?;
        ensure(lex.match_drugs(&text.to_uppercase()) == got, || format!("{text:?}: case changes result"))?;
    }
    Ok(format!("{sentences} keyword sentences, 10000 adversarial strings"))
}

// Calendar.

/// Zeller's congruence: 0 = Saturday, ..., 3 = Tuesday.
fn zeller(y: i32, m: u32, d: u32) -> i32 {
    let (y, m) = if m < 3 { (y - 1, m as i32 + 12) } else { (y, m as i32) };
    let (k, j) = (y.rem_euclid(100), y.div_euclid(100));
    (d as i32 + 13 * (m + 1) / 5 + k + k / 4 + j / 4 + 5 * j).rem_euclid(7)
}

fn calendar() -> Check {
    let d = |y, m, dd| NaiveDate::from_ymd_opt(y, m, dd).unwrap();
    ensure(WeekId::containing(d(2020, 1, 29)).start() == d(2020, 1, 28), || "2020-01-29 week".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let base = d(1950, 1, 1);
    for _ in 0..1000 {
        let day = base + Days::new(rng.gen_range(0..40_000));
        let w = WeekId::containing(day);
        let s = w.start();
        ensure(zeller(s.year(), s.month(), s.day()) == 3, || format!("{day}: week starts {s}, not a Tuesday"))?;
        let back = (zeller(day.year(), day.month(), day.day()) - 3).rem_euclid(7) as u64;
        ensure(s == day - Days::new(back) && w.end() == s + Days::new(6), || format!("{day}: week {s}..{}", w.end()))?;
    }
    let waves = [
        (d(2020, 1, 29), Some(WaveId::Wave1)),
        (d(2020, 9, 15), Some(WaveId::Wave1)),
        (d(2020, 9, 16), Some(WaveId::Wave2)),
        (d(2021, 7, 6), Some(WaveId::Wave2)),
        (d(2021, 7, 7), Some(WaveId::Wave3)),
        (d(2021, 11, 30), Some(WaveId::Wave3)),
        (d(2020, 1, 28), None),
        (d(2021, 12, 1), None),
    ];
    for (day, want) in waves {
        ensure(wave_of(day).ok() == want, || format!("{day}: wave {:?}", wave_of(day).ok()))?;
    }
    Ok("1000 random dates, 8 wave boundary dates".into())
}

// End to end.

fn pulse(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pulse")).args(args).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("pulse {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))
}

fn run_pipeline(fixture: &Path, work: &Path, threads: &str) -> Result<(), String> {
    let f = |name: &str| fixture.join(name).to_str().unwrap().to_string();
    pulse(&[
        "--work", work.to_str().unwrap(), "--threads", threads, "--seed", "11", "run",
        "--in", &f("synthetic_tweets.jsonl"), "--cases", &f("jhu.csv"), "--roster", &f("roster.csv"), "--m3", &f("m3.csv"),
    ])
}

fn read_csv(path: &Path) -> Result<Vec<BTreeMap<String, String>>, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    rdr.deserialize().map(|r| r.map_err(|e| e.to_string())).collect()
}

fn end_to_end(dir: &Path) -> Check {
    let fixture = dir.join("fixture");
    pulse(&["--seed", "11", "synth", "--out", fixture.to_str().unwrap()])?;
    let work = dir.join("e2e");
    run_pipeline(&fixture, &work, "2")?;
    let truth: Value = serde_json::from_str(&std::fs::read_to_string(fixture.join("truth.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;

    let trend = read_csv(&work.join("trend.csv"))?;
    let got: BTreeMap<(String, String), u64> = trend
        .iter()
        .filter(|r| r["tweet_count"] != "0")
        .map(|r| ((r["week_start"].clone(), r["drug"].clone()), r["tweet_count"].parse().unwrap()))
        .collect();
    let want: BTreeMap<(String, String), u64> = truth["weekly_counts"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|w| w["count"].as_u64() != Some(0))
        .map(|w| ((w["week_start"].as_str().unwrap().into(), w["drug"].as_str().unwrap().into()), w["count"].as_u64().unwrap()))
        .collect();
    ensure(got == want, || format!("weekly counts differ: {} planted, {} recovered", want.len(), got.len()))?;
    let cases: BTreeMap<String, u64> = trend.iter().map(|r| (r["week_start"].clone(), r["new_cases"].parse().unwrap())).collect();
    for w in truth["weekly_new_cases"].as_array().unwrap() {
        let week = w["week_start"].as_str().unwrap();
        ensure(cases.get(week).copied() == w["new_cases"].as_u64(), || format!("new cases differ in week {week}"))?;
    }

    let cont = read_csv(&work.join("contingency.csv"))?;
    let tables = truth["tables"].as_array().unwrap();
    for t in tables {
        let (drug, grouping) = (t["drug"].as_str().unwrap(), t["grouping"].as_str().unwrap());
        let mut got: BTreeMap<String, [u64; 3]> = BTreeMap::new();
        for r in cont.iter().filter(|r| r["drug"] == drug && r["grouping"] == grouping) {
            let col = ["negative", "neutral", "positive"].iter().position(|s| *s == r["stance"]).unwrap();
            got.entry(r["group"].clone()).or_default()[col] = r["count"].parse().unwrap();
        }
        let want: BTreeMap<String, [u64; 3]> = t["rows"]
            .as_array()
            .unwrap()
            .iter()
            .zip(t["counts"].as_array().unwrap())
            .map(|(g, c)| {
                let c: Vec<u64> = c.as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
                (g.as_str().unwrap().to_string(), [c[0], c[1], c[2]])
            })
            .collect();
        ensure(got == want, || format!("{drug}/{grouping}: table {got:?}, planted {want:?}"))?;
    }

    let states = read_csv(&work.join("state_stance.csv"))?;
    let got: BTreeMap<(String, String, String), (u64, f64)> = states
        .iter()
        .map(|r| ((r["drug"].clone(), r["state"].clone(), r["wave"].clone()), (r["n"].parse().unwrap(), r["mean"].parse().unwrap())))
        .collect();
    let cells = truth["state_cells"].as_array().unwrap();
    ensure(got.len() == cells.len(), || format!("{} state cells, {} planted", got.len(), cells.len()))?;
    let mut worst = 0.0f64;
    for c in cells {
        let key = (c["drug"].as_str().unwrap().into(), c["state"].as_str().unwrap().into(), c["wave"].to_string());
        let (n, sum) = (c["n"].as_u64().unwrap(), c["sum"].as_i64().unwrap());
        let Some(&(gn, mean)) = got.get(&key) else { return Err(format!("state cell {key:?} missing")) };
        ensure(gn == n, || format!("{key:?}: n {gn} vs {n}"))?;
        worst = worst.max((mean - sum as f64 / n as f64).abs());
    }
    ensure(worst <= 1e-12, || format!("state mean off by {worst:e}"))?;

    let excluded: BTreeSet<String> = read_csv(&work.join("excluded_multi.csv"))?.into_iter().map(|r| r["tweet_id"].clone()).collect();
    let planted: BTreeSet<String> = truth["multi_drug_ids"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().into()).collect();
    ensure(excluded == planted, || format!("excluded {excluded:?}, planted {planted:?}"))?;

    let chisq = read_csv(&work.join("chisq.csv"))?;
    let p_of = |drug: &str| -> Result<f64, String> {
        chisq
            .iter()
            .find(|r| r["drug"] == drug && r["grouping"] == "partisanship")
            .map(|r| r["p"].parse().unwrap())
            .ok_or_else(|| format!("no partisanship test for {drug}"))
    };
    let (dep, ind) = (truth["dependent_drug"].as_str().unwrap(), truth["independent_drug"].as_str().unwrap());
    let (p_dep, p_ind) = (p_of(dep)?, p_of(ind)?);
    ensure(p_dep < 0.001, || format!("dependent table p = {p_dep}"))?;
    ensure(p_ind > 0.1, || format!("independent table p = {p_ind}"))?;
    Ok(format!(
        "{} weekly cells, {} tables, {} state cells, {} multi-drug ids exact; p = {p_dep:.1e} / {p_ind:.3}",
        want.len(),
        tables.len(),
        cells.len(),
        planted.len()
    ))
}

fn artefacts(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let p = e.map_err(|e| e.to_string())?.path();
        if p.extension().is_some_and(|x| x == "csv" || x == "svg") {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

fn determinism(dir: &Path) -> Check {
    let fixture = dir.join("fixture");
    let (one, four) = (dir.join("t1"), dir.join("t4"));
    run_pipeline(&fixture, &one, "1")?;
    run_pipeline(&fixture, &four, "4")?;
    let (a, b) = (artefacts(&one)?, artefacts(&four)?);
    ensure(a.len() >= 15, || format!("only {} artefacts", a.len()))?;
    ensure(a.keys().eq(b.keys()), || "different artefact sets".into())?;
    for (name, bytes) in &a {
        ensure(&b[name] == bytes, || format!("{name} differs between 1 and 4 threads"))?;
    }
    Ok(format!("{} CSV/SVG files identical at 1 and 4 threads", a.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = tmp.path().to_path_buf();
    let criteria: Vec<(&str, Duration, Box<dyn Fn() -> Check>)> = vec![
        ("chi-square oracle equivalence", Duration::from_secs(5), Box::new(chi_square)),
        ("PCA oracle equivalence", Duration::from_secs(5), Box::new(pca)),
        ("k-means monotonicity, recovery and optimality", Duration::from_secs(30), Box::new(kmeans_checks)),
        ("lexicon fidelity", Duration::from_secs(10), Box::new(lexicon)),
        ("calendar correctness", Duration::from_secs(2), Box::new(calendar)),
        ("end-to-end synthetic reproduction", Duration::from_secs(60), Box::new({
            let d = dir.clone();
            move || end_to_end(&d)
        })),
        ("determinism across thread counts", Duration::from_secs(120), Box::new({
            let d = dir.clone();
            move || determinism(&d)
        })),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let t = Instant::now();
        let res = check();
        let secs = t.elapsed().as_secs_f64();
        let res = res.and_then(|m| {
            if t.elapsed() > budget {
                Err(format!("{m}; took {secs:.2} s, budget {} s", budget.as_secs()))
            } else {
                Ok(m)
            }
        });
        match res {
            Ok(m) => println!("PASS  {name} ({secs:.2} s): {m}"),
            Err(m) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2} s): {m}");
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
