//! CSV layouts. Floats are written with 9 significant digits so that reruns
//! compare byte for byte.

use crate::indexer::{GwRegion, IndexResult};
use crate::simulator::{Comparison, SimReport};
use crate::solver::ValueTables;

pub const SIGNIFICANT_DIGITS: usize = 9;

pub const VALUE_TABLE_COLUMNS: [&str; 7] = ["pi", "v_s", "v_ns", "v_tilde_s", "v_tilde_ns", "v", "v_tilde"];
pub const SIMULATION_COLUMNS: [&str; 6] = ["beta", "policy", "mean_reward", "stderr", "episodes", "gain_pct"];
pub const COMPARISON_COLUMNS: [&str; 6] = ["beta", "myopic", "index", "gain_pct", "diff_mean", "diff_stderr"];
pub const REGION_COLUMNS: [&str; 4] = ["w", "pi_l", "pi_tilde_l", "empty"];
pub const INDEX_COLUMNS: [&str; 5] = ["pi", "y", "index_w", "bisection_width", "certified"];

/// Formats like C's `%.9g`.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let p = SIGNIFICANT_DIGITS as i32;
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

fn write_rows(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn value_table_csv(tables: &ValueTables) -> String {
    let rows = (0..tables.len()).map(|i| {
        [
            tables.grid[i],
            tables.v_s[i],
            tables.v_ns[i],
            tables.v_tilde_s[i],
            tables.v_tilde_ns[i],
            tables.v[i],
            tables.v_tilde[i],
        ]
        .iter()
        .map(|&x| fmt_sig(x))
        .collect()
    });
    write_rows(&VALUE_TABLE_COLUMNS, rows)
}

/// One row per policy per report. `gain_pct` repeats on every row of a
/// report and is empty when index and myopic were not both run.
pub fn simulation_csv(reports: &[SimReport]) -> String {
    let rows = reports.iter().flat_map(|r| {
        let gain = fmt_opt(r.gain.as_ref().map(|g| g.gain_pct));
        r.policies.iter().map(move |s| {
            vec![
                fmt_sig(r.beta),
                s.policy.name().to_string(),
                fmt_sig(s.mean_reward),
                fmt_sig(s.stderr),
                s.episodes.to_string(),
                gain.clone(),
            ]
        })
    });
    write_rows(&SIMULATION_COLUMNS, rows)
}

pub fn comparison_csv(comparison: &Comparison) -> String {
    let rows = comparison.rows.iter().map(|r| {
        [r.beta, r.myopic, r.index, r.gain_pct, r.diff_mean, r.diff_stderr]
            .iter()
            .map(|&x| fmt_sig(x))
            .collect()
    });
    write_rows(&COMPARISON_COLUMNS, rows)
}

pub fn region_csv(regions: &[GwRegion]) -> String {
    let rows = regions
        .iter()
        .map(|g| vec![fmt_sig(g.w), fmt_opt(g.pi_l), fmt_opt(g.pi_tilde_l), g.empty.to_string()]);
    write_rows(&REGION_COLUMNS, rows)
}

pub fn index_csv(results: &[IndexResult]) -> String {
    let rows = results.iter().map(|r| {
        vec![
            fmt_sig(r.pi),
            u8::from(r.y).to_string(),
            fmt_sig(r.index_w),
            fmt_sig(r.bisection_width),
            r.certified.to_string(),
        ]
    });
    write_rows(&INDEX_COLUMNS, rows)
}
