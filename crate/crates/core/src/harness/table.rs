use std::collections::BTreeMap;

use super::bench::{BenchmarkReport, Medians};
use crate::error::{Error, Result};

/// Row keys of the median table, in order.
pub const TABLE_ROWS: [&str; 6] = ["L", "eps_omega", "eps_Gamma", "eps_a", "eps_S", "eps_H"];
const ROW_SYMBOLS: [&str; 6] = ["L̄", "ε̄_ω", "ε̄_Γ", "ε̄_a", "ε̄_S", "ε̄_H"];

/// Rendered median table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// Fixed-width text with 2 significant digits, blank cells for metrics
    /// an arm does not define.
    pub text: String,
    /// Same layout at full precision (shortest round-trip decimal).
    pub csv: String,
}

/// Scientific notation with 2 significant digits and a two-digit signed
/// exponent, e.g. `1.8e-02`.
pub fn format_sig2(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.1e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
}

fn row_values(m: &Medians) -> [Option<f64>; 6] {
    [m.logp, m.eps_omega, m.eps_gamma, m.eps_a, m.eps_s, m.eps_h]
}

/// Median table with one column per arm present in the report.
pub fn emit_table(report: &BenchmarkReport) -> Result<Table> {
    if report.arms.is_empty() {
        return Err(Error::InvalidArgument("report has no arms".into()));
    }
    let width = 10;
    let mut text = format!("{:<6}", "");
    for a in &report.arms {
        text += &format!("{:>width$}", a.heading);
    }
    text.push('\n');
    for (row, symbol) in ROW_SYMBOLS.iter().enumerate() {
        text += &format!("{symbol:<6}");
        for a in &report.arms {
            let cell = row_values(&a.medians)[row].map(format_sig2).unwrap_or_default();
            text += &format!("{cell:>width$}");
        }
        text.push('\n');
    }
    text += &format!("{:<6}", "fail");
    for a in &report.arms {
        text += &format!("{:>width$}", format!("{}/{}", a.n_failed, a.n_systems));
    }
    text.push('\n');

    let mut csv = String::from("quantity");
    for a in &report.arms {
        csv += &format!(",{}", a.arm);
    }
    csv.push('\n');
    for (row, key) in TABLE_ROWS.iter().enumerate() {
        csv += key;
        for a in &report.arms {
            csv.push(',');
            if let Some(v) = row_values(&a.medians)[row] {
                csv += &format!("{v}");
            }
        }
        csv.push('\n');
    }
    Ok(Table { text, csv })
}

/// Parse a table CSV back into medians keyed by arm label.
pub fn read_table_csv(text: &str) -> Result<BTreeMap<String, Medians>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let arms: Vec<String> = reader.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut cells: BTreeMap<(String, String), Option<f64>> = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let key = row.get(0).unwrap_or_default().to_string();
        for (arm, cell) in arms.iter().zip(row.iter().skip(1)) {
            let value = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad cell '{cell}': {e}")))?)
            };
            cells.insert((key.clone(), arm.clone()), value);
        }
    }
    let get = |row: &str, arm: &str| cells.get(&(row.to_string(), arm.to_string())).copied().flatten();
    Ok(arms
        .iter()
        .map(|arm| {
            let m = Medians {
                logp: get("L", arm),
                eps_omega: get("eps_omega", arm),
                eps_gamma: get("eps_Gamma", arm),
                eps_a: get("eps_a", arm),
                eps_s: get("eps_S", arm),
                eps_h: get("eps_H", arm),
            };
            (arm.clone(), m)
        })
        .collect())
}
