use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::model::{OptModel, RowSense};
use crate::error::Result;

fn sanitize(name: &str, fallback: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' })
        .collect();
    if cleaned.is_empty() || cleaned.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        format!("{fallback}_{cleaned}")
    } else {
        cleaned
    }
}

fn term(out: &mut String, first: bool, coef: f64, name: &str) {
    if coef < 0.0 {
        let _ = write!(out, " - {} {}", -coef, name);
    } else if first {
        let _ = write!(out, " {coef} {name}");
    } else {
        let _ = write!(out, " + {coef} {name}");
    }
}

/// Renders a model in CPLEX LP text format.
///
/// Column and row names are made unique by suffixing their index.
pub fn write_lp(model: &OptModel) -> String {
    let cols: Vec<String> = model
        .vars
        .iter()
        .enumerate()
        .map(|(j, v)| format!("{}_{j}", sanitize(&v.name, "x")))
        .collect();
    let mut out = String::from("\\ written by tepstor\nMinimize\n obj:");
    let mut first = true;
    for (v, name) in model.vars.iter().zip(&cols) {
        if v.cost != 0.0 {
            term(&mut out, first, v.cost, name);
            first = false;
        }
    }
    if model.offset != 0.0 || first {
        term(&mut out, first, model.offset, "");
    }
    out.push_str("\nSubject To\n");
    for (i, row) in model.rows.iter().enumerate() {
        let _ = write!(out, " {}_{i}:", sanitize(&row.name, "r"));
        if row.coeffs.is_empty() {
            out.push_str(" 0 ");
            out.push_str(&cols.first().cloned().unwrap_or_default());
        }
        for (k, &(v, a)) in row.coeffs.iter().enumerate() {
            term(&mut out, k == 0, a, &cols[v.0]);
        }
        let op = match row.sense {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", row.rhs);
    }
    out.push_str("Bounds\n");
    for (v, name) in model.vars.iter().zip(&cols) {
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) => {
                let _ = writeln!(out, " {} <= {name} <= {}", v.lower, v.upper);
            }
            (true, false) => {
                let _ = writeln!(out, " {name} >= {}", v.lower);
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {name} <= {}", v.upper);
            }
            (false, false) => {
                let _ = writeln!(out, " {name} free");
            }
        }
    }
    let ints: Vec<&String> = model
        .vars
        .iter()
        .zip(&cols)
        .filter(|(v, _)| v.integer)
        .map(|(_, n)| n)
        .collect();
    if !ints.is_empty() {
        out.push_str("General\n");
        for n in ints {
            let _ = writeln!(out, " {n}");
        }
    }
    out.push_str("End\n");
    out
}

/// Debug dump of a model to `path`.
pub fn write_lp_file(model: &OptModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_lp(model))?;
    Ok(())
}
