//! LP-format export and `name value` solution import.
//!
//! Names are rewritten into the LP identifier alphabet by a reversible map:
//! ASCII alphanumerics, `_`, `,` and `.` pass through, `[` and `]` become `(`
//! and `)`, and every other byte becomes `~HH` (two uppercase hex digits). A
//! name whose first character would be read as a number or exponent gets a
//! `~_` prefix. The grammar is written out in `docs/formats.md`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::MilpError;
use crate::model::{MilpModel, VarKind};
use crate::solve::{MilpSolution, SolveStatus};

const TERMS_PER_LINE: usize = 8;

pub fn sanitize(name: &str) -> String {
    let mut out = String::with_capacity(name.len() + 2);
    if name.starts_with(|c: char| c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E') {
        out.push_str("~_");
    }
    for b in name.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'_' | b',' | b'.' => out.push(b as char),
            b'[' => out.push('('),
            b']' => out.push(')'),
            _ => {
                let _ = write!(out, "~{b:02X}");
            }
        }
    }
    out
}

/// Inverse of [`sanitize`]; `None` when `s` is not a sanitized name.
pub fn unsanitize(s: &str) -> Option<String> {
    let body = s.strip_prefix("~_").unwrap_or(s);
    let bytes = body.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => out.push(b'['),
            b')' => out.push(b']'),
            b'~' => {
                let hex = body.get(i + 1..i + 3)?;
                if !hex.bytes().all(|c| c.is_ascii_digit() || (b'A'..=b'F').contains(&c)) {
                    return None;
                }
                out.push(u8::from_str_radix(hex, 16).ok()?);
                i += 2;
            }
            c => out.push(c),
        }
        i += 1;
    }
    String::from_utf8(out).ok()
}

fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:?}")
    }
}

fn write_terms(out: &mut String, terms: impl Iterator<Item = (f64, String)>) {
    let mut count = 0;
    for (a, name) in terms {
        if count > 0 && count % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if a < 0.0 || (a == 0.0 && a.is_sign_negative()) { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {name}", fmt_num(a.abs()));
        count += 1;
    }
    if count == 0 {
        out.push_str(" 0");
    }
}

/// Renders the model in LP format.
pub fn to_lp_string(model: &MilpModel) -> String {
    let names: Vec<String> = model.vars().iter().map(|v| sanitize(&v.name)).collect();
    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", model.name.replace('\n', " "));
    out.push_str("Minimize\n obj:");
    write_terms(
        &mut out,
        model
            .objective()
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| (*c, names[j].clone())),
    );
    out.push_str("\nSubject To\n");
    for r in model.rows() {
        let _ = write!(out, " {}:", sanitize(&r.name));
        write_terms(&mut out, r.coeffs.iter().map(|&(v, a)| (a, names[v.0].clone())));
        let _ = writeln!(out, " {} {}", r.sense, fmt_num(r.rhs));
    }
    out.push_str("Bounds\n");
    for (v, name) in model.vars().iter().zip(&names) {
        if v.kind == VarKind::Binary && v.lb == 0.0 && v.ub == 1.0 {
            continue;
        }
        if v.lb == f64::NEG_INFINITY && v.ub == f64::INFINITY {
            let _ = writeln!(out, " {name} free");
        } else if v.lb == v.ub {
            let _ = writeln!(out, " {name} = {}", fmt_num(v.lb));
        } else {
            let _ = writeln!(out, " {} <= {name} <= {}", fmt_num(v.lb), fmt_num(v.ub));
        }
    }
    let bins: Vec<&String> = model
        .vars()
        .iter()
        .zip(&names)
        .filter(|(v, _)| v.kind == VarKind::Binary)
        .map(|(_, n)| n)
        .collect();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        for chunk in bins.chunks(TERMS_PER_LINE) {
            out.push(' ');
            out.push_str(&chunk.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(" "));
            out.push('\n');
        }
    }
    if !model.sos1_sets().is_empty() {
        out.push_str("SOS\n");
        for s in model.sos1_sets() {
            let _ = write!(out, " {}: S1::", sanitize(&s.name));
            for (k, m) in s.members.iter().enumerate() {
                let _ = write!(out, " {}:{}", names[m.0], k + 1);
            }
            out.push('\n');
        }
    }
    out.push_str("End\n");
    out
}

pub fn export_lp_file(model: &MilpModel, path: impl AsRef<Path>) -> Result<(), MilpError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(to_lp_string(model).as_bytes())?;
    f.flush()?;
    Ok(())
}

/// Parses `name value` lines (blank lines and `#` comments ignored) and
/// validates the point against the model. Columns not listed are zero.
pub fn read_solution(model: &MilpModel, reader: impl BufRead) -> Result<MilpSolution, MilpError> {
    let lookup: HashMap<String, usize> = model
        .vars()
        .iter()
        .enumerate()
        .flat_map(|(j, v)| [(v.name.clone(), j), (sanitize(&v.name), j)])
        .collect();
    let mut values = vec![0.0; model.num_vars()];
    let mut unknown = Vec::new();
    let mut unknown_count = 0usize;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let mut parts = text.split_whitespace();
        let (Some(name), Some(val), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(MilpError::SolutionSyntax {
                line: lineno + 1,
                msg: format!("expected `name value`, got `{text}`"),
            });
        };
        let value: f64 = val.parse().map_err(|_| MilpError::SolutionSyntax {
            line: lineno + 1,
            msg: format!("bad number `{val}`"),
        })?;
        let col = lookup
            .get(name)
            .copied()
            .or_else(|| unsanitize(name).and_then(|n| lookup.get(&n).copied()));
        match col {
            Some(j) => values[j] = value,
            None => {
                unknown_count += 1;
                if unknown.len() < 10 {
                    unknown.push(name.to_string());
                }
            }
        }
    }
    if unknown_count > 0 {
        return Err(MilpError::UnknownNames { count: unknown_count, first: unknown });
    }
    let violations = model.check_feasibility(&values, 1e-6);
    if !violations.is_empty() {
        let listed: Vec<String> = violations.iter().take(10).map(|v| v.to_string()).collect();
        return Err(MilpError::Infeasible(listed.join("; ")));
    }
    let z = model.objective_value(&values);
    Ok(MilpSolution {
        status: SolveStatus::Optimal,
        objective: Some(z),
        best_bound: z,
        gap: Some(0.0),
        values,
        nodes: 0,
        lp_iterations: 0,
        audit: None,
    })
}

pub fn import_solution_file(model: &MilpModel, path: impl AsRef<Path>) -> Result<MilpSolution, MilpError> {
    let f = std::fs::File::open(path)?;
    read_solution(model, std::io::BufReader::new(f))
}

/// Writes a point as `name value` lines using sanitized names.
pub fn write_solution(model: &MilpModel, values: &[f64], mut w: impl Write) -> Result<(), MilpError> {
    for (v, x) in model.vars().iter().zip(values) {
        writeln!(w, "{} {}", sanitize(&v.name), fmt_num(*x))?;
    }
    Ok(())
}
