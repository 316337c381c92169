//! Free-format MPS. The objective row is `COST`, constraint rows are named
//! after their tags, and the sense is always minimization.

use std::fmt::Write as _;

use thiserror::Error;

use super::{Column, LinearProgram, Relation, Row, RowTag};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("MPS line {line}: {message}")]
pub struct MpsError {
    pub line: usize,
    pub message: String,
}

pub fn export_mps(lp: &LinearProgram) -> String {
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.num_vars()];
    for (i, r) in lp.rows.iter().enumerate() {
        for &(j, v) in &r.coeffs {
            by_col[j].push((i, v));
        }
    }
    let names: Vec<String> = lp.rows.iter().map(|r| r.tag.name()).collect();
    let mut s = String::new();
    s.push_str("NAME occurelax\nROWS\n N COST\n");
    for (r, name) in lp.rows.iter().zip(&names) {
        let t = match r.relation {
            Relation::Eq => 'E',
            Relation::Le => 'L',
            Relation::Ge => 'G',
        };
        let _ = writeln!(s, " {t} {name}");
    }
    s.push_str("COLUMNS\n");
    for (c, entries) in lp.columns.iter().zip(&by_col) {
        if c.cost != 0.0 || entries.is_empty() {
            let _ = writeln!(s, " {} COST {}", c.name, c.cost);
        }
        for &(i, v) in entries {
            let _ = writeln!(s, " {} {} {}", c.name, names[i], v);
        }
    }
    s.push_str("RHS\n");
    for (r, name) in lp.rows.iter().zip(&names) {
        if r.rhs != 0.0 {
            let _ = writeln!(s, " RHS {name} {}", r.rhs);
        }
    }
    s.push_str("BOUNDS\n");
    for c in &lp.columns {
        let (lo, hi) = (c.lower, c.upper);
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            let _ = writeln!(s, " FR BND {}", c.name);
        } else if lo == hi {
            let _ = writeln!(s, " FX BND {} {lo}", c.name);
        } else {
            if lo == f64::NEG_INFINITY {
                let _ = writeln!(s, " MI BND {}", c.name);
            } else if lo != 0.0 {
                let _ = writeln!(s, " LO BND {} {lo}", c.name);
            }
            if hi.is_finite() {
                let _ = writeln!(s, " UP BND {} {hi}", c.name);
            }
        }
    }
    s.push_str("ENDATA\n");
    s
}

#[derive(PartialEq)]
enum Section {
    Head,
    Rows,
    Columns,
    Rhs,
    Bounds,
    End,
}

pub fn parse_mps(text: &str) -> Result<LinearProgram, MpsError> {
    let mut lp = LinearProgram::new();
    let mut row_index = std::collections::HashMap::new();
    let mut col_index = std::collections::HashMap::new();
    let mut section = Section::Head;
    for (k, line) in text.lines().enumerate() {
        let ln = k + 1;
        let err = |m: &str| MpsError { line: ln, message: m.to_string() };
        if line.trim().is_empty() || line.starts_with('*') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if !line.starts_with(' ') {
            section = match f[0] {
                "NAME" => Section::Head,
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::End,
                other => return Err(err(&format!("unknown section `{other}`"))),
            };
            continue;
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(&format!("bad number `{s}`")));
        match section {
            Section::Rows => {
                if f.len() != 2 {
                    return Err(err("expected `<type> <name>`"));
                }
                if f[0] == "N" {
                    continue;
                }
                let relation = match f[0] {
                    "E" => Relation::Eq,
                    "L" => Relation::Le,
                    "G" => Relation::Ge,
                    t => return Err(err(&format!("unknown row type `{t}`"))),
                };
                let tag = RowTag::from_name(f[1]).ok_or_else(|| err(&format!("unrecognized row name `{}`", f[1])))?;
                row_index.insert(f[1].to_string(), lp.rows.len());
                lp.rows.push(Row { tag, relation, coeffs: vec![], rhs: 0.0 });
            }
            Section::Columns => {
                if f.len() < 3 || f.len() % 2 == 0 {
                    return Err(err("expected `<column> <row> <value> ...`"));
                }
                let j = *col_index.entry(f[0].to_string()).or_insert_with(|| {
                    lp.columns.push(Column { name: f[0].to_string(), cost: 0.0, lower: 0.0, upper: f64::INFINITY });
                    lp.columns.len() - 1
                });
                for pair in f[1..].chunks(2) {
                    let v = num(pair[1])?;
                    if pair[0] == "COST" {
                        lp.columns[j].cost = v;
                    } else {
                        let &i = row_index.get(pair[0]).ok_or_else(|| err(&format!("unknown row `{}`", pair[0])))?;
                        lp.rows[i].coeffs.push((j, v));
                    }
                }
            }
            Section::Rhs => {
                if f.len() < 3 || f.len() % 2 == 0 {
                    return Err(err("expected `<set> <row> <value> ...`"));
                }
                for pair in f[1..].chunks(2) {
                    let &i = row_index.get(pair[0]).ok_or_else(|| err(&format!("unknown row `{}`", pair[0])))?;
                    lp.rows[i].rhs = num(pair[1])?;
                }
            }
            Section::Bounds => {
                if f.len() < 3 {
                    return Err(err("expected `<type> <set> <column> [value]`"));
                }
                let &j = col_index.get(f[2]).ok_or_else(|| err(&format!("unknown column `{}`", f[2])))?;
                let val = || -> Result<f64, MpsError> { f.get(3).map_or_else(|| Err(err("missing bound value")), |s| num(s)) };
                let c = &mut lp.columns[j];
                match f[0] {
                    "FR" => {
                        c.lower = f64::NEG_INFINITY;
                        c.upper = f64::INFINITY;
                    }
                    "MI" => c.lower = f64::NEG_INFINITY,
                    "PL" => c.upper = f64::INFINITY,
                    "LO" => c.lower = val()?,
                    "UP" => c.upper = val()?,
                    "FX" => {
                        let v = val()?;
                        c.lower = v;
                        c.upper = v;
                    }
                    t => return Err(err(&format!("unknown bound type `{t}`"))),
                }
            }
            Section::Head | Section::End => return Err(err("data line outside of a section")),
        }
    }
    if section != Section::End {
        return Err(MpsError { line: text.lines().count(), message: "missing ENDATA".to_string() });
    }
    for r in &mut lp.rows {
        r.coeffs.sort_by_key(|&(j, _)| j);
    }
    Ok(lp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LinearProgram {
        let mut lp = LinearProgram::new();
        lp.add_column("MU_0", 0.25);
        lp.add_bounded_column("Y_0", -1.5, -2.0, 2.0);
        lp.add_bounded_column("Y_1", 0.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.add_bounded_column("Y_2", 1e-17, f64::NEG_INFINITY, 3.0);
        lp.add_column("IDLE", 0.0);
        lp.add_row(RowTag::Mass, Relation::Eq, vec![(0, 0.1), (1, 1.0 / 3.0)], 1.0);
        lp.add_row(RowTag::Integral(0), Relation::Le, vec![(2, -7.25), (3, 1.0)], 0.0);
        lp.add_row(RowTag::Plumbing(0), Relation::Ge, vec![(1, 1.0)], -0.5);
        lp
    }

    #[test]
    fn skeleton_and_row_types() {
        let text = export_mps(&sample());
        for s in ["NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"] {
            assert!(text.lines().any(|l| l.starts_with(s)), "missing {s}");
        }
        assert!(text.contains(" L INTG_0\n"));
        assert!(text.contains(" G PLMB_0\n"));
        assert!(text.contains(" FR BND Y_1\n"));
        assert!(text.contains(" IDLE COST 0\n"));
    }

    #[test]
    fn one_variable_lp_skeleton() {
        let mut lp = LinearProgram::new();
        lp.add_column("x", 1.0);
        let text = export_mps(&lp);
        assert_eq!(text, "NAME occurelax\nROWS\n N COST\nCOLUMNS\n x COST 1\nRHS\nBOUNDS\nENDATA\n");
    }

    #[test]
    fn export_parse_export_is_byte_identical() {
        let lp = sample();
        let a = export_mps(&lp);
        let back = parse_mps(&a).unwrap();
        assert_eq!(back, lp);
        assert_eq!(export_mps(&back), a);
    }

    #[test]
    fn parse_errors_carry_lines() {
        let e = parse_mps("NAME x\nROWS\n E FOO\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(parse_mps("NAME x\nROWS\n").is_err());
    }
}
