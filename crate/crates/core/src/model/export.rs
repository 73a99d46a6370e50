//! Deterministic text export of models and a structural re-parser.
//!
//! The format follows the widespread LP text conventions: a `Minimize`
//! objective, named rows under `Subject To`, explicit two-sided `Bounds`
//! for every variable, a `Binaries` section, and `End`. Convex big-M and
//! epigraph rows are rendered as quadratic constraint rows with their
//! squared term in brackets (`[ z_1 ^2 ]`); perspective groups have no
//! bracket form — their linear envelope rows are exported and the curved
//! part stays with the in-process separator.
//!
//! [`parse_lp`] re-reads the text structurally (sections, counts, names,
//! senses) so round-trip tests can compare against the model summary; it is
//! not a general LP reader.

use crate::error::{Error, Result};

use super::{Model, OaGroup, OaKind, VarKind};

/// Structural content of an exported model text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedLp {
    pub minimize: bool,
    pub objective_terms: usize,
    pub variables: usize,
    pub binaries: usize,
    pub linear_rows: usize,
    pub quadratic_rows: usize,
    pub variable_names: Vec<String>,
}

/// A token is a usable name iff it cannot be mistaken for a number or a
/// structural symbol.
fn is_name(token: &str) -> bool {
    let mut chars = token.chars();
    let Some(first) = chars.next() else {
        return false;
    };
    (first.is_ascii_alphabetic() || first == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && token.parse::<f64>().is_err()
}

fn check_name(kind: &str, name: &str) -> Result<()> {
    if !is_name(name) {
        return Err(Error::Export {
            row: name.to_string(),
            msg: format!("{kind} name is not renderable"),
        });
    }
    Ok(())
}

fn check_finite(row: &str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::Export {
            row: row.to_string(),
            msg: format!("non-finite value {value}"),
        });
    }
    Ok(())
}

/// Appends `coef·name` terms; `lead` says whether the expression already has
/// content (so every term needs an explicit sign).
fn write_terms(buf: &mut String, terms: &[(f64, &str)], mut lead: bool) {
    for &(coef, name) in terms {
        if coef == 0.0 {
            continue;
        }
        if lead {
            buf.push_str(if coef < 0.0 { " - " } else { " + " });
        } else {
            if coef < 0.0 {
                buf.push_str("- ");
            }
            lead = true;
        }
        let mag = coef.abs();
        if mag != 1.0 {
            buf.push_str(&format!("{mag} "));
        }
        buf.push_str(name);
    }
    if !lead {
        buf.push('0');
    }
}

/// Collapses `-0.0` so displayed constants never read `-0`.
fn norm(value: f64) -> f64 {
    if value == 0.0 {
        0.0
    } else {
        value
    }
}

fn sense_str(sense: crate::simplex::Sense) -> &'static str {
    match sense {
        crate::simplex::Sense::Le => "<=",
        crate::simplex::Sense::Ge => ">=",
        crate::simplex::Sense::Eq => "=",
    }
}

/// The quadratic-section rendering of a managed group, if it has one.
/// Big-M groups read `[ z² ] − 2s·z + M²·membership − d ≤ M² − s²`; plain
/// epigraphs read `[ w² ] − d ≤ 0`. Perspective groups return `None`.
fn quadratic_terms(g: &OaGroup) -> Option<(Vec<(usize, f64)>, f64)> {
    match &g.kind {
        OaKind::BigM { membership, m_big } => {
            let msq = m_big * m_big;
            let s = g.shift;
            let mut coefs = vec![(g.arg, -2.0 * s), (g.d, -1.0)];
            for &(col, coef) in membership {
                coefs.push((col, msq * coef));
            }
            Some((super::merge_coefs(coefs), msq - s * s))
        }
        OaKind::Plain => Some((vec![(g.d, -1.0)], 0.0)),
        OaKind::Perspective { .. } => None,
    }
}

/// Renders the model deterministically in the LP text format.
///
/// # Errors
/// [`Error::Export`] when a name or value is not renderable (never produced
/// by the builders; guards hand-constructed models).
pub fn export_lp(model: &Model) -> Result<String> {
    let vars = model.variables();
    for v in vars {
        check_name("variable", &v.name)?;
        check_finite(&v.name, v.lower)?;
        check_finite(&v.name, v.upper)?;
    }
    let mut out = String::new();
    out.push_str("\\ mean-problem model export\n");
    out.push_str(&format!(
        "\\ graph={} distance={} digest={}\n",
        model.graph_kind(),
        model.distance_kind(),
        model.digest()
    ));
    out.push_str("Minimize\n obj:");
    if !model.objective().is_empty() {
        out.push(' ');
        let terms: Vec<(f64, &str)> = model
            .objective()
            .iter()
            .map(|&(col, coef)| (coef, vars[col].name.as_str()))
            .collect();
        write_terms(&mut out, &terms, false);
    }
    out.push_str("\nSubject To\n");
    for row in model.rows() {
        check_name("row", &row.name)?;
        check_finite(&row.name, row.rhs)?;
        out.push_str(&format!(" {}: ", row.name));
        let terms: Vec<(f64, &str)> = row
            .coefs
            .iter()
            .map(|&(col, coef)| (coef, vars[col].name.as_str()))
            .collect();
        write_terms(&mut out, &terms, false);
        out.push_str(&format!(" {} {}\n", sense_str(row.sense), norm(row.rhs)));
    }
    for g in model.groups() {
        let Some((coefs, rhs)) = quadratic_terms(g) else {
            continue;
        };
        check_name("row", &g.name)?;
        check_finite(&g.name, rhs)?;
        out.push_str(&format!(" {}: [ {} ^2 ]", g.name, vars[g.arg].name));
        let terms: Vec<(f64, &str)> = coefs
            .iter()
            .map(|&(col, coef)| (coef, vars[col].name.as_str()))
            .collect();
        write_terms(&mut out, &terms, true);
        out.push_str(&format!(" <= {}\n", norm(rhs)));
    }
    out.push_str("Bounds\n");
    for v in vars {
        out.push_str(&format!(
            " {} <= {} <= {}\n",
            norm(v.lower),
            v.name,
            norm(v.upper)
        ));
    }
    let binaries: Vec<&str> = vars
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(8) {
            out.push_str(&format!(" {}\n", chunk.join(" ")));
        }
    }
    out.push_str("End\n");
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Objective,
    Rows,
    Bounds,
    Binaries,
    Done,
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::LpParse {
        line,
        msg: msg.into(),
    }
}

/// Scans one expression token stream (already split on whitespace) up to an
/// optional sense token. Returns (linear terms, quadratic terms, position of
/// the sense token if any).
fn scan_expr(tokens: &[&str], line: usize) -> Result<(usize, usize, Option<usize>)> {
    let mut linear = 0;
    let mut quadratic = 0;
    let mut pos = 0;
    while pos < tokens.len() {
        let tok = tokens[pos];
        if matches!(tok, "<=" | ">=" | "=") {
            return Ok((linear, quadratic, Some(pos)));
        }
        if matches!(tok, "+" | "-") {
            pos += 1;
            if pos == tokens.len() {
                return Err(err(line, "dangling sign"));
            }
        }
        let tok = tokens[pos];
        if tok == "[" {
            if tokens.len() < pos + 4
                || !is_name(tokens[pos + 1])
                || tokens[pos + 2] != "^2"
                || tokens[pos + 3] != "]"
            {
                return Err(err(line, "malformed quadratic bracket"));
            }
            quadratic += 1;
            pos += 4;
            continue;
        }
        if tok.parse::<f64>().is_ok() {
            // Coefficient or bare constant; a following name makes it a term.
            if pos + 1 < tokens.len() && is_name(tokens[pos + 1]) {
                linear += 1;
                pos += 2;
            } else {
                pos += 1;
            }
            continue;
        }
        if is_name(tok) {
            linear += 1;
            pos += 1;
            continue;
        }
        return Err(err(line, format!("unexpected token '{tok}'")));
    }
    Ok((linear, quadratic, None))
}

/// Re-reads an exported model text structurally.
///
/// # Errors
/// [`Error::LpParse`] with the offending line on any structural defect.
pub fn parse_lp(text: &str) -> Result<ParsedLp> {
    let mut section = Section::Preamble;
    let mut parsed = ParsedLp {
        minimize: true,
        objective_terms: 0,
        variables: 0,
        binaries: 0,
        linear_rows: 0,
        quadratic_rows: 0,
        variable_names: Vec::new(),
    };
    let mut seen_objective = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('\\') {
            continue;
        }
        if section == Section::Done {
            return Err(err(line_no, "content after End"));
        }
        match line.to_ascii_lowercase().as_str() {
            "minimize" => {
                parsed.minimize = true;
                section = Section::Objective;
                continue;
            }
            "maximize" => {
                parsed.minimize = false;
                section = Section::Objective;
                continue;
            }
            "subject to" => {
                section = Section::Rows;
                continue;
            }
            "bounds" => {
                section = Section::Bounds;
                continue;
            }
            "binaries" | "binary" => {
                section = Section::Binaries;
                continue;
            }
            "end" => {
                section = Section::Done;
                continue;
            }
            _ => {}
        }
        match section {
            Section::Preamble => return Err(err(line_no, "expected a section keyword")),
            Section::Objective => {
                let Some((name, expr)) = line.split_once(':') else {
                    return Err(err(line_no, "objective line needs a name"));
                };
                if !is_name(name.trim()) {
                    return Err(err(line_no, "bad objective name"));
                }
                if seen_objective {
                    return Err(err(line_no, "multiple objective lines"));
                }
                seen_objective = true;
                let tokens: Vec<&str> = expr.split_whitespace().collect();
                let (linear, quadratic, sense) = scan_expr(&tokens, line_no)?;
                if sense.is_some() || quadratic != 0 {
                    return Err(err(line_no, "objective must be linear"));
                }
                parsed.objective_terms = linear;
            }
            Section::Rows => {
                let Some((name, expr)) = line.split_once(':') else {
                    return Err(err(line_no, "row line needs a name"));
                };
                if !is_name(name.trim()) {
                    return Err(err(line_no, "bad row name"));
                }
                let tokens: Vec<&str> = expr.split_whitespace().collect();
                let (_, quadratic, sense) = scan_expr(&tokens, line_no)?;
                let Some(pos) = sense else {
                    return Err(err(line_no, "row has no sense"));
                };
                if tokens.len() != pos + 2 || tokens[pos + 1].parse::<f64>().is_err() {
                    return Err(err(line_no, "row needs a numeric right-hand side"));
                }
                if quadratic > 1 {
                    return Err(err(line_no, "more than one quadratic bracket"));
                }
                if quadratic == 1 {
                    parsed.quadratic_rows += 1;
                } else {
                    parsed.linear_rows += 1;
                }
            }
            Section::Bounds => {
                let tokens: Vec<&str> = line.split_whitespace().collect();
                let ok = tokens.len() == 5
                    && tokens[0].parse::<f64>().is_ok()
                    && tokens[1] == "<="
                    && is_name(tokens[2])
                    && tokens[3] == "<="
                    && tokens[4].parse::<f64>().is_ok();
                if !ok {
                    return Err(err(line_no, "expected 'lo <= name <= hi'"));
                }
                parsed.variables += 1;
                parsed.variable_names.push(tokens[2].to_string());
            }
            Section::Binaries => {
                for tok in line.split_whitespace() {
                    if !is_name(tok) {
                        return Err(err(line_no, format!("bad binary name '{tok}'")));
                    }
                    if !parsed.variable_names.iter().any(|n| n == tok) {
                        return Err(err(line_no, format!("binary '{tok}' has no bounds line")));
                    }
                    parsed.binaries += 1;
                }
            }
            Section::Done => unreachable!(),
        }
    }
    if section != Section::Done {
        return Err(err(text.lines().count(), "missing End"));
    }
    Ok(parsed)
}

// ======================================================================
// tests
// ======================================================================

#[cfg(test)]
mod tests {
    use super::super::{
        build_model, instance_digest, mean_length_bound, DistanceKind, GraphKind, LinRow, Model,
        Variable,
    };
    use super::*;
    use crate::bounds::{bound_profile, DEFAULT_TOL};
    use crate::series::{Instance, TimeSeries};
    use crate::simplex::Sense;
    use crate::warping::GlobalConstraint;
    use std::collections::BTreeMap;

    fn inst(series: &[&[f64]], c: GlobalConstraint) -> Instance {
        let samples = series
            .iter()
            .map(|v| TimeSeries::new(v.to_vec()).unwrap())
            .collect();
        Instance::new("t", samples, c).unwrap()
    }

    /// A structurally empty model for the skeleton example.
    fn empty_model() -> Model {
        let instance = inst(&[&[0.0]], GlobalConstraint::None);
        Model {
            graph: GraphKind::Vertex,
            distance: DistanceKind::Quadratic,
            digest: instance_digest(&instance),
            instance,
            n_model: 0,
            mean_lengths: Vec::new(),
            variables: Vec::new(),
            rows: Vec::new(),
            groups: Vec::new(),
            cells: Vec::new(),
            cell_lookup: BTreeMap::new(),
            objective: Vec::new(),
            x_cols: BTreeMap::new(),
            z_cols: Vec::new(),
            eta: None,
            floor: 0.0,
            attached: true,
        }
    }

    #[test]
    fn empty_model_exports_skeleton() {
        let model = empty_model();
        let text = export_lp(&model).unwrap();
        let body: Vec<&str> = text
            .lines()
            .filter(|l| !l.starts_with('\\'))
            .collect();
        assert_eq!(body, vec!["Minimize", " obj:", "Subject To", "Bounds", "End"]);
        let parsed = parse_lp(&text).unwrap();
        assert_eq!(parsed.variables, 0);
        assert_eq!(parsed.linear_rows, 0);
        assert_eq!(parsed.quadratic_rows, 0);
        assert!(parsed.minimize);
    }

    #[test]
    fn single_selector_renders_one_row_and_binary() {
        let mut model = empty_model();
        model.variables.push(Variable {
            name: "x_1".into(),
            kind: super::super::VarKind::Binary,
            lower: 0.0,
            upper: 1.0,
        });
        model.rows.push(LinRow {
            name: "len".into(),
            coefs: vec![(0, 1.0)],
            sense: Sense::Eq,
            rhs: 1.0,
        });
        let text = export_lp(&model).unwrap();
        assert!(text.contains("\n len: x_1 = 1\n"), "{text}");
        assert!(text.contains("\nBinaries\n x_1\n"), "{text}");
        let parsed = parse_lp(&text).unwrap();
        assert_eq!(parsed.variables, 1);
        assert_eq!(parsed.binaries, 1);
        assert_eq!(parsed.linear_rows, 1);
    }

    #[test]
    fn big_m_row_renders_in_bracket_form() {
        // A single series keeps the value bounds exact ([0, 4] per column),
        // so the rendered constants are clean: for the cell at (i=2, j=1),
        // s = 4 and M = 4, giving [ z² ] − 8z + 16y − d ≤ M² − s² = 0.
        let instance = inst(&[&[0.0, 4.0]], GlobalConstraint::None);
        let profile = bound_profile(
            &instance,
            GlobalConstraint::None,
            mean_length_bound(&instance),
            DEFAULT_TOL,
        )
        .unwrap();
        let model = build_model(
            &instance,
            GlobalConstraint::None,
            &profile,
            GraphKind::Vertex,
            DistanceKind::Quadratic,
        )
        .unwrap();
        let text = export_lp(&model).unwrap();
        assert!(
            text.contains(" qd_1_2_1: [ z_1 ^2 ] - 8 z_1 + 16 y_1_2_1 - d_1_2_1 <= 0\n"),
            "{text}"
        );
        assert!(text.contains("\n 0 <= z_1 <= 4\n"), "{text}");
    }

    #[test]
    fn round_trip_preserves_counts_for_all_builders() {
        let instance = inst(
            &[&[0.0, 1.0, 2.0], &[2.0, 1.0, 0.0]],
            GlobalConstraint::None,
        );
        let profile = bound_profile(
            &instance,
            GlobalConstraint::None,
            mean_length_bound(&instance),
            DEFAULT_TOL,
        )
        .unwrap();
        for graph in [GraphKind::Vertex, GraphKind::Arc] {
            for kind in [
                DistanceKind::Quadratic,
                DistanceKind::Linear,
                DistanceKind::Perspective,
                DistanceKind::Implicit,
            ] {
                let model =
                    build_model(&instance, GlobalConstraint::None, &profile, graph, kind)
                        .unwrap();
                let text = export_lp(&model).unwrap();
                let parsed = parse_lp(&text).unwrap();
                let counts = model.summary().counts;
                assert!(parsed.minimize, "{graph}:{kind}");
                assert_eq!(parsed.variables, counts.variables, "{graph}:{kind}");
                assert_eq!(parsed.binaries, counts.binaries, "{graph}:{kind}");
                assert_eq!(parsed.linear_rows, counts.rows, "{graph}:{kind}");
                assert_eq!(
                    parsed.quadratic_rows, counts.quadratic_rows,
                    "{graph}:{kind}"
                );
                assert_eq!(parsed.objective_terms, model.objective().len());
            }
        }
    }

    #[test]
    fn export_is_deterministic() {
        let instance = inst(&[&[0.0, 1.0], &[1.0, 0.0]], GlobalConstraint::None);
        let profile = bound_profile(
            &instance,
            GlobalConstraint::None,
            mean_length_bound(&instance),
            DEFAULT_TOL,
        )
        .unwrap();
        let build = || {
            build_model(
                &instance,
                GlobalConstraint::None,
                &profile,
                GraphKind::Arc,
                DistanceKind::Linear,
            )
            .unwrap()
        };
        let a = export_lp(&build()).unwrap();
        let b = export_lp(&build()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn perspective_models_export_linear_rows_only() {
        let instance = inst(&[&[0.0, 1.0], &[1.0, 0.0]], GlobalConstraint::None);
        let profile = bound_profile(
            &instance,
            GlobalConstraint::None,
            mean_length_bound(&instance),
            DEFAULT_TOL,
        )
        .unwrap();
        let model = build_model(
            &instance,
            GlobalConstraint::None,
            &profile,
            GraphKind::Vertex,
            DistanceKind::Perspective,
        )
        .unwrap();
        let text = export_lp(&model).unwrap();
        assert!(!text.contains('['), "{text}");
        let parsed = parse_lp(&text).unwrap();
        assert_eq!(parsed.quadratic_rows, 0);
        assert_eq!(parsed.linear_rows, model.rows().len());
    }

    #[test]
    fn unrenderable_names_are_export_errors() {
        let mut model = empty_model();
        model.variables.push(Variable {
            name: "bad name".into(),
            kind: super::super::VarKind::Continuous,
            lower: 0.0,
            upper: 1.0,
        });
        let errv = export_lp(&model).unwrap_err();
        assert!(matches!(errv, Error::Export { .. }), "{errv}");

        let mut model = empty_model();
        model.variables.push(Variable {
            name: "ok".into(),
            kind: super::super::VarKind::Continuous,
            lower: 0.0,
            upper: f64::INFINITY,
        });
        let errb = export_lp(&model).unwrap_err();
        assert!(matches!(errb, Error::Export { .. }), "{errb}");
    }

    #[test]
    fn parser_reports_structural_defects() {
        let cases: &[(&str, &str)] = &[
            ("garbage\nEnd\n", "preamble"),
            ("Minimize\n obj:\nSubject To\n nonsense without colon\nBounds\nEnd\n", "row"),
            ("Minimize\n obj:\nSubject To\nBounds\n 0 <= <= 1\nEnd\n", "bounds"),
            (
                "Minimize\n obj:\nSubject To\nBounds\nBinaries\n ghost\nEnd\n",
                "binary",
            ),
            ("Minimize\n obj:\nSubject To\nBounds\n", "missing end"),
            ("Minimize\n obj:\nSubject To\nBounds\nEnd\nextra\n", "after end"),
            (
                "Minimize\n obj:\nSubject To\n r: [ z ^2 <= 1\nBounds\nEnd\n",
                "bracket",
            ),
            (
                "Minimize\n obj:\nSubject To\n r: x_1 + <= 1\nBounds\nEnd\n",
                "dangling sign",
            ),
        ];
        for (text, what) in cases {
            let e = parse_lp(text).unwrap_err();
            assert!(matches!(e, Error::LpParse { .. }), "{what}: {e}");
        }
    }

    #[test]
    fn parser_accepts_senses_and_constants() {
        let text = "Minimize\n obj: 2 a\nSubject To\n r1: a >= 1\n r2: a + 0 = 2\n\
                    r3: - a <= 3\nBounds\n 0 <= a <= 5\nEnd\n";
        let parsed = parse_lp(text).unwrap();
        assert_eq!(parsed.linear_rows, 3);
        assert_eq!(parsed.variables, 1);
        assert_eq!(parsed.objective_terms, 1);
    }
}
