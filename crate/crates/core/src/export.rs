//! CSV and JSON-lines writers for strips, fronts, diagrams, charges and phase portraits.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a value read
//! back with `str::parse::<f64>` is bit-identical.
//!
//! Column layouts (axis names substituted):
//!
//! | product      | columns                                              |
//! |--------------|------------------------------------------------------|
//! | strip        | `tau, x_<a>…, s, p_<a>…, p_s, G_residual`            |
//! | front        | `tau, u_<j>…, x_<a>…, s, jacobian_det, caustic_flag` |
//! | diagram      | `branch, v_<a>…`                                     |
//! | conservation | `tau, Q_<symmetry>…`                                 |
//! | portrait     | `branch, <coordinate>…`                              |

use std::io::Write;

use serde::Serialize;

use crate::bundle::{CharacteristicClass, WaveDiagram};
use crate::contact::{Strip, SymbolSurface};
use crate::error::Result;
use crate::phase::PhasePoint;
use crate::wavefront::FrontHistory;

/// Shortest round-trip text for a float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn row(out: &mut impl Write, cells: impl IntoIterator<Item = String>) -> Result<()> {
    let line: Vec<String> = cells.into_iter().collect();
    writeln!(out, "{}", line.join(","))?;
    Ok(())
}

fn floats(v: &[f64]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|c| fmt_f64(*c))
}

pub fn strip_header(axes: &[String]) -> Vec<String> {
    let mut h = vec!["tau".to_string()];
    h.extend(axes.iter().map(|a| format!("x_{a}")));
    h.push("s".into());
    h.extend(axes.iter().map(|a| format!("p_{a}")));
    h.push("p_s".into());
    h.push("G_residual".into());
    h
}

pub fn write_strip_csv(out: &mut impl Write, e: &SymbolSurface, strip: &Strip) -> Result<()> {
    row(out, strip_header(e.chart().axis_names()))?;
    for st in &strip.states {
        let mut cells = vec![fmt_f64(st.tau)];
        cells.extend(floats(&st.x));
        cells.push(fmt_f64(st.s));
        cells.extend(floats(&st.p));
        cells.push(fmt_f64(st.p_s));
        cells.push(fmt_f64(e.residual(st)));
        row(out, cells)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct StripLine<'a> {
    strip: &'a str,
    tau: f64,
    x: &'a [f64],
    s: f64,
    p: &'a [f64],
    p_s: f64,
    #[serde(rename = "G_residual")]
    g_residual: f64,
}

/// One JSON object per sample, tagged with the strip name.
pub fn write_strip_jsonl(out: &mut impl Write, e: &SymbolSurface, name: &str, strip: &Strip) -> Result<()> {
    for st in &strip.states {
        let line = StripLine {
            strip: name,
            tau: st.tau,
            x: &st.x,
            s: st.s,
            p: &st.p,
            p_s: st.p_s,
            g_residual: e.residual(st),
        };
        let text = serde_json::to_string(&line).map_err(|err| crate::Error::Io(err.to_string()))?;
        writeln!(out, "{text}")?;
    }
    Ok(())
}

pub fn write_front_csv(out: &mut impl Write, axes: &[String], history: &FrontHistory) -> Result<()> {
    let mut h = vec!["tau".to_string()];
    h.extend((0..history.grid.params()).map(|j| format!("u_{j}")));
    h.extend(axes.iter().map(|a| format!("x_{a}")));
    h.extend(["s".to_string(), "jacobian_det".into(), "caustic_flag".into()]);
    row(out, h)?;
    for slice in &history.slices {
        for s in slice.samples.iter().flatten() {
            let mut cells = vec![fmt_f64(slice.tau)];
            cells.extend(floats(&s.u));
            cells.extend(floats(&s.state.x));
            cells.push(fmt_f64(s.state.s));
            cells.push(fmt_f64(s.jacobian_det));
            cells.push(u8::from(s.caustic).to_string());
            row(out, cells)?;
        }
    }
    Ok(())
}

pub fn write_diagram_csv(out: &mut impl Write, axes: &[String], diagram: &WaveDiagram) -> Result<()> {
    let mut h = vec!["branch".to_string()];
    h.extend(axes.iter().map(|a| format!("v_{a}")));
    row(out, h)?;
    for p in &diagram.points {
        let mut cells = vec![p.branch.to_string()];
        cells.extend(floats(&p.v));
        row(out, cells)?;
    }
    Ok(())
}

/// `rows[k]` holds the charges of every symmetry at `taus[k]`.
pub fn write_conservation_csv(out: &mut impl Write, names: &[String], taus: &[f64], rows: &[Vec<f64>]) -> Result<()> {
    let mut h = vec!["tau".to_string()];
    h.extend(names.iter().map(|n| format!("Q_{n}")));
    row(out, h)?;
    for (t, qs) in taus.iter().zip(rows) {
        let mut cells = vec![fmt_f64(*t)];
        cells.extend(floats(qs));
        row(out, cells)?;
    }
    Ok(())
}

pub fn branch_label(c: CharacteristicClass) -> &'static str {
    match c {
        CharacteristicClass::Particle => "particle",
        CharacteristicClass::Antiparticle => "antiparticle",
        CharacteristicClass::Lightlike => "lightlike",
    }
}

pub fn write_portrait_csv(out: &mut impl Write, coord_names: &[String], points: &[PhasePoint]) -> Result<()> {
    let mut h = vec!["branch".to_string()];
    h.extend(coord_names.iter().cloned());
    row(out, h)?;
    for p in points {
        let mut cells = vec![branch_label(p.branch).to_string()];
        cells.extend(floats(&p.coords));
        row(out, cells)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{propagate, CharacteristicState};
    use crate::scenarios;

    #[test]
    fn strip_csv_round_trips_floats() {
        let e = scenarios::free_particle(1.0);
        let st = CharacteristicState::new(vec![0.0, 0.0], 0.0, vec![-0.5, 1.0], 1.0);
        let strip = propagate(&e, &st, &[0.0, 0.1, 1.0 / 3.0], &Default::default()).unwrap();
        let mut buf = Vec::new();
        write_strip_csv(&mut buf, &e, &strip).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "tau,x_t,x_x,s,p_t,p_x,p_s,G_residual");
        let last: Vec<f64> = lines.last().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
        let want = strip.last();
        assert_eq!(last[0], want.tau);
        assert_eq!(last[2], want.x[1]);
        assert_eq!(last[3], want.s);
    }

    #[test]
    fn jsonl_has_one_line_per_sample() {
        let e = scenarios::free_particle(1.0);
        let st = CharacteristicState::new(vec![0.0, 0.0], 0.0, vec![-0.5, 1.0], 1.0);
        let strip = propagate(&e, &st, &[0.0, 0.5, 1.0], &Default::default()).unwrap();
        let mut buf = Vec::new();
        write_strip_jsonl(&mut buf, &e, "a", &strip).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        let v: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        assert_eq!(v["strip"], "a");
        assert_eq!(v["tau"], 0.5);
    }
}
