//! CSV formats: coefficient dumps, grid samples and spectra. Floats use 17
//! significant digits; metadata lines start with `#`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::pattern::TimeResolvedSpectrum;
use crate::solver::{evaluate_on_grid, grid_positions, AxisSpec, CoefficientTensor};
use crate::wavelet::{BasisIndex, BasisKind, TensorIndex};

fn kind_name(k: BasisKind) -> &'static str {
    match k {
        BasisKind::Scaling => "s",
        BasisKind::Wavelet => "w",
        BasisKind::Polynomial => "t",
    }
}

fn kind_from(s: &str) -> Option<BasisKind> {
    Some(match s {
        "s" => BasisKind::Scaling,
        "w" => BasisKind::Wavelet,
        "t" => BasisKind::Polynomial,
        _ => return None,
    })
}

/// One row per coefficient: component, then `(kind, level, shift)` per
/// axis, then the value. Axis metadata is JSON in `# axis =` lines.
pub fn coefficients_to_csv(t: &CoefficientTensor, meta: &[(String, String)]) -> Result<String> {
    let mut out = String::from("# waveleton coefficient dump\n");
    for (k, v) in meta {
        let _ = writeln!(out, "# {k} = {v}");
    }
    let _ = writeln!(out, "# components = {}", t.components());
    for a in t.axes() {
        let json = serde_json::to_string(a).map_err(|e| Error::Internal(e.to_string()))?;
        let _ = writeln!(out, "# axis = {json}");
    }
    out.push_str("component");
    for i in 0..t.axes().len() {
        let _ = write!(out, ",a{i}_kind,a{i}_level,a{i}_shift");
    }
    out.push_str(",value\n");
    for (flat, v) in t.values().iter().enumerate() {
        let (c, idx) = t.index_of(flat);
        let _ = write!(out, "{c}");
        for b in &idx.factors {
            let _ = write!(out, ",{},{},{}", kind_name(b.kind), b.level, b.shift);
        }
        let _ = writeln!(out, ",{v:.16e}");
    }
    Ok(out)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column: 1,
        message: message.into(),
    }
}

/// Reads a dump written by [`coefficients_to_csv`]; returns the tensor and
/// the `key = value` metadata.
pub fn coefficients_from_csv(text: &str) -> Result<(CoefficientTensor, Vec<(String, String)>)> {
    let mut axes = Vec::new();
    let mut components = None;
    let mut meta = Vec::new();
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if let Some(rest) = line.strip_prefix('#') {
            let Some((k, v)) = rest.split_once('=') else {
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            match k {
                "axis" => axes.push(
                    serde_json::from_str::<AxisSpec>(v)
                        .map_err(|e| parse_err(line_no, format!("bad axis: {e}")))?,
                ),
                "components" => {
                    components = Some(
                        v.parse::<usize>()
                            .map_err(|_| parse_err(line_no, "bad component count"))?,
                    )
                }
                _ => meta.push((k.to_string(), v.to_string())),
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if !line.starts_with("component") {
                return Err(parse_err(line_no, "missing header row"));
            }
            continue;
        }
        rows.push((line_no, line));
    }
    let components = components.ok_or_else(|| parse_err(1, "missing '# components' line"))?;
    let mut t = CoefficientTensor::zeros(axes, components)?;
    let naxes = t.axes().len();
    let mut seen = vec![false; t.len()];
    for (line_no, line) in rows {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 2 + 3 * naxes {
            return Err(parse_err(line_no, format!("expected {} fields", 2 + 3 * naxes)));
        }
        let c: usize = f[0].parse().map_err(|_| parse_err(line_no, "bad component"))?;
        let mut factors = Vec::with_capacity(naxes);
        for a in 0..naxes {
            let kind = kind_from(f[1 + 3 * a]).ok_or_else(|| parse_err(line_no, "bad basis kind"))?;
            let level = f[2 + 3 * a].parse().map_err(|_| parse_err(line_no, "bad level"))?;
            let shift = f[3 + 3 * a].parse().map_err(|_| parse_err(line_no, "bad shift"))?;
            factors.push(BasisIndex { level, shift, kind });
        }
        let value: f64 = f[1 + 3 * naxes]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, "bad value"))?;
        let idx = TensorIndex { factors };
        let pos = t
            .position_of(c, &idx)
            .map_err(|e| parse_err(line_no, e.to_string()))?;
        if t.index_of(pos).1 != idx {
            return Err(parse_err(line_no, "index does not belong to the axes"));
        }
        if std::mem::replace(&mut seen[pos], true) {
            return Err(parse_err(line_no, "duplicate coefficient"));
        }
        t.values_mut()[pos] = value;
    }
    Ok((t, meta))
}

/// Surface samples `x, v, F` of a phase-space tensor with `gq × gp` rows,
/// `x` varying slowest.
pub fn grid_csv(t: &CoefficientTensor, gq: usize, gp: usize, meta: &[(String, String)]) -> Result<String> {
    if t.has_time_axis() || t.axes().len() != 2 || t.components() != 1 {
        return Err(Error::Shape("grid output needs a single-particle phase tensor".into()));
    }
    let values = evaluate_on_grid(t, &[gq, gp])?;
    let xs = grid_positions(&t.axes()[0], gq);
    let vs = grid_positions(&t.axes()[1], gp);
    let mut out = String::with_capacity(64 * gq * gp);
    for (k, v) in meta {
        let _ = writeln!(out, "# {k} = {v}");
    }
    out.push_str("x,v,F\n");
    for (i, x) in xs.iter().enumerate() {
        for (j, v) in vs.iter().enumerate() {
            let _ = writeln!(out, "{x:.16e},{v:.16e},{:.16e}", values[i * gp + j]);
        }
    }
    Ok(out)
}

/// Per-slice scale fractions: `time, e_0, e_1, …`.
pub fn spectrum_csv(s: &TimeResolvedSpectrum) -> String {
    let levels = s.slices.first().map_or(0, |x| x.levels.len());
    let mut out = String::from("time");
    for j in 0..levels {
        let _ = write!(out, ",e_{j}");
    }
    out.push('\n');
    for (t, sl) in s.times.iter().zip(&s.slices) {
        let _ = write!(out, "{t:.16e}");
        for e in &sl.levels {
            let _ = write!(out, ",{e:.16e}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::PhaseRole;

    fn tensor() -> CoefficientTensor {
        let axes = vec![
            AxisSpec::Time {
                modes: 3,
                start: 0.25,
                length: 0.5,
            },
            AxisSpec::Phase {
                role: PhaseRole::Position(0),
                order: 3,
                level: 2,
                start: -1.0,
                length: 2.0,
            },
            AxisSpec::Phase {
                role: PhaseRole::Momentum(0),
                order: 3,
                level: 2,
                start: -2.5,
                length: 5.0,
            },
        ];
        let v = (0..48).map(|i| (i as f64 * 0.37).sin() / 3.0).collect();
        CoefficientTensor::from_values(axes, 1, v).unwrap()
    }

    #[test]
    fn dump_round_trips_exactly() {
        let t = tensor();
        let meta = vec![("level".to_string(), "2".to_string())];
        let text = coefficients_to_csv(&t, &meta).unwrap();
        let (back, m) = coefficients_from_csv(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(m, meta);
        assert_eq!(coefficients_to_csv(&back, &m).unwrap(), text);
    }

    #[test]
    fn corrupt_rows_are_located() {
        let text = coefficients_to_csv(&tensor(), &[]).unwrap();
        let bad = text.replacen(",w,1,1,", ",w,1,7,", 1);
        assert!(matches!(coefficients_from_csv(&bad), Err(Error::Parse { .. })));
        let lines: Vec<&str> = text.lines().collect();
        let dup = format!("{}\n{}\n", text.trim_end(), lines.last().unwrap());
        match coefficients_from_csv(&dup) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, lines.len() + 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn grid_rows_are_gx_times_gv() {
        let t = tensor().time_slice(0.5).unwrap();
        let text = grid_csv(&t, 12, 7, &[]).unwrap();
        let rows = text.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(rows, 1 + 12 * 7);
    }

    proptest::proptest! {
        #[test]
        fn any_dump_round_trips(values in proptest::collection::vec(-1e6f64..1e6, 48)) {
            let t = CoefficientTensor::from_values(tensor().axes().to_vec(), 1, values).unwrap();
            let text = coefficients_to_csv(&t, &[]).unwrap();
            let (back, _) = coefficients_from_csv(&text).unwrap();
            proptest::prop_assert_eq!(back, t);
        }
    }
}
