//! Legacy ASCII VTK point clouds (POLYDATA with one vertex per point).
//!
//! Numbers are written with `{:.10e}` so identical states give identical
//! files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::IoError;

use super::Snapshot;

const SCALARS: [&str; 9] = [
    "reference_x",
    "reference_y",
    "displacement_magnitude",
    "eps_ps",
    "eps_pv",
    "w2",
    "mean_stress",
    "q",
    "cohesion",
];

fn num(out: &mut String, x: f64) {
    write!(out, "{x:.10e}").unwrap();
}

pub fn snapshot_to_vtk(s: &Snapshot) -> String {
    let n = s.len();
    let mut out = String::with_capacity(64 + n * 240);
    out.push_str("# vtk DataFile Version 3.0\n");
    writeln!(out, "ppm snapshot step={} time={:.10e}", s.step, s.time).unwrap();
    out.push_str("ASCII\nDATASET POLYDATA\n");
    writeln!(out, "POINTS {n} double").unwrap();
    for p in s.positions() {
        num(&mut out, p[0]);
        out.push(' ');
        num(&mut out, p[1]);
        out.push_str(" 0.0000000000e0\n");
    }
    writeln!(out, "VERTICES {n} {}", 2 * n).unwrap();
    for i in 0..n {
        writeln!(out, "1 {i}").unwrap();
    }
    writeln!(out, "POINT_DATA {n}").unwrap();
    out.push_str("VECTORS displacement double\n");
    for u in &s.displacement {
        num(&mut out, u[0]);
        out.push(' ');
        num(&mut out, u[1]);
        out.push_str(" 0.0000000000e0\n");
    }
    let rx: Vec<f64> = s.reference.iter().map(|x| x[0]).collect();
    let ry: Vec<f64> = s.reference.iter().map(|x| x[1]).collect();
    let mag = s.displacement_magnitude();
    let columns: [&[f64]; 9] = [&rx, &ry, &mag, &s.eps_ps, &s.eps_pv, &s.w2, &s.mean_stress, &s.q, &s.cohesion];
    for (name, values) in SCALARS.iter().zip(columns) {
        writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for &v in values {
            num(&mut out, v);
            out.push('\n');
        }
    }
    out
}

pub fn write_snapshot(s: &Snapshot, path: &Path) -> Result<(), IoError> {
    std::fs::write(path, snapshot_to_vtk(s)).map_err(|e| IoError::new(format!("writing {}", path.display()), e))
}

fn bad(msg: impl Into<String>) -> IoError {
    IoError::new("reading snapshot", std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into()))
}

/// Parses a file written by [`write_snapshot`].
pub fn vtk_to_snapshot(text: &str) -> Result<Snapshot, IoError> {
    let mut lines = text.lines();
    let header = lines.nth(1).ok_or_else(|| bad("truncated header"))?;
    let mut step = 0;
    let mut time = 0.0;
    for tok in header.split_whitespace() {
        if let Some(v) = tok.strip_prefix("step=") {
            step = v.parse().map_err(|_| bad("bad step"))?;
        } else if let Some(v) = tok.strip_prefix("time=") {
            time = v.parse().map_err(|_| bad("bad time"))?;
        }
    }
    let mut n = 0usize;
    let mut displacement = Vec::new();
    let mut scalars: Vec<(String, Vec<f64>)> = Vec::new();
    let parse = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
    while let Some(line) = lines.next() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["POINTS", count, _] => {
                n = count.parse().map_err(|_| bad("bad point count"))?;
                for _ in 0..n {
                    lines.next().ok_or_else(|| bad("truncated points"))?;
                }
            }
            ["VERTICES", ..] => {
                for _ in 0..n {
                    lines.next().ok_or_else(|| bad("truncated vertices"))?;
                }
            }
            ["VECTORS", "displacement", _] => {
                for _ in 0..n {
                    let l = lines.next().ok_or_else(|| bad("truncated vectors"))?;
                    let v: Vec<&str> = l.split_whitespace().collect();
                    if v.len() != 3 {
                        return Err(bad("vector needs three components"));
                    }
                    displacement.push([parse(v[0])?, parse(v[1])?]);
                }
            }
            ["SCALARS", name, _, ..] => {
                lines.next();
                let mut values = Vec::with_capacity(n);
                for _ in 0..n {
                    values.push(parse(lines.next().ok_or_else(|| bad("truncated scalars"))?.trim())?);
                }
                scalars.push((name.to_string(), values));
            }
            _ => {}
        }
    }
    let mut take = |name: &str| -> Result<Vec<f64>, IoError> {
        let k = scalars
            .iter()
            .position(|(s, _)| s == name)
            .ok_or_else(|| bad(format!("missing field {name}")))?;
        Ok(scalars.swap_remove(k).1)
    };
    let rx = take("reference_x")?;
    let ry = take("reference_y")?;
    if displacement.len() != n {
        return Err(bad("missing displacement vectors"));
    }
    Ok(Snapshot {
        time,
        step,
        reference: rx.into_iter().zip(ry).map(|(x, y)| [x, y]).collect(),
        displacement,
        eps_ps: take("eps_ps")?,
        eps_pv: take("eps_pv")?,
        w2: take("w2")?,
        mean_stress: take("mean_stress")?,
        q: take("q")?,
        cohesion: take("cohesion")?,
    })
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::new(format!("reading {}", path.display()), e))?;
    vtk_to_snapshot(&text)
}
