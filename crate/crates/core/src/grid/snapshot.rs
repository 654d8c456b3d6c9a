//! Text snapshots of nodal fields.
//!
//! ```text
//! # anisoflow-snapshot v1
//! extent 1
//! cells 16
//! components 3
//! time 0.25
//! <one node per line, z fastest, components separated by spaces>
//! ```
//!
//! Values are written with the shortest representation that parses back to
//! the same f64, so a write/read cycle is bit-exact.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use super::{DiscreteDomain, ScalarField, VectorField};
use crate::error::{Error, Result};

const MAGIC: &str = "# anisoflow-snapshot v1";

#[derive(Debug, Clone, PartialEq)]
pub enum SnapshotField {
    Scalar(ScalarField),
    Vector(VectorField),
}

impl SnapshotField {
    pub fn domain(&self) -> &DiscreteDomain {
        match self {
            SnapshotField::Scalar(s) => s.domain(),
            SnapshotField::Vector(v) => v.domain(),
        }
    }
    pub fn components(&self) -> usize {
        match self {
            SnapshotField::Scalar(_) => 1,
            SnapshotField::Vector(_) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub field: SnapshotField,
}

pub fn write_snapshot(out: &mut impl Write, snap: &Snapshot) -> Result<()> {
    let d = snap.field.domain();
    let mut s = String::with_capacity(d.len() * 24 * snap.field.components());
    writeln!(s, "{MAGIC}").unwrap();
    writeln!(s, "extent {}", d.extent()).unwrap();
    writeln!(s, "cells {}", d.cells()).unwrap();
    writeln!(s, "components {}", snap.field.components()).unwrap();
    writeln!(s, "time {}", snap.time).unwrap();
    match &snap.field {
        SnapshotField::Scalar(f) => {
            for v in f.values() {
                writeln!(s, "{v}").unwrap();
            }
        }
        SnapshotField::Vector(f) => {
            for idx in 0..d.len() {
                let [a, b, c] = f.at(idx);
                writeln!(s, "{a} {b} {c}").unwrap();
            }
        }
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn header(lines: &mut impl Iterator<Item = (usize, std::io::Result<String>)>, key: &str) -> Result<String> {
    let (no, line) = lines.next().ok_or_else(|| Error::Format(format!("missing header line `{key}`")))?;
    let line = line?;
    let rest = line
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::Format(format!("line {}: expected `{key} <value>`, got `{line}`", no + 1)))?;
    Ok(rest.trim().to_string())
}

fn parse<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format(format!("cannot parse {what} from `{s}`")))
}

pub fn read_snapshot(input: impl BufRead) -> Result<Snapshot> {
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, Ok(l))) if l.trim_end() == MAGIC => {}
        _ => return Err(Error::Format(format!("missing `{MAGIC}` header"))),
    }
    let extent: f64 = parse(&header(&mut lines, "extent")?, "extent")?;
    let cells: usize = parse(&header(&mut lines, "cells")?, "cells")?;
    let comps: usize = parse(&header(&mut lines, "components")?, "components")?;
    let time: f64 = parse(&header(&mut lines, "time")?, "time")?;
    let d = DiscreteDomain::new(extent, cells)?;
    if comps != 1 && comps != 3 {
        return Err(Error::Format(format!("components must be 1 or 3, got {comps}")));
    }
    let mut data: Vec<Vec<f64>> = vec![Vec::with_capacity(d.len()); comps];
    for (no, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != comps {
            return Err(Error::Format(format!("line {}: expected {comps} values", no + 1)));
        }
        for (c, v) in vals.iter().enumerate() {
            data[c].push(parse(v, "value")?);
        }
    }
    if data[0].len() != d.len() {
        return Err(Error::Format(format!("expected {} nodes, found {}", d.len(), data[0].len())));
    }
    let field = if comps == 1 {
        SnapshotField::Scalar(ScalarField::new(d, data.pop().unwrap())?)
    } else {
        let c2 = data.pop().unwrap();
        let c1 = data.pop().unwrap();
        let c0 = data.pop().unwrap();
        SnapshotField::Vector(VectorField::new(d, [c0, c1, c2])?)
    };
    Ok(Snapshot { time, field })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let d = DiscreteDomain::new(0.7, 5).unwrap();
        let v = VectorField::from_fn(d, |y| [y[0].sin() / 3.0, 1e-300 * y[1], (y[2] * 7.1).exp()]);
        let snap = Snapshot { time: 0.1 + 0.2, field: SnapshotField::Vector(v) };
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &snap).unwrap();
        let back = read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back, snap);

        let s = ScalarField::from_fn(d, |y| 1.0 / 3.0 + y[2]);
        let snap = Snapshot { time: 2.0, field: SnapshotField::Scalar(s) };
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &snap).unwrap();
        assert_eq!(read_snapshot(buf.as_slice()).unwrap(), snap);
    }

    #[test]
    fn rejects_truncated_files() {
        let text = "# anisoflow-snapshot v1\nextent 1\ncells 4\ncomponents 1\ntime 0\n1\n2\n";
        assert!(matches!(read_snapshot(text.as_bytes()), Err(Error::Format(_))));
        assert!(read_snapshot("hello\n".as_bytes()).is_err());
    }
}
