//! Text inputs: number lists, ranges, plane lists, point lists.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dplane::{AffinePlane, Frame, Matrix, Vector};

/// Inclusive integer range written `a..b` or `a`. `a > b` is empty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IntRange {
    pub start: usize,
    pub end: usize,
}

impl IntRange {
    pub fn iter(&self) -> impl Iterator<Item = usize> {
        self.start..=self.end
    }
}

impl std::str::FromStr for IntRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid range bound {t:?}"))
        };
        match s.split_once("..") {
            Some((a, b)) => Ok(Self {
                start: parse(a)?,
                end: parse(b.trim_start_matches('='))?,
            }),
            None => {
                let v = parse(s)?;
                Ok(Self { start: v, end: v })
            }
        }
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Non-empty, non-comment lines split into numbers, with 1-based line numbers.
pub fn numeric_rows(text: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|_| t.to_string()))
            .collect::<Result<Vec<_>, _>>();
        match values {
            Ok(v) => rows.push((i + 1, v)),
            Err(tok) => bail!("line {}: cannot parse {tok:?} as a number", i + 1),
        }
    }
    Ok(rows)
}

/// One point of R^n per line.
pub fn parse_points(text: &str, n: usize) -> Result<Vec<Vector>> {
    numeric_rows(text)?
        .into_iter()
        .map(|(line, v)| {
            if v.len() != n {
                bail!("line {line}: expected {n} coordinates, found {}", v.len());
            }
            Ok(Vector::from_vec(v))
        })
        .collect()
}

/// One plane per line: the n·d frame entries column by column, then the n
/// offset coordinates.
pub fn parse_planes(text: &str, d: usize, n: usize) -> Result<Vec<AffinePlane>> {
    numeric_rows(text)?
        .into_iter()
        .map(|(line, v)| {
            if v.len() != n * d + n {
                bail!("line {line}: expected {} numbers (frame then offset), found {}", n * d + n, v.len());
            }
            let frame = Frame::new(Matrix::from_column_slice(n, d, &v[..n * d]))
                .with_context(|| format!("line {line}: invalid frame"))?;
            AffinePlane::new(frame, Vector::from_column_slice(&v[n * d..]))
                .with_context(|| format!("line {line}: invalid plane"))
        })
        .collect()
}

/// Parallel-beam lines in the plane: `angles` directions in [0, π) times
/// `offsets` signed distances evenly covering [−max, max].
pub fn angular_lines(angles: usize, offsets: usize, max: f64) -> Result<Vec<AffinePlane>> {
    let mut planes = Vec::with_capacity(angles * offsets);
    for a in 0..angles {
        let theta = std::f64::consts::PI * a as f64 / angles as f64;
        let (s, c) = theta.sin_cos();
        let frame = Frame::new(Matrix::from_column_slice(2, 1, &[c, s]))?;
        for k in 0..offsets {
            let t = if offsets == 1 {
                0.0
            } else {
                -max + 2.0 * max * k as f64 / (offsets - 1) as f64
            };
            planes.push(AffinePlane::new_unchecked(frame.clone(), Vector::from_column_slice(&[-s * t, c * t])));
        }
    }
    Ok(planes)
}

/// 17 significant digits: round-trips every f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn csv_row(out: &mut String, fields: impl IntoIterator<Item = String>) {
    let row: Vec<String> = fields.into_iter().collect();
    let _ = writeln!(out, "{}", row.join(","));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!("1..3".parse::<IntRange>().unwrap().iter().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!("1..=2".parse::<IntRange>().unwrap().iter().count(), 2);
        assert_eq!("4".parse::<IntRange>().unwrap().iter().collect::<Vec<_>>(), vec![4]);
        assert_eq!("3..2".parse::<IntRange>().unwrap().iter().count(), 0);
        assert!("a..2".parse::<IntRange>().is_err());
    }

    #[test]
    fn rows_skip_comments_and_report_lines() {
        let rows = numeric_rows("# header\n1 2\n\n3,4 # tail\n").unwrap();
        assert_eq!(rows, vec![(2, vec![1.0, 2.0]), (4, vec![3.0, 4.0])]);
        let err = numeric_rows("1 2\n3 x\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn planes_are_validated() {
        let ok = parse_planes("1 0 0 0.5\n", 1, 2).unwrap();
        assert_eq!(ok.len(), 1);
        let err = parse_planes("1 0 0 0.5\n1 0 0.5 0\n", 1, 2).unwrap_err();
        assert!(format!("{err:#}").contains("line 2"));
        assert!(parse_planes("1 1 0 0\n", 1, 2).is_err());
    }

    #[test]
    fn angular_lines_are_orthogonal_offsets() {
        for p in angular_lines(7, 5, 2.0).unwrap() {
            let w = p.frame().column(0);
            let o = p.offset();
            assert!((w[0] * o[0] + w[1] * o[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -1e-300, std::f64::consts::PI, 6.02e23] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
