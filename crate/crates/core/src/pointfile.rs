//! Plain-text point files: one point per line, whitespace-separated
//! coordinates, `#` starts a comment line, blank lines are skipped.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::Vector;

pub fn parse_points(text: &str) -> Result<Vec<Vector>> {
    let mut out: Vec<Vector> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let coords = t
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad number {tok:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                message: "non-finite coordinate".into(),
            });
        }
        if let Some(first) = out.first() {
            if first.dim() != coords.len() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {} coordinates, found {}", first.dim(), coords.len()),
                });
            }
        }
        out.push(Vector::from_vec(coords));
    }
    Ok(out)
}

pub fn read_points(path: impl AsRef<Path>) -> Result<Vec<Vector>> {
    parse_points(&std::fs::read_to_string(path)?)
}

/// Formats points so that [`parse_points`] reads them back exactly.
pub fn format_points(points: &[Vector]) -> String {
    let mut s = String::new();
    for p in points {
        let line: Vec<String> = p.iter().map(|x| format!("{x:?}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_comments() {
        let pts = parse_points("# header\n1 2\n\n  3.5 -4e-1\n").unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].as_slice(), &[3.5, -0.4]);
    }

    #[test]
    fn reports_line_numbers() {
        let e = parse_points("1 2\n3\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse_points("# c\n1 x\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn format_round_trip() {
        let pts = vec![Vector::from_vec(vec![0.1, 1.0 / 3.0]), Vector::from_vec(vec![-2.0, 1e-300])];
        assert_eq!(parse_points(&format_points(&pts)).unwrap(), pts);
    }
}
