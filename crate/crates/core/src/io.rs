//! File formats: XYZ cluster geometries and `u,d` CSV datasets.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{ClmError, Result};
use crate::problems::Dataset;

/// A parsed XYZ frame.
#[derive(Debug, Clone, PartialEq)]
pub struct XyzFrame {
    pub comment: String,
    pub elements: Vec<String>,
    pub coords: Vec<f64>,
}

impl XyzFrame {
    /// Energy stored in the comment line by [`write_xyz`], if any.
    pub fn energy(&self) -> Option<f64> {
        self.comment
            .split_whitespace()
            .find_map(|tok| tok.strip_prefix("energy=").and_then(|v| v.parse().ok()))
    }
}

/// `N`, a comment line `energy=<E>`, then one `El x y z` row per atom.
pub fn write_xyz(coords: &[f64], element: &str, energy: f64) -> String {
    let n = coords.len() / 3;
    let mut out = String::new();
    let _ = writeln!(out, "{n}");
    let _ = writeln!(out, "energy={energy:.12}");
    for a in coords.chunks(3) {
        let _ = writeln!(out, "{element} {:.12} {:.12} {:.12}", a[0], a[1], a[2]);
    }
    out
}

pub fn parse_xyz(content: &str) -> Result<XyzFrame> {
    let mut lines = content.lines();
    let count_line = lines.next().ok_or_else(|| ClmError::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let count: usize = count_line.trim().parse().map_err(|_| ClmError::Parse {
        line: 1,
        message: format!("expected atom count, got '{count_line}'"),
    })?;
    let comment = lines
        .next()
        .ok_or_else(|| ClmError::Parse {
            line: 2,
            message: "missing comment line".into(),
        })?
        .to_string();
    let mut elements = Vec::with_capacity(count);
    let mut coords = Vec::with_capacity(3 * count);
    for (idx, line) in lines.enumerate() {
        let line_no = idx + 3;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.is_empty() {
            continue;
        }
        if parts.len() < 4 {
            return Err(ClmError::Parse {
                line: line_no,
                message: format!("expected 'El x y z', got '{line}'"),
            });
        }
        elements.push(parts[0].to_string());
        for tok in &parts[1..4] {
            coords.push(tok.parse().map_err(|_| ClmError::Parse {
                line: line_no,
                message: format!("invalid coordinate '{tok}'"),
            })?);
        }
    }
    if elements.len() != count {
        return Err(ClmError::Parse {
            line: 1,
            message: format!("header says {count} atoms, found {}", elements.len()),
        });
    }
    Ok(XyzFrame {
        comment,
        elements,
        coords,
    })
}

pub fn read_xyz(path: &Path) -> Result<XyzFrame> {
    parse_xyz(&std::fs::read_to_string(path)?)
}

/// CSV with header `u,d`; multi-dimensional inputs are not supported by this
/// format.
pub fn write_dataset_csv(data: &Dataset) -> String {
    let mut out = String::from("u,d\n");
    for (u, d) in data.inputs.iter().zip(&data.targets) {
        let _ = writeln!(out, "{},{}", u[0], d);
    }
    out
}

pub fn parse_dataset_csv(content: &str) -> Result<Dataset> {
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "") == "u,d" => {}
        _ => {
            return Err(ClmError::Parse {
                line: 1,
                message: "expected header 'u,d'".into(),
            })
        }
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut field = |name: &str| -> Result<f64> {
            let tok = parts.next().map(str::trim).unwrap_or("");
            tok.parse().map_err(|_| ClmError::Parse {
                line: idx + 1,
                message: format!("invalid {name} value '{tok}'"),
            })
        };
        let u = field("u")?;
        let d = field("d")?;
        inputs.push(vec![u]);
        targets.push(d);
    }
    Dataset::new(inputs, targets)
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    parse_dataset_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::LjCluster;

    #[test]
    fn xyz_round_trip_preserves_energy() {
        let a = 2f64.powf(1.0 / 6.0);
        let coords = vec![
            0.0,
            0.0,
            0.0,
            a,
            0.0,
            0.0,
            a / 2.0,
            a * 3f64.sqrt() / 2.0,
            0.1,
        ];
        let e = LjCluster::new(coords.clone()).unwrap().energy().unwrap();
        let text = write_xyz(&coords, "Ar", e);
        let frame = parse_xyz(&text).unwrap();
        assert_eq!(frame.elements, vec!["Ar"; 3]);
        assert!((frame.energy().unwrap() - e).abs() < 1e-10);
        let e2 = LjCluster::new(frame.coords).unwrap().energy().unwrap();
        assert!((e2 - e).abs() < 1e-6);
    }

    #[test]
    fn xyz_errors() {
        assert!(parse_xyz("").is_err());
        assert!(parse_xyz("two\nc\n").is_err());
        assert!(matches!(
            parse_xyz("2\nc\nAr 0 0 0\n"),
            Err(ClmError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_xyz("1\nc\nAr 0 x 0\n"),
            Err(ClmError::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn dataset_csv_round_trip() {
        let d = Dataset::new(vec![vec![-1.5], vec![0.25]], vec![0.1, -2.0]).unwrap();
        let text = write_dataset_csv(&d);
        assert!(text.starts_with("u,d\n"));
        assert_eq!(parse_dataset_csv(&text).unwrap(), d);
        assert!(parse_dataset_csv("x,y\n1,2\n").is_err());
        assert!(parse_dataset_csv("u,d\n1,abc\n").is_err());
    }
}
