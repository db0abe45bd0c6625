//! Grid files: plain CSV (one grid row per line) and ASCII PGM (`P2`).
//!
//! PGM pixels map to probabilities as `value / maxval`; grids are written
//! with `maxval = 255` and `value = round(255 * S)`.

use std::fs;
use std::path::Path;

use crate::complex::ProbabilityGrid;
use crate::oracle::BinaryMask;
use crate::{Error, Result};

/// Parses CSV text. Blank lines are skipped.
pub fn parse_csv(text: &str, path: &Path) -> Result<ProbabilityGrid> {
    let parse_err = |reason: String| Error::Parse {
        kind: "CSV grid",
        path: path.to_path_buf(),
        reason,
    };
    let mut rows = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|field| {
                let field = field.trim();
                field
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("line {}: {field:?} is not a number", line_no + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    ProbabilityGrid::from_rows(&rows).map_err(|e| parse_err(e.to_string()))
}

pub fn to_csv(grid: &ProbabilityGrid) -> String {
    let mut out = String::new();
    for row in grid.values().chunks(grid.width()) {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Parses an ASCII `P2` graymap. `#` comments are allowed anywhere.
pub fn parse_pgm(text: &str, path: &Path) -> Result<ProbabilityGrid> {
    let parse_err = |reason: String| Error::Parse {
        kind: "PGM",
        path: path.to_path_buf(),
        reason,
    };
    let mut tokens = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .flat_map(str::split_whitespace);
    if tokens.next() != Some("P2") {
        return Err(parse_err("missing P2 magic number".into()));
    }
    let mut header = |name: &str| -> Result<usize> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(format!("missing or invalid {name}")))
    };
    let width = header("width")?;
    let height = header("height")?;
    let maxval = header("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(parse_err(format!("maxval {maxval} out of range")));
    }
    let values = tokens
        .map(|t| {
            let v: usize = t.parse().map_err(|_| parse_err(format!("bad pixel {t:?}")))?;
            if v > maxval {
                return Err(parse_err(format!("pixel {v} exceeds maxval {maxval}")));
            }
            Ok(v as f64 / maxval as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    ProbabilityGrid::new(height, width, values).map_err(|e| parse_err(e.to_string()))
}

pub fn to_pgm(grid: &ProbabilityGrid) -> String {
    let mut out = format!("P2\n{} {}\n255\n", grid.width(), grid.height());
    for row in grid.values().chunks(grid.width()) {
        let fields: Vec<String> = row
            .iter()
            .map(|v| ((v * 255.0).round() as u32).to_string())
            .collect();
        out.push_str(&fields.join(" "));
        out.push('\n');
    }
    out
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

/// Reads a grid, choosing the format from the extension (`.pgm` or CSV).
pub fn read_grid(path: &Path) -> Result<ProbabilityGrid> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if is_pgm(path) {
        parse_pgm(&text, path)
    } else {
        parse_csv(&text, path)
    }
}

pub fn write_grid(path: &Path, grid: &ProbabilityGrid) -> Result<()> {
    let text = if is_pgm(path) { to_pgm(grid) } else { to_csv(grid) };
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a mask stored as a grid; pixels at or above one half are foreground.
pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let grid = read_grid(path)?;
    let bits = grid.values().iter().map(|&v| v >= 0.5).collect();
    BinaryMask::new(grid.height(), grid.width(), bits)
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    write_grid(path, &mask.to_grid())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let grid = ProbabilityGrid::new(2, 2, vec![0.1, 1.0 / 3.0, 0.0, 1.0]).unwrap();
        let back = parse_csv(&to_csv(&grid), Path::new("x.csv")).unwrap();
        assert_eq!(back, grid);
    }

    #[test]
    fn csv_errors() {
        let p = Path::new("bad.csv");
        assert!(parse_csv("0.1,abc\n", p).is_err());
        assert!(parse_csv("0.1,0.2\n0.3\n", p).is_err());
        let err = parse_csv("0.1,1.5\n", p).unwrap_err();
        assert!(err.to_string().contains("bad.csv"));
        assert!(parse_csv("", p).is_err());
    }

    #[test]
    fn pgm_parsing() {
        let p = Path::new("g.pgm");
        let grid = parse_pgm("P2\n# comment\n2 1\n255\n0 255\n", p).unwrap();
        assert_eq!(grid.shape(), (1, 2));
        assert_eq!(grid.values(), &[0.0, 1.0]);
        assert!(parse_pgm("P5\n1 1\n255\n0\n", p).is_err());
        assert!(parse_pgm("P2\n1 1\n255\n256\n", p).is_err());
        assert!(parse_pgm("P2\n2 2\n255\n1 2 3\n", p).is_err());
    }

    #[test]
    fn pgm_quantizes() {
        let grid = ProbabilityGrid::new(1, 3, vec![0.0, 0.5, 1.0]).unwrap();
        let text = to_pgm(&grid);
        assert_eq!(text, "P2\n3 1\n255\n0 128 255\n");
        let back = parse_pgm(&text, Path::new("q.pgm")).unwrap();
        assert!((back.get(0, 1) - 128.0 / 255.0).abs() < 1e-15);
    }
}
