//! Plain-text matrix exports: CSV tables and portable-graymap heatmaps.

use std::fmt::Write;

use nalgebra::DMatrix;

use crate::scalar::Real;

/// CSV with an optional header row. Numbers use the shortest decimal form
/// that round-trips.
pub fn matrix_to_csv<T: Real>(header: &[String], m: &DMatrix<T>) -> String {
    let mut out = String::new();
    if !header.is_empty() {
        out.push_str(&header.join(","));
        out.push('\n');
    }
    for row in m.row_iter() {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parses a CSV table whose first row is a header of labels.
pub fn parse_csv_matrix<T: Real>(text: &str) -> Result<(Vec<String>, DMatrix<T>), String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or("empty table")?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (k, line) in lines.enumerate() {
        let before = data.len();
        for tok in line.split(',') {
            let v = tok
                .trim()
                .parse::<T>()
                .map_err(|_| format!("row {}: invalid number '{}'", k + 2, tok.trim()))?;
            data.push(v);
        }
        if data.len() - before != header.len() {
            return Err(format!(
                "row {}: expected {} fields, found {}",
                k + 2,
                header.len(),
                data.len() - before
            ));
        }
        rows += 1;
    }
    Ok((
        header.clone(),
        DMatrix::from_row_slice(rows, header.len(), &data),
    ))
}

/// Binary PGM (P5) heatmap of `|m|`, black = 0, white = the largest
/// magnitude. Row `r` of the image is row `r` of the matrix.
pub fn heatmap_pgm<T: Real>(m: &DMatrix<T>) -> Vec<u8> {
    let peak = m.iter().fold(0.0f64, |a, v| a.max(v.as_f64().abs()));
    let mut out = format!("P5\n{} {}\n255\n", m.ncols(), m.nrows()).into_bytes();
    for row in m.row_iter() {
        for v in row.iter() {
            let level = if peak > 0.0 {
                (v.as_f64().abs() / peak * 255.0).round() as u8
            } else {
                0
            };
            out.push(level);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[0.1, -2.5e-17, 1.0 / 3.0, 4.0]);
        let h = vec!["a".to_string(), "b".to_string()];
        let (h2, m2) = parse_csv_matrix::<f64>(&matrix_to_csv(&h, &m)).unwrap();
        assert_eq!(h2, h);
        assert_eq!(m2, m);
    }

    #[test]
    fn csv_reports_ragged_rows() {
        assert!(parse_csv_matrix::<f64>("a,b\n1,2\n3\n")
            .unwrap_err()
            .contains("row 3"));
        assert!(parse_csv_matrix::<f64>("a\nx\n").is_err());
    }

    #[test]
    fn pgm_scales_to_peak() {
        let m = DMatrix::from_row_slice(1, 3, &[0.0, -2.0, 1.0]);
        let img = heatmap_pgm(&m);
        assert_eq!(&img[..11], b"P5\n3 1\n255\n");
        assert_eq!(&img[11..], &[0, 255, 128]);
    }
}
