//! CSV and JSON renderings of paths and frontiers.
//!
//! Numbers are written with 17 significant digits so that values round-trip exactly;
//! non-finite values are written as `inf`, `-inf` and `nan`.

use std::io::Write;

use serde::Serializer;

use crate::error::{Error, Result};
use crate::path::TracedPath;

/// Fixed-width scientific rendering with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.16e}")
    }
}

/// Serializes finite values as numbers and the rest as their string sentinels.
pub fn ser_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() { s.serialize_f64(*v) } else { s.serialize_str(&fmt_num(*v)) }
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::Data(format!("write failed: {e}"))
}

/// Header of the path CSV for dimension `n`.
pub fn path_csv_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = ["k", "omega", "r", "lambda"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend(["nominal", "phi", "face", "vi_residual"].iter().map(|s| s.to_string()));
    h
}

/// One row per point: `k, ω, r, λ, x_1 … x_n, nominal, φ, face, vi_residual`.
pub fn write_path_csv<W: Write>(path: &TracedPath, out: W) -> Result<()> {
    let n = path.anchor.len();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(path_csv_header(n)).map_err(csv_err)?;
    for p in &path.points {
        let mut row = vec![p.k.to_string(), fmt_num(p.omega), fmt_num(p.radius), p.lambda.map_or_else(String::new, fmt_num)];
        row.extend(p.x.iter().map(|&v| fmt_num(v)));
        row.push(fmt_num(p.nominal));
        row.push(fmt_num(p.phi));
        row.push(p.face.to_string());
        row.push(fmt_num(p.vi_residual));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

/// Pretty JSON with full metadata.
pub fn path_json(path: &TracedPath) -> Result<String> {
    serde_json::to_string_pretty(path).map_err(csv_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            assert_eq!(fmt_num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt_num(f64::INFINITY), "inf");
        assert_eq!(fmt_num(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn header_layout() {
        assert_eq!(path_csv_header(2).join(","), "k,omega,r,lambda,x1,x2,nominal,phi,face,vi_residual");
    }
}
