//! Diagnostic rows as CSV with 17 significant digits per float.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::norms::DiagnosticsRow;

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header for rows carrying the seminorm orders `orders`.
pub fn header(orders: &[f64]) -> Vec<String> {
    let mut h = vec!["t".to_string(), "E".into(), "E_eps".into()];
    h.extend(orders.iter().map(|s| format!("Hs_{s}")));
    h.extend(
        ["dist_L2", "dist_Linf", "dissipation", "drift", "grad_seminorm"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

/// Write `rows` as CSV to `out`; `orders` fixes the seminorm columns when
/// `rows` is empty.
pub fn write_rows<W: Write>(out: W, orders: &[f64], rows: &[DiagnosticsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| Error::Format(format!("csv: {e}"));
    w.write_record(header(orders)).map_err(fail)?;
    for r in rows {
        if r.seminorms.len() != orders.len()
            || r.seminorms.iter().zip(orders).any(|((s, _), o)| s != o)
        {
            return Err(Error::Data("rows do not share one set of seminorm orders".into()));
        }
        let mut rec = vec![fmt(r.t), fmt(r.energy), fmt(r.energy_eps)];
        rec.extend(r.seminorms.iter().map(|(_, v)| fmt(*v)));
        rec.extend([r.dist_l2, r.dist_linf, r.dissipation, r.drift, r.grad_seminorm].map(fmt));
        w.write_record(&rec).map_err(fail)?;
    }
    w.flush().map_err(|e| Error::Format(format!("csv: {e}")))
}

pub fn write_timeseries(rows: &[DiagnosticsRow], orders: &[f64], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_rows(file, orders, rows).map_err(|e| match e {
        Error::Format(m) => Error::io(path, std::io::Error::other(m)),
        other => other,
    })
}

/// Parse CSV produced by [`write_rows`].
pub fn read_rows<R: Read>(input: R) -> Result<Vec<DiagnosticsRow>> {
    let mut r = csv::Reader::from_reader(input);
    let fail = |e: csv::Error| Error::Format(format!("csv: {e}"));
    let head: Vec<String> = r.headers().map_err(fail)?.iter().map(String::from).collect();
    if head.len() < 8 || head[..3] != ["t", "E", "E_eps"] {
        return Err(Error::Format("not a diagnostics time series".into()));
    }
    let orders = head[3..head.len() - 5]
        .iter()
        .map(|h| {
            h.strip_prefix("Hs_")
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Format(format!("unexpected column '{h}'")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let k = orders.len();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(fail)?;
        let v = rec
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad number '{s}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if v.len() != head.len() {
            return Err(Error::Format("ragged row".into()));
        }
        rows.push(DiagnosticsRow {
            t: v[0],
            energy: v[1],
            energy_eps: v[2],
            seminorms: orders.iter().copied().zip(v[3..3 + k].iter().copied()).collect(),
            dist_l2: v[3 + k],
            dist_linf: v[4 + k],
            dissipation: v[5 + k],
            drift: v[6 + k],
            grad_seminorm: v[7 + k],
        });
    }
    Ok(rows)
}

pub fn read_timeseries(path: &Path) -> Result<Vec<DiagnosticsRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_rows(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64) -> DiagnosticsRow {
        DiagnosticsRow {
            t,
            energy: 0.1 + t / 3.0,
            energy_eps: std::f64::consts::PI * 1e-7,
            seminorms: vec![(0.5, 1.0 / 7.0), (1.0, 2f64.sqrt())],
            dist_l2: 1e-300,
            dist_linf: 0.0,
            dissipation: f64::MIN_POSITIVE,
            drift: 1.0 - f64::EPSILON,
            grad_seminorm: 123456.789,
        }
    }

    #[test]
    fn header_only_for_no_rows() {
        let mut buf = Vec::new();
        write_rows(&mut buf, &[0.5, 1.5], &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "t,E,E_eps,Hs_0.5,Hs_1.5,dist_L2,dist_Linf,dissipation,drift,grad_seminorm\n"
        );
    }

    #[test]
    fn floats_round_trip_bitwise() {
        let rows = vec![row(0.0), row(0.1), row(1.0 / 3.0)];
        let mut buf = Vec::new();
        write_rows(&mut buf, &[0.5, 1.0], &rows).unwrap();
        let back = read_rows(&buf[..]).unwrap();
        assert_eq!(back, rows);
        for (a, b) in back.iter().zip(&rows) {
            assert_eq!(a.energy.to_bits(), b.energy.to_bits());
        }
    }

    #[test]
    fn zero_row_prints_zeros() {
        let r = DiagnosticsRow {
            t: 0.0,
            energy: 0.0,
            energy_eps: 0.0,
            seminorms: vec![(0.5, 0.0)],
            dist_l2: 0.0,
            dist_linf: 0.0,
            dissipation: 0.0,
            drift: 0.0,
            grad_seminorm: 0.0,
        };
        let mut buf = Vec::new();
        write_rows(&mut buf, &[0.5], &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert!(line.split(',').all(|v| v.parse::<f64>().unwrap() == 0.0));
    }

    #[test]
    fn mismatched_orders_rejected() {
        let mut buf = Vec::new();
        assert!(write_rows(&mut buf, &[0.5], &[row(0.0)]).is_err());
    }

    #[test]
    fn io_errors_carry_path() {
        let p = Path::new("/nonexistent-dir/x.csv");
        match write_timeseries(&[], &[], p) {
            Err(Error::Io { path, .. }) => assert_eq!(path, p),
            other => panic!("{other:?}"),
        }
    }
}
