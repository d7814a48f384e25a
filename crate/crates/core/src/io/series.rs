//! `series.csv`: one row per sample, reals in shortest round-trip form.

use std::path::Path;

use thiserror::Error;

use crate::diagnostics::DiagnosticsRecord;

pub const SERIES_COLUMNS: [&str; 11] = [
    "t",
    "a",
    "b",
    "a_plus_xi_b",
    "u_linf",
    "v_linf",
    "grad_v_linf",
    "energy_E",
    "lyapunov_F",
    "res_u",
    "res_v",
];

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header {found:?} does not match the expected columns")]
    Header { found: Vec<String> },
    #[error("row {row}, column {column}: cannot parse {value:?}")]
    Value {
        row: usize,
        column: &'static str,
        value: String,
    },
}

fn columns(rec: &DiagnosticsRecord) -> [&Vec<f64>; 11] {
    [
        &rec.times,
        &rec.u_mass,
        &rec.v_mass,
        &rec.combined_mass,
        &rec.u_linf,
        &rec.v_linf,
        &rec.grad_v_linf,
        &rec.energy_e,
        &rec.lyapunov_f,
        &rec.res_u,
        &rec.res_v,
    ]
}

pub fn encode_series(rec: &DiagnosticsRecord) -> Result<Vec<u8>, SeriesError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SERIES_COLUMNS)?;
    let cols = columns(rec);
    for i in 0..rec.len() {
        // `Debug` prints the shortest string that parses back exactly,
        // switching to exponent notation for very small or large magnitudes
        w.write_record(cols.iter().map(|c| format!("{:?}", c[i])))?;
    }
    w.into_inner().map_err(|e| SeriesError::Io(e.into_error()))
}

pub fn write_series(rec: &DiagnosticsRecord, path: &Path) -> Result<(), SeriesError> {
    super::write_atomic(path, &encode_series(rec)?)?;
    Ok(())
}

/// Parses a series back into a record. Only the eleven series columns are
/// filled; `xi`, the prediction and the run statistics are left at defaults.
pub fn decode_series(bytes: &[u8]) -> Result<DiagnosticsRecord, SeriesError> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != SERIES_COLUMNS {
        return Err(SeriesError::Header { found: header });
    }
    let mut rec = DiagnosticsRecord::default();
    for (row, line) in r.records().enumerate() {
        let line = line?;
        let mut vals = [0.0; 11];
        for (j, v) in vals.iter_mut().enumerate() {
            let raw = line.get(j).unwrap_or("");
            *v = raw.trim().parse().map_err(|_| SeriesError::Value {
                row: row + 1,
                column: SERIES_COLUMNS[j],
                value: raw.to_owned(),
            })?;
        }
        rec.times.push(vals[0]);
        rec.u_mass.push(vals[1]);
        rec.v_mass.push(vals[2]);
        rec.combined_mass.push(vals[3]);
        rec.u_linf.push(vals[4]);
        rec.v_linf.push(vals[5]);
        rec.grad_v_linf.push(vals[6]);
        rec.energy_e.push(vals[7]);
        rec.lyapunov_f.push(vals[8]);
        rec.res_u.push(vals[9]);
        rec.res_v.push(vals[10]);
    }
    Ok(rec)
}

pub fn read_series(path: &Path) -> Result<DiagnosticsRecord, SeriesError> {
    decode_series(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(values: &[f64]) -> DiagnosticsRecord {
        let mut rec = DiagnosticsRecord::default();
        for (i, &x) in values.iter().enumerate() {
            rec.times.push(i as f64 * 0.1);
            for c in [
                &mut rec.u_mass,
                &mut rec.v_mass,
                &mut rec.combined_mass,
                &mut rec.u_linf,
                &mut rec.v_linf,
                &mut rec.grad_v_linf,
                &mut rec.energy_e,
                &mut rec.lyapunov_f,
                &mut rec.res_u,
                &mut rec.res_v,
            ] {
                c.push(x);
            }
        }
        rec
    }

    #[test]
    fn header_is_fixed() {
        let bytes = encode_series(&DiagnosticsRecord::default()).unwrap();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            "t,a,b,a_plus_xi_b,u_linf,v_linf,grad_v_linf,energy_E,lyapunov_F,res_u,res_v\n"
        );
    }

    #[test]
    fn nan_survives() {
        let rec = record(&[f64::NAN, 1.0 / 3.0]);
        let back = decode_series(&encode_series(&rec).unwrap()).unwrap();
        assert!(back.res_u[0].is_nan());
        assert_eq!(back.res_u[1], 1.0 / 3.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            decode_series(b"t,a\n1,2\n"),
            Err(SeriesError::Header { .. })
        ));
        let mut bytes = encode_series(&record(&[1.0])).unwrap();
        bytes.extend_from_slice(b"1,2,3,4,5,6,7,8,9,10,x\n");
        assert!(matches!(
            decode_series(&bytes),
            Err(SeriesError::Value { column: "res_v", .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("series.csv");
        let rec = record(&[0.5, 1e-300, 123456.789]);
        write_series(&rec, &path).unwrap();
        let back = read_series(&path).unwrap();
        assert_eq!(back.lyapunov_f, rec.lyapunov_f);
        assert_eq!(back.times, rec.times);
    }

    proptest! {
        #[test]
        fn bitwise_round_trip(values in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 0..20)) {
            let rec = record(&values);
            let back = decode_series(&encode_series(&rec).unwrap()).unwrap();
            for (a, b) in back.energy_e.iter().zip(&rec.energy_e) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
