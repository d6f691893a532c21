//! Tabular CSV ingestion, with defaults for the CalCOFI bottle table.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::kernel::SampleMatrix;
use crate::regression::OutputMatrix;

/// Which CSV columns feed the inputs and the output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalcofiColumns {
    pub inputs: Vec<String>,
    pub output: String,
}

impl Default for CalcofiColumns {
    /// Depth, pressure, temperature and salinity predicting dissolved oxygen.
    fn default() -> Self {
        Self {
            inputs: ["Depthm", "R_PRES", "T_degC", "Salnty"].map(String::from).to_vec(),
            output: "O2ml_L".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableLoad {
    pub dataset: LabeledDataset,
    /// Rows skipped because a selected column was empty.
    pub dropped: usize,
}

fn is_missing(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

/// Reads the named input and output columns from a CSV with a header row.
///
/// Rows with a missing value in any selected column are dropped and counted.
/// Row numbers in errors are 1-based file lines.
pub fn load_table_csv<R: Read>(reader: R, inputs: &[String], outputs: &[String]) -> Result<TableLoad> {
    if inputs.is_empty() || outputs.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one input and one output column".into(),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let locate = |name: &String| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))
    };
    let in_idx = inputs.iter().map(locate).collect::<Result<Vec<_>>>()?;
    let out_idx = outputs.iter().map(locate).collect::<Result<Vec<_>>>()?;

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0;
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec)? {
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let cells: Vec<(&String, &str)> = inputs
            .iter()
            .zip(&in_idx)
            .chain(outputs.iter().zip(&out_idx))
            .map(|(name, &i)| (name, rec.get(i).unwrap_or("")))
            .collect();
        if cells.iter().any(|(_, v)| is_missing(v)) {
            dropped += 1;
            continue;
        }
        for (k, (name, v)) in cells.into_iter().enumerate() {
            let parsed: f64 =
                v.trim()
                    .parse()
                    .ok()
                    .filter(|x: &f64| x.is_finite())
                    .ok_or_else(|| Error::ParseValue {
                        row: line,
                        column: name.clone(),
                        value: v.to_string(),
                    })?;
            if k < inputs.len() {
                xs.push(parsed);
            } else {
                ys.push(parsed);
            }
        }
    }
    let m = xs.len() / inputs.len();
    if m == 0 {
        return Err(Error::Empty("CSV table after dropping incomplete rows"));
    }
    let x = SampleMatrix::from_column_slice(inputs.len(), m, &xs)?;
    let y = OutputMatrix::regression(DMatrix::from_vec(outputs.len(), m, ys))?;
    Ok(TableLoad {
        dataset: LabeledDataset::new(x, y, Split::Train)?,
        dropped,
    })
}

/// CalCOFI-style CSV with `d = 4` inputs and a single oxygen output.
pub fn load_calcofi_csv(path: impl AsRef<Path>, columns: &CalcofiColumns) -> Result<TableLoad> {
    let file = std::fs::File::open(path)?;
    load_table_csv(file, &columns.inputs, std::slice::from_ref(&columns.output))
}

/// Writes inputs then outputs, one sample per row, with the given header names.
pub fn write_table_csv<W: std::io::Write>(
    writer: W,
    ds: &LabeledDataset,
    inputs: &[String],
    outputs: &[String],
) -> Result<()> {
    if inputs.len() != ds.x.dim() || outputs.len() != ds.y.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.x.dim() + ds.y.dim(),
            found: inputs.len() + outputs.len(),
        });
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(inputs.iter().chain(outputs))?;
    for j in 0..ds.len() {
        let y = ds.y.values().column(j);
        w.write_record(ds.x.column(j).iter().chain(y.iter()).map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLEAN: &str = "\
Cst_Cnt,Depthm,R_PRES,T_degC,Salnty,O2ml_L
1,0,0,10.5,33.44,5.8
1,8,8,10.46,33.44,5.9
2,10,10,10.46,33.437,
3,19,19,10.45,33.42,6.02
";

    #[test]
    fn clean_rows_load() {
        let csv = CLEAN
            .lines()
            .filter(|l| !l.ends_with(','))
            .collect::<Vec<_>>()
            .join("\n");
        let t = load_table_csv(csv.as_bytes(), &CalcofiColumns::default().inputs, &["O2ml_L".into()]).unwrap();
        assert_eq!(t.dataset.len(), 3);
        assert_eq!(t.dropped, 0);
        assert_eq!(t.dataset.x.column(2), &[19.0, 19.0, 10.45, 33.42]);
        assert_eq!(t.dataset.y.values()[(0, 1)], 5.9);
    }

    #[test]
    fn missing_output_is_dropped() {
        let c = CalcofiColumns::default();
        let t = load_table_csv(CLEAN.as_bytes(), &c.inputs, std::slice::from_ref(&c.output)).unwrap();
        assert_eq!(t.dataset.len(), 3);
        assert_eq!(t.dropped, 1);
        assert_eq!(t.dataset.x.dim(), 4);
    }

    #[test]
    fn missing_column_and_bad_value() {
        let c = CalcofiColumns::default();
        let err = load_table_csv("a,b\n1,2\n".as_bytes(), &c.inputs, std::slice::from_ref(&c.output)).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref n) if n == "Depthm"));

        let bad = "Depthm,R_PRES,T_degC,Salnty,O2ml_L\n1,2,3,4,5\n1,2,x3,4,5\n";
        match load_table_csv(bad.as_bytes(), &c.inputs, std::slice::from_ref(&c.output)).unwrap_err() {
            Error::ParseValue { row, column, value } => {
                assert_eq!((row, column.as_str(), value.as_str()), (3, "T_degC", "x3"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn write_then_read_is_exact() {
        let ds = crate::data::generate_fpu(2, 9, 0.7, 5).unwrap();
        let names = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let mut buf = Vec::new();
        write_table_csv(&mut buf, &ds, &names("x", 2), &names("y", 2)).unwrap();
        let back = load_table_csv(buf.as_slice(), &names("x", 2), &names("y", 2)).unwrap();
        assert_eq!(back.dataset, ds);
    }

    #[test]
    fn quoted_fields() {
        let q = "\"Depthm\",\"R_PRES\",\"T_degC\",\"Salnty\",\"O2ml_L\",note\n1,2,3,4,5,\"a, b\"\n";
        let c = CalcofiColumns::default();
        let t = load_table_csv(q.as_bytes(), &c.inputs, std::slice::from_ref(&c.output)).unwrap();
        assert_eq!(t.dataset.len(), 1);
    }
}
