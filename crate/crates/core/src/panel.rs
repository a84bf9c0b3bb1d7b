//! Keyed matrices and their file formats.
//!
//! The canonical format is a long CSV with header `row,col,value` and one
//! sample per record. Axes follow the first appearance of each key. A record
//! with an empty value declares its row and column without adding a sample,
//! which lets a writer pin the axis order and keep fully missing rows or
//! columns. The JSON format stores the keys and the nested cells directly.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::empdist::EmpiricalDistribution;
use crate::error::{Error, Result};
use crate::matrix::DistributionalMatrix;
use crate::scalar::Scalar;

const HEADER: [&str; 3] = ["row", "col", "value"];

#[derive(Debug, Clone, PartialEq)]
pub struct Panel<T> {
    row_keys: Vec<String>,
    col_keys: Vec<String>,
    matrix: DistributionalMatrix<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct PanelJson<T> {
    rows: Vec<String>,
    cols: Vec<String>,
    cells: Vec<Vec<Option<Vec<T>>>>,
}

struct AxisIndex {
    keys: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl AxisIndex {
    fn new() -> Self {
        Self {
            keys: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    fn intern(&mut self, key: &str) -> usize {
        if let Some(&k) = self.lookup.get(key) {
            return k;
        }
        self.keys.push(key.to_owned());
        self.lookup.insert(key.to_owned(), self.keys.len() - 1);
        self.keys.len() - 1
    }
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn check_unique(keys: &[String], axis: &str) -> Result<()> {
    let mut seen = HashMap::with_capacity(keys.len());
    for k in keys {
        if seen.insert(k.as_str(), ()).is_some() {
            return Err(Error::invalid(format!("duplicate {axis} key {k:?}")));
        }
    }
    Ok(())
}

impl<T: Scalar> Panel<T> {
    pub fn new(row_keys: Vec<String>, col_keys: Vec<String>, matrix: DistributionalMatrix<T>) -> Result<Self> {
        if row_keys.len() != matrix.n_rows() {
            return Err(Error::SizeMismatch {
                left: matrix.n_rows(),
                right: row_keys.len(),
            });
        }
        if col_keys.len() != matrix.n_cols() {
            return Err(Error::SizeMismatch {
                left: matrix.n_cols(),
                right: col_keys.len(),
            });
        }
        check_unique(&row_keys, "row")?;
        check_unique(&col_keys, "column")?;
        Ok(Self {
            row_keys,
            col_keys,
            matrix,
        })
    }

    /// Keys the axes by position: `"0"`, `"1"`, ...
    pub fn from_matrix(matrix: DistributionalMatrix<T>) -> Self {
        Self {
            row_keys: (0..matrix.n_rows()).map(|i| i.to_string()).collect(),
            col_keys: (0..matrix.n_cols()).map(|j| j.to_string()).collect(),
            matrix,
        }
    }

    pub fn matrix(&self) -> &DistributionalMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DistributionalMatrix<T> {
        self.matrix
    }

    pub fn row_keys(&self) -> &[String] {
        &self.row_keys
    }

    pub fn col_keys(&self) -> &[String] {
        &self.col_keys
    }

    pub fn row_index(&self, key: &str) -> Option<usize> {
        self.row_keys.iter().position(|k| k == key)
    }

    pub fn col_index(&self, key: &str) -> Option<usize> {
        self.col_keys.iter().position(|k| k == key)
    }

    pub fn read_csv<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = Vec::new();
        reader.read_to_end(&mut text)?;
        let line_at = |pos: Option<&csv::Position>| -> u64 {
            pos.map_or(0, |p| {
                let mut end = (p.byte() as usize).min(text.len());
                while end < text.len() && matches!(text[end], b'\n' | b'\r') {
                    end += 1;
                }
                1 + text[..end].iter().filter(|&&b| b == b'\n').count() as u64
            })
        };
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_slice());
        let header = rdr.headers().map_err(|e| parse_error(1, e.to_string()))?;
        if header.iter().ne(HEADER) {
            return Err(parse_error(
                1,
                format!("expected header row,col,value, found {header:?}"),
            ));
        }
        let (mut rows, mut cols) = (AxisIndex::new(), AxisIndex::new());
        let mut cells: HashMap<(usize, usize), Vec<T>> = HashMap::new();
        for record in rdr.records() {
            let record = record.map_err(|e| parse_error(line_at(e.position()), e.to_string()))?;
            let line = line_at(record.position());
            if record.len() != 3 {
                return Err(parse_error(line, format!("expected 3 fields, found {}", record.len())));
            }
            if record[0].is_empty() || record[1].is_empty() {
                return Err(parse_error(line, "empty row or column key"));
            }
            let i = rows.intern(&record[0]);
            let j = cols.intern(&record[1]);
            let slot = cells.entry((i, j)).or_default();
            if record[2].is_empty() {
                continue;
            }
            let value: T = record[2]
                .parse()
                .map_err(|_| parse_error(line, format!("cannot parse value {:?}", &record[2])))?;
            if !value.is_finite() {
                return Err(parse_error(line, format!("value {:?} is not finite", &record[2])));
            }
            slot.push(value);
        }
        if rows.keys.is_empty() {
            return Err(parse_error(1, "no records"));
        }
        let mut matrix = DistributionalMatrix::empty(rows.keys.len(), cols.keys.len())?;
        for ((i, j), samples) in cells {
            if !samples.is_empty() {
                matrix.set(i, j, Some(EmpiricalDistribution::from_vec(samples)?));
            }
        }
        Ok(Self {
            row_keys: rows.keys,
            col_keys: cols.keys,
            matrix,
        })
    }

    /// Writes every cell in row-major order. Missing cells become a single
    /// record with an empty value, so reading the output back reproduces the
    /// axes exactly.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(HEADER).map_err(csv_io)?;
        for (i, rk) in self.row_keys.iter().enumerate() {
            for (j, ck) in self.col_keys.iter().enumerate() {
                match self.matrix.get(i, j) {
                    Some(d) => {
                        for x in d.samples() {
                            w.write_record([rk.as_str(), ck.as_str(), &x.to_string()])
                                .map_err(csv_io)?;
                        }
                    }
                    None => w.write_record([rk.as_str(), ck.as_str(), ""]).map_err(csv_io)?,
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_json<R: Read>(reader: R) -> Result<Self> {
        let raw: PanelJson<T> = serde_json::from_reader(reader)?;
        if let Some((i, _)) = raw
            .cells
            .iter()
            .flatten()
            .flatten()
            .flat_map(|c| c.iter())
            .enumerate()
            .find(|(_, x)| !x.is_finite())
        {
            return Err(Error::NonFiniteSample { index: i });
        }
        let matrix = DistributionalMatrix::from_rows(raw.cells)?;
        Self::new(raw.rows, raw.cols, matrix)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        let cells = (0..self.matrix.n_rows())
            .map(|i| {
                (0..self.matrix.n_cols())
                    .map(|j| self.matrix.get(i, j).map(|d| d.samples().to_vec()))
                    .collect()
            })
            .collect();
        let raw = PanelJson {
            rows: self.row_keys.clone(),
            cols: self.col_keys.clone(),
            cells,
        };
        serde_json::to_writer_pretty(writer, &raw)?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(e.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<Panel<f64>> {
        Panel::read_csv(text.as_bytes())
    }

    #[test]
    fn axes_follow_first_appearance() {
        let p = read("row,col,value\nq2,acme,1.5\nq1,zeta,2\nq2,acme,0.5\nq1,acme,3\n").unwrap();
        assert_eq!(p.row_keys(), ["q2", "q1"]);
        assert_eq!(p.col_keys(), ["acme", "zeta"]);
        assert_eq!(p.matrix().get(0, 0).unwrap().samples(), [0.5, 1.5]);
        assert!(!p.matrix().is_observed(0, 1));
        assert_eq!(p.row_index("q1"), Some(1));
        assert_eq!(p.col_index("nope"), None);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("row,col,value\na,b,1\na,b,x\n", 3),
            ("row,col,value\na,b,1\n\na,b,inf\n", 4),
            ("row,col,value\na,b\n", 2),
            ("r,c,v\na,b,1\n", 1),
            ("row,col,value\n", 1),
            ("row,col,value\n,b,1\n", 2),
        ];
        for (text, want) in cases {
            match read(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn csv_round_trip_keeps_missing_axes() {
        let m = DistributionalMatrix::from_rows(vec![
            vec![None, Some(vec![0.1, -2.5e-7])],
            vec![None, None],
            vec![Some(vec![1.0 / 3.0]), None],
        ])
        .unwrap();
        let p = Panel::new(
            vec!["a".into(), "b".into(), "c,d".into()],
            vec!["x".into(), "y".into()],
            m,
        )
        .unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(Panel::read_csv(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn json_round_trip() {
        let m = DistributionalMatrix::from_rows(vec![vec![Some(vec![1.0f32, 2.0]), None]]).unwrap();
        let p = Panel::from_matrix(m);
        let mut buf = Vec::new();
        p.write_json(&mut buf).unwrap();
        assert_eq!(Panel::<f32>::read_json(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn rejects_inconsistent_keys() {
        let m = DistributionalMatrix::<f64>::empty(2, 1).unwrap();
        assert!(Panel::new(vec!["a".into()], vec!["x".into()], m.clone()).is_err());
        assert!(Panel::new(vec!["a".into(), "a".into()], vec!["x".into()], m).is_err());
    }
}
