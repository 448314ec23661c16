//! CSV input and output of functional samples: one row per curve, one column
//! per grid point. An optional header row holds the grid points; without it
//! the grid is equispaced on `[0, 1]`.

use crate::error::{Error, Result};
use crate::fseries::{FSeries, Grid};
use std::io::{Read, Write};
use std::path::Path;

fn parse_cell(cell: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| Error::Input(format!("row {row}, column {col}: '{cell}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Input(format!("row {row}, column {col}: value '{cell}' is not finite")));
    }
    Ok(v)
}

/// Reads a series from CSV text. Row and column numbers in errors are 1-based
/// and count the header line.
pub fn read_series<R: Read>(reader: R, grid_header: bool) -> Result<FSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut points: Option<Vec<f64>> = None;
    let mut data = Vec::new();
    let mut width: Option<usize> = None;
    let mut n = 0;
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 1;
        let rec = rec.map_err(|e| Error::Input(format!("row {line}: {e}")))?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        if let Some(w) = width {
            if rec.len() != w {
                return Err(Error::Input(format!("row {line} has {} columns, expected {w}", rec.len())));
            }
        }
        width = Some(rec.len());
        let values = rec
            .iter()
            .enumerate()
            .map(|(j, c)| {
                if c.is_empty() {
                    Err(Error::Input(format!("row {line}, column {}: missing value", j + 1)))
                } else {
                    parse_cell(c, line, j + 1)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if grid_header && points.is_none() {
            points = Some(values);
        } else {
            data.extend(values);
            n += 1;
        }
    }
    let m = width.ok_or_else(|| Error::Input("input contains no data rows".into()))?;
    let grid = match points {
        Some(p) => Grid::trapezoid(p).map_err(|e| Error::Input(format!("grid header: {e}")))?,
        None => Grid::uniform(m)?,
    };
    FSeries::from_flat(grid, n, data)
}

pub fn read_csv(path: &Path, grid_header: bool) -> Result<FSeries> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))?;
    read_series(std::io::BufReader::new(file), grid_header)
}

/// Writes a series as CSV with values in round-trip precision.
pub fn write_series<W: Write>(writer: W, xs: &FSeries, grid_header: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let fmt = |v: &f64| format!("{v:?}");
    let to_io = |e: csv::Error| Error::Io(e.into());
    if grid_header {
        w.write_record(xs.grid().points().iter().map(fmt)).map_err(to_io)?;
    }
    for row in xs.rows() {
        w.write_record(row.iter().map(fmt)).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(path: &Path, xs: &FSeries, grid_header: bool) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_series(std::io::BufWriter::new(file), xs, grid_header)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_header() {
        let grid = Grid::trapezoid(vec![0.0, 0.3, 1.0]).unwrap();
        let xs = FSeries::from_rows(grid, &[vec![1.0, 0.1, -2.5], vec![1e-300, 3.0, 7.25]]).unwrap();
        let mut buf = Vec::new();
        write_series(&mut buf, &xs, true).unwrap();
        let back = read_series(buf.as_slice(), true).unwrap();
        assert_eq!(back, xs);
    }

    #[test]
    fn default_grid() {
        let xs = read_series("1,2,3\n4,5,6\n".as_bytes(), false).unwrap();
        assert_eq!(xs.grid(), &Grid::uniform(3).unwrap());
        assert_eq!(xs.row(1), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn diagnostics() {
        let err = read_series("1,2\n3,x\n".as_bytes(), false).unwrap_err().to_string();
        assert!(err.contains("row 2, column 2"), "{err}");
        let err = read_series("1,2\n3,NaN\n".as_bytes(), false).unwrap_err().to_string();
        assert!(err.contains("row 2, column 2"), "{err}");
        let err = read_series("1,2\n3\n".as_bytes(), false).unwrap_err().to_string();
        assert!(err.contains("row 2 has 1 columns"), "{err}");
        let err = read_series("1,,3\n1,2,3\n".as_bytes(), false).unwrap_err().to_string();
        assert!(err.contains("missing"), "{err}");
        assert!(read_series("".as_bytes(), false).is_err());
        assert!(read_series("0,0.5,0.2\n1,2,3\n4,5,6\n".as_bytes(), true).is_err());
    }
}
