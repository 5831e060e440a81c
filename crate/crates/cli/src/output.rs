//! CSV tables with a header row and round-trip float formatting.

use std::path::{Path, PathBuf};

/// Seventeen significant digits, enough to read back the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Like [`num`], with an empty cell for NaN.
pub fn opt_num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        num(x)
    }
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf, csv::Error> {
        let path = dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 0.028_939_4, 1e-300, 123_456.789, 0.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.5), "5.0000000000000000e-1");
        assert_eq!(opt_num(f64::NAN), "");
    }
}
