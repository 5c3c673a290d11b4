//! CSV layout: header `t,dim_0,…,dim_{D−1}[,label]`, one row per slot.
//! Floats are written in shortest round-trip form.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::series::TimeSeriesWindow;

pub fn save_csv(window: &TimeSeriesWindow, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let d = window.dims();
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((0..d).map(|i| format!("dim_{i}")));
    if window.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let x = window.values();
    for t in 0..window.len() {
        let mut row: Vec<String> = vec![(window.start_index() + t).to_string()];
        row.extend(x.row(t).iter().map(|v| format!("{v}")));
        if let Some(l) = window.labels() {
            row.push(l[t].to_string());
        }
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.display().to_string(),
            line,
            msg: format!("{other:?}"),
        },
    }
}

pub fn load_csv(path: &Path) -> Result<TimeSeriesWindow> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.first() != Some(&"t") {
        return Err(Error::MissingColumn("t".into()));
    }
    let d = cols[1..].iter().take_while(|c| c.starts_with("dim_")).count();
    let dims_ok = (0..d).all(|i| cols[1 + i] == format!("dim_{i}"));
    if d == 0 || !dims_ok {
        return Err(Error::MissingColumn("dim_0".into()));
    }
    let has_label = match &cols[1 + d..] {
        [] => false,
        ["label"] => true,
        other => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: format!("unexpected columns {other:?}"),
            })
        }
    };

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut start = None;
    let mut n = 0usize;
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line,
            msg,
        };
        let t: usize = rec[0].trim().parse().map_err(|_| bad(format!("bad slot index `{}`", &rec[0])))?;
        match start {
            None => start = Some(t),
            Some(s0) if t != s0 + n => return Err(bad(format!("slot index {t} is not consecutive"))),
            _ => {}
        }
        for i in 0..d {
            let v: f64 = rec[1 + i].trim().parse().map_err(|_| bad(format!("bad value `{}`", &rec[1 + i])))?;
            values.push(v);
        }
        if has_label {
            match rec[1 + d].trim() {
                "0" => labels.push(0u8),
                "1" => labels.push(1u8),
                other => return Err(bad(format!("label must be 0 or 1, got `{other}`"))),
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::TooShort { len: 0, min: 1 });
    }
    let arr = Array2::from_shape_vec((n, d), values).expect("row-major fill");
    TimeSeriesWindow::new(arr, start.unwrap_or(0), has_label.then_some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        let x = ndarray::array![[0.1, 1.0 / 3.0], [1e-300, -2.5e17], [std::f64::consts::E, 0.0]];
        let w = TimeSeriesWindow::new(x, 5, Some(vec![0, 1, 0])).unwrap();
        save_csv(&w, &p).unwrap();
        let back = load_csv(&p).unwrap();
        assert_eq!(back.start_index(), 5);
        assert_eq!(back.labels(), w.labels());
        for (a, b) in w.values().iter().zip(back.values().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn missing_label_column_means_absent() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "t,dim_0\n0,1.5\n1,2.5\n").unwrap();
        let w = load_csv(&p).unwrap();
        assert!(w.labels().is_none());
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn malformed_row_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "t,dim_0,label\n0,1.5,0\n1,oops,1\n").unwrap();
        match load_csv(&p) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_dims_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        fs::write(&p, "t,label\n0,0\n").unwrap();
        assert!(matches!(load_csv(&p), Err(Error::MissingColumn(_))));
    }
}
