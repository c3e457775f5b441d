//! Series CSV: header `t,ch0[,ch1...],label`, one sample per line, labels in
//! `{normal, abnormal, unlabeled}`. Window CSV: header
//! `window,step,ch0[,ch1...],label`, one time step of one window per line.
//!
//! Reals are written in shortest round-trip form, so reading a written file
//! reproduces every value exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Label, Segment, SensorSeries, WindowSet};
use crate::error::{Error, Result};

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            msg: format!("{other:?}"),
        },
    }
}

fn parse_f64(field: &str, line: usize, column: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        msg: format!("non-numeric value {field:?} in column {column}"),
    })
}

fn parse_label(field: &str, line: usize) -> Result<Label> {
    field.trim().parse::<Label>().map_err(|msg| Error::Parse { line, msg })
}

fn reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path)?;
    if file.metadata()?.len() == 0 {
        return Err(Error::Empty(format!("{} is empty", path.display())));
    }
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file))
}

/// Channel count from a header of the form `<lead...>,ch0,...,label`.
fn channel_columns(headers: &csv::StringRecord, lead: &[&str]) -> Result<usize> {
    let bad = |msg: String| Error::Parse { line: 1, msg };
    if headers.len() < lead.len() + 2 {
        return Err(bad(format!("header has {} columns, expected at least {}", headers.len(), lead.len() + 2)));
    }
    for (i, name) in lead.iter().enumerate() {
        if headers.get(i).map(str::trim) != Some(*name) {
            return Err(bad(format!("column {i} must be {name:?}")));
        }
    }
    if headers.get(headers.len() - 1).map(str::trim) != Some("label") {
        return Err(bad("last column must be \"label\"".into()));
    }
    let channels = headers.len() - lead.len() - 1;
    for c in 0..channels {
        let expected = format!("ch{c}");
        if headers.get(lead.len() + c).map(str::trim) != Some(expected.as_str()) {
            return Err(bad(format!("expected column {expected:?}")));
        }
    }
    Ok(channels)
}

/// Reads a labeled series. Contiguous runs of `normal`/`abnormal` become
/// segments; the sample rate comes from the spacing of the first two
/// timestamps (1 Hz for single-sample files).
pub fn read_csv(path: impl AsRef<Path>) -> Result<SensorSeries> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let channels = channel_columns(&headers, &["t"])?;
    let width = channels + 2;

    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        times.push(parse_f64(&rec[0], line, "t")?);
        for c in 0..channels {
            values.push(parse_f64(&rec[1 + c], line, &format!("ch{c}"))?);
        }
        labels.push(parse_label(&rec[width - 1], line)?);
    }
    if labels.is_empty() {
        return Err(Error::Empty(format!("{} has a header but no samples", path.display())));
    }

    let sample_rate = match times.as_slice() {
        [t0, t1, ..] if t1 > t0 => 1.0 / (t1 - t0),
        [_, _, ..] => {
            return Err(Error::Parse {
                line: 3,
                msg: "timestamps must increase".into(),
            })
        }
        _ => 1.0,
    };
    let mut segments = Vec::new();
    let mut start = 0;
    for t in 1..=labels.len() {
        if t == labels.len() || labels[t] != labels[start] {
            if labels[start] != Label::Unlabeled {
                segments.push(Segment {
                    start,
                    end: t,
                    label: labels[start],
                });
            }
            start = t;
        }
    }
    SensorSeries::new(channels, values, sample_rate, segments)
}

/// Writes a series in the format accepted by [`read_csv`].
pub fn write_series_csv(series: &SensorSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "t")?;
    for c in 0..series.channels() {
        write!(w, ",ch{c}")?;
    }
    writeln!(w, ",label")?;
    for t in 0..series.len() {
        write!(w, "{}", t as f64 / series.sample_rate)?;
        for x in series.sample(t) {
            write!(w, ",{x}")?;
        }
        writeln!(w, ",{}", series.label_at(t))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes windows in long form, one time step per line.
pub fn write_csv(ws: &WindowSet, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "window,step")?;
    for c in 0..ws.v() {
        write!(w, ",ch{c}")?;
    }
    writeln!(w, ",label")?;
    for i in 0..ws.len() {
        let row = ws.row(i);
        for step in 0..ws.n() {
            write!(w, "{i},{step}")?;
            for x in &row[step * ws.v()..(step + 1) * ws.v()] {
                write!(w, ",{x}")?;
            }
            writeln!(w, ",{}", ws.label(i))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads windows written by [`write_csv`]. Every window must list steps
/// `0..n` in order and carry a single label.
pub fn read_windows_csv(path: impl AsRef<Path>) -> Result<WindowSet> {
    let path = path.as_ref();
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let channels = channel_columns(&headers, &["window", "step"])?;
    let width = channels + 3;

    let mut rows: Vec<(usize, usize, Vec<f64>, Label)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != width {
            return Err(Error::Parse {
                line,
                msg: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        let index = |i: usize, name: &str| -> Result<usize> {
            rec[i].trim().parse::<usize>().map_err(|_| Error::Parse {
                line,
                msg: format!("non-integer {name} {:?}", &rec[i]),
            })
        };
        let (win, step) = (index(0, "window")?, index(1, "step")?);
        let vals = (0..channels)
            .map(|c| parse_f64(&rec[2 + c], line, &format!("ch{c}")))
            .collect::<Result<Vec<_>>>()?;
        rows.push((win, step, vals, parse_label(&rec[width - 1], line)?));
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!("{} has a header but no windows", path.display())));
    }
    let n = rows.iter().take_while(|r| r.0 == rows[0].0).count();
    let mut ws = WindowSet::empty(n, channels);
    for (k, chunk) in rows.chunks(n).enumerate() {
        let line = k * n + 2;
        if chunk.len() != n || chunk.iter().enumerate().any(|(s, r)| r.0 != chunk[0].0 || r.1 != s || r.3 != chunk[0].3) {
            return Err(Error::Parse {
                line,
                msg: format!("window starting here is not {n} consecutive steps with one label"),
            });
        }
        let flat: Vec<f64> = chunk.iter().flat_map(|r| r.2.iter().copied()).collect();
        ws.push(&flat, chunk[0].3, usize::MAX)?;
    }
    Ok(ws)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_series, window, SynthProfile};

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = synth_series(&SynthProfile::default_with_seed(3)).unwrap();
        let p = dir.path().join("s.csv");
        write_series_csv(&s, &p).unwrap();
        let back = read_csv(&p).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn windows_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = synth_series(&SynthProfile::default_with_seed(3)).unwrap();
        let ws = window(&s, 30, 28).unwrap();
        let p = dir.path().join("w.csv");
        write_csv(&ws, &p).unwrap();
        let back = read_windows_csv(&p).unwrap();
        assert_eq!(back.len(), ws.len());
        assert_eq!(back.labels(), ws.labels());
        for i in 0..ws.len() {
            assert_eq!(back.row(i), ws.row(i));
        }
    }

    #[test]
    fn unknown_label_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "x.csv", "t,ch0,label\n0,1.5,normal\n1,2.5,anomalous\n");
        match read_csv(&p).unwrap_err() {
            Error::Parse { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("anomalous"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.csv", "");
        assert!(matches!(read_csv(&p), Err(Error::Empty(_))));
    }

    #[test]
    fn ragged_and_non_numeric_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "r.csv", "t,ch0,label\n0,1,normal\n1,normal\n");
        assert!(matches!(read_csv(&p), Err(Error::Parse { line: 3, .. })));
        let p = write(&dir, "n.csv", "t,ch0,label\n0,abc,normal\n");
        assert!(matches!(read_csv(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn segments_from_label_runs() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "s.csv",
            "t,ch0,ch1,label\n0,1,2,normal\n0.5,1,2,normal\n1,3,4,unlabeled\n1.5,5,6,abnormal\n",
        );
        let s = read_csv(&p).unwrap();
        assert_eq!(s.channels(), 2);
        assert_eq!(s.sample_rate, 2.0);
        assert_eq!(
            s.segments(),
            &[
                Segment {
                    start: 0,
                    end: 2,
                    label: Label::Normal
                },
                Segment {
                    start: 3,
                    end: 4,
                    label: Label::Abnormal
                }
            ]
        );
    }
}
