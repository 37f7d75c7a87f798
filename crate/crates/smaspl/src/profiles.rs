//! Profile CSV: `timestamp,mg0_load_kw,mg0_irradiance,mg1_load_kw,...`.
//!
//! Timestamps are local wall-clock times on a 15-minute grid, written as
//! `YYYY-MM-DDTHH:MM`. Seconds and a space separator are accepted on input.

use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use smaspl_core::scenario::{ProfileError, ProfileSeries};
use thiserror::Error;

const FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%d %H:%M:%S"];

#[derive(Debug, Error)]
pub enum ProfileFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: header must start with `timestamp` and list mg<i>_load_kw, mg<i>_irradiance for i = 0, 1, ...: {detail}")]
    Header { path: PathBuf, detail: String },
    #[error("{path}, line {line}: {detail}")]
    Row { path: PathBuf, line: usize, detail: String },
}

fn data_line(index: usize) -> usize {
    index + 2
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|t| t.and_utc().timestamp().div_euclid(60))
}

pub fn format_timestamp(minutes: i64) -> String {
    DateTime::from_timestamp(minutes * 60, 0)
        .expect("timestamp in range")
        .naive_utc()
        .format(FORMATS[0])
        .to_string()
}

pub fn load_profiles(path: &Path) -> Result<ProfileSeries, ProfileFileError> {
    let file = std::fs::File::open(path).map_err(|source| ProfileFileError::Io { path: path.into(), source })?;
    read_profiles(file, path)
}

/// `path` only labels errors.
pub fn read_profiles<R: std::io::Read>(reader: R, path: &Path) -> Result<ProfileSeries, ProfileFileError> {
    let csv_err = |source| ProfileFileError::Csv { path: path.into(), source };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let header_err = |detail: String| ProfileFileError::Header { path: path.into(), detail };
    if header.get(0) != Some("timestamp") {
        return Err(header_err("first column is not `timestamp`".into()));
    }
    let mut columns = Vec::new();
    for mg in 0.. {
        let find = |name: String| header.iter().position(|h| h == name);
        match (find(format!("mg{mg}_load_kw")), find(format!("mg{mg}_irradiance"))) {
            (Some(l), Some(i)) => columns.push((l, i)),
            (None, None) => break,
            _ => return Err(header_err(format!("microgrid {mg} has only one of its two columns"))),
        }
    }
    if columns.is_empty() {
        return Err(header_err("no microgrid columns".into()));
    }
    if header.len() != 1 + 2 * columns.len() {
        return Err(header_err(format!("{} unrecognised columns", header.len() - 1 - 2 * columns.len())));
    }

    let mut time = Vec::new();
    let mut load = vec![Vec::new(); columns.len()];
    let mut irr = vec![Vec::new(); columns.len()];
    for (index, rec) in rdr.records().enumerate() {
        let line = data_line(index);
        let row_err = |detail: String| ProfileFileError::Row { path: path.into(), line, detail };
        let rec = rec.map_err(|e| row_err(e.to_string()))?;
        let ts = rec.get(0).unwrap_or_default();
        time.push(parse_timestamp(ts).ok_or_else(|| row_err(format!("bad timestamp {ts:?}")))?);
        for (mg, &(l, i)) in columns.iter().enumerate() {
            let num = |c: usize| {
                let s = rec.get(c).unwrap_or_default();
                s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| row_err(format!("column {}: bad number {s:?}", &header[c])))
            };
            load[mg].push(num(l)?);
            irr[mg].push(num(i)?);
        }
    }
    ProfileSeries::new(time, load, irr).map_err(|e| {
        let (line, detail) = match &e {
            ProfileError::Gap { index, .. }
            | ProfileError::NegativeLoad { index, .. }
            | ProfileError::Irradiance { index, .. } => (data_line(*index), e.to_string()),
            ProfileError::Empty | ProfileError::Ragged => (1, e.to_string()),
        };
        ProfileFileError::Row { path: path.into(), line, detail }
    })
}

pub fn write_profiles<W: std::io::Write>(series: &ProfileSeries, writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["timestamp".to_owned()];
    for mg in 0..series.mg_count() {
        header.push(format!("mg{mg}_load_kw"));
        header.push(format!("mg{mg}_irradiance"));
    }
    w.write_record(&header)?;
    for (k, &t) in series.time().iter().enumerate() {
        let mut row = vec![format_timestamp(t)];
        for mg in 0..series.mg_count() {
            row.push(series.load_kw(mg)[k].to_string());
            row.push(series.irradiance(mg)[k].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_profiles(series: &ProfileSeries, path: &Path) -> Result<(), ProfileFileError> {
    let file = std::fs::File::create(path).map_err(|source| ProfileFileError::Io { path: path.into(), source })?;
    write_profiles(series, file).map_err(|source| ProfileFileError::Csv { path: path.into(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps_round_trip() {
        let t = parse_timestamp("2024-01-01T00:15").unwrap();
        assert_eq!(t, 28_401_135);
        assert_eq!(format_timestamp(t), "2024-01-01T00:15");
        assert_eq!(parse_timestamp("2024-01-01 00:15:00"), Some(t));
        assert_eq!(parse_timestamp("yesterday"), None);
    }

    #[test]
    fn negative_load_names_the_line() {
        let text = "timestamp,mg0_load_kw,mg0_irradiance\n2024-01-01T00:00,1,0\n2024-01-01T00:15,-2,0\n";
        let err = read_profiles(text.as_bytes(), Path::new("p.csv")).unwrap_err();
        assert!(matches!(err, ProfileFileError::Row { line: 3, .. }), "{err}");
    }
}
