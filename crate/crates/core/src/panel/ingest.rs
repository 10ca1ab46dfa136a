use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;

use super::{AssetDayRecord, DayRecord, MarketStore};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str =
    "date,asset_id,open,close,adj_factor,volume,shares_outstanding,dividend_cash,split_ratio,auction_flag,delist_flag";

#[derive(Debug, Deserialize)]
struct Row {
    date: String,
    asset_id: String,
    open: Option<f64>,
    close: f64,
    adj_factor: Option<f64>,
    volume: Option<f64>,
    shares_outstanding: Option<f64>,
    dividend_cash: Option<f64>,
    split_ratio: Option<f64>,
    auction_flag: Option<String>,
    delist_flag: Option<String>,
}

fn parse_flag(v: Option<&str>) -> std::result::Result<bool, String> {
    match v.map(str::trim) {
        None | Some("") | Some("0") | Some("false") | Some("FALSE") => Ok(false),
        Some("1") | Some("true") | Some("TRUE") => Ok(true),
        Some(other) => Err(format!("invalid flag {other:?}")),
    }
}

pub fn ingest_csv(path: &Path) -> Result<MarketStore> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file, path)
}

/// Long-format ingestion; `path` is only used in error messages.
pub fn ingest_reader<R: Read>(reader: R, path: &Path) -> Result<MarketStore> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let parse_err = |line: u64, message: String| Error::Parse { path: path.to_path_buf(), line: line as usize, message };

    let mut rows: Vec<AssetDayRecord> = Vec::new();
    let mut last_date: Option<NaiveDate> = None;
    for result in rdr.deserialize::<Row>() {
        let row = result.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        // header is line 1
        let line = rows.len() as u64 + 2;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d").map_err(|e| parse_err(line, format!("date {:?}: {e}", row.date)))?;
        if let Some(prev) = last_date {
            if date < prev {
                return Err(Error::NonMonotoneDates(format!("{date} after {prev} at line {line}")));
            }
        }
        last_date = Some(date);
        let rec = AssetDayRecord {
            date,
            asset_id: row.asset_id,
            open: row.open,
            close: row.close,
            adj_factor: row.adj_factor.unwrap_or(1.0),
            volume: row.volume.unwrap_or(0.0),
            shares_outstanding: row.shares_outstanding.unwrap_or(0.0),
            dividend_cash: row.dividend_cash.unwrap_or(0.0),
            split_ratio: row.split_ratio.unwrap_or(1.0),
            auction_flag: parse_flag(row.auction_flag.as_deref()).map_err(|m| parse_err(line, m))?,
            delist_flag: parse_flag(row.delist_flag.as_deref()).map_err(|m| parse_err(line, m))?,
        };
        DayRecord::from(&rec).validate().map_err(|m| parse_err(line, m))?;
        if rec.asset_id.is_empty() {
            return Err(parse_err(line, "empty asset_id".into()));
        }
        rows.push(rec);
    }
    MarketStore::from_asset_records(&rows)
}

/// Writes every record in the long format read by [`ingest_reader`]. Floats
/// use the shortest round-trip form, so re-reading reproduces the store.
pub fn write_csv<W: Write>(store: &MarketStore, w: W) -> Result<()> {
    if !store.has_records() {
        return Err(Error::MissingData("store holds returns only, no daily records".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER.split(','))?;
    let flag = |b: bool| if b { "1" } else { "0" };
    for (row, date) in store.dates().iter().enumerate() {
        for (a, id) in store.assets().iter().enumerate() {
            let Some(r) = store.record(row, a) else { continue };
            out.write_record([
                date.to_string(),
                id.clone(),
                r.open.map(|o| o.to_string()).unwrap_or_default(),
                r.close.to_string(),
                r.adj_factor.to_string(),
                r.volume.to_string(),
                r.shares_outstanding.to_string(),
                r.dividend_cash.to_string(),
                r.split_ratio.to_string(),
                flag(r.auction).into(),
                flag(r.delist).into(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str) -> Result<MarketStore> {
        ingest_reader(text.as_bytes(), Path::new("fixture.csv"))
    }

    #[test]
    fn single_return() {
        let s = ingest(&format!("{CSV_HEADER}\n2020-01-02,A,,100,1,,,,,1,0\n2020-01-03,A,,101,1,,,,,1,0\n")).unwrap();
        assert!((s.return_at(1, 0).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn duplicate_key() {
        let e = ingest(&format!("{CSV_HEADER}\n2020-01-02,A,,100,1,,,,,1,0\n2020-01-02,A,,101,1,,,,,1,0\n"));
        assert!(matches!(e, Err(Error::DuplicateKey { .. })));
    }

    #[test]
    fn malformed_row_reports_line() {
        let e = ingest(&format!("{CSV_HEADER}\n2020-01-02,A,,100,1,,,,,1,0\n2020-01-03,A,,abc,1,,,,,1,0\n"));
        match e {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn write_then_read_is_exact() {
        use crate::panel::{generate_synthetic, CorporateAction, SyntheticMarketSpec};
        let m = generate_synthetic(&SyntheticMarketSpec { n_assets: 4, n_days: 30, ..Default::default() }).unwrap();
        let s =
            m.to_store(&[CorporateAction::Split { asset: 1, row: 10, ratio: 2.0 }, CorporateAction::Delist { asset: 2, row: 20 }]).unwrap();
        let mut buf = Vec::new();
        write_csv(&s, &mut buf).unwrap();
        let back = ingest(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.assets(), s.assets());
        assert_eq!(back.dates(), s.dates());
        for row in 0..30 {
            for a in 0..4 {
                assert_eq!(back.record(row, a), s.record(row, a));
                assert_eq!(back.return_at(row, a).map(f64::to_bits), s.return_at(row, a).map(f64::to_bits));
            }
        }
    }

    #[test]
    fn non_monotone_dates() {
        let e = ingest(&format!("{CSV_HEADER}\n2020-01-03,A,,100,1,,,,,1,0\n2020-01-02,A,,101,1,,,,,1,0\n"));
        assert!(matches!(e, Err(Error::NonMonotoneDates(_))));
    }
}
