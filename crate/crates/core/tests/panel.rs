use std::path::Path;

use chrono::NaiveDate;
use gmvnet_core::gmv;
use gmvnet_core::panel::{business_days, filter_universe, ingest_reader, AssetDayRecord, FilterConfig, MarketStore, CSV_HEADER};
use gmvnet_core::rng::{self, streams};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

#[test]
fn three_assets_five_days() {
    let closes = [[10.0, 20.0, 40.0], [11.0, 19.0, 40.0], [12.1, 19.95, 30.0], [11.0, 19.95, 33.0], [11.0, 21.945, 36.3]];
    let days = ["2021-03-01", "2021-03-02", "2021-03-03", "2021-03-04", "2021-03-05"];
    let mut csv = format!("{CSV_HEADER}\n");
    for (d, row) in days.iter().zip(&closes) {
        for (k, c) in row.iter().enumerate() {
            csv.push_str(&format!("{d},{},,{c},1,1000,100000,0,1,1,0\n", ["AAA", "BBB", "CCC"][k]));
        }
    }
    let store = ingest_reader(csv.as_bytes(), Path::new("fixture.csv")).unwrap();
    let p = store.panel(1, 4).unwrap();
    let expected = DMatrix::from_row_slice(4, 3, &[0.1, -0.05, 0.0, 0.1, 0.05, -0.25, -1.1 / 12.1, 0.0, 0.1, 0.0, 0.1, 0.1]);
    assert_eq!(p.returns.shape(), (4, 3));
    assert!((p.returns - expected).abs().max() < 1e-12);
}

/// Liquid, auction-traded assets with independent 1% daily moves.
fn records(ids: &[&str], days: usize, seed: u64) -> Vec<Vec<AssetDayRecord>> {
    let mut r = rng::stream(seed, streams::SYNTHETIC);
    let dates = business_days(NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(), days);
    ids.iter()
        .enumerate()
        .map(|(j, id)| {
            let mut price = 50.0 + 5.0 * j as f64;
            let shares = 1e7 * (1.0 + j as f64);
            dates
                .iter()
                .map(|&date| {
                    price *= 1.0 + 0.01 * r.sample::<f64, _>(StandardNormal);
                    AssetDayRecord {
                        date,
                        asset_id: id.to_string(),
                        open: Some(price),
                        close: price,
                        adj_factor: 1.0,
                        volume: 0.02 * shares,
                        shares_outstanding: shares,
                        dividend_cash: 0.0,
                        split_ratio: 1.0,
                        auction_flag: true,
                        delist_flag: false,
                    }
                })
                .collect()
        })
        .collect()
}

fn store(grid: &[Vec<AssetDayRecord>]) -> MarketStore {
    MarketStore::from_asset_records(&grid.concat()).unwrap()
}

fn cfg() -> FilterConfig {
    FilterConfig { dt_in: 40, auction_window: 30, ..Default::default() }
}

const IDS: [&str; 8] = ["A", "B", "C", "D", "E", "F", "G", "H"];

#[test]
fn baseline_keeps_everything() {
    let s = store(&records(&IDS, 60, 1));
    let u = filter_universe(&s, 50, 8, &cfg(), None).unwrap();
    assert_eq!(u.assets.len(), 8);
    assert!(!u.shortfall);
}

#[test]
fn sub_ten_dollar_day_excludes() {
    let mut grid = records(&IDS, 60, 2);
    // a $20 stock that drops to about $5 inside the liquidity window
    let scale = 20.0 / grid[3][46].close;
    for rec in grid[3].iter_mut() {
        rec.close *= scale;
        rec.open = rec.open.map(|o| o * scale);
    }
    let control = filter_universe(&store(&grid), 50, 8, &cfg(), None).unwrap();
    assert!(control.assets.contains(&3));
    let drop = 5.0 / grid[3][47].close;
    for rec in grid[3][47..].iter_mut() {
        rec.close *= drop;
        rec.open = rec.open.map(|o| o * drop);
    }
    let u = filter_universe(&store(&grid), 50, 8, &cfg(), None).unwrap();
    assert!(!u.assets.contains(&3));
    assert_eq!(u.assets.len(), 7);
}

#[test]
fn one_share_class_per_issuer() {
    let ids = ["A", "B", "C", "D", "E", "XYZ.A", "XYZ.B", "H"];
    let mut grid = records(&ids, 60, 3);
    // the B class is larger
    for rec in grid[6].iter_mut() {
        rec.shares_outstanding *= 10.0;
        rec.volume *= 10.0;
    }
    let s = store(&grid);
    let u = filter_universe(&s, 50, 8, &cfg(), None).unwrap();
    assert!(u.assets.contains(&s.asset_index("XYZ.B").unwrap()), "{u:?}");
    assert!(!u.assets.contains(&s.asset_index("XYZ.A").unwrap()));
    assert_eq!(u.assets.len(), 7);
}

#[test]
fn quiet_week_alone_does_not_exclude() {
    let mut grid = records(&IDS, 60, 4);
    let last = grid[2][44].close;
    for rec in grid[2][45..].iter_mut() {
        rec.close = last;
        rec.open = Some(last);
    }
    let u = filter_universe(&store(&grid), 50, 8, &cfg(), None).unwrap();
    assert!(u.assets.contains(&2), "quiet only in the short window");

    // quiet over both windows
    let mut grid = records(&IDS, 60, 4);
    let last = grid[2][20].close;
    for rec in grid[2][21..].iter_mut() {
        rec.close = last;
        rec.open = Some(last);
    }
    let u = filter_universe(&store(&grid), 50, 8, &cfg(), None).unwrap();
    assert!(!u.assets.contains(&2));
}

#[test]
fn independent_columns_have_near_identity_correlation() {
    let mut r = rng::stream(5, streams::MONTE_CARLO);
    let t = 100_000;
    let x = DMatrix::from_fn(t, 4, |_, _| r.sample::<f64, _>(StandardNormal));
    let (c, _) = gmv::sample_correlation(&x).unwrap();
    let bound = 5.0 / (t as f64).sqrt();
    for i in 0..4 {
        assert_eq!(c[(i, i)], 1.0);
        for j in 0..4 {
            if i != j {
                assert!(c[(i, j)].abs() < bound, "C[{i},{j}] = {}", c[(i, j)]);
            }
        }
    }
}
