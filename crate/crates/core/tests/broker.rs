use std::path::Path;

use gmvnet_core::broker::{ledger_csv, Broker, FeeSchedule, RateSeries};
use gmvnet_core::panel::{ingest_reader, CSV_HEADER};

const DAYS: [&str; 10] = [
    "2021-03-01",
    "2021-03-02",
    "2021-03-03",
    "2021-03-04",
    "2021-03-05",
    "2021-03-08",
    "2021-03-09",
    "2021-03-10",
    "2021-03-11",
    "2021-03-12",
];
const CLOSES: [f64; 10] = [40.00, 40.50, 39.75, 41.20, 41.00, 40.10, 42.33, 42.00, 43.17, 42.80];

fn fixture() -> String {
    let mut csv = format!("{CSV_HEADER}\n");
    for (d, c) in DAYS.iter().zip(CLOSES) {
        csv.push_str(&format!("{d},AAA,{c},{c},1,50000,1000000,0,1,1,0\n"));
    }
    csv
}

#[test]
fn buy_and_hold_ledger_to_the_micro_unit() {
    let store = ingest_reader(fixture().as_bytes(), Path::new("fixture.csv")).unwrap();
    let mut b = Broker::new(&store, FeeSchedule::default(), RateSeries::Constant(0.05), 10_000.0).unwrap();
    b.step(0, Some(&[(0, 0.9)])).unwrap();
    for row in 1..DAYS.len() {
        b.step(row, None).unwrap();
    }

    // 225 shares at 40: commission 225 × 0.0035, notional fee 9000 × 0.000845
    assert_eq!(b.trades.len(), 1);
    assert_eq!(b.trades[0].shares, 225);
    assert_eq!(b.trades[0].commission, 787_500);
    assert_eq!(b.trades[0].notional_fee, 7_605_000);
    assert_eq!(b.trades[0].sec_fee, 0);

    let cash = 991_607_500;
    let nlv = [
        9_991_607_500i64,
        10_104_107_500,
        9_935_357_500,
        10_261_607_500,
        10_216_607_500,
        10_014_107_500,
        10_515_857_500,
        10_441_607_500,
        10_704_857_500,
        10_621_607_500,
    ];
    for (row, want) in b.ledger.iter().zip(nlv) {
        assert_eq!(row.cash, cash, "{}", row.date);
        assert_eq!(row.nlv, want, "{}", row.date);
        assert_eq!(row.totals.interest, 0);
    }
    let csv = ledger_csv(&b.ledger);
    assert_eq!(csv.lines().nth(1).unwrap(), "2021-03-01,9991.607500,991.607500,9000.000000,0.787500,7.605000,0.000000,0.000000,0.000000");
}

#[test]
fn round_trip_costs_both_legs() {
    let store = ingest_reader(fixture().as_bytes(), Path::new("fixture.csv")).unwrap();
    let mut b = Broker::new(&store, FeeSchedule::default(), RateSeries::Constant(0.0), 10_000.0).unwrap();
    b.step(0, Some(&[(0, 0.9)])).unwrap();
    let last = b.step(1, Some(&[])).unwrap().clone();
    assert_eq!(b.state.shares[0], 0);
    // sell 225 at 40.50: notional 9112.50, fee 7.7000625 → 7.700063, SEC 1.05431625 → 1.054316
    let sell = &b.trades[1];
    assert_eq!((sell.shares, sell.commission, sell.notional_fee, sell.sec_fee), (-225, 787_500, 7_700_063, 1_054_316));
    assert_eq!(last.positions_value, 0);
    assert_eq!(last.cash, 991_607_500 + 9_112_500_000 - 787_500 - 7_700_063 - 1_054_316);
}
