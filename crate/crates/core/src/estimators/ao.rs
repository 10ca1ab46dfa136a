use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng as _;
use rayon::prelude::*;

use super::oracle::oracle_eigenvalues;
use crate::error::{Error, Result};
use crate::gmv::sample_correlation;
use crate::linalg;
use crate::panel::MarketStore;
use crate::rng::{self, streams};

/// Rank-indexed eigenvalue table, ascending, for one `(n, Δt_in)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct AoTable {
    pub n: usize,
    pub dt_in: usize,
    /// Calibration span as `first..last` dates, for the header comment.
    pub span: String,
    pub samples: usize,
    pub values: Vec<f64>,
}

impl AoTable {
    /// Rank-wise mean of oracle spectra.
    pub fn from_oracle_samples(dt_in: usize, span: String, spectra: &[Vec<f64>]) -> Result<Self> {
        let n = spectra.first().map(Vec::len).ok_or_else(|| Error::InvalidInput("no oracle samples".into()))?;
        if spectra.iter().any(|s| s.len() != n) {
            return Err(Error::Shape("oracle spectra differ in length".into()));
        }
        let mut values = vec![0.0; n];
        for s in spectra {
            for (v, x) in values.iter_mut().zip(s) {
                *v += x;
            }
        }
        let m = spectra.len() as f64;
        values.iter_mut().for_each(|v| *v /= m);
        Ok(Self { n, dt_in, span, samples: spectra.len(), values })
    }

    /// Ignores the input spectrum and returns the stored table.
    pub fn clean(&self, eigenvalues: &[f64], dt_in: usize) -> Result<Vec<f64>> {
        if eigenvalues.len() != self.n || dt_in != self.dt_in {
            return Err(Error::MissingAoTable { n: eigenvalues.len(), dt_in });
        }
        Ok(self.values.clone())
    }

    pub fn find(tables: &[AoTable], n: usize, dt_in: usize) -> Result<&AoTable> {
        tables.iter().find(|t| t.n == n && t.dt_in == dt_in).ok_or(Error::MissingAoTable { n, dt_in })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# n={},dt_in={},span={},samples={}", self.n, self.dt_in, self.span, self.samples)?;
        writeln!(w, "rank,eigenvalue")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{k},{v:e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse { path: "<ao table>".into(), line, message };
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))??;
        let meta = header.strip_prefix("# ").ok_or_else(|| parse_err(1, "missing header comment".into()))?;
        let mut n = None;
        let mut dt_in = None;
        let mut span = String::new();
        let mut samples = 0;
        for kv in meta.split(',') {
            let (k, v) = kv.split_once('=').ok_or_else(|| parse_err(1, format!("bad field {kv:?}")))?;
            let num = || v.parse::<usize>().map_err(|e| parse_err(1, format!("{k}: {e}")));
            match k {
                "n" => n = Some(num()?),
                "dt_in" => dt_in = Some(num()?),
                "span" => span = v.to_string(),
                "samples" => samples = num()?,
                _ => return Err(parse_err(1, format!("unknown field {k:?}"))),
            }
        }
        let (n, dt_in) = match (n, dt_in) {
            (Some(n), Some(d)) => (n, d),
            _ => return Err(parse_err(1, "header needs n and dt_in".into())),
        };
        if lines.next().transpose()?.as_deref() != Some("rank,eigenvalue") {
            return Err(parse_err(2, "expected column header rank,eigenvalue".into()));
        }
        let mut values = Vec::with_capacity(n);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 3;
            let (rank, v) = line.split_once(',').ok_or_else(|| parse_err(lineno, "expected two fields".into()))?;
            if rank.trim().parse::<usize>().ok() != Some(values.len()) {
                return Err(parse_err(lineno, format!("rank {rank} out of order")));
            }
            let v: f64 = v.trim().parse().map_err(|e| parse_err(lineno, format!("{e}")))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(parse_err(lineno, format!("eigenvalue {v} is not positive")));
            }
            values.push(v);
        }
        if values.len() != n {
            return Err(Error::Shape(format!("table declares n={n} but has {} rows", values.len())));
        }
        Ok(Self { n, dt_in, span, samples, values })
    }
}

/// Unit-diagonal second-moment matrix of the out-of-sample rows, `None` if
/// some asset did not move.
fn realized_correlation(r_out: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let m = r_out.transpose() * r_out / r_out.nrows() as f64;
    linalg::to_unit_diagonal(&m).ok()
}

/// Average-oracle table from `samples` random windows whose input and
/// evaluation rows all lie in `[first_row, end_row)`. Decision dates use the
/// one-day shift: inputs `[t−Δt_in, t−1]`, evaluation `[t+1, t+Δt_out]`.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_ao(
    store: &MarketStore,
    first_row: usize,
    end_row: usize,
    n: usize,
    dt_in: usize,
    dt_out: usize,
    samples: usize,
    seed: u64,
) -> Result<AoTable> {
    let lo = first_row + dt_in;
    if end_row > store.n_days() || end_row < lo + dt_out + 1 {
        return Err(Error::InfeasibleSpan(format!("rows [{first_row}, {end_row}) cannot hold {dt_in} + 1 + {dt_out} days")));
    }
    let hi = end_row - dt_out - 1;
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one calibration sample".into()));
    }

    let spectra: Vec<Result<Option<Vec<f64>>>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::substream(seed, streams::AO_CALIBRATION, i as u64);
            let t = r.random_range(lo..=hi);
            let pool = store.complete_assets(t - dt_in, dt_in + 1 + dt_out);
            if pool.len() < n {
                return Err(Error::InfeasibleSpan(format!("only {} complete assets around row {t}", pool.len())));
            }
            let mut assets: Vec<usize> = sample_indices(&mut r, pool.len(), n).into_iter().map(|k| pool[k]).collect();
            assets.sort_unstable();
            let x = store.history(t, dt_in, &assets)?;
            let r_out = store.evaluation(t, t + 1, dt_out, &assets)?;
            let (_, dec) = match sample_correlation(&x) {
                Ok(v) => v,
                Err(Error::ZeroVariance(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let Some(c_out) = realized_correlation(&r_out) else { return Ok(None) };
            Ok(Some(oracle_eigenvalues(&dec.vectors, &c_out)?.values))
        })
        .collect();

    let mut kept = Vec::with_capacity(samples);
    for s in spectra {
        if let Some(v) = s? {
            kept.push(v);
        }
    }
    if kept.is_empty() {
        return Err(Error::MissingData("every calibration window was degenerate".into()));
    }
    let dates = store.dates();
    let span = format!("{}..{}", dates[first_row], dates[end_row - 1]);
    AoTable::from_oracle_samples(dt_in, span, &kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{generate_synthetic, SyntheticMarketSpec};

    #[test]
    fn single_sample_is_that_sample() {
        let s = vec![vec![0.5, 1.0, 1.5]];
        let t = AoTable::from_oracle_samples(10, "x".into(), &s).unwrap();
        assert_eq!(t.values, s[0]);
        assert_eq!(t.clean(&[9.0, 9.0, 9.0], 10).unwrap(), t.clean(&[0.1, 1.0, 2.0], 10).unwrap());
        assert!(matches!(t.clean(&[1.0; 4], 10), Err(Error::MissingAoTable { n: 4, dt_in: 10 })));
    }

    #[test]
    fn csv_round_trip() {
        let t = AoTable { n: 2, dt_in: 60, span: "2000-01-03..2001-01-01".into(), samples: 7, values: vec![0.3, 1.7] };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(AoTable::read_csv(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn calibration_is_leak_free_and_keeps_trace() {
        let spec = SyntheticMarketSpec { n_assets: 12, n_days: 300, ..Default::default() };
        let mut store = generate_synthetic(&spec).unwrap().to_store(&[]).unwrap();
        store.enable_audit();
        let t = calibrate_ao(&store, 1, 250, 8, 60, 5, 40, 3).unwrap();
        assert_eq!(t.values.len(), 8);
        // each oracle spectrum sums to trace(C_out) = n
        assert!((t.values.iter().sum::<f64>() - 8.0).abs() < 1e-9);
        assert!(store.audit_log().iter().all(|a| !a.is_leak() && a.last_row < 250));
    }
}
