//! Flat `section.key=value` configuration with per-key provenance.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tag {
    /// Value taken from the published method.
    Paper,
    /// Implementation choice.
    Design,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tag::Paper => "paper",
            Tag::Design => "design",
        })
    }
}

pub struct KeyDef {
    pub name: &'static str,
    pub default: &'static str,
    pub tag: Tag,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, tag: Tag, help: &'static str) -> KeyDef {
    KeyDef { name, default, tag, help }
}

use Tag::{Design as D, Paper as P};

pub const KEYS: &[KeyDef] = &[
    key("seed", "0", D, "run seed; every random stream is derived from it"),
    key("out", "out", D, "output directory"),
    key("data", "", D, "long-format panel CSV; empty generates a synthetic panel from synth.*"),
    key("checkpoint", "", D, "model checkpoint; empty means <out>/model.ckpt"),
    key("synth.assets", "100", D, "synthetic panel: number of assets"),
    key("synth.days", "1500", D, "synthetic panel: number of trading days"),
    key("synth.factors", "3", D, "synthetic panel: number of latent factors"),
    key("synth.loading_scale", "0.15", D, "synthetic panel: annualized factor-loading scale"),
    key("synth.idio_vol_min", "0.15", D, "synthetic panel: lowest annualized idiosyncratic volatility"),
    key("synth.idio_vol_max", "0.45", D, "synthetic panel: highest annualized idiosyncratic volatility"),
    key("synth.innovation", "student-t", D, "synthetic panel: gaussian or student-t"),
    key("synth.nu", "5", D, "synthetic panel: Student-t degrees of freedom"),
    key("train.profile", "paper", D, "paper or desk; desk replaces untouched train.* defaults"),
    key("train.dt_in", "1200", P, "input window length in trading days"),
    key("train.dt_out", "5", P, "out-of-sample window length"),
    key("train.n_min", "50", P, "smallest basket drawn per sample"),
    key("train.n_max", "350", P, "largest basket drawn per sample"),
    key("train.epochs", "100", P, "training epochs"),
    key("train.steps", "500", P, "optimizer steps per epoch"),
    key("train.batch", "32", P, "samples per step"),
    key("train.learning_rate", "1e-4", P, "base Adam learning rate"),
    key("train.decay_factor", "0.99", P, "learning-rate decay factor"),
    key("train.decay_interval", "500", P, "batches over which the decay factor applies once"),
    key("train.clip_norm", "1.0", P, "global gradient-norm clip"),
    key("train.omega", "64", P, "LSTM hidden width"),
    key("train.calibration_start", "0", D, "first calibration row"),
    key("train.calibration_end", "", D, "last calibration row; empty uses 70% of the panel"),
    key("train.validation_days", "252", D, "trailing calibration rows that hold validation decisions"),
    key("train.validation_samples", "64", D, "fixed validation samples"),
    key("pm.gamma", "1.5", D, "power-mapping exponent"),
    key("ao.samples", "1000", D, "oracle windows averaged into the average-oracle table"),
    key("clean.estimator", "mle", D, "nn, mle, ls, qis, pm, clip, ao, oracle, erb or mcw"),
    key("clean.date", "", D, "last input date of the window; empty uses the last panel date"),
    key("clean.n", "0", D, "assets in the basket; 0 takes every asset with a full window"),
    key("clean.dt_in", "1200", P, "window length for classical estimators"),
    key("clean.constraint", "unconstrained", D, "unconstrained or long-only"),
    key("backtest.estimator", "mle", D, "estimator tag, as for clean.estimator"),
    key("backtest.constraint", "unconstrained", D, "unconstrained or long-only"),
    key("backtest.n", "300", D, "basket size"),
    key("backtest.rebalances", "250", D, "rebalances per replication"),
    key("backtest.interval", "5", P, "trading days between rebalances"),
    key("backtest.dt_in", "1200", P, "window length for classical estimators"),
    key("backtest.replications", "1000", P, "independent start dates and baskets"),
    key("simulate.estimator", "mle", D, "estimator tag, as for clean.estimator"),
    key("simulate.constraint", "unconstrained", D, "unconstrained or long-only"),
    key("simulate.n", "1000", P, "basket size"),
    key("simulate.interval", "5", P, "trading days between rebalances"),
    key("simulate.dt_in", "1200", P, "window length for classical estimators"),
    key("simulate.cash", "1000000", P, "initial cash"),
    key("simulate.start", "", D, "first trading date; empty starts after calibration or the first full window"),
    key("simulate.days", "0", D, "trading days to simulate; 0 runs to the panel end"),
    key("simulate.basket", "filtered", D, "filtered (universe filter) or topcap"),
    key("simulate.rates", "", D, "reference-rate CSV (date,rate); empty uses simulate.rate"),
    key("simulate.rate", "0", D, "constant annual reference rate"),
    key("fees.commission_low", "0.0035", P, "commission per share below the monthly tier"),
    key("fees.commission_high", "0.0020", P, "commission per share above the monthly tier"),
    key("fees.tier_shares", "300000", P, "month-to-date shares at the tier boundary"),
    key("fees.ticket_minimum", "0.35", P, "minimum commission per order"),
    key("fees.notional_rate", "0.000845", P, "exchange and clearing fee on notional, both sides"),
    key("fees.sec_rate", "0.0001157", P, "regulatory fee on sell notional"),
    key("fees.debit_spread", "0.015", D, "spread over the reference rate on debit cash"),
    key("fees.day_count", "360", P, "interest day-count basis"),
    key("filter.auction_window", "252", P, "rolling window for auction participation"),
    key("filter.auction_min_fraction", "0.95", P, "required share of auction days"),
    key("filter.liquidity_window", "5", P, "recent days checked for liquidity"),
    key("filter.min_volume_fraction", "0.01", P, "daily volume over shares outstanding"),
    key("filter.min_dollar_volume_fraction", "0.01", P, "daily dollar volume over market cap"),
    key("filter.min_shares_outstanding", "5e6", P, "shares outstanding the day before"),
    key("filter.min_price", "10", P, "lowest price the day before"),
    key("filter.max_price", "2000", P, "highest price the day before"),
    key("filter.iqr_multiplier", "1.5", P, "IQR fence on log volatility"),
    key("filter.short_vol_window", "5", P, "short volatility window"),
    key("filter.long_vol_window", "20", P, "long volatility window"),
    key("filter.max_correlation", "0.95", P, "pairwise correlation above which the smaller cap is dropped"),
    key("gradcheck.n", "20", D, "assets in the probe window"),
    key("gradcheck.dt_in", "120", D, "input window length (desk profile)"),
    key("gradcheck.dt_out", "5", P, "out-of-sample rows in the probe"),
    key("gradcheck.omega", "64", P, "LSTM hidden width"),
    key("gradcheck.step", "", D, "finite-difference step; empty uses the cube root of machine epsilon"),
    key("gradcheck.per_tensor", "0", D, "entries probed per tensor; 0 probes all"),
    key("gradcheck.tolerance", "1e-4", D, "largest accepted relative error"),
    key("diagnose.samples", "200", D, "windows used for the spectrum stability probe"),
    key("diagnose.n", "50", D, "assets per probe window"),
];

/// Values the desk profile swaps in for untouched `train.*` keys.
pub const DESK: &[(&str, &str)] = &[
    ("train.dt_in", "120"),
    ("train.n_min", "20"),
    ("train.n_max", "60"),
    ("train.epochs", "3"),
    ("train.steps", "50"),
    ("train.learning_rate", "1e-3"),
    ("train.validation_samples", "32"),
];

#[derive(Clone, Debug, PartialEq)]
pub enum Origin {
    Default,
    Profile,
    File { path: String, line: usize },
    Flag,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Default => f.write_str("default"),
            Origin::Profile => f.write_str("desk profile"),
            Origin::File { path, line } => write!(f, "{path}:{line}"),
            Origin::Flag => f.write_str("--set"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Config {
    values: BTreeMap<&'static str, (String, Origin)>,
}

fn lookup(name: &str) -> Option<&'static KeyDef> {
    KEYS.iter().find(|k| k.name == name)
}

fn split_pair(s: &str) -> Option<(&str, &str)> {
    let (k, v) = s.split_once('=')?;
    Some((k.trim(), v.trim()))
}

impl Config {
    pub fn defaults() -> Self {
        Self { values: KEYS.iter().map(|k| (k.name, (k.default.to_string(), Origin::Default))).collect() }
    }

    fn assign(&mut self, name: &str, value: &str, origin: Origin) -> Result<(), CliError> {
        let def = lookup(name).ok_or_else(|| CliError::Validation(format!("{origin}: unknown key `{name}`")))?;
        self.values.insert(def.name, (value.to_string(), origin));
        Ok(())
    }

    /// `key=value` lines; `#` starts a comment.
    pub fn load_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        self.load_str(&text, &path.display().to_string())
    }

    pub fn load_str(&mut self, text: &str, source: &str) -> Result<(), CliError> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let origin = Origin::File { path: source.to_string(), line: k + 1 };
            let (name, value) =
                split_pair(line).ok_or_else(|| CliError::Validation(format!("{origin}: expected key=value, got {line:?}")))?;
            self.assign(name, value, origin)?;
        }
        Ok(())
    }

    pub fn set(&mut self, pair: &str) -> Result<(), CliError> {
        let (name, value) = split_pair(pair).ok_or_else(|| CliError::Validation(format!("--set expects key=value, got {pair:?}")))?;
        self.assign(name, value, Origin::Flag)
    }

    /// Applies the training profile to keys still at their defaults.
    pub fn apply_profile(&mut self) -> Result<(), CliError> {
        match self.raw("train.profile").as_str() {
            "paper" => Ok(()),
            "desk" => {
                for (name, value) in DESK {
                    let slot = self.values.get_mut(name).expect("registered key");
                    if slot.1 == Origin::Default {
                        *slot = (value.to_string(), Origin::Profile);
                    }
                }
                Ok(())
            }
            other => Err(self.invalid("train.profile", format!("expected paper or desk, got {other:?}"))),
        }
    }

    pub fn raw(&self, name: &str) -> String {
        self.values.get(name).unwrap_or_else(|| panic!("unregistered key {name}")).0.clone()
    }

    pub fn origin(&self, name: &str) -> &Origin {
        &self.values.get(name).unwrap_or_else(|| panic!("unregistered key {name}")).1
    }

    pub fn invalid(&self, name: &str, message: String) -> CliError {
        CliError::Validation(format!("`{name}` ({}): {message}", self.origin(name)))
    }

    pub fn get<T: FromStr>(&self, name: &str) -> Result<T, CliError>
    where
        T::Err: fmt::Display,
    {
        let v = self.raw(name);
        v.parse().map_err(|e| self.invalid(name, format!("cannot parse {v:?}: {e}")))
    }

    /// `None` for an empty value.
    pub fn get_opt<T: FromStr>(&self, name: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        if self.raw(name).is_empty() {
            Ok(None)
        } else {
            self.get(name).map(Some)
        }
    }

    /// Every key with its effective value and where it came from.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for (name, (value, origin)) in &self.values {
            s.push_str(&format!("{name}={value}  # {origin}\n"));
        }
        s
    }
}

/// Key table appended to `--help`.
pub fn help_table() -> String {
    let width = KEYS.iter().map(|k| k.name.len()).max().unwrap_or(0);
    let mut s = String::from("Configuration keys (file lines or --set key=value):\n");
    for k in KEYS {
        let default = if k.default.is_empty() { "\"\"" } else { k.default };
        let desk = DESK.iter().find(|(n, _)| *n == k.name).map(|(_, v)| format!(", desk {v}")).unwrap_or_default();
        s.push_str(&format!("  {:<width$}  {default}{desk}  [{}]  {}\n", k.name, k.tag, k.help));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_flag() {
        let mut c = Config::defaults();
        c.load_str("# comment\ntrain.epochs = 7\n\nseed=3 # trailing\n", "run.cfg").unwrap();
        c.set("train.epochs=9").unwrap();
        assert_eq!(c.get::<usize>("train.epochs").unwrap(), 9);
        assert_eq!(c.get::<u64>("seed").unwrap(), 3);
        assert_eq!(c.origin("seed"), &Origin::File { path: "run.cfg".into(), line: 4 });
    }

    #[test]
    fn unknown_and_malformed_keys() {
        let mut c = Config::defaults();
        let e = c.load_str("train.epoch=3\n", "x.cfg").unwrap_err();
        assert!(e.to_string().contains("x.cfg:1") && e.to_string().contains("train.epoch"), "{e}");
        assert!(c.load_str("just words\n", "x.cfg").is_err());
        c.set("train.epochs=many").unwrap();
        let e = c.get::<usize>("train.epochs").unwrap_err();
        assert!(e.to_string().contains("--set"), "{e}");
    }

    #[test]
    fn desk_profile_fills_only_defaults() {
        let mut c = Config::defaults();
        c.set("train.profile=desk").unwrap();
        c.set("train.epochs=1").unwrap();
        c.apply_profile().unwrap();
        assert_eq!(c.get::<usize>("train.dt_in").unwrap(), 120);
        assert_eq!(c.get::<usize>("train.epochs").unwrap(), 1);
        assert_eq!(c.get::<usize>("train.batch").unwrap(), 32);
    }

    #[test]
    fn keys_are_unique_and_documented() {
        let mut names: Vec<&str> = KEYS.iter().map(|k| k.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), KEYS.len());
        assert!(DESK.iter().all(|(n, _)| lookup(n).is_some()));
        let table = help_table();
        assert!(KEYS.iter().all(|k| table.contains(k.name)));
    }
}
