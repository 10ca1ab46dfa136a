use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use gmvnet_core::autodiff::{grad_check, relative_error, Tensor};
use gmvnet_core::backtest::{run_frictionless, BacktestConfig, BacktestReport};
use gmvnet_core::broker::{ledger_csv, run_simulation, trades_csv, BasketRule, FeeSchedule, RateSeries, SimConfig};
use gmvnet_core::cleaner::spectrum_stability_report;
use gmvnet_core::estimators::calibrate_ao;
use gmvnet_core::gmv::sample_correlation;
use gmvnet_core::linalg;
use gmvnet_core::model::{self, ModelParams, ModelVars};
use gmvnet_core::panel::{self, generate_synthetic, FilterConfig, Innovation, MarketStore, SyntheticMarketSpec};
use gmvnet_core::rng::{self, streams};
use gmvnet_core::strategy::{DecisionInput, Strategy};
use gmvnet_core::train::{self, draw_sample, Checkpoint, TrainConfig};
use gmvnet_core::Constraint;
use log::info;
use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub struct Context {
    pub cfg: Config,
    pub parallel: bool,
    out: PathBuf,
    seed: u64,
}

impl Context {
    pub fn new(cfg: Config, parallel: bool) -> Result<Self> {
        let out = PathBuf::from(cfg.raw("out"));
        let seed = cfg.get("seed")?;
        Ok(Self { cfg, parallel, out, seed })
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out)?;
        let path = self.out.join(name);
        std::fs::write(&path, contents)?;
        info!("wrote {}", path.display());
        Ok(path)
    }

    fn checkpoint_path(&self) -> PathBuf {
        match self.cfg.raw("checkpoint") {
            p if p.is_empty() => self.out.join("model.ckpt"),
            p => PathBuf::from(p),
        }
    }
}

struct Market {
    store: MarketStore,
    /// Known only for generated panels.
    population: Option<DMatrix<f64>>,
}

fn synthetic_spec(ctx: &Context) -> Result<SyntheticMarketSpec> {
    let c = &ctx.cfg;
    let innovation = match c.raw("synth.innovation").as_str() {
        "gaussian" => Innovation::Gaussian,
        "student-t" => Innovation::StudentT { nu: c.get("synth.nu")? },
        other => return Err(c.invalid("synth.innovation", format!("expected gaussian or student-t, got {other:?}"))),
    };
    let spec = SyntheticMarketSpec {
        n_assets: c.get("synth.assets")?,
        n_days: c.get("synth.days")?,
        n_factors: c.get("synth.factors")?,
        loading_scale: c.get("synth.loading_scale")?,
        idio_vol_min: c.get("synth.idio_vol_min")?,
        idio_vol_max: c.get("synth.idio_vol_max")?,
        innovation,
        seed: ctx.seed,
    };
    spec.validate()?;
    Ok(spec)
}

fn load_market(ctx: &Context) -> Result<Market> {
    let data = ctx.cfg.raw("data");
    if data.is_empty() {
        let m = generate_synthetic(&synthetic_spec(ctx)?)?;
        info!("generated a synthetic panel of {} assets × {} days", m.panel.n_assets(), m.panel.n_days());
        return Ok(Market { store: m.to_store(&[])?, population: Some(m.covariance) });
    }
    let store = panel::ingest_csv(Path::new(&data))?;
    info!("read {} assets × {} days from {data}", store.n_assets(), store.n_days());
    Ok(Market { store, population: None })
}

fn constraint(cfg: &Config, key: &str) -> Result<Constraint> {
    match cfg.raw(key).as_str() {
        "unconstrained" => Ok(Constraint::Unconstrained),
        "long-only" => Ok(Constraint::LongOnly),
        other => Err(cfg.invalid(key, format!("expected unconstrained or long-only, got {other:?}"))),
    }
}

fn date(cfg: &Config, key: &str, store: &MarketStore) -> Result<Option<usize>> {
    let Some(d) = cfg.get_opt::<NaiveDate>(key)? else { return Ok(None) };
    store.row_of(d).map(Some).ok_or_else(|| cfg.invalid(key, format!("{d} is not a trading date of the panel")))
}

/// Last calibration row: the configured one, else 70% of the panel.
fn calibration_end(ctx: &Context, store: &MarketStore) -> Result<usize> {
    let end = match ctx.cfg.get_opt::<usize>("train.calibration_end")? {
        Some(e) => e,
        None => store.n_days() * 7 / 10,
    };
    if end >= store.n_days() {
        return Err(ctx.cfg.invalid("train.calibration_end", format!("row {end} beyond a {}-day panel", store.n_days())));
    }
    Ok(end)
}

fn load_checkpoint(ctx: &Context) -> Result<Checkpoint> {
    let path = ctx.checkpoint_path();
    if !path.exists() {
        return Err(CliError::Validation(format!("checkpoint {} not found; run `train` first or set `checkpoint`", path.display())));
    }
    Ok(Checkpoint::load(&path)?)
}

struct Built {
    strategy: Strategy,
    tag: String,
    dt_in: usize,
    calibration_end: Option<usize>,
}

/// Strategy named by `<section>.estimator`; fitted estimators also report
/// the last row they saw.
fn build_strategy(ctx: &Context, market: &Market, section: &str, n: usize, dt_in: usize) -> Result<Built> {
    let key = format!("{section}.estimator");
    let tag = ctx.cfg.raw(&key).to_ascii_lowercase();
    let store = &market.store;
    let plain = |strategy| Built { strategy, tag: tag.clone(), dt_in, calibration_end: None };
    Ok(match tag.as_str() {
        "nn" => {
            let ck = load_checkpoint(ctx)?;
            let end = NaiveDate::parse_from_str(&ck.meta.calibration_end, "%Y-%m-%d")
                .map_err(|e| CliError::Validation(format!("checkpoint calibration date: {e}")))?;
            let rows = store.dates().partition_point(|d| *d <= end);
            let dt_in = ck.params.dt_in();
            info!("network with Δt_in = {dt_in}, calibrated through {end}");
            Built { strategy: Strategy::Nn(Arc::new(ck.params)), tag, dt_in, calibration_end: rows.checked_sub(1) }
        }
        "ao" => {
            let end = calibration_end(ctx, store)?;
            // a price panel has no return on its first day
            let start = ctx.cfg.get::<usize>("train.calibration_start")?.max(usize::from(store.has_records()));
            let samples = ctx.cfg.get("ao.samples")?;
            let dt_out = ctx.cfg.get("train.dt_out")?;
            info!("calibrating the average oracle on rows {start}..={end} with {samples} windows");
            let table = calibrate_ao(store, start, end + 1, n, dt_in, dt_out, samples, ctx.seed)?;
            Built { strategy: Strategy::Ao(Arc::new(vec![table])), tag, dt_in, calibration_end: Some(end) }
        }
        "oracle" => match &market.population {
            Some(c) => plain(Strategy::Oracle(Arc::new(c.clone()))),
            None => return Err(ctx.cfg.invalid(&key, "the oracle needs a generated panel with known population covariance".into())),
        },
        _ => plain(Strategy::from_tag(&tag, ctx.cfg.get("pm.gamma")?).map_err(|e| ctx.cfg.invalid(&key, e.to_string()))?),
    })
}

fn matrix_csv(labels: &[String], m: &DMatrix<f64>) -> String {
    let mut s = labels.join(",");
    s.push('\n');
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn synth(ctx: &Context) -> Result<()> {
    let m = generate_synthetic(&synthetic_spec(ctx)?)?;
    let store = m.to_store(&[])?;
    let mut buf = Vec::new();
    panel::write_csv(&store, &mut buf)?;
    ctx.write("panel.csv", std::str::from_utf8(&buf).expect("csv is utf-8"))?;
    ctx.write("population.csv", &matrix_csv(store.assets(), &m.covariance))?;
    println!("{} assets × {} days, {} factors", m.panel.n_assets(), m.panel.n_days(), m.spec.n_factors);
    Ok(())
}

pub fn ingest(ctx: &Context, input: Option<PathBuf>) -> Result<()> {
    let path = match input {
        Some(p) => p,
        None if !ctx.cfg.raw("data").is_empty() => PathBuf::from(ctx.cfg.raw("data")),
        None => return Err(CliError::Validation("ingest needs a panel CSV argument or the `data` key".into())),
    };
    let store = panel::ingest_csv(&path)?;
    let p = store.panel(0, store.n_days())?;
    let mut s = String::from("date,");
    s.push_str(&store.assets().join(","));
    s.push('\n');
    let mut missing = 0usize;
    for (k, d) in store.dates().iter().enumerate() {
        let _ = write!(s, "{d}");
        for a in 0..store.n_assets() {
            match store.return_at(k, a) {
                Some(r) => {
                    let _ = write!(s, ",{r:e}");
                }
                None => {
                    missing += 1;
                    s.push(',');
                }
            }
        }
        s.push('\n');
    }
    ctx.write("returns.csv", &s)?;
    let cells = store.n_days() * store.n_assets();
    println!(
        "{} assets × {} days ({} to {}), {:.2}% of cells without a return, aspect ratio {:.3}",
        store.n_assets(),
        store.n_days(),
        store.dates()[0],
        store.dates()[store.n_days() - 1],
        100.0 * missing as f64 / cells.max(1) as f64,
        p.aspect_ratio()
    );
    Ok(())
}

fn train_config(ctx: &Context, store: &MarketStore) -> Result<TrainConfig> {
    let c = &ctx.cfg;
    let cfg = TrainConfig {
        dt_in: c.get("train.dt_in")?,
        dt_out: c.get("train.dt_out")?,
        n_min: c.get("train.n_min")?,
        n_max: c.get("train.n_max")?,
        epochs: c.get("train.epochs")?,
        steps_per_epoch: c.get("train.steps")?,
        batch_size: c.get("train.batch")?,
        learning_rate: c.get("train.learning_rate")?,
        decay_factor: c.get("train.decay_factor")?,
        decay_interval: c.get("train.decay_interval")?,
        clip_norm: c.get("train.clip_norm")?,
        omega: c.get("train.omega")?,
        seed: ctx.seed,
        calibration_start: c.get("train.calibration_start")?,
        calibration_end: calibration_end(ctx, store)?,
        validation_days: c.get("train.validation_days")?,
        validation_samples: c.get("train.validation_samples")?,
        parallel: ctx.parallel,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(ctx: &Context) -> Result<()> {
    let market = load_market(ctx)?;
    let cfg = train_config(ctx, &market.store)?;
    info!(
        "training {} epochs × {} steps, batch {}, Δt_in = {}, n ∈ [{}, {}]",
        cfg.epochs, cfg.steps_per_epoch, cfg.batch_size, cfg.dt_in, cfg.n_min, cfg.n_max
    );
    let out = train::train(&market.store, &cfg)?;
    let mut loss = String::from("epoch,train,validation\n");
    for e in &out.history {
        let v = e.validation.map(|v| format!("{v:e}")).unwrap_or_default();
        let _ = writeln!(loss, "{},{:e},{v}", e.epoch, e.train);
    }
    ctx.write("loss.csv", &loss)?;
    let path = ctx.checkpoint_path();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    out.checkpoint.save(&path)?;
    let digest = hex::encode(Sha256::digest(std::fs::read(&path)?));
    println!("checkpoint {} sha256 {digest}", path.display());
    println!("config hash {}, {} parameters", cfg.hash(), out.checkpoint.meta.param_count);
    if out.skipped_samples > 0 || out.rejected_steps > 0 {
        println!("{} non-finite samples skipped, {} steps rejected", out.skipped_samples, out.rejected_steps);
    }
    Ok(())
}

pub fn clean(ctx: &Context) -> Result<()> {
    let market = load_market(ctx)?;
    let store = &market.store;
    let tag = ctx.cfg.raw("clean.estimator").to_ascii_lowercase();
    // the network fixes its own window length
    let dt_in = if tag == "nn" { load_checkpoint(ctx)?.params.dt_in() } else { ctx.cfg.get("clean.dt_in")? };
    let last = date(&ctx.cfg, "clean.date", store)?.unwrap_or(store.n_days() - 1);
    let t = last + 1;
    if t < dt_in {
        return Err(ctx.cfg.invalid("clean.date", format!("only {t} rows before it, the window needs {dt_in}")));
    }
    let mut assets = store.complete_assets(t - dt_in, dt_in);
    let n: usize = ctx.cfg.get("clean.n")?;
    if n > 0 {
        if assets.len() < n {
            return Err(ctx.cfg.invalid("clean.n", format!("only {} assets have a full window", assets.len())));
        }
        assets.truncate(n);
    }
    if assets.len() < 2 {
        return Err(CliError::Validation("fewer than 2 assets have a full window".into()));
    }
    let built = build_strategy(ctx, &market, "clean", assets.len(), dt_in)?;
    let window = store.history(t, dt_in, &assets)?;
    let caps: Option<Vec<f64>> = if store.has_records() {
        store.records_for_decision(t, last, &assets)?.iter().map(|r| r.map(|r| r.market_cap())).collect()
    } else {
        None
    };
    let input = DecisionInput { window: &window, assets: &assets, caps: caps.as_deref() };
    let w = built.strategy.weights(&input, constraint(&ctx.cfg, "clean.constraint")?)?;

    let (_, sample) = sample_correlation(&window)?;
    let cleaned = match built.strategy {
        Strategy::Erb | Strategy::Mcw => None,
        _ => Some(linalg::eigh(&linalg::to_unit_diagonal(&built.strategy.covariance(&input)?)?)?.values),
    };
    let mut eig = String::from("rank,sample,cleaned\n");
    for (k, l) in sample.values.iter().enumerate() {
        let c = cleaned.as_ref().map(|v| format!("{:e}", v[k])).unwrap_or_default();
        let _ = writeln!(eig, "{},{l:e},{c}", k + 1);
    }
    ctx.write("eigenvalues.csv", &eig)?;
    let ids: Vec<String> = assets.iter().map(|&a| store.assets()[a].clone()).collect();
    ctx.write("weights.csv", &w.to_csv(&ids))?;

    let m = assets.len() as f64;
    let spread = w.w.iter().map(|x| (x - 1.0 / m).abs()).fold(0.0, f64::max);
    println!(
        "{} on {} assets × {} days ending {}: leverage {:.3}, effective assets {:.1}, max |w − 1/n| = {spread:.3e}",
        built.tag.to_uppercase(),
        assets.len(),
        dt_in,
        store.dates()[last],
        w.leverage(),
        w.effective_assets()
    );
    Ok(())
}

pub fn backtest(ctx: &Context) -> Result<()> {
    let market = load_market(ctx)?;
    let c = &ctx.cfg;
    let n = c.get("backtest.n")?;
    let built = build_strategy(ctx, &market, "backtest", n, c.get("backtest.dt_in")?)?;
    let cfg = BacktestConfig {
        n,
        rebalances: c.get("backtest.rebalances")?,
        interval: c.get("backtest.interval")?,
        dt_in: built.dt_in,
        constraint: constraint(c, "backtest.constraint")?,
        replications: c.get("backtest.replications")?,
        seed: ctx.seed,
        first_row: 0,
        last_row: market.store.n_days() - 1,
        calibration_end: built.calibration_end,
        parallel: ctx.parallel,
    };
    let report = run_frictionless(&market.store, &built.strategy, &cfg)?;
    ctx.write(&format!("backtest_{}.csv", built.tag), &report.to_csv())?;
    print!("{}", BacktestReport::table(std::slice::from_ref(&report)));
    Ok(())
}

fn fees(cfg: &Config) -> Result<FeeSchedule> {
    let f = FeeSchedule {
        commission_low: cfg.get("fees.commission_low")?,
        commission_high: cfg.get("fees.commission_high")?,
        tier_shares: cfg.get("fees.tier_shares")?,
        ticket_minimum: cfg.get("fees.ticket_minimum")?,
        notional_rate: cfg.get("fees.notional_rate")?,
        sec_rate: cfg.get("fees.sec_rate")?,
        debit_spread: cfg.get("fees.debit_spread")?,
        day_count: cfg.get("fees.day_count")?,
    };
    f.validate()?;
    Ok(f)
}

fn filter(cfg: &Config) -> Result<FilterConfig> {
    Ok(FilterConfig {
        auction_window: cfg.get("filter.auction_window")?,
        auction_min_fraction: cfg.get("filter.auction_min_fraction")?,
        liquidity_window: cfg.get("filter.liquidity_window")?,
        min_volume_fraction: cfg.get("filter.min_volume_fraction")?,
        min_dollar_volume_fraction: cfg.get("filter.min_dollar_volume_fraction")?,
        min_shares_outstanding: cfg.get("filter.min_shares_outstanding")?,
        min_price: cfg.get("filter.min_price")?,
        max_price: cfg.get("filter.max_price")?,
        iqr_multiplier: cfg.get("filter.iqr_multiplier")?,
        short_vol_window: cfg.get("filter.short_vol_window")?,
        long_vol_window: cfg.get("filter.long_vol_window")?,
        max_correlation: cfg.get("filter.max_correlation")?,
        ..FilterConfig::default()
    })
}

pub fn simulate(ctx: &Context) -> Result<()> {
    let market = load_market(ctx)?;
    let store = &market.store;
    let c = &ctx.cfg;
    let n = c.get("simulate.n")?;
    let built = build_strategy(ctx, &market, "simulate", n, c.get("simulate.dt_in")?)?;
    let start = match date(c, "simulate.start", store)? {
        Some(r) => r,
        None => built.calibration_end.map_or(built.dt_in + 1, |e| e + 1).max(built.dt_in + 1),
    };
    if start <= built.dt_in || start >= store.n_days() {
        return Err(c.invalid(
            "simulate.start",
            format!("row {start} leaves no room for a {}-day window inside a {}-day panel", built.dt_in, store.n_days()),
        ));
    }
    let days = match c.get::<usize>("simulate.days")? {
        0 => store.n_days().saturating_sub(start),
        d => d,
    };
    let rates = match c.get_opt::<PathBuf>("simulate.rates")? {
        Some(p) => RateSeries::from_csv(&p)?,
        None => RateSeries::Constant(c.get("simulate.rate")?),
    };
    let basket = match c.raw("simulate.basket").as_str() {
        "filtered" => BasketRule::Filtered(filter(c)?),
        "topcap" => BasketRule::TopCap,
        other => return Err(c.invalid("simulate.basket", format!("expected filtered or topcap, got {other:?}"))),
    };
    let cfg = SimConfig {
        start_row: start,
        days,
        initial_cash: c.get("simulate.cash")?,
        interval: c.get("simulate.interval")?,
        n,
        dt_in: built.dt_in,
        constraint: constraint(c, "simulate.constraint")?,
        basket,
        fees: fees(c)?,
        rates,
        calibration_end: built.calibration_end,
    };
    info!("simulating {} from {} for {days} days", built.tag.to_uppercase(), store.dates()[start]);
    let sim = run_simulation(store, &built.strategy, &cfg)?;
    ctx.write("ledger.csv", &ledger_csv(&sim.ledger))?;
    ctx.write("trades.csv", &trades_csv(&sim.trades))?;
    let mut vol = String::from("date,rolling_vol\n");
    for (row, v) in sim.ledger.iter().skip(1).zip(&sim.rolling_vol) {
        let _ = writeln!(vol, "{},{}", row.date, if v.is_nan() { String::new() } else { format!("{v:e}") });
    }
    ctx.write("rolling_vol.csv", &vol)?;
    let mut mdd = String::from("year,max_drawdown\n");
    for (y, d) in &sim.metrics.max_drawdown_by_year {
        let _ = writeln!(mdd, "{y},{d:e}");
    }
    ctx.write("drawdown_by_year.csv", &mdd)?;
    ctx.write("metrics.json", &serde_json::to_string_pretty(&sim.metrics).map_err(|e| CliError::Runtime(e.to_string()))?)?;

    let (first, last) = (&sim.ledger[0], &sim.ledger[sim.ledger.len() - 1]);
    let t = &last.totals;
    let money = gmvnet_core::broker::from_micros;
    println!(
        "NLV {:.2} → {:.2}; return {:.2}% p.a., vol {:.2}%, Sharpe {:.2}, max drawdown {:.2}%",
        money(first.nlv),
        money(last.nlv),
        100.0 * sim.metrics.ann_return,
        100.0 * sim.metrics.ann_vol,
        sim.metrics.sharpe,
        100.0 * sim.metrics.max_drawdown
    );
    println!(
        "{} trades; commission {:.2}, notional fees {:.2}, SEC fees {:.2}, interest {:.2}, dividends {:.2}",
        sim.trades.len(),
        money(t.commission),
        money(t.notional),
        money(t.sec),
        money(t.interest),
        money(t.dividends)
    );
    Ok(())
}

pub fn gradcheck(ctx: &Context) -> Result<()> {
    let c = &ctx.cfg;
    let (n, dt_in, dt_out, omega): (usize, usize, usize, usize) =
        (c.get("gradcheck.n")?, c.get("gradcheck.dt_in")?, c.get("gradcheck.dt_out")?, c.get("gradcheck.omega")?);
    let step = c.get_opt::<f64>("gradcheck.step")?.unwrap_or(f64::EPSILON.cbrt());
    let tolerance: f64 = c.get("gradcheck.tolerance")?;
    let per_tensor: usize = c.get("gradcheck.per_tensor")?;
    if n < 2 || dt_in <= n || dt_out == 0 {
        return Err(CliError::Validation(format!("gradcheck needs 2 ≤ n < Δt_in and Δt_out ≥ 1 (n={n}, Δt_in={dt_in})")));
    }
    if !(step > 0.0) {
        return Err(c.invalid("gradcheck.step", "must be positive".into()));
    }

    let spec = SyntheticMarketSpec { n_assets: n, n_days: dt_in + dt_out, seed: ctx.seed, ..Default::default() };
    let returns = generate_synthetic(&spec)?.panel.returns;
    let window = gmvnet_core::lag::lag_major(&returns.rows(0, dt_in).into_owned());
    let r_out = Tensor::from_dmatrix(&returns.rows(dt_in, dt_out).into_owned());
    let params = ModelParams::init(dt_in, omega, ctx.seed)?;
    let tensors = params.to_tensors();
    let subset: Option<Vec<Vec<usize>>> = (per_tensor > 0)
        .then(|| tensors.iter().map(|t| (0..per_tensor.min(t.len())).map(|i| i * t.len() / per_tensor.min(t.len())).collect()).collect());
    info!("probing {} parameters at step {step:.1e}", subset.as_ref().map_or(params.param_count(), |s| s.iter().map(Vec::len).sum()));

    let report = grad_check(
        |t, v| {
            let vars = ModelVars::from_slice(v)?;
            model::sample_loss(t, &vars, window.clone(), r_out.clone())
        },
        &tensors,
        step,
        subset.as_deref(),
    )?;
    let mut groups: BTreeMap<String, f64> = BTreeMap::new();
    let probed = |k: usize| -> Vec<usize> {
        match &subset {
            Some(s) => s[k].clone(),
            None => (0..tensors[k].len()).collect(),
        }
    };
    for (k, name) in params.names().iter().enumerate() {
        let worst =
            probed(k).into_iter().map(|e| relative_error(report.analytic[k].data()[e], report.numeric[k].data()[e])).fold(0.0, f64::max);
        let g = groups.entry(model::group_of(name).to_string()).or_insert(0.0);
        *g = g.max(worst);
    }
    for (g, e) in &groups {
        println!("{g:<20} {e:.3e}");
    }
    println!("max relative error {:.3e} over {} entries (tolerance {tolerance:.0e})", report.max_rel_error, report.checked);
    if report.max_rel_error >= tolerance {
        return Err(CliError::Runtime(format!("gradient check failed: {:.3e} ≥ {tolerance:.0e}", report.max_rel_error)));
    }
    Ok(())
}

pub fn diagnose(ctx: &Context) -> Result<()> {
    let ck = load_checkpoint(ctx)?;
    let params = &ck.params;
    let lag = params.lag.report();
    let mut s = String::from("lag,alpha,beta\n");
    for (k, (a, b)) in lag.alpha.iter().zip(&lag.beta).enumerate() {
        let _ = writeln!(s, "{},{a:e},{b:e}", k + 1);
    }
    ctx.write("lag_profile.csv", &s)?;

    let market = load_market(ctx)?;
    let store = &market.store;
    let (samples, n): (usize, usize) = (ctx.cfg.get("diagnose.samples")?, ctx.cfg.get("diagnose.n")?);
    let mut r = rng::stream(ctx.seed, streams::VALIDATION);
    let mut spectra = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x = draw_sample(store, (0, store.n_days() - 1), params.dt_in(), 1, (n, n), &mut r)?;
        let p = params.predict(&x.window)?;
        spectra.push(p.inv_eigenvalues.iter().map(|v| 1.0 / v).collect::<Vec<f64>>());
    }
    let st = spectrum_stability_report(&spectra)?;
    let mut s = String::from("rank,median,lower,upper,log_std\n");
    for k in 0..st.median.len() {
        let _ = writeln!(s, "{},{:e},{:e},{:e},{:e}", k + 1, st.median[k], st.lower[k], st.upper[k], st.log_std[k]);
    }
    ctx.write("spectrum_stability.csv", &s)?;

    let grid: Vec<f64> = (0..60).map(|k| 10f64.powf(-2.0 + 2.5 * k as f64 / 59.0)).collect();
    let raw = params.vol.raw_outputs(&grid)?;
    let mut s = String::from("sigma,inverse_vol\n");
    for (x, y) in grid.iter().zip(&raw) {
        let _ = writeln!(s, "{x:e},{y:e}");
    }
    ctx.write("vol_transfer.csv", &s)?;

    let mean_std = st.log_std.iter().sum::<f64>() / st.log_std.len() as f64;
    println!(
        "half of the lag weight sits in the first {} of {} lags; mean log-std of cleaned eigenvalues {mean_std:.3} over {samples} windows of {n} assets",
        lag.half_mass_lag,
        params.dt_in()
    );
    Ok(())
}
