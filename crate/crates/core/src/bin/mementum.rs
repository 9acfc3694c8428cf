//! Command-line front end: simulate scenarios, estimate the switching-rank
//! model on the two pairs, detect meme periods, or run the whole pipeline.
//!
//! Exit codes: 0 success (including "no period detected"), 1 runtime
//! failure, 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mementum::detector::{
    detect, write_masks_csv, write_report_json, DetectorConfig, MementumReport, PipelineOrder,
};
use mementum::ingest::{
    align, combined_csv_bytes, load_combined_csv, load_csv, make_pair, write_combined_csv,
    write_series_csv, AlignedSeriesSet, PairKind, PairSeries, RawSeries, SeriesKind,
    TransformSpec, WeekendPolicy, DEFAULT_MIN_LEN,
};
use mementum::regimes::{
    one_hot_posterior, read_regime_csv, summarize, write_regime_csv, RegimeFile,
};
use mementum::sampler::serialize::{sha256_hex, write_draws, write_manifest, RunManifest};
use mementum::sampler::{run_mcmc, McmcSettings, PosteriorDraws, PriorSpec};
use mementum::synth::{gen_rank_path, gen_series, trading_calendar, TwoPairScenario};
use mementum::vecm::RankPath;
use mementum::Error;

#[derive(Parser)]
#[command(
    name = "mementum",
    version,
    about = "Detect meme periods of a stock from price, volume, and post-count series"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic series and ground-truth files from a scenario.
    Simulate(SimulateArgs),
    /// Estimate the switching-rank model on both pairs and write regimes.
    Estimate(EstimateArgs),
    /// Detect meme periods from two regime files.
    Detect(DetectArgs),
    /// Estimate and detect in one invocation.
    Run(RunArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON describing both pairs.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Two-column date,price CSV.
    #[arg(long)]
    price: Option<PathBuf>,
    /// Two-column date,volume CSV.
    #[arg(long)]
    volume: Option<PathBuf>,
    /// Two-column date,tweets CSV.
    #[arg(long)]
    tweets: Option<PathBuf>,
    /// Four-column date,price,volume,tweets CSV (alternative to the three
    /// separate files).
    #[arg(long, conflicts_with_all = ["price", "volume", "tweets"])]
    combined: Option<PathBuf>,
    /// Ticker recorded in output files.
    #[arg(long, default_value = "UNKNOWN")]
    ticker: String,
    /// What happens to post counts on non-trading days.
    #[arg(long, value_enum, default_value_t = WeekendArg::SumForward)]
    weekend: WeekendArg,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum WeekendArg {
    /// Add them to the next trading day.
    SumForward,
    /// Discard them.
    Drop,
}

impl From<WeekendArg> for WeekendPolicy {
    fn from(w: WeekendArg) -> Self {
        match w {
            WeekendArg::SumForward => WeekendPolicy::SumForward,
            WeekendArg::Drop => WeekendPolicy::Drop,
        }
    }
}

#[derive(Args, Clone)]
struct McmcArgs {
    /// Base RNG seed; the volume pair uses seed+1.
    #[arg(long, default_value_t = 12345)]
    seed: u64,
    /// Retained draws after burn-in.
    #[arg(long, default_value_t = 5000)]
    draws: usize,
    /// Burn-in iterations.
    #[arg(long, default_value_t = 1000)]
    burnin: usize,
    /// Keep every thin-th retained draw.
    #[arg(long, default_value_t = 1)]
    thin: usize,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    mcmc: McmcArgs,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct DetectorArgs {
    /// Minimum cointegration duration in trading days.
    #[arg(long, default_value_t = 2)]
    dc: usize,
    /// Minimum preceding non-cointegrated duration in trading days.
    #[arg(long, default_value_t = 2)]
    dp: usize,
    /// Maximum transient-fall duration bridged away.
    #[arg(long, default_value_t = 1)]
    df: usize,
    /// Maximum start-date delay for matching the two pairs.
    #[arg(long, default_value_t = 1)]
    dw: usize,
    /// Apply the duration/persistence filter before bridging falls.
    #[arg(long)]
    filter_first: bool,
}

impl DetectorArgs {
    fn to_config(&self) -> DetectorConfig {
        DetectorConfig {
            d_c: self.dc,
            d_p: self.dp,
            d_f: self.df,
            d_w: self.dw,
            order: if self.filter_first {
                PipelineOrder::FilterThenMerge
            } else {
                PipelineOrder::MergeThenFilter
            },
        }
    }
}

#[derive(Args)]
struct DetectArgs {
    /// Regime CSV of the price pair.
    #[arg(long)]
    pr: PathBuf,
    /// Regime CSV of the volume pair.
    #[arg(long)]
    vol: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    det: DetectorArgs,
    /// Proceed even when the two regime files carry different run hashes.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    mcmc: McmcArgs,
    #[command(flatten)]
    det: DetectorArgs,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.cmd {
        Cmd::Simulate(a) => cmd_simulate(&a),
        Cmd::Estimate(a) => cmd_estimate(&a),
        Cmd::Detect(a) => cmd_detect(&a),
        Cmd::Run(a) => cmd_run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn ensure_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| {
        CliError::Runtime(Error::Validation(format!(
            "cannot create output directory {}: {e}",
            dir.display()
        )))
    })
}

/// Insert provenance comment lines ahead of an already-written CSV; the
/// readers skip lines starting with '#'.
fn prepend_comments(path: &Path, comments: &str) -> Result<(), Error> {
    let body = fs::read(path)?;
    let mut out = comments.as_bytes().to_vec();
    out.extend_from_slice(&body);
    fs::write(path, out)?;
    Ok(())
}

/// Map a model-space value back to a nonnegative integer count level.
fn count_level(v: f64, what: &str) -> Result<f64, Error> {
    let level = v.exp_m1().round().max(0.0);
    if !level.is_finite() || level > 9.0e15 {
        return Err(Error::Numerical(format!(
            "{what} level {level} out of the writable range"
        )));
    }
    Ok(level)
}

#[derive(Serialize)]
struct GroundTruthDoc {
    ticker: String,
    config_hash: String,
    t_len: usize,
    pr_states: Vec<usize>,
    vol_states: Vec<usize>,
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult {
    let bytes = fs::read(&args.scenario).map_err(|e| {
        CliError::Runtime(Error::Validation(format!(
            "cannot read scenario {}: {e}",
            args.scenario.display()
        )))
    })?;
    let config_hash = sha256_hex(&bytes);
    let scenario: TwoPairScenario = serde_json::from_slice(&bytes).map_err(Error::from)?;
    scenario.validate()?;
    ensure_dir(&args.out)?;

    let pr_path = gen_rank_path(&scenario.pr)?;
    let (pr_pair, _) = gen_series(&scenario.pr, &pr_path)?;
    let vol_path = gen_rank_path(&scenario.vol)?;
    let (vol_pair, _) = gen_series(&scenario.vol, &vol_path)?;

    let t_len = scenario.pr.t_len;
    let dates = trading_calendar(t_len);
    let mut price = Vec::with_capacity(t_len);
    let mut volume = Vec::with_capacity(t_len);
    let mut tweets = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let p = pr_pair.y[(t, 0)].exp();
        if !p.is_finite() {
            return Err(CliError::Runtime(Error::Numerical(
                "simulated price overflowed; shrink the scenario's innovations".into(),
            )));
        }
        price.push(p);
        volume.push(count_level(vol_pair.y[(t, 0)], "volume")?);
        // Post counts are taken from the price-pair scenario; the volume
        // scenario's second component only shapes its own regime path.
        tweets.push(count_level(pr_pair.y[(t, 1)], "tweets")?);
    }
    let set = AlignedSeriesSet {
        ticker: scenario.ticker.clone(),
        dates: dates.clone(),
        price,
        volume,
        tweets,
    };
    set.validate()?;

    let comments = format!(
        "# config_hash: {config_hash}\n# ticker: {}\n",
        scenario.ticker
    );
    let combined = args.out.join("combined.csv");
    write_combined_csv(&set, &combined)?;
    prepend_comments(&combined, &comments)?;
    for (kind, values, name) in [
        (SeriesKind::Price, &set.price, "price.csv"),
        (SeriesKind::Volume, &set.volume, "volume.csv"),
        (SeriesKind::Tweets, &set.tweets, "tweets.csv"),
    ] {
        let obs: Vec<_> = dates.iter().copied().zip(values.iter().copied()).collect();
        let series = RawSeries::new(scenario.ticker.clone(), kind, obs)?;
        let path = args.out.join(name);
        write_series_csv(&series, &path)?;
        prepend_comments(&path, &comments)?;
    }

    for (states, n_states, name) in [
        (&pr_path.states, scenario.pr.n_states(), "truth_regimes_pr.csv"),
        (&vol_path.states, scenario.vol.n_states(), "truth_regimes_vol.csv"),
    ] {
        let file = RegimeFile {
            ticker: scenario.ticker.clone(),
            config_hash: config_hash.clone(),
            dates: dates.clone(),
            posterior: one_hot_posterior(states, n_states)?,
        };
        write_regime_csv(&args.out.join(name), &file)?;
    }

    let doc = GroundTruthDoc {
        ticker: scenario.ticker.clone(),
        config_hash,
        t_len,
        pr_states: pr_path.states.clone(),
        vol_states: vol_path.states.clone(),
    };
    let json = serde_json::to_string_pretty(&doc).map_err(Error::from)?;
    fs::write(args.out.join("ground_truth.json"), json + "\n").map_err(Error::from)?;

    eprintln!(
        "simulated {} days for {} into {}",
        t_len,
        scenario.ticker,
        args.out.display()
    );
    Ok(())
}

/// What the estimation half hands to the detection half of `run`.
struct EstimationOutput {
    pr: RegimeFile,
    vol: RegimeFile,
    pr_csv: PathBuf,
    vol_csv: PathBuf,
}

/// The byte content hashed into a run's configuration identity.
#[derive(Serialize)]
struct ConfigHashDoc<'a> {
    input_sha256: &'a str,
    ticker: &'a str,
    seed: u64,
    draws: usize,
    burnin: usize,
    thin: usize,
    priors: &'a PriorSpec,
    transform: &'a TransformSpec,
}

fn load_inputs(input: &InputArgs) -> CliResult<(RawSeries, RawSeries, RawSeries)> {
    if let Some(combined) = &input.combined {
        let (p, v, t) = load_combined_csv(combined)?;
        return Ok((
            p.with_ticker(input.ticker.clone()),
            v.with_ticker(input.ticker.clone()),
            t.with_ticker(input.ticker.clone()),
        ));
    }
    match (&input.price, &input.volume, &input.tweets) {
        (Some(p), Some(v), Some(t)) => Ok((
            load_csv(p, SeriesKind::Price)?.with_ticker(input.ticker.clone()),
            load_csv(v, SeriesKind::Volume)?.with_ticker(input.ticker.clone()),
            load_csv(t, SeriesKind::Tweets)?.with_ticker(input.ticker.clone()),
        )),
        _ => Err(CliError::Usage(
            "provide either --combined or all of --price, --volume, --tweets".into(),
        )),
    }
}

struct SharedRunInfo {
    ticker: String,
    priors: PriorSpec,
    settings: McmcSettings,
    input_sha256: String,
    config_hash: String,
}

fn write_pair_outputs(
    draws: &PosteriorDraws,
    kind: PairKind,
    pair: &PairSeries,
    seed: u64,
    tag: &str,
    shared: &SharedRunInfo,
    out: &Path,
) -> CliResult<(RegimeFile, PathBuf)> {
    eprintln!(
        "estimated {} pair: {} retained draws over {} days",
        tag,
        draws.n_retained(),
        pair.t_len()
    );
    write_draws(&out.join(format!("draws_{tag}.bin")), draws)?;
    let manifest = RunManifest {
        pair: match kind {
            PairKind::PrTw => "pr_tw".into(),
            PairKind::VolTw => "vol_tw".into(),
        },
        labels: pair.labels.clone(),
        ticker: shared.ticker.clone(),
        n: draws.n,
        t_len: draws.t_len,
        n_retained: draws.n_retained(),
        priors: shared.priors.clone(),
        settings: McmcSettings {
            seed,
            ..shared.settings
        },
        bookkeeping: draws.bookkeeping,
        input_sha256: shared.input_sha256.clone(),
        config_hash: shared.config_hash.clone(),
    };
    write_manifest(&out.join(format!("manifest_{tag}.json")), &manifest)?;

    let n_states = draws.n + 1;
    let file = RegimeFile {
        ticker: shared.ticker.clone(),
        config_hash: shared.config_hash.clone(),
        dates: pair.dates.clone(),
        posterior: summarize(&draws.states, n_states)?,
    };
    let csv_path = out.join(format!("regimes_{tag}.csv"));
    write_regime_csv(&csv_path, &file)?;
    Ok((file, csv_path))
}

fn estimate_pairs(input: &InputArgs, mcmc: &McmcArgs, out: &Path) -> CliResult<EstimationOutput> {
    if mcmc.draws == 0 || mcmc.thin == 0 {
        return Err(CliError::Usage("--draws and --thin must be positive".into()));
    }
    let (price, volume, tweets) = load_inputs(input)?;
    let transform = TransformSpec {
        weekend_policy: input.weekend.into(),
        ..Default::default()
    };
    let set = align(&price, &volume, &tweets, transform.weekend_policy)?;
    let pr_pair = make_pair(&set, PairKind::PrTw, &transform, DEFAULT_MIN_LEN)?;
    let vol_pair = make_pair(&set, PairKind::VolTw, &transform, DEFAULT_MIN_LEN)?;

    let input_sha256 = sha256_hex(&combined_csv_bytes(&set));
    let priors = PriorSpec::default_for(2);
    let hash_doc = ConfigHashDoc {
        input_sha256: &input_sha256,
        ticker: &input.ticker,
        seed: mcmc.seed,
        draws: mcmc.draws,
        burnin: mcmc.burnin,
        thin: mcmc.thin,
        priors: &priors,
        transform: &transform,
    };
    let config_hash =
        sha256_hex(serde_json::to_string(&hash_doc).map_err(Error::from)?.as_bytes());

    ensure_dir(out)?;
    let pr_settings = McmcSettings {
        n_draws: mcmc.draws,
        n_burnin: mcmc.burnin,
        thin: mcmc.thin,
        seed: mcmc.seed,
    };
    let vol_settings = McmcSettings {
        seed: mcmc.seed + 1,
        ..pr_settings
    };
    eprintln!(
        "running both pairs: {} draws after {} burn-in over {} days ...",
        mcmc.draws,
        mcmc.burnin,
        set.len()
    );
    let (pr_res, vol_res) = std::thread::scope(|s| {
        let h_pr = s.spawn(|| run_mcmc(&pr_pair.y, &priors, &pr_settings));
        let h_vol = s.spawn(|| run_mcmc(&vol_pair.y, &priors, &vol_settings));
        (
            h_pr.join().expect("price-pair estimation thread panicked"),
            h_vol.join().expect("volume-pair estimation thread panicked"),
        )
    });
    let pr_draws = pr_res?;
    let vol_draws = vol_res?;

    let shared = SharedRunInfo {
        ticker: input.ticker.clone(),
        priors,
        settings: pr_settings,
        input_sha256,
        config_hash,
    };
    let (pr, pr_csv) = write_pair_outputs(
        &pr_draws,
        PairKind::PrTw,
        &pr_pair,
        mcmc.seed,
        "pr",
        &shared,
        out,
    )?;
    let (vol, vol_csv) = write_pair_outputs(
        &vol_draws,
        PairKind::VolTw,
        &vol_pair,
        mcmc.seed + 1,
        "vol",
        &shared,
        out,
    )?;
    Ok(EstimationOutput {
        pr,
        vol,
        pr_csv,
        vol_csv,
    })
}

fn cmd_estimate(args: &EstimateArgs) -> CliResult {
    estimate_pairs(&args.input, &args.mcmc, &args.out)?;
    Ok(())
}

fn short_hash(h: &str) -> &str {
    if h.is_empty() {
        "<none>"
    } else if h.len() >= 12 {
        &h[..12]
    } else {
        h
    }
}

fn detect_from_regimes(
    pr: &RegimeFile,
    vol: &RegimeFile,
    pr_csv: &Path,
    vol_csv: &Path,
    cfg: &DetectorConfig,
    force: bool,
    out: &Path,
) -> CliResult<MementumReport> {
    if pr.dates.len() != vol.dates.len() {
        return Err(CliError::Runtime(Error::Validation(format!(
            "regime calendars differ in length: {} vs {} days",
            pr.dates.len(),
            vol.dates.len()
        ))));
    }
    if let Some(t) = (0..pr.dates.len()).find(|t| pr.dates[*t] != vol.dates[*t]) {
        return Err(CliError::Runtime(Error::Validation(format!(
            "regime calendars diverge at day {t}: {} vs {}",
            pr.dates[t], vol.dates[t]
        ))));
    }
    if pr.config_hash != vol.config_hash {
        if !force {
            return Err(CliError::Runtime(Error::Validation(format!(
                "regime files come from different runs ({} vs {}); pass --force to detect anyway",
                short_hash(&pr.config_hash),
                short_hash(&vol.config_hash)
            ))));
        }
        eprintln!("warning: mixing regime files from different runs");
    }

    let pr_rank = RankPath::new(pr.posterior.map_path.clone());
    let vol_rank = RankPath::new(vol.posterior.map_path.clone());
    let mut report = detect(&pr_rank, &vol_rank, &pr.dates, cfg)?;
    report.input_hashes = vec![
        sha256_hex(&fs::read(pr_csv).map_err(Error::from)?),
        sha256_hex(&fs::read(vol_csv).map_err(Error::from)?),
    ];
    report.run_config_hash = if pr.config_hash == vol.config_hash {
        pr.config_hash.clone()
    } else {
        String::new()
    };

    ensure_dir(out)?;
    write_report_json(&out.join("report.json"), &report)?;
    write_masks_csv(&out.join("masks.csv"), &report)?;

    let ticker = if pr.ticker.is_empty() {
        "UNKNOWN"
    } else {
        &pr.ticker
    };
    let mut summary = String::new();
    if report.periods.is_empty() {
        summary.push_str(&format!("{ticker}: no period detected\n"));
    } else {
        for (start, end) in report.period_dates() {
            summary.push_str(&format!("{ticker}: {start} -> {end}\n"));
        }
    }
    print!("{summary}");
    let summary_file = format!("# config_hash: {}\n{summary}", report.run_config_hash);
    fs::write(out.join("summary.txt"), summary_file).map_err(Error::from)?;
    Ok(report)
}

fn cmd_detect(args: &DetectArgs) -> CliResult {
    let pr = read_regime_csv(&args.pr)?;
    let vol = read_regime_csv(&args.vol)?;
    detect_from_regimes(
        &pr,
        &vol,
        &args.pr,
        &args.vol,
        &args.det.to_config(),
        args.force,
        &args.out,
    )?;
    Ok(())
}

fn cmd_run(args: &RunArgs) -> CliResult {
    let est = estimate_pairs(&args.input, &args.mcmc, &args.out)?;
    detect_from_regimes(
        &est.pr,
        &est.vol,
        &est.pr_csv,
        &est.vol_csv,
        &args.det.to_config(),
        false,
        &args.out,
    )?;
    Ok(())
}
