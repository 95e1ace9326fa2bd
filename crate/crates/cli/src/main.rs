//! `cosmic-bell` command-line front end. Every command prints one JSON
//! report on stdout (plot data is CSV) embedding the resolved configuration.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use cosmic_bell::bellsim::{
    classify_runs, conspiracy_expected_chsh, conspiracy_information_bits, conspiracy_model,
    mutual_information_audit, no_signaling_check, run_chsh, run_ghz, write_records, ChshAngles,
    Model, SettingSource, StrategyTable, TestKind, TrialRecord, MIN_AUDIT_SAMPLES,
};
use cosmic_bell::catalog::{find_pairs, find_triples, load_catalog, SearchOptions};
use cosmic_bell::causal::{
    cmb_min_separation, cmb_min_separation_closed_form, emission_event, lightcones_disjoint,
    threshold_redshift, SkyPosition, CMB_REDSHIFT,
};
use cosmic_bell::config::{Config, CosmologySection, ExperimentSpec, CONFIG_ENV};
use cosmic_bell::cosmology::{
    comoving_distance, conformal_time, hubble_rate, lookback_time, per_mpc_to_km_s_mpc,
    CosmologyParams, SECONDS_PER_YEAR,
};
use cosmic_bell::diagram::{conformal_diagram, read_sources_file};
use cosmic_bell::improvement::{improvement_factor, improvement_factor_at_redshift};
use cosmic_bell::noisebudget::{budget_check, local_fraction, NoiseModel};
use cosmic_bell::photonstat::{
    coincidence_probability, runs_estimate, scaling_report, scaling_report_from_mus, Arm,
    ExperimentGeometry, LinkGeometry, SourceFlux, TelescopeConfig,
};
use cosmic_bell::pipeline::end_to_end;
use cosmic_bell::randomness::{
    parity_bits, randomness_report, simulate_arrivals, whitened_bits, ArrivalStream, BitProvenance,
    SettingBitstream, DEFAULT_BIN_WIDTH_S, MIN_REPORT_BITS,
};
use cosmic_bell::Error;

const EXIT_INPUT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

/// (separation in degrees, number of sources) of the default threshold table.
const DEFAULT_THRESHOLDS: [(f64, usize); 4] = [(180.0, 2), (130.0, 2), (120.0, 3), (105.0, 3)];

#[derive(Parser)]
#[command(
    name = "cosmic-bell",
    about = "Plan and simulate Bell tests whose settings are chosen by distant cosmic sources",
    disable_version_flag = true,
    arg_required_else_help = true
)]
struct Cli {
    /// Config file (TOML); falls back to $COSMIC_BELL_CONFIG, then built-in defaults.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    #[command(flatten)]
    cosmology: CosmologyFlags,

    /// Print name and version as JSON and exit.
    #[arg(long)]
    version: bool,

    /// Print the fully resolved parameters as JSON and exit.
    #[arg(long)]
    params_dump: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Clone, Copy, Default)]
struct CosmologyFlags {
    /// H0 in km/s/Mpc
    #[arg(long, global = true)]
    hubble_constant: Option<f64>,
    #[arg(long, global = true)]
    omega_matter: Option<f64>,
    /// defaults to 1 − Ωm − Ωr (flat)
    #[arg(long, global = true)]
    omega_lambda: Option<f64>,
    #[arg(long, global = true)]
    omega_radiation: Option<f64>,
}

impl CosmologyFlags {
    fn section(self) -> CosmologySection {
        CosmologySection {
            hubble_constant: self.hubble_constant,
            omega_matter: self.omega_matter,
            omega_lambda: self.omega_lambda,
            omega_radiation: self.omega_radiation,
        }
    }
}

#[derive(Args, Clone, Copy)]
struct ArmFlags {
    #[arg(long, default_value_t = 1.0)]
    diameter_m: f64,
    #[arg(long, default_value_t = 0.5)]
    detector_efficiency: f64,
    #[arg(long, default_value_t = 50.0)]
    baseline_km: f64,
    #[arg(long, default_value_t = 78e-9)]
    setting_latency_s: f64,
}

impl ArmFlags {
    fn telescope(&self) -> Result<TelescopeConfig, Error> {
        TelescopeConfig::new(self.diameter_m, self.detector_efficiency)
    }

    fn link(&self) -> Result<LinkGeometry, Error> {
        LinkGeometry::new(self.baseline_km, self.setting_latency_s)
    }

    fn geometry(&self) -> Result<ExperimentGeometry, Error> {
        Ok(ExperimentGeometry::symmetric(
            self.telescope()?,
            self.link()?,
        ))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExtractMode {
    Parity,
    Whiten,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Quantum,
    /// uniform mixture of every deterministic strategy
    Lhv,
    /// the single deterministic strategy saturating the classical bound
    LhvBest,
    Conspiracy,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Chsh,
    Ghz,
}

impl From<KindArg> for TestKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Chsh => TestKind::Chsh,
            KindArg::Ghz => TestKind::Ghz,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Expansion rate, distances and times at the given redshifts.
    Cosmo {
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true, allow_negative_numbers = true)]
        z: Vec<f64>,
    },
    /// Light-cone verdict for sources given as z,ra_deg,dec_deg.
    Causal {
        #[arg(long = "source", required = true, value_parser = parse_source)]
        sources: Vec<(f64, SkyPosition)>,
    },
    /// Threshold redshift table, or the CMB separation round trip with --cmb.
    Thresholds {
        /// separations in degrees; default is the standard four-row table
        #[arg(long, num_args = 1.., value_delimiter = ',', allow_negative_numbers = true)]
        alpha: Vec<f64>,
        #[arg(long, default_value_t = 2)]
        n_way: usize,
        /// report the smallest decoupled separation at --z-cmb, and for each
        /// --alpha the redshift at which it becomes decoupled
        #[arg(long)]
        cmb: bool,
        #[arg(long, default_value_t = CMB_REDSHIFT)]
        z_cmb: f64,
        /// config file for this command (same as --config)
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Causally independent source pairs from a catalog, ranked.
    Pairs(SearchArgs),
    /// Causally independent source triples from a catalog, ranked.
    Triples(SearchArgs),
    /// Detection and coincidence statistics for 2 or 3 arms.
    Coincidence {
        /// photons s⁻¹ m⁻² per arm
        #[arg(long, num_args = 1.., value_delimiter = ',', conflicts_with = "mu")]
        flux: Vec<f64>,
        /// mean detected counts per window per arm, bypassing the flux model
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        mu: Vec<f64>,
        #[command(flatten)]
        arm: ArmFlags,
        /// runs per second for the run-count estimate; default is the coincidence rate
        #[arg(long)]
        run_rate_hz: Option<f64>,
        #[arg(long, default_value_t = 900.0)]
        duration_s: f64,
        #[arg(long)]
        area_factor: Option<f64>,
        #[arg(long)]
        baseline_factor: Option<f64>,
    },
    /// Setting bits from a timestamp file, or from a simulated Poisson stream.
    Extract {
        /// one arrival time (s) per line
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 1e4)]
        rate: f64,
        #[arg(long, default_value_t = 100.0)]
        duration: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ExtractMode::Parity)]
        mode: ExtractMode,
        #[arg(long, default_value_t = DEFAULT_BIN_WIDTH_S)]
        bin_width: f64,
        /// bits per gap when whitening
        #[arg(long, default_value_t = 8)]
        k: u32,
        /// whitening rate (Hz); default is the stream's empirical rate
        #[arg(long)]
        whiten_rate: Option<f64>,
        /// write the bits, one per line
        #[arg(long)]
        output: Option<PathBuf>,
        /// write the (simulated) arrival times, one per line
        #[arg(long)]
        arrivals_output: Option<PathBuf>,
    },
    /// Monte Carlo CHSH experiment.
    SimulateBell {
        #[command(flatten)]
        sim: SimArgs,
        /// analyzer angles a,a′,b,b′ in degrees
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [0.0, 45.0, 22.5, 67.5])]
        angles: Vec<f64>,
    },
    /// Monte Carlo three-particle GHZ experiment.
    SimulateGhz {
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Local-noise fraction and budget verdicts.
    Noise {
        #[arg(long)]
        signal_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        background_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        dark_count_rate: f64,
        /// default: both tests
        #[arg(long, value_enum)]
        test: Option<KindArg>,
    },
    /// Orders of magnitude gained over a laboratory random-number generator.
    ImprovementFactor {
        #[arg(long, conflicts_with = "z", required_unless_present = "z")]
        lookback: Option<f64>,
        #[arg(long)]
        z: Option<f64>,
        #[arg(long, default_value_t = 1e-3)]
        qrng_latency: f64,
    },
    /// CSV polylines of the conformal diagram for sources given as id,z,alpha_deg.
    ConformalDiagram {
        #[arg(long)]
        sources: PathBuf,
        /// default: stdout
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Full pipeline from an experiment spec (TOML).
    EndToEnd {
        #[arg(long)]
        spec: PathBuf,
        /// also write the report here
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    min_z: f64,
    #[command(flatten)]
    arm: ArmFlags,
    /// number of ranked candidates to print
    #[arg(long, default_value_t = 50)]
    limit: usize,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Quantum)]
    model: ModelArg,
    /// conspiracy fraction
    #[arg(long, default_value_t = 0.0)]
    f: f64,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// bit file per detector (one bit per line); default is fair coins
    #[arg(long = "settings")]
    settings: Vec<PathBuf>,
    /// write one trial per line as CSV
    #[arg(long)]
    records: Option<PathBuf>,
}

fn parse_source(s: &str) -> Result<(f64, SkyPosition), String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("'{p}': {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [z, ra, dec] => Ok((z, SkyPosition::new(ra, dec).map_err(|e| e.to_string())?)),
        _ => Err("expected z,ra_deg,dec_deg".into()),
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Infeasible(_) => EXIT_INFEASIBLE,
            Error::Integration { .. } => EXIT_INTERNAL,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure {
            code: EXIT_INTERNAL,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    input_error(format!("{}: {e}", path.display()))
}

struct Context {
    config: Config,
    params: CosmologyParams,
}

impl Context {
    fn report(&self, command: &str, result: impl Serialize) -> Result<Value, Failure> {
        Ok(json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "cosmology": self.params,
            "photometry": self.config.photometry,
            "result": serde_json::to_value(result)?,
        }))
    }
}

fn emit(value: &Value) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out).map_err(|e| input_error(e.to_string()))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_failure(path, e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.version {
        return emit(&json!({
            "name": "cosmic-bell",
            "version": env!("CARGO_PKG_VERSION"),
        }));
    }
    let config_path = match &cli.command {
        Some(Command::Thresholds {
            params: Some(p), ..
        }) => Some(p.clone()),
        _ => cli.config.clone(),
    };
    let mut config = Config::discover(config_path.as_deref())?;
    config.cosmology = config.cosmology.overlay(cli.cosmology.section());
    let params = config.cosmology.resolve()?;
    let ctx = Context { config, params };

    if cli.params_dump {
        return emit(&json!({
            "config_path": config_path,
            "config": ctx.config,
            "resolved_cosmology": ctx.params,
            "omega_curvature": ctx.params.omega_curvature(),
            "conformal_age_mpc": conformal_time(0.0, &ctx.params).ok(),
        }));
    }
    let Some(command) = cli.command else {
        return Err(input_error("no subcommand given (see --help)"));
    };
    match command {
        Command::Cosmo { z } => cosmo(&ctx, &z),
        Command::Causal { sources } => causal(&ctx, &sources),
        Command::Thresholds {
            alpha,
            n_way,
            cmb,
            z_cmb,
            ..
        } => thresholds(&ctx, &alpha, n_way, cmb, z_cmb),
        Command::Pairs(args) => search(&ctx, &args, false),
        Command::Triples(args) => search(&ctx, &args, true),
        Command::Coincidence {
            flux,
            mu,
            arm,
            run_rate_hz,
            duration_s,
            area_factor,
            baseline_factor,
        } => coincidence(
            &ctx,
            &flux,
            &mu,
            &arm,
            run_rate_hz,
            duration_s,
            area_factor,
            baseline_factor,
        ),
        Command::Extract {
            input,
            rate,
            duration,
            seed,
            mode,
            bin_width,
            k,
            whiten_rate,
            output,
            arrivals_output,
        } => {
            let stream = match &input {
                Some(p) => {
                    let f = File::open(p).map_err(|e| io_failure(p, e))?;
                    ArrivalStream::read_text(BufReader::new(f), None)?
                }
                None => simulate_arrivals(rate, duration, seed)?,
            };
            if let Some(p) = &arrivals_output {
                stream.write_text(create(p)?)?;
            }
            let bits = match mode {
                ExtractMode::Parity => parity_bits(&stream, bin_width)?,
                ExtractMode::Whiten => whitened_bits(&stream, k, whiten_rate)?,
            };
            if let Some(p) = &output {
                bits.write_text(create(p)?)?;
            }
            let report = if bits.len() >= MIN_REPORT_BITS {
                Some(randomness_report(&bits.bits)?)
            } else {
                None
            };
            emit(&ctx.report(
                "extract",
                json!({
                    "input": input,
                    "simulated": input.is_none().then(|| json!({"rate_hz": rate, "duration_s": duration, "seed": seed})),
                    "mode": match mode { ExtractMode::Parity => "parity", ExtractMode::Whiten => "whiten" },
                    "bin_width_s": bin_width,
                    "bits_per_gap": matches!(mode, ExtractMode::Whiten).then_some(k),
                    "n_arrivals": stream.len(),
                    "empirical_rate_hz": stream.empirical_rate(),
                    "n_bits": bits.len(),
                    "report": report,
                }),
            )?)
        }
        Command::SimulateBell { sim, angles } => {
            if angles.len() != 4 {
                return Err(input_error("--angles takes four values: a,a',b,b'"));
            }
            let angles = ChshAngles::from_degrees([angles[0], angles[1], angles[2], angles[3]]);
            simulate(&ctx, &sim, TestKind::Chsh, Some(angles))
        }
        Command::SimulateGhz { sim } => simulate(&ctx, &sim, TestKind::Ghz, None),
        Command::Noise {
            signal_rate,
            background_rate,
            dark_count_rate,
            test,
        } => {
            let noise = NoiseModel::new(background_rate, dark_count_rate)?;
            let fraction = local_fraction(signal_rate, &noise)?;
            let kinds: Vec<TestKind> = match test {
                Some(k) => vec![k.into()],
                None => vec![TestKind::Chsh, TestKind::Ghz],
            };
            let verdicts = kinds
                .into_iter()
                .map(|k| budget_check(fraction, k))
                .collect::<Result<Vec<_>, _>>()?;
            emit(&ctx.report(
                "noise",
                json!({
                    "signal_rate_hz": signal_rate,
                    "noise": noise,
                    "local_fraction": fraction,
                    "verdicts": verdicts,
                }),
            )?)
        }
        Command::ImprovementFactor {
            lookback,
            z,
            qrng_latency,
        } => {
            let f = match (lookback, z) {
                (Some(l), _) => improvement_factor(l, qrng_latency)?,
                (None, Some(z)) => improvement_factor_at_redshift(z, qrng_latency, &ctx.params)?,
                (None, None) => return Err(input_error("give --lookback or --z")),
            };
            emit(&ctx.report(
                "improvement-factor",
                json!({
                    "redshift": z,
                    "lookback_gyr": f.lookback_s / SECONDS_PER_YEAR / 1e9,
                    "factor": f,
                }),
            )?)
        }
        Command::ConformalDiagram { sources, output } => {
            let list = read_sources_file(&sources)?;
            let diagram = conformal_diagram(&list, &ctx.params)?;
            match &output {
                Some(p) => {
                    diagram.write_csv(create(p)?)?;
                    emit(&ctx.report(
                        "conformal-diagram",
                        json!({
                            "sources": list,
                            "output": p,
                            "rows": diagram.rows.len(),
                            "verdict": diagram.verdict,
                        }),
                    )?)
                }
                None => Ok(diagram.write_csv(io::stdout().lock())?),
            }
        }
        Command::EndToEnd { spec, output } => {
            let mut experiment = ExperimentSpec::load(&spec).map_err(|e| e.at_stage("spec"))?;
            // Command-line cosmology wins over the spec file.
            experiment.cosmology = experiment.cosmology.overlay(cli.cosmology.section());
            let base = spec.parent().unwrap_or(Path::new("."));
            let report = end_to_end(&experiment, &ctx.config, base)?;
            let value = ctx.report("end-to-end", &report)?;
            if let Some(p) = &output {
                let mut w = create(p)?;
                serde_json::to_writer_pretty(&mut w, &value)?;
                w.flush().map_err(|e| io_failure(p, e))?;
            }
            emit(&value)
        }
    }
}

fn cosmo(ctx: &Context, zs: &[f64]) -> Result<(), Failure> {
    let p = &ctx.params;
    let rows = zs
        .iter()
        .map(|&z| {
            let h = hubble_rate(z, p)?;
            Ok(json!({
                "z": z,
                "hubble_rate_per_mpc": h,
                "hubble_rate_km_s_mpc": per_mpc_to_km_s_mpc(h),
                "comoving_distance_mpc": comoving_distance(z, p)?,
                "conformal_time_mpc": conformal_time(z, p)?,
                "lookback_time_s": lookback_time(z, p)?,
                "lookback_time_gyr": lookback_time(z, p)? / SECONDS_PER_YEAR / 1e9,
            }))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    emit(&ctx.report(
        "cosmo",
        json!({ "conformal_age_mpc": conformal_time(0.0, p)?, "rows": rows }),
    )?)
}

fn causal(ctx: &Context, sources: &[(f64, SkyPosition)]) -> Result<(), Failure> {
    let events = sources
        .iter()
        .map(|(z, pos)| emission_event(*z, pos, &ctx.params))
        .collect::<Result<Vec<_>, _>>()?;
    let verdict = lightcones_disjoint(&events)?;
    let described: Vec<Value> = sources
        .iter()
        .zip(&events)
        .map(|((z, pos), e)| json!({"z": z, "position": pos, "event": e}))
        .collect();
    emit(&ctx.report(
        "causal",
        json!({
            "sources": described,
            "binding_margin_mpc": verdict.binding_margin(),
            "verdict": verdict,
        }),
    )?)
}

fn thresholds(
    ctx: &Context,
    alpha: &[f64],
    n_way: usize,
    cmb: bool,
    z_cmb: f64,
) -> Result<(), Failure> {
    let p = &ctx.params;
    if cmb {
        let floor = cmb_min_separation(p, z_cmb)?;
        let round_trips = alpha
            .iter()
            .map(|&a| {
                let z = threshold_redshift(a, 2, p)?;
                Ok(json!({
                    "alpha_deg": a,
                    "decoupling_redshift": z,
                    "round_trip_alpha_deg": cmb_min_separation(p, z)?,
                }))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        return emit(&ctx.report(
            "thresholds",
            json!({
                "mode": "cmb",
                "z_cmb": z_cmb,
                "min_separation_deg": floor,
                "min_separation_closed_form_deg": cmb_min_separation_closed_form(p, z_cmb)?,
                "round_trips": round_trips,
            }),
        )?);
    }
    let table: Vec<(f64, usize)> = if alpha.is_empty() {
        DEFAULT_THRESHOLDS.to_vec()
    } else {
        alpha.iter().map(|&a| (a, n_way)).collect()
    };
    let rows = table
        .iter()
        .map(|&(a, n)| {
            Ok(json!({
                "alpha_deg": a,
                "n_way": n,
                "threshold_redshift": threshold_redshift(a, n, p)?,
            }))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    emit(&ctx.report("thresholds", json!({ "mode": "table", "rows": rows }))?)
}

fn search(ctx: &Context, args: &SearchArgs, triples: bool) -> Result<(), Failure> {
    let load = load_catalog(&args.catalog)?;
    let geometry = args.arm.geometry()?;
    let opts = SearchOptions {
        min_z: args.min_z,
        params: &ctx.params,
        photometry: &ctx.config.photometry,
        geometry: &geometry,
    };
    let found = if triples {
        find_triples(&load.records, &opts)?
    } else {
        find_pairs(&load.records, &opts)?
    };
    let name = if triples { "triples" } else { "pairs" };
    emit(&ctx.report(
        name,
        json!({
            "catalog": args.catalog,
            "accepted_rows": load.accepted(),
            "rejected_rows": load.rejected,
            "min_z": args.min_z,
            "geometry": geometry,
            "total_candidates": found.len(),
            "candidates": &found[..found.len().min(args.limit)],
        }),
    )?)
}

#[allow(clippy::too_many_arguments)]
fn coincidence(
    ctx: &Context,
    flux: &[f64],
    mu: &[f64],
    arm: &ArmFlags,
    run_rate_hz: Option<f64>,
    duration_s: f64,
    area_factor: Option<f64>,
    baseline_factor: Option<f64>,
) -> Result<(), Failure> {
    let n = flux.len().max(mu.len());
    if !(2..=3).contains(&n) {
        return Err(input_error("give 2 or 3 values with --flux or --mu"));
    }
    let window_s = cosmic_bell::photonstat::timing_window(&arm.link()?)?;
    let (arms, mus) = if mu.is_empty() {
        let arms = flux
            .iter()
            .map(|&f| {
                Ok(Arm {
                    telescope: arm.telescope()?,
                    link: arm.link()?,
                    flux: SourceFlux::new(f)?,
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let mus = arms
            .iter()
            .map(Arm::mean_detections)
            .collect::<Result<Vec<_>, _>>()?;
        (Some(arms), mus)
    } else {
        (None, mu.to_vec())
    };
    let stats = arms
        .as_ref()
        .map(|a| a.iter().map(Arm::statistics).collect::<Result<Vec<_>, _>>())
        .transpose()?;
    let by_order = (2..=n)
        .map(|k| {
            Ok(json!({
                "order": k,
                "probability": coincidence_probability(&mus[..k])?,
            }))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let p_all = coincidence_probability(&mus)?;
    let coincidence_rate = p_all / window_s.window_s;
    let runs = runs_estimate(run_rate_hz.unwrap_or(coincidence_rate), duration_s)?;
    let scaling = if area_factor.is_some() || baseline_factor.is_some() {
        let (a, b) = (area_factor.unwrap_or(1.0), baseline_factor.unwrap_or(1.0));
        Some(match &arms {
            Some(arms) => scaling_report(arms, a, b)?,
            None => scaling_report_from_mus(&mus, a, b)?,
        })
    } else {
        None
    };
    emit(&ctx.report(
        "coincidence",
        json!({
            "telescope": arm.telescope()?,
            "link": arm.link()?,
            "timing_window": window_s,
            "arms": stats,
            "mean_detections": mus,
            "coincidence": by_order,
            "coincidence_probability": p_all,
            "coincidence_rate_hz": coincidence_rate,
            "run_rate_hz": run_rate_hz.unwrap_or(coincidence_rate),
            "duration_s": duration_s,
            "runs": runs,
            "scaling": scaling,
        }),
    )?)
}

fn simulate(
    ctx: &Context,
    sim: &SimArgs,
    kind: TestKind,
    angles: Option<ChshAngles>,
) -> Result<(), Failure> {
    let detectors = kind.detectors();
    let model = match sim.model {
        ModelArg::Quantum => Model::Quantum,
        ModelArg::Lhv => Model::DeterministicLhv(StrategyTable::all(detectors)),
        ModelArg::LhvBest => Model::DeterministicLhv(match kind {
            TestKind::Chsh => StrategyTable::best_chsh(),
            TestKind::Ghz => StrategyTable::best_mermin(),
        }),
        ModelArg::Conspiracy => conspiracy_model(sim.f)?,
    };
    let source = if sim.settings.is_empty() {
        SettingSource::FairCoins
    } else {
        if sim.settings.len() != detectors {
            return Err(input_error(format!(
                "{detectors} --settings files required, got {}",
                sim.settings.len()
            )));
        }
        let streams = sim
            .settings
            .iter()
            .map(|p| {
                let f = File::open(p).map_err(|e| io_failure(p, e))?;
                Ok(SettingBitstream::read_text(
                    BufReader::new(f),
                    BitProvenance::Parity,
                    0.0,
                )?)
            })
            .collect::<Result<Vec<_>, Failure>>()?;
        SettingSource::from_bitstreams(&streams)?
    };
    let (statistics, records): (Value, Vec<TrialRecord>) = match kind {
        TestKind::Chsh => {
            let run = run_chsh(
                &model,
                &source,
                angles.unwrap_or_else(ChshAngles::canonical),
                sim.trials,
                sim.seed,
            )?;
            (serde_json::to_value(&run.statistics)?, run.records)
        }
        TestKind::Ghz => {
            let run = run_ghz(&model, &source, sim.trials, sim.seed)?;
            (serde_json::to_value(&run.statistics)?, run.records)
        }
    };
    if let Some(p) = &sim.records {
        let mut w = create(p)?;
        write_records(&records, &mut w)?;
        w.flush().map_err(|e| io_failure(p, e))?;
    }
    let audit = if records.len() >= MIN_AUDIT_SAMPLES {
        Some(mutual_information_audit(&records, kind)?)
    } else {
        None
    };
    let conspiracy = matches!(sim.model, ModelArg::Conspiracy).then(|| {
        json!({
            "f": sim.f,
            "expected_chsh": conspiracy_expected_chsh(sim.f),
            "analytic_information_bits": conspiracy_information_bits(sim.f, kind),
        })
    });
    let command = match kind {
        TestKind::Chsh => "simulate-bell",
        TestKind::Ghz => "simulate-ghz",
    };
    emit(&ctx.report(
        command,
        json!({
            "model": sim.model.to_possible_value().map(|v| v.get_name().to_owned()),
            "trials": sim.trials,
            "seed": sim.seed,
            "angles_deg": angles.map(|a| [a.a, a.a_prime, a.b, a.b_prime].map(f64::to_degrees)),
            "settings_files": sim.settings,
            "statistics": statistics,
            "no_signaling": (kind == TestKind::Chsh).then(|| no_signaling_check(&records)),
            "mutual_information": audit,
            "conspiracy": conspiracy,
            "classes": classify_runs(&records),
        }),
    )?)
}
