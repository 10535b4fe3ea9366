use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use merger_hhi::equilibrium::product_shares;
use merger_hhi::first_order::rho1_bounds_curve;
use merger_hhi::montecarlo::{run, run_with_threads, write_run};
use merger_hhi::{
    calibrate, delta_cs_actual, delta_cs_prop1, post_merger_model, solve_equilibrium, CalibratedModel,
    CalibrationInput, DemandKind, Equilibrium, Error, FirmModel, Market, McConfig, MergerSpec, ProductShareVector,
    ShareVector,
};
use serde::Serialize;

/// Merger screening with logit and CES demand: calibration, equilibrium,
/// merger simulation and HHI-based welfare approximations.
#[derive(Parser)]
#[command(name = "merger-hhi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate firm types from shares and one margin.
    Calibrate {
        /// Calibration input JSON.
        #[arg(long)]
        input: PathBuf,
        /// Demand system; overrides the `demand` field of the input.
        #[arg(long)]
        demand: Option<DemandKind>,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the Bertrand equilibrium of a model.
    Equilibrium {
        /// Calibrated model, market or firm-type model JSON.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a merger and report the actual consumer-surplus change.
    Merge(MergerArgs),
    /// First-order approximation of a merger's consumer-surplus change.
    Approx(MergerArgs),
    /// Monte Carlo comparison of actual and approximated merger effects.
    Mc(McArgs),
    /// Bounds on the logit cross-firm scaling factor as a function of ΔHHI.
    RhoBounds {
        /// Cap on the merging firms' combined share.
        #[arg(long, default_value_t = 0.9)]
        c0: f64,
        /// Number of ΔHHI values between 0 and c0²/2.
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Output CSV (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct MergerArgs {
    /// Calibrated model, market or firm-type model JSON.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    firm_a: String,
    #[arg(long)]
    firm_b: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    #[arg(long)]
    demand: DemandKind,
    #[arg(long, default_value_t = 2000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of single-product firms.
    #[arg(long, default_value_t = 6)]
    firms: usize,
    #[arg(long, default_value_t = 0.3)]
    margin_lo: f64,
    #[arg(long, default_value_t = 0.6)]
    margin_hi: f64,
    /// Multiplier applied to UPP before comparing with actual price changes.
    #[arg(long, default_value_t = 1.0)]
    upp_scale: f64,
    /// Worker threads (all cores if omitted).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "mc-out")]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => 3,
            Error::Csv(c) if c.is_io_error() => 3,
            Error::Json(j) if j.is_io() => 3,
            Error::NoConvergence { .. } => 4,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn parse<T: serde::de::DeserializeOwned>(value: serde_json::Value, path: &Path) -> Result<T, Failure> {
    serde_json::from_value(value).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn write_output(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| Failure {
            code: 3,
            message: e.to_string(),
        }),
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    write_output(&text, out)
}

enum ModelInput {
    Calibrated(CalibratedModel),
    Market(Market),
    Firms(FirmModel),
}

impl ModelInput {
    fn load(path: &Path) -> Result<Self, Failure> {
        let value = read_json(path)?;
        let has = |key: &str| value.get(key).is_some();
        if has("products") {
            Ok(ModelInput::Market(parse(value, path)?))
        } else if has("model") {
            Ok(ModelInput::Calibrated(parse(value, path)?))
        } else if has("firm_types") {
            Ok(ModelInput::Firms(parse(value, path)?))
        } else {
            Err(Failure {
                code: 2,
                message: format!(
                    "{}: expected a calibrated model, a market (`products`) or a firm model (`firm_types`)",
                    path.display()
                ),
            })
        }
    }

    fn firm_model(&self) -> Result<FirmModel, Failure> {
        Ok(match self {
            ModelInput::Calibrated(c) => c.model.clone(),
            ModelInput::Market(m) => m.firm_model()?,
            ModelInput::Firms(f) => f.clone(),
        })
    }
}

fn solve(model: &FirmModel) -> Result<Equilibrium, Failure> {
    let eq = solve_equilibrium(model)?;
    eq.require_converged()?;
    Ok(eq)
}

#[derive(Serialize)]
struct MergeOutput {
    merger: MergerSpec,
    pre: Equilibrium,
    post: Equilibrium,
    delta_cs: f64,
}

fn merger_spec(args: &MergerArgs) -> Result<MergerSpec, Failure> {
    Ok(MergerSpec::new(args.firm_a.as_str(), args.firm_b.as_str())?)
}

fn merge_cmd(args: &MergerArgs) -> Result<(), Failure> {
    let merger = merger_spec(args)?;
    let input = ModelInput::load(&args.model)?;
    let model = input.firm_model()?;
    let post_model = post_merger_model(&model, &merger)?;
    let pre = solve(&model)?;
    let post = solve(&post_model)?;
    let delta_cs = delta_cs_actual(&pre, &post);
    write_json(
        &MergeOutput {
            merger,
            pre,
            post,
            delta_cs,
        },
        args.out.as_deref(),
    )
}

fn approx_cmd(args: &MergerArgs) -> Result<(), Failure> {
    let merger = merger_spec(args)?;
    let input = ModelInput::load(&args.model)?;
    let model = input.firm_model()?;
    let (firms, products): (ShareVector, ProductShareVector) = match &input {
        ModelInput::Calibrated(c) => (c.shares.clone(), ProductShareVector::single_product(&c.shares)),
        ModelInput::Market(m) => {
            let eq = solve(&model)?;
            let products = product_shares(m, &eq)?;
            (eq.shares, products)
        }
        ModelInput::Firms(_) => {
            let eq = solve(&model)?;
            let products = ProductShareVector::single_product(&eq.shares);
            (eq.shares, products)
        }
    };
    let report = delta_cs_prop1(&products, &firms, &merger, model.params(), model.v0())?;
    write_json(&report, args.out.as_deref())
}

fn calibrate_cmd(input: &Path, demand: Option<DemandKind>, out: Option<&Path>) -> Result<(), Failure> {
    let mut value = read_json(input)?;
    if let (Some(kind), Some(obj)) = (demand, value.as_object_mut()) {
        obj.insert("demand".to_owned(), serde_json::to_value(kind).map_err(Error::from)?);
    }
    let input_spec: CalibrationInput = parse(value, input)?;
    write_json(&calibrate(&input_spec)?, out)
}

fn mc_cmd(args: &McArgs) -> Result<(), Failure> {
    let config = McConfig {
        n_firms: args.firms,
        reps: args.reps,
        margin_range: (args.margin_lo, args.margin_hi),
        dirichlet_alpha: vec![1.0; args.firms + 1],
        demand: args.demand,
        seed: args.seed,
        upp_scale: args.upp_scale,
    };
    config.validate()?;
    let records = match args.threads {
        Some(t) => run_with_threads(&config, t)?,
        None => run(&config)?,
    };
    let summary = write_run(&args.out, &config, &records)?;
    if let Some(w) = &summary.warning {
        eprintln!("warning: {w}");
    }
    write_json(&summary, None)
}

fn rho_bounds_cmd(c0: f64, points: usize, out: Option<&Path>) -> Result<(), Failure> {
    let curve = rho1_bounds_curve(c0, points)?;
    let mut text = String::from("delta0,lower,upper\n");
    for (d, lo, hi) in curve {
        text.push_str(&format!("{d},{lo},{hi}\n"));
    }
    write_output(&text, out)
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Calibrate { input, demand, out } => calibrate_cmd(&input, demand, out.as_deref()),
        Command::Equilibrium { model, out } => {
            let eq = solve(&ModelInput::load(&model)?.firm_model()?)?;
            write_json(&eq, out.as_deref())
        }
        Command::Merge(args) => merge_cmd(&args),
        Command::Approx(args) => approx_cmd(&args),
        Command::Mc(args) => mc_cmd(&args),
        Command::RhoBounds { c0, points, out } => rho_bounds_cmd(c0, points, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
