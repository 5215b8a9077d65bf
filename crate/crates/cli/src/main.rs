//! `sepsys`: run structure detection and model fitting on built-in cases,
//! inline expressions or problem files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sepsys_core::report::{probe_case, StructureSummaryView};
use sepsys_core::{
    builtin_case, parse_expression, run_suite, BoxDomain, CaseSpec, Polarity, ProblemFile, Report, RunConfig,
    Stage, SuiteResult, Tolerance,
};

#[derive(Parser)]
#[command(name = "sepsys", version, about = "Separable-structure symbolic regression")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit one case: a built-in id, a problem file or an inline expression.
    Fit {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long)]
        eps_target: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Repeated runs of built-in cases; writes suite.json, timings.json and summary.csv.
    Suite {
        /// Case ids, e.g. `1-14` or `1,3,11-12`.
        #[arg(long, default_value = "1-14")]
        cases: String,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Structure detection only.
    Probe {
        #[command(flatten)]
        target: TargetArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        tuning: Tuning,
    },
}

#[derive(Args)]
struct TargetArgs {
    /// Built-in case id, path to a problem file, or an expression.
    #[arg(long, allow_hyphen_values = true)]
    case: String,
    /// Comma-separated variable names for an expression.
    #[arg(long)]
    vars: Option<String>,
    /// `lo:hi` per variable, comma-separated; a single range applies to all.
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
}

#[derive(Args)]
struct Tuning {
    #[arg(long, value_enum, default_value_t = PolarityArg::Dependent)]
    polarity: PolarityArg,
    #[arg(long)]
    eps_const: Option<f64>,
    #[arg(long)]
    eps_dep: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Sample rows per detection probe.
    #[arg(long)]
    rows: Option<usize>,
    /// Fitting and validation samples per variable.
    #[arg(long, default_value_t = 200)]
    samples_per_var: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolarityArg {
    Dependent,
    Independent,
}

const EXIT_MISSED: u8 = 2;
const EXIT_STRUCTURE: u8 = 3;
const EXIT_INPUT: u8 = 4;

struct InputError(String);

impl<E: std::fmt::Display> From<E> for InputError {
    fn from(e: E) -> Self {
        InputError(e.to_string())
    }
}

impl Tuning {
    fn config(&self, eps_target: Option<f64>) -> Result<RunConfig, InputError> {
        let d = Tolerance::default();
        let tol = Tolerance {
            eps_const: self.eps_const.unwrap_or(d.eps_const),
            eps_dep: self.eps_dep.unwrap_or(d.eps_dep),
            trials: self.trials.unwrap_or(d.trials),
            rows: self.rows.unwrap_or(d.rows),
        };
        tol.validate()?;
        if self.samples_per_var < 2 {
            return Err(InputError("--samples-per-var must be at least 2".into()));
        }
        if let Some(e) = eps_target {
            if !(e > 0.0 && e.is_finite()) {
                return Err(InputError(format!("--eps-target must be positive, got {e}")));
            }
        }
        Ok(RunConfig {
            tol,
            polarity: match self.polarity {
                PolarityArg::Dependent => Polarity::Dependent,
                PolarityArg::Independent => Polarity::Independent,
            },
            samples_per_var: self.samples_per_var,
            eps_target,
            keep_unconverged: true,
        })
    }
}

fn parse_domain(spec: &str, n: usize) -> Result<BoxDomain, InputError> {
    let ranges = spec
        .split(',')
        .map(|r| {
            let (lo, hi) = r.trim().split_once(':').ok_or_else(|| InputError(format!("bad range `{r}`, want lo:hi")))?;
            Ok((lo.trim().parse::<f64>()?, hi.trim().parse::<f64>()?))
        })
        .collect::<Result<Vec<_>, InputError>>()?;
    let bounds = match ranges.len() {
        1 => vec![ranges[0]; n],
        k if k == n => ranges,
        k => return Err(InputError(format!("{k} ranges for {n} variables"))),
    };
    Ok(BoxDomain::new(bounds)?)
}

fn resolve(t: &TargetArgs, eps: Option<f64>) -> Result<CaseSpec, InputError> {
    if let Ok(id) = t.case.parse::<u32>() {
        return builtin_case(id).ok_or_else(|| InputError(format!("no built-in case {id}")));
    }
    let path = Path::new(&t.case);
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).map_err(|e| InputError(format!("{}: {e}", path.display())))?;
        return Ok(ProblemFile::from_json(&text)?.to_case()?);
    }
    let names: Vec<String> = match &t.vars {
        Some(v) => v.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(InputError("an expression needs --vars".into())),
    };
    let domain = parse_domain(t.domain.as_deref().ok_or_else(|| InputError("an expression needs --domain".into()))?, names.len())?;
    let tree = parse_expression(&t.case, &names)?;
    Ok(CaseSpec::from_expr("user", tree, domain, eps.unwrap_or(1e-6)))
}

fn parse_ids(spec: &str) -> Result<Vec<u32>, InputError> {
    let mut ids = Vec::new();
    for part in spec.split(',') {
        match part.trim().split_once('-') {
            Some((a, b)) => {
                let (a, b): (u32, u32) = (a.parse()?, b.parse()?);
                if a > b {
                    return Err(InputError(format!("empty range `{part}`")));
                }
                ids.extend(a..=b);
            }
            None => ids.push(part.trim().parse()?),
        }
    }
    Ok(ids)
}

/// Worst outcome over a set of runs.
fn exit_code(runs: &[Report]) -> u8 {
    let structural = runs.iter().any(|r| {
        r.structure_match == Some(false)
            || matches!(r.error_stage, Some(Stage::BlockDetection | Stage::FactorDetection))
    });
    if structural {
        EXIT_STRUCTURE
    } else if runs.iter().any(|r| !r.success) {
        EXIT_MISSED
    } else {
        0
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), InputError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| InputError(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<u8, InputError> {
    match cli.cmd {
        Cmd::Fit { target, seed, reps, eps_target, out, format, tuning } => {
            let config = tuning.config(eps_target)?;
            let case = resolve(&target, eps_target)?;
            if reps == 0 {
                return Err(InputError("--reps must be at least 1".into()));
            }
            let suite = run_suite(std::slice::from_ref(&case), reps, seed, &config);
            let text = match (format, reps) {
                (Format::Json, 1) => suite.runs[0].to_json() + "\n",
                (Format::Json, _) => suite.to_json() + "\n",
                (Format::Csv, _) => suite.to_csv(),
            };
            write_out(out.as_deref(), &text)?;
            for r in &suite.runs {
                if let Some(e) = &r.error {
                    eprintln!("seed {}: {e}", r.seed);
                }
            }
            Ok(exit_code(&suite.runs))
        }
        Cmd::Suite { cases, reps, seed, out, tuning } => {
            let config = tuning.config(None)?;
            if reps == 0 {
                return Err(InputError("--reps must be at least 1".into()));
            }
            let specs = parse_ids(&cases)?
                .into_iter()
                .map(|id| builtin_case(id).ok_or_else(|| InputError(format!("no built-in case {id}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let suite = run_suite(&specs, reps, seed, &config);
            write_suite(&suite, out.as_deref())?;
            Ok(exit_code(&suite.runs))
        }
        Cmd::Probe { target, seed, tuning } => {
            let config = tuning.config(None)?;
            let case = resolve(&target, None)?;
            match probe_case(&case, seed, &config) {
                Ok(s) => {
                    let view = StructureSummaryView::new(&case, &s);
                    println!("{}", serde_json::to_string_pretty(&view)?);
                    Ok(if view.matches == Some(false) { EXIT_STRUCTURE } else { 0 })
                }
                Err(e) => {
                    eprintln!("{e}");
                    Ok(EXIT_STRUCTURE)
                }
            }
        }
    }
}

fn write_suite(suite: &SuiteResult, dir: Option<&Path>) -> Result<(), InputError> {
    let csv = suite.to_csv();
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| InputError(format!("{}: {e}", dir.display())))?;
        write_out(Some(&dir.join("suite.json")), &(suite.to_json() + "\n"))?;
        write_out(Some(&dir.join("timings.json")), &(suite.timings_json() + "\n"))?;
        write_out(Some(&dir.join("summary.csv")), &csv)?;
    }
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("SEPSYS_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(InputError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
