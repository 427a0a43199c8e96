//! `persuade`: solve, convert, verify and fixture commands over JSON files.
//!
//! Exit codes: 0 on success, 1 for unreadable or malformed input, 2 when the
//! problem is infeasible or the supplied scheme is invalid.

mod files;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use persuasion::fixtures::{build_fixture, verify_fixture, FixtureId};
use persuasion::geometry::{GridOptions, DEFAULT_VERTEX_CAP};
use persuasion::solver::{
    bi_criteria_solve_with, convert_traced, gridded_utility, persuasion_lp,
    single_criteria_solve_with, ExtremePairs, SolveOptions,
};
use persuasion::{verify_scheme, Error, Mode, ProblemInstance};
use serde_json::json;

use files::{emit, load_instance, load_scheme, to_json, SchemeFile};

const GRID_CAP_VAR: &str = "PERSUADE_GRID_CAP";

#[derive(Parser)]
#[command(
    name = "persuade",
    version,
    about = "Constrained Bayesian persuasion solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveKind {
    /// Constraints may be exceeded by at most eps.
    Bi,
    /// Constraints hold exactly; needs a Slater margin.
    Single,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a near-optimal signaling scheme.
    Solve {
        instance: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long, value_enum, default_value = "bi")]
        mode: SolveKind,
        #[arg(long)]
        slater_margin: Option<f64>,
        /// Recorded in the output; the solvers themselves are deterministic.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the gridded utility as CSV (vertex value, then coordinates).
        #[arg(long)]
        grid_csv: Option<PathBuf>,
        /// Write the LP in a readable text form.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
    },
    /// Turn an ex ante feasible scheme into an ex post feasible one.
    Convert {
        instance: PathBuf,
        scheme: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scheme against an instance and print the report.
    Verify {
        instance: PathBuf,
        scheme: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Write a built-in instance, e.g. `example1:1/6`, `prop3:2,1`, `appE3:2`.
    Fixture {
        id: String,
        #[arg(long)]
        verify: bool,
        /// Directory for instance.json and scheme.json; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible(_)
            | Error::SlaterMarginTooSmall { .. }
            | Error::ExAnteViolated { .. }
            | Error::InvalidScheme(_) => Failure::invalid(e.to_string()),
            _ => Failure::input(e.to_string()),
        }
    }
}

fn grid_options() -> Result<GridOptions, Failure> {
    let vertex_cap = match std::env::var(GRID_CAP_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::input(format!("{GRID_CAP_VAR}: not a vertex count: {v:?}")))?,
        Err(_) => DEFAULT_VERTEX_CAP,
    };
    Ok(GridOptions {
        vertex_cap,
        ..GridOptions::default()
    })
}

fn grid_csv(instance: &ProblemInstance, eps: f64, opts: &SolveOptions) -> Result<String, Failure> {
    let g = gridded_utility(instance, eps, opts)?;
    let mut out = String::from("value");
    for w in 0..instance.k() {
        write!(out, ",q{w}").unwrap();
    }
    out.push('\n');
    for i in 0..g.grid().num_vertices() {
        write!(out, "{}", g.vertex_value(i)).unwrap();
        for x in g.grid().vertex_coords(i) {
            write!(out, ",{x}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn solve(
    path: &Path,
    eps: f64,
    kind: SolveKind,
    margin: Option<f64>,
    seed: Option<u64>,
    out: Option<&Path>,
    csv: Option<&Path>,
    lp: Option<&Path>,
) -> Result<(), Failure> {
    let instance = load_instance(path)?;
    let opts = SolveOptions {
        grid: grid_options()?,
    };
    let report = match kind {
        SolveKind::Bi => bi_criteria_solve_with(&instance, eps, &opts)?,
        SolveKind::Single => {
            let margin =
                margin.ok_or_else(|| Failure::input("--mode single needs --slater-margin"))?;
            single_criteria_solve_with(&instance, eps, margin, &opts)?
        }
    };
    if let Some(p) = csv {
        emit(Some(p), &grid_csv(&instance, eps, &opts)?)?;
    }
    if let Some(p) = lp {
        emit(Some(p), &persuasion_lp(&instance, eps, &opts)?.dump())?;
    }
    eprintln!(
        "value {:.6}, support {}, max violation {:.3e}",
        report.value,
        report.scheme.len(),
        report.max_violation()
    );
    let mut body = serde_json::to_value(&report).expect("serializable");
    body.as_object_mut().unwrap().remove("scheme");
    if let Some(seed) = seed {
        body["seed"] = json!(seed);
    }
    let file = SchemeFile {
        scheme: report.scheme,
        value: Some(report.value),
        report: Some(body),
    };
    emit(out, &to_json(&file))
}

fn convert(instance: &Path, scheme: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let instance = load_instance(instance)?;
    let input = load_scheme(scheme)?.scheme;
    for (i, c) in instance.constraints().iter().enumerate() {
        c.kind
            .check_convex()
            .map_err(|reason| Failure::input(format!("constraint {i} is not convex: {reason}")))?;
    }
    let ante = instance.with_mode(Mode::ExAnte);
    let before = verify_scheme(&ante, &input, 1e-9)?;
    if !before.valid {
        return Err(Failure::invalid(format!(
            "input scheme is not valid under the ex ante constraints: {}",
            to_json(&before).trim_end()
        )));
    }
    let (output, trace) = convert_traced(
        &input,
        instance.constraints(),
        instance.prior(),
        &mut ExtremePairs,
    )?;
    let after = verify_scheme(&instance.with_mode(Mode::ExPost), &output, 1e-9)?;
    let ratio = if before.utility == 0.0 {
        (after.utility == 0.0).then_some(1.0)
    } else {
        Some(after.utility / before.utility)
    };
    eprintln!(
        "before {:.6}, after {:.6}, ratio {}",
        before.utility,
        after.utility,
        ratio.map_or("undefined".into(), |r| format!("{r:.6}"))
    );
    let file = SchemeFile {
        scheme: output,
        value: Some(after.utility),
        report: Some(json!({
            "before": before.utility,
            "after": after.utility,
            "ratio": ratio,
            "steps": trace.steps.len(),
            "verification": after,
        })),
    };
    emit(out, &to_json(&file))
}

fn verify(instance: &Path, scheme: &Path, tol: f64) -> Result<(), Failure> {
    let instance = load_instance(instance)?;
    let scheme = load_scheme(scheme)?.scheme;
    let report = verify_scheme(&instance, &scheme, tol)?;
    print!("{}", to_json(&report));
    if report.valid {
        Ok(())
    } else {
        Err(Failure::invalid("scheme is not valid at this tolerance"))
    }
}

fn fixture(id: &str, check: bool, out: Option<&Path>) -> Result<(), Failure> {
    let id: FixtureId = id
        .parse()
        .map_err(|e: Error| Failure::input(e.to_string()))?;
    let fx = build_fixture(id)?;
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
            emit(Some(&dir.join("instance.json")), &to_json(&fx.instance))?;
            let scheme = SchemeFile {
                value: Some(fx.reference.ex_ante_value),
                ..SchemeFile::bare(fx.reference.scheme.clone())
            };
            emit(Some(&dir.join("scheme.json")), &to_json(&scheme))?;
        }
        None if !check => emit(None, &to_json(&fx))?,
        None => {}
    }
    if check {
        let report = verify_fixture(id)?;
        print!("{}", to_json(&report));
        if let Some(why) = report.failure() {
            return Err(Failure::invalid(format!("fixture {id} failed: {why}")));
        }
        eprintln!("fixture {id}: pass");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve {
            instance,
            eps,
            mode,
            slater_margin,
            seed,
            out,
            grid_csv,
            dump_lp,
        } => solve(
            &instance,
            eps,
            mode,
            slater_margin,
            seed,
            out.as_deref(),
            grid_csv.as_deref(),
            dump_lp.as_deref(),
        ),
        Command::Convert {
            instance,
            scheme,
            out,
        } => convert(&instance, &scheme, out.as_deref()),
        Command::Verify {
            instance,
            scheme,
            tol,
        } => verify(&instance, &scheme, tol),
        Command::Fixture { id, verify, out } => fixture(&id, verify, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
