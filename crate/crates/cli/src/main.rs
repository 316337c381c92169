use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use occurelax::dsl::Problem;
use occurelax::experiments::{
    assemble, compare, discretize, parse_or_error, reproduce, solve_pipeline, values_csv, PipelineConfig, PipelineError,
    RunManifest, SolveRun, Timings, REPRODUCIBLE,
};
use occurelax::lp::export_mps;
use occurelax::measure::BasisMode;

const EXIT_MISMATCH: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "occurelax", version, about = "Occupation-measure LP relaxations of variational problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the relaxation LP of a problem file and extract centroids.
    Solve {
        file: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run a bundled example at its pinned settings.
    Reproduce {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(REPRODUCIBLE))]
        id: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compute the envelope, affine, nonlinear and direct values.
    Compare {
        file: PathBuf,
        #[command(flatten)]
        flags: Flags,
        /// Slack allowed in each inequality of the ordering.
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
    },
    /// Write the relaxation LP in MPS format without solving it.
    Export {
        file: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Affine,
    Nonlinear,
    Both,
}

#[derive(Args)]
struct Flags {
    /// Cells per axis of Ω; one value for all axes or one per axis.
    #[arg(long, value_delimiter = ',')]
    res_x: Option<Vec<usize>>,
    /// Grid points per component of Y.
    #[arg(long, value_delimiter = ',')]
    res_y: Option<Vec<usize>>,
    /// Grid points per component of Z.
    #[arg(long, value_delimiter = ',')]
    res_z: Option<Vec<usize>>,
    /// Grid points per component of U.
    #[arg(long, value_delimiter = ',')]
    res_u: Option<Vec<usize>>,
    #[arg(long)]
    basis_degree_x: Option<u32>,
    #[arg(long)]
    basis_degree_y: Option<u32>,
    #[arg(long, value_enum, default_value = "affine")]
    mode: Mode,
    #[arg(long)]
    eps_eq: Option<f64>,
    #[arg(long)]
    eps_ineq: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write problem.mps and skip the solve.
    #[arg(long)]
    export_mps: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl Flags {
    fn config(&self) -> PipelineConfig {
        let mut c = PipelineConfig::default();
        if let Some(v) = &self.res_x {
            c.res_x = v.clone();
            c.direct_cells = v[0];
        }
        if let Some(v) = &self.res_y {
            c.res_y = v.clone();
        }
        if let Some(v) = &self.res_z {
            c.res_z = v.clone();
        }
        if let Some(v) = &self.res_u {
            c.res_u = v.clone();
        }
        if let Some(v) = self.basis_degree_x {
            c.d_x = v;
        }
        if let Some(v) = self.basis_degree_y {
            c.d_y = v;
        }
        if let Some(v) = self.eps_eq {
            c.eps_eq = v;
        }
        if let Some(v) = self.eps_ineq {
            c.eps_ineq = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        c
    }

    fn modes(&self) -> Vec<BasisMode> {
        match self.mode {
            Mode::Affine => vec![BasisMode::Affine],
            Mode::Nonlinear => vec![BasisMode::Nonlinear],
            Mode::Both => vec![BasisMode::Affine, BasisMode::Nonlinear],
        }
    }
}

/// Failure of a command, mapped onto the exit-code contract.
enum Failure {
    Usage(String),
    Mismatch(String),
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Parse(_) | PipelineError::UnknownProblem(_) => Failure::Usage(e.to_string()),
            _ => Failure::Mismatch(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

fn read_problem(path: &Path) -> Result<(String, Problem), Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let p = parse_or_error(&text)?;
    Ok((text, p))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_err(&path, e))
}

fn mode_name(m: BasisMode) -> &'static str {
    if m == BasisMode::Affine {
        "affine"
    } else {
        "nonlinear"
    }
}

fn export(file: &Path, flags: &Flags, command: &str) -> Result<(), Failure> {
    let (text, p) = read_problem(file)?;
    let cfg = flags.config();
    let mut t = Timings::default();
    let d = t.time("discretize", || discretize(&p, &cfg))?;
    let mode = flags.modes()[0];
    let (_, rel) = t.time("assemble", || assemble(&p, &d, &cfg, mode))?;
    write(&flags.out, "problem.mps", &export_mps(&rel.lp))?;
    write(&flags.out, "manifest.json", &RunManifest::new(command, &text, &cfg, t).to_json())?;
    println!("wrote {} ({} rows, {} columns)", flags.out.join("problem.mps").display(), rel.lp.rows.len(), rel.lp.num_vars());
    Ok(())
}

fn solve_report(file: &Path, run: &SolveRun) -> String {
    let d = &run.discretization;
    let mut s = format!("problem: {}\n", file.display());
    let _ = writeln!(s, "cells: {}  bulk atoms: {}  boundary atoms: {}", d.cells.len(), d.bulk.len(), d.boundary.len());
    if let Some(k) = &d.kills {
        let _ = writeln!(s, "support filter: bulk {} -> {}, boundary {} -> {}", k.bulk_before, k.bulk_after, k.boundary_before, k.boundary_after);
        if !k.empty_faces.is_empty() {
            let _ = writeln!(s, "faces without admissible boundary atoms: {:?}", k.empty_faces);
        }
    }
    for (mode, r) in &run.runs {
        let sol = &r.solution;
        let _ = writeln!(
            s,
            "{}: {} value {} ({} rows, {} iterations, primal residual {:.3e})",
            mode_name(*mode),
            sol.status,
            sol.value,
            r.relaxation.lp.rows.len(),
            sol.iterations,
            sol.primal_residual
        );
    }
    if let Some(g) = run.jensen_gap {
        let _ = writeln!(s, "jensen gap: {g}");
    }
    if let Some(f) = &run.feasibility {
        s.push_str(&f.to_text());
    }
    s.push_str("timings:\n");
    for (name, secs) in &run.timings.0 {
        let _ = writeln!(s, "  {name}: {secs:.3}s");
    }
    s
}

fn solve(file: &Path, flags: &Flags) -> Result<(), Failure> {
    if flags.export_mps {
        return export(file, flags, "solve --export-mps");
    }
    let (text, p) = read_problem(file)?;
    let cfg = flags.config();
    let run = solve_pipeline(&p, &cfg, &flags.modes())?;
    let report = solve_report(file, &run);
    write(&flags.out, "report.txt", &report)?;
    write(&flags.out, "values.csv", &values_csv(&run.runs))?;
    if let Some(cf) = &run.centroids {
        write(&flags.out, "centroids.csv", &cf.to_csv(&run.discretization))?;
    }
    write(&flags.out, "manifest.json", &RunManifest::new("solve", &text, &cfg, run.timings.clone()).to_json())?;
    print!("{report}");
    let failed: Vec<String> = run
        .runs
        .iter()
        .filter(|(_, r)| r.solution.status != occurelax::lp::LpStatus::Optimal)
        .map(|(m, r)| format!("{} LP: {}", mode_name(*m), r.solution.status))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Mismatch(failed.join("; ")))
    }
}

fn compare_cmd(file: &Path, flags: &Flags, tol: f64) -> Result<(), Failure> {
    let (text, p) = read_problem(file)?;
    let cfg = flags.config();
    let sw = compare(&p, &cfg, tol)?;
    write(&flags.out, "sandwich.csv", &sw.to_csv())?;
    write(&flags.out, "manifest.json", &RunManifest::new("compare", &text, &cfg, sw.timings.clone()).to_json())?;
    print!("{}", sw.to_csv());
    let failed: Vec<&str> = sw.checks().into_iter().filter(|c| !c.1).map(|c| c.0).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Mismatch(format!("ordering violated: {}", failed.join(", "))))
    }
}

fn reproduce_cmd(id: &str, out: &Path) -> Result<(), Failure> {
    let b = occurelax::experiments::bundled_problem(id)?;
    let mut t = Timings::default();
    let rep = t.time("reproduce", || reproduce(id))?;
    write(out, "values.csv", &rep.to_csv())?;
    write(out, "report.txt", &rep.to_text())?;
    write(out, "manifest.json", &RunManifest::new(&format!("reproduce {id}"), b.text, &b.config, t).to_json())?;
    print!("{}", rep.to_text());
    if rep.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = rep.rows.iter().filter(|r| !r.pass).map(|r| r.quantity.as_str()).collect();
        Err(Failure::Mismatch(format!("failing rows: {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Solve { file, flags } => solve(file, flags),
        Command::Reproduce { id, out } => reproduce_cmd(id, out),
        Command::Compare { file, flags, tol } => compare_cmd(file, flags, *tol),
        Command::Export { file, flags } => export(file, flags, "export"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Mismatch(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_MISMATCH)
        }
    }
}
