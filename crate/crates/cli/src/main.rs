use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stflow::driver::RunMode;
use stflow::error::{Error, Result};
use stflow::exec::Execution;
use stflow::io::{self, RunConfig};
use stflow::solver::LinearBackend;
use stflow::upscaling::{upscale_permeability, CellField, Direction, UpscaleMethod};

#[derive(Parser)]
#[command(name = "stflow", version, about = "Two-phase flow on adaptive space-time meshes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Adaptive,
    Fine,
    Coarse,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Direct,
    Gmres,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    FlowBased,
    HarmonicArithmetic,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation from a TOML config.
    Run {
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long = "linear-solver", value_enum)]
        linear_solver: Option<Solver>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Dump raw indicator fields of every pass.
        #[arg(long)]
        verbose_indicators: bool,
    },
    /// Upscale an isotropic permeability field file by N levels.
    Upscale {
        field: PathBuf,
        #[arg(long)]
        levels: u8,
        #[arg(long, value_enum, default_value = "flow-based")]
        method: Method,
        /// Directory for the upscaled field files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two run directories.
    Compare { run_a: PathBuf, run_b: PathBuf },
}

fn run(config: &Path, mode: Option<Mode>, solver: Option<Solver>, out: Option<PathBuf>, verbose: bool) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(m) = mode {
        cfg.mode = match m {
            Mode::Adaptive => RunMode::Adaptive,
            Mode::Fine => RunMode::Fine,
            Mode::Coarse => RunMode::Coarse,
        };
    }
    if let Some(s) = solver {
        cfg.solver.linear.backend = match s {
            Solver::Direct => LinearBackend::Direct,
            Solver::Gmres => LinearBackend::GmresIlu,
        };
    }
    if let Some(o) = out {
        cfg.output.dir = o;
    }
    cfg.output.verbose_indicators |= verbose;
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()).map_err(|e| Error::io(dir.join("config.toml"), e))?;

    let sim = cfg.simulation()?;
    let every = cfg.output.snapshot_every;
    let snapshots = dir.join("vtk");
    let result = sim.run_with(|out| {
        if every > 0 && (out.log.step + 1) % every == 0 {
            std::fs::create_dir_all(&snapshots).map_err(|e| Error::io(&snapshots, e))?;
            io::write_vtk(&snapshots.join(format!("step{:04}.vtk", out.log.step)), &out.mesh, &out.state)?;
        }
        Ok(())
    })?;
    io::export_results(&dir, &result)?;
    let r = &result.report;
    println!(
        "{} run: {} steps, {} newton iterations, {} element-passes, {:.3} s (setup {:.3}, linear {:.3}, data {:.3}), max imbalance {:.2e}",
        r.mode.name(),
        r.steps.len(),
        r.newton_iterations,
        r.element_passes,
        r.timing.total_seconds,
        r.timing.assembly_seconds,
        r.timing.linear_seconds,
        r.timing.adaptivity_seconds,
        r.max_relative_imbalance
    );
    println!("results written to {}", dir.display());
    Ok(())
}

fn upscale(path: &Path, levels: u8, method: Method, out: Option<PathBuf>) -> Result<()> {
    let fine = io::load_field(path)?;
    let method = match method {
        Method::FlowBased => UpscaleMethod::FlowBased,
        Method::HarmonicArithmetic => UpscaleMethod::HarmonicArithmetic,
    };
    let summary = |f: &CellField| {
        let g = (f.values.iter().map(|v| v.ln()).sum::<f64>() / f.values.len() as f64).exp();
        format!("{}x{} min {:.6} max {:.6} geometric mean {:.6}", f.nx, f.ny, f.min(), f.max(), g)
    };
    println!("level {levels}: {}", summary(&fine));
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for l in (0..levels).rev() {
        let ratio = 1usize << (levels - l);
        for (dir, name) in [(Direction::X, "kx"), (Direction::Y, "ky")] {
            let f = upscale_permeability(&fine, &fine, ratio, dir, method, Execution::Parallel)?;
            println!("level {l} {name}: {}", summary(&f));
            if let Some(d) = &out {
                io::write_field(&d.join(format!("level{l}_{name}.txt")), &f)?;
            }
        }
    }
    Ok(())
}

fn compare(a: &Path, b: &Path) -> Result<()> {
    let c = io::compare_runs(a, b)?;
    println!("saturation_l2_relative = {:.6e}", c.saturation_l2);
    println!("oil_rate_rms_ft3_day = {:.6e}", c.oil_rate_rms);
    println!("water_rate_rms_ft3_day = {:.6e}", c.water_rate_rms);
    println!("speedup = {:.4}", c.speedup);
    println!("linear_speedup = {:.4}", c.linear_speedup);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run {
            config,
            mode,
            linear_solver,
            out,
            verbose_indicators,
        } => run(&config, mode, linear_solver, out, verbose_indicators),
        Command::Upscale { field, levels, method, out } => upscale(&field, levels, method, out),
        Command::Compare { run_a, run_b } => compare(&run_a, &run_b),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
