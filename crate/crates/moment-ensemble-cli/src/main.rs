//! `moment-ensemble`: scenario simulator and moment utilities.
//!
//! Exit status: 0 success, 2 usage error, 3 numerical failure (integration
//! blow-up or feedback stall), 4 I/O error.

mod args;

use std::fs;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use moment_ensemble::error::Error;
use moment_ensemble::io as me_io;
use moment_ensemble::moments::{
    check_hausdorff_l1, check_hausdorff_l2, compute_ensemble_moments, compute_output_moments,
    rescale_moments_box, HausdorffReport, MomentSequence,
};
use moment_ensemble::inversion::invert_moments;
use moment_ensemble::scenarios::{
    run_bloch, run_nonlinear, run_output_moment_demo, ProfileSpec, ScenarioConfig,
};

use args::{parse_args, Command, HausdorffForm, Subcommand, UsageError, USAGE};

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cmd = match parse_args(&argv) {
        Ok(cmd) => cmd,
        Err(UsageError(msg)) => {
            eprintln!("error: {msg}\n\n{USAGE}");
            std::process::exit(2);
        }
    };
    match run(&cmd) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code(&err));
        }
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::BlowUp { .. } | Error::Stall { .. } | Error::NonFinite(_) => 3,
        Error::Io(_) => 4,
        _ => 2,
    }
}

/// Output directory: `--out`, else `MOMENT_ENSEMBLE_OUT`, else `./out`.
fn output_dir(cmd: &Command) -> PathBuf {
    cmd.out.clone().unwrap_or_else(|| {
        std::env::var_os("MOMENT_ENSEMBLE_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"))
    })
}

fn say(quiet: bool, msg: &str) {
    if quiet {
        return;
    }
    let mut out = std::io::stdout();
    if writeln!(out, "{msg}").is_err() {
        // The consumer closed the pipe; stop producing output.
        std::process::exit(0);
    }
}

fn run(cmd: &Command) -> moment_ensemble::Result<()> {
    match &cmd.sub {
        Subcommand::Simulate { source } => simulate(cmd, source),
        Subcommand::Moments {
            input,
            order,
            output_moments,
        } => moments(cmd, input, *order, *output_moments),
        Subcommand::CheckHausdorff { input, up_to, form } => {
            check_hausdorff(cmd, input, *up_to, form)
        }
        Subcommand::Invert { input, grid } => invert(cmd, input, *grid),
        Subcommand::Rescale { input, a, b } => rescale(cmd, input, *a, *b),
    }
}

fn load_config(source: &str) -> moment_ensemble::Result<ScenarioConfig> {
    if let Some(preset) = ScenarioConfig::preset(source) {
        return Ok(preset);
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(Error::InvalidArgument(format!(
            "'{source}' is neither a preset ({:?}) nor a config file",
            ScenarioConfig::preset_names()
        )));
    }
    let text = fs::read_to_string(path)?;
    ScenarioConfig::parse(&text)
}

fn simulate(cmd: &Command, source: &str) -> moment_ensemble::Result<()> {
    let mut cfg = load_config(source)?;
    if let Some(dt) = cmd.dt {
        cfg.dt = dt;
    }
    if let Some(horizon) = cmd.horizon {
        cfg.horizon = horizon;
    }
    if let Some(points) = cmd.grid_points {
        cfg.grid_points = points;
    }
    let base = match (&cmd.out, &cfg.output_dir) {
        (Some(out), _) => out.clone(),
        (None, Some(dir)) => dir.clone(),
        (None, None) => output_dir(cmd),
    };
    cfg.output_dir = Some(base.join(&cfg.name));
    cfg.validate()?;

    // The scenario family follows the profile arity: three components for
    // the magnetization ensemble, two for the planar ensemble, one for the
    // output-moment demonstration.
    let arity = match &cfg.initial_profile {
        ProfileSpec::Constant(p) => p.len(),
    };
    match arity {
        3 => {
            let result = run_bloch(&cfg)?;
            say(
                cmd.quiet,
                &format!(
                    "{}: terminal moment error {:.6}, state error sup {:.6} / L2 {:.6}, \
                     norm drift {:.2e}, V(0) {:.4} -> V(T) {:.4}",
                    cfg.name,
                    result.final_moment_error,
                    result.final_sup_error,
                    result.final_l2_error,
                    result.max_norm_drift.unwrap_or(0.0),
                    result.v_trace.first().unwrap_or(&0.0),
                    result.v_trace.last().unwrap_or(&0.0),
                ),
            );
            for path in &result.written {
                say(cmd.quiet, &format!("wrote {}", path.display()));
            }
        }
        2 => {
            let result = run_nonlinear(&cfg)?;
            say(
                cmd.quiet,
                &format!(
                    "{}: terminal moment error {:.6}, state error sup {:.6} / L2 {:.6}, \
                     V(0) {:.4} -> V(T) {:.4}",
                    cfg.name,
                    result.final_moment_error,
                    result.final_sup_error,
                    result.final_l2_error,
                    result.v_trace.first().unwrap_or(&0.0),
                    result.v_trace.last().unwrap_or(&0.0),
                ),
            );
            for path in &result.written {
                say(cmd.quiet, &format!("wrote {}", path.display()));
            }
        }
        1 => {
            let report = run_output_moment_demo(&cfg)?;
            say(
                cmd.quiet,
                &format!(
                    "{}: radical distance {:.6}, L2 profile distance {:.6}, \
                     radical distance to the constant-one profile {:.6}",
                    cfg.name,
                    report.radical_distance,
                    report.l2_distance,
                    report.radical_to_constant_one,
                ),
            );
            for path in &report.written {
                say(cmd.quiet, &format!("wrote {}", path.display()));
            }
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "no scenario family for {other}-component profiles"
            )));
        }
    }
    Ok(())
}

fn read_moments_file(path: &Path) -> moment_ensemble::Result<MomentSequence> {
    let file = File::open(path)?;
    me_io::read_moments_csv(BufReader::new(file))
}

fn write_moments_file(
    m: &MomentSequence,
    dir: &Path,
    name: &str,
) -> moment_ensemble::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    me_io::write_moments_csv(m, &mut w)?;
    w.flush()?;
    Ok(path)
}

fn moments(
    cmd: &Command,
    input: &Path,
    order: usize,
    output_moments: bool,
) -> moment_ensemble::Result<()> {
    let file = File::open(input)?;
    let (grid, profile) = me_io::read_profile_csv(BufReader::new(file))?;
    let (m, name) = if output_moments {
        (
            compute_output_moments(&profile, &grid, order)?,
            "output_moments.csv",
        )
    } else {
        (
            compute_ensemble_moments(&profile, &grid, order)?,
            "moments.csv",
        )
    };
    let path = write_moments_file(&m, &output_dir(cmd), name)?;
    say(
        cmd.quiet,
        &format!(
            "computed moments up to order {order} of a {}-node, {}-component profile",
            grid.len(),
            profile.state_dim()
        ),
    );
    say(cmd.quiet, &format!("wrote {}", path.display()));
    Ok(())
}

fn print_report(quiet: bool, channel: usize, report: &HausdorffReport) {
    say(
        quiet,
        &format!(
            "component {channel}: empirical constant {:.12} over {} tested n",
            report.max_value,
            report.per_n.len()
        ),
    );
    for (n, value) in &report.per_n {
        say(quiet, &format!("  n = {n}: {value:.12}"));
    }
}

fn check_hausdorff(
    cmd: &Command,
    input: &Path,
    up_to: Option<usize>,
    form: &HausdorffForm,
) -> moment_ensemble::Result<()> {
    let m = read_moments_file(input)?;
    let up_to = up_to.unwrap_or_else(|| (m.max_order() / m.param_dim()).min(10));
    let dir = output_dir(cmd);
    fs::create_dir_all(&dir)?;
    let path = dir.join("hausdorff.csv");
    let mut w = BufWriter::new(File::create(&path)?);
    let d = m.param_dim();
    let header: Vec<String> = std::iter::empty()
        .chain((1..=d).map(|j| format!("n_{j}")))
        .chain(["state_i".to_string(), "value".to_string()])
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for channel in 0..m.state_dim() {
        let component = m.component(channel)?;
        let report = match form {
            HausdorffForm::L1 => check_hausdorff_l1(&component, up_to)?,
            HausdorffForm::L2 => check_hausdorff_l2(&component, up_to)?,
        };
        print_report(cmd.quiet, channel + 1, &report);
        for (n, value) in &report.per_n {
            let mut row: Vec<String> = n.entries().iter().map(|e| e.to_string()).collect();
            row.push((channel + 1).to_string());
            row.push(me_io::format_value(*value));
            writeln!(w, "{}", row.join(","))?;
        }
    }
    w.flush()?;
    say(cmd.quiet, &format!("wrote {}", path.display()));
    Ok(())
}

fn invert(cmd: &Command, input: &Path, grid_size: usize) -> moment_ensemble::Result<()> {
    let m = read_moments_file(input)?;
    let (lattice, reconstruction) = invert_moments(&m, grid_size)?;
    let dir = output_dir(cmd);
    fs::create_dir_all(&dir)?;
    let path = dir.join("reconstruction.csv");
    let mut w = BufWriter::new(File::create(&path)?);
    me_io::write_profile_csv(&lattice, &reconstruction, &mut w)?;
    w.flush()?;
    say(
        cmd.quiet,
        &format!(
            "reconstructed {} lattice values from moments of order <= {}",
            lattice.len(),
            m.max_order()
        ),
    );
    say(cmd.quiet, &format!("wrote {}", path.display()));
    Ok(())
}

fn rescale(cmd: &Command, input: &Path, a: f64, b: f64) -> moment_ensemble::Result<()> {
    let m = read_moments_file(input)?;
    let bounds = vec![(a, b); m.param_dim()];
    let rescaled = rescale_moments_box(&m, &bounds)?;
    let path = write_moments_file(&rescaled, &output_dir(cmd), "rescaled.csv")?;
    say(
        cmd.quiet,
        &format!("rescaled unit-interval moments onto [{a}, {b}] per axis"),
    );
    say(cmd.quiet, &format!("wrote {}", path.display()));
    Ok(())
}
