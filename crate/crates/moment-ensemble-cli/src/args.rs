//! Hand-rolled argument parsing for the `moment-ensemble` binary.

use std::path::PathBuf;

/// Usage problem: printed with the usage text, exit status 2.
#[derive(Debug, PartialEq)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const USAGE: &str = "\
usage: moment-ensemble <command> [options]

commands:
  simulate <preset|config-path>     run a scenario and write its CSV reports
                                    (presets: bloch-paper, nonlinear-paper,
                                    output-moment-demo)
  moments <profile-csv>             moments of a profile CSV
      --order <N>                   truncation order (default 10)
      --output-moments              state moments instead of label moments
  check-hausdorff <moments-csv>     evaluate a moment-solvability condition
      --up-to <n>                   per-axis test range (default fits file)
      --l1 | --l2                   condition form (default --l2)
  invert <moments-csv>              lattice density reconstruction
      --grid <n>                    lattice size (default 10)
  rescale <moments-csv> --a <a> --b <b>
                                    push unit-interval moments onto [a, b]

global options:
  --out <dir>      output directory (default $MOMENT_ENSEMBLE_OUT or ./out)
  --dt <x>         override the scenario time step
  --T <x>          override the scenario horizon
  --grid-points <n>  override the scenario grid size
  --quiet          suppress non-error output
";

#[derive(Debug, Clone, PartialEq)]
pub enum HausdorffForm {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Subcommand {
    Simulate {
        source: String,
    },
    Moments {
        input: PathBuf,
        order: usize,
        output_moments: bool,
    },
    CheckHausdorff {
        input: PathBuf,
        up_to: Option<usize>,
        form: HausdorffForm,
    },
    Invert {
        input: PathBuf,
        grid: usize,
    },
    Rescale {
        input: PathBuf,
        a: f64,
        b: f64,
    },
}

/// Parsed command line: one subcommand plus the global flags.
#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub sub: Subcommand,
    pub out: Option<PathBuf>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub grid_points: Option<usize>,
    pub quiet: bool,
}

fn take_value<'a>(
    flag: &str,
    it: &mut std::slice::Iter<'a, String>,
) -> Result<&'a String, UsageError> {
    it.next()
        .ok_or_else(|| UsageError(format!("flag '{flag}' needs a value")))
}

fn parse_num<T: std::str::FromStr>(flag: &str, token: &str) -> Result<T, UsageError> {
    token
        .parse::<T>()
        .map_err(|_| UsageError(format!("flag '{flag}': malformed number '{token}'")))
}

/// Validates argv into a [`Command`].
pub fn parse_args(args: &[String]) -> Result<Command, UsageError> {
    let mut it = args.iter();
    let name = it
        .next()
        .ok_or_else(|| UsageError("missing command".into()))?;

    // Collect positionals and per-command flags in one pass.
    let mut positionals: Vec<&String> = Vec::new();
    let mut out = None;
    let mut dt = None;
    let mut horizon = None;
    let mut grid_points = None;
    let mut quiet = false;
    let mut order: Option<usize> = None;
    let mut output_moments = false;
    let mut up_to: Option<usize> = None;
    let mut form: Option<HausdorffForm> = None;
    let mut grid: Option<usize> = None;
    let mut a: Option<f64> = None;
    let mut b: Option<f64> = None;

    while let Some(tok) = it.next() {
        match tok.as_str() {
            "--out" => out = Some(PathBuf::from(take_value("--out", &mut it)?)),
            "--dt" => dt = Some(parse_num("--dt", take_value("--dt", &mut it)?)?),
            "--T" => horizon = Some(parse_num("--T", take_value("--T", &mut it)?)?),
            "--grid-points" => {
                grid_points = Some(parse_num(
                    "--grid-points",
                    take_value("--grid-points", &mut it)?,
                )?)
            }
            "--quiet" => quiet = true,
            "--order" => order = Some(parse_num("--order", take_value("--order", &mut it)?)?),
            "--output-moments" => output_moments = true,
            "--up-to" => up_to = Some(parse_num("--up-to", take_value("--up-to", &mut it)?)?),
            "--l1" => form = Some(HausdorffForm::L1),
            "--l2" => form = Some(HausdorffForm::L2),
            "--grid" => grid = Some(parse_num("--grid", take_value("--grid", &mut it)?)?),
            "--a" => a = Some(parse_num("--a", take_value("--a", &mut it)?)?),
            "--b" => b = Some(parse_num("--b", take_value("--b", &mut it)?)?),
            other if other.starts_with("--") => {
                return Err(UsageError(format!("unknown flag '{other}'")));
            }
            _ => positionals.push(tok),
        }
    }

    let one_positional = |what: &str| -> Result<&String, UsageError> {
        match positionals.as_slice() {
            [p] => Ok(p),
            [] => Err(UsageError(format!("'{name}' needs {what}"))),
            _ => Err(UsageError(format!(
                "unexpected argument '{}'",
                positionals[1]
            ))),
        }
    };

    let reject = |flag: &str, set: bool| -> Result<(), UsageError> {
        if set {
            Err(UsageError(format!("flag '{flag}' does not apply to '{name}'")))
        } else {
            Ok(())
        }
    };

    let sub = match name.as_str() {
        "simulate" => {
            reject("--order", order.is_some())?;
            reject("--output-moments", output_moments)?;
            reject("--up-to", up_to.is_some())?;
            reject("--l1/--l2", form.is_some())?;
            reject("--grid", grid.is_some())?;
            reject("--a/--b", a.is_some() || b.is_some())?;
            Subcommand::Simulate {
                source: one_positional("a preset name or config path")?.clone(),
            }
        }
        "moments" => {
            reject("--up-to", up_to.is_some())?;
            reject("--l1/--l2", form.is_some())?;
            reject("--grid", grid.is_some())?;
            reject("--a/--b", a.is_some() || b.is_some())?;
            Subcommand::Moments {
                input: PathBuf::from(one_positional("a profile CSV path")?),
                order: order.unwrap_or(10),
                output_moments,
            }
        }
        "check-hausdorff" => {
            reject("--order", order.is_some())?;
            reject("--output-moments", output_moments)?;
            reject("--grid", grid.is_some())?;
            reject("--a/--b", a.is_some() || b.is_some())?;
            Subcommand::CheckHausdorff {
                input: PathBuf::from(one_positional("a moments CSV path")?),
                up_to,
                form: form.unwrap_or(HausdorffForm::L2),
            }
        }
        "invert" => {
            reject("--order", order.is_some())?;
            reject("--output-moments", output_moments)?;
            reject("--up-to", up_to.is_some())?;
            reject("--l1/--l2", form.is_some())?;
            reject("--a/--b", a.is_some() || b.is_some())?;
            Subcommand::Invert {
                input: PathBuf::from(one_positional("a moments CSV path")?),
                grid: grid.unwrap_or(10),
            }
        }
        "rescale" => {
            reject("--order", order.is_some())?;
            reject("--output-moments", output_moments)?;
            reject("--up-to", up_to.is_some())?;
            reject("--l1/--l2", form.is_some())?;
            reject("--grid", grid.is_some())?;
            let a = a.ok_or_else(|| UsageError("'rescale' needs --a".into()))?;
            let b = b.ok_or_else(|| UsageError("'rescale' needs --b".into()))?;
            if !(b > a) {
                return Err(UsageError(format!("b must exceed a, got [{a}, {b}]")));
            }
            Subcommand::Rescale {
                input: PathBuf::from(one_positional("a moments CSV path")?),
                a,
                b,
            }
        }
        other => {
            return Err(UsageError(format!("unknown command '{other}'")));
        }
    };

    Ok(Command {
        sub,
        out,
        dt,
        horizon,
        grid_points,
        quiet,
    })
}
