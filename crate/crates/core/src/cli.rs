//! The `cgthermo` command-line front end.
//!
//! Settings come from an optional `key = value` file (`--config`) and are
//! overridden by flags. Exit status is 0 on success, 1 for a bad
//! configuration and 2 when a computed invariant fails.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{ArgGroup, Parser, ValueEnum};
use serde::Serialize;

use crate::experiments::{
    force_grid, force_sweep, grid_csv, noninvasive_csv, noninvasive_sweep, thermal_states,
    work_distributions, ForceSweep, NoninvasiveRow, OscillatorSetup, SlotRule, ThermalStates,
    WorkDistributions,
};
use crate::plot::{line_plot, Series};
use crate::suites::{run_all, InvariantResult, SuiteOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    States,
    SweepForce,
    Distributions,
    Noninvasive,
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::States => "states",
            Command::SweepForce => "sweep-force",
            Command::Distributions => "distributions",
            Command::Noninvasive => "noninvasive",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Parser)]
#[command(
    name = "cgthermo",
    version,
    about = "Coarse-grained quantum thermodynamics of a driven oscillator"
)]
#[command(group(ArgGroup::new("temperature").args(["beta", "temp"])))]
#[command(group(ArgGroup::new("force").args(["f", "f_range"])))]
#[command(group(ArgGroup::new("resolution").args(["alpha", "delta_eps", "slots"])))]
pub struct Args {
    pub command: Command,
    /// `key = value` file with the same keys as the long flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub hbar: Option<f64>,
    #[arg(long)]
    pub kb: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub temp: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub f: Option<f64>,
    /// `start:stop:step`, stop inclusive.
    #[arg(long = "f-range", allow_hyphen_values = true)]
    pub f_range: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub tau: Option<f64>,
    /// Resolution as a multiple of the level spacing.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long = "delta-eps", allow_negative_numbers = true)]
    pub delta_eps: Option<f64>,
    /// Comma-separated slot sizes in ascending-energy order.
    #[arg(long)]
    pub slots: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// verify only: shift every coarse level before the consistency check.
    #[arg(long = "perturb-energies", allow_negative_numbers = true)]
    pub perturb_energies: Option<f64>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Invariant(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant failure: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Invariant(_) => 2,
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

fn config_err(m: impl Into<String>) -> CliError {
    CliError::Config(m.into())
}

/// Settings before defaults are applied.
#[derive(Debug, Clone, Default)]
struct Settings {
    levels: Option<usize>,
    omega: Option<f64>,
    hbar: Option<f64>,
    kb: Option<f64>,
    beta: Option<f64>,
    temp: Option<f64>,
    f: Option<f64>,
    f_range: Option<String>,
    tau: Option<f64>,
    alpha: Option<f64>,
    delta_eps: Option<f64>,
    slots: Option<String>,
    out: Option<PathBuf>,
    format: Option<Format>,
    seed: Option<u64>,
    perturb_energies: Option<f64>,
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| config_err(format!("cannot parse `{key} = {v}`")))
}

impl Settings {
    fn from_args(a: &Args) -> Self {
        Self {
            levels: a.levels,
            omega: a.omega,
            hbar: a.hbar,
            kb: a.kb,
            beta: a.beta,
            temp: a.temp,
            f: a.f,
            f_range: a.f_range.clone(),
            tau: a.tau,
            alpha: a.alpha,
            delta_eps: a.delta_eps,
            slots: a.slots.clone(),
            out: a.out.clone(),
            format: a.format,
            seed: a.seed,
            perturb_energies: a.perturb_energies,
        }
    }

    /// Parses `key = value` lines; `#` starts a comment, `_` and `-` are
    /// interchangeable in keys.
    fn from_file_text(text: &str) -> Result<Self, CliError> {
        let mut s = Settings::default();
        let mut seen = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected `key = value`", n + 1)))?;
            let key = k.trim().to_ascii_lowercase().replace('_', "-");
            let v = v.trim();
            if seen.insert(key.clone(), n).is_some() {
                return Err(config_err(format!("line {}: duplicate key `{key}`", n + 1)));
            }
            match key.as_str() {
                "levels" => s.levels = Some(parse_value(&key, v)?),
                "omega" => s.omega = Some(parse_value(&key, v)?),
                "hbar" => s.hbar = Some(parse_value(&key, v)?),
                "kb" => s.kb = Some(parse_value(&key, v)?),
                "beta" => s.beta = Some(parse_value(&key, v)?),
                "temp" => s.temp = Some(parse_value(&key, v)?),
                "f" => s.f = Some(parse_value(&key, v)?),
                "f-range" => s.f_range = Some(v.to_string()),
                "tau" => s.tau = Some(parse_value(&key, v)?),
                "alpha" => s.alpha = Some(parse_value(&key, v)?),
                "delta-eps" => s.delta_eps = Some(parse_value(&key, v)?),
                "slots" => s.slots = Some(v.to_string()),
                "out" => s.out = Some(PathBuf::from(v)),
                "format" => {
                    s.format = Some(
                        Format::from_str(v, true)
                            .map_err(|_| config_err(format!("unknown format `{v}`")))?,
                    )
                }
                "seed" => s.seed = Some(parse_value(&key, v)?),
                "perturb-energies" => s.perturb_energies = Some(parse_value(&key, v)?),
                _ => return Err(config_err(format!("line {}: unknown key `{key}`", n + 1))),
            }
        }
        for group in [
            &["beta", "temp"][..],
            &["f", "f-range"][..],
            &["alpha", "delta-eps", "slots"][..],
        ] {
            let given: Vec<&str> = group
                .iter()
                .copied()
                .filter(|k| seen.contains_key(*k))
                .collect();
            if given.len() > 1 {
                return Err(config_err(format!(
                    "config sets more than one of {given:?}"
                )));
            }
        }
        Ok(s)
    }

    /// `self` overridden by `flags`. Setting one member of a mutually
    /// exclusive group on the command line discards the file's choice.
    fn overlay(mut self, flags: Settings) -> Self {
        if flags.beta.is_some() || flags.temp.is_some() {
            self.beta = flags.beta;
            self.temp = flags.temp;
        }
        if flags.f.is_some() || flags.f_range.is_some() {
            self.f = flags.f;
            self.f_range = flags.f_range;
        }
        if flags.alpha.is_some() || flags.delta_eps.is_some() || flags.slots.is_some() {
            self.alpha = flags.alpha;
            self.delta_eps = flags.delta_eps;
            self.slots = flags.slots;
        }
        macro_rules! take {
            ($($field:ident),*) => {$( if flags.$field.is_some() { self.$field = flags.$field; } )*};
        }
        take!(
            levels,
            omega,
            hbar,
            kb,
            tau,
            out,
            format,
            seed,
            perturb_energies
        );
        self
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub setup: OscillatorSetup,
    pub kb: f64,
    pub forces: Vec<f64>,
    #[serde(skip)]
    pub out: PathBuf,
    pub format: Format,
    pub seed: u64,
    pub perturb_energies: f64,
}

pub const DEFAULT_SEED: u64 = 2024;

fn parse_range(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(config_err(format!("f-range `{s}` must be start:stop:step")));
    }
    let v: Vec<f64> = parts
        .iter()
        .map(|p| parse_value("f-range", p.trim()))
        .collect::<Result<_, _>>()?;
    Ok(force_grid(v[0], v[1], v[2])?)
}

fn parse_slots(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|p| parse_value("slots", p.trim()))
        .collect()
}

impl ExperimentConfig {
    fn resolve(command: Command, s: Settings) -> Result<Self, CliError> {
        let oscillator = !matches!(command, Command::Verify);
        let (levels, beta_default, force_default) = match command {
            Command::States => (12, None, vec![0.0]),
            Command::SweepForce | Command::Noninvasive => {
                (12, Some(1.0), force_grid(0.0, 9.5, 0.5)?)
            }
            Command::Distributions => (24, Some(0.25), vec![3.8]),
            Command::Verify => (12, Some(1.0), vec![0.0]),
        };
        let kb = s.kb.unwrap_or(1.0);
        if !(kb.is_finite() && kb > 0.0) {
            return Err(config_err(format!("kb must be positive, got {kb}")));
        }
        let beta = match (s.beta, s.temp) {
            (Some(b), _) => b,
            (None, Some(t)) => {
                if !(t.is_finite() && t > 0.0) {
                    return Err(config_err(format!("temp must be positive, got {t}")));
                }
                1.0 / (kb * t)
            }
            // the thermal-state figure is drawn at T = 10
            (None, None) => beta_default.unwrap_or(1.0 / (kb * 10.0)),
        };
        let forces = match (s.f, &s.f_range) {
            (Some(f), _) => vec![f],
            (None, Some(r)) => {
                if matches!(command, Command::Distributions | Command::States) {
                    return Err(config_err(format!(
                        "{} takes a single --f, not --f-range",
                        command.name()
                    )));
                }
                parse_range(r)?
            }
            (None, None) => force_default,
        };
        if forces.iter().any(|f| !f.is_finite()) {
            return Err(config_err("forces must be finite"));
        }
        let slots = match (s.alpha, s.delta_eps, &s.slots) {
            (Some(a), _, _) => SlotRule::Alpha(a),
            (_, Some(d), _) => SlotRule::DeltaEps(d),
            (_, _, Some(list)) => SlotRule::Sizes(parse_slots(list)?),
            _ => SlotRule::default(),
        };
        let setup = OscillatorSetup {
            levels: s.levels.unwrap_or(levels),
            omega: s.omega.unwrap_or(2.0),
            hbar: s.hbar.unwrap_or(1.0),
            beta,
            tau: s.tau.unwrap_or(1.0),
            slots,
        };
        if oscillator {
            setup.validate()?;
        }
        let perturb_energies = s.perturb_energies.unwrap_or(0.0);
        if !perturb_energies.is_finite() {
            return Err(config_err("perturb-energies must be finite"));
        }
        Ok(Self {
            command,
            setup,
            kb,
            forces,
            out: s.out.unwrap_or_else(|| PathBuf::from(".")),
            format: s.format.unwrap_or_default(),
            seed: s.seed.unwrap_or(DEFAULT_SEED),
            perturb_energies,
        })
    }

    pub fn from_args(args: &Args) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| config_err(format!("cannot read {}: {e}", p.display())))?;
                Settings::from_file_text(&text)?
            }
            None => Settings::default(),
        };
        Self::resolve(args.command, file.overlay(Settings::from_args(args)))
    }
}

/// Files written by a run and the invariant failures found, if any.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Io(format!("cannot serialize {name}: {e}")))?;
        s.push('\n');
        self.write(name, &s)
    }
}

#[derive(Serialize)]
struct Bundle<'a, T: Serialize> {
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    result: T,
}

#[derive(Serialize)]
struct StatesSummary<'a> {
    levels: usize,
    beta: f64,
    partition: &'a crate::coarse::PartitionRecord,
    fine_populations: &'a [f64],
    slot_probabilities: &'a [f64],
    free_energy: f64,
    coarse_free_energy: f64,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    points: usize,
    crossover: Option<f64>,
    sign_changes: &'a [crate::experiments::SignChange],
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    seed: u64,
    pass: bool,
    invariants: &'a [InvariantResult],
}

/// Largest `|β W_diss − S|` in a sweep.
fn identity_residual(beta: f64, rows: &[crate::experiments::SweepRow]) -> f64 {
    rows.iter()
        .flat_map(|r| {
            [
                (beta * r.w_diss_fine - r.s_rel_fine).abs(),
                (beta * r.w_diss_coarse - r.s_rel_coarse).abs(),
            ]
        })
        .fold(0.0, f64::max)
}

fn states(cfg: &ExperimentConfig, w: &mut Writer, out: &mut Outcome) -> Result<(), CliError> {
    let st: ThermalStates = thermal_states(&cfg.setup)?;
    let gap = (st.free_energy - st.coarse_free_energy).abs();
    if gap > 1e-10 {
        out.failures
            .push(format!("coarse free energy differs from fine by {gap:e}"));
    }
    if cfg.format == Format::Json {
        return w.json(
            "states.json",
            &Bundle {
                config: cfg,
                result: &st,
            },
        );
    }
    let n = st.fine.dim;
    w.write("fine_re.csv", &grid_csv(n, &st.fine.re))?;
    w.write("fine_im.csv", &grid_csv(n, &st.fine.im))?;
    w.write("coarse_re.csv", &grid_csv(n, &st.coarse.re))?;
    w.write("coarse_im.csv", &grid_csv(n, &st.coarse.im))?;
    w.json(
        "slots.json",
        &StatesSummary {
            levels: n,
            beta: st.beta,
            partition: &st.partition,
            fine_populations: &st.fine_populations,
            slot_probabilities: &st.slot_probabilities,
            free_energy: st.free_energy,
            coarse_free_energy: st.coarse_free_energy,
        },
    )?;
    if cfg.format == Format::Svg {
        let diag = |m: &[f64]| (0..n).map(|i| (i as f64, m[i * n + i])).collect::<Vec<_>>();
        w.write(
            "states.svg",
            &line_plot(
                "Thermal populations",
                "level",
                "population",
                &[
                    Series::line("fine", diag(&st.fine.re)),
                    Series::line("coarse", diag(&st.coarse.re)),
                ],
            ),
        )?;
    }
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, w: &mut Writer, out: &mut Outcome) -> Result<(), CliError> {
    let sw: ForceSweep = force_sweep(&cfg.setup, &cfg.forces)?;
    let res = identity_residual(cfg.setup.beta, &sw.rows);
    if res > 1e-9 {
        out.failures.push(format!(
            "dissipation/relative-entropy identity off by {res:e}"
        ));
    }
    if let Some(r) = sw
        .rows
        .iter()
        .find(|r| r.w_diss_fine < -1e-9 || r.w_diss_coarse < -1e-9)
    {
        out.failures
            .push(format!("negative dissipated work at f = {}", r.f));
    }
    if cfg.format == Format::Json {
        return w.json(
            "sweep_force.json",
            &Bundle {
                config: cfg,
                result: &sw,
            },
        );
    }
    w.write("sweep_force.csv", &sw.to_csv())?;
    w.json(
        "sweep_force_summary.json",
        &SweepSummary {
            points: sw.rows.len(),
            crossover: sw.crossover,
            sign_changes: &sw.sign_changes,
        },
    )?;
    if cfg.format == Format::Svg {
        let col = |g: fn(&crate::experiments::SweepRow) -> f64| {
            sw.rows.iter().map(|r| (r.f, g(r))).collect::<Vec<_>>()
        };
        w.write(
            "sweep_force.svg",
            &line_plot(
                "Dissipated work",
                "f",
                "W_diss",
                &[
                    Series::line("fine", col(|r| r.w_diss_fine)),
                    Series::line("coarse", col(|r| r.w_diss_coarse)),
                ],
            ),
        )?;
    }
    Ok(())
}

fn distributions(
    cfg: &ExperimentConfig,
    w: &mut Writer,
    out: &mut Outcome,
) -> Result<(), CliError> {
    let d: WorkDistributions = work_distributions(&cfg.setup, cfg.forces[0])?;
    for (name, r) in [("fine", &d.fine_report), ("coarse", &d.coarse_report)] {
        if !r.passes() {
            out.failures.push(format!(
                "{name} fluctuation relations: |J-1| = {:e}, crooks = {:e}, dF error = {:e}, one-sided = {}",
                (r.jarzynski_value - 1.0).abs(),
                r.max_crooks_log_residual,
                r.max_delta_f_error,
                r.one_sided.len()
            ));
        }
    }
    if cfg.format == Format::Json {
        return w.json(
            "distributions.json",
            &Bundle {
                config: cfg,
                result: &d,
            },
        );
    }
    w.write("work_fine_forward.csv", &d.fine_forward.to_csv())?;
    w.write("work_fine_reverse.csv", &d.fine_reverse.to_csv())?;
    w.write("work_coarse_forward.csv", &d.coarse_forward.to_csv())?;
    w.write("work_coarse_reverse.csv", &d.coarse_reverse.to_csv())?;
    w.write("crooks_fine.csv", &d.fine_report.to_csv())?;
    w.write("crooks_coarse.csv", &d.coarse_report.to_csv())?;
    w.json(
        "ft_report.json",
        &serde_json::json!({
            "f": d.f,
            "beta": d.beta,
            "delta_f": d.delta_f,
            "delta_f_untruncated": d.delta_f_untruncated,
            "fine": &d.fine_report,
            "coarse": &d.coarse_report,
        }),
    )?;
    if cfg.format == Format::Svg {
        let pts = |wd: &crate::tpm::WorkDistribution| {
            wd.atoms.iter().map(|a| (a.w, a.p)).collect::<Vec<_>>()
        };
        w.write(
            "distributions.svg",
            &line_plot(
                "Coarse work distributions",
                "W",
                "probability",
                &[
                    Series::scatter("forward P(W)", pts(&d.coarse_forward)),
                    Series::scatter("reverse P(-W)", pts(&d.coarse_reverse)),
                ],
            ),
        )?;
    }
    Ok(())
}

fn noninvasive(cfg: &ExperimentConfig, w: &mut Writer, out: &mut Outcome) -> Result<(), CliError> {
    let rows: Vec<NoninvasiveRow> = noninvasive_sweep(&cfg.setup, &cfg.forces)?;
    let beta = cfg.setup.beta;
    for r in &rows {
        let id = (beta * r.w_diss_fine - r.s_rel_fine).abs();
        if id > 1e-9 {
            out.failures
                .push(format!("f = {}: fine identity off by {id:e}", r.f));
        }
        if r.s_rel_noninvasive > r.s_rel_fine + 1e-9 {
            out.failures
                .push(format!("f = {}: contractivity violated", r.f));
        }
        if r.crooks_invasive > 1e-10 {
            out.failures.push(format!(
                "f = {}: invasive Crooks residual {:e}",
                r.f, r.crooks_invasive
            ));
        }
    }
    if cfg.format == Format::Json {
        return w.json(
            "noninvasive.json",
            &Bundle {
                config: cfg,
                result: &rows,
            },
        );
    }
    w.write("noninvasive.csv", &noninvasive_csv(&rows))?;
    if cfg.format == Format::Svg {
        let col =
            |g: fn(&NoninvasiveRow) -> f64| rows.iter().map(|r| (r.f, g(r))).collect::<Vec<_>>();
        w.write(
            "noninvasive.svg",
            &line_plot(
                "Dissipation and relative entropy",
                "f",
                "nats",
                &[
                    Series::line("beta W_diss non-invasive", col(|r| r.w_diss_noninvasive)),
                    Series::line("S_rel non-invasive", col(|r| r.s_rel_noninvasive)),
                    Series::line("beta W_diss invasive", col(|r| r.w_diss_invasive)),
                    Series::line("S_rel invasive", col(|r| r.s_rel_invasive)),
                ],
            ),
        )?;
    }
    Ok(())
}

fn verify(cfg: &ExperimentConfig, w: &mut Writer, out: &mut Outcome) -> Result<(), CliError> {
    let opts = SuiteOptions {
        perturb_energies: cfg.perturb_energies,
        ..SuiteOptions::default()
    };
    let results = run_all(cfg.seed, &opts)?;
    for r in results.iter().filter(|r| !r.pass) {
        out.failures.push(format!(
            "{}: max residual {:e} > {:e}",
            r.name, r.max_residual, r.tolerance
        ));
    }
    w.json(
        "verify.json",
        &VerifyReport {
            seed: cfg.seed,
            pass: out.failures.is_empty(),
            invariants: &results,
        },
    )
}

/// Runs a resolved configuration, writing into `cfg.out`.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    fs::create_dir_all(&cfg.out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", cfg.out.display())))?;
    let mut w = Writer {
        dir: &cfg.out,
        files: Vec::new(),
    };
    let mut out = Outcome::default();
    match cfg.command {
        Command::States => states(cfg, &mut w, &mut out)?,
        Command::SweepForce => sweep(cfg, &mut w, &mut out)?,
        Command::Distributions => distributions(cfg, &mut w, &mut out)?,
        Command::Noninvasive => noninvasive(cfg, &mut w, &mut out)?,
        Command::Verify => verify(cfg, &mut w, &mut out)?,
    }
    out.files = w.files;
    Ok(out)
}

/// Parses `argv`, runs, reports on stdout/stderr and returns the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = ExperimentConfig::from_args(&args).and_then(|cfg| execute(&cfg));
    match result {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.failures.is_empty() {
                0
            } else {
                for m in &outcome.failures {
                    eprintln!("{}", CliError::Invariant(m.clone()));
                }
                2
            }
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(argv: &[&str], file: &str) -> Result<ExperimentConfig, CliError> {
        let args = Args::try_parse_from(std::iter::once("cgthermo").chain(argv.iter().copied()))
            .map_err(|e| config_err(e.to_string()))?;
        let s = Settings::from_file_text(file)?.overlay(Settings::from_args(&args));
        ExperimentConfig::resolve(args.command, s)
    }

    #[test]
    fn command_defaults() {
        let c = resolve(&["states"], "").unwrap();
        assert_eq!(c.setup.levels, 12);
        assert!((c.setup.beta - 0.1).abs() < 1e-15);
        assert_eq!(c.setup.slots, SlotRule::Alpha(3.0));
        let c = resolve(&["sweep-force"], "").unwrap();
        assert_eq!(c.forces.len(), 20);
        assert_eq!(c.setup.beta, 1.0);
        let c = resolve(&["distributions"], "").unwrap();
        assert_eq!(
            (c.setup.levels, c.setup.beta, c.forces.clone()),
            (24, 0.25, vec![3.8])
        );
        assert_eq!(resolve(&["verify"], "").unwrap().seed, DEFAULT_SEED);
    }

    #[test]
    fn flags_override_file() {
        let file = "# comment\nlevels = 8\ntemp = 2\nalpha = 2\nf_range = 0:1:0.5\n";
        let c = resolve(&["sweep-force"], file).unwrap();
        assert_eq!(c.setup.levels, 8);
        assert_eq!(c.setup.beta, 0.5);
        assert_eq!(c.forces, vec![0.0, 0.5, 1.0]);
        let c = resolve(
            &["sweep-force", "--beta", "3", "--slots", "4,4", "--f", "2"],
            file,
        )
        .unwrap();
        assert_eq!(c.setup.beta, 3.0);
        assert_eq!(c.setup.slots, SlotRule::Sizes(vec![4, 4]));
        assert_eq!(c.forces, vec![2.0]);
        let c = resolve(&["states", "--temp", "4", "--kb", "0.5"], "").unwrap();
        assert_eq!(c.setup.beta, 0.5);
    }

    #[test]
    fn bad_configs_are_rejected() {
        for (argv, file) in [
            (&["states", "--beta", "1", "--temp", "1"][..], ""),
            (&["states", "--alpha", "1", "--slots", "12"][..], ""),
            (&["states"][..], "beta = 1\ntemp = 1\n"),
            (&["states"][..], "colour = red\n"),
            (&["states"][..], "levels = twelve\n"),
            (&["states"][..], "levels = 3\nlevels = 4\n"),
            (&["states", "--slots", "3,3"][..], ""),
            (&["states", "--beta", "-1"][..], ""),
            (&["sweep-force", "--f-range", "1:0:0.5"][..], ""),
            (&["sweep-force", "--f-range", "0:1:0"][..], ""),
            (&["sweep-force", "--f-range", "0:1"][..], ""),
            (&["distributions", "--f-range", "0:1:1"][..], ""),
            (&["states", "--levels", "1"][..], ""),
        ] {
            let e = resolve(argv, file).unwrap_err();
            assert_eq!(e.exit_code(), 1, "{argv:?} {file:?}");
        }
    }

    #[test]
    fn help_and_usage_exit_codes() {
        assert_eq!(main_with_args(["cgthermo", "--help"]), 0);
        assert_eq!(main_with_args(["cgthermo", "--version"]), 0);
        assert_eq!(main_with_args(["cgthermo", "frobnicate"]), 1);
        assert_eq!(main_with_args(["cgthermo", "states", "--levels", "x"]), 1);
    }
}
