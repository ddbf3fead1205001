//! Command-line front end: flag handling, the key=value experiment file
//! format, and the two tasks behind the binary.
//!
//! `--task estimate` reads a long-format CSV (see [`crate::ingest`]),
//! runs the full pipeline, and writes `overall.csv`, `dates.csv`,
//! `units.csv`, an optional `curves.csv`, and a human-readable
//! `summary.txt` into the output directory.
//!
//! `--task simulate` reads an experiment file whose `t`, `n` (or `l`),
//! and `rho_f` keys may hold comma-separated lists; every combination
//! becomes one Monte Carlo cell with its own `mc_*.csv` and `mc_*.txt`
//! report. Command-line flags override scalar keys from the file.
//!
//! Every output is a deterministic function of the inputs, so rerunning
//! a command reproduces its files byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::basis::Monomials;
use crate::error::{Error, Result};
use crate::estimands::{counterfactual_curve, CurveControls, CurveScope};
use crate::inference::KernelSpec;
use crate::ingest::{ingest_long_csv, IngestOptions};
use crate::pipeline::{analyze, AnalysisOptions};
use crate::simulation::{DgpMode, DgpSpec, McOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    /// Estimate effects from a long-format CSV panel.
    Estimate,
    /// Run a Monte Carlo experiment from a key=value file.
    Simulate,
}

/// Factor-model average marginal effects and counterfactual curves.
#[derive(Debug, Parser)]
#[command(name = "counterfactor", version)]
pub struct Cli {
    #[arg(long, value_enum)]
    pub task: Task,
    /// Input file: a CSV panel for estimate, an experiment file for
    /// simulate (optional there; flags and defaults fill in).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Directory for output files, created if needed.
    #[arg(long, default_value = "out")]
    pub output_dir: PathBuf,
    /// Polynomial degree of the treatment basis.
    #[arg(long = "J")]
    pub j: Option<usize>,
    /// Covariance kernels, a comma list drawn from hc, qs, parzen.
    #[arg(long, value_delimiter = ',')]
    pub kernel: Vec<String>,
    /// Kernel bandwidth: a positive number, or "auto" to grow with the
    /// sample.
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// Cap on the number of factors considered during rank selection.
    #[arg(long)]
    pub rmax: Option<usize>,
    /// Confidence level in (0, 1).
    #[arg(long)]
    pub level: Option<f64>,
    /// Experiment seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo replications per cell.
    #[arg(long)]
    pub replications: Option<usize>,
    /// Column-center the panel before factor extraction.
    #[arg(long)]
    pub center_x: bool,
    /// Treatment values at which to evaluate counterfactual curves.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub grid: Vec<f64>,
    /// Columns to use as every unit's controls, or "none" for no
    /// controls; the default is each unit's own series. With a single
    /// unit the default is degenerate (the factors live in the span of
    /// its series), so pick a subset or "none" there.
    #[arg(long, value_delimiter = ',')]
    pub controls: Vec<String>,
    /// Append a constant to every unit's controls.
    #[arg(long)]
    pub add_const_control: bool,
}

/// Run the task a parsed command line asks for.
pub fn run(cli: &Cli) -> Result<()> {
    match cli.task {
        Task::Estimate => run_estimate(cli),
        Task::Simulate => run_simulate(cli),
    }
}

fn parse_bandwidth(text: &str) -> Result<Option<f64>> {
    let text = text.trim();
    if text.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    let b: f64 = text
        .parse()
        .map_err(|_| Error::Config(format!("bandwidth must be a number or \"auto\", got {text:?}")))?;
    if !b.is_finite() || b <= 0.0 {
        return Err(Error::Config(format!("bandwidth must be positive, got {text}")));
    }
    Ok(Some(b))
}

fn parse_kernels(labels: &[String], bandwidth: Option<&str>) -> Result<Vec<KernelSpec>> {
    let labels: Vec<&str> = if labels.is_empty() {
        vec!["hc", "qs", "parzen"]
    } else {
        labels.iter().map(|s| s.as_str()).collect()
    };
    let fixed = match bandwidth {
        Some(text) => parse_bandwidth(text)?,
        None => None,
    };
    let mut kernels = Vec::with_capacity(labels.len());
    for label in labels {
        let spec = KernelSpec::parse(label)?;
        kernels.push(match fixed {
            Some(b) => spec.with_bandwidth(b),
            None => spec,
        });
    }
    Ok(kernels)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("cannot create {}: {e}", dir.display()))))
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    std::fs::write(dir.join(name), content)?;
    Ok(())
}

fn check_degree(degree: usize) -> Result<usize> {
    if degree == 0 {
        return Err(Error::Config("J must be at least 1; the basis cannot be empty".into()));
    }
    Ok(degree)
}

fn run_estimate(cli: &Cli) -> Result<()> {
    let input = cli
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("estimate needs --input pointing at a CSV panel".into()))?;
    let degree = check_degree(cli.j.unwrap_or(1))?;
    let basis = Monomials::new(degree)?;
    let kernels = parse_kernels(&cli.kernel, cli.bandwidth.as_deref())?;

    let control_columns = match cli.controls.as_slice() {
        [] => None,
        [only] if only == "none" => Some(Vec::new()),
        picked => Some(picked.to_vec()),
    };
    let ingested = ingest_long_csv(
        input,
        &IngestOptions {
            control_columns,
            add_const: cli.add_const_control,
            ..Default::default()
        },
    )?;
    let opts = AnalysisOptions {
        r_max: cli.rmax,
        center: cli.center_x,
        level: cli.level.unwrap_or(0.95),
        kernels,
        unit_labels: Some(ingested.meta.unit_ids.clone()),
        ..Default::default()
    };
    let analysis = analyze(&ingested.panel, &ingested.units, &basis, &opts)?;

    let meta = &ingested.meta;
    let n = ingested.units.len();
    let t = ingested.panel.n_dates();

    let mut overall = String::from("kernel,estimate,std_error,lower,upper,level\n");
    for ci in &analysis.overall_cis {
        writeln!(
            overall,
            "{},{},{},{},{},{}",
            ci.kernel_label(),
            ci.point,
            ci.std_error,
            ci.lower,
            ci.upper,
            ci.level
        )
        .expect("string write");
    }

    let mut dates = String::from("time,estimate,std_error,lower,upper\n");
    for (idx, date) in meta.dates.iter().enumerate() {
        if analysis.date_cis.is_empty() {
            // a single unit carries no cross-section spread, so only the
            // point is reported
            writeln!(dates, "{},{},,,", date, analysis.estimands.date_effects[idx])
                .expect("string write");
        } else {
            let ci = &analysis.date_cis[idx];
            writeln!(dates, "{},{},{},{},{}", date, ci.point, ci.std_error, ci.lower, ci.upper)
                .expect("string write");
        }
    }

    let mut units = String::from("unit,kernel,estimate,std_error,lower,upper\n");
    for (i, id) in meta.unit_ids.iter().enumerate() {
        for ci in &analysis.unit_cis[i] {
            writeln!(
                units,
                "{},{},{},{},{},{}",
                id,
                ci.kernel_label(),
                ci.point,
                ci.std_error,
                ci.lower,
                ci.upper
            )
            .expect("string write");
        }
    }

    create_dir(&cli.output_dir)?;
    write_file(&cli.output_dir, "overall.csv", &overall)?;
    write_file(&cli.output_dir, "dates.csv", &dates)?;
    write_file(&cli.output_dir, "units.csv", &units)?;

    let mut extra_outputs = String::new();
    if !cli.grid.is_empty() {
        let mut curves = String::from("d,scope,estimate\n");
        let overall_curve = counterfactual_curve(
            CurveScope::Overall,
            &cli.grid,
            &analysis.factor,
            &analysis.unit_fits,
            &ingested.units,
            &basis,
            CurveControls::default(),
        )?;
        for (d, value) in &overall_curve {
            writeln!(curves, "{d},overall,{value}").expect("string write");
        }
        for (i, id) in meta.unit_ids.iter().enumerate() {
            let unit_curve = counterfactual_curve(
                CurveScope::Unit(i),
                &cli.grid,
                &analysis.factor,
                &analysis.unit_fits,
                &ingested.units,
                &basis,
                CurveControls::default(),
            )?;
            for (d, value) in &unit_curve {
                writeln!(curves, "{d},{id},{value}").expect("string write");
            }
        }
        write_file(&cli.output_dir, "curves.csv", &curves)?;
        extra_outputs.push_str(", curves.csv");
    }

    let mut summary = String::new();
    writeln!(summary, "panel: {t} dates, {} series, {n} units", ingested.panel.n_series())
        .expect("string write");
    match &analysis.growth_ratios {
        Some(profile) => {
            writeln!(summary, "rank: {} factors selected by growth ratio", analysis.factor.r_hat)
                .expect("string write");
            if analysis.rank_ambiguous {
                writeln!(
                    summary,
                    "warning: rank selection was ambiguous; consider fixing the rank or widening the panel"
                )
                .expect("string write");
            }
            let ratios: Vec<String> =
                profile.statistics.iter().map(|r| format!("{r:.3}")).collect();
            writeln!(summary, "growth ratios: {}", ratios.join(", ")).expect("string write");
        }
        None => {
            writeln!(summary, "rank: {} factors (fixed)", analysis.factor.r_hat)
                .expect("string write");
        }
    }
    writeln!(summary, "basis: monomials of degree {degree}").expect("string write");
    writeln!(summary, "centering: {}", if cli.center_x { "on" } else { "off" })
        .expect("string write");
    writeln!(summary, "\noverall effect ({}% level):", 100.0 * opts.level).expect("string write");
    writeln!(summary, "  {:<8} {:>10} {:>10} {:>22}", "kernel", "estimate", "std error", "interval")
        .expect("string write");
    for ci in &analysis.overall_cis {
        writeln!(
            summary,
            "  {:<8} {:>10.4} {:>10.4} {:>22}",
            ci.kernel_label(),
            ci.point,
            ci.std_error,
            format!("[{:.4}, {:.4}]", ci.lower, ci.upper),
        )
        .expect("string write");
    }
    writeln!(summary, "\nfiles: overall.csv, dates.csv, units.csv{extra_outputs}")
        .expect("string write");
    write_file(&cli.output_dir, "summary.txt", &summary)?;
    print!("{summary}");
    Ok(())
}

/// Keys an experiment file may define. `t`, `n`, `l`, and `rho_f` accept
/// comma-separated lists; the rest are scalars.
const SIM_KEYS: [&str; 13] = [
    "mode", "t", "n", "l", "rho_f", "j", "replications", "seed", "level", "kernel",
    "bandwidth", "rmax", "eval_date",
];

/// Parse a key=value experiment file: one pair per line, `#` starts a
/// comment, keys may not repeat, unknown keys are rejected.
fn parse_experiment_file(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key = value, got {raw:?}", idx + 1))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !SIM_KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "line {}: unknown key {key:?}; known keys are {}",
                idx + 1,
                SIM_KEYS.join(", ")
            )));
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!("line {}: key {key:?} given twice", idx + 1)));
        }
    }
    Ok(map)
}

fn parse_scalar<T: std::str::FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse {key} value {value:?}")))
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>> {
    value.split(',').map(|piece| parse_scalar(piece, key)).collect()
}

/// One simulation run: the cells to sweep and the options shared by all
/// of them.
#[derive(Debug)]
pub struct SimPlan {
    pub cells: Vec<DgpSpec>,
    pub opts: McOptions,
}

/// Merge the experiment file (if any) with flag overrides into a plan.
pub fn build_sim_plan(cli: &Cli) -> Result<SimPlan> {
    let file = match &cli.input {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Error::Config(format!("cannot read experiment file {}: {e}", path.display()))
            })?;
            parse_experiment_file(&text)?
        }
        None => BTreeMap::new(),
    };

    let ts: Vec<usize> = match file.get("t") {
        Some(v) => parse_list(v, "t")?,
        None => return Err(Error::Config("simulate needs t, a list of panel lengths".into())),
    };
    let ns: Option<Vec<usize>> = file.get("n").map(|v| parse_list(v, "n")).transpose()?;
    let ls: Option<Vec<usize>> = file.get("l").map(|v| parse_list(v, "l")).transpose()?;
    let mode = match file.get("mode").map(|s| s.as_str()) {
        Some("panel") => DgpMode::Panel,
        Some("single") => DgpMode::SingleUnit,
        Some(other) => {
            return Err(Error::Config(format!(
                "mode must be \"panel\" or \"single\", got {other:?}"
            )))
        }
        None => match (&ns, &ls) {
            (Some(_), None) => DgpMode::Panel,
            (None, Some(_)) => DgpMode::SingleUnit,
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "both n and l are set; add mode = panel or mode = single".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "simulate needs n (panel units) or l (single-unit series)".into(),
                ))
            }
        },
    };
    let sizes = match mode {
        DgpMode::Panel => ns.ok_or_else(|| Error::Config("panel mode needs n".into()))?,
        DgpMode::SingleUnit => {
            ls.ok_or_else(|| Error::Config("single mode needs l".into()))?
        }
    };
    if matches!(mode, DgpMode::Panel) && file.contains_key("l") {
        return Err(Error::Config("panel mode sets l = 2n itself; drop the l key".into()));
    }
    if matches!(mode, DgpMode::SingleUnit) && file.contains_key("n") {
        return Err(Error::Config("single mode simulates one unit; drop the n key".into()));
    }
    let rhos: Vec<f64> = match file.get("rho_f") {
        Some(v) => parse_list(v, "rho_f")?,
        None => vec![0.0],
    };

    let degree = match cli.j {
        Some(j) => j,
        None => file.get("j").map(|v| parse_scalar(v, "j")).transpose()?.unwrap_or(1),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => file.get("seed").map(|v| parse_scalar(v, "seed")).transpose()?.unwrap_or(0),
    };
    let replications = match cli.replications {
        Some(r) => r,
        None => file
            .get("replications")
            .map(|v| parse_scalar(v, "replications"))
            .transpose()?
            .unwrap_or(1000),
    };
    let level = match cli.level {
        Some(l) => l,
        None => file.get("level").map(|v| parse_scalar(v, "level")).transpose()?.unwrap_or(0.95),
    };
    let r_max = match cli.rmax {
        Some(r) => Some(r),
        None => file.get("rmax").map(|v| parse_scalar(v, "rmax")).transpose()?,
    };
    let eval_date = file
        .get("eval_date")
        .map(|v| parse_scalar(v, "eval_date"))
        .transpose()?
        .unwrap_or(0);
    let kernel_labels: Vec<String> = if cli.kernel.is_empty() {
        match file.get("kernel") {
            Some(v) => v.split(',').map(|s| s.trim().to_string()).collect(),
            None => Vec::new(),
        }
    } else {
        cli.kernel.clone()
    };
    let bandwidth = match &cli.bandwidth {
        Some(b) => Some(b.clone()),
        None => file.get("bandwidth").cloned(),
    };
    let kernels = parse_kernels(&kernel_labels, bandwidth.as_deref())?;

    let mut cells = Vec::new();
    for &t in &ts {
        for &size in &sizes {
            for &rho in &rhos {
                cells.push(match mode {
                    DgpMode::Panel => DgpSpec::panel(t, size, rho, degree, seed)?,
                    DgpMode::SingleUnit => DgpSpec::single_unit(t, size, rho, degree, seed)?,
                });
            }
        }
    }
    Ok(SimPlan {
        cells,
        opts: McOptions { replications, kernels, level, eval_date, r_max },
    })
}

/// File stem for one cell's reports, unique within a plan.
pub fn cell_stem(spec: &DgpSpec) -> String {
    match spec.mode {
        DgpMode::Panel => format!("mc_panel_t{}_n{}_rho{}", spec.t, spec.n, spec.rho_f),
        DgpMode::SingleUnit => {
            format!("mc_single_t{}_l{}_rho{}", spec.t, spec.l, spec.rho_f)
        }
    }
}

fn run_simulate(cli: &Cli) -> Result<()> {
    let plan = build_sim_plan(cli)?;
    create_dir(&cli.output_dir)?;
    for spec in &plan.cells {
        let report = crate::simulation::run_experiment(spec, &plan.opts)?;
        let stem = cell_stem(spec);
        write_file(&cli.output_dir, &format!("{stem}.csv"), &report.to_csv_string())?;
        let text = report.to_text_string();
        write_file(&cli.output_dir, &format!("{stem}.txt"), &text)?;
        print!("{text}\n");
    }
    Ok(())
}
