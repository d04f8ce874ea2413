//! Command-line front-end: `run`, `compare` and `list`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mixlap::engine::{run, IterLapConfig, IterationRecord, RunReport, StopReason, Variant};
use mixlap::eval::{
    compare, default_grid_spec, lambda_space_comparison, EvaluationGrid, GridSpec, LambdaSpaceReport, LAMBDA_GRID_COUNT,
};
use mixlap::targets::{by_name, catalogue, dlm_generate, DlmInstance, DlmTarget, TargetDensity, TARGET_NAMES};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub const GRID_NOTE: &str = "s depends on the evaluation grid; compare absolute values only on identical grids";

#[derive(Debug, Parser)]
#[command(name = "mixlap", version, about = "Gaussian-mixture approximation of non-normalised densities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one or both variants to a catalogue target and write report.json,
    /// mixture.json, ordered.csv and (for 2D targets) contour.csv per variant.
    Run(Box<RunArgs>),
    /// Tabulate report.json files found in the given run directories.
    Compare {
        /// Directories holding report.json, or parents of such directories.
        #[arg(required = true, num_args = 1..)]
        dirs: Vec<PathBuf>,
    },
    /// List catalogue targets and their dimensions.
    List {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantChoice {
    Original,
    Modified,
    Both,
}

impl VariantChoice {
    fn variants(self) -> Vec<Variant> {
        match self {
            Self::Original => vec![Variant::Original],
            Self::Modified => vec![Variant::Modified],
            Self::Both => vec![Variant::Original, Variant::Modified],
        }
    }
}

#[derive(Debug, Args)]
#[command(after_help = "Precedence: keys in --config override individual flags, which override the variant defaults. \
                        Likewise --grid and --dlm-instance override the grid and DLM flags.")]
pub struct RunArgs {
    /// Catalogue name (see `mixlap list`).
    #[arg(long)]
    pub target: String,
    #[arg(long, value_enum, default_value = "both")]
    pub variant: VariantChoice,
    /// Output directory; each variant writes to a subdirectory named after it.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Engine random seed (`rng_seed`).
    #[arg(long, alias = "rng-seed")]
    pub seed: Option<u64>,
    /// JSON object of IterLapConfig fields applied on top of the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads for point evaluation (default: logical CPUs).
    #[arg(long, env = "MIXLAP_THREADS")]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub dlm: DlmArgs,
    #[command(flatten)]
    pub grid: GridArgs,
}

/// Individual IterLapConfig fields. Names match the config keys.
#[derive(Debug, Default, Args, Serialize)]
pub struct EngineArgs {
    /// Maximum number of mixture components
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_c_max: Option<usize>,
    /// Optimiser starts used to find the initial modes
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_starts_initial: Option<usize>,
    /// Draws per new component (default 50·d)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_x: Option<usize>,
    /// Branch point of the original residual
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_l: Option<f64>,
    /// Smoothing offset of the modified residual
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_z: Option<f64>,
    /// Pull of the modified residual towards high-density regions
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Scale applied to new component precisions
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_a: Option<f64>,
    /// Precision scale between duplicates of one mean
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_b: Option<f64>,
    /// Components allowed to share a mean (modified variant)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_dup: Option<usize>,
    /// Distance under which two means count as equal, in coordinate-scale units
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dup_radius: Option<f64>,
    /// Stop once max |q − q̃| over explored points is at most this; 0 disables
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_err: Option<f64>,
    /// Original variant: stop when the residual optimum stagnates to this relative change
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_zeta: Option<f64>,
    /// Starts are drawn from points with log q − max log q at least this
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_lq: Option<f64>,
    /// Optimiser starts per new component
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_starts_per_iter: Option<usize>,
    /// Minimum distance between starts, in coordinate-scale units
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_min_separation: Option<f64>,
    /// Modified variant: drop components below this fraction of the total weight
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prune_threshold: Option<f64>,
    /// Re-estimate the weights of the components kept after pruning
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refit_after_prune: Option<bool>,
    /// Least-squares weight of rows at component means
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_point_weight: Option<f64>,
    /// Modified variant: reject proposals with |q − q̃| below this at the optimum
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_discrepancy: Option<f64>,
    /// Eigenvalue floor, relative to the largest, when repairing Hessians
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hessian_floor: Option<f64>,
    /// Standard deviation of the random initial starts
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_spread: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct DlmArgs {
    /// Series length.
    #[arg(long)]
    pub dlm_n: Option<usize>,
    /// Simulation seed.
    #[arg(long)]
    pub dlm_seed: Option<u64>,
    /// Gamma shape for λ_u.
    #[arg(long)]
    pub dlm_a: Option<f64>,
    /// Gamma rate for λ_u.
    #[arg(long)]
    pub dlm_b: Option<f64>,
    /// Gamma shape for λ_v.
    #[arg(long)]
    pub dlm_c: Option<f64>,
    /// Gamma rate for λ_v.
    #[arg(long)]
    pub dlm_d: Option<f64>,
    /// Generating state precision.
    #[arg(long)]
    pub dlm_lambda_u: Option<f64>,
    /// Generating observation precision.
    #[arg(long)]
    pub dlm_lambda_v: Option<f64>,
    /// JSON DlmInstance; a present `y_obs` is used as the data.
    #[arg(long)]
    pub dlm_instance: Option<PathBuf>,
}

impl DlmArgs {
    fn any(&self) -> bool {
        self.dlm_n.is_some()
            || self.dlm_seed.is_some()
            || [self.dlm_a, self.dlm_b, self.dlm_c, self.dlm_d, self.dlm_lambda_u, self.dlm_lambda_v]
                .iter()
                .any(Option::is_some)
            || self.dlm_instance.is_some()
    }

    fn instance(&self) -> Result<DlmInstance, CliError> {
        let inst = match &self.dlm_instance {
            Some(path) => {
                serde_json::from_str(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => {
                let mut inst = DlmInstance::default();
                let set = |slot: &mut f64, v: Option<f64>| {
                    if let Some(v) = v {
                        *slot = v;
                    }
                };
                inst.n = self.dlm_n.unwrap_or(inst.n);
                inst.seed = self.dlm_seed.unwrap_or(inst.seed);
                set(&mut inst.a, self.dlm_a);
                set(&mut inst.b, self.dlm_b);
                set(&mut inst.c, self.dlm_c);
                set(&mut inst.d, self.dlm_d);
                set(&mut inst.lambda_u, self.dlm_lambda_u);
                set(&mut inst.lambda_v, self.dlm_lambda_v);
                inst
            }
        };
        inst.validate().map_err(CliError::Config)?;
        if inst.y_obs.as_ref().is_some_and(|y| y.len() != inst.n) {
            return Err(CliError::Config(format!("y_obs must have n = {} entries", inst.n)));
        }
        Ok(dlm_generate(inst))
    }
}

#[derive(Debug, Default, Args)]
pub struct GridArgs {
    /// JSON GridSpec replacing the default grid.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Lattice points per axis.
    #[arg(long)]
    pub grid_count: Option<usize>,
    /// Number of unstructured points appended to the lattice (d ≥ 3 grids).
    #[arg(long)]
    pub grid_extra: Option<usize>,
}

impl GridArgs {
    fn spec(&self, t: &dyn TargetDensity) -> Result<GridSpec, CliError> {
        if let Some(path) = &self.grid {
            return serde_json::from_str(&read(path)?)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())));
        }
        let mut spec = default_grid_spec(t);
        if let Some(k) = self.grid_count {
            spec.axes.iter_mut().for_each(|a| a.count = k);
        }
        if let Some(n) = self.grid_extra {
            match spec.extra.as_mut() {
                Some(e) => e.count = n,
                None => {
                    return Err(CliError::Config("--grid-extra applies only to grids with extra points (d ≥ 3)".into()))
                }
            }
        }
        Ok(spec)
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, files or paths. Exit code 2.
    Config(String),
    /// The engine or the evaluation failed. Exit code 1.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numerical(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "configuration error: {m}"),
            Self::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub target: String,
    pub dim: usize,
    pub variant: Variant,
    pub n_components: usize,
    pub stop_reason: StopReason,
    pub s_stat: f64,
    pub wall_time_seconds: f64,
    pub grid: GridSpec,
    pub grid_points: usize,
    pub grid_note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_space: Option<LambdaSpaceReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dlm_instance: Option<DlmInstance>,
    pub config: IterLapConfig,
    pub pruned: usize,
    pub n_points: usize,
    pub log_offset: f64,
    pub iterations: Vec<IterationRecord>,
}

impl ReportFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        serde_json::from_str(&read(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

fn merge(base: &mut Value, patch: &Map<String, Value>) {
    if let Value::Object(obj) = base {
        for (k, v) in patch {
            obj.insert(k.clone(), v.clone());
        }
    }
}

/// Resolves the variants to run and their configurations.
pub fn resolve_configs(args: &RunArgs) -> Result<Vec<IterLapConfig>, CliError> {
    let mut flags = match serde_json::to_value(&args.engine).expect("flags serialise") {
        Value::Object(m) => m,
        _ => unreachable!(),
    };
    if let Some(seed) = args.seed {
        flags.insert("rng_seed".into(), seed.into());
    }
    let file: Option<Map<String, Value>> = match &args.config {
        Some(path) => match serde_json::from_str(&read(path)?) {
            Ok(Value::Object(m)) => Some(m),
            Ok(_) => return Err(CliError::Config(format!("{}: expected a JSON object", path.display()))),
            Err(e) => return Err(CliError::Config(format!("{}: {e}", path.display()))),
        },
        None => None,
    };
    let variants = match file.as_ref().and_then(|m| m.get("variant")) {
        Some(v) => vec![serde_json::from_value(v.clone()).map_err(|e| CliError::Config(format!("variant: {e}")))?],
        None => args.variant.variants(),
    };
    variants
        .into_iter()
        .map(|v| {
            let mut value = serde_json::to_value(IterLapConfig::for_variant(v)).expect("config serialises");
            merge(&mut value, &flags);
            if let Some(f) = &file {
                merge(&mut value, f);
            }
            let cfg: IterLapConfig = serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
            cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
            Ok(cfg)
        })
        .collect()
}

/// One variant's outputs, written by [`cmd_run`].
pub struct RunOutput {
    pub dir: PathBuf,
    pub report: ReportFile,
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn cmd_run(args: &RunArgs) -> Result<Vec<RunOutput>, CliError> {
    configure_threads(args.threads)?;
    if !TARGET_NAMES.contains(&args.target.as_str()) {
        let err = by_name(&args.target, None).err().map(|e| e.to_string()).unwrap_or_default();
        return Err(CliError::Config(err));
    }
    let is_dlm = args.target == "dlm";
    if args.dlm.any() && !is_dlm {
        return Err(CliError::Config("--dlm-* flags apply only to --target dlm".into()));
    }
    let configs = resolve_configs(args)?;
    let instance = if is_dlm { Some(args.dlm.instance()?) } else { None };
    let target = by_name(&args.target, instance.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let dlm_target = instance.clone().map(DlmTarget::new);
    let spec = args.grid.spec(target.as_ref())?;
    let grid = EvaluationGrid::build(&spec, target.as_ref()).map_err(|e| CliError::Config(e.to_string()))?;

    let mut outputs = Vec::new();
    for cfg in configs {
        let rep: RunReport = run(target.as_ref(), &cfg).map_err(|e| CliError::Numerical(e.to_string()))?;
        let cmp = compare(target.as_ref(), &rep.mixture, &grid).map_err(|e| CliError::Numerical(e.to_string()))?;
        let lambda_space = match &dlm_target {
            Some(t) => Some(
                lambda_space_comparison(t, &rep.mixture, &grid, LAMBDA_GRID_COUNT)
                    .map_err(|e| CliError::Numerical(e.to_string()))?,
            ),
            None => None,
        };
        let dir = args.out.join(cfg.variant.as_str());
        fs::create_dir_all(&dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        let report = ReportFile {
            target: rep.target.clone(),
            dim: target.dim(),
            variant: cfg.variant,
            n_components: rep.n_components,
            stop_reason: rep.stop_reason,
            s_stat: cmp.s_stat,
            wall_time_seconds: rep.wall_time_seconds,
            grid: spec.clone(),
            grid_points: grid.len(),
            grid_note: GRID_NOTE.into(),
            lambda_space,
            dlm_instance: instance.clone(),
            config: cfg.clone(),
            pruned: rep.pruned,
            n_points: rep.n_points,
            log_offset: rep.log_offset,
            iterations: rep.iterations.clone(),
        };
        write(&dir.join("report.json"), &(serde_json::to_string_pretty(&report).expect("report serialises") + "\n"))?;
        write(&dir.join("mixture.json"), &(rep.mixture.to_json() + "\n"))?;
        write(&dir.join("ordered.csv"), &cmp.ordered_csv())?;
        if let Some(contour) = cmp.contour_csv(&grid) {
            write(&dir.join("contour.csv"), &contour)?;
        }
        outputs.push(RunOutput { dir, report });
    }
    Ok(outputs)
}

fn find_reports(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let direct = dir.join("report.json");
    if direct.is_file() {
        return Ok(vec![direct]);
    }
    let entries = fs::read_dir(dir).map_err(|e| CliError::Config(format!("cannot read {}: {e}", dir.display())))?;
    let mut found: Vec<PathBuf> =
        entries.filter_map(|e| e.ok()).map(|e| e.path().join("report.json")).filter(|p| p.is_file()).collect();
    found.sort();
    if found.is_empty() {
        return Err(CliError::Config(format!("no report.json in {}", dir.display())));
    }
    Ok(found)
}

/// Loads every report under `dirs`; all must share one grid.
pub fn cmd_compare(dirs: &[PathBuf]) -> Result<Vec<ReportFile>, CliError> {
    let mut reports: Vec<(PathBuf, ReportFile)> = Vec::new();
    for d in dirs {
        for p in find_reports(d)? {
            let r = ReportFile::load(&p)?;
            reports.push((p, r));
        }
    }
    let (first_path, first) = &reports[0];
    for (p, r) in &reports[1..] {
        if r.grid != first.grid {
            let show = |g: &GridSpec| serde_json::to_string(g).expect("grid serialises");
            return Err(CliError::Config(format!(
                "grid specs differ:\n  {}: {}\n  {}: {}",
                first_path.display(),
                show(&first.grid),
                p.display(),
                show(&r.grid)
            )));
        }
    }
    Ok(reports.into_iter().map(|(_, r)| r).collect())
}

pub fn comparison_table(reports: &[ReportFile]) -> String {
    let mut out =
        format!("{:<14} {:<9} {:>12} {:>10} {:>14}\n", "target", "variant", "n_components", "s_stat", "wall_time_s");
    for r in reports {
        out += &format!(
            "{:<14} {:<9} {:>12} {:>10.4} {:>14.3}\n",
            r.target,
            r.variant.as_str(),
            r.n_components,
            r.s_stat,
            r.wall_time_seconds
        );
    }
    out
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct CatalogueEntry {
    pub name: String,
    pub dim: usize,
}

pub fn cmd_list(json: bool) -> String {
    let entries: Vec<CatalogueEntry> =
        catalogue().into_iter().map(|(name, dim)| CatalogueEntry { name: name.into(), dim }).collect();
    if json {
        serde_json::to_string_pretty(&entries).expect("catalogue serialises") + "\n"
    } else {
        entries.iter().map(|e| format!("{:<14} d={}\n", e.name, e.dim)).collect()
    }
}

/// Runs a parsed command, printing to stdout. Returns the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::List { json } => {
            print!("{}", cmd_list(json));
            Ok(())
        }
        Command::Run(args) => cmd_run(&args).map(|outs| {
            for o in outs {
                let r = &o.report;
                println!(
                    "{} {}: {} component{}, s = {:.4}, stop {}, {:.3} s -> {}",
                    r.target,
                    r.variant.as_str(),
                    r.n_components,
                    if r.n_components == 1 { "" } else { "s" },
                    r.s_stat,
                    r.stop_reason.as_str(),
                    r.wall_time_seconds,
                    o.dir.display()
                );
            }
        }),
        Command::Compare { dirs } => cmd_compare(&dirs).map(|reports| print!("{}", comparison_table(&reports))),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
