use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;

use lcmp_core::analysis::resource_report;
use lcmp_core::experiment::{preset, run_plan, ExperimentPlan, PresetParams, Variant, PRESETS};
use lcmp_core::scenario::{ScenarioFile, TrafficSource, WeightOverrides};
use lcmp_core::{PolicyKind, SimTime};

/// Run inter-DC routing experiments on the packet simulator.
#[derive(Debug, Parser)]
#[command(name = "lcmp", version)]
struct Args {
    /// Built-in experiment: 8dc, herd, ablation, weights_global, weights_path, weights_cong, failover
    #[arg(long, conflicts_with = "scenario")]
    preset: Option<String>,
    /// Scenario JSON file
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Policies to compare (lcmp, ecmp, ucmp, min_cost); replaces the preset's variants
    #[arg(long, value_delimiter = ',')]
    policy: Vec<String>,
    /// Offered loads in per-mille of aggregate inter-DC capacity
    #[arg(long, value_delimiter = ',')]
    load: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    alpha: Option<u32>,
    #[arg(long)]
    beta: Option<u32>,
    #[arg(long)]
    wdl: Option<u32>,
    #[arg(long)]
    wlc: Option<u32>,
    #[arg(long)]
    wql: Option<u32>,
    #[arg(long)]
    wtl: Option<u32>,
    #[arg(long)]
    wdp: Option<u32>,
    /// Divisor applied jointly to capacities, buffers and flow sizes of presets
    #[arg(long, default_value_t = 100)]
    scale: u64,
    /// Traffic duration for presets, in simulated milliseconds
    #[arg(long)]
    duration_ms: Option<u64>,
    /// Concurrent simulation cells
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a per-decision trace.csv in every cell
    #[arg(long)]
    trace: bool,
    /// Print switch resource accounting: PORTS FLOWS M [PATHS]
    #[arg(long, num_args = 3..=4, value_names = ["PORTS", "FLOWS", "M", "PATHS"])]
    resource_report: Option<Vec<u64>>,
}

impl Args {
    fn weights(&self) -> WeightOverrides {
        WeightOverrides {
            alpha: self.alpha,
            beta: self.beta,
            w_dl: self.wdl,
            w_lc: self.wlc,
            w_ql: self.wql,
            w_tl: self.wtl,
            w_dp: self.wdp,
        }
    }
}

fn build_plan(args: &Args) -> Result<ExperimentPlan> {
    let mut plan = match (&args.preset, &args.scenario) {
        (Some(name), None) => {
            if args.scale == 0 {
                bail!("--scale must be positive");
            }
            let mut params = PresetParams {
                scale: args.scale,
                ..PresetParams::default()
            };
            if let Some(ms) = args.duration_ms {
                params.duration = SimTime::from_ms(ms);
            }
            preset(name, &params).with_context(|| format!("presets: {}", PRESETS.join(", ")))?
        }
        (None, Some(path)) => {
            let file = ScenarioFile::load(path)?;
            let policy = file.routing.policy;
            let seed = file.seed;
            let scenario = file.into_scenario()?;
            let load = match &scenario.traffic {
                TrafficSource::Poisson { load_permille, .. } => *load_permille,
                TrafficSource::Flows(_) => 0,
            };
            let name = path.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned());
            ExperimentPlan {
                name,
                scenario,
                variants: vec![Variant {
                    name: policy.as_str().to_string(),
                    policy,
                    weights: WeightOverrides::default(),
                }],
                loads: vec![load],
                seeds: vec![seed],
                trace: false,
            }
        }
        _ => bail!("exactly one of --preset or --scenario is required"),
    };
    if !args.policy.is_empty() {
        plan.variants = args
            .policy
            .iter()
            .map(|p| p.parse::<PolicyKind>().map(Variant::policy))
            .collect::<Result<_, _>>()?;
    }
    let cli = args.weights();
    for v in &mut plan.variants {
        v.weights = cli.merge(v.weights);
    }
    if !args.load.is_empty() {
        if let Some(bad) = args.load.iter().find(|&&l| l > 1000) {
            bail!("load {bad} exceeds 1000 per-mille");
        }
        plan.loads = args.load.clone();
    }
    if !args.seed.is_empty() {
        plan.seeds = args.seed.clone();
    }
    plan.trace |= args.trace;
    Ok(plan)
}

fn run(args: Args) -> Result<bool> {
    if let Some(v) = &args.resource_report {
        let (ports, flows, m) = (v[0], v[1], v[2]);
        let paths = v.get(3).copied().unwrap_or(0);
        print!("{}", resource_report(ports, flows, paths, m).render());
        if args.preset.is_none() && args.scenario.is_none() {
            return Ok(true);
        }
    }
    let plan = build_plan(&args)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("results").join(&plan.name));
    let cells = plan.variants.len() * plan.loads.len() * plan.seeds.len();
    eprintln!("running {} ({cells} cells) into {}", plan.name, out.display());
    let report = run_plan(&plan, Some(&out), args.jobs)?;
    print!("{}", report.table());
    if report.failed {
        eprintln!("lossless assumption violated in at least one cell");
    }
    Ok(!report.failed)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
