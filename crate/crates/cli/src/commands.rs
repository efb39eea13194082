use serde::Deserialize;
use serde_json::json;

use secord_core::io::{self, SpaceFile, TensorDocument};
use secord_core::sim::CohortMetadata;
use secord_core::{
    count_paths, estimate_tensor_with, prediction_curve, simulate_cohort, validate_dataset, ChainOrder, EstimateOptions,
    MarkovTestOptions, Method, SimulationConfig, StateSpace, TestGrid, Trajectory, Weighting,
};

use crate::error::{CliError, CliResult};
use crate::manifest::{read_file, write_file, RunManifest};
use crate::{DataArgs, EstimateArgs, MarkovTestArgs, PathsArgs, PredictArgs, SimulateArgs};

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Parse a state given as a 1-based index or a label.
fn parse_state(raw: &str, labels: &[String]) -> CliResult<usize> {
    let raw = raw.trim();
    if let Ok(k) = raw.parse::<usize>() {
        if (1..=labels.len()).contains(&k) {
            return Ok(k - 1);
        }
        return Err(CliError::Config(format!("state {k} out of range 1..={}", labels.len())));
    }
    labels.iter().position(|l| l == raw).ok_or_else(|| CliError::Config(format!("unknown state '{raw}'")))
}

fn parse_states(raw: &str, labels: &[String], expect: Option<usize>) -> CliResult<Vec<usize>> {
    let states = raw.split(',').map(|s| parse_state(s, labels)).collect::<CliResult<Vec<_>>>()?;
    if let Some(n) = expect {
        if states.len() != n {
            return Err(CliError::Config(format!("expected {n} comma-separated states, got '{raw}'")));
        }
    }
    Ok(states)
}

struct Loaded {
    space: StateSpace,
    dataset: Vec<Trajectory>,
    dropped: usize,
}

fn load_space(args: &DataArgs, manifest: &mut RunManifest) -> CliResult<StateSpace> {
    let bytes = read_file(&args.space)?;
    manifest.input(&args.space, &bytes);
    let file: SpaceFile = serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", args.space)))?;
    let mut space = file.to_space()?;
    if let Some(path) = &args.labels {
        let bytes = read_file(path)?;
        manifest.input(path, &bytes);
        let labels = io::read_labels(&bytes[..]).map_err(config_err)?;
        space = space.with_labels(labels)?;
    }
    Ok(space)
}

fn load_data(args: &DataArgs, manifest: &mut RunManifest) -> CliResult<Loaded> {
    let space = load_space(args, manifest)?;
    let bytes = read_file(&args.data)?;
    manifest.input(&args.data, &bytes);
    let dataset = io::read_trajectories(&bytes[..], &space)?;
    let report = validate_dataset(&dataset, &space, args.strict)?;
    let n = dataset.len();
    for v in &report.violations {
        eprintln!("warning: {v}");
    }
    let dataset = report.retain_valid(dataset);
    if dataset.is_empty() {
        return Err(CliError::Validation("no valid trajectories remain".into()));
    }
    let dropped = n - dataset.len();
    if dropped > 0 {
        eprintln!("warning: dropped {dropped} flagged subject(s)");
    }
    Ok(Loaded { space, dataset, dropped })
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> secord_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfigFile {
    space: SpaceFile,
    tensor: TensorDocument,
    n_subjects: usize,
    t_max: usize,
    seed: u64,
    #[serde(default)]
    order: ChainOrder,
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let bytes = read_file(&args.config)?;
    let file: SimulateConfigFile =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", args.config)))?;
    let space = file.space.to_space()?;
    let tensor = file.tensor.tensor()?;
    let init = file
        .tensor
        .initialization()?
        .ok_or_else(|| CliError::Config("tensor.init (initial distribution and first-step matrix) is required".into()))?;
    let config = SimulationConfig {
        space: space.clone(),
        tensor,
        init,
        n_subjects: file.n_subjects,
        t_max: file.t_max,
        seed: file.seed,
        order: file.order,
    };
    let cohort = simulate_cohort(&config)?;
    let out = csv_bytes(|b| io::write_trajectories(b, &cohort))?;
    write_file(&args.out, &out)?;

    let mut manifest = RunManifest::new(
        "simulate",
        json!({
            "n_subjects": config.n_subjects,
            "t_max": config.t_max,
            "seed": config.seed,
            "order": config.order.to_string(),
            "cohort": CohortMetadata::of(&config),
        }),
    );
    manifest.input(&args.config, &bytes);
    manifest.output(&args.out);
    manifest.write(&args.out)
}

pub fn estimate(args: &EstimateArgs) -> CliResult<()> {
    let method: Method = args.method.parse().map_err(config_err)?;
    let mut manifest = RunManifest::new(
        "estimate",
        json!({ "method": method.to_string(), "min_support": args.min_support, "strict": args.input.strict }),
    );
    let loaded = load_data(&args.input, &mut manifest)?;
    let counts = count_paths(&loaded.dataset, &loaded.space)?;
    let est = estimate_tensor_with(&counts, method, &EstimateOptions { min_support: args.min_support });
    for d in est.thin_cells() {
        eprintln!("warning: pair ({}, {}) has only {} at-risk observation(s)", d.h, d.j, d.at_risk);
    }
    let doc = TensorDocument::new(&est.tensor, loaded.space.labels(), est.init.as_ref());
    let out = csv_bytes(|b| io::write_tensor_json(b, &doc))?;
    write_file(&args.out, &out)?;

    let diagnostics = format!("{}.diagnostics.json", args.out);
    let mut text = serde_json::to_string_pretty(&est.diagnostics).map_err(config_err)?;
    text.push('\n');
    write_file(&diagnostics, text.as_bytes())?;

    if let serde_json::Value::Object(map) = &mut manifest.config {
        map.insert("subjects_used".into(), json!(loaded.dataset.len()));
        map.insert("subjects_dropped".into(), json!(loaded.dropped));
    }
    manifest.output(&args.out);
    manifest.output(&diagnostics);
    manifest.write(&args.out)
}

pub fn predict(args: &PredictArgs) -> CliResult<()> {
    let bytes = read_file(&args.tensor)?;
    let doc = io::read_tensor_json(&bytes[..]).map_err(|e| match e {
        secord_core::Error::Io(_) => CliError::from(e),
        other => CliError::Config(format!("{}: {other}", args.tensor)),
    })?;
    let tensor = doc.tensor()?;
    let from = parse_states(&args.from, &doc.labels, Some(2))?;
    let target = parse_state(&args.target, &doc.labels)?;
    let curve = prediction_curve(&tensor, from[0], from[1], target, args.horizon)?;
    let out = csv_bytes(|b| io::write_curve(b, &curve))?;
    write_file(&args.out, &out)?;

    let mut manifest = RunManifest::new(
        "predict",
        json!({
            "from": [from[0] + 1, from[1] + 1],
            "target": target + 1,
            "horizon": args.horizon,
        }),
    );
    manifest.input(&args.tensor, &bytes);
    manifest.output(&args.out);
    manifest.write(&args.out)
}

fn parse_grid(raw: &str) -> CliResult<TestGrid> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad grid '{raw}'"))))
        .collect::<CliResult<_>>()?;
    if parts.len() != 3 {
        return Err(CliError::Config(format!("grid must be t0,tmax,step, got '{raw}'")));
    }
    Ok(TestGrid::new(parts[0], parts[1], parts[2])?)
}

pub fn markov_test(args: &MarkovTestArgs) -> CliResult<()> {
    let grid = parse_grid(&args.grid)?;
    let weighting = match args.weighting.as_str() {
        "occupancy" => Weighting::Occupancy,
        "uniform" => Weighting::Uniform,
        other => return Err(CliError::Config(format!("unknown weighting '{other}'"))),
    };
    if args.resamples < 1 {
        return Err(CliError::Config("--B must be at least 1".into()));
    }
    let mut manifest = RunManifest::new("markov-test", json!({}));
    let loaded = load_data(&args.input, &mut manifest)?;
    let labels = loaded.space.labels().to_vec();
    let conditioning = args.conditioning.as_deref().map(|c| parse_states(c, &labels, None)).transpose()?;
    let transitions = args
        .transition
        .iter()
        .map(|t| parse_states(t, &labels, Some(2)).map(|v| (v[0], v[1])))
        .collect::<CliResult<Vec<_>>>()?;

    let options = MarkovTestOptions {
        grid: grid.clone(),
        conditioning: conditioning.clone(),
        resamples: args.resamples,
        seed: args.seed,
        weighting: weighting.clone(),
    };
    let mut reports = Vec::new();
    for &(l, m) in &transitions {
        let report = secord_core::wild_bootstrap_test(&loaded.dataset, &loaded.space, l, m, &options)?;
        for w in &report.warnings {
            eprintln!("warning: {}->{}: {w}", labels[l], labels[m]);
        }
        reports.push(report);
    }
    let out = csv_bytes(|b| io::write_markov_csv(b, &reports, &loaded.space))?;
    write_file(&args.out, &out)?;

    let report_path = format!("{}.report.json", args.out);
    let mut text = serde_json::to_string_pretty(&reports).map_err(config_err)?;
    text.push('\n');
    write_file(&report_path, text.as_bytes())?;

    manifest.config = json!({
        "transitions": transitions.iter().map(|&(l, m)| [l + 1, m + 1]).collect::<Vec<_>>(),
        "grid": { "t0": grid.t0(), "t_max": grid.t_max(), "step": grid.step() },
        "resamples": args.resamples,
        "seed": args.seed,
        "conditioning": conditioning.map(|c| c.iter().map(|j| j + 1).collect::<Vec<_>>()),
        "weighting": args.weighting,
        "strict": args.input.strict,
        "subjects_used": loaded.dataset.len(),
        "subjects_dropped": loaded.dropped,
        "generator": secord_core::rng::GENERATOR,
    });
    manifest.output(&args.out);
    manifest.output(&report_path);
    manifest.write(&args.out)
}

pub fn paths(args: &PathsArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("paths", json!({ "strict": args.input.strict }));
    let loaded = load_data(&args.input, &mut manifest)?;
    let counts = count_paths(&loaded.dataset, &loaded.space)?;
    let rows = io::two_step_summary(&counts);
    let out = csv_bytes(|b| io::write_two_step_csv(b, &rows, &loaded.space))?;
    write_file(&args.out, &out)?;
    manifest.output(&args.out);
    manifest.write(&args.out)
}
