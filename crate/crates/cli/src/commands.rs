use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use kbnn::datasets::{
    gen_circles, gen_cubic, gen_moons, gen_rotating_moons, read_csv, split, CubicSpec, Dataset, DatasetSplit,
    RotatingMoonsSpec, TargetColumn, Task,
};
use kbnn::forward::predict;
use kbnn::metrics::{evaluate, EvalResult};
use kbnn::network::{ColumnStats, Standardizer};
use kbnn::trainer::{train, Progress, TrainConfig};
use kbnn::{init_network, load_model, save_model, Activation, Network, PriorSpec};
use rayon::prelude::*;
use serde::Serialize;

use crate::report::{MeanStd, Report, RunRecord, RunSeeds, Summary};
use crate::seeds::substream;
use crate::{BenchArgs, DataArgs, EvalArgs, FitArgs, GridArgs, ModelArgs, PredictArgs, RotatingArgs, SynthArgs, SynthKind, TrainArgs};

/// Worker pool capped by `KBNN_THREADS` when set.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("KBNN_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| anyhow!("KBNN_THREADS must be a positive integer, got '{v}'"))?;
        if n == 0 {
            bail!("KBNN_THREADS must be a positive integer, got '{v}'");
        }
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}

pub fn parse_arch(s: &str) -> Result<Vec<usize>> {
    let arch = parse_list::<usize>(s).with_context(|| format!("invalid architecture '{s}'"))?;
    if arch.len() < 2 || arch.contains(&0) {
        bail!("architecture '{s}' needs at least two positive layer sizes");
    }
    Ok(arch)
}

pub fn parse_activations(s: &str) -> Result<Vec<Activation<f64>>> {
    s.split(',')
        .map(|a| a.trim().parse::<Activation<f64>>().map_err(anyhow::Error::from))
        .collect()
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|v| v.trim().parse::<T>().map_err(|e| anyhow!("'{v}': {e}")))
        .collect()
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn csv_text(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Dataset for repeat `repeat`, drawn from the "noise" and "split" streams.
pub fn load_data(args: &DataArgs, seed: u64, repeat: u64) -> Result<DatasetSplit<f64>> {
    let noise_seed = substream(seed, "noise", repeat);
    let split_seed = substream(seed, "split", repeat);
    let standardize = !args.no_standardize;
    match (&args.synth, &args.csv) {
        (Some(SynthKind::Cubic), _) => {
            let spec = CubicSpec {
                n: args.n.unwrap_or(800),
                noise_std: args.data_noise.unwrap_or(3.0),
                ..Default::default()
            };
            let mut s = gen_cubic(&spec, noise_seed)?;
            if !standardize {
                s = DatasetSplit {
                    feature_stats: ColumnStats::identity(1),
                    target_stats: Some(ColumnStats::identity(1)),
                    ..s
                };
            }
            Ok(s)
        }
        (Some(kind), _) => {
            let n = args.n.unwrap_or(1500);
            let noise = args.data_noise.unwrap_or(0.1);
            let data = match kind {
                SynthKind::Moons => gen_moons(n, noise, noise_seed)?,
                _ => gen_circles(n, noise, args.radius_factor, noise_seed)?,
            };
            Ok(split(&data, args.split, split_seed, standardize)?)
        }
        (None, Some(path)) => {
            let target: TargetColumn = args
                .target
                .as_deref()
                .ok_or_else(|| anyhow!("--csv needs --target"))?
                .parse()
                .unwrap();
            let mut data = read_csv(path, &target)?;
            if args.classification {
                data.task = Task::Classification;
            }
            Ok(split(&data, args.split, split_seed, standardize)?)
        }
        (None, None) => bail!("no data: pass --synth or --csv"),
    }
}

/// Whole dataset (no split) for evaluation.
fn load_full(args: &DataArgs, seed: u64) -> Result<Dataset<f64>> {
    match (&args.synth, &args.csv) {
        (Some(SynthKind::Cubic), _) => Ok(load_data(args, seed, 0)?.test),
        (Some(_), _) => {
            let mut a = args.clone();
            a.split = 1.0;
            Ok(load_data(&a, seed, 0)?.train)
        }
        (None, Some(path)) => {
            let target: TargetColumn = args
                .target
                .as_deref()
                .ok_or_else(|| anyhow!("--csv needs --target"))?
                .parse()
                .unwrap();
            let mut data = read_csv(path, &target)?;
            if args.classification {
                data.task = Task::Classification;
            }
            Ok(data)
        }
        (None, None) => bail!("no data: pass --synth or --csv"),
    }
}

/// Architecture and activations, checked against the data dimensions.
pub fn resolve_model(model: &ModelArgs, data: &DatasetSplit<f64>) -> Result<(Vec<usize>, Vec<Activation<f64>>)> {
    let (d, e) = (data.train.input_dim(), data.train.output_dim());
    let arch = match &model.arch {
        Some(s) => parse_arch(s)?,
        None => vec![d, 50, e],
    };
    if arch[0] != d || *arch.last().unwrap() != e {
        bail!(
            "architecture {:?} does not match the data: {d} inputs and {e} outputs",
            arch
        );
    }
    let acts = match &model.act {
        Some(s) => parse_activations(s)?,
        None => default_activations(arch.len() - 1, "relu", data.train.task)?,
    };
    if acts.len() != arch.len() - 1 {
        bail!("{} layers need {} activations, got {}", arch.len() - 1, arch.len() - 1, acts.len());
    }
    Ok((arch, acts))
}

fn default_activations(layers: usize, hidden: &str, task: Task) -> Result<Vec<Activation<f64>>> {
    let hidden: Activation<f64> = hidden.parse()?;
    let out = match task {
        Task::Regression => Activation::Linear,
        Task::Classification => Activation::Sigmoid,
    };
    Ok(std::iter::repeat(hidden).take(layers - 1).chain(std::iter::once(out)).collect())
}

fn train_config(fit: &FitArgs, model: &ModelArgs, epochs: usize, shuffle_seed: u64) -> Result<TrainConfig<f64>> {
    Ok(TrainConfig {
        epochs,
        shuffle_each_epoch: !fit.no_shuffle,
        prior_variance: model.prior_var,
        observation_noise: fit.obs_noise,
        eval_every: fit.eval_every,
        checkpoints: match &fit.checkpoints {
            Some(s) => parse_list(s).context("invalid --checkpoints")?,
            None => Vec::new(),
        },
        seed: shuffle_seed,
    })
}

#[derive(Debug, Clone)]
pub struct Job {
    pub repeat: usize,
    pub arch: Option<Vec<usize>>,
    pub acts: Option<Vec<Activation<f64>>>,
    pub epochs: usize,
}

/// One independent training run on the data of `job.repeat`.
pub fn run_job(data: &DataArgs, model: &ModelArgs, fit: &FitArgs, job: &Job) -> Result<(RunRecord, Network)> {
    let r = job.repeat as u64;
    let seeds = RunSeeds {
        noise: substream(fit.seed, "noise", r),
        split: substream(fit.seed, "split", r),
        init: substream(fit.seed, "init", r),
        shuffle: substream(fit.seed, "shuffle", r),
    };
    let s = load_data(data, fit.seed, r)?;
    let (arch, acts) = match (&job.arch, &job.acts) {
        (Some(a), Some(f)) => (a.clone(), f.clone()),
        _ => resolve_model(model, &s)?,
    };
    let cfg = train_config(fit, model, job.epochs, seeds.shuffle)?;
    let net = init_network(&arch, &acts, &PriorSpec { weight_variance: model.prior_var }, seeds.init)?
        .with_standardizer(Some(s.standardizer()));
    let eval_set = (!s.test.is_empty()).then_some(&s.test);
    let progress = fit.progress;
    let (trained, report) = train(&net, &s.train, &cfg, eval_set, |p: &Progress| {
        if progress {
            let line = serde_json::json!({ "repeat": job.repeat, "progress": p });
            eprintln!("{line}");
        }
    })?;
    let scored = if s.test.is_empty() { &s.train } else { &s.test };
    let metrics = evaluate(&trained, &scored.x, &scored.y, scored.task == Task::Classification)?;
    Ok((RunRecord::new(job.repeat, seeds, metrics, report, !fit.no_timing), trained))
}

#[derive(Serialize)]
struct TrainBody<'a> {
    arch: Vec<usize>,
    activations: Vec<String>,
    epochs: usize,
    prior_variance: f64,
    observation_noise: f64,
    seed: u64,
    runs: &'a [RunRecord],
    summary: Summary,
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    if a.fit.repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    let first = load_data(&a.data, a.fit.seed, 0)?;
    let (arch, acts) = resolve_model(&a.model, &first)?;
    let jobs: Vec<Job> = (0..a.fit.repeats)
        .map(|repeat| Job {
            repeat,
            arch: Some(arch.clone()),
            acts: Some(acts.clone()),
            epochs: a.fit.epochs,
        })
        .collect();
    let results: Vec<(RunRecord, Network)> =
        worker_pool()?.install(|| jobs.par_iter().map(|j| run_job(&a.data, &a.model, &a.fit, j)).collect::<Result<_>>())?;
    if let Some(path) = &a.model_out {
        save_model(&results[0].1, path).with_context(|| format!("writing model {}", path.display()))?;
    }
    let runs: Vec<RunRecord> = results.into_iter().map(|r| r.0).collect();
    let body = TrainBody {
        arch,
        activations: acts.iter().map(|x| x.to_string()).collect(),
        epochs: a.fit.epochs,
        prior_variance: a.model.prior_var,
        observation_noise: a.fit.obs_noise,
        seed: a.fit.seed,
        summary: Summary::of(&runs),
        runs: &runs,
    };
    write_output(a.report.as_deref(), &Report::new("train", body).to_json())
}

#[derive(Serialize)]
struct EvalBody {
    model: PathBuf,
    metrics: EvalResult,
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let net: Network = load_model(&a.model)?;
    let mut data = load_full(&a.data, a.seed)?;
    if net.layers.last().is_some_and(|l| l.activation.is_bounded_unit()) && a.data.synth.is_some() {
        data.task = Task::Classification;
    }
    if data.input_dim() != net.input_dim || data.output_dim() != net.output_dim {
        bail!(
            "model expects {} inputs and {} outputs, data has {} and {}",
            net.input_dim,
            net.output_dim,
            data.input_dim(),
            data.output_dim()
        );
    }
    let metrics = evaluate(&net, &data.x, &data.y, data.task == Task::Classification)?;
    let body = EvalBody {
        model: a.model.clone(),
        metrics,
    };
    write_output(a.report.as_deref(), &Report::new("eval", body).to_json())
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let net: Network = load_model(&a.model)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.len() != net.input_dim {
        bail!("model expects {} input columns, {} has {}", net.input_dim, a.input.display(), headers.len());
    }
    let mut header = headers.clone();
    for k in 0..net.output_dim {
        header.push(format!("mean_{k}"));
    }
    for k in 0..net.output_dim {
        header.push(format!("variance_{k}"));
    }
    for k in 0..net.output_dim {
        header.push(format!("pre_activation_variance_{k}"));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let x = rec
            .iter()
            .enumerate()
            .map(|(c, v)| {
                v.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| anyhow!("row {}, column '{}': non-numeric value '{v}'", i + 1, headers[c]))
            })
            .collect::<Result<Vec<f64>>>()?;
        let p = predict(&net, &x)?;
        let mut row: Vec<String> = rec.iter().map(str::to_string).collect();
        row.extend(p.mean.iter().chain(&p.variance).chain(&p.pre_activation_variance).map(f64::to_string));
        rows.push(row);
    }
    write_output(a.output.as_deref(), &csv_text(&header, rows)?)
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Row-major grid `(x1, x2, mean, variance, pre_activation_variance)`, with
/// `x2` as the row index.
pub fn grid_csv(net: &Network, xr: (f64, f64), yr: (f64, f64), resolution: usize) -> Result<String> {
    if net.input_dim != 2 || net.output_dim != 1 {
        bail!("grid needs a model with 2 inputs and 1 output");
    }
    if resolution == 0 {
        bail!("--resolution must be at least 1");
    }
    let header: Vec<String> = ["x1", "x2", "mean", "variance", "pre_activation_variance"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rows = Vec::with_capacity(resolution * resolution);
    for y in linspace(yr.0, yr.1, resolution) {
        for x in linspace(xr.0, xr.1, resolution) {
            let p = predict(net, &[x, y])?;
            rows.push(vec![
                x.to_string(),
                y.to_string(),
                p.mean[0].to_string(),
                p.variance[0].to_string(),
                p.pre_activation_variance[0].to_string(),
            ]);
        }
    }
    csv_text(&header, rows)
}

pub fn cmd_grid(a: &GridArgs) -> Result<()> {
    let net: Network = load_model(&a.model)?;
    let text = grid_csv(&net, (a.xmin, a.xmax), (a.ymin, a.ymax), a.resolution)?;
    write_output(a.output.as_deref(), &text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Epochs,
    Layers,
    Neurons,
}

pub fn parse_sweep(s: &str) -> Result<(SweepKind, Vec<usize>)> {
    let (name, values) = s.split_once('=').ok_or_else(|| anyhow!("--sweep expects name=v1,v2,..., got '{s}'"))?;
    let kind = match name.trim() {
        "epochs" => SweepKind::Epochs,
        "layers" => SweepKind::Layers,
        "neurons" => SweepKind::Neurons,
        other => bail!("unknown sweep '{other}' (epochs, layers or neurons)"),
    };
    let values: Vec<usize> = parse_list(values).with_context(|| format!("invalid sweep values in '{s}'"))?;
    if values.is_empty() || values.contains(&0) {
        bail!("sweep values must be positive");
    }
    Ok((kind, values))
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchCell {
    pub sweep: SweepKind,
    pub value: usize,
    pub arch: Vec<usize>,
    pub activations: Vec<String>,
    pub epochs: usize,
    pub summary: Summary,
    pub runs: Vec<RunRecord>,
}

#[derive(Serialize)]
struct BenchBody<'a> {
    seed: u64,
    repeats: usize,
    prior_variance: f64,
    cells: &'a [BenchCell],
}

pub fn bench(a: &BenchArgs) -> Result<Vec<BenchCell>> {
    if a.fit.repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    let (kind, values) = parse_sweep(&a.sweep)?;
    let first = load_data(&a.data, a.fit.seed, 0)?;
    let (d, e) = (first.train.input_dim(), first.train.output_dim());
    let out_act: Activation<f64> = match &a.output_act {
        Some(s) => s.parse()?,
        None => match first.train.task {
            Task::Regression => Activation::Linear,
            Task::Classification => Activation::Sigmoid,
        },
    };
    let hidden: Activation<f64> = a.hidden_act.parse()?;
    let cell_models: Vec<(Vec<usize>, Vec<Activation<f64>>, usize)> = values
        .iter()
        .map(|&v| -> Result<_> {
            Ok(match kind {
                SweepKind::Epochs => {
                    let (arch, acts) = resolve_model(&a.model, &first)?;
                    (arch, acts, v)
                }
                SweepKind::Layers => {
                    let arch: Vec<usize> = std::iter::once(d)
                        .chain(std::iter::repeat(a.neurons).take(v))
                        .chain(std::iter::once(e))
                        .collect();
                    let acts = std::iter::repeat(hidden).take(v).chain(std::iter::once(out_act)).collect();
                    (arch, acts, a.fit.epochs)
                }
                SweepKind::Neurons => (vec![d, v, e], vec![hidden, out_act], a.fit.epochs),
            })
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, Job)> = cell_models
        .iter()
        .enumerate()
        .flat_map(|(c, (arch, acts, epochs))| {
            (0..a.fit.repeats).map(move |repeat| {
                (
                    c,
                    Job {
                        repeat,
                        arch: Some(arch.clone()),
                        acts: Some(acts.clone()),
                        epochs: *epochs,
                    },
                )
            })
        })
        .collect();
    let results: Vec<(usize, RunRecord)> = worker_pool()?.install(|| {
        jobs.par_iter()
            .map(|(c, j)| run_job(&a.data, &a.model, &a.fit, j).map(|r| (*c, r.0)))
            .collect::<Result<_>>()
    })?;
    let cells = cell_models
        .into_iter()
        .enumerate()
        .map(|(c, (arch, acts, epochs))| {
            let runs: Vec<RunRecord> = results.iter().filter(|r| r.0 == c).map(|r| r.1.clone()).collect();
            BenchCell {
                sweep: kind,
                value: values[c],
                arch,
                activations: acts.iter().map(|x| x.to_string()).collect(),
                epochs,
                summary: Summary::of(&runs),
                runs,
            }
        })
        .collect();
    Ok(cells)
}

pub fn bench_table(cells: &[BenchCell]) -> Result<String> {
    let header: Vec<String> = [
        "sweep", "value", "arch", "epochs", "runs", "rmse_mean", "rmse_std", "nll_mean", "nll_std", "accuracy_mean",
        "accuracy_std", "train_seconds_mean", "train_seconds_std",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let pair = |m: Option<MeanStd>| match m {
        Some(m) => [m.mean.to_string(), m.std.to_string()],
        None => [String::new(), String::new()],
    };
    let rows = cells.iter().map(|c| {
        let mut row = vec![
            serde_json::to_value(c.sweep).unwrap().as_str().unwrap().to_string(),
            c.value.to_string(),
            c.arch.iter().map(usize::to_string).collect::<Vec<_>>().join("-"),
            c.epochs.to_string(),
            c.summary.runs.to_string(),
        ];
        for m in [c.summary.rmse, c.summary.nll, c.summary.accuracy, c.summary.train_seconds] {
            row.extend(pair(m));
        }
        row
    });
    csv_text(&header, rows)
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let cells = bench(a)?;
    let table = bench_table(&cells)?;
    write_output(a.output.as_deref(), &table)?;
    if let Some(path) = &a.report {
        let body = BenchBody {
            seed: a.fit.seed,
            repeats: a.fit.repeats,
            prior_variance: a.model.prior_var,
            cells: &cells,
        };
        write_output(Some(path), &Report::new("bench", body).to_json())?;
    }
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let seed = substream(a.seed, "noise", 0);
    let data = match a.kind {
        SynthKind::Cubic => {
            let spec = CubicSpec {
                n: a.n.unwrap_or(800),
                noise_std: a.data_noise.unwrap_or(3.0),
                ..Default::default()
            };
            gen_cubic::<f64>(&spec, seed)?.train
        }
        SynthKind::Moons => gen_moons(a.n.unwrap_or(1500), a.data_noise.unwrap_or(0.1), seed)?,
        SynthKind::Circles => gen_circles(a.n.unwrap_or(1500), a.data_noise.unwrap_or(0.1), a.radius_factor, seed)?,
    };
    let mut header: Vec<String> = (1..=data.input_dim()).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    let rows = data
        .x
        .iter()
        .zip(&data.y)
        .map(|(x, y)| x.iter().chain(y).map(f64::to_string).collect());
    write_output(a.output.as_deref(), &csv_text(&header, rows)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepResult {
    pub step: usize,
    pub degrees: f64,
    pub instances: usize,
    pub accuracy: f64,
    pub nll: f64,
}

#[derive(Serialize)]
struct RotatingBody<'a> {
    arch: Vec<usize>,
    activations: Vec<String>,
    prior_variance: f64,
    seed: u64,
    steps: &'a [StepResult],
}

/// Trains on the initial moons split, then one pass over each rotated batch,
/// scoring the rotated test split after every step. Returns the per-step
/// results and the model after each step.
pub fn rotating_moons(a: &RotatingArgs) -> Result<(Vec<StepResult>, Vec<Network>)> {
    let arch = parse_arch(&a.arch)?;
    let acts = parse_activations(&a.act)?;
    if arch[0] != 2 || *arch.last().unwrap() != 1 {
        bail!("rotating moons needs a 2-input, 1-output architecture");
    }
    let spec = RotatingMoonsSpec {
        initial_n: a.initial,
        per_step_n: a.per_step,
        steps: a.steps,
        step_degrees: a.step_degrees,
        noise_std: a.data_noise,
        train_fraction: 0.9,
    };
    let stream = gen_rotating_moons::<f64>(&spec, substream(a.seed, "noise", 0))?;
    let standardizer = Standardizer {
        features: ColumnStats::fit(&stream.initial.train.x),
        targets: None,
    };
    let mut net = init_network(&arch, &acts, &PriorSpec { weight_variance: a.prior_var }, substream(a.seed, "init", 0))?
        .with_standardizer(Some(standardizer));
    let cfg = TrainConfig {
        shuffle_each_epoch: false,
        prior_variance: a.prior_var,
        ..Default::default()
    };
    let mut results = Vec::with_capacity(a.steps + 1);
    let mut models = Vec::with_capacity(a.steps + 1);
    let mut instances = 0;
    let mut score = |net: &Network, step: usize, degrees: f64, test: &Dataset<f64>, instances: usize| -> Result<()> {
        let e = evaluate(net, &test.x, &test.y, true)?;
        results.push(StepResult {
            step,
            degrees,
            instances,
            accuracy: e.accuracy.unwrap_or(0.0),
            nll: e.nll,
        });
        Ok(())
    };
    let (trained, rep) = train(&net, &stream.initial.train, &cfg, None, |_| {})?;
    net = trained;
    instances += rep.instances;
    score(&net, 0, 0.0, &stream.initial.test, instances)?;
    models.push(net.clone());
    for (k, step) in stream.steps.iter().enumerate() {
        let (trained, rep) = train(&net, &step.train, &cfg, None, |_| {})?;
        net = trained;
        instances += rep.instances;
        score(&net, k + 1, step.degrees, &step.test, instances)?;
        models.push(net.clone());
    }
    Ok((results, models))
}

pub fn cmd_rotating_moons(a: &RotatingArgs) -> Result<Vec<StepResult>> {
    let (results, models) = rotating_moons(a)?;
    let dir = &a.output_dir;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let header: Vec<String> = ["step", "degrees", "instances", "accuracy", "nll"].iter().map(|s| s.to_string()).collect();
    let rows = results.iter().map(|r| {
        vec![
            r.step.to_string(),
            r.degrees.to_string(),
            r.instances.to_string(),
            r.accuracy.to_string(),
            r.nll.to_string(),
        ]
    });
    write_output(Some(&dir.join("accuracy.csv")), &csv_text(&header, rows)?)?;
    let e = a.grid_extent;
    let grids: Vec<String> = worker_pool()?.install(|| {
        models
            .par_iter()
            .map(|m| grid_csv(m, (-e, e), (-e, e), a.grid_resolution))
            .collect::<Result<_>>()
    })?;
    for (k, g) in grids.iter().enumerate() {
        write_output(Some(&dir.join(format!("grid_step_{k:02}.csv"))), g)?;
    }
    let body = RotatingBody {
        arch: parse_arch(&a.arch)?,
        activations: parse_activations(&a.act)?.iter().map(|x| x.to_string()).collect(),
        prior_variance: a.prior_var,
        seed: a.seed,
        steps: &results,
    };
    write_output(Some(&dir.join("report.json")), &Report::new("rotating-moons", body).to_json())?;
    Ok(results)
}
