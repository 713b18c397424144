use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use ndarray::{s, Array2};

use bgcn_core::backbone::{load_checkpoint, mc_predict, save_checkpoint, Checkpoint, GraphModule};
use bgcn_core::config::{Config, GraphKind};
use bgcn_core::data::{
    load_distance_csv, load_matrix_csv, load_node_ids, load_traffic, write_matrix_csv, Split,
};
use bgcn_core::evaluation::{
    ablation_csv, dataset_targets, denormalize, evaluate, metrics, run_ablation, sweep_csv, sweep_dropout,
    weekly_season, Ablation, EvalOptions, HistoricalAverage,
};
use bgcn_core::gvae::{gvae_train_adjacency, NodeEmbeddings};
use bgcn_core::pipeline::{build_model, graph_from_embeddings, prepare, Prepared};
use bgcn_core::synthetic::generate;
use bgcn_core::training::train;
use bgcn_core::Error;

use crate::plot;
use crate::{CliError, Command, Global};

const MANIFEST: &str = "manifest.json";
const OBSERVED: &str = "observed_adjacency.csv";
const EMBEDDINGS: &str = "embeddings.txt";
const A_CONST: &str = "a_const.csv";
const BEST: &str = "checkpoint_best.json";
const FINAL: &str = "checkpoint_final.json";

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    negative_fraction: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Defaults to the best-validation checkpoint in the output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Monte Carlo samples; omitted means the deterministic expected graph.
    #[arg(long)]
    mc: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Comma-separated subset of full,no-constant,no-uncertainty,no-phi.
    #[arg(long, value_delimiter = ',')]
    rows: Option<Vec<String>>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Comma-separated dropout rates; defaults to the `sweep_rates` key.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn require(path: PathBuf) -> Result<PathBuf, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Io(format!("missing artifact {}", path.display())))
    }
}

fn load_config(g: &Global) -> Result<Config, CliError> {
    let mut cfg = match &g.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.apply_env(std::env::vars())?;
    if let Some(seed) = g.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(g: &Global, cfg: &Config) -> Result<Prepared, CliError> {
    let bin = g.data.join("traffic.bin");
    let traffic = if bin.exists() { bin } else { g.data.join("traffic.csv") };
    let raw = load_traffic(&[traffic.as_path()])?;
    let distances = load_distance_csv(&g.data.join("distances.csv"))?;
    let ids_path = g.data.join("node_ids.txt");
    let ids = if ids_path.exists() { load_node_ids(&ids_path)? } else { raw.node_ids.clone() };
    Ok(prepare(ids, distances, &raw, cfg)?)
}

fn out_dir(g: &Global) -> Result<&Path, CliError> {
    fs::create_dir_all(&g.out).map_err(|e| io_err(&g.out, e))?;
    Ok(&g.out)
}

fn constant_graph(g: &Global, cfg: &Config, n: usize) -> Result<Array2<f64>, CliError> {
    match cfg.graph_kind {
        GraphKind::Bayesian => Ok(load_matrix_csv(&require(g.out.join(A_CONST))?)?),
        GraphKind::Adaptive => Ok(Array2::eye(n)),
    }
}

pub fn run(g: &Global, cmd: Command) -> Result<(), CliError> {
    let cfg = load_config(g)?;
    match cmd {
        Command::Synth(a) => synth(g, cfg, a),
        Command::Prepare => prepare_cmd(g, &cfg),
        Command::Embed => embed(g, &cfg),
        Command::InferGraph => infer_graph(g, &cfg),
        Command::Train => train_cmd(g, &cfg),
        Command::Eval(a) => eval_cmd(g, &cfg, &a),
        Command::Ablate(a) => ablate(g, &cfg, &a),
        Command::SweepDropout(a) => sweep(g, &cfg, &a),
        Command::Predict(a) => predict(g, &cfg, &a),
        Command::Plot => plot_cmd(g),
    }
}

fn synth(g: &Global, cfg: Config, a: SynthArgs) -> Result<(), CliError> {
    let mut spec = cfg.synth;
    spec.n_nodes = a.nodes.unwrap_or(spec.n_nodes);
    spec.days = a.days.unwrap_or(spec.days);
    spec.negative_edge_fraction = a.negative_fraction.unwrap_or(spec.negative_edge_fraction);
    spec.noise_std = a.noise_std.unwrap_or(spec.noise_std);
    spec.daily_amplitude = a.amplitude.unwrap_or(spec.daily_amplitude);
    let d = generate(&spec)?;
    d.write_to(&g.data)?;
    println!(
        "wrote {} nodes x {} steps to {}",
        spec.n_nodes,
        d.tensor.num_steps(),
        g.data.display()
    );
    Ok(())
}

fn prepare_cmd(g: &Global, cfg: &Config) -> Result<(), CliError> {
    let p = load_data(g, cfg)?;
    let out = out_dir(g)?;
    p.manifest.save(&out.join(MANIFEST))?;
    write_matrix_csv(&out.join(OBSERVED), &p.road.observed_adjacency)?;
    let m = &p.manifest;
    println!(
        "N={} steps={} dropped={} xi={:.4} epsilon={} windows train/val/test={}/{}/{}",
        m.node_ids.len(),
        m.total_steps,
        m.dropped_steps.len(),
        m.xi,
        m.epsilon,
        m.split_sizes[0],
        m.split_sizes[1],
        m.split_sizes[2]
    );
    Ok(())
}

fn embed(g: &Global, cfg: &Config) -> Result<(), CliError> {
    let p = load_data(g, cfg)?;
    let (emb, trace) = gvae_train_adjacency(p.road.symmetrized().view(), &cfg.gvae)?;
    let out = out_dir(g)?;
    write(&out.join(EMBEDDINGS), emb.to_text())?;
    let mut loss = String::from("epoch,loss\n");
    for (i, l) in trace.iter().enumerate() {
        loss.push_str(&format!("{},{l}\n", i + 1));
    }
    write(&out.join("gvae_loss.csv"), loss)?;
    println!("embedded {} nodes in {} dimensions; final loss {:.6}", emb.vectors.nrows(), emb.dim(), trace.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn infer_graph(g: &Global, cfg: &Config) -> Result<(), CliError> {
    let path = require(g.out.join(EMBEDDINGS))?;
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let cg = graph_from_embeddings(NodeEmbeddings::from_text(&text)?, cfg)?;
    let out = out_dir(g)?;
    write_matrix_csv(&out.join("z.csv"), cg.z.matrix())?;
    write_matrix_csv(&out.join("map_adjacency.csv"), &cg.map.adjacency)?;
    write_matrix_csv(&out.join(A_CONST), &cg.a_const)?;
    let mut trace = String::from("iteration,objective\n");
    for (i, v) in cg.map.objective_trace.iter().enumerate() {
        trace.push_str(&format!("{i},{v}\n"));
    }
    write(&out.join("map_objective.csv"), trace)?;
    if !cg.map.converged {
        eprintln!("warning: graph solver stopped after {} iterations without converging", cg.map.iterations);
    }
    println!("solved in {} iterations; objective {:.6}", cg.map.iterations, cg.map.final_objective().unwrap_or(f64::NAN));
    Ok(())
}

fn train_cmd(g: &Global, cfg: &Config) -> Result<(), CliError> {
    let p = load_data(g, cfg)?;
    let a = constant_graph(g, cfg, p.road.num_nodes())?;
    let mut model = build_model(cfg, &a, p.normalized.num_features())?;
    let outcome = train(&mut model, &p.splits, &cfg.train)?;
    let out = out_dir(g)?;
    let best_path = out.join(BEST);
    save_checkpoint(&best_path, &Checkpoint::new(outcome.best.clone(), Some(outcome.report.best_epoch)))?;
    save_checkpoint(&out.join(FINAL), &Checkpoint::new(model, Some(cfg.train.epochs)))?;
    let mut report = outcome.report;
    report.best_checkpoint = Some(best_path.display().to_string());
    write(&out.join("train_report.jsonl"), report.to_json_lines()?)?;
    let summary = serde_json::json!({
        "best_epoch": report.best_epoch,
        "best_checkpoint": report.best_checkpoint,
        "first_graph_grad_norm": report.first_graph_grad_norm,
        "best_val": outcome.best_val,
        "final_val": outcome.final_val,
    });
    write(&out.join("train_summary.json"), serde_json::to_string_pretty(&summary).map_err(Error::from)?)?;
    println!("best epoch {}: val {}", report.best_epoch, outcome.best_val);
    println!("final epoch {}: val {}", cfg.train.epochs, outcome.final_val);
    Ok(())
}

fn checkpoint_path(g: &Global, a: &EvalArgs) -> Result<PathBuf, CliError> {
    require(a.checkpoint.clone().unwrap_or_else(|| g.out.join(BEST)))
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}

fn eval_cmd(g: &Global, cfg: &Config, a: &EvalArgs) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&checkpoint_path(g, a)?)?;
    let p = load_data(g, cfg)?;
    let split: Split = a.split.into();
    let ds = p.splits.get(split);
    let opts = EvalOptions {
        batch_size: cfg.train.batch_size,
        mc_samples: a.mc,
        seed: cfg.seed,
        mask_zero: cfg.train.mask_zero,
    };
    let scaler = p.splits.scaler.as_ref();
    let ev = evaluate(&ckpt.model, ds, scaler, &opts)?;
    let season = weekly_season(p.manifest.interval_minutes);
    let ha = HistoricalAverage::fit(ds.series().view(), p.splits.boundaries[0], season)?;
    let d_out = ckpt.model.config.features_out;
    let mut ha_pred = ha.forecast(ds).slice(s![.., .., .., ..d_out]).to_owned();
    denormalize(&mut ha_pred, scaler);
    let mut target = dataset_targets(ds, d_out);
    denormalize(&mut target, scaler);
    let ha_report = metrics(ha_pred.view(), target.view(), cfg.train.mask_zero)?;
    let out = out_dir(g)?;
    let name = split_name(split);
    write(&out.join(format!("metrics_{name}.tsv")), ev.report.to_table())?;
    write(&out.join(format!("metrics_ha_{name}.tsv")), ha_report.to_table())?;
    println!("model {name}: {}", ev.report);
    println!("historical average {name}: {}", ha_report);
    if ha.fallback {
        eprintln!("warning: training span shorter than one season; unseen phases use the overall mean");
    }
    println!("MAPE excludes zero targets when mask_zero is set; compare with published figures accordingly");
    Ok(())
}

fn predict(g: &Global, cfg: &Config, a: &EvalArgs) -> Result<(), CliError> {
    let ckpt = load_checkpoint(&checkpoint_path(g, a)?)?;
    let p = load_data(g, cfg)?;
    let split: Split = a.split.into();
    let ds = p.splits.get(split);
    if ds.is_empty() {
        return Err(Error::Degenerate(format!("{} split has no windows", split_name(split))).into());
    }
    let scaler = p.splits.scaler.as_ref();
    let idx = ds.all_indices();
    let x = ds.inputs(&idx);
    let (mut mean, std) = match a.mc {
        Some(samples) => {
            let mc = mc_predict(&ckpt.model, x.view(), samples, cfg.seed)?;
            let mut sd = mc.std();
            if let Some(sc) = scaler {
                for (f, mut lane) in sd.axis_iter_mut(ndarray::Axis(3)).enumerate() {
                    lane.mapv_inplace(|v| v * sc.std[f]);
                }
            }
            (mc.mean, Some(sd))
        }
        None => (ckpt.model.predict(x.view())?, None),
    };
    denormalize(&mut mean, scaler);
    let mut target = dataset_targets(ds, ckpt.model.config.features_out);
    denormalize(&mut target, scaler);
    let mut text = String::from("window,start,node,horizon,prediction,std,target\n");
    for ((b, n, h, f), v) in mean.indexed_iter() {
        if f != 0 {
            continue;
        }
        let sd = std.as_ref().map_or(String::new(), |s| s[[b, n, h, f]].to_string());
        text.push_str(&format!("{b},{},{},{},{v},{sd},{}\n", ds.starts()[b], p.manifest.node_ids[n], h + 1, target[[b, n, h, f]]));
    }
    let out = out_dir(g)?;
    let path = out.join(format!("predictions_{}.csv", split_name(split)));
    write(&path, text)?;
    println!("wrote {} windows to {}", mean.dim().0, path.display());
    Ok(())
}

fn ablate(g: &Global, cfg: &Config, a: &AblateArgs) -> Result<(), CliError> {
    let rows = match &a.rows {
        Some(names) => names
            .iter()
            .map(|n| Ablation::parse(n.trim()).ok_or_else(|| CliError::Usage(format!("unknown ablation row '{n}'"))))
            .collect::<Result<Vec<_>, _>>()?,
        None => Ablation::ALL.to_vec(),
    };
    let p = load_data(g, cfg)?;
    let a_const = load_matrix_csv(&require(g.out.join(A_CONST))?)?;
    let backbone = cfg.backbone(p.road.num_nodes(), p.normalized.num_features());
    let table = run_ablation(&rows, &a_const, cfg.dropout_rate, &backbone, cfg.skip_source, &p.splits, &cfg.train);
    let out = out_dir(g)?;
    let csv = ablation_csv(&table);
    write(&out.join("ablation.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn sweep(g: &Global, cfg: &Config, a: &SweepArgs) -> Result<(), CliError> {
    let rates = a.rates.clone().unwrap_or_else(|| cfg.sweep_rates.clone());
    if let Some(r) = rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return Err(CliError::Usage(format!("dropout rate {r} outside [0, 1)")));
    }
    let p = load_data(g, cfg)?;
    let a_const = load_matrix_csv(&require(g.out.join(A_CONST))?)?;
    let backbone = cfg.backbone(p.road.num_nodes(), p.normalized.num_features());
    let rows = sweep_dropout(&rates, &a_const, &backbone, cfg.skip_source, &p.splits, &cfg.train);
    let out = out_dir(g)?;
    let csv = sweep_csv(&rows);
    write(&out.join("dropout_sweep.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn off_diagonal(m: &Array2<f64>) -> Vec<f64> {
    m.indexed_iter().filter(|((i, j), _)| i != j).map(|(_, &v)| v).collect()
}

fn read_table(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(text
        .lines()
        .skip(1)
        .map(|l| l.split(['\t', ',']).map(String::from).collect())
        .collect())
}

fn plot_cmd(g: &Global) -> Result<(), CliError> {
    if !g.out.is_dir() {
        return Err(CliError::Io(format!("missing artifact directory {}", g.out.display())));
    }
    let dir = g.out.join("plots");
    let mut drawn = Vec::new();
    let ensure = |d: &Path| fs::create_dir_all(d).map_err(|e| io_err(d, e));

    let observed = g.out.join(OBSERVED);
    if observed.exists() {
        ensure(&dir)?;
        let m = load_matrix_csv(&observed)?;
        plot::heatmap(&m, &dir, "observed_adjacency")?;
        plot::histogram(&off_diagonal(&m), 20, &dir, "observed_weights")?;
        drawn.push("observed_adjacency");
    }
    let a_const = g.out.join(A_CONST);
    if a_const.exists() {
        ensure(&dir)?;
        let m = load_matrix_csv(&a_const)?;
        plot::heatmap(&m, &dir, "constant_adjacency")?;
        plot::histogram(&off_diagonal(&m), 20, &dir, "constant_weights")?;
        drawn.push("constant_adjacency");
    }
    let best = g.out.join(BEST);
    if best.exists() {
        ensure(&dir)?;
        let ck = load_checkpoint(&best)?;
        match &ck.model.graph {
            GraphModule::Bayesian(bg) => {
                plot::heatmap(&bg.combined(), &dir, "combined_adjacency")?;
                plot::heatmap(&bg.phi, &dir, "phi")?;
                plot::histogram(&off_diagonal(&bg.combined()), 20, &dir, "combined_weights")?;
            }
            GraphModule::Adaptive(ad) => plot::heatmap(&ad.adjacency(), &dir, "adaptive_adjacency")?,
        }
        drawn.push("checkpoint");
    }
    for split in ["val", "test"] {
        let path = g.out.join(format!("metrics_{split}.tsv"));
        if !path.exists() {
            continue;
        }
        ensure(&dir)?;
        let rows: Vec<Vec<String>> = read_table(&path)?.into_iter().filter(|r| r[0] != "avg").collect();
        let x: Vec<f64> = rows.iter().filter_map(|r| r[0].parse().ok()).collect();
        let col = |k: usize| rows.iter().map(|r| r[k].parse().unwrap_or(f64::NAN)).collect::<Vec<f64>>();
        plot::lines(&x, &[("mae", col(1), plot::BLUE), ("rmse", col(2), plot::RED)], &dir, &format!("horizon_metrics_{split}"))?;
        drawn.push("metrics");
    }
    for split in ["val", "test"] {
        let path = g.out.join(format!("predictions_{split}.csv"));
        if !path.exists() {
            continue;
        }
        ensure(&dir)?;
        let rows = read_table(&path)?;
        let Some(first) = rows.first().map(|r| r[2].clone()) else { continue };
        let trace: Vec<&Vec<String>> = rows.iter().filter(|r| r[2] == first && r[3] == "1").collect();
        let x: Vec<f64> = trace.iter().map(|r| r[1].parse().unwrap_or(f64::NAN)).collect();
        let pred: Vec<f64> = trace.iter().map(|r| r[4].parse().unwrap_or(f64::NAN)).collect();
        let truth: Vec<f64> = trace.iter().map(|r| r[6].parse().unwrap_or(f64::NAN)).collect();
        plot::lines(&x, &[("prediction", pred, plot::RED), ("truth", truth, plot::BLUE)], &dir, &format!("trace_{split}_node{first}"))?;
        drawn.push("predictions");
    }
    if drawn.is_empty() {
        return Err(CliError::Io(format!("no plottable artifacts in {}", g.out.display())));
    }
    println!("plots written to {}", dir.display());
    Ok(())
}
