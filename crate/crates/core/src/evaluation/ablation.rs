use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::MetricReport;
use crate::backbone::{BackboneConfig, ForecastModel, GraphModule, SkipSource};
use crate::bgcn::BayesianGraph;
use crate::data::Splits;
use crate::error::Result;
use crate::training::{train, TrainConfig, TrainReport};

/// A row of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    Full,
    /// Dropout rate 0: the graph is deterministic.
    NoUncertainty,
    /// φ fixed at zero.
    NoPhi,
    /// Constant adjacency replaced by the identity, so φ learns the structure alone.
    NoConstant,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoConstant, Ablation::NoUncertainty, Ablation::NoPhi];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoUncertainty => "no-uncertainty",
            Ablation::NoPhi => "no-phi",
            Ablation::NoConstant => "no-constant",
        }
    }

    pub fn parse(s: &str) -> Option<Ablation> {
        Ablation::ALL.into_iter().find(|a| a.name() == s)
    }

    /// The graph and training flags this row uses.
    pub fn configure(self, a_const: &Array2<f64>, dropout: f64, seed: u64, train: &TrainConfig) -> Result<(BayesianGraph, TrainConfig)> {
        let mut cfg = train.clone();
        let bg = match self {
            Ablation::Full => BayesianGraph::new(a_const.clone(), dropout, seed)?,
            Ablation::NoUncertainty => BayesianGraph::new(a_const.clone(), 0.0, seed)?,
            Ablation::NoPhi => {
                let mut bg = BayesianGraph::new(a_const.clone(), dropout, seed)?;
                bg.phi.fill(0.0);
                cfg.train_graph = false;
                bg
            }
            Ablation::NoConstant => BayesianGraph::new(Array2::eye(a_const.nrows()), dropout, seed)?,
        };
        Ok((bg, cfg))
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub result: std::result::Result<(TrainReport, MetricReport), String>,
}

fn fit_one(
    backbone: &BackboneConfig,
    skip: SkipSource,
    bg: BayesianGraph,
    splits: &Splits,
    cfg: &TrainConfig,
) -> Result<(TrainReport, MetricReport)> {
    let mut model = ForecastModel::new(backbone.clone(), GraphModule::Bayesian(bg), cfg.seed)?;
    model.skip_source = skip;
    let out = train(&mut model, splits, cfg)?;
    Ok((out.report, out.best_val))
}

/// Trains one model per requested row on shared splits and seed. A failing row records its
/// error and the remaining rows still run.
pub fn run_ablation(
    rows: &[Ablation],
    a_const: &Array2<f64>,
    dropout: f64,
    backbone: &BackboneConfig,
    skip: SkipSource,
    splits: &Splits,
    train_cfg: &TrainConfig,
) -> Vec<AblationRow> {
    rows.iter()
        .map(|&ablation| {
            let result = ablation
                .configure(a_const, dropout, train_cfg.seed, train_cfg)
                .and_then(|(bg, cfg)| fit_one(backbone, skip, bg, splits, &cfg))
                .map_err(|e| e.to_string());
            AblationRow { ablation, result }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub rate: f64,
    pub result: std::result::Result<(TrainReport, MetricReport), String>,
}

/// Trains the full model once per dropout rate with shared seed and splits.
pub fn sweep_dropout(
    rates: &[f64],
    a_const: &Array2<f64>,
    backbone: &BackboneConfig,
    skip: SkipSource,
    splits: &Splits,
    train_cfg: &TrainConfig,
) -> Vec<SweepRow> {
    rates
        .iter()
        .map(|&rate| {
            let result = BayesianGraph::new(a_const.clone(), rate, train_cfg.seed)
                .and_then(|bg| fit_one(backbone, skip, bg, splits, train_cfg))
                .map_err(|e| e.to_string());
            SweepRow { rate, result }
        })
        .collect()
}

/// Delimited table: `row,mae,rmse,mape_pct,best_epoch`.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("row,mae,rmse,mape_pct,best_epoch,error\n");
    for r in rows {
        match &r.result {
            Ok((rep, m)) => s.push_str(&format!(
                "{},{:.6},{:.6},{},{},\n",
                r.ablation.name(),
                m.mae,
                m.rmse,
                m.mape.map_or("undefined".into(), |v| format!("{v:.6}")),
                rep.best_epoch
            )),
            Err(e) => s.push_str(&format!("{},,,,,{}\n", r.ablation.name(), e.replace(',', ";"))),
        }
    }
    s
}

/// Delimited table: `rate,mae,rmse,mape_pct,best_epoch`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("rate,mae,rmse,mape_pct,best_epoch,error\n");
    for r in rows {
        match &r.result {
            Ok((rep, m)) => s.push_str(&format!(
                "{},{:.6},{:.6},{},{},\n",
                r.rate,
                m.mae,
                m.rmse,
                m.mape.map_or("undefined".into(), |v| format!("{v:.6}")),
                rep.best_epoch
            )),
            Err(e) => s.push_str(&format!("{},,,,,{}\n", r.rate, e.replace(',', ";"))),
        }
    }
    s
}
