//! End-to-end experiments: split, per-view tuning and fitting, stacking,
//! evaluation against the original labels, and artifacts.

mod config;
pub mod render;
mod skew;
mod target;
mod views;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use config::{
    setup_grid, CsvView, DataSource, EvalConfig, ExperimentConfig, Method, TuningConfig, ViewSpec,
};
pub use skew::{mc_skew, skew_trial, SkewPoint};
pub use target::TrainingTarget;
pub use views::{embed_views, load_views};

use crate::adversarial::{adv_predict, adv_train, AdvConfig, AdvTrace, MlpParams};
use crate::data::{minmax_fit_transform, Dataset, ProtectedAttr, CROSS_SEPARATOR};
use crate::error::{Error, Result, StageExt};
use crate::fair_transform::mse;
use crate::forest::{forest_fit, ForestModel, ForestParams};
use crate::kelm::{KelmModel, KernelSpec, Solver};
use crate::metrics::{build_report_with, maa, pcc_indicator, FairnessReport};
use crate::rng::{self, derive_seed, stage};
use crate::tuning::{group_kfold, search_with, FoldPlan, SearchResult};
use crate::fmt_f64;

/// p-value above which a prediction–group correlation counts as absent.
pub const COMPETENT_P_VALUE: f64 = 1e-3;

/// A model is competent when it beats the constant-mean baseline and shows
/// no significant correlation with the protected groups.
pub fn competent_region(maa: f64, pcc_p_value: f64, baseline_maa: f64) -> bool {
    maa > baseline_maa && pcc_p_value > COMPETENT_P_VALUE
}

/// Row indices of a group-disjoint train/test split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Sends a seeded `test_fraction` of the distinct groups (at least one, and
/// never all) to the test side.
pub fn group_split<S: AsRef<str>>(group_ids: &[S], test_fraction: f64, seed: u64) -> Result<Split> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let row_group: Vec<usize> = group_ids
        .iter()
        .map(|g| {
            let next = index.len();
            *index.entry(g.as_ref()).or_insert(next)
        })
        .collect();
    let n_groups = index.len();
    if n_groups < 2 {
        return Err(Error::InvalidArgument("a train/test split needs at least two groups".into()));
    }
    let n_test = ((test_fraction * n_groups as f64).round() as usize).clamp(1, n_groups - 1);
    let mut order: Vec<usize> = (0..n_groups).collect();
    order.shuffle(&mut rng::stream(seed, stage::SPLIT, 0));
    let mut is_test = vec![false; n_groups];
    for &g in &order[..n_test] {
        is_test[g] = true;
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..group_ids.len()).partition(|&i| is_test[row_group[i]]);
    Ok(Split { train, test })
}

/// One tuning candidate evaluated on pooled out-of-fold predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub model: String,
    pub index: usize,
    pub params: Vec<f64>,
    pub maa: f64,
    /// Indicator correlation with the largest magnitude over labels and
    /// categories of the training attribute.
    pub pcc: f64,
    pub p_value: f64,
    pub competent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scatter {
    pub attr: String,
    pub baseline_maa: f64,
    pub points: Vec<ScatterPoint>,
}

impl Scatter {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,index,params,maa,pcc,p_value,competent,baseline_maa\n");
        for p in &self.points {
            let params: Vec<String> = p.params.iter().map(|v| fmt_f64(*v)).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                p.model,
                p.index,
                params.join(";"),
                fmt_f64(p.maa),
                fmt_f64(p.pcc),
                fmt_f64(p.p_value),
                p.competent,
                fmt_f64(self.baseline_maa)
            );
        }
        out
    }

    pub fn competent_fraction(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().filter(|p| p.competent).count() as f64 / self.points.len() as f64
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &(serde_json::to_string_pretty(self)? + "\n"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Tuning outcome and final model of one view.
#[derive(Clone, Debug)]
pub struct ViewFit {
    pub search: SearchResult,
    pub model: KelmModel,
}

#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug)]
pub enum Trained {
    Stacked { views: Vec<ViewFit>, forests: Vec<ForestModel> },
    Adversarial { search: SearchResult, params: MlpParams, trace: AdvTrace },
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub split: Split,
    pub report: FairnessReport,
    pub scatter: Scatter,
    pub trained: Trained,
    pub test_ids: Vec<String>,
    pub label_names: Vec<String>,
    pub test_predictions: DMatrix<f64>,
}

/// Loads the data named by `config`, runs it and writes artifacts to
/// `config.output_dir` when set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let views = load_views(&config.data, config.seed).stage("data")?;
    let output = run_on_views(config, &views)?;
    if let Some(dir) = &config.output_dir {
        output.write(dir).stage("artifacts")?;
    }
    Ok(output)
}

struct Fold {
    train: Vec<usize>,
    val: Vec<usize>,
    target: TrainingTarget,
    attr_val: ProtectedAttr,
    attr_train: ProtectedAttr,
    y_val: DMatrix<f64>,
}

fn prepare_folds(plan: &FoldPlan, method: Method, y: &DMatrix<f64>, attr: &ProtectedAttr) -> Result<Vec<Fold>> {
    (0..plan.k())
        .map(|f| {
            let train = plan.train_rows(f);
            let val = plan.validation_rows(f);
            let attr_train = attr.select(&train);
            let target = TrainingTarget::fit(method, &y.select_rows(&train), &attr_train)?;
            Ok(Fold {
                attr_val: attr.select(&val),
                y_val: y.select_rows(&val),
                train,
                val,
                target,
                attr_train,
            })
        })
        .collect()
}

fn hconcat(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = blocks.first().map_or(0, |b| b.nrows());
    let width = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, width);
    let mut at = 0;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    out
}

fn write_rows(into: &mut DMatrix<f64>, rows: &[usize], values: &DMatrix<f64>) {
    for (k, &i) in rows.iter().enumerate() {
        into.row_mut(i).copy_from(&values.row(k));
    }
}

fn column(m: &DMatrix<f64>, j: usize) -> Vec<f64> {
    m.column(j).iter().copied().collect()
}

/// Mean MAA over labels of a constant predictor at each label's mean.
fn baseline_maa(y: &DMatrix<f64>) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..y.ncols() {
        let yj = column(y, j);
        let mean = yj.iter().sum::<f64>() / yj.len() as f64;
        total += maa(&yj, &vec![mean; yj.len()])?;
    }
    Ok(total / y.ncols() as f64)
}

fn scatter_point(
    model: &str,
    index: usize,
    params: &[f64],
    y: &DMatrix<f64>,
    p: &DMatrix<f64>,
    attr: &ProtectedAttr,
    baseline: f64,
) -> Result<ScatterPoint> {
    let mut total = 0.0;
    let (mut pcc, mut p_value) = (0.0, 1.0);
    for j in 0..y.ncols() {
        let (yj, pj) = (column(y, j), column(p, j));
        total += maa(&yj, &pj)?;
        for (_, category) in attr.present() {
            if let Ok(r) = pcc_indicator(&pj, attr, category) {
                if r.r.abs() > f64::abs(pcc) {
                    (pcc, p_value) = (r.r, r.p_value);
                }
            }
        }
    }
    let maa = total / y.ncols() as f64;
    Ok(ScatterPoint {
        model: model.to_string(),
        index,
        params: params.to_vec(),
        maa,
        pcc,
        p_value,
        competent: competent_region(maa, p_value, baseline),
    })
}

/// Attributes evaluated on the test rows.
fn eval_attributes(config: &ExperimentConfig, data: &Dataset) -> Result<Vec<ProtectedAttr>> {
    let names: Vec<String> = match &config.eval.attributes {
        Some(names) => names.clone(),
        None => {
            let mut names: Vec<String> = data.protected().iter().map(|a| a.name().to_string()).collect();
            if names.len() >= 2 {
                names.push(format!("{}{CROSS_SEPARATOR}{}", names[0], names[1]));
            }
            names
        }
    };
    names
        .iter()
        .map(|n| {
            let parts: Vec<&str> = n.split(CROSS_SEPARATOR).collect();
            data.protected_selection(&parts)
        })
        .collect()
}

/// Runs the protocol on already loaded views.
pub fn run_on_views(config: &ExperimentConfig, views: &[Dataset]) -> Result<ExperimentOutput> {
    config.validate()?;
    let base = views
        .first()
        .ok_or_else(|| Error::InvalidArgument("no views".into()))?;
    let seed = config.seed;
    let split = group_split(base.group_ids(), config.test_fraction, seed).stage("split")?;
    let attr = base.protected_selection(&config.protected).stage("protected")?;
    let attr_train = attr.select(&split.train);
    let y_train = base.labels().select_rows(&split.train);
    let groups_train: Vec<&str> = split.train.iter().map(|&i| base.group_ids()[i].as_str()).collect();
    let plan = group_kfold(&groups_train, config.tuning.k, derive_seed(seed, stage::FOLDS, 0)).stage("folds")?;
    let folds = prepare_folds(&plan, config.method, &y_train, &attr_train).stage("folds")?;
    let baseline = baseline_maa(&y_train)?;

    let scaled = views
        .iter()
        .map(|v| {
            let (train, test, _) = minmax_fit_transform(
                &v.features().select_rows(&split.train),
                &v.features().select_rows(&split.test),
            )?;
            Ok((train, test))
        })
        .collect::<Result<Vec<_>>>()
        .stage("scaling")?;

    let mut points = Vec::new();
    let (trained, test_predictions) = if config.method == Method::Adv {
        let x_train = hconcat(&scaled.iter().map(|s| s.0.clone()).collect::<Vec<_>>());
        let x_test = hconcat(&scaled.iter().map(|s| s.1.clone()).collect::<Vec<_>>());
        let space = config.tuning.adv_space(derive_seed(seed, stage::SEARCH, views.len() as u64));
        let fold_x: Vec<(DMatrix<f64>, DMatrix<f64>)> = folds
            .iter()
            .map(|f| (x_train.select_rows(&f.train), x_train.select_rows(&f.val)))
            .collect();
        let adv_config = |values: &[f64], stream: usize| AdvConfig {
            learning_rate: values[0],
            lambda1: values[1],
            lambda2: values[2],
            seed: derive_seed(seed, stage::ADVERSARIAL, stream as u64),
            ..config.adversarial.clone()
        };
        let (search, oof) = search_with(&space, |values| {
            let mut scores = Vec::with_capacity(folds.len());
            let mut oof = DMatrix::zeros(y_train.nrows(), y_train.ncols());
            for (f, (fold, (xf, xv))) in folds.iter().zip(&fold_x).enumerate() {
                let yf = &fold.target.values;
                let (params, _) = adv_train(xf, yf, &fold.attr_train, &adv_config(values, f))?;
                let p = adv_predict(&params, xv)?;
                scores.push(-fold.target.holdout_loss(&fold.y_val, &fold.attr_val, &p)?);
                write_rows(&mut oof, &fold.val, &p);
            }
            Ok((scores, oof))
        })
        .stage("tuning adversarial")?;
        for (row, p) in search.trace.rows.iter().zip(&oof) {
            if let Some(p) = p {
                points.push(scatter_point("adv", row.index, &row.values, &y_train, p, &attr_train, baseline)?);
            }
        }
        let target = TrainingTarget::fit(Method::Adv, &y_train, &attr_train)?;
        let (params, trace) = adv_train(&x_train, &target.values, &attr_train, &adv_config(&search.best, folds.len()))
            .stage("training adversarial")?;
        let predictions = adv_predict(&params, &x_test)?;
        (Trained::Adversarial { search, params, trace }, predictions)
    } else {
        let target = TrainingTarget::fit(config.method, &y_train, &attr_train).stage("targets")?;
        let mut fits = Vec::with_capacity(views.len());
        let mut stack_train = Vec::with_capacity(views.len());
        let mut stack_test = Vec::with_capacity(views.len());
        for (v, (x_train, x_test)) in scaled.iter().enumerate() {
            let name = format!("view{v}");
            let space = config.tuning.kelm_space(derive_seed(seed, stage::SEARCH, v as u64));
            let fold_x: Vec<(DMatrix<f64>, DMatrix<f64>)> = folds
                .iter()
                .map(|f| (x_train.select_rows(&f.train), x_train.select_rows(&f.val)))
                .collect();
            let (search, mut oof) = search_with(&space, |values| {
                let mut scores = Vec::with_capacity(folds.len());
                let mut oof = DMatrix::zeros(y_train.nrows(), y_train.ncols());
                for (fold, (xf, xv)) in folds.iter().zip(&fold_x) {
                    let model = KelmModel::fit(
                        xf,
                        &fold.target.values,
                        values[0],
                        KernelSpec::Linear,
                        fold.target.weights.as_deref(),
                        Solver::Auto,
                    )?;
                    let p = model.predict(xv)?;
                    scores.push(-fold.target.holdout_loss(&fold.y_val, &fold.attr_val, &p)?);
                    write_rows(&mut oof, &fold.val, &p);
                }
                Ok((scores, oof))
            })
            .stage(&format!("tuning {name}"))?;
            for (row, p) in search.trace.rows.iter().zip(&oof) {
                if let Some(p) = p {
                    points.push(scatter_point(&name, row.index, &row.values, &y_train, p, &attr_train, baseline)?);
                }
            }
            let model = KelmModel::fit(
                x_train,
                &target.values,
                search.best[0],
                KernelSpec::Linear,
                target.weights.as_deref(),
                Solver::Auto,
            )
            .stage(&format!("fitting {name}"))?;
            stack_test.push(model.predict(x_test)?);
            stack_train.push(oof[search.best_index].take().expect("best candidate has predictions"));
            fits.push(ViewFit { search, model });
        }

        let stack_train = hconcat(&stack_train);
        let stack_test = hconcat(&stack_test);
        let mut forests = Vec::with_capacity(y_train.ncols());
        let mut predictions = DMatrix::zeros(split.test.len(), y_train.ncols());
        for j in 0..y_train.ncols() {
            let params = ForestParams {
                seed: derive_seed(seed, stage::FOREST, j as u64),
                ..config.stack.clone()
            };
            let forest = forest_fit(&stack_train, &column(&target.values, j), &params, target.weights.as_deref())
                .stage("stacking")?;
            let p = forest.predict(&stack_test)?;
            predictions.set_column(j, &nalgebra::DVector::from_vec(p));
            forests.push(forest);
        }
        (Trained::Stacked { views: fits, forests }, predictions)
    };

    let test = base.subset(&split.test);
    let eval_attrs = eval_attributes(config, &test).stage("evaluation")?;
    let report = build_report_with(
        test.labels(),
        &test_predictions,
        &eval_attrs,
        test.label_names(),
        config.eval.neighbors,
    )
    .stage("evaluation")?;

    Ok(ExperimentOutput {
        config: config.clone(),
        report,
        scatter: Scatter {
            attr: attr.name().to_string(),
            baseline_maa: baseline,
            points,
        },
        trained,
        test_ids: test.sample_ids().to_vec(),
        label_names: test.label_names().to_vec(),
        test_predictions,
        split,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

impl ExperimentOutput {
    /// Test-set predictions as `id,<labels>` rows.
    pub fn predictions_csv(&self) -> String {
        let mut out = format!("id,{}\n", self.label_names.join(","));
        for (i, id) in self.test_ids.iter().enumerate() {
            out.push_str(id);
            for v in self.test_predictions.row(i).iter() {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    /// Mean squared error of the test predictions against the original labels.
    pub fn test_mse(&self, labels: &DMatrix<f64>) -> f64 {
        let y = labels.select_rows(&self.split.test);
        (0..y.ncols())
            .map(|j| mse(&column(&y, j), &column(&self.test_predictions, j)))
            .sum::<f64>()
            / y.ncols() as f64
    }

    /// Writes the report, scatter data, rendered tables, predictions, tuning
    /// traces and fitted models into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("config.json"), &self.config.to_json()?)?;
        self.report.save(dir.join("report.json"))?;
        self.scatter.save(dir.join("scatter.json"))?;
        write_file(&dir.join("scatter.csv"), &self.scatter.to_csv())?;
        write_file(&dir.join("predictions.csv"), &self.predictions_csv())?;
        write_file(&dir.join("split.json"), &to_json(&self.split)?)?;
        render::write_all(&self.report, Some(&self.scatter), dir)?;
        match &self.trained {
            Trained::Stacked { views, forests } => {
                for (v, fit) in views.iter().enumerate() {
                    write_file(&dir.join(format!("tuning_view{v}.csv")), &fit.search.trace.to_csv())?;
                    fit.model.save(dir.join(format!("kelm_view{v}.json")))?;
                }
                for (label, forest) in self.label_names.iter().zip(forests) {
                    write_file(&dir.join(format!("forest_{label}.json")), &to_json(forest)?)?;
                }
            }
            Trained::Adversarial { search, params, trace } => {
                write_file(&dir.join("tuning_adv.csv"), &search.trace.to_csv())?;
                write_file(&dir.join("adv_model.json"), &to_json(params)?)?;
                write_file(&dir.join("adv_training.csv"), &trace.to_csv())?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn competent_region_is_strict() {
        assert!(!competent_region(0.9, 0.5, 0.9));
        assert!(competent_region(0.91, 0.5, 0.9));
        assert!(!competent_region(0.95, 1e-3, 0.9));
        assert!(!competent_region(0.95, 1e-4, 0.9));
    }

    #[test]
    fn constant_predictor_is_not_competent() {
        let y = DMatrix::from_column_slice(6, 1, &[0.1, 0.4, 0.5, 0.6, 0.2, 0.8]);
        let attr = ProtectedAttr::from_labels("g", &["a", "b", "a", "b", "a", "b"]).unwrap();
        let baseline = baseline_maa(&y).unwrap();
        let p = DMatrix::from_element(6, 1, y.mean());
        let point = scatter_point("c", 0, &[], &y, &p, &attr, baseline).unwrap();
        assert_eq!(point.maa, baseline);
        assert_eq!(point.p_value, 1.0);
        assert!(!point.competent);
    }

    #[test]
    fn split_is_group_disjoint() {
        let groups: Vec<String> = (0..100).map(|i| format!("g{}", i / 4)).collect();
        let split = group_split(&groups, 0.2, 3).unwrap();
        assert_eq!(split.test.len(), 20);
        assert_eq!(split.train.len() + split.test.len(), 100);
        for &i in &split.test {
            assert!(split.train.iter().all(|&j| groups[j] != groups[i]));
        }
        assert_eq!(split, group_split(&groups, 0.2, 3).unwrap());
    }

    #[test]
    fn split_keeps_both_sides_nonempty() {
        let groups = ["a", "a", "b"];
        let split = group_split(&groups, 0.01, 0).unwrap();
        assert!(!split.test.is_empty() && !split.train.is_empty());
        assert!(group_split(&["a", "a"], 0.5, 0).is_err());
    }
}
