//! Group k-fold splitting and log-uniform random hyperparameter search.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::rng::{self, stage};

pub const DEFAULT_FOLDS: usize = 6;
pub const DEFAULT_BUDGET: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    k: usize,
    assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Fold index of every row.
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn validation_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Assigns whole groups to `k` folds: groups are shuffled with the seed,
/// stably sorted by decreasing size, and each goes to the currently smallest
/// fold (lowest index on ties).
pub fn group_kfold<S: AsRef<str>>(group_ids: &[S], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut sizes: Vec<usize> = Vec::new();
    let row_group: Vec<usize> = group_ids
        .iter()
        .map(|g| {
            let next = index.len();
            let id = *index.entry(g.as_ref()).or_insert(next);
            if id == sizes.len() {
                sizes.push(0);
            }
            sizes[id] += 1;
            id
        })
        .collect();
    if sizes.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} distinct groups cannot fill {k} folds",
            sizes.len()
        )));
    }

    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.shuffle(&mut rng::stream(seed, stage::FOLDS, 0));
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]));

    let mut load = vec![0usize; k];
    let mut group_fold = vec![0usize; sizes.len()];
    for g in order {
        let fold = (0..k).min_by_key(|&f| (load[f], f)).unwrap_or(0);
        group_fold[g] = fold;
        load[fold] += sizes[g];
    }
    Ok(FoldPlan {
        k,
        assignments: row_group.iter().map(|&g| group_fold[g]).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub name: String,
    pub low: f64,
    pub high: f64,
    #[serde(default = "default_log")]
    pub log: bool,
}

fn default_log() -> bool {
    true
}

impl ParamRange {
    pub fn log(name: &str, low: f64, high: f64) -> Self {
        ParamRange {
            name: name.to_string(),
            low,
            high,
            log: true,
        }
    }

    fn sample(&self, rng: &mut rng::Rng) -> f64 {
        let u: f64 = rng.random();
        if self.log {
            (self.low.ln() + u * (self.high.ln() - self.low.ln())).exp()
        } else {
            self.low + u * (self.high - self.low)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<ParamRange>,
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SearchSpace {
    /// Regularization constant of the KELM, `C` in `[1e-7, 1e2]`.
    pub fn kelm(budget: usize, seed: u64) -> Self {
        SearchSpace {
            params: vec![ParamRange::log("c", 1e-7, 1e2)],
            budget,
            seed,
        }
    }

    /// Learning rate and both adversarial weights in `[1e-7, 1e-2]`.
    pub fn adversarial(budget: usize, seed: u64) -> Self {
        SearchSpace {
            params: ["learning_rate", "lambda1", "lambda2"]
                .iter()
                .map(|n| ParamRange::log(n, 1e-7, 1e-2))
                .collect(),
            budget,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidArgument("search budget must be at least 1".into()));
        }
        if self.params.is_empty() {
            return Err(Error::InvalidArgument("search space has no parameters".into()));
        }
        for p in &self.params {
            let ordered = p.low.is_finite() && p.high.is_finite() && p.low < p.high;
            if !ordered || (p.log && p.low <= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "invalid range [{}, {}] for {}",
                    p.low, p.high, p.name
                )));
            }
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.params.iter().map(|p| p.name.as_str()).collect()
    }

    /// The `budget` candidates, in evaluation order.
    pub fn candidates(&self) -> Vec<Vec<f64>> {
        let mut rng = rng::stream(self.seed, stage::SEARCH, 0);
        (0..self.budget)
            .map(|_| self.params.iter().map(|p| p.sample(&mut rng)).collect())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub index: usize,
    pub values: Vec<f64>,
    pub fold_scores: Vec<f64>,
    /// `None` when the candidate was discarded.
    pub mean: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub names: Vec<String>,
    pub rows: Vec<TraceRow>,
}

impl SearchTrace {
    /// `index,<params>,fold_0..,mean,note` rows; discarded candidates have an
    /// empty mean.
    pub fn to_csv(&self) -> String {
        let folds = self.rows.iter().map(|r| r.fold_scores.len()).max().unwrap_or(0);
        let mut out = String::from("index");
        for n in &self.names {
            let _ = write!(out, ",{n}");
        }
        for f in 0..folds {
            let _ = write!(out, ",fold_{f}");
        }
        out.push_str(",mean,note\n");
        for r in &self.rows {
            let _ = write!(out, "{}", r.index);
            for v in &r.values {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            for f in 0..folds {
                out.push(',');
                if let Some(s) = r.fold_scores.get(f) {
                    out.push_str(&fmt_f64(*s));
                }
            }
            out.push(',');
            if let Some(m) = r.mean {
                out.push_str(&fmt_f64(m));
            }
            let _ = writeln!(out, ",{}", r.note.replace([',', '\n'], ";"));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub best_index: usize,
    pub best: Vec<f64>,
    pub best_score: f64,
    pub trace: SearchTrace,
}

impl SearchResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        let i = self.trace.names.iter().position(|n| n == name)?;
        Some(self.best[i])
    }
}

/// Evaluates every candidate of `space` and returns the one with the highest
/// mean fold score. `objective` returns per-fold hold-out scores (higher is
/// better). Candidates with a non-finite mean or a numeric failure are
/// discarded and noted in the trace; other errors abort the search.
pub fn search<F>(space: &SearchSpace, objective: F) -> Result<SearchResult>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    search_with(space, |v| objective(v).map(|s| (s, ()))).map(|(r, _)| r)
}

/// [`search`] where the objective also yields a by-product per candidate,
/// returned in candidate order (`None` for failed candidates).
pub fn search_with<F, T>(space: &SearchSpace, objective: F) -> Result<(SearchResult, Vec<Option<T>>)>
where
    F: Fn(&[f64]) -> Result<(Vec<f64>, T)> + Sync,
    T: Send,
{
    space.validate()?;
    let candidates = space.candidates();
    let outcomes: Vec<Result<(TraceRow, Option<T>)>> = candidates
        .into_par_iter()
        .enumerate()
        .map(|(index, values)| {
            let (fold_scores, extra, note) = match objective(&values) {
                Ok((scores, extra)) => (scores, Some(extra), String::new()),
                Err(e) if e.is_numeric() => (Vec::new(), None, e.to_string()),
                Err(e) => return Err(e),
            };
            let mean = if fold_scores.is_empty() {
                None
            } else {
                Some(fold_scores.iter().sum::<f64>() / fold_scores.len() as f64).filter(|m| m.is_finite())
            };
            let note = match (&mean, note.is_empty()) {
                (None, true) => "non-finite score".to_string(),
                _ => note,
            };
            let extra = if mean.is_some() { extra } else { None };
            let row = TraceRow {
                index,
                values,
                fold_scores,
                mean,
                note,
            };
            Ok((row, extra))
        })
        .collect();
    let (rows, extras): (Vec<TraceRow>, Vec<Option<T>>) =
        outcomes.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();

    let mut best: Option<&TraceRow> = None;
    for row in &rows {
        if let Some(m) = row.mean {
            if best.is_none_or(|b| m > b.mean.unwrap_or(f64::NEG_INFINITY)) {
                best = Some(row);
            }
        }
    }
    let best = best.ok_or(Error::NoFiniteCandidate { evaluated: rows.len() })?;
    let (best_index, best_values, best_score) = (best.index, best.values.clone(), best.mean.unwrap_or(f64::NAN));
    let result = SearchResult {
        best_index,
        best: best_values,
        best_score,
        trace: SearchTrace {
            names: space.names().iter().map(|s| s.to_string()).collect(),
            rows,
        },
    };
    Ok((result, extras))
}
