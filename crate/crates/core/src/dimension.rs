//! Finite-index surrogates for comparing dimensions of definable sets.
//!
//! A set's dimension is read off the logarithm of its size along a family.
//! Two sets compare equal when the log-ratio of their sizes stays inside a
//! band of width τ, and one is larger when the log-ratio leaves the band and
//! keeps growing. These are heuristics over finitely many indices: every
//! verdict carries the log-ratios it was computed from and the thresholds.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::engine::{exec, Count, EngineConfig, EngineError};
use crate::families::{bind_selector, count_family, CardinalitySequence, FamilyError, FamilyHandle};
use crate::logic::{free_variables, Formula};

#[derive(Debug, Error)]
pub enum DimensionError {
    #[error("index lists differ: {0:?} vs {1:?}")]
    IndexMismatch(Vec<u64>, Vec<u64>),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Log-ratio band for "equal".
    pub tau: f64,
    /// First index position used for "equal"; `None` means half the samples.
    #[serde(rename = "burnIn")]
    pub burn_in: Option<usize>,
    /// Single-linkage gap for spectra.
    pub gamma: f64,
    /// Fewer samples than this give "undetermined".
    #[serde(rename = "minSamples")]
    pub min_samples: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            tau: 10f64.ln(),
            burn_in: None,
            gamma: 2f64.ln(),
            min_samples: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Equal,
    Less,
    Greater,
    Undetermined,
}

impl Classification {
    pub fn flip(self) -> Self {
        match self {
            Classification::Less => Classification::Greater,
            Classification::Greater => Classification::Less,
            c => c,
        }
    }
}

/// Writes ±inf as strings, since JSON has no infinities.
fn logs_json<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for &x in v {
        if x.is_finite() {
            seq.serialize_element(&x)?;
        } else if x > 0.0 {
            seq.serialize_element("inf")?;
        } else {
            seq.serialize_element("-inf")?;
        }
    }
    seq.end()
}

#[derive(Debug, Clone, Serialize)]
pub struct DeltaVerdict {
    pub classification: Classification,
    pub indices: Vec<u64>,
    #[serde(rename = "logRatios", serialize_with = "logs_json")]
    pub log_ratios: Vec<f64>,
    pub thresholds: Thresholds,
    pub reason: String,
}

fn log_ratio(x: &Count, y: &Count) -> f64 {
    match (x.is_zero(), y.is_zero()) {
        (true, true) => 0.0,
        _ => x.log_value() - y.log_value(),
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// Classifies `ln|X_i| - ln|Y_i|` along shared indices.
pub fn delta_compare(
    x: &CardinalitySequence,
    y: &CardinalitySequence,
    th: &Thresholds,
) -> Result<DeltaVerdict, DimensionError> {
    if x.indices() != y.indices() {
        return Err(DimensionError::IndexMismatch(x.indices(), y.indices()));
    }
    let lr: Vec<f64> = x
        .entries
        .iter()
        .zip(&y.entries)
        .map(|(a, b)| log_ratio(&a.count, &b.count))
        .collect();
    let (classification, reason) = classify(&lr, th);
    Ok(DeltaVerdict {
        classification,
        indices: x.indices(),
        log_ratios: lr,
        thresholds: *th,
        reason,
    })
}

/// The verdict rule on a list of log-ratios.
pub fn classify(lr: &[f64], th: &Thresholds) -> (Classification, String) {
    let n = lr.len();
    if n < th.min_samples.max(1) {
        return (
            Classification::Undetermined,
            format!("{n} samples, need {}", th.min_samples),
        );
    }
    let i0 = th.burn_in.unwrap_or(n / 2).min(n - 1);
    let worst = lr[i0..].iter().fold(0f64, |m, v| m.max(v.abs()));
    if worst <= th.tau {
        return (
            Classification::Equal,
            format!("max |log ratio| from position {i0} is {worst:.4} <= {:.4}", th.tau),
        );
    }
    let half = &lr[n / 2..];
    let last = lr[n - 1];
    // sets that are empty from the middle on diverge trivially
    let all = |sign: f64| half.iter().all(|&v| v == sign * f64::INFINITY);
    if last > th.tau && (strictly_increasing(half) || all(1.0)) {
        return (
            Classification::Greater,
            format!("final log ratio {last:.4} > {:.4} and increasing over the last half", th.tau),
        );
    }
    let neg: Vec<f64> = half.iter().map(|v| -v).collect();
    if last < -th.tau && (strictly_increasing(&neg) || all(-1.0)) {
        return (
            Classification::Less,
            format!("final log ratio {last:.4} < -{:.4} and decreasing over the last half", th.tau),
        );
    }
    (
        Classification::Undetermined,
        format!("max |log ratio| {worst:.4} exceeds {:.4} without a monotone trend", th.tau),
    )
}

/// One instance in a chain: a formula and the selector fixing its parameters.
#[derive(Debug, Clone)]
pub struct ChainStep {
    pub formula: Formula,
    pub selector: Vec<(String, String)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub steps: Vec<String>,
    /// `prefixes[i]` counts the conjunction of the first i + 1 steps.
    pub prefixes: Vec<CardinalitySequence>,
    pub verdicts: Vec<DeltaVerdict>,
    /// Number of leading steps whose successive conjunctions strictly drop.
    pub length: usize,
    /// Set when a prefix is empty at some index, which ends the chain.
    #[serde(rename = "terminatedAt")]
    pub terminated_at: Option<usize>,
    /// Prefix counts never increase along the chain.
    pub nested: bool,
}

/// Counts the nested conjunctions of `steps` and measures how long they
/// keep dropping in dimension.
pub fn chain_detect(
    steps: &[ChainStep],
    family: &FamilyHandle,
    indices: &[u64],
    th: &Thresholds,
    cfg: &EngineConfig,
) -> Result<ChainReport, DimensionError> {
    if steps.is_empty() {
        return Err(DimensionError::Invalid("a chain needs at least one step".into()));
    }
    let mut conj: Option<Formula> = None;
    let mut selector = Vec::new();
    let mut prefixes = Vec::new();
    for (i, step) in steps.iter().enumerate() {
        // parameters of different steps are distinct variables
        let rename: HashMap<String, String> = step
            .selector
            .iter()
            .map(|(v, _)| (v.clone(), format!("{v}_{}", i + 1)))
            .collect();
        let f = step.formula.rename_free(&rename);
        selector.extend(step.selector.iter().map(|(v, s)| (rename[v].clone(), s.clone())));
        conj = Some(match conj {
            None => f,
            Some(c) => c.and(f),
        });
        prefixes.push(count_family(conj.as_ref().expect("set"), family, indices, &selector, cfg)?);
    }
    let nested = prefixes
        .windows(2)
        .all(|w| w[0].entries.iter().zip(&w[1].entries).all(|(a, b)| a.count >= b.count));
    let terminated_at = prefixes
        .iter()
        .position(|p| p.entries.iter().any(|e| e.count.is_zero()));
    let mut verdicts = Vec::new();
    for w in prefixes.windows(2) {
        verdicts.push(delta_compare(&w[0], &w[1], th)?);
    }
    let mut length = 1;
    for (i, v) in verdicts.iter().enumerate() {
        if v.classification != Classification::Greater || terminated_at.is_some_and(|t| t <= i + 1) {
            break;
        }
        length += 1;
    }
    if terminated_at == Some(0) {
        length = 0;
    }
    Ok(ChainReport {
        steps: steps
            .iter()
            .map(|s| {
                let sel = crate::families::describe_selector(&s.selector);
                let f = crate::parser::render_formula(&s.formula);
                if sel.is_empty() {
                    f
                } else {
                    format!("{f} [{sel}]")
                }
            })
            .collect(),
        prefixes,
        verdicts,
        length,
        terminated_at,
        nested,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumAtIndex {
    pub index: u64,
    /// Number of parameter tuples up to automorphism.
    #[serde(rename = "parameterTypes")]
    pub parameter_types: usize,
    /// Distinct log-counts in increasing order.
    #[serde(rename = "logCounts", serialize_with = "logs_json")]
    pub log_counts: Vec<f64>,
    /// Exact distinct counts, matching `log_counts`.
    pub counts: Vec<Count>,
    /// Clusters as positions into `log_counts`, each a `[first, last]` pair.
    pub clusters: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub family: String,
    pub formula: String,
    pub parameters: Vec<String>,
    pub gamma: f64,
    pub per_index: Vec<SpectrumAtIndex>,
    #[serde(rename = "clusterCounts")]
    pub cluster_counts: Vec<usize>,
    /// Cluster counts strictly increase across all sampled indices.
    pub unbounded: bool,
}

/// Single-linkage clusters of sorted values; −∞ is always its own cluster.
pub fn cluster(sorted: &[f64], gamma: f64) -> Vec<[usize; 2]> {
    let mut out: Vec<[usize; 2]> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        match out.last_mut() {
            Some(c) if v.is_finite() && sorted[c[1]].is_finite() && v - sorted[c[1]] <= gamma => c[1] = i,
            _ => out.push([i, i]),
        }
    }
    out
}

/// Sizes of `f(M, b)` as b ranges over every value of `params` (name, sort),
/// clustered by log-size at each index.
pub fn fmv_spectrum(
    f: &Formula,
    family: &FamilyHandle,
    indices: &[u64],
    params: &[(String, String)],
    gamma: f64,
    cfg: &EngineConfig,
) -> Result<SpectrumReport, DimensionError> {
    if !(gamma >= 0.0) {
        return Err(DimensionError::Invalid(format!("gamma must be >= 0, got {gamma}")));
    }
    let counted: Vec<String> = free_variables(f)
        .into_iter()
        .map(|(n, _)| n)
        .filter(|n| !params.iter().any(|(p, _)| p == n))
        .collect();
    let counted: Vec<&str> = counted.iter().map(String::as_str).collect();
    let inner = cfg.clone().with_workers(1);
    let mut per_index = Vec::new();
    for &index in indices {
        let model = family.model(index)?;
        let space = model.parameter_space(params, cfg.budget)?;
        let counts: Result<Vec<Count>, EngineError> = exec::map_reduce(
            cfg.workers,
            space.len(),
            |i| model.count(f, &space[i].1, &counted, &inner).map(|c| vec![c]),
            || Ok(Vec::new()),
            |a, b| {
                let mut a = a?;
                a.extend(b?);
                Ok(a)
            },
        );
        let mut counts = counts?;
        counts.sort();
        counts.dedup();
        let log_counts: Vec<f64> = counts.iter().map(Count::log_value).collect();
        let clusters = cluster(&log_counts, gamma);
        per_index.push(SpectrumAtIndex {
            index,
            parameter_types: space.len(),
            log_counts,
            counts,
            clusters,
        });
    }
    let cluster_counts: Vec<usize> = per_index.iter().map(|s| s.clusters.len()).collect();
    let unbounded = cluster_counts.len() >= 2 && cluster_counts.windows(2).all(|w| w[0] < w[1]);
    Ok(SpectrumReport {
        family: family.describe(),
        formula: crate::parser::render_formula(f),
        parameters: params.iter().map(|(n, s)| format!("{n}:{s}")).collect(),
        gamma,
        per_index,
        cluster_counts,
        unbounded,
    })
}

/// Checks that every parameter in a selector resolves at each index.
pub fn check_selector(family: &FamilyHandle, selector: &[(String, String)], indices: &[u64]) -> Result<(), DimensionError> {
    for &i in indices {
        bind_selector(family, selector, i)?;
    }
    Ok(())
}

/// `index,label1,label2,..` rows of natural-log counts, one column per sequence.
pub fn log_table_csv(seqs: &[(&str, &CardinalitySequence)]) -> Result<String, DimensionError> {
    let Some((_, first)) = seqs.first() else {
        return Ok("index\n".into());
    };
    for (_, s) in seqs {
        if s.indices() != first.indices() {
            return Err(DimensionError::IndexMismatch(first.indices(), s.indices()));
        }
    }
    let mut out = String::from("index");
    for (label, _) in seqs {
        out.push(',');
        out.push_str(&label.replace(',', ";"));
    }
    out.push('\n');
    for (row, index) in first.indices().into_iter().enumerate() {
        let _ = write!(out, "{index}");
        for (_, s) in seqs {
            let _ = write!(out, ",{}", s.entries[row].count.log_value());
        }
        out.push('\n');
    }
    Ok(out)
}

impl SpectrumReport {
    /// `index,logCount,cluster` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,logCount,cluster\n");
        for s in &self.per_index {
            for (c, range) in s.clusters.iter().enumerate() {
                for v in &s.log_counts[range[0]..=range[1]] {
                    let _ = writeln!(out, "{},{},{}", s.index, v, c);
                }
            }
        }
        out
    }
}
