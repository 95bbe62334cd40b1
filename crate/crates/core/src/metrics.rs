//! Sample-quality and property-distribution metrics for generated molecules.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::smiles::{
    classify, molecular_weight, normalize, parse_smiles, simple_descriptors, AtomicMassTable,
    Validity,
};

/// Wasserstein-1 distance between two empirical distributions on the line,
/// `∫₀¹ |F_a⁻¹(t) − F_b⁻¹(t)| dt`.
pub fn w1_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument(
            "w1_distance needs two non-empty samples".into(),
        ));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "w1_distance" });
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    if n == m {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64);
    }
    // Walk the merged grid {i/n} ∪ {j/m} with integer arithmetic on the
    // common denominator n·m: sample i covers (i·m, (i+1)·m], sample j
    // covers (j·n, (j+1)·n].
    let (mut i, mut j) = (0, 0);
    let mut t = 0usize;
    let mut acc = 0.0;
    while i < n && j < m {
        let next = ((i + 1) * m).min((j + 1) * n);
        acc += (a[i] - b[j]).abs() * (next - t) as f64;
        t = next;
        if t == (i + 1) * m {
            i += 1;
        }
        if t == (j + 1) * n {
            j += 1;
        }
    }
    Ok(acc / (n * m) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleReport {
    pub total: usize,
    pub valid: usize,
    pub invalid: usize,
    /// Strings using grammar features outside the supported subset; counted
    /// as not valid.
    pub unsupported: usize,
    pub valid_fraction: f64,
    /// `k` actually used (capped at the number of strings).
    pub k: usize,
    /// Distinct fraction among the first `k` strings.
    pub unique_at_k: f64,
    /// Fraction of valid strings absent from the training set.
    pub novelty: f64,
    pub warnings: Vec<String>,
}

/// Validity, uniqueness and novelty of `generated`, comparing
/// whitespace-stripped strings.
pub fn sample_quality<S: AsRef<str>>(
    generated: &[S],
    train: &HashSet<String>,
    k: usize,
) -> Result<SampleReport> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if generated.is_empty() {
        return Err(Error::InvalidArgument("no generated strings".into()));
    }
    let norm: Vec<String> = generated.iter().map(|s| normalize(s.as_ref())).collect();
    let mut warnings = Vec::new();
    let k_used = k.min(norm.len());
    if k_used < k {
        warnings.push(format!(
            "k = {k} exceeds the {} generated strings; using k = {k_used}",
            norm.len()
        ));
    }
    let (mut valid, mut invalid, mut unsupported, mut novel) = (0, 0, 0, 0);
    for s in &norm {
        match classify(s) {
            Validity::Valid => {
                valid += 1;
                if !train.contains(s) {
                    novel += 1;
                }
            }
            Validity::Invalid => invalid += 1,
            Validity::Unsupported => unsupported += 1,
        }
    }
    let distinct: HashSet<&String> = norm[..k_used].iter().collect();
    let total = norm.len();
    Ok(SampleReport {
        total,
        valid,
        invalid,
        unsupported,
        valid_fraction: valid as f64 / total as f64,
        k: k_used,
        unique_at_k: distinct.len() as f64 / k_used as f64,
        novelty: if valid == 0 {
            0.0
        } else {
            novel as f64 / valid as f64
        },
        warnings,
    })
}

impl SampleReport {
    /// Named metric values, in report order.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("valid", self.valid_fraction),
            ("unique_at_k", self.unique_at_k),
            ("novelty", self.novelty),
        ]
    }
}

pub const DESCRIPTORS: [&str; 4] = ["mw", "heavy_atoms", "rings", "aromatic_fraction"];

/// Wasserstein-1 distance per descriptor, in [`DESCRIPTORS`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyDistance {
    pub distances: Vec<(String, f64)>,
    pub n_generated: usize,
    pub n_reference: usize,
}

impl PropertyDistance {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.distances
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| *d)
    }
}

/// Descriptor columns over the valid molecules of `set`.
pub fn descriptor_table<S: AsRef<str>>(set: &[S]) -> Vec<[f64; 4]> {
    let table = AtomicMassTable::standard();
    set.iter()
        .filter_map(|s| parse_smiles(&normalize(s.as_ref())).ok())
        .filter_map(|mol| {
            let mw = molecular_weight(&mol, table).ok()?;
            let d = simple_descriptors(&mol);
            Some([
                mw,
                d.heavy_atoms as f64,
                d.ring_closures as f64,
                d.aromatic_fraction,
            ])
        })
        .collect()
}

/// Per-descriptor Wasserstein-1 distance between the valid molecules of
/// `generated` and of `reference`.
pub fn property_report<S: AsRef<str>, R: AsRef<str>>(
    generated: &[S],
    reference: &[R],
) -> Result<PropertyDistance> {
    let g = descriptor_table(generated);
    let r = descriptor_table(reference);
    if g.is_empty() || r.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "property report needs valid molecules on both sides ({} generated, {} reference)",
            g.len(),
            r.len()
        )));
    }
    let mut distances = Vec::with_capacity(DESCRIPTORS.len());
    for (c, name) in DESCRIPTORS.iter().enumerate() {
        let a: Vec<f64> = g.iter().map(|row| row[c]).collect();
        let b: Vec<f64> = r.iter().map(|row| row[c]).collect();
        distances.push((name.to_string(), w1_distance(&a, &b)?));
    }
    Ok(PropertyDistance {
        distances,
        n_generated: g.len(),
        n_reference: r.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// `(seed, value)` for every successful seed.
    pub values: Vec<(u64, f64)>,
}

/// Metrics of one seed, or the error it failed with.
pub type SeedOutcome = std::result::Result<BTreeMap<String, f64>, String>;

#[derive(Clone, Debug, PartialEq)]
pub struct MultiSeedReport {
    /// Outcome of every seed, sorted by seed.
    pub runs: Vec<(u64, SeedOutcome)>,
    pub summary: BTreeMap<String, MetricSummary>,
}

impl MultiSeedReport {
    pub fn failures(&self) -> Vec<(u64, &str)> {
        self.runs
            .iter()
            .filter_map(|(s, r)| r.as_ref().err().map(|e| (*s, e.as_str())))
            .collect()
    }
}

/// Runs `run` once per seed (in parallel) and aggregates each metric over
/// the seeds that succeeded. Failures stay in the report next to their seed.
pub fn multi_seed_report<F, E>(seeds: &[u64], run: F) -> Result<MultiSeedReport>
where
    F: Fn(u64) -> std::result::Result<BTreeMap<String, f64>, E> + Sync,
    E: std::fmt::Display,
{
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("no seeds given".into()));
    }
    let mut runs: Vec<_> = seeds
        .par_iter()
        .map(|&s| (s, run(s).map_err(|e| e.to_string())))
        .collect();
    runs.sort_by_key(|(s, _)| *s);
    let mut values: BTreeMap<String, Vec<(u64, f64)>> = BTreeMap::new();
    for (seed, r) in &runs {
        if let Ok(m) = r {
            for (k, v) in m {
                values.entry(k.clone()).or_default().push((*seed, *v));
            }
        }
    }
    let summary = values
        .into_iter()
        .map(|(k, vals)| {
            let n = vals.len() as f64;
            let mean = vals.iter().map(|(_, v)| v).sum::<f64>() / n;
            let var = vals.iter().map(|(_, v)| (v - mean).powi(2)).sum::<f64>() / n;
            (
                k,
                MetricSummary {
                    mean,
                    std: var.sqrt(),
                    values: vals,
                },
            )
        })
        .collect();
    Ok(MultiSeedReport { runs, summary })
}

/// `key = value` text of a sample and property report.
pub fn report_text(quality: &SampleReport, props: Option<&PropertyDistance>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "total = {}", quality.total);
    let _ = writeln!(out, "valid_count = {}", quality.valid);
    let _ = writeln!(out, "invalid_count = {}", quality.invalid);
    let _ = writeln!(out, "unsupported_count = {}", quality.unsupported);
    let _ = writeln!(out, "k = {}", quality.k);
    for (name, v) in quality.metrics() {
        let _ = writeln!(out, "{name} = {v}");
    }
    if let Some(p) = props {
        for (name, d) in &p.distances {
            let _ = writeln!(out, "w1_{name} = {d}");
        }
    }
    for w in &quality.warnings {
        let _ = writeln!(out, "warning = {w:?}");
    }
    out
}

/// `metric,value` rows for one report.
pub fn report_csv(quality: &SampleReport, props: Option<&PropertyDistance>) -> String {
    let mut out = String::from("metric,value\n");
    for (name, v) in quality.metrics() {
        let _ = writeln!(out, "{name},{v}");
    }
    if let Some(p) = props {
        for (name, d) in &p.distances {
            let _ = writeln!(out, "w1_{name},{d}");
        }
    }
    out
}

/// `metric,mean,std,n` rows of a multi-seed summary.
pub fn multi_seed_csv(report: &MultiSeedReport) -> String {
    let mut out = String::from("metric,mean,std,n\n");
    for (name, s) in &report.summary {
        let _ = writeln!(out, "{name},{},{},{}", s.mean, s.std, s.values.len());
    }
    out
}
