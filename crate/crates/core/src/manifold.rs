//! Sphere-in-high-dimension toy data and norm-based recovery diagnostics.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::cascade::{
    train_cascade, Cascade, CascadeData, CascadeOptions, ChainSamples, SampleOptions, StageSpec,
};
use crate::error::{Error, Result};
use crate::numcore::{Rng, Tensor};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SphereDatasetSpec {
    /// Intrinsic dimension of the sphere surface.
    pub sphere_dim: usize,
    /// Total vector length after zero padding.
    pub ambient_dim: usize,
    pub n_points: usize,
    pub seed: u64,
}

impl Default for SphereDatasetSpec {
    fn default() -> Self {
        Self {
            sphere_dim: 2,
            ambient_dim: 17,
            n_points: 10_000,
            seed: 0,
        }
    }
}

impl SphereDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.ambient_dim < self.sphere_dim + 1 {
            return Err(Error::InvalidArgument(format!(
                "ambient_dim {} cannot hold a {}-sphere",
                self.ambient_dim, self.sphere_dim
            )));
        }
        if self.n_points == 0 {
            return Err(Error::InvalidArgument("n_points must be positive".into()));
        }
        Ok(())
    }
}

/// Uniform points on the unit `sphere_dim`-sphere in the first
/// `sphere_dim + 1` coordinates, zeros elsewhere.
pub fn generate_sphere_data<T: Scalar>(spec: &SphereDatasetSpec) -> Result<Tensor<T>> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let k = spec.sphere_dim + 1;
    let mut data = vec![T::zero(); spec.n_points * spec.ambient_dim];
    let mut g = vec![0.0; k];
    for row in data.chunks_mut(spec.ambient_dim) {
        let norm = loop {
            g.iter_mut().for_each(|v| *v = rng.standard_normal());
            let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-12 {
                break n;
            }
        };
        for (o, v) in row.iter_mut().zip(&g) {
            *o = T::lit(v / norm);
        }
    }
    Tensor::new([spec.n_points, spec.ambient_dim], data)
}

/// Euclidean norm of every row.
pub fn row_norms<T: Scalar>(samples: &Tensor<T>) -> Result<Vec<f64>> {
    let (n, _) = samples.dims2()?;
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    Ok(samples
        .rows()
        .map(|r| {
            r.iter()
                .map(|v| v.as_f64() * v.as_f64())
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// `|‖x‖ − 1|` for every row.
pub fn radial_errors<T: Scalar>(samples: &Tensor<T>) -> Result<Vec<f64>> {
    Ok(row_norms(samples)?
        .into_iter()
        .map(|n| (n - 1.0).abs())
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadialHistogram {
    /// `n_bins + 1` strictly increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub total: usize,
}

/// Equal-width bins over `[min, max]` of `values`; the last bin is closed.
/// A constant input gets the single-value range widened by ±0.5.
pub fn build_histogram(values: &[f64], n_bins: usize) -> Result<RadialHistogram> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(
            "histogram of an empty sample".into(),
        ));
    }
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be at least 1".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            op: "build_histogram",
        });
    }
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins)
        .map(|i| {
            if i == n_bins {
                hi
            } else {
                lo + width * i as f64
            }
        })
        .collect();
    let mut counts = vec![0; n_bins];
    for &v in values {
        let b = (((v - lo) / width).floor() as usize).min(n_bins - 1);
        counts[b] += 1;
    }
    Ok(RadialHistogram {
        edges,
        counts,
        total: values.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryStats {
    pub median: f64,
    pub mean: f64,
    /// Fraction of points with `|‖x‖ − 1| ≤ eps`.
    pub fraction_within: f64,
    pub eps: f64,
    pub n: usize,
}

pub fn recovery_stats(errors: &[f64], eps: f64) -> Result<RecoveryStats> {
    if errors.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    Ok(RecoveryStats {
        median,
        mean: sorted.iter().sum::<f64>() / n as f64,
        fraction_within: sorted.iter().filter(|&&e| e <= eps).count() as f64 / n as f64,
        eps,
        n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSettings {
    /// Samples drawn at each depth.
    pub n_samples: usize,
    pub eps: f64,
    pub bins: usize,
    pub cascade: CascadeOptions,
    pub sampling: SampleOptions,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            eps: 0.05,
            bins: 40,
            cascade: CascadeOptions::default(),
            sampling: SampleOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthResult<T> {
    pub depth: usize,
    pub samples: Tensor<T>,
    pub stats: RecoveryStats,
    /// Histogram of sample norms.
    pub histogram: RadialHistogram,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SphereExperiment<T> {
    pub cascade: Cascade<T>,
    pub depths: Vec<DepthResult<T>>,
}

/// Trains a cascade on sphere data and samples at every depth. Depth `d`
/// draws from substream `1000 + d` of `rng`.
pub fn run_sphere_experiment<T: Scalar>(
    spec: &SphereDatasetSpec,
    stage_specs: &[StageSpec],
    settings: &ExperimentSettings,
    rng: &Rng,
) -> Result<SphereExperiment<T>> {
    let data = generate_sphere_data::<T>(spec)?;
    let cascade = train_cascade(
        stage_specs,
        CascadeData::Vectors(&data),
        settings.cascade,
        rng,
    )?;
    let mut depths = Vec::with_capacity(cascade.depth());
    for depth in 1..=cascade.depth() {
        let mut srng = rng.substream(1000 + depth as u64);
        let ChainSamples::Vectors(samples) =
            cascade.sample_chain(settings.n_samples, depth, &mut srng, &settings.sampling)?
        else {
            unreachable!("vector cascade yields vectors");
        };
        let norms = row_norms(&samples)?;
        let errors: Vec<f64> = norms.iter().map(|n| (n - 1.0).abs()).collect();
        depths.push(DepthResult {
            depth,
            stats: recovery_stats(&errors, settings.eps)?,
            histogram: build_histogram(&norms, settings.bins)?,
            samples,
        });
    }
    Ok(SphereExperiment { cascade, depths })
}

/// `bin_left,bin_right,count` rows with a header.
pub fn histogram_csv(h: &RadialHistogram) -> String {
    let mut out = String::from("bin_left,bin_right,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", h.edges[i], h.edges[i + 1], c);
    }
    out
}

/// Minimal standalone SVG bar chart of a histogram.
pub fn histogram_svg(h: &RadialHistogram, title: &str) -> String {
    let (w, ht, pad) = (480.0, 300.0, 40.0);
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bar_w = (w - 2.0 * pad) / h.counts.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{ht}" viewBox="0 0 {w} {ht}">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{ht}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-size="14" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    for (i, &c) in h.counts.iter().enumerate() {
        let bh = (ht - 2.0 * pad) * c as f64 / max;
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4c72b0"/>"##,
            pad + bar_w * i as f64,
            ht - pad - bh,
            (bar_w - 1.0).max(0.5),
            bh
        );
    }
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
        y = ht - pad,
        x2 = w - pad
    );
    let first = h.edges[0];
    let last = h.edges[h.edges.len() - 1];
    for (x, v, anchor) in [(pad, first, "start"), (w - pad, last, "end")] {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" font-size="11" text-anchor="{anchor}" font-family="sans-serif">{v:.3}</text>"#,
            ht - pad + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif">norm</text>"#,
        w / 2.0,
        ht - 8.0
    );
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// `key = value` lines, one block per depth.
pub fn stats_report<T>(exp: &SphereExperiment<T>) -> String {
    let mut out = String::new();
    for d in &exp.depths {
        let s = &d.stats;
        let _ = writeln!(out, "[depth{}]", d.depth);
        let _ = writeln!(out, "n = {}", s.n);
        let _ = writeln!(out, "median_abs_norm_error = {}", s.median);
        let _ = writeln!(out, "mean_abs_norm_error = {}", s.mean);
        let _ = writeln!(out, "eps = {}", s.eps);
        let _ = writeln!(out, "fraction_within_eps = {}", s.fraction_within);
        if let Some(g) = exp
            .cascade
            .reports
            .get(d.depth - 1)
            .and_then(|r| r.final_gamma)
        {
            let _ = writeln!(out, "stage_gamma = {g}");
        }
        out.push('\n');
    }
    out
}
