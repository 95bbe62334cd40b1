use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use latent_cascade::cascade::{train_cascade, CascadeData, ChainSamples, CASCADE_MANIFEST};
use latent_cascade::manifold::{
    generate_sphere_data, histogram_csv, histogram_svg, run_sphere_experiment, stats_report,
    ExperimentSettings,
};
use latent_cascade::metrics::{self, property_report, sample_quality};
use latent_cascade::seqvae::Vocab;
use latent_cascade::smiles::{normalize, read_corpus, toy_corpus};
use latent_cascade::{Cascade, Rng, Tensor};
use rayon::prelude::*;

use crate::config::{ExperimentKind, RunConfig};
use crate::error::CliError;
use crate::manifest::{unix_now, RunManifest, SeedEntry, MANIFEST_FILE};

pub const THREADS_ENV: &str = "LATENT_CASCADE_THREADS";
const BUNDLED_CORPUS: &str = "bundled toy corpus";

/// Files written under one directory, recorded relative to the run root.
struct Outputs {
    root: PathBuf,
    prefix: String,
    files: Vec<String>,
}

impl Outputs {
    fn new(root: &Path, sub: &str) -> Result<Self, CliError> {
        fs::create_dir_all(root.join(sub))?;
        Ok(Self {
            root: root.to_path_buf(),
            prefix: sub.to_string(),
            files: Vec::new(),
        })
    }

    fn rel(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}/{name}", self.prefix)
        }
    }

    fn dir(&self) -> PathBuf {
        self.root.join(&self.prefix)
    }

    fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let rel = self.rel(name);
        fs::write(self.root.join(&rel), contents)?;
        self.files.push(rel);
        Ok(())
    }

    fn save_cascade(&mut self, cascade: &Cascade) -> Result<Vec<String>, CliError> {
        cascade.save(&self.dir())?;
        let mut checkpoints = Vec::new();
        self.files.push(self.rel(CASCADE_MANIFEST));
        for k in 1..=cascade.depth() {
            for ext in ["toml", "bin"] {
                self.files.push(self.rel(&format!("stage{k}.{ext}")));
                self.files.push(self.rel(&format!("latents{k}.{ext}")));
            }
            checkpoints.push(self.rel(&format!("stage{k}.toml")));
        }
        Ok(checkpoints)
    }
}

/// Refuses to reuse a non-empty directory unless `force` is set.
pub fn prepare_out_dir(out: &Path, force: bool) -> Result<(), CliError> {
    if out.is_dir() && fs::read_dir(out)?.next().is_some() && !force {
        return Err(CliError::Config(format!(
            "{} is not empty; pass --force to write into it",
            out.display()
        )));
    }
    fs::create_dir_all(out)?;
    Ok(())
}

fn thread_pool(config: &RunConfig) -> Result<rayon::ThreadPool, CliError> {
    let mut n = config.threads.unwrap_or(config.seeds.len()).max(1);
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let cap: usize = v.trim().parse().ok().filter(|&c| c > 0).ok_or_else(|| {
            CliError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {v:?}"
            ))
        })?;
        n = n.min(cap);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))
}

/// Runs `f` for every seed on the configured pool; results come back sorted
/// by seed and any failure names its seed.
fn for_each_seed<R: Send>(
    config: &RunConfig,
    f: impl Fn(u64) -> Result<R, CliError> + Sync,
) -> Result<Vec<(u64, R)>, CliError> {
    let pool = thread_pool(config)?;
    let mut results: Vec<(u64, Result<R, CliError>)> =
        pool.install(|| config.seeds.par_iter().map(|&s| (s, f(s))).collect());
    results.sort_by_key(|(s, _)| *s);
    let mut ok = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (s, r) in results {
        match r {
            Ok(v) => ok.push((s, v)),
            Err(e) => failures.push(format!("seed {s}: {e}")),
        }
    }
    if failures.is_empty() {
        Ok(ok)
    } else {
        Err(CliError::Runtime(failures.join("; ")))
    }
}

fn seed_dir(seed: u64) -> String {
    format!("seed-{seed}")
}

fn loss_csv(cascade: &Cascade) -> String {
    let mut out = String::from("stage,epoch,loss\n");
    for (i, r) in cascade.reports.iter().enumerate() {
        for (e, l) in r.loss_trace.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", i + 1, e + 1, l);
        }
    }
    out
}

fn vectors_csv(t: &Tensor) -> Result<String, CliError> {
    let (_, c) = t.dims2()?;
    let header: Vec<String> = (0..c).map(|j| format!("x{j}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for row in t.rows() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Makes configured paths absolute so the manifest stays valid from any
/// working directory.
fn absolutize(config: &mut RunConfig) -> Result<(), CliError> {
    for p in [&mut config.data.corpus, &mut config.data.reference]
        .into_iter()
        .flatten()
    {
        *p =
            fs::canonicalize(&*p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn finish(
    command: &str,
    started_at: u64,
    config: RunConfig,
    seeds: Vec<SeedEntry>,
    run_files: Vec<String>,
) -> Result<PathBuf, CliError> {
    let out = config.out.clone();
    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        started_at,
        finished_at: unix_now(),
        run_files,
        seeds,
        config,
    };
    manifest.write(&out)?;
    Ok(out)
}

/// Sphere experiment for every seed: checkpoints, per-depth histograms,
/// samples and recovery statistics.
pub fn cmd_sphere(mut config: RunConfig, force: bool) -> Result<PathBuf, CliError> {
    if config.kind != ExperimentKind::Sphere {
        return Err(CliError::Config(
            "the sphere command needs kind = \"sphere\"".into(),
        ));
    }
    config.validate()?;
    absolutize(&mut config)?;
    let started = unix_now();
    prepare_out_dir(&config.out, force)?;
    let settings = ExperimentSettings {
        n_samples: config.metrics.n_samples,
        eps: config.metrics.eps,
        bins: config.metrics.bins,
        cascade: config.cascade,
        sampling: config.sampling,
    };
    let results = for_each_seed(&config, |seed| {
        let mut spec = config.sphere.clone();
        spec.seed = seed;
        let exp = run_sphere_experiment::<f64>(&spec, &config.stages, &settings, &Rng::new(seed))?;
        let mut out = Outputs::new(&config.out, &seed_dir(seed))?;
        let checkpoints = out.save_cascade(&exp.cascade)?;
        out.write("loss.csv", loss_csv(&exp.cascade))?;
        let mut rows = String::new();
        for d in &exp.depths {
            out.write(
                &format!("depth{}_histogram.csv", d.depth),
                histogram_csv(&d.histogram),
            )?;
            let title = format!("Stage {} samples, seed {seed}", d.depth);
            out.write(
                &format!("depth{}_histogram.svg", d.depth),
                histogram_svg(&d.histogram, &title),
            )?;
            out.write(
                &format!("depth{}_samples.csv", d.depth),
                vectors_csv(&d.samples)?,
            )?;
            let gamma = exp.cascade.reports[d.depth - 1]
                .final_gamma
                .unwrap_or(f64::NAN);
            let s = &d.stats;
            let _ = writeln!(
                rows,
                "{seed},{},{},{},{},{}",
                d.depth, s.median, s.mean, s.fraction_within, gamma
            );
        }
        out.write("stats.txt", stats_report(&exp))?;
        let entry = SeedEntry {
            seed,
            dir: seed_dir(seed),
            checkpoints,
            files: out.files,
        };
        Ok((entry, rows))
    })?;
    let mut summary = String::from(
        "seed,depth,median_abs_norm_error,mean_abs_norm_error,fraction_within_eps,stage_gamma\n",
    );
    let mut entries = Vec::new();
    for (_, (entry, rows)) in results {
        summary.push_str(&rows);
        entries.push(entry);
    }
    let mut run = Outputs::new(&config.out, "")?;
    run.write("summary.csv", summary)?;
    finish("sphere", started, config, entries, run.files)
}

fn load_corpus(config: &RunConfig) -> Result<Vec<String>, CliError> {
    let corpus = match &config.data.corpus {
        Some(p) => read_corpus(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
        None => toy_corpus(),
    };
    if corpus.is_empty() {
        return Err(CliError::Config("training corpus is empty".into()));
    }
    Ok(corpus)
}

/// Trains and persists the configured cascade for every seed.
pub fn cmd_train(mut config: RunConfig, force: bool) -> Result<PathBuf, CliError> {
    config.validate()?;
    absolutize(&mut config)?;
    let started = unix_now();
    let corpus = match config.kind {
        ExperimentKind::Smiles => Some(load_corpus(&config)?),
        ExperimentKind::Sphere => None,
    };
    let encoded = match &corpus {
        Some(c) => {
            let vocab =
                Vocab::from_corpus(c).map_err(|e| CliError::Config(format!("corpus: {e}")))?;
            let seqs = c
                .iter()
                .map(|s| vocab.encode(s))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Config(format!("corpus: {e}")))?;
            Some((vocab, seqs))
        }
        None => None,
    };
    prepare_out_dir(&config.out, force)?;
    let results = for_each_seed(&config, |seed| {
        let rng = Rng::new(seed);
        let cascade = match &encoded {
            Some((vocab, seqs)) => train_cascade(
                &config.stages,
                CascadeData::Sequences { vocab, seqs },
                config.cascade,
                &rng,
            )?,
            None => {
                let mut spec = config.sphere.clone();
                spec.seed = seed;
                let x = generate_sphere_data::<f64>(&spec)?;
                train_cascade(
                    &config.stages,
                    CascadeData::Vectors(&x),
                    config.cascade,
                    &rng,
                )?
            }
        };
        let mut out = Outputs::new(&config.out, &seed_dir(seed))?;
        let checkpoints = out.save_cascade(&cascade)?;
        out.write("loss.csv", loss_csv(&cascade))?;
        Ok(SeedEntry {
            seed,
            dir: seed_dir(seed),
            checkpoints,
            files: out.files,
        })
    })?;
    finish(
        "train",
        started,
        config,
        results.into_iter().map(|(_, e)| e).collect(),
        Vec::new(),
    )
}

/// Finds the cascade directory for `path`: a directory holding a cascade
/// manifest, or a run directory with exactly one seed.
fn resolve_cascade_dir(path: &Path) -> Result<PathBuf, CliError> {
    if path.join(CASCADE_MANIFEST).is_file() {
        return Ok(path.to_path_buf());
    }
    if path.join(MANIFEST_FILE).is_file() {
        let m = RunManifest::read(path)?;
        return match m.seeds.as_slice() {
            [one] => Ok(path.join(&one.dir)),
            many => Err(CliError::Config(format!(
                "{} holds {} seed directories; pass one of them",
                path.display(),
                many.len()
            ))),
        };
    }
    Err(CliError::Config(format!(
        "{} holds no cascade checkpoint",
        path.display()
    )))
}

#[derive(Clone, Debug, Default)]
pub struct SampleArgs {
    pub n: usize,
    pub seeds: Vec<u64>,
    /// Defaults to the full cascade depth.
    pub depth: Option<usize>,
    /// Output directory; defaults to the cascade directory.
    pub out: Option<PathBuf>,
}

/// Samples through the first `depth` stages once per seed. Writes
/// `samples_d<depth>_s<seed>.smi` (or `.csv` for vectors) and the stage-1
/// latents as `..._latents.csv`.
pub fn cmd_sample(dir: &Path, args: &SampleArgs) -> Result<Vec<PathBuf>, CliError> {
    let cdir = resolve_cascade_dir(dir)?;
    if args.seeds.is_empty() {
        return Err(CliError::Config("at least one --seed is required".into()));
    }
    let cascade =
        Cascade::load(&cdir).map_err(|e| CliError::Config(format!("{}: {e}", cdir.display())))?;
    let depth = args.depth.unwrap_or(cascade.depth());
    if depth == 0 || depth > cascade.depth() {
        return Err(CliError::Config(format!(
            "depth {depth} outside 1..={} for this cascade",
            cascade.depth()
        )));
    }
    let options = RunManifest::find_near(&cdir)
        .map(|(_, m)| m.config.sampling)
        .unwrap_or_default();
    let out_dir = args.out.clone().unwrap_or_else(|| cdir.clone());
    fs::create_dir_all(&out_dir)?;
    let mut written = Vec::new();
    for &seed in &args.seeds {
        let mut rng = Rng::new(seed);
        let z = cascade.sample_latents(args.n, depth, &mut rng, &options)?;
        let samples = cascade.decode_latents(&z, &mut rng, &options)?;
        let stem = format!("samples_d{depth}_s{seed}");
        let path = match samples {
            ChainSamples::Sequences(lines) => {
                let p = out_dir.join(format!("{stem}.smi"));
                let mut text = String::new();
                for l in &lines {
                    text.push_str(l);
                    text.push('\n');
                }
                fs::write(&p, text)?;
                p
            }
            ChainSamples::Vectors(x) => {
                let p = out_dir.join(format!("{stem}.csv"));
                fs::write(&p, vectors_csv(&x)?)?;
                p
            }
        };
        fs::write(
            out_dir.join(format!("{stem}_latents.csv")),
            vectors_csv(&z)?,
        )?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Clone, Debug, Default)]
pub struct EvalArgs {
    pub reference: Option<PathBuf>,
    /// Metric settings; falls back to the run manifest next to the samples.
    pub config: Option<RunConfig>,
    /// Output directory; defaults to the directory of the first sample file.
    pub out: Option<PathBuf>,
}

/// Generated strings, one per line; blank lines are kept as empty samples.
fn read_samples(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(normalize).collect())
}

/// Validity, uniqueness, novelty and descriptor distances for each sample
/// file, plus mean and population std over the files when more than one is
/// given. Writes `eval_report.txt`, `eval_report.csv` and, for several
/// files, `eval_summary.csv`.
pub fn cmd_eval(samples: &[PathBuf], args: &EvalArgs) -> Result<PathBuf, CliError> {
    if samples.is_empty() {
        return Err(CliError::Config("no sample files given".into()));
    }
    let first_dir = samples[0]
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let near = RunManifest::find_near(&first_dir);
    let config = args
        .config
        .clone()
        .or_else(|| near.as_ref().map(|(_, m)| m.config.clone()))
        .unwrap_or_default();
    let (reference, ref_label) = match &args.reference {
        Some(p) => (
            read_corpus(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
            p.display().to_string(),
        ),
        None => match config
            .data
            .reference
            .as_ref()
            .or(config.data.corpus.as_ref())
        {
            Some(p) => (
                read_corpus(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
                p.display().to_string(),
            ),
            None if near.is_some() || args.config.is_some() => {
                (toy_corpus(), BUNDLED_CORPUS.to_string())
            }
            None => return Err(CliError::Config(
                "no reference corpus: pass --reference or evaluate samples inside a run directory"
                    .into(),
            )),
        },
    };
    if reference.is_empty() {
        return Err(CliError::Config("reference corpus is empty".into()));
    }
    let train: HashSet<String> = reference.iter().cloned().collect();
    let k = config.metrics.k;

    let mut text = String::new();
    let _ = writeln!(text, "reference = {ref_label:?}");
    let _ = writeln!(text, "reference_size = {}", reference.len());
    let _ = writeln!(text, "k_requested = {k}\n");
    let mut csv = String::from("file,metric,value\n");
    let mut per_file: Vec<BTreeMap<String, f64>> = Vec::new();
    for path in samples {
        let generated = read_samples(path)?;
        if generated.is_empty() {
            return Err(CliError::Config(format!(
                "{} holds no samples",
                path.display()
            )));
        }
        let quality = sample_quality(&generated, &train, k)?;
        let props = match property_report(&generated, &reference) {
            Ok(p) => Some(p),
            Err(_) if quality.valid == 0 => None,
            Err(e) => return Err(e.into()),
        };
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let _ = writeln!(text, "[{name:?}]");
        text.push_str(&metrics::report_text(&quality, props.as_ref()));
        if props.is_none() {
            let _ = writeln!(
                text,
                "warning = \"no valid molecules; property distances skipped\""
            );
        }
        text.push('\n');
        let mut values = BTreeMap::new();
        for (m, v) in quality.metrics() {
            values.insert(m.to_string(), v);
        }
        if let Some(p) = &props {
            for (d, v) in &p.distances {
                values.insert(format!("w1_{d}"), *v);
            }
        }
        for (m, v) in &values {
            let _ = writeln!(csv, "{name},{m},{v}");
        }
        per_file.push(values);
    }
    let out = args.out.clone().unwrap_or(first_dir);
    fs::create_dir_all(&out)?;
    if samples.len() > 1 {
        let ids: Vec<u64> = (0..samples.len() as u64).collect();
        let report =
            metrics::multi_seed_report(&ids, |i| Ok::<_, String>(per_file[i as usize].clone()))?;
        let _ = writeln!(text, "[summary]");
        let _ = writeln!(text, "files = {}", samples.len());
        for (m, s) in &report.summary {
            let _ = writeln!(
                text,
                "{m} = {{ mean = {}, std = {}, n = {} }}",
                s.mean,
                s.std,
                s.values.len()
            );
        }
        fs::write(
            out.join("eval_summary.csv"),
            metrics::multi_seed_csv(&report),
        )?;
    }
    fs::write(out.join("eval_report.txt"), text)?;
    fs::write(out.join("eval_report.csv"), csv)?;
    Ok(out)
}
