//! End-to-end despeckling and the ablation study.
//!
//! ```text
//! intensity --ln(. + eps)--> log image --Yeo-Johnson(lambda*)--> Gaussianized image
//!     -> reference grid -> block matching -> per-patch sigma -> SVD dictionary
//!     -> weights -> ADMM -> reconstruction -> aggregation
//!     -> inverse Yeo-Johnson -> exp(.) - eps -> clamp at 0
//! ```
//!
//! Groups are processed in parallel in fixed-size chunks and committed to the
//! aggregation buffers in reference order, so the output does not depend on the
//! number of worker threads.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::metrics::{self, MetricReport};
use crate::nonlocal::{block_match, extract_references, Coord, CoverageReport, WeightMap};
use crate::raster::{Raster, RasterKind};
use crate::sparse::{build_weights, reconstruct, solve_weighted_lasso_admm, svd_dictionary, Weights};
use crate::speckle::{apply_speckle, estimate_patch_sigma, Looks};
use crate::transform::{log_forward, log_inverse, select_lambda, YeoJohnson};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "DESPECKLE_THREADS";

const CHUNK: usize = 256;

/// Solver statistics over all groups.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub non_converged: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
    pub degenerate_dictionaries: usize,
}

/// Wall-clock seconds per stage. Not serialized: manifests must be reproducible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTimings {
    pub transform: f64,
    pub groups: f64,
    pub inverse: f64,
    pub metrics: f64,
}

/// Everything needed to audit and replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: PipelineConfig,
    pub width: usize,
    pub height: usize,
    /// FNV-1a over the input samples' bit patterns.
    pub input_fingerprint: String,
    pub log_epsilon: f64,
    /// `None` when the Yeo-Johnson stage is disabled.
    pub lambda: Option<f64>,
    pub group_count: usize,
    pub padded_groups: usize,
    pub solver: SolverSummary,
    pub coverage: CoverageReport,
    pub warnings: Vec<String>,
    /// No-reference metrics of the output against the input.
    pub metrics: Option<MetricReport>,
    #[serde(skip)]
    pub timings: StageTimings,
}

impl RunManifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// FNV-1a (64 bit) of the raster's dimensions and sample bits.
pub fn fingerprint(img: &Raster) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for b in bytes {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&(img.width() as u64).to_le_bytes());
    eat(&(img.height() as u64).to_le_bytes());
    for v in img.data() {
        eat(&v.to_bits().to_le_bytes());
    }
    format!("{h:016x}")
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|n| *n > 0)
}

/// Despeckles with the worker pool sized by [`THREADS_ENV`] (rayon default otherwise).
pub fn despeckle(noisy: &Raster, cfg: &PipelineConfig) -> Result<(Raster, RunManifest)> {
    despeckle_with_threads(noisy, cfg, threads_from_env())
}

struct GroupOutcome {
    coords: Vec<Coord>,
    real: usize,
    estimate: nalgebra::DMatrix<f64>,
    iterations: usize,
    converged: bool,
    degenerate: bool,
}

fn process_group(img: &Raster, reference: Coord, cfg: &PipelineConfig) -> Result<GroupOutcome> {
    let mut group = block_match(img, reference, cfg.patch_size, cfg.stack_count, cfg.search_window)?;
    let dict = svd_dictionary(&group)?;
    let weights = if cfg.use_weights {
        group.set_sigmas(estimate_patch_sigma(&group)?)?;
        build_weights(&group, &dict, cfg.s_floor)?
    } else {
        Weights::unit(group.len(), dict.atoms())
    };
    let solution = solve_weighted_lasso_admm(group.patches(), &dict, &weights, cfg.c, &cfg.admm)?;
    let estimate = reconstruct(&dict, &solution.code)?;
    Ok(GroupOutcome {
        real: group.len() - group.padded(),
        coords: group.coords().to_vec(),
        estimate,
        iterations: solution.report.iterations,
        converged: solution.report.converged,
        degenerate: dict.degenerate,
    })
}

/// Despeckles an intensity image with an explicit worker count.
///
/// The result does not depend on `threads`.
pub fn despeckle_with_threads(
    noisy: &Raster,
    cfg: &PipelineConfig,
    threads: Option<usize>,
) -> Result<(Raster, RunManifest)> {
    cfg.validate()?;
    if noisy.kind() != RasterKind::Intensity {
        return Err(Error::Domain("despeckle expects an intensity raster".into()));
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Parameter(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run(noisy, cfg))
}

fn run(noisy: &Raster, cfg: &PipelineConfig) -> Result<(Raster, RunManifest)> {
    let mut manifest = RunManifest {
        config: cfg.clone(),
        width: noisy.width(),
        height: noisy.height(),
        input_fingerprint: fingerprint(noisy),
        log_epsilon: 0.0,
        lambda: None,
        group_count: 0,
        padded_groups: 0,
        solver: SolverSummary::default(),
        coverage: CoverageReport {
            total_pixels: noisy.data().len(),
            uncovered_pixels: 0,
        },
        warnings: Vec::new(),
        metrics: None,
        timings: StageTimings::default(),
    };

    if noisy.data().iter().all(|v| *v == 0.0) {
        let msg = "input image is identically zero; returned unchanged".to_string();
        log::warn!("{msg}");
        manifest.warnings.push(msg);
        return Ok((noisy.clone(), manifest));
    }

    let t0 = Instant::now();
    let eps = cfg.log_epsilon.resolve(noisy);
    manifest.log_epsilon = eps;
    let logged = log_forward(noisy, eps)?;
    let (work, yj) = if cfg.use_transform {
        let grid = cfg.lambda_grid.values()?;
        let yj = match select_lambda(logged.data(), &grid) {
            Ok(yj) => yj,
            Err(Error::Degenerate(why)) => {
                let msg = format!("lambda selection skipped ({why}); using identity");
                log::warn!("{msg}");
                manifest.warnings.push(msg);
                YeoJohnson::IDENTITY
            }
            Err(e) => return Err(e),
        };
        manifest.lambda = Some(yj.lambda);
        (yj.forward_raster(&logged)?, Some(yj))
    } else {
        (logged, None)
    };
    manifest.timings.transform = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let references = extract_references(&work, cfg.patch_size, cfg.stride)?;
    manifest.group_count = references.len();
    let mut map = WeightMap::new(work.width(), work.height());
    for chunk in references.chunks(CHUNK) {
        let outcomes = chunk
            .par_iter()
            .map(|&r| process_group(&work, r, cfg))
            .collect::<Result<Vec<_>>>()?;
        for out in outcomes {
            for (j, &pos) in out.coords.iter().enumerate().take(out.real) {
                map.add_patch(pos, cfg.patch_size, out.estimate.column(j).as_slice(), 1.0);
            }
            if out.real < out.coords.len() {
                manifest.padded_groups += 1;
            }
            let s = &mut manifest.solver;
            s.total_iterations += out.iterations;
            s.max_iterations = s.max_iterations.max(out.iterations);
            s.non_converged += usize::from(!out.converged);
            s.degenerate_dictionaries += usize::from(out.degenerate);
        }
    }
    let (estimate, coverage) = map.finish(&work, RasterKind::Transformed)?;
    manifest.coverage = coverage;
    if manifest.solver.non_converged > 0 {
        let msg = format!(
            "ADMM hit max_iters in {} of {} groups",
            manifest.solver.non_converged, manifest.group_count
        );
        log::warn!("{msg}");
        manifest.warnings.push(msg);
    }
    if manifest.coverage.uncovered_pixels > 0 {
        manifest.warnings.push(format!(
            "{} pixels received no patch estimate",
            manifest.coverage.uncovered_pixels
        ));
    }
    manifest.timings.groups = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    // Keep estimates inside the span of the transformed input so the inverse
    // maps stay finite.
    let (lo, hi) = (work.min(), work.max());
    let clamped = estimate.map(RasterKind::Transformed, |v| v.clamp(lo, hi))?;
    let logged_estimate = match yj {
        Some(yj) => yj.inverse_raster(&clamped)?,
        None => clamped,
    };
    let out = log_inverse(&logged_estimate, eps)?;
    manifest.timings.inverse = t2.elapsed().as_secs_f64();

    let t3 = Instant::now();
    manifest.metrics = metrics::evaluate(&out, None, Some(noisy), None, cfg.peak).ok();
    manifest.timings.metrics = t3.elapsed().as_secs_f64();
    Ok((out, manifest))
}

/// Re-runs a despeckle from a stored manifest, checking the input fingerprint.
pub fn replay(noisy: &Raster, manifest: &RunManifest) -> Result<(Raster, RunManifest)> {
    let fp = fingerprint(noisy);
    if fp != manifest.input_fingerprint {
        return Err(Error::Parameter(format!(
            "input fingerprint {fp} does not match manifest {}",
            manifest.input_fingerprint
        )));
    }
    despeckle(noisy, &manifest.config)
}

/// The four weight/transform configurations of the ablation study, labeled `a`..`d`.
pub fn ablation_configs(base: &PipelineConfig) -> [(&'static str, PipelineConfig); 4] {
    let with = |use_weights: bool, use_transform: bool| PipelineConfig {
        use_weights,
        use_transform,
        ..base.clone()
    };
    [
        ("a", with(false, false)),
        ("b", with(false, true)),
        ("c", with(true, false)),
        ("d", with(true, true)),
    ]
}

/// One configuration's scores against the clean image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub use_weights: bool,
    pub use_transform: bool,
    pub psnr: f64,
    /// Percent.
    pub ssim: f64,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub looks: f64,
    pub seed: u64,
    pub noisy_psnr: f64,
    pub noisy_ssim: f64,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    /// Plain-text comparison table.
    pub fn table(&self) -> String {
        let mut s = format!(
            "looks={} seed={}\n{:<6}{:>8}{:>10}{:>10}{:>10}\n",
            self.looks, self.seed, "config", "w1&w2", "transform", "PSNR", "SSIM"
        );
        s += &format!(
            "{:<6}{:>8}{:>10}{:>10.2}{:>10.2}\n",
            "noisy", "-", "-", self.noisy_psnr, self.noisy_ssim
        );
        for row in &self.rows {
            let mark = |b: bool| if b { "yes" } else { "no" };
            s += &format!(
                "({}){:<3}{:>8}{:>10}{:>10.2}{:>10.2}\n",
                row.label,
                "",
                mark(row.use_weights),
                mark(row.use_transform),
                row.psnr,
                row.ssim
            );
        }
        s
    }
}

/// Speckles `clean` and despeckles it under each ablation configuration.
pub fn run_ablation(
    clean: &Raster,
    looks: Looks,
    seed: u64,
    base: &PipelineConfig,
    threads: Option<usize>,
) -> Result<AblationReport> {
    let noisy = apply_speckle(clean, looks, seed)?;
    let peak = base.peak;
    let mut rows = Vec::with_capacity(4);
    for (label, cfg) in ablation_configs(base) {
        let cfg = PipelineConfig { seed, ..cfg };
        let (out, manifest) = despeckle_with_threads(&noisy, &cfg, threads)?;
        rows.push(AblationRow {
            label: label.to_string(),
            use_weights: cfg.use_weights,
            use_transform: cfg.use_transform,
            psnr: metrics::psnr(clean, &out, peak)?.min(metrics::PSNR_CAP_DB),
            ssim: 100.0 * metrics::ssim(clean, &out, peak)?,
            lambda: manifest.lambda,
        });
    }
    Ok(AblationReport {
        looks: looks.get(),
        seed,
        noisy_psnr: metrics::psnr(clean, &noisy, peak)?.min(metrics::PSNR_CAP_DB),
        noisy_ssim: 100.0 * metrics::ssim(clean, &noisy, peak)?,
        rows,
    })
}
