//! Image quality metrics.
//!
//! Full-reference: PSNR and SSIM against a clean image. No-reference (against the
//! speckled input): ENL over homogeneous regions, EPI, EPD-ROA, SQI, and the mean
//! intensity. EPI, EPD-ROA and SQI are normalized so that an unchanged image
//! scores exactly 1.

use std::path::Path;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::raster::Raster;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Side of the Gaussian SSIM window.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Minimum pixel count for an ENL region.
pub const MIN_ENL_AREA: usize = 64;

/// Denominator floor for EPD-ROA ratios.
pub const EPD_FLOOR: f64 = 1e-6;

/// Tile side for SQI.
pub const SQI_TILE: usize = 8;

/// Mean squared error between two same-sized rasters.
pub fn mse(reference: &Raster, test: &Raster) -> Result<f64> {
    reference.ensure_same_dims(test)?;
    let sum: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.data().len() as f64)
}

/// `10 log10(peak^2 / MSE)`; `+inf` for identical images.
pub fn psnr(reference: &Raster, test: &Raster, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::Parameter(format!("peak must be positive, got {peak}")));
    }
    let mse = mse(reference, test)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let x = i as f64 - half;
        *t = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable "valid" Gaussian filtering; output is `(w - 10) x (h - 10)`.
fn filter_valid(data: &[f64], width: usize, height: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; ow * height];
    for r in 0..height {
        let row = &data[r * width..(r + 1) * width];
        for c in 0..ow {
            horiz[r * ow + c] = taps.iter().zip(&row[c..c + SSIM_WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps.iter().enumerate().map(|(i, t)| t * horiz[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Mean structural similarity with an 11x11 Gaussian window (sigma 1.5) over all
/// fully interior window positions. `peak` is the dynamic range.
pub fn ssim(reference: &Raster, test: &Raster, peak: f64) -> Result<f64> {
    reference.ensure_same_dims(test)?;
    if !(peak > 0.0) {
        return Err(Error::Parameter(format!("peak must be positive, got {peak}")));
    }
    let (w, h) = reference.dims();
    if w.min(h) < SSIM_WINDOW {
        return Err(Error::Size(format!(
            "SSIM needs both sides at least {SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let taps = gaussian_taps();
    let x = reference.data();
    let y = test.data();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();

    let mu_x = filter_valid(x, w, h, &taps);
    let mu_y = filter_valid(y, w, h, &taps);
    let e_xx = filter_valid(&xx, w, h, &taps);
    let e_yy = filter_valid(&yy, w, h, &taps);
    let e_xy = filter_valid(&xy, w, h, &taps);

    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cxy = e_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

/// Axis-aligned rectangle in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

/// Rectangles marking homogeneous (or edge) regions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub rects: Vec<Rect>,
}

impl RegionSpec {
    /// Parses one `row col height width` rectangle per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rects = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fields: Vec<&str> = content.split_whitespace().collect();
            let parse_err = || Error::Config {
                line: lineno + 1,
                message: format!("expected `row col height width`, got `{content}`"),
            };
            if fields.len() != 4 {
                return Err(parse_err());
            }
            let nums = fields
                .iter()
                .map(|f| f.parse::<usize>().map_err(|_| parse_err()))
                .collect::<Result<Vec<_>>>()?;
            rects.push(Rect {
                row: nums[0],
                col: nums[1],
                height: nums[2],
                width: nums[3],
            });
        }
        Ok(Self { rects })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn area(&self) -> usize {
        self.rects.iter().map(|r| r.height * r.width).sum()
    }

    fn pixels<'a>(&'a self, img: &'a Raster) -> Result<impl Iterator<Item = f64> + 'a> {
        for r in &self.rects {
            if r.height == 0 || r.width == 0 || r.row + r.height > img.height() || r.col + r.width > img.width() {
                return Err(Error::Region(format!(
                    "rectangle {r:?} does not fit a {}x{} image",
                    img.width(),
                    img.height()
                )));
            }
        }
        Ok(self.rects.iter().flat_map(move |r| {
            (r.row..r.row + r.height).flat_map(move |row| img.row(row)[r.col..r.col + r.width].iter().copied())
        }))
    }
}

/// `mean^2 / variance` over the pooled region pixels; `+inf` for a flat region.
pub fn enl(img: &Raster, region: &RegionSpec) -> Result<f64> {
    let area = region.area();
    if area < MIN_ENL_AREA {
        return Err(Error::Region(format!(
            "ENL region covers {area} pixels, need at least {MIN_ENL_AREA}"
        )));
    }
    let values: Vec<f64> = region.pixels(img)?.collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(mean * mean / var)
}

fn ratio_of_sums(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

fn laplacian_abs_sum(img: &Raster) -> f64 {
    let (w, h) = img.dims();
    if w < 3 || h < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let mut acc = 8.0 * img.get(r, c);
            for dr in 0..3 {
                for dc in 0..3 {
                    if dr != 1 || dc != 1 {
                        acc -= img.get(r + dr - 1, c + dc - 1);
                    }
                }
            }
            sum += acc.abs();
        }
    }
    sum
}

/// Edge preservation index: total absolute 3x3 Laplacian response of `test`
/// relative to that of `noisy`, border pixels excluded.
pub fn epi(test: &Raster, noisy: &Raster) -> Result<f64> {
    test.ensure_same_dims(noisy)?;
    Ok(ratio_of_sums(laplacian_abs_sum(test), laplacian_abs_sum(noisy)))
}

/// Direction of adjacent pixel pairs for [`epd_roa`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Horizontal,
    Vertical,
}

fn ratio_sum(img: &Raster, direction: Direction) -> f64 {
    let (w, h) = img.dims();
    let mut sum = 0.0;
    match direction {
        Direction::Horizontal => {
            for r in 0..h {
                let row = img.row(r);
                for pair in row.windows(2) {
                    sum += (pair[0] / pair[1].abs().max(EPD_FLOOR)).abs();
                }
            }
        }
        Direction::Vertical => {
            for r in 0..h.saturating_sub(1) {
                let (a, b) = (img.row(r), img.row(r + 1));
                for c in 0..w {
                    sum += (a[c] / b[c].abs().max(EPD_FLOOR)).abs();
                }
            }
        }
    }
    sum
}

/// Edge preservation degree based on the ratio of averages: summed adjacent-pixel
/// ratios of `test` relative to those of `noisy`.
pub fn epd_roa(test: &Raster, noisy: &Raster, direction: Direction) -> Result<f64> {
    test.ensure_same_dims(noisy)?;
    Ok(ratio_of_sums(ratio_sum(test, direction), ratio_sum(noisy, direction)))
}

/// Structural quality index: mean SSIM-style similarity between `test` and
/// `noisy` over non-overlapping 8x8 tiles, stabilized by `(0.01 * peak)^2`.
pub fn sqi(test: &Raster, noisy: &Raster, peak: f64) -> Result<f64> {
    test.ensure_same_dims(noisy)?;
    let (w, h) = test.dims();
    let (tiles_x, tiles_y) = (w / SQI_TILE, h / SQI_TILE);
    if tiles_x == 0 || tiles_y == 0 {
        return Err(Error::Size(format!(
            "SQI needs at least one {SQI_TILE}x{SQI_TILE} tile"
        )));
    }
    let eps = (0.01 * peak).powi(2);
    let n = (SQI_TILE * SQI_TILE) as f64;
    let mut total = 0.0;
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            let (mut st, mut sn) = (0.0, 0.0);
            for r in ty * SQI_TILE..(ty + 1) * SQI_TILE {
                for c in tx * SQI_TILE..(tx + 1) * SQI_TILE {
                    st += test.get(r, c);
                    sn += noisy.get(r, c);
                }
            }
            let (mt, mn) = (st / n, sn / n);
            let (mut vt, mut vn, mut cov) = (0.0, 0.0, 0.0);
            for r in ty * SQI_TILE..(ty + 1) * SQI_TILE {
                for c in tx * SQI_TILE..(tx + 1) * SQI_TILE {
                    let dt = test.get(r, c) - mt;
                    let dn = noisy.get(r, c) - mn;
                    vt += dt * dt;
                    vn += dn * dn;
                    cov += dt * dn;
                }
            }
            let (vt, vn, cov) = (vt / n, vn / n, cov / n);
            total += ((2.0 * mt * mn + eps) * (2.0 * cov + eps)) / ((mt * mt + mn * mn + eps) * (vt + vn + eps));
        }
    }
    Ok(total / (tiles_x * tiles_y) as f64)
}

pub fn mean_intensity(img: &Raster) -> f64 {
    img.data().iter().sum::<f64>() / img.data().len() as f64
}

fn finite_or_null<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) if x.is_finite() => s.serialize_f64(*x),
        _ => s.serialize_none(),
    }
}

/// Metrics for one image. Fields are `None` when the inputs they need were not
/// supplied; non-finite values (a flat ENL region) serialize as `null`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// dB, capped at [`PSNR_CAP_DB`].
    #[serde(serialize_with = "finite_or_null")]
    pub psnr: Option<f64>,
    /// Percent (SSIM x 100).
    #[serde(serialize_with = "finite_or_null")]
    pub ssim: Option<f64>,
    #[serde(serialize_with = "finite_or_null")]
    pub enl: Option<f64>,
    #[serde(serialize_with = "finite_or_null")]
    pub epi: Option<f64>,
    #[serde(serialize_with = "finite_or_null")]
    pub epd_h: Option<f64>,
    #[serde(serialize_with = "finite_or_null")]
    pub epd_v: Option<f64>,
    #[serde(serialize_with = "finite_or_null")]
    pub sqi: Option<f64>,
    pub mean_intensity: f64,
}

/// Computes every metric the supplied inputs allow.
pub fn evaluate(
    test: &Raster,
    reference: Option<&Raster>,
    noisy: Option<&Raster>,
    regions: Option<&RegionSpec>,
    peak: f64,
) -> Result<MetricReport> {
    let mut report = MetricReport {
        mean_intensity: mean_intensity(test),
        ..MetricReport::default()
    };
    if let Some(reference) = reference {
        report.psnr = Some(psnr(reference, test, peak)?.min(PSNR_CAP_DB));
        report.ssim = Some(100.0 * ssim(reference, test, peak)?);
    }
    if let Some(noisy) = noisy {
        report.epi = Some(epi(test, noisy)?);
        report.epd_h = Some(epd_roa(test, noisy, Direction::Horizontal)?);
        report.epd_v = Some(epd_roa(test, noisy, Direction::Vertical)?);
        report.sqi = Some(sqi(test, noisy, peak)?);
    }
    if let Some(regions) = regions {
        report.enl = Some(enl(test, regions)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RasterKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: usize, h: usize, seed: u64, scale: f64) -> Raster {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Raster::from_fn(w, h, RasterKind::Intensity, |_, _| scale * rng.random::<f64>()).unwrap()
    }

    fn constant(w: usize, h: usize, v: f64) -> Raster {
        Raster::filled(w, h, v, RasterKind::Intensity).unwrap()
    }

    /// Direct per-window evaluation, no separable filtering.
    #[allow(clippy::needless_range_loop)]
    fn ssim_oracle(x: &Raster, y: &Raster, peak: f64) -> f64 {
        let mut g = [[0.0; 11]; 11];
        let mut s = 0.0;
        for (i, row) in g.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let (a, b) = (i as f64 - 5.0, j as f64 - 5.0);
                *v = (-(a * a + b * b) / 4.5).exp();
                s += *v;
            }
        }
        let c1 = (0.01 * peak) * (0.01 * peak);
        let c2 = (0.03 * peak) * (0.03 * peak);
        let (w, h) = x.dims();
        let mut total = 0.0;
        let mut count = 0;
        for r in 0..=h - 11 {
            for c in 0..=w - 11 {
                let (mut mx, mut my) = (0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        mx += g[i][j] / s * x.get(r + i, c + j);
                        my += g[i][j] / s * y.get(r + i, c + j);
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let dx = x.get(r + i, c + j) - mx;
                        let dy = y.get(r + i, c + j) - my;
                        vx += g[i][j] / s * dx * dx;
                        vy += g[i][j] / s * dy * dy;
                        cxy += g[i][j] / s * dx * dy;
                    }
                }
                total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        total / count as f64
    }

    #[test]
    fn psnr_examples() {
        let a = random(16, 16, 1, 200.0);
        assert_eq!(psnr(&a, &a, 255.0).unwrap(), f64::INFINITY);
        let b = a.map(RasterKind::Intensity, |v| v + 16.0).unwrap();
        let p = psnr(&a, &b, 255.0).unwrap();
        assert!((p - 10.0 * (255.0f64 * 255.0 / 256.0).log10()).abs() < 1e-12);
        assert!((p - 24.048).abs() < 1e-3);
        let c = a.map(RasterKind::Intensity, |v| v + 8.0).unwrap();
        let gain = psnr(&a, &c, 255.0).unwrap() - p;
        assert!((gain - 20.0 * 2f64.log10()).abs() < 1e-12);
        assert!((gain - 6.02).abs() < 1e-3);
    }

    #[test]
    fn psnr_is_symmetric_and_checks_dims() {
        let a = random(16, 16, 1, 200.0);
        let b = random(16, 16, 2, 200.0);
        assert_eq!(psnr(&a, &b, 255.0).unwrap(), psnr(&b, &a, 255.0).unwrap());
        assert!(psnr(&a, &random(16, 15, 1, 1.0), 255.0).is_err());
        assert!(psnr(&a, &b, 0.0).is_err());
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = random(32, 24, 3, 255.0);
        let b = random(32, 24, 4, 255.0);
        assert!((ssim(&a, &a, 255.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((ssim(&a, &b, 255.0).unwrap() - ssim(&b, &a, 255.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_negative_image_is_negative() {
        let a = random(32, 32, 5, 255.0);
        let neg = a.map(RasterKind::Intensity, |v| 255.0 - v).unwrap();
        assert!(ssim(&a, &neg, 255.0).unwrap() < 0.0);
    }

    #[test]
    fn ssim_matches_windowed_oracle() {
        let a = random(64, 64, 6, 255.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = a
            .map(RasterKind::Intensity, |v| (v + rng.random_range(-40.0..40.0)).max(0.0))
            .unwrap();
        let fast = ssim(&a, &b, 255.0).unwrap();
        let slow = ssim_oracle(&a, &b, 255.0);
        assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = random(10, 40, 1, 1.0);
        assert!(matches!(ssim(&a, &a, 1.0), Err(Error::Size(_))));
    }

    #[test]
    fn enl_examples() {
        let all = RegionSpec {
            rects: vec![Rect {
                row: 0,
                col: 0,
                height: 10,
                width: 10,
            }],
        };
        assert_eq!(enl(&constant(10, 10, 3.0), &all).unwrap(), f64::INFINITY);
        let a = random(10, 10, 8, 1.0);
        let scaled = a.map(RasterKind::Intensity, |v| 7.5 * v).unwrap();
        assert!((enl(&a, &all).unwrap() - enl(&scaled, &all).unwrap()).abs() < 1e-9);
        let small = RegionSpec {
            rects: vec![Rect {
                row: 0,
                col: 0,
                height: 7,
                width: 9,
            }],
        };
        assert!(enl(&a, &small).is_err());
        let outside = RegionSpec {
            rects: vec![Rect {
                row: 5,
                col: 0,
                height: 10,
                width: 10,
            }],
        };
        assert!(matches!(enl(&a, &outside), Err(Error::Region(_))));
    }

    #[test]
    fn region_file_parsing() {
        let spec = RegionSpec::parse("# homogeneous\n0 0 10 10\n\n 20 30 8 16  # field\n").unwrap();
        assert_eq!(spec.rects.len(), 2);
        assert_eq!(
            spec.rects[1],
            Rect {
                row: 20,
                col: 30,
                height: 8,
                width: 16
            }
        );
        assert_eq!(spec.area(), 228);
        assert!(RegionSpec::parse("1 2 3").is_err());
        assert!(RegionSpec::parse("1 2 3 x").is_err());
    }

    #[test]
    fn epi_examples() {
        let n = random(20, 20, 9, 100.0);
        assert_eq!(epi(&n, &n).unwrap(), 1.0);
        assert_eq!(epi(&constant(20, 20, 4.0), &n).unwrap(), 0.0);
        let half = n.map(RasterKind::Intensity, |v| 0.5 * v).unwrap();
        assert!((epi(&half, &n).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn epd_examples() {
        let n = random(20, 20, 10, 100.0)
            .map(RasterKind::Intensity, |v| v + 1.0)
            .unwrap();
        for d in [Direction::Horizontal, Direction::Vertical] {
            assert_eq!(epd_roa(&n, &n, d).unwrap(), 1.0);
            assert_eq!(epd_roa(&constant(20, 20, 3.0), &constant(20, 20, 9.0), d).unwrap(), 1.0);
            let scaled = n.map(RasterKind::Intensity, |v| 3.0 * v).unwrap();
            assert!((epd_roa(&scaled, &n, d).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sqi_examples() {
        let n = random(32, 32, 11, 255.0);
        assert!((sqi(&n, &n, 255.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((sqi(&constant(32, 32, 5.0), &constant(32, 32, 5.0), 255.0).unwrap() - 1.0).abs() < 1e-12);
        let other = random(32, 32, 12, 255.0);
        assert!(sqi(&other, &n, 255.0).unwrap() < 0.5);
        assert!(sqi(&random(7, 32, 1, 1.0), &random(7, 32, 2, 1.0), 1.0).is_err());
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean_intensity(&constant(5, 5, 2.5)), 2.5);
        let checker = Raster::from_fn(4, 4, RasterKind::Intensity, |r, c| ((r + c) % 2) as f64 * 2.0).unwrap();
        assert_eq!(mean_intensity(&checker), 1.0);
        let scaled = checker.map(RasterKind::Intensity, |v| 3.0 * v).unwrap();
        assert_eq!(mean_intensity(&scaled), 3.0);
    }

    #[test]
    fn report_serializes_with_stable_order() {
        let a = random(16, 16, 13, 255.0);
        let r = evaluate(&a, Some(&a), None, None, 255.0).unwrap();
        assert_eq!(r.psnr, Some(PSNR_CAP_DB));
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.starts_with("{\"psnr\":99.0,\"ssim\":100.0,\"enl\":null"), "{json}");
    }
}
