//! Synthetic spatial-decoding problems.
//!
//! The ground-truth weight map is a sum of disjoint spherical blobs of unit
//! height and alternating sign. Sample volumes are unit-variance white noise
//! smoothed with a Gaussian kernel (so neighboring voxels carry correlated
//! information, like real volumes), quantized to f32 at generation time so
//! the in-memory dataset matches a saved-and-reloaded package exactly.
//! Targets come from the true linear scores plus Gaussian noise scaled to the
//! requested signal-to-noise ratio.

use std::sync::Arc;

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::io::{format_labels, VolumePackage};
use crate::rng::{stream_rng, STREAM_BLOBS, STREAM_LABEL_NOISE, STREAM_VOLUME_NOISE};
use crate::volume::{Dataset, TaskKind, VolumeGrid, WeightMap};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub dims: (usize, usize, usize),
    pub n_samples: usize,
    pub n_blobs: usize,
    /// Blob radius in voxels (Euclidean).
    pub blob_radius: usize,
    /// Ratio var(scores) / var(target noise); may be infinite for a
    /// noise-free problem.
    pub snr: f64,
    /// Full width at half maximum of the smoothing kernel, in voxels;
    /// zero disables smoothing.
    pub smoothing_fwhm: f64,
    pub task: TaskKind,
    pub seed: u64,
}

/// Desk-scale defaults: a 20x20x20 grid, 200 samples, two blobs of radius 3,
/// snr 4, 2-voxel smoothing.
impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            dims: (20, 20, 20),
            n_samples: 200,
            n_blobs: 2,
            blob_radius: 3,
            snr: 4.0,
            smoothing_fwhm: 2.0,
            task: TaskKind::Classification,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let (nx, ny, nz) = self.dims;
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidArg("grid dimensions must be positive".into()));
        }
        if self.n_samples < 2 {
            return Err(Error::InvalidArg("need at least 2 samples".into()));
        }
        if self.n_blobs == 0 {
            return Err(Error::InvalidArg("need at least one blob".into()));
        }
        if !(self.snr > 0.0) {
            return Err(Error::InvalidArg(format!(
                "snr must be positive, got {}",
                self.snr
            )));
        }
        if self.smoothing_fwhm < 0.0 {
            return Err(Error::InvalidArg("smoothing fwhm must be nonnegative".into()));
        }
        for (d, name) in [(nx, "x"), (ny, "y"), (nz, "z")] {
            if 2 * self.blob_radius + 1 > d {
                return Err(Error::InvalidArg(format!(
                    "blob of radius {} does not fit along {name} (size {d})",
                    self.blob_radius
                )));
            }
        }
        Ok(())
    }
}

pub struct SyntheticData {
    pub grid: Arc<VolumeGrid>,
    pub dataset: Dataset,
    pub truth: WeightMap,
    pub package: VolumePackage,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let grid = Arc::new(VolumeGrid::full(spec.dims));
    let volume = grid.volume_len();

    let truth_values = place_blobs(spec, &grid)?;
    let truth = WeightMap::new(truth_values, 0.0, Arc::clone(&grid))?;

    // sample volumes: smoothed white noise, quantized to the storage dtype
    let sigma = spec.smoothing_fwhm / (8.0 * std::f64::consts::LN_2).sqrt();
    let kernel = gaussian_kernel(sigma);
    let mut rng = stream_rng(spec.seed, STREAM_VOLUME_NOISE);
    let mut data = Vec::with_capacity(spec.n_samples * volume);
    let mut buffer = vec![0.0f64; volume];
    for _ in 0..spec.n_samples {
        for v in buffer.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        smooth_volume(&mut buffer, spec.dims, &kernel);
        data.extend(buffer.iter().map(|&v| v as f32));
    }

    // scores against the ground truth, then target noise at the requested snr
    let mut scores = Array1::zeros(spec.n_samples);
    for i in 0..spec.n_samples {
        let sample = &data[i * volume..(i + 1) * volume];
        let mut s = 0.0;
        for (m, &f) in grid.masked_to_full().iter().enumerate() {
            s += sample[f] as f64 * truth.values[m];
        }
        scores[i] = s;
    }
    let mean = scores.sum() / spec.n_samples as f64;
    let var = scores.mapv(|s| (s - mean) * (s - mean)).sum() / spec.n_samples as f64;
    let noise_std = if spec.snr.is_finite() {
        (var / spec.snr).sqrt()
    } else {
        0.0
    };
    let mut noise_rng = stream_rng(spec.seed, STREAM_LABEL_NOISE);
    let noisy = scores.mapv(|s| s + noise_std * noise_rng.sample::<f64, _>(StandardNormal));

    let y = match spec.task {
        TaskKind::Classification => noisy.mapv(|v| if v >= 0.0 { 1.0 } else { -1.0 }),
        TaskKind::Regression => noisy,
    };
    let dataset = {
        let x = ndarray::Array2::from_shape_fn((spec.n_samples, grid.masked_len()), |(i, m)| {
            data[i * volume + grid.full_index(m)] as f64
        });
        Dataset::new(x, y.clone(), Arc::clone(&grid))?
    };
    dataset.validate_for(spec.task)?;

    let labels = format_labels(&y, spec.task);
    let package = VolumePackage::new(spec.dims, vec![1u8; volume], data, Some(labels))?;

    Ok(SyntheticData {
        grid,
        dataset,
        truth,
        package,
    })
}

/// Sample non-overlapping blob centers and paint unit-height spheres with
/// alternating signs. Centers keep the whole sphere inside the volume.
fn place_blobs(spec: &SyntheticSpec, grid: &VolumeGrid) -> Result<Array1<f64>> {
    let (nx, ny, nz) = spec.dims;
    let r = spec.blob_radius;
    let mut rng = stream_rng(spec.seed, STREAM_BLOBS);
    let mut centers: Vec<(usize, usize, usize)> = Vec::with_capacity(spec.n_blobs);
    let min_sep_sq = ((2 * r + 1) * (2 * r + 1)) as f64;
    for _ in 0..spec.n_blobs {
        let mut placed = false;
        for _attempt in 0..1000 {
            let c = (
                rng.random_range(r..nx - r),
                rng.random_range(r..ny - r),
                rng.random_range(r..nz - r),
            );
            let ok = centers.iter().all(|&(x, y, z)| {
                let dx = x as f64 - c.0 as f64;
                let dy = y as f64 - c.1 as f64;
                let dz = z as f64 - c.2 as f64;
                dx * dx + dy * dy + dz * dz >= min_sep_sq
            });
            if ok {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::InvalidArg(format!(
                "could not place {} disjoint blobs of radius {r} in {nx}x{ny}x{nz}",
                spec.n_blobs
            )));
        }
    }

    let mut w = Array1::zeros(grid.masked_len());
    let r_sq = (r * r) as f64;
    for (b, &(cx, cy, cz)) in centers.iter().enumerate() {
        let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
        for z in cz.saturating_sub(r)..=(cz + r).min(nz - 1) {
            for y in cy.saturating_sub(r)..=(cy + r).min(ny - 1) {
                for x in cx.saturating_sub(r)..=(cx + r).min(nx - 1) {
                    let dx = x as f64 - cx as f64;
                    let dy = y as f64 - cy as f64;
                    let dz = z as f64 - cz as f64;
                    if dx * dx + dy * dy + dz * dz <= r_sq {
                        let m = grid
                            .masked_index(grid.linear_index(x, y, z))
                            .expect("in range")
                            .expect("full mask");
                        w[m] = sign;
                    }
                }
            }
        }
    }
    Ok(w)
}

/// Discrete Gaussian kernel truncated at 3 sigma and normalized to sum 1.
/// Empty for sigma = 0 (no smoothing).
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return Vec::new();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for v in kernel.iter_mut() {
        *v /= sum;
    }
    kernel
}

/// Separable convolution along x, y, z with wrap-around boundaries, which
/// keeps the volume mean exactly (the kernel weights sum to 1 everywhere).
fn smooth_volume(volume: &mut [f64], dims: (usize, usize, usize), kernel: &[f64]) {
    if kernel.is_empty() {
        return;
    }
    let (nx, ny, nz) = dims;
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    let mut line: Vec<f64> = Vec::new();
    let mut convolve_line = |line: &[f64], write: &mut dyn FnMut(usize, f64)| {
        let len = line.len() as i64;
        let radius = (kernel.len() / 2) as i64;
        for t in 0..line.len() {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                let src = (t as i64 + k as i64 - radius).rem_euclid(len) as usize;
                acc += kv * line[src];
            }
            write(t, acc);
        }
    };
    for z in 0..nz {
        for y in 0..ny {
            line.clear();
            line.extend((0..nx).map(|x| volume[idx(x, y, z)]));
            convolve_line(&line, &mut |x, v| volume[idx(x, y, z)] = v);
        }
    }
    for z in 0..nz {
        for x in 0..nx {
            line.clear();
            line.extend((0..ny).map(|y| volume[idx(x, y, z)]));
            convolve_line(&line, &mut |y, v| volume[idx(x, y, z)] = v);
        }
    }
    for y in 0..ny {
        for x in 0..nx {
            line.clear();
            line.extend((0..nz).map(|z| volume[idx(x, y, z)]));
            convolve_line(&line, &mut |z, v| volume[idx(x, y, z)] = v);
        }
    }
}
