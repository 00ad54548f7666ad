//! Synthetic relational dataset: Gaussian clouds around well-separated unit
//! centroids, plus optional companion spatial maps and raw images so every
//! architecture and explanation path can be exercised without real data.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::feature_store::{FeatureKind, FeatureStore};
use super::manifest::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::image::{self, AugmentSpec, RawImage};
use crate::math;
use crate::numerics::{dot, norm2, Rng, Tensor};

/// Largest allowed cosine between two class centroids.
pub const MAX_CENTROID_COSINE: f64 = 0.5;
const MAX_CENTROID_TRIES: usize = 10_000;

pub fn sample_id(i: usize) -> String {
    format!("s{i:05}")
}

pub fn class_label(k: usize) -> String {
    format!("class_{k:02}")
}

/// Unit centroids with pairwise cosine at most [`MAX_CENTROID_COSINE`].
pub fn draw_centroids(k: usize, dim: usize, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut failures = 0;
    while centroids.len() < k {
        let mut c: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let n = norm2(&c);
        c.iter_mut().for_each(|x| *x /= n);
        if centroids.iter().all(|o| dot(o, &c) <= MAX_CENTROID_COSINE) {
            centroids.push(c);
        } else {
            failures += 1;
            if failures >= MAX_CENTROID_TRIES {
                return Err(Error::Dataset(format!(
                    "could not place {k} centroids in {dim} dimensions with cosine <= {MAX_CENTROID_COSINE}; \
                     lower the class count or raise the dimension"
                )));
            }
        }
    }
    Ok(centroids)
}

/// `k` classes of `n_per_class` samples, each `centroid + N(0, sigma²·I)`.
///
/// Samples are ordered class by class; splits are left unassigned.
pub fn synth_dataset(
    k: usize,
    n_per_class: usize,
    dim: usize,
    noise_sigma: f64,
    rng: &mut Rng,
) -> Result<(DatasetManifest, FeatureStore)> {
    if k < 2 || n_per_class < 4 || dim < 2 || !(noise_sigma > 0.0) {
        return Err(Error::Range(format!(
            "synth_dataset needs k >= 2, n >= 4, dim >= 2, sigma > 0 (got {k}, {n_per_class}, {dim}, {noise_sigma})"
        )));
    }
    let centroids = draw_centroids(k, dim, rng)?;
    synth_from_centroids(&centroids, n_per_class, noise_sigma, rng)
}

/// As [`synth_dataset`] but with caller-supplied centroids.
pub fn synth_from_centroids(
    centroids: &[Vec<f64>],
    n_per_class: usize,
    noise_sigma: f64,
    rng: &mut Rng,
) -> Result<(DatasetManifest, FeatureStore)> {
    let dim = centroids.first().map_or(0, Vec::len);
    let mut entries = Vec::with_capacity(centroids.len() * n_per_class);
    let mut rows = Vec::with_capacity(centroids.len() * n_per_class);
    for (class, c) in centroids.iter().enumerate() {
        if c.len() != dim {
            return Err(Error::shape("synth_from_centroids", &[dim], &[c.len()]));
        }
        for _ in 0..n_per_class {
            let id = sample_id(entries.len());
            rows.push(c.iter().map(|&m| m + noise_sigma * rng.normal()).collect::<Vec<f64>>());
            entries.push(ManifestEntry {
                sample_id: id,
                label: class_label(class),
                split: None,
            });
        }
    }
    let ids = entries.iter().map(|e| e.sample_id.clone()).collect();
    let manifest = DatasetManifest::new(entries)?;
    let store = FeatureStore::pooled_from_rows(&rows, ids)?;
    Ok((manifest, store))
}

/// Spatial maps whose per-channel global average equals the pooled rows.
///
/// Each sample gets one Gaussian "lesion" mask `m` with `mean(m) = 1`, and
/// `map[h,w,c] = pooled[c]·m[h,w]`, so every map is rank one.
pub fn synth_spatial(pooled: &FeatureStore, height: usize, width: usize, rng: &mut Rng) -> Result<FeatureStore> {
    if pooled.kind() != FeatureKind::Pooled || height == 0 || width == 0 {
        return Err(Error::Range("synth_spatial needs a pooled store and a positive grid".into()));
    }
    let c = pooled.row_len();
    let mut payload = Vec::with_capacity(pooled.n() * height * width * c);
    for i in 0..pooled.n() {
        let mask = lesion_mask(height, width, rng);
        let row = pooled.row_f64(i);
        for &m in &mask {
            payload.extend(row.iter().map(|&p| (p * m) as f32));
        }
    }
    FeatureStore::new(
        FeatureKind::Spatial,
        vec![height, width, c],
        payload,
        pooled.ids().to_vec(),
    )
}

fn lesion_mask(h: usize, w: usize, rng: &mut Rng) -> Vec<f64> {
    let cy = rng.uniform_range(0.0, h as f64 - 1.0);
    let cx = rng.uniform_range(0.0, w as f64 - 1.0);
    let r = rng.uniform_range(0.15, 0.35) * h.max(w) as f64;
    let mut m: Vec<f64> = (0..h * w)
        .map(|i| {
            let (y, x) = ((i / w) as f64, (i % w) as f64);
            0.1 + math::exp(-((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (2.0 * r * r))
        })
        .collect();
    let mean = m.iter().sum::<f64>() / m.len() as f64;
    m.iter_mut().for_each(|v| *v /= mean);
    m
}

/// Parameters of the synthetic leaf-like images.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthImageSpec {
    pub side: usize,
    pub blobs: usize,
    pub pixel_noise: f64,
    pub augment: AugmentSpec,
}

impl Default for SynthImageSpec {
    fn default() -> Self {
        Self {
            side: 32,
            blobs: 3,
            pixel_noise: 0.15,
            augment: AugmentSpec::default(),
        }
    }
}

/// One grayscale image per manifest entry: a per-class blob prototype,
/// randomly augmented, plus pixel noise.
pub fn synth_images(manifest: &DatasetManifest, spec: &SynthImageSpec, rng: &mut Rng) -> Result<Vec<RawImage>> {
    let s = spec.side;
    if s == 0 {
        return Err(Error::Range("image side must be positive".into()));
    }
    let prototypes: Vec<Tensor> = (0..manifest.class_table().len())
        .map(|_| prototype(s, spec.blobs, rng))
        .collect();
    let labels = manifest.label_indices()?;
    labels
        .iter()
        .map(|&c| {
            let aug = image::augment(&prototypes[c], &spec.augment, rng)?;
            let mut noisy = aug;
            for v in noisy.data_mut() {
                *v = (*v + spec.pixel_noise * rng.normal()).clamp(0.0, 1.0) * 255.0;
            }
            RawImage::from_tensor(&noisy)
        })
        .collect()
}

fn prototype(side: usize, blobs: usize, rng: &mut Rng) -> Tensor {
    let mut data = vec![0.15; side * side];
    for _ in 0..blobs {
        let cy = rng.uniform_range(0.2, 0.8) * side as f64;
        let cx = rng.uniform_range(0.2, 0.8) * side as f64;
        let r = rng.uniform_range(0.08, 0.2) * side as f64;
        let amp = rng.uniform_range(0.4, 0.8);
        for (i, v) in data.iter_mut().enumerate() {
            let (y, x) = ((i / side) as f64, (i % side) as f64);
            *v += amp * math::exp(-((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (2.0 * r * r));
        }
    }
    data.iter_mut().for_each(|v| *v = math::clamp01(*v));
    Tensor::new(vec![side, side, 1], data).expect("prototype shape")
}
