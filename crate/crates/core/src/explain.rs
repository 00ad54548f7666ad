//! Grad-CAM and Eigen-CAM heatmaps over `H'×W'×C'` feature maps, plus
//! grayscale and color-overlay rendering.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{hwc, resize_tensor, RawImage};
use crate::math;
use crate::model::{Arch, SageModel};
use crate::numerics::{matmul, top_singular_vector, Tensor, DEFAULT_MAX_ITERS, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CamMethod {
    GradCam,
    EigenCam,
}

impl CamMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gradcam" => Ok(Self::GradCam),
            "eigencam" => Ok(Self::EigenCam),
            other => Err(Error::Config(format!("unknown CAM method {other:?}"))),
        }
    }
}

/// Relevance grid normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    /// `H'×W'`
    pub grid: Tensor,
    pub source: CamMethod,
    pub sample_id: String,
    /// Set when the raw map was constant (e.g. all zero); the grid is then zero.
    pub degenerate: bool,
}

impl Heatmap {
    fn from_raw(raw: Vec<f64>, h: usize, w: usize, source: CamMethod) -> Result<Self> {
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let degenerate = !(hi > lo) || !(hi - lo).is_finite();
        let data = if degenerate {
            vec![0.0; raw.len()]
        } else {
            raw.iter().map(|&v| (v - lo) / (hi - lo)).collect()
        };
        Ok(Self {
            grid: Tensor::new(vec![h, w], data)?,
            source,
            sample_id: String::new(),
            degenerate,
        })
    }

    pub fn with_sample_id(mut self, id: impl Into<String>) -> Self {
        self.sample_id = id.into();
        self
    }

    pub fn height(&self) -> usize {
        self.grid.rows()
    }

    pub fn width(&self) -> usize {
        self.grid.cols()
    }
}

fn as_matrix(map: &Tensor) -> Result<(usize, usize, usize, Tensor)> {
    if map.shape().len() != 3 {
        return Err(Error::shape("feature map", map.shape(), &[0, 0, 0]));
    }
    let (h, w, c) = hwc(map)?;
    if h * w * c == 0 {
        return Err(Error::Range("feature map has an empty axis".into()));
    }
    Ok((h, w, c, map.clone().reshape(&[h * w, c])?))
}

/// Projection of the `(H'·W')×C'` map onto its top right singular vector.
pub fn eigen_cam(map: &Tensor) -> Result<Heatmap> {
    let (h, w, _, m) = as_matrix(map)?;
    if m.max_abs() == 0.0 {
        return Heatmap::from_raw(vec![0.0; h * w], h, w, CamMethod::EigenCam);
    }
    let t = top_singular_vector(&m, DEFAULT_MAX_ITERS, DEFAULT_TOL)?;
    let v = Tensor::new(vec![t.v.len(), 1], t.v)?;
    Heatmap::from_raw(matmul(&m, &v)?.into_data(), h, w, CamMethod::EigenCam)
}

/// A differentiable class score over pooled features.
pub trait ClassScore {
    fn num_classes(&self) -> usize;

    fn feature_dim(&self) -> usize;

    fn logits(&self, pooled: &[f64]) -> Result<Vec<f64>>;

    /// Logit of `class` and its gradient with respect to `pooled`.
    fn score_and_grad(&self, pooled: &[f64], class: usize) -> Result<(f64, Vec<f64>)>;
}

impl ClassScore for SageModel {
    fn num_classes(&self) -> usize {
        self.class_table().len()
    }

    fn feature_dim(&self) -> usize {
        self.input_dim()
    }

    fn logits(&self, pooled: &[f64]) -> Result<Vec<f64>> {
        let x = Tensor::new(vec![1, pooled.len()], pooled.to_vec())?;
        Ok(SageModel::logits(self, &x)?.into_data())
    }

    fn score_and_grad(&self, pooled: &[f64], class: usize) -> Result<(f64, Vec<f64>)> {
        if self.arch() == Arch::GnnOnly {
            return Err(Error::Unsupported(
                "gnn_only consumes raw pixels; there is no gradient path to CNN feature maps".into(),
            ));
        }
        self.logit_and_input_grad(pooled, class)
    }
}

/// `y = W·pooled`, a stand-in classifier with a closed-form Grad-CAM.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScore {
    /// `K×C`
    pub weights: Tensor,
}

impl ClassScore for LinearScore {
    fn num_classes(&self) -> usize {
        self.weights.rows()
    }

    fn feature_dim(&self) -> usize {
        self.weights.cols()
    }

    fn logits(&self, pooled: &[f64]) -> Result<Vec<f64>> {
        if pooled.len() != self.feature_dim() {
            return Err(Error::shape("linear score", &[pooled.len()], self.weights.shape()));
        }
        Ok((0..self.num_classes())
            .map(|k| self.weights.row(k).iter().zip(pooled).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn score_and_grad(&self, pooled: &[f64], class: usize) -> Result<(f64, Vec<f64>)> {
        let logits = self.logits(pooled)?;
        let score = *logits
            .get(class)
            .ok_or_else(|| Error::Range(format!("class {class} outside {} classes", logits.len())))?;
        Ok((score, self.weights.row(class).to_vec()))
    }
}

/// Per-channel spatial mean of an `H'×W'×C'` map.
pub fn global_average(map: &Tensor) -> Result<Vec<f64>> {
    let (h, w, c, m) = as_matrix(map)?;
    let mut out = vec![0.0; c];
    for i in 0..h * w {
        for (o, &v) in out.iter_mut().zip(m.row(i)) {
            *o += v;
        }
    }
    let n = (h * w) as f64;
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// Grad-CAM for `class` (default: the top-scoring class).
///
/// With global-average pooling `∂score/∂A[h,w,c] = g_c/(H'W')`, so the
/// channel weights are `α_c = g_c/(H'W')` and the map is
/// `ReLU(Σ_c α_c·A[·,·,c])`, min-max normalized.
pub fn grad_cam(model: &dyn ClassScore, map: &Tensor, class: Option<usize>) -> Result<Heatmap> {
    let (h, w, c, m) = as_matrix(map)?;
    if c != model.feature_dim() {
        return Err(Error::shape("grad_cam", &[c], &[model.feature_dim()]));
    }
    let pooled = global_average(map)?;
    let class = match class {
        Some(k) if k >= model.num_classes() => {
            return Err(Error::Range(format!("class {k} outside {} classes", model.num_classes())))
        }
        Some(k) => k,
        None => crate::model::argmax(&model.logits(&pooled)?),
    };
    let (_, g) = model.score_and_grad(&pooled, class)?;
    let area = (h * w) as f64;
    let alpha: Vec<f64> = g.iter().map(|&gc| gc / area).collect();
    let raw: Vec<f64> = (0..h * w)
        .map(|i| {
            let s: f64 = m.row(i).iter().zip(&alpha).map(|(a, b)| a * b).sum();
            s.max(0.0)
        })
        .collect();
    Heatmap::from_raw(raw, h, w, CamMethod::GradCam)
}

/// 256-entry blue→cyan→yellow→red ramp. Entry `i` with `t = i/255` is
/// `255·clamp(1.5 − |4t − k|, 0, 1)` for `k = 3, 2, 1` (red, green, blue),
/// rounded half away from zero.
pub fn color_ramp() -> [[u8; 3]; 256] {
    let mut out = [[0u8; 3]; 256];
    for (i, px) in out.iter_mut().enumerate() {
        let t = i as f64 / 255.0;
        for (ch, k) in [3.0, 2.0, 1.0].into_iter().enumerate() {
            let v = (1.5 - math::abs(4.0 * t - k)).clamp(0.0, 1.0);
            px[ch] = math::round(255.0 * v) as u8;
        }
    }
    out
}

fn quantize(v: f64) -> u8 {
    math::round(v.clamp(0.0, 1.0) * 255.0) as u8
}

/// Heatmap resampled to `out_h×out_w`, in `[0, 1]`.
fn resampled(h: &Heatmap, out_h: usize, out_w: usize) -> Result<Tensor> {
    let t = h.grid.clone().reshape(&[h.height(), h.width(), 1])?;
    resize_tensor(&t, out_h, out_w)
}

/// 8-bit grayscale heatmap at the base image size, or native size without one.
pub fn render_gray(h: &Heatmap, base: Option<&RawImage>) -> Result<RawImage> {
    let (oh, ow) = base.map_or((h.height(), h.width()), |b| (b.height, b.width));
    let t = resampled(h, oh, ow)?;
    RawImage::new(oh, ow, 1, t.data().iter().map(|&v| quantize(v)).collect())
}

/// Colorized heatmap blended 50/50 with the base image.
pub fn render_overlay(h: &Heatmap, base: &RawImage) -> Result<RawImage> {
    let ramp = color_ramp();
    let t = resampled(h, base.height, base.width)?;
    let mut data = Vec::with_capacity(base.height * base.width * 3);
    for (i, &v) in t.data().iter().enumerate() {
        let color = ramp[quantize(v) as usize];
        for (ch, &c) in color.iter().enumerate() {
            let b = if base.channels == 3 {
                base.data[3 * i + ch]
            } else {
                base.data[i]
            };
            data.push(((u16::from(c) + u16::from(b) + 1) / 2) as u8);
        }
    }
    RawImage::new(base.height, base.width, 3, data)
}

/// Base image and its overlay side by side, as RGB.
pub fn render_montage(h: &Heatmap, base: &RawImage) -> Result<RawImage> {
    let overlay = render_overlay(h, base)?;
    let (hh, w) = (base.height, base.width);
    let mut data = Vec::with_capacity(hh * 2 * w * 3);
    for y in 0..hh {
        for x in 0..w {
            let i = y * w + x;
            if base.channels == 3 {
                data.extend_from_slice(&base.data[3 * i..3 * i + 3]);
            } else {
                data.extend_from_slice(&[base.data[i]; 3]);
            }
        }
        data.extend_from_slice(&overlay.data[y * w * 3..(y + 1) * w * 3]);
    }
    RawImage::new(hh, 2 * w, 3, data)
}
