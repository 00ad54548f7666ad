//! Binary PGM/PPM decoding, bilinear resampling, `/255` normalization and
//! geometric augmentation.
//!
//! Images are `H×W×C` tensors (row-major, channel-interleaved). Every
//! resampling step uses half-pixel-center alignment and nearest-edge
//! replication for coordinates that fall outside the source.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::numerics::{Rng, Tensor};

/// 8-bit image as decoded from disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl RawImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Range("image dimensions must be at least 1".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Range(format!("unsupported channel count {channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(
                "RawImage::new",
                &[height, width, channels],
                &[data.len()],
            ));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            alloc::vec![self.height, self.width, self.channels],
            self.data.iter().map(|&b| f64::from(b)).collect(),
        )
        .expect("RawImage invariant")
    }

    /// Quantizes an `H×W×C` tensor with values in `[0, 255]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (h, w, c) = hwc(t)?;
        let data = t
            .data()
            .iter()
            .map(|&v| math::round(v.clamp(0.0, 255.0)) as u8)
            .collect();
        Self::new(h, w, c, data)
    }
}

/// Decodes binary PGM (`P5`) or PPM (`P6`) with maxval 255.
pub fn decode_pnm(bytes: &[u8]) -> Result<RawImage> {
    if bytes.len() < 2 {
        return Err(Error::format(0, "missing magic number"));
    }
    let channels = match &bytes[..2] {
        b"P5" => 1,
        b"P6" => 3,
        _ => return Err(Error::format(0, "bad magic (expected P5 or P6)")),
    };
    let mut pos = 2;
    let (width, _) = header_int(bytes, &mut pos, "width")?;
    let (height, _) = header_int(bytes, &mut pos, "height")?;
    let (maxval, maxval_at) = header_int(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::format(maxval_at, format!("maxval {maxval} is not 255")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format(pos, "expected whitespace after maxval")),
    }
    if width == 0 || height == 0 {
        return Err(Error::format(2, "zero image dimension"));
    }
    let need = width
        .checked_mul(height)
        .and_then(|x| x.checked_mul(channels))
        .ok_or_else(|| Error::format(2, "image dimensions overflow"))?;
    let avail = bytes.len() - pos;
    if avail < need {
        return Err(Error::format(
            pos,
            format!("truncated raster: expected {need} bytes, found {avail}"),
        ));
    }
    RawImage::new(height, width, channels, bytes[pos..pos + need].to_vec())
}

/// Returns the value and the offset where its digits start.
fn header_int(bytes: &[u8], pos: &mut usize, field: &str) -> Result<(usize, usize)> {
    // skip whitespace and `#` comments
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' || b == b'\r' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(Error::format(*pos, format!("truncated header before {field}"))),
        }
    }
    let start = *pos;
    let mut value: usize = 0;
    while let Some(&b) = bytes.get(*pos) {
        if !b.is_ascii_digit() {
            break;
        }
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add(usize::from(b - b'0')))
            .ok_or_else(|| Error::format(start, format!("{field} overflows")))?;
        *pos += 1;
    }
    if *pos == start {
        return Err(Error::format(start, format!("expected decimal {field}")));
    }
    Ok((value, start))
}

/// Encodes as `P5` (1 channel) or `P6` (3 channels) with maxval 255.
pub fn encode_pnm(img: &RawImage) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let header = format!("{magic}\n{} {}\n255\n", img.width, img.height);
    let mut out = Vec::with_capacity(header.len() + img.data.len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&img.data);
    out
}

pub(crate) fn hwc(t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [h, w, c] => Ok((h, w, c)),
        [h, w] => Ok((h, w, 1)),
        _ => Err(Error::shape("image tensor", t.shape(), &[0, 0, 0])),
    }
}

#[inline]
fn at(t: &[f64], w: usize, c: usize, y: usize, x: usize, ch: usize) -> f64 {
    t[(y * w + x) * c + ch]
}

/// Bilinear sample at continuous pixel-center coordinates, clamped to the edge.
fn sample(t: &[f64], h: usize, w: usize, c: usize, y: f64, x: f64, ch: usize) -> f64 {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = math::floor(y) as usize;
    let x0 = math::floor(x) as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let top = at(t, w, c, y0, x0, ch) * (1.0 - fx) + at(t, w, c, y0, x1, ch) * fx;
    let bottom = at(t, w, c, y1, x0, ch) * (1.0 - fx) + at(t, w, c, y1, x1, ch) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Bilinear resize of an `H×W×C` tensor (half-pixel centers, edge clamping).
pub fn resize_tensor(t: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (h, w, c) = hwc(t)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Range("output size must be at least 1x1".into()));
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let src = t.data();
    let mut data = Vec::with_capacity(out_h * out_w * c);
    for oy in 0..out_h {
        let y = (oy as f64 + 0.5) * sy - 0.5;
        for ox in 0..out_w {
            let x = (ox as f64 + 0.5) * sx - 0.5;
            for ch in 0..c {
                data.push(sample(src, h, w, c, y, x, ch));
            }
        }
    }
    Tensor::new(alloc::vec![out_h, out_w, c], data)
}

/// Bilinear resize of a decoded image; output values are reals in `[0, 255]`.
pub fn resize_bilinear(img: &RawImage, out_h: usize, out_w: usize) -> Result<Tensor> {
    resize_tensor(&img.to_tensor(), out_h, out_w)
}

/// Divides every value by 255.
pub fn normalize(t: &Tensor) -> Result<Tensor> {
    if let Some(bad) = t.data().iter().find(|v| !(0.0..=255.0).contains(*v)) {
        return Err(Error::Range(format!("pixel value {bad} outside [0, 255]")));
    }
    Ok(t.map(|v| v / 255.0))
}

/// ITU-R BT.601 luma; single-channel inputs pass through.
pub fn to_grayscale(t: &Tensor) -> Result<Tensor> {
    let (h, w, c) = hwc(t)?;
    match c {
        1 => t.clone().reshape(&[h, w, 1]),
        3 => {
            let data = t
                .data()
                .chunks_exact(3)
                .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                .collect();
            Tensor::new(alloc::vec![h, w, 1], data)
        }
        _ => Err(Error::Range(format!("unsupported channel count {c}"))),
    }
}

/// Side length of the raw-pixel node features used by the graph-only model.
pub const RAW_FEATURE_SIDE: usize = 32;

/// Grayscale, 32×32 bilinear downsample, `/255`, flattened to 1024 values.
pub fn raw_pixel_features(img: &RawImage) -> Result<Vec<f64>> {
    let resized = resize_bilinear(img, RAW_FEATURE_SIDE, RAW_FEATURE_SIDE)?;
    let gray = to_grayscale(&resized)?;
    Ok(normalize(&gray.map(|v| v.clamp(0.0, 255.0)))?.into_data())
}

/// Random augmentation ranges.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    pub max_rotation_deg: f64,
    pub horizontal_flip: bool,
    pub max_shift_frac: f64,
    pub max_zoom_frac: f64,
    pub rng_stream: u64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            max_rotation_deg: 20.0,
            horizontal_flip: true,
            max_shift_frac: 0.2,
            max_zoom_frac: 0.2,
            rng_stream: 0,
        }
    }
}

impl AugmentSpec {
    pub fn identity() -> Self {
        Self {
            max_rotation_deg: 0.0,
            horizontal_flip: false,
            max_shift_frac: 0.0,
            max_zoom_frac: 0.0,
            rng_stream: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=180.0).contains(&self.max_rotation_deg) {
            return Err(Error::Range("max_rotation_deg must lie in [0, 180]".into()));
        }
        if !(0.0..1.0).contains(&self.max_shift_frac) {
            return Err(Error::Range("max_shift_frac must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.max_zoom_frac) {
            return Err(Error::Range("max_zoom_frac must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Concrete parameters drawn for one augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub rotation_deg: f64,
    pub flip: bool,
    pub shift_x: f64,
    pub shift_y: f64,
    pub zoom: f64,
}

impl AugmentDraw {
    /// Always consumes five uniforms so the stream position does not depend
    /// on which transforms are enabled.
    pub fn draw(spec: &AugmentSpec, h: usize, w: usize, rng: &mut Rng) -> Self {
        let r = rng.uniform_range(-1.0, 1.0);
        let f = rng.uniform();
        let sx = rng.uniform_range(-1.0, 1.0);
        let sy = rng.uniform_range(-1.0, 1.0);
        let z = rng.uniform_range(-1.0, 1.0);
        Self {
            rotation_deg: r * spec.max_rotation_deg,
            flip: spec.horizontal_flip && f < 0.5,
            shift_x: sx * spec.max_shift_frac * w as f64,
            shift_y: sy * spec.max_shift_frac * h as f64,
            zoom: 1.0 + z * spec.max_zoom_frac,
        }
    }
}

/// Rotate → flip → shift → zoom, each resampled bilinearly with edge padding.
pub fn augment(img: &Tensor, spec: &AugmentSpec, rng: &mut Rng) -> Result<Tensor> {
    spec.validate()?;
    let (h, w, _) = hwc(img)?;
    let d = AugmentDraw::draw(spec, h, w, rng);
    apply_augment(img, &d)
}

pub fn apply_augment(img: &Tensor, d: &AugmentDraw) -> Result<Tensor> {
    let mut out = rotate(img, d.rotation_deg)?;
    if d.flip {
        out = flip_horizontal(&out)?;
    }
    out = shift(&out, d.shift_x, d.shift_y)?;
    zoom(&out, d.zoom)
}

/// Resamples through an inverse map from output to source pixel coordinates.
fn warp(img: &Tensor, inverse: impl Fn(f64, f64) -> (f64, f64)) -> Result<Tensor> {
    let (h, w, c) = hwc(img)?;
    let src = img.data();
    let mut data = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = inverse(y as f64, x as f64);
            for ch in 0..c {
                data.push(sample(src, h, w, c, sy, sx, ch));
            }
        }
    }
    Tensor::new(img.shape().to_vec(), data)
}

/// Counter-clockwise rotation by `deg` about the image center.
pub fn rotate(img: &Tensor, deg: f64) -> Result<Tensor> {
    let (h, w, _) = hwc(img)?;
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let theta = deg.to_radians();
    let (s, c) = (math::sin(theta), math::cos(theta));
    warp(img, |y, x| {
        let (dy, dx) = (y - cy, x - cx);
        // inverse rotation (image y axis points down)
        (cy + c * dy - s * dx, cx + s * dy + c * dx)
    })
}

pub fn flip_horizontal(img: &Tensor) -> Result<Tensor> {
    let (h, w, c) = hwc(img)?;
    let src = img.data();
    let mut data = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + (w - 1 - x)) * c;
            data.extend_from_slice(&src[base..base + c]);
        }
    }
    Tensor::new(img.shape().to_vec(), data)
}

/// Translates content by `(dx, dy)` pixels.
pub fn shift(img: &Tensor, dx: f64, dy: f64) -> Result<Tensor> {
    warp(img, |y, x| (y - dy, x - dx))
}

/// Scales content by `factor` about the center (`> 1` zooms in).
pub fn zoom(img: &Tensor, factor: f64) -> Result<Tensor> {
    if !(factor > 0.0) {
        return Err(Error::Range(format!("zoom factor {factor} must be positive")));
    }
    let (h, w, _) = hwc(img)?;
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    warp(img, |y, x| (cy + (y - cy) / factor, cx + (x - cx) / factor))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: &Tensor, b: &Tensor, tol: f64) -> bool {
        a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn ramp(h: usize, w: usize, c: usize) -> Tensor {
        let data = (0..h * w * c)
            .map(|i| ((i * 37) % 101) as f64 / 100.0)
            .collect();
        Tensor::new(vec![h, w, c], data).unwrap()
    }

    #[test]
    fn decodes_minimal_pgm() {
        let img = decode_pnm(b"P5 1 1 255 \x00").unwrap();
        assert_eq!(img, RawImage::new(1, 1, 1, vec![0]).unwrap());
    }

    #[test]
    fn decodes_two_pixel_ppm() {
        let img = decode_pnm(b"P6\n2 1\n255\n\xff\x00\x00\x00\x00\xff").unwrap();
        assert_eq!((img.height, img.width, img.channels), (1, 2, 3));
        assert_eq!(img.data, [255, 0, 0, 0, 0, 255]);
    }

    #[test]
    fn comments_are_ignored() {
        let plain = decode_pnm(b"P6\n2 1\n255\n\xff\x00\x00\x00\x00\xff").unwrap();
        let commented =
            decode_pnm(b"P6\n# made by hand\n2 # width\n1\n255\n\xff\x00\x00\x00\x00\xff").unwrap();
        assert_eq!(plain, commented);
    }

    #[test]
    fn bad_magic_truncation_and_maxval() {
        assert!(matches!(decode_pnm(b"P3 1 1 255 0"), Err(Error::Format { offset: 0, .. })));
        match decode_pnm(b"P5 2 2 255\n\x00\x01") {
            Err(Error::Format { offset, message }) => {
                assert_eq!(offset, 11);
                assert!(message.contains("expected 4"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(decode_pnm(b"P5 1 1 65535\n\x00\x00"), Err(Error::Format { offset: 7, .. })));
    }

    #[test]
    fn encode_decode_roundtrip() {
        let img = RawImage::new(2, 3, 3, (0..18).collect()).unwrap();
        assert_eq!(decode_pnm(&encode_pnm(&img)).unwrap(), img);
    }

    #[test]
    fn constant_resizes_to_constant() {
        let img = RawImage::new(3, 5, 1, vec![77; 15]).unwrap();
        for (h, w) in [(1, 1), (7, 2), (10, 13)] {
            let r = resize_bilinear(&img, h, w).unwrap();
            assert!(r.data().iter().all(|&v| (v - 77.0).abs() < 1e-12));
        }
    }

    #[test]
    fn two_by_two_to_three_by_three_center() {
        let img = RawImage::new(2, 2, 1, vec![0, 100, 100, 200]).unwrap();
        let r = resize_bilinear(&img, 3, 3).unwrap();
        assert!((r.get3(1, 1, 0) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn same_size_resize_is_identity() {
        let img = RawImage::new(4, 3, 3, (0..36).map(|v| (v * 7) as u8).collect()).unwrap();
        let r = resize_bilinear(&img, 4, 3).unwrap();
        assert!(close(&r, &img.to_tensor(), 1e-9));
    }

    #[test]
    fn normalize_values_and_range_guard() {
        let t = Tensor::vector(vec![255.0, 0.0, 51.0]);
        let n = normalize(&t).unwrap();
        assert_eq!(n.data()[0], 1.0);
        assert_eq!(n.data()[1], 0.0);
        assert!((n.data()[2] - 0.2).abs() < 1e-15);
        assert!(matches!(normalize(&Tensor::vector(vec![256.0])), Err(Error::Range(_))));
    }

    #[test]
    fn identity_augmentation() {
        let img = ramp(6, 5, 3);
        let out = augment(&img, &AugmentSpec::identity(), &mut Rng::new(1)).unwrap();
        assert!(close(&out, &img, 1e-9));
    }

    #[test]
    fn double_flip_is_exact() {
        let img = ramp(4, 7, 3);
        let twice = flip_horizontal(&flip_horizontal(&img).unwrap()).unwrap();
        assert_eq!(twice, img);
    }

    #[test]
    fn rotation_pair_nearly_inverts() {
        let img = ramp(9, 9, 1);
        let back = rotate(&rotate(&img, 90.0).unwrap(), -90.0).unwrap();
        let mae: f64 = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / img.len() as f64;
        assert!(mae < 2e-2, "{mae}");
    }

    #[test]
    fn augment_keeps_shape_range_and_determinism() {
        let img = ramp(8, 10, 3);
        let spec = AugmentSpec::default();
        for seed in 0..20 {
            let a = augment(&img, &spec, &mut Rng::new(seed)).unwrap();
            let b = augment(&img, &spec, &mut Rng::new(seed)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.shape(), img.shape());
            assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn raw_features_have_fixed_length() {
        let img = RawImage::new(50, 40, 3, vec![128; 6000]).unwrap();
        let f = raw_pixel_features(&img).unwrap();
        assert_eq!(f.len(), 1024);
        assert!(f.iter().all(|&v| (v - 128.0 / 255.0).abs() < 1e-9));
    }

    trait Get3 {
        fn get3(&self, y: usize, x: usize, c: usize) -> f64;
    }
    impl Get3 for Tensor {
        fn get3(&self, y: usize, x: usize, c: usize) -> f64 {
            let s = self.shape();
            self.data()[(y * s[1] + x) * s[2] + c]
        }
    }
}
