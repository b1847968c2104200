//! Spacetime volumes, frame ingestion, and the Gaussian pyramid.
//!
//! A [`Volume`] is a dense `(x, y, t)` grid stored with `x` fastest, then `y`,
//! then `t`. Every signal in the pipeline (input intensities, filter
//! responses, energies, pooled maps) is carried by one.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use image::DynamicImage;

use crate::error::{Error, Result};
use crate::filterbank::conv::{blur_decimate, gaussian_taps, Padding};

#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Volume {
    pub fn new(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidVolume(format!("zero-length axis in {dims:?}")));
        }
        let len = dims[0] * dims[1] * dims[2];
        if data.len() != len {
            return Err(Error::InvalidVolume(format!(
                "{} values for dims {dims:?} (expected {len})",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: [usize; 3], value: f64) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "zero-length axis in {dims:?}");
        Self {
            dims,
            data: vec![value; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        Self::filled(dims, 0.0)
    }

    /// Builds a volume by evaluating `f(x, y, t)` at every voxel.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "zero-length axis in {dims:?}");
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for t in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, t));
                }
            }
        }
        Self { dims, data }
    }

    pub(crate) fn from_parts_unchecked(dims: [usize; 3], data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims[0] * dims[1] * dims[2]);
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn min_dim(&self) -> usize {
        self.dims.iter().copied().min().unwrap_or(0)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, t: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * t)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, t: usize) -> f64 {
        self.data[self.index(x, y, t)]
    }

    pub fn set(&mut self, x: usize, y: usize, t: usize, value: f64) {
        let i = self.index(x, y, t);
        self.data[i] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Keeps every `step`-th sample along each axis, starting at index 0.
    pub fn decimate(&self, step: usize) -> Self {
        assert!(step >= 1);
        if step == 1 {
            return self.clone();
        }
        let out_dims = self.dims.map(|d| d.div_ceil(step));
        Self::from_fn(out_dims, |x, y, t| self.get(x * step, y * step, t * step))
    }

    /// Writes the volume in the raw `SOEV` layout.
    pub fn write_raw(&self, mut w: impl Write) -> Result<()> {
        w.write_all(RAW_MAGIC)?;
        for d in self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&[RAW_DTYPE_F64])?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_raw(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; RAW_HEADER_LEN];
        read_exact_at(&mut r, &mut header, 0)?;
        if &header[..4] != RAW_MAGIC {
            return Err(Error::Corrupt {
                offset: 0,
                reason: "expected magic \"SOEV\"".into(),
            });
        }
        let mut dims = [0usize; 3];
        for (i, d) in dims.iter_mut().enumerate() {
            let at = 4 + 4 * i;
            *d = u32::from_le_bytes(header[at..at + 4].try_into().unwrap()) as usize;
            if *d == 0 {
                return Err(Error::Corrupt {
                    offset: at as u64,
                    reason: "zero dimension".into(),
                });
            }
        }
        if header[16] != RAW_DTYPE_F64 {
            return Err(Error::Corrupt {
                offset: 16,
                reason: format!("unsupported dtype {}", header[16]),
            });
        }
        let n = dims[0] * dims[1] * dims[2];
        let mut bytes = vec![0u8; n * 8];
        read_exact_at(&mut r, &mut bytes, RAW_HEADER_LEN as u64)?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Corrupt {
                offset: (RAW_HEADER_LEN + 8 * i) as u64,
                reason: "non-finite sample".into(),
            });
        }
        Volume::new(dims, data)
    }
}

pub(crate) fn read_exact_at(r: &mut impl Read, buf: &mut [u8], offset: u64) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(Error::Corrupt {
                    offset: offset + filled as u64,
                    reason: "unexpected end of file".into(),
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

pub const RAW_MAGIC: &[u8; 4] = b"SOEV";
const RAW_DTYPE_F64: u8 = 0;
const RAW_HEADER_LEN: usize = 17;

/// Where a sequence comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameSource {
    /// Individual image frames; temporal order is the order of `frames`.
    Frames { frames: Vec<PathBuf> },
    /// A single raw `SOEV` file holding every frame.
    Raw(PathBuf),
}

const FRAME_EXTENSIONS: [&str; 3] = ["pgm", "png", "pnm"];

pub fn is_frame_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

impl FrameSource {
    /// Collects the image frames of `dir`, sorted lexicographically by path.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let entries = fs::read_dir(dir).map_err(|e| Error::Ingestion {
            path: dir.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut frames = Vec::new();
        for entry in entries {
            let path = entry?.path();
            if path.is_file() && is_frame_file(&path) {
                frames.push(path);
            }
        }
        if frames.is_empty() {
            return Err(Error::NoFrames(dir.to_path_buf()));
        }
        frames.sort();
        Ok(FrameSource::Frames { frames })
    }

    /// A directory becomes a frame sequence; a file is read as raw `SOEV`.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.is_dir() {
            Self::from_dir(path)
        } else {
            Ok(FrameSource::Raw(path.to_path_buf()))
        }
    }
}

/// Reads a sequence into a grayscale volume with values in `[0, 1]`.
pub fn load_volume(source: &FrameSource) -> Result<Volume> {
    match source {
        FrameSource::Raw(path) => {
            let file = fs::File::open(path).map_err(|e| Error::Ingestion {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            Volume::read_raw(std::io::BufReader::new(file)).map_err(|e| Error::Ingestion {
                path: path.clone(),
                reason: e.to_string(),
            })
        }
        FrameSource::Frames { frames } => {
            if frames.is_empty() {
                return Err(Error::NoFrames(PathBuf::new()));
            }
            let mut size: Option<(usize, usize)> = None;
            let mut data = Vec::new();
            for path in frames {
                let img = image::open(path).map_err(|e| Error::Ingestion {
                    path: path.clone(),
                    reason: e.to_string(),
                })?;
                let (w, h) = (img.width() as usize, img.height() as usize);
                match size {
                    None => size = Some((w, h)),
                    Some(expected) if expected != (w, h) => {
                        return Err(Error::DimensionMismatch {
                            path: path.clone(),
                            expected,
                            got: (w, h),
                        })
                    }
                    Some(_) => {}
                }
                data.extend(frame_to_gray(&img));
            }
            let (w, h) = size.unwrap();
            Volume::new([w, h, frames.len()], data)
        }
    }
}

/// Rec.601 luma, scaled to `[0, 1]`, row-major.
fn frame_to_gray(img: &DynamicImage) -> Vec<f64> {
    const LUMA: [f64; 3] = [0.299, 0.587, 0.114];
    match img {
        DynamicImage::ImageLuma8(g) => g.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(g) => g.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(g) => g.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(g) => g.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) => img
            .to_rgb16()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                (LUMA[0] * r as f64 + LUMA[1] * g as f64 + LUMA[2] * b as f64) / 65535.0
            })
            .collect(),
        _ => img
            .to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                (LUMA[0] * r as f64 + LUMA[1] * g as f64 + LUMA[2] * b as f64) / 255.0
            })
            .collect(),
    }
}

/// Writes every frame of `v` as an 8-bit binary PGM, clamping to `[0, 1]`.
pub fn write_pgm_frames(v: &Volume, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let [nx, ny, nt] = v.dims();
    let digits = nt.to_string().len().max(4);
    let frame_len = nx * ny;
    let mut paths = Vec::with_capacity(nt);
    for t in 0..nt {
        let frame = &v.data()[t * frame_len..(t + 1) * frame_len];
        let path = dir.join(format!("frame_{t:0digits$}.pgm"));
        let mut out = Vec::with_capacity(frame_len + 20);
        write!(out, "P5\n{nx} {ny}\n255\n")?;
        out.extend(frame.iter().map(|&s| (s.clamp(0.0, 1.0) * 255.0).round() as u8));
        fs::write(&path, out)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Factor-2 Gaussian pyramid; level 0 is the input itself.
pub fn build_pyramid(v: &Volume, levels: usize, blur_std: f64) -> Result<Vec<Volume>> {
    if levels == 0 {
        return Err(Error::InvalidParameter("pyramid needs at least one level".into()));
    }
    if !(blur_std > 0.0) {
        return Err(Error::InvalidParameter(format!("blur std {blur_std} must be positive")));
    }
    // Halving with ceil never reaches zero, so the only real limit is that
    // the coarsest level still differs from a single voxel on some axis.
    let mut dims = v.dims();
    for level in 1..levels {
        if dims.iter().all(|&d| d == 1) {
            return Err(Error::InvalidParameter(format!(
                "{levels} pyramid levels requested but level {level} of {:?} would be a single voxel",
                v.dims()
            )));
        }
        dims = dims.map(|d| d.div_ceil(2));
    }

    let taps = gaussian_taps(blur_std);
    let mut out = Vec::with_capacity(levels);
    out.push(v.clone());
    for _ in 1..levels {
        let next = blur_decimate(out.last().unwrap(), &taps, 2, Padding::Reflect101);
        out.push(next);
    }
    Ok(out)
}

/// Number of pyramid scales whose filter still fits after one pooling stage.
///
/// Largest `n >= 1` with `min(dims) / 2^(n-1) >= kernel_len * tau`.
pub fn num_scales(dims: [usize; 3], kernel_len: usize, tau: usize) -> usize {
    let min = dims.iter().copied().min().unwrap_or(0);
    let need = kernel_len.max(1) * tau.max(1);
    let mut n = 1;
    // min / 2^n >= need  <=>  min >= need * 2^n
    while n < usize::BITS as usize - 1 && min >= need.saturating_mul(1usize << n) {
        n += 1;
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Volume::new([2, 2, 2], vec![0.0; 7]).is_err());
        assert!(Volume::new([0, 2, 2], vec![]).is_err());
        assert!(Volume::new([2, 2, 2], vec![0.0; 8]).is_ok());
    }

    #[test]
    fn layout_is_x_fastest() {
        let v = Volume::from_fn([3, 2, 2], |x, y, t| (x + 10 * y + 100 * t) as f64);
        assert_eq!(v.data()[1], 1.0);
        assert_eq!(v.data()[3], 10.0);
        assert_eq!(v.data()[6], 100.0);
        assert_eq!(v.get(2, 1, 1), 112.0);
    }

    #[test]
    fn raw_roundtrip() {
        let v = Volume::from_fn([3, 4, 5], |x, y, t| x as f64 * 0.5 - y as f64 + t as f64 * 1e-3);
        let mut buf = Vec::new();
        v.write_raw(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SOEV");
        assert_eq!(buf.len(), 17 + 60 * 8);
        assert_eq!(Volume::read_raw(&buf[..]).unwrap(), v);
    }

    #[test]
    fn raw_truncated_reports_offset() {
        let v = Volume::zeros([2, 2, 2]);
        let mut buf = Vec::new();
        v.write_raw(&mut buf).unwrap();
        buf.truncate(30);
        match Volume::read_raw(&buf[..]) {
            Err(Error::Corrupt { offset, .. }) => assert_eq!(offset, 30),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pyramid_dims_halve_with_ceil() {
        let v = Volume::zeros([64, 64, 64]);
        let p = build_pyramid(&v, 2, 1.0).unwrap();
        assert_eq!(p[1].dims(), [32, 32, 32]);
        let v = Volume::zeros([25, 9, 3]);
        let p = build_pyramid(&v, 3, 1.0).unwrap();
        assert_eq!(p[1].dims(), [13, 5, 2]);
        assert_eq!(p[2].dims(), [7, 3, 1]);
    }

    #[test]
    fn pyramid_single_level_is_identity() {
        let v = Volume::from_fn([50, 50, 50], |x, y, t| ((x * 7 + y * 3 + t) % 11) as f64);
        let p = build_pyramid(&v, 1, 1.0).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0], v);
    }

    #[test]
    fn pyramid_preserves_constants() {
        let v = Volume::filled([20, 17, 9], 0.37);
        for level in build_pyramid(&v, 3, 1.0).unwrap() {
            assert!(level.data().iter().all(|&s| (s - 0.37).abs() <= 1e-12));
        }
    }

    #[test]
    fn pyramid_rejects_too_many_levels() {
        let v = Volume::zeros([2, 2, 2]);
        assert!(build_pyramid(&v, 2, 1.0).is_ok());
        assert!(build_pyramid(&v, 3, 1.0).is_err());
        assert!(build_pyramid(&v, 0, 1.0).is_err());
    }

    /// Direct evaluation of the fit inequality, one candidate at a time.
    fn scales_oracle(dims: [usize; 3], k: usize, tau: usize) -> usize {
        let min = *dims.iter().min().unwrap() as f64;
        let mut best = 1;
        for n in 1..40 {
            if min / 2f64.powi(n as i32 - 1) >= (k * tau) as f64 {
                best = n;
            }
        }
        best
    }

    #[test]
    fn num_scales_examples() {
        assert_eq!(num_scales([50, 50, 50], 13, 2), 1);
        // 104/1 = 104, 104/2 = 52, 104/4 = 26 >= 26, 104/8 = 13 < 26
        assert_eq!(scales_oracle([104, 104, 104], 13, 2), 3);
        assert_eq!(num_scales([104, 104, 104], 13, 2), 3);
        assert_eq!(num_scales([13, 13, 13], 13, 2), 1);
        assert_eq!(num_scales([64, 64, 64], 13, 2), 2);
    }

    proptest::proptest! {
        #[test]
        fn num_scales_matches_inequality(a in 1usize..600, b in 1usize..600, c in 1usize..600,
                                         k in 1usize..8, tau in 1usize..4) {
            let k = 2 * k + 1;
            proptest::prop_assert_eq!(num_scales([a, b, c], k, tau), scales_oracle([a, b, c], k, tau));
        }

        #[test]
        fn num_scales_monotone(m in 1usize..800, k in 1usize..8, tau in 1usize..4) {
            let k = 2 * k + 1;
            let n = num_scales([m, m, m], k, tau);
            proptest::prop_assert!(num_scales([m, m, m], k + 2, tau) <= n);
            proptest::prop_assert!(num_scales([m, m, m], k, tau + 1) <= n);
            proptest::prop_assert!(num_scales([m + 1, m + 5, m + 1], k, tau) >= n);
        }
    }
}
