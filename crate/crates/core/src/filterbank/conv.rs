//! Separable 1D passes over volumes.
//!
//! Each output voxel is accumulated in a fixed tap order, so results do not
//! depend on how callers split work across threads.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::volume::Volume;

/// Boundary extension used when a kernel overhangs the volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    /// Mirror without repeating the edge sample: `... 2 1 | 0 1 2 ...`.
    #[default]
    Reflect101,
    /// Mirror repeating the edge sample: `... 1 0 | 0 1 ...`.
    Reflect,
    Replicate,
    Zero,
}

impl Padding {
    /// Maps a possibly out-of-range index onto `0..n`; `None` means zero.
    #[inline]
    pub fn resolve(self, i: isize, n: usize) -> Option<usize> {
        let n_i = n as isize;
        if (0..n_i).contains(&i) {
            return Some(i as usize);
        }
        match self {
            Padding::Zero => None,
            Padding::Replicate => Some(i.clamp(0, n_i - 1) as usize),
            Padding::Reflect101 => {
                if n == 1 {
                    return Some(0);
                }
                let period = 2 * (n_i - 1);
                let m = i.rem_euclid(period);
                Some(if m < n_i { m } else { period - m } as usize)
            }
            Padding::Reflect => {
                let period = 2 * n_i;
                let m = i.rem_euclid(period);
                Some(if m < n_i { m } else { period - 1 - m } as usize)
            }
        }
    }
}

impl fmt::Display for Padding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Padding::Reflect101 => "reflect101",
            Padding::Reflect => "reflect",
            Padding::Replicate => "replicate",
            Padding::Zero => "zero",
        })
    }
}

impl FromStr for Padding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reflect101" | "reflect-101" => Ok(Padding::Reflect101),
            "reflect" => Ok(Padding::Reflect),
            "replicate" => Ok(Padding::Replicate),
            "zero" => Ok(Padding::Zero),
            other => Err(Error::Config(format!("unknown padding mode {other:?}"))),
        }
    }
}

/// L1-normalized Gaussian taps of length `2 * ceil(3 * std) + 1`.
pub fn gaussian_taps(std: f64) -> Vec<f64> {
    let half = (3.0 * std).ceil() as isize;
    let raw: Vec<f64> = (-half..=half)
        .map(|u| (-(u * u) as f64 / (2.0 * std * std)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// How a tap array is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Form {
    General,
    /// `k[h+u] = -k[h-u]`, zero center: summed as `k (a - b)` pairs.
    Odd,
    /// Symmetric and zero-sum: summed as `k ((a - c) + (b - c))` around the
    /// center sample `c`, which cancels constants exactly.
    EvenZeroSum,
}

fn classify(taps: &[f64]) -> Form {
    let h = taps.len() / 2;
    let odd = taps[h] == 0.0 && (1..=h).all(|u| taps[h + u] == -taps[h - u]);
    if odd {
        return Form::Odd;
    }
    let even = (1..=h).all(|u| taps[h + u] == taps[h - u]);
    let scale: f64 = taps.iter().map(|k| k.abs()).sum();
    if even && taps.iter().sum::<f64>().abs() <= 1e-12 * scale {
        Form::EvenZeroSum
    } else {
        Form::General
    }
}

/// Convolves along one axis, keeping every `step`-th output position.
///
/// `out[i'] = sum_j taps[j] * src[i' * step + h - j]` with `h = taps.len() / 2`.
/// Antisymmetric and zero-sum symmetric taps are evaluated in paired
/// difference form so constant input yields exactly zero.
pub fn convolve_axis(v: &Volume, axis: usize, taps: &[f64], step: usize, padding: Padding) -> Volume {
    assert!(taps.len() % 2 == 1, "tap count must be odd");
    assert!(step >= 1 && axis < 3);
    let form = classify(taps);
    let dims = v.dims();
    let n = dims[axis];
    let h = taps.len() / 2;
    let mut out_dims = dims;
    out_dims[axis] = n.div_ceil(step);
    let out_n = out_dims[axis];
    let resolve = |i: isize| padding.resolve(i, n);

    let src = v.data();
    let mut out = vec![0.0; out_dims[0] * out_dims[1] * out_dims[2]];
    if axis == 0 {
        // Padded copy of each line; `None` samples become zero.
        let index: Vec<Option<usize>> = (0..n + 2 * h).map(|j| resolve(j as isize - h as isize)).collect();
        let mut line = vec![0.0; n + 2 * h];
        for (line_in, line_out) in src.chunks_exact(n).zip(out.chunks_exact_mut(out_n)) {
            for (dst, ix) in line.iter_mut().zip(&index) {
                *dst = ix.map_or(0.0, |s| line_in[s]);
            }
            for (o, dst) in line_out.iter_mut().enumerate() {
                // `p` is the padded position of the output's center sample.
                let p = o * step + h;
                let mut acc = 0.0;
                match form {
                    Form::General => {
                        for (j, &k) in taps.iter().enumerate() {
                            acc += k * line[p + h - j];
                        }
                    }
                    Form::Odd => {
                        for u in 1..=h {
                            acc += taps[h + u] * (line[p - u] - line[p + u]);
                        }
                    }
                    Form::EvenZeroSum => {
                        let c = line[p];
                        for u in 1..=h {
                            acc += taps[h + u] * ((line[p - u] - c) + (line[p + u] - c));
                        }
                    }
                }
                *dst = acc;
            }
        }
        return Volume::from_parts_unchecked(out_dims, out);
    }

    // Axes 1 and 2 accumulate whole rows (axis 1) or planes (axis 2).
    let row = if axis == 1 { dims[0] } else { dims[0] * dims[1] };
    let block_in = row * n;
    let block_out = row * out_n;
    let zeros = vec![0.0; row];
    let blocks = if axis == 1 { dims[2] } else { 1 };
    for b in 0..blocks {
        let b_in = &src[b * block_in..(b + 1) * block_in];
        let b_out = &mut out[b * block_out..(b + 1) * block_out];
        let get = |i: isize| -> &[f64] {
            match resolve(i) {
                Some(s) => &b_in[s * row..(s + 1) * row],
                None => &zeros,
            }
        };
        for (o, dst) in b_out.chunks_exact_mut(row).enumerate() {
            let c = (o * step) as isize;
            match form {
                Form::General => {
                    for (j, &k) in taps.iter().enumerate() {
                        let r = get(c + h as isize - j as isize);
                        for (d, &x) in dst.iter_mut().zip(r) {
                            *d += k * x;
                        }
                    }
                }
                Form::Odd => {
                    for u in 1..=h as isize {
                        let k = taps[h + u as usize];
                        let (a, bb) = (get(c - u), get(c + u));
                        for ((d, &x), &y) in dst.iter_mut().zip(a).zip(bb) {
                            *d += k * (x - y);
                        }
                    }
                }
                Form::EvenZeroSum => {
                    let center = get(c);
                    for u in 1..=h as isize {
                        let k = taps[h + u as usize];
                        let (a, bb) = (get(c - u), get(c + u));
                        for (((d, &x), &y), &z) in dst.iter_mut().zip(a).zip(bb).zip(center) {
                            *d += k * ((x - z) + (y - z));
                        }
                    }
                }
            }
        }
    }
    Volume::from_parts_unchecked(out_dims, out)
}

/// Applies the same symmetric taps along all three axes, then keeps every
/// `step`-th sample per axis starting at index 0.
pub fn blur_decimate(v: &Volume, taps: &[f64], step: usize, padding: Padding) -> Volume {
    let a = convolve_axis(v, 0, taps, step, padding);
    let b = convolve_axis(&a, 1, taps, step, padding);
    convolve_axis(&b, 2, taps, step, padding)
}

/// Sliding maximum along one axis over a centered window, decimated by `step`.
pub fn max_axis(v: &Volume, axis: usize, half: usize, step: usize, padding: Padding) -> Volume {
    let dims = v.dims();
    let n = dims[axis];
    let mut out_dims = dims;
    out_dims[axis] = n.div_ceil(step);
    let stride = [1, dims[0], dims[0] * dims[1]][axis];
    let out = Volume::from_fn(out_dims, |x, y, t| {
        let mut idx = [x, y, t];
        let center = (idx[axis] * step) as isize;
        idx[axis] = 0;
        let base = v.index(idx[0], idx[1], idx[2]);
        let mut best = f64::NEG_INFINITY;
        for d in -(half as isize)..=half as isize {
            let value = padding
                .resolve(center + d, n)
                .map_or(0.0, |s| v.data()[base + s * stride]);
            best = best.max(value);
        }
        best
    });
    out
}
