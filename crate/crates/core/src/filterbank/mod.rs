//! Third-order Gaussian-derivative steerable basis over `(x, y, t)`.
//!
//! The ten basis kernels are the separable products
//! `g_p(x) g_q(y) g_r(t)` with `p + q + r = 3`. Any third directional
//! derivative of the 3D Gaussian is a fixed linear combination of them, so a
//! layer convolves each input with the basis once and then synthesizes all
//! ten oriented responses by weighted sums.

pub mod conv;

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::Volume;

pub use conv::Padding;

/// Number of orientations sampled per scale.
pub const NUM_ORIENTATIONS: usize = 10;

/// Exponent triples `(p, q, r)` of the basis, in basis order.
pub const MONOMIALS: [[u8; 3]; 10] = [
    [3, 0, 0],
    [2, 1, 0],
    [2, 0, 1],
    [1, 2, 0],
    [1, 1, 1],
    [1, 0, 2],
    [0, 3, 0],
    [0, 2, 1],
    [0, 1, 2],
    [0, 0, 3],
];

/// The ten icosahedral face-normal directions, antipodes identified.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    dirs: [[f64; 3]; NUM_ORIENTATIONS],
}

impl DirectionSet {
    pub fn new(dirs: [[f64; 3]; NUM_ORIENTATIONS]) -> Result<Self> {
        for (i, d) in dirs.iter().enumerate() {
            if (norm(d) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("direction {i} is not unit length")));
            }
            for (j, e) in dirs.iter().enumerate().skip(i + 1) {
                if dot(d, e).abs() >= 1.0 - 1e-9 {
                    return Err(Error::InvalidParameter(format!(
                        "directions {i} and {j} are equal or antipodal"
                    )));
                }
            }
        }
        Ok(Self { dirs })
    }

    pub fn as_slice(&self) -> &[[f64; 3]] {
        &self.dirs
    }

    pub fn get(&self, i: usize) -> [f64; 3] {
        self.dirs[i]
    }

    pub fn len(&self) -> usize {
        NUM_ORIENTATIONS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Indices whose `|dir . target|` is within `1e-9` of the maximum.
    pub fn most_aligned(&self, target: [f64; 3]) -> Vec<usize> {
        self.extreme_alignment(target, true)
    }

    /// Indices whose `|dir . target|` is within `1e-9` of the minimum.
    pub fn least_aligned(&self, target: [f64; 3]) -> Vec<usize> {
        self.extreme_alignment(target, false)
    }

    fn extreme_alignment(&self, target: [f64; 3], max: bool) -> Vec<usize> {
        let t = normalized(target);
        let score: Vec<f64> = self.dirs.iter().map(|d| dot(d, &t).abs()).collect();
        let best = if max {
            score.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        } else {
            score.iter().copied().fold(f64::INFINITY, f64::min)
        };
        (0..NUM_ORIENTATIONS)
            .filter(|&i| (score[i] - best).abs() <= 1e-9)
            .collect()
    }
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &[f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn normalized(a: [f64; 3]) -> [f64; 3] {
    let n = norm(&a);
    a.map(|c| c / n)
}

/// Face normals of the regular icosahedron built on golden-ratio rectangles.
///
/// Antipodal normals are merged, each is signed so its first nonzero
/// component is positive, and the set is sorted lexicographically.
pub fn icosa_directions() -> DirectionSet {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts = Vec::with_capacity(12);
    for s1 in [-1.0, 1.0] {
        for s2 in [-1.0, 1.0] {
            verts.push([0.0, s1, s2 * phi]);
            verts.push([s1, s2 * phi, 0.0]);
            verts.push([s2 * phi, 0.0, s1]);
        }
    }
    let dist2 = |a: &[f64; 3], b: &[f64; 3]| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>();
    // Edge length is 2, so adjacent vertices sit at squared distance 4.
    let adjacent = |a: &[f64; 3], b: &[f64; 3]| (dist2(a, b) - 4.0).abs() < 1e-9;

    let mut normals: Vec<[f64; 3]> = Vec::with_capacity(10);
    for i in 0..12 {
        for j in i + 1..12 {
            for k in j + 1..12 {
                let (a, b, c) = (&verts[i], &verts[j], &verts[k]);
                if !(adjacent(a, b) && adjacent(b, c) && adjacent(a, c)) {
                    continue;
                }
                let mut n = normalized([a[0] + b[0] + c[0], a[1] + b[1] + c[1], a[2] + b[2] + c[2]]);
                let lead = n.iter().copied().find(|v| v.abs() > 1e-12).unwrap();
                if lead < 0.0 {
                    n = n.map(|v| -v);
                }
                // Clean signed zeros and rounding so ordering is stable.
                n = n.map(|v| if v.abs() < 1e-12 { 0.0 } else { v });
                if !normals.iter().any(|m| dot(m, &n) > 1.0 - 1e-9) {
                    normals.push(n);
                }
            }
        }
    }
    debug_assert_eq!(normals.len(), NUM_ORIENTATIONS);
    normals.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let dirs: [[f64; 3]; NUM_ORIENTATIONS] = normals.try_into().expect("icosahedron has 20 faces");
    DirectionSet::new(dirs).expect("icosahedral normals are distinct unit vectors")
}

/// Sampled derivative of a zero-mean Gaussian of std `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel1D {
    pub order: u8,
    pub taps: Vec<f64>,
}

impl Kernel1D {
    /// Samples the `order`-th derivative at integer offsets `-(n-1)/2 ..= (n-1)/2`.
    ///
    /// Odd orders are built antisymmetric, order 2 has its mean removed, and
    /// order 0 is scaled to unit sum.
    pub fn gaussian_derivative(order: u8, sigma: f64, taps: usize) -> Result<Self> {
        if taps.is_multiple_of(2) || taps < 3 {
            return Err(Error::InvalidParameter(format!(
                "tap count {taps} must be odd and >= 3"
            )));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma {sigma} must be positive")));
        }
        if order > 3 {
            return Err(Error::InvalidParameter(format!("derivative order {order} > 3")));
        }
        let s2 = sigma * sigma;
        let eval = |u: f64| -> f64 {
            let g = (-u * u / (2.0 * s2)).exp() / ((2.0 * PI).sqrt() * sigma);
            match order {
                0 => g,
                1 => -u / s2 * g,
                2 => (u * u - s2) / (s2 * s2) * g,
                _ => (3.0 * u * s2 - u * u * u) / (s2 * s2 * s2) * g,
            }
        };
        let half = taps / 2;
        let mut k = vec![0.0; taps];
        for u in 0..=half {
            let v = eval(u as f64);
            k[half + u] = v;
            k[half - u] = if order % 2 == 1 { -v } else { v };
        }
        if order % 2 == 1 {
            k[half] = 0.0;
        }
        match order {
            0 => {
                let total: f64 = k.iter().sum();
                k.iter_mut().for_each(|v| *v /= total);
            }
            2 => {
                let mean = k.iter().sum::<f64>() / taps as f64;
                k.iter_mut().for_each(|v| *v -= mean);
            }
            _ => {}
        }
        Ok(Self { order, taps: k })
    }
}

/// A 3D kernel given as the outer product of three 1D kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableKernel3D {
    pub kx: Kernel1D,
    pub ky: Kernel1D,
    pub kt: Kernel1D,
}

impl SeparableKernel3D {
    pub fn exponents(&self) -> [u8; 3] {
        [self.kx.order, self.ky.order, self.kt.order]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteerableBasis {
    pub sigma: f64,
    pub taps: usize,
    basis: Vec<SeparableKernel3D>,
    derivs: [Kernel1D; 4],
}

impl SteerableBasis {
    pub fn elements(&self) -> &[SeparableKernel3D] {
        &self.basis
    }

    pub fn derivative(&self, order: u8) -> &Kernel1D {
        &self.derivs[order as usize]
    }

    /// Plain-text dump, one line per tap array.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for el in &self.basis {
            let [p, q, r] = el.exponents();
            for (axis, k) in [("x", &el.kx), ("y", &el.ky), ("t", &el.kt)] {
                let _ = write!(out, "({p},{q},{r}) {axis} order={}", k.order);
                for v in &k.taps {
                    let _ = write!(out, " {v:.17e}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Builds the ten-element basis for `G3` at scale `sigma` with `taps` taps.
pub fn g3_basis(sigma: f64, taps: usize) -> Result<SteerableBasis> {
    if taps.is_multiple_of(2) || taps < 7 {
        return Err(Error::InvalidParameter(format!(
            "tap count {taps} must be odd and >= 7"
        )));
    }
    let derivs = [
        Kernel1D::gaussian_derivative(0, sigma, taps)?,
        Kernel1D::gaussian_derivative(1, sigma, taps)?,
        Kernel1D::gaussian_derivative(2, sigma, taps)?,
        Kernel1D::gaussian_derivative(3, sigma, taps)?,
    ];
    let basis = MONOMIALS
        .iter()
        .map(|&[p, q, r]| SeparableKernel3D {
            kx: derivs[p as usize].clone(),
            ky: derivs[q as usize].clone(),
            kt: derivs[r as usize].clone(),
        })
        .collect();
    Ok(SteerableBasis {
        sigma,
        taps,
        basis,
        derivs,
    })
}

/// Multinomial weights `3!/(p! q! r!) a^p b^q c^r` for steering to `v`.
pub fn steering_coeffs(v: [f64; 3]) -> Result<[f64; 10]> {
    if (norm(&v) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "steering direction {v:?} is not unit length"
        )));
    }
    const FACT: [f64; 4] = [1.0, 1.0, 2.0, 6.0];
    let mut out = [0.0; 10];
    for (c, &[p, q, r]) in out.iter_mut().zip(MONOMIALS.iter()) {
        let weight = 6.0 / (FACT[p as usize] * FACT[q as usize] * FACT[r as usize]);
        *c = weight * v[0].powi(p as i32) * v[1].powi(q as i32) * v[2].powi(r as i32);
    }
    Ok(out)
}

/// Three sequential 1D convolutions along x, y, then t.
pub fn conv_separable(v: &Volume, k: &SeparableKernel3D, padding: Padding) -> Volume {
    let a = conv::convolve_axis(v, 0, &k.kx.taps, 1, padding);
    let b = conv::convolve_axis(&a, 1, &k.ky.taps, 1, padding);
    conv::convolve_axis(&b, 2, &k.kt.taps, 1, padding)
}

/// Responses of `v` to all ten basis kernels, in [`MONOMIALS`] order.
///
/// Shares the x- and y-passes between basis elements; the result equals
/// calling [`conv_separable`] per element bit for bit.
pub fn basis_responses(v: &Volume, basis: &SteerableBasis, padding: Padding) -> Vec<Volume> {
    let x_passes: Vec<Volume> = (0u8..4)
        .map(|p| conv::convolve_axis(v, 0, &basis.derivative(p).taps, 1, padding))
        .collect();
    MONOMIALS
        .par_iter()
        .map(|&[p, q, r]| {
            let xy = conv::convolve_axis(&x_passes[p as usize], 1, &basis.derivative(q).taps, 1, padding);
            conv::convolve_axis(&xy, 2, &basis.derivative(r).taps, 1, padding)
        })
        .collect()
}

/// Weighted sum of basis responses; summation follows basis order.
pub fn steer(responses: &[Volume], coeffs: &[f64; 10]) -> Volume {
    assert_eq!(responses.len(), 10);
    let dims = responses[0].dims();
    let mut out = vec![0.0; responses[0].len()];
    for (resp, &c) in responses.iter().zip(coeffs) {
        for (o, &r) in out.iter_mut().zip(resp.data()) {
            *o += c * r;
        }
    }
    Volume::from_parts_unchecked(dims, out)
}

/// Response of `v` to the third directional derivative of the Gaussian along `dir`.
pub fn conv_oriented(v: &Volume, dir: [f64; 3], basis: &SteerableBasis, padding: Padding) -> Result<Volume> {
    let coeffs = steering_coeffs(dir)?;
    Ok(steer(&basis_responses(v, basis, padding), &coeffs))
}

/// All ten oriented responses for a direction set, from one basis pass.
pub fn conv_all_orientations(v: &Volume, dirs: &DirectionSet, basis: &SteerableBasis, padding: Padding) -> Vec<Volume> {
    let responses = basis_responses(v, basis, padding);
    dirs.as_slice()
        .iter()
        .map(|&d| steer(&responses, &steering_coeffs(d).expect("direction set is unit length")))
        .collect()
}
