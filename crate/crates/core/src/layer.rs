//! One layer of the recurrence: convolution, rectification, divisive
//! normalization, spatiotemporal pooling and cross-channel pooling.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filterbank::conv::{blur_decimate, gaussian_taps, max_axis, Padding};
use crate::filterbank::{conv_all_orientations, DirectionSet, SteerableBasis, NUM_ORIENTATIONS};
use crate::volume::Volume;

/// Which rectification branch a channel went through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Pos,
    Neg,
    /// Single-path squaring (full-wave ablation).
    Full,
}

impl Polarity {
    pub fn symbol(self) -> char {
        match self {
            Polarity::Pos => '+',
            Polarity::Neg => '-',
            Polarity::Full => '~',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            '+' => Some(Polarity::Pos),
            '-' => Some(Polarity::Neg),
            '~' => Some(Polarity::Full),
            _ => None,
        }
    }
}

/// Sequence of rectification branches, one per layer.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignPath(pub Vec<Polarity>);

impl SignPath {
    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn pushed(&self, p: Polarity) -> Self {
        let mut v = self.0.clone();
        v.push(p);
        SignPath(v)
    }
}

impl fmt::Display for SignPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str(".");
        }
        for p in &self.0 {
            write!(f, "{}", p.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for SignPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "." {
            return Ok(SignPath::default());
        }
        s.chars()
            .map(|c| Polarity::from_symbol(c).ok_or_else(|| Error::Config(format!("bad sign path {s:?}"))))
            .collect::<Result<Vec<_>>>()
            .map(SignPath)
    }
}

/// Lineage of a feature map.
///
/// Field order is the canonical descriptor layout: scale, then sign path,
/// then parent orientations, then current orientation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelTag {
    pub scale: usize,
    pub sign_path: SignPath,
    /// Orientations of earlier filterings not yet pooled away. With
    /// cross-channel pooling on, this holds at most the immediate parent.
    pub parents: Vec<u8>,
    /// `None` only for the raw input volume.
    pub orientation: Option<u8>,
}

impl ChannelTag {
    pub fn input(scale: usize) -> Self {
        Self {
            scale,
            sign_path: SignPath::default(),
            parents: Vec::new(),
            orientation: None,
        }
    }

    pub fn depth(&self) -> usize {
        self.sign_path.depth()
    }

    pub fn parent_orientation(&self) -> Option<u8> {
        self.parents.last().copied()
    }

    fn child(&self, orientation: u8, polarity: Polarity) -> Self {
        let mut parents = self.parents.clone();
        if let Some(o) = self.orientation {
            parents.push(o);
        }
        Self {
            scale: self.scale,
            sign_path: self.sign_path.pushed(polarity),
            parents,
            orientation: Some(orientation),
        }
    }
}

impl fmt::Display for ChannelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.scale, self.sign_path)?;
        if self.parents.is_empty() {
            f.write_str(".")?;
        } else {
            let p: Vec<String> = self.parents.iter().map(|p| p.to_string()).collect();
            f.write_str(&p.join(","))?;
        }
        match self.orientation {
            Some(o) => write!(f, " {o}"),
            None => f.write_str(" ."),
        }
    }
}

impl FromStr for ChannelTag {
    type Err = Error;

    /// Parses the `Display` form: `scale sign_path parents orientation`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad channel tag {s:?}"));
        let fields: Vec<&str> = s.split_whitespace().collect();
        let [scale, sign, parents, orient] = fields[..] else {
            return Err(bad());
        };
        let parents = if parents == "." {
            Vec::new()
        } else {
            parents
                .split(',')
                .map(|p| p.parse::<u8>().map_err(|_| bad()))
                .collect::<Result<_>>()?
        };
        Ok(Self {
            scale: scale.parse().map_err(|_| bad())?,
            sign_path: sign.parse()?,
            parents,
            orientation: match orient {
                "." => None,
                o => Some(o.parse().map_err(|_| bad())?),
            },
        })
    }
}

/// Tagged feature maps; tags are unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureMaps {
    pub channels: Vec<(ChannelTag, Volume)>,
}

impl FeatureMaps {
    pub fn input(scale: usize, v: Volume) -> Self {
        Self {
            channels: vec![(ChannelTag::input(scale), v)],
        }
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn tags(&self) -> impl Iterator<Item = &ChannelTag> {
        self.channels.iter().map(|(t, _)| t)
    }

    pub fn get(&self, tag: &ChannelTag) -> Option<&Volume> {
        self.channels.iter().find(|(t, _)| t == tag).map(|(_, v)| v)
    }

    /// Sum of every value of every channel.
    pub fn total(&self) -> f64 {
        self.channels.iter().map(|(_, v)| v.sum()).sum()
    }

    fn sort(&mut self) {
        self.channels.sort_by(|a, b| a.0.cmp(&b.0));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rectification {
    #[default]
    TwoPath,
    FullWave,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormGroup {
    /// Ten orientations sharing parent and polarity.
    #[default]
    Polarity,
    /// Both polarities of a parent together (twenty channels).
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EpsilonMode {
    /// Per-voxel population std of the group's energies.
    #[default]
    Voxel,
    /// Population std of the group's per-channel mean energies.
    Volume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolKind {
    #[default]
    Gaussian,
    Boxcar,
    Max,
}

macro_rules! keyword_enum {
    ($ty:ty { $($variant:path => $name:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $name),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(Error::Config(format!(
                        "unknown {} {other:?}", stringify!($ty)
                    ))),
                }
            }
        }
    };
}

keyword_enum!(Rectification {
    Rectification::TwoPath => "two-path",
    Rectification::FullWave => "full-wave",
    Rectification::Relu => "relu",
});
keyword_enum!(NormGroup { NormGroup::Polarity => "polarity", NormGroup::Joint => "joint" });
keyword_enum!(EpsilonMode { EpsilonMode::Voxel => "voxel", EpsilonMode::Volume => "volume" });
keyword_enum!(PoolKind {
    PoolKind::Gaussian => "gaussian",
    PoolKind::Boxcar => "boxcar",
    PoolKind::Max => "max",
});

/// Splits a signed response into squared positive and negative parts.
pub fn rectify_two_path(c: &Volume) -> (Volume, Volume) {
    let pos = c.map(|v| {
        let p = v.max(0.0);
        p * p
    });
    let neg = c.map(|v| {
        let n = v.min(0.0);
        n * n
    });
    (pos, neg)
}

pub fn rectify(c: &Volume, mode: Rectification) -> Vec<(Polarity, Volume)> {
    match mode {
        Rectification::TwoPath => {
            let (p, n) = rectify_two_path(c);
            vec![(Polarity::Pos, p), (Polarity::Neg, n)]
        }
        Rectification::FullWave => vec![(Polarity::Full, c.map(|v| v * v))],
        Rectification::Relu => vec![(Polarity::Pos, c.map(|v| v.max(0.0)))],
    }
}

/// Divisive normalization of one ten-orientation energy group.
pub fn normalize_group(group: &[&Volume]) -> Result<Vec<Volume>> {
    if group.len() != NUM_ORIENTATIONS {
        return Err(Error::GroupSize(group.len()));
    }
    normalize_energies(group, EpsilonMode::Voxel)
}

/// `E_i / (sum_m E_m + eps)` over an arbitrary-size group; zero where the
/// denominator vanishes.
pub fn normalize_energies(group: &[&Volume], eps_mode: EpsilonMode) -> Result<Vec<Volume>> {
    let m = group.len();
    if m == 0 {
        return Err(Error::GroupSize(0));
    }
    let dims = group[0].dims();
    if group.iter().any(|v| v.dims() != dims) {
        return Err(Error::InvalidParameter("normalization group has mixed dims".into()));
    }
    let n = group[0].len();
    let mf = m as f64;

    let volume_eps = match eps_mode {
        EpsilonMode::Voxel => None,
        EpsilonMode::Volume => {
            let means: Vec<f64> = group.iter().map(|v| v.sum() / n as f64).collect();
            Some(population_std(&means))
        }
    };

    let mut out: Vec<Vec<f64>> = vec![vec![0.0; n]; m];
    let mut vals = vec![0.0; m];
    for i in 0..n {
        let mut sum = 0.0;
        for (k, v) in group.iter().enumerate() {
            vals[k] = v.data()[i];
            sum += vals[k];
        }
        let eps = match volume_eps {
            Some(e) => e,
            None => {
                let mean = sum / mf;
                let mut var = 0.0;
                for &e in &vals {
                    var += (e - mean) * (e - mean);
                }
                (var / mf).sqrt()
            }
        };
        let denom = sum + eps;
        if denom > 0.0 {
            for k in 0..m {
                out[k][i] = vals[k] / denom;
            }
        }
    }
    Ok(out.into_iter().map(|d| Volume::from_parts_unchecked(dims, d)).collect())
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Spatiotemporal pooling parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolingParams {
    /// Gaussian std, grid units.
    pub gamma: f64,
    /// Sampling period before rounding.
    pub tau: f64,
    /// Integer decimation factor actually applied.
    pub tau_int: usize,
}

impl PoolingParams {
    pub fn fixed(gamma: f64, tau_int: usize) -> Result<Self> {
        if !(gamma > 0.0) || tau_int == 0 {
            return Err(Error::InvalidParameter(format!(
                "pooling needs gamma > 0 and tau >= 1, got ({gamma}, {tau_int})"
            )));
        }
        Ok(Self {
            gamma,
            tau: tau_int as f64,
            tau_int,
        })
    }
}

/// Pooling parameters from the filter's frequency cut-off.
///
/// `omega_c = 3 sqrt(3) / sigma` bounds the third-derivative passband;
/// squaring doubles it to `eta = 2 omega_c`. The low-pass keeps
/// `alpha * eta`, giving `gamma = 3 / (alpha eta)`, and sampling at
/// `omega_s = 2 alpha eta` gives `tau = beta * 2 pi / omega_s`.
pub fn derive_pooling_params(sigma: f64, alpha: f64, beta: f64) -> Result<PoolingParams> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1)")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("beta {beta} outside (0, 1)")));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma {sigma} must be positive")));
    }
    let omega_c = 3.0 * 3f64.sqrt() / sigma;
    let eta = 2.0 * omega_c;
    let gamma = 3.0 / (alpha * eta);
    let omega_s = 2.0 * alpha * eta;
    let tau = beta * 2.0 * std::f64::consts::PI / omega_s;
    Ok(PoolingParams {
        gamma,
        tau,
        tau_int: (tau.round() as usize).max(1),
    })
}

/// Low-pass then decimate by `tau_int` along every axis (keeping index 0).
pub fn st_pool(e: &Volume, params: &PoolingParams, kind: PoolKind, padding: Padding) -> Volume {
    let half = (3.0 * params.gamma).ceil() as usize;
    match kind {
        PoolKind::Gaussian => blur_decimate(e, &gaussian_taps(params.gamma), params.tau_int, padding),
        PoolKind::Boxcar => {
            let len = 2 * half + 1;
            let taps = vec![1.0 / len as f64; len];
            blur_decimate(e, &taps, params.tau_int, padding)
        }
        PoolKind::Max => {
            let a = max_axis(e, 0, half, params.tau_int, padding);
            let b = max_axis(&a, 1, half, params.tau_int, padding);
            max_axis(&b, 2, half, params.tau_int, padding)
        }
    }
}

/// Averages, per current orientation, over the ten maps that differ only in
/// their immediate parent orientation. Channels without a parent pass through.
pub fn cc_pool(s: FeatureMaps) -> Result<FeatureMaps> {
    let mut passthrough = Vec::new();
    let mut groups: BTreeMap<ChannelTag, Vec<(u8, Volume)>> = BTreeMap::new();
    for (mut tag, v) in s.channels {
        match tag.parents.pop() {
            None => passthrough.push((tag, v)),
            Some(parent) => groups.entry(tag).or_default().push((parent, v)),
        }
    }
    let mut channels = passthrough;
    for (tag, mut members) in groups {
        members.sort_by_key(|(p, _)| *p);
        let parents: Vec<u8> = members.iter().map(|(p, _)| *p).collect();
        let complete = parents.len() == NUM_ORIENTATIONS && parents.iter().enumerate().all(|(i, &p)| p as usize == i);
        if !complete {
            return Err(Error::IncompleteGroup(format!(
                "channel {tag} has parents {parents:?}, expected 0..10"
            )));
        }
        let dims = members[0].1.dims();
        if members.iter().any(|(_, v)| v.dims() != dims) {
            return Err(Error::IncompleteGroup(format!("channel {tag} has mixed dims")));
        }
        let mut acc = vec![0.0; members[0].1.len()];
        for (_, v) in &members {
            for (a, &x) in acc.iter_mut().zip(v.data()) {
                *a += x;
            }
        }
        let m = NUM_ORIENTATIONS as f64;
        acc.iter_mut().for_each(|a| *a /= m);
        channels.push((tag, Volume::from_parts_unchecked(dims, acc)));
    }
    let mut out = FeatureMaps { channels };
    out.sort();
    Ok(out)
}

/// Stage switches shared by every layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerOptions {
    pub padding: Padding,
    pub rectification: Rectification,
    pub normalize: bool,
    pub norm_group: NormGroup,
    pub epsilon: EpsilonMode,
    pub pool_kind: PoolKind,
    pub cc_pooling: bool,
}

impl Default for LayerOptions {
    fn default() -> Self {
        Self {
            padding: Padding::Reflect101,
            rectification: Rectification::TwoPath,
            normalize: true,
            norm_group: NormGroup::Polarity,
            epsilon: EpsilonMode::Voxel,
            pool_kind: PoolKind::Gaussian,
            cc_pooling: true,
        }
    }
}

/// Filters shared by every layer and scale.
#[derive(Debug, Clone)]
pub struct Bank {
    pub basis: SteerableBasis,
    pub dirs: DirectionSet,
}

#[derive(Debug, Clone)]
pub struct LayerOutput {
    /// Normalized energies, before any pooling.
    pub features: FeatureMaps,
    /// Pooled (and cross-channel pooled) maps fed to the next layer.
    pub fed_back: FeatureMaps,
}

/// Convolution, rectification and normalization for one input channel.
fn filter_channel(tag: &ChannelTag, v: &Volume, bank: &Bank, opts: &LayerOptions) -> Result<Vec<(ChannelTag, Volume)>> {
    let oriented = conv_all_orientations(v, &bank.dirs, &bank.basis, opts.padding);
    // energies[polarity][orientation]
    let mut by_polarity: Vec<(Polarity, Vec<Volume>)> = Vec::new();
    for (i, c) in oriented.iter().enumerate() {
        for (k, (pol, e)) in rectify(c, opts.rectification).into_iter().enumerate() {
            if i == 0 {
                by_polarity.push((pol, Vec::with_capacity(NUM_ORIENTATIONS)));
            }
            by_polarity[k].1.push(e);
        }
    }
    drop(oriented);

    let normalized: Vec<(Polarity, Vec<Volume>)> = if !opts.normalize {
        by_polarity
    } else {
        match opts.norm_group {
            NormGroup::Polarity => by_polarity
                .into_iter()
                .map(|(pol, energies)| {
                    let refs: Vec<&Volume> = energies.iter().collect();
                    normalize_energies(&refs, opts.epsilon).map(|n| (pol, n))
                })
                .collect::<Result<_>>()?,
            NormGroup::Joint => {
                let refs: Vec<&Volume> = by_polarity.iter().flat_map(|(_, e)| e.iter()).collect();
                let mut flat = normalize_energies(&refs, opts.epsilon)?.into_iter();
                by_polarity
                    .iter()
                    .map(|(pol, e)| (*pol, flat.by_ref().take(e.len()).collect()))
                    .collect()
            }
        }
    };

    let mut out = Vec::with_capacity(normalized.len() * NUM_ORIENTATIONS);
    for (pol, maps) in normalized {
        for (i, m) in maps.into_iter().enumerate() {
            out.push((tag.child(i as u8, pol), m));
        }
    }
    Ok(out)
}

/// Runs one layer on every input channel.
///
/// Channels are processed independently and reassembled in tag order, so
/// the result does not depend on the number of worker threads.
pub fn run_layer(input: &FeatureMaps, bank: &Bank, params: &PoolingParams, opts: &LayerOptions) -> Result<LayerOutput> {
    let per_channel: Vec<Vec<(ChannelTag, Volume)>> = input
        .channels
        .par_iter()
        .map(|(tag, v)| filter_channel(tag, v, bank, opts))
        .collect::<Result<_>>()?;
    let mut features = FeatureMaps {
        channels: per_channel.into_iter().flatten().collect(),
    };
    features.sort();

    let pooled: Vec<(ChannelTag, Volume)> = features
        .channels
        .par_iter()
        .map(|(tag, v)| (tag.clone(), st_pool(v, params, opts.pool_kind, opts.padding)))
        .collect();
    let pooled = FeatureMaps { channels: pooled };
    let fed_back = if opts.cc_pooling { cc_pool(pooled)? } else { pooled };
    Ok(LayerOutput { features, fed_back })
}

/// Features-after-normalization channel count per scale at layer `k` (1-based).
pub fn feature_count(k: usize, cc_pooling: bool) -> usize {
    assert!(k >= 1);
    if !cc_pooling || k == 1 {
        20usize.pow(k as u32)
    } else {
        100 * (1usize << k)
    }
}
