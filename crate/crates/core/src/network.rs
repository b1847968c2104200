//! The recurrent multi-scale pipeline and descriptor assembly.
//!
//! Each pyramid level is an independent stream. A stream repeatedly runs
//! [`run_layer`] on its own fed-back maps until the maps to be fed back no
//! longer exceed the filter support; the descriptor is the l2-normalized
//! concatenation of each stream's final-layer channel sums.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filterbank::{g3_basis, icosa_directions, Padding, NUM_ORIENTATIONS};
use crate::layer::{
    derive_pooling_params, run_layer, Bank, ChannelTag, EpsilonMode, FeatureMaps, LayerOptions, NormGroup, PoolKind,
    PoolingParams, Rectification,
};
use crate::volume::{build_pyramid, num_scales, read_exact_at, Volume};

/// How spatiotemporal pooling parameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pooling {
    /// Fixed blur std and integer decimation.
    Fixed { gamma: f64, tau: usize },
    /// Derived from `sigma`, `alpha` and `beta`.
    Derived,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub sigma: f64,
    pub taps: usize,
    pub alpha: f64,
    pub beta: f64,
    pub pooling: Pooling,
    pub padding: Padding,
    pub pyramid_blur: f64,
    pub max_layers: Option<usize>,
    pub max_scales: Option<usize>,
    pub rectification: Rectification,
    pub cc_pooling: bool,
    pub normalization: bool,
    pub norm_group: NormGroup,
    pub epsilon: EpsilonMode,
    pub pool_kind: PoolKind,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            taps: 13,
            alpha: 0.5,
            beta: 0.5,
            pooling: Pooling::Fixed { gamma: 1.0, tau: 2 },
            padding: Padding::Reflect101,
            pyramid_blur: 1.0,
            max_layers: None,
            max_scales: None,
            rectification: Rectification::TwoPath,
            cc_pooling: true,
            normalization: true,
            norm_group: NormGroup::Polarity,
            epsilon: EpsilonMode::Voxel,
            pool_kind: PoolKind::Gaussian,
        }
    }
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

fn opt_count(v: Option<usize>) -> String {
    v.map_or_else(|| "none".to_string(), |n| n.to_string())
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps.is_multiple_of(2) || self.taps < 7 {
            return Err(Error::Config(format!("taps = {} must be odd and >= 7", self.taps)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("sigma = {} must be positive", self.sigma)));
        }
        if !(self.pyramid_blur > 0.0) {
            return Err(Error::Config("pyramid_blur must be positive".into()));
        }
        if self.max_layers == Some(0) || self.max_scales == Some(0) {
            return Err(Error::Config("max_layers / max_scales must be >= 1".into()));
        }
        self.pooling_params()?;
        Ok(())
    }

    pub fn pooling_params(&self) -> Result<PoolingParams> {
        match self.pooling {
            Pooling::Fixed { gamma, tau } => PoolingParams::fixed(gamma, tau),
            Pooling::Derived => derive_pooling_params(self.sigma, self.alpha, self.beta),
        }
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn layer_options(&self) -> LayerOptions {
        LayerOptions {
            padding: self.padding,
            rectification: self.rectification,
            normalize: self.normalization,
            norm_group: self.norm_group,
            epsilon: self.epsilon,
            pool_kind: self.pool_kind,
            cc_pooling: self.cc_pooling,
        }
    }

    pub fn bank(&self) -> Result<Bank> {
        Ok(Bank {
            basis: g3_basis(self.sigma, self.taps)?,
            dirs: icosa_directions(),
        })
    }

    /// Flat `key = value` text listing every field.
    pub fn to_text(&self) -> String {
        let (pooling, gamma, tau) = match self.pooling {
            Pooling::Fixed { gamma, tau } => ("fixed", gamma, tau),
            Pooling::Derived => ("derived", 1.0, 2),
        };
        let mut s = String::new();
        let _ = writeln!(s, "orientations = {NUM_ORIENTATIONS}");
        let _ = writeln!(s, "sigma = {}", self.sigma);
        let _ = writeln!(s, "taps = {}", self.taps);
        let _ = writeln!(s, "alpha = {}", self.alpha);
        let _ = writeln!(s, "beta = {}", self.beta);
        let _ = writeln!(s, "pooling = {pooling}");
        let _ = writeln!(s, "pool_gamma = {gamma}");
        let _ = writeln!(s, "pool_tau = {tau}");
        let _ = writeln!(s, "pool_kind = {}", self.pool_kind);
        let _ = writeln!(s, "padding = {}", self.padding);
        let _ = writeln!(s, "pyramid_blur = {}", self.pyramid_blur);
        let _ = writeln!(s, "max_layers = {}", opt_count(self.max_layers));
        let _ = writeln!(s, "max_scales = {}", opt_count(self.max_scales));
        let _ = writeln!(s, "rectification = {}", self.rectification);
        let _ = writeln!(s, "cc_pooling = {}", on_off(self.cc_pooling));
        let _ = writeln!(s, "normalization = {}", on_off(self.normalization));
        let _ = writeln!(s, "norm_group = {}", self.norm_group);
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        s
    }

    /// Parses `key = value` lines; `#` starts a comment, omitted keys keep defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = NetworkConfig::default();
        let mut gamma = 1.0;
        let mut tau = 2usize;
        let mut derived = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let bad = |what: &str| Error::Config(format!("line {}: bad {what} {value:?}", lineno + 1));
            let float = || value.parse::<f64>().map_err(|_| bad(key));
            let count = || value.parse::<usize>().map_err(|_| bad(key));
            let optional = || -> Result<Option<usize>> {
                match value {
                    "none" => Ok(None),
                    _ => count().map(Some),
                }
            };
            let switch = || match value {
                "on" | "true" => Ok(true),
                "off" | "false" => Ok(false),
                _ => Err(bad(key)),
            };
            match key {
                "orientations" => {
                    if count()? != NUM_ORIENTATIONS {
                        return Err(Error::Config(format!("orientations must be {NUM_ORIENTATIONS}")));
                    }
                }
                "sigma" => cfg.sigma = float()?,
                "taps" => cfg.taps = count()?,
                "alpha" => cfg.alpha = float()?,
                "beta" => cfg.beta = float()?,
                "pooling" => {
                    derived = match value {
                        "fixed" => false,
                        "derived" => true,
                        _ => return Err(bad(key)),
                    }
                }
                "pool_gamma" => gamma = float()?,
                "pool_tau" => tau = count()?,
                "pool_kind" => cfg.pool_kind = value.parse()?,
                "padding" => cfg.padding = value.parse()?,
                "pyramid_blur" => cfg.pyramid_blur = float()?,
                "max_layers" => cfg.max_layers = optional()?,
                "max_scales" => cfg.max_scales = optional()?,
                "rectification" => cfg.rectification = value.parse()?,
                "cc_pooling" => cfg.cc_pooling = switch()?,
                "normalization" => cfg.normalization = switch()?,
                "norm_group" => cfg.norm_group = value.parse()?,
                "epsilon" => cfg.epsilon = value.parse()?,
                other => return Err(Error::Config(format!("line {}: unknown key {other:?}", lineno + 1))),
            }
        }
        cfg.pooling = if derived {
            Pooling::Derived
        } else {
            Pooling::Fixed { gamma, tau }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

/// Scale count and per-scale layer budgets for an input size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub scale_count: usize,
    pub level_dims: Vec<[usize; 3]>,
    pub layers: Vec<usize>,
}

/// Layers a stream starting at `dims` runs before its fed-back maps stop
/// exceeding the filter support.
pub fn layer_budget(dims: [usize; 3], taps: usize, tau: usize, max_layers: Option<usize>) -> usize {
    let mut layers = 1;
    let mut min = dims.iter().copied().min().unwrap_or(1);
    loop {
        if max_layers.is_some_and(|cap| layers >= cap) {
            break;
        }
        min = min.div_ceil(tau);
        if min <= taps || tau == 1 && layers >= 64 {
            break;
        }
        layers += 1;
    }
    layers
}

pub fn plan(dims: [usize; 3], cfg: &NetworkConfig) -> Result<Plan> {
    cfg.validate()?;
    if dims.iter().any(|&d| d < cfg.taps) {
        return Err(Error::VolumeTooSmall { dims, taps: cfg.taps });
    }
    let tau = cfg.pooling_params()?.tau_int;
    let mut scale_count = num_scales(dims, cfg.taps, tau);
    if let Some(cap) = cfg.max_scales {
        scale_count = scale_count.min(cap);
    }
    let mut level_dims = Vec::with_capacity(scale_count);
    let mut d = dims;
    for _ in 0..scale_count {
        level_dims.push(d);
        d = d.map(|x| x.div_ceil(2));
    }
    let layers = level_dims
        .iter()
        .map(|&d| layer_budget(d, cfg.taps, tau, cfg.max_layers))
        .collect();
    Ok(Plan {
        scale_count,
        level_dims,
        layers,
    })
}

/// One layer of one stream.
#[derive(Debug, Clone)]
pub struct LayerRecord {
    pub depth: usize,
    /// Per-channel sums of the normalized energies, in tag order.
    pub feature_sums: Vec<(ChannelTag, f64)>,
    /// Sum of every value of every fed-back map.
    pub fed_back_energy: f64,
    /// Full maps, kept only when requested.
    pub features: Option<FeatureMaps>,
}

#[derive(Debug, Clone)]
pub struct ScaleStream {
    pub scale: usize,
    pub dims: [usize; 3],
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone)]
pub struct FeatureHierarchy {
    pub plan: Plan,
    pub scales: Vec<ScaleStream>,
}

impl FeatureHierarchy {
    pub fn layer_counts(&self) -> Vec<usize> {
        self.scales.iter().map(|s| s.layers.len()).collect()
    }
}

/// Which layers keep their full feature maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retain {
    All,
    Nothing,
}

/// Runs every scale stream through its layer budget, keeping all maps.
pub fn forward(v: &Volume, cfg: &NetworkConfig) -> Result<FeatureHierarchy> {
    forward_with(v, cfg, Retain::All)
}

pub fn forward_with(v: &Volume, cfg: &NetworkConfig, retain: Retain) -> Result<FeatureHierarchy> {
    let plan = plan(v.dims(), cfg)?;
    let bank = cfg.bank()?;
    let params = cfg.pooling_params()?;
    let opts = cfg.layer_options();
    let pyramid = build_pyramid(v, plan.scale_count, cfg.pyramid_blur)?;

    let scales = pyramid
        .into_par_iter()
        .enumerate()
        .map(|(scale, level)| {
            let dims = level.dims();
            let mut input = FeatureMaps::input(scale, level);
            let mut layers = Vec::with_capacity(plan.layers[scale]);
            for depth in 1..=plan.layers[scale] {
                let out = run_layer(&input, &bank, &params, &opts)?;
                let feature_sums = out
                    .features
                    .channels
                    .iter()
                    .map(|(t, v)| (t.clone(), v.sum()))
                    .collect();
                layers.push(LayerRecord {
                    depth,
                    feature_sums,
                    fed_back_energy: out.fed_back.total(),
                    features: (retain == Retain::All).then_some(out.features),
                });
                input = out.fed_back;
            }
            Ok(ScaleStream { scale, dims, layers })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureHierarchy { plan, scales })
}

/// Flat non-negative feature vector, stored l2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f64>,
    pub tags: Vec<ChannelTag>,
    /// Realized layer count per scale.
    pub layers: Vec<usize>,
    /// All raw sums were zero; values are all zero.
    pub degenerate: bool,
}

impl Descriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scale_count(&self) -> usize {
        self.layers.len()
    }

    /// l2-normalizes raw sums; an all-zero input yields a degenerate descriptor.
    pub fn from_sums(values: Vec<f64>, tags: Vec<ChannelTag>, layers: Vec<usize>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let degenerate = norm == 0.0;
        let values = if degenerate {
            vec![0.0; values.len()]
        } else {
            values.into_iter().map(|v| v / norm).collect()
        };
        Self {
            values,
            tags,
            layers,
            degenerate,
        }
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        w.write_all(DESCRIPTOR_MAGIC)?;
        w.write_all(&DESCRIPTOR_VERSION.to_le_bytes())?;
        w.write_all(&(self.values.len() as u32).to_le_bytes())?;
        w.write_all(&(self.layers.len() as u16).to_le_bytes())?;
        for &k in &self.layers {
            w.write_all(&(k as u16).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads the binary form. Tags are rebuilt from the header assuming the
    /// default cross-channel-pooled layout; use [`Descriptor::read_tag_table`]
    /// for anything else.
    pub fn read(mut r: impl Read) -> Result<Self> {
        let mut head = [0u8; 12];
        read_exact_at(&mut r, &mut head, 0)?;
        if &head[..4] != DESCRIPTOR_MAGIC {
            return Err(Error::Corrupt {
                offset: 0,
                reason: format!(
                    "expected magic \"SOED\", found {:?}",
                    String::from_utf8_lossy(&head[..4])
                ),
            });
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != DESCRIPTOR_VERSION {
            return Err(Error::Corrupt {
                offset: 4,
                reason: format!("unsupported version {version}"),
            });
        }
        let d = u32::from_le_bytes(head[6..10].try_into().unwrap()) as usize;
        let scale_count = u16::from_le_bytes([head[10], head[11]]) as usize;
        let mut klist = vec![0u8; 2 * scale_count];
        read_exact_at(&mut r, &mut klist, 12)?;
        let layers: Vec<usize> = klist
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as usize)
            .collect();
        let values_at = 12 + 2 * scale_count as u64;
        let mut bytes = vec![0u8; 8 * d];
        read_exact_at(&mut r, &mut bytes, values_at)?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Corrupt {
                offset: values_at + 8 * d as u64,
                reason: "trailing bytes after values".into(),
            });
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Corrupt {
                offset: values_at + 8 * i as u64,
                reason: "descriptor entries must be finite and non-negative".into(),
            });
        }
        let tags = canonical_tags(&layers);
        let tags = if tags.len() == d { tags } else { Vec::new() };
        let degenerate = values.iter().all(|&v| v == 0.0);
        Ok(Self {
            values,
            tags,
            layers,
            degenerate,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        let mut d = Self::read(std::io::BufReader::new(file))?;
        let table = tag_table_path(path);
        if table.exists() {
            d.tags = Self::read_tag_table(&std::fs::read_to_string(&table)?)?;
            if d.tags.len() != d.values.len() {
                return Err(Error::Corrupt {
                    offset: 0,
                    reason: format!(
                        "{} lists {} tags for {} values",
                        table.display(),
                        d.tags.len(),
                        d.values.len()
                    ),
                });
            }
        }
        Ok(d)
    }

    /// Writes the binary file and its `.tags` sidecar.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        std::fs::write(path, buf)?;
        std::fs::write(tag_table_path(path), self.tag_table())?;
        Ok(())
    }

    /// One line per index: `index scale sign_path parents orientation`.
    pub fn tag_table(&self) -> String {
        let mut s = String::from("# index scale sign_path parents orientation\n");
        for (i, t) in self.tags.iter().enumerate() {
            let _ = writeln!(s, "{i} {t}");
        }
        s
    }

    pub fn read_tag_table(text: &str) -> Result<Vec<ChannelTag>> {
        let mut tags = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (idx, rest) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| Error::Config(format!("bad tag line {line:?}")))?;
            if idx.parse::<usize>().ok() != Some(tags.len()) {
                return Err(Error::Config(format!("tag table out of order at {line:?}")));
            }
            tags.push(rest.trim().parse()?);
        }
        Ok(tags)
    }
}

pub const DESCRIPTOR_MAGIC: &[u8; 4] = b"SOED";
pub const DESCRIPTOR_VERSION: u16 = 1;

pub fn tag_table_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("tags")
}

/// Tag layout of a default-configured descriptor with the given per-scale
/// layer counts (two-path rectification, cross-channel pooling on).
pub fn canonical_tags(layers: &[usize]) -> Vec<ChannelTag> {
    use crate::layer::{Polarity, SignPath};
    let mut tags = Vec::new();
    for (scale, &k) in layers.iter().enumerate() {
        if k == 0 {
            continue;
        }
        let mut paths = vec![SignPath::default()];
        for _ in 0..k {
            paths = paths
                .iter()
                .flat_map(|p| [p.pushed(Polarity::Pos), p.pushed(Polarity::Neg)])
                .collect();
        }
        let parents: Vec<Vec<u8>> = if k == 1 {
            vec![vec![]]
        } else {
            (0..NUM_ORIENTATIONS as u8).map(|m| vec![m]).collect()
        };
        for sign_path in &paths {
            for p in &parents {
                for o in 0..NUM_ORIENTATIONS as u8 {
                    tags.push(ChannelTag {
                        scale,
                        sign_path: sign_path.clone(),
                        parents: p.clone(),
                        orientation: Some(o),
                    });
                }
            }
        }
    }
    tags
}

/// Sums each final-layer channel over the whole volume, concatenates scales
/// in tag order, and l2-normalizes.
pub fn extract_descriptor(h: &FeatureHierarchy) -> Result<Descriptor> {
    if h.scales.is_empty() {
        return Err(Error::InvalidParameter("empty feature hierarchy".into()));
    }
    let mut entries: Vec<(ChannelTag, f64)> = Vec::new();
    let mut layers = Vec::with_capacity(h.scales.len());
    for stream in &h.scales {
        let last = stream
            .layers
            .last()
            .ok_or_else(|| Error::InvalidParameter(format!("scale {} has no layers", stream.scale)))?;
        layers.push(last.depth);
        entries.extend(last.feature_sums.iter().cloned());
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let (tags, sums): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
    Ok(Descriptor::from_sums(sums, tags, layers))
}

/// Full pipeline to a descriptor without keeping intermediate maps.
pub fn describe(v: &Volume, cfg: &NetworkConfig) -> Result<Descriptor> {
    extract_descriptor(&forward_with(v, cfg, Retain::Nothing)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_dyntex_size() {
        let p = plan([50, 50, 50], &NetworkConfig::default()).unwrap();
        assert_eq!(p.scale_count, 1);
        assert_eq!(p.layers, vec![2]);
    }

    #[test]
    fn plan_minimum() {
        let p = plan([13, 13, 13], &NetworkConfig::default()).unwrap();
        assert_eq!(p.scale_count, 1);
        assert_eq!(p.layers, vec![1]);
        assert!(matches!(
            plan([12, 40, 40], &NetworkConfig::default()),
            Err(Error::VolumeTooSmall { .. })
        ));
    }

    /// Independent simulation: shrink the volume stage by stage.
    fn simulate(dims: [usize; 3], taps: usize, tau: usize) -> (usize, Vec<usize>) {
        let mut scales = 0;
        let mut level = dims;
        let mut budgets = vec![];
        loop {
            let fits = (level.iter().min().unwrap().div_ceil(1)) as f64 >= (taps * tau) as f64 - 1e-9
                && *dims.iter().min().unwrap() as f64 / 2f64.powi(scales) >= (taps * tau) as f64;
            if !fits && scales > 0 {
                break;
            }
            let mut cur = *level.iter().min().unwrap();
            let mut k = 0;
            loop {
                k += 1;
                cur = cur.div_ceil(tau);
                if cur <= taps {
                    break;
                }
            }
            budgets.push(k);
            scales += 1;
            level = level.map(|d| d.div_ceil(2));
            if !fits {
                break;
            }
        }
        (scales as usize, budgets)
    }

    #[test]
    fn plan_matches_simulation() {
        for dims in [
            [208, 208, 208],
            [64, 64, 64],
            [104, 80, 300],
            [50, 50, 50],
            [27, 26, 30],
        ] {
            let p = plan(dims, &NetworkConfig::default()).unwrap();
            let (s, b) = simulate(dims, 13, 2);
            assert_eq!((p.scale_count, p.layers.clone()), (s, b), "{dims:?}");
        }
        let p = plan([208, 208, 208], &NetworkConfig::default()).unwrap();
        // 208 -> 104 -> 52 -> 26 -> 13: four layers; 208/8 = 26 still fits.
        assert_eq!(p.scale_count, 4);
        assert_eq!(p.layers, vec![4, 3, 2, 1]);
    }

    #[test]
    fn plan_respects_caps() {
        let cfg = NetworkConfig {
            max_layers: Some(1),
            max_scales: Some(1),
            ..Default::default()
        };
        let p = plan([208, 208, 208], &cfg).unwrap();
        assert_eq!(p.scale_count, 1);
        assert_eq!(p.layers, vec![1]);
    }

    #[test]
    fn config_text_roundtrip() {
        let cfg = NetworkConfig {
            sigma: 1.5,
            taps: 15,
            pooling: Pooling::Fixed { gamma: 1.25, tau: 3 },
            padding: Padding::Zero,
            max_layers: Some(3),
            cc_pooling: false,
            rectification: Rectification::FullWave,
            norm_group: NormGroup::Joint,
            epsilon: EpsilonMode::Volume,
            pool_kind: PoolKind::Boxcar,
            ..Default::default()
        };
        assert_eq!(NetworkConfig::from_text(&cfg.to_text()).unwrap(), cfg);
        let d = NetworkConfig::from_text("pooling = derived\nalpha = 0.25\n").unwrap();
        assert_eq!(d.pooling, Pooling::Derived);
        assert_eq!(d.alpha, 0.25);
        assert_eq!(NetworkConfig::from_text("").unwrap(), NetworkConfig::default());
    }

    #[test]
    fn config_errors() {
        assert!(NetworkConfig::from_text("taps = 12").is_err());
        assert!(NetworkConfig::from_text("bogus = 1").is_err());
        assert!(NetworkConfig::from_text("taps 13").is_err());
        assert!(NetworkConfig::from_text("pooling = derived\nalpha = 1.5").is_err());
        assert!(NetworkConfig::from_text("orientations = 6").is_err());
    }

    #[test]
    fn descriptor_normalizes() {
        let tags = canonical_tags(&[1])[..2].to_vec();
        let d = Descriptor::from_sums(vec![3.0, 4.0], tags.clone(), vec![1]);
        assert!((d.values[0] - 0.6).abs() < 1e-15 && (d.values[1] - 0.8).abs() < 1e-15);
        assert!(!d.degenerate);
        let z = Descriptor::from_sums(vec![0.0, 0.0], tags, vec![1]);
        assert!(z.degenerate);
        assert_eq!(z.values, vec![0.0, 0.0]);
    }

    #[test]
    fn descriptor_binary_layout() {
        let layers = vec![2];
        let tags = canonical_tags(&layers);
        assert_eq!(tags.len(), 400);
        let values: Vec<f64> = (0..400).map(|i| i as f64).collect();
        let d = Descriptor::from_sums(values, tags, layers);
        let mut buf = Vec::new();
        d.write(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"SOED");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(u32::from_le_bytes(buf[6..10].try_into().unwrap()), 400);
        assert_eq!(u16::from_le_bytes([buf[10], buf[11]]), 1);
        assert_eq!(u16::from_le_bytes([buf[12], buf[13]]), 2);
        assert_eq!(buf.len(), 14 + 400 * 8);
        let back = Descriptor::read(&buf[..]).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn descriptor_corrupt_magic() {
        let mut buf = Vec::new();
        Descriptor::from_sums(vec![1.0; 20], canonical_tags(&[1]), vec![1])
            .write(&mut buf)
            .unwrap();
        buf[0] = b'X';
        let err = Descriptor::read(&buf[..]).unwrap_err().to_string();
        assert!(err.contains("SOED") && err.contains("byte 0"), "{err}");
        buf[0] = b'S';
        buf.truncate(50);
        let err = Descriptor::read(&buf[..]).unwrap_err().to_string();
        assert!(err.contains("byte 50"), "{err}");
    }

    #[test]
    fn tag_table_roundtrip() {
        let d = Descriptor::from_sums(vec![1.0; 420], canonical_tags(&[2, 1]), vec![2, 1]);
        assert_eq!(Descriptor::read_tag_table(&d.tag_table()).unwrap(), d.tags);
    }

    #[test]
    fn canonical_layout_is_sorted_and_unique() {
        let tags = canonical_tags(&[3, 2]);
        assert_eq!(tags.len(), 800 + 400);
        for w in tags.windows(2) {
            assert!(w[0] < w[1]);
        }
    }

    #[test]
    fn constant_volume_gives_zero_features() {
        let v = Volume::filled([20, 20, 20], 0.5);
        let h = forward(&v, &NetworkConfig::default()).unwrap();
        for s in &h.scales {
            for l in &s.layers {
                assert!(l.feature_sums.iter().all(|(_, x)| x.abs() < 1e-20));
            }
        }
    }
}
