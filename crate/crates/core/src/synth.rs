//! Synthetic dynamic textures: drifting sinusoids, move-stop schedules,
//! picket-fence composites and labeled datasets built from them.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    MovingSinusoid,
    MoveStop,
    PicketFence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternSpec {
    pub kind: PatternKind,
    /// Spatial period in pixels.
    pub wavelength: f64,
    /// Unit direction of motion in the `(x, y)` plane.
    pub direction: [f64; 2],
    /// Pixels per frame.
    pub speed: f64,
    /// Move-stop cycle length in frames.
    pub period: usize,
    /// Fraction of each spatial period covered by the fence.
    pub fence_duty: f64,
    pub dims: [usize; 3],
    pub phase: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for PatternSpec {
    fn default() -> Self {
        PatternSpec {
            kind: PatternKind::MovingSinusoid,
            wavelength: 8.0,
            direction: [1.0, 0.0],
            speed: 1.0,
            period: 16,
            fence_duty: 0.5,
            dims: [64, 64, 64],
            phase: 0.0,
            noise_std: 0.0,
            seed: 0,
        }
    }
}

impl PatternSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.wavelength >= 2.0 && self.wavelength.is_finite()) {
            return bad(format!("wavelength must be >= 2, got {}", self.wavelength));
        }
        if self.dims.contains(&0) {
            return bad(format!("dims must be positive, got {:?}", self.dims));
        }
        if !(0.0..1.0).contains(&self.fence_duty) {
            return bad(format!("fence_duty must lie in [0, 1), got {}", self.fence_duty));
        }
        let norm = self.direction[0].hypot(self.direction[1]);
        if !((norm - 1.0).abs() <= 1e-9) {
            return bad(format!("direction must be a unit vector, got {:?}", self.direction));
        }
        if !self.speed.is_finite() || !self.phase.is_finite() {
            return bad("speed and phase must be finite".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        if self.kind == PatternKind::MoveStop && self.period < 2 {
            return bad(format!("period must be >= 2, got {}", self.period));
        }
        Ok(())
    }

    /// The volume described by this spec.
    pub fn generate(&self) -> Result<Volume> {
        match self.kind {
            PatternKind::MovingSinusoid => moving_sinusoid(self),
            PatternKind::MoveStop => move_stop(self),
            PatternKind::PicketFence => picket_fence(self),
        }
    }

    fn value(&self, x: usize, y: usize, shift: f64) -> f64 {
        let s = self.direction[0] * x as f64 + self.direction[1] * y as f64;
        0.5 + 0.5 * (TAU * (s - shift) / self.wavelength + self.phase).sin()
    }
}

/// Builds the clean pattern from a per-voxel closure, then adds seeded
/// Gaussian noise and clamps to `[0, 1]`.
fn render(spec: &PatternSpec, f: impl Fn(usize, usize, usize) -> f64) -> Result<Volume> {
    spec.validate()?;
    let mut v = Volume::from_fn(spec.dims, f);
    if spec.noise_std > 0.0 {
        let normal = Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for x in v.data_mut() {
            *x += normal.sample(&mut rng);
        }
    }
    for x in v.data_mut() {
        *x = x.clamp(0.0, 1.0);
    }
    Ok(v)
}

pub fn moving_sinusoid(spec: &PatternSpec) -> Result<Volume> {
    render(spec, |x, y, t| spec.value(x, y, spec.speed * t as f64))
}

/// Frames before `t` that fall in the moving half of their cycle.
fn moving_frames(t: usize, period: usize) -> usize {
    let half = period as f64 / 2.0;
    (0..t).filter(|u| ((u % period) as f64) < half).count()
}

/// The pattern advances during the first half of each cycle and holds still
/// during the second.
pub fn move_stop(spec: &PatternSpec) -> Result<Volume> {
    spec.validate()?;
    if spec.period < 2 {
        return Err(Error::InvalidParameter(format!(
            "period must be >= 2, got {}",
            spec.period
        )));
    }
    let shifts: Vec<f64> = (0..spec.dims[2])
        .map(|t| spec.speed * moving_frames(t, spec.period) as f64)
        .collect();
    render(spec, |x, y, t| spec.value(x, y, shifts[t]))
}

/// A moving sinusoid seen through a static fence carrying the same pattern.
/// `fence_duty = 0` leaves the moving sinusoid unoccluded.
pub fn picket_fence(spec: &PatternSpec) -> Result<Volume> {
    render(spec, |x, y, t| {
        let s = spec.direction[0] * x as f64 + spec.direction[1] * y as f64;
        let frac = (s / spec.wavelength).rem_euclid(1.0);
        if frac < spec.fence_duty {
            spec.value(x, y, 0.0)
        } else {
            spec.value(x, y, spec.speed * t as f64)
        }
    })
}

/// Half-widths of uniform perturbations applied per sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Jitter {
    pub phase: f64,
    pub speed: f64,
    pub wavelength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub label: String,
    #[serde(default)]
    pub template: PatternSpec,
    pub count: usize,
    #[serde(default)]
    pub jitter: Jitter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default)]
    pub seed: u64,
    #[serde(rename = "class")]
    pub classes: Vec<ClassSpec>,
}

impl DatasetSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub label: String,
    /// Index within the class.
    pub index: usize,
    pub spec: PatternSpec,
}

impl Sample {
    pub fn id(&self) -> String {
        format!("{}/{:03}", self.label, self.index)
    }
}

fn check_jitter(c: &ClassSpec) -> Result<()> {
    let j = c.jitter;
    for (name, w) in [("phase", j.phase), ("speed", j.speed), ("wavelength", j.wavelength)] {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "class {}: {name} jitter must be a finite half-width >= 0, got {w}",
                c.label
            )));
        }
    }
    if c.template.wavelength - j.wavelength < 2.0 {
        return Err(Error::InvalidParameter(format!(
            "class {}: wavelength jitter {} can push wavelength {} below 2",
            c.label, j.wavelength, c.template.wavelength
        )));
    }
    Ok(())
}

/// Per-sample specs for a dataset; every sample gets its own noise seed.
pub fn dataset_specs(classes: &[ClassSpec], seed: u64) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for c in classes {
        if c.label.is_empty() || c.label.contains(['/', '\\', ',']) {
            return Err(Error::InvalidParameter(format!("unusable class label {:?}", c.label)));
        }
        if c.count < 2 {
            return Err(Error::InvalidParameter(format!(
                "class {} needs at least 2 samples, got {}",
                c.label, c.count
            )));
        }
        c.template.validate()?;
        check_jitter(c)?;
        let j = c.jitter;
        for index in 0..c.count {
            let mut spec = c.template.clone();
            spec.phase += rng.random_range(-1.0..=1.0) * j.phase;
            spec.speed += rng.random_range(-1.0..=1.0) * j.speed;
            spec.wavelength += rng.random_range(-1.0..=1.0) * j.wavelength;
            spec.seed = rng.next_u64();
            out.push(Sample {
                label: c.label.clone(),
                index,
                spec,
            });
        }
    }
    Ok(out)
}

/// Generates every sample of every class, in class then sample order.
pub fn make_dataset(classes: &[ClassSpec], seed: u64) -> Result<Vec<(Sample, Volume)>> {
    dataset_specs(classes, seed)?
        .into_par_iter()
        .map(|s| {
            let v = s.spec.generate()?;
            Ok((s, v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: PatternKind) -> PatternSpec {
        PatternSpec {
            kind,
            dims: [24, 6, 20],
            ..Default::default()
        }
    }

    fn frame(v: &Volume, t: usize) -> Vec<f64> {
        let [nx, ny, _] = v.dims();
        v.data()[t * nx * ny..(t + 1) * nx * ny].to_vec()
    }

    #[test]
    fn static_when_speed_zero() {
        let s = PatternSpec {
            speed: 0.0,
            ..spec(PatternKind::MovingSinusoid)
        };
        let v = moving_sinusoid(&s).unwrap();
        for t in 1..20 {
            assert_eq!(frame(&v, t), frame(&v, 0));
        }
        let m = move_stop(&PatternSpec {
            kind: PatternKind::MoveStop,
            ..s
        })
        .unwrap();
        assert_eq!(m, v);
    }

    #[test]
    fn translation_identity() {
        let s = PatternSpec {
            speed: 2.0,
            ..spec(PatternKind::MovingSinusoid)
        };
        let v = moving_sinusoid(&s).unwrap();
        for t in 0..5 {
            for y in 0..6 {
                for x in 2 * t..24 {
                    let a = v.get(x, y, t);
                    let b = v.get(x - 2 * t, y, 0);
                    assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn period_mean_is_half() {
        let v = moving_sinusoid(&spec(PatternKind::MovingSinusoid)).unwrap();
        let mean = (0..8).map(|x| v.get(x, 3, 5)).sum::<f64>() / 8.0;
        assert!((mean - 0.5).abs() <= 1e-9);
    }

    #[test]
    fn move_stop_schedule() {
        let base = spec(PatternKind::MoveStop);
        let long = PatternSpec {
            period: 40,
            ..base.clone()
        };
        let a = move_stop(&long).unwrap();
        let b = moving_sinusoid(&long).unwrap();
        assert_eq!(a, b);

        let v = move_stop(&PatternSpec {
            period: 8,
            ..base.clone()
        })
        .unwrap();
        // Frames 4..=8 share the displacement reached after frame 3.
        for t in 5..=8 {
            assert_eq!(frame(&v, t), frame(&v, 4));
        }
        assert_ne!(frame(&v, 3), frame(&v, 4));
        assert_ne!(frame(&v, 8), frame(&v, 9));
        assert_eq!(moving_frames(16, 16), 8);
        assert_eq!(moving_frames(5, 3), 4);
        assert!(move_stop(&PatternSpec { period: 1, ..base }).is_err());
    }

    #[test]
    fn picket_fence_structure() {
        let s = spec(PatternKind::PicketFence);
        let v = picket_fence(&s).unwrap();
        let moving = moving_sinusoid(&s).unwrap();
        for x in 0..24 {
            let fence = (x as f64 / 8.0).fract() < 0.5;
            for t in 0..20 {
                if fence {
                    assert_eq!(v.get(x, 2, t), v.get(x, 2, 0));
                } else {
                    assert_eq!(v.get(x, 2, t), moving.get(x, 2, t));
                }
            }
        }
        let open = picket_fence(&PatternSpec { fence_duty: 0.0, ..s }).unwrap();
        assert_eq!(open, moving);
    }

    #[test]
    fn noise_seeded_and_clamped() {
        let s = PatternSpec {
            noise_std: 0.3,
            seed: 9,
            ..spec(PatternKind::MovingSinusoid)
        };
        let a = moving_sinusoid(&s).unwrap();
        assert_eq!(a, moving_sinusoid(&s).unwrap());
        assert_ne!(a, moving_sinusoid(&PatternSpec { seed: 10, ..s }).unwrap());
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn invalid_specs() {
        let base = spec(PatternKind::MovingSinusoid);
        for bad in [
            PatternSpec {
                wavelength: 1.5,
                ..base.clone()
            },
            PatternSpec {
                dims: [4, 0, 4],
                ..base.clone()
            },
            PatternSpec {
                fence_duty: 1.0,
                ..base.clone()
            },
            PatternSpec {
                direction: [1.0, 1.0],
                ..base.clone()
            },
            PatternSpec {
                noise_std: -0.1,
                ..base.clone()
            },
        ] {
            assert!(bad.generate().is_err(), "{bad:?}");
        }
    }

    fn classes(jitter: Jitter) -> Vec<ClassSpec> {
        [
            PatternKind::MovingSinusoid,
            PatternKind::MoveStop,
            PatternKind::PicketFence,
        ]
        .into_iter()
        .enumerate()
        .map(|(i, kind)| ClassSpec {
            label: format!("c{i}"),
            template: PatternSpec {
                kind,
                dims: [10, 4, 6],
                noise_std: 0.05,
                ..Default::default()
            },
            count: 2,
            jitter,
        })
        .collect()
    }

    #[test]
    fn dataset_deterministic() {
        let jitter = Jitter {
            phase: 1.0,
            speed: 0.2,
            wavelength: 1.0,
        };
        let a = make_dataset(&classes(jitter), 5).unwrap();
        let b = make_dataset(&classes(jitter), 5).unwrap();
        assert_eq!(a.len(), 6);
        assert_eq!(a, b);
        assert_eq!(a[3].0.id(), "c1/001");
    }

    #[test]
    fn zero_jitter_differs_only_by_seed() {
        let d = dataset_specs(&classes(Jitter::default()), 1).unwrap();
        let (s0, s1) = (&d[0].spec, &d[1].spec);
        assert_ne!(s0.seed, s1.seed);
        assert_eq!(
            PatternSpec { seed: 0, ..s0.clone() },
            PatternSpec { seed: 0, ..s1.clone() }
        );
    }

    #[test]
    fn dataset_errors() {
        let mut c = classes(Jitter::default());
        c[0].jitter.speed = -1.0;
        assert!(dataset_specs(&c, 0).is_err());
        let mut c = classes(Jitter::default());
        c[1].jitter.wavelength = 7.0;
        assert!(dataset_specs(&c, 0).is_err());
        let mut c = classes(Jitter::default());
        c[2].count = 1;
        assert!(dataset_specs(&c, 0).is_err());
    }

    #[test]
    fn dataset_toml() {
        let text = r#"
            seed = 3
            [[class]]
            label = "right"
            count = 2
            template = { kind = "moving_sinusoid", dims = [8, 8, 8] }
            jitter = { phase = 0.5 }
            [[class]]
            label = "fence"
            count = 3
            template = { kind = "picket_fence", fence_duty = 0.25 }
        "#;
        let d = DatasetSpec::from_toml(text).unwrap();
        assert_eq!(d.seed, 3);
        assert_eq!(d.classes[1].template.kind, PatternKind::PicketFence);
        assert_eq!(d.classes[1].template.wavelength, 8.0);
        assert_eq!(d.classes[0].jitter.phase, 0.5);
        assert!(DatasetSpec::from_toml("[[class]]\nlabel = \"x\"\ncount = 2\nbogus = 1\n").is_err());
    }
}
