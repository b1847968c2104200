//! Bhattacharyya matching, NN / nearest-class-center classification and
//! leave-one-out evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Descriptor;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDescriptor {
    pub id: String,
    pub label: String,
    pub descriptor: Descriptor,
}

/// How vectors are turned into distributions before matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Similarity {
    /// Rescale to unit l1 mass, then `sum sqrt(p q)`.
    #[default]
    L1,
    /// Treat l2-normalized entries as amplitudes; squares are the
    /// distribution, so the coefficient reduces to the cosine.
    L2,
}

impl FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Similarity::L1),
            "l2" => Ok(Similarity::L2),
            other => Err(Error::Config(format!("unknown similarity {other:?}"))),
        }
    }
}

fn l1_normalized(f: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = f.iter().sum();
    (total > 0.0).then(|| f.iter().map(|v| v / total).collect())
}

fn l2_normalized(f: &[f64]) -> Option<Vec<f64>> {
    let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    (norm > 0.0).then(|| f.iter().map(|v| v / norm).collect())
}

/// Bhattacharyya coefficient of two non-negative vectors, in `[0, 1]`.
///
/// Zero if either vector has no mass.
pub fn bhattacharyya(f: &[f64], g: &[f64]) -> Result<f64> {
    bhattacharyya_with(f, g, Similarity::L1)
}

pub fn bhattacharyya_with(f: &[f64], g: &[f64], mode: Similarity) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::LengthMismatch(f.len(), g.len()));
    }
    let normalize = match mode {
        Similarity::L1 => l1_normalized,
        Similarity::L2 => l2_normalized,
    };
    let (Some(p), Some(q)) = (normalize(f), normalize(g)) else {
        return Ok(0.0);
    };
    Ok(match mode {
        Similarity::L1 => coefficient(&p, &q),
        Similarity::L2 => p.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>(),
    }
    .clamp(0.0, 1.0))
}

/// `sum sqrt(p q)` for vectors that are already unit-mass.
fn coefficient(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum()
}

/// Best gallery entry for a query.
#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub index: usize,
    pub label: String,
    pub similarity: f64,
}

/// First index of the maximum; NaN never wins.
fn argmax(scores: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best
}

pub fn nn_classify(query: &Descriptor, gallery: &[LabeledDescriptor]) -> Result<Match> {
    nn_classify_with(query, gallery, Similarity::L1)
}

/// Label of the most similar gallery entry; ties go to the lowest index.
pub fn nn_classify_with(query: &Descriptor, gallery: &[LabeledDescriptor], mode: Similarity) -> Result<Match> {
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let scores = gallery
        .iter()
        .map(|g| bhattacharyya_with(&query.values, &g.descriptor.values, mode))
        .collect::<Result<Vec<_>>>()?;
    let (index, similarity) = argmax(scores.into_iter()).unwrap();
    Ok(Match {
        index,
        label: gallery[index].label.clone(),
        similarity,
    })
}

/// Per-class prototype: the mean of l1-renormalized member descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCenter {
    pub label: String,
    pub center: Vec<f64>,
}

/// One center per label, in label order. A single-member class uses that
/// member's descriptor unchanged; zero-mass descriptors contribute nothing to
/// a mean.
pub fn class_centers(samples: &[LabeledDescriptor]) -> Result<Vec<ClassCenter>> {
    let groups = group_by_label(samples)?;
    Ok(groups
        .into_iter()
        .map(|(label, members)| ClassCenter {
            center: center_of(samples, &members),
            label,
        })
        .collect())
}

/// Sample indices per label, after checking every length agrees.
fn group_by_label(samples: &[LabeledDescriptor]) -> Result<BTreeMap<String, Vec<usize>>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    if let Some(first) = samples.first() {
        let d = first.descriptor.len();
        if let Some(s) = samples.iter().find(|s| s.descriptor.len() != d) {
            return Err(Error::LengthMismatch(d, s.descriptor.len()));
        }
    }
    for (i, s) in samples.iter().enumerate() {
        groups.entry(s.label.clone()).or_default().push(i);
    }
    Ok(groups)
}

fn center_of(samples: &[LabeledDescriptor], members: &[usize]) -> Vec<f64> {
    if let [only] = members {
        return samples[*only].descriptor.values.clone();
    }
    let mut sum = vec![0.0; samples[members[0]].descriptor.len()];
    for &i in members {
        if let Some(p) = l1_normalized(&samples[i].descriptor.values) {
            for (a, v) in sum.iter_mut().zip(p) {
                *a += v;
            }
        }
    }
    l1_normalized(&sum).unwrap_or(sum)
}

pub fn ncc_classify(query: &Descriptor, centers: &[ClassCenter]) -> Result<Match> {
    ncc_classify_with(query, centers, Similarity::L1)
}

/// Class whose center is most similar; ties go to the first center.
pub fn ncc_classify_with(query: &Descriptor, centers: &[ClassCenter], mode: Similarity) -> Result<Match> {
    if centers.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let scores = centers
        .iter()
        .map(|c| bhattacharyya_with(&query.values, &c.center, mode))
        .collect::<Result<Vec<_>>>()?;
    let (index, similarity) = argmax(scores.into_iter()).unwrap();
    Ok(Match {
        index,
        label: centers[index].label.clone(),
        similarity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    Nn,
    Ncc,
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classifier::Nn => "nn",
            Classifier::Ncc => "ncc",
        })
    }
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nn" => Ok(Classifier::Nn),
            "ncc" => Ok(Classifier::Ncc),
            other => Err(Error::Config(format!("unknown classifier {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub id: String,
    pub truth: String,
    pub predicted: String,
    /// Id of the nearest sample (NN) or label of the nearest center (NCC).
    pub matched: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classifier: Classifier,
    pub similarity: Similarity,
    pub samples: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Row and column order of `confusion`.
    pub labels: Vec<String>,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub decisions: Vec<Decision>,
}

pub fn loo_eval(dataset: &[LabeledDescriptor], classifier: Classifier) -> Result<EvalReport> {
    loo_eval_with(dataset, classifier, Similarity::L1)
}

/// Classifies each sample against all the others.
pub fn loo_eval_with(dataset: &[LabeledDescriptor], classifier: Classifier, mode: Similarity) -> Result<EvalReport> {
    if dataset.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "leave-one-out needs at least 2 samples, got {}",
            dataset.len()
        )));
    }
    if let Some(s) = dataset.iter().find(|s| s.label.is_empty()) {
        return Err(Error::InvalidParameter(format!("sample {} has no label", s.id)));
    }
    let d = dataset[0].descriptor.len();
    if let Some(s) = dataset.iter().find(|s| s.descriptor.len() != d) {
        return Err(Error::InvalidParameter(format!(
            "sample {} has length {} but {} has {d}",
            s.id,
            s.descriptor.len(),
            dataset[0].id
        )));
    }

    let groups = group_by_label(dataset)?;
    let centers = class_centers(dataset)?;
    let decisions: Vec<Decision> = (0..dataset.len())
        .into_par_iter()
        .map(|i| {
            let query = &dataset[i];
            let (predicted, matched, similarity) = match classifier {
                Classifier::Nn => {
                    let mut best: Option<(usize, f64)> = None;
                    for (j, g) in dataset.iter().enumerate() {
                        if j == i {
                            continue;
                        }
                        let s = bhattacharyya_with(&query.descriptor.values, &g.descriptor.values, mode)?;
                        if best.is_none_or(|(_, b)| s > b) {
                            best = Some((j, s));
                        }
                    }
                    let (j, s) = best.unwrap();
                    (dataset[j].label.clone(), dataset[j].id.clone(), s)
                }
                Classifier::Ncc => {
                    let centers = held_out_centers(dataset, &groups, &centers, i);
                    let m = ncc_classify_with(&query.descriptor, &centers, mode)?;
                    (m.label.clone(), m.label, m.similarity)
                }
            };
            Ok(Decision {
                id: query.id.clone(),
                truth: query.label.clone(),
                predicted,
                matched,
                similarity,
            })
        })
        .collect::<Result<_>>()?;

    let labels: Vec<String> = groups.keys().cloned().collect();
    let pos = |l: &str| labels.iter().position(|x| x == l).unwrap();
    let mut confusion = vec![vec![0usize; labels.len()]; labels.len()];
    for dec in &decisions {
        confusion[pos(&dec.truth)][pos(&dec.predicted)] += 1;
    }
    let correct = (0..labels.len()).map(|i| confusion[i][i]).sum();
    Ok(EvalReport {
        classifier,
        similarity: mode,
        samples: dataset.len(),
        correct,
        accuracy: correct as f64 / dataset.len() as f64,
        labels,
        confusion,
        decisions,
    })
}

/// Class centers with sample `held_out` removed from its own class; a class
/// left empty has no center.
fn held_out_centers(
    dataset: &[LabeledDescriptor],
    groups: &BTreeMap<String, Vec<usize>>,
    centers: &[ClassCenter],
    held_out: usize,
) -> Vec<ClassCenter> {
    let label = &dataset[held_out].label;
    let rest: Vec<usize> = groups[label].iter().copied().filter(|&j| j != held_out).collect();
    centers
        .iter()
        .filter_map(|c| {
            if c.label != *label {
                return Some(c.clone());
            }
            (!rest.is_empty()).then(|| ClassCenter {
                label: c.label.clone(),
                center: center_of(dataset, &rest),
            })
        })
        .collect()
}

/// Loads labeled descriptors from a manifest (`path,label` CSV) or from a
/// directory where each descriptor's label is its top-level subdirectory.
pub fn load_gallery(path: impl AsRef<Path>) -> Result<Vec<LabeledDescriptor>> {
    let path = path.as_ref();
    let entries = if path.is_dir() {
        gallery_from_dir(path)?
    } else {
        gallery_from_manifest(path)?
    };
    if entries.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no descriptors under {}",
            path.display()
        )));
    }
    let mut out = Vec::with_capacity(entries.len());
    for (file, id, label) in entries {
        let descriptor = Descriptor::load(&file).map_err(|e| Error::Ingestion {
            path: file.clone(),
            reason: e.to_string(),
        })?;
        out.push((file, LabeledDescriptor { id, label, descriptor }));
    }
    let (first_path, first) = &out[0];
    let d = first.descriptor.len();
    let bad: Vec<String> = out
        .iter()
        .filter(|(_, s)| s.descriptor.len() != d)
        .map(|(p, s)| format!("{} (D = {})", p.display(), s.descriptor.len()))
        .collect();
    if !bad.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "descriptor lengths differ from {} (D = {d}): {}",
            first_path.display(),
            bad.join(", ")
        )));
    }
    Ok(out.into_iter().map(|(_, s)| s).collect())
}

fn gallery_from_dir(root: &Path) -> Result<Vec<(PathBuf, String, String)>> {
    let mut files = Vec::new();
    collect_descriptor_files(root, &mut files)?;
    files.sort();
    files
        .into_iter()
        .map(|file| {
            let rel = file.strip_prefix(root).unwrap().to_path_buf();
            let mut parts = rel.components();
            let label = match (parts.next(), parts.next()) {
                (Some(first), Some(_)) => first.as_os_str().to_string_lossy().into_owned(),
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "{} has no label: descriptors must sit in per-class subdirectories",
                        file.display()
                    )))
                }
            };
            let id = rel.with_extension("").to_string_lossy().into_owned();
            Ok((file, id, label))
        })
        .collect()
}

fn collect_descriptor_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_descriptor_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "soed") {
            out.push(path);
        }
    }
    Ok(())
}

fn gallery_from_manifest(manifest: &Path) -> Result<Vec<(PathBuf, String, String)>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(manifest)
        .map_err(|e| Error::Ingestion {
            path: manifest.to_path_buf(),
            reason: e.to_string(),
        })?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Ingestion {
            path: manifest.to_path_buf(),
            reason: e.to_string(),
        })?;
        let file = record.get(0).unwrap_or("");
        let label = record.get(1).unwrap_or("");
        if i == 0 && file == "path" && label == "label" {
            continue;
        }
        if label.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "{} line {}: {file:?} has no label",
                manifest.display(),
                i + 1
            )));
        }
        let resolved = base.join(file);
        let id = Path::new(file).with_extension("").to_string_lossy().into_owned();
        out.push((resolved, id, label.to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::canonical_tags;

    fn desc(values: Vec<f64>) -> Descriptor {
        let n = values.len();
        let mut d = Descriptor::from_sums(values, Vec::new(), vec![1]);
        d.tags = canonical_tags(&[1]).into_iter().take(n).collect();
        d
    }

    fn sample(id: &str, label: &str, values: Vec<f64>) -> LabeledDescriptor {
        LabeledDescriptor {
            id: id.into(),
            label: label.into(),
            descriptor: desc(values),
        }
    }

    #[test]
    fn bc_examples() {
        let f = [0.3, 1.2, 0.0, 4.0];
        assert!((bhattacharyya(&f, &f).unwrap() - 1.0).abs() <= 1e-12);
        assert_eq!(bhattacharyya(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let expect = 0.125f64.sqrt() + 0.375f64.sqrt();
        let got = bhattacharyya(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        assert!((got - expect).abs() < 1e-15);
        assert!((got - 0.96593).abs() < 1e-5);
        assert_eq!(bhattacharyya(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(
            bhattacharyya(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn bc_l2_mode_is_cosine() {
        let f = [0.6, 0.8];
        assert!((bhattacharyya_with(&f, &f, Similarity::L2).unwrap() - 1.0).abs() < 1e-15);
        let c = bhattacharyya_with(&[1.0, 0.0], &[1.0, 1.0], Similarity::L2).unwrap();
        assert!((c - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn nn_examples() {
        let gallery = vec![
            sample("a", "A", vec![1.0, 0.0, 0.0]),
            sample("b", "B", vec![0.0, 1.0, 0.0]),
            sample("c", "C", vec![0.0, 0.0, 1.0]),
        ];
        assert_eq!(nn_classify(&desc(vec![0.0, 2.0, 0.0]), &gallery).unwrap().label, "B");
        let single = &gallery[2..];
        assert_eq!(nn_classify(&desc(vec![1.0, 0.0, 0.0]), single).unwrap().label, "C");
        assert!(matches!(
            nn_classify(&desc(vec![1.0, 0.0, 0.0]), &[]),
            Err(Error::EmptyGallery)
        ));
        // Equal similarity to A and B: lowest index wins.
        let m = nn_classify(&desc(vec![1.0, 1.0, 0.0]), &gallery).unwrap();
        assert_eq!((m.index, m.label.as_str()), (0, "A"));
    }

    #[test]
    fn nn_prefers_higher_similarity() {
        // Similarities chosen so the first entry is 0.9-ish and the second lower.
        let q = desc(vec![0.5, 0.5]);
        let gallery = vec![sample("x", "X", vec![0.4, 0.6]), sample("y", "Y", vec![0.9, 0.1])];
        let s0 = bhattacharyya(&q.values, &gallery[0].descriptor.values).unwrap();
        let s1 = bhattacharyya(&q.values, &gallery[1].descriptor.values).unwrap();
        assert!(s0 > s1);
        assert_eq!(nn_classify(&q, &gallery).unwrap().label, "X");
    }

    #[test]
    fn ncc_matches_nn_with_one_sample_per_class() {
        let gallery = vec![
            sample("a", "A", vec![1.0, 2.0, 0.5]),
            sample("b", "B", vec![0.1, 2.0, 3.0]),
        ];
        let centers = class_centers(&gallery).unwrap();
        for q in [vec![1.0, 1.0, 1.0], vec![0.0, 0.5, 2.0], vec![3.0, 0.1, 0.0]] {
            let q = desc(q);
            assert_eq!(
                nn_classify(&q, &gallery).unwrap().label,
                ncc_classify(&q, &centers).unwrap().label
            );
        }
    }

    #[test]
    fn ncc_brute_force() {
        let gallery = vec![
            sample("a1", "A", vec![1.0, 0.2, 0.0]),
            sample("a2", "A", vec![0.8, 0.4, 0.1]),
            sample("b1", "B", vec![0.1, 0.3, 1.0]),
            sample("b2", "B", vec![0.0, 0.6, 0.9]),
        ];
        let centers = class_centers(&gallery).unwrap();
        let q = desc(vec![0.7, 0.5, 0.2]);
        // Oracle: explicit mean of l1-normalized members, renormalized.
        let mean = |xs: &[&[f64]]| {
            let mut m = [0.0; 3];
            for x in xs {
                let s: f64 = x.iter().sum();
                for i in 0..3 {
                    m[i] += x[i] / s;
                }
            }
            let s: f64 = m.iter().sum();
            m.iter().map(|v| v / s).collect::<Vec<_>>()
        };
        let ca = mean(&[&[1.0, 0.2, 0.0], &[0.8, 0.4, 0.1]]);
        let cb = mean(&[&[0.1, 0.3, 1.0], &[0.0, 0.6, 0.9]]);
        let p: Vec<f64> = q.values.iter().map(|v| v / q.values.iter().sum::<f64>()).collect();
        let bc = |c: &[f64]| (0..3).map(|i| (p[i] * c[i]).sqrt()).sum::<f64>();
        assert!(bc(&ca) > bc(&cb));
        assert_eq!(ncc_classify(&q, &centers).unwrap().label, "A");
        assert!(centers[0].center.iter().zip(&ca).all(|(a, b)| (a - b).abs() < 1e-15));
        assert!(matches!(ncc_classify(&q, &[]), Err(Error::EmptyGallery)));
    }

    #[test]
    fn loo_twins() {
        let data = vec![
            sample("a1", "A", vec![1.0, 0.1]),
            sample("a2", "A", vec![1.0, 0.1]),
            sample("b1", "B", vec![0.1, 1.0]),
            sample("b2", "B", vec![0.1, 1.0]),
        ];
        for c in [Classifier::Nn, Classifier::Ncc] {
            let r = loo_eval(&data, c).unwrap();
            assert_eq!(r.accuracy, 1.0);
            assert_eq!(r.confusion, vec![vec![2, 0], vec![0, 2]]);
            assert_eq!(r.labels, vec!["A", "B"]);
        }
    }

    #[test]
    fn loo_degenerate_is_deterministic() {
        let data: Vec<_> = (0..6)
            .map(|i| sample(&format!("s{i}"), ["A", "B", "C"][i % 3], vec![1.0, 1.0]))
            .collect();
        let r1 = loo_eval(&data, Classifier::Nn).unwrap();
        let r2 = loo_eval(&data, Classifier::Nn).unwrap();
        assert_eq!(r1, r2);
        // Every query ties; the lowest remaining index wins.
        assert_eq!(r1.decisions[0].matched, "s1");
        assert_eq!(r1.decisions[1].matched, "s0");
        let rows: Vec<usize> = r1.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(rows, vec![2, 2, 2]);
    }

    #[test]
    fn loo_rejects_small_or_unlabeled() {
        assert!(loo_eval(&[sample("a", "A", vec![1.0])], Classifier::Nn).is_err());
        let data = vec![sample("a", "A", vec![1.0]), sample("b", "", vec![1.0])];
        assert!(loo_eval(&data, Classifier::Nn).is_err());
    }

    #[test]
    fn loo_ncc_excludes_held_out() {
        // a2 alone would pull the A center toward itself; held out, the
        // remaining A member is far away and B wins.
        let data = vec![
            sample("a1", "A", vec![1.0, 0.0, 0.0]),
            sample("a2", "A", vec![0.0, 0.1, 1.0]),
            sample("b1", "B", vec![0.0, 1.0, 1.0]),
            sample("b2", "B", vec![0.0, 1.0, 0.8]),
        ];
        let r = loo_eval(&data, Classifier::Ncc).unwrap();
        let a2 = r.decisions.iter().find(|d| d.id == "a2").unwrap();
        assert_eq!(a2.predicted, "B");
    }

    proptest::proptest! {
        #[test]
        fn bc_symmetric_bounded(pairs in proptest::collection::vec((0f64..10.0, 0f64..10.0), 1..40)) {
            let (f, g): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = bhattacharyya(&f, &g).unwrap();
            let b = bhattacharyya(&g, &f).unwrap();
            proptest::prop_assert!((a - b).abs() <= 1e-12);
            proptest::prop_assert!((0.0..=1.0).contains(&a));
            if f.iter().sum::<f64>() > 0.0 {
                proptest::prop_assert!((bhattacharyya(&f, &f).unwrap() - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn nn_scale_invariant(vals in proptest::collection::vec(0.01f64..1.0, 12), c in 0.1f64..50.0) {
            let gallery: Vec<_> = vals.chunks(3).enumerate()
                .map(|(i, v)| sample(&format!("g{i}"), &format!("L{i}"), v.to_vec()))
                .collect();
            let q = desc(vec![0.3, 0.5, 0.2]);
            let scaled: Vec<_> = gallery.iter().map(|s| {
                let mut s = s.clone();
                s.descriptor.values.iter_mut().for_each(|v| *v *= c);
                s
            }).collect();
            let a = nn_classify(&q, &gallery).unwrap();
            let b = nn_classify(&q, &scaled).unwrap();
            // Rescaling only perturbs similarities at rounding level.
            proptest::prop_assert!((a.similarity - b.similarity).abs() < 1e-12);
        }
    }
}
