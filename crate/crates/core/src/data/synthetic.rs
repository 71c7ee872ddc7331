use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

const MAX_CENTER_ATTEMPTS: usize = 100_000;

/// Two-level Gaussian mixture: superclass centers, subclass centers around
/// them, samples around subclass centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub num_superclasses: usize,
    pub subclasses_per_superclass: usize,
    pub samples_per_class: usize,
    pub input_dim: usize,
    /// Per-coordinate standard deviation of samples around their subclass center.
    pub spread: f64,
    /// Minimum distance between superclass centers, before standardisation.
    pub separation: f64,
    /// Distance of each subclass center from its superclass center.
    pub subclass_offset: f64,
    /// Strength of the elementwise `x + warp·sin(x)` distortion applied to samples.
    pub warp: f64,
    /// Rescale every feature to zero mean and unit variance over the generated set.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_superclasses: 4,
            subclasses_per_superclass: 3,
            samples_per_class: 100,
            input_dim: 16,
            spread: 1.0,
            separation: 8.0,
            subclass_offset: 3.0,
            warp: 0.0,
            standardize: true,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn num_classes(&self) -> usize {
        self.num_superclasses * self.subclasses_per_superclass
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_superclasses == 0 || self.subclasses_per_superclass == 0 {
            return Err(Error::invalid("num_superclasses", "class counts must be positive"));
        }
        if self.samples_per_class == 0 || self.input_dim == 0 {
            return Err(Error::invalid("samples_per_class", "sample count and input_dim must be positive"));
        }
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return Err(Error::invalid("spread", "must be positive"));
        }
        if !(self.separation.is_finite() && self.separation > self.spread) {
            return Err(Error::invalid("separation", "must exceed spread"));
        }
        if !(self.subclass_offset.is_finite() && self.subclass_offset >= 0.0) {
            return Err(Error::invalid("subclass_offset", "must be nonnegative"));
        }
        if !self.warp.is_finite() {
            return Err(Error::invalid("warp", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    /// Fine labels `superclass · subclasses_per_superclass + subclass`.
    pub dataset: Dataset,
    pub superclass_labels: Vec<usize>,
    pub superclass_centers: Vec<Vec<f64>>,
    pub class_centers: Vec<Vec<f64>>,
}

impl SyntheticData {
    pub fn superclass_of(&self, class: usize) -> usize {
        class / self.spec.subclasses_per_superclass
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Z-scores features in place and maps centers through the same affine transform.
fn standardize(features: &mut [Vec<f64>], supers: &mut [Vec<f64>], classes: &mut [Vec<f64>]) {
    let d = features[0].len();
    let n = features.len() as f64;
    for k in 0..d {
        let mean = features.iter().map(|x| x[k]).sum::<f64>() / n;
        let var = features.iter().map(|x| (x[k] - mean).powi(2)).sum::<f64>() / n;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        for x in features.iter_mut().chain(supers.iter_mut()).chain(classes.iter_mut()) {
            x[k] = (x[k] - mean) / std;
        }
    }
}

/// Deterministic given `spec.seed`. Samples are grouped by class.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.input_dim;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    // Centers drawn with per-coordinate scale `separation`, rejected when too close.
    let mut supers: Vec<Vec<f64>> = Vec::with_capacity(spec.num_superclasses);
    let mut attempts = 0;
    while supers.len() < spec.num_superclasses {
        attempts += 1;
        if attempts > MAX_CENTER_ATTEMPTS {
            return Err(Error::invalid(
                "separation",
                "could not place superclass centers that far apart in this dimension",
            ));
        }
        let c: Vec<f64> = (0..d).map(|_| unit.sample(&mut rng) * spec.separation).collect();
        if supers.iter().all(|s| dist(s, &c) >= spec.separation) {
            supers.push(c);
        }
    }

    let mut class_centers = Vec::with_capacity(spec.num_classes());
    for s in &supers {
        for _ in 0..spec.subclasses_per_superclass {
            let dir: Vec<f64> = (0..d).map(|_| unit.sample(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            class_centers.push(s.iter().zip(&dir).map(|(c, u)| c + spec.subclass_offset * u / norm).collect::<Vec<_>>());
        }
    }

    let n = spec.num_classes() * spec.samples_per_class;
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut superclass_labels = Vec::with_capacity(n);
    for (k, center) in class_centers.iter().enumerate() {
        for _ in 0..spec.samples_per_class {
            let x: Vec<f64> = center
                .iter()
                .map(|c| {
                    let v = c + spec.spread * unit.sample(&mut rng);
                    v + spec.warp * v.sin()
                })
                .collect();
            features.push(x);
            labels.push(k);
            superclass_labels.push(k / spec.subclasses_per_superclass);
        }
    }
    if spec.standardize {
        standardize(&mut features, &mut supers, &mut class_centers);
    }
    Ok(SyntheticData {
        spec: spec.clone(),
        dataset: Dataset::new(d, features, labels)?,
        superclass_labels,
        superclass_centers: supers,
        class_centers,
    })
}
