//! Python module `pyhypee`: geometry, entailment cones, δ-hyperbolicity,
//! cost accounting, embedding files, and model training with triggered
//! inference.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hypee::analysis::{self, Metric};
use hypee::data::{self, Dataset, EmbeddingSet, PointMode, SyntheticSpec};
use hypee::entailment::{self, ConeConfig};
use hypee::geometry::{self as geo, Curvature, LorentzPoint, TangentVector};
use hypee::trainer::{self, BackboneConfig, CostModel as CoreCost, Mode, MultiExitModel};
use hypee::trigger::{self, CalibrationConfig, NormStats, Strategy, TriggerConfig};

fn err(e: hypee::Error) -> PyErr {
    match e {
        hypee::Error::Io(io) => PyIOError::new_err(io.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn curvature(c: f64) -> PyResult<Curvature> {
    Curvature::new(c).map_err(err)
}

fn point(space: &[f64], c: Curvature) -> PyResult<LorentzPoint> {
    LorentzPoint::lift(space, c).map_err(err)
}

fn mode(name: &str) -> PyResult<Mode> {
    match name {
        "hyperbolic" => Ok(Mode::Hyperbolic),
        "euclidean" => Ok(Mode::Euclidean),
        other => Err(PyValueError::new_err(format!("mode must be 'hyperbolic' or 'euclidean', got {other:?}"))),
    }
}

/// Ambient coordinates `[time, space...]` of the point with the given space part.
#[pyfunction]
#[pyo3(signature = (space, c=1.0))]
fn lift(space: Vec<f64>, c: f64) -> PyResult<Vec<f64>> {
    Ok(point(&space, curvature(c)?)?.ambient())
}

/// Geodesic distance between two points given by their space parts.
#[pyfunction]
#[pyo3(signature = (x, y, c=1.0))]
fn geodesic_distance(x: Vec<f64>, y: Vec<f64>, c: f64) -> PyResult<f64> {
    let c = curvature(c)?;
    geo::geodesic_distance(&point(&x, c)?, &point(&y, c)?, c).map_err(err)
}

/// Exponential map at the origin; returns ambient coordinates.
#[pyfunction]
#[pyo3(signature = (v, c=1.0))]
fn exp_map_origin(v: Vec<f64>, c: f64) -> PyResult<Vec<f64>> {
    Ok(geo::exp_map_origin(&TangentVector::at_origin(v), curvature(c)?).map_err(err)?.ambient())
}

/// Logarithmic map at the origin of the point with the given space part.
#[pyfunction]
#[pyo3(signature = (space, c=1.0))]
fn log_map_origin(space: Vec<f64>, c: f64) -> PyResult<Vec<f64>> {
    let c = curvature(c)?;
    Ok(geo::log_map_origin(&point(&space, c)?, c).map_err(err)?.into_space())
}

#[pyfunction]
#[pyo3(signature = (space, c=1.0, k=0.1))]
fn half_aperture(space: Vec<f64>, c: f64, k: f64) -> PyResult<f64> {
    let c = curvature(c)?;
    let cone = ConeConfig::new(k, c).map_err(err)?;
    entailment::half_aperture(&point(&space, c)?, &cone).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (parent, child, c=1.0))]
fn exterior_angle(parent: Vec<f64>, child: Vec<f64>, c: f64) -> PyResult<f64> {
    let c = curvature(c)?;
    entailment::exterior_angle(&point(&parent, c)?, &point(&child, c)?, c).map_err(err)
}

fn report_dict<'py>(py: Python<'py>, r: &analysis::HyperbolicityReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("points", r.points)?;
    d.set_item("delta", r.delta)?;
    d.set_item("diameter", r.diameter)?;
    d.set_item("delta_rel", r.delta_rel)?;
    d.set_item("c_estimate", r.c_estimate)?;
    Ok(d)
}

/// δ-hyperbolicity of a square distance matrix.
#[pyfunction]
fn delta_from_distances<'py>(py: Python<'py>, distances: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    report_dict(py, &analysis::delta_from_distances(&distances).map_err(err)?)
}

/// δ-hyperbolicity of row vectors; `metric` is "euclidean" or "lorentz".
#[pyfunction]
#[pyo3(signature = (points, metric="euclidean", c=1.0))]
fn delta_hyperbolicity<'py>(py: Python<'py>, points: Vec<Vec<f64>>, metric: &str, c: f64) -> PyResult<Bound<'py, PyDict>> {
    let metric = match metric {
        "euclidean" => Metric::Euclidean,
        "lorentz" => Metric::Lorentz(c),
        other => return Err(PyValueError::new_err(format!("unknown metric {other:?}"))),
    };
    report_dict(py, &analysis::delta_hyperbolicity(&points, metric).map_err(err)?)
}

#[pyfunction]
fn curvature_estimate(delta_rel: f64) -> PyResult<f64> {
    analysis::curvature_estimate(delta_rel).map_err(err)
}

/// Returns `(assignments, objective_trace, converged)`.
#[pyfunction]
#[pyo3(signature = (points, k, c=1.0, max_iters=100, seed=0))]
fn hyperbolic_kmeans(points: Vec<Vec<f64>>, k: usize, c: f64, max_iters: usize, seed: u64) -> PyResult<(Vec<usize>, Vec<f64>, bool)> {
    let c = curvature(c)?;
    let pts = points.iter().map(|p| point(p, c)).collect::<PyResult<Vec<_>>>()?;
    let r = analysis::hyperbolic_kmeans(&pts, c, k, max_iters, seed).map_err(err)?;
    Ok((r.assignments, r.objective, r.converged))
}

/// Percentage rounded down to one decimal.
#[pyfunction]
fn percent_truncated(fraction: f64) -> f64 {
    trainer::percent_truncated(fraction)
}

/// Cumulative multiply-accumulate cost of reaching each exit.
#[pyclass(name = "CostModel")]
struct PyCostModel {
    inner: CoreCost,
}

#[pymethods]
impl PyCostModel {
    #[new]
    fn new(cumulative_macs: Vec<f64>) -> PyResult<Self> {
        Ok(PyCostModel {
            inner: CoreCost::new(cumulative_macs).map_err(err)?,
        })
    }

    fn saved_fraction(&self, exit: usize) -> PyResult<f64> {
        self.inner.saved_fraction(exit).map_err(err)
    }

    fn mixture_saved_fraction(&self, fractions: Vec<f64>) -> PyResult<f64> {
        self.inner.mixture_saved_fraction(&fractions).map_err(err)
    }
}

/// Returns `(features, labels)` from the hierarchical Gaussian generator.
#[pyfunction]
#[pyo3(signature = (seed=0, samples_per_class=100, num_superclasses=4, subclasses_per_superclass=3, input_dim=16))]
fn generate_synthetic(
    seed: u64,
    samples_per_class: usize,
    num_superclasses: usize,
    subclasses_per_superclass: usize,
    input_dim: usize,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let spec = SyntheticSpec {
        seed,
        samples_per_class,
        num_superclasses,
        subclasses_per_superclass,
        input_dim,
        ..SyntheticSpec::default()
    };
    let d = data::generate_synthetic(&spec).map_err(err)?.dataset;
    Ok((d.features, d.labels))
}

/// Returns a dict with `mode`, `curvature`, `vectors`, `labels` and `exit_ids`.
#[pyfunction]
fn read_embeddings<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let set = data::read_embeddings(&path).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item(
        "mode",
        match set.mode {
            PointMode::Hyperbolic => "hyperbolic",
            PointMode::Euclidean => "euclidean",
        },
    )?;
    d.set_item("curvature", set.curvature)?;
    d.set_item("vectors", set.vectors())?;
    d.set_item("labels", set.labels.clone())?;
    d.set_item("exit_ids", set.exit_ids.clone())?;
    Ok(d)
}

/// Writes space parts of hyperboloid points (`curvature` given) or plain vectors.
#[pyfunction]
#[pyo3(signature = (path, vectors, curvature=None, labels=None, exit_ids=None))]
fn write_embeddings(path: PathBuf, vectors: Vec<Vec<f64>>, curvature: Option<f64>, labels: Option<Vec<u32>>, exit_ids: Option<Vec<u32>>) -> PyResult<()> {
    let mut set = match curvature {
        Some(c) => {
            let c = self::curvature(c)?;
            let pts = vectors.iter().map(|v| point(v, c)).collect::<PyResult<Vec<_>>>()?;
            EmbeddingSet::from_points(&pts, c)
        }
        None => EmbeddingSet::from_vectors(&vectors),
    }
    .map_err(err)?;
    if let Some(l) = labels {
        set = set.with_labels(l).map_err(err)?;
    }
    if let Some(e) = exit_ids {
        set = set.with_exit_ids(e).map_err(err)?;
    }
    data::write_embeddings(&set, &path).map_err(err)
}

fn dataset(features: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Dataset> {
    let dim = features.first().map_or(0, Vec::len);
    Dataset::new(dim, features, labels).map_err(err)
}

/// Calibrated gate statistics, serialisable as JSON.
#[pyclass(name = "NormStats")]
struct PyNormStats {
    inner: NormStats,
}

#[pymethods]
impl PyNormStats {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyNormStats {
            inner: NormStats::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn num_exits(&self) -> usize {
        self.inner.num_exits()
    }
}

/// Multi-exit backbone in hyperbolic (HypEE) or euclidean (EucEE) mode.
#[pyclass(name = "Model")]
struct PyModel {
    inner: MultiExitModel,
    seed: u64,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (input_dim, num_classes, mode="hyperbolic", hidden_dims=vec![32, 32, 32], exit_after=vec![0, 1, 2], latent_dim=16, curvature=1.0, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        input_dim: usize,
        num_classes: usize,
        mode: &str,
        hidden_dims: Vec<usize>,
        exit_after: Vec<usize>,
        latent_dim: usize,
        curvature: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = BackboneConfig {
            input_dim,
            hidden_dims,
            exit_after,
            latent_dim,
            num_classes,
            mode: self::mode(mode)?,
            curvature: self::curvature(curvature)?,
        };
        Ok(PyModel {
            inner: MultiExitModel::new(cfg, seed).map_err(err)?,
            seed,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = data::read_checkpoint(&path).map_err(err)?;
        let seed = ckpt.seed;
        Ok(PyModel {
            inner: ckpt.into_model().map_err(err)?,
            seed,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        data::write_checkpoint(&data::Checkpoint::from_model(&self.inner, self.seed), &path).map_err(err)
    }

    #[getter]
    fn num_exits(&self) -> usize {
        self.inner.num_exits()
    }

    /// Cumulative MACs to reach each exit.
    fn exit_macs(&self) -> Vec<f64> {
        CoreCost::from_model(&self.inner).cumulative_macs().to_vec()
    }

    /// Per exit: dict with `space`, `norm`, `logits` and `predicted`.
    fn forward<'py>(&self, py: Python<'py>, x: Vec<f64>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let outs = self.inner.forward_with_exits(&x).map_err(err)?;
        outs.iter()
            .map(|o| {
                let d = PyDict::new(py);
                d.set_item("space", o.space().to_vec())?;
                d.set_item("norm", o.gate_norm())?;
                d.set_item("logits", o.logits.clone())?;
                d.set_item("predicted", o.predicted())?;
                Ok(d)
            })
            .collect()
    }

    /// Trains in place; returns per-epoch `(loss, exit_accuracy)`.
    #[pyo3(signature = (features, labels, epochs=30, lam=0.2, cone_k=0.1, learning_rate=0.01, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        epochs: usize,
        lam: f64,
        cone_k: f64,
        learning_rate: f64,
        seed: u64,
    ) -> PyResult<Vec<(f64, Vec<f64>)>> {
        let data = dataset(features, labels)?;
        let mut cfg = trainer::TrainConfig {
            epochs,
            seed,
            cone_k,
            ..trainer::TrainConfig::default()
        };
        cfg.loss.lambda = lam;
        cfg.optimizer.learning_rate = learning_rate;
        let out = trainer::train(&mut self.inner, &data, &cfg).map_err(err)?;
        Ok(out.epochs.into_iter().map(|e| (e.loss, e.exit_accuracy)).collect())
    }

    /// Per-exit accuracy on a labeled set.
    fn accuracy(&self, features: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<Vec<f64>> {
        let data = dataset(features, labels)?;
        let cone = ConeConfig::new(entailment::DEFAULT_K, self.inner.config().curvature).map_err(err)?;
        Ok(trainer::evaluate(&self.inner, &data, &trainer::LossConfig::default(), &cone).map_err(err)?.exit_accuracy)
    }

    #[pyo3(signature = (features, labels, min_support=5, sigma_floor=1e-3))]
    fn calibrate(&self, features: Vec<Vec<f64>>, labels: Vec<usize>, min_support: usize, sigma_floor: f64) -> PyResult<PyNormStats> {
        let cfg = CalibrationConfig {
            min_support,
            sigma_floor,
            ..CalibrationConfig::default()
        };
        Ok(PyNormStats {
            inner: trigger::calibrate(&self.inner, &dataset(features, labels)?, &cfg).map_err(err)?,
        })
    }

    /// Triggered inference. `strategy` is "class", "global", "entropy" or "fixed".
    /// Returns `(exit_taken, predicted_class, macs)`.
    #[pyo3(signature = (x, strategy="class", stats=None, thresholds=None, exit=0))]
    fn infer(&self, x: Vec<f64>, strategy: &str, stats: Option<&PyNormStats>, thresholds: Option<Vec<f64>>, exit: usize) -> PyResult<(usize, usize, u64)> {
        let strategy = match strategy {
            "class" => Strategy::ClassNorm,
            "global" => Strategy::GlobalNorm,
            "entropy" => Strategy::Entropy {
                thresholds: thresholds.ok_or_else(|| PyValueError::new_err("entropy strategy needs thresholds"))?,
            },
            "fixed" => Strategy::Fixed { exit },
            other => return Err(PyValueError::new_err(format!("unknown strategy {other:?}"))),
        };
        let r = trigger::infer(&self.inner, &strategy, stats.map(|s| &s.inner), &TriggerConfig::default(), &x).map_err(err)?;
        Ok((r.decision.exit_taken, r.decision.predicted_class, r.macs))
    }
}

#[pymodule]
pub fn pyhypee(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(lift, m)?)?;
    m.add_function(wrap_pyfunction!(geodesic_distance, m)?)?;
    m.add_function(wrap_pyfunction!(exp_map_origin, m)?)?;
    m.add_function(wrap_pyfunction!(log_map_origin, m)?)?;
    m.add_function(wrap_pyfunction!(half_aperture, m)?)?;
    m.add_function(wrap_pyfunction!(exterior_angle, m)?)?;
    m.add_function(wrap_pyfunction!(delta_from_distances, m)?)?;
    m.add_function(wrap_pyfunction!(delta_hyperbolicity, m)?)?;
    m.add_function(wrap_pyfunction!(curvature_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(hyperbolic_kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(percent_truncated, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(read_embeddings, m)?)?;
    m.add_function(wrap_pyfunction!(write_embeddings, m)?)?;
    m.add_class::<PyCostModel>()?;
    m.add_class::<PyNormStats>()?;
    m.add_class::<PyModel>()?;
    Ok(())
}
