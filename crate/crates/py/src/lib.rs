//! Python bindings. Structured values cross the boundary as plain dicts and
//! lists (via JSON), meshes and models as opaque handles.

use std::collections::BTreeSet;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyString;

use sdm_core::edit::{apply_ops, compile_value, replay_api_calls, ApiCall};
use sdm_core::geometry::synthetic::generate_model;
use sdm_core::geometry::{load_model, model_from_json, model_to_json, save_model, MeshModel};
use sdm_core::model::{ModelConfig, SdmModel};
use sdm_core::parser::{build_cot_prompt, parse_with_grammar, TEMPLATE_VERSION};
use sdm_core::text::TextProvider;
use sdm_core::tokenizer::tokenize_model;
use sdm_core::{Error, FeatureType};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Transport(_) | Error::Diverged(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Accepts a JSON string or any JSON-serializable Python object.
fn from_py(obj: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    let text: String = if obj.is_instance_of::<PyString>() {
        obj.extract()?
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// A tessellated B-rep model with face ids starting at 1.
#[pyclass(name = "Mesh", module = "sdm", from_py_object)]
#[derive(Clone)]
struct PyMesh {
    inner: MeshModel,
}

#[pymethods]
impl PyMesh {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        model_from_json(text).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        load_model(path).map(|inner| Self { inner }).map_err(err)
    }

    /// Random block with the named machining features.
    #[staticmethod]
    fn synthetic(seed: u64, features: Vec<String>) -> PyResult<Self> {
        let types = features
            .iter()
            .map(|f| {
                FeatureType::ALL
                    .into_iter()
                    .find(|t| t.name() == f)
                    .ok_or_else(|| PyValueError::new_err(format!("unknown feature type '{f}'")))
            })
            .collect::<PyResult<Vec<_>>>()?;
        generate_model(&format!("synthetic_{seed}"), &types, seed)
            .map(|inner| Self { inner })
            .map_err(err)
    }

    fn to_json(&self) -> String {
        model_to_json(&self.inner)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_model(&self.inner, path).map_err(err)
    }

    #[getter]
    fn face_count(&self) -> usize {
        self.inner.face_count()
    }

    #[getter]
    fn triangle_count(&self) -> usize {
        self.inner.triangle_count()
    }

    /// `[(feature_type, [face ids]), ...]` in label order.
    fn labels<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let list: Vec<(String, BTreeSet<usize>)> = self
            .inner
            .labels
            .iter()
            .map(|l| (l.feature_type.clone(), l.face_ids.clone()))
            .collect();
        to_py(py, &list)
    }

    fn tokens<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &tokenize_model(&self.inner).map_err(err)?)
    }

    /// Applies a structured command to `face_ids` (one list, or one per
    /// command entry). Returns the edited mesh and the API-call log.
    fn apply<'py>(
        &self,
        py: Python<'py>,
        command: &Bound<'py, PyAny>,
        face_ids: &Bound<'py, PyAny>,
    ) -> PyResult<(PyMesh, Bound<'py, PyAny>)> {
        let command = from_py(command)?;
        let targets: Vec<BTreeSet<usize>> = match face_ids.extract::<Vec<Vec<usize>>>() {
            Ok(sets) => sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            Err(_) => vec![face_ids.extract::<Vec<usize>>()?.into_iter().collect()],
        };
        let ops = compile_value(&command, &targets).map_err(err)?;
        let result = apply_ops(&self.inner, &ops).map_err(err)?;
        let calls = to_py(py, &result.api_calls)?;
        Ok((PyMesh { inner: result.model }, calls))
    }

    fn replay(&self, calls: &Bound<'_, PyAny>) -> PyResult<PyMesh> {
        let calls: Vec<ApiCall> =
            serde_json::from_value(from_py(calls)?).map_err(|e| PyValueError::new_err(e.to_string()))?;
        replay_api_calls(&self.inner, &calls)
            .map(|inner| PyMesh { inner })
            .map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh('{}', faces={}, triangles={})",
            self.inner.model_id,
            self.inner.face_count(),
            self.inner.triangle_count()
        )
    }
}

/// Text-conditioned face-set generator.
#[pyclass(name = "Model", module = "sdm")]
struct PyModel {
    inner: SdmModel,
}

#[pymethods]
impl PyModel {
    /// Untrained weights; `preset` is "desk" or "full".
    #[new]
    #[pyo3(signature = (seed = 0, preset = "desk"))]
    fn new(seed: u64, preset: &str) -> PyResult<Self> {
        let config = match preset {
            "desk" => ModelConfig::desk(),
            "full" => ModelConfig::default(),
            other => return Err(PyValueError::new_err(format!("unknown preset '{other}'"))),
        };
        SdmModel::new(config, seed).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        SdmModel::load(path.as_ref()).map(|inner| Self { inner }).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path.as_ref()).map_err(err)
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    /// Greedy decoding from `seed_face_id`; releases the GIL while running.
    fn generate<'py>(
        &self,
        py: Python<'py>,
        mesh: &PyMesh,
        seed_face_id: usize,
        feature_type: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let result = py
            .detach(|| {
                self.inner
                    .generate_feature_faces(&mesh.inner, seed_face_id, feature_type, &TextProvider::Local)
            })
            .map_err(err)?;
        to_py(py, &result)
    }
}

/// Offline grammar parse; returns the full result dict.
#[pyfunction]
fn parse_command<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &parse_with_grammar(text))
}

#[pyfunction]
#[pyo3(signature = (text, version = TEMPLATE_VERSION))]
fn build_prompt(text: &str, version: &str) -> PyResult<String> {
    build_cot_prompt(text, version).map_err(err)
}

#[pyfunction]
fn vocabulary() -> Vec<&'static str> {
    sdm_core::feature::vocabulary_names()
}

#[pymodule]
pub fn sdm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(parse_command, m)?)?;
    m.add_function(wrap_pyfunction!(build_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(vocabulary, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
