//! Python bindings: orthography, syllable analysis, phonological pair
//! features, collision and error diagnostics, caption metrics and the
//! graph-fusion kernel.

use std::collections::HashMap;
use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vitext::dataset::{load_with_ocr, LoadOptions, OcrToken};
use vitext::diagnostics;
use vitext::fusion::{self, GraphConfig, HashEmbedding, Instance, Loss};
use vitext::metrics::{self, CiderScale, ScoreOptions, Tokenizer};
use vitext::{orthography, phono, syllable};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn tokenizer(name: &str) -> PyResult<Tokenizer> {
    name.parse().map_err(value_error)
}

/// A syllable split into onset, medial, nucleus and coda plus its tone.
#[pyclass(frozen, get_all, module = "vitext_py")]
struct Syllable {
    onset: String,
    medial: String,
    nucleus: String,
    coda: String,
    tone: String,
    tone_class: String,
    spelling: String,
}

#[pymethods]
impl Syllable {
    fn __repr__(&self) -> String {
        format!(
            "Syllable({:?}, onset={:?}, medial={:?}, nucleus={:?}, coda={:?}, tone={:?})",
            self.spelling, self.onset, self.medial, self.nucleus, self.coda, self.tone
        )
    }
}

/// Decomposes one written syllable; raises ValueError if it is not Vietnamese.
#[pyfunction]
fn analyze(token: &str) -> PyResult<Syllable> {
    let s = syllable::analyze(token).map_err(value_error)?;
    Ok(Syllable {
        spelling: s.render().composed(),
        tone: s.tone.name().to_string(),
        tone_class: s.tone.class().name().to_string(),
        onset: s.parts.onset,
        medial: s.parts.medial,
        nucleus: s.parts.nucleus,
        coda: s.parts.coda,
    })
}

#[pyfunction]
fn is_vietnamese(token: &str) -> bool {
    syllable::is_vietnamese(token)
}

/// Canonical decomposed form.
#[pyfunction]
fn normalize(text: &str) -> String {
    orthography::normalize(text).into_string()
}

/// Every diacritic removed, with đ read as d.
#[pyfunction]
fn strip_diacritics(text: &str) -> String {
    orthography::strip_diacritics(&orthography::normalize(text))
}

#[pyfunction]
fn tone_stripped(text: &str) -> PyResult<String> {
    orthography::tone_stripped(text).map_err(value_error)
}

#[pyfunction]
fn feature_names() -> Vec<&'static str> {
    phono::FEATURE_NAMES.to_vec()
}

/// The eight binary pair features of two tokens.
#[pyfunction]
fn pair_features(a: &str, b: &str) -> Vec<u8> {
    phono::extract_pair(a, b).to_array().to_vec()
}

/// N × N × 8 nested lists of pair features.
#[pyfunction]
fn phono_tensor(tokens: Vec<String>) -> Vec<Vec<Vec<u8>>> {
    let t = phono::build_tensor(&tokens);
    (0..tokens.len())
        .map(|i| (0..tokens.len()).map(|j| t.get(i, j).to_array().to_vec()).collect())
        .collect()
}

/// Error-type codes (T1..T5) separating an OCR reading from the reference.
#[pyfunction]
fn classify_error(reference: &str, ocr: &str) -> PyResult<Vec<&'static str>> {
    let label = diagnostics::classify_error(reference, ocr).map_err(value_error)?;
    Ok(label.types.iter().map(|t| t.code()).collect())
}

/// Collision rate of a word-frequency vocabulary, with the colliding groups
/// as `(base, members, danger_score)` triples.
#[pyfunction]
fn collision_rate(vocabulary: HashMap<String, u64>) -> PyResult<(f64, Vec<(String, Vec<String>, u64)>)> {
    let report = diagnostics::collision_rate(vocabulary).map_err(value_error)?;
    let groups = report
        .groups
        .into_iter()
        .map(|g| (g.base, g.members, g.danger_score))
        .collect();
    Ok((report.rate, groups))
}

#[pyfunction]
#[pyo3(signature = (text, tokenizer = "syllable"))]
fn tokenize(text: &str, tokenizer: &str) -> PyResult<Vec<String>> {
    Ok(self::tokenizer(tokenizer)?.tokenize(text))
}

#[pyfunction]
#[pyo3(signature = (candidates, references, n = 4, tokenizer = "syllable"))]
fn bleu(candidates: Vec<String>, references: Vec<Vec<String>>, n: usize, tokenizer: &str) -> PyResult<f64> {
    metrics::bleu(&candidates, &references, n, self::tokenizer(tokenizer)?).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (candidates, references, tokenizer = "syllable", scale = "x10"))]
fn cider(candidates: Vec<String>, references: Vec<Vec<String>>, tokenizer: &str, scale: &str) -> PyResult<f64> {
    let scale: CiderScale = scale.parse().map_err(value_error)?;
    metrics::cider(&candidates, &references, self::tokenizer(tokenizer)?, scale).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (candidates, references, tokenizer = "syllable", beta = metrics::DEFAULT_BETA))]
fn rouge_l(candidates: Vec<String>, references: Vec<Vec<String>>, tokenizer: &str, beta: f64) -> PyResult<f64> {
    metrics::rouge_l(&candidates, &references, self::tokenizer(tokenizer)?, beta).map_err(value_error)
}

/// BLEU-1, BLEU-4, ROUGE-L and CIDEr (×10) keyed by metric name.
#[pyfunction]
#[pyo3(signature = (candidates, references, tokenizer = "syllable"))]
fn score_corpus(candidates: Vec<String>, references: Vec<Vec<String>>, tokenizer: &str) -> PyResult<HashMap<String, f64>> {
    let r = metrics::score_corpus(&candidates, &references, self::tokenizer(tokenizer)?, ScoreOptions::default())
        .map_err(value_error)?;
    Ok(metrics::ScoreReport::METRICS
        .iter()
        .zip(r.values())
        .map(|(k, v)| (k.to_string(), v))
        .collect())
}

/// Image ids, captions and OCR token texts of a dataset file.
#[pyfunction]
#[pyo3(signature = (path, ocr = None, strict = false))]
fn load_dataset(path: &str, ocr: Option<&str>, strict: bool) -> PyResult<Vec<(String, Vec<String>, Vec<String>)>> {
    let records = load_with_ocr(Path::new(path), ocr.map(Path::new), LoadOptions { strict }).map_err(value_error)?;
    Ok(records
        .into_iter()
        .map(|r| {
            let captions = r.captions.into_iter().map(|c| c.caption).collect();
            let ocr = r.ocr_tokens.into_iter().map(|t| t.text).collect();
            (r.image_id, captions, ocr)
        })
        .collect())
}

/// `[dx/w_i, dy/h_i, ln(w_j/w_i), ln(h_j/h_i)]` for boxes given as
/// `(cx, cy, w, h)`.
#[pyfunction]
fn spatial_features(i: (f64, f64, f64, f64), j: (f64, f64, f64, f64)) -> PyResult<Vec<f64>> {
    let b = |(cx, cy, w, h)| fusion::BoundingBox::new(cx, cy, w, h).map_err(value_error);
    Ok(fusion::spatial_features(&b(i)?, &b(j)?).map_err(value_error)?.to_vec())
}

/// A randomly initialised graph-fusion model. Tokens are laid out as a single
/// text row; visual regions and missing stream features are seeded.
#[pyclass(module = "vitext_py")]
struct FusionModel {
    config: GraphConfig,
    model: fusion::FusionModel,
    seed: u64,
}

impl FusionModel {
    fn instance(&self, tokens: &[String], confidences: Option<Vec<f64>>, regions: usize) -> PyResult<Instance> {
        let confidences = confidences.unwrap_or_else(|| vec![1.0; tokens.len()]);
        if confidences.len() != tokens.len() {
            return Err(PyValueError::new_err("one confidence per token is required"));
        }
        let ocr: Vec<OcrToken> = tokens
            .iter()
            .zip(fusion::text_row(tokens.len()))
            .zip(confidences)
            .map(|((t, b), c)| OcrToken::new(t, b, c))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let boxes = fusion::random_regions(&mut rng, regions);
        let provider = HashEmbedding::new(self.config.linguistic_dim, self.seed);
        Instance::from_ocr(&ocr, &boxes, &self.config, &provider, self.seed).map_err(value_error)
    }
}

fn rows(a: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

#[pymethods]
impl FusionModel {
    /// `config` is a TOML document; the compact default is used when omitted.
    #[new]
    #[pyo3(signature = (seed = 0, config = None))]
    fn new(seed: u64, config: Option<&str>) -> PyResult<Self> {
        let config = match config {
            Some(text) => GraphConfig::from_toml_str(text).map_err(value_error)?,
            None => GraphConfig::compact(),
        };
        let model = fusion::FusionModel::seeded(&config, seed).map_err(value_error)?;
        Ok(FusionModel { config, model, seed })
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.model.parameter_count()
    }

    #[getter]
    fn config(&self) -> String {
        self.config.to_toml_string()
    }

    /// Returns the text and visual node states after the last layer.
    #[pyo3(signature = (tokens, confidences = None, regions = 3))]
    fn forward(&self, tokens: Vec<String>, confidences: Option<Vec<f64>>, regions: usize) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let trace = self.model.forward(&self.instance(&tokens, confidences, regions)?).map_err(value_error)?;
        Ok((rows(&trace.t_out), rows(&trace.v_out)))
    }

    /// Largest relative error between backpropagated and finite-difference
    /// gradients of a seeded linear loss, with the worst parameter's name.
    #[pyo3(signature = (tokens, regions = 3))]
    fn gradient_check(&self, tokens: Vec<String>, regions: usize) -> PyResult<(f64, String)> {
        let instance = self.instance(&tokens, None, regions)?;
        let loss = Loss::seeded_linear(tokens.len(), regions, self.config.model_dim, self.seed);
        let r = fusion::gradient_check(&self.model, &instance, &loss).map_err(value_error)?;
        Ok((r.max_relative_error, r.worst_parameter))
    }
}

#[pymodule]
fn vitext_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Syllable>()?;
    m.add_class::<FusionModel>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(is_vietnamese, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(strip_diacritics, m)?)?;
    m.add_function(wrap_pyfunction!(tone_stripped, m)?)?;
    m.add_function(wrap_pyfunction!(feature_names, m)?)?;
    m.add_function(wrap_pyfunction!(pair_features, m)?)?;
    m.add_function(wrap_pyfunction!(phono_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(classify_error, m)?)?;
    m.add_function(wrap_pyfunction!(collision_rate, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(cider, m)?)?;
    m.add_function(wrap_pyfunction!(rouge_l, m)?)?;
    m.add_function(wrap_pyfunction!(score_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(spatial_features, m)?)?;
    Ok(())
}
