//! Python bindings. Texts cross the boundary as plain strings and are
//! tokenized on the Rust side with the same rules the CLI uses.

use std::collections::HashSet;
use std::path::PathBuf;

use dialdistill::bm25::{self, Bm25Params};
use dialdistill::corpus::{self, FilterConfig, PairedDataset, Token, UnpairedDataset};
use dialdistill::distiller::{self, DistillConfig, DistillIndexes};
use dialdistill::matcher::{self, MatchHyper, DEFAULT_DIM};
use dialdistill::model::{self, LmHyper, LmShape};
use dialdistill::{metrics, Error, ErrorClass};
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(dialdistill, DistillError, PyException);

fn to_py(e: Error) -> PyErr {
    match e.class() {
        ErrorClass::Usage => PyValueError::new_err(e.to_string()),
        ErrorClass::Numeric => PyArithmeticError::new_err(e.to_string()),
        ErrorClass::Data => DistillError::new_err(e.to_string()),
    }
}

fn paired(pairs: Vec<(String, String)>) -> PairedDataset {
    PairedDataset::from_pairs(pairs, &FilterConfig::default()).0
}

fn token_lists(texts: &[String]) -> Vec<Vec<Token>> {
    texts.iter().map(|t| corpus::split_tokens(t)).collect()
}

/// Lowercased tokens; every CJK character is its own token.
#[pyfunction]
fn tokenize(text: &str) -> PyResult<Vec<String>> {
    corpus::tokenize(text).map_err(to_py)
}

/// Returns `(tokens, None)` for a kept sentence or `(None, reason)`.
#[pyfunction]
#[pyo3(signature = (text, min_tokens=2, max_tokens=128, min_content_ratio=0.7, max_token_run=8))]
fn heuristic_filter(
    text: &str,
    min_tokens: usize,
    max_tokens: usize,
    min_content_ratio: f64,
    max_token_run: usize,
) -> (Option<Vec<String>>, Option<String>) {
    let cfg = FilterConfig {
        min_tokens,
        max_tokens,
        min_content_ratio,
        max_token_run,
    };
    match corpus::heuristic_filter(text, &cfg) {
        Ok(tokens) => (Some(tokens), None),
        Err(reason) => (None, Some(reason.to_string())),
    }
}

#[pyclass(name = "Bm25Index", frozen)]
struct PyBm25Index {
    inner: bm25::Bm25Index,
}

#[pymethods]
impl PyBm25Index {
    #[new]
    #[pyo3(signature = (docs, k1=1.2, b=0.75))]
    fn new(docs: Vec<String>, k1: f64, b: f64) -> PyResult<Self> {
        let inner = bm25::Bm25Index::build(&token_lists(&docs), Bm25Params { k1, b }).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// `(doc_id, score)` pairs, best first.
    #[pyo3(signature = (query, k, exclude=None))]
    fn top_k(&self, query: &str, k: usize, exclude: Option<Vec<usize>>) -> Vec<(usize, f64)> {
        let exclude: HashSet<usize> = exclude.unwrap_or_default().into_iter().collect();
        self.inner
            .top_k(&corpus::split_tokens(query), k, &exclude)
            .into_iter()
            .map(|h| (h.doc_id, h.score))
            .collect()
    }

    fn score(&self, query: &str, doc_id: usize) -> PyResult<f64> {
        self.inner.score(&corpus::split_tokens(query), doc_id).map_err(to_py)
    }

    #[getter]
    fn doc_count(&self) -> usize {
        self.inner.doc_count()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let mut buf = Vec::new();
        self.inner.write_snapshot(&mut buf).map_err(|e| to_py(Error::io(&path, e)))?;
        std::fs::write(&path, buf).map_err(|e| to_py(Error::io(&path, e)))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let bytes = std::fs::read(&path).map_err(|e| to_py(Error::io(&path, e)))?;
        let inner = bm25::Bm25Index::read_snapshot(bytes.as_slice()).map_err(to_py)?;
        Ok(Self { inner })
    }
}

#[pyclass(name = "MatchScorer", frozen)]
struct PyMatchScorer {
    inner: matcher::MatchScorer,
}

#[pymethods]
impl PyMatchScorer {
    /// Trains on `(post, response)` pairs with sampled negatives.
    #[staticmethod]
    #[pyo3(signature = (pairs, neg_per_pos=1, epochs=5, lr=0.1, l2=1e-6, seed=0))]
    fn train(
        pairs: Vec<(String, String)>,
        neg_per_pos: usize,
        epochs: usize,
        lr: f64,
        l2: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let hyper = MatchHyper { epochs, lr, l2, seed };
        let (m, _) = model::train_match_teacher(&paired(pairs), neg_per_pos, hyper, DEFAULT_DIM).map_err(to_py)?;
        Ok(Self { inner: m.scorer })
    }

    fn score(&self, post: &str, response: &str) -> PyResult<f64> {
        let p = corpus::Sentence::new(0, post).map_err(to_py)?;
        let r = corpus::Sentence::new(0, response).map_err(to_py)?;
        Ok(self.inner.score(&p, &r))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path, "teacher").map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: matcher::MatchScorer::load(&path).map_err(to_py)?.0,
        })
    }
}

/// Builds up to `k` augmented pairs from `unpaired`; returns a list of dicts.
#[pyfunction]
#[pyo3(signature = (paired_pairs, unpaired, scorer, k=1000, eta=0.9, n=5, m=5, seed=0))]
#[allow(clippy::too_many_arguments)]
fn distill<'py>(
    py: Python<'py>,
    paired_pairs: Vec<(String, String)>,
    unpaired: Vec<String>,
    scorer: &PyMatchScorer,
    k: usize,
    eta: f64,
    n: usize,
    m: usize,
    seed: u64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let dp = paired(paired_pairs);
    let du = UnpairedDataset::from_texts(unpaired, &FilterConfig::default()).0;
    let idx = DistillIndexes::build(&dp, &du, Bm25Params::default()).map_err(to_py)?;
    let cfg = DistillConfig { k, eta, n, m, seed, ..Default::default() };
    let out = py
        .detach(|| distiller::distill(&dp, &du, &idx, &scorer.inner, &cfg))
        .map_err(to_py)?;
    out.pairs
        .iter()
        .map(|p| {
            let d = PyDict::new(py);
            d.set_item("post", &p.post.raw)?;
            d.set_item("response", &p.response.raw)?;
            d.set_item("score", p.score)?;
            d.set_item("anchor_post", &p.anchor.post.raw)?;
            d.set_item("anchor_response", &p.anchor.response.raw)?;
            Ok(d)
        })
        .collect()
}

#[pyclass(name = "WindowLm", frozen)]
struct PyWindowLm {
    inner: model::WindowLm,
}

#[pymethods]
impl PyWindowLm {
    #[staticmethod]
    #[pyo3(signature = (pairs, epochs=10, lr=0.05, dim=32, hidden=64, window=8, seed=0))]
    fn train(
        pairs: Vec<(String, String)>,
        epochs: usize,
        lr: f64,
        dim: usize,
        hidden: usize,
        window: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let dp = paired(pairs);
        let hyper = LmHyper {
            epochs,
            lr,
            seed,
            shape: LmShape { dim, hidden, window },
        };
        let vocab = model::build_vocab(&dp, &PairedDataset::default());
        let (inner, _) = model::train_gen_teacher(&dp, vocab, &hyper).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn perplexity(&self, pairs: Vec<(String, String)>) -> PyResult<f64> {
        metrics::perplexity(&self.inner, &paired(pairs).items).map_err(to_py)
    }

    #[pyo3(signature = (post, max_len=20))]
    fn generate(&self, post: &str, max_len: usize) -> String {
        self.inner.generate(&corpus::split_tokens(post), max_len).join(" ")
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: model::WindowLm::load(&path).map_err(to_py)?,
        })
    }
}

#[pyfunction]
fn distinct_n(texts: Vec<String>, n: usize) -> PyResult<f64> {
    Ok(metrics::distinct_n(&token_lists(&texts), n).map_err(to_py)?.value)
}

#[pyfunction]
fn novelty_n(texts: Vec<String>, reference: Vec<String>, n: usize) -> PyResult<f64> {
    Ok(metrics::novelty_n(&token_lists(&texts), &token_lists(&reference), n).map_err(to_py)?.value)
}

#[pyfunction]
fn bleu_n(hypotheses: Vec<String>, references: Vec<String>, n: usize) -> PyResult<f64> {
    Ok(metrics::bleu_n(&token_lists(&hypotheses), &token_lists(&references), n).map_err(to_py)?.value)
}

/// `(MAP, R10@1, R10@2, R10@5)` for the 1-based ranks of the references.
#[pyfunction]
fn ranking_metrics(ranks: Vec<usize>) -> (f64, f64, f64, f64) {
    let m = metrics::ranking_metrics_from_ranks(&ranks);
    (m.map, m.r10_at_1, m.r10_at_2, m.r10_at_5)
}

/// Runs the command-line front end, e.g. `run_cli(["pipeline", "--seed", "1"])`,
/// and returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("dialdistill".to_string()).chain(args).collect();
    py.detach(|| dialdistill::cli::run(argv))
}

#[pymodule]
#[pyo3(name = "dialdistill")]
fn dialdistill_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DistillError", m.py().get_type::<DistillError>())?;
    m.add_class::<PyBm25Index>()?;
    m.add_class::<PyMatchScorer>()?;
    m.add_class::<PyWindowLm>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(heuristic_filter, m)?)?;
    m.add_function(wrap_pyfunction!(distill, m)?)?;
    m.add_function(wrap_pyfunction!(distinct_n, m)?)?;
    m.add_function(wrap_pyfunction!(novelty_n, m)?)?;
    m.add_function(wrap_pyfunction!(bleu_n, m)?)?;
    m.add_function(wrap_pyfunction!(ranking_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
