//! Python bindings: bundles, segmentation, scoring, the segment index and
//! the evaluation metrics.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use plagdet_core::evaluation::{self, GroundTruth};
use plagdet_core::ingest::{self, bundle_to_json};
use plagdet_core::retrieval::{self, Aggregation, IndexEntry};
use plagdet_core::segmenter::SegmentationConfig;
use plagdet_core::similarity::{self, Ablation};
use plagdet_core::synth::{generate_planted_corpus as generate, PlantedConfig};

create_exception!(plagdet, PlagdetError, PyException);

fn err<E: Into<plagdet_core::Error>>(e: E) -> PyErr {
    PlagdetError::new_err(e.into().to_string())
}

fn variant(name: &str) -> PyResult<Aggregation> {
    name.parse().map_err(PyValueError::new_err)
}

fn seg_config(segment_bars: usize) -> SegmentationConfig {
    SegmentationConfig { segment_bars, ..SegmentationConfig::default() }
}

#[pyclass(frozen, from_py_object, module = "plagdet")]
#[derive(Clone)]
struct Bundle {
    inner: ingest::TrackBundle,
}

#[pymethods]
impl Bundle {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Bundle { inner: ingest::load_bundle(&path).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (json, base_dir=None))]
    fn from_json(json: &str, base_dir: Option<PathBuf>) -> PyResult<Self> {
        Ok(Bundle { inner: ingest::load_bundle_str(json, base_dir.as_deref()).map_err(err)? })
    }

    fn to_json(&self) -> String {
        bundle_to_json(&self.inner)
    }

    #[getter]
    fn track_id(&self) -> &str {
        &self.inner.track_id
    }

    #[getter]
    fn title(&self) -> &str {
        &self.inner.title
    }

    #[getter]
    fn note_count(&self) -> usize {
        self.inner.note_count()
    }

    #[getter]
    fn bpm(&self) -> f64 {
        self.inner.annotation.bpm
    }

    fn __repr__(&self) -> String {
        format!("Bundle({:?}, notes={})", self.inner.track_id, self.inner.note_count())
    }
}

#[pyclass(skip_from_py_object, module = "plagdet", get_all, set_all)]
#[derive(Clone)]
struct SimilarityParams {
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta: f64,
    w_r: f64,
    w_q: f64,
    fold_tempo_octaves: bool,
    count_octaves: bool,
}

impl SimilarityParams {
    fn to_core(&self) -> PyResult<similarity::SimilarityParams> {
        let p = similarity::SimilarityParams {
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            delta: self.delta,
            w_r: self.w_r,
            w_q: self.w_q,
            fold_tempo_octaves: self.fold_tempo_octaves,
            count_octaves: self.count_octaves,
            ..similarity::SimilarityParams::default()
        };
        p.validate().map_err(err)?;
        Ok(p)
    }
}

fn core_params(params: Option<&SimilarityParams>, ablate: &str) -> PyResult<similarity::SimilarityParams> {
    let base = match params {
        Some(p) => p.to_core()?,
        None => similarity::SimilarityParams::default(),
    };
    let ablation: Ablation = ablate.parse().map_err(err)?;
    Ok(base.ablated(ablation))
}

#[pymethods]
impl SimilarityParams {
    #[new]
    #[pyo3(signature = (alpha=1.0, beta=1.0, gamma=1.0, delta=0.5, w_r=0.85, w_q=0.15, fold_tempo_octaves=false, count_octaves=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
        w_r: f64,
        w_q: f64,
        fold_tempo_octaves: bool,
        count_octaves: bool,
    ) -> PyResult<Self> {
        let p = SimilarityParams { alpha, beta, gamma, delta, w_r, w_q, fold_tempo_octaves, count_octaves };
        p.to_core()?;
        Ok(p)
    }

    fn max_raw(&self) -> PyResult<f64> {
        Ok(self.to_core()?.max_raw())
    }

    fn __repr__(&self) -> String {
        format!(
            "SimilarityParams(alpha={}, beta={}, gamma={}, delta={}, w_r={}, w_q={})",
            self.alpha, self.beta, self.gamma, self.delta, self.w_r, self.w_q
        )
    }
}

#[pyclass(frozen, skip_from_py_object, module = "plagdet", get_all)]
#[derive(Clone)]
struct ScoreBreakdown {
    p: f64,
    m: f64,
    r: f64,
    b: f64,
    r_n: f64,
    q: f64,
    c: f64,
    best_shift: u8,
    raw: f64,
    normalized: f64,
}

impl From<similarity::ScoreBreakdown> for ScoreBreakdown {
    fn from(s: similarity::ScoreBreakdown) -> Self {
        ScoreBreakdown {
            p: s.p,
            m: s.m,
            r: s.r,
            b: s.b,
            r_n: s.r_n,
            q: s.q,
            c: s.c,
            best_shift: s.best_shift,
            raw: s.raw,
            normalized: s.normalized,
        }
    }
}

#[pymethods]
impl ScoreBreakdown {
    fn __repr__(&self) -> String {
        format!("ScoreBreakdown(normalized={:.4}, raw={:.6}, p={:.4}, r={:.4}, c={:.4})", self.normalized, self.raw, self.p, self.r, self.c)
    }
}

/// A segment with its extracted features.
#[pyclass(frozen, skip_from_py_object, module = "plagdet")]
#[derive(Clone)]
struct Segment {
    inner: IndexEntry,
}

#[pymethods]
impl Segment {
    #[getter]
    fn track_id(&self) -> &str {
        &self.inner.segment.track_id
    }

    #[getter]
    fn start_bar(&self) -> usize {
        self.inner.segment.start_bar
    }

    #[getter]
    fn length_bars(&self) -> usize {
        self.inner.segment.length_bars
    }

    #[getter]
    fn start_s(&self) -> f64 {
        self.inner.segment.start_s
    }

    #[getter]
    fn end_s(&self) -> f64 {
        self.inner.segment.end_s()
    }

    #[getter]
    fn label(&self) -> &str {
        &self.inner.segment.structure_label
    }

    #[getter]
    fn pitch_classes(&self) -> Vec<u8> {
        self.inner.features.pitch_classes()
    }

    #[getter]
    fn onsets(&self) -> Vec<u8> {
        self.inner.features.onsets()
    }

    fn describe(&self) -> String {
        self.inner.segment.describe()
    }

    fn __repr__(&self) -> String {
        format!("Segment({:?}, {})", self.inner.segment.track_id, self.inner.segment.describe())
    }
}

#[pyfunction]
#[pyo3(signature = (bundle, params=None, segment_bars=4))]
fn segment_bundle(bundle: &Bundle, params: Option<&SimilarityParams>, segment_bars: usize) -> PyResult<Vec<Segment>> {
    let params = core_params(params, "none")?;
    let song = retrieval::analyze_bundle(&bundle.inner, &params, &seg_config(segment_bars)).map_err(err)?;
    Ok(song.entries.into_iter().map(|inner| Segment { inner }).collect())
}

#[pyfunction]
#[pyo3(signature = (a, b, params=None, ablate="none"))]
fn combined_score(a: &Segment, b: &Segment, params: Option<&SimilarityParams>, ablate: &str) -> PyResult<ScoreBreakdown> {
    let params = core_params(params, ablate)?;
    Ok(similarity::combined_score(&a.inner.features, &b.inner.features, &params).into())
}

#[pyclass(frozen, skip_from_py_object, module = "plagdet", get_all)]
#[derive(Clone)]
struct SegmentMatch {
    query_track: String,
    query_start_bar: usize,
    query_start_s: f64,
    source_track: String,
    source_start_bar: usize,
    source_start_s: f64,
    score: ScoreBreakdown,
}

impl From<retrieval::SegmentMatch> for SegmentMatch {
    fn from(m: retrieval::SegmentMatch) -> Self {
        SegmentMatch {
            query_track: m.query.track_id,
            query_start_bar: m.query.start_bar,
            query_start_s: m.query.start_s,
            source_track: m.source.track_id,
            source_start_bar: m.source.start_bar,
            source_start_s: m.source.start_s,
            score: m.score.into(),
        }
    }
}

#[pymethods]
impl SegmentMatch {
    fn __repr__(&self) -> String {
        format!(
            "SegmentMatch({}@{} -> {}@{}, {:.2})",
            self.query_track, self.query_start_bar, self.source_track, self.source_start_bar, self.score.normalized
        )
    }
}

#[pyclass(frozen, module = "plagdet")]
struct Index {
    inner: retrieval::SegmentIndex,
}

#[pymethods]
impl Index {
    #[staticmethod]
    #[pyo3(signature = (bundles, params=None, segment_bars=4))]
    fn build(py: Python<'_>, bundles: Vec<Bundle>, params: Option<&SimilarityParams>, segment_bars: usize) -> PyResult<Self> {
        let params = core_params(params, "none")?;
        let bundles: Vec<ingest::TrackBundle> = bundles.into_iter().map(|b| b.inner).collect();
        let inner = py
            .detach(|| retrieval::SegmentIndex::build(&bundles, &params, &seg_config(segment_bars)))
            .map_err(err)?;
        Ok(Index { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Index { inner: retrieval::load_index(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        retrieval::save_index(&self.inner, &path).map_err(err)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, pyo3::types::PyBytes> {
        pyo3::types::PyBytes::new(py, &retrieval::index_to_bytes(&self.inner))
    }

    fn tracks(&self) -> Vec<String> {
        self.inner.tracks().keys().cloned().collect()
    }

    fn segments(&self, track_id: &str) -> Vec<Segment> {
        self.inner.track_entries(track_id).iter().cloned().map(|inner| Segment { inner }).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.entries().len()
    }

    #[pyo3(signature = (segment, k=5, ablate="none"))]
    fn query(&self, py: Python<'_>, segment: &Segment, k: usize, ablate: &str) -> PyResult<Vec<SegmentMatch>> {
        let params = self.inner.params().ablated(ablate.parse().map_err(err)?);
        let matches = py
            .detach(|| retrieval::query_segment(&self.inner, &segment.inner.segment, &segment.inner.features, k, &params))
            .map_err(err)?;
        Ok(matches.into_iter().map(Into::into).collect())
    }

    /// `[(track_id, score), ...]` for an indexed track, best first.
    #[pyo3(signature = (track_id, variant="top20", ablate="none"))]
    fn rank_songs(&self, py: Python<'_>, track_id: &str, variant: &str, ablate: &str) -> PyResult<Vec<(String, f64)>> {
        let params = self.inner.params().ablated(ablate.parse().map_err(err)?);
        let aggregation = self::variant(variant)?;
        let ranking =
            py.detach(|| retrieval::song_ranking(&self.inner, track_id, &params, aggregation)).map_err(err)?;
        Ok(ranking.ranked.into_iter().map(|r| (r.track_id, r.score)).collect())
    }

    /// Song-level evaluation report as JSON text.
    #[pyo3(signature = (pairs, variant="top20", conditions=None))]
    fn evaluate(&self, py: Python<'_>, pairs: Vec<SmpPair>, variant: &str, conditions: Option<Vec<String>>) -> PyResult<String> {
        let aggregation = self::variant(variant)?;
        let conditions: Vec<Ablation> = match conditions {
            Some(names) => names.iter().map(|n| n.parse().map_err(err)).collect::<PyResult<_>>()?,
            None => Ablation::ALL.to_vec(),
        };
        let truth = GroundTruth::from_pairs(pairs.into_iter().map(|p| p.inner).collect());
        let params = *self.inner.params();
        let report = py
            .detach(|| evaluation::evaluate_song_level(&self.inner, &truth, &params, aggregation, &conditions))
            .map_err(err)?;
        Ok(report.to_json())
    }
}

#[pyclass(frozen, from_py_object, module = "plagdet")]
#[derive(Clone)]
struct SmpPair {
    inner: ingest::SmpPair,
}

#[pymethods]
impl SmpPair {
    #[getter]
    fn original_id(&self) -> &str {
        &self.inner.original_id
    }

    #[getter]
    fn comparison_id(&self) -> &str {
        &self.inner.comparison_id
    }

    #[getter]
    fn relation(&self) -> String {
        serde_json::to_value(self.inner.relation).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
    }

    #[getter]
    fn original_times_s(&self) -> Vec<f64> {
        self.inner.original_times_s.clone()
    }

    #[getter]
    fn comparison_times_s(&self) -> Vec<f64> {
        self.inner.comparison_times_s.clone()
    }

    #[getter]
    fn pair_no(&self) -> i64 {
        self.inner.pair_no
    }

    fn __repr__(&self) -> String {
        format!("SmpPair({:?} -> {:?}, no={})", self.inner.original_id, self.inner.comparison_id, self.inner.pair_no)
    }
}

/// Reads a CSV or JSON manifest document.
#[pyfunction]
fn load_smp_manifest(document: &str) -> PyResult<Vec<SmpPair>> {
    Ok(ingest::load_smp_manifest(document).map_err(err)?.into_iter().map(|inner| SmpPair { inner }).collect())
}

/// `(pitch, onset_s, duration_s, velocity)`
type NoteTuple = (u8, f64, f64, u8);

/// `[(instrument, [note, ...]), ...]`, one entry per MIDI track.
#[pyfunction]
fn parse_midi(data: &[u8]) -> PyResult<Vec<(String, Vec<NoteTuple>)>> {
    let tracks = ingest::parse_standard_midi(data).map_err(err)?;
    Ok(tracks
        .into_iter()
        .map(|t| {
            let notes = t.notes.iter().map(|n| (n.pitch, n.onset_s, n.duration_s, n.velocity)).collect();
            (t.instrument.as_str().to_string(), notes)
        })
        .collect())
}

#[pyfunction]
fn precision_at_k(flags: Vec<bool>, k: usize) -> PyResult<f64> {
    Ok(evaluation::precision_from_flags(&flags, k).map_err(err)?.value)
}

/// Ranks are 1-based; `None` means the counterpart was not retrieved.
#[pyfunction]
fn top_average_index(ranks: Vec<Option<usize>>, corpus_size: usize) -> PyResult<f64> {
    evaluation::average_index(&ranks, corpus_size).map_err(err)
}

#[pyfunction]
fn top_n_accuracy(ranks: Vec<Option<usize>>, n: usize) -> PyResult<f64> {
    evaluation::accuracy_at(&ranks, n).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (seed=7, songs=20, plants=5, bars=32))]
fn generate_planted_corpus(seed: u64, songs: usize, plants: usize, bars: usize) -> (Vec<Bundle>, Vec<SmpPair>) {
    let corpus = generate(&PlantedConfig { seed, songs, plants, bars, ..PlantedConfig::default() });
    (
        corpus.bundles.into_iter().map(|inner| Bundle { inner }).collect(),
        corpus.pairs.into_iter().map(|inner| SmpPair { inner }).collect(),
    )
}

#[pymodule]
fn plagdet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PlagdetError", m.py().get_type::<PlagdetError>())?;
    m.add_class::<Bundle>()?;
    m.add_class::<SimilarityParams>()?;
    m.add_class::<ScoreBreakdown>()?;
    m.add_class::<Segment>()?;
    m.add_class::<SegmentMatch>()?;
    m.add_class::<Index>()?;
    m.add_class::<SmpPair>()?;
    m.add_function(wrap_pyfunction!(segment_bundle, m)?)?;
    m.add_function(wrap_pyfunction!(combined_score, m)?)?;
    m.add_function(wrap_pyfunction!(load_smp_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(parse_midi, m)?)?;
    m.add_function(wrap_pyfunction!(precision_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(top_average_index, m)?)?;
    m.add_function(wrap_pyfunction!(top_n_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(generate_planted_corpus, m)?)?;
    Ok(())
}
