//! C interface to `biaspipe`.
//!
//! Every fallible function returns a [`BpStatus`]; on failure the message is
//! available from [`bp_last_error`] on the same thread. Objects are opaque
//! handles released with their matching `*_free`. Strings returned through
//! out-parameters are owned by the caller and released with
//! [`bp_string_free`].

use biaspipe::btm::{self, BitermConfig, BitermModel};
use biaspipe::corpus::{Corpus, PreprocessRules, TokenizedCorpus};
use biaspipe::distribution::AssignmentMode;
use biaspipe::lca::{self, LatentClassModel, RawSurvey, SurveyDataset};
use biaspipe::pipeline::{self, PipelineConfig, RunOptions};
use biaspipe::sentiment::{self, ConfusionMatrix, Ratio};
use biaspipe::tune::CoherenceIndex;
use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Model = 5,
    Pipeline = 6,
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(BpStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<E: ToString>(status: BpStatus) -> impl FnOnce(E) -> Failure {
    move |e| Failure(status, e.to_string())
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Runs `body`, recording any error or panic for [`bp_last_error`].
fn guard(body: impl FnOnce() -> FfiResult<()>) -> BpStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => BpStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {message}"));
            BpStatus::Panic
        }
    }
}

fn null_arg(name: &str) -> Failure {
    Failure(BpStatus::NullArgument, format!("{name} is null"))
}

unsafe fn borrow<'a, T>(p: *const T, name: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| null_arg(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or_else(|| null_arg(name))
}

unsafe fn string(p: *const c_char, name: &str) -> FfiResult<String> {
    if p.is_null() {
        return Err(null_arg(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure(BpStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

fn to_c(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("no interior nul").into_raw()
}

/// Message of the last failure on this thread, or null. Valid until the next
/// failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn bp_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn bp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn bp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Preprocessed corpus.
pub struct BpCorpus {
    tokens: TokenizedCorpus,
}

fn tokenize(corpus: Corpus, min_df: usize) -> FfiResult<*mut BpCorpus> {
    let tokens = TokenizedCorpus::build(&corpus, &PreprocessRules::default(), min_df)
        .map_err(fail(BpStatus::InvalidArgument))?;
    Ok(Box::into_raw(Box::new(BpCorpus { tokens })))
}

/// Loads a JSONL corpus with the default preprocessing.
///
/// # Safety
/// `path` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bp_corpus_load(path: *const c_char, min_df: usize, out_corpus: *mut *mut BpCorpus) -> BpStatus {
    guard(|| {
        let slot = out(out_corpus, "out_corpus")?;
        let path = string(path, "path")?;
        let text = std::fs::read_to_string(&path).map_err(fail(BpStatus::Io))?;
        let corpus = Corpus::from_jsonl(&text).map_err(fail(BpStatus::Parse))?;
        *slot = tokenize(corpus, min_df)?;
        Ok(())
    })
}

/// Parses a JSONL corpus held in memory.
///
/// # Safety
/// `jsonl` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bp_corpus_from_jsonl(
    jsonl: *const c_char,
    min_df: usize,
    out_corpus: *mut *mut BpCorpus,
) -> BpStatus {
    guard(|| {
        let slot = out(out_corpus, "out_corpus")?;
        let corpus = Corpus::from_jsonl(&string(jsonl, "jsonl")?).map_err(fail(BpStatus::Parse))?;
        *slot = tokenize(corpus, min_df)?;
        Ok(())
    })
}

/// # Safety
/// `corpus` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bp_corpus_documents(corpus: *const BpCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.tokens.len())
}

/// # Safety
/// `corpus` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bp_corpus_vocabulary_size(corpus: *const BpCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.tokens.vocabulary.len())
}

/// # Safety
/// `corpus` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn bp_corpus_free(corpus: *mut BpCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Fitted biterm topic model.
pub struct BpBtm {
    model: BitermModel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BpBtmConfig {
    pub topics: usize,
    pub alpha: f64,
    pub beta: f64,
    pub window: usize,
    pub iterations: usize,
    pub seed: u64,
}

/// Library defaults for [`BpBtmConfig`].
#[no_mangle]
pub extern "C" fn bp_btm_default_config() -> BpBtmConfig {
    let d = BitermConfig::default();
    BpBtmConfig {
        topics: d.topics,
        alpha: d.alpha,
        beta: d.beta,
        window: d.window,
        iterations: d.iterations,
        seed: d.seed,
    }
}

/// # Safety
/// Pointers must be valid; `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn bp_btm_fit(
    corpus: *const BpCorpus,
    config: *const BpBtmConfig,
    out_model: *mut *mut BpBtm,
) -> BpStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        let corpus = borrow(corpus, "corpus")?;
        let c = borrow(config, "config")?;
        let config = BitermConfig {
            topics: c.topics,
            alpha: c.alpha,
            beta: c.beta,
            window: c.window,
            iterations: c.iterations,
            seed: c.seed,
        };
        let model = btm::fit(&corpus.tokens, &config).map_err(fail(BpStatus::Model))?;
        *slot = Box::into_raw(Box::new(BpBtm { model }));
        Ok(())
    })
}

/// Top `k` words per topic as CSV (`topic,rank,word,probability`).
///
/// # Safety
/// `model` must be live; `out_csv` writable.
#[no_mangle]
pub unsafe extern "C" fn bp_btm_topic_words_csv(model: *const BpBtm, k: usize, out_csv: *mut *mut c_char) -> BpStatus {
    guard(|| {
        let slot = out(out_csv, "out_csv")?;
        *slot = to_c(borrow(model, "model")?.model.topic_words_csv(k));
        Ok(())
    })
}

/// Mean UMass coherence of the model's top `k` words over `corpus`.
///
/// # Safety
/// Handles must be live; `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn bp_btm_coherence(
    model: *const BpBtm,
    corpus: *const BpCorpus,
    k: usize,
    out_value: *mut f64,
) -> BpStatus {
    guard(|| {
        let slot = out(out_value, "out_value")?;
        let model = borrow(model, "model")?;
        let corpus = borrow(corpus, "corpus")?;
        let topics: Vec<Vec<String>> = model
            .model
            .topic_words(k)
            .into_iter()
            .map(|t| t.into_iter().map(|(w, _)| w).collect())
            .collect();
        *slot = CoherenceIndex::new(&corpus.tokens.tokens)
            .umass(&topics, k)
            .map_err(fail(BpStatus::InvalidArgument))?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn bp_btm_free(model: *mut BpBtm) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Encoded survey responses.
pub struct BpSurvey {
    data: SurveyDataset,
}

/// Loads a survey CSV against its JSON question schema.
///
/// # Safety
/// Paths must be valid C strings; `out_survey` writable.
#[no_mangle]
pub unsafe extern "C" fn bp_survey_load(
    csv_path: *const c_char,
    schema_path: *const c_char,
    out_survey: *mut *mut BpSurvey,
) -> BpStatus {
    guard(|| {
        let slot = out(out_survey, "out_survey")?;
        let raw = RawSurvey::load(string(csv_path, "csv_path")?, string(schema_path, "schema_path")?)
            .map_err(|e| match e {
                lca::LcaError::Io(m) => Failure(BpStatus::Io, m),
                other => Failure(BpStatus::Parse, other.to_string()),
            })?;
        let data = lca::encode_indicators(&raw).map_err(fail(BpStatus::Parse))?;
        *slot = Box::into_raw(Box::new(BpSurvey { data }));
        Ok(())
    })
}

/// # Safety
/// `survey` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bp_survey_respondents(survey: *const BpSurvey) -> usize {
    survey.as_ref().map_or(0, |s| s.data.respondents())
}

/// # Safety
/// `survey` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn bp_survey_free(survey: *mut BpSurvey) {
    if !survey.is_null() {
        drop(Box::from_raw(survey));
    }
}

/// Latent class model chosen by BIC.
pub struct BpLca {
    model: LatentClassModel,
    respondents: usize,
}

/// Fits K in `[k_min, k_max]` with `restarts` EM runs each and keeps the
/// lowest-BIC model.
///
/// # Safety
/// `survey` must be live; `out_model` writable.
#[no_mangle]
pub unsafe extern "C" fn bp_lca_select(
    survey: *const BpSurvey,
    k_min: usize,
    k_max: usize,
    restarts: usize,
    seed: u64,
    out_model: *mut *mut BpLca,
) -> BpStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        let survey = borrow(survey, "survey")?;
        if k_min == 0 || k_max < k_min {
            return Err(Failure(BpStatus::InvalidArgument, "need 1 <= k_min <= k_max".into()));
        }
        let range: Vec<usize> = (k_min..=k_max).collect();
        let selection = lca::lca_select_k(&survey.data, &range, restarts, seed).map_err(fail(BpStatus::Model))?;
        let model = selection
            .models
            .into_iter()
            .find(|m| m.classes() == selection.best_k)
            .expect("selected model");
        *slot = Box::into_raw(Box::new(BpLca {
            model,
            respondents: survey.data.respondents(),
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bp_lca_classes(model: *const BpLca) -> usize {
    model.as_ref().map_or(0, |m| m.model.classes())
}

/// BIC of the model on the survey it was fitted to; NaN for null.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn bp_lca_bic(model: *const BpLca) -> f64 {
    model.as_ref().map_or(f64::NAN, |m| m.model.bic(m.respondents))
}

/// Item-response probabilities, one row per indicator and one column per class.
///
/// # Safety
/// `model` must be live; `out_csv` writable.
#[no_mangle]
pub unsafe extern "C" fn bp_lca_measurement_csv(model: *const BpLca, out_csv: *mut *mut c_char) -> BpStatus {
    guard(|| {
        let slot = out(out_csv, "out_csv")?;
        *slot = to_c(borrow(model, "model")?.model.measurement_csv());
        Ok(())
    })
}

/// Class shares per group in percent. `soft` weights respondents by
/// posterior membership instead of assigning them to their modal class.
///
/// # Safety
/// Handles must be live; `out_csv` writable.
#[no_mangle]
pub unsafe extern "C" fn bp_lca_group_distribution_csv(
    model: *const BpLca,
    survey: *const BpSurvey,
    soft: bool,
    out_csv: *mut *mut c_char,
) -> BpStatus {
    guard(|| {
        let slot = out(out_csv, "out_csv")?;
        let model = borrow(model, "model")?;
        let survey = borrow(survey, "survey")?;
        let mode = if soft { AssignmentMode::Soft } else { AssignmentMode::Hard };
        let dist = lca::group_class_distribution(&model.model, &survey.data, mode)
            .map_err(fail(BpStatus::InvalidArgument))?;
        *slot = to_c(dist.to_csv());
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn bp_lca_free(model: *mut BpLca) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BpConfusion {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

/// `numerator / denominator`; `defined` is false when the denominator is 0
/// and `value` is then NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BpRatio {
    pub numerator: u64,
    pub denominator: u64,
    pub defined: bool,
    pub value: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BpMetrics {
    pub accuracy: BpRatio,
    pub precision: BpRatio,
    pub recall: BpRatio,
    pub specificity: BpRatio,
    pub npv: BpRatio,
}

fn ratio(r: Ratio) -> BpRatio {
    BpRatio {
        numerator: r.num,
        denominator: r.den,
        defined: r.is_defined(),
        value: r.value().unwrap_or(f64::NAN),
    }
}

/// # Safety
/// `matrix` must be readable and `out_metrics` writable.
#[no_mangle]
pub unsafe extern "C" fn bp_confusion_metrics(matrix: *const BpConfusion, out_metrics: *mut BpMetrics) -> BpStatus {
    guard(|| {
        let slot = out(out_metrics, "out_metrics")?;
        let m = borrow(matrix, "matrix")?;
        let metrics = ConfusionMatrix::new(m.tp, m.fn_, m.fp, m.tn)
            .metrics()
            .map_err(fail(BpStatus::InvalidArgument))?;
        *slot = BpMetrics {
            accuracy: ratio(metrics.accuracy),
            precision: ratio(metrics.precision),
            recall: ratio(metrics.recall),
            specificity: ratio(metrics.specificity),
            npv: ratio(metrics.npv),
        };
        Ok(())
    })
}

/// Kernel SHAP attributions for `m` features. `value` returns the model
/// output for a coalition: `mask[j]` is 1 when feature `j` takes its
/// observed value and 0 when it takes the background value. Exact for
/// small `m`, otherwise estimated from `n_samples` coalitions drawn with
/// `seed`. Writes `m` values to `out_phi` and the empty-coalition output
/// to `out_base`.
///
/// # Safety
/// `out_phi` must hold `m` doubles; `out_base` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bp_kernel_shap(
    m: usize,
    value: Option<extern "C" fn(mask: *const u8, m: usize, user: *mut c_void) -> f64>,
    user: *mut c_void,
    n_samples: usize,
    seed: u64,
    out_phi: *mut f64,
    out_base: *mut f64,
) -> BpStatus {
    guard(|| {
        let value = value.ok_or_else(|| null_arg("value"))?;
        let base = out(out_base, "out_base")?;
        if out_phi.is_null() {
            return Err(null_arg("out_phi"));
        }
        let mut mask = vec![0u8; m];
        let shap = sentiment::kernel_shap(
            m,
            |coalition| {
                for (b, &on) in mask.iter_mut().zip(coalition) {
                    *b = on as u8;
                }
                value(mask.as_ptr(), m, user)
            },
            n_samples,
            seed,
        )
        .map_err(fail(BpStatus::InvalidArgument))?;
        std::slice::from_raw_parts_mut(out_phi, m).copy_from_slice(&shap.phi);
        *base = shap.base_value;
        Ok(())
    })
}

/// Runs a pipeline config. `output_dir` may be null to use the config's
/// own. The run id is written to `out_run_id`.
///
/// # Safety
/// Strings must be valid C strings; `out_run_id` writable.
#[no_mangle]
pub unsafe extern "C" fn bp_pipeline_run(
    config_path: *const c_char,
    output_dir: *const c_char,
    out_run_id: *mut *mut c_char,
) -> BpStatus {
    guard(|| {
        let slot = out(out_run_id, "out_run_id")?;
        let config = PipelineConfig::load(string(config_path, "config_path")?).map_err(fail(BpStatus::Pipeline))?;
        let output_dir = if output_dir.is_null() {
            None
        } else {
            Some(PathBuf::from(string(output_dir, "output_dir")?))
        };
        let bundle = pipeline::run(&config, &RunOptions { output_dir }).map_err(fail(BpStatus::Pipeline))?;
        let failures: Vec<String> = bundle.failures().iter().map(|r| r.id.clone()).collect();
        if !failures.is_empty() {
            return Err(Failure(BpStatus::Pipeline, format!("stages failed: {}", failures.join(", "))));
        }
        *slot = to_c(bundle.run_id().to_string());
        Ok(())
    })
}
