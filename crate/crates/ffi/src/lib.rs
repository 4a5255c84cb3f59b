//! C interface to the selfcal toolkit.
//!
//! Objects are passed as opaque handles that the caller releases with the
//! matching `*_free` function. Every fallible call returns a
//! [`SelfcalStatus`]; on failure, [`selfcal_last_error`] describes the cause
//! for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use selfcal::calibration::{build_calibration_set, schedule_temperature, CalibrationSet, CalibrationSpec, SourceKind, TemperatureSchedule};
use selfcal::compress::{block_weight_sparsity, compress_model, CompressionConfig, Method};
use selfcal::text_metrics::analyze;
use selfcal::tiny_lm::corpus::{split_corpus, BUNDLED_CORPUS};
use selfcal::tiny_lm::{bundled_model, eval_windows, evaluate, load_checkpoint, save_checkpoint, CheckpointError, TinyLm, TokenId};
use selfcal::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelfcalStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numerical = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelfcalSource {
    SelfGenerated = 0,
    Corpus = 1,
    RandomVocab = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelfcalMethod {
    Wanda = 0,
    Sparsegpt = 1,
    Gptq = 2,
    Rtn = 3,
    Aws = 4,
}

/// Linear temperature ramp from `t_initial` to `t_final` over `ramp` steps.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfcalSchedule {
    pub t_initial: f64,
    pub t_final: f64,
    pub ramp: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SelfcalTextMetrics {
    pub ppl: f64,
    pub repetitions: f64,
    pub coverage: f64,
    pub diversity: f64,
    pub zipf: f64,
}

/// Opaque model handle.
pub struct SelfcalModel(TinyLm);

/// Opaque calibration-set handle.
pub struct SelfcalCalibSet(CalibrationSet);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> SelfcalStatus {
    match e {
        Error::Contract(_) | Error::CorpusTooSmall { .. } => SelfcalStatus::InvalidArgument,
        Error::NotPositiveDefinite { .. } | Error::Singular(_) | Error::GenerationStalled { .. } => {
            SelfcalStatus::Numerical
        }
        Error::Checkpoint(CheckpointError::Io { .. }) | Error::Io { .. } => SelfcalStatus::Io,
        Error::Checkpoint(_) | Error::CalibFormat(_) | Error::Json(_) | Error::Csv(_) => SelfcalStatus::Format,
    }
}

struct Fail(SelfcalStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<CheckpointError> for Fail {
    fn from(e: CheckpointError) -> Self {
        Error::from(e).into()
    }
}

/// Runs `f`, converting errors and panics into a status and a stored message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SelfcalStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            SelfcalStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SelfcalStatus::Internal
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SelfcalStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(SelfcalStatus::InvalidArgument, msg.into())
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message describing the last failure on this thread; empty after a
/// successful call. Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn selfcal_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn selfcal_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn selfcal_model_load(path: *const c_char, out: *mut *mut SelfcalModel) -> SelfcalStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let model = load_checkpoint(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SelfcalModel(model)));
        Ok(())
    })
}

/// Loads the model shipped with the library.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn selfcal_model_load_bundled(out: *mut *mut SelfcalModel) -> SelfcalStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(SelfcalModel(bundled_model()?)));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn selfcal_model_save(model: *const SelfcalModel, path: *const c_char) -> SelfcalStatus {
    guard(|| {
        let m = handle(model, "model")?;
        save_checkpoint(&m.0, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn selfcal_model_free(model: *mut SelfcalModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Vocabulary size, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn selfcal_model_vocab_size(model: *const SelfcalModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.config.vocab_size)
}

/// Maximum context length, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn selfcal_model_context_len(model: *const SelfcalModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.config.context_len)
}

/// Next-token logits after `tokens[0..n]`, written to `out[0..vocab_size]`.
///
/// # Safety
/// `tokens` must hold `n` ids and `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn selfcal_model_logits(
    model: *const SelfcalModel,
    tokens: *const u32,
    n: usize,
    out: *mut f64,
    out_len: usize,
) -> SelfcalStatus {
    guard(|| {
        let m = handle(model, "model")?;
        if tokens.is_null() {
            return Err(null("tokens"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let v = m.0.config.vocab_size;
        if out_len < v {
            return Err(invalid(format!("output buffer holds {out_len} values, {v} needed")));
        }
        let ctx: &[TokenId] = std::slice::from_raw_parts(tokens, n);
        if ctx.is_empty() {
            return Err(invalid("empty context"));
        }
        let logits = m.0.forward_logits(ctx)?;
        std::slice::from_raw_parts_mut(out, v).copy_from_slice(&logits);
        Ok(())
    })
}

/// Fraction of zero weights over the linear layers of all blocks.
///
/// # Safety
/// `model` must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn selfcal_model_sparsity(model: *const SelfcalModel, out: *mut f64) -> SelfcalStatus {
    guard(|| {
        let m = handle(model, "model")?;
        *out_ptr(out, "out")? = block_weight_sparsity(&m.0);
        Ok(())
    })
}

/// Perplexity and next-token accuracy on the first `windows` held-out
/// windows of the bundled corpus.
///
/// # Safety
/// `model` must come from this library; `ppl` and `acc` must be valid.
#[no_mangle]
pub unsafe extern "C" fn selfcal_model_eval_heldout(
    model: *const SelfcalModel,
    windows: usize,
    ppl: *mut f64,
    acc: *mut f64,
) -> SelfcalStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let (ppl, acc) = (out_ptr(ppl, "ppl")?, out_ptr(acc, "acc")?);
        let heldout = split_corpus(BUNDLED_CORPUS).heldout;
        let data = eval_windows(&heldout, m.0.config.context_len, windows);
        if data.is_empty() {
            return Err(invalid("no evaluation windows requested"));
        }
        let r = evaluate(&m.0, &data)?;
        *ppl = r.ppl;
        *acc = r.next_token_acc;
        Ok(())
    })
}

/// Temperature at generation step `step` (1-based).
///
/// # Safety
/// `schedule` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn selfcal_schedule_temperature(
    schedule: *const SelfcalSchedule,
    step: usize,
    out: *mut f64,
) -> SelfcalStatus {
    guard(|| {
        let s = handle(schedule, "schedule")?;
        let out = out_ptr(out, "out")?;
        if step == 0 {
            return Err(invalid("steps are numbered from 1"));
        }
        let s = TemperatureSchedule::new(s.t_initial, s.t_final, s.ramp)?;
        *out = schedule_temperature(step, &s);
        Ok(())
    })
}

/// Builds a calibration set. `model` is required for the self source;
/// `schedule` may be null for constant temperature 1. The corpus source
/// samples the bundled training text.
///
/// # Safety
/// Pointers must be null or valid; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn selfcal_calib_generate(
    model: *const SelfcalModel,
    source: SelfcalSource,
    num_examples: usize,
    example_len: usize,
    seed: u64,
    schedule: *const SelfcalSchedule,
    stopword_constraint: bool,
    out: *mut *mut SelfcalCalibSet,
) -> SelfcalStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let source = match source {
            SelfcalSource::SelfGenerated => SourceKind::SelfGenerated,
            SelfcalSource::Corpus => SourceKind::Corpus,
            SelfcalSource::RandomVocab => SourceKind::RandomVocab,
        };
        let mut spec = CalibrationSpec::new(source, seed);
        spec.num_examples = num_examples;
        spec.example_len = example_len;
        if source == SourceKind::SelfGenerated {
            if let Some(s) = schedule.as_ref() {
                spec.schedule = Some(TemperatureSchedule::new(s.t_initial, s.t_final, s.ramp)?);
            }
            spec.stopword_constraint = stopword_constraint;
        }
        let model = model.as_ref().map(|m| &m.0);
        let corpus = (source == SourceKind::Corpus).then(|| split_corpus(BUNDLED_CORPUS).train);
        let set = build_calibration_set(&spec, model, corpus.as_deref())?;
        *out = Box::into_raw(Box::new(SelfcalCalibSet(set)));
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn selfcal_calib_load(path: *const c_char, out: *mut *mut SelfcalCalibSet) -> SelfcalStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let set = CalibrationSet::load(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SelfcalCalibSet(set)));
        Ok(())
    })
}

/// # Safety
/// `set` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn selfcal_calib_save(set: *const SelfcalCalibSet, path: *const c_char) -> SelfcalStatus {
    guard(|| {
        let s = handle(set, "set")?;
        s.0.save(path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `set` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn selfcal_calib_free(set: *mut SelfcalCalibSet) {
    if !set.is_null() {
        drop(Box::from_raw(set));
    }
}

/// Number of examples and tokens per example.
///
/// # Safety
/// `set` must come from this library; outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn selfcal_calib_shape(
    set: *const SelfcalCalibSet,
    num_examples: *mut usize,
    example_len: *mut usize,
) -> SelfcalStatus {
    guard(|| {
        let s = handle(set, "set")?;
        *out_ptr(num_examples, "num_examples")? = s.0.len();
        *out_ptr(example_len, "example_len")? = s.0.example_len();
        Ok(())
    })
}

/// Copies example `index` into `out[0..example_len]`.
///
/// # Safety
/// `set` must come from this library; `out` must hold `out_len` ids.
#[no_mangle]
pub unsafe extern "C" fn selfcal_calib_example(
    set: *const SelfcalCalibSet,
    index: usize,
    out: *mut u32,
    out_len: usize,
) -> SelfcalStatus {
    guard(|| {
        let s = handle(set, "set")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ex = s.0.examples.get(index).ok_or_else(|| invalid(format!("no example {index}")))?;
        if out_len < ex.len() {
            return Err(invalid(format!("output buffer holds {out_len} ids, {} needed", ex.len())));
        }
        std::slice::from_raw_parts_mut(out, ex.len()).copy_from_slice(ex);
        Ok(())
    })
}

/// Perplexity, repetitions, coverage, 4-gram diversity and Zipf exponent.
///
/// # Safety
/// Handles must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn selfcal_analyze(
    model: *const SelfcalModel,
    set: *const SelfcalCalibSet,
    out: *mut SelfcalTextMetrics,
) -> SelfcalStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let s = handle(set, "set")?;
        let out = out_ptr(out, "out")?;
        let r = analyze(&m.0, &s.0.examples)?;
        *out = SelfcalTextMetrics {
            ppl: r.ppl,
            repetitions: r.repetitions,
            coverage: r.coverage,
            diversity: r.diversity,
            zipf: r.zipf,
        };
        Ok(())
    })
}

/// Compresses `model` with `set` using the method's default settings and
/// returns a new model handle.
///
/// # Safety
/// Handles must come from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn selfcal_compress(
    model: *const SelfcalModel,
    set: *const SelfcalCalibSet,
    method: SelfcalMethod,
    out: *mut *mut SelfcalModel,
) -> SelfcalStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let s = handle(set, "set")?;
        let out = out_ptr(out, "out")?;
        let method = match method {
            SelfcalMethod::Wanda => Method::Wanda,
            SelfcalMethod::Sparsegpt => Method::Sparsegpt,
            SelfcalMethod::Gptq => Method::Gptq,
            SelfcalMethod::Rtn => Method::Rtn,
            SelfcalMethod::Aws => Method::Aws,
        };
        let outcome = compress_model(&m.0, &s.0, &CompressionConfig::new(method))?;
        *out = Box::into_raw(Box::new(SelfcalModel(outcome.model)));
        Ok(())
    })
}

