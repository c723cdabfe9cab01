//! C ABI over the `rare` library.
//!
//! Models, indexes and example pools are opaque handles created by
//! `rare_*_load`/`rare_*_build` and released with the matching `rare_*_free`.
//! Every fallible call returns a [`RareStatus`]; on failure the message is
//! kept per thread and can be copied out with [`rare_last_error`].
//!
//! Strings are NUL-terminated UTF-8. Output buffers are caller-owned; when a
//! text buffer is too small the call returns `RARE_STATUS_BUFFER_TOO_SMALL`
//! and writes the required size (including the NUL) to `*needed`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rare::codec::FormatError;
use rare::data::{load_corpus, load_example_pool, DataError, PoolSource};
use rare::embedder::{EmbedderConfig, EmbedderError, EmbedderParams};
use rare::prompt::{FormatKind, PromptFormat};
use rare::retrieve::{render_query, FlatIndex, InferenceConfig, RetrieveError};
use rare::trainer::{PoolIndex, Selection};
use rare::{Error, Query};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RareStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Format = 4,
    DimMismatch = 5,
    NonFinite = 6,
    InvalidArgument = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Trained embedder.
pub struct RareModel {
    params: EmbedderParams,
}

/// Exact dense index over a corpus.
pub struct RareIndex {
    index: FlatIndex,
}

/// Example pool with its lexical index.
pub struct RarePool {
    pool: PoolIndex,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> RareStatus {
    match e {
        Error::Data(DataError::Io { .. })
        | Error::Format(FormatError::Io(_))
        | Error::Embedder(EmbedderError::Format(FormatError::Io(_)))
        | Error::Retrieve(RetrieveError::Format(FormatError::Io(_))) => RareStatus::Io,
        Error::Data(_) | Error::Format(_) => RareStatus::Format,
        Error::Embedder(EmbedderError::NonFiniteParams) => RareStatus::NonFinite,
        Error::Embedder(EmbedderError::DimMismatch { .. }) => RareStatus::DimMismatch,
        Error::Embedder(EmbedderError::Format(_)) => RareStatus::Format,
        Error::Retrieve(RetrieveError::DimMismatch { .. }) => RareStatus::DimMismatch,
        Error::Retrieve(RetrieveError::Format(_)) => RareStatus::Format,
        Error::Retrieve(RetrieveError::Embedder(EmbedderError::NonFiniteParams)) => RareStatus::NonFinite,
        _ => RareStatus::InvalidArgument,
    }
}

fn fail(status: RareStatus, msg: impl Into<String>) -> RareStatus {
    set_error(msg);
    status
}

/// Runs `f`, converting errors and panics into a status.
fn guard<F>(f: F) -> RareStatus
where
    F: FnOnce() -> Result<(), RareStatus>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RareStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(RareStatus::Panic, "internal panic"),
    }
}

fn lib<T, E: Into<Error>>(r: Result<T, E>) -> Result<T, RareStatus> {
    r.map_err(|e| {
        let e = e.into();
        fail(status_of(&e), e.to_string())
    })
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, RareStatus> {
    if p.is_null() {
        return Err(fail(RareStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RareStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, RareStatus> {
    p.as_ref()
        .ok_or_else(|| fail(RareStatus::NullArgument, format!("{name} is null")))
}

fn out_arg<T>(p: *mut T, name: &str) -> Result<(), RareStatus> {
    if p.is_null() {
        Err(fail(RareStatus::NullArgument, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// Copies `text` plus a NUL into `buf`.
unsafe fn copy_text(text: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), RareStatus> {
    let required = text.len() + 1;
    if !needed.is_null() {
        *needed = required;
    }
    if buf.is_null() || len < required {
        return Err(fail(
            RareStatus::BufferTooSmall,
            format!("buffer holds {len} bytes, {required} needed"),
        ));
    }
    ptr::copy_nonoverlapping(text.as_ptr(), buf.cast::<u8>(), text.len());
    *buf.add(text.len()) = 0;
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rare_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null; `needed` must be null or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn rare_last_error(buf: *mut c_char, len: usize, needed: *mut usize) -> RareStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    match copy_text(&msg, buf, len, needed) {
        Ok(()) => RareStatus::Ok,
        Err(s) => s,
    }
}

/// # Safety
/// `path` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rare_model_load(path: *const c_char, out: *mut *mut RareModel) -> RareStatus {
    guard(|| {
        out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let params = lib(EmbedderParams::load(Path::new(path)))?;
        *out = Box::into_raw(Box::new(RareModel { params }));
        Ok(())
    })
}

/// Random untrained model with unigram and bigram features.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rare_model_random(
    hash_dim: usize,
    embed_dim: usize,
    seed: u64,
    out: *mut *mut RareModel,
) -> RareStatus {
    guard(|| {
        out_arg(out, "out")?;
        let config = EmbedderConfig {
            hash_dim,
            embed_dim,
            ..EmbedderConfig::default()
        };
        let params = lib(EmbedderParams::random(config, seed))?;
        *out = Box::into_raw(Box::new(RareModel { params }));
        Ok(())
    })
}

/// # Safety
/// `model` and `path` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rare_model_save(model: *const RareModel, path: *const c_char) -> RareStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let path = str_arg(path, "path")?;
        lib(model.params.save(Path::new(path)))
    })
}

/// Embedding dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rare_model_dim(model: *const RareModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.embed_dim())
}

/// Writes the embedding of `text` into `out[0..len]`; `len` must equal the
/// model dimension.
///
/// # Safety
/// `out` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rare_model_embed(
    model: *const RareModel,
    text: *const c_char,
    out: *mut f64,
    len: usize,
) -> RareStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let text = str_arg(text, "text")?;
        out_arg(out, "out")?;
        if len != model.params.embed_dim() {
            return Err(fail(
                RareStatus::DimMismatch,
                format!("buffer length {len}, model dimension {}", model.params.embed_dim()),
            ));
        }
        let emb = lib(model.params.embed(text))?;
        ptr::copy_nonoverlapping(emb.0.as_ptr(), out, len);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rare_model_free(model: *mut RareModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Embeds every document of a `corpus.jsonl` file.
///
/// # Safety
/// Pointers must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rare_index_build(
    model: *const RareModel,
    corpus_path: *const c_char,
    threads: usize,
    out: *mut *mut RareIndex,
) -> RareStatus {
    guard(|| {
        out_arg(out, "out")?;
        let model = ref_arg(model, "model")?;
        let path = str_arg(corpus_path, "corpus_path")?;
        let corpus = lib(load_corpus(Path::new(path)))?;
        let index = lib(FlatIndex::build_parallel(&corpus, &model.params, threads))?;
        *out = Box::into_raw(Box::new(RareIndex { index }));
        Ok(())
    })
}

/// # Safety
/// `path` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rare_index_load(path: *const c_char, out: *mut *mut RareIndex) -> RareStatus {
    guard(|| {
        out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let index = lib(FlatIndex::load(Path::new(path)))?;
        *out = Box::into_raw(Box::new(RareIndex { index }));
        Ok(())
    })
}

/// # Safety
/// `index` and `path` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rare_index_save(index: *const RareIndex, path: *const c_char) -> RareStatus {
    guard(|| {
        let index = ref_arg(index, "index")?;
        let path = str_arg(path, "path")?;
        lib(index.index.save(Path::new(path)))
    })
}

/// Number of documents, or 0 for a null handle.
///
/// # Safety
/// `index` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rare_index_len(index: *const RareIndex) -> usize {
    index.as_ref().map_or(0, |i| i.index.len())
}

/// Copies the id of document `ordinal` into `buf`.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null; `needed` null or writable.
#[no_mangle]
pub unsafe extern "C" fn rare_index_doc_id(
    index: *const RareIndex,
    ordinal: usize,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> RareStatus {
    guard(|| {
        let index = ref_arg(index, "index")?;
        let Some(id) = index.index.ids().get(ordinal) else {
            return Err(fail(
                RareStatus::InvalidArgument,
                format!("ordinal {ordinal} out of range ({} documents)", index.index.len()),
            ));
        };
        copy_text(id, buf, len, needed)
    })
}

/// Top-`k` documents for a query embedding. Writes up to `k` ordinals and
/// scores and the count to `*n_out`.
///
/// # Safety
/// `query` valid for `dim` doubles; `ordinals` and `scores` valid for `k`
/// entries; `n_out` writable.
#[no_mangle]
pub unsafe extern "C" fn rare_index_search(
    index: *const RareIndex,
    query: *const f64,
    dim: usize,
    k: usize,
    ordinals: *mut usize,
    scores: *mut f64,
    n_out: *mut usize,
) -> RareStatus {
    guard(|| {
        let index = ref_arg(index, "index")?;
        let query = ref_arg(query, "query")?;
        out_arg(n_out, "n_out")?;
        if k > 0 {
            out_arg(ordinals, "ordinals")?;
            out_arg(scores, "scores")?;
        }
        let q = rare::Embedding(std::slice::from_raw_parts(query, dim).to_vec());
        let ranked = lib(index.index.search(&q, k))?;
        write_ranked(&index.index, &ranked, ordinals, scores);
        *n_out = ranked.len();
        Ok(())
    })
}

unsafe fn write_ranked(index: &FlatIndex, ranked: &rare::RankedList, ordinals: *mut usize, scores: *mut f64) {
    let position: std::collections::HashMap<&str, usize> =
        index.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    for (j, (id, score)) in ranked.entries.iter().enumerate() {
        *ordinals.add(j) = position[id.as_str()];
        *scores.add(j) = *score;
    }
}

/// # Safety
/// `index` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rare_index_free(index: *mut RareIndex) {
    if !index.is_null() {
        drop(Box::from_raw(index));
    }
}

/// Loads a `pool.jsonl` example pool.
///
/// # Safety
/// `path` must be a valid C string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rare_pool_load(path: *const c_char, out: *mut *mut RarePool) -> RareStatus {
    guard(|| {
        out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let pool = lib(load_example_pool(Path::new(path), "pool", PoolSource::TrainSplit))?;
        let pool = lib(PoolIndex::new(pool))?;
        *out = Box::into_raw(Box::new(RarePool { pool }));
        Ok(())
    })
}

/// # Safety
/// `pool` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rare_pool_len(pool: *const RarePool) -> usize {
    pool.as_ref().map_or(0, |p| p.pool.len())
}

/// # Safety
/// `pool` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn rare_pool_free(pool: *mut RarePool) {
    if !pool.is_null() {
        drop(Box::from_raw(pool));
    }
}

unsafe fn inference_config(format: *const c_char, k: usize, top_k: usize) -> Result<InferenceConfig, RareStatus> {
    let name = str_arg(format, "format")?;
    let kind: FormatKind = name.parse().map_err(|e: String| fail(RareStatus::InvalidArgument, e))?;
    Ok(InferenceConfig {
        format: PromptFormat::new(kind),
        k,
        top_k,
        selection: Selection::Retrieved,
        seed: 0,
        threads: 1,
    })
}

/// Renders `query` with up to `k` retrieved examples from `pool` (may be
/// null when `format` is `"inst"` or `k` is 0).
///
/// # Safety
/// String arguments must be valid C strings; `buf` valid for `len` bytes or
/// null; `needed` null or writable.
#[no_mangle]
pub unsafe extern "C" fn rare_render(
    pool: *const RarePool,
    instruction: *const c_char,
    query: *const c_char,
    format: *const c_char,
    k: usize,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> RareStatus {
    guard(|| {
        let instruction = str_arg(instruction, "instruction")?;
        let query = str_arg(query, "query")?;
        let config = inference_config(format, k, 0)?;
        let pool = pool.as_ref().map(|p| &p.pool);
        let rendered = lib(render_query(&Query::new("q", query), 0, instruction, pool, &config))?;
        copy_text(&rendered.text, buf, len, needed)
    })
}

/// Full pipeline for one query: example retrieval, rendering, encoding and
/// top-`top_k` search.
///
/// # Safety
/// As [`rare_render`] and [`rare_index_search`].
#[no_mangle]
pub unsafe extern "C" fn rare_search_text(
    model: *const RareModel,
    index: *const RareIndex,
    pool: *const RarePool,
    instruction: *const c_char,
    query: *const c_char,
    format: *const c_char,
    k: usize,
    top_k: usize,
    ordinals: *mut usize,
    scores: *mut f64,
    n_out: *mut usize,
) -> RareStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let index = ref_arg(index, "index")?;
        let instruction = str_arg(instruction, "instruction")?;
        let query = str_arg(query, "query")?;
        out_arg(n_out, "n_out")?;
        if top_k > 0 {
            out_arg(ordinals, "ordinals")?;
            out_arg(scores, "scores")?;
        }
        let config = inference_config(format, k, top_k)?;
        let pool = pool.as_ref().map(|p| &p.pool);
        let rendered = lib(render_query(&Query::new("q", query), 0, instruction, pool, &config))?;
        let emb = lib(model.params.embed(&rendered.text))?;
        let ranked = lib(index.index.search(&emb, top_k))?;
        write_ranked(&index.index, &ranked, ordinals, scores);
        *n_out = ranked.len();
        Ok(())
    })
}
