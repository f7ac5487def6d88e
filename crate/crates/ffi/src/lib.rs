//! C ABI over the scoring primitives: entropy scores, caption embedding,
//! feature perturbation, and seeded k-means.
//!
//! Conventions: every function returns 0 on success or a negative
//! `CAPAL_ERR_*` code; outputs go through caller-provided buffers or opaque
//! handles; handles are freed with their `_free` function; no function
//! panics across the boundary.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use capal_core::acquisition;
use capal_core::clustering::{self, ClusterModel};
use capal_core::config::SaseMode;
use capal_core::embedder::{embed_caption, EMBED_DIM};
use capal_core::types::{tokenize, Candidate, CandidateSet, Origin};

/// Success.
pub const CAPAL_OK: i32 = 0;
/// A required pointer was null.
pub const CAPAL_ERR_NULL: i32 = -1;
/// An argument was out of range or malformed.
pub const CAPAL_ERR_INVALID: i32 = -2;
/// The operation is unsupported for this input.
pub const CAPAL_ERR_UNSUPPORTED: i32 = -3;
/// Internal failure.
pub const CAPAL_ERR_INTERNAL: i32 = -4;

/// Dimension of vectors written by `capal_embed_caption`.
pub const CAPAL_EMBED_DIM: usize = 256;

const VERSION: &str = concat!("capal ", env!("CARGO_PKG_VERSION"), "\0");

fn guard(body: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(_) => CAPAL_ERR_INTERNAL,
    }
}

/// Version string; static storage, do not free.
#[no_mangle]
pub extern "C" fn capal_version() -> *const c_char {
    VERSION.as_ptr().cast()
}

/// Human-readable name for an error code; static storage, do not free.
#[no_mangle]
pub extern "C" fn capal_error_name(code: i32) -> *const c_char {
    let name: &[u8] = match code {
        CAPAL_OK => b"ok\0",
        CAPAL_ERR_NULL => b"null pointer\0",
        CAPAL_ERR_INVALID => b"invalid argument\0",
        CAPAL_ERR_UNSUPPORTED => b"unsupported\0",
        CAPAL_ERR_INTERNAL => b"internal error\0",
        _ => b"unknown error\0",
    };
    name.as_ptr().cast()
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() || len == 0 {
        return None;
    }
    Some(unsafe { std::slice::from_raw_parts(ptr, len) })
}

/// Shannon entropy (nats) of the softmax-normalized scores.
///
/// # Safety
/// `logprobs` must point to `len` readable doubles and `out` to one
/// writable double.
#[no_mangle]
pub unsafe extern "C" fn capal_sequential_entropy(
    logprobs: *const f64,
    len: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let Some(scores) = (unsafe { slice_arg(logprobs, len) }) else {
            return CAPAL_ERR_NULL;
        };
        if out.is_null() {
            return CAPAL_ERR_NULL;
        }
        let probs = match acquisition::normalize_scores(scores) {
            Ok(p) => p,
            Err(_) => return CAPAL_ERR_INVALID,
        };
        let entropy: f64 = probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum();
        unsafe { *out = entropy.max(0.0) };
        CAPAL_OK
    })
}

/// Arithmetic mean of the scores (the least-likelihood baseline value).
///
/// # Safety
/// See `capal_sequential_entropy`.
#[no_mangle]
pub unsafe extern "C" fn capal_mean_likelihood(
    logprobs: *const f64,
    len: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let Some(scores) = (unsafe { slice_arg(logprobs, len) }) else {
            return CAPAL_ERR_NULL;
        };
        if out.is_null() {
            return CAPAL_ERR_NULL;
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return CAPAL_ERR_INVALID;
        }
        unsafe { *out = scores.iter().sum::<f64>() / len as f64 };
        CAPAL_OK
    })
}

/// Overflow-safe softmax; writes `len` probabilities to `out`.
///
/// # Safety
/// `logprobs` and `out` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn capal_normalize_scores(
    logprobs: *const f64,
    len: usize,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let Some(scores) = (unsafe { slice_arg(logprobs, len) }) else {
            return CAPAL_ERR_NULL;
        };
        if out.is_null() {
            return CAPAL_ERR_NULL;
        }
        match acquisition::normalize_scores(scores) {
            Ok(probs) => {
                unsafe { ptr::copy_nonoverlapping(probs.as_ptr(), out, len) };
                CAPAL_OK
            }
            Err(_) => CAPAL_ERR_INVALID,
        }
    })
}

/// Move `feature` by L2 magnitude `epsilon` toward `center`; writes `dim`
/// values to `out`. Fails with `CAPAL_ERR_UNSUPPORTED` when the center
/// coincides with the feature.
///
/// # Safety
/// `feature`, `center`, and `out` must each point to `dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn capal_perturb_feature(
    feature: *const f64,
    center: *const f64,
    dim: usize,
    epsilon: f64,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let (Some(feature), Some(center)) = (unsafe { slice_arg(feature, dim) }, unsafe {
            slice_arg(center, dim)
        }) else {
            return CAPAL_ERR_NULL;
        };
        if out.is_null() {
            return CAPAL_ERR_NULL;
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return CAPAL_ERR_INVALID;
        }
        let diff: Vec<f64> = center.iter().zip(feature).map(|(c, f)| c - f).collect();
        let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
        if !dist.is_finite() {
            return CAPAL_ERR_INVALID;
        }
        if dist < 1e-12 {
            return CAPAL_ERR_UNSUPPORTED;
        }
        for i in 0..dim {
            let value = (1.0 - epsilon) * feature[i] + epsilon * diff[i] / dist;
            unsafe { *out.add(i) = value };
        }
        CAPAL_OK
    })
}

/// Embed a caption (UTF-8, whitespace-tokenized) into `CAPAL_EMBED_DIM`
/// unit-norm components.
///
/// # Safety
/// `caption` must be a NUL-terminated string; `out` must point to
/// `out_len == CAPAL_EMBED_DIM` doubles.
#[no_mangle]
pub unsafe extern "C" fn capal_embed_caption(
    caption: *const c_char,
    out: *mut f64,
    out_len: usize,
) -> i32 {
    guard(|| {
        if caption.is_null() || out.is_null() {
            return CAPAL_ERR_NULL;
        }
        if out_len != EMBED_DIM {
            return CAPAL_ERR_INVALID;
        }
        let Ok(text) = (unsafe { CStr::from_ptr(caption) }).to_str() else {
            return CAPAL_ERR_INVALID;
        };
        let tokens = tokenize(text);
        match embed_caption(&tokens) {
            Ok(e) => {
                unsafe { ptr::copy_nonoverlapping(e.vector.as_ptr(), out, EMBED_DIM) };
                CAPAL_OK
            }
            Err(_) => CAPAL_ERR_INVALID,
        }
    })
}

/// Builder for a candidate set scored by the semantics-aware entropy.
pub struct CapalCandidates {
    video_id: String,
    rows: Vec<(Vec<String>, f64)>,
}

/// Allocate a candidate-set builder; free with `capal_candidates_free`.
/// Returns null on invalid UTF-8.
///
/// # Safety
/// `video_id` must be null or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn capal_candidates_new(video_id: *const c_char) -> *mut CapalCandidates {
    let id = if video_id.is_null() {
        String::new()
    } else {
        match (unsafe { CStr::from_ptr(video_id) }).to_str() {
            Ok(s) => s.to_string(),
            Err(_) => return ptr::null_mut(),
        }
    };
    Box::into_raw(Box::new(CapalCandidates {
        video_id: id,
        rows: Vec::new(),
    }))
}

/// Append one caption with its log-likelihood.
///
/// # Safety
/// `handle` must come from `capal_candidates_new`; `caption` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn capal_candidates_push(
    handle: *mut CapalCandidates,
    caption: *const c_char,
    logprob: f64,
) -> i32 {
    guard(|| {
        if handle.is_null() || caption.is_null() {
            return CAPAL_ERR_NULL;
        }
        if !logprob.is_finite() {
            return CAPAL_ERR_INVALID;
        }
        let Ok(text) = (unsafe { CStr::from_ptr(caption) }).to_str() else {
            return CAPAL_ERR_INVALID;
        };
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return CAPAL_ERR_INVALID;
        }
        unsafe { &mut *handle }.rows.push((tokens, logprob));
        CAPAL_OK
    })
}

/// Number of candidates pushed so far.
///
/// # Safety
/// `handle` must come from `capal_candidates_new`.
#[no_mangle]
pub unsafe extern "C" fn capal_candidates_len(
    handle: *const CapalCandidates,
    out: *mut usize,
) -> i32 {
    guard(|| {
        if handle.is_null() || out.is_null() {
            return CAPAL_ERR_NULL;
        }
        unsafe { *out = (*handle).rows.len() };
        CAPAL_OK
    })
}

/// Sequential entropy of the pushed candidates (no clustering).
///
/// # Safety
/// `handle` must come from `capal_candidates_new`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn capal_candidates_sequential_entropy(
    handle: *const CapalCandidates,
    out: *mut f64,
) -> i32 {
    guard(|| {
        if handle.is_null() || out.is_null() {
            return CAPAL_ERR_NULL;
        }
        let rows = &(unsafe { &*handle }).rows;
        let logprobs: Vec<f64> = rows.iter().map(|(_, lp)| *lp).collect();
        unsafe { capal_sequential_entropy(logprobs.as_ptr(), logprobs.len(), out) }
    })
}

/// Semantics-aware sequential entropy: cluster the candidate captions into
/// at most `clusters` groups (built-in embedder, cluster count clamped to
/// distinct captions) and take the entropy over cluster probabilities.
/// `mode` 0 scores a cluster by its max member logprob, 1 by the mean.
///
/// # Safety
/// `handle` must come from `capal_candidates_new`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn capal_candidates_sase_entropy(
    handle: *const CapalCandidates,
    clusters: u32,
    mode: i32,
    seed: u64,
    out: *mut f64,
) -> i32 {
    guard(|| {
        if handle.is_null() || out.is_null() {
            return CAPAL_ERR_NULL;
        }
        let mode = match mode {
            0 => SaseMode::Max,
            1 => SaseMode::Mean,
            _ => return CAPAL_ERR_INVALID,
        };
        if clusters == 0 {
            return CAPAL_ERR_INVALID;
        }
        let builder = unsafe { &*handle };
        if builder.rows.is_empty() {
            return CAPAL_ERR_INVALID;
        }
        let candidates: Vec<Candidate> = builder
            .rows
            .iter()
            .map(|(tokens, lp)| Candidate {
                tokens: tokens.clone(),
                logprob: *lp,
            })
            .collect();
        let cs = match CandidateSet::new(builder.video_id.clone(), candidates, Origin::Base) {
            Ok(cs) => cs,
            Err(_) => return CAPAL_ERR_INVALID,
        };
        let embeddings: Vec<_> = match cs
            .candidates
            .iter()
            .map(|c| embed_caption(&c.tokens))
            .collect()
        {
            Ok(e) => e,
            Err(_) => return CAPAL_ERR_INVALID,
        };
        match acquisition::sase_entropy(&cs, &embeddings, clusters as usize, mode, seed) {
            Ok(score) => {
                unsafe { *out = score.value };
                CAPAL_OK
            }
            Err(_) => CAPAL_ERR_INVALID,
        }
    })
}

/// # Safety
/// `handle` must come from `capal_candidates_new` and not be used after.
#[no_mangle]
pub unsafe extern "C" fn capal_candidates_free(handle: *mut CapalCandidates) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}

/// A fitted k-means model.
pub struct CapalKmeans {
    model: ClusterModel,
    dim: usize,
}

/// Fit seeded k-means over `n` points of `dim` coordinates laid out
/// row-major in `points`. The cluster count is clamped to the number of
/// distinct points. On success writes a handle to `out`; free it with
/// `capal_kmeans_free`.
///
/// # Safety
/// `points` must hold `n * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn capal_kmeans_fit(
    points: *const f64,
    n: usize,
    dim: usize,
    clusters: u32,
    seed: u64,
    out: *mut *mut CapalKmeans,
) -> i32 {
    guard(|| {
        if points.is_null() || out.is_null() {
            return CAPAL_ERR_NULL;
        }
        if n == 0 || dim == 0 || clusters == 0 {
            return CAPAL_ERR_INVALID;
        }
        let flat = unsafe { std::slice::from_raw_parts(points, n * dim) };
        let rows: Vec<Vec<f64>> = flat.chunks(dim).map(|c| c.to_vec()).collect();
        match clustering::kmeans_fit(
            &rows,
            clusters as usize,
            seed,
            clustering::DEFAULT_MAX_ITERS,
            clustering::DEFAULT_TOL,
        ) {
            Ok(model) => {
                let handle = Box::new(CapalKmeans { model, dim });
                unsafe { *out = Box::into_raw(handle) };
                CAPAL_OK
            }
            Err(_) => CAPAL_ERR_INVALID,
        }
    })
}

/// # Safety
/// `handle` must come from `capal_kmeans_fit`.
#[no_mangle]
pub unsafe extern "C" fn capal_kmeans_num_centers(
    handle: *const CapalKmeans,
    out: *mut usize,
) -> i32 {
    guard(|| {
        if handle.is_null() || out.is_null() {
            return CAPAL_ERR_NULL;
        }
        unsafe { *out = (*handle).model.centers.len() };
        CAPAL_OK
    })
}

/// # Safety
/// `handle` must come from `capal_kmeans_fit`.
#[no_mangle]
pub unsafe extern "C" fn capal_kmeans_inertia(handle: *const CapalKmeans, out: *mut f64) -> i32 {
    guard(|| {
        if handle.is_null() || out.is_null() {
            return CAPAL_ERR_NULL;
        }
        unsafe { *out = (*handle).model.inertia };
        CAPAL_OK
    })
}

/// Copy center `index` into `out` (`out_len` must equal the fit dimension).
///
/// # Safety
/// `handle` must come from `capal_kmeans_fit`; `out` must hold `out_len`
/// doubles.
#[no_mangle]
pub unsafe extern "C" fn capal_kmeans_center(
    handle: *const CapalKmeans,
    index: usize,
    out: *mut f64,
    out_len: usize,
) -> i32 {
    guard(|| {
        if handle.is_null() || out.is_null() {
            return CAPAL_ERR_NULL;
        }
        let this = unsafe { &*handle };
        if index >= this.model.centers.len() || out_len != this.dim {
            return CAPAL_ERR_INVALID;
        }
        unsafe {
            ptr::copy_nonoverlapping(this.model.centers[index].as_ptr(), out, this.dim);
        }
        CAPAL_OK
    })
}

/// Cluster index of input point `index`.
///
/// # Safety
/// `handle` must come from `capal_kmeans_fit`.
#[no_mangle]
pub unsafe extern "C" fn capal_kmeans_assignment(
    handle: *const CapalKmeans,
    index: usize,
    out: *mut usize,
) -> i32 {
    guard(|| {
        if handle.is_null() || out.is_null() {
            return CAPAL_ERR_NULL;
        }
        let this = unsafe { &*handle };
        if index >= this.model.assignments.len() {
            return CAPAL_ERR_INVALID;
        }
        unsafe { *out = this.model.assignments[index] };
        CAPAL_OK
    })
}

/// Indices of the `k` nearest centers to `point`, closest first, ties to
/// the lower index.
///
/// # Safety
/// `handle` must come from `capal_kmeans_fit`; `point` must hold `dim`
/// doubles and `out` at least `k` values.
#[no_mangle]
pub unsafe extern "C" fn capal_kmeans_nearest(
    handle: *const CapalKmeans,
    point: *const f64,
    dim: usize,
    k: usize,
    out: *mut usize,
) -> i32 {
    guard(|| {
        if handle.is_null() || out.is_null() {
            return CAPAL_ERR_NULL;
        }
        let Some(point) = (unsafe { slice_arg(point, dim) }) else {
            return CAPAL_ERR_NULL;
        };
        let this = unsafe { &*handle };
        if dim != this.dim {
            return CAPAL_ERR_INVALID;
        }
        match clustering::nearest_centers(point, &this.model, k) {
            Ok(indices) => {
                unsafe { ptr::copy_nonoverlapping(indices.as_ptr(), out, indices.len()) };
                CAPAL_OK
            }
            Err(_) => CAPAL_ERR_INVALID,
        }
    })
}

/// # Safety
/// `handle` must come from `capal_kmeans_fit` and not be used after.
#[no_mangle]
pub unsafe extern "C" fn capal_kmeans_free(handle: *mut CapalKmeans) {
    if !handle.is_null() {
        drop(unsafe { Box::from_raw(handle) });
    }
}
