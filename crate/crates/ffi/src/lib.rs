//! C ABI over the `rankalign` library.
//!
//! Every fallible function returns an [`RaStatus`]; on failure the message is
//! available from [`ra_last_error`] on the same thread. Datasets and policies
//! are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use rankalign::data::synthetic::{gen_synthetic, SyntheticConfig};
use rankalign::data::{read_dataset, read_policy, write_dataset, write_policy};
use rankalign::eval::evaluate;
use rankalign::loss::{kpo_loss, RewardVector};
use rankalign::numeric::{log_sigmoid, logsumexp};
use rankalign::prefmodel::{korder_prob, korder_prob_bruteforce};
use rankalign::theory::{w_ratio, AlphaProfile, Method};
use rankalign::train::{sft, SftConfig};
use rankalign::{Dataset, Error, PolicyTable, PreferenceSample, Seed, Split};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Domain = 3,
    Resource = 4,
    Lookup = 5,
    Data = 6,
    Parse = 7,
    Config = 8,
    Metric = 9,
    NonFinite = 10,
    Io = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaSplit {
    Train = 0,
    Valid = 1,
    Test = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaMethod {
    Kpo = 0,
    Sdpo = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RaMetrics {
    pub hr_at_1: f64,
    pub hr_at_5: f64,
    pub hr_at_10: f64,
    pub ndcg_at_5: f64,
    pub ndcg_at_10: f64,
    pub n_instances: usize,
    pub n_hr_eligible: usize,
    pub n_idcg_zero: usize,
}

/// Opaque dataset handle.
pub struct RaDataset(Dataset);

/// Opaque policy table handle.
pub struct RaPolicy(PolicyTable);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(RaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Domain(_) => RaStatus::Domain,
            Error::Resource(_) => RaStatus::Resource,
            Error::Lookup { .. } => RaStatus::Lookup,
            Error::Data(_) => RaStatus::Data,
            Error::Parse { .. } => RaStatus::Parse,
            Error::Config(_) => RaStatus::Config,
            Error::Metric(_) => RaStatus::Metric,
            Error::NonFinite { .. } => RaStatus::NonFinite,
            Error::Io { .. } => RaStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside rankalign".into());
            RaStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(RaStatus::NullArgument, format!("`{what}` is null"))
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn path(ptr: *const c_char) -> Result<PathBuf, Failure> {
    if ptr.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map(PathBuf::from)
        .map_err(|e| Failure(RaStatus::InvalidUtf8, format!("path is not UTF-8: {e}")))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    out.write(value);
    Ok(())
}

unsafe fn handle<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ra_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ra_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `values` must point to `len` readable doubles and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ra_logsumexp(values: *const f64, len: usize, out: *mut f64) -> RaStatus {
    guard(|| {
        let v = slice(values, len, "values")?;
        write_out(out, logsumexp(v)?)
    })
}

#[no_mangle]
pub extern "C" fn ra_log_sigmoid(z: f64) -> f64 {
    log_sigmoid(z)
}

/// K-order Plackett-Luce probability of `rewards`, given in ranked order.
///
/// # Safety
/// `rewards` must point to `len` readable doubles and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ra_korder_prob(rewards: *const f64, len: usize, k: usize, out: *mut f64) -> RaStatus {
    guard(|| {
        let r = slice(rewards, len, "rewards")?;
        write_out(out, korder_prob(r, k)?)
    })
}

/// Same probability by summing the full-order model over tail permutations.
///
/// # Safety
/// As [`ra_korder_prob`].
#[no_mangle]
pub unsafe extern "C" fn ra_korder_prob_bruteforce(
    rewards: *const f64,
    len: usize,
    k: usize,
    out: *mut f64,
) -> RaStatus {
    guard(|| {
        let r = slice(rewards, len, "rewards")?;
        write_out(out, korder_prob_bruteforce(r, k)?)
    })
}

/// KPO loss of rewards given head first, then tail. When `grad` is not null it
/// receives `len` partial derivatives with respect to the pre-softmax
/// parameters of a policy realizing these rewards against a uniform reference.
///
/// # Safety
/// `rewards` must point to `len` readable doubles, `value` to a writable
/// double and `grad`, if not null, to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn ra_kpo_loss(
    rewards: *const f64,
    len: usize,
    k: usize,
    beta: f64,
    value: *mut f64,
    grad: *mut f64,
) -> RaStatus {
    guard(|| {
        let r = slice(rewards, len, "rewards")?;
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be positive, got {beta}")).into());
        }
        if k == 0 || k > len {
            return Err(Error::Domain(format!("K = {k} outside 1..={len}")).into());
        }
        let sample = PreferenceSample::identity("ffi", len, k)?;
        let lvg = kpo_loss(&RewardVector::from_rewards(r.to_vec(), beta), &sample)?;
        if !grad.is_null() {
            std::slice::from_raw_parts_mut(grad, len).copy_from_slice(&lvg.grad);
        }
        write_out(value, lvg.value)
    })
}

/// Optimal-policy weight ratio `w_l / w_k` for 0-based positions `l < k`.
///
/// # Safety
/// `alphas` must point to `len` readable doubles and `out` to a writable double.
#[no_mangle]
pub unsafe extern "C" fn ra_w_ratio(
    alphas: *const f64,
    len: usize,
    beta: f64,
    l: usize,
    k: usize,
    method: RaMethod,
    out: *mut f64,
) -> RaStatus {
    guard(|| {
        let a = AlphaProfile::new(slice(alphas, len, "alphas")?.to_vec())?;
        let m = match method {
            RaMethod::Kpo => Method::Kpo,
            RaMethod::Sdpo => Method::Sdpo,
        };
        write_out(out, w_ratio(&a, beta, l, k, m)?)
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ra_dataset_read(path_: *const c_char, out: *mut *mut RaDataset) -> RaStatus {
    guard(|| {
        let ds = read_dataset(&path(path_)?)?;
        write_out(out, Box::into_raw(Box::new(RaDataset(ds))))
    })
}

/// Synthetic dataset with default settings apart from the given sizes and seed.
///
/// # Safety
/// `out` must be a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ra_dataset_generate(
    n_queries: usize,
    m_candidates: usize,
    seed: u64,
    out: *mut *mut RaDataset,
) -> RaStatus {
    guard(|| {
        let cfg = SyntheticConfig {
            n_queries,
            m_candidates,
            n_items: SyntheticConfig::default().n_items.max(m_candidates),
            seed: Seed(seed),
            ..Default::default()
        };
        let ds = gen_synthetic(&cfg)?;
        write_out(out, Box::into_raw(Box::new(RaDataset(ds))))
    })
}

/// # Safety
/// `dataset` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ra_dataset_write(dataset: *const RaDataset, path_: *const c_char) -> RaStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        write_dataset(&ds.0, &path(path_)?)?;
        Ok(())
    })
}

/// Number of instances; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ra_dataset_len(dataset: *const RaDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ra_dataset_free(dataset: *mut RaDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ra_policy_read(path_: *const c_char, out: *mut *mut RaPolicy) -> RaStatus {
    guard(|| {
        let p = read_policy(&path(path_)?)?;
        write_out(out, Box::into_raw(Box::new(RaPolicy(p))))
    })
}

/// # Safety
/// `policy` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ra_policy_write(policy: *const RaPolicy, path_: *const c_char) -> RaStatus {
    guard(|| {
        let p = handle(policy, "policy")?;
        write_policy(&p.0, &path(path_)?)?;
        Ok(())
    })
}

/// Policy whose parameters are the dataset's reference logits.
///
/// # Safety
/// `dataset` must be a live handle and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ra_policy_from_ref_logits(dataset: *const RaDataset, out: *mut *mut RaPolicy) -> RaStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        write_out(out, Box::into_raw(Box::new(RaPolicy(PolicyTable::from_ref_logits(&ds.0)))))
    })
}

/// Supervised fine-tuning with default settings apart from `epochs` and `lr`.
///
/// # Safety
/// `dataset` must be a live handle and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn ra_policy_sft(
    dataset: *const RaDataset,
    epochs: usize,
    lr: f64,
    out: *mut *mut RaPolicy,
) -> RaStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        let cfg = SftConfig {
            epochs,
            lr,
            ..Default::default()
        };
        let p = sft(&ds.0, &cfg)?.policy;
        write_out(out, Box::into_raw(Box::new(RaPolicy(p))))
    })
}

/// # Safety
/// `policy` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ra_policy_free(policy: *mut RaPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// HR and NDCG of `policy` on one split.
///
/// # Safety
/// Both handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ra_evaluate(
    policy: *const RaPolicy,
    dataset: *const RaDataset,
    split: RaSplit,
    out: *mut RaMetrics,
) -> RaStatus {
    guard(|| {
        let p = handle(policy, "policy")?;
        let ds = handle(dataset, "dataset")?;
        let split = match split {
            RaSplit::Train => Split::Train,
            RaSplit::Valid => Split::Valid,
            RaSplit::Test => Split::Test,
        };
        let r = evaluate(&p.0, &ds.0, split)?;
        let get = |name: &str| r.get(name).unwrap_or(0.0);
        write_out(
            out,
            RaMetrics {
                hr_at_1: get("HR@1"),
                hr_at_5: get("HR@5"),
                hr_at_10: get("HR@10"),
                ndcg_at_5: get("N@5"),
                ndcg_at_10: get("N@10"),
                n_instances: r.n_instances,
                n_hr_eligible: r.n_hr_eligible,
                n_idcg_zero: r.n_idcg_zero,
            },
        )
    })
}
