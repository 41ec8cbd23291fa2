//! C ABI over model scoring, dual estimation and online allocation.
//!
//! Every function returns a [`CaStatus`]; on failure the message is available
//! from [`ca_last_error`] on the same thread. Handles are opaque and must be
//! released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use coupon_alloc::allocator::{estimate_dual, DualState, OnlineAllocator, ScoredUser};
use coupon_alloc::iidn::{BehaviorEvent, IntentModel, MenuScore, TrainedModel};
use coupon_alloc::{Cents, Error};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    BudgetBreach = 5,
    NonFinite = 6,
    Unsupported = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// A loaded scoring model.
pub struct CaModel {
    model: TrainedModel,
}

/// An online allocator with its budget ledger.
pub struct CaAllocator {
    inner: OnlineAllocator,
}

/// One behavior event.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CaEvent {
    pub action: u16,
    /// Dwell time in seconds.
    pub dwell: f64,
    pub step: u32,
}

/// Scores for one amount; `amount_cents` 0 is the null coupon.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CaMenuScore {
    pub amount_cents: i64,
    pub p_stay: f64,
    pub p_pay: f64,
}

/// One allocation decision.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CaDecision {
    pub user_id: u64,
    /// 1 when the user was excluded by the staying threshold.
    pub gated: u8,
    /// Menu index chosen (0 = no coupon).
    pub index: u32,
    pub amount_cents: i64,
    pub spent_after_cents: i64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CaStatus {
    match e {
        Error::Io { .. } | Error::MissingArtifacts { .. } => CaStatus::Io,
        Error::Parse { .. } => CaStatus::Parse,
        Error::BudgetBreach(_) => CaStatus::BudgetBreach,
        Error::NonFinite(_) => CaStatus::NonFinite,
        Error::Capability(_) => CaStatus::Unsupported,
        _ => CaStatus::InvalidArgument,
    }
}

struct Fail(CaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CaStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> CaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CaStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CaStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or point to `len` readable values.
unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

fn to_menu(scores: &[CaMenuScore]) -> Vec<MenuScore> {
    scores
        .iter()
        .map(|s| MenuScore {
            amount: Cents(s.amount_cents),
            p_stay: s.p_stay,
            p_pay: s.p_pay,
        })
        .collect()
}

/// Message for the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn ca_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads a model file written by `coupon-alloc train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ca_model_load(path: *const c_char, out: *mut *mut CaModel) -> CaStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(CaStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let model = TrainedModel::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(CaModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from [`ca_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ca_model_free(model: *mut CaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Scores `{0} ∪ menu` for one session and static profile.
///
/// Writes up to `out_cap` scores and the full count to `out_len`; returns
/// `BufferTooSmall` when `out_cap` is short.
///
/// # Safety
/// Array pointers must be valid for their lengths; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ca_model_score_menu(
    model: *const CaModel,
    events: *const CaEvent,
    n_events: usize,
    statics: *const u16,
    n_statics: usize,
    menu_cents: *const i64,
    n_menu: usize,
    out: *mut CaMenuScore,
    out_cap: usize,
    out_len: *mut usize,
) -> CaStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if out_len.is_null() {
            return Err(null("out_len"));
        }
        let s: Vec<BehaviorEvent> = slice(events, n_events, "events")?
            .iter()
            .map(|e| BehaviorEvent {
                action: e.action,
                dwell: e.dwell,
                step: e.step,
            })
            .collect();
        let h = slice(statics, n_statics, "statics")?;
        let menu: Vec<Cents> = slice(menu_cents, n_menu, "menu")?.iter().map(|&c| Cents(c)).collect();
        let scores = model.model.score_menu(&s, h, &menu)?;
        *out_len = scores.len();
        if out_cap < scores.len() {
            return Err(Fail(
                CaStatus::BufferTooSmall,
                format!("output holds {out_cap} scores, {} needed", scores.len()),
            ));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        for (i, m) in scores.iter().enumerate() {
            *out.add(i) = CaMenuScore {
                amount_cents: m.amount.0,
                p_stay: m.p_stay,
                p_pay: m.p_pay,
            };
        }
        Ok(())
    })
}

/// Budget price for a sample of `n_users` menus of `menu_len` scores each (row-major).
///
/// # Safety
/// `scores` must hold `n_users * menu_len` values; `out_alpha` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ca_estimate_dual(
    scores: *const CaMenuScore,
    menu_len: usize,
    n_users: usize,
    budget_cents: i64,
    gamma: f64,
    out_alpha: *mut f64,
) -> CaStatus {
    guard(|| {
        if out_alpha.is_null() {
            return Err(null("out_alpha"));
        }
        let total = n_users
            .checked_mul(menu_len)
            .ok_or_else(|| Fail(CaStatus::InvalidArgument, "sample size overflows".into()))?;
        let flat = slice(scores, total, "scores")?;
        let sample: Vec<ScoredUser> = if menu_len == 0 {
            Vec::new()
        } else {
            flat.chunks(menu_len)
                .enumerate()
                .map(|(i, m)| ScoredUser {
                    user_id: i as u64,
                    menu: to_menu(m),
                })
                .collect()
        };
        *out_alpha = estimate_dual(&sample, Cents(budget_cents), gamma)?.alpha;
        Ok(())
    })
}

/// Creates an allocator with price `alpha`, a budget and a staying threshold.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ca_allocator_new(
    alpha: f64,
    budget_cents: i64,
    gamma: f64,
    out: *mut *mut CaAllocator,
) -> CaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = OnlineAllocator::new(&DualState::fixed(alpha), Cents(budget_cents), gamma)?;
        *out = Box::into_raw(Box::new(CaAllocator { inner }));
        Ok(())
    })
}

/// Decides one arriving user irrevocably.
///
/// # Safety
/// `alloc` must be a live handle; `scores` must hold `menu_len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ca_allocator_decide(
    alloc: *mut CaAllocator,
    user_id: u64,
    scores: *const CaMenuScore,
    menu_len: usize,
    out: *mut CaDecision,
) -> CaStatus {
    guard(|| {
        let alloc = alloc.as_mut().ok_or_else(|| null("allocator"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let menu = to_menu(slice(scores, menu_len, "scores")?);
        let d = alloc.inner.decide(&ScoredUser { user_id, menu })?;
        *out = CaDecision {
            user_id: d.user_id,
            gated: d.gated as u8,
            index: d.j as u32,
            amount_cents: d.amount.0,
            spent_after_cents: d.spent_after.0,
        };
        Ok(())
    })
}

/// Total spent so far, in cents.
///
/// # Safety
/// `alloc` must be a live handle; `out_cents` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ca_allocator_spent(alloc: *const CaAllocator, out_cents: *mut i64) -> CaStatus {
    guard(|| {
        let alloc = alloc.as_ref().ok_or_else(|| null("allocator"))?;
        if out_cents.is_null() {
            return Err(null("out_cents"));
        }
        *out_cents = alloc.inner.ledger().spent().0;
        Ok(())
    })
}

/// # Safety
/// `alloc` must be null or a handle from [`ca_allocator_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ca_allocator_free(alloc: *mut CaAllocator) {
    if !alloc.is_null() {
        drop(Box::from_raw(alloc));
    }
}
