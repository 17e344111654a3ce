//! C ABI for the borex toolkit.
//!
//! Every function returns a [`BorexStatus`]. On failure the message of the
//! most recent error on the calling thread is available from
//! [`borex_last_error_message`]. Volumes are passed as flat `double` arrays
//! in frame-major, row-major order with channels innermost.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use borex::error::{ClassifierError, Error};
use borex::gpr::{self, GpState, IndexPoint, KernelParams, PriorMean, RefineConfig, Smoothness};
use borex::metrics::{self, WilcoxonMethod};
use borex::{Classifier, Dims, ImageVolume, Label, RegionVolume, SaliencyVolume};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BorexStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Numerical = 4,
    Classifier = 5,
    Io = 6,
    DegenerateSample = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> BorexStatus {
    match err {
        Error::Shape(_) | Error::OutOfBounds { .. } => BorexStatus::Shape,
        Error::Numerical(_) => BorexStatus::Numerical,
        Error::Classifier { .. } => BorexStatus::Classifier,
        Error::Io(_) | Error::Image(_) | Error::TensorFormat { .. } | Error::Manifest { .. } => {
            BorexStatus::Io
        }
        Error::DegenerateSample => BorexStatus::DegenerateSample,
        _ => BorexStatus::InvalidArgument,
    }
}

struct Failure(BorexStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(BorexStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(BorexStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BorexStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BorexStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside borex");
            BorexStatus::Panic
        }
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn borex_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BorexDims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl BorexDims {
    fn dims(&self) -> Result<Dims, Failure> {
        let d = Dims::new(self.frames, self.height, self.width);
        if !d.is_valid() {
            return Err(invalid(format!("invalid dimensions {d}")));
        }
        Ok(d)
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BorexIndexPoint {
    pub frame: usize,
    pub row: usize,
    pub col: usize,
    pub side: usize,
    pub span: usize,
}

impl From<BorexIndexPoint> for IndexPoint {
    fn from(p: BorexIndexPoint) -> Self {
        IndexPoint {
            frame: p.frame,
            row: p.row,
            col: p.col,
            side: p.side,
            span: p.span,
        }
    }
}

/// `nu` must be 0.5, 1.5 or 2.5.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BorexKernelParams {
    pub nu: f64,
    pub length_scale: f64,
    pub signal_var: f64,
    pub noise_var: f64,
    pub frame_scale: f64,
}

impl BorexKernelParams {
    fn params(&self) -> Result<KernelParams, Failure> {
        let p = KernelParams {
            nu: Smoothness::from_nu(self.nu)?,
            length_scale: self.length_scale,
            signal_var: self.signal_var,
            noise_var: self.noise_var,
            frame_scale: self.frame_scale,
        };
        p.validate()?;
        Ok(p)
    }
}

#[no_mangle]
pub extern "C" fn borex_kernel_params_default() -> BorexKernelParams {
    let d = KernelParams::default();
    BorexKernelParams {
        nu: d.nu.nu(),
        length_scale: d.length_scale,
        signal_var: d.signal_var,
        noise_var: d.noise_var,
        frame_scale: d.frame_scale,
    }
}

unsafe fn read<'a, T>(ptr: *const T, what: &str) -> Result<&'a T, Failure> {
    ptr.as_ref().ok_or_else(|| null(what))
}

unsafe fn write<T>(ptr: *mut T, value: T, what: &str) -> Result<(), Failure> {
    let slot = ptr.as_mut().ok_or_else(|| null(what))?;
    *slot = value;
    Ok(())
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn label(ptr: *const c_char) -> Result<Label, Failure> {
    if ptr.is_null() {
        return Err(null("label"));
    }
    let s = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid("label is not UTF-8"))?;
    Ok(Label::new(s)?)
}

unsafe fn saliency(ptr: *const f64, dims: Dims, what: &str) -> Result<SaliencyVolume, Failure> {
    Ok(SaliencyVolume::new(
        dims,
        slice(ptr, dims.cells(), what)?.to_vec(),
    )?)
}

/// Matérn covariance between two index points.
///
/// # Safety
/// `a`, `b`, `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn borex_matern_kernel(
    a: *const BorexIndexPoint,
    b: *const BorexIndexPoint,
    params: *const BorexKernelParams,
    out: *mut f64,
) -> BorexStatus {
    guard(|| {
        let p = read(params, "params")?.params()?;
        let k = gpr::matern_kernel(&(*read(a, "a")?).into(), &(*read(b, "b")?).into(), &p);
        write(out, k, "out")
    })
}

/// Opaque Gaussian-process state.
pub struct BorexGp {
    state: GpState,
}

/// Creates a GP with a zero prior mean, or with the max-abs normalized
/// `prior` map over `dims` when `prior` is not NULL.
///
/// # Safety
/// `params` and `out` must be valid; `prior`, when not NULL, must hold
/// `frames * height * width` doubles.
#[no_mangle]
pub unsafe extern "C" fn borex_gp_new(
    params: *const BorexKernelParams,
    prior: *const f64,
    dims: BorexDims,
    out: *mut *mut BorexGp,
) -> BorexStatus {
    guard(|| {
        let kernel = read(params, "params")?.params()?;
        let mean = if prior.is_null() {
            PriorMean::Zero
        } else {
            let map = saliency(prior, dims.dims()?, "prior")?;
            PriorMean::Map(Arc::new(borex::normalize_saliency(&map)?))
        };
        let state = GpState::new(kernel, mean)?;
        write(out, Box::into_raw(Box::new(BorexGp { state })), "out")
    })
}

/// # Safety
/// `gp` must come from [`borex_gp_new`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn borex_gp_free(gp: *mut BorexGp) {
    if !gp.is_null() {
        drop(Box::from_raw(gp));
    }
}

/// # Safety
/// `gp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn borex_gp_observe(
    gp: *mut BorexGp,
    x: BorexIndexPoint,
    s: f64,
) -> BorexStatus {
    guard(|| {
        let gp = gp.as_mut().ok_or_else(|| null("gp"))?;
        gp.state.observe(x.into(), s)?;
        Ok(())
    })
}

/// # Safety
/// `gp` must be a live handle; `mean` and `var` must be valid.
#[no_mangle]
pub unsafe extern "C" fn borex_gp_posterior(
    gp: *const BorexGp,
    q: BorexIndexPoint,
    mean: *mut f64,
    var: *mut f64,
) -> BorexStatus {
    guard(|| {
        let (m, v) = read(gp, "gp")?.state.posterior(&q.into());
        write(mean, m, "mean")?;
        write(var, v, "var")
    })
}

/// Number of observations held by `gp`, or 0 for NULL.
///
/// # Safety
/// `gp` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn borex_gp_len(gp: *const BorexGp) -> usize {
    gp.as_ref().map_or(0, |g| g.state.len())
}

/// Scales `values` by `1 / max|values|` into `out` (may alias `values`).
///
/// # Safety
/// Both arrays must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn borex_normalize_saliency(
    values: *const f64,
    len: usize,
    out: *mut f64,
) -> BorexStatus {
    guard(|| {
        if len == 0 {
            return Err(invalid("empty map"));
        }
        let map = saliency(values, Dims::new(1, 1, len), "values")?;
        let norm = borex::normalize_saliency(&map)?;
        if out.is_null() {
            return Err(null("out"));
        }
        std::ptr::copy(norm.values().as_ptr(), out, len);
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BorexWilcoxon {
    pub n_effective: usize,
    pub statistic: f64,
    pub p_value: f64,
    /// 1 when the exact null distribution was used, 0 for the normal approximation.
    pub exact: c_int,
}

/// One-sided signed-rank test of `a > b` over `n` pairs.
///
/// # Safety
/// `a` and `b` must hold `n` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn borex_wilcoxon_one_sided(
    a: *const f64,
    b: *const f64,
    n: usize,
    out: *mut BorexWilcoxon,
) -> BorexStatus {
    guard(|| {
        let pairs: Vec<(f64, f64)> = slice(a, n, "a")?
            .iter()
            .copied()
            .zip(slice(b, n, "b")?.iter().copied())
            .collect();
        let r = metrics::wilcoxon_one_sided(&pairs)?;
        write(
            out,
            BorexWilcoxon {
                n_effective: r.n_effective,
                statistic: r.statistic,
                p_value: r.p_value,
                exact: c_int::from(r.method == WilcoxonMethod::Exact),
            },
            "out",
        )
    })
}

/// Classifier callback: writes the confidence in `[0, 1]` of `label` for
/// one image with the given shape and returns 0, or a non-zero code on failure.
pub type BorexClassifyFn = Option<
    unsafe extern "C" fn(
        user: *mut c_void,
        data: *const f64,
        dims: BorexDims,
        channels: usize,
        label: *const c_char,
        confidence: *mut f64,
    ) -> c_int,
>;

struct CallbackClassifier {
    callback: unsafe extern "C" fn(
        *mut c_void,
        *const f64,
        BorexDims,
        usize,
        *const c_char,
        *mut f64,
    ) -> c_int,
    user: *mut c_void,
    labels: Vec<Label>,
}

// The callback is only invoked from the thread that entered the library.
unsafe impl Send for CallbackClassifier {}
unsafe impl Sync for CallbackClassifier {}

impl Classifier for CallbackClassifier {
    fn labels(&self) -> &[Label] {
        &self.labels
    }

    fn evaluate(&self, batch: &[&ImageVolume], label: &Label) -> Result<Vec<f64>, ClassifierError> {
        let name =
            CString::new(label.as_str()).map_err(|e| ClassifierError::Other(e.to_string()))?;
        batch
            .iter()
            .map(|img| {
                let d = img.dims();
                let dims = BorexDims {
                    frames: d.frames,
                    height: d.height,
                    width: d.width,
                };
                let mut c = f64::NAN;
                let code = unsafe {
                    (self.callback)(
                        self.user,
                        img.data().as_ptr(),
                        dims,
                        img.channels(),
                        name.as_ptr(),
                        &mut c,
                    )
                };
                if code != 0 {
                    return Err(ClassifierError::Other(format!("callback returned {code}")));
                }
                Ok(c)
            })
            .collect()
    }

    fn is_serial(&self) -> bool {
        true
    }
}

unsafe fn callback_classifier(
    f: BorexClassifyFn,
    user: *mut c_void,
    label: &Label,
) -> Result<CallbackClassifier, Failure> {
    Ok(CallbackClassifier {
        callback: f.ok_or_else(|| null("classify"))?,
        user,
        labels: vec![label.clone()],
    })
}

unsafe fn image(
    data: *const f64,
    dims: BorexDims,
    channels: usize,
) -> Result<ImageVolume, Failure> {
    let d = dims.dims()?;
    let values = slice(data, d.cells() * channels, "image")?;
    Ok(ImageVolume::new(d, channels, values.to_vec())?)
}

/// Refinement settings. `candidate_stride = 0` picks the default stride.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BorexRefineConfig {
    pub n_iters: usize,
    pub sizes: *const usize,
    pub n_sizes: usize,
    pub spans: *const usize,
    pub n_spans: usize,
    pub kappa: f64,
    pub candidate_stride: usize,
    pub use_flip: bool,
    pub weighted_avg: bool,
    pub use_prior: bool,
}

impl BorexRefineConfig {
    unsafe fn config(&self) -> Result<RefineConfig, Failure> {
        let cfg = RefineConfig {
            n_iters: self.n_iters,
            sizes: slice(self.sizes, self.n_sizes, "sizes")?.to_vec(),
            spans: slice(self.spans, self.n_spans, "spans")?.to_vec(),
            kappa: self.kappa,
            candidate_stride: (self.candidate_stride > 0).then_some(self.candidate_stride),
            use_flip: self.use_flip,
            weighted_avg: self.weighted_avg,
            use_prior: self.use_prior,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Refines `prior` (NULL when `config.use_prior` is false) into `out_map`,
/// which must hold `frames * height * width` doubles. `out_calls` may be NULL.
///
/// # Safety
/// Pointer arguments must be valid for the sizes implied by `dims` and `channels`.
#[no_mangle]
pub unsafe extern "C" fn borex_refine(
    classify: BorexClassifyFn,
    user: *mut c_void,
    image_data: *const f64,
    dims: BorexDims,
    channels: usize,
    prior: *const f64,
    target: *const c_char,
    config: *const BorexRefineConfig,
    kernel: *const BorexKernelParams,
    fill: f64,
    out_map: *mut f64,
    out_calls: *mut usize,
) -> BorexStatus {
    guard(|| {
        let img = image(image_data, dims, channels)?;
        let target = label(target)?;
        let model = callback_classifier(classify, user, &target)?;
        let cfg = read(config, "config")?.config()?;
        let kernel = read(kernel, "kernel")?.params()?;
        let prior = if prior.is_null() {
            None
        } else {
            Some(saliency(prior, img.dims(), "prior")?)
        };
        if out_map.is_null() {
            return Err(null("out_map"));
        }
        let out = gpr::refine(&model, &img, prior.as_ref(), &target, &cfg, &kernel, fill)?;
        std::ptr::copy_nonoverlapping(out.map.values().as_ptr(), out_map, out.map.values().len());
        if !out_calls.is_null() {
            *out_calls = out.classifier_calls;
        }
        Ok(())
    })
}

#[allow(clippy::too_many_arguments)]
unsafe fn curve_score(
    deletion: bool,
    classify: BorexClassifyFn,
    user: *mut c_void,
    image_data: *const f64,
    dims: BorexDims,
    channels: usize,
    map: *const f64,
    target: *const c_char,
    steps: usize,
    fill: f64,
    out: *mut f64,
) -> BorexStatus {
    guard(|| {
        let img = image(image_data, dims, channels)?;
        let target = label(target)?;
        let model = callback_classifier(classify, user, &target)?;
        let map = saliency(map, img.dims(), "map")?;
        let curve = if deletion {
            metrics::deletion(&model, &img, &target, &map, steps, fill)?
        } else {
            metrics::insertion(&model, &img, &target, &map, steps, fill)?
        };
        write(out, curve.score, "out")
    })
}

/// Mean insertion score of `map`.
///
/// # Safety
/// Pointer arguments must be valid for the sizes implied by `dims` and `channels`.
#[no_mangle]
pub unsafe extern "C" fn borex_insertion(
    classify: BorexClassifyFn,
    user: *mut c_void,
    image_data: *const f64,
    dims: BorexDims,
    channels: usize,
    map: *const f64,
    target: *const c_char,
    steps: usize,
    fill: f64,
    out: *mut f64,
) -> BorexStatus {
    curve_score(
        false, classify, user, image_data, dims, channels, map, target, steps, fill, out,
    )
}

/// Mean deletion score of `map`.
///
/// # Safety
/// Pointer arguments must be valid for the sizes implied by `dims` and `channels`.
#[no_mangle]
pub unsafe extern "C" fn borex_deletion(
    classify: BorexClassifyFn,
    user: *mut c_void,
    image_data: *const f64,
    dims: BorexDims,
    channels: usize,
    map: *const f64,
    target: *const c_char,
    steps: usize,
    fill: f64,
    out: *mut f64,
) -> BorexStatus {
    curve_score(
        true, classify, user, image_data, dims, channels, map, target, steps, fill, out,
    )
}

/// Mean F-measure of `map` against `region` (one byte per cell, non-zero = inside).
///
/// # Safety
/// `map` and `region` must hold `frames * height * width` elements.
#[no_mangle]
pub unsafe extern "C" fn borex_f_measure(
    map: *const f64,
    region: *const u8,
    dims: BorexDims,
    steps: usize,
    out: *mut f64,
) -> BorexStatus {
    guard(|| {
        let d = dims.dims()?;
        let map = saliency(map, d, "map")?;
        let cells = slice(region, d.cells(), "region")?
            .iter()
            .map(|v| *v != 0)
            .collect();
        let region = RegionVolume::new(d, cells)?;
        write(out, metrics::f_measure(&map, &region, steps)?.score, "out")
    })
}
