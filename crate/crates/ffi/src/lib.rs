//! C ABI over the miniconvnet engine.
//!
//! Models are exposed as opaque [`McnModel`] handles. Every fallible call
//! returns an [`McnStatus`]; on failure a description is stored per thread
//! and can be read with [`mcn_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use miniconvnet::data::{
    convert_channels, crop_from_keypoints, decode_ppm, normalize, preprocess, read_keypoints_json, LoadOptions,
    ResizeMethod,
};
use miniconvnet::model::{build, Architecture};
use miniconvnet::{Error, Model, Tensor};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Format = 4,
    Io = 5,
    Numeric = 6,
    BufferTooSmall = 7,
    Panic = 8,
    Other = 9,
}

/// Model architectures accepted by [`mcn_model_build`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McnArch {
    Vgg16 = 0,
    VggMini = 1,
}

/// Opaque model handle.
pub struct McnModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> McnStatus {
    match err {
        Error::Shape(_) | Error::Size(_) => McnStatus::Shape,
        Error::Format(_) => McnStatus::Format,
        Error::Io { .. } | Error::Stream(_) => McnStatus::Io,
        Error::Numeric(_) => McnStatus::Numeric,
        Error::Input(_) | Error::Config(_) | Error::Lookup(_) | Error::Crop(_) => McnStatus::InvalidArgument,
        _ => McnStatus::Other,
    }
}

fn guard(f: impl FnOnce() -> Result<(), McnStatus>) -> McnStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => McnStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic".into());
            McnStatus::Panic
        }
    }
}

fn fail(err: Error) -> McnStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn null(what: &str) -> McnStatus {
    set_error(format!("{what} is null"));
    McnStatus::NullPointer
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, McnStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    match CStr::from_ptr(p).to_str() {
        Ok(s) => Ok(PathBuf::from(s)),
        Err(_) => {
            set_error(format!("{what} is not valid UTF-8"));
            Err(McnStatus::InvalidArgument)
        }
    }
}

unsafe fn model_ref<'a>(model: *const McnModel) -> Result<&'a McnModel, McnStatus> {
    model.as_ref().ok_or_else(|| null("model"))
}

fn read(path: &std::path::Path) -> Result<Vec<u8>, McnStatus> {
    std::fs::read(path).map_err(|e| fail(Error::Io { path: path.into(), source: e }))
}

/// Build a freshly initialized model. Writes the new handle to `*out`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn mcn_model_build(
    arch: McnArch,
    height: usize,
    width: usize,
    channels: usize,
    class_count: usize,
    seed: u64,
    out: *mut *mut McnModel,
) -> McnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let arch = match arch {
            McnArch::Vgg16 => Architecture::Vgg16,
            McnArch::VggMini => Architecture::VggMini,
        };
        let model = build(arch, [height, width, channels], class_count, seed).map_err(fail)?;
        *out = Box::into_raw(Box::new(McnModel { inner: model }));
        Ok(())
    })
}

/// Load a weight file, rebuilding the architecture it describes.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mcn_model_load(path: *const c_char, out: *mut *mut McnModel) -> McnStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path, "path")?;
        let model = miniconvnet::cli::load_model(&path, None, None).map_err(fail)?;
        *out = Box::into_raw(Box::new(McnModel { inner: model }));
        Ok(())
    })
}

/// Save the model's weights.
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mcn_model_save(model: *const McnModel, path: *const c_char) -> McnStatus {
    guard(|| {
        let model = model_ref(model)?;
        let path = path_arg(path, "path")?;
        model.inner.save_weights_path(&path).map_err(fail)
    })
}

/// Write the model input shape as height, width, channels.
///
/// # Safety
/// `model` must be a live handle; `dims` must point to three writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn mcn_model_input_shape(model: *const McnModel, dims: *mut usize) -> McnStatus {
    guard(|| {
        let model = model_ref(model)?;
        if dims.is_null() {
            return Err(null("dims"));
        }
        let d = model.inner.input_dims();
        ptr::copy_nonoverlapping(d.as_ptr(), dims, 3);
        Ok(())
    })
}

/// Number of output classes, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mcn_model_class_count(model: *const McnModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.class_count())
}

unsafe fn write_prediction(
    model: &Model,
    image: &Tensor,
    probs: *mut f32,
    probs_len: usize,
    label: *mut usize,
) -> Result<(), McnStatus> {
    let (best, p) = model.predict(image).map_err(fail)?;
    if !probs.is_null() {
        if probs_len < p.len() {
            set_error(format!("probability buffer holds {probs_len}, need {}", p.len()));
            return Err(McnStatus::BufferTooSmall);
        }
        ptr::copy_nonoverlapping(p.as_ptr(), probs, p.len());
    }
    if !label.is_null() {
        *label = best;
    }
    Ok(())
}

/// Classify one preprocessed image: `len` floats in `[0, 1]`, laid out
/// height × width × channels to match the model input shape. `probs` may be
/// null; otherwise it receives `class_count` probabilities.
///
/// # Safety
/// `pixels` must point to `len` floats; `probs` to `probs_len` writable
/// floats or null; `label` to a writable `size_t` or null.
#[no_mangle]
pub unsafe extern "C" fn mcn_model_predict(
    model: *const McnModel,
    pixels: *const f32,
    len: usize,
    probs: *mut f32,
    probs_len: usize,
    label: *mut usize,
) -> McnStatus {
    guard(|| {
        let model = model_ref(model)?;
        if pixels.is_null() {
            return Err(null("pixels"));
        }
        let data = std::slice::from_raw_parts(pixels, len).to_vec();
        let image = Tensor::from_vec(&model.inner.input_dims(), data).map_err(fail)?;
        write_prediction(&model.inner, &image, probs, probs_len, label)
    })
}

/// Classify a PPM file. When `keypoints` is non-null the image is first
/// cropped around the landmarks with the given margin fraction.
///
/// # Safety
/// Paths must be NUL-terminated strings (`keypoints` may be null); output
/// pointers as for [`mcn_model_predict`].
#[no_mangle]
pub unsafe extern "C" fn mcn_predict_ppm(
    model: *const McnModel,
    image_path: *const c_char,
    keypoints: *const c_char,
    margin: f64,
    probs: *mut f32,
    probs_len: usize,
    label: *mut usize,
) -> McnStatus {
    guard(|| {
        let model = model_ref(model)?;
        let image_path = path_arg(image_path, "image_path")?;
        let raw = decode_ppm(&read(&image_path)?).map_err(fail)?;
        let [h, w, c] = model.inner.input_dims();
        let image = if keypoints.is_null() {
            let options = LoadOptions {
                dims: [h, w, c],
                resize: ResizeMethod::Bilinear,
            };
            preprocess(&raw, &options).map_err(fail)?
        } else {
            let kp_path = path_arg(keypoints, "keypoints")?;
            let kps = read_keypoints_json(&read(&kp_path)?).map_err(fail)?;
            let img = convert_channels(&normalize(&raw), c).map_err(fail)?;
            crop_from_keypoints(&img, &kps, margin, h, w, ResizeMethod::Bilinear).map_err(fail)?
        };
        write_prediction(&model.inner, &image, probs, probs_len, label)
    })
}

/// Release a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mcn_model_free(model: *mut McnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn mcn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mcn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
