use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use miniconvnet_ffi::*;

fn build_mini(classes: usize, seed: u64) -> *mut McnModel {
    let mut handle = ptr::null_mut();
    let status = unsafe { mcn_model_build(McnArch::VggMini, 16, 16, 1, classes, seed, &mut handle) };
    assert_eq!(status, McnStatus::Ok);
    assert!(!handle.is_null());
    handle
}

fn last_error() -> String {
    let p = mcn_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn build_query_predict_free() {
    let model = build_mini(3, 1);
    let mut dims = [0usize; 3];
    unsafe {
        assert_eq!(mcn_model_input_shape(model, dims.as_mut_ptr()), McnStatus::Ok);
        assert_eq!(dims, [16, 16, 1]);
        assert_eq!(mcn_model_class_count(model), 3);

        let pixels = vec![0.5f32; 256];
        let mut probs = [0f32; 3];
        let mut label = usize::MAX;
        let status = mcn_model_predict(model, pixels.as_ptr(), pixels.len(), probs.as_mut_ptr(), 3, &mut label);
        assert_eq!(status, McnStatus::Ok);
        assert!(label < 3);
        assert!((probs.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        assert!(mcn_last_error().is_null());
        mcn_model_free(model);
    }
}

#[test]
fn error_codes() {
    let model = build_mini(3, 1);
    unsafe {
        let pixels = [0.0f32; 10];
        let status = mcn_model_predict(model, pixels.as_ptr(), pixels.len(), ptr::null_mut(), 0, ptr::null_mut());
        assert_eq!(status, McnStatus::Shape);
        assert!(!last_error().is_empty());

        let pixels = vec![0.0f32; 256];
        let mut probs = [0f32; 2];
        let status = mcn_model_predict(model, pixels.as_ptr(), 256, probs.as_mut_ptr(), 2, ptr::null_mut());
        assert_eq!(status, McnStatus::BufferTooSmall);

        assert_eq!(mcn_model_predict(ptr::null(), pixels.as_ptr(), 256, ptr::null_mut(), 0, ptr::null_mut()), McnStatus::NullPointer);
        assert_eq!(mcn_model_class_count(ptr::null()), 0);

        let mut out = ptr::null_mut();
        assert_eq!(mcn_model_build(McnArch::VggMini, 10, 10, 1, 3, 0, &mut out), McnStatus::Shape);
        assert!(out.is_null());

        let missing = CString::new("/nonexistent/m.mcw").unwrap();
        assert_eq!(mcn_model_load(missing.as_ptr(), &mut out), McnStatus::Io);
        mcn_model_free(model);
        mcn_model_free(ptr::null_mut());
    }
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = cpath(&dir.path().join("m.mcw"));
    let model = build_mini(4, 9);
    let pixels: Vec<f32> = (0..256).map(|i| (i % 17) as f32 / 16.0).collect();
    unsafe {
        assert_eq!(mcn_model_save(model, path.as_ptr()), McnStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(mcn_model_load(path.as_ptr(), &mut loaded), McnStatus::Ok);
        assert_eq!(mcn_model_class_count(loaded), 4);

        let (mut a, mut b) = ([0f32; 4], [0f32; 4]);
        assert_eq!(mcn_model_predict(model, pixels.as_ptr(), 256, a.as_mut_ptr(), 4, ptr::null_mut()), McnStatus::Ok);
        assert_eq!(mcn_model_predict(loaded, pixels.as_ptr(), 256, b.as_mut_ptr(), 4, ptr::null_mut()), McnStatus::Ok);
        assert_eq!(a, b);
        mcn_model_free(model);
        mcn_model_free(loaded);
    }
}

#[test]
fn predict_from_ppm_with_keypoints() {
    let dir = tempfile::tempdir().unwrap();
    let mut ppm = b"P6\n40 30\n255\n".to_vec();
    ppm.extend((0..40 * 30 * 3).map(|i| (i % 251) as u8));
    let image = dir.path().join("hand.ppm");
    std::fs::write(&image, ppm).unwrap();
    let kp = dir.path().join("hand.json");
    std::fs::write(
        &kp,
        r#"{"image_width": 40, "image_height": 30, "points": [{"x": 10, "y": 10}, {"x": 20, "y": 25}]}"#,
    )
    .unwrap();

    let model = build_mini(3, 2);
    let (image, kp) = (cpath(&image), cpath(&kp));
    unsafe {
        let mut label = usize::MAX;
        let status = mcn_predict_ppm(model, image.as_ptr(), kp.as_ptr(), 0.25, ptr::null_mut(), 0, &mut label);
        assert_eq!(status, McnStatus::Ok, "{}", last_error());
        assert!(label < 3);
        let status = mcn_predict_ppm(model, image.as_ptr(), ptr::null(), 0.0, ptr::null_mut(), 0, &mut label);
        assert_eq!(status, McnStatus::Ok);

        let bad = cpath(&dir.path().join("hand.json"));
        let status = mcn_predict_ppm(model, bad.as_ptr(), ptr::null(), 0.0, ptr::null_mut(), 0, &mut label);
        assert_eq!(status, McnStatus::Format);
        mcn_model_free(model);
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(mcn_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_api_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/miniconvnet.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "mcn_model_build",
        "mcn_model_load",
        "mcn_model_save",
        "mcn_model_predict",
        "mcn_predict_ppm",
        "mcn_model_free",
        "mcn_last_error",
        "typedef struct McnModel McnModel",
        "MCN_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // Syntax-check the header with a C compiler when one is available.
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("check.c");
    std::fs::write(&src, "#include \"miniconvnet.h\"\nint main(void) { McnModel *m = 0; mcn_model_free(m); return 0; }\n").unwrap();
    let include = format!("-I{}", header.parent().unwrap().display());
    match std::process::Command::new("cc").args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", &include]).arg(&src).status() {
        Ok(status) => assert!(status.success()),
        Err(_) => eprintln!("no C compiler found; skipped syntax check"),
    }
}
