use std::ffi::{c_char, c_int, c_void, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use borex_ffi::*;

fn last_error() -> String {
    let p = borex_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn point(row: usize, col: usize, side: usize) -> BorexIndexPoint {
    BorexIndexPoint {
        frame: 0,
        row,
        col,
        side,
        span: 1,
    }
}

#[test]
fn gp_handle_lifecycle() {
    let params = borex_kernel_params_default();
    let mut gp: *mut BorexGp = ptr::null_mut();
    let dims = BorexDims {
        frames: 1,
        height: 8,
        width: 8,
    };
    unsafe {
        assert_eq!(
            borex_gp_new(&params, ptr::null(), dims, &mut gp),
            BorexStatus::Ok
        );
        assert!(!gp.is_null());
        let (mut m0, mut v0) = (0.0, 0.0);
        assert_eq!(
            borex_gp_posterior(gp, point(3, 3, 5), &mut m0, &mut v0),
            BorexStatus::Ok
        );
        assert_eq!((m0, v0), (0.0, 1.0));
        assert_eq!(borex_gp_observe(gp, point(3, 3, 5), 0.8), BorexStatus::Ok);
        assert_eq!(borex_gp_len(gp), 1);
        let (mut m, mut v) = (0.0, 0.0);
        assert_eq!(
            borex_gp_posterior(gp, point(3, 3, 5), &mut m, &mut v),
            BorexStatus::Ok
        );
        assert!((m - 0.8).abs() < 1e-3 && v < 1e-3);
        assert_eq!(
            borex_gp_observe(gp, point(1, 1, 5), f64::NAN),
            BorexStatus::Numerical
        );
        borex_gp_free(gp);
        borex_gp_free(ptr::null_mut());
        assert_eq!(borex_gp_len(ptr::null()), 0);
    }
}

#[test]
fn gp_with_prior_normalizes() {
    let params = borex_kernel_params_default();
    let prior: Vec<f64> = (0..16).map(|i| i as f64).collect();
    let dims = BorexDims {
        frames: 1,
        height: 4,
        width: 4,
    };
    let mut gp = ptr::null_mut();
    unsafe {
        assert_eq!(
            borex_gp_new(&params, prior.as_ptr(), dims, &mut gp),
            BorexStatus::Ok
        );
        let (mut m, mut v) = (0.0, 0.0);
        borex_gp_posterior(gp, point(3, 3, 1), &mut m, &mut v);
        assert_eq!(m, 1.0);
        borex_gp_posterior(gp, point(0, 0, 1), &mut m, &mut v);
        assert_eq!(m, 0.0);
        borex_gp_free(gp);
    }
}

#[test]
fn null_and_invalid_arguments_report_errors() {
    let mut params = borex_kernel_params_default();
    let mut out = 0.0;
    unsafe {
        assert_eq!(
            borex_matern_kernel(ptr::null(), &point(0, 0, 1), &params, &mut out),
            BorexStatus::NullPointer
        );
        assert!(last_error().contains("a is null"));
        params.nu = 2.0;
        let mut gp = ptr::null_mut();
        let dims = BorexDims {
            frames: 1,
            height: 1,
            width: 1,
        };
        assert_eq!(
            borex_gp_new(&params, ptr::null(), dims, &mut gp),
            BorexStatus::InvalidArgument
        );
        assert!(last_error().contains("smoothness"));
        assert!(gp.is_null());
    }
}

#[test]
fn kernel_value() {
    let params = borex_kernel_params_default();
    let mut k = 0.0;
    unsafe {
        assert_eq!(
            borex_matern_kernel(&point(0, 0, 5), &point(12, 0, 5), &params, &mut k),
            BorexStatus::Ok
        );
    }
    let r = 3f64.sqrt();
    assert!((k - (1.0 + r) * (-r).exp()).abs() < 1e-12);
}

#[test]
fn wilcoxon_and_normalize() {
    let a = [2.0, 3.0, 4.0];
    let b = [1.0, 2.0, 3.0];
    let mut w = BorexWilcoxon::default();
    unsafe {
        assert_eq!(
            borex_wilcoxon_one_sided(a.as_ptr(), b.as_ptr(), 3, &mut w),
            BorexStatus::Ok
        );
        assert_eq!(
            (w.p_value, w.statistic, w.n_effective, w.exact),
            (0.125, 6.0, 3, 1)
        );
        assert_eq!(
            borex_wilcoxon_one_sided(a.as_ptr(), a.as_ptr(), 3, &mut w),
            BorexStatus::DegenerateSample
        );
        let mut v = [2.0, -4.0, 0.0];
        let p = v.as_mut_ptr();
        assert_eq!(borex_normalize_saliency(p, 3, p), BorexStatus::Ok);
        assert_eq!(v, [0.5, -1.0, 0.0]);
        assert_eq!(
            borex_normalize_saliency(v.as_ptr(), 0, p),
            BorexStatus::InvalidArgument
        );
    }
}

/// Region classifier over an 8x8 single-channel image: the visible fraction
/// of the top-left 3x3 block, read through `user` as the call counter.
unsafe extern "C" fn block_classifier(
    user: *mut c_void,
    data: *const f64,
    dims: BorexDims,
    channels: usize,
    label: *const c_char,
    confidence: *mut f64,
) -> c_int {
    if CStr::from_ptr(label).to_str() != Ok("target") || channels != 1 || dims.width != 8 {
        return 3;
    }
    *(user as *mut usize) += 1;
    let pixels = std::slice::from_raw_parts(data, dims.height * dims.width);
    let visible = (0..3)
        .flat_map(|y| (0..3).map(move |x| y * 8 + x))
        .filter(|&i| pixels[i] != 0.0)
        .count();
    *confidence = visible as f64 / 9.0;
    0
}

fn refine_inputs() -> (Vec<f64>, BorexDims, CString) {
    (
        vec![0.5; 64],
        BorexDims {
            frames: 1,
            height: 8,
            width: 8,
        },
        CString::new("target").unwrap(),
    )
}

#[test]
fn refine_through_callback() {
    let (image, dims, label) = refine_inputs();
    let sizes = [3usize, 5];
    let spans = [1usize];
    let cfg = BorexRefineConfig {
        n_iters: 10,
        sizes: sizes.as_ptr(),
        n_sizes: 2,
        spans: spans.as_ptr(),
        n_spans: 1,
        kappa: 2.0,
        candidate_stride: 0,
        use_flip: true,
        weighted_avg: true,
        use_prior: false,
    };
    let kernel = borex_kernel_params_default();
    let mut map = vec![0.0; 64];
    let mut calls = 0usize;
    let mut counter = 0usize;
    let status = unsafe {
        borex_refine(
            Some(block_classifier),
            &mut counter as *mut usize as *mut c_void,
            image.as_ptr(),
            dims,
            1,
            ptr::null(),
            label.as_ptr(),
            &cfg,
            &kernel,
            0.0,
            map.as_mut_ptr(),
            &mut calls,
        )
    };
    assert_eq!(status, BorexStatus::Ok, "{}", last_error());
    assert_eq!((calls, counter), (20, 20));

    let mut score = 0.0;
    unsafe {
        let user = &mut counter as *mut usize as *mut c_void;
        assert_eq!(
            borex_insertion(
                Some(block_classifier),
                user,
                image.as_ptr(),
                dims,
                1,
                map.as_ptr(),
                label.as_ptr(),
                8,
                0.0,
                &mut score
            ),
            BorexStatus::Ok
        );
        assert!((0.0..=1.0).contains(&score));
        assert_eq!(
            borex_deletion(
                Some(block_classifier),
                user,
                image.as_ptr(),
                dims,
                1,
                map.as_ptr(),
                label.as_ptr(),
                8,
                0.0,
                &mut score
            ),
            BorexStatus::Ok
        );
    }
    assert_eq!(counter, 36);
}

#[test]
fn failing_callback_is_classifier_error() {
    let (image, dims, _) = refine_inputs();
    let wrong = CString::new("dog").unwrap();
    let map = vec![0.0; 64];
    let mut counter = 0usize;
    let mut score = 0.0;
    let status = unsafe {
        borex_insertion(
            Some(block_classifier),
            &mut counter as *mut usize as *mut c_void,
            image.as_ptr(),
            dims,
            1,
            map.as_ptr(),
            wrong.as_ptr(),
            4,
            0.0,
            &mut score,
        )
    };
    assert_eq!(status, BorexStatus::Classifier);
    assert!(last_error().contains("callback returned 3"));
    let status = unsafe {
        borex_insertion(
            None,
            ptr::null_mut(),
            image.as_ptr(),
            dims,
            1,
            map.as_ptr(),
            wrong.as_ptr(),
            4,
            0.0,
            &mut score,
        )
    };
    assert_eq!(status, BorexStatus::NullPointer);
}

#[test]
fn f_measure_of_indicator() {
    let dims = BorexDims {
        frames: 1,
        height: 4,
        width: 4,
    };
    let region: Vec<u8> = (0..16).map(|i| u8::from(i < 4)).collect();
    let map: Vec<f64> = region.iter().map(|v| f64::from(*v)).collect();
    let mut f = 0.0;
    unsafe {
        assert_eq!(
            borex_f_measure(map.as_ptr(), region.as_ptr(), dims, 4, &mut f),
            BorexStatus::Ok
        );
    }
    // steps select 4, 8, 12, 16 cells: F = 1, 2/3, 1/2, 2/5
    let expected = (1.0 + 2.0 / 3.0 + 0.5 + 0.4) / 4.0;
    assert!((f - expected).abs() < 1e-15);
}

#[test]
fn header_declares_the_api_and_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("borex.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "borex_gp_new",
        "borex_gp_free",
        "borex_gp_observe",
        "borex_gp_posterior",
        "borex_refine",
        "borex_wilcoxon_one_sided",
        "borex_last_error_message",
        "typedef struct BorexGp BorexGp",
        "BOREX_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        return;
    };
    if !cc.status.success() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"borex.h\"\nint main(void) { BorexGp *gp = 0; BorexKernelParams p = borex_kernel_params_default();\n\
         BorexDims d = {1, 4, 4}; return borex_gp_new(&p, 0, d, &gp) == BOREX_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
