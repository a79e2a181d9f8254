use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use ofpnet::datasets::synthetic_scene;
use ofpnet::datasets::SceneStyle;
use ofpnet::lightfield::{extract_y, rgb_to_ycbcr};
use ofpnet::model::{save_checkpoint, Checkpoint, ModelConfig, OfpNet};
use ofpnet_ffi::*;

fn last_error() -> String {
    let p = ofp_last_error();
    assert!(!p.is_null(), "no error message recorded");
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn luma(seed: u64, h: usize, w: usize) -> Vec<f32> {
    let rgb = synthetic_scene(SceneStyle::Natural, seed, (5, 5), (h, w));
    extract_y(&rgb_to_ycbcr(&rgb).unwrap())
        .unwrap()
        .as_slice()
        .to_vec()
}

fn new_desk(seed: u64) -> *mut OfpModel {
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { ofp_model_new(OFP_PRESET_DESK, seed, &mut model) },
        OfpStatus::Ok
    );
    assert!(!model.is_null());
    model
}

#[test]
fn fresh_model_round_trips_input() {
    let model = new_desk(3);
    let lr = luma(1, 16, 20);
    let mut sr = vec![0.0f32; lr.len()];
    let status =
        unsafe { ofp_model_forward(model, lr.as_ptr(), 5, 5, 16, 20, sr.as_mut_ptr(), sr.len()) };
    assert_eq!(status, OfpStatus::Ok);
    assert!(ofp_last_error().is_null());
    assert_eq!(sr, lr);

    let mut count = 0;
    assert_eq!(
        unsafe { ofp_model_param_count(model, &mut count) },
        OfpStatus::Ok
    );
    assert_eq!(count, ofpnet::model::count_params(&ModelConfig::desk()));
    let (mut u, mut v) = (0, 0);
    assert_eq!(
        unsafe { ofp_model_angular_size(model, &mut u, &mut v) },
        OfpStatus::Ok
    );
    assert_eq!((u, v), (5, 5));
    unsafe { ofp_model_free(model) };
}

#[test]
fn loaded_checkpoint_matches_rust_forward() {
    let mut net = OfpNet::<f32>::new(ModelConfig::desk(), 9).unwrap();
    let head = net.reconstructor().head.weight;
    for (i, x) in net
        .params_mut()
        .value_mut(head)
        .data_mut()
        .iter_mut()
        .enumerate()
    {
        *x = ((i % 7) as f32 - 3.0) * 0.01;
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.safetensors");
    save_checkpoint(
        &path,
        &Checkpoint {
            model: net.clone(),
            moments: None,
            state: None,
        },
    )
    .unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { ofp_model_load(c_path.as_ptr(), &mut model) },
        OfpStatus::Ok
    );
    let lr = luma(2, 16, 16);
    let mut sr = vec![0.0f32; lr.len()];
    let status =
        unsafe { ofp_model_forward(model, lr.as_ptr(), 5, 5, 16, 16, sr.as_mut_ptr(), sr.len()) };
    assert_eq!(status, OfpStatus::Ok);
    let expected = net
        .forward(&ofpnet::lightfield::LightField::from_luma((5, 5), (16, 16), lr.clone()).unwrap())
        .unwrap();
    assert_eq!(sr, expected.as_slice());
    assert_ne!(sr, lr);
    unsafe { ofp_model_free(model) };
}

#[test]
fn errors_map_to_codes_with_messages() {
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { ofp_model_new(7, 0, &mut model) },
        OfpStatus::InvalidArgument
    );
    assert!(last_error().contains("preset"));
    assert!(model.is_null());
    assert_eq!(
        unsafe { ofp_model_new(OFP_PRESET_DESK, 0, ptr::null_mut()) },
        OfpStatus::NullPointer
    );

    let missing = CString::new("/nonexistent/ckpt.safetensors").unwrap();
    let status = unsafe { ofp_model_load(missing.as_ptr(), &mut model) };
    assert!(
        matches!(status, OfpStatus::Io | OfpStatus::Checkpoint),
        "{status:?}"
    );
    assert!(!last_error().is_empty());

    let model = new_desk(0);
    let lr = luma(1, 16, 16);
    let mut sr = vec![0.0f32; lr.len() - 1];
    let status =
        unsafe { ofp_model_forward(model, lr.as_ptr(), 5, 5, 16, 16, sr.as_mut_ptr(), sr.len()) };
    assert_eq!(status, OfpStatus::Size);
    assert!(last_error().contains("floats"));
    let status = unsafe { ofp_model_forward(model, lr.as_ptr(), 5, 5, 0, 16, sr.as_mut_ptr(), 0) };
    assert_eq!(status, OfpStatus::InvalidArgument);
    let status =
        unsafe { ofp_model_forward(model, ptr::null(), 5, 5, 16, 16, sr.as_mut_ptr(), sr.len()) };
    assert_eq!(status, OfpStatus::NullPointer);
    // A successful call clears the previous message.
    let mut count = 0;
    assert_eq!(
        unsafe { ofp_model_param_count(model, &mut count) },
        OfpStatus::Ok
    );
    assert!(ofp_last_error().is_null());
    unsafe {
        ofp_model_free(model);
        ofp_model_free(ptr::null_mut());
    }
}

#[test]
fn psnr_matches_closed_form() {
    let gt: Vec<f32> = (0..25 * 8 * 8).map(|i| (i % 200) as f32 / 255.0).collect();
    let sr: Vec<f32> = gt.iter().map(|x| x + 1.0 / 255.0).collect();
    let mut out = 0.0;
    let status = unsafe { ofp_psnr_y(sr.as_ptr(), gt.as_ptr(), 5, 5, 8, 8, &mut out) };
    assert_eq!(status, OfpStatus::Ok);
    assert!((out - 20.0 * 255f64.log10()).abs() < 1e-3, "{out}");
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(ofp_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ofpnet.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "ofp_model_new",
        "ofp_model_load",
        "ofp_model_free",
        "ofp_model_forward",
        "ofp_last_error",
        "typedef struct OfpModel OfpModel",
        "OFP_STATUS_OK",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"ofpnet.h\"\nint f(void) { OfpModel *m = 0; OfpStatus s = ofp_model_new(OFP_PRESET_DESK, 1, &m);\n\
         ofp_model_free(m); return s == OFP_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
        .expect("a C compiler is available");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
