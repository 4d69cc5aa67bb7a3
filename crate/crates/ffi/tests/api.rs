mod common;

use std::ffi::{CStr, CString};
use std::ptr;

use tcdtrack::geometry::{chamfer, chamfer_gradient, extract_correspondence, PointCloud};
use tcdtrack::infer::{track, InferenceConfig};
use tcdtrack::optim::load_checkpoint;
use tcdtrack_ffi::*;

fn cloud(c: &PointCloud) -> *mut TtPointCloud {
    let flat: Vec<f64> = c.points().iter().flatten().copied().collect();
    let mut h = ptr::null_mut();
    assert_eq!(
        unsafe { tt_cloud_new(flat.as_ptr(), c.len(), c.frame_index(), &mut h) },
        TtStatus::Ok
    );
    h
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(tt_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(tt_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn geometry_matches_the_rust_api() {
    let f = common::frames(3, 40);
    let (a, b) = (cloud(&f[0]), cloud(&f[1]));
    unsafe {
        assert_eq!(tt_cloud_len(a), 40);
        let mut xyz = vec![0.0; 120];
        assert_eq!(tt_cloud_copy_points(a, xyz.as_mut_ptr(), 120), TtStatus::Ok);
        assert_eq!(xyz[3..6], f[0].points()[1]);

        let mut d = 0.0;
        assert_eq!(tt_chamfer(a, b, &mut d), TtStatus::Ok);
        assert_eq!(d, chamfer(&f[0], &f[1]).unwrap());

        let mut g = vec![0.0; 120];
        assert_eq!(tt_chamfer_gradient(a, b, g.as_mut_ptr(), 120), TtStatus::Ok);
        let want: Vec<f64> = chamfer_gradient(&f[0], &f[1]).unwrap().into_iter().flatten().collect();
        assert_eq!(g, want);

        let mut m = vec![0usize; 40];
        assert_eq!(tt_extract_correspondence(a, b, m.as_mut_ptr(), 40), TtStatus::Ok);
        assert_eq!(m, extract_correspondence(&f[0], &f[1]).unwrap().matches);

        tt_cloud_free(a);
        tt_cloud_free(b);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let f = common::frames(3, 10);
    let a = cloud(&f[0]);
    unsafe {
        let mut small = [0.0; 5];
        assert_eq!(tt_cloud_copy_points(a, small.as_mut_ptr(), 5), TtStatus::BufferTooSmall);
        assert!(last_error().contains("need 30"));
        let mut d = 0.0;
        assert_eq!(tt_chamfer(a, ptr::null(), &mut d), TtStatus::NullPointer);

        let mut h = ptr::null_mut();
        let bad = [0.0, f64::NAN, 0.0];
        assert_eq!(tt_cloud_new(bad.as_ptr(), 1, 0, &mut h), TtStatus::InvalidArgument);
        assert!(h.is_null(), "outputs are untouched on failure");
        assert_eq!(tt_cloud_new(bad.as_ptr(), 0, 0, &mut h), TtStatus::InvalidArgument);

        let missing = CString::new("/nonexistent/model.ckpt").unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(tt_model_load(missing.as_ptr(), &mut m), TtStatus::Io);
        assert!(last_error().contains("/nonexistent/model.ckpt"));
        tt_cloud_free(a);
        tt_cloud_free(ptr::null_mut());
        assert_eq!(tt_cloud_len(ptr::null()), 0);
    }
}

#[test]
fn tracking_and_forecast_match_the_rust_api() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    common::write_model(&path);
    let f = common::frames(7, 30);
    let handles: Vec<*mut TtPointCloud> = f.iter().map(cloud).collect();
    let frames: Vec<*const TtPointCloud> = handles.iter().map(|&h| h as *const _).collect();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let cfg = TtInferConfig {
        iterations: 10,
        learning_rate: 1e-2,
        seed: 5,
    };
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(tt_model_load(cpath.as_ptr(), &mut model), TtStatus::Ok);
        assert_eq!(tt_model_latent_dim(model), common::LATENT);
        let rust_model = load_checkpoint(&path).unwrap();
        assert_eq!(tt_model_omega(model), rust_model.omega);

        let mut result = ptr::null_mut();
        assert_eq!(tt_track(model, frames.as_ptr(), 4, &cfg, &mut result), TtStatus::Ok);
        let want = track(
            &rust_model,
            &f,
            &InferenceConfig {
                iterations: 10,
                learning_rate: 1e-2,
                seed: 5,
                ..InferenceConfig::default()
            },
        )
        .unwrap();
        assert_eq!(tt_result_pairs(result), 3);
        for pair in 0..3 {
            let mut c = 0.0;
            assert_eq!(tt_result_chamfer(result, pair, &mut c), TtStatus::Ok);
            assert_eq!(c, want.chamfer[pair]);
            let mut m = vec![0usize; 30];
            assert_eq!(tt_result_matches(result, pair, m.as_mut_ptr(), 30), TtStatus::Ok);
            assert_eq!(m, want.maps[pair].matches);
            let mut t = ptr::null_mut();
            assert_eq!(tt_result_transformed(result, pair, &mut t), TtStatus::Ok);
            assert_eq!(tt_cloud_len(t), 30);
            tt_cloud_free(t);
        }
        let mut c = 0.0;
        assert_eq!(tt_result_chamfer(result, 3, &mut c), TtStatus::InvalidArgument);
        tt_result_free(result);

        let mut next = ptr::null_mut();
        assert_eq!(
            tt_forecast(model, frames.as_ptr(), 4, &cfg, &mut next),
            TtStatus::Protocol
        );
        assert_eq!(tt_forecast(model, frames.as_ptr(), 3, &cfg, &mut next), TtStatus::Ok);
        assert_eq!(tt_cloud_len(next), 30);
        tt_cloud_free(next);

        let mut one = ptr::null_mut();
        assert_eq!(
            tt_track(model, frames.as_ptr(), 1, ptr::null(), &mut one),
            TtStatus::InvalidArgument
        );
        tt_model_free(model);
        handles.into_iter().for_each(|h| tt_cloud_free(h));
    }
}
