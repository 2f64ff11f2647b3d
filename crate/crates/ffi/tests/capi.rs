use std::ffi::{CStr, CString};
use std::ptr;

use rankalign_ffi::*;

fn last_error() -> String {
    let p = ra_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn logsumexp_and_log_sigmoid() {
    let v = [1.0, 2.0, 3.0];
    let mut out = 0.0;
    assert_eq!(unsafe { ra_logsumexp(v.as_ptr(), 3, &mut out) }, RaStatus::Ok);
    assert!((out - 3.40760596444438).abs() < 1e-12);
    assert!((ra_log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
    assert_eq!(unsafe { ra_logsumexp(v.as_ptr(), 0, &mut out) }, RaStatus::Domain);
}

#[test]
fn korder_prob_matches_bruteforce() {
    let r = [0.3, -0.1, 0.7, 0.0, -0.5];
    for k in 1..=5 {
        let (mut a, mut b) = (0.0, 0.0);
        unsafe {
            assert_eq!(ra_korder_prob(r.as_ptr(), r.len(), k, &mut a), RaStatus::Ok);
            assert_eq!(ra_korder_prob_bruteforce(r.as_ptr(), r.len(), k, &mut b), RaStatus::Ok);
        }
        assert!((a - b).abs() < 1e-12, "k={k}: {a} vs {b}");
    }
}

#[test]
fn kpo_loss_value_and_gradient() {
    // K = 1 over two candidates with rewards (1, 0): -log sigmoid(1).
    let r = [1.0, 0.0];
    let mut value = 0.0;
    let mut grad = [f64::NAN; 2];
    let st = unsafe { ra_kpo_loss(r.as_ptr(), 2, 1, 1.0, &mut value, grad.as_mut_ptr()) };
    assert_eq!(st, RaStatus::Ok);
    assert!((value - 0.31326168751822286).abs() < 1e-12);
    assert!(grad.iter().all(|g| g.is_finite()));
    assert!(grad.iter().sum::<f64>().abs() < 1e-12);

    let st = unsafe { ra_kpo_loss(r.as_ptr(), 2, 1, 1.0, &mut value, ptr::null_mut()) };
    assert_eq!(st, RaStatus::Ok);
    let st = unsafe { ra_kpo_loss(r.as_ptr(), 2, 3, 1.0, &mut value, ptr::null_mut()) };
    assert_eq!(st, RaStatus::Domain);
    let st = unsafe { ra_kpo_loss(r.as_ptr(), 2, 1, 0.0, &mut value, ptr::null_mut()) };
    assert_eq!(st, RaStatus::Domain);
}

#[test]
fn w_ratio_equal_scores_is_one() {
    let a = [0.25, 1.0 / 3.0, 0.5, 1.0];
    let mut out = 0.0;
    for m in [RaMethod::Kpo, RaMethod::Sdpo] {
        assert_eq!(unsafe { ra_w_ratio(a.as_ptr(), 4, 1.0, 0, 3, m, &mut out) }, RaStatus::Ok);
        assert!((out - 1.0).abs() < 1e-12);
    }
    let bad = [0.5, 0.5];
    assert_eq!(unsafe { ra_w_ratio(bad.as_ptr(), 2, 1.0, 0, 1, RaMethod::Kpo, &mut out) }, RaStatus::Domain);
    assert!(last_error().contains("last alpha"));
}

#[test]
fn null_arguments_are_reported() {
    let mut out = 0.0;
    assert_eq!(unsafe { ra_logsumexp(ptr::null(), 2, &mut out) }, RaStatus::NullArgument);
    assert!(last_error().contains("values"));
    let v = [1.0];
    assert_eq!(unsafe { ra_logsumexp(v.as_ptr(), 1, ptr::null_mut()) }, RaStatus::NullArgument);
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { ra_dataset_read(ptr::null(), &mut ds) }, RaStatus::NullArgument);
    assert!(ds.is_null());
    let mut m = RaMetrics::default();
    assert_eq!(unsafe { ra_evaluate(ptr::null(), ptr::null(), RaSplit::Test, &mut m) }, RaStatus::NullArgument);
    unsafe {
        ra_dataset_free(ptr::null_mut());
        ra_policy_free(ptr::null_mut());
        assert_eq!(ra_dataset_len(ptr::null()), 0);
    }
}

#[test]
fn missing_file_is_io_error() {
    let p = CString::new("/nonexistent/rankalign/data.jsonl").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { ra_dataset_read(p.as_ptr(), &mut ds) }, RaStatus::Io);
    assert!(last_error().contains("nonexistent"));
}

#[test]
fn dataset_policy_roundtrip_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = CString::new(dir.path().join("d.jsonl").to_str().unwrap()).unwrap();
    let pol_path = CString::new(dir.path().join("p.jsonl").to_str().unwrap()).unwrap();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(ra_dataset_generate(60, 8, 3, &mut ds), RaStatus::Ok);
        assert_eq!(ra_dataset_len(ds), 60);
        assert_eq!(ra_dataset_write(ds, data_path.as_ptr()), RaStatus::Ok);

        let mut ds2 = ptr::null_mut();
        assert_eq!(ra_dataset_read(data_path.as_ptr(), &mut ds2), RaStatus::Ok);
        assert_eq!(ra_dataset_len(ds2), 60);

        let mut pol = ptr::null_mut();
        assert_eq!(ra_policy_sft(ds2, 2, 0.1, &mut pol), RaStatus::Ok);
        assert_eq!(ra_policy_write(pol, pol_path.as_ptr()), RaStatus::Ok);
        let mut pol2 = ptr::null_mut();
        assert_eq!(ra_policy_read(pol_path.as_ptr(), &mut pol2), RaStatus::Ok);

        let (mut a, mut b) = (RaMetrics::default(), RaMetrics::default());
        assert_eq!(ra_evaluate(pol, ds2, RaSplit::Test, &mut a), RaStatus::Ok);
        assert_eq!(ra_evaluate(pol2, ds2, RaSplit::Test, &mut b), RaStatus::Ok);
        assert_eq!(a, b);
        assert!(a.n_instances > 0);
        for v in [a.hr_at_1, a.hr_at_5, a.hr_at_10, a.ndcg_at_5, a.ndcg_at_10] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert!(a.hr_at_1 <= a.hr_at_5 && a.hr_at_5 <= a.hr_at_10);

        let mut refp = ptr::null_mut();
        assert_eq!(ra_policy_from_ref_logits(ds2, &mut refp), RaStatus::Ok);
        assert_eq!(ra_evaluate(refp, ds2, RaSplit::Valid, &mut a), RaStatus::Ok);

        ra_policy_free(refp);
        ra_policy_free(pol2);
        ra_policy_free(pol);
        ra_dataset_free(ds2);
        ra_dataset_free(ds);
    }
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(ra_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_entry_points() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/rankalign.h")).unwrap();
    for name in ["ra_kpo_loss", "ra_evaluate", "ra_last_error", "typedef struct RaDataset RaDataset", "RA_STATUS_PANIC"] {
        assert!(h.contains(name), "{name}");
    }
}
