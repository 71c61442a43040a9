use hgrl_ffi::*;
use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

fn last_error() -> String {
    let p = hgrl_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn new_model(variant: &str) -> *mut HgrlModel {
    let v = CString::new(variant).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { hgrl_model_new(v.as_ptr(), 16, 16, 1, &mut m) },
        HgrlStatus::Ok
    );
    assert!(!m.is_null());
    m
}

#[test]
fn predict_and_round_trip_weights() {
    let m = new_model("fcAR-SL");
    let (mut frames, mut mels) = (0, 0);
    assert_eq!(
        unsafe { hgrl_model_input_shape(m, &mut frames, &mut mels) },
        HgrlStatus::Ok
    );
    assert_eq!((frames, mels), (16, 16));
    let mut coarse = 0;
    assert_eq!(
        unsafe { hgrl_model_has_coarse(m, &mut coarse) },
        HgrlStatus::Ok
    );
    assert_eq!(coarse, 1);

    let x: Vec<f32> = (0..2 * 16 * 16).map(|i| (i as f32 * 0.1).sin()).collect();
    let (mut fae, mut cae, mut ar) = (vec![f32::NAN; 48], vec![f32::NAN; 14], vec![f32::NAN; 2]);
    let st = unsafe {
        hgrl_model_predict(
            m,
            x.as_ptr(),
            2,
            fae.as_mut_ptr(),
            cae.as_mut_ptr(),
            ar.as_mut_ptr(),
        )
    };
    assert_eq!(st, HgrlStatus::Ok);
    assert!(fae.iter().chain(&cae).all(|p| (0.0..=1.0).contains(p)));
    assert!(ar.iter().all(|v| v.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("w.hgw").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { hgrl_model_save_weights(m, path.as_ptr()) },
        HgrlStatus::Ok
    );
    let other = new_model("fcAR-SL");
    assert_eq!(
        unsafe { hgrl_model_load_weights(other, path.as_ptr(), 0) },
        HgrlStatus::Ok
    );
    let mut ar2 = vec![0.0f32; 2];
    let st = unsafe {
        hgrl_model_predict(
            other,
            x.as_ptr(),
            2,
            ptr::null_mut(),
            ptr::null_mut(),
            ar2.as_mut_ptr(),
        )
    };
    assert_eq!(st, HgrlStatus::Ok);
    assert_eq!(ar, ar2);

    // a different architecture cannot take these weights
    let far = new_model("fAR");
    assert_eq!(
        unsafe { hgrl_model_load_weights(far, path.as_ptr(), 0) },
        HgrlStatus::ShapeMismatch
    );
    assert!(!last_error().is_empty());
    assert_eq!(
        unsafe { hgrl_model_load_weights(far, path.as_ptr(), 1) },
        HgrlStatus::Ok
    );

    unsafe {
        hgrl_model_free(m);
        hgrl_model_free(other);
        hgrl_model_free(far);
        hgrl_model_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_reported() {
    let mut m = ptr::null_mut();
    let bad = CString::new("gcn").unwrap();
    assert_eq!(
        unsafe { hgrl_model_new(bad.as_ptr(), 16, 16, 0, &mut m) },
        HgrlStatus::InvalidArgument
    );
    assert!(last_error().contains("gcn"));
    assert!(m.is_null());
    assert_eq!(
        unsafe { hgrl_model_new(ptr::null(), 16, 16, 0, &mut m) },
        HgrlStatus::NullPointer
    );
    let ok = CString::new("fAR").unwrap();
    assert_eq!(
        unsafe { hgrl_model_new(ok.as_ptr(), 4, 4, 0, &mut m) },
        HgrlStatus::InvalidArgument
    );

    let mut n = 0;
    assert_eq!(
        unsafe { hgrl_model_num_params(ptr::null_mut(), &mut n) },
        HgrlStatus::NullPointer
    );

    let m = new_model("fAR");
    assert!(hgrl_last_error().is_null(), "success clears the error");
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.hgw");
    std::fs::write(&file, b"NOPE").unwrap();
    let p = CString::new(file.to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { hgrl_model_load_weights(m, p.as_ptr(), 0) },
        HgrlStatus::Format
    );
    assert!(last_error().contains("offset 0"));
    let missing = CString::new(dir.path().join("none.hgw").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { hgrl_model_load_weights(m, missing.as_ptr(), 0) },
        HgrlStatus::Io
    );
    let x = [0.0f32; 16];
    assert_eq!(
        unsafe {
            hgrl_model_predict(
                m,
                x.as_ptr(),
                0,
                ptr::null_mut(),
                ptr::null_mut(),
                ptr::null_mut(),
            )
        },
        HgrlStatus::InvalidArgument
    );
    unsafe { hgrl_model_free(m) };
}

#[test]
fn wav_prediction_uses_config_features() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "variant = \"fcAR-UL\"\n[encoder]\nchannels = [2, 2, 2, 2]\nembed_dim = 4\nnode_dim = 3\n\
         [data.synth]\nn_clips = 8\nduration_secs = 0.6\n",
    )
    .unwrap();
    let cp = CString::new(cfg.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(
        unsafe { hgrl_model_from_config(cp.as_ptr(), &mut m) },
        HgrlStatus::Ok,
        "{}",
        last_error()
    );

    let wav = dir.path().join("a.wav");
    let samples: Vec<f32> = (0..19_200).map(|i| (i as f32 * 0.05).sin() * 0.1).collect();
    let clip = hgrl::dsp::AudioClip::mono(samples, 32_000).unwrap();
    hgrl::dsp::write_wav16(&wav, &clip).unwrap();
    let wp = CString::new(wav.to_str().unwrap()).unwrap();
    let (mut fae, mut cae, mut ar) = ([0.0f32; 24], [0.0f32; 7], [0.0f32; 1]);
    let st = unsafe {
        hgrl_model_predict_wav(
            m,
            wp.as_ptr(),
            fae.as_mut_ptr(),
            cae.as_mut_ptr(),
            ar.as_mut_ptr(),
        )
    };
    assert_eq!(st, HgrlStatus::Ok, "{}", last_error());
    assert!(cae.iter().all(|p| *p > 0.0 && *p < 1.0));

    let short = hgrl::dsp::AudioClip::mono(vec![0.0; 9_000], 32_000).unwrap();
    hgrl::dsp::write_wav16(&wav, &short).unwrap();
    let st = unsafe {
        hgrl_model_predict_wav(
            m,
            wp.as_ptr(),
            fae.as_mut_ptr(),
            ptr::null_mut(),
            ptr::null_mut(),
        )
    };
    assert_eq!(st, HgrlStatus::ShapeMismatch);
    unsafe { hgrl_model_free(m) };
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/hgrl.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in [
        "hgrl_last_error",
        "hgrl_model_new",
        "hgrl_model_from_config",
        "hgrl_model_free",
        "hgrl_model_predict",
        "hgrl_model_predict_wav",
        "hgrl_model_load_weights",
        "hgrl_model_save_weights",
        "typedef struct HgrlModel HgrlModel",
        "HGRL_STATUS_OK = 0",
    ] {
        assert!(text.contains(f), "header lacks {f}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"hgrl.h\"\nint main(void) { HgrlModel *m = 0; \
         HgrlStatus s = hgrl_model_new(\"fAR\", 16, 16, 0, &m); hgrl_model_free(m); return (int)s; }\n",
    )
    .unwrap();
    let out = match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    {
        Ok(o) => o,
        Err(e) => {
            eprintln!("skipping C compile check: {e}");
            return;
        }
    };
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
