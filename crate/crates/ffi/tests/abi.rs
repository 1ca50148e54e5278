use std::ffi::{c_char, CStr, CString};
use std::ptr;

use covdetect::config::preset_text;
use covdetect_ffi::*;

fn general(delta: f64) -> CdScenarioParams {
    CdScenarioParams {
        tx_antennas: 8,
        rx_antennas: 2,
        aod_deg: 0.0,
        spread_deg: 30.0,
        wavelength_m: 0.15,
        quadrature_nodes: 0,
        delta_aod_deg: delta,
        tx_power_dbm: 23.0,
        distance_km: 0.1,
        bandwidth_hz: 10e6,
        noise_psd_dbm_hz: -169.0,
        pilot_len: 8,
    }
}

fn last_error() -> String {
    unsafe {
        let n = cd_last_error_message(ptr::null_mut(), 0);
        let mut buf = vec![0 as c_char; n + 1];
        assert_eq!(cd_last_error_message(buf.as_mut_ptr(), buf.len()), n);
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn experiment(delta: f64) -> *mut CdExperiment {
    let mut exp = ptr::null_mut();
    assert_eq!(unsafe { cd_experiment_new(&general(delta), &mut exp) }, CdStatus::Ok);
    exp
}

#[test]
fn divergence_grows_with_angle_shift() {
    let (a, b) = (experiment(0.5), experiment(1.0));
    let (mut pa, mut pb) = (0.0, 0.0);
    unsafe {
        assert_eq!(cd_experiment_dim(a), 16);
        assert_eq!(cd_experiment_divergence(a, &mut pa), CdStatus::Ok);
        assert_eq!(cd_experiment_divergence(b, &mut pb), CdStatus::Ok);
        cd_experiment_free(a);
        cd_experiment_free(b);
    }
    assert!(pb > pa && pa > 0.0);
    assert_eq!(last_error(), "");
}

#[test]
fn invalid_parameters_report_status_and_message() {
    let mut exp = ptr::null_mut();
    let bad = CdScenarioParams { spread_deg: 0.0, ..general(1.0) };
    assert_eq!(unsafe { cd_experiment_new(&bad, &mut exp) }, CdStatus::InvalidArgument);
    assert!(exp.is_null());
    assert!(last_error().contains("spread"), "{}", last_error());
    assert_eq!(unsafe { cd_experiment_new(ptr::null(), &mut exp) }, CdStatus::NullPointer);
    assert!(last_error().contains("params"));
    let name = unsafe { CStr::from_ptr(cd_status_name(CdStatus::NullPointer)) };
    assert_eq!(name.to_str().unwrap(), "null pointer");
    unsafe { cd_experiment_free(ptr::null_mut()) };
}

#[test]
fn cusum_handle_follows_the_recursion() {
    let exp = experiment(1.0);
    let mut det = ptr::null_mut();
    unsafe {
        assert_eq!(cd_cusum_new(exp, &mut det), CdStatus::Ok);
        cd_experiment_free(exp);
        let mut step = CdCusumStep::default();
        let zero = vec![0.0; 32];
        // a zero channel has LLR equal to the log-determinant ratio alone
        assert_eq!(cd_cusum_push(det, zero.as_ptr(), zero.len(), &mut step), CdStatus::Ok);
        assert_eq!(step.interval, 1);
        assert!(step.statistic >= 0.0);
        assert_eq!(cd_cusum_push(det, zero.as_ptr(), 31, &mut step), CdStatus::InvalidArgument);
        assert!(last_error().contains("expected 32"));
        assert_eq!(cd_cusum_reset(det), CdStatus::Ok);
        assert_eq!(cd_cusum_push(det, zero.as_ptr(), zero.len(), &mut step), CdStatus::Ok);
        assert_eq!(step.interval, 1);
        cd_cusum_free(det);
    }
}

#[test]
fn sweep_matches_library() {
    use covdetect::harness::{sweep_tradeoff, DetectorSpec, Experiment, SweepConfig, DEFAULT_NU_GRID};
    use covdetect::onering::{ChangePoint, LinkBudget, OneRingParams, Scenario};
    let exp = experiment(1.0);
    let thetas = [1.0, 3.0];
    let params = CdSweepParams {
        trials_far: 100,
        trials_delay: 100,
        max_run_length: 100_000,
        seed: 5,
        workers: 1,
    };
    let mut points = [CdTradeoffPoint::default(); 2];
    let status = unsafe { cd_sweep_cusum(exp, &params, thetas.as_ptr(), 2, points.as_mut_ptr()) };
    assert_eq!(status, CdStatus::Ok);
    unsafe { cd_experiment_free(exp) };

    let p = general(1.0);
    let scenario = Scenario {
        params_pre: OneRingParams {
            tx_antennas: 8,
            rx_antennas: 2,
            aod_deg: 0.0,
            spread_deg: 30.0,
            wavelength_m: 0.15,
            quadrature_nodes: 1024,
        },
        delta_aod_deg: 1.0,
        link: LinkBudget {
            tx_power_dbm: p.tx_power_dbm,
            distance_km: p.distance_km,
            bandwidth_hz: p.bandwidth_hz,
            noise_psd_dbm_hz: p.noise_psd_dbm_hz,
            pilot_len: p.pilot_len,
        },
        change_point: ChangePoint::At(1),
        horizon: 1,
        seed: 0,
    };
    let lib = Experiment::from_scenario(&scenario, "x").unwrap();
    let cfg = SweepConfig {
        thetas: thetas.to_vec(),
        trials_far: 100,
        trials_delay: 100,
        max_run_length: 100_000,
        nu_grid: DEFAULT_NU_GRID.to_vec(),
        seed: 5,
        workers: 1,
    };
    let expected = sweep_tradeoff(&DetectorSpec::Cusum, &lib, &cfg).unwrap();
    for (got, want) in points.iter().zip(&expected) {
        assert_eq!((got.theta, got.far, got.cadd), (want.theta, want.far, want.cadd));
    }
}

#[test]
fn censored_sweep_maps_to_its_own_status() {
    let exp = experiment(1.0);
    let params = CdSweepParams {
        trials_far: 100,
        trials_delay: 100,
        max_run_length: 1000,
        seed: 5,
        workers: 1,
    };
    let thetas = [500.0];
    let mut point = CdTradeoffPoint::default();
    let status = unsafe { cd_sweep_cusum(exp, &params, thetas.as_ptr(), 1, &mut point) };
    unsafe { cd_experiment_free(exp) };
    assert_eq!(status, CdStatus::Censored);
    assert!(last_error().contains("censored"));
    assert_eq!((point.theta, point.censored), (500.0, 100));
}

#[test]
fn config_round_trip_and_run() {
    let text = CString::new(preset_text("fig5_general_mimo").unwrap()).unwrap();
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(cd_config_parse(text.as_ptr(), &mut cfg), CdStatus::Ok);
        let mut written = 0;
        assert_eq!(cd_config_to_toml(cfg, ptr::null_mut(), 0, &mut written), CdStatus::BufferTooSmall);
        let mut buf = vec![0 as c_char; written + 1];
        assert_eq!(cd_config_to_toml(cfg, buf.as_mut_ptr(), buf.len(), &mut written), CdStatus::Ok);
        let again = CStr::from_ptr(buf.as_ptr()).to_owned();
        let mut cfg2 = ptr::null_mut();
        assert_eq!(cd_config_parse(again.as_ptr(), &mut cfg2), CdStatus::Ok);
        cd_config_free(cfg2);
        cd_config_free(cfg);
    }

    let bad = CString::new("").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { cd_config_parse(bad.as_ptr(), &mut cfg) }, CdStatus::Config);
    assert!(last_error().contains("missing scenario section"));

    let small = CString::new(
        r#"task = "divergence"
seed = 1
output = "div"

[scenario]
tx_antennas = 2
rx_antennas = 1
aod_deg = 0.0
spread_deg = 30.0
wavelength_m = 0.15
delta_aod_deg = [1.0]

[scenario.link]
tx_power_dbm = 23.0
distance_km = 0.1
bandwidth_hz = 10e6
noise_psd_dbm_hz = -169.0
pilot_len = 8
"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut success = -1;
    unsafe {
        assert_eq!(cd_config_parse(small.as_ptr(), &mut cfg), CdStatus::Ok);
        assert_eq!(cd_config_run(cfg, out.as_ptr(), 1, &mut success), CdStatus::Ok);
        cd_config_free(cfg);
    }
    assert_eq!(success, 1);
    assert!(dir.path().join("div_divergence.csv").exists());
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/covdetect.h")).unwrap();
    for name in [
        "cd_last_error_message",
        "cd_experiment_new",
        "cd_experiment_free",
        "cd_sweep_cusum",
        "cd_cusum_push",
        "cd_config_run",
        "CD_STATUS_OK",
        "typedef struct CdExperiment CdExperiment",
    ] {
        assert!(header.contains(name), "{name}");
    }
}
