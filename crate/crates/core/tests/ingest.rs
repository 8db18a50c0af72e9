mod common;

use common::ulog_fixtures::{check_fixture, malformed_headers};

use nalgebra::Vector4;
use proptest::prelude::*;
use quadsysid::ingest::{
    self, parse_crazyflie_csv, parse_ulog, resample_sync, write_crazyflie_csv, write_dataset_ulog, Channel,
    ChannelMapping, ChannelRef, IngestError, RawLog, UlogWriter,
};
use quadsysid::sim::{builtin_flight, run_scripts, NoiseModel, QuadrotorParams, SimOptions};

#[test]
fn randomized_ulog_fixtures_round_trip_exactly() {
    for seed in 0..50 {
        check_fixture(seed).unwrap();
    }
}

/// Bytes assembled by hand, without the writer.
#[test]
fn hand_built_ulog() {
    fn msg(out: &mut Vec<u8>, kind: u8, payload: &[u8]) {
        out.extend_from_slice(&(payload.len() as u16).to_le_bytes());
        out.push(kind);
        out.extend_from_slice(payload);
    }
    let mut b = vec![0x55, 0x4C, 0x6F, 0x67, 0x01, 0x12, 0x35, 0x01];
    b.extend_from_slice(&1234u64.to_le_bytes());
    msg(&mut b, b'F', b"imu:uint64_t timestamp;int16_t[2] raw;float temp;");
    let mut sub = vec![0u8];
    sub.extend_from_slice(&7u16.to_le_bytes());
    sub.extend_from_slice(b"imu");
    msg(&mut b, b'A', &sub);
    for (ts, raw, temp) in [(1_000u64, [-3i16, 4], 21.5f32), (3_500, [100, -200], -1.25)] {
        let mut d = 7u16.to_le_bytes().to_vec();
        d.extend_from_slice(&ts.to_le_bytes());
        d.extend_from_slice(&raw[0].to_le_bytes());
        d.extend_from_slice(&raw[1].to_le_bytes());
        d.extend_from_slice(&temp.to_le_bytes());
        msg(&mut b, b'D', &d);
    }
    let log = parse_ulog(&b).unwrap();
    let ch = &log.channels["imu"];
    assert_eq!(ch.fields, ["raw[0]", "raw[1]", "temp"]);
    assert_eq!(ch.timestamps, [0.001, 0.0035]);
    assert_eq!(ch.values, [vec![-3.0, 4.0, 21.5], vec![100.0, -200.0, -1.25]]);
    assert_eq!(log.metadata["start_time_us"], "1234");

    // cut inside the last data message
    let cut = &b[..b.len() - 3];
    assert!(matches!(parse_ulog(cut), Err(IngestError::TruncatedMessage { .. })));
}

#[test]
fn malformed_headers_are_rejected() {
    for (i, c) in malformed_headers().iter().enumerate() {
        assert_eq!(parse_ulog(c), Err(IngestError::MagicMismatch), "case {i}");
    }
}

#[test]
fn unsupported_version_and_incompat_flags() {
    let mut w = UlogWriter::with_version(0, 9);
    w.format("x", "uint64_t timestamp;float v;");
    assert!(matches!(parse_ulog(&w.finish()), Err(IngestError::UnsupportedVersion(_))));

    let mut b = UlogWriter::new(0).finish();
    // first flag-bits message starts right after the 16-byte header; set an
    // unknown incompat bit (payload byte 8)
    b[16 + 3 + 8] = 0x80;
    assert!(matches!(parse_ulog(&b), Err(IngestError::UnsupportedVersion(_))));
}

#[test]
fn out_of_order_samples_are_dropped_and_counted() {
    let mut w = UlogWriter::new(0);
    w.format("s", "uint64_t timestamp;double v;");
    let id = w.subscribe("s", 0);
    for (t, v) in [(10u64, 1.0), (20, 2.0), (15, 9.0), (30, 3.0)] {
        w.data(id, t, &[v]);
    }
    let log = parse_ulog(&w.finish()).unwrap();
    assert_eq!(log.channels["s"].values, [vec![1.0], vec![2.0], vec![3.0]]);
    assert_eq!(log.dropped_samples(), 1);
}

fn simulated(noise: bool, angular: bool) -> quadsysid::dataset::SysIdDataset {
    let mut scripts = builtin_flight();
    for s in &mut scripts {
        s.duration_s = 2.0;
        if noise {
            s.noise = NoiseModel {
                accel_std_m_s2: 0.1,
                gyro_std_rad_s: 0.01,
            };
            s.seed = 3;
        }
    }
    run_scripts(
        &scripts,
        &QuadrotorParams::crazyflie(),
        0.001,
        SimOptions {
            record_angular_accel: angular,
        },
    )
    .unwrap()
}

fn max_abs_diff<const N: usize>(a: &[nalgebra::SVector<f64, N>], b: &[nalgebra::SVector<f64, N>]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

#[test]
fn simulated_csv_resamples_back() {
    let ds = simulated(true, true);
    let mut mapping = ChannelMapping::crazyflie();
    mapping.angular_accel = Some(ChannelRef::named("alpha", &["x", "y", "z"]));
    let text = write_crazyflie_csv(&ds, &mapping).unwrap();
    let log = parse_crazyflie_csv(&text, &mapping).unwrap();
    let back = resample_sync(&log, &mapping, ds.dt()).unwrap();
    assert_eq!(back.len(), ds.len());
    assert!(max_abs_diff(back.accel(), ds.accel()) < 1e-9);
    assert!(max_abs_diff(back.gyro(), ds.gyro()) < 1e-9);
    assert!(max_abs_diff(back.setpoints(), ds.setpoints()) < 1e-9);
    assert!(max_abs_diff(back.angular_accel().unwrap(), ds.angular_accel().unwrap()) < 1e-9);
}

#[test]
fn simulated_ulog_resamples_back() {
    let ds = simulated(false, false);
    let log = parse_ulog(&write_dataset_ulog(&ds)).unwrap();
    let back = resample_sync(&log, &ChannelMapping::default(), ds.dt()).unwrap();
    assert_eq!(back.len(), ds.len());
    assert!(max_abs_diff(back.accel(), ds.accel()) < 1e-9);
    assert!(max_abs_diff(back.setpoints(), ds.setpoints()) < 1e-12);
}

fn sine_log(rate_hz: f64, freq_hz: f64, duration: f64) -> RawLog {
    let mut log = RawLog::default();
    let n = (duration * rate_hz) as usize + 1;
    let w = 2.0 * std::f64::consts::PI * freq_hz;
    let mut acc = Channel::new(vec!["x".into(), "y".into(), "z".into()]);
    let mut gyro = acc.clone();
    let mut motor = Channel::new(["m1", "m2", "m3", "m4"].map(String::from).to_vec());
    for k in 0..n {
        let t = k as f64 / rate_hz;
        acc.push(t, vec![(w * t).sin(), 0.0, 9.81]);
        gyro.push(t, vec![0.0, (w * t).cos(), 0.0]);
        motor.push(t, vec![0.5; 4]);
    }
    log.channels.insert("acc".into(), acc);
    log.channels.insert("gyro".into(), gyro);
    log.channels.insert("motor".into(), motor);
    log
}

/// Linear interpolation of a sine sampled at spacing h errs by at most
/// `h^2 w^2 / 8`.
#[test]
fn linear_interpolation_error_bound() {
    let (rate, f) = (250.0, 3.0);
    let log = sine_log(rate, f, 2.0);
    let ds = resample_sync(&log, &ChannelMapping::default(), 0.0007).unwrap();
    let w = 2.0 * std::f64::consts::PI * f;
    let bound = (1.0 / rate).powi(2) * w * w / 8.0;
    let mut worst = 0.0f64;
    for k in 0..ds.len() {
        let t = ds.time(k);
        worst = worst.max((ds.accel()[k].x - (w * t).sin()).abs());
        worst = worst.max((ds.gyro()[k].y - (w * t).cos()).abs());
    }
    assert!(worst <= bound * (1.0 + 1e-9), "error {worst} exceeds {bound}");
    assert!(worst > bound * 0.5);
}

#[test]
fn zero_order_hold_for_commands() {
    let mut log = sine_log(100.0, 1.0, 1.0);
    let mut motor = Channel::new(["m1", "m2", "m3", "m4"].map(String::from).to_vec());
    motor.push(0.0, vec![0.1; 4]);
    motor.push(0.5, vec![0.9; 4]);
    motor.push(1.0, vec![0.2; 4]);
    log.channels.insert("motor".into(), motor);
    let ds = resample_sync(&log, &ChannelMapping::default(), 0.01).unwrap();
    for k in 0..ds.len() {
        let t = ds.time(k);
        let want = if t < 0.5 - 1e-12 { 0.1 } else if t < 1.0 - 1e-12 { 0.9 } else { 0.2 };
        assert_eq!(ds.setpoints()[k], Vector4::repeat(want), "t = {t}");
    }
}

#[test]
fn missing_channel_is_reported() {
    let mut log = sine_log(100.0, 1.0, 1.0);
    log.channels.remove("gyro");
    assert_eq!(
        resample_sync(&log, &ChannelMapping::default(), 0.01).unwrap_err(),
        IngestError::MissingChannel("gyro".into())
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn resampled_length(start in 0.0f64..5.0, span in 0.05f64..3.0, rate in 50.0f64..400.0, dt in 0.0005f64..0.02) {
        let mut log = RawLog::default();
        let n = (span * rate).ceil() as usize + 2;
        for (name, fields) in [("acc", 3), ("gyro", 3), ("motor", 4)] {
            let names = match fields {
                3 => vec!["x".into(), "y".into(), "z".into()],
                _ => ["m1", "m2", "m3", "m4"].map(String::from).to_vec(),
            };
            let mut ch = Channel::new(names);
            for k in 0..n {
                ch.push(start + k as f64 / rate, vec![0.25; fields]);
            }
            log.channels.insert(name.into(), ch);
        }
        let end = start + (n - 1) as f64 / rate;
        let ds = resample_sync(&log, &ChannelMapping::default(), dt).unwrap();
        prop_assert_eq!(ds.len(), ingest::grid_len(start, end, dt));
        prop_assert!(ds.time(ds.len() - 1) <= end + 1e-9);
        prop_assert!(ds.time(ds.len() - 1) + dt > end - 1e-9);
        prop_assert!((ds.t0() - start).abs() < 1e-12);
    }

    #[test]
    fn csv_cells_round_trip(values in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
        let mut text = String::from("timestamp,acc.x\n");
        for (k, v) in values.iter().enumerate() {
            text.push_str(&format!("{k},{v}\n"));
        }
        let log = ingest::parse_csv(&text, &Default::default()).unwrap();
        let got: Vec<f64> = log.channels["acc"].values.iter().map(|v| v[0]).collect();
        prop_assert_eq!(got, values);
    }
}
