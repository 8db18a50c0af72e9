use std::collections::BTreeMap;

use quadsysid::ingest::{parse_ulog, write_ulog, UlogWriter};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SCALARS: [&str; 11] = [
    "int8_t", "uint8_t", "int16_t", "uint16_t", "int32_t", "uint32_t", "int64_t", "uint64_t", "float", "double", "bool",
];

/// A value exactly representable in the named type.
fn sample(rng: &mut ChaCha8Rng, ty: &str) -> f64 {
    match ty {
        "int8_t" => rng.random_range(i8::MIN..=i8::MAX) as f64,
        "uint8_t" => rng.random_range(0..=u8::MAX) as f64,
        "int16_t" => rng.random_range(i16::MIN..=i16::MAX) as f64,
        "uint16_t" => rng.random_range(0..=u16::MAX) as f64,
        "int32_t" => rng.random_range(i32::MIN..=i32::MAX) as f64,
        "uint32_t" => rng.random_range(0..=u32::MAX) as f64,
        "int64_t" => rng.random_range(-(1i64 << 53)..(1i64 << 53)) as f64,
        "uint64_t" => rng.random_range(0..(1u64 << 53)) as f64,
        "float" => ((rng.random::<f32>() - 0.5) * 10f32.powi(rng.random_range(-6..6))) as f64,
        "double" => (rng.random::<f64>() - 0.5) * 10f64.powi(rng.random_range(-12..12)),
        "bool" => rng.random_range(0..2) as f64,
        _ => unreachable!(),
    }
}

struct Topic {
    name: String,
    /// Flattened leaf names with their types.
    leaves: Vec<(String, &'static str)>,
    multi: u8,
}

/// Field names, microsecond timestamps and rows of one channel.
pub type ChannelContents = (Vec<String>, Vec<u64>, Vec<Vec<f64>>);

pub struct Fixture {
    pub bytes: Vec<u8>,
    pub expected: BTreeMap<String, ChannelContents>,
    pub params: usize,
}

/// Build a randomized log with its expected channel contents tracked
/// independently of the parser.
pub fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = UlogWriter::new(rng.random_range(0..1_000_000));
    w.info_str("sys_name", "fixture");
    let params = rng.random_range(0..4);
    for p in 0..params {
        if rng.random_bool(0.5) {
            w.parameter_f32(&format!("P_F{p}"), rng.random());
        } else {
            w.parameter_i32(&format!("P_I{p}"), rng.random());
        }
    }

    let nested = rng.random_bool(0.5);
    if nested {
        w.format("vec3", "float x;float y;float z;");
    }

    let mut topics = Vec::new();
    for t in 0..rng.random_range(1..4) {
        let mut body = String::new();
        let mut leaves = Vec::new();
        // the timestamp is not always first
        let ts_pos = rng.random_range(0..2);
        let nfields = rng.random_range(1..6);
        for f in 0..nfields {
            if f == ts_pos {
                body.push_str("uint64_t timestamp;");
            }
            let ty = SCALARS[rng.random_range(0..SCALARS.len())];
            match rng.random_range(0..6) {
                0 => {
                    let n = rng.random_range(1..4);
                    body.push_str(&format!("{ty}[{n}] a{f};"));
                    leaves.extend((0..n).map(|i| (format!("a{f}[{i}]"), ty)));
                }
                1 if nested => {
                    body.push_str(&format!("vec3 v{f};"));
                    leaves.extend(["x", "y", "z"].iter().map(|c| (format!("v{f}.{c}"), "float")));
                }
                2 => {
                    body.push_str(&format!("uint8_t[{}] _padding{f};", rng.random_range(1..4)));
                }
                _ => {
                    body.push_str(&format!("{ty} f{f};"));
                    leaves.push((format!("f{f}"), ty));
                }
            }
        }
        if ts_pos >= nfields {
            body.push_str("uint64_t timestamp;");
        }
        let name = format!("topic{t}");
        w.format(&name, &body);
        topics.push(Topic {
            name,
            leaves,
            multi: 0,
        });
    }
    if rng.random_bool(0.5) {
        let first = &topics[0];
        topics.push(Topic {
            name: first.name.clone(),
            leaves: first.leaves.clone(),
            multi: 1,
        });
    }

    let ids: Vec<u16> = topics.iter().map(|t| w.subscribe(&t.name, t.multi)).collect();
    let key = |t: &Topic| {
        if t.multi == 0 {
            t.name.clone()
        } else {
            format!("{}.{}", t.name, t.multi)
        }
    };
    // subscribed topics appear even without samples
    let mut expected: BTreeMap<_, _> = topics
        .iter()
        .map(|t| (key(t), (t.leaves.iter().map(|(n, _)| n.clone()).collect(), Vec::new(), Vec::new())))
        .collect();
    let mut clocks = vec![rng.random_range(0..1000u64); topics.len()];
    for _ in 0..rng.random_range(5..60) {
        let k = rng.random_range(0..topics.len());
        let topic = &topics[k];
        clocks[k] += rng.random_range(0..5000);
        let values: Vec<f64> = topic.leaves.iter().map(|(_, ty)| sample(&mut rng, ty)).collect();
        w.data(ids[k], clocks[k], &values);
        let e: &mut ChannelContents = expected.get_mut(&key(topic)).unwrap();
        e.1.push(clocks[k]);
        e.2.push(values);

        match rng.random_range(0..8) {
            0 => w.logged_string(6, clocks[k], "status"),
            1 => w.sync(),
            2 => w.message(b'Z', &[1, 2, 3]),
            _ => {}
        }
    }
    Fixture {
        bytes: w.finish(),
        expected,
        params,
    }
}

/// Parse a fixture and compare every channel bit for bit against what was
/// written, then check that re-encoding the parsed log is a fixed point.
pub fn check_fixture(seed: u64) -> Result<(), String> {
    let fx = fixture(seed);
    let log = parse_ulog(&fx.bytes).map_err(|e| format!("fixture {seed}: {e}"))?;
    let names: Vec<&String> = fx.expected.keys().collect();
    if log.channels.keys().collect::<Vec<_>>() != names {
        return Err(format!("fixture {seed}: channel set differs"));
    }
    for (name, (fields, ts, values)) in &fx.expected {
        let ch = &log.channels[name];
        if &ch.fields != fields {
            return Err(format!("fixture {seed} channel {name}: fields {:?} vs {fields:?}", ch.fields));
        }
        let us: Vec<u64> = ch.timestamps.iter().map(|t| (t * 1e6).round() as u64).collect();
        if &us != ts {
            return Err(format!("fixture {seed} channel {name}: timestamps differ"));
        }
        if ch.values.len() != values.len() {
            return Err(format!("fixture {seed} channel {name}: sample count differs"));
        }
        for (got, want) in ch.values.iter().zip(values) {
            let gb: Vec<u64> = got.iter().map(|v| v.to_bits()).collect();
            let wb: Vec<u64> = want.iter().map(|v| v.to_bits()).collect();
            if gb != wb {
                return Err(format!("fixture {seed} channel {name}: {got:?} vs {want:?}"));
            }
        }
    }
    let params = log.metadata.keys().filter(|k| k.starts_with("param.")).count();
    if params != fx.params || log.metadata.get("sys_name").map(String::as_str) != Some("fixture") {
        return Err(format!("fixture {seed}: metadata differs"));
    }
    let again = write_ulog(&log);
    let back = parse_ulog(&again).map_err(|e| format!("fixture {seed} re-encoded: {e}"))?;
    if back.channels != log.channels || write_ulog(&back) != again {
        return Err(format!("fixture {seed}: re-encoding is not a fixed point"));
    }
    Ok(())
}

/// Byte strings that must not be taken for a ULog header.
pub fn malformed_headers() -> Vec<Vec<u8>> {
    let good = fixture(1).bytes;
    let mut cases: Vec<Vec<u8>> = vec![
        Vec::new(),
        vec![0x55],
        b"ULo".to_vec(),
        b"timestamp,acc.x\n0,1\n".to_vec(),
        vec![0u8; 64],
        good[1..].to_vec(),
    ];
    for i in 0..7 {
        let mut b = good.clone();
        b[i] ^= 0xA5;
        cases.push(b);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let n = rng.random_range(0..40);
        let mut b: Vec<u8> = (0..n).map(|_| rng.random()).collect();
        if b.starts_with(b"ULog") {
            b[0] = 0;
        }
        cases.push(b);
    }
    cases
}
