//! PX4 ULog reader and a small writer for fixtures and simulator output.
//!
//! Supported message types: flag bits (`B`), formats (`F`), info (`I`, `M`),
//! parameters (`P`, `Q`), subscriptions (`A`, `R`), data (`D`), logged
//! strings (`L`, `C`), sync (`S`) and dropouts (`O`). Anything else is
//! skipped.

use std::collections::{BTreeMap, HashMap};

use super::{Channel, IngestError, RawLog, DROPPED_KEY};
use crate::dataset::SysIdDataset;

pub const MAGIC: [u8; 7] = [0x55, 0x4C, 0x6F, 0x67, 0x01, 0x12, 0x35];
pub const HEADER_LEN: usize = 16;
pub const MAX_VERSION: u8 = 1;

const SYNC_MAGIC: [u8; 8] = [0x2F, 0x73, 0x13, 0x20, 0x25, 0x0C, 0xBB, 0x12];
const INCOMPAT_DATA_APPENDED: u8 = 1;
const MAX_NESTING: usize = 16;

/// Scalar types a ULog field can have.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UlogType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    I64,
    U64,
    F32,
    F64,
    Bool,
    Char,
}

impl UlogType {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "int8_t" => UlogType::I8,
            "uint8_t" => UlogType::U8,
            "int16_t" => UlogType::I16,
            "uint16_t" => UlogType::U16,
            "int32_t" => UlogType::I32,
            "uint32_t" => UlogType::U32,
            "int64_t" => UlogType::I64,
            "uint64_t" => UlogType::U64,
            "float" => UlogType::F32,
            "double" => UlogType::F64,
            "bool" => UlogType::Bool,
            "char" => UlogType::Char,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            UlogType::I8 => "int8_t",
            UlogType::U8 => "uint8_t",
            UlogType::I16 => "int16_t",
            UlogType::U16 => "uint16_t",
            UlogType::I32 => "int32_t",
            UlogType::U32 => "uint32_t",
            UlogType::I64 => "int64_t",
            UlogType::U64 => "uint64_t",
            UlogType::F32 => "float",
            UlogType::F64 => "double",
            UlogType::Bool => "bool",
            UlogType::Char => "char",
        }
    }

    pub fn size(self) -> usize {
        match self {
            UlogType::I8 | UlogType::U8 | UlogType::Bool | UlogType::Char => 1,
            UlogType::I16 | UlogType::U16 => 2,
            UlogType::I32 | UlogType::U32 | UlogType::F32 => 4,
            UlogType::I64 | UlogType::U64 | UlogType::F64 => 8,
        }
    }

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            UlogType::I8 => b[0] as i8 as f64,
            UlogType::U8 | UlogType::Bool | UlogType::Char => b[0] as f64,
            UlogType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            UlogType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            UlogType::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            UlogType::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            UlogType::I64 => i64::from_le_bytes(b[..8].try_into().unwrap()) as f64,
            UlogType::U64 => u64::from_le_bytes(b[..8].try_into().unwrap()) as f64,
            UlogType::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            UlogType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn encode(self, v: f64, out: &mut [u8]) {
        match self {
            UlogType::I8 => out[0] = v as i8 as u8,
            UlogType::U8 | UlogType::Char => out[0] = v as u8,
            UlogType::Bool => out[0] = (v != 0.0) as u8,
            UlogType::I16 => out[..2].copy_from_slice(&(v as i16).to_le_bytes()),
            UlogType::U16 => out[..2].copy_from_slice(&(v as u16).to_le_bytes()),
            UlogType::I32 => out[..4].copy_from_slice(&(v as i32).to_le_bytes()),
            UlogType::U32 => out[..4].copy_from_slice(&(v as u32).to_le_bytes()),
            UlogType::I64 => out[..8].copy_from_slice(&(v as i64).to_le_bytes()),
            UlogType::U64 => out[..8].copy_from_slice(&(v as u64).to_le_bytes()),
            UlogType::F32 => out[..4].copy_from_slice(&(v as f32).to_le_bytes()),
            UlogType::F64 => out[..8].copy_from_slice(&v.to_le_bytes()),
        }
    }
}

/// A parsed `type[len] name` field declaration.
#[derive(Debug, Clone, PartialEq)]
struct FieldDecl {
    type_name: String,
    array: Option<usize>,
    name: String,
}

fn parse_field_decl(decl: &str) -> Option<FieldDecl> {
    let (ty, name) = decl.trim().split_once(' ')?;
    let name = name.trim();
    if name.is_empty() {
        return None;
    }
    let (type_name, array) = match ty.split_once('[') {
        Some((base, rest)) => (base, Some(rest.strip_suffix(']')?.parse().ok()?)),
        None => (ty, None),
    };
    Some(FieldDecl {
        type_name: type_name.to_string(),
        array,
        name: name.to_string(),
    })
}

/// Split a format body `name:decl;decl;` into the message name and fields.
fn parse_format(text: &str) -> Option<(String, Vec<FieldDecl>)> {
    let (name, body) = text.split_once(':')?;
    let fields = body
        .split(';')
        .filter(|s| !s.trim().is_empty())
        .map(parse_field_decl)
        .collect::<Option<Vec<_>>>()?;
    Some((name.to_string(), fields))
}

/// A numeric leaf of a flattened message layout.
#[derive(Debug, Clone, PartialEq)]
struct Leaf {
    offset: usize,
    ty: UlogType,
    name: String,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    size: usize,
    timestamp_offset: usize,
    leaves: Vec<Leaf>,
}

fn flatten(
    formats: &HashMap<String, Vec<FieldDecl>>,
    fields: &[FieldDecl],
    prefix: &str,
    base: usize,
    depth: usize,
    leaves: &mut Vec<Leaf>,
) -> Option<usize> {
    if depth > MAX_NESTING {
        return None;
    }
    let mut offset = base;
    for f in fields {
        let count = f.array.unwrap_or(1);
        let padding = f.name.starts_with("_padding");
        match UlogType::parse(&f.type_name) {
            Some(ty) => {
                // char arrays are strings; padding only occupies space
                if !padding && ty != UlogType::Char {
                    for i in 0..count {
                        let name = match f.array {
                            Some(_) => format!("{prefix}{}[{i}]", f.name),
                            None => format!("{prefix}{}", f.name),
                        };
                        leaves.push(Leaf {
                            offset: offset + i * ty.size(),
                            ty,
                            name,
                        });
                    }
                }
                offset += count * ty.size();
            }
            None => {
                let nested = formats.get(&f.type_name)?;
                for i in 0..count {
                    let p = match f.array {
                        Some(_) => format!("{prefix}{}[{i}].", f.name),
                        None => format!("{prefix}{}.", f.name),
                    };
                    let mut sub = Vec::new();
                    offset = flatten(formats, nested, &p, offset, depth + 1, &mut sub)?;
                    if !padding {
                        leaves.extend(sub);
                    }
                }
            }
        }
    }
    Some(offset)
}

fn layout(formats: &HashMap<String, Vec<FieldDecl>>, name: &str) -> Option<Layout> {
    let fields = formats.get(name)?;
    let mut leaves = Vec::new();
    let size = flatten(formats, fields, "", 0, 0, &mut leaves)?;
    let ts = leaves.iter().position(|l| l.name == "timestamp" && l.ty == UlogType::U64)?;
    let timestamp_offset = leaves.remove(ts).offset;
    Some(Layout {
        size,
        timestamp_offset,
        leaves,
    })
}

struct Subscription {
    channel: String,
    layout: Option<Layout>,
}

fn read_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn read_u64(b: &[u8]) -> u64 {
    u64::from_le_bytes(b[..8].try_into().unwrap())
}

/// Render an info value according to its declared type.
fn info_value(decl: &FieldDecl, value: &[u8]) -> String {
    match UlogType::parse(&decl.type_name) {
        Some(UlogType::Char) => String::from_utf8_lossy(value).trim_end_matches('\0').to_string(),
        Some(ty) => value
            .chunks_exact(ty.size())
            .map(|c| ty.decode(c).to_string())
            .collect::<Vec<_>>()
            .join(","),
        None => hex::encode(value),
    }
}

fn split_key(payload: &[u8]) -> Option<(FieldDecl, &[u8])> {
    let len = *payload.first()? as usize;
    let key = payload.get(1..1 + len)?;
    let decl = parse_field_decl(std::str::from_utf8(key).ok()?)?;
    Some((decl, &payload[1 + len..]))
}

fn channel_name(name: &str, multi_id: u8) -> String {
    if multi_id == 0 {
        name.to_string()
    } else {
        format!("{name}.{multi_id}")
    }
}

/// Parse a ULog byte stream into channels keyed by topic name (`name.N` for
/// multi-instance topics with instance `N > 0`). Timestamps become seconds.
pub fn parse_ulog(bytes: &[u8]) -> Result<RawLog, IngestError> {
    if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
        return Err(IngestError::MagicMismatch);
    }
    if bytes.len() < HEADER_LEN {
        return Err(IngestError::TruncatedMessage { offset: 0 });
    }
    let version = bytes[7];
    if version > MAX_VERSION {
        return Err(IngestError::UnsupportedVersion(format!("version {version}")));
    }
    let mut log = RawLog::default();
    log.metadata.insert("ulog_version".into(), version.to_string());
    log.metadata.insert("start_time_us".into(), read_u64(&bytes[8..16]).to_string());

    let mut formats: HashMap<String, Vec<FieldDecl>> = HashMap::new();
    let mut subs: HashMap<u16, Subscription> = HashMap::new();
    let mut multi_info: BTreeMap<String, String> = BTreeMap::new();
    let (mut dropped, mut skipped, mut logged, mut dropouts) = (0usize, 0usize, 0usize, 0usize);

    let mut pos = HEADER_LEN;
    while pos < bytes.len() {
        if bytes.len() - pos < 3 {
            return Err(IngestError::TruncatedMessage { offset: pos });
        }
        let size = read_u16(&bytes[pos..]) as usize;
        let kind = bytes[pos + 2];
        let start = pos + 3;
        if bytes.len() - start < size {
            return Err(IngestError::TruncatedMessage { offset: pos });
        }
        let payload = &bytes[start..start + size];
        pos = start + size;
        match kind {
            b'B' => {
                if payload.len() >= 16 {
                    let incompat = &payload[8..16];
                    if incompat[0] & !INCOMPAT_DATA_APPENDED != 0 || incompat[1..].iter().any(|b| *b != 0) {
                        return Err(IngestError::UnsupportedVersion(format!(
                            "incompatible flags {}",
                            hex::encode(incompat)
                        )));
                    }
                }
            }
            b'F' => match std::str::from_utf8(payload).ok().and_then(parse_format) {
                Some((name, fields)) => {
                    formats.insert(name, fields);
                }
                None => skipped += 1,
            },
            b'I' => match split_key(payload) {
                Some((decl, value)) => {
                    log.metadata.insert(decl.name.clone(), info_value(&decl, value));
                }
                None => skipped += 1,
            },
            b'M' => match payload.split_first().and_then(|(_, rest)| split_key(rest)) {
                Some((decl, value)) => {
                    let text = info_value(&decl, value);
                    multi_info.entry(decl.name).or_default().push_str(&text);
                }
                None => skipped += 1,
            },
            b'P' => match split_key(payload) {
                Some((decl, value)) => {
                    log.metadata.insert(format!("param.{}", decl.name), info_value(&decl, value));
                }
                None => skipped += 1,
            },
            b'Q' => {}
            b'A' => {
                if payload.len() < 3 {
                    skipped += 1;
                    continue;
                }
                let multi_id = payload[0];
                let msg_id = read_u16(&payload[1..]);
                let name = String::from_utf8_lossy(&payload[3..]).to_string();
                let layout = layout(&formats, &name);
                let channel = channel_name(&name, multi_id);
                if let Some(l) = &layout {
                    log.channels
                        .entry(channel.clone())
                        .or_insert_with(|| Channel::new(l.leaves.iter().map(|f| f.name.clone()).collect()));
                } else {
                    log::warn!("no usable format for subscription `{name}`");
                    skipped += 1;
                }
                subs.insert(msg_id, Subscription { channel, layout });
            }
            b'R' => {
                if payload.len() >= 2 {
                    subs.remove(&read_u16(payload));
                }
            }
            b'D' => {
                if payload.len() < 2 {
                    skipped += 1;
                    continue;
                }
                let data = &payload[2..];
                let Some(Subscription {
                    channel,
                    layout: Some(l),
                }) = subs.get(&read_u16(payload))
                else {
                    skipped += 1;
                    continue;
                };
                if data.len() < l.size {
                    skipped += 1;
                    continue;
                }
                let t = read_u64(&data[l.timestamp_offset..]) as f64 / 1e6;
                let values = l.leaves.iter().map(|f| f.ty.decode(&data[f.offset..])).collect();
                let ch = log.channels.get_mut(channel).expect("created on subscription");
                if !ch.push(t, values) {
                    dropped += 1;
                }
            }
            b'L' | b'C' => logged += 1,
            b'S' => {
                if payload != SYNC_MAGIC {
                    skipped += 1;
                }
            }
            b'O' => dropouts += 1,
            _ => skipped += 1,
        }
    }

    for (k, v) in multi_info {
        log.metadata.insert(k, v);
    }
    log.metadata.insert(DROPPED_KEY.into(), dropped.to_string());
    if dropped > 0 {
        log::warn!("dropped {dropped} out-of-order samples");
    }
    for (key, n) in [("skipped_messages", skipped), ("logged_messages", logged), ("dropouts", dropouts)] {
        if n > 0 {
            log.metadata.insert(key.into(), n.to_string());
        }
    }
    Ok(log)
}

/// Incremental ULog encoder. Formats are given in the on-disk syntax, for
/// example `"uint64_t timestamp;float[3] xyz;"`.
pub struct UlogWriter {
    buf: Vec<u8>,
    formats: HashMap<String, Vec<FieldDecl>>,
    layouts: HashMap<u16, Layout>,
    next_id: u16,
}

impl UlogWriter {
    pub fn new(start_time_us: u64) -> Self {
        Self::with_version(start_time_us, MAX_VERSION)
    }

    pub fn with_version(start_time_us: u64, version: u8) -> Self {
        let mut buf = Vec::with_capacity(4096);
        buf.extend_from_slice(&MAGIC);
        buf.push(version);
        buf.extend_from_slice(&start_time_us.to_le_bytes());
        let mut w = UlogWriter {
            buf,
            formats: HashMap::new(),
            layouts: HashMap::new(),
            next_id: 0,
        };
        w.message(b'B', &[0u8; 40]);
        w
    }

    /// Append a raw message; used for flag bits and for exercising the
    /// reader with arbitrary record types.
    pub fn message(&mut self, kind: u8, payload: &[u8]) {
        let size = u16::try_from(payload.len()).expect("ULog messages are limited to 65535 bytes");
        self.buf.extend_from_slice(&size.to_le_bytes());
        self.buf.push(kind);
        self.buf.extend_from_slice(payload);
    }

    fn keyed(&mut self, kind: u8, prefix: &[u8], key: &str, value: &[u8]) {
        let mut p = prefix.to_vec();
        p.push(u8::try_from(key.len()).expect("key too long"));
        p.extend_from_slice(key.as_bytes());
        p.extend_from_slice(value);
        self.message(kind, &p);
    }

    pub fn info_str(&mut self, name: &str, value: &str) {
        self.keyed(b'I', &[], &format!("char[{}] {name}", value.len()), value.as_bytes());
    }

    pub fn parameter_f32(&mut self, name: &str, value: f32) {
        self.keyed(b'P', &[], &format!("float {name}"), &value.to_le_bytes());
    }

    pub fn parameter_i32(&mut self, name: &str, value: i32) {
        self.keyed(b'P', &[], &format!("int32_t {name}"), &value.to_le_bytes());
    }

    /// Register a message format. Panics on malformed definitions.
    pub fn format(&mut self, name: &str, body: &str) {
        let text = format!("{name}:{body}");
        let (_, fields) = parse_format(&text).expect("malformed format definition");
        self.formats.insert(name.to_string(), fields);
        self.message(b'F', text.as_bytes());
    }

    /// Subscribe to a registered format and return the message id for
    /// [`UlogWriter::data`]. Panics when the format is unknown or lacks a
    /// `uint64_t timestamp` field.
    pub fn subscribe(&mut self, name: &str, multi_id: u8) -> u16 {
        let l = layout(&self.formats, name).expect("format must be registered with a uint64_t timestamp");
        let id = self.next_id;
        self.next_id += 1;
        self.layouts.insert(id, l);
        let mut p = vec![multi_id];
        p.extend_from_slice(&id.to_le_bytes());
        p.extend_from_slice(name.as_bytes());
        self.message(b'A', &p);
        id
    }

    /// One sample; `values` are the numeric leaves in declaration order,
    /// timestamp excluded.
    pub fn data(&mut self, msg_id: u16, timestamp_us: u64, values: &[f64]) {
        let l = &self.layouts[&msg_id];
        assert_eq!(values.len(), l.leaves.len(), "value count does not match format");
        let mut p = vec![0u8; 2 + l.size];
        p[..2].copy_from_slice(&msg_id.to_le_bytes());
        let data = &mut p[2..];
        data[l.timestamp_offset..l.timestamp_offset + 8].copy_from_slice(&timestamp_us.to_le_bytes());
        for (leaf, &v) in l.leaves.iter().zip(values) {
            leaf.ty.encode(v, &mut data[leaf.offset..]);
        }
        self.message(b'D', &p);
    }

    pub fn logged_string(&mut self, level: u8, timestamp_us: u64, text: &str) {
        let mut p = vec![level];
        p.extend_from_slice(&timestamp_us.to_le_bytes());
        p.extend_from_slice(text.as_bytes());
        self.message(b'L', &p);
    }

    pub fn sync(&mut self) {
        self.message(b'S', &SYNC_MAGIC);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

fn split_channel_name(name: &str) -> (&str, u8) {
    match name.rsplit_once('.') {
        Some((topic, id)) if !topic.is_empty() => match id.parse::<u8>() {
            Ok(m) if m > 0 && id == m.to_string() => (topic, m),
            _ => (name, 0),
        },
        _ => (name, 0),
    }
}

fn seconds_to_us(t: f64) -> u64 {
    (t * 1e6).round() as u64
}

/// Serialize every channel with `double` fields. Timestamps are rounded to
/// whole microseconds; channel names of the form `topic.N` become instance
/// `N` of `topic`.
pub fn write_ulog(log: &RawLog) -> Vec<u8> {
    let start = log
        .metadata
        .get("start_time_us")
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);
    let mut w = UlogWriter::new(start);
    if let Some(name) = log.metadata.get("sys_name") {
        w.info_str("sys_name", name);
    }
    let mut ids = Vec::new();
    for (name, ch) in &log.channels {
        let (topic, multi) = split_channel_name(name);
        if !w.formats.contains_key(topic) {
            let body: String = std::iter::once("uint64_t timestamp;".to_string())
                .chain(ch.fields.iter().map(|f| format!("double {f};")))
                .collect();
            w.format(topic, &body);
        }
        ids.push((w.subscribe(topic, multi), ch));
    }
    for (id, ch) in ids {
        for (t, v) in ch.timestamps.iter().zip(&ch.values) {
            w.data(id, seconds_to_us(*t), v);
        }
    }
    w.finish()
}

/// Write a dataset in the default channel layout (`acc`, `gyro`, `motor` and
/// optionally `angular_accel`).
pub fn write_dataset_ulog(ds: &SysIdDataset) -> Vec<u8> {
    let mut w = UlogWriter::new(0);
    w.info_str("sys_name", "quadsysid");
    w.format("acc", "uint64_t timestamp;double x;double y;double z;");
    w.format("gyro", "uint64_t timestamp;double x;double y;double z;");
    w.format("motor", "uint64_t timestamp;double m1;double m2;double m3;double m4;");
    let acc = w.subscribe("acc", 0);
    let gyro = w.subscribe("gyro", 0);
    let motor = w.subscribe("motor", 0);
    let alpha = ds.angular_accel().map(|_| {
        w.format("angular_accel", "uint64_t timestamp;double x;double y;double z;");
        w.subscribe("angular_accel", 0)
    });
    for k in 0..ds.len() {
        let t = seconds_to_us(ds.time(k));
        w.data(acc, t, ds.accel()[k].as_slice());
        w.data(gyro, t, ds.gyro()[k].as_slice());
        w.data(motor, t, ds.setpoints()[k].as_slice());
        if let (Some(id), Some(a)) = (alpha, ds.angular_accel()) {
            w.data(id, t, a[k].as_slice());
        }
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_file_has_no_channels() {
        let log = parse_ulog(&UlogWriter::new(123).finish()).unwrap();
        assert!(log.channels.is_empty());
        assert_eq!(log.metadata["start_time_us"], "123");
    }

    #[test]
    fn bad_magic() {
        assert_eq!(parse_ulog(&[0u8; 32]), Err(IngestError::MagicMismatch));
        assert_eq!(parse_ulog(&[]), Err(IngestError::MagicMismatch));
        assert_eq!(parse_ulog(&MAGIC[..5]), Err(IngestError::MagicMismatch));
    }

    #[test]
    fn version_and_flags() {
        let bytes = UlogWriter::with_version(0, 2).finish();
        assert!(matches!(parse_ulog(&bytes), Err(IngestError::UnsupportedVersion(_))));
        let mut w = UlogWriter::new(0);
        let mut flags = [0u8; 40];
        flags[8] = 0b10;
        w.message(b'B', &flags);
        assert!(matches!(parse_ulog(&w.finish()), Err(IngestError::UnsupportedVersion(_))));
    }

    #[test]
    fn truncation_is_reported() {
        let mut w = UlogWriter::new(0);
        w.format("a", "uint64_t timestamp;float x;");
        let id = w.subscribe("a", 0);
        w.data(id, 10, &[1.0]);
        let bytes = w.finish();
        for cut in [bytes.len() - 1, bytes.len() - 5, HEADER_LEN + 1, 10] {
            assert!(matches!(parse_ulog(&bytes[..cut]), Err(IngestError::TruncatedMessage { .. })), "cut {cut}");
        }
    }

    #[test]
    fn nested_arrays_and_padding_are_flattened() {
        let mut w = UlogWriter::new(0);
        w.format("vec", "float x;float y;");
        w.format("outer", "uint64_t timestamp;vec[2] v;uint8_t[3] _padding0;int16_t k;char[4] tag;");
        let id = w.subscribe("outer", 2);
        w.data(id, 1_500_000, &[1.0, 2.0, 3.0, 4.0, -7.0]);
        w.message(b'Z', b"unknown record");
        w.logged_string(6, 0, "hello");
        let log = parse_ulog(&w.finish()).unwrap();
        let ch = &log.channels["outer.2"];
        assert_eq!(ch.fields, ["v[0].x", "v[0].y", "v[1].x", "v[1].y", "k"]);
        assert_eq!(ch.timestamps, [1.5]);
        assert_eq!(ch.values[0], [1.0, 2.0, 3.0, 4.0, -7.0]);
        assert_eq!(log.metadata["skipped_messages"], "1");
        assert_eq!(log.metadata["logged_messages"], "1");
    }

    #[test]
    fn info_and_parameters_become_metadata() {
        let mut w = UlogWriter::new(0);
        w.info_str("sys_name", "PX4");
        w.parameter_f32("MC_ROLL_P", 6.5);
        w.parameter_i32("SYS_AUTOSTART", 4001);
        let log = parse_ulog(&w.finish()).unwrap();
        assert_eq!(log.metadata["sys_name"], "PX4");
        assert_eq!(log.metadata["param.MC_ROLL_P"], "6.5");
        assert_eq!(log.metadata["param.SYS_AUTOSTART"], "4001");
    }

    #[test]
    fn out_of_order_samples_are_dropped() {
        let mut w = UlogWriter::new(0);
        w.format("a", "uint64_t timestamp;float x;");
        let id = w.subscribe("a", 0);
        for (t, x) in [(10, 1.0), (30, 2.0), (20, 3.0), (40, 4.0)] {
            w.data(id, t, &[x]);
        }
        let log = parse_ulog(&w.finish()).unwrap();
        assert_eq!(log.channels["a"].len(), 3);
        assert_eq!(log.dropped_samples(), 1);
    }

    #[test]
    fn channel_names_split_back() {
        assert_eq!(split_channel_name("sensor_accel.1"), ("sensor_accel", 1));
        assert_eq!(split_channel_name("a.b"), ("a.b", 0));
        assert_eq!(split_channel_name("x.01"), ("x.01", 0));
        assert_eq!(split_channel_name("plain"), ("plain", 0));
    }
}
