//! Comma-separated logs with a header row, as exported by the Crazyflie
//! client. Columns named `group.field` are gathered into channel `group`;
//! columns without a dot go to [`DEFAULT_CHANNEL`].

use std::collections::BTreeMap;

use super::{Channel, ChannelMapping, CsvLayout, FieldRef, IngestError, RawLog, DROPPED_KEY};
use crate::dataset::SysIdDataset;

pub const DEFAULT_CHANNEL: &str = "data";

fn split_column(name: &str) -> (&str, &str) {
    match name.split_once('.') {
        Some((group, field)) if !group.is_empty() && !field.is_empty() => (group, field),
        _ => (DEFAULT_CHANNEL, name),
    }
}

/// Parse CSV text. Every channel the mapping refers to must be present,
/// together with the time column.
pub fn parse_crazyflie_csv(text: &str, mapping: &ChannelMapping) -> Result<RawLog, IngestError> {
    let log = parse_csv(text, &mapping.csv)?;
    for (_, r) in mapping.references() {
        let Some(ch) = log.channels.get(&r.channel) else {
            return Err(IngestError::MissingColumn(r.channel.clone()));
        };
        for f in &r.fields {
            let ok = match f {
                FieldRef::Index(i) => *i < ch.fields.len(),
                FieldRef::Name(n) => ch.fields.contains(n),
            };
            if !ok {
                let column = match f {
                    FieldRef::Name(n) if r.channel == DEFAULT_CHANNEL => n.clone(),
                    FieldRef::Name(n) => format!("{}.{n}", r.channel),
                    FieldRef::Index(i) => format!("{}[{i}]", r.channel),
                };
                return Err(IngestError::MissingColumn(column));
            }
        }
    }
    Ok(log)
}

/// Parse CSV text into channels without checking for particular columns.
pub fn parse_csv(text: &str, layout: &CsvLayout) -> Result<RawLog, IngestError> {
    let mut reader = ::csv::ReaderBuilder::new()
        .trim(::csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IngestError::MalformedCsv(e.to_string()))?
        .clone();
    let time_idx = headers
        .iter()
        .position(|h| h == layout.time_column)
        .ok_or_else(|| IngestError::MissingColumn(layout.time_column.clone()))?;

    // channel name -> (column indices, field names)
    let mut groups: BTreeMap<String, (Vec<usize>, Vec<String>)> = BTreeMap::new();
    for (i, h) in headers.iter().enumerate() {
        if i == time_idx {
            continue;
        }
        let (group, field) = split_column(h);
        let entry = groups.entry(group.to_string()).or_default();
        entry.0.push(i);
        entry.1.push(field.to_string());
    }

    let mut channels: BTreeMap<String, Channel> = groups
        .iter()
        .map(|(name, (_, fields))| (name.clone(), Channel::new(fields.clone())))
        .collect();
    let mut dropped = 0usize;
    let mut record = ::csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(IngestError::MalformedCsv(e.to_string())),
        }
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let cell = |i: usize| -> Result<f64, IngestError> {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>().map_err(|_| IngestError::NonNumericCell {
                line,
                column: headers[i].to_string(),
                value: raw.to_string(),
            })
        };
        let t = cell(time_idx)? * layout.time_scale;
        for (name, (cols, _)) in &groups {
            let values = cols.iter().map(|&i| cell(i)).collect::<Result<Vec<_>, _>>()?;
            if !channels.get_mut(name).expect("created above").push(t, values) {
                dropped += 1;
            }
        }
    }

    let mut log = RawLog {
        channels,
        metadata: BTreeMap::new(),
    };
    log.metadata.insert("format".into(), "csv".into());
    log.metadata.insert(DROPPED_KEY.into(), dropped.to_string());
    if dropped > 0 {
        log::warn!("dropped {dropped} out-of-order samples");
    }
    Ok(log)
}

fn column_names(channel: &str, fields: &[FieldRef]) -> Result<Vec<String>, IngestError> {
    fields
        .iter()
        .map(|f| match f {
            FieldRef::Name(n) if channel == DEFAULT_CHANNEL => Ok(n.clone()),
            FieldRef::Name(n) => Ok(format!("{channel}.{n}")),
            FieldRef::Index(_) => Err(IngestError::BadMapping(
                "writing CSV needs named fields in the mapping".into(),
            )),
        })
        .collect()
}

/// Write a dataset as CSV in the raw units described by `mapping`, so that
/// parsing and resampling with the same mapping reproduce it.
pub fn write_crazyflie_csv(ds: &SysIdDataset, mapping: &ChannelMapping) -> Result<String, IngestError> {
    mapping.validate()?;
    let mut header = vec![mapping.csv.time_column.clone()];
    header.extend(column_names(&mapping.accel.channel, &mapping.accel.fields)?);
    header.extend(column_names(&mapping.gyro.channel, &mapping.gyro.fields)?);
    header.extend(column_names(&mapping.setpoints.channel, &mapping.setpoints.fields)?);
    let alpha = match (&mapping.angular_accel, ds.angular_accel()) {
        (Some(r), Some(a)) => {
            header.extend(column_names(&r.channel, &r.fields)?);
            Some(a)
        }
        _ => None,
    };
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = header.iter().find(|h| !seen.insert(h.as_str())) {
        return Err(IngestError::BadMapping(format!("column `{dup}` mapped twice")));
    }

    let mut w = ::csv::Writer::from_writer(Vec::new());
    let io = |e: ::csv::Error| IngestError::MalformedCsv(e.to_string());
    w.write_record(&header).map_err(io)?;
    let [lo, hi] = mapping.setpoint_scale;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for k in 0..ds.len() {
        row.clear();
        row.push((ds.time(k) / mapping.csv.time_scale).to_string());
        let a = ds.accel()[k];
        let g = ds.gyro()[k];
        row.extend((0..3).map(|i| (a[i] / mapping.accel_scale[i]).to_string()));
        row.extend((0..3).map(|i| (g[i] / mapping.gyro_scale[i]).to_string()));
        row.extend(ds.setpoints()[k].iter().map(|v| (lo + v * (hi - lo)).to_string()));
        if let Some(alpha) = alpha {
            row.extend(alpha[k].iter().map(|v| v.to_string()));
        }
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| IngestError::MalformedCsv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
