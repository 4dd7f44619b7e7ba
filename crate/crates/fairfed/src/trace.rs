//! Device event logs: `timestamp_seconds,device_id,event` per line, with an
//! optional header row.

use std::path::Path;

use fairfed_core::availability::{parse_device_trace, ParsedTrace, TraceEvent, TraceEventKind};

use crate::error::{FairfedError, Result};

pub fn read_events<R: std::io::Read>(reader: R, path: &Path) -> Result<Vec<TraceEvent>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let mut events = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = |r: &csv::StringRecord| r.position().map_or(i as u64 + 1, |p| p.line());
        let rec = rec.map_err(|e| FairfedError::Trace {
            path: path.to_path_buf(),
            line: e.position().map_or(i as u64 + 1, |p| p.line()),
            message: e.to_string(),
        })?;
        let bad = |message: String| FairfedError::Trace {
            path: path.to_path_buf(),
            line: line(&rec),
            message,
        };
        if rec.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", rec.len())));
        }
        let timestamp = match rec[0].parse::<f64>() {
            Ok(t) if t.is_finite() => t,
            _ if i == 0 && events.is_empty() => continue,
            _ => return Err(bad(format!("bad timestamp `{}`", &rec[0]))),
        };
        let kind = TraceEventKind::parse(&rec[2])
            .ok_or_else(|| bad(format!("unknown event `{}`", &rec[2])))?;
        if rec[1].is_empty() {
            return Err(bad("empty device id".into()));
        }
        events.push(TraceEvent {
            timestamp,
            device: rec[1].to_string(),
            kind,
        });
    }
    Ok(events)
}

pub fn load_trace(path: &Path, round_secs: f64, horizon: Option<f64>) -> Result<ParsedTrace> {
    let file = std::fs::File::open(path).map_err(|e| FairfedError::ConfigFile {
        path: path.to_path_buf(),
        message: format!("cannot open trace: {e}"),
    })?;
    let events = read_events(std::io::BufReader::new(file), path)?;
    parse_device_trace(&events, round_secs, horizon).map_err(|e| FairfedError::ConfigFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<TraceEvent>> {
        read_events(text.as_bytes(), Path::new("t.csv"))
    }

    #[test]
    fn header_is_optional() {
        let a = parse("timestamp,device,event\n0,a,wifi_on\n5,a,charge_on\n").unwrap();
        let b = parse("0,a,wifi_on\n5,a,charge_on\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a[1].kind, TraceEventKind::ChargeOn);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse("0,a,wifi_on\n1,a,charge_on\n2,a,teleport\n") {
            Err(FairfedError::Trace { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("teleport"));
            }
            other => panic!("{other:?}"),
        }
        match parse("0,a,wifi_on\nxx,a,wifi_off\n") {
            Err(FairfedError::Trace { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match parse("0,a\n") {
            Err(FairfedError::Trace { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
    }
}
