//! File formats.
//!
//! Snapshot CSV:
//!
//! ```text
//! # <provenance>
//! M,L,B
//! 11,150,32
//! bin,1350
//! re,im,re,im,...      one row per sensor, 2L values
//! ...
//! bin,1359.6774193548388
//! ...
//! ```
//!
//! Floats use the shortest representation that round-trips.

use std::fmt::Write as _;

use raysep::simulator::SnapshotMatrix;
use raysep::C64;
use nalgebra::DMatrix;

#[derive(Debug, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

pub fn comment_header(lines: &[String]) -> String {
    lines.iter().map(|l| format!("# {l}\n")).collect()
}

pub fn write_snapshots(header: &[String], bins: &[SnapshotMatrix]) -> String {
    let mut out = comment_header(header);
    let (m, l) = bins.first().map(|b| (b.num_sensors(), b.num_snapshots())).unwrap_or((0, 0));
    let _ = writeln!(out, "M,L,B\n{m},{l},{}", bins.len());
    for bin in bins {
        let _ = writeln!(out, "bin,{}", bin.frequency);
        for row in bin.data.row_iter() {
            let fields: Vec<String> = row.iter().flat_map(|z| [z.re.to_string(), z.im.to_string()]).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
    }
    out
}

pub fn read_snapshots(text: &str) -> Result<Vec<SnapshotMatrix>, ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let err = |line: usize, message: String| ParseError { line, message };
    let mut next = |what: &str| lines.next().ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")));

    let (n, head) = next("header")?;
    if head.replace(' ', "") != "M,L,B" {
        return Err(err(n, format!("expected \"M,L,B\", found {head:?}")));
    }
    let (n, dims) = next("dimensions")?;
    let dims: Vec<usize> = dims
        .split(',')
        .map(|v| v.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|e| err(n, format!("bad dimensions: {e}")))?;
    let [m, l, b] = dims[..] else {
        return Err(err(n, "expected three dimensions".into()));
    };

    let mut bins = Vec::with_capacity(b);
    for _ in 0..b {
        let (n, tag) = next("bin line")?;
        let freq: f64 = tag
            .strip_prefix("bin,")
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| err(n, format!("expected \"bin,<frequency>\", found {tag:?}")))?;
        let mut data = DMatrix::<C64>::zeros(m, l);
        for i in 0..m {
            let (n, row) = next("sensor row")?;
            let values: Vec<f64> = row
                .split(',')
                .map(|v| v.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|e| err(n, format!("bad number: {e}")))?;
            if values.len() != 2 * l {
                return Err(err(n, format!("expected {} values, found {}", 2 * l, values.len())));
            }
            for j in 0..l {
                data[(i, j)] = C64::new(values[2 * j], values[2 * j + 1]);
            }
        }
        bins.push(SnapshotMatrix::new(data, freq).map_err(|e| err(n, e.to_string()))?);
    }
    if let Some((n, extra)) = lines.next() {
        return Err(err(n, format!("trailing content {extra:?}")));
    }
    Ok(bins)
}

pub fn write_spectrum(header: &[String], angles: &[f64], values: &[f64]) -> String {
    let mut out = comment_header(header);
    out.push_str("angle_deg,value\n");
    for (a, v) in angles.iter().zip(values) {
        let _ = writeln!(out, "{a},{v}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<SnapshotMatrix> {
        (0..2)
            .map(|b| {
                let data = DMatrix::from_fn(3, 2, |i, j| C64::new(i as f64 + 0.1 * b as f64, -(j as f64) / 3.0));
                SnapshotMatrix::new(data, 100.0 + b as f64 / 7.0).unwrap()
            })
            .collect()
    }

    #[test]
    fn snapshots_round_trip_exactly() {
        let bins = sample();
        let text = write_snapshots(&["test".into()], &bins);
        assert!(text.starts_with("# test\nM,L,B\n3,2,2\nbin,100\n"));
        assert_eq!(read_snapshots(&text).unwrap(), bins);
    }

    #[test]
    fn malformed_snapshots_report_line() {
        let text = write_snapshots(&[], &sample()).replace("bin,100\n0,", "bin,100\n0,x,");
        let e = read_snapshots(&text).unwrap_err();
        assert_eq!(e.line, 4);
        let text = write_snapshots(&[], &sample()) + "1,2\n";
        assert!(read_snapshots(&text).is_err());
        assert!(read_snapshots("M,L,B\n1,1\n").is_err());
    }

    #[test]
    fn spectrum_layout() {
        let s = write_spectrum(&["h".into()], &[-1.5, 0.0], &[0.25, 1.0]);
        assert_eq!(s, "# h\nangle_deg,value\n-1.5,0.25\n0,1\n");
    }
}
