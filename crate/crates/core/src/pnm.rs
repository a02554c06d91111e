//! Portable anymap output for observation snapshots.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Observation, ObservationKind};

/// Binary PGM (one channel) or PPM (three channels), 8 bits per sample.
pub fn encode_image(obs: &Observation) -> Result<Vec<u8>> {
    let (h, w, c) = match (obs.kind(), obs.shape()) {
        (ObservationKind::Image, &[h, w, c]) if c == 1 || c == 3 => (h, w, c),
        _ => {
            return Err(Error::InvalidObservation(format!(
                "cannot encode {:?} with shape {:?} as an anymap",
                obs.kind(),
                obs.shape()
            )))
        }
    };
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    out.extend(obs.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    Ok(out)
}

pub fn decode_image(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f64>)> {
    let bad = |m: &str| Error::InvalidObservation(format!("malformed anymap: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header not utf-8"))?);
    }
    pos += 1;
    let channels = match fields[0] {
        "P5" => 1,
        "P6" => 3,
        other => return Err(bad(&format!("unsupported magic {other}"))),
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad dimension"));
    let (w, h, max) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if max != 255 {
        return Err(bad("only 8-bit maps are supported"));
    }
    let body = bytes.get(pos..pos + w * h * channels).ok_or_else(|| bad("truncated body"))?;
    Ok((h, w, channels, body.iter().map(|&b| b as f64 / 255.0).collect()))
}

/// Writes an image observation as PGM/PPM, or a vector observation as one
/// number per line.
pub fn write_observation(obs: &Observation, path: &Path) -> Result<()> {
    let bytes = match obs.kind() {
        ObservationKind::Image => encode_image(obs)?,
        ObservationKind::StateVector => {
            let mut text = Vec::new();
            for v in obs.data() {
                writeln!(text, "{v}").expect("write to vec");
            }
            text
        }
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn observation_extension(obs: &Observation) -> &'static str {
    match (obs.kind(), obs.shape().last()) {
        (ObservationKind::Image, Some(3)) => "ppm",
        (ObservationKind::Image, _) => "pgm",
        (ObservationKind::StateVector, _) => "txt",
    }
}
