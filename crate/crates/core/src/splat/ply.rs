use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// ASCII PLY with one `x y z` vertex per point.
pub fn encode_ply(points: &[Vector3<f64>]) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        points.len()
    );
    for p in points {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    s
}

pub fn decode_ply(text: &str) -> Result<Vec<Vector3<f64>>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::UnsupportedMagic(text.chars().take(8).collect()));
    }
    let mut count = None;
    for line in lines.by_ref() {
        let line = line.trim();
        if line == "end_header" {
            break;
        }
        if let Some(rest) = line.strip_prefix("element vertex ") {
            count = Some(
                rest.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::MalformedHeader(format!("vertex count: {e}")))?,
            );
        } else if line.starts_with("format") && line != "format ascii 1.0" {
            return Err(Error::MalformedHeader(format!("unsupported PLY format {line:?}")));
        }
    }
    let count = count.ok_or_else(|| Error::MalformedHeader("missing vertex element".into()))?;
    let mut points = Vec::with_capacity(count);
    for line in lines.take(count) {
        let v: Vec<f64> = line
            .split_whitespace()
            .take(3)
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::MalformedHeader(format!("vertex: {e}")))?;
        if v.len() != 3 {
            return Err(Error::MalformedHeader(format!("vertex line {line:?}")));
        }
        points.push(Vector3::new(v[0], v[1], v[2]));
    }
    if points.len() != count {
        return Err(Error::TruncatedPayload {
            expected: count,
            found: points.len(),
        });
    }
    Ok(points)
}

pub fn write_ply(path: impl AsRef<Path>, points: &[Vector3<f64>]) -> Result<()> {
    std::fs::write(path, encode_ply(points))?;
    Ok(())
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<Vec<Vector3<f64>>> {
    decode_ply(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let pts = vec![Vector3::new(0.1, -2.5, 1e-7), Vector3::new(std::f64::consts::PI, 0.0, -0.3)];
        assert_eq!(decode_ply(&encode_ply(&pts)).unwrap(), pts);
    }

    #[test]
    fn rejects_truncated_files() {
        let text = encode_ply(&[Vector3::new(1.0, 2.0, 3.0), Vector3::zeros()]);
        let cut: String = text.lines().take(8).map(|l| format!("{l}\n")).collect();
        assert!(decode_ply(&cut).is_err());
        assert!(decode_ply("plx\n").is_err());
    }
}
