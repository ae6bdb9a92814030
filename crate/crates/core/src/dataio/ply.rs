//! ASCII PLY point clouds with an optional `uchar label` (1 = road).

use nalgebra::Vector3;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::read_bytes;
use crate::error::{Error, Result};
use crate::plane_fit::PointCloud;

pub fn encode_point_cloud(cloud: &PointCloud) -> String {
    let mut out = String::from("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.points.len());
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    if cloud.labels.is_some() {
        out.push_str("property uchar label\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let Some(labels) = &cloud.labels {
            let _ = write!(out, " {}", u8::from(labels[i]));
        }
        out.push('\n');
    }
    out
}

pub fn decode_point_cloud(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::MalformedHeader("missing ply magic".into()));
    }
    let mut count = None;
    let mut properties = Vec::new();
    let mut ascii = false;
    for line in lines.by_ref() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["format", "ascii", _] => ascii = true,
            ["format", ..] => return Err(Error::MalformedHeader("only ascii PLY is supported".into())),
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| Error::MalformedHeader(format!("bad vertex count {n:?}")))?)
            }
            ["property", _, name] => properties.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let count = count.ok_or_else(|| Error::MalformedHeader("no vertex element".into()))?;
    if !ascii {
        return Err(Error::MalformedHeader("missing format line".into()));
    }
    let column = |name: &str| properties.iter().position(|p| p == name);
    let (Some(xi), Some(yi), Some(zi)) = (column("x"), column("y"), column("z")) else {
        return Err(Error::MalformedHeader("x, y, z properties required".into()));
    };
    let li = column("label");
    let mut points = Vec::with_capacity(count);
    let mut labels = li.map(|_| Vec::with_capacity(count));
    for _ in 0..count {
        let line = lines.next().ok_or_else(|| Error::SizeMismatch(format!("expected {count} vertices")))?;
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::MalformedHeader(format!("bad vertex value {t:?}"))))
            .collect::<Result<_>>()?;
        if fields.len() != properties.len() {
            return Err(Error::MalformedHeader(format!("vertex line has {} fields", fields.len())));
        }
        points.push(Vector3::new(fields[xi], fields[yi], fields[zi]));
        if let (Some(l), Some(i)) = (labels.as_mut(), li) {
            l.push(fields[i] != 0.0);
        }
    }
    Ok(PointCloud { points, labels })
}

pub fn write_point_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    Ok(fs::write(path, encode_point_cloud(cloud))?)
}

pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::MalformedHeader("PLY is not UTF-8".into()))?;
    decode_point_cloud(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_cloud_is_valid() {
        let text = encode_point_cloud(&PointCloud::default());
        assert!(text.contains("element vertex 0"));
        assert_eq!(decode_point_cloud(&text).unwrap().points.len(), 0);
    }

    #[test]
    fn three_points_with_labels_round_trip() {
        let cloud = PointCloud {
            points: vec![Vector3::new(0.1, 1.5, 7.0), Vector3::new(-2.0, 0.3, 12.25), Vector3::new(1.0 / 3.0, 2.0, 9.0)],
            labels: Some(vec![true, false, true]),
        };
        let text = encode_point_cloud(&cloud);
        assert_eq!(text.lines().skip_while(|l| *l != "end_header").count() - 1, 3);
        assert_eq!(decode_point_cloud(&text).unwrap(), cloud);
    }

    #[test]
    fn unlabeled_and_truncated() {
        let cloud = PointCloud { points: vec![Vector3::new(1.0, 2.0, 3.0)], labels: None };
        let text = encode_point_cloud(&cloud);
        assert!(!text.contains("label"));
        assert_eq!(decode_point_cloud(&text).unwrap(), cloud);
        let cut = text.replace("1 2 3\n", "");
        assert!(decode_point_cloud(&cut).is_err());
    }
}
