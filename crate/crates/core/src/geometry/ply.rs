//! ASCII PLY 1.0 for point clouds: `x y z` and optionally `nx ny nz`.
//! Other vertex properties are skipped on read; other elements are ignored.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::{Frame, PointCloud, Vec3};

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("ply header: {0}")]
    Header(String),
    #[error("ply body line {line}: {msg}")]
    Body { line: usize, msg: String },
}

struct Element {
    name: String,
    count: usize,
    properties: Vec<String>,
}

pub fn read_ply(reader: impl BufRead, frame: impl Into<Frame>) -> Result<PointCloud, PlyError> {
    let mut lines = reader.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String), PlyError> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(PlyError::Header(format!("unexpected end of file, expected {what}"))),
        }
    };
    if next("magic")?.1.trim() != "ply" {
        return Err(PlyError::Header("missing 'ply' magic".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_ok = false;
    loop {
        let (_, line) = next("end_header")?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", "1.0"] => format_ok = true,
            ["format", other, ..] => return Err(PlyError::Header(format!("unsupported format '{other}'"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| PlyError::Header(format!("bad element count '{count}'")))?,
                properties: Vec::new(),
            }),
            ["property", "list", ..] => match elements.last_mut() {
                Some(e) if e.name != "vertex" => e.properties.push("list".into()),
                _ => return Err(PlyError::Header("list properties on vertices are not supported".into())),
            },
            ["property", _ty, name] => match elements.last_mut() {
                Some(e) => e.properties.push(name.to_string()),
                None => return Err(PlyError::Header("property before element".into())),
            },
            ["end_header"] => break,
            _ => return Err(PlyError::Header(format!("unrecognized header line '{line}'"))),
        }
    }
    if !format_ok {
        return Err(PlyError::Header("missing 'format ascii 1.0'".into()));
    }
    let mut points = Vec::new();
    let mut normals: Option<Vec<Vec3>> = None;
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                next(&el.name)?;
            }
            continue;
        }
        let col = |n: &str| el.properties.iter().position(|p| p == n);
        let (x, y, z) = match (col("x"), col("y"), col("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(PlyError::Header("vertex element needs x, y, z".into())),
        };
        let nrm = match (col("nx"), col("ny"), col("nz")) {
            (Some(a), Some(b), Some(c)) => Some((a, b, c)),
            _ => None,
        };
        if nrm.is_some() {
            normals = Some(Vec::with_capacity(el.count));
        }
        for _ in 0..el.count {
            let (ln, line) = next("vertex")?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| PlyError::Body { line: ln, msg: e.to_string() })?;
            if vals.len() != el.properties.len() {
                return Err(PlyError::Body {
                    line: ln,
                    msg: format!("expected {} values, got {}", el.properties.len(), vals.len()),
                });
            }
            points.push(Vec3::new(vals[x], vals[y], vals[z]));
            if let (Some((a, b, c)), Some(ns)) = (nrm, normals.as_mut()) {
                ns.push(Vec3::new(vals[a], vals[b], vals[c]));
            }
        }
    }
    Ok(PointCloud { points, normals, degenerate: None, frame: frame.into() })
}

pub fn write_ply(cloud: &PointCloud, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "comment frame {}", cloud.frame)?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property double {p}")?;
    }
    if cloud.normals.is_some() {
        for p in ["nx", "ny", "nz"] {
            writeln!(w, "property double {p}")?;
        }
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points.iter().enumerate() {
        // `{:?}` prints the shortest representation that round-trips.
        write!(w, "{:?} {:?} {:?}", p.x, p.y, p.z)?;
        if let Some(ns) = &cloud.normals {
            write!(w, " {:?} {:?} {:?}", ns[i].x, ns[i].y, ns[i].z)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CAMERA_FRAME;
    use proptest::prelude::*;

    #[test]
    fn reads_foreign_header() {
        let text = "ply\nformat ascii 1.0\ncomment made elsewhere\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 1 255\n1.5 2 3 0\n3 0 1 1\n";
        let c = read_ply(text.as_bytes(), CAMERA_FRAME).unwrap();
        assert_eq!(c.points, vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.5, 2.0, 3.0)]);
        assert!(c.normals.is_none());
    }

    #[test]
    fn rejects_binary_and_short_body() {
        let bin = "ply\nformat binary_little_endian 1.0\nend_header\n";
        assert!(matches!(read_ply(bin.as_bytes(), CAMERA_FRAME), Err(PlyError::Header(_))));
        let short = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
        assert!(read_ply(short.as_bytes(), CAMERA_FRAME).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(raw in prop::collection::vec(prop::array::uniform6(-10.0f64..10.0), 0..50), with_normals: bool) {
            let mut cloud = PointCloud::new(raw.iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect(), CAMERA_FRAME);
            if with_normals {
                cloud.normals = Some(raw.iter().map(|r| Vec3::new(r[3], r[4], r[5])).collect());
            }
            let mut buf = Vec::new();
            write_ply(&cloud, &mut buf).unwrap();
            let back = read_ply(buf.as_slice(), CAMERA_FRAME).unwrap();
            prop_assert_eq!(back, cloud);
        }
    }
}
