use std::fmt::Write;

use super::{Mesh, MeshError, Point};

/// Reads `v` and `f` records of an ASCII Wavefront OBJ. Polygons are fan-triangulated.
pub fn parse_obj(text: &str) -> Result<Mesh, MeshError> {
    let mut vertices: Vec<Point> = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut fields = content.split_whitespace();
        match fields.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for (axis, slot) in p.iter_mut().enumerate() {
                    let field = fields.next().ok_or_else(|| MeshError::Parse {
                        line,
                        message: format!("vertex is missing coordinate {axis}"),
                    })?;
                    *slot = field.parse().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("malformed coordinate `{field}`"),
                    })?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut poly = Vec::new();
                for field in fields {
                    let head = field.split('/').next().unwrap_or("");
                    let idx: i64 = head.parse().map_err(|_| MeshError::Parse {
                        line,
                        message: format!("malformed face index `{field}`"),
                    })?;
                    let resolved = match idx {
                        0 => {
                            return Err(MeshError::Parse {
                                line,
                                message: "face index 0 is invalid (OBJ is 1-based)".into(),
                            })
                        }
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = (-i) as usize;
                            if back > vertices.len() {
                                return Err(MeshError::Parse {
                                    line,
                                    message: format!("relative index {i} precedes the first vertex"),
                                });
                            }
                            vertices.len() - back
                        }
                    };
                    poly.push(resolved);
                }
                if poly.len() < 3 {
                    return Err(MeshError::Parse {
                        line,
                        message: format!("face has {} vertices", poly.len()),
                    });
                }
                for k in 1..poly.len() - 1 {
                    faces.push([poly[0], poly[k], poly[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Mesh::new(vertices, faces)
}

/// Serializes vertices (8 significant digits) and 1-based faces.
pub fn write_obj(mesh: &Mesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", fmt_coord(v[0]), fmt_coord(v[1]), fmt_coord(v[2]));
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

fn fmt_coord(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..8).contains(&exp) {
        let decimals = (7 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".into()
        } else {
            s
        }
    } else {
        format!("{x:.7e}")
    }
}
