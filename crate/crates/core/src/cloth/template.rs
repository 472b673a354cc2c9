//! Text mesh template:
//!
//! ```text
//! VERTICES
//! id x y z mass
//! SPRINGS
//! i j rest k kind
//! FACES
//! a b c
//! ```
//!
//! Blank lines and `#` comments are ignored. Vertex ids must be `0..n` in order.

use std::fmt::Write;
use std::sync::Arc;

use crate::cloth::{ClothMesh, ClothTopology, Spring, SpringKind};
use crate::error::{Result, SimError};
use crate::math::Vec3;
use crate::scalar::Real;

fn err(line: usize, msg: impl std::fmt::Display) -> SimError {
    SimError::InvalidConfig(format!("mesh template line {line}: {msg}"))
}

fn num<T: Real>(tok: &str, line: usize) -> Result<T> {
    tok.parse::<f64>().map(T::lit).map_err(|_| err(line, format!("bad number `{tok}`")))
}

fn idx(tok: &str, line: usize) -> Result<u32> {
    tok.parse::<u32>().map_err(|_| err(line, format!("bad index `{tok}`")))
}

pub fn parse_template<T: Real>(text: &str) -> Result<ClothMesh<T>> {
    #[derive(PartialEq)]
    enum Sec {
        None,
        V,
        S,
        F,
    }
    let mut sec = Sec::None;
    let (mut x, mut mass, mut springs, mut faces) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "VERTICES" => sec = Sec::V,
            "SPRINGS" => sec = Sec::S,
            "FACES" => sec = Sec::F,
            _ => {
                let t: Vec<&str> = line.split_whitespace().collect();
                match sec {
                    Sec::V if t.len() == 5 => {
                        if idx(t[0], ln)? as usize != x.len() {
                            return Err(err(ln, "vertex ids must be consecutive from 0"));
                        }
                        x.push(Vec3::new(num(t[1], ln)?, num(t[2], ln)?, num(t[3], ln)?));
                        mass.push(num(t[4], ln)?);
                    }
                    Sec::S if t.len() == 5 => {
                        let kind = match t[4] {
                            "structural" => SpringKind::Structural,
                            "shear" => SpringKind::Shear,
                            "bend" => SpringKind::Bend,
                            k => return Err(err(ln, format!("unknown spring kind `{k}`"))),
                        };
                        springs.push(Spring { i: idx(t[0], ln)?, j: idx(t[1], ln)?, rest: num(t[2], ln)?, k: num(t[3], ln)?, kind });
                    }
                    Sec::F if t.len() == 3 => faces.push([idx(t[0], ln)?, idx(t[1], ln)?, idx(t[2], ln)?]),
                    Sec::None => return Err(err(ln, "data before any section header")),
                    _ => return Err(err(ln, "wrong number of fields")),
                }
            }
        }
    }
    let n = x.len();
    let topo = ClothTopology::new(mass, springs, faces)?;
    Ok(ClothMesh { x, v: vec![Vec3::zero(); n], topo: Arc::new(topo) })
}

pub fn write_template<T: Real>(mesh: &ClothMesh<T>) -> String {
    let mut s = String::from("VERTICES\n");
    for (i, (p, m)) in mesh.x.iter().zip(mesh.mass()).enumerate() {
        let _ = writeln!(s, "{i} {} {} {} {}", p[0], p[1], p[2], m);
    }
    s.push_str("SPRINGS\n");
    for sp in mesh.springs() {
        let _ = writeln!(s, "{} {} {} {} {}", sp.i, sp.j, sp.rest, sp.k, sp.kind.name());
    }
    s.push_str("FACES\n");
    for f in mesh.faces() {
        let _ = writeln!(s, "{} {} {}", f[0], f[1], f[2]);
    }
    s
}
