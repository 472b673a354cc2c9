use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cloth::ClothMesh;
use crate::error::{Result, SimError};
use crate::math::Vec3;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpringKind {
    Structural,
    Shear,
    Bend,
}

impl SpringKind {
    pub fn name(self) -> &'static str {
        match self {
            SpringKind::Structural => "structural",
            SpringKind::Shear => "shear",
            SpringKind::Bend => "bend",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spring<T> {
    pub i: u32,
    pub j: u32,
    pub rest: T,
    pub k: T,
    pub kind: SpringKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClothParams<T> {
    pub vertex_mass: T,
    pub k_structural: T,
    pub k_shear: T,
    pub k_bend: T,
}

impl<T: Real> Default for ClothParams<T> {
    fn default() -> Self {
        Self { vertex_mass: T::lit(0.01), k_structural: T::lit(500.0), k_shear: T::lit(250.0), k_bend: T::lit(50.0) }
    }
}

impl<T: Real> ClothParams<T> {
    pub fn stiffness(&self, kind: SpringKind) -> T {
        match kind {
            SpringKind::Structural => self.k_structural,
            SpringKind::Shear => self.k_shear,
            SpringKind::Bend => self.k_bend,
        }
    }
}

/// Immutable mesh data shared by every copy of a cloth state, including a
/// per-vertex spring adjacency used for deterministic force accumulation.
#[derive(Clone, Debug, PartialEq)]
pub struct ClothTopology<T> {
    pub mass: Vec<T>,
    pub springs: Vec<Spring<T>>,
    pub faces: Vec<[u32; 3]>,
    adj_start: Vec<u32>,
    /// Spring index; the high bit marks the vertex as the spring's `j` end.
    adj: Vec<u32>,
}

const J_END: u32 = 1 << 31;

impl<T: Real> ClothTopology<T> {
    pub fn new(mass: Vec<T>, springs: Vec<Spring<T>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let n = mass.len();
        for (k, s) in springs.iter().enumerate() {
            if s.i == s.j || s.i as usize >= n || s.j as usize >= n {
                return Err(SimError::InvalidConfig(format!("spring {k} has invalid endpoints")));
            }
            if !(s.rest > T::zero() && s.k > T::zero()) {
                return Err(SimError::InvalidConfig(format!("spring {k} needs positive rest length and stiffness")));
            }
        }
        if faces.iter().flatten().any(|&v| v as usize >= n) {
            return Err(SimError::InvalidConfig("face references a missing vertex".into()));
        }
        let mut count = vec![0u32; n + 1];
        for s in &springs {
            count[s.i as usize + 1] += 1;
            count[s.j as usize + 1] += 1;
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let mut cursor = count.clone();
        let mut adj = vec![0u32; 2 * springs.len()];
        for (k, s) in springs.iter().enumerate() {
            adj[cursor[s.i as usize] as usize] = k as u32;
            cursor[s.i as usize] += 1;
            adj[cursor[s.j as usize] as usize] = k as u32 | J_END;
            cursor[s.j as usize] += 1;
        }
        Ok(Self { mass, springs, faces, adj_start: count, adj })
    }

    /// Sums `+per_spring[k]` into each spring's `i` end and `−per_spring[k]`
    /// into its `j` end, vertex by vertex in a fixed order.
    pub fn gather(&self, per_spring: &[Vec3<T>]) -> Vec<Vec3<T>> {
        let n = self.mass.len();
        let mut out = vec![Vec3::zero(); n];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = Vec3::zero();
            for &e in &self.adj[self.adj_start[i] as usize..self.adj_start[i + 1] as usize] {
                let f = per_spring[(e & !J_END) as usize];
                if e & J_END == 0 {
                    acc += f;
                } else {
                    acc -= f;
                }
            }
            *o = acc;
        }
        out
    }

    /// Whether the spring graph joins every vertex.
    pub fn is_connected(&self) -> bool {
        let n = self.mass.len();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &e in &self.adj[self.adj_start[i] as usize..self.adj_start[i + 1] as usize] {
                let s = &self.springs[(e & !J_END) as usize];
                let o = if s.i as usize == i { s.j } else { s.i } as usize;
                if !seen[o] {
                    seen[o] = true;
                    stack.push(o);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn cast<U: Real>(&self) -> ClothTopology<U> {
        let springs = self
            .springs
            .iter()
            .map(|s| Spring { i: s.i, j: s.j, rest: U::lit(s.rest.as_f64()), k: U::lit(s.k.as_f64()), kind: s.kind })
            .collect();
        ClothTopology::new(self.mass.iter().map(|&m| U::lit(m.as_f64())).collect(), springs, self.faces.clone())
            .expect("cast preserves validity")
    }
}

/// Lattice cloth over the cells of `mask` (`rows × cols`, row-major).
/// Vertex `(r, c)` sits at `origin + (c·h, r·h, 0)`. Springs join present
/// vertices: structural to 4-neighbours, shear across diagonals, bend two
/// apart. Triangles cover every fully present quad.
pub fn build_masked_cloth<T: Real>(
    mask: &[bool],
    rows: usize,
    cols: usize,
    spacing: T,
    origin: Vec3<T>,
    params: &ClothParams<T>,
) -> Result<ClothMesh<T>> {
    if rows < 2 || cols < 2 || mask.len() != rows * cols {
        return Err(SimError::InvalidConfig("cloth lattice needs at least 2x2 cells and a matching mask".into()));
    }
    let mut id = vec![u32::MAX; rows * cols];
    let mut x = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if mask[r * cols + c] {
                id[r * cols + c] = x.len() as u32;
                x.push(origin + Vec3::new(T::from_usize_lossy(c) * spacing, T::from_usize_lossy(r) * spacing, T::zero()));
            }
        }
    }
    let at = |r: usize, c: usize| -> Option<u32> {
        (r < rows && c < cols).then(|| id[r * cols + c]).filter(|&i| i != u32::MAX)
    };
    let mut springs = Vec::new();
    let mut add = |a: Option<u32>, b: Option<u32>, kind: SpringKind, x: &[Vec3<T>]| {
        if let (Some(i), Some(j)) = (a, b) {
            let rest = (x[i as usize] - x[j as usize]).norm();
            springs.push(Spring { i, j, rest, k: params.stiffness(kind), kind });
        }
    };
    for r in 0..rows {
        for c in 0..cols {
            let p = at(r, c);
            add(p, at(r, c + 1), SpringKind::Structural, &x);
            add(p, at(r + 1, c), SpringKind::Structural, &x);
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            add(at(r, c), at(r + 1, c + 1), SpringKind::Shear, &x);
            add(at(r, c + 1), at(r + 1, c), SpringKind::Shear, &x);
        }
    }
    for r in 0..rows {
        for c in 0..cols {
            let p = at(r, c);
            add(p, at(r, c + 2), SpringKind::Bend, &x);
            add(p, at(r + 2, c), SpringKind::Bend, &x);
        }
    }
    let mut faces = Vec::new();
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            if let (Some(a), Some(b), Some(d), Some(e)) = (at(r, c), at(r, c + 1), at(r + 1, c), at(r + 1, c + 1)) {
                faces.push([a, b, e]);
                faces.push([a, e, d]);
            }
        }
    }
    let n = x.len();
    let topo = ClothTopology::new(vec![params.vertex_mass; n], springs, faces)?;
    if !topo.is_connected() {
        return Err(SimError::InvalidConfig("cloth spring graph is not connected".into()));
    }
    Ok(ClothMesh { v: vec![Vec3::zero(); n], x, topo: Arc::new(topo) })
}

/// Rectangular `rows × cols` cloth lying flat at `origin`.
pub fn build_grid_cloth<T: Real>(rows: usize, cols: usize, spacing: T, origin: Vec3<T>, params: &ClothParams<T>) -> Result<ClothMesh<T>> {
    build_masked_cloth(&vec![true; rows * cols], rows, cols, spacing, origin, params)
}
