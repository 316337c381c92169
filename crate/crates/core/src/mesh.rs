//! Vertex mesh over the cells of a discretization, for nodal (function
//! space) formulations. Cell values are vertex averages and cell gradients
//! are edge differences averaged over the cell.

use crate::measure::{Discretization, Face};

#[derive(Clone, Debug)]
pub struct VertexMesh {
    pub n: usize,
    pub cells_per_axis: Vec<usize>,
    pub h: Vec<f64>,
    pub lower: Vec<f64>,
    /// Vertices per axis (`cells + 1`), row-major with the last axis fastest.
    pub verts_per_axis: Vec<usize>,
}

impl VertexMesh {
    pub fn new(d: &Discretization) -> Self {
        let n = d.n;
        let h = (0..n).map(|j| (d.omega.0[j].1 - d.omega.0[j].0) / d.cells_per_axis[j] as f64).collect();
        VertexMesh {
            n,
            cells_per_axis: d.cells_per_axis.clone(),
            h,
            lower: d.omega.0.iter().map(|b| b.0).collect(),
            verts_per_axis: d.cells_per_axis.iter().map(|c| c + 1).collect(),
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.verts_per_axis.iter().product()
    }

    pub fn vertex_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.verts_per_axis).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn vertex_multi(&self, mut v: usize) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for j in (0..self.n).rev() {
            out[j] = v % self.verts_per_axis[j];
            v /= self.verts_per_axis[j];
        }
        out
    }

    pub fn vertex_coords(&self, v: usize) -> Vec<f64> {
        self.vertex_multi(v).iter().enumerate().map(|(j, &i)| self.lower[j] + i as f64 * self.h[j]).collect()
    }

    pub fn cell_multi(&self, mut k: usize) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for j in (0..self.n).rev() {
            out[j] = k % self.cells_per_axis[j];
            k /= self.cells_per_axis[j];
        }
        out
    }

    /// Corner vertices of a cell; bit `j` of the position is the offset
    /// along axis `j`.
    pub fn corners(&self, k: usize) -> Vec<usize> {
        let base = self.cell_multi(k);
        (0..1usize << self.n)
            .map(|mask| {
                let m: Vec<usize> = base.iter().enumerate().map(|(j, &b)| b + ((mask >> j) & 1)).collect();
                self.vertex_index(&m)
            })
            .collect()
    }

    pub fn cell_value_weights(&self, k: usize) -> Vec<(usize, f64)> {
        let w = 1.0 / (1usize << self.n) as f64;
        self.corners(k).into_iter().map(|v| (v, w)).collect()
    }

    pub fn cell_gradient_weights(&self, k: usize, j: usize) -> Vec<(usize, f64)> {
        let w = 1.0 / ((1usize << (self.n - 1)) as f64 * self.h[j]);
        self.corners(k)
            .into_iter()
            .enumerate()
            .map(|(mask, v)| (v, if (mask >> j) & 1 == 1 { w } else { -w }))
            .collect()
    }

    pub fn face_value_weights(&self, f: &Face) -> Vec<(usize, f64)> {
        let bit = usize::from(f.side > 0.0);
        let corners: Vec<usize> = self
            .corners(f.cell)
            .into_iter()
            .enumerate()
            .filter(|(mask, _)| (mask >> f.axis) & 1 == bit)
            .map(|(_, v)| v)
            .collect();
        let w = 1.0 / corners.len() as f64;
        corners.into_iter().map(|v| (v, w)).collect()
    }
}

/// Applies sparse weights to nodal values stored as `m` components per vertex.
pub fn apply(weights: &[(usize, f64)], nodal: &[f64], m: usize, i: usize) -> f64 {
    weights.iter().map(|&(v, w)| w * nodal[v * m + i]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_problem;
    use crate::measure::{build_discretization, Resolution};

    #[test]
    fn square_mesh_operators() {
        let p = parse_problem(
            "occurelax-problem v1\n[domain]\nn = 2\nomega = [0, 2] x [0, 1]\n[spaces]\nm = 1\ny = [0, 1]\n\
             z = [-1, 1] x [-1, 1]\n[objective]\nL = 0\n",
        )
        .unwrap();
        let d = build_discretization(&p, &Resolution::new(2, 2, 2, 1)).unwrap();
        let mesh = VertexMesh::new(&d);
        assert_eq!(mesh.num_vertices(), 9);
        // y = 3 x1 - 2 x2 at the vertices
        let nodal: Vec<f64> = (0..9).map(|v| {
            let c = mesh.vertex_coords(v);
            3.0 * c[0] - 2.0 * c[1]
        }).collect();
        for (k, cell) in d.cells.iter().enumerate() {
            assert!((apply(&mesh.cell_value_weights(k), &nodal, 1, 0) - (3.0 * cell.center[0] - 2.0 * cell.center[1])).abs() < 1e-12);
            assert!((apply(&mesh.cell_gradient_weights(k, 0), &nodal, 1, 0) - 3.0).abs() < 1e-12);
            assert!((apply(&mesh.cell_gradient_weights(k, 1), &nodal, 1, 0) + 2.0).abs() < 1e-12);
        }
        for f in &d.faces {
            let want = 3.0 * f.center[0] - 2.0 * f.center[1];
            assert!((apply(&mesh.face_value_weights(f), &nodal, 1, 0) - want).abs() < 1e-12);
        }
    }
}
