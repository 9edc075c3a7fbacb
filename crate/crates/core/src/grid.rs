//! Uniform node-centred grid on the closed unit square and its discrete
//! Laplacians.
//!
//! Nodes are numbered row-major: node `(i, j)` at `(i·spacing, j·spacing)`
//! has index `j·(n+1) + i`. Interior unknowns (Dirichlet fields) are numbered
//! the same way over `1..n` in both directions.
//!
//! Both Laplacians are stored with the sign of `−Δ`, so the Dirichlet matrix
//! is symmetric positive definite and the Neumann matrix positive semidefinite
//! in the weighted inner product.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Boundary treatment for [`assemble_laplacian`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryCondition {
    /// Homogeneous Dirichlet; the operator acts on interior nodes only.
    Dirichlet0,
    /// Homogeneous Neumann; the operator acts on all nodes.
    Neumann0,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    spacing: f64,
    node_coords: Vec<(f64, f64)>,
    boundary_mask: Vec<bool>,
    weights: Vec<f64>,
    interior_nodes: Vec<usize>,
    interior_index: Vec<Option<usize>>,
}

/// Builds the grid with `n` cells per side.
pub fn build_grid(n: usize) -> Result<Grid> {
    if n < 2 {
        return Err(Error::GridTooCoarse(n));
    }
    let spacing = 1.0 / n as f64;
    let side = n + 1;
    let mut node_coords = Vec::with_capacity(side * side);
    let mut boundary_mask = Vec::with_capacity(side * side);
    let mut weights = Vec::with_capacity(side * side);
    let mut interior_nodes = Vec::with_capacity((n - 1) * (n - 1));
    let mut interior_index = Vec::with_capacity(side * side);
    let edge_weight = |i: usize| if i == 0 || i == n { 0.5 } else { 1.0 };
    for j in 0..side {
        for i in 0..side {
            node_coords.push((i as f64 * spacing, j as f64 * spacing));
            let on_boundary = i == 0 || j == 0 || i == n || j == n;
            boundary_mask.push(on_boundary);
            weights.push(edge_weight(i) * edge_weight(j) * spacing * spacing);
            if on_boundary {
                interior_index.push(None);
            } else {
                interior_index.push(Some(interior_nodes.len()));
                interior_nodes.push(j * side + i);
            }
        }
    }
    Ok(Grid {
        n,
        spacing,
        node_coords,
        boundary_mask,
        weights,
        interior_nodes,
        interior_index,
    })
}

impl Grid {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn num_nodes(&self) -> usize {
        self.node_coords.len()
    }

    pub fn num_interior(&self) -> usize {
        self.interior_nodes.len()
    }

    pub fn node_coords(&self) -> &[(f64, f64)] {
        &self.node_coords
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }

    /// Trapezoidal quadrature weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Node index of every interior unknown, in unknown order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    /// Interior unknown index of a node, `None` for boundary nodes.
    pub fn interior_index(&self, node: usize) -> Option<usize> {
        self.interior_index[node]
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    /// Restricts a per-node field to the interior unknowns.
    pub fn restrict(&self, field: &[f64]) -> Vec<f64> {
        self.interior_nodes.iter().map(|&k| field[k]).collect()
    }

    /// Extends interior values to a per-node field, zero on the boundary.
    pub fn prolong(&self, interior: &[f64]) -> Vec<f64> {
        let mut field = vec![0.0; self.num_nodes()];
        for (&k, &v) in self.interior_nodes.iter().zip(interior) {
            field[k] = v;
        }
        field
    }

    /// Evaluates `f(x, y)` at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.node_coords.iter().map(|&(x, y)| f(x, y)).collect()
    }

    fn check_len(&self, field: &[f64]) -> Result<()> {
        if field.len() != self.num_nodes() {
            return Err(Error::LengthMismatch {
                expected: self.num_nodes(),
                got: field.len(),
            });
        }
        Ok(())
    }
}

/// Weighted sum `Σ wᵢ fᵢ`, the discrete `∫_D f dx`.
pub fn integrate(grid: &Grid, field: &[f64]) -> Result<f64> {
    grid.check_len(field)?;
    Ok(grid.weights.iter().zip(field).map(|(w, f)| w * f).sum())
}

/// Discrete `−Δ` with the requested homogeneous boundary condition.
///
/// For [`BoundaryCondition::Neumann0`] the result is `W⁻¹K` with `K` from
/// [`neumann_stiffness`]; its weighted column sums vanish, so the discrete
/// integral of any field evolved by it is conserved.
pub fn assemble_laplacian(grid: &Grid, bc: BoundaryCondition) -> SparseMatrix {
    match bc {
        BoundaryCondition::Dirichlet0 => dirichlet_laplacian(grid),
        BoundaryCondition::Neumann0 => {
            let inv_w: Vec<f64> = grid.weights.iter().map(|w| 1.0 / w).collect();
            neumann_stiffness(grid).scale_rows(&inv_w)
        }
    }
}

fn dirichlet_laplacian(grid: &Grid) -> SparseMatrix {
    let n = grid.n;
    let inv_h2 = 1.0 / (grid.spacing * grid.spacing);
    let mut triplets = Vec::with_capacity(5 * grid.num_interior());
    for (row, &node) in grid.interior_nodes.iter().enumerate() {
        let (i, j) = (node % (n + 1), node / (n + 1));
        triplets.push((row, row, 4.0 * inv_h2));
        for (ni, nj) in [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)] {
            if let Some(col) = grid.interior_index(grid.node(ni, nj)) {
                triplets.push((row, col, -inv_h2));
            }
        }
    }
    SparseMatrix::from_triplets(grid.num_interior(), grid.num_interior(), triplets).with_symmetry_flag(true)
}

/// Finite-volume stiffness matrix of the Neumann problem on the dual cells.
///
/// The flux between neighbouring nodes is `(uₚ − u_q)/spacing` times the
/// length of the shared dual face, which is halved along the domain
/// boundary. `K` is symmetric, its rows and columns sum to zero, and
/// `W⁻¹K` approximates `−Δ` with zero normal derivative.
pub fn neumann_stiffness(grid: &Grid) -> SparseMatrix {
    let n = grid.n;
    let mut triplets = Vec::with_capacity(5 * grid.num_nodes());
    let face = |k: usize| if k == 0 || k == n { 0.5 } else { 1.0 };
    let mut couple = |p: usize, q: usize, c: f64| {
        triplets.push((p, p, c));
        triplets.push((q, q, c));
        triplets.push((p, q, -c));
        triplets.push((q, p, -c));
    };
    for j in 0..=n {
        for i in 0..n {
            couple(grid.node(i, j), grid.node(i + 1, j), face(j));
        }
    }
    for j in 0..n {
        for i in 0..=n {
            couple(grid.node(i, j), grid.node(i, j + 1), face(i));
        }
    }
    SparseMatrix::from_triplets(grid.num_nodes(), grid.num_nodes(), triplets).with_symmetry_flag(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_coarse_grids() {
        assert!(matches!(build_grid(1), Err(Error::GridTooCoarse(1))));
        assert!(build_grid(0).is_err());
    }

    #[test]
    fn counting() {
        let g = build_grid(4).unwrap();
        assert_eq!(g.num_nodes(), 25);
        assert_eq!(g.spacing(), 0.25);
        assert_eq!(g.boundary_mask().iter().filter(|&&b| b).count(), 16);

        let g = build_grid(2).unwrap();
        assert_eq!(g.num_interior(), 1);
        assert_eq!(g.node_coords()[g.interior_nodes()[0]], (0.5, 0.5));
    }

    #[test]
    fn weights_and_boundary_counts() {
        for n in [2, 3, 7, 16, 33] {
            let g = build_grid(n).unwrap();
            let total: f64 = g.weights().iter().sum();
            assert!((total - 1.0).abs() <= 1e-13, "n={n}: {total}");
            assert_eq!(g.boundary_mask().iter().filter(|&&b| b).count(), 4 * n);
            assert!((g.spacing() * n as f64 - 1.0).abs() < 1e-15);
            let h2 = g.spacing() * g.spacing();
            assert_eq!(g.weights()[0], h2 / 4.0);
            assert_eq!(g.weights()[1], h2 / 2.0);
            assert_eq!(g.weights()[g.node(1, 1)], h2);
        }
    }

    #[test]
    fn integrate_examples() {
        let g = build_grid(64).unwrap();
        let one = vec![1.0; g.num_nodes()];
        assert!((integrate(&g, &one).unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(integrate(&g, &vec![0.0; g.num_nodes()]).unwrap(), 0.0);
        let xy = g.sample(|x, y| x * y);
        assert!((integrate(&g, &xy).unwrap() - 0.25).abs() < 1e-6);
        assert!(matches!(
            integrate(&g, &[1.0, 2.0]),
            Err(Error::LengthMismatch { expected: 4225, got: 2 })
        ));
    }

    #[test]
    fn single_node_dirichlet_stencil() {
        let g = build_grid(2).unwrap();
        let a = assemble_laplacian(&g, BoundaryCondition::Dirichlet0);
        assert_eq!(a.to_dense(), vec![vec![16.0]]);
    }

    #[test]
    fn neumann_weighted_null_space() {
        for n in [3, 8, 21] {
            let g = build_grid(n).unwrap();
            let a = assemble_laplacian(&g, BoundaryCondition::Neumann0);
            let scale = 4.0 / (g.spacing() * g.spacing());
            let col_sums = a.transpose_mul_vec(g.weights());
            assert!(col_sums.iter().all(|s| s.abs() <= 1e-12), "n={n}");
            let a1 = a.mul_vec(&vec![1.0; g.num_nodes()]);
            assert!(a1.iter().all(|v| v.abs() <= 1e-12 * scale));
            let k = neumann_stiffness(&g);
            assert!(k.is_symmetric(0.0));
        }
    }

    fn manufactured_error(n: usize) -> f64 {
        let g = build_grid(n).unwrap();
        let a = assemble_laplacian(&g, BoundaryCondition::Dirichlet0);
        let u = g.restrict(&g.sample(|x, y| (PI * x).sin() * (PI * y).sin()));
        let au = a.mul_vec(&u);
        au.iter()
            .zip(&u)
            .map(|(l, v)| (l - 2.0 * PI * PI * v).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn dirichlet_second_order() {
        let ratio = manufactured_error(32) / manufactured_error(64);
        assert!((3.6..=4.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn neumann_is_second_order_for_cosines() {
        // cos(πx)cos(πy) has zero normal derivative; −Δu = 2π²u.
        let err = |n: usize| {
            let g = build_grid(n).unwrap();
            let a = assemble_laplacian(&g, BoundaryCondition::Neumann0);
            let u = g.sample(|x, y| (PI * x).cos() * (PI * y).cos());
            let au = a.mul_vec(&u);
            g.interior_nodes()
                .iter()
                .map(|&k| (au[k] - 2.0 * PI * PI * u[k]).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!((3.6..=4.4).contains(&ratio), "ratio {ratio}");
    }
}
