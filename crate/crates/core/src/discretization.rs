//! Operators shared by the time stepper, the stationary solvers and the
//! energy functionals.

use crate::grid::{assemble_laplacian, neumann_stiffness, BoundaryCondition, Grid};
use crate::model::{ModelParams, PressureField};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: Grid,
    /// `−Δ` on interior nodes with `h = 0` on the boundary.
    pub laplacian_d: SparseMatrix,
    /// `−Δ` with zero normal derivative, `W⁻¹K`.
    pub laplacian_n: SparseMatrix,
    /// Symmetric finite-volume stiffness `K`.
    pub stiffness_n: SparseMatrix,
    /// Elastic operator `κA_D² + γA_D + λI` of the height equation.
    pub elastic: SparseMatrix,
}

impl Discretization {
    pub fn new(grid: &Grid, params: &ModelParams) -> Self {
        let laplacian_d = assemble_laplacian(grid, BoundaryCondition::Dirichlet0);
        let laplacian_n = assemble_laplacian(grid, BoundaryCondition::Neumann0);
        let stiffness_n = neumann_stiffness(grid);
        let elastic = elastic_operator(&laplacian_d, params);
        Discretization {
            grid: grid.clone(),
            laplacian_d,
            laplacian_n,
            stiffness_n,
            elastic,
        }
    }

    /// Pressure on interior nodes in model force-density units.
    pub fn forcing(&self, pressure: &PressureField, params: &ModelParams) -> Vec<f64> {
        self.grid
            .interior_nodes()
            .iter()
            .map(|&k| params.pressure_scale * pressure.values[k])
            .collect()
    }
}

/// `κA² + γA + λI` for a Dirichlet Laplacian `A`; symmetric positive definite.
pub fn elastic_operator(laplacian_d: &SparseMatrix, params: &ModelParams) -> SparseMatrix {
    let n = laplacian_d.nrows();
    let bilaplacian = laplacian_d.matmul(laplacian_d);
    let mut m = bilaplacian
        .add_scaled(params.bending_rigidity, laplacian_d, params.surface_tension)
        .add_scaled(1.0, &SparseMatrix::identity(n), params.zeroth_order);
    m = m.with_symmetry_flag(true);
    m
}
