//! Node-indexed scalar and vector values on a grid.
//!
//! Values are stored for every lattice node; entries at Exterior nodes are
//! kept at zero and carry no meaning.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::GridDomain;

#[derive(Debug, Clone)]
pub struct ScalarField {
    pub grid: Arc<GridDomain>,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Arc<GridDomain>) -> Self {
        let n = grid.node_count();
        ScalarField { grid, values: vec![0.0; n] }
    }

    /// Constant value on all non-Exterior nodes.
    pub fn constant(grid: Arc<GridDomain>, value: f64) -> Self {
        let mut f = ScalarField::zeros(grid);
        for id in 0..f.grid.node_count() {
            if f.grid.class(id) != crate::grid::NodeClass::Exterior {
                f.values[id] = value;
            }
        }
        f
    }

    /// Fills non-Exterior nodes from a function of position.
    pub fn from_fn(grid: Arc<GridDomain>, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let mut out = ScalarField::zeros(grid);
        for id in 0..out.grid.node_count() {
            if out.grid.class(id) != crate::grid::NodeClass::Exterior {
                out.values[id] = f(out.grid.position(id));
            }
        }
        out
    }

    pub fn check_finite(&self) -> Result<()> {
        for id in 0..self.grid.node_count() {
            if self.grid.class(id) != crate::grid::NodeClass::Exterior
                && !self.values[id].is_finite()
            {
                return Err(Error::Precondition(format!("non-finite value at node {id}")));
            }
        }
        Ok(())
    }

    /// Max |a - b| over non-Exterior nodes; grids must be the same object.
    pub fn sup_diff(&self, other: &ScalarField) -> f64 {
        assert!(Arc::ptr_eq(&self.grid, &other.grid) || grids_compatible(&self.grid, &other.grid));
        let mut m = 0.0_f64;
        for id in 0..self.grid.node_count() {
            if self.grid.class(id) != crate::grid::NodeClass::Exterior {
                m = m.max((self.values[id] - other.values[id]).abs());
            }
        }
        m
    }
}

fn grids_compatible(a: &GridDomain, b: &GridDomain) -> bool {
    a.nx == b.nx && a.ny == b.ny && a.h == b.h && a.shape == b.shape
}

/// N components per node, stored node-major: `values[node * components + l]`.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub grid: Arc<GridDomain>,
    pub components: usize,
    pub values: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Arc<GridDomain>, components: usize) -> Self {
        let n = grid.node_count();
        VectorField { grid, components, values: vec![0.0; n * components] }
    }

    pub fn get(&self, node: usize, l: usize) -> f64 {
        self.values[node * self.components + l]
    }

    pub fn set(&mut self, node: usize, l: usize, v: f64) {
        self.values[node * self.components + l] = v;
    }

    pub fn node(&self, node: usize) -> &[f64] {
        &self.values[node * self.components..(node + 1) * self.components]
    }

    /// Extracts one component as a scalar field.
    pub fn component(&self, l: usize) -> ScalarField {
        let mut f = ScalarField::zeros(self.grid.clone());
        for id in 0..self.grid.node_count() {
            f.values[id] = self.get(id, l);
        }
        f
    }

    pub fn sup_diff(&self, other: &VectorField) -> f64 {
        assert_eq!(self.components, other.components);
        let mut m = 0.0_f64;
        for id in 0..self.grid.node_count() {
            if self.grid.class(id) != crate::grid::NodeClass::Exterior {
                for l in 0..self.components {
                    m = m.max((self.get(id, l) - other.get(id, l)).abs());
                }
            }
        }
        m
    }
}
