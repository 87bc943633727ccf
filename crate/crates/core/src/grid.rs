//! Periodic box geometry shared by every gridded field.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A periodic box `[0, L_0) × … × [0, L_{d-1})` sampled at `dims` nodes per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    dims: Vec<usize>,
    box_length: Vec<T>,
}

impl<T: Real> Grid<T> {
    pub fn new(dims: &[usize], box_length: &[T]) -> Result<Self> {
        if !(dims.len() == 2 || dims.len() == 3) {
            return Err(Error::Dimension(format!(
                "grid must be 2-D or 3-D, got {} axes",
                dims.len()
            )));
        }
        if box_length.len() != dims.len() {
            return Err(Error::Dimension(format!(
                "{} box lengths for {} axes",
                box_length.len(),
                dims.len()
            )));
        }
        if dims.iter().any(|&n| n < 2 || n % 2 != 0) {
            return Err(Error::Dimension(format!(
                "axis sizes must be even and at least 2, got {dims:?}"
            )));
        }
        if box_length.iter().any(|l| !(*l > T::zero()) || !l.is_finite()) {
            return Err(Error::Dimension("box lengths must be positive".into()));
        }
        Ok(Self {
            dims: dims.to_vec(),
            box_length: box_length.to_vec(),
        })
    }

    /// Cubic grid with `n` nodes per axis and side length `length`.
    pub fn cube(dim: usize, n: usize, length: T) -> Result<Self> {
        Self::new(&vec![n; dim], &vec![length; dim])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn box_length(&self) -> &[T] {
        &self.box_length
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn volume(&self) -> T {
        self.box_length.iter().fold(T::one(), |acc, &l| acc * l)
    }

    pub fn cell_volume(&self) -> T {
        self.volume() / T::from_usize_lossy(self.len())
    }

    pub fn spacing(&self, axis: usize) -> T {
        self.box_length[axis] / T::from_usize_lossy(self.dims[axis])
    }

    /// Smallest grid spacing over all axes.
    pub fn min_spacing(&self) -> T {
        (0..self.dim())
            .map(|a| self.spacing(a))
            .fold(T::infinity(), T::min)
    }

    /// Wavenumber quantum `2π/L` along an axis.
    pub fn k_unit(&self, axis: usize) -> T {
        T::TAU() / self.box_length[axis]
    }

    /// Smallest nonzero wavenumber over all axes.
    pub fn k_min(&self) -> T {
        (0..self.dim())
            .map(|a| self.k_unit(a))
            .fold(T::infinity(), T::min)
    }

    /// Multi-index of a flat (row-major) node index.
    pub fn unravel(&self, mut flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        for a in (0..self.dim()).rev() {
            idx[a] = flat % self.dims[a];
            flat /= self.dims[a];
        }
        idx
    }

    pub fn node_position(&self, flat: usize) -> [T; 3] {
        let idx = self.unravel(flat);
        let mut x = [T::zero(); 3];
        for a in 0..self.dim() {
            x[a] = T::from_usize_lossy(idx[a]) * self.spacing(a);
        }
        x
    }

    /// Minimal-image distance between two nodes of the periodic box.
    pub fn periodic_distance(&self, a: usize, b: usize) -> T {
        let ia = self.unravel(a);
        let ib = self.unravel(b);
        let mut s = T::zero();
        for ax in 0..self.dim() {
            let n = self.dims[ax];
            let d = ia[ax].abs_diff(ib[ax]);
            let d = d.min(n - d);
            let h = T::from_usize_lossy(d) * self.spacing(ax);
            s = s + h * h;
        }
        s.sqrt()
    }

    /// Distance of a node from the box center (no wrapping).
    pub fn distance_from_center(&self, flat: usize) -> T {
        let x = self.node_position(flat);
        let two = T::lit(2.0);
        let mut s = T::zero();
        for a in 0..self.dim() {
            let d = x[a] - self.box_length[a] / two;
            s = s + d * d;
        }
        s.sqrt()
    }

    pub fn check_same(&self, other: &Grid<T>) -> Result<()> {
        if self.dims != other.dims || self.box_length != other.box_length {
            return Err(Error::GridMismatch {
                left: format!("{:?}", self.dims),
                right: format!("{:?}", other.dims),
            });
        }
        Ok(())
    }
}

/// Real values at the nodes of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField<T> {
    grid: Grid<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn new(grid: Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid<T>, v: T) -> Self {
        let values = vec![v; grid.len()];
        Self { grid, values }
    }

    pub fn from_fn(grid: Grid<T>, f: impl Fn([T; 3]) -> T) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node_position(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}
