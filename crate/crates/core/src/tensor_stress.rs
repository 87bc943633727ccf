//! Symmetric strain-rate tensors and the power-law stress laws.
//!
//! The full stress is `S(D) = (1 + |D|²)^{(p-2)/2} D`; the modified stress
//! `G(D) = S(D) - D` isolates the non-Newtonian part so that the Laplacian can
//! be treated separately by the time stepper.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::exponent_field::ExponentField;
use crate::grid::Grid;
use crate::scalar::Real;

/// Component order of the packed storage: xx, yy, zz, xy, xz, yz.
const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

/// A symmetric `d × d` tensor, `d ∈ {2, 3}`, stored by its upper triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymTensor<T> {
    dim: usize,
    c: [T; 6],
}

impl<T: Real> SymTensor<T> {
    pub fn zero(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "tensor dimension must be 2 or 3");
        Self {
            dim,
            c: [T::zero(); 6],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut t = Self::zero(dim);
        for i in 0..dim {
            t.c[i] = T::one();
        }
        t
    }

    /// Builds a tensor from packed components `[xx, yy, zz, xy, xz, yz]`.
    /// Entries involving the third axis are ignored when `dim == 2`.
    pub fn from_packed(dim: usize, packed: [T; 6]) -> Self {
        let mut t = Self::zero(dim);
        for (slot, &(i, j)) in PAIRS.iter().enumerate() {
            if i < dim && j < dim {
                t.c[slot] = packed[slot];
            }
        }
        t
    }

    /// Builds a tensor from a full matrix; rejects asymmetric input.
    pub fn from_matrix(dim: usize, m: &[[T; 3]; 3]) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::Dimension(format!("tensor dimension {dim}")));
        }
        let mut t = Self::zero(dim);
        for i in 0..dim {
            for j in 0..dim {
                let a = m[i][j];
                let b = m[j][i];
                let scale = a.abs().max(b.abs()).max(T::one());
                if (a - b).abs() > T::epsilon() * scale {
                    return Err(Error::Domain(format!(
                        "matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        for (slot, &(i, j)) in PAIRS.iter().enumerate() {
            if i < dim && j < dim {
                t.c[slot] = m[i][j];
            }
        }
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn packed(&self) -> [T; 6] {
        self.c
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        match (i, j) {
            (0, 0) => self.c[0],
            (1, 1) => self.c[1],
            (2, 2) => self.c[2],
            (0, 1) => self.c[3],
            (0, 2) => self.c[4],
            (1, 2) => self.c[5],
            _ => panic!("index ({i},{j}) out of range"),
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(i < self.dim && j < self.dim, "index out of range");
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let slot = PAIRS.iter().position(|&p| p == (i, j)).unwrap();
        self.c[slot] = v;
    }

    /// Frobenius product `A : B = Σ_ij A_ij B_ij`.
    pub fn contract(&self, other: &Self) -> T {
        let diag = self.c[0] * other.c[0] + self.c[1] * other.c[1] + self.c[2] * other.c[2];
        let off = self.c[3] * other.c[3] + self.c[4] * other.c[4] + self.c[5] * other.c[5];
        diag + off + off
    }

    /// `|A|² = A : A`.
    pub fn frobenius_sq(&self) -> T {
        self.contract(self)
    }

    pub fn trace(&self) -> T {
        self.c[0] + self.c[1] + self.c[2]
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = *self;
        for v in out.c.iter_mut() {
            *v = *v * s;
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.c.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

impl<T: Real> Add for SymTensor<T> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a = *a + b;
        }
        self
    }
}

impl<T: Real> Sub for SymTensor<T> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for (a, b) in self.c.iter_mut().zip(rhs.c) {
            *a = *a - b;
        }
        self
    }
}

impl<T: Real> Mul<T> for SymTensor<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

/// Which constitutive law to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StressLaw {
    /// Full stress `S`.
    Full,
    /// Modified stress `G = S - D`.
    Modified,
}

fn check_full_exponent<T: Real>(p: T) -> Result<()> {
    if !(p >= T::one()) || !p.is_finite() {
        return Err(Error::Domain(format!(
            "stress exponent p = {p} outside the variable-exponent range p >= 1"
        )));
    }
    Ok(())
}

fn check_modified_exponent<T: Real>(p: T) -> Result<()> {
    if !(p >= T::lit(2.0)) || !p.is_finite() {
        return Err(Error::Domain(format!(
            "modified stress needs p >= 2, got p = {p}"
        )));
    }
    Ok(())
}

/// `(1 + s)^{(p-2)/2} - 1` without cancellation for small `s`.
#[inline]
pub fn modified_factor<T: Real>(frob_sq: T, p: T) -> T {
    let half_excess = (p - T::lit(2.0)) / T::lit(2.0);
    (half_excess * frob_sq.ln_1p()).exp_m1()
}

/// Full stress `S(D) = (1 + |D|²)^{(p-2)/2} D`.
pub fn stress_s<T: Real>(d: &SymTensor<T>, p: T) -> Result<SymTensor<T>> {
    check_full_exponent(p)?;
    let factor = T::one() + modified_factor(d.frobenius_sq(), p);
    Ok(d.scale(factor))
}

/// Modified stress `G(D) = ((1 + |D|²)^{(p-2)/2} - 1) D`.
pub fn stress_g<T: Real>(d: &SymTensor<T>, p: T) -> Result<SymTensor<T>> {
    check_modified_exponent(p)?;
    Ok(d.scale(modified_factor(d.frobenius_sq(), p)))
}

pub fn stress<T: Real>(d: &SymTensor<T>, p: T, law: StressLaw) -> Result<SymTensor<T>> {
    match law {
        StressLaw::Full => stress_s(d, p),
        StressLaw::Modified => stress_g(d, p),
    }
}

/// Monotonicity gaps `((S(B) - S(C)) : (B - C), (G(B) - G(C)) : (B - C))`.
///
/// For `p >= 2` the first is at least `|B - C|²` and the second is nonnegative.
pub fn monotonicity_gap<T: Real>(b: &SymTensor<T>, c: &SymTensor<T>, p: T) -> Result<(T, T)> {
    check_modified_exponent(p)?;
    if b.dim() != c.dim() {
        return Err(Error::Dimension("tensors of different dimension".into()));
    }
    let diff = *b - *c;
    let gap_s = (stress_s(b, p)? - stress_s(c, p)?).contract(&diff);
    let gap_g = (stress_g(b, p)? - stress_g(c, p)?).contract(&diff);
    Ok((gap_s, gap_g))
}

/// A symmetric tensor per grid node.
#[derive(Clone, Debug)]
pub struct SymTensorField<T> {
    grid: Grid<T>,
    values: Vec<SymTensor<T>>,
}

impl<T: Real> SymTensorField<T> {
    pub fn zeros(grid: Grid<T>) -> Self {
        let dim = grid.dim();
        let values = vec![SymTensor::zero(dim); grid.len()];
        Self { grid, values }
    }

    pub fn from_values(grid: Grid<T>, values: Vec<SymTensor<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} tensors for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| v.dim() != grid.dim()) {
            return Err(Error::Dimension("tensor dimension differs from grid".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[SymTensor<T>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [SymTensor<T>] {
        &mut self.values
    }

    /// `∫ |A|² dx` by nodal quadrature.
    pub fn l2_sq(&self) -> T {
        let s = self
            .values
            .iter()
            .fold(T::zero(), |acc, v| acc + v.frobenius_sq());
        s * self.grid.cell_volume()
    }

    /// `∫ |A| dx` by nodal quadrature.
    pub fn l1(&self) -> T {
        let s = self
            .values
            .iter()
            .fold(T::zero(), |acc, v| acc + v.frobenius_sq().sqrt());
        s * self.grid.cell_volume()
    }

    pub fn max_trace_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, v| m.max(v.trace().abs()))
    }
}

/// Applies `S` or `G` node by node with `p` evaluated at each node.
pub fn field_stress<T: Real>(
    field: &SymTensorField<T>,
    p: &ExponentField<T>,
    law: StressLaw,
) -> Result<SymTensorField<T>> {
    field.grid().check_same(p.grid())?;
    let values = field
        .values()
        .iter()
        .zip(p.values())
        .map(|(d, &pe)| stress(d, pe, law))
        .collect::<Result<Vec<_>>>()?;
    SymTensorField::from_values(field.grid().clone(), values)
}
