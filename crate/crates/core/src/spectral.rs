//! Fourier representation of periodic vector fields.
//!
//! Coefficients are Fourier-series coefficients (`FFT / N`), stored on the
//! half spectrum: the last axis keeps wavenumbers `0..=n/2`. A physical field
//! is recovered as `u(x) = Σ_k c_k e^{i k·x}` over the full (Hermitian) lattice,
//! so `‖u‖₂² = V Σ_k |c_k|²`.

use std::sync::Arc;

use num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;
use crate::tensor_stress::{SymTensor, SymTensorField};

/// Forward/inverse real FFT over a 2-D or 3-D row-major grid.
pub struct FftEngine<T: Real> {
    dims: Vec<usize>,
    spec_dims: Vec<usize>,
    r2c: Arc<dyn RealToComplex<T>>,
    c2r: Arc<dyn ComplexToReal<T>>,
    forward: Vec<Arc<dyn Fft<T>>>,
    inverse: Vec<Arc<dyn Fft<T>>>,
}

impl<T: Real> std::fmt::Debug for FftEngine<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftEngine").field("dims", &self.dims).finish()
    }
}

fn transpose<C: Copy>(src: &[C], dst: &mut [C], rows: usize, cols: usize) {
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
}

impl<T: Real> FftEngine<T> {
    pub fn new(dims: &[usize]) -> Self {
        let mut rp = RealFftPlanner::<T>::new();
        let mut cp = FftPlanner::<T>::new();
        let last = *dims.last().expect("nonempty dims");
        let mut spec_dims = dims.to_vec();
        *spec_dims.last_mut().unwrap() = last / 2 + 1;
        let other = &dims[..dims.len() - 1];
        Self {
            dims: dims.to_vec(),
            spec_dims,
            r2c: rp.plan_fft_forward(last),
            c2r: rp.plan_fft_inverse(last),
            forward: other.iter().map(|&n| cp.plan_fft_forward(n)).collect(),
            inverse: other.iter().map(|&n| cp.plan_fft_inverse(n)).collect(),
        }
    }

    pub fn spec_dims(&self) -> &[usize] {
        &self.spec_dims
    }

    pub fn n_modes(&self) -> usize {
        self.spec_dims.iter().product()
    }

    pub fn n_nodes(&self) -> usize {
        self.dims.iter().product()
    }

    /// Complex transforms along every axis except the last.
    fn complex_passes(&self, data: &mut [Complex<T>], inverse: bool) {
        let plans = if inverse { &self.inverse } else { &self.forward };
        let d = self.spec_dims.len();
        for axis in 0..d - 1 {
            let len = self.spec_dims[axis];
            let outer: usize = self.spec_dims[..axis].iter().product();
            let inner: usize = self.spec_dims[axis + 1..].iter().product();
            let block = len * inner;
            let plan = &plans[axis];
            let mut buf = vec![Complex::new(T::zero(), T::zero()); block];
            let mut scratch = vec![Complex::new(T::zero(), T::zero()); plan.get_inplace_scratch_len()];
            for o in 0..outer {
                let chunk = &mut data[o * block..(o + 1) * block];
                transpose(chunk, &mut buf, len, inner);
                plan.process_with_scratch(&mut buf, &mut scratch);
                transpose(&buf, chunk, inner, len);
            }
        }
    }

    /// Fourier coefficients of a real field (normalized by the node count).
    pub fn forward(&self, real: &[T]) -> Vec<Complex<T>> {
        let n_last = *self.dims.last().unwrap();
        let m_last = *self.spec_dims.last().unwrap();
        let rows = self.n_nodes() / n_last;
        assert_eq!(real.len(), self.n_nodes(), "physical array size");
        let mut out = vec![Complex::new(T::zero(), T::zero()); self.n_modes()];
        let mut row = vec![T::zero(); n_last];
        let mut scratch = self.r2c.make_scratch_vec();
        for r in 0..rows {
            row.copy_from_slice(&real[r * n_last..(r + 1) * n_last]);
            self.r2c
                .process_with_scratch(&mut row, &mut out[r * m_last..(r + 1) * m_last], &mut scratch)
                .expect("r2c sizes");
        }
        self.complex_passes(&mut out, false);
        let scale = T::from_usize_lossy(self.n_nodes()).recip();
        for c in out.iter_mut() {
            *c = *c * scale;
        }
        out
    }

    /// Physical values from Fourier coefficients.
    pub fn inverse(&self, spec: &[Complex<T>]) -> Vec<T> {
        let n_last = *self.dims.last().unwrap();
        let m_last = *self.spec_dims.last().unwrap();
        let rows = self.n_nodes() / n_last;
        assert_eq!(spec.len(), self.n_modes(), "spectral array size");
        let mut work = spec.to_vec();
        self.complex_passes(&mut work, true);
        let mut out = vec![T::zero(); self.n_nodes()];
        let mut scratch = self.c2r.make_scratch_vec();
        for r in 0..rows {
            let row = &mut work[r * m_last..(r + 1) * m_last];
            row[0].im = T::zero();
            if n_last % 2 == 0 {
                row[m_last - 1].im = T::zero();
            }
            self.c2r
                .process_with_scratch(row, &mut out[r * n_last..(r + 1) * n_last], &mut scratch)
                .expect("c2r sizes");
        }
        out
    }
}

/// Mode bookkeeping for one grid: signed wavenumbers, dealiasing mask and
/// half-spectrum multiplicities, plus the FFT plans.
#[derive(Debug)]
pub struct SpectralLayout<T: Real> {
    grid: Grid<T>,
    fft: FftEngine<T>,
    signed: Vec<[i64; 3]>,
    kvec: Vec<[T; 3]>,
    kderiv: Vec<[T; 3]>,
    ksq: Vec<T>,
    mask: Vec<bool>,
    weight: Vec<T>,
}

impl<T: Real> SpectralLayout<T> {
    pub fn new(grid: Grid<T>) -> Arc<Self> {
        let fft = FftEngine::new(grid.dims());
        let d = grid.dim();
        let dims = grid.dims().to_vec();
        let spec = fft.spec_dims().to_vec();
        let n_modes = fft.n_modes();
        let mut signed = Vec::with_capacity(n_modes);
        let mut kvec = Vec::with_capacity(n_modes);
        let mut kderiv = Vec::with_capacity(n_modes);
        let mut ksq = Vec::with_capacity(n_modes);
        let mut mask = Vec::with_capacity(n_modes);
        let mut weight = Vec::with_capacity(n_modes);
        let units: Vec<T> = (0..d).map(|a| grid.k_unit(a)).collect();
        for flat in 0..n_modes {
            let mut rem = flat;
            let mut idx = [0usize; 3];
            for a in (0..d).rev() {
                idx[a] = rem % spec[a];
                rem /= spec[a];
            }
            let mut s = [0i64; 3];
            let mut k = [T::zero(); 3];
            let mut kd = [T::zero(); 3];
            let mut keep = true;
            let mut k2 = T::zero();
            for a in 0..d {
                let n = dims[a] as i64;
                let i = idx[a] as i64;
                let si = if a == d - 1 || i < n / 2 { i } else { i - n };
                s[a] = si;
                k[a] = T::lit(si as f64) * units[a];
                let nyquist = si.abs() * 2 == n;
                kd[a] = if nyquist { T::zero() } else { k[a] };
                keep &= 3 * si.abs() < n;
                k2 = k2 + k[a] * k[a];
            }
            let last = idx[d - 1];
            let w = if last == 0 || 2 * last == dims[d - 1] { 1.0 } else { 2.0 };
            signed.push(s);
            kvec.push(k);
            kderiv.push(kd);
            ksq.push(k2);
            mask.push(keep);
            weight.push(T::lit(w));
        }
        Arc::new(Self {
            grid,
            fft,
            signed,
            kvec,
            kderiv,
            ksq,
            mask,
            weight,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn fft(&self) -> &FftEngine<T> {
        &self.fft
    }

    pub fn n_modes(&self) -> usize {
        self.signed.len()
    }

    pub fn signed_index(&self, mode: usize) -> [i64; 3] {
        self.signed[mode]
    }

    /// Wavevector `2π m / L` (Nyquist entries keep their signed value).
    pub fn wavevector(&self, mode: usize) -> [T; 3] {
        self.kvec[mode]
    }

    /// Wavevector used for differentiation: Nyquist entries are zeroed so that
    /// derivatives of real fields stay real.
    pub fn deriv_wavevector(&self, mode: usize) -> [T; 3] {
        self.kderiv[mode]
    }

    pub fn k_sq(&self, mode: usize) -> T {
        self.ksq[mode]
    }

    pub fn k_abs(&self, mode: usize) -> T {
        self.ksq[mode].sqrt()
    }

    /// Two-thirds rule: kept iff `3|m_a| < n_a` on every axis.
    pub fn retained(&self, mode: usize) -> bool {
        self.mask[mode]
    }

    pub fn dealias_mask(&self) -> &[bool] {
        &self.mask
    }

    /// Number of lattice modes represented by a half-spectrum entry (1 or 2).
    pub fn weight(&self, mode: usize) -> T {
        self.weight[mode]
    }

    /// Largest `|k|` among retained modes.
    pub fn retained_k_max(&self) -> T {
        (0..self.n_modes())
            .filter(|&m| self.mask[m])
            .fold(T::zero(), |acc, m| acc.max(self.k_abs(m)))
    }

    /// Largest wavenumber magnitude kept along every axis direction
    /// (radius of the inscribed dealiasing ball).
    pub fn dealias_radius(&self) -> T {
        let d = self.dim();
        (0..d)
            .map(|a| {
                let n = self.grid.dims()[a] as i64;
                let m = (n - 1) / 3;
                T::lit(m as f64) * self.grid.k_unit(a)
            })
            .fold(T::infinity(), T::min)
    }

    /// Index of the half-spectrum entry holding signed wavenumber `s`, and
    /// whether it is stored as the conjugate partner. Nyquist wavenumbers may
    /// be given with either sign.
    pub fn locate(&self, s: [i64; 3]) -> Option<(usize, bool)> {
        let d = self.dim();
        let dims = self.grid.dims();
        let spec = self.fft.spec_dims();
        let (s, conj) = if s[d - 1] < 0 {
            let mut n = s;
            for v in n.iter_mut().take(d) {
                *v = -*v;
            }
            (n, true)
        } else {
            (s, false)
        };
        let mut flat = 0usize;
        for a in 0..d {
            let n = dims[a] as i64;
            let v = s[a];
            if v < -(n / 2) || v > n / 2 || (a == d - 1 && v < 0) {
                return None;
            }
            let idx = v.rem_euclid(n);
            flat = flat * spec[a] + idx as usize;
        }
        Some((flat, conj))
    }

    /// Layout of the grid refined by `3/2` along every axis.
    pub fn padded(&self) -> Result<Arc<Self>> {
        let dims: Vec<usize> = self.grid.dims().iter().map(|n| n * 3 / 2).collect();
        if self.grid.dims().iter().any(|n| (n * 3) % 4 != 0) {
            return Err(Error::Dimension(format!(
                "3/2 padding needs axis sizes divisible by 4, got {:?}",
                self.grid.dims()
            )));
        }
        Ok(Self::new(Grid::new(&dims, self.grid.box_length())?))
    }
}

/// Fourier coefficients of a real field with `ncomp` components.
#[derive(Clone, Debug)]
pub struct SpectralField<T: Real> {
    layout: Arc<SpectralLayout<T>>,
    coeffs: Vec<Vec<Complex<T>>>,
}

fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

impl<T: Real> SpectralField<T> {
    pub fn zeros(layout: &Arc<SpectralLayout<T>>, ncomp: usize) -> Self {
        Self {
            layout: layout.clone(),
            coeffs: vec![vec![czero(); layout.n_modes()]; ncomp],
        }
    }

    /// Vector field with one component per axis.
    pub fn zero_vector(layout: &Arc<SpectralLayout<T>>) -> Self {
        Self::zeros(layout, layout.dim())
    }

    pub fn from_coeffs(layout: &Arc<SpectralLayout<T>>, coeffs: Vec<Vec<Complex<T>>>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|c| c.len() != layout.n_modes()) {
            return Err(Error::Dimension(format!(
                "coefficient arrays must have {} modes",
                layout.n_modes()
            )));
        }
        Ok(Self {
            layout: layout.clone(),
            coeffs,
        })
    }

    /// Forward transform of physical component arrays.
    pub fn from_physical(layout: &Arc<SpectralLayout<T>>, comps: &[Vec<T>]) -> Result<Self> {
        let n = layout.grid().len();
        if comps.is_empty() || comps.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension(format!(
                "physical components must have {n} nodes"
            )));
        }
        let coeffs = comps.iter().map(|c| layout.fft().forward(c)).collect();
        Ok(Self {
            layout: layout.clone(),
            coeffs,
        })
    }

    pub fn to_physical(&self) -> Vec<Vec<T>> {
        self.coeffs.iter().map(|c| self.layout.fft().inverse(c)).collect()
    }

    pub fn layout(&self) -> &Arc<SpectralLayout<T>> {
        &self.layout
    }

    pub fn grid(&self) -> &Grid<T> {
        self.layout.grid()
    }

    pub fn ncomp(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Vec<Complex<T>>] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Vec<Complex<T>>] {
        &mut self.coeffs
    }

    pub fn component(&self, c: usize) -> &[Complex<T>] {
        &self.coeffs[c]
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        self.grid().check_same(other.grid())?;
        if self.ncomp() != other.ncomp() {
            return Err(Error::Dimension(format!(
                "{} vs {} components",
                self.ncomp(),
                other.ncomp()
            )));
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for comp in self.coeffs.iter_mut() {
            for c in comp.iter_mut() {
                *c = *c * s;
            }
        }
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: T, other: &Self) {
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            for (u, v) in x.iter_mut().zip(y) {
                *u = *u + *v * a;
            }
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-T::one(), other);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(T::one(), other);
        out
    }

    /// Multiplies every mode by `f(mode)`.
    pub fn map_modes(&mut self, f: impl Fn(usize) -> T) {
        let n = self.layout.n_modes();
        let factors: Vec<T> = (0..n).map(f).collect();
        for comp in self.coeffs.iter_mut() {
            for (c, &s) in comp.iter_mut().zip(&factors) {
                *c = *c * s;
            }
        }
    }

    /// Zeroes modes outside the two-thirds mask.
    pub fn dealias(&mut self) {
        let mask = self.layout.dealias_mask();
        for comp in self.coeffs.iter_mut() {
            for (c, &keep) in comp.iter_mut().zip(mask) {
                if !keep {
                    *c = czero();
                }
            }
        }
    }

    pub fn pin_mean(&mut self) {
        for comp in self.coeffs.iter_mut() {
            comp[0] = czero();
        }
    }

    /// `V Σ_k |c_k|²` over the full lattice.
    pub fn norm_sq(&self) -> T {
        self.weighted_sum(|_| T::one())
    }

    /// `‖∇u‖₂² = V Σ_k |k|² |c_k|²` (differentiation wavevectors).
    pub fn grad_norm_sq(&self) -> T {
        let l = self.layout.clone();
        self.weighted_sum(move |m| {
            let k = l.deriv_wavevector(m);
            k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
        })
    }

    /// `‖∇²u‖₂² = V Σ_k |k|⁴ |c_k|²`.
    pub fn hess_norm_sq(&self) -> T {
        let l = self.layout.clone();
        self.weighted_sum(move |m| {
            let k = l.deriv_wavevector(m);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            k2 * k2
        })
    }

    /// `V Σ_k w(k) |c_k|²` for a per-mode weight `w`.
    pub fn weighted_sum(&self, w: impl Fn(usize) -> T) -> T {
        let l = &self.layout;
        let mut total = T::zero();
        for m in 0..l.n_modes() {
            let wm = w(m);
            if wm == T::zero() {
                continue;
            }
            let e = self
                .coeffs
                .iter()
                .fold(T::zero(), |acc, c| acc + c[m].norm_sqr());
            total = total + l.weight(m) * wm * e;
        }
        total * self.grid().volume()
    }

    /// Largest `|k · c_k| / (|k| |c_k|)` over nonzero modes.
    pub fn divergence_residual(&self) -> T {
        let l = &self.layout;
        let d = l.dim();
        let mut worst = T::zero();
        for m in 0..l.n_modes() {
            let k = l.deriv_wavevector(m);
            let mut dot = czero::<T>();
            let mut mag = T::zero();
            for a in 0..d {
                dot = dot + self.coeffs[a][m] * k[a];
                mag = mag + self.coeffs[a][m].norm_sqr();
            }
            let kabs = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]).sqrt();
            if mag > T::zero() && kabs > T::zero() {
                worst = worst.max(dot.norm() / (mag.sqrt() * kabs));
            }
        }
        worst
    }

    /// Largest violation of `c(-k) = conj(c(k))` within the self-paired planes
    /// of the half spectrum.
    pub fn hermitian_defect(&self) -> T {
        let l = &self.layout;
        let d = l.dim();
        let n_last = l.grid().dims()[d - 1] as i64;
        let mut worst = T::zero();
        for m in 0..l.n_modes() {
            let s = l.signed_index(m);
            if s[d - 1] != 0 && 2 * s[d - 1] != n_last {
                continue;
            }
            let mut neg = [0i64; 3];
            for a in 0..d {
                let n = l.grid().dims()[a] as i64;
                neg[a] = if 2 * s[a].abs() == n { s[a] } else { -s[a] };
            }
            if let Some((pm, _)) = l.locate(neg) {
                for comp in &self.coeffs {
                    worst = worst.max((comp[m] - comp[pm].conj()).norm());
                }
            }
        }
        worst
    }

    /// Replaces self-paired plane entries by their Hermitian average.
    pub fn enforce_hermitian(&mut self) {
        let l = self.layout.clone();
        let d = l.dim();
        let n_last = l.grid().dims()[d - 1] as i64;
        let half = T::lit(0.5);
        for m in 0..l.n_modes() {
            let s = l.signed_index(m);
            if s[d - 1] != 0 && 2 * s[d - 1] != n_last {
                continue;
            }
            let mut neg = [0i64; 3];
            for a in 0..d {
                let n = l.grid().dims()[a] as i64;
                neg[a] = if 2 * s[a].abs() == n { s[a] } else { -s[a] };
            }
            if let Some((pm, _)) = l.locate(neg) {
                if pm < m {
                    continue;
                }
                for comp in self.coeffs.iter_mut() {
                    let avg = (comp[m] + comp[pm].conj()) * half;
                    comp[m] = avg;
                    comp[pm] = avg.conj();
                }
            }
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let mut worst = T::zero();
        for (x, y) in self.coeffs.iter().zip(&other.coeffs) {
            for (u, v) in x.iter().zip(y) {
                worst = worst.max((*u - *v).norm());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> T {
        self.coeffs
            .iter()
            .flat_map(|c| c.iter())
            .fold(T::zero(), |m, c| m.max(c.norm()))
    }

    /// Copies modes into another layout by signed wavenumber; modes absent in
    /// the target, and Nyquist modes of the source, are dropped.
    pub fn resample(&self, target: &Arc<SpectralLayout<T>>) -> Result<Self> {
        let src = &self.layout;
        if src.dim() != target.dim() || src.grid().box_length() != target.grid().box_length() {
            return Err(Error::GridMismatch {
                left: format!("{:?}", src.grid().dims()),
                right: format!("{:?}", target.grid().dims()),
            });
        }
        let d = src.dim();
        let mut out = Self::zeros(target, self.ncomp());
        let sd = src.grid().dims();
        let td = target.grid().dims();
        for m in 0..src.n_modes() {
            let s = src.signed_index(m);
            let inside = (0..d).all(|a| {
                let ns = sd[a] as i64;
                let nt = td[a] as i64;
                2 * s[a].abs() < ns && 2 * s[a].abs() < nt
            });
            if !inside {
                continue;
            }
            if let Some((tm, conj)) = target.locate(s) {
                debug_assert!(!conj);
                for c in 0..self.ncomp() {
                    out.coeffs[c][tm] = self.coeffs[c][m];
                }
            }
        }
        Ok(out)
    }
}

/// `û ← û - k (k·û)/|k|²` per mode with the differentiation wavevector, so
/// the result is divergence-free for the spectral divergence; modes with no
/// differentiable direction (the mean) are passed through.
pub fn leray_project<T: Real>(v: &SpectralField<T>) -> Result<SpectralField<T>> {
    let mut out = v.clone();
    leray_project_in_place(&mut out)?;
    Ok(out)
}

pub fn leray_project_in_place<T: Real>(v: &mut SpectralField<T>) -> Result<()> {
    let l = v.layout().clone();
    let d = l.dim();
    if v.ncomp() != d {
        return Err(Error::Dimension(format!(
            "projection needs {d} components, got {}",
            v.ncomp()
        )));
    }
    for m in 0..l.n_modes() {
        let k = l.deriv_wavevector(m);
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        if k2 == T::zero() {
            continue;
        }
        let mut dot = czero::<T>();
        for a in 0..d {
            dot = dot + v.coeffs[a][m] * k[a];
        }
        let f = dot / k2;
        for a in 0..d {
            v.coeffs[a][m] = v.coeffs[a][m] - f * k[a];
        }
    }
    Ok(())
}

/// Spectral `∂_j u_i` for all `i, j`, as coefficient arrays indexed `[i][j]`.
pub fn gradient_coeffs<T: Real>(u: &SpectralField<T>) -> Vec<Vec<Vec<Complex<T>>>> {
    let l = u.layout();
    let d = l.dim();
    (0..u.ncomp())
        .map(|i| {
            (0..d)
                .map(|j| {
                    (0..l.n_modes())
                        .map(|m| {
                            let kj = l.deriv_wavevector(m)[j];
                            let c = u.coeffs[i][m];
                            Complex::new(-c.im * kj, c.re * kj)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Coefficients of `D u = (∇u + ∇uᵀ)/2` in packed order xx, yy, zz, xy, xz, yz
/// (entries absent in 2-D are omitted).
pub fn sym_gradient_coeffs<T: Real>(u: &SpectralField<T>) -> Vec<([usize; 2], Vec<Complex<T>>)> {
    let l = u.layout();
    let d = l.dim();
    let pairs: &[[usize; 2]] = if d == 3 {
        &[[0, 0], [1, 1], [2, 2], [0, 1], [0, 2], [1, 2]]
    } else {
        &[[0, 0], [1, 1], [0, 1]]
    };
    let half = T::lit(0.5);
    pairs
        .iter()
        .map(|&[i, j]| {
            let vals = (0..l.n_modes())
                .map(|m| {
                    let k = l.deriv_wavevector(m);
                    let s = u.coeffs[i][m] * k[j] + u.coeffs[j][m] * k[i];
                    Complex::new(-s.im * half, s.re * half)
                })
                .collect();
            ([i, j], vals)
        })
        .collect()
}

/// Symmetric gradient `D u` evaluated at the grid nodes.
pub fn sym_gradient<T: Real>(u: &SpectralField<T>) -> Result<SymTensorField<T>> {
    let d = u.layout().dim();
    if u.ncomp() != d {
        return Err(Error::Dimension("sym_gradient needs a vector field".into()));
    }
    let comps = sym_gradient_coeffs(u);
    let phys: Vec<([usize; 2], Vec<T>)> = comps
        .iter()
        .map(|(ij, c)| (*ij, u.layout().fft().inverse(c)))
        .collect();
    let n = u.grid().len();
    let values = (0..n)
        .map(|node| {
            let mut t = SymTensor::zero(d);
            for (ij, v) in &phys {
                t.set(ij[0], ij[1], v[node]);
            }
            t
        })
        .collect();
    SymTensorField::from_values(u.grid().clone(), values)
}

/// Shell-integral estimate of the radial spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialSpectrum<T> {
    /// `n_bins + 1` equally spaced edges on `[0, k_max]`.
    pub bin_edges: Vec<T>,
    /// Mean `|k|` of the lattice modes in each bin (bin midpoint when empty).
    pub radii: Vec<T>,
    /// Estimate of `∫_{S^{d-1}} |û(rω)|² dω` per bin.
    pub shell_values: Vec<T>,
    /// Lattice modes per bin (full lattice, both members of a ± pair).
    pub counts: Vec<usize>,
}

impl<T: Real> RadialSpectrum<T> {
    /// `Σ_bins shell · (r_hi^d - r_lo^d)/d`, the radial quadrature of
    /// `∫ shell(r) r^{d-1} dr`.
    pub fn energy(&self, d: usize) -> T {
        let dd = T::from_usize_lossy(d);
        self.shell_values
            .iter()
            .zip(self.bin_edges.windows(2))
            .fold(T::zero(), |acc, (&s, e)| {
                acc + s * (e[1].powi(d as i32) - e[0].powi(d as i32)) / dd
            })
    }
}

/// Area of the unit sphere `S^{d-1}` (`2π` for d = 2, `4π` for d = 3).
pub fn sphere_area<T: Real>(d: usize) -> T {
    match d {
        2 => T::TAU(),
        3 => T::lit(4.0) * T::PI(),
        _ => panic!("dimension {d}"),
    }
}

/// Volume of one cell of the wavevector lattice, `Π 2π/L_a`.
pub fn lattice_cell<T: Real>(grid: &Grid<T>) -> T {
    (0..grid.dim()).fold(T::one(), |acc, a| acc * grid.k_unit(a))
}

/// Bins `V|c_k|²/Δk^d` by `|k|` and averages within each bin, scaled by the
/// sphere area; this estimates the shell integral of the continuum transform.
pub fn shell_spectrum<T: Real>(u: &SpectralField<T>, n_bins: usize) -> Result<RadialSpectrum<T>> {
    if n_bins < 4 {
        return Err(Error::Invalid(format!("need at least 4 bins, got {n_bins}")));
    }
    let l = u.layout();
    let d = l.dim();
    let k_max = (0..l.n_modes()).fold(T::zero(), |m, i| m.max(l.k_abs(i)));
    let nb = T::from_usize_lossy(n_bins);
    let width = k_max / nb;
    let dens = u.grid().volume() / lattice_cell(u.grid());
    let mut sum = vec![T::zero(); n_bins];
    let mut rsum = vec![T::zero(); n_bins];
    let mut count = vec![T::zero(); n_bins];
    let mut counts = vec![0usize; n_bins];
    for m in 0..l.n_modes() {
        let r = l.k_abs(m);
        if r == T::zero() {
            continue;
        }
        let b = ((r / width).ceil().to_usize().unwrap_or(1).max(1) - 1).min(n_bins - 1);
        let w = l.weight(m);
        let e = u.coeffs.iter().fold(T::zero(), |acc, c| acc + c[m].norm_sqr());
        sum[b] = sum[b] + w * e * dens;
        rsum[b] = rsum[b] + w * r;
        count[b] = count[b] + w;
        counts[b] += w.to_usize().unwrap_or(1);
    }
    let area = sphere_area::<T>(d);
    let bin_edges: Vec<T> = (0..=n_bins)
        .map(|i| T::from_usize_lossy(i) * width)
        .collect();
    let mut radii = Vec::with_capacity(n_bins);
    let mut shell_values = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        if count[b] > T::zero() {
            radii.push(rsum[b] / count[b]);
            shell_values.push(area * sum[b] / count[b]);
        } else {
            radii.push((bin_edges[b] + bin_edges[b + 1]) / T::lit(2.0));
            shell_values.push(T::zero());
        }
    }
    Ok(RadialSpectrum {
        bin_edges,
        radii,
        shell_values,
        counts,
    })
}

/// Result of [`korn_plancherel_check`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KornPlancherel<T> {
    /// `‖∇u‖₂² / ‖Du‖₂²`, absent for the zero field.
    pub ratio: Option<T>,
    /// Relative gap between the physical and coefficient-space `L²` norms.
    pub parseval_gap: T,
}

/// `‖∇u‖₂²` from coefficients against `‖Du‖₂²` by physical quadrature, and
/// the discrete Plancherel gap of `u`.
pub fn korn_plancherel_check<T: Real>(u: &SpectralField<T>) -> Result<KornPlancherel<T>> {
    let parseval_gap = parseval_gap(u);
    let grad = u.grad_norm_sq();
    let du = sym_gradient(u)?;
    let du_sq = du.l2_sq();
    let ratio = if du_sq > T::zero() && grad > T::zero() {
        Some(grad / du_sq)
    } else {
        None
    };
    Ok(KornPlancherel {
        ratio,
        parseval_gap,
    })
}

/// Physical quadrature of `|u|²`.
pub fn physical_norm_sq<T: Real>(grid: &Grid<T>, comps: &[Vec<T>]) -> T {
    let s = comps
        .iter()
        .flat_map(|c| c.iter())
        .fold(T::zero(), |acc, &v| acc + v * v);
    s * grid.cell_volume()
}

/// `|‖u‖_phys² - ‖u‖_coef²| / ‖u‖_coef²` (0 for the zero field).
pub fn parseval_gap<T: Real>(u: &SpectralField<T>) -> T {
    let coef = u.norm_sq();
    let phys = physical_norm_sq(u.grid(), &u.to_physical());
    if coef == T::zero() {
        return phys;
    }
    (phys - coef).abs() / coef
}
