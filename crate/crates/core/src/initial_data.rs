//! Divergence-free initial fields with a prescribed low-frequency spectrum.
//!
//! Each mode gets the deterministic amplitude `|c_k|² = e(|k|) Δk^d / V` with
//! `e(r) = C r^{2γ-d} τ(r) / |S^{d-1}|`, where `τ` is 1 below `r_cut` and a
//! cosine taper down to 0 over `[r_cut, 2 r_cut]`. Only the direction of each
//! coefficient is random.

use std::sync::Arc;

use num_complex::Complex;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::{lattice_cell, leray_project_in_place, sphere_area, SpectralField, SpectralLayout};

/// Parameters of the low-frequency spectrum `C r^{2γ-d}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumSpec<T> {
    pub gamma: T,
    pub amplitude_c: T,
    pub r_cut: T,
    pub seed: u64,
}

/// Minimum number of lattice shells below `r_cut`.
pub const MIN_SHELLS: usize = 8;

impl<T: Real> SpectrumSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::lit(2.0) && self.gamma < T::lit(2.5)) {
            return Err(Error::Domain(format!(
                "gamma = {} outside (2, 5/2)",
                self.gamma
            )));
        }
        if !(self.amplitude_c >= T::zero()) || !self.amplitude_c.is_finite() {
            return Err(Error::Invalid("amplitude must be finite and nonnegative".into()));
        }
        if !(self.r_cut > T::zero()) || !self.r_cut.is_finite() {
            return Err(Error::Invalid("r_cut must be positive".into()));
        }
        Ok(())
    }

    /// Taper factor `τ(r)`.
    pub fn taper(&self, r: T) -> T {
        if r <= self.r_cut {
            T::one()
        } else if r >= self.r_cut + self.r_cut {
            T::zero()
        } else {
            (T::one() + (T::PI() * (r - self.r_cut) / self.r_cut).cos()) / T::lit(2.0)
        }
    }

    /// Target shell integral `C r^{2γ-d} τ(r)`.
    pub fn shell_target(&self, r: T, d: usize) -> T {
        let expo = self.gamma + self.gamma - T::from_usize_lossy(d);
        self.amplitude_c * r.powf(expo) * self.taper(r)
    }
}

/// Canonical member of a `±k` pair: first nonzero signed entry positive.
fn is_canonical(s: [i64; 3]) -> bool {
    for v in s {
        if v != 0 {
            return v > 0;
        }
    }
    false
}

/// Independent stream per canonical wavevector so results do not depend on
/// iteration order.
fn mode_stream(s: [i64; 3]) -> u64 {
    const OFF: i64 = 1 << 20;
    let p = |v: i64| (v + OFF) as u64 & 0x1f_ffff;
    (p(s[0]) << 42) | (p(s[1]) << 21) | p(s[2])
}

/// Random unit direction orthogonal to `k` (complex, `|a| = 1`).
fn random_direction<T: Real>(rng: &mut ChaCha8Rng, k: [T; 3], d: usize) -> [Complex<T>; 3] {
    let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
    loop {
        let mut a = [Complex::new(T::zero(), T::zero()); 3];
        for v in a.iter_mut().take(d) {
            *v = Complex::new(
                T::lit(rng.random_range(-1.0..1.0)),
                T::lit(rng.random_range(-1.0..1.0)),
            );
        }
        let dot = (0..d).fold(Complex::new(T::zero(), T::zero()), |acc, i| acc + a[i] * k[i]);
        for i in 0..d {
            a[i] = a[i] - dot * (k[i] / k2);
        }
        let n = (0..d).fold(T::zero(), |acc, i| acc + a[i].norm_sqr()).sqrt();
        if n > T::lit(1e-3) {
            for v in a.iter_mut().take(d) {
                *v = *v / n;
            }
            return a;
        }
    }
}

/// Builds a divergence-free, Hermitian, dealiased field realizing `spec`.
pub fn make_initial_field<T: Real>(
    spec: &SpectrumSpec<T>,
    layout: &Arc<SpectralLayout<T>>,
) -> Result<SpectralField<T>> {
    spec.validate()?;
    let grid = layout.grid();
    let d = grid.dim();
    let shells = (spec.r_cut / grid.k_min()).floor().to_usize().unwrap_or(0);
    if shells < MIN_SHELLS {
        return Err(Error::GridTooSmall(format!(
            "only {shells} shells below r_cut = {} (k_min = {}), need {MIN_SHELLS}",
            spec.r_cut,
            grid.k_min()
        )));
    }
    if spec.r_cut > layout.dealias_radius() {
        return Err(Error::Invalid(format!(
            "r_cut = {} exceeds the dealiasing radius {}",
            spec.r_cut,
            layout.dealias_radius()
        )));
    }
    let mut field = SpectralField::zero_vector(layout);
    if spec.amplitude_c == T::zero() {
        return Ok(field);
    }
    let area = sphere_area::<T>(d);
    let cell = lattice_cell(grid);
    let volume = grid.volume();
    let n_last = grid.dims()[d - 1] as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for m in 0..layout.n_modes() {
        if !layout.retained(m) {
            continue;
        }
        let s = layout.signed_index(m);
        let self_paired = s[d - 1] == 0 || 2 * s[d - 1] == n_last;
        if self_paired && !is_canonical(s) {
            continue;
        }
        let r = layout.k_abs(m);
        if r == T::zero() {
            continue;
        }
        let e = spec.shell_target(r, d) / area;
        if e == T::zero() {
            continue;
        }
        let amp = (e * cell / volume).sqrt();
        rng.set_stream(mode_stream(s));
        rng.set_word_pos(0);
        let dir = random_direction(&mut rng, layout.deriv_wavevector(m), d);
        for c in 0..d {
            field.coeffs_mut()[c][m] = dir[c] * amp;
        }
        if self_paired {
            let mut neg = [0i64; 3];
            for a in 0..d {
                neg[a] = -s[a];
            }
            if let Some((pm, _)) = layout.locate(neg) {
                for c in 0..d {
                    field.coeffs_mut()[c][pm] = (dir[c] * amp).conj();
                }
            }
        }
    }
    Ok(field)
}

/// Random solenoidal field band-limited to the dealiasing mask with zero mean,
/// normalized to `‖u‖₂ = 1`.
pub fn random_band_limited<T: Real>(
    layout: &Arc<SpectralLayout<T>>,
    seed: u64,
) -> Result<SpectralField<T>> {
    random_in_ball(layout, seed, T::infinity())
}

/// As [`random_band_limited`], keeping only modes with `|k| ≤ radius`.
pub fn random_in_ball<T: Real>(
    layout: &Arc<SpectralLayout<T>>,
    seed: u64,
    radius: T,
) -> Result<SpectralField<T>> {
    let g = layout.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps: Vec<Vec<T>> = (0..g.dim())
        .map(|_| (0..g.len()).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect())
        .collect();
    let mut f = SpectralField::from_physical(layout, &comps)?;
    f.dealias();
    f.pin_mean();
    let l = layout.clone();
    f.map_modes(|m| if l.k_abs(m) <= radius { T::one() } else { T::zero() });
    leray_project_in_place(&mut f)?;
    let n = f.norm_sq().sqrt();
    if n > T::zero() {
        f.scale(n.recip());
    }
    Ok(f)
}

/// `‖u‖_{L¹}` and `‖u‖_{H¹}` from nodal quadrature and Parseval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct L1H1<T> {
    pub l1: T,
    pub h1: T,
}

/// `∫|u| dx` by nodal quadrature and `(‖u‖₂² + ‖∇u‖₂²)^{1/2}` from coefficients.
pub fn l1_h1_report<T: Real>(u: &SpectralField<T>) -> L1H1<T> {
    let phys = u.to_physical();
    let n = u.grid().len();
    let mut l1 = T::zero();
    for i in 0..n {
        let s = phys.iter().fold(T::zero(), |acc, c| acc + c[i] * c[i]);
        l1 = l1 + s.sqrt();
    }
    L1H1 {
        l1: l1 * u.grid().cell_volume(),
        h1: (u.norm_sq() + u.grad_norm_sq()).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::spectral::{leray_project, shell_spectrum};
    use std::f64::consts::{PI, TAU};

    fn spec(c: f64, seed: u64) -> SpectrumSpec<f64> {
        SpectrumSpec {
            gamma: 2.25,
            amplitude_c: c,
            r_cut: 9.0,
            seed,
        }
    }

    fn layout(n: usize) -> Arc<SpectralLayout<f64>> {
        SpectralLayout::new(Grid::cube(3, n, TAU).unwrap())
    }

    #[test]
    fn zero_amplitude_gives_zero_field() {
        let f = make_initial_field(&spec(0.0, 1), &layout(32)).unwrap();
        assert_eq!(f.max_abs(), 0.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let l = layout(32);
        let a = make_initial_field(&spec(1.0, 42), &l).unwrap();
        let b = make_initial_field(&spec(1.0, 42), &l).unwrap();
        let c = make_initial_field(&spec(1.0, 43), &l).unwrap();
        for (x, y) in a.coeffs().iter().flatten().zip(b.coeffs().iter().flatten()) {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
        assert!(a.max_abs_diff(&c) > 0.0);
        // same energy for every seed: amplitudes are not sampled
        assert!((a.norm_sq() - c.norm_sq()).abs() < 1e-12 * a.norm_sq());
    }

    #[test]
    fn structural_invariants() {
        let l = layout(32);
        let f = make_initial_field(&spec(1.0, 7), &l).unwrap();
        assert!(f.divergence_residual() < 1e-13);
        assert!(f.hermitian_defect() < 1e-16);
        let p = leray_project(&f).unwrap();
        assert!(p.max_abs_diff(&f) < 1e-15);
        for m in 0..l.n_modes() {
            if !l.retained(m) {
                assert!(f.coeffs().iter().all(|c| c[m].norm() == 0.0));
            }
        }
    }

    #[test]
    fn grid_too_small() {
        let l = layout(16);
        let s = SpectrumSpec {
            r_cut: 4.0,
            ..spec(1.0, 1)
        };
        assert!(matches!(make_initial_field(&s, &l), Err(Error::GridTooSmall(_))));
        let bad = SpectrumSpec { gamma: 2.5, ..spec(1.0, 1) };
        assert!(matches!(make_initial_field(&bad, &layout(32)), Err(Error::Domain(_))));
    }

    #[test]
    fn energy_matches_lattice_sum_of_target() {
        let l = layout(32);
        let s = spec(2.0, 3);
        let f = make_initial_field(&s, &l).unwrap();
        // independent: Σ over full lattice of shell_target/4π with unit cell
        let mut expect = 0.0;
        for a in -16i64..16 {
            for b in -16i64..16 {
                for c in -16i64..16 {
                    if 3 * a.abs() >= 32 || 3 * b.abs() >= 32 || 3 * c.abs() >= 32 {
                        continue;
                    }
                    let r = ((a * a + b * b + c * c) as f64).sqrt();
                    if r > 0.0 {
                        expect += s.shell_target(r, 3) / (4.0 * PI);
                    }
                }
            }
        }
        assert!((f.norm_sq() - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn amplitude_scaling_scales_shells() {
        let l = layout(32);
        let a = make_initial_field(&spec(1.0, 9), &l).unwrap();
        let b = make_initial_field(&spec(4.0, 9), &l).unwrap();
        let sa = shell_spectrum(&a, 16).unwrap();
        let sb = shell_spectrum(&b, 16).unwrap();
        for (x, y) in sa.shell_values.iter().zip(&sb.shell_values) {
            assert!((4.0 * x - y).abs() <= 1e-12 * y.max(1e-300));
        }
    }

    #[test]
    fn single_mode_l1_h1() {
        let len = 3.0;
        let l = SpectralLayout::new(Grid::cube(3, 16, len).unwrap());
        let g = l.grid().clone();
        let a = 0.7;
        let k = TAU / len;
        let ux: Vec<f64> = (0..g.len()).map(|i| a * (k * g.node_position(i)[1]).sin()).collect();
        let z = vec![0.0; g.len()];
        let u = SpectralField::from_physical(&l, &[ux, z.clone(), z]).unwrap();
        let r = l1_h1_report(&u);
        let v = g.volume();
        // nodal quadrature of |sin| over 16 equispaced points: (1/16) Σ|sin(2πj/16)|
        let disc: f64 = (0..16).map(|j| (TAU * j as f64 / 16.0).sin().abs()).sum::<f64>() / 16.0;
        assert!((r.l1 - a * disc * v).abs() < 1e-12);
        assert!((r.l1 - a * 2.0 / PI * v).abs() / (a * 2.0 / PI * v) < 2e-2);
        let h1 = (a * a * v / 2.0 * (1.0 + k * k)).sqrt();
        assert!((r.h1 - h1).abs() < 1e-6 * h1);
        let zero = l1_h1_report(&SpectralField::zero_vector(&l));
        assert_eq!((zero.l1, zero.h1), (0.0, 0.0));
    }
}
