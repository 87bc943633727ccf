//! Pseudo-spectral time stepping of
//! `∂t u + (u·∇)u - div G(Du) - Δu = -∇π`, `div u = 0`,
//! with `G(D) = ((1+|D|²)^{(p(x)-2)/2} - 1) D`, and of its perturbed twin.
//!
//! The Laplacian is integrated exactly (integrating factor); convection and
//! `div G` are advanced by second-order Adams–Bashforth. Convection is formed
//! on the native grid under the two-thirds mask; the stress is evaluated on
//! the 3/2-padded grid when `pad_stress` is set.

use std::sync::Arc;

use num_complex::Complex;

use crate::analysis::inside_fraction;
use crate::error::{Error, Result};
use crate::exponent_field::{ExponentField, ExponentPreset};
use crate::grid::Grid;
use crate::heat::{box_heat_norm, oracle_norm, HeatOracle};
use crate::scalar::Real;
use crate::spectral::{
    gradient_coeffs, leray_project_in_place, sym_gradient, sym_gradient_coeffs, SpectralField,
    SpectralLayout,
};
use crate::tensor_stress::{field_stress, modified_factor, StressLaw};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stepper {
    /// Exact integrating factor for `Δ`, AB2 for the rest.
    Imex,
    /// AB2 on the full right-hand side.
    Explicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvectionForm {
    /// `u × ω` (the gradient part is removed by the projection).
    Rotational,
    /// `-∂_j (u_i u_j)`.
    Divergence,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions<T> {
    pub dt: T,
    pub stepper: Stepper,
    pub convection: ConvectionForm,
    pub drop_convection: bool,
    pub drop_g: bool,
    pub pad_stress: bool,
    /// Advective limit `dt ≤ cfl · dx / max|u|`.
    pub cfl: T,
}

impl<T: Real> SolverOptions<T> {
    pub fn new(dt: T) -> Self {
        Self {
            dt,
            stepper: Stepper::Imex,
            convection: ConvectionForm::Rotational,
            drop_convection: false,
            drop_g: false,
            pad_stress: true,
            cfl: T::lit(0.5),
        }
    }
}

/// Integrals produced by one stress evaluation (quadrature on the stress grid).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StressSums<T> {
    /// `∫ |D|²`.
    pub dd: T,
    /// `∫ G:D`.
    pub gd: T,
    /// `∫ |G|`.
    pub abs_g: T,
    /// `max (p-1)(1+|D|²)^{(p-2)/2}`, a bound on the local stress stiffness.
    pub nu_eff: T,
}

impl<T: Real> StressSums<T> {
    /// `I_p = ∫ (1+|D|²)^{(p-2)/2} |D|² = ∫ |D|² + ∫ G:D`.
    pub fn ip(&self) -> T {
        self.dd + self.gd
    }
}

/// Right-hand side evaluation at one state.
#[derive(Clone, Debug)]
pub struct Evaluation<T: Real> {
    /// Projected, dealiased `-(u·∇)u + div G`.
    pub nonstiff: SpectralField<T>,
    pub stress: StressSums<T>,
    pub max_speed: T,
}

/// A flow being advanced.
#[derive(Clone, Debug)]
pub struct FlowState<T: Real> {
    pub u: SpectralField<T>,
    pub time: T,
    pub step: usize,
    prev: Option<SpectralField<T>>,
}

impl<T: Real> FlowState<T> {
    pub fn new(u: SpectralField<T>) -> Self {
        Self {
            u,
            time: T::zero(),
            step: 0,
            prev: None,
        }
    }
}

pub struct Solver<T: Real> {
    layout: Arc<SpectralLayout<T>>,
    stress_layout: Arc<SpectralLayout<T>>,
    p_native: ExponentField<T>,
    p_stress: Vec<T>,
    opts: SolverOptions<T>,
    decay: Vec<T>,
    k_max_sq: T,
}

impl<T: Real> Solver<T> {
    pub fn new(grid: Grid<T>, preset: &ExponentPreset<T>, opts: SolverOptions<T>) -> Result<Self> {
        Self::with_layout(SpectralLayout::new(grid), preset, opts)
    }

    pub fn with_layout(
        layout: Arc<SpectralLayout<T>>,
        preset: &ExponentPreset<T>,
        opts: SolverOptions<T>,
    ) -> Result<Self> {
        if !(opts.dt > T::zero()) || !opts.dt.is_finite() {
            return Err(Error::Invalid(format!("time step dt = {} must be positive", opts.dt)));
        }
        let p_native = ExponentField::from_preset(layout.grid().clone(), preset)?;
        if p_native.p_minus() < T::lit(2.0) {
            return Err(Error::Domain(format!(
                "the modified stress needs p >= 2, exponent has p- = {}",
                p_native.p_minus()
            )));
        }
        let stress_layout = if opts.pad_stress {
            layout.padded()?
        } else {
            layout.clone()
        };
        let p_stress =
            ExponentField::from_preset(stress_layout.grid().clone(), preset)?.values().to_vec();
        let decay = (0..layout.n_modes())
            .map(|m| (-layout.k_sq(m) * opts.dt).exp())
            .collect();
        let k_max_sq = (0..layout.n_modes())
            .filter(|&m| layout.retained(m))
            .fold(T::zero(), |a, m| a.max(layout.k_sq(m)));
        Ok(Self {
            layout,
            stress_layout,
            p_native,
            p_stress,
            opts,
            decay,
            k_max_sq,
        })
    }

    pub fn layout(&self) -> &Arc<SpectralLayout<T>> {
        &self.layout
    }

    pub fn exponent(&self) -> &ExponentField<T> {
        &self.p_native
    }

    pub fn options(&self) -> &SolverOptions<T> {
        &self.opts
    }

    /// Symmetric gradient at the stress-grid nodes, packed per component.
    fn strain_on_stress_grid(&self, u: &SpectralField<T>) -> Result<(Vec<[usize; 2]>, Vec<Vec<T>>)> {
        let comps = sym_gradient_coeffs(u);
        let mut idx = Vec::with_capacity(comps.len());
        let mut phys = Vec::with_capacity(comps.len());
        for (ij, c) in comps {
            let f = SpectralField::from_coeffs(&self.layout, vec![c])?;
            let f = if Arc::ptr_eq(&self.layout, &self.stress_layout) {
                f
            } else {
                f.resample(&self.stress_layout)?
            };
            idx.push(ij);
            phys.push(self.stress_layout.fft().inverse(f.component(0)));
        }
        Ok((idx, phys))
    }

    /// `G(Du)` at the stress-grid nodes together with the stress integrals.
    fn stress_nodes(&self, u: &SpectralField<T>) -> Result<(Vec<[usize; 2]>, Vec<Vec<T>>, StressSums<T>)> {
        let (idx, mut comps) = self.strain_on_stress_grid(u)?;
        let off: Vec<bool> = idx.iter().map(|ij| ij[0] != ij[1]).collect();
        let two = T::lit(2.0);
        let n = self.stress_layout.grid().len();
        let mut sums: StressSums<T> = StressSums::default();
        for node in 0..n {
            let mut dd = T::zero();
            for (c, &o) in comps.iter().zip(&off) {
                let v = c[node];
                dd = dd + if o { two * v * v } else { v * v };
            }
            let p = self.p_stress[node];
            let f = modified_factor(dd, p);
            sums.dd = sums.dd + dd;
            sums.gd = sums.gd + f * dd;
            sums.abs_g = sums.abs_g + f.abs() * dd.sqrt();
            let nu = (p - T::one()) * (T::one() + f);
            sums.nu_eff = sums.nu_eff.max(nu);
            for c in comps.iter_mut() {
                c[node] = c[node] * f;
            }
        }
        let dv = self.stress_layout.grid().cell_volume();
        sums.dd = sums.dd * dv;
        sums.gd = sums.gd * dv;
        sums.abs_g = sums.abs_g * dv;
        Ok((idx, comps, sums))
    }

    /// Stress integrals without forming `div G`.
    pub fn stress_sums(&self, u: &SpectralField<T>) -> Result<StressSums<T>> {
        Ok(self.stress_nodes(u)?.2)
    }

    /// Unprojected `div G(Du)` on the native modes, plus the stress integrals.
    pub fn stress_divergence(&self, u: &SpectralField<T>) -> Result<(SpectralField<T>, StressSums<T>)> {
        let (idx, g, sums) = self.stress_nodes(u)?;
        let d = self.layout.dim();
        let mut out = SpectralField::zero_vector(&self.layout);
        for (ij, phys) in idx.iter().zip(&g) {
            let coeffs = self.stress_layout.fft().forward(phys);
            let f = SpectralField::from_coeffs(&self.stress_layout, vec![coeffs])?;
            let f = if Arc::ptr_eq(&self.layout, &self.stress_layout) {
                f
            } else {
                f.resample(&self.layout)?
            };
            let c = f.component(0);
            let [i, j] = *ij;
            // (div G)_i = Σ_j ∂_j G_ij; off-diagonal entries feed both rows
            for (row, col) in if i == j { vec![(i, j)] } else { vec![(i, j), (j, i)] } {
                let target = &mut out.coeffs_mut()[row];
                for m in 0..self.layout.n_modes() {
                    let k = self.layout.deriv_wavevector(m)[col];
                    target[m] = target[m] + Complex::new(-c[m].im * k, c[m].re * k);
                }
            }
        }
        debug_assert!(out.ncomp() == d);
        Ok((out, sums))
    }

    /// Convective term `-(u·∇)u` up to a gradient, and `max |u|`.
    fn convection(&self, u: &SpectralField<T>) -> Result<(SpectralField<T>, T)> {
        let d = self.layout.dim();
        let fft = self.layout.fft();
        let vel = u.to_physical();
        let n = self.layout.grid().len();
        let mut max_speed = T::zero();
        for node in 0..n {
            let s = vel.iter().fold(T::zero(), |a, c| a + c[node] * c[node]);
            max_speed = max_speed.max(s.sqrt());
        }
        if self.opts.drop_convection {
            return Ok((SpectralField::zero_vector(&self.layout), max_speed));
        }
        let out = match self.opts.convection {
            ConvectionForm::Rotational => {
                let g = gradient_coeffs(u);
                let curl = |a: usize, b: usize| -> Vec<T> {
                    // ∂_a u_b - ∂_b u_a
                    let c: Vec<Complex<T>> = g[b][a].iter().zip(&g[a][b]).map(|(x, y)| x - y).collect();
                    fft.inverse(&c)
                };
                let mut prod = vec![vec![T::zero(); n]; d];
                if d == 3 {
                    let w = [curl(1, 2), curl(2, 0), curl(0, 1)];
                    for node in 0..n {
                        let (u0, u1, u2) = (vel[0][node], vel[1][node], vel[2][node]);
                        let (w0, w1, w2) = (w[0][node], w[1][node], w[2][node]);
                        prod[0][node] = u1 * w2 - u2 * w1;
                        prod[1][node] = u2 * w0 - u0 * w2;
                        prod[2][node] = u0 * w1 - u1 * w0;
                    }
                } else {
                    let w = curl(0, 1);
                    for node in 0..n {
                        prod[0][node] = vel[1][node] * w[node];
                        prod[1][node] = -vel[0][node] * w[node];
                    }
                }
                SpectralField::from_physical(&self.layout, &prod)?
            }
            ConvectionForm::Divergence => {
                let mut out = SpectralField::zero_vector(&self.layout);
                for i in 0..d {
                    for j in i..d {
                        let prod: Vec<T> = (0..n).map(|x| vel[i][x] * vel[j][x]).collect();
                        let c = fft.forward(&prod);
                        for (row, col) in if i == j { vec![(i, j)] } else { vec![(i, j), (j, i)] } {
                            let target = &mut out.coeffs_mut()[row];
                            for m in 0..self.layout.n_modes() {
                                let k = self.layout.deriv_wavevector(m)[col];
                                // -i k_col c
                                target[m] = target[m] + Complex::new(c[m].im * k, -c[m].re * k);
                            }
                        }
                    }
                }
                out
            }
        };
        Ok((out, max_speed))
    }

    /// Projected, dealiased nonstiff term and the stress integrals at `u`.
    pub fn evaluate(&self, u: &SpectralField<T>) -> Result<Evaluation<T>> {
        let (mut n, max_speed) = self.convection(u)?;
        let stress = if self.opts.drop_g {
            self.stress_sums(u)?
        } else {
            let (div_g, sums) = self.stress_divergence(u)?;
            n.axpy(T::one(), &div_g);
            sums
        };
        n.dealias();
        n.pin_mean();
        leray_project_in_place(&mut n)?;
        Ok(Evaluation {
            nonstiff: n,
            stress,
            max_speed,
        })
    }

    /// `(Δu, P(-(u·∇)u + div G))`.
    pub fn rhs_split(&self, u: &SpectralField<T>) -> Result<(SpectralField<T>, SpectralField<T>)> {
        let mut stiff = u.clone();
        let l = self.layout.clone();
        stiff.map_modes(|m| -l.k_sq(m));
        Ok((stiff, self.evaluate(u)?.nonstiff))
    }

    fn check_limits(&self, state: &FlowState<T>, eval: &Evaluation<T>) -> Result<()> {
        let dt = self.opts.dt;
        if !self.opts.drop_convection && eval.max_speed > T::zero() {
            let bound = self.opts.cfl * self.layout.grid().min_spacing() / eval.max_speed;
            if dt > bound {
                return Err(Error::Cfl {
                    step: state.step,
                    time: state.time.as_f64(),
                    dt: dt.as_f64(),
                    bound: bound.as_f64(),
                    reason: format!("advective limit, max|u| = {:.4e}", eval.max_speed),
                });
            }
        }
        if self.opts.stepper == Stepper::Explicit {
            let nu = if self.opts.drop_g { T::one() } else { eval.stress.nu_eff.max(T::one()) };
            let bound = (self.k_max_sq * nu).recip();
            if dt > bound {
                return Err(Error::Cfl {
                    step: state.step,
                    time: state.time.as_f64(),
                    dt: dt.as_f64(),
                    bound: bound.as_f64(),
                    reason: format!("explicit diffusion limit, effective viscosity {:.4e}", nu),
                });
            }
        }
        Ok(())
    }

    /// Advances `state` by one step using an evaluation at the current state.
    pub fn advance(&self, state: &mut FlowState<T>, eval: Evaluation<T>) -> Result<()> {
        self.check_limits(state, &eval)?;
        let dt = self.opts.dt;
        let n_now = eval.nonstiff;
        let three_half = T::lit(1.5);
        let half = T::lit(0.5);
        let modes = self.layout.n_modes();
        match self.opts.stepper {
            Stepper::Imex => {
                for c in 0..state.u.ncomp() {
                    let u = &mut state.u.coeffs_mut()[c];
                    let nn = n_now.component(c);
                    match &state.prev {
                        None => {
                            for m in 0..modes {
                                u[m] = (u[m] + nn[m] * dt) * self.decay[m];
                            }
                        }
                        Some(prev) => {
                            let np = prev.component(c);
                            for m in 0..modes {
                                let e = self.decay[m];
                                u[m] = (u[m] + nn[m] * (dt * three_half)) * e
                                    - np[m] * (dt * half * e * e);
                            }
                        }
                    }
                }
            }
            Stepper::Explicit => {
                // F_n = N_n - k² u_n, kept for the next step
                let mut f_now = state.u.clone();
                let l = self.layout.clone();
                f_now.map_modes(|m| -l.k_sq(m));
                f_now.axpy(T::one(), &n_now);
                match &state.prev {
                    None => state.u.axpy(dt, &f_now),
                    Some(fp) => {
                        state.u.axpy(dt * three_half, &f_now);
                        state.u.axpy(-dt * half, fp);
                    }
                }
                state.prev = Some(f_now);
            }
        }
        if self.opts.stepper == Stepper::Imex {
            state.prev = Some(n_now);
        }
        state.u.dealias();
        state.u.pin_mean();
        state.time = state.time + dt;
        state.step += 1;
        Ok(())
    }

    /// One step from `state`: evaluate, check limits, advance.
    pub fn step(&self, state: &mut FlowState<T>) -> Result<Evaluation<T>> {
        let eval = self.evaluate(&state.u)?;
        let summary = eval.clone();
        self.advance(state, eval)?;
        Ok(summary)
    }

    /// `J_p = ∫ (1+|D|²)^{(p-2)/2} |∇D|²` by quadrature on the native grid.
    pub fn jp(&self, u: &SpectralField<T>) -> Result<T> {
        let l = &self.layout;
        let fft = l.fft();
        let d = l.dim();
        let comps = sym_gradient_coeffs(u);
        let n = l.grid().len();
        let two = T::lit(2.0);
        let mut dd = vec![T::zero(); n];
        let mut grad_sq = vec![T::zero(); n];
        for ((ij, c), _) in comps.iter().zip(0..) {
            let w = if ij[0] == ij[1] { T::one() } else { two };
            let phys = fft.inverse(c);
            for x in 0..n {
                dd[x] = dd[x] + w * phys[x] * phys[x];
            }
            for a in 0..d {
                let dc: Vec<Complex<T>> = (0..l.n_modes())
                    .map(|m| {
                        let k = l.deriv_wavevector(m)[a];
                        Complex::new(-c[m].im * k, c[m].re * k)
                    })
                    .collect();
                let g = fft.inverse(&dc);
                for x in 0..n {
                    grad_sq[x] = grad_sq[x] + w * g[x] * g[x];
                }
            }
        }
        let p = self.p_native.values();
        let s = (0..n).fold(T::zero(), |acc, x| {
            let weight = T::one() + modified_factor(dd[x], p[x]);
            acc + weight * grad_sq[x]
        });
        Ok(s * l.grid().cell_volume())
    }

    /// `∫ |G(Dũ) - G(Du)|` and `∫ (G(Dũ) - G(Du)):(Dũ - Du)` on the stress grid.
    pub fn stress_difference(&self, u: &SpectralField<T>, v: &SpectralField<T>) -> Result<(T, T)> {
        let (idx, gu, _) = self.stress_nodes(u)?;
        let (_, gv, _) = self.stress_nodes(v)?;
        let (_, du) = self.strain_on_stress_grid(u)?;
        let (_, dv) = self.strain_on_stress_grid(v)?;
        let two = T::lit(2.0);
        let n = self.stress_layout.grid().len();
        let mut l1 = T::zero();
        let mut probe = T::zero();
        for x in 0..n {
            let mut sq = T::zero();
            let mut dot = T::zero();
            for (c, ij) in idx.iter().enumerate() {
                let w = if ij[0] == ij[1] { T::one() } else { two };
                let dg = gv[c][x] - gu[c][x];
                let dd = dv[c][x] - du[c][x];
                sq = sq + w * dg * dg;
                dot = dot + w * dg * dd;
            }
            l1 = l1 + sq.sqrt();
            probe = probe + dot;
        }
        let cell = self.stress_layout.grid().cell_volume();
        Ok((l1 * cell, probe * cell))
    }
}

/// `∫ (G(Dũ) - G(Du)):(Dũ - Du) dx` by nodal quadrature, using the pointwise
/// stress law on the native grid.
pub fn monotone_dissipation_probe<T: Real>(
    u: &SpectralField<T>,
    util: &SpectralField<T>,
    p: &ExponentField<T>,
) -> Result<T> {
    u.check_compatible(util)?;
    let du = sym_gradient(u)?;
    let dv = sym_gradient(util)?;
    let gu = field_stress(&du, p, StressLaw::Modified)?;
    let gv = field_stress(&dv, p, StressLaw::Modified)?;
    let s = (0..du.values().len()).fold(T::zero(), |acc, i| {
        let dg = gv.values()[i] - gu.values()[i];
        let dd = dv.values()[i] - du.values()[i];
        acc + dg.contract(&dd)
    });
    Ok(s * u.grid().cell_volume())
}

/// Per-flow diagnostics at one output time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FlowSample<T> {
    pub t: T,
    pub step: usize,
    /// `‖u‖₂²`.
    pub energy: T,
    /// `‖∇u‖₂²`.
    pub grad_sq: T,
    /// `‖∇²u‖₂²`.
    pub hess_sq: T,
    pub ip: T,
    pub jp: T,
    /// `‖∇u‖₂² + ∫ G:Du`, so that `d/dt ‖u‖₂² = -2 · dissipation`.
    pub dissipation: T,
    /// `∫ |G(Du)|`.
    pub l1_g: T,
    pub int_ip: T,
    pub int_jp: T,
    pub int_dissipation: T,
    pub int_l1_g: T,
    pub max_speed: T,
}

/// Time series of per-flow diagnostics.
#[derive(Clone, Debug)]
pub struct EnergyLedger<T> {
    pub label: String,
    pub samples: Vec<FlowSample<T>>,
    /// Largest per-step relative increase `(‖u_{n+1}‖² - ‖u_n‖²)/‖u_n‖²`.
    pub max_step_increase: T,
    pub steps: usize,
}

impl<T: Real> EnergyLedger<T> {
    fn new(label: &str) -> Self {
        Self {
            label: label.to_string(),
            samples: Vec::new(),
            max_step_increase: T::neg_infinity(),
            steps: 0,
        }
    }

    /// `|‖u(t)‖² + 2∫ dissipation - ‖u₀‖²| / ‖u₀‖²` at the last sample.
    pub fn closure_defect(&self) -> T {
        let (Some(first), Some(last)) = (self.samples.first(), self.samples.last()) else {
            return T::zero();
        };
        if first.energy == T::zero() {
            return T::zero();
        }
        let two = T::lit(2.0);
        (last.energy + two * last.int_dissipation - first.energy).abs() / first.energy
    }

    /// Checks the energy inequality `‖u(t)‖² + ∫₀ᵗ 2 I_p ≤ ‖u₀‖² (1 + tol)`
    /// over all samples.
    pub fn energy_inequality_holds(&self, tol: T) -> bool {
        let Some(first) = self.samples.first() else {
            return true;
        };
        let two = T::lit(2.0);
        self.samples
            .iter()
            .all(|s| s.energy + two * s.int_ip <= first.energy * (T::one() + tol))
    }

    pub fn l1_g_series(&self) -> (Vec<T>, Vec<T>) {
        (
            self.samples.iter().map(|s| s.t).collect(),
            self.samples.iter().map(|s| s.int_l1_g).collect(),
        )
    }
}

/// Pair diagnostics at one output time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PairSample<T> {
    pub t: T,
    pub step: usize,
    /// `‖w‖₂` with `w = ũ - u`.
    pub norm_w: T,
    pub grad_w: T,
    /// `∫ |G(Dũ) - G(Du)|`.
    pub l1_g_diff: T,
    /// `∫ (G(Dũ) - G(Du)):(Dũ - Du)`.
    pub mono_probe: T,
    /// Fraction of `‖w‖²` inside the splitting ball.
    pub inside_fraction: T,
    /// `‖e^{tΔ} w₀‖₂` on the box.
    pub norm_phi: T,
    /// Whole-space oracle for the perturbation spectrum (0 when unavailable).
    pub oracle_w: T,
}

/// Output controls of a paired run.
#[derive(Clone, Debug)]
pub struct RunOptions<T> {
    pub t_end: T,
    /// Record every `output_every` steps (the last step is always recorded).
    pub output_every: usize,
    /// Exponent `γ` of the perturbation, used by the splitting ball.
    pub gamma_w: T,
    /// Splitting constant `C₀`.
    pub c0: T,
    /// Oracle for `‖e^{tΔ} w₀‖₂`, if the perturbation follows a known spectrum.
    pub oracle: Option<HeatOracle<T>>,
    pub record_jp: bool,
}

/// State handed to run observers at output times.
pub struct PairView<'a, T: Real> {
    pub u: &'a SpectralField<T>,
    pub util: &'a SpectralField<T>,
    pub t: T,
    pub step: usize,
}

#[derive(Clone, Debug)]
pub struct PairRun<T: Real> {
    pub ledger_u: EnergyLedger<T>,
    pub ledger_util: EnergyLedger<T>,
    pub pair: Vec<PairSample<T>>,
    pub u_final: SpectralField<T>,
    pub util_final: SpectralField<T>,
}

impl<T: Real> PairRun<T> {
    pub fn w_series(&self) -> Result<crate::decay::DecaySeries<T>> {
        crate::decay::DecaySeries::new(
            "norm_w",
            self.pair.iter().map(|s| s.t).collect(),
            self.pair.iter().map(|s| s.norm_w).collect(),
        )
    }
}

struct Tracker<T: Real> {
    ledger: EnergyLedger<T>,
    last: Option<(T, T, T, T, T)>,
    int: (T, T, T),
    last_jp: Option<(T, T)>,
    int_jp: T,
}

impl<T: Real> Tracker<T> {
    fn new(label: &str) -> Self {
        Self {
            ledger: EnergyLedger::new(label),
            last: None,
            int: (T::zero(), T::zero(), T::zero()),
            last_jp: None,
            int_jp: T::zero(),
        }
    }

    /// Accumulates trapezoid integrals with the values at the current state.
    fn accumulate(&mut self, t: T, energy: T, ip: T, dissipation: T, l1g: T) {
        let half = T::lit(0.5);
        if let Some((t0, e0, ip0, d0, g0)) = self.last {
            let h = t - t0;
            self.int.0 = self.int.0 + h * half * (ip0 + ip);
            self.int.1 = self.int.1 + h * half * (d0 + dissipation);
            self.int.2 = self.int.2 + h * half * (g0 + l1g);
            if e0 > T::zero() {
                let inc = (energy - e0) / e0;
                self.ledger.max_step_increase = self.ledger.max_step_increase.max(inc);
            }
        }
        self.last = Some((t, energy, ip, dissipation, l1g));
    }
}

fn flow_sample<T: Real>(
    solver: &Solver<T>,
    tracker: &mut Tracker<T>,
    state: &FlowState<T>,
    eval: &Evaluation<T>,
    record_jp: bool,
) -> Result<FlowSample<T>> {
    let u = &state.u;
    let grad_sq = u.grad_norm_sq();
    let jp = if record_jp { solver.jp(u)? } else { T::zero() };
    if let Some((t0, j0)) = tracker.last_jp {
        tracker.int_jp = tracker.int_jp + (state.time - t0) * T::lit(0.5) * (j0 + jp);
    }
    tracker.last_jp = Some((state.time, jp));
    Ok(FlowSample {
        t: state.time,
        step: state.step,
        energy: u.norm_sq(),
        grad_sq,
        hess_sq: u.hess_norm_sq(),
        ip: eval.stress.ip(),
        jp,
        dissipation: grad_sq + eval.stress.gd,
        l1_g: eval.stress.abs_g,
        int_ip: tracker.int.0,
        int_jp: tracker.int_jp,
        int_dissipation: tracker.int.1,
        int_l1_g: tracker.int.2,
        max_speed: eval.max_speed,
    })
}

/// Evolves `u` from `u0` and `ũ` from `util0` with identical steppers,
/// recording ledgers for both flows and diagnostics of `w = ũ - u`.
pub fn run_pair_fields<T: Real>(
    solver: &Solver<T>,
    u0: SpectralField<T>,
    util0: SpectralField<T>,
    opts: &RunOptions<T>,
    mut observer: impl FnMut(&PairView<'_, T>) -> Result<()>,
) -> Result<PairRun<T>> {
    u0.check_compatible(&util0)?;
    let dt = solver.options().dt;
    let steps_f = (opts.t_end / dt).round();
    let n_steps = steps_f.to_usize().unwrap_or(0);
    if n_steps == 0 || ((steps_f * dt - opts.t_end).abs() > dt * T::lit(1e-6)) {
        return Err(Error::Invalid(format!(
            "t_end = {} is not a positive multiple of dt = {dt}",
            opts.t_end
        )));
    }
    let every = opts.output_every.max(1);
    let w0 = util0.sub(&u0);
    let mut su = FlowState::new(u0);
    let mut sv = FlowState::new(util0);
    let mut tu = Tracker::new("u");
    let mut tv = Tracker::new("util");
    let mut pair = Vec::new();
    loop {
        let eu = solver.evaluate(&su.u)?;
        let ev = solver.evaluate(&sv.u)?;
        let grad_u = su.u.grad_norm_sq();
        let grad_v = sv.u.grad_norm_sq();
        tu.accumulate(su.time, su.u.norm_sq(), eu.stress.ip(), grad_u + eu.stress.gd, eu.stress.abs_g);
        tv.accumulate(sv.time, sv.u.norm_sq(), ev.stress.ip(), grad_v + ev.stress.gd, ev.stress.abs_g);
        let n = su.step;
        if n % every == 0 || n == n_steps {
            let fu = flow_sample(solver, &mut tu, &su, &eu, opts.record_jp)?;
            let fv = flow_sample(solver, &mut tv, &sv, &ev, opts.record_jp)?;
            tu.ledger.samples.push(fu);
            tv.ledger.samples.push(fv);
            let w = sv.u.sub(&su.u);
            let (l1_g_diff, mono_probe) = if solver.options().drop_g {
                (T::zero(), T::zero())
            } else {
                solver.stress_difference(&su.u, &sv.u)?
            };
            let t = su.time;
            pair.push(PairSample {
                t,
                step: n,
                norm_w: w.norm_sq().sqrt(),
                grad_w: w.grad_norm_sq().sqrt(),
                l1_g_diff,
                mono_probe,
                inside_fraction: inside_fraction(&w, opts.gamma_w, opts.c0, t),
                norm_phi: box_heat_norm(&w0, t, 0),
                oracle_w: match &opts.oracle {
                    Some(o) => oracle_norm(o, t)?,
                    None => T::zero(),
                },
            });
            observer(&PairView {
                u: &su.u,
                util: &sv.u,
                t,
                step: n,
            })?;
        }
        if n == n_steps {
            break;
        }
        solver.advance(&mut su, eu)?;
        solver.advance(&mut sv, ev)?;
    }
    tu.ledger.steps = n_steps;
    tv.ledger.steps = n_steps;
    Ok(PairRun {
        ledger_u: tu.ledger,
        ledger_util: tv.ledger,
        pair,
        u_final: su.u,
        util_final: sv.u,
    })
}

/// Advances a single flow to `t_end` and returns the final field.
pub fn run_single<T: Real>(solver: &Solver<T>, u0: SpectralField<T>, t_end: T) -> Result<SpectralField<T>> {
    let dt = solver.options().dt;
    let steps_f = (t_end / dt).round();
    let n_steps = steps_f.to_usize().unwrap_or(0);
    if (steps_f * dt - t_end).abs() > dt * T::lit(1e-6) {
        return Err(Error::Invalid(format!(
            "t_end = {t_end} is not a multiple of dt = {dt}"
        )));
    }
    let mut s = FlowState::new(u0);
    for _ in 0..n_steps {
        solver.step(&mut s)?;
    }
    Ok(s.u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat::heat_evolve;
    use crate::initial_data::{random_band_limited, random_in_ball};
    use std::f64::consts::PI;

    fn layout(n: usize) -> Arc<SpectralLayout<f64>> {
        SpectralLayout::new(Grid::cube(3, n, 2.0 * PI).unwrap())
    }

    fn solver(l: &Arc<SpectralLayout<f64>>, p: f64, dt: f64) -> Solver<f64> {
        Solver::with_layout(l.clone(), &ExponentPreset::Constant { p }, SolverOptions::new(dt)).unwrap()
    }

    fn shear(l: &Arc<SpectralLayout<f64>>, a: f64) -> SpectralField<f64> {
        let g = l.grid();
        let ux: Vec<f64> = (0..g.len()).map(|i| a * g.node_position(i)[1].sin()).collect();
        let z = vec![0.0; g.len()];
        SpectralField::from_physical(l, &[ux, z.clone(), z]).unwrap()
    }

    #[test]
    fn zero_field_is_fixed() {
        let l = layout(8);
        let s = solver(&l, 3.0, 1e-2);
        let (a, b) = s.rhs_split(&SpectralField::zero_vector(&l)).unwrap();
        assert_eq!(a.max_abs(), 0.0);
        assert_eq!(b.max_abs(), 0.0);
        let mut st = FlowState::new(SpectralField::zero_vector(&l));
        for _ in 0..3 {
            s.step(&mut st).unwrap();
        }
        assert_eq!(st.u.max_abs(), 0.0);
    }

    #[test]
    fn newtonian_exponent_has_no_stress() {
        let l = layout(8);
        let u = random_band_limited(&l, 1).unwrap();
        let (div, sums) = solver(&l, 2.0, 1e-2).stress_divergence(&u).unwrap();
        assert_eq!(div.max_abs(), 0.0);
        assert_eq!(sums.gd, 0.0);
        assert!((sums.ip() - sums.dd).abs() == 0.0);
    }

    #[test]
    fn stress_divergence_matches_finite_differences() {
        let (n, a) = (32, 0.7);
        let l = layout(n);
        let (div, _) = solver(&l, 4.0, 1e-3).stress_divergence(&shear(&l, a)).unwrap();
        let spectral = div.to_physical();
        // G_xy(y) = |D|² D_xy for p = 4, sampled on a grid twice as fine
        let h = 2.0 * PI / (2 * n) as f64;
        let gxy = |j: i64| {
            let y = j as f64 * h;
            let dxy = 0.5 * a * y.cos();
            2.0 * dxy * dxy * dxy
        };
        let c = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
        let g = l.grid();
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..g.len() {
            let j = 2 * g.unravel(i)[1] as i64;
            let fd: f64 = (1..=4).map(|o| c[o - 1] * (gxy(j + o as i64) - gxy(j - o as i64)) / h).sum();
            worst = worst.max((spectral[0][i] - fd).abs());
            scale = scale.max(fd.abs());
            assert!(spectral[1][i].abs() < 1e-14 && spectral[2][i].abs() < 1e-14);
        }
        assert!(worst / scale < 1e-6, "relative gap {}", worst / scale);
    }

    #[test]
    fn convection_forms_agree() {
        let l = layout(12);
        let mut u = random_band_limited(&l, 4).unwrap();
        u.scale(3.0);
        let mut s = solver(&l, 3.0, 1e-3);
        let rot = s.evaluate(&u).unwrap().nonstiff;
        s.opts.convection = ConvectionForm::Divergence;
        let div = s.evaluate(&u).unwrap().nonstiff;
        assert!(rot.max_abs_diff(&div) < 1e-12 * rot.max_abs());
    }

    #[test]
    fn linear_reduction_is_heat_flow() {
        let l = layout(8);
        let u0 = random_band_limited(&l, 2).unwrap();
        let mut o = SolverOptions::new(0.01);
        o.drop_convection = true;
        o.drop_g = true;
        let s = Solver::with_layout(l.clone(), &ExponentPreset::Constant { p: 3.0 }, o).unwrap();
        let mut st = FlowState::new(u0.clone());
        for _ in 0..50 {
            s.step(&mut st).unwrap();
        }
        let h = heat_evolve(&u0, 0.5).unwrap();
        assert!(st.u.sub(&h).norm_sq().sqrt() <= 1e-10 * h.norm_sq().sqrt());
    }

    #[test]
    fn steps_keep_divergence_and_mean_zero() {
        let l = layout(8);
        let mut u0 = random_band_limited(&l, 3).unwrap();
        u0.scale(2.0);
        for stepper in [Stepper::Imex, Stepper::Explicit] {
            let mut o = SolverOptions::new(2e-3);
            o.stepper = stepper;
            let s = Solver::with_layout(l.clone(), &ExponentPreset::Constant { p: 3.0 }, o).unwrap();
            let mut st = FlowState::new(u0.clone());
            let e0 = st.u.norm_sq();
            for _ in 0..20 {
                s.step(&mut st).unwrap();
                assert!(st.u.divergence_residual() < 1e-11);
                assert!(st.u.coeffs().iter().all(|c| c[0] == Complex::new(0.0, 0.0)));
            }
            assert!(st.u.norm_sq() < e0);
        }
    }

    #[test]
    fn cfl_violation_is_reported() {
        let l = layout(8);
        let mut u0 = random_band_limited(&l, 3).unwrap();
        u0.scale(100.0);
        let s = solver(&l, 3.0, 0.5);
        let mut st = FlowState::new(u0);
        assert!(matches!(s.step(&mut st), Err(Error::Cfl { step: 0, .. })));

        let mut o = SolverOptions::new(0.1);
        o.stepper = Stepper::Explicit;
        let s = Solver::with_layout(l.clone(), &ExponentPreset::Constant { p: 3.0 }, o).unwrap();
        let mut st = FlowState::new(random_band_limited(&l, 3).unwrap());
        assert!(matches!(s.step(&mut st), Err(Error::Cfl { .. })));
    }

    #[test]
    fn rejects_sub_quadratic_exponent() {
        let l = layout(8);
        let r = Solver::with_layout(l, &ExponentPreset::Constant { p: 1.8 }, SolverOptions::new(1e-3));
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    fn opts(t_end: f64) -> RunOptions<f64> {
        RunOptions {
            t_end,
            output_every: 2,
            gamma_w: 2.25,
            c0: 1.0,
            oracle: None,
            record_jp: true,
        }
    }

    #[test]
    fn paired_run_trivial_cases() {
        let l = layout(8);
        let s = solver(&l, 3.0, 5e-3);
        let u0 = random_band_limited(&l, 7).unwrap();
        let same = run_pair_fields(&s, u0.clone(), u0.clone(), &opts(0.05), |_| Ok(())).unwrap();
        assert!(same.pair.iter().all(|p| p.norm_w <= 1e-11));
        assert_eq!(same.pair.len(), 6);

        let zero = SpectralField::zero_vector(&l);
        let r = run_pair_fields(&s, zero, u0.clone(), &opts(0.05), |_| Ok(())).unwrap();
        assert_eq!(r.u_final.max_abs(), 0.0);
        for (p, v) in r.pair.iter().zip(&r.ledger_util.samples) {
            assert!((p.norm_w - v.energy.sqrt()).abs() <= 1e-14);
        }
    }

    #[test]
    fn swapping_data_negates_difference_exactly() {
        let l = layout(8);
        let s = solver(&l, 3.0, 5e-3);
        let a = random_band_limited(&l, 8).unwrap();
        let b = random_band_limited(&l, 9).unwrap();
        let r1 = run_pair_fields(&s, a.clone(), b.clone(), &opts(0.02), |_| Ok(())).unwrap();
        let r2 = run_pair_fields(&s, b, a, &opts(0.02), |_| Ok(())).unwrap();
        let w1 = r1.util_final.sub(&r1.u_final);
        let w2 = r2.util_final.sub(&r2.u_final);
        for (x, y) in w1.coeffs().iter().flatten().zip(w2.coeffs().iter().flatten()) {
            assert_eq!(x.re, -y.re);
            assert_eq!(x.im, -y.im);
        }
    }

    #[test]
    fn ledger_energy_accounting() {
        let l = layout(12);
        let mut u0 = random_in_ball(&l, 11, 2.5).unwrap();
        u0.scale(8.0);
        let s = solver(&l, 3.0, 1e-3);
        let r = run_pair_fields(&s, u0.clone(), u0, &opts(0.1), |_| Ok(())).unwrap();
        let led = &r.ledger_u;
        assert!(led.max_step_increase <= 0.0);
        assert!(led.closure_defect() < 1e-5, "closure {}", led.closure_defect());
        assert!(led.energy_inequality_holds(1e-6));
        for smp in &led.samples {
            assert!(smp.ip >= smp.grad_sq / 2.0 * (1.0 - 1e-12));
            assert!(smp.jp >= 0.0 && smp.l1_g >= 0.0);
        }
    }

    #[test]
    fn probe_is_zero_on_equal_fields_and_newtonian_law() {
        let l = layout(8);
        let u = random_band_limited(&l, 12).unwrap();
        let v = random_band_limited(&l, 13).unwrap();
        let p3 = ExponentField::constant(l.grid().clone(), 3.0).unwrap();
        let p2 = ExponentField::constant(l.grid().clone(), 2.0).unwrap();
        assert_eq!(monotone_dissipation_probe(&u, &u, &p3).unwrap(), 0.0);
        assert_eq!(monotone_dissipation_probe(&u, &v, &p2).unwrap(), 0.0);
        assert!(monotone_dissipation_probe(&u, &v, &p3).unwrap() > 0.0);
    }
}
