//! Heat semigroup on the box and the whole-space radial oracle.

use crate::error::{Error, Result};
use crate::initial_data::SpectrumSpec;
use crate::scalar::Real;
use crate::spectral::SpectralField;

/// `e^{tΔ} u₀`: every mode is multiplied by `exp(-|k|² t)`.
pub fn heat_evolve<T: Real>(u0: &SpectralField<T>, t: T) -> Result<SpectralField<T>> {
    if !(t >= T::zero()) {
        return Err(Error::Domain(format!("heat time t = {t} is negative")));
    }
    let mut out = u0.clone();
    if t > T::zero() {
        let l = u0.layout().clone();
        out.map_modes(|m| (-l.k_sq(m) * t).exp());
    }
    Ok(out)
}

/// `‖∇^m e^{tΔ} u₀‖₂` on the box, evaluated per mode without forming the field.
pub fn box_heat_norm<T: Real>(u0: &SpectralField<T>, t: T, m: u32) -> T {
    let l = u0.layout().clone();
    let two = T::lit(2.0);
    u0.weighted_sum(|i| {
        let k2 = l.k_sq(i);
        k2.powi(m as i32) * (-two * k2 * t).exp()
    })
    .sqrt()
}

/// Radial model of `‖∇^m e^{tΔ} u₀‖₂²` for data whose shell integral is
/// `C r^{2γ-d} τ(r)`:
/// `∫₀^∞ C r^{2γ-1+2m} τ(r) e^{-2r²t} dr`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatOracle<T> {
    pub gamma: T,
    pub amplitude_c: T,
    /// `None` for the untruncated spectrum.
    pub r_cut: Option<T>,
    /// Apply the cosine taper over `[r_cut, 2 r_cut]` (otherwise a sharp cut).
    pub taper: bool,
    pub m: u32,
}

impl<T: Real> HeatOracle<T> {
    /// Oracle mirroring a [`SpectrumSpec`].
    pub fn for_spec(spec: &SpectrumSpec<T>, m: u32) -> Self {
        Self {
            gamma: spec.gamma,
            amplitude_c: spec.amplitude_c,
            r_cut: Some(spec.r_cut),
            taper: true,
            m,
        }
    }

    fn taper(&self, r: T) -> T {
        match self.r_cut {
            None => T::one(),
            Some(rc) => {
                if r <= rc {
                    T::one()
                } else if !self.taper || r >= rc + rc {
                    T::zero()
                } else {
                    (T::one() + (T::PI() * (r - rc) / rc).cos()) / T::lit(2.0)
                }
            }
        }
    }

    fn integrand(&self, r: T, t: T) -> T {
        if r <= T::zero() {
            return T::zero();
        }
        let expo = self.gamma + self.gamma - T::one() + T::lit(2.0 * self.m as f64);
        self.amplitude_c * r.powf(expo) * self.taper(r) * (-T::lit(2.0) * r * r * t).exp()
    }
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<T: Real>(f: &impl Fn(T) -> T, a: T, b: T) -> (T, T) {
    let c = (a + b) / T::lit(2.0);
    let h = (b - a) / T::lit(2.0);
    let fc = f(c);
    let mut k = fc * T::lit(WGK[7]);
    let mut g = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = h * T::lit(XGK[j]);
        let s = f(c - dx) + f(c + dx);
        k = k + s * T::lit(WGK[j]);
        if j % 2 == 1 {
            g = g + s * T::lit(WG[j / 2]);
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss–Kronrod quadrature over `[a, b]` with initial
/// breakpoints; splits the interval with the largest error estimate until the
/// summed estimate is below `rel_tol · |I|`.
pub fn integrate_adaptive<T: Real>(
    f: impl Fn(T) -> T,
    breakpoints: &[T],
    rel_tol: T,
    max_intervals: usize,
) -> (T, T) {
    let mut parts: Vec<(T, T, T, T)> = breakpoints
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (i, e) = gk15(&f, w[0], w[1]);
            (w[0], w[1], i, e)
        })
        .collect();
    loop {
        let total = parts.iter().fold(T::zero(), |s, p| s + p.2);
        let err = parts.iter().fold(T::zero(), |s, p| s + p.3);
        if err <= rel_tol * total.abs() || parts.len() >= max_intervals || parts.is_empty() {
            return (total, err);
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (a, b, _, _) = parts.swap_remove(worst);
        let mid = (a + b) / T::lit(2.0);
        let (i1, e1) = gk15(&f, a, mid);
        let (i2, e2) = gk15(&f, mid, b);
        parts.push((a, mid, i1, e1));
        parts.push((mid, b, i2, e2));
    }
}

/// Radius beyond which `e^{-2r²t}` is below `e^{-200}`.
fn gaussian_reach<T: Real>(t: T) -> T {
    (T::lit(100.0) / t).sqrt()
}

/// `‖∇^m e^{tΔ} u₀‖₂` of the radial model, by adaptive quadrature to
/// relative tolerance `1e-10` (or a few ulps in single precision).
pub fn oracle_norm<T: Real>(o: &HeatOracle<T>, t: T) -> Result<T> {
    Ok(oracle_norm_sq(o, t)?.sqrt())
}

pub fn oracle_norm_sq<T: Real>(o: &HeatOracle<T>, t: T) -> Result<T> {
    if !(t >= T::zero()) {
        return Err(Error::Domain(format!("oracle time t = {t} is negative")));
    }
    let support = match o.r_cut {
        Some(rc) if o.taper => rc + rc,
        Some(rc) => rc,
        None => T::infinity(),
    };
    let upper = if t > T::zero() {
        support.min(gaussian_reach(t))
    } else {
        support
    };
    if !upper.is_finite() {
        return Ok(T::infinity());
    }
    let expo = o.gamma + o.gamma - T::one() + T::lit(2.0 * o.m as f64);
    let mut cuts = vec![T::zero(), upper];
    if t > T::zero() {
        // peak of r^expo e^{-2r²t}
        let peak = (expo / (T::lit(4.0) * t)).sqrt();
        for p in [peak / T::lit(4.0), peak, peak * T::lit(4.0)] {
            if p > T::zero() && p < upper {
                cuts.push(p);
            }
        }
    }
    if let Some(rc) = o.r_cut {
        if rc < upper {
            cuts.push(rc);
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let tol = T::lit(1e-11).max(T::epsilon() * T::lit(16.0));
    let (val, _) = integrate_adaptive(|r| o.integrand(r, t), &cuts, tol, 4000);
    Ok(val)
}
