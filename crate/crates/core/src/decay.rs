//! Decay time series and power-law fits in `(1 + t)`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A labelled series of norms sampled at increasing times.
#[derive(Clone, Debug, PartialEq)]
pub struct DecaySeries<T> {
    times: Vec<T>,
    values: Vec<T>,
    label: String,
}

impl<T: Real> DecaySeries<T> {
    pub fn new(label: impl Into<String>, times: Vec<T>, values: Vec<T>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} times for {} values",
                times.len(),
                values.len()
            )));
        }
        if times.iter().any(|t| !(*t >= T::zero()) || !t.is_finite()) {
            return Err(Error::Invalid("times must be finite and nonnegative".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("times must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::Invalid("values must be finite and nonnegative".into()));
        }
        Ok(Self {
            times,
            values,
            label: label.into(),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Samples with `lo ≤ t ≤ hi`.
    pub fn window(&self, lo: T, hi: T) -> Vec<(T, T)> {
        self.times
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .map(|(&t, &v)| (t, v))
            .collect()
    }

    pub fn map_values(&self, label: impl Into<String>, f: impl Fn(T, T) -> T) -> Result<Self> {
        let values = self
            .times
            .iter()
            .zip(&self.values)
            .map(|(&t, &v)| f(t, v))
            .collect();
        Self::new(label, self.times.clone(), values)
    }
}

/// Least-squares line through `(log(1+t), log v)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit<T> {
    pub slope: T,
    pub intercept: T,
    /// Standard error of the slope.
    pub slope_stderr: T,
    /// `max/min` over the window of `v / exp(intercept + slope·log(1+t))`.
    pub residual_band: T,
    pub n_points: usize,
    pub t_lo: T,
    pub t_hi: T,
}

impl<T: Real> DecayFit<T> {
    /// 95% normal confidence interval of the slope.
    pub fn slope_interval(&self) -> (T, T) {
        let h = T::lit(1.96) * self.slope_stderr;
        (self.slope - h, self.slope + h)
    }

    /// Decades of `1 + t` covered.
    pub fn decades(&self) -> T {
        ((T::one() + self.t_hi) / (T::one() + self.t_lo)).log10()
    }
}

pub const MIN_FIT_POINTS: usize = 10;

fn fit_points<T: Real>(pts: &[(T, T)], min_decades: T) -> Result<DecayFit<T>> {
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} samples in window, need {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    let t_lo = pts[0].0;
    let t_hi = pts[pts.len() - 1].0;
    let decades = ((T::one() + t_hi) / (T::one() + t_lo)).log10();
    if decades < min_decades * (T::one() - T::lit(1e-9)) {
        return Err(Error::InsufficientData(format!(
            "window spans {decades:.3} decades of 1+t, need {min_decades}"
        )));
    }
    if pts.iter().any(|(_, v)| !(*v > T::zero())) {
        return Err(Error::InsufficientData(
            "zero values cannot be fitted in log scale".into(),
        ));
    }
    let n = T::from_usize_lossy(pts.len());
    let xs: Vec<T> = pts.iter().map(|(t, _)| t.ln_1p()).collect();
    let ys: Vec<T> = pts.iter().map(|(_, v)| v.ln()).collect();
    let mx = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let my = ys.iter().fold(T::zero(), |a, &y| a + y) / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&x, &y) in xs.iter().zip(&ys) {
        sxx = sxx + (x - mx) * (x - mx);
        sxy = sxy + (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut rss = T::zero();
    let mut rmin = T::infinity();
    let mut rmax = T::neg_infinity();
    for (&x, &y) in xs.iter().zip(&ys) {
        let r = y - (intercept + slope * x);
        rss = rss + r * r;
        rmin = rmin.min(r);
        rmax = rmax.max(r);
    }
    let dof = T::from_usize_lossy(pts.len() - 2);
    let slope_stderr = (rss / dof / sxx).sqrt();
    Ok(DecayFit {
        slope,
        intercept,
        slope_stderr,
        residual_band: (rmax - rmin).exp(),
        n_points: pts.len(),
        t_lo,
        t_hi,
    })
}

/// Fits `v ≈ A (1+t)^{slope}` on `lo ≤ t ≤ hi`; needs 10 samples and one
/// decade of `1 + t`.
pub fn fit_decay<T: Real>(s: &DecaySeries<T>, window: (T, T)) -> Result<DecayFit<T>> {
    fit_points(&s.window(window.0, window.1), T::one())
}

/// Largest residual band accepted by [`sandwich_check`] as "bounded".
pub const MAX_RESIDUAL_BAND: f64 = 1.5;

/// Verdict of [`sandwich_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct SandwichCheck<T> {
    pub fit: DecayFit<T>,
    pub target_slope: T,
    pub tol: T,
    /// `min` and `max` of `v (1+t)^{-target}` over the series: the two-sided
    /// constants of the sandwich at the target rate.
    pub c_lo: T,
    pub c_hi: T,
    pub pass: bool,
    pub diagnostics: String,
}

/// Fits the whole series (at least 1.5 decades of `1 + t`) and passes iff the
/// slope is within `tol` of `target_slope` and the residual band is at most
/// [`MAX_RESIDUAL_BAND`].
pub fn sandwich_check<T: Real>(
    series: &DecaySeries<T>,
    target_slope: T,
    tol: T,
) -> Result<SandwichCheck<T>> {
    let pts: Vec<(T, T)> = series
        .times()
        .iter()
        .zip(series.values())
        .map(|(&t, &v)| (t, v))
        .collect();
    let fit = fit_points(&pts, T::lit(1.5))?;
    let mut c_lo = T::infinity();
    let mut c_hi = T::zero();
    for &(t, v) in &pts {
        let c = v * (T::one() + t).powf(-target_slope);
        c_lo = c_lo.min(c);
        c_hi = c_hi.max(c);
    }
    let slope_ok = (fit.slope - target_slope).abs() <= tol;
    let band_ok = fit.residual_band <= T::lit(MAX_RESIDUAL_BAND);
    let diagnostics = format!(
        "slope {:.6} vs target {:.6} (tol {}), residual band {:.4} (limit {}), constants [{:.4e}, {:.4e}]",
        fit.slope, target_slope, tol, fit.residual_band, MAX_RESIDUAL_BAND, c_lo, c_hi
    );
    Ok(SandwichCheck {
        fit,
        target_slope,
        tol,
        c_lo,
        c_hi,
        pass: slope_ok && band_ok,
        diagnostics,
    })
}

/// Two-sided comparison of `‖w‖` against a reference series on a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SandwichVerdict<T> {
    pub band: (T, T),
    /// `band.1 / band.0 - 1`.
    pub drift: T,
    pub pass: bool,
    pub n_points: usize,
}

/// Largest drift of the ratio band accepted by [`sandwich_verdict`].
pub const MAX_BAND_DRIFT: f64 = 0.2;

/// Ratio `w/φ` per common time; passes iff the band drift is at most 20%.
pub fn sandwich_verdict<T: Real>(
    w: &DecaySeries<T>,
    phi: &DecaySeries<T>,
) -> Result<SandwichVerdict<T>> {
    if w.times() != phi.times() {
        return Err(Error::GridMismatch {
            left: format!("{} samples", w.len()),
            right: format!("{} samples", phi.len()),
        });
    }
    if w.is_empty() {
        return Err(Error::InsufficientData("empty window".into()));
    }
    let mut lo = T::infinity();
    let mut hi = T::zero();
    for (&a, &b) in w.values().iter().zip(phi.values()) {
        if !(b > T::zero()) {
            return Err(Error::InsufficientData("reference series vanishes".into()));
        }
        let r = a / b;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let drift = if lo > T::zero() { hi / lo - T::one() } else { T::infinity() };
    Ok(SandwichVerdict {
        band: (lo, hi),
        drift,
        pass: drift <= T::lit(MAX_BAND_DRIFT),
        n_points: w.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn geometric_times(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .collect()
    }

    fn power_series(n: usize, expo: f64) -> DecaySeries<f64> {
        let t = geometric_times(1.0, 1e3, n);
        let v = t.iter().map(|t| (1.0 + t).powf(expo)).collect();
        DecaySeries::new("pow", t, v).unwrap()
    }

    #[test]
    fn exact_power_law() {
        let s = power_series(50, -1.125);
        let f = fit_decay(&s, (0.0, 1e9)).unwrap();
        assert!((f.slope + 1.125).abs() < 1e-10);
        assert!((f.residual_band - 1.0).abs() < 1e-10);
        assert_eq!(f.n_points, 50);
        let c = sandwich_check(&s, -1.125, 1e-6).unwrap();
        assert!(c.pass);
        assert!((c.c_lo - 1.0).abs() < 1e-9 && (c.c_hi - 1.0).abs() < 1e-9);
    }

    #[test]
    fn noisy_power_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = geometric_times(1.0, 1e3, 200);
        let v = t
            .iter()
            .map(|t| (1.0 + t).powf(-1.125) * (1.0 + rng.random_range(-0.05..0.05)))
            .collect();
        let s = DecaySeries::new("noisy", t, v).unwrap();
        let f = fit_decay(&s, (0.0, 1e4)).unwrap();
        assert!((f.slope + 1.125).abs() <= 0.05);
        assert!(f.residual_band <= 1.12);
        let (a, b) = f.slope_interval();
        assert!(a < -1.125 && -1.125 < b);
    }

    #[test]
    fn insufficient_windows() {
        let s = power_series(50, -1.0);
        assert!(matches!(fit_decay(&s, (1.0, 5.0)), Err(Error::InsufficientData(_))));
        let few = power_series(8, -1.0);
        assert!(matches!(fit_decay(&few, (0.0, 1e9)), Err(Error::InsufficientData(_))));
        let t = geometric_times(1.0, 20.0, 30);
        let v = vec![1.0; 30];
        let short = DecaySeries::new("short", t, v).unwrap();
        assert!(fit_decay(&short, (0.0, 100.0)).is_ok());
        assert!(sandwich_check(&short, 0.0, 0.1).is_err());
    }

    #[test]
    fn exponential_contamination_fails() {
        let t = geometric_times(0.1, 100.0, 60);
        let v = t.iter().map(|t| (1.0 + t).powf(-1.125) + 5.0 * (-t).exp()).collect();
        let s = DecaySeries::new("contaminated", t, v).unwrap();
        let c = sandwich_check(&s, -1.125, 0.02).unwrap();
        assert!(!c.pass);
        assert!(c.diagnostics.contains("residual band"));
    }

    #[test]
    fn series_validation() {
        assert!(DecaySeries::new("x", vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(DecaySeries::new("x", vec![1.0], vec![-1.0]).is_err());
        assert!(DecaySeries::new("x", vec![1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn verdict_examples() {
        let s = power_series(20, -1.0);
        let v = sandwich_verdict(&s, &s).unwrap();
        assert_eq!(v.band, (1.0, 1.0));
        assert!(v.pass);
        let drifting = s.map_values("drift", |t, v| v * (1.0 + 9.0 * t / 1e3)).unwrap();
        let v = sandwich_verdict(&drifting, &s).unwrap();
        assert!(!v.pass);
        assert!(v.drift > 8.0);
        let empty = DecaySeries::<f64>::new("e", vec![], vec![]).unwrap();
        assert!(sandwich_verdict(&empty, &empty).is_err());
    }

    proptest! {
        #[test]
        fn fit_scale_equivariant(c in 1e-3f64..1e3, expo in -3.0f64..0.0) {
            let s = power_series(30, expo);
            let noisy = s.map_values("n", |t, v| v * (1.0 + 0.1 * (t * 1.7).sin())).unwrap();
            let scaled = noisy.map_values("s", |_, v| c * v).unwrap();
            let a = fit_decay(&noisy, (0.0, 1e9)).unwrap();
            let b = fit_decay(&scaled, (0.0, 1e9)).unwrap();
            prop_assert!((a.slope - b.slope).abs() <= 1e-12);
            prop_assert!((b.intercept - a.intercept - c.ln()).abs() <= 1e-9);
        }

        #[test]
        fn verdict_scale_symmetric(c in 1e-3f64..1e3) {
            let s = power_series(20, -1.0);
            let w = s.map_values("w", |t, v| v * (1.0 + 0.1 * t.sqrt().sin())).unwrap();
            let a = sandwich_verdict(&w, &s).unwrap();
            let ws = w.map_values("ws", |_, v| c * v).unwrap();
            let ss = s.map_values("ss", |_, v| c * v).unwrap();
            let b = sandwich_verdict(&ws, &ss).unwrap();
            prop_assert!((a.drift - b.drift).abs() <= 1e-12);
            prop_assert_eq!(a.pass, b.pass);
        }
    }
}
