//! Measurement helpers on top of solver output: the Fourier-splitting ball,
//! window selection, the cumulative stress tracker and CSV rendering.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::solver::{EnergyLedger, PairRun};
use crate::spectral::SpectralField;

/// Radius of the splitting ball `ρ(t) = sqrt((4+γ) / (c0 (1+t)))`.
pub fn splitting_radius<T: Real>(gamma: T, c0: T, t: T) -> T {
    ((T::lit(4.0) + gamma) / (c0 * (T::one() + t))).sqrt()
}

/// Energy of `w` split at `|k| ≤ ρ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRow<T> {
    pub t: T,
    pub radius: T,
    pub inside: T,
    pub outside: T,
}

impl<T: Real> SplitRow<T> {
    pub fn fraction(&self) -> T {
        let total = self.inside + self.outside;
        if total > T::zero() {
            self.inside / total
        } else {
            T::zero()
        }
    }
}

pub fn split_energy<T: Real>(w: &SpectralField<T>, gamma: T, c0: T, t: T) -> SplitRow<T> {
    let radius = splitting_radius(gamma, c0, t);
    let l = w.layout().clone();
    let inside = w.weighted_sum(|m| if l.k_abs(m) <= radius { T::one() } else { T::zero() });
    let total = w.norm_sq();
    SplitRow {
        t,
        radius,
        inside,
        outside: (total - inside).max(T::zero()),
    }
}

/// Fraction of `‖w‖₂²` carried by modes inside the splitting ball (0 for `w = 0`).
pub fn inside_fraction<T: Real>(w: &SpectralField<T>, gamma: T, c0: T, t: T) -> T {
    split_energy(w, gamma, c0, t).fraction()
}

/// One row per snapshot `(t, w)`.
pub fn splitting_diagnostic<'a, T: Real + 'a>(
    snapshots: impl IntoIterator<Item = (T, &'a SpectralField<T>)>,
    gamma: T,
    c0: T,
) -> Vec<SplitRow<T>> {
    snapshots
        .into_iter()
        .map(|(t, w)| split_energy(w, gamma, c0, t))
        .collect()
}

pub const SPLIT_CSV_HEADER: &str = "# erdecay-splitting v1\nt,radius,inside,outside,fraction\n";

pub fn splitting_csv<T: Real>(rows: &[SplitRow<T>]) -> String {
    let mut s = String::from(SPLIT_CSV_HEADER);
    for r in rows {
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e},{:e}",
            r.t.as_f64(),
            r.radius.as_f64(),
            r.inside.as_f64(),
            r.outside.as_f64(),
            r.fraction().as_f64()
        );
    }
    s
}

/// Quarter of the e-folding time of the slowest box mode, `(L/2π)²/4`, with
/// `L` the longest side.
pub fn box_time_limit<T: Real>(box_length: &[T]) -> T {
    let l = box_length.iter().fold(T::zero(), |a, &b| a.max(b));
    let r = l / (T::lit(2.0) * T::PI());
    r * r / T::lit(4.0)
}

/// Inside-fraction level that marks the onset of the measurement window.
pub const ONSET_FRACTION: f64 = 0.9;

/// First time at which the inside fraction exceeds [`ONSET_FRACTION`].
pub fn onset_time<T: Real>(times: &[T], fractions: &[T]) -> Option<T> {
    times
        .iter()
        .zip(fractions)
        .find(|(_, &f)| f > T::lit(ONSET_FRACTION))
        .map(|(&t, _)| t)
}

/// How the measurement window was chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindowSource {
    /// `[t_onset, T_box]` from the run itself.
    Default,
    /// Onset never reached; the window starts at the first sample.
    NoOnset,
    /// Supplied by configuration.
    Override,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window<T> {
    pub lo: T,
    pub hi: T,
    pub t_onset: Option<T>,
    pub t_box: T,
    pub source: WindowSource,
}

/// Default window `[t_onset, T_box]` of a paired run, clipped to the samples.
pub fn measurement_window<T: Real>(run: &PairRun<T>, box_length: &[T], over: Option<(T, T)>) -> Result<Window<T>> {
    let times: Vec<T> = run.pair.iter().map(|s| s.t).collect();
    let fracs: Vec<T> = run.pair.iter().map(|s| s.inside_fraction).collect();
    window_from_series(&times, &fracs, box_length, over)
}

/// [`measurement_window`] on bare `(t, inside_fraction)` columns.
pub fn window_from_series<T: Real>(
    times: &[T],
    fracs: &[T],
    box_length: &[T],
    over: Option<(T, T)>,
) -> Result<Window<T>> {
    let (Some(&first), Some(&last)) = (times.first(), times.last()) else {
        return Err(Error::InsufficientData("run recorded no samples".into()));
    };
    let t_box = box_time_limit(box_length);
    let t_onset = onset_time(times, fracs);
    let (lo, hi, source) = match over {
        Some((lo, hi)) => (lo, hi, WindowSource::Override),
        None => match t_onset {
            Some(t) => (t, t_box.min(last), WindowSource::Default),
            None => (first, t_box.min(last), WindowSource::NoOnset),
        },
    };
    if !(hi > lo) {
        return Err(Error::InsufficientData(format!("empty measurement window [{lo}, {hi}]")));
    }
    Ok(Window {
        lo,
        hi,
        t_onset,
        t_box,
        source,
    })
}

/// Which branch of the cumulative stress estimate applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StressCase {
    /// `p⁻ ≥ 3`: `∫∫|G|` bounded.
    One,
    /// `17/7 ≤ p⁻ < 3`: `∫∫|G| ≤ C₂ + C₃ (∫ ‖v‖₂^{2α/(2-β)})^{(2-β)/2}`.
    Two,
}

/// Frozen constants of the Case-2 functional bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Case2Constants<T> {
    pub c2: T,
    pub c3: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StressTracking<T> {
    pub case: StressCase,
    pub bound_ok: bool,
    /// Case 1: growth rate of the cumulative integral over the last quarter
    /// of the run divided by its mean rate. Case 2: largest ratio of the
    /// cumulative integral to the functional bound.
    pub statistic: T,
    pub detail: String,
}

/// Case-1 threshold on the late-time growth rate relative to the mean rate.
pub const FLAT_RATE_RATIO: f64 = 0.05;

fn case_two_functional<T: Real>(ledger: &EnergyLedger<T>, p_minus: T) -> Vec<(T, T)> {
    let alpha = (T::lit(7.0) - p_minus) / T::lit(4.0);
    let beta = (T::lit(5.0) * p_minus - T::lit(11.0)) / T::lit(4.0);
    let two = T::lit(2.0);
    let inner_pow = alpha / (two - beta);
    let outer_pow = (two - beta) / two;
    let mut acc = T::zero();
    let mut out = Vec::with_capacity(ledger.samples.len());
    let mut prev: Option<(T, T)> = None;
    for s in &ledger.samples {
        // ‖v‖₂^{2α/(2-β)} = (‖v‖₂²)^{α/(2-β)}
        let f = s.energy.powf(inner_pow);
        if let Some((t0, f0)) = prev {
            acc = acc + (s.t - t0) * (f0 + f) / two;
        }
        prev = Some((s.t, f));
        out.push((s.int_l1_g, acc.powf(outer_pow)));
    }
    out
}

/// Fits `C₃` on a calibration ledger (`C₂ = 0`, `C₃` twice the largest ratio).
pub fn calibrate_case2<T: Real>(ledger: &EnergyLedger<T>, p_minus: T) -> Case2Constants<T> {
    let worst = case_two_functional(ledger, p_minus)
        .into_iter()
        .filter(|(_, b)| *b > T::zero())
        .fold(T::zero(), |a, (g, b)| a.max(g / b));
    Case2Constants {
        c2: T::zero(),
        c3: T::lit(2.0) * worst,
    }
}

/// Checks the cumulative `∫∫|G(Dv)|` of one flow against the estimate for
/// its exponent range. Case 2 requires frozen constants.
pub fn l1_g_tracker<T: Real>(
    ledger: &EnergyLedger<T>,
    p_minus: T,
    constants: Option<Case2Constants<T>>,
) -> Result<StressTracking<T>> {
    if p_minus >= T::lit(3.0) {
        let s = &ledger.samples;
        let Some(last) = s.last() else {
            return Err(Error::InsufficientData("empty ledger".into()));
        };
        if last.int_l1_g == T::zero() {
            return Ok(StressTracking {
                case: StressCase::One,
                bound_ok: true,
                statistic: T::zero(),
                detail: "cumulative integral vanishes".into(),
            });
        }
        if s.len() < 4 || !(last.t > T::zero()) {
            return Err(Error::InsufficientData("need at least 4 samples".into()));
        }
        let q = s.len() * 3 / 4;
        let early = &s[q.min(s.len() - 2)];
        let late_rate = (last.int_l1_g - early.int_l1_g) / (last.t - early.t);
        let mean_rate = last.int_l1_g / last.t;
        let ratio = late_rate / mean_rate;
        return Ok(StressTracking {
            case: StressCase::One,
            bound_ok: ratio <= T::lit(FLAT_RATE_RATIO),
            statistic: ratio,
            detail: format!(
                "late growth rate {late_rate:.4e} over [{}, {}], mean rate {mean_rate:.4e}",
                early.t, last.t
            ),
        });
    }
    let Some(c) = constants else {
        return Err(Error::Invalid("case 2 needs calibrated constants".into()));
    };
    let mut worst = T::zero();
    let mut ok = true;
    for (g, b) in case_two_functional(ledger, p_minus) {
        let bound = c.c2 + c.c3 * b;
        if g > bound {
            ok = false;
        }
        if bound > T::zero() {
            worst = worst.max(g / bound);
        }
    }
    Ok(StressTracking {
        case: StressCase::Two,
        bound_ok: ok,
        statistic: worst,
        detail: format!("C2 = {:e}, C3 = {:e}, worst ratio {:.4}", c.c2.as_f64(), c.c3.as_f64(), worst),
    })
}

/// Schema line of the ledger CSV.
pub const LEDGER_CSV_HEADER: &str = "# erdecay-ledger v1\n";

pub const LEDGER_COLUMNS: &[&str] = &[
    "t", "step", "norm_u", "norm_util", "norm_w", "grad_w", "grad_u_sq", "grad_util_sq", "hess_u_sq",
    "hess_util_sq", "Ip_u", "Ip_util", "Jp_u", "Jp_util", "int_Ip_u", "int_Ip_util", "int_Jp_u",
    "int_Jp_util", "l1G_u", "l1G_util", "int_l1G_u", "int_l1G_util", "l1G_diff", "mono_probe",
    "dissip_u", "int_dissip_u", "inside_fraction", "norm_phi", "oracle_w",
];

/// Ledger of a paired run in the fixed CSV schema.
pub fn ledger_csv<T: Real>(run: &PairRun<T>) -> String {
    let mut s = String::from(LEDGER_CSV_HEADER);
    s.push_str(&LEDGER_COLUMNS.join(","));
    s.push('\n');
    for ((a, b), w) in run.ledger_u.samples.iter().zip(&run.ledger_util.samples).zip(&run.pair) {
        let vals = [
            a.energy.sqrt(),
            b.energy.sqrt(),
            w.norm_w,
            w.grad_w,
            a.grad_sq,
            b.grad_sq,
            a.hess_sq,
            b.hess_sq,
            a.ip,
            b.ip,
            a.jp,
            b.jp,
            a.int_ip,
            b.int_ip,
            a.int_jp,
            b.int_jp,
            a.l1_g,
            b.l1_g,
            a.int_l1_g,
            b.int_l1_g,
            w.l1_g_diff,
            w.mono_probe,
            a.dissipation,
            a.int_dissipation,
            w.inside_fraction,
            w.norm_phi,
            w.oracle_w,
        ];
        let _ = write!(s, "{:e},{}", w.t.as_f64(), w.step);
        for v in vals {
            let _ = write!(s, ",{:e}", v.as_f64());
        }
        s.push('\n');
    }
    s
}
