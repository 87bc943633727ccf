//! Variable exponent `p(x)`: presets, log-Hölder certificates, the exact
//! constants `α`, `β`, and the variable-exponent modular and Luxemburg norm.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::scalar::{Exact, Real};

/// Closed-form exponent profiles selectable by name.
#[derive(Clone, Debug, PartialEq)]
pub enum ExponentPreset<T> {
    Constant {
        p: T,
    },
    /// `base + amplitude · sin(2π x_axis / L_axis)`.
    SinePerturbed {
        base: T,
        amplitude: T,
        axis: usize,
    },
    /// Smooth radial plateau around the box center:
    /// `outer + (inner - outer) · (1 - tanh((r - radius)/width)) / 2`.
    Plateau {
        inner: T,
        outer: T,
        radius: T,
        width: T,
    },
}

impl<T: Real> ExponentPreset<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::SinePerturbed { .. } => "sine-perturbed",
            Self::Plateau { .. } => "plateau",
        }
    }

    /// Value the profile settles to away from the center.
    pub fn p_infinity(&self) -> T {
        match *self {
            Self::Constant { p } => p,
            Self::SinePerturbed { base, .. } => base,
            Self::Plateau { outer, .. } => outer,
        }
    }
}

/// Log-Hölder certificates of a sampled exponent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogHolderCertificate<T> {
    /// `max |p(x) - p(y)| · log(e + 1/dist(x, y))` over the scanned pairs.
    pub c1: T,
    /// `max |p(x) - p_∞| · log(e + |x - center|)` over all nodes.
    pub c2: T,
    /// `c1` recomputed on the every-other-node subgrid.
    pub c1_half_resolution: T,
    /// Set when `c1` grows by more than 5% under refinement, the signature of
    /// a discontinuous exponent.
    pub resolution_sensitive: bool,
    pub pairs_scanned: usize,
}

/// Gridded variable exponent with its extreme values.
#[derive(Clone, Debug)]
pub struct ExponentField<T> {
    grid: Grid<T>,
    values: Vec<T>,
    p_minus: T,
    p_plus: T,
    p_infinity: T,
    certificate: Option<LogHolderCertificate<T>>,
}

impl<T: Real> ExponentField<T> {
    pub fn from_values(grid: Grid<T>, values: Vec<T>, p_infinity: T) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} exponent values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for &v in &values {
            if !v.is_finite() {
                return Err(Error::Domain("non-finite exponent value".into()));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(lo > T::one()) {
            return Err(Error::Domain(format!("exponent must exceed 1, found p- = {lo}")));
        }
        if !(p_infinity > T::one()) || !p_infinity.is_finite() {
            return Err(Error::Domain(format!("p_inf = {p_infinity} must exceed 1")));
        }
        Ok(Self {
            grid,
            values,
            p_minus: lo,
            p_plus: hi,
            p_infinity,
            certificate: None,
        })
    }

    pub fn constant(grid: Grid<T>, p: T) -> Result<Self> {
        let values = vec![p; grid.len()];
        Self::from_values(grid, values, p)
    }

    pub fn from_preset(grid: Grid<T>, preset: &ExponentPreset<T>) -> Result<Self> {
        let two = T::lit(2.0);
        let values: Vec<T> = match *preset {
            ExponentPreset::Constant { p } => vec![p; grid.len()],
            ExponentPreset::SinePerturbed {
                base,
                amplitude,
                axis,
            } => {
                if axis >= grid.dim() {
                    return Err(Error::Invalid(format!("axis {axis} out of range")));
                }
                let k = grid.k_unit(axis);
                (0..grid.len())
                    .map(|i| base + amplitude * (k * grid.node_position(i)[axis]).sin())
                    .collect()
            }
            ExponentPreset::Plateau {
                inner,
                outer,
                radius,
                width,
            } => {
                if !(width > T::zero()) {
                    return Err(Error::Invalid("plateau width must be positive".into()));
                }
                (0..grid.len())
                    .map(|i| {
                        let r = grid.distance_from_center(i);
                        let s = (T::one() - ((r - radius) / width).tanh()) / two;
                        outer + (inner - outer) * s
                    })
                    .collect()
            }
        };
        Self::from_values(grid, values, preset.p_infinity())
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn p_minus(&self) -> T {
        self.p_minus
    }

    pub fn p_plus(&self) -> T {
        self.p_plus
    }

    pub fn p_infinity(&self) -> T {
        self.p_infinity
    }

    pub fn is_constant(&self) -> bool {
        self.p_minus == self.p_plus
    }

    pub fn certificate(&self) -> Option<&LogHolderCertificate<T>> {
        self.certificate.as_ref()
    }

    /// Computes and stores the log-Hölder certificates; see [`validate_log_holder`].
    pub fn certify(&mut self, sample_pairs: usize) -> LogHolderCertificate<T> {
        let cert = validate_log_holder(self, sample_pairs);
        self.certificate = Some(cert);
        cert
    }

    /// Every-other-node restriction onto the half-resolution grid.
    pub fn subsample_half(&self) -> Result<Self> {
        let dims = self.grid.dims();
        if dims.iter().any(|&n| n < 4 || n % 4 != 0) {
            return Err(Error::GridTooSmall(format!(
                "cannot halve grid {dims:?} to an even grid"
            )));
        }
        let half: Vec<usize> = dims.iter().map(|n| n / 2).collect();
        let grid = Grid::new(&half, self.grid.box_length())?;
        let values = (0..grid.len())
            .map(|i| {
                let idx = grid.unravel(i);
                let mut flat = 0;
                for a in 0..grid.dim() {
                    flat = flat * dims[a] + 2 * idx[a];
                }
                self.values[flat]
            })
            .collect();
        Self::from_values(grid, values, self.p_infinity)
    }
}

fn log_weight<T: Real>(dist: T) -> T {
    (T::E() + dist.recip()).ln()
}

/// Pairs whose nodes differ by one step along an axis; always scanned so that
/// jumps across a grid plane are never missed by sampling.
fn neighbour_pairs<T: Real>(grid: &Grid<T>) -> impl Iterator<Item = (usize, usize)> + '_ {
    let dims = grid.dims().to_vec();
    (0..grid.len()).flat_map(move |i| {
        let idx = grid.unravel(i);
        let dims = dims.clone();
        (0..dims.len()).map(move |a| {
            let mut j = 0;
            for b in 0..dims.len() {
                let v = if a == b { (idx[b] + 1) % dims[b] } else { idx[b] };
                j = j * dims[b] + v;
            }
            (i, j)
        })
    })
}

fn scan_c1<T: Real>(field: &ExponentField<T>, sample_pairs: usize) -> (T, usize) {
    let grid = field.grid();
    let v = field.values();
    let n = grid.len();
    let total = n * (n - 1) / 2;
    let pair_term = |i: usize, j: usize| -> T {
        let dp = (v[i] - v[j]).abs();
        if dp == T::zero() {
            return T::zero();
        }
        dp * log_weight(grid.periodic_distance(i, j))
    };
    let mut c1 = T::zero();
    let mut count = 0;
    if sample_pairs == 0 || sample_pairs >= total {
        for i in 0..n {
            for j in (i + 1)..n {
                c1 = c1.max(pair_term(i, j));
            }
        }
        return (c1, total);
    }
    for (i, j) in neighbour_pairs(grid) {
        if i != j {
            c1 = c1.max(pair_term(i, j));
            count += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6c6f_6768_6f6c_6472);
    for _ in 0..sample_pairs {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j {
            c1 = c1.max(pair_term(i, j));
            count += 1;
        }
    }
    (c1, count)
}

/// Log-Hölder certificates of `p`.
///
/// `sample_pairs == 0`, or a count at least the number of node pairs, scans all
/// pairs. Otherwise all axis-neighbour pairs plus `sample_pairs` pseudo-random
/// pairs (fixed seed) are scanned. Distances use the minimal-image metric;
/// `c2` measures `|x|` from the box center.
pub fn validate_log_holder<T: Real>(
    p: &ExponentField<T>,
    sample_pairs: usize,
) -> LogHolderCertificate<T> {
    let (c1, pairs_scanned) = scan_c1(p, sample_pairs);
    let grid = p.grid();
    let c2 = (0..grid.len()).fold(T::zero(), |m, i| {
        let dp = (p.values()[i] - p.p_infinity()).abs();
        m.max(dp * (T::E() + grid.distance_from_center(i)).ln())
    });
    let c1_half = match p.subsample_half() {
        Ok(h) => scan_c1(&h, sample_pairs / 4).0,
        Err(_) => c1,
    };
    let resolution_sensitive = c1 > T::zero() && (c1 - c1_half) / c1 > T::lit(0.05);
    LogHolderCertificate {
        c1,
        c2,
        c1_half_resolution: c1_half,
        resolution_sensitive,
        pairs_scanned,
    }
}

/// The constants `α = (7 - p⁻)/4`, `β = (5p⁻ - 11)/4` and the exponents built
/// from them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlphaBeta<Q> {
    pub p_minus: Q,
    pub alpha: Q,
    pub beta: Q,
    /// `2α/(2 - β)`, absent when `β ≥ 2`.
    pub two_alpha_over: Option<Q>,
    /// `4α/(2 - β)`, absent when `β ≥ 2`.
    pub four_alpha_over: Option<Q>,
}

impl<Q: Exact> AlphaBeta<Q> {
    /// `7/2 - (3/2)α - β`, which simplifies to `(29 - 7p⁻)/8`.
    pub fn case_two_exponent(&self) -> Q {
        Q::ratio(7, 2) - Q::ratio(3, 2) * self.alpha.clone() - self.beta.clone()
    }
}

pub fn min_p_minus<Q: Exact>() -> Q {
    Q::ratio(11, 5)
}

pub fn alpha_beta<Q: Exact>(p_minus: &Q) -> Result<AlphaBeta<Q>> {
    if *p_minus < min_p_minus::<Q>() {
        return Err(Error::Domain(format!("p- = {p_minus} is below 11/5")));
    }
    let alpha = (Q::int(7) - p_minus.clone()) / Q::int(4);
    let beta = (Q::int(5) * p_minus.clone() - Q::int(11)) / Q::int(4);
    let denom = Q::int(2) - beta.clone();
    let (two, four) = if denom > Q::int(0) {
        (
            Some(Q::int(2) * alpha.clone() / denom.clone()),
            Some(Q::int(4) * alpha.clone() / denom),
        )
    } else {
        (None, None)
    };
    Ok(AlphaBeta {
        p_minus: p_minus.clone(),
        alpha,
        beta,
        two_alpha_over: two,
        four_alpha_over: four,
    })
}

/// Comparison used by [`threshold_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    AtMost,
    Below,
}

/// Whether `7/2 - (3/2)α - β` is `≤ bound` (or `< bound`).
pub fn threshold_check<Q: Exact>(p_minus: &Q, bound: &Q, cmp: Bound) -> Result<bool> {
    let e = alpha_beta(p_minus)?.case_two_exponent();
    Ok(match cmp {
        Bound::AtMost => e <= *bound,
        Bound::Below => e < *bound,
    })
}

/// `∫ |f|^{p(x)} dx` by nodal quadrature.
pub fn modular<T: Real>(f: &ScalarField<T>, p: &ExponentField<T>) -> Result<T> {
    f.grid().check_same(p.grid())?;
    let s = f
        .values()
        .iter()
        .zip(p.values())
        .fold(T::zero(), |acc, (&v, &e)| acc + v.abs().powf(e));
    Ok(s * f.grid().cell_volume())
}

/// Luxemburg norm `inf{λ > 0 : ∫ |f/λ|^{p(x)} ≤ 1}` by bisection in `log λ`.
pub fn luxemburg_norm<T: Real>(f: &ScalarField<T>, p: &ExponentField<T>) -> Result<T> {
    let m = modular(f, p)?;
    if m == T::zero() {
        return Ok(T::zero());
    }
    if !m.is_finite() && f.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("field has non-finite values".into()));
    }
    let dv = f.grid().cell_volume();
    // log|f| and p per nonzero node; the modular at λ is Σ exp(p (log|f| - log λ)) dV
    let terms: Vec<(T, T)> = f
        .values()
        .iter()
        .zip(p.values())
        .filter(|(v, _)| **v != T::zero())
        .map(|(v, &e)| (v.abs().ln(), e))
        .collect();
    let modular_at = |log_lambda: T| -> T {
        terms
            .iter()
            .fold(T::zero(), |acc, &(lf, e)| acc + (e * (lf - log_lambda)).exp())
            * dv
    };
    let volume = f.grid().volume();
    let hi0 = m.max(T::one()).powf(p.p_minus().recip()) * (T::one() + volume);
    let mut hi = if m.is_finite() {
        hi0.ln()
    } else {
        // the modular overflowed; grow the bracket until feasible
        let mut h = T::zero();
        while modular_at(h) > T::one() {
            h = h + T::lit(16.0);
        }
        h
    };
    let mut lo = T::min_positive_value().ln();
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(4.0));
    while hi - lo > tol {
        let mid = (lo + hi) / T::lit(2.0);
        if modular_at(mid) <= T::one() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi.exp())
}
