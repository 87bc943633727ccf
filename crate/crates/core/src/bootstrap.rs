//! Exponent bookkeeping for the Fourier-splitting decay argument.
//!
//! Every bound has the form `(1+t)^a log^k(1+t)` up to constants, so the
//! estimates reduce to exact arithmetic on `(a, k)`. The upper-bound ladder
//! feeds each rate for `‖w(t)‖₂` back into the splitting estimate with
//! `f(t) = (1+t)^{4+γ}` until it reaches `γ/2`; the lower-bound chain does
//! the same for `ψ = w - e^{tΔ}w₀`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::exponent_field::{alpha_beta, threshold_check, AlphaBeta, Bound};
use crate::scalar::{Exact, Real};

/// `(1+t)^power · log^log_k(1+t)`, labelled with the estimate it came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PowerLogTerm<Q> {
    pub power: Q,
    pub log_k: u32,
    pub tag: String,
}

impl<Q: Exact> PowerLogTerm<Q> {
    pub fn new(power: Q, log_k: u32, tag: impl Into<String>) -> Self {
        Self {
            power,
            log_k,
            tag: tag.into(),
        }
    }

    pub fn constant(tag: impl Into<String>) -> Self {
        Self::new(Q::int(0), 0, tag)
    }

    /// Growth order: power first, then the log exponent.
    pub fn growth_cmp(&self, other: &Self) -> Ordering {
        self.power
            .cmp(&other.power)
            .then(self.log_k.cmp(&other.log_k))
    }

    pub fn dominates(&self, other: &Self) -> bool {
        self.growth_cmp(other) == Ordering::Greater
    }

    pub fn retag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    /// Product of two terms.
    pub fn times(&self, other: &Self) -> Self {
        Self::new(
            self.power.clone() + other.power.clone(),
            self.log_k + other.log_k,
            format!("{} · {}", self.tag, other.tag),
        )
    }

    /// Multiplies by `(1+t)^by`.
    pub fn shift(&self, by: Q, why: &str) -> Self {
        Self::new(self.power.clone() + by, self.log_k, format!("{} · {why}", self.tag))
    }

    /// Raises to a nonnegative rational power; the log exponent must stay integral.
    pub fn pow(&self, r: &Q) -> Result<Self> {
        if *r < Q::int(0) {
            return Err(Error::Domain(format!("negative power {r} of a bound")));
        }
        let k = Q::int(i64::from(self.log_k)) * r.clone();
        if !k.is_integer_valued() {
            return Err(Error::Domain(format!(
                "log^{} raised to {r} is not an integer log power",
                self.log_k
            )));
        }
        Ok(Self::new(
            self.power.clone() * r.clone(),
            k.ceil_i64() as u32,
            format!("({})^{{{r}}}", self.tag),
        ))
    }

    fn key(&self) -> (Q, u32) {
        (self.power.clone(), self.log_k)
    }
}

impl<Q: Exact> fmt::Display for PowerLogTerm<Q> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let zero = Q::int(0);
        match (self.power == zero, self.log_k) {
            (true, 0) => write!(f, "1"),
            (false, 0) => write!(f, "(1+t)^{{{}}}", self.power),
            (true, 1) => write!(f, "log(1+t)"),
            (true, k) => write!(f, "log^{k}(1+t)"),
            (false, 1) => write!(f, "(1+t)^{{{}}} log(1+t)", self.power),
            (false, k) => write!(f, "(1+t)^{{{}}} log^{k}(1+t)", self.power),
        }
    }
}

/// `∫₀ᵗ` of a term in its asymptotic form.
pub fn time_integrate<Q: Exact>(t: &PowerLogTerm<Q>) -> PowerLogTerm<Q> {
    let minus_one = Q::int(-1);
    let tag = format!("∫({})", t.tag);
    match t.power.cmp(&minus_one) {
        Ordering::Greater => PowerLogTerm::new(t.power.clone() + Q::int(1), t.log_k, tag),
        Ordering::Equal => PowerLogTerm::new(Q::int(0), t.log_k + 1, tag),
        Ordering::Less => PowerLogTerm::new(Q::int(0), 0, tag),
    }
}

/// `∫₀ᵗ (1+s)^a ds ≲ (1+t)^{a+1}` applied regardless of the sign of `a + 1`
/// (an upper bound whenever `a ≥ -1`, and a weaker one below).
pub fn formal_integrate<Q: Exact>(t: &PowerLogTerm<Q>) -> PowerLogTerm<Q> {
    PowerLogTerm::new(t.power.clone() + Q::int(1), t.log_k, format!("∫({})", t.tag))
}

/// Multiplies `weight` by `∫_{|ξ| ≤ ρ(s)} |ξ|^q dξ ∝ (1+s)^{-(q+d)/2}` for
/// the splitting ball `ρ(s) ∝ (1+s)^{-1/2}`.
pub fn ball_integrate<Q: Exact>(q: i64, weight: &PowerLogTerm<Q>, d: usize) -> Result<PowerLogTerm<Q>> {
    let qd = q + d as i64;
    if qd <= 0 {
        return Err(Error::Domain(format!("|ξ|^{q} is not integrable near 0 in {d} dimensions")));
    }
    Ok(PowerLogTerm::new(
        weight.power.clone() - Q::ratio(qd, 2),
        weight.log_k,
        format!("{} · ∫_L |ξ|^{q}", weight.tag),
    ))
}

/// Terms with distinct `(power, log_k)`; tags of merged terms are joined.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TermSum<Q: Exact> {
    terms: BTreeMap<(Q, u32), String>,
}

impl<Q: Exact> Default for TermSum<Q> {
    fn default() -> Self {
        Self {
            terms: BTreeMap::new(),
        }
    }
}

impl<Q: Exact> TermSum<Q> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = PowerLogTerm<Q>>) -> Self {
        let mut s = Self::new();
        for t in terms {
            s.insert(t);
        }
        s
    }

    pub fn insert(&mut self, t: PowerLogTerm<Q>) {
        self.terms
            .entry(t.key())
            .and_modify(|tag| {
                if !tag.split(" + ").any(|x| x == t.tag) {
                    tag.push_str(" + ");
                    tag.push_str(&t.tag);
                }
            })
            .or_insert(t.tag);
    }

    pub fn remove(&mut self, t: &PowerLogTerm<Q>) -> bool {
        self.terms.remove(&t.key()).is_some()
    }

    /// Terms in increasing growth order.
    pub fn terms(&self) -> Vec<PowerLogTerm<Q>> {
        self.terms
            .iter()
            .map(|((p, k), tag)| PowerLogTerm::new(p.clone(), *k, tag.clone()))
            .collect()
    }

    pub fn dominant(&self) -> Option<PowerLogTerm<Q>> {
        self.terms
            .iter()
            .next_back()
            .map(|((p, k), tag)| PowerLogTerm::new(p.clone(), *k, tag.clone()))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Default strictness margin for absorbing `log^k` into a power.
pub fn default_log_margin<Q: Exact>() -> Q {
    Q::ratio(1, 100)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LadderCase {
    /// `p⁻ ≥ 3`.
    One,
    /// `17/7 ≤ p⁻ < 3`.
    Two,
}

impl LadderCase {
    pub fn for_p_minus<Q: Exact>(p_minus: &Q) -> Self {
        if *p_minus >= Q::int(3) {
            LadderCase::One
        } else {
            LadderCase::Two
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LadderEntry<Q> {
    pub iteration: usize,
    pub label: String,
    pub rate: Q,
    pub dominant: PowerLogTerm<Q>,
}

/// Current decay rate `a` in `‖w(t)‖₂ ≲ (1+t)^{-a}` and how it was reached.
#[derive(Clone, Debug)]
pub struct LadderState<Q> {
    pub gamma: Q,
    pub p_minus: Q,
    pub rate: Q,
    pub log_margin: Q,
    pub history: Vec<LadderEntry<Q>>,
    pub transcript: Vec<String>,
}

fn check_gamma<Q: Exact>(gamma: &Q) -> Result<()> {
    if *gamma <= Q::int(2) || *gamma >= Q::ratio(5, 2) {
        return Err(Error::Domain(format!("precondition 2 < γ < 5/2 fails for γ = {gamma}")));
    }
    Ok(())
}

impl<Q: Exact> LadderState<Q> {
    /// Starts from the energy bound `‖w(t)‖₂ ≲ 1`.
    pub fn new(gamma: Q, p_minus: Q) -> Result<Self> {
        check_gamma(&gamma)?;
        let transcript = vec![
            format!("parameters: γ = {gamma}, p- = {p_minus}, f(t) = (1+t)^{{4+γ}} = (1+t)^{{{}}}", Q::int(4) + gamma.clone()),
            "start: ‖w(t)‖₂ ≲ 1 (rate 0)".to_string(),
        ];
        Ok(Self {
            gamma,
            p_minus,
            rate: Q::int(0),
            log_margin: default_log_margin(),
            history: Vec::new(),
            transcript,
        })
    }

    pub fn with_log_margin(mut self, margin: Q) -> Result<Self> {
        if margin <= Q::int(0) {
            return Err(Error::Invalid(format!("log margin {margin} must be positive")));
        }
        self.log_margin = margin;
        Ok(self)
    }

    pub fn terminal_rate(&self) -> Q {
        self.gamma.clone() / Q::int(2)
    }

    pub fn is_terminal(&self) -> bool {
        self.rate == self.terminal_rate()
    }

    /// Rates from the start value onward.
    pub fn rates(&self) -> Vec<Q> {
        std::iter::once(Q::int(0))
            .chain(self.history.iter().map(|e| e.rate.clone()))
            .collect()
    }

    pub fn labels(&self) -> Vec<String> {
        self.history.iter().map(|e| e.label.clone()).collect()
    }
}

fn step_label(case: LadderCase, iteration: usize, terminal: bool) -> String {
    match (case, terminal) {
        (LadderCase::One, true) => "iter_final".into(),
        // the third bound is applied twice before the final step
        (LadderCase::One, false) => format!("iter_{}", iteration.min(3)),
        (LadderCase::Two, true) => "new_iter_final".into(),
        (LadderCase::Two, false) => format!("new_iter_{iteration}"),
    }
}

/// Comparison asserted for `7/2 - (3/2)α - β` at a Case-2 iteration.
pub fn case_two_threshold<Q: Exact>(iteration: usize) -> (Q, Bound) {
    match iteration {
        1 => (Q::ratio(3, 2), Bound::AtMost),
        2 => (Q::int(3), Bound::Below),
        3 => (Q::ratio(5, 2), Bound::Below),
        4 => (Q::int(2), Bound::Below),
        _ => (Q::ratio(3, 2), Bound::AtMost),
    }
}

fn relation(b: Bound) -> &'static str {
    match b {
        Bound::AtMost => "≤",
        Bound::Below => "<",
    }
}

/// The stress contribution of Case 2: prior decay `‖v(τ)‖₂ ≲ (1+τ)^{-3/4}`
/// raised to `4α/(2-β)`, integrated, raised to `(2-β)/2`, multiplied by
/// `s^{(2-β)/2}` (Hölder) and by `f'(s)`, then taken through the splitting
/// ball with `|ξ|²` and integrated in time.
pub fn case_two_term<Q: Exact>(ab: &AlphaBeta<Q>, gamma: &Q) -> Result<(PowerLogTerm<Q>, Vec<String>)> {
    let four = ab
        .four_alpha_over
        .clone()
        .ok_or_else(|| Error::Domain(format!("2 - β ≤ 0 at p- = {}", ab.p_minus)))?;
    let half = (Q::int(2) - ab.beta.clone()) / Q::int(2);
    let mut lines = Vec::new();
    let prior = PowerLogTerm::new(Q::ratio(-3, 4), 0, "‖v‖₂");
    let powered = prior.pow(&four)?;
    lines.push(format!("  ‖v(τ)‖₂^{{4α/(2-β)}} ≲ {powered}"));
    let inner = formal_integrate(&powered);
    lines.push(format!("  ∫₀ˢ ‖v‖₂^{{4α/(2-β)}} dτ ≲ {inner}"));
    let outer = inner.pow(&half)?;
    lines.push(format!("  (∫₀ˢ ‖v‖₂^{{4α/(2-β)}} dτ)^{{(2-β)/2}} ≲ {outer}"));
    let holder = outer.shift(half, "s^{(2-β)/2}");
    let weighted = holder.shift(Q::int(3) + gamma.clone(), "f'(s)");
    let balled = ball_integrate(2, &weighted, 3)?;
    lines.push(format!("  f'(s) s^{{(2-β)/2}} (…)^{{(2-β)/2}} ∫_L |ξ|² ≲ {balled}"));
    let term = time_integrate(&balled).retag("stress (Case 2)");
    lines.push(format!("  integrated: {term}"));
    Ok((term, lines))
}

fn ladder_step<Q: Exact>(st: &LadderState<Q>, case: LadderCase) -> Result<LadderState<Q>> {
    if st.is_terminal() {
        return Err(Error::Stall(format!("already at the terminal rate {}", st.rate)));
    }
    let gamma = st.gamma.clone();
    let k = st.history.len() + 1;
    let mut lines = vec![format!("iteration {k}: substitute ‖w(s)‖₂ ≲ (1+s)^{{-{}}}", st.rate)];
    let f_prime = PowerLogTerm::new(Q::int(3) + gamma.clone(), 0, "f'(s)");
    let mut sum = TermSum::new();
    sum.insert(PowerLogTerm::constant("‖w₀‖₂²"));
    let heat = f_prime.times(&PowerLogTerm::new(-gamma.clone(), 0, "‖e^{sΔ}w₀‖₂²"));
    sum.insert(time_integrate(&heat).retag("heat data"));
    let ball = ball_integrate(2, &f_prime, 3)?;
    sum.insert(time_integrate(&ball).retag("|ξ|² on L(s)"));
    let w_int = time_integrate(&PowerLogTerm::new(-st.rate.clone(), 0, "‖w‖₂"));
    lines.push(format!("  ∫₀ˢ ‖w(τ)‖₂ dτ ≲ {w_int}"));
    let w_sq = w_int.pow(&Q::int(2))?;
    let w_term = time_integrate(&ball_integrate(2, &f_prime.times(&w_sq), 3)?).retag("|ξ|² (∫‖w‖)²");
    sum.insert(w_term);

    if case == LadderCase::Two {
        let ab = alpha_beta(&st.p_minus)?;
        let (term, chain) = case_two_term(&ab, &gamma)?;
        lines.extend(chain);
        let e = ab.case_two_exponent();
        let (bound, cmp) = case_two_threshold::<Q>(k);
        let label = step_label(case, k, false);
        let seven_p = Q::int(7) * st.p_minus.clone();
        let closed = (Q::int(29) - seven_p.clone()) / Q::int(8);
        let witness = format!("7/2 - (3/2)α - β = (29 - {seven_p})/8 = {closed}");
        let ok = threshold_check(&st.p_minus, &bound, cmp)?;
        if !ok {
            return Err(Error::Threshold {
                label,
                witness,
                relation: relation(cmp).into(),
                bound: bound.to_string(),
            });
        }
        debug_assert_eq!(closed, e);
        lines.push(format!("  threshold: {witness} {} {bound}: holds", relation(cmp)));
        sum.insert(term);
    }

    for t in sum.terms() {
        lines.push(format!("  term {t}  [{}]", t.tag));
    }
    let four = Q::int(4);
    let mut dom = sum.dominant().expect("nonempty sum");
    if dom.log_k > 0 {
        if dom.power >= four {
            return Err(Error::Stall(format!("cannot absorb the log factor of {dom}")));
        }
        let slack = (four.clone() - dom.power.clone()) / Q::int(2);
        let eps = if st.log_margin < slack { st.log_margin.clone() } else { slack };
        let absorbed = PowerLogTerm::new(dom.power.clone() + eps.clone(), 0, format!("{} (log absorbed)", dom.tag));
        lines.push(format!("  absorb: {dom} ≲ {absorbed} (margin {eps})"));
        sum.remove(&dom);
        sum.insert(absorbed);
        dom = sum.dominant().expect("nonempty sum");
    }
    lines.push(format!("  dominant: {dom}  [{}]", dom.tag));
    let new_rate = (four + gamma.clone() - dom.power.clone()) / Q::int(2);
    let terminal = st.terminal_rate();
    if new_rate > terminal {
        return Err(Error::Stall(format!("rate {new_rate} exceeds γ/2 = {terminal}")));
    }
    if new_rate <= st.rate {
        return Err(Error::Stall(format!(
            "rate {new_rate} does not improve on {} at iteration {k}",
            st.rate
        )));
    }
    let label = step_label(case, k, new_rate == terminal);
    lines.push(format!(
        "{label}: (1+t)^{{4+γ}} ‖w‖₂² ≲ {dom}, so ‖w(t)‖₂ ≲ (1+t)^{{-{new_rate}}}"
    ));
    let mut next = st.clone();
    next.rate = new_rate.clone();
    next.history.push(LadderEntry {
        iteration: k,
        label,
        rate: new_rate,
        dominant: dom,
    });
    next.transcript.extend(lines);
    Ok(next)
}

/// One improvement of the rate when `p⁻ ≥ 3`.
pub fn ladder_step_case1<Q: Exact>(st: &LadderState<Q>) -> Result<LadderState<Q>> {
    if st.p_minus < Q::int(3) {
        return Err(Error::Domain(format!("Case 1 needs p- ≥ 3, got {}", st.p_minus)));
    }
    ladder_step(st, LadderCase::One)
}

/// One improvement of the rate when `11/5 ≤ p⁻ < 3`; the threshold
/// comparisons decide whether `p⁻` is large enough.
pub fn ladder_step_case2<Q: Exact>(st: &LadderState<Q>) -> Result<LadderState<Q>> {
    if st.p_minus >= Q::int(3) || st.p_minus < Q::ratio(11, 5) {
        return Err(Error::Domain(format!("Case 2 needs 11/5 ≤ p- < 3, got {}", st.p_minus)));
    }
    ladder_step(st, LadderCase::Two)
}

/// Longest ladder attempted before declaring a stall.
pub const MAX_LADDER_STEPS: usize = 16;

/// Runs the ladder for the case selected by `p⁻` until `γ/2`.
pub fn run_ladder<Q: Exact>(gamma: Q, p_minus: Q, log_margin: Option<Q>) -> Result<LadderState<Q>> {
    let mut st = LadderState::new(gamma, p_minus)?;
    if let Some(m) = log_margin {
        st = st.with_log_margin(m)?;
    }
    let case = LadderCase::for_p_minus(&st.p_minus);
    st.transcript.push(match case {
        LadderCase::One => "case 1: p- ≥ 3".to_string(),
        LadderCase::Two => {
            let ab = alpha_beta(&st.p_minus)?;
            format!(
                "case 2: 11/5 ≤ p- < 3, α = (7 - p-)/4 = {}, β = (5p- - 11)/4 = {}",
                ab.alpha, ab.beta
            )
        }
    });
    while !st.is_terminal() {
        if st.history.len() >= MAX_LADDER_STEPS {
            return Err(Error::Stall(format!("no terminal rate after {MAX_LADDER_STEPS} steps")));
        }
        st = match case {
            LadderCase::One => ladder_step_case1(&st)?,
            LadderCase::Two => ladder_step_case2(&st)?,
        };
    }
    let line = format!("terminal rate γ/2 = {}", st.rate);
    st.transcript.push(line);
    Ok(st)
}

/// Result of [`lower_bound_chain`].
#[derive(Clone, Debug)]
pub struct LowerBound<Q> {
    /// `b` in `‖ψ(t)‖₂² ≲ (1+t)^{-b}`.
    pub psi_rate: Q,
    /// `b > γ`, so `‖w‖₂² ≥ ‖e^{tΔ}w₀‖₂² - ‖ψ‖₂² ≳ (1+t)^{-γ}` for large `t`.
    pub sandwich_ok: bool,
    pub terms: Vec<PowerLogTerm<Q>>,
    pub transcript: Vec<String>,
}

/// Splitting estimate for `ψ = w - e^{tΔ}w₀` with the terminal rate `γ/2`
/// for `‖w‖₂` injected.
pub fn lower_bound_chain<Q: Exact>(gamma: &Q, p_minus: &Q) -> Result<LowerBound<Q>> {
    check_gamma(gamma)?;
    if *p_minus < Q::ratio(17, 7) {
        return Err(Error::Domain(format!("precondition p- ≥ 17/7 fails for p- = {p_minus}")));
    }
    let g = gamma.clone();
    let f = PowerLogTerm::new(Q::int(4) + g.clone(), 0, "f(s)");
    let f_prime = PowerLogTerm::new(Q::int(3) + g.clone(), 0, "f'(s)");
    let heat = |m: i64| {
        PowerLogTerm::new(
            -(g.clone() + Q::int(m)) / Q::int(2),
            0,
            format!("‖∇^{m} e^{{sΔ}}w₀‖₂"),
        )
    };
    let mut lines = vec![format!("lower bound: γ = {g}, p- = {p_minus}, ‖w(s)‖₂ ≲ (1+s)^{{-{}}}", g.clone() / Q::int(2))];

    // ‖G(Dũ) - G(Du)‖₁ ‖φ‖₂^{1/6} ‖∇³φ‖₂^{5/6}, with ‖G(Dũ) - G(Du)‖₁ integrable in time
    let interp = heat(0).pow(&Q::ratio(1, 6))?.times(&heat(3).pow(&Q::ratio(5, 6))?);
    lines.push(format!("  ‖φ‖₂^{{1/6}} ‖∇³φ‖₂^{{5/6}} ≲ {interp}"));
    let stress = f.times(&interp).retag("stress difference");
    // ‖∇^{3/2}φ‖₂² with the δ > 0 gain dropped
    let conv = f.shift(-(Q::ratio(3, 2) + g.clone()), "‖∇^{3/2}φ‖₂²");
    let conv = time_integrate(&conv).retag("convection");
    let ball = time_integrate(&ball_integrate(2, &f_prime, 3)?).retag("|ξ|² on M(s)");
    let w_int = time_integrate(&PowerLogTerm::new(-g.clone() / Q::int(2), 0, "‖w‖₂"));
    lines.push(format!("  ∫₀ˢ ‖w(τ)‖₂ dτ ≲ {w_int}"));
    let w_term = time_integrate(&ball_integrate(2, &f_prime.times(&w_int.pow(&Q::int(2))?), 3)?)
        .retag("|ξ|² (∫‖w‖)²");
    let sum = TermSum::from_terms([stress, conv, ball, w_term]);
    for t in sum.terms() {
        lines.push(format!("  term {t}  [{}]", t.tag));
    }
    let dom = sum.dominant().expect("nonempty sum");
    lines.push(format!("  dominant: {dom}  [{}]", dom.tag));
    let psi_rate = Q::int(4) + g.clone() - dom.power.clone();
    let closed = (Q::int(5) + Q::int(2) * g.clone()) / Q::int(4);
    if psi_rate != closed || dom.log_k != 0 {
        return Err(Error::Stall(format!(
            "ψ rate {psi_rate} (log^{}) differs from (5+2γ)/4 = {closed}",
            dom.log_k
        )));
    }
    let sandwich_ok = psi_rate > g;
    lines.push(format!("  ‖ψ(t)‖₂² ≲ (1+t)^{{-{psi_rate}}}"));
    lines.push(format!(
        "  (5+2γ)/4 = {psi_rate} {} γ = {g}: lower bound ‖w(t)‖₂ ≳ (1+t)^{{-γ/2}} {}",
        if sandwich_ok { ">" } else { "≤" },
        if sandwich_ok { "holds" } else { "fails" }
    ));
    Ok(LowerBound {
        psi_rate,
        sandwich_ok,
        terms: sum.terms(),
        transcript: lines,
    })
}

/// Output of [`discrete_gronwall`].
#[derive(Clone, Debug, PartialEq)]
pub struct GronwallReport<T> {
    /// `f_n exp(∫₀^{t_n} h)` with the integral by the trapezoid rule.
    pub bound: Vec<T>,
    /// `max g_n / bound_n`.
    pub max_ratio: T,
}

/// Checks `g ≤ f + ∫ g h` on the sample grid (trapezoid rule, relative
/// tolerance `rel_tol`) and certifies `g ≤ f exp(∫ h)` pointwise.
pub fn discrete_gronwall<T: Real>(times: &[T], g: &[T], f: &[T], h: &[T], rel_tol: T) -> Result<GronwallReport<T>> {
    let n = times.len();
    if g.len() != n || f.len() != n || h.len() != n {
        return Err(Error::GridMismatch {
            left: format!("{n} times"),
            right: format!("{} / {} / {} samples", g.len(), f.len(), h.len()),
        });
    }
    if n == 0 {
        return Err(Error::InsufficientData("no samples".into()));
    }
    for i in 0..n {
        if !(g[i] >= T::zero() && f[i] > T::zero() && h[i] >= T::zero()) {
            return Err(Error::Domain(format!("samples at index {i} must satisfy g ≥ 0, f > 0, h ≥ 0")));
        }
        if i > 0 {
            if !(times[i] > times[i - 1]) {
                return Err(Error::Invalid(format!("times not increasing at index {i}")));
            }
            if f[i] < f[i - 1] {
                return Err(Error::Domain(format!("f decreases at index {i}")));
            }
        }
    }
    let half = T::lit(0.5);
    let one = T::one();
    let mut int_gh = T::zero();
    let mut int_h = T::zero();
    let mut bound = Vec::with_capacity(n);
    let mut max_ratio = T::zero();
    for i in 0..n {
        if i > 0 {
            let dt = times[i] - times[i - 1];
            int_gh = int_gh + dt * half * (g[i - 1] * h[i - 1] + g[i] * h[i]);
            int_h = int_h + dt * half * (h[i - 1] + h[i]);
        }
        let rhs = f[i] + int_gh;
        if g[i] > rhs * (one + rel_tol) {
            return Err(Error::Hypothesis {
                index: i,
                detail: format!("g = {:e} > f + ∫gh = {:e}", g[i].as_f64(), rhs.as_f64()),
            });
        }
        let b = f[i] * int_h.exp();
        if g[i] > b * (one + rel_tol) {
            return Err(Error::Hypothesis {
                index: i,
                detail: format!("conclusion g = {:e} > f exp(∫h) = {:e}", g[i].as_f64(), b.as_f64()),
            });
        }
        max_ratio = max_ratio.max(g[i] / b);
        bound.push(b);
    }
    Ok(GronwallReport { bound, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;

    type Q = BigRational;

    fn q(n: i64, d: i64) -> Q {
        Q::ratio(n, d)
    }

    #[test]
    fn integration_rules() {
        let g = q(9, 4);
        let t = PowerLogTerm::new(q(1, 2) + g.clone(), 0, "x");
        assert_eq!(time_integrate(&t).power, q(15, 4));
        let l = time_integrate(&PowerLogTerm::new(q(-1, 1), 0, "x"));
        assert_eq!((l.power, l.log_k), (q(0, 1), 1));
        let l2 = time_integrate(&PowerLogTerm::new(q(-1, 1), 2, "x"));
        assert_eq!((l2.power, l2.log_k), (q(0, 1), 3));
        let b = time_integrate(&PowerLogTerm::new(-g / q(2, 1), 0, "x"));
        assert_eq!((b.power, b.log_k), (q(0, 1), 0));
        assert_eq!(formal_integrate(&PowerLogTerm::new(q(-2, 1), 0, "x")).power, q(-1, 1));
    }

    #[test]
    fn ball_scaling() {
        let g = q(9, 4);
        let w = PowerLogTerm::new(q(3, 1) + g.clone(), 0, "f'");
        assert_eq!(ball_integrate(2, &w, 3).unwrap().power, q(1, 2) + g.clone());
        assert_eq!(ball_integrate(0, &PowerLogTerm::<Q>::constant("1"), 3).unwrap().power, q(-3, 2));
        let s2 = w.times(&PowerLogTerm::new(q(2, 1), 0, "s²"));
        assert_eq!(ball_integrate(2, &s2, 3).unwrap().power, q(5, 2) + g);
        assert!(ball_integrate(-3, &w, 3).is_err());
    }

    #[test]
    fn case_one_ladder() {
        for g in [q(21, 10), q(9, 4), q(49, 20)] {
            let st = run_ladder(g.clone(), q(3, 1), None).unwrap();
            let expected = vec![q(0, 1), q(1, 4), q(1, 2), q(3, 4), q(1, 1), g.clone() / q(2, 1)];
            assert_eq!(st.rates(), expected);
            assert_eq!(st.labels(), ["iter_1", "iter_2", "iter_3", "iter_3", "iter_final"]);
            assert!(st.transcript.last().unwrap().starts_with("terminal rate γ/2 = "));
        }
        let st = run_ladder(q(9, 4), q(3, 1), None).unwrap();
        assert_eq!(st.transcript.last().unwrap(), "terminal rate γ/2 = 9/8");
        // first step is dominated by (1+t)^{7/2+γ}
        assert_eq!(st.history[0].dominant.power, q(7, 2) + q(9, 4));
    }

    #[test]
    fn case_two_threshold_boundary() {
        let g = q(9, 4);
        let st = run_ladder(g.clone(), q(17, 7), None).unwrap();
        assert_eq!(st.rates(), vec![q(0, 1), q(1, 4), q(1, 2), q(3, 4), q(1, 1), q(9, 8)]);
        assert_eq!(
            st.labels(),
            ["new_iter_1", "new_iter_2", "new_iter_3", "new_iter_4", "new_iter_final"]
        );
        let ab = alpha_beta(&q(17, 7)).unwrap();
        assert_eq!(ab.case_two_exponent(), q(3, 2));

        let err = run_ladder(g.clone(), q(17, 7) - q(1, 1000), None).unwrap_err();
        match err {
            Error::Threshold { label, bound, .. } => {
                assert_eq!(label, "new_iter_1");
                assert_eq!(bound, "3/2");
            }
            e => panic!("unexpected {e}"),
        }
        let err = run_ladder(g, q(12, 5), None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(29 - 84/5)/8 = 61/40"), "{msg}");
        assert!(msg.contains("≤ 3/2"), "{msg}");
    }

    #[test]
    fn case_two_term_matches_closed_form() {
        for p in [q(17, 7), q(5, 2), q(29, 10), q(11, 5)] {
            let ab = alpha_beta(&p).unwrap();
            let (t, _) = case_two_term(&ab, &q(9, 4)).unwrap();
            assert_eq!(t.power, ab.case_two_exponent() + q(9, 4));
        }
    }

    #[test]
    fn terminal_rate_for_valid_case_two() {
        for p in [q(17, 7), q(5, 2), q(29, 10)] {
            for g in [q(9, 4), q(11, 5)] {
                let st = run_ladder(g.clone(), p.clone(), None).unwrap();
                assert_eq!(st.rate, g / q(2, 1));
            }
        }
    }

    #[test]
    fn lower_bound() {
        let lb = lower_bound_chain(&q(9, 4), &q(3, 1)).unwrap();
        assert_eq!(lb.psi_rate, q(19, 8));
        assert!(lb.sandwich_ok);
        let lb = lower_bound_chain(&q(21, 10), &q(17, 7)).unwrap();
        assert_eq!(lb.psi_rate, q(23, 10));
        assert!(matches!(lower_bound_chain(&q(5, 2), &q(3, 1)), Err(Error::Domain(_))));
        assert!(matches!(lower_bound_chain(&q(9, 4), &q(12, 5)), Err(Error::Domain(_))));
    }

    #[test]
    fn gronwall_trivial_and_exponential() {
        let t: Vec<f64> = (0..=1000).map(|i| i as f64 * 1e-3).collect();
        let f = vec![2.0; t.len()];
        let r = discrete_gronwall(&t, &f, &f, &vec![0.0; t.len()], 1e-12).unwrap();
        assert_eq!(r.bound, f);

        let hh = 1.7;
        let g: Vec<f64> = t.iter().map(|&s| (hh * s).exp()).collect();
        let one = vec![1.0; t.len()];
        let r = discrete_gronwall(&t, &g, &one, &vec![hh; t.len()], 1e-12).unwrap();
        for (a, b) in r.bound.iter().zip(&g) {
            assert!((a - b).abs() <= 1e-8 * b);
        }
    }

    #[test]
    fn gronwall_reports_first_violation() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let g = [1.0, 1.0, 5.0, 9.0];
        let f = [1.0; 4];
        let h = [0.1; 4];
        match discrete_gronwall(&t, &g, &f, &h, 1e-12) {
            Err(Error::Hypothesis { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn arb_term() -> impl Strategy<Value = PowerLogTerm<Q>> {
        (-40i64..40, 1i64..12, 0u32..4).prop_map(|(n, d, k)| PowerLogTerm::new(q(n, d), k, "t"))
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(ts in prop::collection::vec(arb_term(), 0..20)) {
            let s = TermSum::from_terms(ts.clone());
            let again = TermSum::from_terms(s.terms());
            prop_assert_eq!(&s, &again);
            let terms = s.terms();
            for w in terms.windows(2) {
                prop_assert!(w[1].dominates(&w[0]));
            }
            if let Some(d) = s.dominant() {
                for t in &ts {
                    prop_assert!(!t.dominates(&d));
                }
            }
        }

        #[test]
        fn domination_is_total(a in arb_term(), b in arb_term()) {
            let n = [a.dominates(&b), b.dominates(&a), a.growth_cmp(&b) == Ordering::Equal];
            prop_assert_eq!(n.iter().filter(|x| **x).count(), 1);
        }

        #[test]
        fn case_one_takes_five_steps(i in 1i64..50) {
            let g = q(2, 1) + q(i, 100);
            let st = run_ladder(g.clone(), q(3, 1), None).unwrap();
            prop_assert_eq!(st.history.len(), 5);
            prop_assert_eq!(st.rate.clone(), g / q(2, 1));
            let r = st.rates();
            for w in r.windows(2) {
                prop_assert!(w[1] > w[0]);
            }
        }

        #[test]
        fn below_boundary_fails_first_comparison(e in 1i64..10_000) {
            let p = q(17, 7) - q(e, 100_000);
            let err = run_ladder(q(9, 4), p, None).unwrap_err();
            let is_first = matches!(err, Error::Threshold { ref label, .. } if label == "new_iter_1");
            prop_assert!(is_first);
        }
    }
}
