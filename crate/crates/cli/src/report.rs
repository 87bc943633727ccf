//! Experiment report recomputed from a run's ledger CSV.

use erdecay_core::analysis::{
    box_time_limit, calibrate_case2, l1_g_tracker, onset_time, window_from_series, StressCase, Window, WindowSource,
    LEDGER_CSV_HEADER,
};
use erdecay_core::decay::{fit_decay, sandwich_verdict, DecayFit, DecaySeries, MAX_BAND_DRIFT};
use erdecay_core::exponent_field::ExponentField;
use erdecay_core::solver::{EnergyLedger, FlowSample};
use serde::Serialize;

use crate::table::Table;
use crate::{CliError, RunConfig};

pub const REPORT_FORMAT: &str = "erdecay-report v1";
/// Relative closure of `‖u‖² + 2∫dissipation` against `‖u₀‖²`.
pub const ENERGY_CLOSURE_TOL: f64 = 1e-4;
/// Relative increase of `‖u‖²` tolerated between consecutive samples.
pub const ENERGY_STEP_TOL: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct DomainSummary {
    pub dim: usize,
    pub n: usize,
    pub box_length: f64,
    /// Smallest nonzero wavenumber `2π/L`: the decay-measurement cutoff scale.
    pub k_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct WindowSummary {
    pub lo: f64,
    pub hi: f64,
    pub t_onset: Option<f64>,
    pub t_box: f64,
    pub source: String,
    pub note: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct FitSummary {
    pub column: String,
    pub slope: f64,
    pub intercept: f64,
    /// 95% interval of the slope.
    pub slope_ci: [f64; 2],
    pub residual_band: f64,
    pub n_points: usize,
    pub t_lo: f64,
    pub t_hi: f64,
    pub decades: f64,
}

impl FitSummary {
    pub fn new(column: &str, f: &DecayFit<f64>) -> Self {
        let (a, b) = f.slope_interval();
        Self {
            column: column.to_string(),
            slope: f.slope,
            intercept: f.intercept,
            slope_ci: [a, b],
            residual_band: f.residual_band,
            n_points: f.n_points,
            t_lo: f.t_lo,
            t_hi: f.t_hi,
            decades: f.decades(),
        }
    }
}

/// Band of `norm_w / reference` over the window.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct BandSummary {
    pub reference: String,
    pub lo: f64,
    pub hi: f64,
    pub drift: f64,
    pub n_points: usize,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct EnergySummary {
    pub closure_defect_u: f64,
    pub max_sample_increase_u: f64,
    pub max_sample_increase_util: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct StressSummary {
    pub flow: String,
    pub case: String,
    pub statistic: f64,
    pub bound_ok: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ExperimentReport {
    pub format: String,
    pub config: RunConfig,
    pub domain: DomainSummary,
    pub window: WindowSummary,
    pub fits: Vec<FitSummary>,
    pub bands: Vec<BandSummary>,
    pub energy: EnergySummary,
    pub stress: Vec<StressSummary>,
    pub ledger: String,
    pub transcript: String,
    pub checks: Vec<Check>,
}

impl ExperimentReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn max_increase(norms: &[f64]) -> f64 {
    norms
        .windows(2)
        .map(|w| (w[1] * w[1] - w[0] * w[0]) / (w[0] * w[0]))
        .filter(|x| x.is_finite())
        .fold(f64::NEG_INFINITY, f64::max)
}

fn ledger_of(t: &Table, suffix: &str) -> Result<EnergyLedger<f64>, CliError> {
    let col = |base: &str| t.column(&format!("{base}_{suffix}"));
    let times = t.column("t")?;
    let steps = t.column("step")?;
    let norm = col("norm")?;
    let grad = t.column(&format!("grad_{suffix}_sq"))?;
    let hess = t.column(&format!("hess_{suffix}_sq"))?;
    let ip = col("Ip")?;
    let jp = col("Jp")?;
    let int_ip = col("int_Ip")?;
    let int_jp = col("int_Jp")?;
    let l1 = col("l1G")?;
    let int_l1 = col("int_l1G")?;
    let samples = (0..times.len())
        .map(|i| FlowSample {
            t: times[i],
            step: steps[i] as usize,
            energy: norm[i] * norm[i],
            grad_sq: grad[i],
            hess_sq: hess[i],
            ip: ip[i],
            jp: jp[i],
            l1_g: l1[i],
            int_ip: int_ip[i],
            int_jp: int_jp[i],
            int_l1_g: int_l1[i],
            ..FlowSample::default()
        })
        .collect();
    Ok(EnergyLedger {
        label: suffix.to_string(),
        samples,
        max_step_increase: max_increase(&norm),
        steps: steps.last().copied().unwrap_or(0.0) as usize,
    })
}

fn window_series(label: &str, t: &[f64], v: &[f64], lo: f64, hi: f64) -> Result<DecaySeries<f64>, CliError> {
    let (ts, vs): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(v)
        .filter(|(&t, _)| t >= lo && t <= hi)
        .map(|(&a, &b)| (a, b))
        .unzip();
    Ok(DecaySeries::new(label, ts, vs)?)
}

/// Builds the report from the config echo and the ledger text.
pub fn build_report(cfg: &RunConfig, ledger_text: &str, transcript: &str) -> Result<ExperimentReport, CliError> {
    if !ledger_text.starts_with(LEDGER_CSV_HEADER) {
        return Err(CliError::Config(format!(
            "ledger does not start with `{}`",
            LEDGER_CSV_HEADER.trim_end()
        )));
    }
    let table = Table::parse(ledger_text)?;
    let t = table.column("t")?;
    let norm_w = table.column("norm_w")?;
    let l = cfg.box_side();
    let box_length = vec![l; cfg.dim];
    let fracs = table.column("inside_fraction")?;
    let mut checks = Vec::new();
    let (window, source) = match window_from_series(&t, &fracs, &box_length, cfg.window_override()?) {
        Ok(w) => {
            let source = match w.source {
                WindowSource::Default => "onset-to-box",
                WindowSource::NoOnset => "no-onset",
                WindowSource::Override => "override",
            };
            (w, source)
        }
        Err(e) => {
            checks.push(Check {
                name: "window".into(),
                pass: false,
                detail: format!("{e}; falling back to the full run"),
            });
            let w = Window {
                lo: t.first().copied().unwrap_or(0.0),
                hi: t.last().copied().unwrap_or(0.0),
                t_onset: onset_time(&t, &fracs),
                t_box: box_time_limit(&box_length),
                source: WindowSource::NoOnset,
            };
            (w, "full-run")
        }
    };

    let domain = DomainSummary {
        dim: cfg.dim,
        n: cfg.n,
        box_length: l,
        k_min: 2.0 * std::f64::consts::PI / l,
        note: (cfg.dim == 2).then(|| "two-dimensional run: extension beyond the three-dimensional setting".into()),
    };
    let window_summary = WindowSummary {
        lo: window.lo,
        hi: window.hi,
        t_onset: window.t_onset,
        t_box: window.t_box,
        source: source.into(),
        note: format!(
            "box surrogate of the large-time regime: fits are restricted to t <= T_box = (L/2pi)^2/4 = {:e}, \
             beyond which the slowest box mode 2pi/L = {:e} dominates",
            window.t_box, domain.k_min
        ),
    };

    let target = -cfg.gamma / 2.0;
    let mut fits = Vec::new();
    let mut references = vec!["norm_phi"];
    if cfg.dim == 3 {
        references.push("oracle_w");
    }
    for col in std::iter::once("norm_w").chain(references.iter().copied()) {
        let v = table.column(col)?;
        let fit = window_series(col, &t, &v, window.lo, window.hi).and_then(|s| Ok(fit_decay(&s, (window.lo, window.hi))?));
        match (col, fit) {
            (_, Ok(f)) => {
                if col == "norm_w" {
                    checks.push(Check {
                        name: "slope_norm_w".into(),
                        pass: (f.slope - target).abs() <= cfg.slope_tol,
                        detail: format!("slope {:.4} vs -gamma/2 = {target:.4} (tol {})", f.slope, cfg.slope_tol),
                    });
                }
                fits.push(FitSummary::new(col, &f));
            }
            ("norm_w", Err(e)) => checks.push(Check {
                name: "slope_norm_w".into(),
                pass: false,
                detail: format!("fit failed: {e}"),
            }),
            (_, Err(_)) => {}
        }
    }

    let mut bands = Vec::new();
    for r in references {
        let w = window_series("norm_w", &t, &norm_w, window.lo, window.hi)?;
        let phi = window_series(r, &t, &table.column(r)?, window.lo, window.hi)?;
        let name = format!("band_{r}");
        match sandwich_verdict(&w, &phi) {
            Ok(v) => {
                checks.push(Check {
                    name,
                    pass: v.pass,
                    detail: format!(
                        "ratio band [{:.4}, {:.4}], drift {:.4} (limit {MAX_BAND_DRIFT})",
                        v.band.0, v.band.1, v.drift
                    ),
                });
                bands.push(BandSummary {
                    reference: r.into(),
                    lo: v.band.0,
                    hi: v.band.1,
                    drift: v.drift,
                    n_points: v.n_points,
                });
            }
            Err(e) => checks.push(Check {
                name,
                pass: false,
                detail: format!("band unavailable: {e}"),
            }),
        }
    }

    let lu = ledger_of(&table, "u")?;
    let lv = ledger_of(&table, "util")?;
    let norm_u = table.column("norm_u")?;
    let int_d = table.column("int_dissip_u")?;
    let closure = match (norm_u.first(), norm_u.last(), int_d.last()) {
        (Some(&a), Some(&b), Some(&d)) if a > 0.0 => (b * b + 2.0 * d - a * a).abs() / (a * a),
        _ => 0.0,
    };
    let energy = EnergySummary {
        closure_defect_u: closure,
        max_sample_increase_u: lu.max_step_increase,
        max_sample_increase_util: lv.max_step_increase,
    };
    checks.push(Check {
        name: "energy_closure_u".into(),
        pass: closure <= ENERGY_CLOSURE_TOL,
        detail: format!("|E + 2 int D - E0|/E0 = {closure:.3e} (limit {ENERGY_CLOSURE_TOL:e})"),
    });
    for (name, led) in [("energy_monotone_u", &lu), ("energy_monotone_util", &lv)] {
        let inc = led.max_step_increase;
        checks.push(Check {
            name: name.into(),
            pass: !(inc > ENERGY_STEP_TOL),
            detail: format!("largest relative increase between samples {inc:.3e} (limit {ENERGY_STEP_TOL:e})"),
        });
    }

    let probe = table.column("mono_probe")?;
    let diff = table.column("l1G_diff")?;
    let worst = probe
        .iter()
        .zip(&diff)
        .map(|(&p, &d)| p / d.max(1.0))
        .fold(f64::INFINITY, f64::min);
    checks.push(Check {
        name: "stress_monotone".into(),
        pass: probe.is_empty() || worst >= -1e-10,
        detail: format!("min of int dG:dD relative to max(1, int |dG|): {worst:.3e}"),
    });

    let mut stress = Vec::new();
    if !cfg.drop_g {
        let p_minus = ExponentField::from_preset(cfg.grid()?, &cfg.preset()?)?.p_minus();
        let constants = (p_minus < 3.0).then(|| calibrate_case2(&lu, p_minus));
        let flows: &[(&str, &EnergyLedger<f64>)] = if p_minus < 3.0 {
            &[("util", &lv)]
        } else {
            &[("u", &lu), ("util", &lv)]
        };
        for &(flow, led) in flows {
            match l1_g_tracker(led, p_minus, constants) {
                Ok(s) => {
                    let case = match s.case {
                        StressCase::One => "p- >= 3",
                        StressCase::Two => "17/7 <= p- < 3 (constants calibrated on u)",
                    };
                    checks.push(Check {
                        name: format!("l1_G_{flow}"),
                        pass: s.bound_ok,
                        detail: s.detail.clone(),
                    });
                    stress.push(StressSummary {
                        flow: flow.into(),
                        case: case.into(),
                        statistic: s.statistic,
                        bound_ok: s.bound_ok,
                        detail: s.detail,
                    });
                }
                Err(e) => checks.push(Check {
                    name: format!("l1_G_{flow}"),
                    pass: false,
                    detail: format!("tracker unavailable: {e}"),
                }),
            }
        }
    }

    Ok(ExperimentReport {
        format: REPORT_FORMAT.into(),
        config: cfg.clone(),
        domain,
        window: window_summary,
        fits,
        bands,
        energy,
        stress,
        ledger: "ledger.csv".into(),
        transcript: transcript.into(),
        checks,
    })
}
