//! Run configuration: a flat TOML table of `key = value` lines.

use std::f64::consts::PI;
use std::path::Path;

use erdecay_core::exponent_field::ExponentPreset;
use erdecay_core::grid::Grid;
use erdecay_core::heat::HeatOracle;
use erdecay_core::initial_data::SpectrumSpec;
use erdecay_core::solver::{ConvectionForm, RunOptions, SolverOptions, Stepper};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn d3() -> usize {
    3
}
fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn constant() -> String {
    "constant".into()
}
fn imex() -> String {
    "imex".into()
}
fn rotational() -> String {
    "rotational".into()
}
fn slope_tol() -> f64 {
    0.15
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "d3")]
    pub dim: usize,
    /// Nodes per axis.
    pub n: usize,
    /// Box side; alternatively `box_periods` with `L = 2π · box_periods`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_periods: Option<f64>,

    /// `constant`, `sine` or `plateau`.
    #[serde(default = "constant")]
    pub exponent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_axis: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_inner: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_outer: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_width: Option<f64>,

    /// Low-frequency exponent of the perturbation `w₀`.
    pub gamma: f64,
    /// Exponent for `u₀` (defaults to `gamma`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_u0: Option<f64>,
    #[serde(default = "one")]
    pub amplitude_u0: f64,
    pub r_cut_u0: f64,
    pub seed_u0: u64,
    #[serde(default = "one")]
    pub amplitude_w0: f64,
    pub r_cut_w0: f64,
    pub seed_w0: u64,

    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one_usize")]
    pub output_every: usize,
    /// `imex` or `explicit`.
    #[serde(default = "imex")]
    pub stepper: String,
    /// `rotational` or `divergence`.
    #[serde(default = "rotational")]
    pub convection: String,
    #[serde(default)]
    pub drop_convection: bool,
    #[serde(default)]
    pub drop_g: bool,
    #[serde(default = "yes")]
    pub pad_stress: bool,
    #[serde(default = "half")]
    pub cfl: f64,

    /// Splitting constant `C₀` of the ball `ρ(t) = sqrt((4+γ)/(C₀(1+t)))`.
    #[serde(default = "one")]
    pub c0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_hi: Option<f64>,
    #[serde(default = "slope_tol")]
    pub slope_tol: f64,
    #[serde(default = "yes")]
    pub record_jp: bool,
    /// Write `w` snapshots at every output time.
    #[serde(default)]
    pub snapshots: bool,
}

fn need(v: Option<f64>, key: &str, preset: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Config(format!("exponent `{preset}` needs `{key}`")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(2..=3).contains(&self.dim) {
            return Err(CliError::Config(format!("dim = {} must be 2 or 3", self.dim)));
        }
        if self.box_length.is_some() == self.box_periods.is_some() {
            return Err(CliError::Config("set exactly one of `box_length` and `box_periods`".into()));
        }
        if self.output_every == 0 {
            return Err(CliError::Config("output_every must be at least 1".into()));
        }
        self.stepper()?;
        self.convection_form()?;
        self.preset()?;
        Ok(())
    }

    pub fn box_side(&self) -> f64 {
        match (self.box_length, self.box_periods) {
            (Some(l), _) => l,
            (None, Some(k)) => 2.0 * PI * k,
            (None, None) => unreachable!("validated"),
        }
    }

    pub fn grid(&self) -> Result<Grid<f64>, CliError> {
        Ok(Grid::cube(self.dim, self.n, self.box_side())?)
    }

    pub fn preset(&self) -> Result<ExponentPreset<f64>, CliError> {
        let e = self.exponent.as_str();
        Ok(match e {
            "constant" => ExponentPreset::Constant { p: need(self.p, "p", e)? },
            "sine" => ExponentPreset::SinePerturbed {
                base: need(self.p, "p", e)?,
                amplitude: need(self.p_amplitude, "p_amplitude", e)?,
                axis: self.p_axis.unwrap_or(0),
            },
            "plateau" => ExponentPreset::Plateau {
                inner: need(self.p_inner, "p_inner", e)?,
                outer: need(self.p_outer, "p_outer", e)?,
                radius: need(self.p_radius, "p_radius", e)?,
                width: need(self.p_width, "p_width", e)?,
            },
            other => return Err(CliError::Config(format!("unknown exponent preset `{other}`"))),
        })
    }

    pub fn stepper(&self) -> Result<Stepper, CliError> {
        match self.stepper.as_str() {
            "imex" => Ok(Stepper::Imex),
            "explicit" => Ok(Stepper::Explicit),
            s => Err(CliError::Config(format!("unknown stepper `{s}`"))),
        }
    }

    pub fn convection_form(&self) -> Result<ConvectionForm, CliError> {
        match self.convection.as_str() {
            "rotational" => Ok(ConvectionForm::Rotational),
            "divergence" => Ok(ConvectionForm::Divergence),
            s => Err(CliError::Config(format!("unknown convection form `{s}`"))),
        }
    }

    pub fn u0_spec(&self) -> SpectrumSpec<f64> {
        SpectrumSpec {
            gamma: self.gamma_u0.unwrap_or(self.gamma),
            amplitude_c: self.amplitude_u0,
            r_cut: self.r_cut_u0,
            seed: self.seed_u0,
        }
    }

    pub fn w0_spec(&self) -> SpectrumSpec<f64> {
        SpectrumSpec {
            gamma: self.gamma,
            amplitude_c: self.amplitude_w0,
            r_cut: self.r_cut_w0,
            seed: self.seed_w0,
        }
    }

    pub fn solver_options(&self) -> Result<SolverOptions<f64>, CliError> {
        let mut o = SolverOptions::new(self.dt);
        o.stepper = self.stepper()?;
        o.convection = self.convection_form()?;
        o.drop_convection = self.drop_convection;
        o.drop_g = self.drop_g;
        o.pad_stress = self.pad_stress;
        o.cfl = self.cfl;
        Ok(o)
    }

    pub fn run_options(&self) -> RunOptions<f64> {
        RunOptions {
            t_end: self.t_end,
            output_every: self.output_every,
            gamma_w: self.gamma,
            c0: self.c0,
            oracle: (self.dim == 3).then(|| HeatOracle::for_spec(&self.w0_spec(), 0)),
            record_jp: self.record_jp,
        }
    }

    pub fn window_override(&self) -> Result<Option<(f64, f64)>, CliError> {
        match (self.window_lo, self.window_hi) {
            (None, None) => Ok(None),
            (Some(lo), Some(hi)) => Ok(Some((lo, hi))),
            _ => Err(CliError::Config("set both `window_lo` and `window_hi` or neither".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
n = 16
box_periods = 1.0
p = 3.0
gamma = 2.25
r_cut_u0 = 3.0
seed_u0 = 1
r_cut_w0 = 3.0
seed_w0 = 2
dt = 0.001
t_end = 0.01
"#;

    #[test]
    fn defaults_and_round_trip() {
        let c = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.dim, 3);
        assert_eq!(c.stepper().unwrap(), Stepper::Imex);
        assert!(c.pad_stress);
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::parse("n = 4"), Err(CliError::Config(_))));
        let extra = format!("{SAMPLE}\nbogus = 1\n");
        assert!(RunConfig::parse(&extra).is_err());
        let sine = SAMPLE.replace("p = 3.0", "exponent = \"sine\"\np = 3.0");
        assert!(RunConfig::parse(&sine).is_err());
        let both = format!("{SAMPLE}\nbox_length = 3.0\n");
        assert!(RunConfig::parse(&both).is_err());
    }
}
