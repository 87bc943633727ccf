//! Subcommand bodies. Each writes into a run directory and prints a short
//! summary on stdout.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use erdecay_core::analysis::{split_energy, splitting_csv, ledger_csv, box_time_limit};
use erdecay_core::bootstrap::{lower_bound_chain, run_ladder};
use erdecay_core::container::{write_snapshot, Snapshot};
use erdecay_core::decay::{fit_decay, sandwich_check, DecaySeries};
use erdecay_core::exponent_field::{ExponentField, ExponentPreset};
use erdecay_core::heat::{box_heat_norm, oracle_norm, HeatOracle};
use erdecay_core::initial_data::{l1_h1_report, make_initial_field};
use erdecay_core::solver::{run_pair_fields, Solver};
use erdecay_core::spectral::{korn_plancherel_check, shell_spectrum, SpectralField, SpectralLayout};
use erdecay_core::tensor_stress::{monotonicity_gap, SymTensor};
use erdecay_core::Rational;
use num_bigint::BigInt;
use num_traits::Zero;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::report::{build_report, Check, ExperimentReport, FitSummary};
use crate::table::Table;
use crate::{CliError, RunConfig};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn to_json<S: Serialize>(v: &S) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Parses `a/b`, an integer or a plain decimal such as `2.25` exactly.
pub fn parse_rational(s: &str) -> Result<Rational, CliError> {
    let bad = || CliError::Usage(format!("`{s}` is not a rational number"));
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits: BigInt = format!("{int}{frac}").parse().map_err(|_| bad())?;
    let scale = num_traits::pow(BigInt::from(10), frac.len());
    let q = Rational::new(digits, scale);
    Ok(if neg { -q } else { q })
}

/// Exact rational carried by the shortest decimal form of `x`.
fn rational_of(x: f64) -> Result<Rational, CliError> {
    let s = format!("{x}");
    if s.contains('e') || !x.is_finite() {
        return Err(CliError::Config(format!("{x} has no short decimal form")));
    }
    parse_rational(&s)
}

/// Ladder transcript followed, when requested, by the lower-bound chain.
pub fn proof_transcript(
    gamma: &Rational,
    p_minus: &Rational,
    margin: Option<Rational>,
    lower_bound: bool,
) -> Result<String, CliError> {
    let st = run_ladder(gamma.clone(), p_minus.clone(), margin)?;
    let mut lines = Vec::new();
    if lower_bound {
        lines.extend(lower_bound_chain(gamma, p_minus)?.transcript);
    }
    lines.extend(st.transcript);
    let mut s = lines.join("\n");
    s.push('\n');
    Ok(s)
}

fn generate(cfg: &RunConfig, layout: &Arc<SpectralLayout<f64>>) -> Result<(SpectralField<f64>, SpectralField<f64>), CliError> {
    let u0 = make_initial_field(&cfg.u0_spec(), layout)?;
    let w0 = make_initial_field(&cfg.w0_spec(), layout)?;
    Ok((u0, w0))
}

fn field_summary(u: &SpectralField<f64>) -> Result<serde_json::Value, CliError> {
    let n = l1_h1_report(u);
    let kp = korn_plancherel_check(u)?;
    Ok(json!({
        "l1": n.l1,
        "h1": n.h1,
        "energy": u.norm_sq(),
        "divergence_residual": u.divergence_residual(),
        "korn_ratio": kp.ratio,
        "parseval_gap": kp.parseval_gap,
    }))
}

pub fn gen_init(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    ensure_dir(out)?;
    let layout = SpectralLayout::new(cfg.grid()?);
    let (u0, w0) = generate(cfg, &layout)?;
    for (name, f) in [("u0", &u0), ("w0", &w0)] {
        let mut buf = Vec::new();
        write_snapshot(
            &mut buf,
            &Snapshot {
                name: name.into(),
                time: 0.0,
                field: f.clone(),
            },
        )?;
        write(&out.join(format!("{name}.erd")), buf)?;
    }
    let bins = cfg.n.max(4);
    let su = shell_spectrum(&u0, bins)?;
    let sw = shell_spectrum(&w0, bins)?;
    let spec_w = cfg.w0_spec();
    let mut csv = String::from("# erdecay-spectra v1\nr,count,shell_u0,shell_w0,target_w0\n");
    for b in 0..bins {
        let r = su.radii[b];
        let _ = writeln!(
            csv,
            "{:e},{},{:e},{:e},{:e}",
            r,
            su.counts[b],
            su.shell_values[b],
            sw.shell_values[b],
            spec_w.shell_target(r, cfg.dim)
        );
    }
    write(&out.join("spectra.csv"), csv)?;
    let info = json!({
        "format": "erdecay-init v1",
        "k_min": layout.grid().k_min(),
        "dealias_radius": layout.dealias_radius(),
        "u0": field_summary(&u0)?,
        "w0": field_summary(&w0)?,
    });
    write(&out.join("init.json"), to_json(&info))?;
    println!("wrote u0.erd, w0.erd, spectra.csv, init.json to {}", out.display());
    Ok(())
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

pub fn heat_baseline(cfg: &RunConfig, out: &Path, t_min: f64, t_max: f64, points: usize) -> Result<(), CliError> {
    if !(t_min > 0.0 && t_max > t_min && points >= 2) {
        return Err(CliError::Usage("need 0 < t-min < t-max and at least 2 points".into()));
    }
    ensure_dir(out)?;
    let layout = SpectralLayout::new(cfg.grid()?);
    let w0 = make_initial_field(&cfg.w0_spec(), &layout)?;
    let times = log_grid(t_min, t_max, points);
    let oracles = [HeatOracle::for_spec(&cfg.w0_spec(), 0), HeatOracle::for_spec(&cfg.w0_spec(), 1)];
    let mut cols: [Vec<f64>; 4] = Default::default();
    let mut csv = String::from("# erdecay-heat v1\nt,oracle_m0,oracle_m1,box_m0,box_m1\n");
    for &t in &times {
        let row = [
            oracle_norm(&oracles[0], t)?,
            oracle_norm(&oracles[1], t)?,
            box_heat_norm(&w0, t, 0),
            box_heat_norm(&w0, t, 1),
        ];
        let _ = write!(csv, "{t:e}");
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
            let _ = write!(csv, ",{v:e}");
        }
        csv.push('\n');
    }
    write(&out.join("heat.csv"), csv)?;

    let (lo, hi) = (t_min.max(1e2), t_max);
    let mut checks = Vec::new();
    let mut fits = Vec::new();
    for (m, name) in [(0usize, "oracle_m0"), (1, "oracle_m1")] {
        let target = -(m as f64 + cfg.gamma) / 2.0;
        let (ts, vs): (Vec<f64>, Vec<f64>) = times
            .iter()
            .zip(&cols[m])
            .filter(|(&t, _)| t >= lo && t <= hi)
            .map(|(&a, &b)| (a, b))
            .unzip();
        let verdict = DecaySeries::new(name, ts, vs).and_then(|s| sandwich_check(&s, target, 0.02));
        match verdict {
            Ok(v) => {
                fits.push(FitSummary::new(name, &v.fit));
                checks.push(Check {
                    name: format!("sandwich_{name}"),
                    pass: v.pass,
                    detail: v.diagnostics,
                });
            }
            Err(e) => checks.push(Check {
                name: format!("sandwich_{name}"),
                pass: false,
                detail: format!("fit over [{lo:e}, {hi:e}] failed: {e}"),
            }),
        }
    }
    let t_box = box_time_limit(&vec![cfg.box_side(); cfg.dim]);
    let gap = times
        .iter()
        .zip(cols[0].iter().zip(&cols[2]))
        .filter(|(&t, _)| t <= t_box)
        .map(|(_, (&o, &b))| ((b - o) / o).abs())
        .fold(0.0, f64::max);
    let report = json!({
        "format": "erdecay-heat-report v1",
        "gamma": cfg.gamma,
        "fit_window": [lo, hi],
        "fits": fits,
        "t_box": t_box,
        "box_vs_oracle_max_rel_gap_below_t_box": gap,
        "checks": checks,
    });
    write(&out.join("heat.json"), to_json(&report))?;
    for c in &checks {
        println!("  {} {}: {}", if c.pass { "ok  " } else { "fail" }, c.name, c.detail);
    }
    println!("box vs oracle below T_box = {t_box:e}: max relative gap {gap:.3e}");
    Ok(())
}

fn transcript_for(cfg: &RunConfig, p_minus: f64) -> String {
    let p = match cfg.preset() {
        Ok(ExponentPreset::Constant { p }) => rational_of(p),
        _ => rational_of(p_minus),
    };
    let out = rational_of(cfg.gamma).and_then(|g| proof_transcript(&g, &p?, None, true));
    match out {
        Ok(s) => s,
        Err(e) => format!("error[{}]: {e}\n", e.category()),
    }
}

/// Runs both flows and writes `config.toml`, `ledger.csv`, `splitting.csv`,
/// `transcript.txt`, `report.json` and optional `snapshots/w_<step>.erd`.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<ExperimentReport, CliError> {
    ensure_dir(out)?;
    let solver = Solver::new(cfg.grid()?, &cfg.preset()?, cfg.solver_options()?)?;
    let (u0, w0) = generate(cfg, solver.layout())?;
    let util0 = u0.add(&w0);
    let snap_dir = out.join("snapshots");
    if cfg.snapshots {
        ensure_dir(&snap_dir)?;
    }
    let mut rows = Vec::new();
    let run = run_pair_fields(&solver, u0, util0, &cfg.run_options(), |v| {
        let w = v.util.sub(v.u);
        rows.push(split_energy(&w, cfg.gamma, cfg.c0, v.t));
        if cfg.snapshots {
            let mut buf = Vec::new();
            write_snapshot(
                &mut buf,
                &Snapshot {
                    name: "w".into(),
                    time: v.t,
                    field: w,
                },
            )?;
            fs::write(snap_dir.join(format!("w_{:06}.erd", v.step)), buf)?;
        }
        Ok(())
    })?;
    let ledger = ledger_csv(&run);
    let transcript = transcript_for(cfg, solver.exponent().p_minus());
    write(&out.join("config.toml"), cfg.to_toml())?;
    write(&out.join("ledger.csv"), &ledger)?;
    write(&out.join("splitting.csv"), splitting_csv(&rows))?;
    write(&out.join("transcript.txt"), &transcript)?;
    let report = build_report(cfg, &ledger, "transcript.txt")?;
    write(&out.join("report.json"), report.to_json())?;
    print_checks(&report);
    Ok(report)
}

fn print_checks(r: &ExperimentReport) {
    println!(
        "window [{:e}, {:e}] ({}), T_box = {:e}, k_min = {:e}",
        r.window.lo, r.window.hi, r.window.source, r.window.t_box, r.domain.k_min
    );
    for c in &r.checks {
        println!("  {} {}: {}", if c.pass { "ok  " } else { "fail" }, c.name, c.detail);
    }
}

pub fn report(run: &Path, strict: bool) -> Result<(), CliError> {
    let cfg = RunConfig::load(&run.join("config.toml"))?;
    let path = run.join("ledger.csv");
    let ledger = fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let report = build_report(&cfg, &ledger, "transcript.txt")?;
    write(&run.join("report.json"), report.to_json())?;
    print_checks(&report);
    if strict && !report.all_pass() {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(CliError::CheckFailed(format!("failed checks: {}", failed.join(", "))));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn fit_decay_cmd(
    csv: &Path,
    time_column: &str,
    column: &str,
    lo: Option<f64>,
    hi: Option<f64>,
    target: Option<f64>,
    tol: f64,
) -> Result<(), CliError> {
    let table = Table::load(csv)?;
    let t = table.column(time_column)?;
    let v = table.column(column)?;
    let lo = lo.unwrap_or(f64::NEG_INFINITY);
    let hi = hi.unwrap_or(f64::INFINITY);
    let series = DecaySeries::new(column, t, v)?;
    let fit = fit_decay(&series, (lo, hi))?;
    let summary = FitSummary::new(column, &fit);
    let pass = target.map(|s| (fit.slope - s).abs() <= tol);
    print!(
        "{}",
        to_json(&json!({ "fit": summary, "target": target, "tol": tol, "pass": pass }))
    );
    match (pass, target) {
        (Some(false), Some(s)) => Err(CliError::CheckFailed(format!(
            "slope {:.6} misses target {s} by more than {tol}",
            fit.slope
        ))),
        _ => Ok(()),
    }
}

pub fn bootstrap_verify(
    gamma: &str,
    p_minus: &str,
    margin: Option<&str>,
    lower_bound: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let g = parse_rational(gamma)?;
    let p = parse_rational(p_minus)?;
    let m = margin.map(parse_rational).transpose()?;
    let text = proof_transcript(&g, &p, m, lower_bound)?;
    print!("{text}");
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write(&dir.join("transcript.txt"), &text)?;
    }
    Ok(())
}

fn random_tensor(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> SymTensor<f64> {
    let mut packed = [0.0; 6];
    for v in packed.iter_mut() {
        *v = scale * (2.0 * rng.random::<f64>() - 1.0);
    }
    SymTensor::from_packed(dim, packed)
}

pub fn check_props(cfg: &RunConfig, out: Option<&Path>, samples: usize, seed: u64) -> Result<(), CliError> {
    let grid = cfg.grid()?;
    let mut p = ExponentField::from_preset(grid.clone(), &cfg.preset()?)?;
    let cert = p.certify(4096);
    let (pm, pp) = (p.p_minus(), p.p_plus());
    let regime = if pm >= 3.0 {
        "p- >= 3"
    } else if pm >= 17.0 / 7.0 {
        "17/7 <= p- < 3"
    } else {
        "p- < 17/7: outside the rate ladder"
    };
    let mut checks = vec![Check {
        name: "exponent_admissible".into(),
        pass: pm >= 2.0,
        detail: format!("p- = {pm}, p+ = {pp}"),
    }];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_s = f64::INFINITY;
    let mut worst_g = f64::INFINITY;
    let mut failures = 0usize;
    for _ in 0..samples {
        let scale = 10f64.powf(4.0 * rng.random::<f64>() - 2.0);
        let b = random_tensor(&mut rng, cfg.dim, scale);
        let c = random_tensor(&mut rng, cfg.dim, scale);
        let pv = p.values()[rng.random_range(0..grid.len())];
        let (gap_s, gap_g) = monotonicity_gap(&b, &c, pv)?;
        let dsq = (b - c).frobenius_sq();
        let growth = (1.0 + b.frobenius_sq().max(c.frobenius_sq())).powf((pv - 2.0) / 2.0);
        let tol = 1e-12 * (1.0 + dsq * growth);
        worst_s = worst_s.min(gap_s - dsq);
        worst_g = worst_g.min(gap_g);
        if gap_s < dsq - tol || gap_g < -tol {
            failures += 1;
        }
    }
    checks.push(Check {
        name: "stress_monotone".into(),
        pass: failures == 0,
        detail: format!(
            "{samples} pairs: {failures} failures, min (gap_S - |B-C|^2) = {worst_s:.3e}, min gap_G = {worst_g:.3e}"
        ),
    });

    let layout = SpectralLayout::new(grid);
    let (u0, w0) = generate(cfg, &layout)?;
    let mut fields = serde_json::Map::new();
    for (name, f) in [("u0", &u0), ("w0", &w0)] {
        let kp = korn_plancherel_check(f)?;
        let herm = f.hermitian_defect() / f.max_abs().max(f64::MIN_POSITIVE);
        let div = f.divergence_residual();
        checks.push(Check {
            name: format!("{name}_divergence_free"),
            pass: div <= 1e-12,
            detail: format!("max |k.c|/(|k||c|) = {div:.3e}"),
        });
        checks.push(Check {
            name: format!("{name}_hermitian"),
            pass: herm <= 1e-12,
            detail: format!("relative defect {herm:.3e}"),
        });
        checks.push(Check {
            name: format!("{name}_parseval"),
            pass: kp.parseval_gap <= 1e-12,
            detail: format!("gap {:.3e}", kp.parseval_gap),
        });
        checks.push(Check {
            name: format!("{name}_korn"),
            pass: kp.ratio.is_none_or(|r| (r - 2.0).abs() <= 1e-8),
            detail: match kp.ratio {
                Some(r) => format!("|grad u|^2/|Du|^2 = {r:.12}"),
                None => "zero field, skipped".into(),
            },
        });
        fields.insert(name.into(), field_summary(f)?);
    }

    let report = json!({
        "format": "erdecay-props v1",
        "exponent": {
            "preset": cfg.exponent,
            "p_minus": pm,
            "p_plus": pp,
            "p_infinity": p.p_infinity(),
            "regime": regime,
            "log_holder_c1": cert.c1,
            "log_holder_c1_half_resolution": cert.c1_half_resolution,
            "log_holder_c2": cert.c2,
            "resolution_sensitive": cert.resolution_sensitive,
            "pairs_scanned": cert.pairs_scanned,
        },
        "fields": fields,
        "checks": checks,
    });
    if let Some(dir) = out {
        ensure_dir(dir)?;
        write(&dir.join("props.json"), to_json(&report))?;
    }
    println!("exponent: p- = {pm}, p+ = {pp} ({regime}), log-Hölder c1 = {:.4e}, c2 = {:.4e}", cert.c1, cert.c2);
    for c in &checks {
        println!("  {} {}: {}", if c.pass { "ok  " } else { "fail" }, c.name, c.detail);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!("failed checks: {}", failed.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("9/4").unwrap(), q(9, 4));
        assert_eq!(parse_rational("2.25").unwrap(), q(9, 4));
        assert_eq!(parse_rational("-0.5").unwrap(), q(-1, 2));
        assert_eq!(parse_rational("3").unwrap(), q(3, 1));
        assert_eq!(rational_of(2.1).unwrap(), q(21, 10));
        for bad in ["", "1/0", "x", "1.2.3", "."] {
            assert!(parse_rational(bad).is_err(), "{bad}");
        }
    }
}
