//! Executes the commands of an [`ExperimentConfig`] and writes CSV, SVG and
//! `report.json` into the output directory.

use std::f64::consts::TAU;
use std::path::PathBuf;
use std::time::Instant;

use num_complex::Complex64;
use qpspec_core::cocycle::{block_recursion_check, symplectic_defect, transfer_matrix, TransferCocycle};
use qpspec_core::determinants::{
    assemble, cramer_entry, detp_residual, dirichlet_resolvent, green_entry_dirichlet, Boundary,
};
use qpspec_core::ids::{
    fit_line, holder_fit, ids_estimate, nearest_eigenvalue, positivity_gate, window_count,
};
use qpspec_core::lyapunov::{acceleration_with_threshold, finite_scale_le, profile};
use qpspec_core::zeros::{annulus_zero_count, default_radius, linearized_roots, local_shift_search, AnnulusSpec};
use qpspec_core::{OperatorFamily, Phase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, EnergySpec, ExperimentConfig};
use crate::error::{CliError, Context};
use crate::plot::{emit_plot, Plot, PlotKind, Series};

pub const DEFAULT_OUT: &str = "qpspec-out";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Run only the identity suite, whatever `commands` says.
    pub verify_only: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CommandReport {
    pub command: String,
    pub seconds: f64,
    pub result: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub energy: f64,
    pub results: Vec<CommandReport>,
    pub artifacts: Vec<String>,
    pub warnings: Vec<String>,
    /// `None` when `verify` did not run.
    pub verified: Option<bool>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyRow {
    pub check: String,
    pub worst: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub pass: bool,
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

struct Runner {
    cfg: ExperimentConfig,
    fam: OperatorFamily,
    energy: f64,
    out: PathBuf,
    kappa: Option<i64>,
    artifacts: Vec<String>,
    warnings: Vec<String>,
    verified: Option<bool>,
}

pub fn resolve_energy(fam: &OperatorFamily, spec: &EnergySpec) -> Result<f64, CliError> {
    match *spec {
        EnergySpec::Value(e) => Ok(e),
        EnergySpec::NearestEigenvalue { volume, target, theta } => {
            nearest_eigenvalue(fam, theta, volume, target).context("energy")
        }
    }
}

/// Runs every requested command in order. Verification failures do not
/// abort the run; they are reported through [`RunReport::verified`].
pub fn run(mut cfg: ExperimentConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    let start = Instant::now();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &opts.out {
        cfg.out = Some(out.clone());
    }
    cfg.validate()?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&out).map_err(|e| CliError::output(&out, e))?;
    let fam = cfg.family.build()?;
    let energy = resolve_energy(&fam, &cfg.energy)?;
    let commands = if opts.verify_only { vec![Command::Verify] } else { cfg.commands.clone() };
    let mut runner = Runner {
        cfg,
        fam,
        energy,
        out,
        kappa: None,
        artifacts: Vec::new(),
        warnings: Vec::new(),
        verified: None,
    };
    let mut results = Vec::new();
    for cmd in commands {
        let t = Instant::now();
        let result = match cmd {
            Command::Lyapunov => runner.lyapunov()?,
            Command::Acceleration => runner.acceleration()?,
            Command::Zeros => runner.zeros()?,
            Command::LocalZeros => runner.local_zeros()?,
            Command::Ids => runner.ids()?,
            Command::Holder => runner.holder()?,
            Command::Verify => runner.verify()?,
        };
        results.push(CommandReport {
            command: cmd.name().to_string(),
            seconds: t.elapsed().as_secs_f64(),
            result,
        });
    }
    runner.artifacts.push("report.json".into());
    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: runner.cfg,
        energy,
        results,
        artifacts: runner.artifacts,
        warnings: runner.warnings,
        verified: runner.verified,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    let path = runner.out.join("report.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&path, text + "\n").map_err(|e| CliError::output(&path, e))?;
    Ok(report)
}

impl Runner {
    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt))
    }

    fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.out.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::output(&path, e))?;
        w.write_record(header).map_err(|e| CliError::output(&path, e))?;
        for r in rows {
            w.write_record(r).map_err(|e| CliError::output(&path, e))?;
        }
        w.flush().map_err(|e| CliError::output(&path, e))?;
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn plot(&mut self, name: &str, plot: &Plot) -> Result<(), CliError> {
        let outcome = emit_plot(plot, &self.out.join(name))?;
        self.warnings.extend(outcome.warnings.into_iter().map(|w| format!("{name}: {w}")));
        self.artifacts.push(name.to_string());
        Ok(())
    }

    fn measured_kappa(&mut self, e: f64) -> Result<i64, CliError> {
        if let Some(k) = self.kappa {
            return Ok(k);
        }
        let a = &self.cfg.acceleration;
        let tc = TransferCocycle::new(&self.fam, c(e, 0.0));
        let est = acceleration_with_threshold(&tc, a.eps0, a.n, a.grid, a.step, a.residual_threshold)
            .context("acceleration")?;
        let top = &est[self.fam.d() - 1];
        if top.degraded {
            self.warnings.push(format!(
                "acceleration at E = {e}: residual {:.3} above threshold, kappa {} is unreliable",
                top.residual, top.kappa_rounded
            ));
        }
        Ok(top.kappa_rounded)
    }

    fn lyapunov(&mut self) -> Result<Value, CliError> {
        let b = self.cfg.lyapunov.clone();
        let tc = TransferCocycle::new(&self.fam, c(self.energy, 0.0));
        let prof = profile(&tc, &b.eps, b.n, b.grid).context("lyapunov")?;
        let rows: Vec<Vec<String>> = prof
            .rows()
            .into_iter()
            .map(|(n, eps, j, l, s)| vec![n.to_string(), num(eps), j.to_string(), num(l), num(s)])
            .collect();
        self.write_csv("lyapunov.csv", &["n", "eps", "j", "L_j", "L_sum_j"], &rows)?;
        let d = self.fam.d();
        let series = (0..d)
            .map(|j| {
                Series::line(
                    format!("L^{}", j + 1),
                    prof.points.iter().map(|p| (p.eps, p.sums[j])).collect(),
                )
            })
            .collect();
        self.plot(
            "lyapunov.svg",
            &Plot {
                title: format!("Lyapunov sums, n = {}, E = {:.6}", b.n, self.energy),
                x_label: "eps".into(),
                y_label: "L^j(eps)".into(),
                kind: PlotKind::Line,
                series,
                annotation: None,
            },
        )?;
        Ok(serde_json::to_value(&prof).expect("profile serializes"))
    }

    fn acceleration(&mut self) -> Result<Value, CliError> {
        let a = self.cfg.acceleration.clone();
        let tc = TransferCocycle::new(&self.fam, c(self.energy, 0.0));
        let est = acceleration_with_threshold(&tc, a.eps0, a.n, a.grid, a.step, a.residual_threshold)
            .context("acceleration")?;
        let rows: Vec<Vec<String>> = est
            .iter()
            .map(|e| {
                vec![
                    e.j.to_string(),
                    num(e.kappa_hat),
                    e.kappa_rounded.to_string(),
                    num(e.residual),
                    e.degraded.to_string(),
                    num(e.slope_window.0),
                    num(e.slope_window.1),
                ]
            })
            .collect();
        self.write_csv(
            "acceleration.csv",
            &["j", "kappa_hat", "kappa_rounded", "residual", "degraded", "eps_lo", "eps_hi"],
            &rows,
        )?;
        for e in est.iter().filter(|e| e.degraded) {
            self.warnings.push(format!(
                "acceleration j = {}: residual {:.3} exceeds {}",
                e.j, e.residual, a.residual_threshold
            ));
        }
        self.kappa = Some(est[self.fam.d() - 1].kappa_rounded);
        Ok(serde_json::to_value(&est).expect("estimates serialize"))
    }

    fn zeros(&mut self) -> Result<Value, CliError> {
        let z = self.cfg.zeros.clone();
        let kappa_ref = z.kappa_ref.or(self.kappa.map(|k| k as f64));
        let fam = &self.fam;
        let e = c(self.energy, 0.0);
        let reports = z
            .n
            .par_iter()
            .map(|&n| annulus_zero_count(fam, e, n, AnnulusSpec { eps_half: z.eps_half }, z.boundary, kappa_ref))
            .collect::<qpspec_core::Result<Vec<_>>>()
            .context("zeros")?;
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        let rows: Vec<Vec<String>> = reports
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.count.to_string(),
                    num(r.normalized),
                    opt(r.kappa_ref),
                    opt(r.discrepancy),
                    num(r.radii.0),
                    num(r.radii.1),
                    r.contour_points_used.to_string(),
                    r.refinement_depth.to_string(),
                ]
            })
            .collect();
        self.write_csv(
            "zeros.csv",
            &["n", "count", "normalized", "kappa_ref", "discrepancy", "r_in", "r_out", "contour_points", "depth"],
            &rows,
        )?;
        for r in &reports {
            self.warnings.extend(r.warnings.iter().map(|w| format!("zeros n = {}: {w}", r.n)));
        }
        let mut series = vec![Series::line(
            "N_n / 2n",
            reports.iter().map(|r| (r.n as f64, r.normalized)).collect(),
        )];
        if let Some(k) = kappa_ref {
            series.push(Series::line("kappa", reports.iter().map(|r| (r.n as f64, k)).collect()));
        }
        self.plot(
            "zeros.svg",
            &Plot {
                title: format!("Zero counts in the annulus |eps| <= {}", z.eps_half),
                x_label: "n".into(),
                y_label: "count / 2n".into(),
                kind: PlotKind::Line,
                series,
                annotation: None,
            },
        )?;
        Ok(serde_json::to_value(&reports).expect("reports serialize"))
    }

    fn local_zeros(&mut self) -> Result<Value, CliError> {
        let b = self.cfg.local_zeros.clone();
        let r = b.radius.unwrap_or_else(|| default_radius(b.n, b.c0));
        let e = c(self.energy, 0.0);
        let mut rng = self.rng(4);
        let centers: Vec<Complex64> = (0..b.centers)
            .map(|_| Complex64::from_polar(1.0, TAU * rng.random_range(0.0..1.0)))
            .collect();
        let roots = linearized_roots(&self.fam, e, b.n, b.boundary).context("local-zeros oracle")?;
        let fam = &self.fam;
        let outcomes: Vec<_> = centers
            .par_iter()
            .map(|&z0| local_shift_search(fam, e, b.n, z0, r, b.eps_margin, b.kappa_cap, b.boundary))
            .collect();
        let mut rows = Vec::new();
        let mut found = Vec::new();
        let mut failures = Vec::new();
        for (z0, o) in centers.iter().zip(outcomes) {
            match o {
                Ok(s) => {
                    let rot = Complex64::from_polar(1.0, -TAU * s.shift as f64 * fam.omega());
                    let oracle = roots.iter().filter(|z| (*z * rot - z0).norm() < r).count();
                    rows.push(vec![
                        num(z0.re),
                        num(z0.im),
                        s.shift.to_string(),
                        s.count.to_string(),
                        oracle.to_string(),
                        s.ring_index.to_string(),
                        num(s.ring_radii.0),
                        num(s.ring_radii.1),
                        num(r),
                        s.shifts_tried.to_string(),
                        "ok".into(),
                    ]);
                    if oracle as i64 != s.count {
                        failures.push(format!("center {z0}: winding count {} but oracle {oracle}", s.count));
                    }
                    found.push(json!({"result": s, "oracle_count": oracle}));
                }
                Err(err) => {
                    let mut row = vec![num(z0.re), num(z0.im)];
                    row.extend(std::iter::repeat_n(String::new(), 6));
                    row.push(num(r));
                    row.push(String::new());
                    row.push(err.to_string());
                    rows.push(row);
                    failures.push(format!("center {z0}: {err}"));
                }
            }
        }
        self.write_csv(
            "local_zeros.csv",
            &[
                "center_re", "center_im", "shift", "count", "oracle_count", "ring_index", "ring_inner",
                "ring_outer", "radius", "shifts_tried", "status",
            ],
            &rows,
        )?;
        self.warnings.extend(failures.iter().map(|f| format!("local-zeros: {f}")));
        Ok(json!({"n": b.n, "radius": r, "searches": found, "failures": failures}))
    }

    fn ids(&mut self) -> Result<Value, CliError> {
        let b = self.cfg.ids.clone();
        let e0 = b.e0.unwrap_or(self.energy);
        let fam = &self.fam;
        let lo = nearest_eigenvalue(fam, b.theta, b.n, f64::MIN / 4.0).context("ids")?;
        let hi = nearest_eigenvalue(fam, b.theta, b.n, f64::MAX / 4.0).context("ids")?;
        let pad = 0.05 * (hi - lo).max(1e-3);
        let energies: Vec<f64> = (0..b.curve_points)
            .map(|i| lo - pad + (hi - lo + 2.0 * pad) * i as f64 / (b.curve_points - 1) as f64)
            .collect();
        let curve = energies
            .par_iter()
            .map(|&e| ids_estimate(fam, b.theta, e, b.n))
            .collect::<qpspec_core::Result<Vec<_>>>()
            .context("ids")?;
        let etas = b.eta.values("ids.eta")?;
        let windows = etas
            .par_iter()
            .map(|&h| window_count(fam, b.theta, e0, h, b.n))
            .collect::<qpspec_core::Result<Vec<_>>>()
            .context("ids")?;
        let ids_e0 = ids_estimate(fam, b.theta, e0, b.n).context("ids")?;
        let rows: Vec<Vec<String>> = windows
            .iter()
            .map(|w| vec![num(w.eta), num(w.count), num(w.resolvent_estimate)])
            .collect();
        self.write_csv("ids.csv", &["eta", "window_count", "resolvent_estimate"], &rows)?;
        let rows: Vec<Vec<String>> = energies.iter().zip(&curve).map(|(e, v)| vec![num(*e), num(*v)]).collect();
        self.write_csv("ids_curve.csv", &["energy", "ids"], &rows)?;
        self.plot(
            "ids_curve.svg",
            &Plot {
                title: format!("Finite-volume IDS, N = {}, theta = {}", b.n, b.theta),
                x_label: "E".into(),
                y_label: "N_N(E)".into(),
                kind: PlotKind::Line,
                series: vec![Series::line("N_N", energies.iter().copied().zip(curve.iter().copied()).collect())],
                annotation: None,
            },
        )?;
        let violations = windows.iter().filter(|w| w.count > w.resolvent_estimate).count();
        if violations > 0 {
            self.warnings.push(format!(
                "ids: {violations} window counts exceed their resolvent estimate"
            ));
        }
        Ok(json!({
            "n": b.n,
            "theta": b.theta,
            "energy": e0,
            "ids": ids_e0,
            "spectrum_range": [lo, hi],
            "windows": windows,
        }))
    }

    fn holder(&mut self) -> Result<Value, CliError> {
        let b = self.cfg.holder.clone();
        let e0 = b.e0.unwrap_or(self.energy);
        let kappa = match b.kappa {
            Some(k) => k,
            None => self.measured_kappa(e0)?,
        };
        let a = &self.cfg.acceleration;
        let lyap = match positivity_gate(&self.fam, e0, a.n, a.grid, b.positivity_gap) {
            Ok(l) => Some(l),
            Err(err) => {
                self.warnings.push(format!("holder: {err}; the regularity bound does not apply"));
                None
            }
        };
        let etas = b.eta.values("holder.eta")?;
        let thetas: Vec<f64> = (0..b.phases).map(|i| i as f64 / b.phases as f64).collect();
        let rep = holder_fit(&self.fam, e0, &etas, b.n, &thetas, kappa).context("holder")?;
        let rows: Vec<Vec<String>> = rep
            .eta_grid
            .iter()
            .zip(&rep.d_values)
            .zip(&rep.resolvent_values)
            .map(|((h, d), r)| vec![num(*h), num(2.0 * h), num(*d), num(*r)])
            .collect();
        self.write_csv("holder.csv", &["eta", "two_eta", "window_count", "resolvent_estimate"], &rows)?;
        let kept: Vec<(f64, f64)> = rep
            .eta_grid
            .iter()
            .zip(&rep.d_values)
            .filter(|(_, d)| **d > 0.0)
            .map(|(h, d)| (2.0 * h, *d))
            .collect();
        let mut series = vec![Series::scatter("window count", rep.eta_grid.iter().zip(&rep.d_values).map(|(h, d)| (2.0 * h, *d)).collect())];
        if kept.len() >= 2 {
            let lx: Vec<f64> = kept.iter().map(|p| p.0.ln()).collect();
            let ly: Vec<f64> = kept.iter().map(|p| p.1.ln()).collect();
            let (slope, intercept, _) = fit_line(&lx, &ly).context("holder")?;
            let fit = [kept[0].0, kept[kept.len() - 1].0]
                .iter()
                .map(|&x| (x, (intercept + slope * x.ln()).exp()))
                .collect();
            series.push(Series::line("fit", fit));
        }
        self.plot(
            "holder.svg",
            &Plot {
                title: format!("Window counts at E0 = {e0:.6}, N = {}", b.n),
                x_label: "2 eta".into(),
                y_label: "window count".into(),
                kind: PlotKind::LogLog,
                series,
                annotation: Some(format!("slope {} (bound {})", rep.beta_hat, rep.beta_bound)),
            },
        )?;
        Ok(json!({"report": rep, "lyapunov_at_e0": lyap}))
    }

    fn verify(&mut self) -> Result<Value, CliError> {
        let v = self.cfg.verify.clone();
        let fam = &self.fam;
        let d = fam.d();
        let mut rng = self.rng(7);
        let mut rows = Vec::new();
        let mut row = |check: &str, worst: f64, tolerance: f64, samples: usize| {
            rows.push(VerifyRow {
                check: check.into(),
                worst,
                tolerance,
                samples,
                pass: worst <= tolerance,
            })
        };

        let mut worst: f64 = 0.0;
        for _ in 0..v.samples {
            let e = c(rng.random_range(-5.0..5.0), 0.0);
            let m = transfer_matrix(fam, e, Phase::real(rng.random_range(0.0..1.0))).context("verify/symplecticity")?;
            worst = worst.max(symplectic_defect(&m).context("verify/symplecticity")?);
        }
        row("symplecticity", worst, v.tol_symplectic, v.samples);

        let eps_values = [0.0, 0.01f64.min(fam.delta())];
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for &n in &v.n {
            for _ in 0..v.samples {
                let theta = rng.random_range(0.0..1.0);
                let e = c(rng.random_range(-2.0..2.0), 0.0);
                for &eps in &eps_values {
                    worst = worst.max(detp_residual(fam, Phase::new(theta, eps), e, n).context("verify/detP")?);
                    count += 1;
                }
            }
        }
        row("detP", worst, v.tol_detp, count);

        if d == 1 {
            let mut worst: f64 = 0.0;
            for i in 0..v.samples {
                let n = v.n[i % v.n.len()].min(32) as i64;
                let p = Phase::real(rng.random_range(0.0..1.0));
                let e = c(rng.random_range(-3.0..3.0), rng.random_range(0.05..0.5));
                let inv = dirichlet_resolvent(fam, p, e, 0, n - 1).context("verify/poisson")?;
                let (k, j) = (rng.random_range(0..n), rng.random_range(0..n));
                let g = green_entry_dirichlet(fam, p, e, 0, n - 1, k, j).context("verify/poisson")?;
                let o = inv[(k as usize, j as usize)];
                worst = worst.max((g - o).norm() / o.norm());
            }
            row("poisson", worst, v.tol_green, v.samples);
        } else {
            self.warnings.push("verify: the Poisson formula is scalar; skipped for d > 1".into());
        }

        let mut worst: f64 = 0.0;
        for i in 0..v.samples {
            let n = (v.n[i % v.n.len()].min(32) / d).max(2);
            let p = Phase::real(rng.random_range(0.0..1.0));
            let e = c(rng.random_range(-3.0..3.0), rng.random_range(0.05..0.5));
            let a = assemble(fam, 0, n, Boundary::Periodic, p).context("verify/cramer")?.shifted(e);
            let inv = a.lu().try_inverse().ok_or(CliError::Numerical {
                context: "verify/cramer".into(),
                source: qpspec_core::QpError::SingularEnergy { energy: e },
            })?;
            let (x, y) = (rng.random_range(0..n * d), rng.random_range(0..n * d));
            let g = cramer_entry(fam, p, e, n, x, y).context("verify/cramer")?;
            let o = inv[(x, y)];
            worst = worst.max((g - o).norm() / o.norm());
        }
        row("cramer", worst, v.tol_green, v.samples);

        let n_max = *v.n.iter().max().expect("validated nonempty");
        let energies: Vec<f64> = (0..v.samples.min(4)).map(|_| rng.random_range(-3.0..3.0)).collect();
        let points = energies
            .iter()
            .map(|&e| finite_scale_le(&TransferCocycle::new(fam, c(e, 0.0)), 0.0, n_max, v.grid))
            .collect::<qpspec_core::Result<Vec<_>>>()
            .context("verify/duality")?;
        let dual = points.iter().map(|p| p.duality_defect()).fold(0.0, f64::max);
        let route = points.iter().filter_map(|p| p.route_gap()).fold(0.0, f64::max);
        row("duality", dual, v.tol_duality, points.len());
        row("wedge-route", route, v.tol_route, points.len());

        let mut worst: f64 = 0.0;
        let mut count = 0;
        for &n in &v.n {
            for _ in 0..v.samples {
                let p = Phase::new(rng.random_range(0.0..1.0), 0.0);
                let e = c(rng.random_range(-3.0..3.0), 0.0);
                worst = worst.max(block_recursion_check(fam, e, p, n).context("verify/recursion")?);
                count += 1;
            }
        }
        row("recursion", worst, v.tol_recursion, count);

        let csv_rows: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.check.clone(),
                    format!("{:e}", r.worst),
                    format!("{:e}", r.tolerance),
                    r.samples.to_string(),
                    r.pass.to_string(),
                ]
            })
            .collect();
        self.write_csv("verify.csv", &["check", "worst", "tolerance", "samples", "pass"], &csv_rows)?;
        let ok = rows.iter().all(|r| r.pass);
        self.verified = Some(self.verified.unwrap_or(true) && ok);
        Ok(json!({"passed": ok, "checks": rows}))
    }
}

