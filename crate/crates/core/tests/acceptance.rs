//! Desk-scale acceptance criteria. Prints one line per criterion and exits
//! nonzero if any of them fails.

use std::f64::consts::TAU;
use std::time::Instant;

use num_complex::Complex64;
use qpspec_core::cocycle::{symplectic_defect, transfer_matrix, TransferCocycle};
use qpspec_core::determinants::{
    cramer_entry, detp_residual, dirichlet_resolvent, green_entry_dirichlet, assemble, Boundary,
};
use qpspec_core::family::builtins;
use qpspec_core::frequency::torus_norm;
use qpspec_core::ids::{
    admissible_scales, diophantine_certificate, fit_power_law, holder_fit, ldt_measure,
    log_spaced_desc, nearest_eigenvalue, positivity_gate, window_count, LdtKind,
};
use qpspec_core::lyapunov::{acceleration, finite_scale_le, le_with_options, DEFAULT_STEP};
use qpspec_core::zeros::{
    annulus_zero_count, default_radius, factorized_lower_bound_check,
    linearized_roots, local_shift_search, AnnulusSpec, LocalSearchResult,
};
use qpspec_core::{Frequency, OperatorFamily, Phase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn amo3() -> OperatorFamily {
    builtins::almost_mathieu(3.0, Frequency::golden(), 0.1)
}

fn symplecticity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let d = 1 + i % 3;
        let fam = builtins::random(&mut rng, d, Frequency::golden(), 0.1);
        let e = c(rng.random_range(-4.0..4.0), 0.0);
        let m = transfer_matrix(&fam, e, Phase::real(rng.random_range(0.0..1.0))).unwrap();
        worst = worst.max(symplectic_defect(&m).unwrap());
    }
    outcome(worst <= 1e-10, format!("max defect {worst:.2e} (tol 1e-10)"))
}

fn detp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for d in 1..=3 {
        let fam = builtins::random(&mut rng, d, Frequency::golden(), 0.1);
        for n in [4usize, 16, 64] {
            for _ in 0..100 {
                let theta = rng.random_range(0.0..1.0);
                let e = c(rng.random_range(-2.0..2.0), 0.0);
                for eps in [0.0, 0.01] {
                    let r = detp_residual(&fam, Phase::new(theta, eps), e, n).unwrap();
                    worst = worst.max(r);
                }
            }
        }
    }
    outcome(worst <= 1e-7, format!("max residual {worst:.2e} (tol 1e-7)"))
}

fn green_routes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst_poisson: f64 = 0.0;
    let mut worst_cramer: f64 = 0.0;
    for i in 0..200 {
        let theta = rng.random_range(0.0..1.0);
        let p = Phase::real(theta);
        if i % 2 == 0 {
            let fam = builtins::random(&mut rng, 1, Frequency::golden(), 0.1);
            let n = rng.random_range(2..=32i64);
            let e = c(rng.random_range(-3.0..3.0), rng.random_range(0.05..0.5));
            let inv = dirichlet_resolvent(&fam, p, e, 0, n - 1).unwrap();
            let k = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            let g = green_entry_dirichlet(&fam, p, e, 0, n - 1, k, j).unwrap();
            let o = inv[(k as usize, j as usize)];
            worst_poisson = worst_poisson.max((g - o).norm() / o.norm());
        } else {
            let d = rng.random_range(1..=3usize);
            let fam = builtins::random(&mut rng, d, Frequency::golden(), 0.1);
            let n = rng.random_range(2..=32 / d);
            let e = c(rng.random_range(-3.0..3.0), rng.random_range(0.05..0.5));
            let a = assemble(&fam, 0, n, Boundary::Periodic, p).unwrap().shifted(e);
            let inv = a.lu().try_inverse().unwrap();
            let x = rng.random_range(0..n * d);
            let y = rng.random_range(0..n * d);
            let g = cramer_entry(&fam, p, e, n, x, y).unwrap();
            let o = inv[(x, y)];
            worst_cramer = worst_cramer.max((g - o).norm() / o.norm());
        }
    }
    outcome(
        worst_poisson <= 1e-8 && worst_cramer <= 1e-8,
        format!("max relative error Poisson {worst_poisson:.2e}, Cramer {worst_cramer:.2e} (tol 1e-8)"),
    )
}

fn duality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst_dual: f64 = 0.0;
    let mut worst_route: f64 = 0.0;
    for d in 1..=3 {
        let fam = builtins::random(&mut rng, d, Frequency::golden(), 0.1);
        let e = c(rng.random_range(-2.0..2.0), 0.0);
        let pt = finite_scale_le(&TransferCocycle::new(&fam, e), 0.0, 256, 500).unwrap();
        worst_dual = worst_dual.max(pt.duality_defect());
        worst_route = worst_route.max(pt.route_gap().unwrap());
    }
    outcome(
        worst_dual <= 1e-8 && worst_route <= 1e-9,
        format!("max |L_j + L_(2d+1-j)| {worst_dual:.2e} (tol 1e-8), wedge vs singular route {worst_route:.2e} (tol 1e-9)"),
    )
}

fn quantization_pair(fam: &OperatorFamily, expected: i64) -> (bool, String) {
    let e0 = nearest_eigenvalue(fam, 0.0, 128, 0.0).unwrap();
    let tc = TransferCocycle::new(fam, c(e0, 0.0));
    let acc = &acceleration(&tc, 0.01, 1000, 500, DEFAULT_STEP).unwrap()[0];
    let rep = annulus_zero_count(fam, c(e0, 0.0), 128, AnnulusSpec { eps_half: 0.05 }, Boundary::Dirichlet, Some(expected as f64)).unwrap();
    let gap = (rep.normalized - expected as f64).abs();
    let ok = acc.kappa_rounded == expected && acc.residual < 0.1 && gap <= 0.15;
    (
        ok,
        format!(
            "kappa_hat {:.4} -> {} (residual {:.3}), N/(2n) = {}/{} = {:.4}",
            acc.kappa_hat, acc.kappa_rounded, acc.residual, rep.count, 2 * rep.n, rep.normalized
        ),
    )
}

fn acceleration_zero_counts() -> Outcome {
    let (a, da) = quantization_pair(&amo3(), 1);
    let deg2 = builtins::cosine(100.0, 2, Frequency::golden(), 0.1);
    let (b, db) = quantization_pair(&deg2, 2);
    outcome(a && b, format!("AMO lambda=3: {da}; degree 2 lambda=100: {db}"))
}

fn searches() -> (Vec<LocalSearchResult>, Vec<String>, f64) {
    let amo = amo3();
    let n = 64;
    let e0 = nearest_eigenvalue(&amo, 0.0, n, 0.0).unwrap();
    let e = c(e0, 0.0);
    let kappa = acceleration(&TransferCocycle::new(&amo, e), 0.01, 1000, 500, DEFAULT_STEP).unwrap()[0].kappa_rounded;
    let cap = 2 * kappa.max(0) as usize;
    let r = default_radius(n, 1.5);
    let roots = linearized_roots(&amo, e, n, Boundary::Dirichlet).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let mut found = Vec::new();
    let mut problems = Vec::new();
    for _ in 0..20 {
        let z0 = Complex64::from_polar(1.0, TAU * rng.random_range(0.0..1.0));
        match local_shift_search(&amo, e, n, z0, r, 0.1, cap, Boundary::Dirichlet) {
            Ok(s) => {
                // zeros of z -> D_n(e^{2 pi i k omega} z) are the oracle roots rotated back
                let rot = Complex64::from_polar(1.0, -TAU * s.shift as f64 * amo.omega());
                let shifted: Vec<Complex64> = roots.iter().map(|z| z * rot).collect();
                let inside = shifted.iter().filter(|z| (*z - z0).norm() < r).count() as i64;
                let (a, b) = s.ring_radii;
                let in_ring = shifted
                    .iter()
                    .filter(|z| (a..=b).contains(&(*z - z0).norm()))
                    .count();
                if s.count > cap as i64 || inside != s.count || in_ring != 0 {
                    problems.push(format!("center {z0}: count {} oracle {inside} ring {in_ring}", s.count));
                }
                found.push(s);
            }
            Err(err) => problems.push(format!("center {z0}: {err}")),
        }
    }
    (found, problems, e0)
}

fn local_zero_search(found: &[LocalSearchResult], problems: &[String]) -> Outcome {
    let max_count = found.iter().map(|s| s.count).max().unwrap_or(-1);
    let max_shift = found.iter().map(|s| s.shift.abs()).max().unwrap_or(0);
    outcome(
        problems.is_empty() && found.len() == 20,
        format!(
            "{}/20 centers succeeded, max count {max_count} (cap 2), max |k| {max_shift}, oracle mismatches {}{}",
            found.len(),
            problems.len(),
            problems.first().map(|p| format!(": {p}")).unwrap_or_default()
        ),
    )
}

fn factorized_bound(found: &[LocalSearchResult], e0: f64) -> Outcome {
    let amo = amo3();
    let n = 64;
    let e = c(e0, 0.0);
    let lyap = le_with_options(&TransferCocycle::new(&amo, e), 0.0, n, 500, false).unwrap().sums[0];
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst = f64::INFINITY;
    for s in found {
        worst = worst.min(factorized_lower_bound_check(&amo, e, s, lyap, 200, &mut rng).unwrap());
    }
    outcome(
        !found.is_empty() && worst >= -0.1 * n as f64,
        format!("worst violation {worst:.3} over {} balls (floor {:.1})", found.len(), -0.1 * n as f64),
    )
}

fn ldt() -> Outcome {
    let amo = amo3();
    let e0 = nearest_eigenvalue(&amo, 0.0, 256, 0.0).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in [LdtKind::Propagator, LdtKind::Dirichlet, LdtKind::Periodic] {
        let m: Vec<f64> = [64usize, 128, 256]
            .iter()
            .map(|&n| ldt_measure(&amo, e0, 0.0, n, 500, (n as f64).powf(-0.5), kind).unwrap())
            .collect();
        ok &= m[2] <= 0.05 && m[2] <= m[0];
        parts.push(format!("{kind:?} {:.3}/{:.3}/{:.3}", m[0], m[1], m[2]));
    }
    outcome(ok, format!("measure at n=64/128/256: {}", parts.join(", ")))
}

fn holder() -> Outcome {
    let eta = log_spaced_desc(1e-2, 1e-4, 8);
    let synth: Vec<f64> = eta.iter().map(|h| 0.7 * (2.0 * h).powf(0.37)).collect();
    let (b_syn, _, _) = fit_power_law(&eta, &synth).unwrap();
    let syn_ok = (b_syn - 0.37).abs() <= 1e-12;

    let amo = amo3();
    let n = 20_000;
    let e0 = nearest_eigenvalue(&amo, 0.0, n, 0.0).unwrap();
    let gate = positivity_gate(&amo, e0, 1000, 500, 0.05);
    let kappa = acceleration(&TransferCocycle::new(&amo, c(e0, 0.0)), 0.01, 1000, 500, DEFAULT_STEP).unwrap()[0].kappa_rounded;
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let thetas: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
    let rep = holder_fit(&amo, e0, &eta, n, &thetas, kappa).unwrap();
    let ok = syn_ok && gate.is_ok() && rep.beta_hat >= 0.35 && rep.beta_bound == 0.5;
    outcome(
        ok,
        format!(
            "beta_hat {:.3} (floor 0.35), beta_bound {}, fit rms {:.3}, dropped {}, L_1(E0) {:.3}; synthetic error {:.1e}",
            rep.beta_hat,
            rep.beta_bound,
            rep.confidence,
            rep.dropped.len(),
            gate.unwrap_or(f64::NAN),
            (b_syn - 0.37).abs()
        ),
    )
}

fn window_inequality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut violations = 0;
    let mut min_margin = f64::INFINITY;
    let families = [
        amo3(),
        builtins::almost_mathieu(0.7, Frequency::golden(), 0.1),
        builtins::block_demo(1.0, 0.3, 0.5, Frequency::golden(), 0.1),
    ];
    for i in 0..100 {
        let fam = &families[i % 3];
        let n = rng.random_range(10..=2000);
        let e = rng.random_range(-6.0..6.0);
        let eta = 10f64.powf(rng.random_range(-4.0..0.0));
        let w = window_count(fam, rng.random_range(0.0..1.0), e, eta, n).unwrap();
        if w.count > w.resolvent_estimate {
            violations += 1;
        }
        min_margin = min_margin.min(w.resolvent_estimate - w.count);
    }
    outcome(violations == 0, format!("{violations} violations in 100 instances, min margin {min_margin:.2e}"))
}

fn diophantine() -> Outcome {
    let g = Frequency::golden();
    let cert = diophantine_certificate(&g, 100_000, 0.3).unwrap();
    let verified = cert.verify(g.omega());
    let floor = (1..=100_000u64)
        .map(|k| torus_norm(k as f64 * g.omega()) * k as f64)
        .fold(f64::INFINITY, f64::min);
    let adm = admissible_scales(&g, 0.05, 1, 200).unwrap();
    let members_ok = adm.scales.iter().all(|&n| torus_norm(n as f64 * g.omega()) <= 0.05);
    outcome(
        verified && floor >= 0.3 && cert.exponent == 1.0 && members_ok,
        format!(
            "A = {}, a = {:.4}, scanned min |k omega| |k| = {floor:.4}; {} admissible scales re-verified, max gap C* = {}",
            cert.exponent,
            cert.a,
            adm.scales.len(),
            adm.max_gap
        ),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |id: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failures += 1;
        }
        println!("criterion {id:>2} [{tag}] {name}: {} ({:.1} s)", o.detail, t.elapsed().as_secs_f64());
    };
    report(1, "symplecticity", &mut symplecticity);
    report(2, "detP identity", &mut detp);
    report(3, "Poisson/Cramer vs direct inversion", &mut green_routes);
    report(4, "LE duality and additivity", &mut duality);
    report(5, "acceleration quantization and zero counts", &mut acceleration_zero_counts);
    let mut found = Vec::new();
    let mut e0 = 0.0;
    report(6, "local zero search", &mut || {
        let (f, problems, e) = searches();
        let o = local_zero_search(&f, &problems);
        found = f;
        e0 = e;
        o
    });
    report(7, "factorized lower bound", &mut || factorized_bound(&found, e0));
    report(8, "LDT decay", &mut ldt);
    report(9, "Holder regression", &mut holder);
    report(10, "window-count inequality", &mut window_inequality);
    report(11, "Diophantine and admissible scales", &mut diophantine);
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
