//! End-to-end acceptance checks at production scale.
//!
//! Runs as a plain binary (no test harness) so that every check prints one
//! PASS/FAIL line even when an earlier one fails. Exits non-zero if any check
//! fails.

use std::path::Path;
use std::time::Instant;

use jcmsim_cli::run_with_args;
use jcmsim_core::dynamics::{build_step_operator, exact_evolve, ns_gate_coeffs, JcmParams};
use jcmsim_core::ensemble::{run_ensemble, sweep_fidelity_surface, EnsembleOptions, EnsembleStats};
use jcmsim_core::field::{sample_histogram, sample_moments, NoiseParams};
use jcmsim_core::fit::{intercept_shift, loglog_fit, FitResult};
use jcmsim_core::perturbation::predicted_fidelity;
use jcmsim_core::state::{
    bloch_from_density, make_initial_state, reduced_atom_density, Atom, InitialPreset,
};

const SEED: u64 = 20_130_501;

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, ok: bool, detail: String, started: Instant) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} [{verdict}] {name}: {detail} ({:.1} s)",
            started.elapsed().as_secs_f64()
        );
        if !ok {
            self.failures += 1;
        }
    }
}

fn noise(p: f64, de: f64, samples: u64) -> NoiseParams {
    NoiseParams {
        jump_probability: p,
        delta_e: de,
        seed: SEED,
        samples,
    }
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    x >= lo && x <= hi
}

fn gate_coefficients(r: &mut Report) {
    let t = Instant::now();
    let table = [
        (0.633, -0.606),
        (0.138, 0.928),
        (0.988, 0.111),
        (0.0247, -0.988),
        (0.828, 0.415),
    ];
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for (m, (c2, d)) in table.into_iter().enumerate() {
        let (gc2, gd) = ns_gate_coeffs(m as u32);
        let dev = (gc2 - c2).abs().max((gd - d).abs());
        if dev > 5e-4 {
            detail.push(format!("m={m}: ({gc2:.5}, {gd:.5}) vs ({c2}, {d})"));
        }
        worst = worst.max(dev);
    }
    let ok = worst <= 5e-4;
    let msg = if ok {
        format!("max deviation {worst:.2e}")
    } else {
        format!("max deviation {worst:.2e} > 5e-4; {}", detail.join("; "))
    };
    r.record(1, "gate coefficients for m = 0..4", ok, msg, t);
}

fn gate_action(r: &mut Report) {
    let t = Instant::now();
    let jcm = JcmParams::default();
    let psi0 = make_initial_state(&InitialPreset::EqualSuperpositionG012, jcm.truncation).unwrap();
    let out = exact_evolve(&psi0, jcm.gate_time(), &jcm).unwrap();
    let s3 = 3.0f64.sqrt();
    let g2 = out.amp(Atom::Ground, 2);
    let e0 = out.amp(Atom::Excited, 0).norm_sqr();
    let g1 = out.amp(Atom::Ground, 1);
    let dev_g2 = (g2.re + 1.0 / s3).hypot(g2.im);
    let dev_e0 = (e0 - 0.138 / 3.0).abs();
    let dev_g1 = (g1.re - 0.928 / s3).hypot(g1.im);
    let ok = dev_g2 <= 1e-10 && dev_e0 <= 1e-3 && dev_g1 <= 1e-3;
    r.record(
        2,
        "gate action on the g012 superposition",
        ok,
        format!("|g,2> dev {dev_g2:.1e}, |e,0> prob dev {dev_e0:.1e}, |g,1> dev {dev_g1:.1e}"),
        t,
    );
}

fn noiseless_conservation(r: &mut Report) {
    let t = Instant::now();
    let jcm = JcmParams {
        steps: 10_000,
        ..JcmParams::default()
    };
    let op = build_step_operator(&jcm);
    let (mut norm_dev, mut state_dev) = (0.0f64, 0.0f64);
    for preset in [
        InitialPreset::EqualSuperpositionG012,
        InitialPreset::DressedZeroPlus,
        InitialPreset::BareG1,
    ] {
        let psi0 = make_initial_state(&preset, jcm.truncation).unwrap();
        let mut s = psi0.clone();
        for _ in 0..jcm.steps {
            op.apply_in_place(&mut s).unwrap();
        }
        let exact = exact_evolve(&psi0, jcm.gate_time(), &jcm).unwrap();
        norm_dev = norm_dev.max((s.norm_sq() - 1.0).abs());
        state_dev = state_dev.max(s.max_abs_diff(&exact));
    }
    let ok = norm_dev <= 1e-10 && state_dev <= 1e-9;
    r.record(
        3,
        "noiseless stepping conserves norm and matches exact evolution",
        ok,
        format!("norm dev {norm_dev:.1e}, state dev {state_dev:.1e}"),
        t,
    );
}

fn noise_moments(r: &mut Report) {
    let t = Instant::now();
    let nz = noise(0.2, 50.0, 100_000);
    let n = 10_000;
    let m = &sample_moments(&nz, &[n], 0).unwrap()[0];
    let var_ratio = m.second / nz.variance_theory(n);
    let m4_ratio = m.fourth / nz.fourth_moment_theory(n);
    let mean_ok = m.mean.abs() <= 3.0 * m.stderr_mean;
    let hist = sample_histogram(&nz, n, 0).unwrap();
    let chi = hist.chi_square(10.0).expect("histogram has populated bins");
    let ok = within(var_ratio, 0.98, 1.02)
        && within(m4_ratio, 0.95, 1.05)
        && mean_ok
        && chi.reduced < 2.0;
    r.record(
        4,
        "random-walk field moments and normality",
        ok,
        format!(
            "var ratio {var_ratio:.4}, fourth-moment ratio {m4_ratio:.4}, mean {:.2} (stderr {:.2}), reduced chi^2 {:.3} over {} bins",
            m.mean, m.stderr_mean, chi.reduced, chi.bins
        ),
        t,
    );
}

fn bloch_z_and_norm(r: &mut Report) -> EnsembleStats {
    let t = Instant::now();
    let jcm = JcmParams::default();
    let opts = EnsembleOptions {
        record_stride: 1000,
        ..EnsembleOptions::default()
    };
    let stats = run_ensemble(
        &InitialPreset::EqualSuperpositionG012,
        &jcm,
        &noise(0.2, 100.0, 40_000),
        &opts,
    )
    .unwrap();
    let fin = stats.final_point();
    let sz = fin.bloch.z;
    r.record(
        5,
        "final Bloch z-component of the g012 ensemble",
        (sz + 0.487).abs() <= 0.01,
        format!(
            "Sz(T) = {sz:.5} +- {:.1e} (target -0.487 +- 0.01)",
            fin.stderr_sz
        ),
        t,
    );
    let t = Instant::now();
    let deficit = fin.norm_deficit();
    r.record(
        6,
        "mean norm deficit at the gate time",
        within(deficit, 3.3e-6, 6.1e-6),
        format!(
            "1 - |psi(T)|^2 = {deficit:.3e} +- {:.1e} (window [3.3e-6, 6.1e-6])",
            fin.stderr_norm_sq
        ),
        t,
    );
    stats
}

fn early_fit(preset: &InitialPreset, de: f64, lo: f64, hi: f64) -> (FitResult, EnsembleStats) {
    let jcm = JcmParams::default();
    let opts = EnsembleOptions {
        record_stride: 100,
        horizon_steps: Some((hi * jcm.steps as f64).round() as u64),
        ..EnsembleOptions::default()
    };
    let stats = run_ensemble(preset, &jcm, &noise(0.1, de, 40_000), &opts).unwrap();
    let series: Vec<(f64, f64)> = stats
        .points
        .iter()
        .map(|p| (p.t_over_t, p.fidelity))
        .collect();
    (loglog_fit(&series, lo, hi).unwrap(), stats)
}

fn power_law_and_perturbation(r: &mut Report) {
    let t = Instant::now();
    let deltas = [5.0, 10.0, 25.0];
    let mut plus_fits = Vec::new();
    let mut plus5 = None;
    for de in deltas {
        let (fit, stats) = early_fit(&InitialPreset::DressedZeroPlus, de, 0.002, 0.05);
        if de == 5.0 {
            plus5 = Some(stats);
        }
        plus_fits.push(fit);
    }
    let mut g1_fits = Vec::new();
    for de in deltas {
        g1_fits.push(early_fit(&InitialPreset::BareG1, de, 0.02, 0.1).0);
    }
    let shift25 = intercept_shift(&plus_fits[0], &plus_fits[2]);
    let shift10 = intercept_shift(&plus_fits[0], &plus_fits[1]);
    let slopes_ok = plus_fits.iter().all(|f| within(f.b, 2.9, 3.1));
    let g1_ok = g1_fits.iter().all(|f| within(f.b, 2.85, 3.05));
    let shifts_ok = matches!(&shift25, Ok(s) if (s.value - 3.22).abs() <= 0.2)
        && matches!(&shift10, Ok(s) if (s.value - 1.39).abs() <= 0.2);
    let fmt_fits = |fits: &[FitResult]| {
        fits.iter()
            .zip(deltas)
            .map(|(f, de)| format!("dE={de}: a={:.3} b={:.3}", f.a, f.b))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let fmt_shift = |s: &Result<jcmsim_core::fit::InterceptShift, jcmsim_core::Error>| match s {
        Ok(s) => format!("{:.3}", s.value),
        Err(e) => e.to_string(),
    };
    r.record(
        7,
        "early-time power law of the fidelity loss",
        slopes_ok && g1_ok && shifts_ok,
        format!(
            "0plus [{}]; shifts a(25)-a(5) = {}, a(10)-a(5) = {}; g1 [{}]",
            fmt_fits(&plus_fits),
            fmt_shift(&shift25),
            fmt_shift(&shift10),
            fmt_fits(&g1_fits)
        ),
        t,
    );

    let t = Instant::now();
    let stats = plus5.expect("delta_e = 5 run recorded");
    let point = stats.at_step(5_000).expect("t/T = 0.05 is recorded");
    let mc = 1.0 - point.fidelity;
    let pred = predicted_fidelity(0.05, &JcmParams::default(), &noise(0.1, 5.0, 40_000))
        .unwrap()
        .one_minus_fidelity;
    let rel = (mc - pred).abs() / pred;
    let stderr_ok = point.stderr_fidelity <= 0.1 * mc;
    r.record(
        8,
        "simulated loss against the second-order prediction",
        rel <= 0.15 && stderr_ok,
        format!(
            "1 - F(0.05 T) = {mc:.3e} +- {:.1e}, predicted {pred:.3e}, relative difference {:.1}% (limit 15%)",
            point.stderr_fidelity,
            100.0 * rel
        ),
        t,
    );
}

fn surface_and_decay_channels(r: &mut Report, table2: &EnsembleStats) {
    let t = Instant::now();
    let jcm = JcmParams::default();
    let p_grid = [0.0, 0.05, 0.1, 0.2, 0.3];
    let de_grid = [0.0, 25.0, 50.0, 75.0, 100.0];
    let grid = sweep_fidelity_surface(
        &InitialPreset::EqualSuperpositionG012,
        &p_grid,
        &de_grid,
        &jcm,
        &noise(0.0, 0.0, 10_000),
        &EnsembleOptions::default(),
    )
    .unwrap();
    let at = |i: usize, j: usize| &grid[i * de_grid.len() + j];
    let mut problems = Vec::new();

    for (i, _) in p_grid.iter().enumerate() {
        for (j, _) in de_grid.iter().enumerate() {
            let v = at(i, j);
            if (i == 0 || j == 0) && (v.fidelity - 1.0).abs() > 1e-12 {
                problems.push(format!(
                    "edge vertex ({}, {}) has F = {}",
                    v.jump_probability, v.delta_e, v.fidelity
                ));
            }
        }
    }
    for i in 1..p_grid.len() {
        for j in 1..de_grid.len() {
            let (a, b) = (at(i, j - 1), at(i, j));
            if b.fidelity > a.fidelity + 3.0 * a.stderr.hypot(b.stderr) {
                problems.push(format!(
                    "F rises with delta_e at p = {}: {} -> {}",
                    b.jump_probability, a.fidelity, b.fidelity
                ));
            }
        }
    }
    let corner = at(4, 4);
    if corner.fidelity >= at(4, 0).fidelity {
        problems.push("corner p = 0.3, delta_e = 100 not below the delta_e = 0 edge".into());
    }
    // three-point second difference in p at p = 0, 0.05, 0.1 and delta_e = 100
    let (f0, f1, f2) = (at(0, 4), at(1, 4), at(2, 4));
    let second = f0.fidelity - 2.0 * f1.fidelity + f2.fidelity;
    let se2 = (f0.stderr.powi(2) + 4.0 * f1.stderr.powi(2) + f2.stderr.powi(2)).sqrt();
    if second <= 3.0 * se2 {
        problems.push(format!(
            "second difference {second:.4} not above 3 x {se2:.4}"
        ));
    }

    // decay channels from the full-scale g012 run
    let psi0 = make_initial_state(&InitialPreset::EqualSuperpositionG012, jcm.truncation).unwrap();
    let clean = exact_evolve(&psi0, jcm.gate_time(), &jcm).unwrap();
    let (clean_s, _) = bloch_from_density(&reduced_atom_density(&clean)).unwrap();
    let noisy = table2.final_point().bloch;
    if noisy.z <= clean_s.z {
        problems.push(format!(
            "Sz(T) = {} not above noiseless {}",
            noisy.z, clean_s.z
        ));
    }
    if noisy.norm_sq() >= clean_s.norm_sq() {
        problems.push(format!(
            "|S(T)|^2 = {} not below noiseless {}",
            noisy.norm_sq(),
            clean_s.norm_sq()
        ));
    }

    let detail = format!(
        "corner F = {:.4}; second difference {second:.4} (3 se = {:.4}); Sz(T) {:.4} vs noiseless {:.4}; |S|^2 {:.4} vs {:.4}{}",
        corner.fidelity,
        3.0 * se2,
        noisy.z,
        clean_s.z,
        noisy.norm_sq(),
        clean_s.norm_sq(),
        if problems.is_empty() {
            String::new()
        } else {
            format!("; problems: {}", problems.join("; "))
        }
    );
    r.record(
        9,
        "fidelity surface shape and decay channels",
        problems.is_empty(),
        detail,
        t,
    );
}

fn cli(args: &[&str]) {
    let mut full = vec!["jcmsim"];
    full.extend_from_slice(args);
    run_with_args(full).unwrap_or_else(|e| panic!("{args:?}: {e}"));
}

fn determinism(r: &mut Report, dir: &Path) {
    let t = Instant::now();
    let cfg = dir.join("small.toml");
    std::fs::write(
        &cfg,
        "record_stride = 50\n[jcm]\nsteps = 2000\n[noise]\njump_probability = 0.2\ndelta_e = 2000.0\nsamples = 300\nseed = 7\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let mut mismatches = Vec::new();
    let mut outputs = 0;
    let mut reference: Vec<(String, Vec<u8>)> = Vec::new();
    for (round, threads) in ["1", "4", "8", "1"].into_iter().enumerate() {
        let out = |name: &str| {
            dir.join(format!("{name}-{round}.csv"))
                .to_str()
                .unwrap()
                .to_owned()
        };
        let common = ["--threads", threads];
        let jobs: Vec<(String, Vec<String>)> = vec![
            (
                "run".into(),
                vec!["run", "-c", c, "--bitrepro", "-o", &out("run")]
                    .into_iter()
                    .map(String::from)
                    .collect(),
            ),
            (
                "noise-stats".into(),
                vec![
                    "noise-stats",
                    "-c",
                    c,
                    "--bitrepro",
                    "--samples",
                    "5000",
                    "-o",
                    &out("moments"),
                    "--histogram",
                    &out("hist"),
                ]
                .into_iter()
                .map(String::from)
                .collect(),
            ),
            (
                "sweep".into(),
                vec![
                    "sweep",
                    "-c",
                    c,
                    "--bitrepro",
                    "--samples",
                    "100",
                    "--p-list",
                    "0,0.1,0.3",
                    "--delta-e-list",
                    "0,3000",
                    "-o",
                    &out("sweep"),
                ]
                .into_iter()
                .map(String::from)
                .collect(),
            ),
            (
                "perturb-compare".into(),
                vec![
                    "perturb-compare",
                    "-c",
                    c,
                    "--bitrepro",
                    "--preset",
                    "0plus",
                    "-o",
                    &out("perturb"),
                ]
                .into_iter()
                .map(String::from)
                .collect(),
            ),
            (
                "convergence".into(),
                vec![
                    "convergence",
                    "-c",
                    c,
                    "--bitrepro",
                    "--samples-list",
                    "64,200",
                    "-o",
                    &out("conv"),
                ]
                .into_iter()
                .map(String::from)
                .collect(),
            ),
            (
                "fit".into(),
                vec![
                    "fit",
                    "-i",
                    &out("run"),
                    "--label",
                    "run",
                    "--lo",
                    "0.05",
                    "--hi",
                    "0.5",
                    "-o",
                    &out("fit"),
                ]
                .into_iter()
                .map(String::from)
                .collect(),
            ),
        ];
        for (_, args) in &jobs {
            let mut all: Vec<&str> = common.to_vec();
            all.extend(args.iter().map(String::as_str));
            cli(&all);
        }
        let files = ["run", "moments", "hist", "sweep", "perturb", "conv", "fit"];
        for (k, name) in files.iter().enumerate() {
            let bytes = std::fs::read(out(name)).unwrap();
            outputs += 1;
            if round == 0 {
                reference.push((name.to_string(), bytes));
            } else if reference[k].1 != bytes {
                mismatches.push(format!("{name} at {threads} threads"));
            }
        }
    }
    let ok = mismatches.is_empty();
    r.record(
        10,
        "byte-identical output across thread counts",
        ok,
        if ok {
            format!("{outputs} CSVs from 6 commands identical at 1, 4, 8 threads and on repeat")
        } else {
            format!("differences: {}", mismatches.join(", "))
        },
        t,
    );
}

fn main() {
    let started = Instant::now();
    let mut report = Report { failures: 0 };
    let dir = tempfile::tempdir().unwrap();
    gate_coefficients(&mut report);
    gate_action(&mut report);
    noiseless_conservation(&mut report);
    noise_moments(&mut report);
    let table2 = bloch_z_and_norm(&mut report);
    power_law_and_perturbation(&mut report);
    surface_and_decay_channels(&mut report, &table2);
    determinism(&mut report, dir.path());
    println!(
        "acceptance: {} of 10 criteria passed in {:.0} s",
        10 - report.failures,
        started.elapsed().as_secs_f64()
    );
    if report.failures > 0 {
        std::process::exit(1);
    }
}
