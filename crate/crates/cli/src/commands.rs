use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use jcmsim_core::ensemble::{
    convergence_study, run_ensemble, sweep_fidelity_surface, EnsembleStats,
};
use jcmsim_core::field::{sample_histogram, sample_moments};
use jcmsim_core::fit::{intercept_shift, loglog_fit_with_errors, FitResult};
use jcmsim_core::perturbation::PerturbativePrediction;
use jcmsim_core::state::InitialPreset;

use crate::config::{resolve, RunConfig};
use crate::table::{num, read, Table};
use crate::{CliError, Command, ConfigArgs};

pub fn dispatch(cmd: Command) -> Result<String, CliError> {
    match cmd {
        Command::Run { config, output } => cmd_run(&load(&config)?, &output),
        Command::Fit {
            inputs,
            labels,
            lo,
            hi,
            weighted,
            output,
        } => cmd_fit(&inputs, &labels, lo, hi, weighted, &output),
        Command::NoiseStats {
            config,
            checkpoints,
            output,
            histogram,
            histogram_step,
        } => cmd_noise_stats(
            &load(&config)?,
            checkpoints,
            &output,
            histogram.as_deref(),
            histogram_step,
        ),
        Command::Sweep {
            config,
            p_list,
            delta_e_list,
            output,
        } => {
            let p = p_list.unwrap_or_else(|| (0..13).map(|i| 0.025 * i as f64).collect());
            let de = delta_e_list.unwrap_or_else(|| (0..11).map(|i| 10.0 * i as f64).collect());
            cmd_sweep(&load(&config)?, &p, &de, &output)
        }
        Command::PerturbCompare { config, output } => cmd_perturb_compare(&load(&config)?, &output),
        Command::Convergence {
            config,
            samples_list,
            output,
        } => cmd_convergence(&load(&config)?, &samples_list, &output),
    }
}

fn load(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    resolve(args.config.as_ref(), &args.overrides)
}

pub fn ensemble_table(stats: &EnsembleStats) -> Table {
    let mut t = Table::new(&[
        "n",
        "t_over_T",
        "F",
        "stderr_F",
        "Sx",
        "Sy",
        "Sz",
        "norm_sq",
        "stderr_Sz",
    ]);
    for p in &stats.points {
        t.push(vec![
            p.step.to_string(),
            num(p.t_over_t),
            num(p.fidelity),
            num(p.stderr_fidelity),
            num(p.bloch.x),
            num(p.bloch.y),
            num(p.bloch.z),
            num(p.norm_sq),
            num(p.stderr_sz),
        ]);
    }
    t
}

pub fn cmd_run(cfg: &RunConfig, output: &Path) -> Result<String, CliError> {
    let start = Instant::now();
    let stats = run_ensemble(&cfg.initial, &cfg.jcm, &cfg.noise, &cfg.ensemble_options())?;
    let wall = start.elapsed().as_secs_f64();
    ensemble_table(&stats).write(output, Some(cfg))?;
    let fin = stats.final_point();
    let mut s = String::new();
    let at = if fin.step == cfg.jcm.steps {
        "T".to_owned()
    } else {
        format!("{} T", fin.t_over_t)
    };
    writeln!(s, "samples      {}", stats.samples).unwrap();
    writeln!(
        s,
        "F({at})      {:.6} +- {:.2e}",
        fin.fidelity, fin.stderr_fidelity
    )
    .unwrap();
    writeln!(
        s,
        "S({at})      ({:.6}, {:.6}, {:.6}) +- {:.2e} (z)",
        fin.bloch.x, fin.bloch.y, fin.bloch.z, fin.stderr_sz
    )
    .unwrap();
    writeln!(
        s,
        "1 - |psi|^2  {:.4e} +- {:.2e}",
        fin.norm_deficit(),
        fin.stderr_norm_sq
    )
    .unwrap();
    writeln!(s, "wall time    {wall:.2} s").unwrap();
    Ok(s)
}

/// `(t/T, F, stderr_F)` from an ensemble CSV.
pub fn read_fidelity_series(path: &Path) -> Result<Vec<(f64, f64, f64)>, CliError> {
    let (header, rows) = read(path)?;
    let col = |name: &str| header.iter().position(|h| h == name);
    let (Some(ti), Some(fi)) = (col("t_over_T"), col("F")) else {
        return Err(CliError::Input(format!(
            "{}: need columns t_over_T and F, found {}",
            path.display(),
            header.join(",")
        )));
    };
    let si = col("stderr_F");
    let parse = |row: &[String], i: usize, line: usize| {
        row.get(i)
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| {
                CliError::Input(format!(
                    "{}: bad value in data row {line}, column {}",
                    path.display(),
                    header[i]
                ))
            })
    };
    rows.iter()
        .enumerate()
        .map(|(line, row)| {
            let se = match si {
                Some(i) => parse(row, i, line + 1)?,
                None => 0.0,
            };
            Ok((parse(row, ti, line + 1)?, parse(row, fi, line + 1)?, se))
        })
        .collect()
}

pub fn fit_row(label: &str, f: &FitResult) -> Vec<String> {
    vec![
        label.to_owned(),
        num(f.window_lo),
        num(f.window_hi),
        num(f.a),
        num(f.b),
        num(f.stderr_a),
        num(f.stderr_b),
        num(f.rms),
        f.n_points.to_string(),
        f.n_excluded.to_string(),
    ]
}

pub const FIT_HEADER: [&str; 10] = [
    "label",
    "window_lo",
    "window_hi",
    "a",
    "b",
    "stderr_a",
    "stderr_b",
    "rms",
    "n_points",
    "n_excluded",
];

pub fn cmd_fit(
    inputs: &[PathBuf],
    labels: &[String],
    lo: f64,
    hi: f64,
    weighted: bool,
    output: &Path,
) -> Result<String, CliError> {
    if !labels.is_empty() && labels.len() != inputs.len() {
        return Err(CliError::Config(format!(
            "{} labels given for {} inputs",
            labels.len(),
            inputs.len()
        )));
    }
    let mut table = Table::new(&FIT_HEADER);
    let mut fits = Vec::new();
    let mut s = String::new();
    for (i, path) in inputs.iter().enumerate() {
        let label = labels.get(i).cloned().unwrap_or_else(|| {
            path.file_stem()
                .map(|x| x.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        let series = read_fidelity_series(path)?;
        let fit = loglog_fit_with_errors(&series, lo, hi, weighted)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        writeln!(
            s,
            "{label}: a = {:.4} +- {:.4}, b = {:.4} +- {:.4} ({} points, {} excluded)",
            fit.a, fit.stderr_a, fit.b, fit.stderr_b, fit.n_points, fit.n_excluded
        )
        .unwrap();
        table.push(fit_row(&label, &fit));
        fits.push((label, fit));
    }
    if let Some((first_label, first)) = fits.first() {
        for (label, f) in &fits[1..] {
            match intercept_shift(first, f) {
                Ok(d) => writeln!(
                    s,
                    "a({label}) - a({first_label}) = {:.4} +- {:.4}",
                    d.value, d.stderr
                )
                .unwrap(),
                Err(e) => writeln!(s, "a({label}) - a({first_label}): {e}").unwrap(),
            }
        }
    }
    table.write(output, None)?;
    Ok(s)
}

pub fn cmd_noise_stats(
    cfg: &RunConfig,
    checkpoints: u64,
    output: &Path,
    histogram: Option<&Path>,
    histogram_step: Option<u64>,
) -> Result<String, CliError> {
    if checkpoints == 0 {
        return Err(CliError::Config("--checkpoints must be at least 1".into()));
    }
    let n_max = cfg.jcm.steps;
    let steps: Vec<u64> = (1..=checkpoints)
        .map(|i| (n_max * i).div_ceil(checkpoints))
        .collect();
    let noise = &cfg.noise;
    let stats = sample_moments(noise, &steps, 0)?;
    let mut t = Table::new(&[
        "n",
        "sigma2_emp",
        "sigma2_theory",
        "m4_emp",
        "m4_theory",
        "stderr2",
        "stderr4",
        "mean",
        "stderr_mean",
    ]);
    for m in &stats {
        t.push(vec![
            m.step.to_string(),
            num(m.second),
            num(noise.variance_theory(m.step)),
            num(m.fourth),
            num(noise.fourth_moment_theory(m.step)),
            num(m.stderr_second),
            num(m.stderr_fourth),
            num(m.mean),
            num(m.stderr_mean),
        ]);
    }
    t.write(output, Some(cfg))?;
    let mut s = String::new();
    let last = stats.last().expect("at least one checkpoint");
    writeln!(
        s,
        "n = {}: sigma^2 = {:.6e} (theory {:.6e}), <E^4> = {:.6e} (theory {:.6e})",
        last.step,
        last.second,
        noise.variance_theory(last.step),
        last.fourth,
        noise.fourth_moment_theory(last.step)
    )
    .unwrap();
    if let Some(path) = histogram {
        let step = histogram_step.unwrap_or(n_max);
        let h = sample_histogram(noise, step, 0)?;
        let mut ht = Table::new(&["bin_center", "count", "expected"]);
        for b in &h.bins {
            ht.push(vec![num(b.center), b.count.to_string(), num(b.expected)]);
        }
        ht.write(path, Some(cfg))?;
        if h.degenerate {
            writeln!(
                s,
                "histogram at n = {step}: degenerate (field never moves; no Gaussian to compare)"
            )
            .unwrap();
        } else if let Some(c) = h.chi_square(10.0) {
            writeln!(
                s,
                "histogram at n = {step}: reduced chi^2 = {:.3} over {} bins",
                c.reduced, c.bins
            )
            .unwrap();
        }
    }
    Ok(s)
}

pub fn cmd_sweep(
    cfg: &RunConfig,
    p_list: &[f64],
    de_list: &[f64],
    output: &Path,
) -> Result<String, CliError> {
    if p_list.is_empty() || de_list.is_empty() {
        return Err(CliError::Config("sweep lists must not be empty".into()));
    }
    if let Some(p) = p_list.iter().find(|p| !(0.0..=0.5).contains(*p)) {
        return Err(CliError::Config(format!(
            "jump probability {p} outside [0, 0.5]"
        )));
    }
    if let Some(d) = de_list.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
        return Err(CliError::Config(format!(
            "field step {d} must be finite and non-negative"
        )));
    }
    let grid = sweep_fidelity_surface(
        &cfg.initial,
        p_list,
        de_list,
        &cfg.jcm,
        &cfg.noise,
        &cfg.ensemble_options(),
    )?;
    let mut t = Table::new(&["p", "deltaE", "F_at_T", "stderr"]);
    for v in &grid {
        t.push(vec![
            num(v.jump_probability),
            num(v.delta_e),
            num(v.fidelity),
            num(v.stderr),
        ]);
    }
    t.write(output, Some(cfg))?;
    let worst = grid
        .iter()
        .min_by(|a, b| a.fidelity.total_cmp(&b.fidelity))
        .expect("grid is non-empty");
    Ok(format!(
        "{} vertices; lowest F = {:.6} at p = {}, delta_e = {}\n",
        grid.len(),
        worst.fidelity,
        worst.jump_probability,
        worst.delta_e
    ))
}

pub fn cmd_perturb_compare(cfg: &RunConfig, output: &Path) -> Result<String, CliError> {
    if !matches!(
        cfg.initial,
        InitialPreset::DressedZeroPlus | InitialPreset::BareG1
    ) {
        return Err(CliError::Config(format!(
            "no perturbative prediction exists for initial state {}; only 0plus and g1 are covered",
            cfg.initial
        )));
    }
    let pred = PerturbativePrediction::new(&cfg.jcm, &cfg.noise)?;
    let stats = run_ensemble(&cfg.initial, &cfg.jcm, &cfg.noise, &cfg.ensemble_options())?;
    let mut t = Table::new(&[
        "t_over_T",
        "one_minus_F_mc",
        "one_minus_F_pred",
        "ratio",
        "in_window",
        "stderr_mc",
        "degenerate",
    ]);
    let mut in_window = Vec::new();
    for p in stats.points.iter().filter(|p| p.step > 0) {
        let q = pred.at(p.t_over_t);
        let mc = 1.0 - p.fidelity;
        let degenerate = q.one_minus_fidelity == 0.0;
        let ratio = if degenerate {
            f64::NAN
        } else {
            mc / q.one_minus_fidelity
        };
        if q.in_window && !degenerate {
            in_window.push(ratio);
        }
        t.push(vec![
            num(p.t_over_t),
            num(mc),
            num(q.one_minus_fidelity),
            num(ratio),
            q.in_window.to_string(),
            num(p.stderr_fidelity),
            degenerate.to_string(),
        ]);
    }
    t.write(output, Some(cfg))?;
    let mut s = String::new();
    writeln!(
        s,
        "prediction 1 - F = {:.6e} (t/T)^3; intercept {:.4} (analytic), {:.4} (empirical constant)",
        pred.coefficient, pred.intercept_analytic, pred.intercept_empirical
    )
    .unwrap();
    if in_window.is_empty() {
        writeln!(s, "no recorded point inside the validity window").unwrap();
    } else {
        in_window.sort_by(f64::total_cmp);
        writeln!(
            s,
            "{} points in window; simulated/predicted ratio median {:.4}, range [{:.4}, {:.4}]",
            in_window.len(),
            in_window[in_window.len() / 2],
            in_window[0],
            in_window[in_window.len() - 1]
        )
        .unwrap();
    }
    Ok(s)
}

pub fn cmd_convergence(
    cfg: &RunConfig,
    samples: &[u64],
    output: &Path,
) -> Result<String, CliError> {
    if samples.is_empty() || samples.contains(&0) {
        return Err(CliError::Config("sample counts must be positive".into()));
    }
    let mut opts = cfg.ensemble_options();
    // only the final point is reported
    opts.record_stride = cfg.horizon_steps.unwrap_or(cfg.jcm.steps);
    let runs = convergence_study(&cfg.initial, &cfg.jcm, &cfg.noise, samples, &opts)?;
    let mut t = Table::new(&[
        "M",
        "F_T",
        "stderr_F",
        "Sx_T",
        "Sy_T",
        "Sz_T",
        "stderr_Sz",
        "norm_deficit",
    ]);
    let mut s = String::new();
    for r in &runs {
        let p = r.final_point();
        t.push(vec![
            r.samples.to_string(),
            num(p.fidelity),
            num(p.stderr_fidelity),
            num(p.bloch.x),
            num(p.bloch.y),
            num(p.bloch.z),
            num(p.stderr_sz),
            num(p.norm_deficit()),
        ]);
        writeln!(
            s,
            "M = {:>8}: Sz = {:.5} +- {:.1e}",
            r.samples, p.bloch.z, p.stderr_sz
        )
        .unwrap();
    }
    t.write(output, Some(cfg))?;
    Ok(s)
}
