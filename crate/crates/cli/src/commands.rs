//! The experiment subcommands. Trials run on the rayon pool; their results
//! come back in trial order and only the calling thread writes files, so the
//! bytes of every CSV depend on the configuration alone.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::io;

use num_complex::Complex;
use rayon::prelude::*;

use zerolattice::basins::{basin_partition, ZeroIndex};
use zerolattice::error::Error;
use zerolattice::field::GridShape;
use zerolattice::gef::GefSample;
use zerolattice::matching::{build_matching, min_cost_matching, sample_test_set, Matching, SetKind, SetReport, Verifier};
use zerolattice::pipeline::{zeros_in_disk, FieldTrial};
use zerolattice::rng::{derive_seed, rng_for};
use zerolattice::stats::fit_gaussian_tail;
use zerolattice::toys::{variance_scaling, ProcessModel, TestFunction};

use crate::config::ExperimentConfig;
use crate::output::{num, CsvSink, RunDir};

/// Values of `const_c` tried by `calibrate`, smallest first.
pub const CALIBRATION_SCAN: [f64; 5] = [4.0, 9.0, 16.0, 25.0, 36.0];
/// Dilations of the variance experiment.
pub const DILATIONS: [f64; 4] = [4.0, 8.0, 16.0, 32.0];
/// Zeros and flow lines are computed this far beyond the basin window.
const BASIN_DISK_MARGIN: f64 = 3.0;
const SET_TAG: u64 = 0x5e7;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Verification(String),
    Numerical(String),
    Io(io::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Verification(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Verification(m) => write!(f, "verification failure: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io(io) => Failure::Io(io),
            Error::InvalidArgument(_) | Error::InsufficientWindow { .. } => Failure::Config(msg),
            Error::HallViolated(_) | Error::ImperfectMatching { .. } => Failure::Verification(msg),
            _ => Failure::Numerical(msg),
        }
    }
}

/// Writes the successful prefix of `results`; at the first failure appends
/// the marker row and returns that failure.
fn write_in_order<T>(
    results: Vec<Result<T, Failure>>,
    sink: &mut CsvSink,
    mut write: impl FnMut(&mut CsvSink, &T) -> io::Result<()>,
) -> Result<Vec<T>, Failure> {
    let mut done = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(v) => {
                write(sink, &v)?;
                done.push(v);
            }
            Err(e) => {
                sink.failed(&e.to_string())?;
                return Err(e);
            }
        }
    }
    Ok(done)
}

/// Closes the sink whether or not `body` succeeded.
fn finish<T>(dir: &RunDir, sink: CsvSink, result: Result<T, Failure>) -> Result<T, Failure> {
    dir.close(sink)?;
    result
}

fn trials(cfg: &ExperimentConfig) -> std::ops::Range<u64> {
    0..cfg.trials
}

pub fn sample(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<String, Failure> {
    let tc = cfg.trial_config();
    let disk = cfg.window * SQRT_2;
    let results: Vec<Result<Vec<Complex<f64>>, Failure>> = trials(cfg)
        .into_par_iter()
        .map(|t| {
            let s = GefSample::new(tc.trial_seed(t), disk + 3.0, cfg.truncation_tol)?;
            let mut zeros: Vec<Complex<f64>> = zeros_in_disk(&s, disk)?
                .points
                .into_iter()
                .filter(|z| z.re.abs() <= cfg.window && z.im.abs() <= cfg.window)
                .collect();
            zeros.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            Ok(zeros)
        })
        .collect();
    let mut sink = dir.csv("zeros.csv", &["trial", "index", "re", "im"])?;
    let mut t = 0u64;
    let out = write_in_order(results, &mut sink, |sink, zeros| {
        for (i, z) in zeros.iter().enumerate() {
            sink.row([t.to_string(), i.to_string(), num(z.re), num(z.im)])?;
        }
        t += 1;
        Ok(())
    });
    let zeros = finish(dir, sink, out)?;
    let count: usize = zeros.iter().map(Vec::len).sum();
    Ok(format!(
        "{count} zeros over {} trials ({:.3} per trial, window area / pi = {:.3})",
        cfg.trials,
        count as f64 / cfg.trials as f64,
        (2.0 * cfg.window).powi(2) / std::f64::consts::PI
    ))
}

fn verify_trial(trial: &FieldTrial, const_c: f64, cfg: &ExperimentConfig) -> Result<Vec<(SetKind, SetReport)>, Failure> {
    let layer = trial.metric_layer(const_c)?;
    let lattice = layer.lattice();
    let verifier = Verifier::new(&layer.metric, &trial.zeros.points, &lattice.positions(), &trial.kernel);
    let mut rng = rng_for(derive_seed(cfg.seed, &[SET_TAG, trial.index]));
    Ok((0..cfg.sets)
        .map(|_| {
            let (kind, set) = sample_test_set(trial.shape(), cfg.set_center, &mut rng);
            (kind, verifier.verify(&set))
        })
        .collect())
}

const HALL_COLUMNS: [&str; 6] = [
    "zeros_vs_lattice_plus5",
    "lattice_vs_zeros_plus5",
    "lattice_area_plus1",
    "area_lattice_plus1",
    "zeros_area_plus4",
    "area_zeros_plus4",
];

pub fn verify(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<String, Failure> {
    let tc = cfg.trial_config();
    let results: Vec<Result<Vec<(SetKind, SetReport)>, Failure>> = trials(cfg)
        .into_par_iter()
        .map(|t| verify_trial(&FieldTrial::build(&tc, t)?, cfg.const_c, cfg))
        .collect();
    let mut header = vec![
        "trial",
        "set",
        "kind",
        "inner_integral",
        "outer_integral",
        "bound",
        "inner_margin",
        "outer_margin",
        "mass_clipped",
    ];
    header.extend(HALL_COLUMNS);
    header.extend(["hall_clipped", "pass"]);
    let mut sink = dir.csv("verify.csv", &header)?;
    let mut t = 0u64;
    let (mut passed, mut total) = (0usize, 0usize);
    let out = write_in_order(results, &mut sink, |sink, reports| {
        for (s, (kind, r)) in reports.iter().enumerate() {
            let m = &r.mass;
            let mut row = vec![
                t.to_string(),
                s.to_string(),
                kind.name().to_string(),
                num(m.inner_integral),
                num(m.outer_integral),
                num(m.bound),
                num(m.inner_margin()),
                num(m.outer_margin()),
                m.clipped.to_string(),
            ];
            row.extend(r.hall.checks().iter().map(|(_, margin)| num(*margin)));
            row.extend([r.hall.clipped.to_string(), r.passes().to_string()]);
            sink.row(&row)?;
            passed += usize::from(r.passes());
            total += 1;
        }
        t += 1;
        Ok(())
    });
    let result = out.and_then(|_| {
        if passed < total {
            let msg = format!("{} of {total} sets fail at const_c = {}", total - passed, cfg.const_c);
            sink.failed(&msg)?;
            Err(Failure::Verification(msg))
        } else {
            Ok(())
        }
    });
    finish(dir, sink, result)?;
    Ok(format!("{passed}/{total} sets pass at const_c = {}", cfg.const_c))
}

pub fn calibrate(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<String, Failure> {
    let tc = cfg.trial_config();
    let built: Vec<Result<FieldTrial, Failure>> = trials(cfg)
        .into_par_iter()
        .map(|t| FieldTrial::build(&tc, t).map_err(Failure::from))
        .collect();
    let mut sink = dir.csv("calibrate.csv", &["const_c", "trials", "sets", "passed", "pass_fraction", "selected"])?;
    let result = (|| -> Result<_, Failure> {
        let field_trials = built.into_iter().collect::<Result<Vec<_>, _>>()?;
        for c in CALIBRATION_SCAN {
            let counts = field_trials
                .par_iter()
                .map(|trial| {
                    let reports = verify_trial(trial, c, cfg)?;
                    Ok((reports.iter().filter(|(_, r)| r.passes()).count(), reports.len()))
                })
                .collect::<Result<Vec<(usize, usize)>, Failure>>()?;
            let passed: usize = counts.iter().map(|c| c.0).sum();
            let total: usize = counts.iter().map(|c| c.1).sum();
            let selected = passed == total;
            sink.row([
                num(c),
                cfg.trials.to_string(),
                total.to_string(),
                passed.to_string(),
                num(passed as f64 / total as f64),
                selected.to_string(),
            ])?;
            if selected {
                return Ok(c);
            }
        }
        Err(Failure::Verification(format!("no const_c in {CALIBRATION_SCAN:?} passes every set")))
    })();
    if let Err(e) = &result {
        if !matches!(e, Failure::Io(_)) {
            sink.failed(&e.to_string())?;
        }
    }
    let c = finish(dir, sink, result)?;
    Ok(format!("smallest const_c with every set passing: {c}"))
}

pub fn matching(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<String, Failure> {
    let tc = cfg.trial_config();
    let results: Vec<Result<[Matching; 2], Failure>> = trials(cfg)
        .into_par_iter()
        .map(|t| {
            let trial = FieldTrial::build(&tc, t)?;
            let layer = trial.metric_layer(cfg.const_c)?;
            let lattice = layer.lattice();
            let zeros = &trial.zeros.points;
            let hall = build_matching(zeros, &lattice, &layer.metric, &layer.envelope, cfg.threshold)?;
            Ok([hall, min_cost_matching(zeros, &lattice)])
        })
        .collect();
    let mut sink = dir.csv(
        "displacements.csv",
        &["trial", "k", "l", "xi_re", "xi_im", "abs_xi", "rho_cost", "matcher"],
    )?;
    let mut t = 0u64;
    let out = write_in_order(results, &mut sink, |sink, matchings| {
        for m in matchings {
            for p in m.interior_pairs() {
                let xi = p.displacement;
                sink.row([
                    t.to_string(),
                    p.k.to_string(),
                    p.l.to_string(),
                    num(xi.re),
                    num(xi.im),
                    num(xi.norm()),
                    num(p.rho_cost),
                    m.matcher.name().to_string(),
                ])?;
            }
        }
        t += 1;
        Ok(())
    });
    let all = finish(dir, sink, out)?;

    let mut tails = dir.csv("tails.csv", &["statistic", "lambda", "survival", "fit_c1", "fit_C1", "fit_r2"])?;
    let mut summary = Vec::new();
    let result = (|| -> Result<_, Failure> {
        for slot in 0..2 {
            let samples: Vec<f64> = all.iter().flat_map(|m| m[slot].interior_displacements()).collect();
            let name = format!("abs_xi_{}", all.first().map_or("none", |m| m[slot].matcher.name()));
            let fit = fit_gaussian_tail(&samples).map_err(Failure::from)?;
            for (lambda, s) in fit.lambdas.iter().zip(&fit.survival) {
                tails.row([
                    name.clone(),
                    num(*lambda),
                    num(*s),
                    num(fit.c1),
                    num(fit.big_c1),
                    num(fit.fit_quality),
                ])?;
            }
            summary.push(format!("{name}: n={} c1={:.3} r2={:.3}", fit.n_samples, fit.c1, fit.fit_quality));
        }
        Ok(())
    })();
    if let Err(e) = &result {
        tails.failed(&e.to_string())?;
    }
    finish(dir, tails, result)?;
    Ok(summary.join("; "))
}

pub fn basins(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<String, Failure> {
    let tc = cfg.trial_config();
    let disk = cfg.window * SQRT_2 + BASIN_DISK_MARGIN;
    let shape = GridShape::centered(cfg.window, cfg.grid);
    let results: Vec<Result<Vec<[f64; 5]>, Failure>> = trials(cfg)
        .map(|t| {
            let s = GefSample::new(tc.trial_seed(t), disk + 3.0, cfg.truncation_tol)?;
            let zeros = zeros_in_disk(&s, disk)?.points;
            let map = basin_partition(&s, &ZeroIndex::new(zeros, disk), &shape, cfg.supersample);
            Ok((0..map.zeros.len())
                .filter(|&i| map.areas[i] > 0.0)
                .filter(|&i| map.zeros[i].re.abs() <= cfg.window && map.zeros[i].im.abs() <= cfg.window)
                .map(|i| {
                    let z = map.zeros[i];
                    [z.re, z.im, map.areas[i], map.diameters[i], f64::from(u8::from(map.touches_edge[i]))]
                })
                .collect())
        })
        .collect();
    let mut sink = dir.csv("basins.csv", &["trial", "zero_re", "zero_im", "area", "diameter", "boundary_flag"])?;
    let mut t = 0u64;
    let out = write_in_order(results, &mut sink, |sink, rows| {
        for r in rows {
            sink.row([t.to_string(), num(r[0]), num(r[1]), num(r[2]), num(r[3]), (r[4] as u8).to_string()])?;
        }
        t += 1;
        Ok(())
    });
    let rows = finish(dir, sink, out)?;
    let inner: Vec<f64> = rows.iter().flatten().filter(|r| r[4] == 0.0).map(|r| r[2]).collect();
    let mean = inner.iter().sum::<f64>() / inner.len().max(1) as f64;
    Ok(format!(
        "{} basins clear of the window edge, mean area {:.4} = {:.4} pi",
        inner.len(),
        mean,
        mean / std::f64::consts::PI
    ))
}

pub fn toys(cfg: &ExperimentConfig, dir: &mut RunDir) -> Result<String, Failure> {
    let h = TestFunction::bump();
    let mut variance = dir.csv("variance.csv", &["model", "L", "trials", "mean_Z", "var_Z", "ci_lo", "ci_hi"])?;
    let mut slopes = dir.csv("slopes.csv", &["model", "slope", "ci"])?;
    let mut summary = Vec::new();
    let result = (|| -> Result<_, Failure> {
        for model in ProcessModel::ALL {
            let report = variance_scaling(model, &h, &DILATIONS, cfg.toy_trials, cfg.seed)?;
            for r in &report.rows {
                variance.row([
                    model.name().to_string(),
                    num(r.dilation),
                    r.trials.to_string(),
                    num(r.mean),
                    num(r.variance),
                    num(r.ci_lo),
                    num(r.ci_hi),
                ])?;
            }
            slopes.row([model.name().to_string(), num(report.slope), num(report.slope_half_width())])?;
            summary.push(format!("{} {:+.3} +- {:.3}", model.name(), report.slope, report.slope_half_width()));
        }
        Ok(())
    })();
    if let Err(e) = &result {
        variance.failed(&e.to_string())?;
        slopes.failed(&e.to_string())?;
    }
    dir.close(variance)?;
    finish(dir, slopes, result)?;
    Ok(format!("log-log variance slopes: {}", summary.join(", ")))
}
