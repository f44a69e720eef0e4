//! One runner per experiment kind. Runners return artifacts in memory;
//! writing them out is the caller's job.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Complex, DMatrix, DVector};
use neurochan_core::design::{self, AlphaScaling, EigenPair, GainDesign};
use neurochan_core::frames::{self, FrameSpec, FrameSpectrum};
use neurochan_core::intermittency::{self, MarkovChannelModel};
use neurochan_core::io::{fmt_f64, to_rows};
use neurochan_core::lattice::{self, classify_controllability};
use neurochan_core::lifting;
use neurochan_core::numerics::{self, Spectrum};
use neurochan_core::quantize::{self, Alphabet, EmulationTarget};
use neurochan_core::uncertainty::{self, NoiseModel, UncertaintyRow};
use neurochan_core::Plant;
use serde_json::json;

use crate::config::{
    self, CertifyParams, ClassifyParams, DesignParams, EmulateParams, Experiment, FramesParams,
    IntermittencyParams, LiftSpec, Rows, UncertaintyParams,
};
use crate::error::{CliError, Result};
use crate::output::Artifact;
use crate::svg::{self, Series};

/// What a run produced.
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub artifacts: Vec<Artifact>,
    /// Human-readable summary lines.
    pub report: Vec<String>,
    /// For certify runs: whether every checked superset passed.
    pub certificate_pass: Option<bool>,
}

impl RunOutcome {
    fn add(&mut self, name: &str, contents: impl Into<String>) {
        self.artifacts.push(Artifact::new(name, contents));
    }

    fn add_json(&mut self, name: &str, value: &serde_json::Value) {
        let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
        text.push('\n');
        self.add(name, text);
    }

    fn say(&mut self, line: impl Into<String>) {
        self.report.push(line.into());
    }
}

/// Inputs shared by every runner.
pub struct Context<'a> {
    /// Directory relative paths in the config are resolved against.
    pub base_dir: &'a Path,
    pub seed: Option<u64>,
}

impl Context<'_> {
    fn require_seed(&self, kind: &str) -> Result<u64> {
        self.seed
            .ok_or_else(|| CliError::Validation(format!("seed: required for {kind} experiments")))
    }
}

pub fn run(experiment: &Experiment, ctx: &Context) -> Result<RunOutcome> {
    match experiment {
        Experiment::Classify(p) => classify(p, ctx),
        Experiment::Design(p) => design_gain(p, ctx),
        Experiment::Certify(p) => certify(p, ctx),
        Experiment::Intermittency(p) => intermittency(p, ctx),
        Experiment::Uncertainty(p) => uncertainty(p, ctx),
        Experiment::Frames(p) => frames(p, ctx),
        Experiment::Emulate(p) => emulate(p, ctx),
    }
}

fn core(field: &str) -> impl Fn(neurochan_core::Error) -> CliError + '_ {
    move |e| CliError::from_core(field, e)
}

fn lift(plant: &Plant, spec: &LiftSpec) -> Result<DMatrix<f64>> {
    match spec {
        LiftSpec::Particular => lifting::lift_particular(plant).map_err(core("lift")),
        LiftSpec::Invariant(labels) => {
            let set = config::channels("lift.invariant", plant.m(), labels)?;
            lifting::lift_invariant(plant, &set).map_err(core("lift.invariant"))
        }
        LiftSpec::Ahat(rows) => config::matrix("lift.ahat", rows),
    }
}

fn build_design(
    plant: &Plant,
    alpha: f64,
    scaling: AlphaScaling,
    lift_spec: &LiftSpec,
    x_g: &Option<Vec<f64>>,
) -> Result<GainDesign> {
    let ahat = lift(plant, lift_spec)?;
    let x_g = match x_g {
        Some(v) => config::vector("x_g", v, plant.n())?,
        None => DVector::zeros(plant.n()),
    };
    design::make_gain(plant, &ahat, alpha, &x_g, scaling).map_err(core("design"))
}

fn fmt_complex(z: &Complex<f64>) -> String {
    if z.im == 0.0 {
        fmt_f64(z.re)
    } else if z.im > 0.0 {
        format!("{}+{}i", fmt_f64(z.re), fmt_f64(z.im))
    } else {
        format!("{}-{}i", fmt_f64(z.re), fmt_f64(-z.im))
    }
}

fn fmt_spectrum(s: &Spectrum) -> String {
    s.eigenvalues
        .iter()
        .map(fmt_complex)
        .collect::<Vec<_>>()
        .join(" ")
}

fn classify(p: &ClassifyParams, ctx: &Context) -> Result<RunOutcome> {
    let plant = p.plant.resolve(ctx.base_dir)?;
    let report = classify_controllability(&plant, p.horizon).map_err(core("classify"))?;
    let mut out = RunOutcome::default();
    for s in &report.summary {
        out.say(format!(
            "|I| = {}: {} of {} subsets controllable",
            s.cardinality, s.controllable, s.total
        ));
    }
    let not: Vec<String> = report
        .records
        .iter()
        .filter(|r| !r.controllable)
        .map(|r| r.set.to_string())
        .collect();
    out.say(format!("not controllable: {}", not.join(" ")));
    out.add("classification.csv", report.to_csv());
    out.add_json("summary.json", &json!({ "summary": report.summary }));
    Ok(out)
}

fn design_gain(p: &DesignParams, ctx: &Context) -> Result<RunOutcome> {
    let plant = p.plant.resolve(ctx.base_dir)?;
    let (n, m) = (plant.n(), plant.m());
    let mut out = RunOutcome::default();

    let k = if let Some(targets) = &p.targets {
        let mut map: BTreeMap<_, EigenPair> = BTreeMap::new();
        for t in targets {
            let set = config::channels("targets.channels", m, &t.channels)?;
            let [a, b] = t.eigenvalues.as_slice() else {
                return Err(CliError::Validation(format!(
                    "targets.eigenvalues: expected 2 entries for {set}, got {}",
                    t.eigenvalues.len()
                )));
            };
            map.insert(set, [Complex::new(a[0], a[1]), Complex::new(b[0], b[1])]);
        }
        let k = design::problem_b_solve(&plant, &map, ctx.seed.unwrap_or(0))
            .map_err(core("targets"))?;
        out.add_json(
            "gain.json",
            &json!({ "method": "eigenvalue_assignment", "K": to_rows(&k) }),
        );
        k
    } else if let Some(rows) = &p.gain {
        let k = config::matrix("gain", rows)?;
        if k.shape() != (m, n) {
            return Err(CliError::Validation(format!(
                "gain: expected {m}x{n}, got {}x{}",
                k.nrows(),
                k.ncols()
            )));
        }
        out.add_json("gain.json", &json!({ "method": "given", "K": to_rows(&k) }));
        k
    } else {
        let d = build_design(&plant, p.alpha, p.scaling, &p.lift, &p.x_g)?;
        let mut text = d.to_json();
        text.push('\n');
        out.add("gain.json", text);
        d.k
    };

    let j_min = p.j_min.unwrap_or(n);
    let subsets = lattice::enumerate_subsets(m, j_min.min(m), m).map_err(core("j_min"))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["subset", "cardinality", "hurwitz_margin", "eigenvalues"])
        .expect("in-memory write");
    let mut stable = 0;
    for set in &subsets {
        let s = numerics::eigenvalues(&design::projected_closed_loop(&plant, &k, set))
            .map_err(core("gain"))?;
        stable += usize::from(s.is_hurwitz());
        w.write_record([
            set.to_string(),
            set.len().to_string(),
            fmt_f64(s.max_real_part),
            fmt_spectrum(&s),
        ])
        .expect("in-memory write");
        out.say(format!("{set}: {}", fmt_spectrum(&s)));
    }
    out.say(format!("{stable} of {} subsets Hurwitz", subsets.len()));
    out.add(
        "subsets.csv",
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv"),
    );
    Ok(out)
}

fn certify(p: &CertifyParams, ctx: &Context) -> Result<RunOutcome> {
    let plant = p.plant.resolve(ctx.base_dir)?;
    let root = config::channels("root", plant.m(), &p.root)?;
    let d = build_design(&plant, p.alpha, p.scaling, &p.lift, &p.x_g)?;
    let cert = design::certify_resilience(&plant, &d, &root).map_err(core("certify"))?;
    let mut checks = Vec::new();
    for c in &cert.verified {
        let goal = design::goal_equilibrium_check(&plant, &d, &c.set).map_err(core("certify"))?;
        checks.push(json!({
            "subset": c.set.to_string(),
            "hurwitz_margin": c.hurwitz_margin,
            "full_rank": c.full_rank,
            "pass": c.passes(),
            "goal_residual": goal,
        }));
    }
    let mut out = RunOutcome::default();
    out.say(format!(
        "root {root}: {} supersets, {} pass",
        cert.verified.len(),
        cert.verified.iter().filter(|c| c.passes()).count()
    ));
    for diag in &cert.diagnostics {
        out.say(format!("note: {diag}"));
    }
    out.certificate_pass = Some(cert.all_pass == Some(true));
    out.add("certificate.csv", cert.to_csv());
    out.add_json(
        "certificate.json",
        &json!({
            "root": root.to_string(),
            "all_pass": cert.all_pass,
            "diagnostics": cert.diagnostics,
            "design": serde_json::to_value(&d).expect("design serializes"),
            "checks": checks,
        }),
    );
    Ok(out)
}

fn intermittency(p: &IntermittencyParams, ctx: &Context) -> Result<RunOutcome> {
    let seed = ctx.require_seed("intermittency")?;
    let plant = p.plant.resolve(ctx.base_dir)?;
    let d = build_design(&plant, p.alpha, p.scaling, &p.lift, &p.x_g)?;
    let x0 = config::vector("x0", &p.x0, plant.n())?;
    let model = MarkovChannelModel::new(p.delta, p.epsilon).map_err(core("delta/epsilon"))?;
    if p.runs == 0 {
        return Err(CliError::Validation("runs: must be at least 1".into()));
    }

    let models = vec![model; plant.m()];
    let path = intermittency::sample_availability_with(&models, p.horizon, seed, p.initial)
        .map_err(core("horizon"))?;
    let traj =
        intermittency::simulate_switched(&plant, &d, &path, &x0, p.dt).map_err(core("simulate"))?;

    let seeds: Vec<u64> = (0..p.runs as u64).map(|i| seed.wrapping_add(i)).collect();
    let runs =
        intermittency::run_batch(&plant, &d, &model, &x0, p.horizon, p.dt, p.initial, &seeds)
            .map_err(core("simulate"))?;
    let contracted = runs
        .iter()
        .filter(|r| r.contraction_ratio < p.threshold)
        .count();
    let transient = runs.iter().filter(|r| r.transient_increase).count();

    let mut out = RunOutcome::default();
    out.say(format!(
        "{contracted} of {} runs reach |x(T)| < {}·|x(0)|; {transient} show a transient norm increase",
        runs.len(),
        p.threshold
    ));
    out.say(format!(
        "seed {seed}: |x(T)|/|x(0)| = {:.3e}, {} switches",
        traj.contraction_ratio(),
        path.segments().len() - 1
    ));
    out.add("trajectory.csv", traj.to_csv());
    out.add("batch.csv", intermittency::batch_summary_csv(&runs));
    let norms: Vec<(f64, f64)> = traj.times.iter().copied().zip(traj.norms()).collect();
    out.add(
        "trajectory.svg",
        svg::line_plot(
            &format!("state norm, seed {seed}"),
            "t",
            "|x|",
            &[Series {
                label: "|x(t)|".into(),
                points: norms,
            }],
        ),
    );
    out.add_json(
        "summary.json",
        &json!({
            "runs": runs.len(),
            "threshold": p.threshold,
            "contracted": contracted,
            "transient_increase_runs": transient,
            "stationary_availability": model.stationary_availability(),
            "first_run": {
                "seed": seed,
                "contraction_ratio": traj.contraction_ratio(),
                "segments": path.segments().len(),
                "refined_segments": traj.refined_segments,
                "availability": (0..plant.m()).map(|j| path.availability_fraction(j)).collect::<Vec<_>>(),
            },
        }),
    );
    Ok(out)
}

fn noise_model(m: usize, sigma: &Option<Rows>) -> Result<NoiseModel> {
    match sigma {
        None => Ok(NoiseModel::identity(m)),
        Some(rows) => NoiseModel::new(config::matrix("sigma", rows)?).map_err(core("sigma")),
    }
}

fn uncertainty(p: &UncertaintyParams, ctx: &Context) -> Result<RunOutcome> {
    let seed = ctx.require_seed("uncertainty")?;
    let plant = p.plant.resolve(ctx.base_dir)?;
    let noise = noise_model(plant.m(), &p.sigma)?;
    let alphas = p.alphas.clone().unwrap_or_else(|| vec![p.alpha]);
    if alphas.is_empty() {
        return Err(CliError::Validation("alphas: must not be empty".into()));
    }
    let mut out = RunOutcome::default();
    let mut rows = Vec::new();
    for &alpha in &alphas {
        let d = build_design(&plant, alpha, p.scaling, &p.lift, &None)?;
        let exact = uncertainty::steady_state_error(&plant, &d, &noise).map_err(core("design"))?;
        let mc = uncertainty::monte_carlo_sse(&plant, &d, &noise, p.trials, seed)
            .map_err(core("trials"))?;
        out.say(format!(
            "alpha={alpha}: closed form {:.6}, Monte Carlo {:.6} ± {:.6}",
            exact.mse, mc.mse, mc.stderr
        ));
        rows.push(UncertaintyRow {
            config_id: format!("alpha={alpha}"),
            closed_form_mse: exact.mse,
            empirical_mse: mc.mse,
            stderr: mc.stderr,
        });
    }
    out.add("results.csv", uncertainty::results_csv(&rows));

    if !p.augment.is_empty() {
        let d = build_design(&plant, alphas[0], p.scaling, &p.lift, &None)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = (1..=plant.n()).map(|i| format!("b{i}")).collect();
        header.push("old_mse".into());
        header.push("new_mse".into());
        w.write_record(&header).expect("in-memory write");
        for b in &p.augment {
            let b = config::vector("augment", b, plant.n())?;
            let aug = uncertainty::augment_channel(&plant, &d, &b).map_err(core("augment"))?;
            let mut row: Vec<String> = b.iter().map(|&v| fmt_f64(v)).collect();
            row.push(fmt_f64(aug.old_mse));
            row.push(fmt_f64(aug.new_mse));
            w.write_record(&row).expect("in-memory write");
            out.say(format!(
                "add b = {:?}: mse {:.6} -> {:.6}",
                b.as_slice(),
                aug.old_mse,
                aug.new_mse
            ));
        }
        out.add(
            "augment.csv",
            String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv"),
        );
    }
    Ok(out)
}

fn frames(p: &FramesParams, ctx: &Context) -> Result<RunOutcome> {
    let mut out = RunOutcome::default();
    let mut spectra = Vec::new();
    for &m in &p.circle {
        let b = frames::circle_frame(m).map_err(core("circle"))?;
        let s = FrameSpectrum::of(&b, m as f64 / 2.0);
        out.say(format!(
            "circle m={m}: max eigenvalue {:.9} (m/2 = {})",
            s.max_eigenvalue, s.formula_value
        ));
        out.add(&format!("circle_m{m}.csv"), frames::frame_csv(&b));
        spectra.push(json!({ "name": format!("circle_m{m}"), "spectrum": s }));
    }
    for counts in &p.sphere {
        let spec = FrameSpec::new(counts.clone()).map_err(core("sphere"))?;
        let b = frames::sphere_frame(&spec);
        let s = FrameSpectrum::of(&b, spec.predicted_max_eigenvalue());
        let tag = counts
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join("x");
        out.say(format!(
            "sphere {tag}: m={}, diag(BBᵀ) = {:?}, formula {}",
            s.m, s.gram_diagonal, s.formula_value
        ));
        out.add(&format!("sphere_{tag}.csv"), frames::frame_csv(&b));
        spectra.push(json!({ "name": format!("sphere_{tag}"), "spectrum": s }));
    }
    if let Some(j) = &p.jitter {
        let seed = ctx.require_seed("jittered frame")?;
        for k in 0..j.samples as u64 {
            let b = frames::jittered_circle_frame(j.m, j.scale / j.m as f64, seed.wrapping_add(k))
                .map_err(core("jitter"))?;
            let s = FrameSpectrum::of(&b, j.m as f64 / 2.0);
            spectra.push(json!({ "name": format!("jitter_m{}_{k}", j.m), "spectrum": s }));
        }
        out.say(format!(
            "{} jittered circle frames with m={}",
            j.samples, j.m
        ));
    }
    out.add_json("spectra.json", &json!(spectra));
    Ok(out)
}

fn emulate(p: &EmulateParams, ctx: &Context) -> Result<RunOutcome> {
    let plant = p.plant.resolve(ctx.base_dir)?;
    let h = config::matrix("target.H", &p.target.h)?;
    let target = EmulationTarget::new(
        h,
        p.target.step,
        p.target.alphabet,
        p.target.column_weights.clone(),
    )
    .map_err(core("target"))?;
    let x0 = config::vector("x0", &p.x0, plant.n())?;
    let traj =
        quantize::simulate_emulation(&target, &plant, &x0, p.steps).map_err(core("simulate"))?;
    let tail = (p.steps / 5).max(1);
    let r_cap = traj.terminal_radius(tail);
    let entry = traj.ball_entry(p.ball_radius);

    let mut out = RunOutcome::default();
    out.say(format!(
        "final |x| = {:.4}, terminal radius (last {tail} states) = {r_cap:.4}",
        traj.states.last().map_or(0.0, |x| x.norm())
    ));
    match entry {
        Some(k) => out.say(format!("stays within {} from step {k}", p.ball_radius)),
        None => out.say(format!("does not settle within {}", p.ball_radius)),
    }
    out.add("trajectory.csv", traj.to_csv());

    let mut summary = json!({
        "final_norm": traj.states.last().map_or(0.0, |x| x.norm()),
        "terminal_radius": r_cap,
        "terminal_window": tail,
        "ball_radius": p.ball_radius,
        "ball_entry_step": entry,
        "direction_agreement": traj.direction_agreement(&target.h_matrix, r_cap * 1.05),
    });

    let planar: Option<Vec<(f64, f64)>> =
        (plant.n() == 2).then(|| traj.states.iter().map(|x| (x[0], x[1])).collect());
    match &planar {
        Some(path) => out.add(
            "trajectory.svg",
            svg::line_plot(
                "emulated path",
                "x1",
                "x2",
                &[Series {
                    label: "x(k)".into(),
                    points: path.clone(),
                }],
            ),
        ),
        None => out.add(
            "trajectory.svg",
            svg::line_plot(
                "state norm",
                "k",
                "|x|",
                &[Series {
                    label: "|x(k)|".into(),
                    points: traj
                        .norms()
                        .into_iter()
                        .enumerate()
                        .map(|(k, r)| (k as f64, r))
                        .collect(),
                }],
            ),
        ),
    }

    if let Some(grid) = &p.grid {
        let map = quantize::cell_map(&target, &plant, grid).map_err(core("grid"))?;
        let labels = map.distinct_labels();
        out.say(format!(
            "cell map: {} distinct inputs on {}² nodes",
            labels.len(),
            grid.resolution
        ));
        out.add("cells.csv", map.to_csv());
        out.add(
            "cells.svg",
            svg::cell_raster("selected inputs", &map, planar.as_deref()),
        );
        summary["cell_labels"] = json!(labels);
        if p.compare_gated {
            let gated_target = EmulationTarget {
                alphabet: Alphabet::PmOneOrOff,
                ..target.clone()
            };
            let gated = quantize::cell_map(&gated_target, &plant, grid).map_err(core("grid"))?;
            let not_worse = gated
                .residuals
                .iter()
                .zip(&map.residuals)
                .filter(|(g, u)| **g <= **u + 1e-12)
                .count();
            out.say(format!(
                "gated residual <= ungated at {not_worse} of {} nodes",
                map.residuals.len()
            ));
            out.add("gated_cells.csv", gated.to_csv());
            summary["gated_not_worse_nodes"] = json!(not_worse);
            summary["grid_nodes"] = json!(map.residuals.len());
        }
    }
    out.add_json("summary.json", &summary);
    Ok(out)
}
