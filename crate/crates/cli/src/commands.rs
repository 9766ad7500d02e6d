//! Subcommand implementations.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use esh_core::continuation::{
    continue_branch, continue_from_guess, detect_bifurcations, pattern_branch, snaking_region, trace_rung, Branch,
    BranchError, BranchKind, BranchLabel, BranchPoint, Direction, EventOptions, EventType, Termination,
};
use esh_core::diagnostics::{interior_wavenumber, l2_norm, maxwell_point, wavenumber_loop, wavenumber_segments};
use esh_core::evolve::{detect_oscillon, run as evolve_run, self_convergence, Scheme};
use esh_core::io::{self, Profile, Provenance};
use esh_core::normal_form::{normal_form_report, q2_of};
use esh_core::stability::{compute_spectrum_with, count_unstable};
use esh_core::steady::{detect_parity, newton_stationary, newton_tolerance, wnl_seed, SteadyState, StateParity};
use esh_core::{Field, Grid};

use crate::config::ExperimentConfig;
use crate::axes::{Range, Var};
use crate::{Cli, CliError, Command, ContinueArgs, EvolveArgs, MaxwellArgs, ModelArgs, NfArgs, StabilityArgs, WavenumberArgs};

fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Usage(e.into())
}

/// Everything a command needs besides its own flags.
struct Context_ {
    cfg: ExperimentConfig,
    timestamp: String,
}

impl Context_ {
    fn provenance(&self, extra: serde_json::Value) -> Provenance {
        let config = json!({ "config": serde_json::to_value(&self.cfg).expect("config serializes"), "args": extra });
        Provenance::new(&self.timestamp, config.to_string())
    }

    fn out(&self) -> Result<&Path> {
        self.cfg.prepare_output()
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn apply_model(cfg: &mut ExperimentConfig, m: &ModelArgs) {
    let s = &mut cfg.model;
    if let Some(v) = m.r {
        s.r = v;
    }
    if let Some(v) = m.b {
        s.b = v;
    }
    if let Some(v) = m.alpha {
        s.alpha = v;
    }
    if let Some(v) = m.beta {
        s.beta = v;
    }
    if let Some(v) = m.length {
        cfg.grid.length = v;
    }
    if let Some(v) = m.n {
        cfg.grid.n = v;
    }
}

/// Parses arguments into the layered config and runs the command.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref()).map_err(usage)?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    match &cli.command {
        Command::Nf(_) | Command::Stability(_) | Command::Maxwell(_) => {}
        Command::Continue(a) => {
            apply_model(&mut cfg, &a.model);
            let c = &mut cfg.continuation;
            if let Some(v) = a.folds {
                c.folds = v;
            }
            if let Some(v) = a.ds {
                c.ds = v;
            }
            if let Some(v) = a.ds_max {
                c.ds_max = v;
            }
            if let Some(v) = a.max_points {
                c.max_points = v;
            }
        }
        Command::Evolve(a) => {
            apply_model(&mut cfg, &a.model);
            let e = &mut cfg.evolve;
            if let Some(v) = a.dt {
                e.dt = v;
            }
            if let Some(v) = a.t_end {
                e.t_end = v;
            }
            if let Some(v) = &a.scheme {
                e.scheme = v.clone();
            }
            if let Some(v) = a.record_stride {
                e.record_stride = v;
            }
            if let Some(v) = a.perturbation {
                e.perturbation = v;
            }
            if let Some(v) = a.noise {
                e.noise = v;
            }
            if let Some(v) = a.seed {
                e.seed = v;
            }
        }
        Command::Wavenumber(a) => {
            apply_model(&mut cfg, &a.model);
            if let Some(v) = a.folds {
                cfg.continuation.folds = v;
            }
        }
    }
    if let Command::Stability(a) = &cli.command {
        if let Some(v) = a.n_eigs {
            cfg.stability.n_eigs = v;
        }
        if let Some(v) = a.stride {
            cfg.stability.stride = v;
        }
    }
    if let Command::Maxwell(a) = &cli.command {
        if let Some(b) = a.b {
            cfg.model.b = b;
        }
    }
    cfg.validate().map_err(usage)?;
    let ctx = Context_ { cfg, timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true) };
    match cli.command {
        Command::Nf(a) => cmd_nf(&ctx, &a),
        Command::Continue(a) => cmd_continue(&ctx, &a),
        Command::Stability(a) => cmd_stability(&ctx, &a),
        Command::Evolve(a) => cmd_evolve(&ctx, &a),
        Command::Wavenumber(a) => cmd_wavenumber(&ctx, &a),
        Command::Maxwell(a) => cmd_maxwell(&ctx, &a),
    }
}

fn cmd_nf(ctx: &Context_, a: &NfArgs) -> Result<(), CliError> {
    if !a.surface {
        let (b, alpha, beta) = (a.b.unwrap(), a.alpha.unwrap(), a.beta.unwrap());
        let report = normal_form_report(b, alpha, beta).map_err(usage)?;
        print_json(&serde_json::to_value(report).expect("json"));
        return Ok(());
    }
    let fixed = |var: Var| -> Option<f64> {
        match a.slice {
            Some(s) if s.var == var => Some(s.value),
            _ => match var {
                Var::B => a.b,
                Var::Alpha => a.alpha,
                Var::Beta => a.beta,
            },
        }
    };
    let range = |var: Var| -> Option<Range> {
        match var {
            Var::B => a.b_range,
            Var::Alpha => a.alpha_range,
            Var::Beta => a.beta_range,
        }
    };
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for var in [Var::B, Var::Alpha, Var::Beta] {
        match (fixed(var), range(var)) {
            (Some(_), Some(_)) => return Err(usage(anyhow!("{var} is both fixed and ranged"))),
            (Some(v), None) => axes.push(vec![v]),
            (None, Some(r)) => axes.push(r.values().collect()),
            (None, None) => return Err(usage(anyhow!("{var} needs a value, a slice or a range"))),
        }
    }
    if axes.iter().map(|v| v.len()).product::<usize>() > crate::axes::MAX_SAMPLES {
        return Err(usage(anyhow!("surface table too large")));
    }
    let prov = ctx.provenance(json!({ "command": "nf", "surface": true }));
    let stdout = std::io::stdout();
    let mut w = BufWriter::new(stdout.lock());
    prov.write(&mut w)?;
    writeln!(w, "b,alpha,beta,q2,q4,regime")?;
    for &b in &axes[0] {
        for &alpha in &axes[1] {
            for &beta in &axes[2] {
                let nf = normal_form_report(b, alpha, beta)?;
                debug_assert_eq!(nf.q2, q2_of(b, alpha, beta));
                writeln!(w, "{b},{alpha},{beta},{},{},{:?}", nf.q2, nf.q4, nf.regime)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn grid_of(cfg: &ExperimentConfig) -> Result<std::sync::Arc<Grid>> {
    Ok(Grid::new(cfg.grid.length, cfg.grid.n)?)
}

fn parse_label(s: &str) -> Result<BranchLabel, CliError> {
    match s.trim() {
        "L0" | "l0" => Ok(BranchLabel::L0),
        "L1" | "l1" => Ok(BranchLabel::L1),
        other => Err(usage(anyhow!("unknown branch '{other}' (expected L0 or L1)"))),
    }
}

/// Continues L0 (`phi = 0`) or L1 (`phi = pi`) from the small-amplitude seed
/// at `cfg.model.r` towards more negative `r`.
fn seeded_branch(cfg: &ExperimentConfig, label: BranchLabel) -> Result<Branch> {
    let p = cfg.params();
    let phi = if label == BranchLabel::L1 { std::f64::consts::PI } else { 0.0 };
    let guess = wnl_seed(&grid_of(cfg)?, &p, phi)?;
    let mut opts = cfg.continuation_options();
    opts.direction = Direction::DecreasingR;
    finish(continue_from_guess(&guess, &p, label, &opts))
}

/// A stalled continuation still yields its partial branch, with a warning.
fn finish(r: Result<Branch, BranchError>) -> Result<Branch> {
    match r {
        Ok(b) => Ok(b),
        Err(BranchError::Stalled { error, partial }) => {
            eprintln!("warning: {} stalled ({error}); keeping {} points", partial.label, partial.points.len());
            Ok(*partial)
        }
        Err(e) => Err(e.into()),
    }
}

fn event_options(cfg: &ExperimentConfig) -> EventOptions {
    EventOptions {
        stride: cfg.stability.stride,
        sigma_tol: cfg.stability.sigma_tol,
        spectrum: cfg.spectrum_options(),
        ..EventOptions::default()
    }
}

fn profile_of(branch: &Branch, p: &BranchPoint) -> Profile {
    Profile { params: branch.params.with_r(p.r), c: p.state.c, u: p.state.u.clone() }
}

fn profiles_dir(out: &Path, stem: &str) -> PathBuf {
    out.join(format!("{stem}_profiles"))
}

fn write_branch_files(ctx: &Context_, branch: &Branch, stem: &str, save_all: bool) -> Result<PathBuf> {
    let out = ctx.out()?;
    let prov = ctx.provenance(json!({ "branch": stem }));
    let path = out.join(format!("{stem}.csv"));
    let mut w = create(&path)?;
    io::write_branch(&mut w, &prov, branch)?;
    w.flush()?;
    let dir = profiles_dir(out, stem);
    for (i, p) in branch.points.iter().enumerate() {
        if save_all || p.event.is_some() {
            let mut w = create(&dir.join(format!("{i}.dat")))?;
            io::write_profile(&mut w, &prov, &profile_of(branch, p))?;
            w.flush()?;
        }
    }
    Ok(path)
}

fn branch_summary(branch: &Branch, file: &Path) -> serde_json::Value {
    let folds: Vec<f64> = branch.folds().iter().map(|p| p.r).collect();
    let events: Vec<serde_json::Value> = branch
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| matches!(p.event, Some(EventType::Pitchfork | EventType::Hopf | EventType::RungEnd)))
        .map(|(i, p)| json!({ "index": i, "r": p.r, "event": format!("{:?}", p.event.unwrap()), "c": p.state.c }))
        .collect();
    let region = snaking_region(branch).ok();
    json!({
        "label": branch.label.to_string(),
        "file": file.display().to_string(),
        "points": branch.points.len(),
        "termination": format!("{:?}", branch.termination),
        "folds": folds,
        "events": events,
        "snaking_region": region,
        "max_abs_c": branch.points.iter().fold(0.0f64, |m, p| m.max(p.state.c.abs())),
    })
}

fn cmd_continue(ctx: &Context_, a: &ContinueArgs) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let labels: Vec<BranchLabel> = a.branch.iter().map(|s| parse_label(s)).collect::<Result<_, _>>()?;
    let branches: Vec<Branch> = if let Some(path) = &a.resume {
        let prof = read_profile(path).map_err(usage)?;
        let enforce = detect_parity(&prof.u) == StateParity::Even;
        let seed = newton_stationary(&prof.u, &prof.params, enforce)?;
        let mut opts = cfg.continuation_options();
        opts.direction = Direction::IncreasingNorm;
        let label = labels.first().cloned().unwrap_or(BranchLabel::L0);
        vec![finish(continue_branch(&seed, &prof.params, label, &opts))?]
    } else {
        labels.par_iter().map(|l| seeded_branch(cfg, l.clone())).collect::<Result<_>>()?
    };
    let annotate = a.stability || a.rungs;
    let mut branches = branches;
    if annotate {
        let ev = event_options(cfg);
        branches
            .par_iter_mut()
            .filter(|b| b.kind == BranchKind::Even)
            .try_for_each(|b| detect_bifurcations(b, &ev))
            ?;
    }
    let mut summary = Vec::new();
    for b in &branches {
        let stem = b.label.to_string();
        let file = write_branch_files(ctx, b, &stem, a.save_all)?;
        summary.push(branch_summary(b, &file));
    }
    if a.rungs {
        let mut jobs = Vec::new();
        for b in &branches {
            for (k, i) in b.event_indices(EventType::Pitchfork).into_iter().enumerate() {
                jobs.push((b, k, i));
            }
        }
        let opts = {
            let mut o = cfg.continuation_options();
            o.ds = o.ds.min(0.01);
            o.ds_max = o.ds_max.min(0.05);
            o.max_folds = None;
            o
        };
        let rungs: Vec<(String, Result<Branch>)> = jobs
            .par_iter()
            .map(|&(b, k, i)| (format!("{}_rung{k}", b.label), finish(trace_rung(b, i, k, &opts))))
            .collect();
        for (stem, r) in rungs {
            match r {
                Ok(rung) => {
                    let file = write_branch_files(ctx, &rung, &stem, a.save_all)?;
                    summary.push(branch_summary(&rung, &file));
                }
                Err(e) => eprintln!("warning: {stem} failed: {e:#}"),
            }
        }
    }
    print_json(&json!({ "branches": summary }));
    Ok(())
}

fn read_profile(path: &Path) -> Result<Profile> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    io::read_profile(BufReader::new(f)).with_context(|| format!("in {}", path.display()))
}

fn steady_from_profile(prof: &Profile) -> SteadyState {
    let res = esh_core::steady::travelling_residual(&prof.u, prof.c, &prof.params)
        .map(|f| f.max_abs())
        .unwrap_or(f64::INFINITY);
    SteadyState { parity: detect_parity(&prof.u), u: prof.u.clone(), c: prof.c, residual_norm: res, residual_history: vec![res] }
}

fn cmd_stability(ctx: &Context_, a: &StabilityArgs) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let out = ctx.out()?;
    if let Some(path) = &a.profile {
        let prof = read_profile(path).map_err(usage)?;
        let state = steady_from_profile(&prof);
        if state.residual_norm > 10.0 * newton_tolerance(&state.u) {
            eprintln!("warning: profile residual {:.3e} is above the Newton tolerance", state.residual_norm);
        }
        let spectrum = compute_spectrum_with(&state, &prof.params, &cfg.spectrum_options())?;
        let counts = count_unstable(&spectrum, cfg.stability.sigma_tol);
        let prov = ctx.provenance(json!({ "command": "stability", "profile": path.display().to_string() }));
        let file = out.join("spectrum.csv");
        let mut w = create(&file)?;
        io::write_spectra(&mut w, &prov, &[(0, prof.params.r, &spectrum)])?;
        w.flush()?;
        let leading: Vec<serde_json::Value> =
            spectrum.pairs.iter().take(6).map(|e| json!({ "re": e.sigma.re, "im": e.sigma.im, "parity": format!("{:?}", e.parity), "goldstone": e.goldstone })).collect();
        print_json(&json!({ "counts": counts, "leading": leading, "file": file.display().to_string() }));
        return Ok(());
    }
    let path = a.branch.as_ref().expect("clap requires one of profile/branch");
    let rows = io::read_branch(File::open(path).with_context(|| format!("cannot open {}", path.display()))?)
        .with_context(|| format!("in {}", path.display()))
        .map_err(usage)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).ok_or_else(|| usage(anyhow!("bad branch file name")))?;
    let dir = profiles_dir(path.parent().unwrap_or(Path::new(".")), stem);
    let mut points = Vec::new();
    let mut params = None;
    for row in &rows {
        let file = dir.join(format!("{}.dat", row.index));
        let prof = read_profile(&file)
            .with_context(|| "branch stability needs a profile per point (run continue with --save-all)")
            .map_err(usage)?;
        params.get_or_insert(prof.params);
        let state = steady_from_profile(&prof);
        points.push(BranchPoint {
            r: prof.params.r,
            norm: l2_norm(&state.u),
            state,
            event: row.event.filter(|e| *e == EventType::Fold),
            counts: None,
        });
    }
    let params = params.ok_or_else(|| usage(anyhow!("branch file has no rows")))?;
    let even = points.iter().all(|p| p.state.c == 0.0 && p.state.parity == StateParity::Even);
    if !even {
        return Err(usage(anyhow!("stability annotation needs an even stationary branch")));
    }
    let mut branch = Branch {
        label: BranchLabel::Other(stem.to_string()),
        kind: BranchKind::Even,
        params,
        points,
        termination: Termination::MaxPoints,
    };
    detect_bifurcations(&mut branch, &event_options(cfg))?;
    let file = write_branch_files(ctx, &branch, &format!("{stem}_annotated"), false)?;
    let prov = ctx.provenance(json!({ "command": "stability", "branch": path.display().to_string() }));
    let spectra: Vec<(usize, f64, esh_core::stability::Spectrum)> = branch
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| matches!(p.event, Some(EventType::Pitchfork | EventType::Hopf)))
        .map(|(i, p)| Ok((i, p.r, compute_spectrum_with(&p.state, &params.with_r(p.r), &cfg.spectrum_options())?)))
        .collect::<Result<_, esh_core::Error>>()
        ?;
    let spectra_file = out.join(format!("{stem}_spectra.csv"));
    let mut w = create(&spectra_file)?;
    let refs: Vec<(usize, f64, &esh_core::stability::Spectrum)> = spectra.iter().map(|(i, r, s)| (*i, *r, s)).collect();
    io::write_spectra(&mut w, &prov, &refs)?;
    w.flush()?;
    print_json(&branch_summary(&branch, &file));
    Ok(())
}

fn default_bump(grid: std::sync::Arc<Grid>) -> Field {
    Field::from_fn(grid, |x| 1.2 / (0.5 * x).cosh() * x.cos())
}

fn cmd_evolve(ctx: &Context_, a: &EvolveArgs) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let e = &cfg.evolve;
    let (p, mut u0) = match &a.profile {
        Some(path) => {
            let prof = read_profile(path).map_err(usage)?;
            let mut p = prof.params;
            if let Some(r) = a.model.r {
                p = p.with_r(r);
            }
            (p, prof.u)
        }
        None => (cfg.params(), default_bump(grid_of(cfg)?)),
    };
    if a.convergence {
        let g = u0.grid().clone();
        let start = Field::from_fn(g, |x| 0.6 / (x / 6.0).cosh() * x.cos());
        let mut report = Vec::new();
        for scheme in [Scheme::Etdrk4, Scheme::Imex2] {
            let (errors, orders) = self_convergence(&start, &p, 4.0, e.dt, scheme)?;
            report.push(json!({ "scheme": format!("{scheme:?}"), "dt": [e.dt, e.dt / 2.0, e.dt / 4.0], "errors": errors, "orders": orders, "expected": scheme.order() }));
        }
        print_json(&json!({ "convergence": report }));
        return Ok(());
    }
    if e.perturbation > 0.0 {
        let state = newton_stationary(&u0, &p, detect_parity(&u0) == StateParity::Even)?;
        let spectrum = compute_spectrum_with(&state, &p, &cfg.spectrum_options())?;
        let mode = spectrum
            .pairs
            .iter()
            .filter(|m| m.sigma.im.abs() > 1e-8)
            .max_by(|x, y| x.sigma.re.total_cmp(&y.sigma.re))
            .or_else(|| spectrum.leading())
            .ok_or_else(|| anyhow!("no eigenmode to perturb along"))?;
        let v = Field::new(state.u.grid().clone(), mode.vector.iter().map(|z| z.re).collect())?;
        let nv = l2_norm(&v);
        u0 = state.u.axpby(1.0, &v, e.perturbation / nv)?;
    }
    if e.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(e.seed);
        let noisy: Vec<f64> = u0.values().iter().map(|v| v + e.noise * rng.gen_range(-1.0..1.0)).collect();
        u0 = Field::new(u0.grid().clone(), noisy)?;
    }
    let ecfg = cfg.evolve_config().map_err(usage)?;
    let out = ctx.out()?;
    let prov = ctx.provenance(json!({ "command": "evolve", "profile": a.profile.as_ref().map(|p| p.display().to_string()) }));
    let (traj, failure) = match evolve_run(&u0, &p, &ecfg) {
        Ok(t) => (t, None),
        Err(err) => (err.partial, Some(err.source)),
    };
    let mut w = create(&out.join("monitors.csv"))?;
    io::write_monitors(&mut w, &prov, &traj.monitors)?;
    w.flush()?;
    let mut w = create(&out.join("spacetime.csv"))?;
    io::write_space_time(&mut w, &prov, &traj)?;
    w.flush()?;
    let mut w = create(&out.join("final.dat"))?;
    io::write_profile(&mut w, &prov, &Profile { params: p, c: 0.0, u: traj.last().clone() })?;
    w.flush()?;
    if let Some(err) = failure {
        return Err(CliError::Runtime(anyhow!(err).context("evolution failed; partial output written")));
    }
    let osc = detect_oscillon(&traj, 0.5 * ecfg.t_end).ok();
    let energy_monotone = traj
        .monitors
        .windows(2)
        .all(|w| match (w[0].energy, w[1].energy) {
            (Some(a), Some(b)) => b <= a + 1e-10 * (1.0 + a.abs()),
            _ => true,
        });
    print_json(&json!({
        "t_end": ecfg.t_end,
        "steps": traj.monitors.len() - 1,
        "oscillon": osc,
        "energy_non_increasing": p.is_variational().then_some(energy_monotone),
        "out": out.display().to_string(),
    }));
    Ok(())
}

fn cmd_wavenumber(ctx: &Context_, a: &WavenumberArgs) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    if let Some(path) = &a.profile {
        let prof = read_profile(path).map_err(usage)?;
        print_json(&json!({ "k": interior_wavenumber(&prof.u) }));
        return Ok(());
    }
    let label = parse_label(&a.branch)?;
    let branch = seeded_branch(cfg, label)?;
    let segments = wavenumber_segments(&branch);
    let out = ctx.out()?;
    let prov = ctx.provenance(json!({ "command": "wavenumber", "branch": a.branch }));
    let file = out.join(format!("{}_wavenumber.csv", branch.label));
    let mut w = create(&file)?;
    io::write_wavenumbers(&mut w, &prov, &segments)?;
    w.flush()?;
    let report = wavenumber_loop(&branch).ok();
    print_json(&json!({ "loop": report, "segments": segments.len(), "file": file.display().to_string() }));
    Ok(())
}

fn cmd_maxwell(ctx: &Context_, _a: &MaxwellArgs) -> Result<(), CliError> {
    let p = ctx.cfg.params();
    if p.alpha != 0.0 || p.beta != 0.0 {
        return Err(usage(anyhow!("the Maxwell point is only defined for alpha = beta = 0")));
    }
    let m = maxwell_point(&p)?;
    let branch = pattern_branch(&p, (-2.0, 0.05), 4000)?;
    let out = ctx.out()?;
    let prov = ctx.provenance(json!({ "command": "maxwell" }));
    let file = out.join("pattern.csv");
    let mut w = create(&file)?;
    prov.write(&mut w)?;
    writeln!(w, "r,k,amplitude,energy_density,fold")?;
    for q in &branch.points {
        writeln!(w, "{},{},{},{},{}", q.r, q.k, q.amplitude, q.energy_density, q.fold)?;
    }
    w.flush()?;
    print_json(&json!({ "b": p.b, "r_maxwell": m.r, "k": m.k, "file": file.display().to_string() }));
    Ok(())
}
