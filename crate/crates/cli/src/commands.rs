use std::path::{Path, PathBuf};

use rand::Rng as _;

use symphony_core::harness::{
    bench_overhead, bench_table, compare_modes, comparison_table, evaluate, evaluate_split,
    generate_task, join_values, mean_degradation, metrics_table, num, summarize_comparison, train, MetricsRow,
    RunManifest, SyntheticTask, Table,
};
use symphony_core::matrix_io::read_matrix;
use symphony_core::moe::{load_checkpoint, MoeLayer};
use symphony_core::rng::{derive_seed, rng_from};
use symphony_core::social_graph::{estimate_overhead, load_snapshot, read_snapshot};
use symphony_core::theory::{
    calibrate_l_tilde, check_prop1, check_theorem1, convergence_fit, oracle_coselect_measure, random_sinkhorn_adjacency,
    NoiseKind, OracleMode, Prop1Report, RegionSpec, Theorem1Config,
};
use symphony_core::{AdjacencyState, Error};

use crate::config::{digest, load_run_manifest, BenchManifest, OracleChoice, Prop1Manifest, Theorem1Manifest};
use crate::rundir::RunDir;
use crate::Failure;

/// The bundled 2x2 adjacency used by `verify-prop1` without a manifest.
pub const PROP1_FIXTURE: &str = include_str!("../fixtures/prop1_2x2.txt");

const ORACLE_STREAM: u64 = 1 << 40;
const CONVERGENCE_STREAM: u64 = 1 << 41;

pub struct Ctx {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

impl Ctx {
    fn out(&self) -> &Path {
        self.out.as_deref().unwrap_or(Path::new("runs"))
    }

    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn run_id(command: &str, seed: u64, hash: &str) -> String {
    format!("{command}-s{seed}-{}", &hash[..12])
}

/// Runs `body` in a fresh run directory and commits or fails it.
fn in_run_dir<T>(
    ctx: &Ctx,
    command: &str,
    seed: u64,
    manifest_text: &str,
    body: impl FnOnce(&mut RunDir) -> symphony_core::Result<T>,
) -> Result<(PathBuf, T), Failure> {
    let hash = digest(manifest_text);
    let mut run = RunDir::create(ctx.out(), &run_id(command, seed, &hash))?;
    ctx.note(format!("{command}: staging in {}", run.path().display()));
    let result = run.write("manifest.toml", manifest_text).and_then(|_| body(&mut run));
    match result {
        Ok(v) => {
            let dir = run.commit(command, seed, &hash)?;
            println!("run directory: {}", dir.display());
            Ok((dir, v))
        }
        Err(Error::Argument(msg) | Error::Dimension(msg) | Error::Parse(msg)) => Err(Failure::Invalid(msg)),
        Err(Error::Divergence { message, dump }) => Err(run.fail(&message, Some(&dump))),
        Err(e) => Err(run.fail(&e.to_string(), None)),
    }
}

fn arg(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}

pub fn cmd_train(ctx: &Ctx) -> Result<(), Failure> {
    let m = load_run_manifest(ctx.manifest.as_deref(), "train", ctx.seed)?;
    let (_, last) = in_run_dir(ctx, "train", m.seed, &m.to_toml(), |run| {
        let out = train(&m, Some(run.path()))?;
        run.note_csv("train_curve");
        Ok(out.curve.last().cloned())
    })?;
    if let Some(r) = last {
        println!(
            "epoch {}: train loss {:.6}, valid loss {:.6}, entropy ratio {:.4}, rho {:.4}",
            r.epoch, r.train_loss, r.valid_loss, r.entropy_ratio, r.rho
        );
    }
    Ok(())
}

/// The trained layer: from a checkpoint when given, otherwise trained into the run directory.
fn trained_layer(m: &RunManifest, checkpoint: Option<&Path>, run: &mut RunDir) -> symphony_core::Result<(MoeLayer, SyntheticTask)> {
    match checkpoint {
        Some(dir) => {
            let (layer, cm) = load_checkpoint(dir)?;
            if (cm.experts, cm.k, cm.dim, cm.mode) != (m.experts, m.k, m.task.dim, m.mode) {
                return Err(arg(format!(
                    "checkpoint {} does not match the manifest (experts {}, K {}, dim {}, mode {:?})",
                    dir.display(),
                    cm.experts,
                    cm.k,
                    cm.dim,
                    cm.mode
                )));
            }
            Ok((layer, generate_task(&m.task, m.seed)?))
        }
        None => {
            let out = train(m, Some(run.path()))?;
            run.note_csv("train_curve");
            Ok((out.layer, out.task))
        }
    }
}

fn checked_checkpoint(checkpoint: Option<&Path>) -> Result<(), Failure> {
    match checkpoint {
        Some(p) if !p.is_dir() => Err(Failure::Invalid(format!("checkpoint directory {} not found", p.display()))),
        _ => Ok(()),
    }
}

pub fn cmd_eval(ctx: &Ctx, checkpoint: Option<&Path>) -> Result<(), Failure> {
    let m = load_run_manifest(ctx.manifest.as_deref(), "eval", ctx.seed)?;
    checked_checkpoint(checkpoint)?;
    let (_, rows) = in_run_dir(ctx, "eval", m.seed, &m.to_toml(), |run| {
        let (layer, task) = trained_layer(&m, checkpoint, run)?;
        let seeds = [m.evaluation_seeds().first().copied().unwrap_or(m.seed)];
        let mut rows = evaluate_split(&layer, &task, &task.valid, "valid", &[0.0], &seeds, m.noise)?;
        rows.extend(evaluate(&layer, &task, &[0.0], &seeds, m.noise)?);
        run.table(&metrics_table(&rows, &m.hash()), "metrics")?;
        Ok(rows)
    })?;
    for r in rows {
        println!("{}: loss {:.6}, entropy ratio {:.4}, cv {:.4}", r.split, r.loss, r.entropy_ratio, r.cv);
    }
    Ok(())
}

fn degradation_table(rows: &[MetricsRow], noise: NoiseKind) -> Table {
    let mut t = Table::new(&["epsilon_rel", "noise", "mean_degradation"]);
    for (e, d) in mean_degradation(rows) {
        t.push(vec![num(e), noise.to_string(), num(d)]);
    }
    t
}

pub fn cmd_attack_eval(
    ctx: &Ctx,
    checkpoint: Option<&Path>,
    noise: Option<NoiseKind>,
    compare_seeds: Option<usize>,
) -> Result<(), Failure> {
    let mut m = load_run_manifest(ctx.manifest.as_deref(), "attack-eval", ctx.seed)?;
    checked_checkpoint(checkpoint)?;
    if let Some(n) = noise {
        m.noise = n;
    }
    if !m.epsilon_grid.contains(&0.0) {
        return Err(Failure::Invalid("epsilon_grid must include 0 so degradation has a clean reference".into()));
    }
    if let Some(count) = compare_seeds {
        return compare(ctx, &m, checkpoint, count);
    }
    let (_, degradation) = in_run_dir(ctx, "attack-eval", m.seed, &m.to_toml(), |run| {
        let (layer, task) = trained_layer(&m, checkpoint, run)?;
        let rows = evaluate(&layer, &task, &m.epsilon_grid, &m.evaluation_seeds(), m.noise)?;
        run.table(&metrics_table(&rows, &m.hash()), "metrics")?;
        run.table(&degradation_table(&rows, m.noise), "degradation")?;
        Ok(mean_degradation(&rows))
    })?;
    for (e, d) in degradation {
        println!("epsilon {e} x diameter ({}): mean degradation {d:.6}", m.noise);
    }
    Ok(())
}

/// Baseline against symphony on `count` consecutive seeds from the manifest seed.
fn compare(ctx: &Ctx, m: &RunManifest, checkpoint: Option<&Path>, count: usize) -> Result<(), Failure> {
    if checkpoint.is_some() {
        return Err(Failure::Invalid("--compare-seeds trains both modes and takes no checkpoint".into()));
    }
    if count == 0 {
        return Err(Failure::Invalid("--compare-seeds must be at least 1".into()));
    }
    let eps = m.epsilon_grid.iter().copied().fold(0.0, f64::max);
    if eps == 0.0 {
        return Err(Failure::Invalid("epsilon_grid needs a positive radius to compare at".into()));
    }
    let seeds: Vec<u64> = (0..count as u64).map(|i| m.seed.wrapping_add(i)).collect();
    let text = format!("{}\n# compare-seeds = {count}\n", m.to_toml());
    let (_, s) = in_run_dir(ctx, "attack-eval", m.seed, &text, |run| {
        let rows = compare_modes(m, &seeds, eps)?;
        run.table(&comparison_table(&rows), "comparison")?;
        let s = summarize_comparison(&rows);
        let mut t = Table::new(&[
            "seeds",
            "epsilon_rel",
            "mean_baseline_degradation",
            "mean_symphony_degradation",
            "symphony_wins",
            "untied",
            "sign_test_p",
            "mean_baseline_entropy",
            "mean_symphony_entropy",
        ]);
        t.push(vec![
            s.seeds.to_string(),
            num(eps),
            num(s.mean_baseline_degradation),
            num(s.mean_symphony_degradation),
            s.symphony_wins.to_string(),
            s.untied.to_string(),
            num(s.sign_test_p),
            num(s.mean_baseline_entropy),
            num(s.mean_symphony_entropy),
        ]);
        run.table(&t, "comparison_summary")?;
        Ok(s)
    })?;
    println!(
        "degradation at {eps} x diameter: symphony {:.6} vs baseline {:.6}; symphony better on {}/{} seeds (sign test p = {:.4})",
        s.mean_symphony_degradation, s.mean_baseline_degradation, s.symphony_wins, s.untied, s.sign_test_p
    );
    println!("validation entropy ratio: symphony {:.4} vs baseline {:.4}", s.mean_symphony_entropy, s.mean_baseline_entropy);
    Ok(())
}

pub fn cmd_verify_theorem1(ctx: &Ctx) -> Result<(), Failure> {
    let cfg = Theorem1Manifest::load(ctx.manifest.as_deref(), ctx.seed)?;
    let spec = match &cfg.regions {
        Some(p) => RegionSpec::load(p).map_err(|e| Failure::Invalid(format!("{}: {e}", p.display())))?,
        None => RegionSpec::two_circle_fixture(),
    };
    for &(j, k) in &cfg.pairs {
        spec.check_pair(j, k).map_err(|e| Failure::Invalid(e.to_string()))?;
    }
    let oracle = match cfg.oracle.unwrap_or(if spec.dim == 2 { OracleChoice::Analytic } else { OracleChoice::MonteCarlo }) {
        OracleChoice::Analytic if spec.dim != 2 => {
            return Err(Failure::Invalid("the analytic oracle needs two-dimensional regions".into()))
        }
        OracleChoice::Analytic => OracleMode::Analytic2D,
        OracleChoice::MonteCarlo => OracleMode::monte_carlo(derive_seed(cfg.seed, ORACLE_STREAM)),
    };
    let largest = cfg.epsilon.iter().copied().fold(0.0, f64::max);
    let eps_ref = cfg.epsilon_ref.unwrap_or(largest);

    let (_, summary) = in_run_dir(ctx, "verify-theorem1", cfg.seed, &cfg.to_toml(), |run| {
        let mut regions = Vec::new();
        spec.write(&mut regions)?;
        run.write("regions.txt", std::str::from_utf8(&regions).expect("ascii"))?;

        let mut cal_table = Table::new(&["pair", "epsilon_ref", "expansion_rate"]);
        let l_tilde = if eps_ref > 0.0 {
            let cal = calibrate_l_tilde(&spec, &cfg.pairs, eps_ref, oracle)?;
            for ((j, k), rate) in &cal.per_pair {
                cal_table.push(vec![format!("{j}-{k}"), num(eps_ref), num(*rate)]);
            }
            cal.l_tilde
        } else {
            0.0
        };
        run.table(&cal_table, "calibration")?;

        let mut trials = Table::new(&[
            "noise", "pair", "N", "epsilon", "alpha", "l_tilde", "trial", "a_jk", "mu", "gamma", "violated",
        ]);
        let mut summary = Table::new(&[
            "noise", "N", "epsilon", "alpha", "l_tilde", "gamma", "trials", "violation_rate", "allowed_rate", "max_error",
            "holds",
        ]);
        let mut cell = 0u64;
        for &eps in &cfg.epsilon {
            // noise kind is irrelevant without contamination
            let kinds = if eps == 0.0 { &cfg.noise[..1] } else { &cfg.noise[..] };
            for &noise in kinds {
                let tc = Theorem1Config {
                    n: cfg.n,
                    epsilon: eps,
                    alpha: cfg.alpha,
                    trials: cfg.trials,
                    l_tilde,
                    noise,
                    seed: derive_seed(cfg.seed, cell),
                };
                cell += 1;
                let rep = check_theorem1(&spec, &cfg.pairs, &tc, oracle)?;
                for r in &rep.results {
                    trials.push(vec![
                        noise.to_string(),
                        format!("{}-{}", r.pair.0, r.pair.1),
                        r.n.to_string(),
                        num(r.epsilon),
                        num(r.alpha),
                        num(r.l_tilde),
                        r.trial.to_string(),
                        num(r.a_jk),
                        num(r.mu),
                        num(r.gamma),
                        u8::from(r.violated).to_string(),
                    ]);
                }
                let gamma = rep.results.first().map_or(f64::NAN, |r| r.gamma);
                summary.push(vec![
                    noise.to_string(),
                    cfg.n.to_string(),
                    num(eps),
                    num(cfg.alpha),
                    num(l_tilde),
                    num(gamma),
                    rep.results.len().to_string(),
                    num(rep.violation_rate),
                    num(rep.allowed_rate),
                    num(rep.max_error),
                    u8::from(rep.holds()).to_string(),
                ]);
            }
        }
        run.table(&trials, "theorem1")?;
        run.table(&summary, "theorem1_summary")?;

        if cfg.convergence_n.len() >= 2 {
            let mut conv = Table::new(&["pair", "N", "max_error", "slope"]);
            for (p, &(j, k)) in cfg.pairs.iter().enumerate() {
                let mu = oracle_coselect_measure(&spec, j, k, oracle)?.value;
                let seed = derive_seed(cfg.seed, CONVERGENCE_STREAM + p as u64);
                let fit = convergence_fit(&spec, j, k, &cfg.convergence_n, cfg.convergence_trials, mu, seed)?;
                for (n, e) in fit.ns.iter().zip(&fit.max_errors) {
                    conv.push(vec![format!("{j}-{k}"), n.to_string(), num(*e), num(fit.slope)]);
                }
            }
            run.table(&conv, "convergence")?;
        }
        Ok(summary)
    })?;
    for r in &summary.rows {
        println!(
            "{:<14} eps {:<6} violation rate {:<8} allowed {:.4}  {}",
            r[0],
            r[2],
            r[7],
            r[8].parse::<f64>().unwrap_or(f64::NAN),
            if r[10] == "1" { "holds" } else { "VIOLATED" }
        );
    }
    Ok(())
}

/// Reads a plain matrix file or an adjacency snapshot.
fn read_adjacency(text: &str) -> symphony_core::Result<ndarray::Array2<f64>> {
    if text.trim_start().starts_with("M ") {
        Ok(read_snapshot(text.as_bytes())?.matrix().clone())
    } else {
        read_matrix(text.as_bytes())
    }
}

/// Twelve significant digits without trailing zeros.
fn short(v: f64) -> String {
    let s = format!("{:.*}", 11usize.saturating_sub(v.abs().log10().floor().max(0.0) as usize), v);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn prop1_rows(t: &mut Table, source: &str, rep: &Prop1Report) {
    let head = vec![
        source.to_string(),
        rep.m.to_string(),
        rep.k.to_string(),
        u8::from(rep.applicable).to_string(),
        num(rep.rho),
        u8::from(rep.connected).to_string(),
        num(rep.doubly_stochastic_error),
    ];
    if rep.checks.is_empty() {
        let mut row = head.clone();
        row.extend(["-".into(), "0".into(), "0".into(), "0".into(), String::new(), "0".into(), rep.notes.join("; ")]);
        t.push(row);
    }
    for c in &rep.checks {
        let mut row = head.clone();
        row.extend([
            c.name.to_string(),
            c.trials.to_string(),
            c.violations.to_string(),
            c.skipped.to_string(),
            num(c.worst_slack),
            u8::from(c.passed).to_string(),
            String::new(),
        ]);
        t.push(row);
    }
}

pub fn cmd_verify_prop1(ctx: &Ctx, adjacency: Option<&Path>, k: Option<usize>, trials: Option<usize>) -> Result<(), Failure> {
    let mut cfg = Prop1Manifest::load(ctx.manifest.as_deref(), ctx.seed)?;
    if let Some(p) = adjacency {
        cfg.adjacency = Some(p.to_path_buf());
        cfg.random = None;
    }
    cfg.k = k.or(cfg.k);
    cfg.trials = trials.unwrap_or(cfg.trials);
    if cfg.trials == 0 {
        return Err(Failure::Invalid("trials must be positive".into()));
    }
    let input = match (&cfg.random, &cfg.adjacency) {
        (Some(_), _) => None,
        (None, Some(p)) => {
            Some(std::fs::read_to_string(p).map_err(|e| Failure::Invalid(format!("cannot read {}: {e}", p.display())))?)
        }
        (None, None) => Some(PROP1_FIXTURE.to_string()),
    };
    let single = match &input {
        Some(text) => {
            let a = read_adjacency(text).map_err(|e| Failure::Invalid(format!("adjacency: {e}")))?;
            if a.nrows() != a.ncols() || a.nrows() < 2 {
                return Err(Failure::Invalid("adjacency must be square with at least two experts".into()));
            }
            let kk = cfg.k.unwrap_or(2.min(a.nrows() - 1));
            if kk == 0 || kk >= a.nrows() {
                return Err(Failure::Invalid(format!("K must satisfy 1 <= K < M (K={kk}, M={})", a.nrows())));
            }
            cfg.k = Some(kk);
            Some(a)
        }
        None => None,
    };

    let (_, reports) = in_run_dir(ctx, "verify-prop1", cfg.seed, &cfg.to_toml(), |run| {
        let mut reports = Vec::new();
        match (&single, &cfg.random) {
            (Some(a), _) => {
                run.write("adjacency.txt", input.as_deref().unwrap_or_default())?;
                reports.push(("input".to_string(), check_prop1(a, cfg.k.unwrap_or(1), cfg.trials, cfg.seed)?));
            }
            (None, Some(r)) => {
                let mut rng = rng_from(cfg.seed);
                for i in 0..r.count {
                    let m = rng.random_range(r.min_experts..=r.max_experts);
                    let kk = rng.random_range(2..=r.max_k.min(m - 1));
                    let a = random_sinkhorn_adjacency(m, kk, 4 * m, &mut rng)?;
                    reports.push((format!("random-{i}"), check_prop1(&a, kk, cfg.trials, derive_seed(cfg.seed, i as u64))?));
                }
            }
            (None, None) => unreachable!("an input was resolved above"),
        }
        let mut t = Table::new(&[
            "source",
            "M",
            "K",
            "applicable",
            "rho",
            "connected",
            "ds_error",
            "check",
            "trials",
            "violations",
            "skipped",
            "worst_slack",
            "passed",
            "notes",
        ]);
        for (source, rep) in &reports {
            prop1_rows(&mut t, source, rep);
        }
        run.table(&t, "prop1")?;
        Ok(reports)
    })?;
    for (source, rep) in &reports {
        if reports.len() == 1 {
            println!("M = {}, K = {}, rho = {}", rep.m, rep.k, short(rep.rho));
        }
        if !rep.applicable {
            println!("{source}: not applicable ({})", rep.notes.join("; "));
        }
        for c in rep.checks.iter().filter(|c| reports.len() == 1 || !c.passed) {
            println!(
                "{source} {:<20} {}  violations {}/{}, worst slack {:.3e}",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.violations,
                c.trials,
                c.worst_slack
            );
        }
    }
    if reports.len() > 1 {
        let passed = reports.iter().filter(|(_, r)| r.passed()).count();
        println!("{passed}/{} adjacencies pass every check", reports.len());
    }
    Ok(())
}

pub fn cmd_bench(ctx: &Ctx) -> Result<(), Failure> {
    let cfg = BenchManifest::load(ctx.manifest.as_deref(), ctx.seed)?;
    let bc = cfg.config();
    let (_, rows) = in_run_dir(ctx, "bench", cfg.seed, &cfg.to_toml(), |run| {
        let rows = bench_overhead(&bc)?;
        run.table(&bench_table(&rows, &bc), "bench")?;
        Ok(rows)
    })?;
    for r in rows {
        println!(
            "M {:>4} N {:>6}: baseline {:.3e} s, symphony {:+.2}%, training step {:+.2}%",
            r.m, r.n, r.baseline_s, r.delta_pct, r.train_delta_pct
        );
    }
    Ok(())
}

fn snapshot_epoch(p: &Path) -> Option<usize> {
    p.file_stem()?.to_str()?.strip_prefix("epoch_")?.parse().ok()
}

pub fn cmd_dump_adjacency(ctx: &Ctx, from: Option<&Path>) -> Result<(), Failure> {
    let (manifest_text, seed, states) = match from {
        Some(dir) => {
            let mpath = dir.join("manifest.toml");
            let m = load_run_manifest(Some(&mpath), "dump-adjacency", None)?;
            let adir = dir.join("adjacency");
            let mut files: Vec<(usize, PathBuf)> = std::fs::read_dir(&adir)
                .map_err(|e| Failure::Invalid(format!("no adjacency snapshots in {}: {e}", adir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter_map(|p| snapshot_epoch(&p).map(|e| (e, p)))
                .collect();
            files.sort();
            let states = files
                .into_iter()
                .map(|(e, p)| load_snapshot(&p).map(|s| (e, s)).map_err(|err| Failure::Invalid(format!("{}: {err}", p.display()))))
                .collect::<Result<Vec<_>, _>>()?;
            (format!("{}\n# dumped from {}\n", m.to_toml(), dir.display()), m.seed, states)
        }
        None => {
            let m = load_run_manifest(ctx.manifest.as_deref(), "dump-adjacency", ctx.seed)?;
            if m.mode != symphony_core::moe::RoutingMode::Symphony {
                return Err(Failure::Invalid("baseline runs keep no adjacency".into()));
            }
            ctx.note("training to collect per-epoch adjacency snapshots");
            let out = train(&m, None).map_err(|e| Failure::Runtime {
                reason: e.to_string(),
                diagnostics: match &e {
                    Error::Divergence { dump, .. } => dump.clone(),
                    _ => PathBuf::from("-"),
                },
            })?;
            let states = out.snapshots.into_iter().enumerate().map(|(i, s)| (i + 1, s)).collect();
            (m.to_toml(), m.seed, states)
        }
    };
    if states.is_empty() {
        return Err(Failure::Invalid("no adjacency snapshots to dump (baseline run?)".into()));
    }
    let (_, last) = in_run_dir(ctx, "dump-adjacency", seed, &manifest_text, |run| {
        let mut entries = Table::new(&["epoch", "row", "col", "value"]);
        let mut spectrum = Table::new(&["epoch", "updates", "norm_mode", "rho", "connected", "values"]);
        let mut last = 0.0;
        for (epoch, s) in &states {
            for ((i, j), v) in s.matrix().indexed_iter() {
                entries.push(vec![epoch.to_string(), i.to_string(), j.to_string(), num(*v)]);
            }
            let rep = spectral(s)?;
            last = rep.rho;
            spectrum.push(vec![
                epoch.to_string(),
                s.update_count().to_string(),
                s.norm_mode().to_string(),
                num(rep.rho),
                u8::from(rep.connected).to_string(),
                join_values(&rep.values),
            ]);
        }
        run.table(&entries, "adjacency")?;
        run.table(&spectrum, "spectrum")?;
        Ok(last)
    })?;
    println!("{} snapshots; final rho {last:.6}", states.len());
    Ok(())
}

fn spectral(s: &AdjacencyState) -> symphony_core::Result<symphony_core::SpectralReport> {
    s.spectral_report(None)
}

pub struct OverheadArgs {
    pub layers: u64,
    pub experts: u64,
    pub k: u64,
    pub tokens: u64,
    pub bytes: u64,
}

pub fn cmd_estimate_overhead(ctx: &Ctx, a: &OverheadArgs) -> Result<(), Failure> {
    if a.k > a.experts {
        return Err(Failure::Invalid(format!("K exceeds expert count (K={}, M={})", a.k, a.experts)));
    }
    let est = estimate_overhead(a.experts, a.k, a.tokens, a.layers, a.bytes).map_err(|e| Failure::Invalid(e.to_string()))?;
    // MB here is 2^20 bytes
    println!("train {} MB / infer {} MB", est.train_mib(), est.infer_mib());
    println!("train {:.2} GFLOPs / infer {:.2} GFLOPs", est.train_gflops(), est.infer_gflops());
    if ctx.out.is_some() {
        let text = format!("L = {}\nM = {}\nK = {}\nN = {}\nbytes = {}\n", a.layers, a.experts, a.k, a.tokens, a.bytes);
        in_run_dir(ctx, "estimate-overhead", ctx.seed.unwrap_or(0), &text, |run| {
            let mut t = Table::new(&[
                "L", "M", "K", "N", "bytes_per_entry", "train_bytes", "infer_bytes", "train_flops", "infer_flops", "train_mib",
                "infer_mib",
            ]);
            t.push(vec![
                a.layers.to_string(),
                a.experts.to_string(),
                a.k.to_string(),
                a.tokens.to_string(),
                a.bytes.to_string(),
                est.train_bytes.to_string(),
                est.infer_bytes.to_string(),
                est.train_flops.to_string(),
                est.infer_flops.to_string(),
                num(est.train_mib()),
                num(est.infer_mib()),
            ]);
            run.table(&t, "overhead")
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_trims_rounding_noise() {
        assert_eq!(short(0.19999999999999996), "0.2");
        assert_eq!(short(1.0), "1");
        assert_eq!(short(0.06142), "0.06142");
        assert_eq!(short(123.5), "123.5");
    }

    #[test]
    fn fixture_parses_as_both_formats() {
        let a = read_adjacency(PROP1_FIXTURE).unwrap();
        assert_eq!(a.dim(), (2, 2));
        let snap = "M 2 mode Sinkhorn beta 0.9 updates 1\n6e-1 4e-1\n4e-1 6e-1\n";
        assert_eq!(read_adjacency(snap).unwrap(), a);
    }

    #[test]
    fn snapshot_names_give_epochs() {
        assert_eq!(snapshot_epoch(Path::new("a/epoch_012.txt")), Some(12));
        assert_eq!(snapshot_epoch(Path::new("a/other.txt")), None);
    }
}
