use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use cmps_core::cmps::constraints_to_mps;
use cmps_core::indexing::{charge_complexity, IndexFamilies, LinkIndex};
use cmps_core::optimizer::{self, format_g17, InitialTemperature, OptimizerConfig};
use cmps_core::problems::{
    brute_force_count, gen_cardinality, gen_facility, gen_qkp, Instance, InstanceKind,
};

use crate::errors::{InputError, UsageError};
use crate::{BenchArgs, ComplexityArgs, CountArgs, EmbedArgs, Family, InstanceArgs, SolveArgs, SolverArgs};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Loads or generates the instance and describes its source for the config echo.
fn load(src: &InstanceArgs) -> Result<(Instance, String)> {
    if let Some(path) = &src.instance {
        let text = fs::read_to_string(path)
            .map_err(|source| InputError { path: path.display().to_string(), source })?;
        let inst = Instance::from_json(&text).with_context(|| format!("in {}", path.display()))?;
        return Ok((inst, format!("instance={}", path.display())));
    }
    let family = src.family.ok_or_else(|| usage("either --instance or --family is required"))?;
    let n = src.n.ok_or_else(|| usage("--n is required with --family"))?;
    match family {
        Family::Cardinality => {
            let lower = src.lower.unwrap_or(n as i64 / 2);
            let upper = src.upper.unwrap_or(n as i64 / 2);
            let sys = gen_cardinality(n, lower, upper)?;
            let inst = Instance::from_system(InstanceKind::Cardinality, sys);
            Ok((inst, format!("family=cardinality n={n} lower={lower} upper={upper}")))
        }
        Family::Qkp => {
            let inst = gen_qkp(n, src.seed)?;
            Ok((inst.into(), format!("family=qkp n={n} seed={}", src.seed)))
        }
        Family::Facility => {
            let upper = src.upper.unwrap_or(2);
            let inst = gen_facility(n, src.m, upper, src.seed)?;
            Ok((inst.into(), format!("family=facility n={n} m={} upper={upper} seed={}", src.m, src.seed)))
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

pub fn embed(a: &EmbedArgs) -> Result<()> {
    let (inst, source) = load(&a.source)?;
    let sys = &inst.system;
    let n = sys.n_vars();
    let flux = a.flux.unwrap_or(n);
    if flux == 0 || flux > n {
        return Err(usage(format!("--flux {flux} outside 1..={n}")));
    }
    let mps = constraints_to_mps(sys, flux - 1)?;
    let fam = mps.indices();

    println!("seed: {}", a.source.seed);
    println!("config: embed {source} flux={flux}");
    let mut csv = String::from("family,bond,n_qregions,qregions\n");
    for (name, title, link) in [
        ("left", "flux on the last site", IndexFamilies::left as fn(&IndexFamilies, usize) -> &LinkIndex),
        ("right", "flux on the first site", IndexFamilies::right),
    ] {
        println!("{name} indices ({title}):");
        for bond in 0..fam.n_bonds() {
            let idx = link(fam, bond);
            println!("  bond {bond}: Q={} {idx}", idx.len());
            writeln!(csv, "{name},{bond},{},{}", idx.len(), quote(&idx.to_string()))?;
        }
    }
    let per_site: Vec<String> = (0..n).map(|s| mps.tensor(s).n_blocks().to_string()).collect();
    println!("blocks per site: {}", per_site.join(" "));
    println!("total blocks: {}", mps.total_blocks());
    println!("charge complexity: {}", fam.charge_complexity());
    if let Some(out) = &a.out {
        write_output(Some(out), &csv)?;
    }
    if let Some(path) = &a.mps {
        write_output(Some(path), &mps.to_text())?;
    }
    Ok(())
}

pub fn count(a: &CountArgs) -> Result<()> {
    let (inst, source) = load(&a.source)?;
    let mps = constraints_to_mps(&inst.system, inst.system.n_vars() - 1)?;
    let count = mps.count_solutions();
    println!("seed: {}", a.source.seed);
    println!("config: count {source} verify={}", a.verify);
    println!("count: {}", format_count(count));
    if a.verify {
        let exact = brute_force_count(&inst.system)?;
        if exact as f64 != count {
            bail!("verification failed: enumeration counts {exact}");
        }
        println!("verified: enumeration agrees");
    }
    Ok(())
}

fn format_count(c: f64) -> String {
    if c.fract() == 0.0 && c < 2f64.powi(53) {
        format!("{}", c as u64)
    } else {
        format_g17(c)
    }
}

pub fn complexity(a: &ComplexityArgs) -> Result<()> {
    let mut csv = String::from("family,N,M,u,delta,Q,mean,stderr\n");
    match a.family {
        Family::Cardinality => {
            for &n in &a.sizes {
                let deltas = a.deltas.clone().unwrap_or_else(|| (0..=n as i64).collect());
                for delta in deltas {
                    if !(0..=n as i64).contains(&delta) {
                        return Err(usage(format!("delta {delta} outside 0..={n}")));
                    }
                    let lower = (n as i64 - delta) / 2;
                    let upper = lower + delta;
                    let q = charge_complexity(&gen_cardinality(n, lower, upper)?)?;
                    writeln!(csv, "cardinality,{n},1,{upper},{delta},{q},{q},0")?;
                }
            }
        }
        Family::Facility => {
            if a.repeats == 0 {
                return Err(usage("--repeats must be positive"));
            }
            for &n in &a.sizes {
                for &m in &a.ms {
                    for &u in &a.uppers {
                        let qs = (0..a.repeats)
                            .map(|k| Ok(charge_complexity(&gen_facility(n, m, u, a.seed + k)?.system())? as f64))
                            .collect::<Result<Vec<f64>>>()?;
                        let (mean, stderr) = mean_stderr(&qs);
                        let max = qs.iter().copied().fold(0.0, f64::max);
                        writeln!(
                            csv,
                            "facility,{n},{m},{u},{},{max},{},{}",
                            u - 2,
                            format_g17(mean),
                            format_g17(stderr)
                        )?;
                    }
                }
            }
        }
        Family::Qkp => return Err(usage("complexity sweeps cover the cardinality and facility families")),
    }
    eprintln!("seed: {}", a.seed);
    write_output(a.out.as_deref(), &csv)
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn solver_config(s: &SolverArgs, n: usize, kind: InstanceKind, seed: u64) -> Result<OptimizerConfig> {
    let t_init = match s.tinit.as_deref() {
        Some("auto") => InitialTemperature::Auto,
        Some(t) => InitialTemperature::Fixed(t.parse().map_err(|_| usage(format!("--tinit {t}: expected a number or auto")))?),
        None if kind == InstanceKind::Qkp => InitialTemperature::Fixed(2.5 * n as f64),
        None => InitialTemperature::Auto,
    };
    let time_limit = match s.time_limit {
        Some(t) if !(t > 0.0 && t.is_finite()) => return Err(usage(format!("--time-limit {t} must be positive"))),
        t => t.map(Duration::from_secs_f64),
    };
    Ok(OptimizerConfig {
        t_max: s.iters,
        cutoff: s.cutoff,
        learning_rate: s.lr,
        n_samples: s.samples,
        t_init,
        replace_count: s.replace.unwrap_or((s.samples / 10).max(1)),
        seed,
        max_bond: s.max_bond,
        time_limit,
        record_time: s.timing,
    })
}

fn describe(cfg: &OptimizerConfig) -> String {
    let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
    format!(
        "iters={} cutoff={} lr={} samples={} replace={} max_bond={} time_limit={} timing={}",
        cfg.t_max,
        cfg.cutoff,
        cfg.learning_rate,
        cfg.n_samples,
        cfg.replace_count,
        opt(cfg.max_bond.map(|d| d.to_string())),
        opt(cfg.time_limit.map(|t| t.as_secs_f64().to_string())),
        cfg.record_time
    )
}

fn bits(x: &[u8]) -> String {
    x.iter().map(|b| char::from(b'0' + b)).collect()
}

pub fn solve(a: &SolveArgs) -> Result<()> {
    let (inst, source) = load(&a.source)?;
    if inst.q.is_none() {
        return Err(usage("the instance has no cost matrix Q"));
    }
    let sys = &inst.system;
    let cfg = solver_config(&a.solver, sys.n_vars(), inst.kind, a.source.seed)?;
    let out = optimizer::solve(|x| inst.cost(x).expect("cost matrix present") as f64, sys, &cfg)?;

    let summary = format!(
        "seed: {}\nconfig: solve {source} {} tinit={}\nt_init: {}\nbest_cost: {}\nbest_x: {}\n",
        cfg.seed,
        describe(&cfg),
        cfg.t_init,
        format_g17(out.t_init),
        format_g17(out.best_cost),
        bits(&out.best_x)
    );
    match &a.out {
        Some(path) => {
            write_output(Some(path), &out.history.to_csv())?;
            print!("{summary}");
        }
        None => {
            eprint!("{summary}");
            print!("{}", out.history.to_csv());
        }
    }
    Ok(())
}

struct BenchRow {
    size: usize,
    run: u64,
    seed: u64,
    best_cost: f64,
    wall_ms: f64,
}

fn bench_cell(size: usize, run: u64, seed: u64, solver: &SolverArgs) -> Result<BenchRow> {
    let inst = gen_qkp(size, seed)?;
    let sys = inst.system();
    let cfg = solver_config(solver, size, InstanceKind::Qkp, seed)?;
    let start = Instant::now();
    let out = optimizer::solve(|x| inst.cost(x) as f64, &sys, &cfg)?;
    let wall_ms = if solver.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    if !sys.is_feasible(&out.best_x) {
        bail!("size {size} run {run}: reported solution {} is infeasible", bits(&out.best_x));
    }
    if out.history.records.windows(2).any(|w| w[1].c_cum_min > w[0].c_cum_min) {
        bail!("size {size} run {run}: cumulative minimum increased");
    }
    Ok(BenchRow { size, run, seed, best_cost: out.best_cost, wall_ms })
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    if a.runs == 0 || a.sizes.is_empty() {
        return Err(usage("bench needs at least one size and one run"));
    }
    let cells: Vec<(usize, u64)> = a.sizes.iter().flat_map(|&s| (0..a.runs).map(move |r| (s, r))).collect();
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(cells.len()));
    let workers = thread::available_parallelism().map_or(1, |p| p.get()).min(cells.len());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(size, run)) = cells.get(k) else { break };
                let row = bench_cell(size, run, a.seed + run, &a.solver);
                results.lock().expect("no poisoned lock").push((k, row));
            });
        }
    });
    let mut results = results.into_inner().expect("no poisoned lock");
    results.sort_by_key(|(k, _)| *k);
    let rows = results.into_iter().map(|(_, r)| r).collect::<Result<Vec<_>>>()?;

    let mut csv = String::from("kind,size,run,seed,best_cost,mean_best,min_best,wall_ms\n");
    for r in &rows {
        writeln!(csv, "run,{},{},{},{},,,{}", r.size, r.run, r.seed, format_g17(r.best_cost), format_g17(r.wall_ms))?;
    }
    for &size in &a.sizes {
        let group: Vec<&BenchRow> = rows.iter().filter(|r| r.size == size).collect();
        let k = group.len() as f64;
        let mean = group.iter().map(|r| r.best_cost).sum::<f64>() / k;
        let min = group.iter().map(|r| r.best_cost).fold(f64::INFINITY, f64::min);
        let wall = group.iter().map(|r| r.wall_ms).sum::<f64>() / k;
        writeln!(csv, "summary,{size},,,,{},{},{}", format_g17(mean), format_g17(min), format_g17(wall))?;
    }
    let cfg = solver_config(&a.solver, 0, InstanceKind::Qkp, a.seed)?;
    eprintln!("seed: {}", a.seed);
    let tinit = a.solver.tinit.as_deref().unwrap_or("2.5N");
    eprintln!("config: bench sizes={:?} runs={} {} tinit={tinit}", a.sizes, a.runs, describe(&cfg));
    write_output(a.out.as_deref(), &csv)
}
