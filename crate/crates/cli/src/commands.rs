use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chunknav::grammar::ActionUnits;
use chunknav::hpac::chunk_trajectory;
use chunknav::ids::{build_ids_triplets, build_vln_samples, compute_stats, oracle_corpus, Trajectory};
use chunknav::metrics::{evaluate, MetricReport};
use chunknav::proto::{client_run, serve as start_server, ClientConfig, PolicyFactory, ServerConfig};
use chunknav::seed::derive_seed;
use chunknav::sim::worldgen::nth_world;
use chunknav::sim::{run_episode, EpisodeResult, NoisyPolicy, OraclePolicy, Policy, World};
use rayon::prelude::*;

use crate::config::{PolicyKind, ToolConfig};
use crate::failure::{Failure, OrFail, Outcome, DATA, RUNTIME};
use crate::records::{emit, read_jsonl, to_jsonl, ChunkRecord, EntropyRecord, EpisodeRecord};

fn units(cfg: &ToolConfig) -> Outcome<ActionUnits> {
    cfg.units().usage()
}

fn trajectories(path: &Path) -> Outcome<Vec<(usize, Trajectory)>> {
    read_jsonl(path)
}

fn at_line(path: &Path, line: usize, e: impl std::fmt::Display) -> Failure {
    Failure::new(DATA, format!("{}:{line}: {e}", path.display()))
}

pub fn chunk(cfg: &ToolConfig, input: &Path, output: Option<&Path>) -> Outcome {
    let units = units(cfg)?;
    let hpac = cfg.hpac();
    let per_traj: Vec<Vec<ChunkRecord>> = trajectories(input)?
        .par_iter()
        .map(|(line, t)| {
            let seq = chunk_trajectory(&t.actions, &hpac.for_episode(&t.episode_id))
                .map_err(|e| at_line(input, *line, e))?;
            Ok(seq
                .iter()
                .enumerate()
                .map(|(i, (c, (start, end)))| ChunkRecord {
                    episode_id: t.episode_id.clone(),
                    chunk_index: i,
                    start_index: start,
                    end_index: end,
                    text: c.render(&units).text,
                })
                .collect())
        })
        .collect::<Outcome<_>>()?;
    let records: Vec<&ChunkRecord> = per_traj.iter().flatten().collect();
    emit(output, &to_jsonl(records.iter().copied()))?;
    eprintln!("{} chunks from {} trajectories", records.len(), per_traj.len());
    Ok(())
}

pub fn build_ids(cfg: &ToolConfig, input: &Path, output: Option<&Path>, vln_output: Option<&Path>) -> Outcome {
    let units = units(cfg)?;
    let hpac = cfg.hpac();
    let trajs = trajectories(input)?;
    let triplets: Vec<_> = trajs
        .par_iter()
        .map(|(line, t)| build_ids_triplets(t, &hpac, &units).map_err(|e| at_line(input, *line, e)))
        .collect::<Outcome<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    emit(output, &to_jsonl(&triplets))?;
    if let Some(path) = vln_output {
        let samples: Vec<_> = trajs
            .par_iter()
            .map(|(line, t)| build_vln_samples(t, &hpac, &units, cfg.k_max).map_err(|e| at_line(input, *line, e)))
            .collect::<Outcome<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        emit(Some(path), &to_jsonl(&samples))?;
        eprintln!("{} VLN samples", samples.len());
    }
    eprintln!("{} triplets from {} trajectories", triplets.len(), trajs.len());
    Ok(())
}

pub fn stats(cfg: &ToolConfig, input: &Path, output: Option<&Path>) -> Outcome {
    let units = units(cfg)?;
    let hpac = cfg.hpac();
    let triplets: Vec<_> = trajectories(input)?
        .par_iter()
        .map(|(line, t)| build_ids_triplets(t, &hpac, &units).map_err(|e| at_line(input, *line, e)))
        .collect::<Outcome<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let stats = compute_stats(&triplets);
    let mut table = stats.to_table();
    if let Some(m) = stats.mode() {
        let _ = writeln!(table, "\nmode: {m} atomic actions per chunk");
    }
    emit(None, &table)?;
    if let Some(path) = output {
        let json = serde_json::to_string_pretty(&stats).expect("stats always serialize");
        emit(Some(path), &(json + "\n"))?;
    }
    Ok(())
}

/// Mean entropy per chunk position and the distribution of `t_star`.
fn entropy_table(records: &[EntropyRecord]) -> String {
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let mut horizons: BTreeMap<usize, usize> = BTreeMap::new();
    for r in records {
        for (t, h) in r.query.entropies.iter().enumerate() {
            let e = sums.entry(t + 1).or_insert((0.0, 0));
            e.0 += h;
            e.1 += 1;
        }
        *horizons.entry(r.query.t_star).or_insert(0) += 1;
    }
    let mut out = String::new();
    let _ = writeln!(out, "{:>4} {:>10} {:>8}", "t", "mean H_t", "queries");
    for (t, (s, n)) in &sums {
        let _ = writeln!(out, "{t:>4} {:>10.4} {n:>8}", s / *n as f64);
    }
    let _ = writeln!(out, "\n{:>6} {:>8} {:>7}", "t_star", "queries", "share");
    for (t, n) in &horizons {
        let _ = writeln!(out, "{t:>6} {n:>8} {:>6.1}%", 100.0 * *n as f64 / records.len().max(1) as f64);
    }
    out
}

pub fn entropy_stats(input: &Path, output: Option<&Path>) -> Outcome {
    let episodes: Vec<(usize, EpisodeRecord)> = read_jsonl(input)?;
    let records: Vec<EntropyRecord> = episodes
        .iter()
        .flat_map(|(_, e)| {
            e.result.queries.iter().map(|q| EntropyRecord {
                episode_id: e.episode_id.clone(),
                mode: e.mode,
                query: q.clone(),
            })
        })
        .collect();
    emit(None, &entropy_table(&records))?;
    if let Some(path) = output {
        emit(Some(path), &to_jsonl(&records))?;
    }
    Ok(())
}

fn report_table(groups: &BTreeMap<String, MetricReport>) -> String {
    MetricReport::table(groups.iter().map(|(k, r)| (k.as_str(), r)))
}

pub fn eval(cfg: &ToolConfig, input: &Path, output: Option<&Path>) -> Outcome {
    let episodes: Vec<(usize, EpisodeRecord)> = read_jsonl(input)?;
    let mut by_mode: BTreeMap<String, Vec<&EpisodeResult>> = BTreeMap::new();
    for (_, e) in &episodes {
        by_mode.entry(format!("{}/{}", e.policy, e.mode)).or_default().push(&e.result);
    }
    let reports = by_mode
        .into_iter()
        .map(|(k, eps)| {
            let r = evaluate(eps, cfg.eta_mode).map_err(|e| Failure::new(DATA, format!("{}: {e}", input.display())))?;
            Ok((k, r))
        })
        .collect::<Outcome<BTreeMap<_, _>>>()?;
    emit(None, &report_table(&reports))?;
    if let Some(path) = output {
        let json = serde_json::to_string_pretty(&reports).expect("reports always serialize");
        emit(Some(path), &(json + "\n"))?;
    }
    Ok(())
}

fn episode_id(i: usize) -> String {
    format!("ep-{i:05}")
}

/// Evaluation worlds with their episode ids, in canonical order.
fn worlds(cfg: &ToolConfig) -> Outcome<Vec<(String, World)>> {
    if cfg.world_dir.is_empty() {
        let gen = cfg.worldgen();
        return (0..cfg.episodes)
            .into_par_iter()
            .map(|i| Ok((episode_id(i), nth_world(&gen, cfg.seed, i).runtime()?)))
            .collect();
    }
    let dir = Path::new(&cfg.world_dir);
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::new(DATA, format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "world"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::new(DATA, format!("{}: no .world files", dir.display())));
    }
    paths.iter().map(|p| Ok((stem(p), read_world(p)?))).collect()
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn read_world(p: &Path) -> Outcome<World> {
    let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display())).data()?;
    text.parse().map_err(|e| format!("{}: {e}", p.display())).data()
}

/// The world a session id names: a file in `world_dir`, or `ep-N` generated.
fn world_for_session(cfg: &ToolConfig, sid: &str) -> Result<World, String> {
    if cfg.world_dir.is_empty() {
        let i: usize = sid
            .strip_prefix("ep-")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| format!("session id {sid:?} does not name a generated world"))?;
        return nth_world(&cfg.worldgen(), cfg.seed, i).map_err(|e| e.to_string());
    }
    if sid.is_empty() || sid.contains(['/', '\\']) || sid.starts_with('.') {
        return Err(format!("session id {sid:?} is not a world name"));
    }
    read_world(&Path::new(&cfg.world_dir).join(format!("{sid}.world"))).map_err(|f| f.message)
}

fn policy_seed(cfg: &ToolConfig, id: &str) -> u64 {
    derive_seed(cfg.seed, id)
}

fn make_policy(cfg: &ToolConfig, units: ActionUnits, id: &str) -> Box<dyn Policy> {
    let hpac = chunknav::hpac::HpacConfig {
        seed: policy_seed(cfg, id),
        ..cfg.hpac()
    };
    match cfg.policy {
        PolicyKind::Oracle => Box::new(OraclePolicy::new(units, hpac)),
        PolicyKind::Noisy => Box::new(NoisyPolicy::new(units, hpac, cfg.noise())),
    }
}

fn record(cfg: &ToolConfig, id: String, result: EpisodeResult) -> EpisodeRecord {
    EpisodeRecord {
        seed: policy_seed(cfg, &id),
        episode_id: id,
        mode: cfg.exec_mode,
        policy: cfg.policy,
        result,
    }
}

fn summarize(cfg: &ToolConfig, records: &[EpisodeRecord]) -> Outcome<String> {
    let report = evaluate(records.iter().map(|r| &r.result), cfg.eta_mode).runtime()?;
    let name = format!("{}/{}", cfg.policy, cfg.exec_mode);
    Ok(MetricReport::table([(name.as_str(), &report)]))
}

pub fn simulate(cfg: &ToolConfig, output: Option<&Path>) -> Outcome {
    let units = units(cfg)?;
    let records: Vec<EpisodeRecord> = worlds(cfg)?
        .into_par_iter()
        .map(|(id, world)| {
            let mut policy = make_policy(cfg, units, &id);
            let result = run_episode(&world, policy.as_mut(), cfg.exec_mode, &units, cfg.k_max)
                .map_err(|e| Failure::new(RUNTIME, format!("{id}: {e}")))?;
            Ok(record(cfg, id, result))
        })
        .collect::<Outcome<_>>()?;
    if let Some(path) = output {
        emit(Some(path), &to_jsonl(&records))?;
    }
    emit(None, &summarize(cfg, &records)?)
}

pub fn corpus(cfg: &ToolConfig, output: Option<&Path>) -> Outcome {
    let units = units(cfg)?;
    let gen = cfg.worldgen();
    let corpus = oracle_corpus(cfg.episodes, cfg.seed, &gen, &units).runtime()?;
    emit(output, &to_jsonl(&corpus))?;
    if !cfg.world_dir.is_empty() {
        let dir = Path::new(&cfg.world_dir);
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display())).runtime()?;
        for i in 0..cfg.episodes {
            let world = nth_world(&gen, cfg.seed, i).runtime()?;
            let path = dir.join(format!("{}.world", episode_id(i)));
            fs::write(&path, world.to_text()).map_err(|e| format!("{}: {e}", path.display())).runtime()?;
        }
    }
    eprintln!("{} trajectories", corpus.len());
    Ok(())
}

pub fn serve(cfg: &ToolConfig) -> Outcome {
    let units = units(cfg)?;
    let shared = Arc::new(cfg.clone());
    let factory: PolicyFactory = Arc::new(move |sid: &str| {
        let world = world_for_session(&shared, sid)?;
        Ok((Arc::new(world), make_policy(&shared, units, sid)))
    });
    let config = ServerConfig {
        exec_mode: cfg.exec_mode,
        units,
        k_max: cfg.k_max,
        ..ServerConfig::default()
    };
    let handle = start_server(cfg.addr.as_str(), config, factory).runtime()?;
    {
        let mut out = std::io::stdout().lock();
        writeln!(out, "listening on {}", handle.local_addr())
            .and_then(|_| out.flush())
            .runtime()?;
    }
    handle.join();
    Ok(())
}

pub fn client(cfg: &ToolConfig, output: Option<&Path>, transcript: Option<&Path>) -> Outcome {
    let units = units(cfg)?;
    let timeout = Duration::from_millis(cfg.timeout_ms.max(1));
    let runs: Vec<_> = worlds(cfg)?
        .into_par_iter()
        .map(|(id, world)| {
            let config = ClientConfig {
                session_id: id.clone(),
                instruction: String::new(),
                units,
                timeout,
            };
            (id, client_run(cfg.addr.as_str(), &world, &config))
        })
        .collect();
    let mut records = Vec::new();
    let mut exchanges = Vec::new();
    let mut first_error = None;
    for (id, run) in runs {
        let run = match run {
            Ok(r) => Some(r),
            Err(e) => {
                let partial = e.partial().cloned();
                first_error.get_or_insert_with(|| Failure::new(RUNTIME, format!("{id}: {e}")));
                partial
            }
        };
        if let Some(r) = run {
            exchanges.extend(r.transcript);
            records.push(record(cfg, id, r.result));
        }
    }
    // partial logs are flushed even when some episode failed
    if let Some(path) = output {
        emit(Some(path), &to_jsonl(&records))?;
    }
    if let Some(path) = transcript {
        emit(Some(path), &to_jsonl(&exchanges))?;
    }
    if let Some(f) = first_error {
        return Err(f);
    }
    emit(None, &summarize(cfg, &records)?)
}
