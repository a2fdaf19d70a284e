use std::fs;
use std::path::{Path, PathBuf};

use brood::bge::{BgeScore, DataSet};
use brood::brood::{run_chains, stationary_reference, BroodConfig, ChainSample, ChainSummary};
use brood::error::ChainError;
use brood::graph::{Dag, SearchSpace};
use brood::metrics::{edge_probs, evaluate, EdgeMode, MetricsReport};
use brood::oracle::{exact_mixture_kernel, stationary_distribution, ExactPosterior};
use brood::synth::{
    fixed_cap, generate, pc_alpha, pc_skeleton, plus_one_cap, ErrorModel, GraphModel, SemSpec,
};
use brood::tables::TableSet;
use serde::Serialize;
use serde_json::json;

use crate::config::{Init, RunConfig};
use crate::{ChainFlags, CliError, Command, Common, GraphName};

const ORACLE_MAX_P: usize = 4;
const KERNEL_MAX_P: usize = 3;

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Synth {
            common,
            p,
            n,
            graph,
            errors,
        } => synth(&common, p, n, graph, errors.map(Into::into)),
        Command::Infer {
            common,
            data,
            init,
            chains,
            chain,
        } => infer(&common, data, init, chains, &chain),
        Command::Oracle {
            common,
            data,
            init,
            kernel,
            chain,
        } => oracle(&common, data, init, kernel, &chain),
        Command::Eval {
            common,
            trace,
            truth,
            mode,
            summary,
        } => eval(&common, &trace, &truth, mode, summary),
        Command::Tables {
            common,
            data,
            init,
            cap,
        } => tables(&common, data, init, cap),
    }
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
}

fn context(common: &Common) -> Result<Ctx, CliError> {
    let cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let seed = common.seed.or(cfg.seed).unwrap_or(0);
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("brood-out"));
    fs::create_dir_all(&out)
        .map_err(|e| failed(format!("cannot create {}: {e}", out.display())))?;
    Ok(Ctx { cfg, seed, out })
}

impl Ctx {
    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.out.join(name);
        fs::write(&path, contents)
            .map_err(|e| failed(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(failed)?;
        text.push('\n');
        self.write(name, &text)
    }

    fn data(&self, flag: Option<PathBuf>) -> Result<(PathBuf, DataSet), CliError> {
        let path = flag
            .or_else(|| self.cfg.data.clone())
            .ok_or_else(|| invalid("no data file given (use --data or `data` in the config)"))?;
        let file = fs::File::open(&path)
            .map_err(|e| invalid(format!("cannot open {}: {e}", path.display())))?;
        let d = DataSet::from_csv(file, true)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        Ok((path, d))
    }

    fn init(&self, flag: Option<Init>) -> Result<Init, CliError> {
        match flag {
            Some(i) => Ok(i),
            None => match &self.cfg.init {
                Some(s) => s.parse().map_err(invalid),
                None => Ok(Init::Pc),
            },
        }
    }

    fn chain_config(&self, p: usize, flags: &ChainFlags) -> BroodConfig {
        let c = &self.cfg.chain;
        let plus_one = flags.plus_one || c.plus_one.unwrap_or(false);
        let base = BroodConfig::defaults_for(p);
        let default_cap = if plus_one {
            plus_one_cap(p)
        } else {
            fixed_cap(p)
        };
        BroodConfig {
            ell: flags.ell.or(c.ell).unwrap_or(base.ell),
            c_star: flags.cstar.or(c.c_star).unwrap_or(base.c_star),
            cap: Some(flags.cap.or(c.cap).unwrap_or(default_cap)),
            steps: flags.steps.or(c.steps).unwrap_or(base.steps),
            warmup: flags.warmup.or(c.warmup).unwrap_or(base.warmup),
            thin: flags.thin.or(c.thin).unwrap_or(base.thin),
            seed: self.seed,
            plus_one,
            ..base
        }
    }
}

fn initial_space(init: &Init, d: &DataSet, cap: Option<usize>) -> Result<SearchSpace, CliError> {
    let h = match init {
        Init::Pc => pc_skeleton(d, pc_alpha(d.p()), 1, cap),
        Init::File(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
            SearchSpace::from_json(&text)
                .map_err(|e| invalid(format!("{}: {e}", path.display())))?
        }
    };
    if h.p() != d.p() {
        return Err(invalid(format!(
            "initial space has {} nodes but the data have {} columns",
            h.p(),
            d.p()
        )));
    }
    Ok(h)
}

fn synth(
    common: &Common,
    p: Option<usize>,
    n: Option<usize>,
    graph: Option<GraphName>,
    errors: Option<ErrorModel>,
) -> Result<(), CliError> {
    let ctx = context(common)?;
    let s = &ctx.cfg.synth;
    let p = p.or(s.p).unwrap_or(20);
    let n = n.or(s.n).unwrap_or(10 * p);
    let graph = match graph {
        Some(GraphName::Er) => GraphModel::er(),
        Some(GraphName::Sbm) => GraphModel::sbm(p),
        Some(GraphName::Hsbm) => GraphModel::hsbm(p),
        None => match &s.graph {
            Some(choice) => choice.resolve(p)?,
            None => GraphModel::er(),
        },
    };
    let errors = errors.or(s.errors).unwrap_or(ErrorModel::Gaussian);
    let mut spec = SemSpec::new(p, n, graph, errors, ctx.seed);
    if let Some(lo) = s.weight_low {
        spec.weight_low = lo;
    }
    if let Some(hi) = s.weight_high {
        spec.weight_high = hi;
    }
    spec.validate().map_err(invalid)?;
    let gt = generate(&spec).map_err(failed)?;
    ctx.write("data.csv", &gt.data.to_csv(true))?;
    ctx.write("truth.json", &format!("{}\n", gt.dag.to_json()))?;
    ctx.write("weights.csv", &gt.weights_csv())?;
    ctx.write_json("spec-echo.json", &spec)?;
    log::info!(
        "wrote {} samples of {} variables ({} true edges) to {}",
        n,
        p,
        gt.dag.edge_count(),
        ctx.out.display()
    );
    Ok(())
}

fn infer(
    common: &Common,
    data: Option<PathBuf>,
    init: Option<Init>,
    chains: Option<usize>,
    flags: &ChainFlags,
) -> Result<(), CliError> {
    let ctx = context(common)?;
    let (data_path, d) = ctx.data(data)?;
    let scorer = BgeScore::from_data(&d).map_err(invalid)?;
    let cfg = ctx.chain_config(d.p(), flags);
    cfg.validate().map_err(invalid)?;
    let chains = chains.or(ctx.cfg.chains).unwrap_or(1);
    if chains == 0 {
        return Err(invalid("at least one chain is required"));
    }
    let init = ctx.init(init)?;
    let h0 = initial_space(&init, &d, cfg.cap)?;
    ctx.write_json(
        "config-echo.json",
        &json!({
            "command": "infer",
            "data": data_path,
            "init": init.to_string(),
            "chains": chains,
            "config": cfg,
        }),
    )?;
    ctx.write("initial-space.json", &format!("{}\n", h0.to_json()))?;
    let traces = run_chains(&cfg, &scorer, &h0, chains).map_err(|e| match e {
        ChainError::Config(_) | ChainError::InitialSpaceOverCap { .. } => invalid(e),
        other => failed(other),
    })?;
    for (k, t) in traces.iter().enumerate() {
        let name = if chains == 1 {
            "trace.jsonl".to_string()
        } else {
            format!("trace-{k}.jsonl")
        };
        ctx.write(&name, &t.to_jsonl())?;
        let s = &t.summary;
        log::info!(
            "chain {k}: Q0 acceptance {:.3}, Q1 acceptance {:.3}, {} births, {} deaths, final space {} edges, {:.2}s",
            s.q0_acceptance(),
            s.q1_acceptance(),
            s.births,
            s.deaths,
            s.final_space_edges,
            s.elapsed_seconds
        );
    }
    let summaries: Vec<&ChainSummary> = traces.iter().map(|t| &t.summary).collect();
    ctx.write_json(
        "summary.json",
        &json!({
            "initial_space_edges": h0.edge_count(),
            "chains": summaries,
        }),
    )?;
    Ok(())
}

fn oracle(
    common: &Common,
    data: Option<PathBuf>,
    init: Option<Init>,
    kernel: bool,
    flags: &ChainFlags,
) -> Result<(), CliError> {
    let ctx = context(common)?;
    let (data_path, d) = ctx.data(data)?;
    let p = d.p();
    if p > ORACLE_MAX_P {
        return Err(invalid(format!(
            "oracle enumerates every DAG and needs p <= {ORACLE_MAX_P}, got p = {p}"
        )));
    }
    if kernel && p > KERNEL_MAX_P {
        return Err(invalid(format!(
            "the exact kernel needs p <= {KERNEL_MAX_P}, got p = {p}"
        )));
    }
    let scorer = BgeScore::from_data(&d).map_err(invalid)?;
    let cap = flags.cap.or(ctx.cfg.chain.cap);
    let init = ctx.init(init)?;
    let h = initial_space(&init, &d, cap)?;
    let report = ExactPosterior::from_scorer(&scorer)
        .and_then(|ep| ep.verify_bounds(&h))
        .map_err(failed)?;
    let mut doc = json!({
        "p": p,
        "space": h,
        "report": report,
    });
    let mut echo = json!({
        "command": "oracle",
        "data": data_path,
        "init": init.to_string(),
        "cap": cap,
    });
    if kernel {
        let c = &ctx.cfg.chain;
        let cfg = BroodConfig {
            ell: flags.ell.or(c.ell).unwrap_or(0.1),
            c_star: flags.cstar.or(c.c_star).unwrap_or(1.0),
            cap,
            ..Default::default()
        };
        cfg.validate().map_err(invalid)?;
        let k = exact_mixture_kernel(&scorer, &cfg).map_err(failed)?;
        let (pi, residual) = stationary_distribution(&k.matrix).map_err(failed)?;
        let marginal = k.space_marginal(&pi);
        let reference = stationary_reference(&scorer, cfg.c_star, cfg.cap).map_err(failed)?;
        let spaces: Vec<_> = k
            .spaces
            .iter()
            .zip(&marginal)
            .map(|(h, m)| {
                let r = reference.index_of(h).expect("same space enumeration");
                json!({
                    "space": h,
                    "stationary": m,
                    "closed_form_restricted_sum": reference.restricted_sum[r],
                    "closed_form_order_normalized": reference.order_normalized[r],
                })
            })
            .collect();
        doc["kernel"] = json!({
            "states": k.state_count(),
            "residual": residual,
            "spaces": spaces,
        });
        echo["ell"] = json!(cfg.ell);
        echo["c_star"] = json!(cfg.c_star);
    }
    ctx.write_json("oracle.json", &doc)?;
    ctx.write_json("config-echo.json", &echo)?;
    log::info!(
        "epsilon {:.4e}, tv {:.4e} in [{:.4e}, {:.4e}]",
        report.epsilon,
        report.tv,
        report.lower,
        report.upper
    );
    Ok(())
}

fn read_trace(path: &Path) -> Result<Vec<Dag>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let mut dags = Vec::new();
    for (k, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let s: ChainSample = serde_json::from_str(line)
            .map_err(|e| invalid(format!("{} line {}: {e}", path.display(), k + 1)))?;
        dags.extend(s.dag);
    }
    Ok(dags)
}

fn eval(
    common: &Common,
    traces: &[PathBuf],
    truth: &Path,
    mode: Option<EdgeMode>,
    summary: Option<PathBuf>,
) -> Result<(), CliError> {
    let ctx = context(common)?;
    let mode = mode.or(ctx.cfg.mode).unwrap_or(EdgeMode::Directed);
    let text = fs::read_to_string(truth)
        .map_err(|e| invalid(format!("cannot read {}: {e}", truth.display())))?;
    let truth_dag =
        Dag::from_json(&text).map_err(|e| invalid(format!("{}: {e}", truth.display())))?;
    let mut dags = Vec::new();
    for t in traces {
        dags.extend(read_trace(t)?);
    }
    if dags.is_empty() {
        return Err(invalid("the traces contain no DAG samples"));
    }
    let probs = edge_probs(dags.iter(), mode).map_err(invalid)?;
    let mut report = evaluate(&probs, &truth_dag).map_err(invalid)?;
    if let Some(path) = &summary {
        report.runtime_seconds = runtime_from_summary(path)?;
    }
    let row = report.csv_row(&[dags.len().to_string()]);
    ctx.write(
        "metrics.csv",
        &format!("{}\n{row}\n", MetricsReport::csv_header(&["samples"])),
    )?;
    ctx.write("edge_probs.csv", &probs.to_csv())?;
    ctx.write_json(
        "config-echo.json",
        &json!({
            "command": "eval",
            "traces": traces,
            "truth": truth,
            "mode": mode,
            "summary": summary,
        }),
    )?;
    println!("{row}");
    Ok(())
}

fn runtime_from_summary(path: &Path) -> Result<f64, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let chains = v["chains"]
        .as_array()
        .ok_or_else(|| invalid(format!("{}: no `chains` array", path.display())))?;
    Ok(chains
        .iter()
        .filter_map(|c| c["elapsed_seconds"].as_f64())
        .sum())
}

fn tables(
    common: &Common,
    data: Option<PathBuf>,
    init: Option<Init>,
    cap: Option<usize>,
) -> Result<(), CliError> {
    let ctx = context(common)?;
    let (data_path, d) = ctx.data(data)?;
    let scorer = BgeScore::from_data(&d).map_err(invalid)?;
    let cap = cap
        .or(ctx.cfg.chain.cap)
        .unwrap_or_else(|| fixed_cap(d.p()));
    let init = ctx.init(init)?;
    let h = initial_space(&init, &d, Some(cap))?;
    let t = TableSet::build(&h, &scorer).map_err(invalid)?;
    ctx.write("tables.json", &t.to_json())?;
    ctx.write("space.json", &format!("{}\n", h.to_json()))?;
    ctx.write_json(
        "config-echo.json",
        &json!({
            "command": "tables",
            "data": data_path,
            "init": init.to_string(),
            "cap": cap,
        }),
    )?;
    log::info!(
        "{} nodes, {} score evaluations",
        t.p(),
        scorer.evaluations()
    );
    Ok(())
}
