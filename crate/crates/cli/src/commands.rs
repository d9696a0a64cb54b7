//! Subcommand implementations. Each reads the effective config, writes its
//! reports through [`Outputs`] and finishes with a manifest.

use std::fmt::Write as _;

use qoe_core::audit::{
    bin_gain, drift_points, drift_with_bootstrap, group_q_vectors, q_vector, DriftInputs, ViewSpec,
};
use qoe_core::contract::{builtin_family_by_name, ContractSet};
use qoe_core::io::{encode_features, ingest_edges, read_features, write_edges};
use qoe_core::metrics::PredictionBatch;
use qoe_core::model::{
    ablation_id_contract, ablation_no_local_evidence, checkpoint, difficulty_curve,
    group_difficulty, make_splits, train_contract_auditor, train_graph_only_baseline,
    train_mos_mlp, AuditorPredictor, ContractPredictor, DifficultyOptions, KnnMemory,
    OraclePredictor, QHatMode, RandomCoinPredictor, TrainingData,
};
use qoe_core::ratings::{EdgeSet, FeatureStore};
use qoe_core::seed::derive_seed;
use qoe_core::synth::{bottleneck_config, generate, learnable_config, p1_config, ScenarioConfig};
use rayon::prelude::*;

use crate::config::{RunConfig, MODEL_NAMES};
use crate::error::{CliError, CliResult};
use crate::output::Outputs;

/// Shared per-invocation context.
pub struct Ctx {
    pub cfg: RunConfig,
    pub out: std::path::PathBuf,
    pub jobs: usize,
}

impl Ctx {
    fn outputs(&self, command: &str) -> CliResult<Outputs> {
        Outputs::new(&self.out, command, &self.cfg)
    }

    fn pool(&self) -> CliResult<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| CliError::Partial(format!("cannot start worker pool: {e}")))
    }

    fn load_edges(&self, out: &mut Outputs) -> CliResult<EdgeSet> {
        let cfg = &self.cfg;
        let path = cfg.edges_path()?;
        let report = ingest_edges(path, cfg.edge_format()?, &cfg.data.schema, cfg.data.strict)?;
        if !report.rejected.is_empty() {
            let mut csv = String::from("row,message\n");
            for r in &report.rejected {
                let _ = writeln!(csv, "{},\"{}\"", r.row, r.message.replace('"', "\"\""));
            }
            out.write_csv("rejected_rows.csv", &csv)?;
            out.note(format!(
                "{} rows rejected from {} (see rejected_rows.csv)",
                report.rejected.len(),
                path.display()
            ));
        }
        if report.edges.is_empty() {
            return Err(qoe_core::Error::Validation(format!(
                "no valid edges in {}",
                path.display()
            ))
            .into());
        }
        Ok(report.edges)
    }

    fn load_store(
        &self,
        path: Option<&std::path::Path>,
        what: &str,
    ) -> CliResult<Option<FeatureStore>> {
        match path {
            None => Ok(None),
            Some(p) if !p.exists() => Err(CliError::Config(format!(
                "data.{what} {} does not exist",
                p.display()
            ))),
            Some(p) => Ok(Some(read_features(p)?)),
        }
    }

    fn load_features(&self) -> CliResult<(FeatureStore, Option<FeatureStore>)> {
        let features = self
            .load_store(self.cfg.data.features.as_deref(), "features")?
            .ok_or_else(|| CliError::Config("data.features is required for this command".into()))?;
        let evidence = self.load_store(self.cfg.data.evidence.as_deref(), "evidence")?;
        Ok((features, evidence))
    }
}

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn opt6(v: Option<f64>) -> String {
    v.map(f6).unwrap_or_default()
}

pub fn scenario_config(cfg: &RunConfig) -> CliResult<ScenarioConfig> {
    let g = &cfg.gen;
    Ok(match g.scenario.as_str() {
        "p1" => p1_config(cfg.seed),
        "learnable" => learnable_config(cfg.seed, g.edges_per_system),
        "bottleneck" => bottleneck_config(cfg.seed, g.edges_per_system),
        "custom" => ScenarioConfig {
            seed: cfg.seed,
            ..g.custom.clone().ok_or_else(|| {
                CliError::Config("gen.scenario = \"custom\" needs a [gen.custom] table".into())
            })?
        },
        other => {
            return Err(CliError::Config(format!(
                "unknown scenario {other:?} (expected p1, learnable, bottleneck or custom)"
            )))
        }
    })
}

pub fn gen(ctx: &Ctx) -> CliResult<()> {
    let mut out = ctx.outputs("gen")?;
    let data = generate(&scenario_config(&ctx.cfg)?)?;
    let fmt = ctx.cfg.gen.format;
    let mut buf = Vec::new();
    write_edges(&data.edges, fmt, &mut buf)?;
    out.write_bytes(&format!("edges.{fmt}"), &buf)?;
    let (bin, idx) = encode_features(&data.features);
    out.write_bytes("features.bin", &bin)?;
    out.write_bytes("features.idx", idx.as_bytes())?;
    if let Some(ev) = &data.evidence {
        let (bin, idx) = encode_features(ev);
        out.write_bytes("evidence.bin", &bin)?;
        out.write_bytes("evidence.idx", idx.as_bytes())?;
    }
    let truth = serde_json::to_string_pretty(&data.truth).expect("ground truth serializes");
    out.write_bytes("truth.json", truth.as_bytes())?;
    println!(
        "generated {} edges over {} systems into {}",
        data.edges.len(),
        data.truth.systems.len(),
        out.dir().display()
    );
    out.finish(&ctx.cfg, ctx.jobs)
}

fn q_table(contracts: &ContractSet, rows: &[qoe_core::audit::QVector]) -> String {
    let mut s = String::from("group_id,n_edges");
    for n in contracts.names() {
        s.push(',');
        s.push_str(n);
    }
    s.push_str(",q_total\n");
    for q in rows {
        let _ = write!(s, "{},{}", q.group_id, q.n_edges);
        for r in &q.rates {
            let _ = write!(s, ",{}", f6(*r));
        }
        let _ = writeln!(s, ",{}", f6(q.q_total));
    }
    s
}

pub fn audit(ctx: &Ctx) -> CliResult<()> {
    let contracts = ctx.cfg.contracts.resolve()?;
    let mut out = ctx.outputs("audit")?;
    let edges = ctx.load_edges(&mut out)?;
    let view = ctx.cfg.views.view_a();
    let rows = group_q_vectors(&edges, &view, &contracts)?;
    out.write_csv("q_vectors.csv", &q_table(&contracts, &rows))?;

    let overall = q_vector(&edges, &contracts)?;
    let mut summary = format!(
        "contract set {} ({} contracts), view {}, {} groups, {} edges\n",
        contracts.label(),
        contracts.len(),
        view.label,
        rows.len(),
        edges.len()
    );
    let _ = write!(summary, "{:<20}", "group");
    for n in contracts.names() {
        let _ = write!(summary, " {n:>10}");
    }
    let _ = writeln!(summary, " {:>10}", "q_total");
    for q in rows.iter().chain(std::iter::once(&overall)) {
        let _ = write!(summary, "{:<20}", q.group_id);
        for r in &q.rates {
            let _ = write!(summary, " {r:>10.4}");
        }
        let _ = writeln!(summary, " {:>10.4}", q.q_total);
    }
    print!("{summary}");
    out.write_bytes("audit_summary.txt", summary.as_bytes())?;
    out.finish(&ctx.cfg, ctx.jobs)
}

pub fn drift(ctx: &Ctx) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let contracts = cfg.contracts.resolve()?;
    let boot = cfg.bootstrap(ctx.jobs > 1);
    if cfg.drift.bootstrap {
        boot.validate()?;
    }
    let mut out = ctx.outputs("drift")?;
    let edges = ctx.load_edges(&mut out)?;
    let (a, b) = (cfg.views.view_a(), cfg.views.view_b());
    let mut inputs = DriftInputs::new(&edges, &a, &b, &contracts)?;
    if cfg.drift.mos_hat {
        let fit = train_graph_only_baseline(&edges, &cfg.baseline)?;
        inputs = inputs.with_mos_column("mos_hat", fit.predictions)?;
    }
    let report = if cfg.drift.bootstrap {
        ctx.pool()?
            .install(|| drift_with_bootstrap(&inputs, &a, &b, cfg.views.weighting, &boot))?
    } else {
        drift_points(&inputs, &a, &b, cfg.views.weighting)
    };
    out.write_csv("drift.csv", &report.to_csv())?;
    let table = report.to_table();
    print!("{table}");
    out.write_bytes("drift_summary.txt", table.as_bytes())?;
    out.finish(cfg, ctx.jobs)
}

pub fn bin_gain_cmd(ctx: &Ctx) -> CliResult<()> {
    let contracts = ctx.cfg.contracts.resolve()?;
    let mut out = ctx.outputs("bin-gain")?;
    let edges = ctx.load_edges(&mut out)?;
    let rows = bin_gain(&edges, &contracts, ctx.cfg.bin_gain.step)?;
    let mut csv = String::from("bin_center,n,q_total_range\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{}", f6(r.center), r.n, opt6(r.range()));
    }
    out.write_csv("bin_gain.csv", &csv)?;
    let widest = rows
        .iter()
        .filter_map(|r| r.range().map(|g| (g, r.center)))
        .max_by(|x, y| x.0.total_cmp(&y.0));
    if let Some((g, c)) = widest {
        println!(
            "largest within-bin Q_total range {g:.4} at MOS {c:.4} ({} bins)",
            rows.len()
        );
    }
    out.finish(&ctx.cfg, ctx.jobs)
}

/// One row of the metrics table.
struct MetricRow {
    model: String,
    frac: f64,
    seed: u64,
    batch: Option<PredictionBatch>,
    graph_error: Option<f64>,
    error: Option<String>,
}

struct TrainCell<'a> {
    ctx: &'a Ctx,
    contracts: &'a ContractSet,
    features: &'a FeatureStore,
    evidence: Option<&'a FeatureStore>,
    train: EdgeSet,
    test: EdgeSet,
    frac: f64,
    split_seed: u64,
    model_seed: u64,
}

impl TrainCell<'_> {
    fn run(&self, name: &str) -> (MetricRow, Option<(String, Vec<u8>)>) {
        let mut row = MetricRow {
            model: name.to_string(),
            frac: self.frac,
            seed: self.split_seed,
            batch: None,
            graph_error: None,
            error: None,
        };
        let mut ckpt = None;
        let result: CliResult<()> = (|| {
            let m = &self.ctx.cfg.model;
            let aud = m.auditor(self.model_seed, self.contracts.label());
            let data = TrainingData::new(&self.train, self.features).with_evidence(self.evidence);
            let ev = self.evidence;
            let nn = match name {
                "mos_mlp" => Some(train_mos_mlp(&data, &aud)?),
                "c1" => Some(train_contract_auditor(&data, self.contracts, &aud)?),
                "id_contract" => Some(ablation_id_contract(&data, self.contracts, &aud)?),
                "no_local_evidence" => {
                    Some(ablation_no_local_evidence(&data, self.contracts, &aud)?)
                }
                _ => None,
            };
            let batch = match (name, &nn) {
                (_, Some(model)) => {
                    if self.ctx.cfg.train.save_checkpoints {
                        let file = format!(
                            "checkpoints/{name}_seed{}_frac{}.ckpt",
                            self.split_seed, self.frac
                        );
                        ckpt = Some((file, checkpoint::encode_checkpoint(model)?));
                    }
                    model.evaluate(&self.test, self.features, ev, Some(self.contracts))?
                }
                ("knn", None) => {
                    let k = m.knn_k.min(self.train.len());
                    let mem = KnnMemory::fit(&self.train, self.features, k)?;
                    PredictionBatch {
                        mos_pred: mem.predict_edges(&self.test, self.features)?,
                        mos_true: self.test.mos_values(),
                        ..Default::default()
                    }
                }
                ("graph_only", None) => {
                    let fit = train_graph_only_baseline(&self.train, &self.ctx.cfg.baseline)?;
                    PredictionBatch {
                        mos_pred: fit.predict(&self.test)?,
                        mos_true: self.test.mos_values(),
                        ..Default::default()
                    }
                }
                _ => return Err(CliError::Config(format!("unknown model {name:?}"))),
            };
            if !batch.probs.is_empty() {
                row.graph_error = Some(group_difficulty(
                    &self.test,
                    &self.ctx.cfg.views.view_a(),
                    self.contracts,
                    &batch.probs,
                    QHatMode::Threshold,
                )?);
            }
            row.batch = Some(batch);
            Ok(())
        })();
        row.error = result.err().map(|e| e.to_string());
        (row, ckpt)
    }
}

pub fn train(ctx: &Ctx) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let contracts = cfg.contracts.resolve()?;
    if let Some(bad) = cfg
        .train
        .models
        .iter()
        .find(|m| !MODEL_NAMES.contains(&m.as_str()))
    {
        return Err(CliError::Config(format!(
            "unknown model {bad:?} (expected one of {})",
            MODEL_NAMES.join(", ")
        )));
    }
    let mut out = ctx.outputs("train")?;
    let edges = ctx.load_edges(&mut out)?;
    let (features, evidence) = ctx.load_features()?;
    let splits = make_splits(edges.len(), &cfg.split)?;

    let mut cells = Vec::new();
    for s in &splits {
        let test = edges.subset(&s.test)?;
        for (xi, (frac, idx)) in s.train.iter().enumerate() {
            cells.push(TrainCell {
                ctx,
                contracts: &contracts,
                features: &features,
                evidence: evidence.as_ref(),
                train: edges.subset(idx)?,
                test: test.clone(),
                frac: *frac,
                split_seed: s.seed,
                model_seed: derive_seed(cfg.seed, &[s.seed, xi as u64]),
            });
        }
    }
    let jobs: Vec<(&TrainCell, &String)> = cells
        .iter()
        .flat_map(|c| cfg.train.models.iter().map(move |m| (c, m)))
        .collect();
    let results: Vec<_> = ctx
        .pool()?
        .install(|| jobs.par_iter().map(|(c, m)| c.run(m)).collect());

    let mut csv = String::from(
        "model,contract_set,train_frac,seed,mos_mae,mos_rmse,auprc,f1_at_0.5,brier,ece,graph_error\n",
    );
    let mut failures = 0;
    for (row, ckpt) in &results {
        if let Some((file, bytes)) = ckpt {
            out.write_bytes(file, bytes)?;
        }
        let mut fields = vec![String::new(); 7];
        if let Some(e) = &row.error {
            failures += 1;
            out.note(format!(
                "{} (seed {}, fraction {}) failed: {e}",
                row.model, row.seed, row.frac
            ));
        } else if let Some(b) = &row.batch {
            fields[0] = f6(b.mos_mae()?);
            fields[1] = f6(b.mos_rmse()?);
            if let Some(m) = b.contract_metrics(cfg.train.averaging)? {
                fields[2] = f6(m.auprc);
                fields[3] = f6(m.f1_at_half);
                fields[4] = f6(m.brier);
                fields[5] = f6(m.ece);
            }
            fields[6] = opt6(row.graph_error);
        }
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            row.model,
            contracts.label(),
            row.frac,
            row.seed,
            fields.join(",")
        );
    }
    out.write_csv("metrics.csv", &csv)?;
    println!(
        "trained {} model runs over {} splits; metrics in {}",
        results.len(),
        cells.len(),
        out.dir().join("metrics.csv").display()
    );
    out.finish(cfg, ctx.jobs)?;
    if failures > 0 {
        return Err(CliError::Partial(format!(
            "{failures} model runs failed; completed rows were written"
        )));
    }
    Ok(())
}

pub fn difficulty(ctx: &Ctx) -> CliResult<()> {
    let cfg = &ctx.cfg;
    let families = cfg
        .difficulty
        .families
        .iter()
        .map(|f| builtin_family_by_name(f))
        .collect::<qoe_core::Result<Vec<_>>>()?;
    let c1 = AuditorPredictor {
        config: cfg.model.auditor(cfg.seed, ""),
    };
    let predictor: &dyn ContractPredictor = match cfg.difficulty.predictor.as_str() {
        "c1" => &c1,
        "oracle" => &OraclePredictor,
        "random" => &RandomCoinPredictor,
        other => {
            return Err(CliError::Config(format!(
                "unknown predictor {other:?} (expected c1, oracle or random)"
            )))
        }
    };
    c1.config.validate()?;
    let mut out = ctx.outputs("difficulty")?;
    let edges = ctx.load_edges(&mut out)?;
    let (features, evidence) = match cfg.difficulty.predictor.as_str() {
        "c1" => {
            let (f, e) = ctx.load_features()?;
            (Some(f), e)
        }
        _ => (None, None),
    };
    // non-learning predictors never read features
    let placeholder = FeatureStore::new(1)?;
    let data = TrainingData::new(&edges, features.as_ref().unwrap_or(&placeholder))
        .with_evidence(evidence.as_ref());
    let opts = DifficultyOptions {
        q_hat: cfg.difficulty.q_hat,
        parallel: ctx.jobs > 1,
        seed: cfg.seed,
    };
    let view = ViewSpec::new(&cfg.difficulty.view);
    let table = ctx
        .pool()?
        .install(|| difficulty_curve(&data, &families, &cfg.split, &view, predictor, &opts))?;
    out.write_csv("difficulty.csv", &table.to_csv())?;
    let failed: Vec<_> = table.cells.iter().filter(|c| c.d.is_none()).collect();
    for c in &failed {
        out.note(format!(
            "cell {} / {} / {} failed: {}",
            c.family,
            c.fraction,
            c.seed,
            c.error.as_deref().unwrap_or("unknown error")
        ));
    }
    for (family, fraction, d) in table.seed_means() {
        println!("{family:<8} fraction {fraction:<5} mean D {}", opt6(d));
    }
    let n_failed = failed.len();
    out.finish(cfg, ctx.jobs)?;
    if n_failed > 0 {
        return Err(CliError::Partial(format!(
            "{n_failed} of {} cells failed; completed cells were written",
            table.cells.len()
        )));
    }
    Ok(())
}
