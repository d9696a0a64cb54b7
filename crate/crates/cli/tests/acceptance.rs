//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use qoe_core::audit::{
    bin_gain, bootstrap_ci, drift_points, partition, q_vector, view_drift, BootstrapConfig,
    DriftInputs, DriftWeighting, IndicatorTable, ViewSpec,
};
use qoe_core::contract::{builtin_family, degenerate_mos_family, BuiltinFamily, ContractSet};
use qoe_core::io::{ingest_edges, write_edges_file, EdgeFormat, SchemaMap};
use qoe_core::metrics::{average_precision, brier, ece, f1_at, mae, rmse, Averaging};
use qoe_core::model::network::LossWeights;
use qoe_core::model::train::init_network;
use qoe_core::model::{
    ablation_no_local_evidence, difficulty_curve, grad_check_with, make_splits,
    train_contract_auditor, train_graph_only_baseline, AuditorConfig, AuditorPredictor,
    DifficultyOptions, DifficultyTable, GradBatch, GraphBaselineConfig, HeadMode, OraclePredictor,
    RandomCoinPredictor, SplitPlan, TrainingData,
};
use qoe_core::ratings::{compute_stats, EdgeRecord, EdgeSet};
use qoe_core::seed;
use qoe_core::synth::{bottleneck_config, generate, learnable_config, p1_scenario};
use rand::Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(
        elapsed < limit,
        format!("took {elapsed:.2?}, limit {limit:?}"),
    )
}

fn edge(id: &str, sys: &str, ty: &str, ratings: &[u8]) -> EdgeRecord {
    EdgeRecord::with_attrs(
        id,
        ratings.to_vec(),
        [("system_id", sys), ("system_type", ty)],
    )
    .unwrap()
}

fn random_edges(rng: &mut impl Rng, max_edges: usize) -> (EdgeSet, Vec<Vec<u8>>) {
    let n = rng.random_range(1..=max_edges);
    let vectors: Vec<Vec<u8>> = (0..n)
        .map(|_| {
            let j = rng.random_range(1..=7);
            (0..j).map(|_| rng.random_range(1..=5u8)).collect()
        })
        .collect();
    let edges = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| edge(&format!("e{i}"), &format!("s{}", i % 4), "t", v))
        .collect();
    (EdgeSet::from_edges(edges).unwrap(), vectors)
}

fn all_vectors(max_len: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<u8>> = vec![vec![]];
    for _ in 0..max_len {
        frontier = frontier
            .iter()
            .flat_map(|v| (1..=5u8).map(move |r| [v.as_slice(), &[r]].concat()))
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

fn c01_contract_oracle() -> Check {
    let t = Instant::now();
    let mid = builtin_family(BuiltinFamily::Mid);
    let vectors = all_vectors(3);
    ensure(vectors.len() == 155, format!("{} vectors", vectors.len()))?;
    for v in &vectors {
        let n = v.len() as i64;
        let s: i64 = v.iter().map(|&x| x as i64).sum();
        let ss: i64 = v.iter().map(|&x| (x as i64).pow(2)).sum();
        let range = (*v.iter().max().unwrap() - *v.iter().min().unwrap()) as i64;
        let lenient = s >= 3 * n;
        let strict = s >= 4 * n;
        let fair = 100 * (n * ss - s * s) <= 49 * n * n && range <= 2;
        let expect = vec![lenient, strict, fair, lenient && fair];
        let got = mid.indicators(&compute_stats(v).unwrap());
        ensure(got == expect, format!("{v:?}: {got:?} vs {expect:?}"))?;
        ensure(
            got[3] == (got[0] && got[2]),
            format!("consensus mismatch on {v:?}"),
        )?;
    }
    within(t.elapsed(), Duration::from_secs(1))?;
    Ok(format!("155 vectors exact in {:.2?}", t.elapsed()))
}

fn c02_q_vector_oracle() -> Check {
    let mut rng = seed::rng(2, &[]);
    let contracts = builtin_family(BuiltinFamily::Full);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (set, vectors) = random_edges(&mut rng, 50);
        let q = q_vector(&set, &contracts).map_err(|e| e.to_string())?;
        for (c, nc) in contracts.contracts().iter().enumerate() {
            let hits = vectors
                .iter()
                .filter(|v| nc.expr.eval(&compute_stats(v).unwrap()))
                .count();
            worst = worst.max((q.rates[c] - hits as f64 / vectors.len() as f64).abs());
        }
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.reverse();
        order.rotate_left(rng.random_range(0..set.len()));
        let permuted = set.subset(&order).unwrap();
        let qp = q_vector(&permuted, &contracts).unwrap();
        let doubled: Vec<EdgeRecord> = set
            .iter()
            .chain(set.iter())
            .enumerate()
            .map(|(i, e)| {
                EdgeRecord::new(
                    format!("d{i}"),
                    e.ratings().to_vec(),
                    e.attrs().clone(),
                    None,
                )
                .unwrap()
            })
            .collect();
        let qd = q_vector(&EdgeSet::from_edges(doubled).unwrap(), &contracts).unwrap();
        for (a, (b, c)) in q.rates.iter().zip(qp.rates.iter().zip(&qd.rates)) {
            worst = worst.max((a - b).abs()).max((a - c).abs());
        }
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    Ok(format!("100 sets, max deviation {worst:e}"))
}

fn c03_p0_reduction() -> Check {
    let tau = degenerate_mos_family(3.0).unwrap();
    let mid = builtin_family(BuiltinFamily::Mid);
    let mut checked = 0;
    for s in 0..5 {
        let data = p1_scenario(s);
        let a = IndicatorTable::new(&data.edges, &tau);
        let b = IndicatorTable::new(&data.edges, &mid);
        for e in 0..a.len() {
            ensure(
                a.row(e)[0] == b.row(e)[0],
                format!("edge {e} of scenario {s}"),
            )?;
            checked += 1;
        }
        for row in bin_gain(&data.edges, &tau, 0.125).unwrap() {
            let straddles = row.lower < 3.0 && 3.0 < row.upper;
            if !straddles {
                ensure(
                    row.range().unwrap_or(0.0) == 0.0,
                    format!("bin {} range {:?}", row.center, row.range()),
                )?;
            }
        }
    }
    Ok(format!(
        "{checked} edges identical to lenient; non-straddling bins pure"
    ))
}

fn c04_heterogeneity_witness() -> Check {
    let set = EdgeSet::from_edges(vec![
        edge("tight", "a", "t", &[3, 4, 4, 4, 3]),
        edge("split", "a", "t", &[1, 5, 5, 5, 2]),
    ])
    .unwrap();
    let mid = builtin_family(BuiltinFamily::Mid);
    let table = IndicatorTable::new(&set, &mid);
    ensure(table.mos() == [3.6, 3.6], format!("MOS {:?}", table.mos()))?;
    ensure(
        table.edge_q_total() == [0.75, 0.25],
        format!("Q_total {:?}", table.edge_q_total()),
    )?;
    let rows = bin_gain(&set, &mid, 0.125).unwrap();
    let ranges: Vec<f64> = rows.iter().filter_map(|r| r.range()).collect();
    ensure(ranges == [0.5], format!("ranges {ranges:?}"))?;
    Ok("equal MOS 3.6, Q_total 0.75 vs 0.25, within-bin range 0.5".into())
}

fn c05_drift_sanity() -> Check {
    let mid = builtin_family(BuiltinFamily::Mid);
    let data = p1_scenario(11);
    let sys = ViewSpec::new("system_id");
    let same = view_drift(&data.edges, &sys, &sys, &mid, DriftWeighting::Edge).unwrap();
    ensure(
        same.rows.iter().all(|r| r.point == 0.0),
        "identical views drift",
    )?;

    let relabeled: Vec<EdgeRecord> = data
        .edges
        .iter()
        .map(|e| {
            let mut attrs = e.attrs().clone();
            attrs.insert(
                "alias".into(),
                format!("renamed-{}", e.attr("system_id").unwrap()),
            );
            EdgeRecord::new(e.edge_id(), e.ratings().to_vec(), attrs, None).unwrap()
        })
        .collect();
    let relabeled = EdgeSet::from_edges(relabeled).unwrap();
    for w in [DriftWeighting::Edge, DriftWeighting::Group] {
        let r = view_drift(&relabeled, &sys, &ViewSpec::new("alias"), &mid, w).unwrap();
        ensure(
            r.rows.iter().all(|r| r.point == 0.0),
            "bijective regrouping drift",
        )?;
    }

    let hand = EdgeSet::from_edges(vec![
        edge("a1", "a", "t", &[2, 2]),
        edge("a2", "a", "t", &[2, 2]),
        edge("b1", "b", "t", &[3, 3]),
        edge("b2", "b", "t", &[3, 3]),
    ])
    .unwrap();
    let r = view_drift(
        &hand,
        &sys,
        &ViewSpec::new("system_type"),
        &mid,
        DriftWeighting::Edge,
    )
    .unwrap();
    let d = r.point("mos").unwrap();
    ensure((d - 0.5).abs() <= 1e-12, format!("hand example drift {d}"))?;
    Ok(format!("zero drifts exact; hand example {d}"))
}

fn coverage_trial(trial: u64, n_resamples: usize) -> (bool, (f64, f64)) {
    let mut rng = seed::rng(6, &[trial]);
    let values: Vec<f64> = (0..500)
        .map(|_| (rng.random::<f64>() < 0.3) as u8 as f64)
        .collect();
    let cfg = BootstrapConfig {
        n_resamples,
        level: 0.95,
        seed: trial,
        parallel: true,
    };
    let ci = bootstrap_ci(
        values.len(),
        |s| Some(s.iter().map(|&i| values[i]).sum::<f64>() / s.len() as f64),
        &cfg,
    )
    .unwrap();
    (ci.lo <= 0.3 && 0.3 <= ci.hi, (ci.lo, ci.hi))
}

fn c06_bootstrap_coverage() -> Check {
    let t = Instant::now();
    let covered = (0..200).filter(|&i| coverage_trial(i, 1000).0).count();
    let rate = covered as f64 / 200.0;
    ensure(
        coverage_trial(7, 1000) == coverage_trial(7, 1000),
        "not deterministic per seed",
    )?;
    ensure((0.90..=0.99).contains(&rate), format!("coverage {rate}"))?;
    within(t.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "coverage {rate:.3} over 200 trials in {:.2?}",
        t.elapsed()
    ))
}

fn p1_drifts(seed_value: u64) -> (f64, f64, f64, f64) {
    let mid = builtin_family(BuiltinFamily::Mid);
    let (a, b) = (ViewSpec::new("system_id"), ViewSpec::new("system_type"));
    let data = p1_scenario(seed_value);
    let fit = train_graph_only_baseline(&data.edges, &GraphBaselineConfig::default()).unwrap();
    let inputs = DriftInputs::new(&data.edges, &a, &b, &mid)
        .unwrap()
        .with_mos_column("mos_hat", fit.predictions)
        .unwrap();
    let r = drift_points(&inputs, &a, &b, DriftWeighting::Edge);
    let p = |n: &str| r.point(n).unwrap();
    (p("mos"), p("mos_hat"), p("fair"), p("q_total"))
}

fn c07_p1_ordering() -> Check {
    let t = Instant::now();
    let (mut fair_wins, mut total_wins) = (0, 0);
    for s in 0..20 {
        let (mos, _, fair, q) = p1_drifts(s);
        fair_wins += (fair < mos) as usize;
        total_wins += (q < mos) as usize;
    }
    ensure(fair_wins >= 19, format!("fair below MOS in {fair_wins}/20"))?;
    ensure(
        total_wins >= 18,
        format!("Q_total below MOS in {total_wins}/20"),
    )?;
    within(t.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "fair < MOS {fair_wins}/20, Q_total < MOS {total_wins}/20"
    ))
}

fn c08_graph_baseline() -> Check {
    let mut worst: f64 = 0.0;
    for s in 0..20 {
        let (mos, hat, _, _) = p1_drifts(s);
        worst = worst.max((hat - mos).abs() / mos);
    }
    ensure(worst < 0.1, format!("max relative gap {worst}"))?;
    Ok(format!("max relative gap {worst:.2e} over 20 scenarios"))
}

fn c09_grad_check() -> Check {
    let (n, dim, k) = (12, 7, 4);
    let mut rng = seed::rng(9, &[]);
    let x: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y_mos: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
    let labels: Vec<f64> = (0..n * k)
        .map(|_| rng.random_bool(0.4) as u8 as f64)
        .collect();
    let batch = GradBatch {
        x,
        n,
        y_mos,
        labels,
    };
    let weights = LossWeights {
        mos: 1.0,
        contract: 1.0,
    };
    let mut notes = Vec::new();
    for head in [HeadMode::Structured, HeadMode::IdEmbedding] {
        let cfg = AuditorConfig {
            hidden_dims: vec![16, 8],
            head_mode: head,
            embedding_dim: 6,
            seed: 3,
            ..Default::default()
        };
        let net = init_network(&cfg, dim, k, 3.0);
        let rep = grad_check_with(&net, &batch, weights, 1e-3, 150, 0);
        ensure(
            rep.checked >= 100,
            format!("{head:?}: only {} parameters checked", rep.checked),
        )?;
        ensure(
            rep.max_rel_error < 1e-4,
            format!("{head:?}: max relative error {:e}", rep.max_rel_error),
        )?;
        notes.push(format!(
            "{head:?} {:.1e} on {}",
            rep.max_rel_error, rep.checked
        ));
    }
    Ok(notes.join(", "))
}

fn holdout(edges: &EdgeSet) -> (EdgeSet, EdgeSet) {
    let plan = SplitPlan {
        train_fractions: vec![1.0],
        seeds: vec![13],
        ..Default::default()
    };
    let split = &make_splits(edges.len(), &plan).unwrap()[0];
    (
        edges.subset(&split.train[0].1).unwrap(),
        edges.subset(&split.test).unwrap(),
    )
}

fn c10_learnability() -> Check {
    let t = Instant::now();
    let mid = builtin_family(BuiltinFamily::Mid);
    let cfg = AuditorConfig::default();
    let err = |e: qoe_core::Error| e.to_string();

    let data = generate(&learnable_config(10, 100)).map_err(err)?;
    let (train, test) = holdout(&data.edges);
    let ev = data.evidence.as_ref();
    let td = TrainingData::new(&train, &data.features).with_evidence(ev);
    let model = train_contract_auditor(&td, &mid, &cfg).map_err(err)?;
    let m = model
        .evaluate(&test, &data.features, ev, Some(&mid))
        .and_then(|b| b.contract_metrics(Averaging::Macro))
        .map_err(err)?
        .expect("contract head");
    ensure(m.auprc > 0.95, format!("AUPRC {}", m.auprc))?;
    ensure(m.ece < 0.05, format!("ECE {}", m.ece))?;

    let data = generate(&bottleneck_config(10, 100)).map_err(err)?;
    let (train, test) = holdout(&data.edges);
    let ev = data.evidence.as_ref();
    let td = TrainingData::new(&train, &data.features).with_evidence(ev);
    let fair = mid.index_of("fair").unwrap();
    let score = |b: qoe_core::metrics::PredictionBatch| {
        let col = |rows: &[Vec<f64>]| rows.iter().map(|r| vec![r[fair]]).collect::<Vec<_>>();
        let labels: Vec<Vec<bool>> = b.labels.iter().map(|r| vec![r[fair]]).collect();
        let f1 = f1_at(&col(&b.probs), &labels, 0.5, Averaging::Macro).unwrap();
        (f1, b.mos_mae().unwrap())
    };
    let full = train_contract_auditor(&td, &mid, &cfg).map_err(err)?;
    let (f1_full, mae_full) = score(
        full.evaluate(&test, &data.features, ev, Some(&mid))
            .map_err(err)?,
    );
    let ablated = ablation_no_local_evidence(&td, &mid, &cfg).map_err(err)?;
    let (f1_abl, mae_abl) = score(
        ablated
            .evaluate(&test, &data.features, ev, Some(&mid))
            .map_err(err)?,
    );
    ensure(
        f1_full - f1_abl > 0.2,
        format!("fair F1 {f1_full} -> {f1_abl}"),
    )?;
    ensure(
        (mae_full - mae_abl).abs() < 0.02,
        format!("MAE {mae_full} -> {mae_abl}"),
    )?;
    within(t.elapsed(), Duration::from_secs(600))?;
    Ok(format!(
        "AUPRC {:.4}, ECE {:.4}; fair F1 {f1_full:.3} -> {f1_abl:.3}, MAE {mae_full:.4} -> {mae_abl:.4}",
        m.auprc, m.ece
    ))
}

fn c11_metric_units() -> Check {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    let half = vec![vec![0.5]; 4];
    let labels = vec![vec![true], vec![false], vec![true], vec![false]];
    ensure(brier(&half, &labels).unwrap() == 0.25, "Brier 0.25 case")?;
    ensure(ece(&half, &labels, 10).unwrap() == 0.0, "ECE 0.0 case")?;
    let conf = vec![vec![0.75]; 4];
    let yes = vec![vec![true]; 4];
    ensure(close(ece(&conf, &yes, 10).unwrap(), 0.25), "ECE 0.25 case")?;
    ensure(
        average_precision(&[0.9, 0.1], &[false, true]) == Some(0.5),
        "AP 0.5 case",
    )?;
    ensure(
        mae(&[1.0, 2.0, 3.0], &[2.0, 2.0, 5.0]).unwrap() == 1.0,
        "MAE case",
    )?;
    ensure(
        close(
            rmse(&[1.0, 2.0, 3.0], &[2.0, 2.0, 5.0]).unwrap(),
            (5.0f64 / 3.0).sqrt(),
        ),
        "RMSE case",
    )?;
    ensure(
        rmse(&[3.0, 3.0], &[3.0, 3.0]).unwrap() == 0.0,
        "RMSE zero case",
    )?;
    Ok("Brier, ECE, AP, MAE, RMSE hand cases".into())
}

/// Exact E|B/N - q| for B ~ Binomial(N, 1/2).
fn coin_expectation(n: usize, q: f64) -> f64 {
    let mut pmf = 0.5f64.powi(n as i32);
    let mut e = 0.0;
    for b in 0..=n {
        e += pmf * (b as f64 / n as f64 - q).abs();
        pmf *= (n - b) as f64 / (b + 1) as f64;
    }
    e
}

fn coin_closed_form(
    edges: &EdgeSet,
    family: &ContractSet,
    plan: &SplitPlan,
    view: &ViewSpec,
) -> BTreeMap<String, f64> {
    let k_sub = family.q_total_subset().len();
    let mut per_split = Vec::new();
    for split in make_splits(edges.len(), plan).unwrap() {
        let test = edges.subset(&split.test).unwrap();
        let part = partition(&test, view).unwrap();
        let mut sum = 0.0;
        for (_, idx) in part.iter() {
            let q = q_vector(&test.subset(idx).unwrap(), family)
                .unwrap()
                .q_total;
            sum += coin_expectation(idx.len() * k_sub, q);
        }
        per_split.push(sum / part.len() as f64);
    }
    let mean = per_split.iter().sum::<f64>() / per_split.len() as f64;
    plan.train_fractions
        .iter()
        .map(|f| (format!("{}/{f}", family.label()), mean))
        .collect()
}

fn check_layout(table: &DifficultyTable) -> Result<(), String> {
    let csv = table.to_csv();
    let mut lines = csv.lines();
    ensure(lines.next() == Some("family,fraction,seed,D"), "header")?;
    ensure(lines.count() == 27 + 9, "row count")?;
    ensure(
        table.cells.iter().all(|c| c.d.is_some_and(f64::is_finite)),
        "missing cells",
    )
}

fn c12_difficulty_pipeline() -> Check {
    let t = Instant::now();
    let data = generate(&learnable_config(12, 200)).map_err(|e| e.to_string())?;
    ensure(data.edges.len() == 2000, "dataset size")?;
    let families: Vec<ContractSet> = BuiltinFamily::ALL.into_iter().map(builtin_family).collect();
    let plan = SplitPlan::default();
    let view = ViewSpec::new("system_id");
    let td = TrainingData::new(&data.edges, &data.features).with_evidence(data.evidence.as_ref());
    let opts = DifficultyOptions {
        parallel: true,
        ..Default::default()
    };
    let run = |p: &dyn qoe_core::model::ContractPredictor| {
        difficulty_curve(&td, &families, &plan, &view, p, &opts).map_err(|e| e.to_string())
    };

    let c1 = run(&AuditorPredictor {
        config: AuditorConfig::default(),
    })?;
    check_layout(&c1)?;
    let c1_time = t.elapsed();
    within(c1_time, Duration::from_secs(300))?;

    let oracle = run(&OraclePredictor)?;
    check_layout(&oracle)?;
    ensure(
        oracle.cells.iter().all(|c| c.d == Some(0.0)),
        "oracle D not zero",
    )?;

    let coin = run(&RandomCoinPredictor)?;
    check_layout(&coin)?;
    let mut expected = BTreeMap::new();
    for f in &families {
        expected.extend(coin_closed_form(&data.edges, f, &plan, &view));
    }
    let mut worst: f64 = 0.0;
    for (family, fraction, d) in coin.seed_means() {
        let want = expected[&format!("{family}/{fraction}")];
        worst = worst.max((d.unwrap() - want).abs());
    }
    ensure(
        worst <= 0.02,
        format!("random coin off closed form by {worst}"),
    )?;
    Ok(format!(
        "C1 grid in {c1_time:.2?}; oracle D = 0; coin within {worst:.4} of closed form"
    ))
}

fn cli(dir: &Path, out: &str, args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_qoe-audit"))
        .current_dir(dir)
        .args(["--out", out, "--jobs", "2"])
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        o.status.success(),
        format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)),
    )
}

fn report_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with(".json") || p.ends_with("truth.json") {
                out.insert(
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn c13_reproducibility() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    let small = [
        "--set",
        "gen.scenario=learnable",
        "--set",
        "gen.edges_per_system=30",
        "--set",
        "model.epochs=5",
        "--set",
        "model.hidden_dims=[16]",
        "--set",
        "bootstrap.n_resamples=100",
        "--seed",
        "4",
    ];
    let data = [
        "--set",
        "data.edges=gen/edges.jsonl",
        "--set",
        "data.features=gen/features.bin",
        "--set",
        "data.evidence=gen/evidence.bin",
    ];
    let mut compared = 0;
    for run in ["r1", "r2"] {
        cli(
            dir,
            &format!("{run}/gen"),
            &small.iter().chain(&["gen"]).copied().collect::<Vec<_>>(),
        )?;
    }
    let a = report_files(&dir.join("r1/gen"));
    ensure(a == report_files(&dir.join("r2/gen")), "gen outputs differ")?;
    compared += a.len();
    std::fs::rename(dir.join("r1/gen"), dir.join("gen")).unwrap();
    for cmd in ["audit", "drift", "bin-gain", "train", "difficulty"] {
        for run in ["r1", "r2"] {
            let args: Vec<&str> = small.iter().chain(&data).chain(&[cmd]).copied().collect();
            cli(dir, &format!("{run}/{cmd}"), &args)?;
        }
        let a = report_files(&dir.join(format!("r1/{cmd}")));
        ensure(!a.is_empty(), format!("{cmd} wrote nothing"))?;
        ensure(
            a == report_files(&dir.join(format!("r2/{cmd}"))),
            format!("{cmd} outputs differ"),
        )?;
        compared += a.len();
    }

    let generated = generate(&learnable_config(4, 30)).unwrap();
    let schema = SchemaMap::identity(["system_id", "system_type", "utterance_id"]);
    for format in [EdgeFormat::Csv, EdgeFormat::Jsonl] {
        let path = dir.join(format!("round.{format}"));
        write_edges_file(&generated.edges, format, &path).unwrap();
        let back = ingest_edges(&path, format, &schema, true)
            .map_err(|e| e.to_string())?
            .edges;
        ensure(back.len() == generated.edges.len(), "edge count changed")?;
        for (x, y) in back.iter().zip(&generated.edges) {
            ensure(
                x.stats() == y.stats() && x.ratings() == y.ratings(),
                format!("{format}: {}", x.edge_id()),
            )?;
        }
    }
    Ok(format!(
        "{compared} output files byte-identical across reruns; csv/jsonl round trips exact"
    ))
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("contract evaluation oracle", c01_contract_oracle),
        ("q-vector oracle", c02_q_vector_oracle),
        ("single-threshold reduction", c03_p0_reduction),
        ("equal-MOS heterogeneity witness", c04_heterogeneity_witness),
        ("drift sanity", c05_drift_sanity),
        ("bootstrap coverage", c06_bootstrap_coverage),
        ("view drift ordering", c07_p1_ordering),
        ("graph-only baseline drift", c08_graph_baseline),
        ("gradient check", c09_grad_check),
        ("learnability", c10_learnability),
        ("metric unit cases", c11_metric_units),
        ("difficulty pipeline", c12_difficulty_pipeline),
        ("reproducibility", c13_reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(msg) => println!("PASS {:>2} {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
