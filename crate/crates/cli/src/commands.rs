use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use nodemixup::diagnostics::{
    avg_sp_by_degree, cka_by_bucket, pearson_rc_vs_score, rc_buckets, reaching_coefficient, representations,
    NUM_BUCKETS,
};
use nodemixup::gradcheck::{run_gradcheck, ToyGraph};
use nodemixup::graphio::{generate_sbm, import_linqs, load_dataset, make_split, save_dataset, SbmConfig};
use nodemixup::trainer::{grid_search, metrics_to_tsv, train_multi, GridSpec};
use nodemixup::{Dataset, ModelParams, TrainConfig};
use serde::Serialize;
use serde_json::json;

use crate::args::{
    ConvertArgs, DiagnoseArgs, DiagnoseKind, GradcheckArgs, GridAxis, Overrides, SplitArgs, SweepArgs, SynthArgs,
    TrainArgs,
};
use crate::output::{dataset_fingerprint, RunDir};
use crate::UsageError;

fn load(dir: &Path) -> Result<(Dataset, String)> {
    let d = load_dataset(dir).with_context(|| format!("loading dataset from {}", dir.display()))?;
    Ok((d, dataset_fingerprint(dir)?))
}

fn describe(d: &Dataset) -> String {
    let s = d.split();
    format!(
        "nodes={} edges={} features={} classes={} labeled={} valid={} test={}",
        d.num_nodes(),
        d.edges().len(),
        d.num_features(),
        d.num_classes(),
        s.labeled.len(),
        s.valid.len(),
        s.test.len()
    )
}

fn write_dataset(run: &RunDir, d: &Dataset, config: &impl Serialize) -> Result<()> {
    save_dataset(d, run.path())?;
    let fp = dataset_fingerprint(run.path())?;
    run.finish(config, Some(fp))?;
    println!("{}", describe(d));
    Ok(())
}

pub fn synth(a: SynthArgs) -> Result<ExitCode> {
    let cfg = SbmConfig {
        num_classes: a.classes,
        nodes_per_class: a.per_class,
        p_in: a.p_in,
        p_out: a.p_out,
        feature_dim: a.feature_dim,
        feature_noise: a.noise,
        seed: a.seed,
        labels_per_class: a.labels_per_class,
        valid_per_class: a.valid_per_class,
    };
    let d = generate_sbm(&cfg).map_err(|e| UsageError(e.to_string()))?;
    let run = RunDir::create(&a.out.out, a.out.force)?;
    write_dataset(&run, &d, &cfg)?;
    Ok(ExitCode::SUCCESS)
}

pub fn convert(a: ConvertArgs) -> Result<ExitCode> {
    let (d, classes) = import_linqs(&a.content, &a.cites)?;
    let split = make_split(&d, a.labels_per_class, a.valid_per_class, a.seed)?;
    let d = d.with_split(split)?;
    let run = RunDir::create(&a.out.out, a.out.force)?;
    run.write("classes.txt", classes.join("\n") + "\n")?;
    let config = json!({
        "content": a.content,
        "cites": a.cites,
        "labels_per_class": a.labels_per_class,
        "valid_per_class": a.valid_per_class,
        "seed": a.seed,
    });
    write_dataset(&run, &d, &config)?;
    Ok(ExitCode::SUCCESS)
}

pub fn split(a: SplitArgs) -> Result<ExitCode> {
    let (d, source_fp) = load(&a.data)?;
    let split = make_split(&d, a.labels_per_class, a.valid_per_class, a.seed)?;
    let d = d.with_split(split)?;
    let run = RunDir::create(&a.out.out, a.out.force)?;
    let config = json!({
        "source": a.data,
        "source_fingerprint": source_fp,
        "labels_per_class": a.labels_per_class,
        "valid_per_class": a.valid_per_class,
        "seed": a.seed,
    });
    write_dataset(&run, &d, &config)?;
    Ok(ExitCode::SUCCESS)
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(o: &Overrides) -> Result<TrainConfig> {
    let mut cfg = match &o.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    o.apply(&mut cfg);
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}

fn seed_file(dir: &str, seed: u64, ext: &str) -> String {
    format!("{dir}/seed-{seed}.{ext}")
}

pub fn train(a: TrainArgs) -> Result<ExitCode> {
    let cfg = resolve_config(&a.overrides)?;
    let (d, fp) = load(&a.data)?;
    let run = RunDir::create(&a.out.out, a.out.force)?;
    log::info!("training {} seed(s) on {}", cfg.seeds.len(), describe(&d));
    let result = train_multi(&d, &cfg, a.jobs)?;

    let mut timing = String::from("seed\tepoch\tseconds\n");
    for o in &result.outcomes {
        run.write(&seed_file("metrics", o.seed, "tsv"), metrics_to_tsv(&o.history))?;
        run.write(&seed_file("checkpoints", o.seed, "ckpt"), o.params.to_text())?;
        for (e, s) in o.epoch_seconds.iter().enumerate() {
            let _ = writeln!(timing, "{}\t{e}\t{s}", o.seed);
        }
    }
    run.write("timing.tsv", timing)?;
    run.write_json("config.json", &cfg)?;
    run.write_json(
        "summary.json",
        &json!({ "test": result.test, "val": result.val, "per_seed": result.per_seed }),
    )?;
    run.finish(&cfg, Some(fp))?;
    println!(
        "test_acc mean={:.4} std={:.4} stderr={:.4} n={}",
        result.test.mean, result.test.std, result.test.stderr, result.test.n
    );
    Ok(ExitCode::SUCCESS)
}

fn build_grid(axes: &[GridAxis], base: &TrainConfig) -> GridSpec {
    let mut grid = GridSpec::single(&base.mixup);
    for axis in axes {
        match axis {
            GridAxis::Standard => grid = GridSpec::standard(),
            GridAxis::Values(key, values) => {
                let slot = match key.as_str() {
                    "lambda_intra" => &mut grid.lambda_intra,
                    "lambda_inter" => &mut grid.lambda_inter,
                    "beta_s" => &mut grid.beta_s,
                    "beta_d" => &mut grid.beta_d,
                    _ => &mut grid.gamma,
                };
                *slot = values.clone();
            }
        }
    }
    grid
}

pub fn sweep(a: SweepArgs) -> Result<ExitCode> {
    let base = resolve_config(&a.overrides)?;
    let grid = build_grid(&a.grid, &base);
    let (d, fp) = load(&a.data)?;
    let run = RunDir::create(&a.out.out, a.out.force)?;
    log::info!("sweeping {} grid points x {} seed(s)", grid.len(), base.seeds.len());
    let result = grid_search(&d, &base, &grid, a.jobs)?;

    let mut sorted = result.clone();
    sorted
        .rows
        .sort_by(|x, y| y.val.mean.total_cmp(&x.val.mean).then(x.index.cmp(&y.index)));
    run.write("sweep.tsv", sorted.to_tsv())?;
    run.write_json("best.json", &result.best_config)?;
    run.write_json(
        "summary.json",
        &json!({
            "grid_points": result.rows.len(),
            "best_index": result.best_index,
            "best_val": result.rows[result.best_index].val,
            "test": result.best_run.test,
            "per_seed": result.best_run.per_seed,
        }),
    )?;
    run.finish(&json!({ "base": base, "grid": grid }), Some(fp))?;
    let best = &result.rows[result.best_index];
    println!(
        "best lambda_intra={} lambda_inter={} beta_s={} beta_d={} gamma={} val_mean={:.4} test_mean={:.4} test_std={:.4}",
        best.lambda_intra,
        best.lambda_inter,
        best.beta_s,
        best.beta_d,
        best.gamma,
        best.val.mean,
        result.best_run.test.mean,
        result.best_run.test.std
    );
    Ok(ExitCode::SUCCESS)
}

pub fn diagnose(a: DiagnoseArgs) -> Result<ExitCode> {
    let checkpoint = match a.kind {
        DiagnoseKind::Cka | DiagnoseKind::Pearson => {
            let p = a
                .checkpoint
                .as_ref()
                .ok_or_else(|| UsageError(format!("`diagnose {:?}` needs --checkpoint", a.kind).to_lowercase()))?;
            Some(ModelParams::load(p).with_context(|| format!("loading checkpoint {}", p.display()))?)
        }
        _ => None,
    };
    let (d, fp) = load(&a.data)?;
    let run = RunDir::create(&a.out.out, a.out.force)?;
    let g = d.graph();
    let labeled = &d.split().labeled;
    match a.kind {
        DiagnoseKind::Rc => {
            let rc = reaching_coefficient(&g, labeled)?;
            let buckets = rc_buckets(&rc);
            run.write("rc.tsv", rc.to_tsv())?;
            let mean = rc.rc.iter().sum::<f64>() / rc.rc.len().max(1) as f64;
            let sizes: Vec<usize> = buckets.members.iter().map(Vec::len).collect();
            run.write_json(
                "rc.json",
                &json!({ "diameter": rc.diameter, "unlabeled": rc.nodes.len(), "mean_rc": mean,
                         "max_rc": buckets.max_rc, "bucket_sizes": sizes }),
            )?;
            println!(
                "diameter={} unlabeled={} mean_rc={mean:.4} max_rc={:.4}",
                rc.diameter,
                rc.nodes.len(),
                buckets.max_rc
            );
        }
        DiagnoseKind::Avgsp => {
            let r = avg_sp_by_degree(&g, labeled)?;
            run.write("avgsp.tsv", r.to_tsv())?;
            let rho = r.degree_spearman().ok();
            run.write_json(
                "avgsp.json",
                &json!({ "diameter": r.diameter, "degree_groups": r.rows.len(), "spearman_degree_avgsp": rho }),
            )?;
            match rho {
                Some(v) => println!("spearman(degree, avg_sp)={v:.4}"),
                None => println!("spearman(degree, avg_sp)=NA"),
            }
        }
        DiagnoseKind::Cka => {
            let params = checkpoint.expect("checked above");
            let rc = reaching_coefficient(&g, labeled)?;
            let buckets = rc_buckets(&rc);
            let reps = representations(&d, &params)?;
            let report = cka_by_bucket(&reps, labeled, &buckets, a.seed, a.variant.into())?;
            run.write("cka.tsv", report.to_tsv())?;
            run.write_json("cka.json", &report)?;
            let cells: Vec<String> = (0..NUM_BUCKETS)
                .map(|k| report.buckets[k].map_or("NA".into(), |e| format!("{:.4}", e.value)))
                .collect();
            println!("cka I..V = {}", cells.join(" "));
        }
        DiagnoseKind::Pearson => {
            let params = checkpoint.expect("checked above");
            let rc = reaching_coefficient(&g, labeled)?;
            let probs = representations(&d, &params)?.softmax_rows();
            let report = pearson_rc_vs_score(&probs, d.labels(), &rc)?;
            run.write("pearson.tsv", report.to_tsv())?;
            run.write_json("pearson.json", &json!({ "r": report.r, "nodes": report.pairs.len() }))?;
            println!("pearson(rc, true_class_score)={:.4}", report.r);
        }
    }
    run.finish(
        &json!({ "kind": format!("{:?}", a.kind).to_lowercase(), "checkpoint": a.checkpoint,
                 "seed": a.seed, "variant": format!("{:?}", a.variant).to_lowercase() }),
        Some(fp),
    )?;
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    if a.nodes < 4 || a.eps.is_nan() || a.eps <= 0.0 {
        return Err(UsageError("gradcheck needs --nodes >= 4 and --eps > 0".into()).into());
    }
    let toy = ToyGraph {
        nodes: a.nodes,
        seed: a.seed,
        ..ToyGraph::default()
    };
    let out = run_gradcheck(&toy, a.eps)?;
    let err = out.max_rel_err();
    let checked = out.supervised.checked + out.nodemixup.checked;
    let skipped = out.supervised.skipped_kinks + out.nodemixup.skipped_kinks;
    let verdict = if err < a.threshold { "PASS" } else { "FAIL" };
    println!("{verdict} max_rel_err={err:.3e} checked={checked} skipped_kinks={skipped}");
    log::info!("{out:?}");
    Ok(if err < a.threshold {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
