//! `tropiprune` command-line tool.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tropiprune::adapter::node_generators;
use tropiprune::geometry::{project_generators, zonotope_vertices};
use tropiprune::harness::{self, evaluate, SyntheticTask, TinyModel};
use tropiprune::io::config::SEED_ENV;
use tropiprune::io::table::{self, MaskReportRow};
use tropiprune::io::{svg, write_atomic, RunConfig, WeightBundle};
use tropiprune::optimizer;
use tropiprune::strategies::{self, combined_select, Method};
use tropiprune::Error;

#[derive(Parser)]
#[command(name = "tropiprune", version, about = "Zonotope-preserving pruning of bottleneck adapters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the configured synthetic task and write a weight bundle.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Optimize and prune the adapters of a bundle for every configured cell.
    Prune {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Train, prune and evaluate for every seed; write the results table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot an `iteration,loss` trace.
    PlotLoss {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Overlay one node's projected zonotope from two bundles.
    PlotZonotope {
        #[arg(long)]
        before: PathBuf,
        #[arg(long)]
        after: PathBuf,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        node: usize,
        /// Two input coordinates, e.g. `0,1`.
        #[arg(long, value_parser = parse_dims)]
        dims: (usize, usize),
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `a,b`, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::NonFinite(_) => 4,
        _ => 3,
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(path)?;
    let env = std::env::var(SEED_ENV).ok();
    cfg.apply_seed_override(env.as_deref())?;
    Ok(cfg)
}

fn splits_for(cfg: &RunConfig, seed: u64) -> Result<harness::Splits, Error> {
    SyntheticTask { seed, ..cfg.task.clone() }.generate()
}

fn train(config: &Path) -> Result<(), Error> {
    let cfg = load_config(config)?;
    let seed = cfg.seeds[0];
    let splits = splits_for(&cfg, seed)?;
    let model = TinyModel::init(&cfg.model, splits.input_dim, splits.classes, seed)?;
    let (model, trace) = harness::train(&model, &splits.train, &cfg.train, seed)?;
    let bundle = WeightBundle::from_model(&model)?
        .with_meta("task", cfg.task_name())
        .with_meta("seed", seed.to_string());
    let path = cfg.output.bundle_path();
    bundle.save(&path)?;
    let trace: Vec<(usize, f64)> = trace.into_iter().enumerate().collect();
    let trace_path = cfg.output.dir.join("train_trace.csv");
    table::write_trace(&trace_path, &trace)?;
    let dev = evaluate(&model, &splits.dev, cfg.prune.metric)?;
    let test = evaluate(&model, &splits.test, cfg.prune.metric)?;
    println!(
        "trained {} (seed {seed}): dev {dev:.4}, test {test:.4}; bundle {}, trace {}",
        cfg.task_name(),
        path.display(),
        trace_path.display()
    );
    Ok(())
}

fn prune(bundle_path: &Path, config: &Path) -> Result<(), Error> {
    let cfg = load_config(config)?;
    let bundle = WeightBundle::load(bundle_path)?;
    let original = bundle.adapters()?;
    let m = &bundle.manifest;
    if m.d != cfg.model.d || m.r != cfg.model.r || original.len() != cfg.model.layers {
        return Err(Error::ShapeMismatch(format!(
            "bundle has d={}, r={}, {} layers; config expects d={}, r={}, {} layers",
            m.d,
            m.r,
            original.len(),
            cfg.model.d,
            cfg.model.r,
            cfg.model.layers
        )));
    }
    let out_dir = &cfg.output.dir;

    let mut optimized = Vec::with_capacity(original.len());
    for (l, layer) in original.iter().enumerate() {
        let res = optimizer::run(layer, &cfg.optim)?;
        table::write_trace(&out_dir.join(format!("optim_trace_layer{l}.csv")), &res.loss_trace)?;
        optimized.push(res.to_layer(layer)?);
    }
    bundle
        .with_adapters(&optimized)?
        .with_meta("stage", "optimized")
        .save(&out_dir.join("optimized.json"))?;

    // Combined needs a development split, which needs the full model.
    let dev_eval = match (bundle.model(), cfg.prune.methods.contains(&Method::Combined)) {
        (Ok(model), true) => Some((model, splits_for(&cfg, cfg.seeds[0])?)),
        (Err(_), true) => {
            eprintln!("tropiprune: bundle has no featurizer/head; skipping combined cells");
            None
        }
        _ => None,
    };

    let mut report = Vec::new();
    for &p in &cfg.prune.fractions {
        for &scope in &cfg.prune.scopes {
            let (trop, p_hat) = strategies::tropical_mask(&original, &optimized, p, scope)?;
            let std = strategies::standard_mask(&original, p_hat, scope)?;
            for &method in &cfg.prune.methods {
                let selected = match method {
                    Method::Combined => {
                        let Some((model, splits)) = &dev_eval else { continue };
                        let score = |mask| -> Result<f64, Error> {
                            let pruned = model.with_adapters(strategies::apply_mask(&original, mask)?)?;
                            evaluate(&pruned, &splits.dev, cfg.prune.metric)
                        };
                        combined_select(score(&std)?, score(&trop)?)
                    }
                    other => other,
                };
                let mask = if selected == Method::Standard { &std } else { &trop };
                let name = format!("{method}_{scope}_p{p}.json");
                let path = out_dir.join("pruned").join(&name);
                bundle
                    .with_adapters(&strategies::apply_mask(&original, mask)?)?
                    .with_meta("method", method.name())
                    .with_meta("selected", selected.name())
                    .with_meta("scope", scope.short())
                    .with_meta("p", p.to_string())
                    .with_meta("p_hat", mask.fraction().to_string())
                    .save(&path)?;
                report.push(MaskReportRow {
                    method,
                    scope,
                    p,
                    p_hat: mask.fraction(),
                    pruned: mask.count(),
                    total: mask.total(),
                    bundle: format!("pruned/{name}"),
                });
            }
        }
    }
    let report_path = out_dir.join("mask_report.csv");
    write_atomic(&report_path, table::mask_report_csv(&report)?.as_bytes())?;
    println!(
        "pruned {} cells; report {}, optimized bundle {}",
        report.len(),
        report_path.display(),
        out_dir.join("optimized.json").display()
    );
    Ok(())
}

fn sweep(config: &Path, out: &Path) -> Result<(), Error> {
    let cfg = load_config(config)?;
    let mut records = Vec::new();
    for &seed in &cfg.seeds {
        let (_, recs) = harness::run_pipeline(&cfg.task, &cfg.model, &cfg.train, &cfg.sweep_spec(seed), seed)?;
        records.extend(recs);
    }
    table::write_results(out, &records)?;
    println!("{} rows written to {}", records.len(), out.display());
    Ok(())
}

fn plot_loss(trace: &Path, out: &Path) -> Result<(), Error> {
    let trace = table::read_trace(trace)?;
    svg::write_svg(out, &svg::loss_plot(&trace)?)
}

fn plot_zonotope(before: &Path, after: &Path, layer: usize, node: usize, dims: (usize, usize), out: &Path) -> Result<(), Error> {
    let b0 = WeightBundle::load(before)?.adapters()?;
    let b1 = WeightBundle::load(after)?.adapters()?;
    let (l0, l1) = match (b0.get(layer), b1.get(layer)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Config(format!(
                "layer {layer} out of range ({} and {} layers)",
                b0.len(),
                b1.len()
            )))
        }
    };
    if l0.a().shape() != l1.a().shape() || l0.b().shape() != l1.b().shape() {
        return Err(Error::ShapeMismatch("before and after layers differ in shape".into()));
    }
    if node >= l0.d() {
        return Err(Error::Config(format!("node {node} out of range (d = {})", l0.d())));
    }
    let width = l0.d() + 1;
    if dims.0 >= width || dims.1 >= width || dims.0 == dims.1 {
        return Err(Error::Config(format!(
            "dims {},{} must be two distinct coordinates below {width}",
            dims.0, dims.1
        )));
    }
    let poly = |l: &tropiprune::adapter::AdapterLayer| -> Result<_, Error> {
        let g = node_generators(l.a(), l.b(), node)?.g1;
        zonotope_vertices(&project_generators(&g, dims)?)
    };
    let title = format!("layer {layer}, node {node}, dims {},{}", dims.0, dims.1);
    svg::write_svg(out, &svg::zonotope_plot(&poly(l0)?, &poly(l1)?, dims, &title)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { config } => train(config),
        Command::Prune { bundle, config } => prune(bundle, config),
        Command::Sweep { config, out } => sweep(config, out),
        Command::PlotLoss { trace, out } => plot_loss(trace, out),
        Command::PlotZonotope {
            before,
            after,
            layer,
            node,
            dims,
            out,
        } => plot_zonotope(before, after, *layer, *node, *dims, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("tropiprune: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
