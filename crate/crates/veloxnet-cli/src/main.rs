//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage/configuration error, 2 data or format
//! error, 3 numeric failure (NaN/Inf or a failed gradient check).

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use veloxnet::data::{load_checkpoint, synth_dataset, Manifest, Split};
use veloxnet::models::{Ablation, GraphSpec, Model, ModelKind, Preset};
use veloxnet::train::{bench, evaluate, fit, write_log_csv, FitConfig};
use veloxnet::{accounting, gradcheck, Error};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Veloxnet,
    Squeezenet,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    #[value(name = "table-i")]
    TableI,
    #[value(name = "paper-eq")]
    PaperEq,
}

impl PresetArg {
    fn to_preset(self) -> Preset {
        match self {
            PresetArg::TableI => Preset::TableI,
            PresetArg::PaperEq => Preset::PaperEq,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl SplitArg {
    fn to_split(self) -> Split {
        match self {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "veloxnet", version, about = "gMLP image classifier toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Print the parameter/MAC/storage accounting report for a model
    Summary {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "table-i")]
        preset: PresetArg,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 224)]
        input: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
    },
    /// Run the double-precision finite-difference gradient suite
    Gradcheck {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "table-i")]
        preset: PresetArg,
        /// Also check the reduced end-to-end model (d=12, 27x27 input, 3 classes)
        #[arg(long)]
        reduced: bool,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train on a dataset directory (manifest.csv + stats.csv + tensors)
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "table-i")]
        preset: PresetArg,
        #[arg(long)]
        epochs: usize,
        #[arg(long, default_value_t = 0.001)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Checkpoint path, overwritten on every best-validation epoch
        #[arg(long)]
        out: PathBuf,
        /// Training log CSV path
        #[arg(long)]
        log: PathBuf,
    },
    /// Evaluate a checkpoint on one dataset split
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, value_enum)]
        split: SplitArg,
        /// Metrics report JSON output path
        #[arg(long)]
        json: PathBuf,
    },
    /// Measure local inference throughput
    Bench {
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "table-i")]
        preset: PresetArg,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 224)]
        input: usize,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
    },
    /// Generate the seeded synthetic dataset
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long = "per-class", default_value_t = 8)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn graph_spec(model: ModelArg, preset: PresetArg, classes: usize, input: usize) -> GraphSpec {
    let kind = match model {
        ModelArg::Veloxnet => ModelKind::Veloxnet,
        ModelArg::Squeezenet => ModelKind::Squeezenet,
    };
    GraphSpec::new(kind, classes)
        .with_input(input)
        .with_preset(preset.to_preset())
        .with_ablation(Ablation::Full)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.cmd {
        Cmd::Summary {
            model,
            preset,
            classes,
            input,
            format,
        } => {
            println!(
                "config: summary model={model:?} preset={preset:?} classes={classes} input={input} format={format:?}"
            );
            let graph = graph_spec(model, preset, classes, input).build_graph()?;
            let report = accounting::count(&graph);
            match format {
                FormatArg::Text => print!("{}", report.to_text()),
                FormatArg::Csv => print!("{}", report.to_csv()),
                FormatArg::Json => println!("{}", report.to_json()),
            }
        }
        Cmd::Gradcheck {
            model,
            preset,
            reduced,
            tol,
            seed,
        } => {
            println!(
                "config: gradcheck model={model:?} preset={preset:?} reduced={reduced} tol={tol} seed={seed}"
            );
            let mut all_pass = true;
            for res in gradcheck::layer_suite(seed, tol) {
                let status = if res.passed() { "pass" } else { "FAIL" };
                println!(
                    "{status}  {:<22} max rel err {:.3e} over {} coords",
                    res.name, res.max_rel_err, res.checked
                );
                all_pass &= res.passed();
            }
            if reduced {
                let kind = match model {
                    ModelArg::Veloxnet => ModelKind::VeloxnetReduced,
                    ModelArg::Squeezenet => ModelKind::SqueezenetReduced,
                };
                let spec = GraphSpec::new(kind, 3).with_preset(preset.to_preset());
                let res = gradcheck::model_check(spec, seed, tol)?;
                let status = if res.passed() { "pass" } else { "FAIL" };
                println!(
                    "{status}  {:<22} max rel err {:.3e} over {} sampled params",
                    res.name, res.max_rel_err, res.checked
                );
                all_pass &= res.passed();
            } else {
                println!("note: end-to-end model check skipped (pass --reduced to run it)");
            }
            if !all_pass {
                return Err(Error::Numeric("gradient check failed".into()));
            }
            println!("all gradient checks passed");
        }
        Cmd::Train {
            data,
            model,
            preset,
            epochs,
            lr,
            batch,
            seed,
            out,
            log,
        } => {
            println!(
                "config: train data={} model={model:?} preset={preset:?} epochs={epochs} lr={lr} batch={batch} seed={seed} out={} log={}",
                data.display(),
                out.display(),
                log.display()
            );
            let manifest = Manifest::load(&data)?;
            println!(
                "dataset: {} samples, {} classes",
                manifest.entries.len(),
                manifest.classes
            );
            let graph = graph_spec(model, preset, manifest.classes, 224).build_graph()?;
            let mut net = Model::<f32>::init(graph, seed)?;
            let cfg = FitConfig {
                epochs,
                lr,
                batch,
                seed,
                checkpoint: Some(out.clone()),
            };
            let rows = fit(&mut net, &manifest, &cfg, |_, row| {
                println!(
                    "epoch {:>4}  train loss {:.6}  val loss {:.6}  val weighted-F1 {:.4}",
                    row.epoch, row.train_loss, row.val_loss, row.val_weighted_f1
                );
                true
            })?;
            write_log_csv(&log, &rows)?;
            println!("log written to {}", log.display());
        }
        Cmd::Eval {
            data,
            ckpt,
            split,
            json,
        } => {
            println!(
                "config: eval data={} ckpt={} split={split:?} json={}",
                data.display(),
                ckpt.display(),
                json.display()
            );
            let manifest = Manifest::load(&data)?;
            let checkpoint = load_checkpoint(&ckpt)?;
            let spec = GraphSpec::from_id(&checkpoint.model_id, &checkpoint.preset)?;
            let mut net = Model::<f32>::init(spec.build_graph()?, 0)?;
            checkpoint.apply(&mut net)?;
            if manifest.classes != net.graph.classes() {
                return Err(Error::Data(format!(
                    "dataset has {} classes, checkpointed model has {}",
                    manifest.classes,
                    net.graph.classes()
                )));
            }
            let report = evaluate(&mut net, &manifest, split.to_split())?;
            std::fs::write(&json, serde_json::to_string_pretty(&report).expect("serializable"))?;
            println!(
                "{} split: {} samples, accuracy {:.4}, weighted F1 {:.4}, loss {:.6}",
                split.to_split().as_str(),
                report.samples,
                report.accuracy,
                report.weighted_f1,
                report.loss
            );
            println!("metrics written to {}", json.display());
        }
        Cmd::Bench {
            model,
            preset,
            classes,
            input,
            batch,
            iters,
            warmup,
        } => {
            println!(
                "config: bench model={model:?} preset={preset:?} classes={classes} input={input} batch={batch} iters={iters} warmup={warmup}"
            );
            let graph = graph_spec(model, preset, classes, input).build_graph()?;
            let mut net = Model::<f32>::init(graph, 0)?;
            let report = bench(&mut net, batch, iters, warmup, 0)?;
            println!("model: {}", report.model);
            println!(
                "params: {}  macs/image: {}  precision: {}",
                report.params, report.macs_per_image, report.precision
            );
            println!("host: {}", report.host);
            println!(
                "throughput: {:.2} images/s  ({:.2} ms/image, batch {}, median of {} iters)",
                report.images_per_second, report.per_image_ms, report.batch, report.iters
            );
        }
        Cmd::Synth {
            out,
            classes,
            per_class,
            seed,
        } => {
            println!(
                "config: synth out={} classes={classes} per-class={per_class} seed={seed}",
                out.display()
            );
            let manifest = synth_dataset(&out, classes, per_class, seed)?;
            println!(
                "wrote {} samples across {} classes to {}",
                manifest.entries.len(),
                classes,
                out.display()
            );
        }
    }
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Dimension(_) => 1,
        Error::Data(_) | Error::Io(_) | Error::State(_) => 2,
        Error::Numeric(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are success; everything else is usage
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
