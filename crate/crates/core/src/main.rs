//! `crowd-motion` command-line interface.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crowd_motion::atoms::InitMethod;
use crowd_motion::ingest::Split;
use crowd_motion::pipeline::{self, synth, ModelFile, PipelineConfig, SynthSpec};
use crowd_motion::{Error, Result};

/// Motion atoms and AND/OR motion phrases for crowd event and anomaly recognition.
///
/// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
#[derive(Parser)]
#[command(name = "crowd-motion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn the four per-channel codebooks.
    Codebook {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        descriptors: Option<PathBuf>,
        /// Restricts codebook learning to the manifest's training clips.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Output directory for codebook_<CHANNEL>.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mine atoms and phrases and train the event classifier.
    Train {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        descriptors: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Directory holding codebook_<CHANNEL>.txt.
        #[arg(long)]
        codebooks: Option<PathBuf>,
        /// Model file; the mining report goes to <out>.report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify and score clips with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        descriptors: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Scores file; predicted classes go to <out>.pred, representations to <out>.repr.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
    },
    /// ROC/AUC of a scores file.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        /// Clip-level (id, flag) or frame-level (id, frame, flag) ground truth.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// ROC CSV; the AUC table goes to <out>.report.
        #[arg(long)]
        out: PathBuf,
        /// Add literature reference rows to the table.
        #[arg(long)]
        baselines: bool,
    },
    /// Generate a synthetic descriptor set.
    Synth {
        #[arg(long, default_value_t = 3)]
        classes: usize,
        #[arg(long, default_value_t = 20)]
        clips_per_class: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 60)]
        clip_length: usize,
        /// Motif order per class, e.g. "0,1,2;1,2,0" [default: rotations].
        #[arg(long)]
        layout: Option<String>,
        /// Label noise probability.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.3)]
        test_fraction: f64,
        #[arg(long)]
        seed: u64,
        /// Output directory for descriptors.tsv and manifest.tsv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a summary of a model file.
    DumpModel {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

/// Pipeline settings; flags override values from --config.
#[derive(Args)]
struct Settings {
    /// Flat key=value file with any of the settings below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Segments per clip [default: 3].
    #[arg(long)]
    k: Option<usize>,
    /// Codebook size per channel [default: 64].
    #[arg(long)]
    codebook_size: Option<usize>,
    /// Number of motion atoms [default: 8].
    #[arg(long)]
    atoms: Option<usize>,
    /// Top-set size for phrase scoring [default: half the training clips, rounded up].
    #[arg(long)]
    top: Option<usize>,
    /// Temporal window of each phrase unit, in segments [default: 1].
    #[arg(long)]
    window: Option<usize>,
    /// Maximum units per phrase [default: 3].
    #[arg(long)]
    max_units: Option<usize>,
    /// Phrases kept per class [default: 10].
    #[arg(long)]
    budget: Option<usize>,
    /// Tube half-width of the SVM loss [default: 0.1].
    #[arg(long)]
    epsilon: Option<f64>,
    /// Slack penalty of the SVMs [default: 1.0].
    #[arg(long)]
    c_reg: Option<f64>,
    /// Atom mining iterations [default: 20].
    #[arg(long)]
    max_iters: Option<usize>,
    /// Atom initialization: kmeans or sim-spectral [default: kmeans].
    #[arg(long)]
    init: Option<InitMethod>,
    /// L2-normalize video representations.
    #[arg(long)]
    l2: bool,
    /// Anomaly scores rank clips away from this class.
    #[arg(long)]
    normal_class: Option<String>,
    /// Anomaly scores are this class's decision values.
    #[arg(long)]
    target_class: Option<String>,
    /// Master seed (required here or in the config file).
    #[arg(long)]
    seed: Option<u64>,
}

impl Settings {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = pipeline::base_config(self.config.as_deref())?;
        macro_rules! over {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f.clone() {
                    c.$f = v;
                }
            )*};
        }
        over!(k, codebook_size, atoms, window, max_units, budget, epsilon, c_reg, max_iters, init);
        if self.top.is_some() {
            c.top = self.top;
        }
        if self.seed.is_some() {
            c.seed = self.seed;
        }
        if self.normal_class.is_some() {
            c.normal_class = self.normal_class.clone();
        }
        if self.target_class.is_some() {
            c.target_class = self.target_class.clone();
        }
        c.l2 |= self.l2;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Codebook {
            settings,
            descriptors,
            manifest,
            out,
        } => {
            let mut cfg = settings.resolve()?;
            cfg.descriptors = descriptors.or(cfg.descriptors);
            cfg.manifest = manifest.or(cfg.manifest);
            cfg.out = out.or(cfg.out);
            for p in pipeline::cmd_codebook(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Train {
            settings,
            descriptors,
            manifest,
            codebooks,
            out,
        } => {
            let mut cfg = settings.resolve()?;
            cfg.descriptors = descriptors.or(cfg.descriptors);
            cfg.manifest = manifest.or(cfg.manifest);
            cfg.codebooks = codebooks.or(cfg.codebooks);
            cfg.out = out.or(cfg.out);
            let o = pipeline::cmd_train(&cfg)?;
            println!(
                "trained {} atoms, {} phrases, {} classes (atom mining {} after {} iterations)",
                o.model.atoms.len(),
                o.model.phrases.len(),
                o.model.classifier.classes.len(),
                if o.atom_report.converged { "converged" } else { "stopped" },
                o.atom_report.changes.len()
            );
        }
        Command::Predict {
            model,
            descriptors,
            manifest,
            out,
            split,
        } => {
            let cfg = PipelineConfig {
                model: Some(model),
                descriptors: Some(descriptors),
                manifest: Some(manifest),
                out: Some(out),
                ..PipelineConfig::default()
            };
            let split = match split {
                SplitArg::Train => Some(Split::Train),
                SplitArg::Test => Some(Split::Test),
                SplitArg::All => None,
            };
            let preds = pipeline::cmd_predict(&cfg, split)?;
            let correct = preds.iter().filter(|p| p.predicted == p.label).count();
            println!("scored {} clips, {correct} predicted as labeled", preds.len());
        }
        Command::Eval {
            scores,
            truth,
            out,
            baselines,
        } => {
            let o = pipeline::cmd_eval(&scores, truth.as_deref(), &out, baselines)?;
            print!("{}", o.report);
        }
        Command::Synth {
            classes,
            clips_per_class,
            k,
            clip_length,
            layout,
            noise,
            test_fraction,
            seed,
            out,
        } => {
            let layout = layout
                .map(|l| synth::parse_layout(&l))
                .transpose()
                .map_err(Error::Usage)?;
            let spec = SynthSpec {
                classes,
                clips_per_class,
                k,
                clip_length,
                layout,
                noise,
                test_fraction,
                seed,
                ..SynthSpec::default()
            };
            let data = pipeline::cmd_synth(&spec, &out)?;
            println!("wrote {} clips, {} descriptors", data.clips.len(), data.records.len());
        }
        Command::DumpModel { model } => {
            print!("{}", pipeline::dump_model(&ModelFile::load(&model)?));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
