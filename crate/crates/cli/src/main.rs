//! impactcast: batch CLI for the accident-impact prediction pipeline.
//!
//! Commands mirror the pipeline order: synth → ingest → label-gamma /
//! fit-duration → build-pack → train → predict / eval, plus the analysis
//! commands gridsearch, ablate, sweep-w, and cluster. Every command writes a
//! run manifest next to its outputs; reruns with equal inputs and seeds
//! produce byte-identical files.

mod commands_data;
mod commands_model;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "impactcast", version, about = "Accident impact prediction pipeline")]
struct Cli {
    /// Base seed for all named random streams
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the four synthetic datasets with a known ground truth
    Synth {
        /// Config JSON; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and clean the four datasets
    Ingest {
        #[arg(long)]
        accidents: PathBuf,
        #[arg(long)]
        congestion: PathBuf,
        #[arg(long)]
        weather: PathBuf,
        #[arg(long)]
        poi: PathBuf,
        /// Station map CSV (code,lat,lon); built-in stations when omitted
        #[arg(long)]
        stations: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Rejected-rows report (defaults to <out>/rejects.csv)
        #[arg(long)]
        rejects_out: Option<PathBuf>,
    },
    /// Fit the impact function on congestion delays and label accidents
    LabelGamma {
        #[arg(long)]
        congestion: PathBuf,
        #[arg(long)]
        accidents: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long)]
        labels_out: PathBuf,
        /// linear | mlp
        #[arg(long, default_value = "mlp")]
        kind: String,
        /// Training-period end (YYYY-MM-DD); freezes the class median
        #[arg(long)]
        train_end: Option<String>,
    },
    /// Bin durations with the Doane rule and rank candidate distributions
    FitDuration {
        /// Labels CSV from label-gamma (reads the duration column)
        #[arg(long)]
        durations_from: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional histogram points CSV for external plotting
        #[arg(long)]
        histogram_out: Option<PathBuf>,
    },
    /// Assemble the (zone × interval × feature) tensor pack
    BuildPack {
        #[arg(long)]
        accidents: PathBuf,
        #[arg(long)]
        congestion: PathBuf,
        #[arg(long)]
        weather: PathBuf,
        #[arg(long)]
        poi: PathBuf,
        #[arg(long)]
        stations: Option<PathBuf>,
        #[arg(long)]
        gamma_labels: PathBuf,
        /// First test-period date (YYYY-MM-DD)
        #[arg(long)]
        train_end: String,
        #[arg(long)]
        out: PathBuf,
        /// Minimum accidents for a zone to survive
        #[arg(long, default_value_t = 75)]
        alpha: usize,
        #[arg(long, default_value_t = 5.0)]
        edge_km: f64,
        #[arg(long)]
        origin_lat: Option<f64>,
        #[arg(long)]
        origin_lon: Option<f64>,
        /// Epoch timestamp (RFC 3339); derived from data when omitted
        #[arg(long)]
        epoch: Option<String>,
        /// End timestamp (RFC 3339); derived from data when omitted
        #[arg(long)]
        end: Option<String>,
        /// Comma-separated weather condition vocabulary override
        #[arg(long)]
        condition_vocab: Option<String>,
    },
    /// Train the cascade (and optionally the single-step baselines)
    Train {
        #[arg(long)]
        pack: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model_out: PathBuf,
        /// Window length override
        #[arg(long)]
        w: Option<usize>,
        #[arg(long, default_value_t = false)]
        with_baselines: bool,
    },
    /// Cascade predictions over the pack's test period
    Predict {
        #[arg(long)]
        pack: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class precision/recall of every model found in the model dir
    Eval {
        #[arg(long)]
        pack: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exhaustive architecture search on a validation split
    Gridsearch {
        #[arg(long)]
        pack: PathBuf,
        #[arg(long)]
        space: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Cap on evaluated configurations
        #[arg(long, default_value_t = usize::MAX)]
        budget: usize,
        /// Fraction of the train period reserved for validation
        #[arg(long, default_value_t = 0.15)]
        val_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrain with one or more feature categories isolated
    Ablate {
        #[arg(long)]
        pack: PathBuf,
        /// Comma-separated subset of weather,spatial,accident
        #[arg(long)]
        categories: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train/evaluate once per window length
    SweepW {
        #[arg(long)]
        pack: PathBuf,
        /// Comma-separated window lengths
        #[arg(long)]
        w: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster the trained zone embeddings and export for mapping
    Cluster {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        pack: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: could not size the thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let seed = cli.seed;
    let result = match cli.command {
        Command::Synth { config, out } => commands_data::synth(config, out, seed),
        Command::Ingest {
            accidents,
            congestion,
            weather,
            poi,
            stations,
            out,
            rejects_out,
        } => commands_data::ingest(accidents, congestion, weather, poi, stations, out, rejects_out, seed),
        Command::LabelGamma {
            congestion,
            accidents,
            model_out,
            labels_out,
            kind,
            train_end,
        } => commands_data::label_gamma(congestion, accidents, model_out, labels_out, kind, train_end, seed),
        Command::FitDuration {
            durations_from,
            out,
            histogram_out,
        } => commands_data::fit_duration(durations_from, out, histogram_out),
        Command::BuildPack {
            accidents,
            congestion,
            weather,
            poi,
            stations,
            gamma_labels,
            train_end,
            out,
            alpha,
            edge_km,
            origin_lat,
            origin_lon,
            epoch,
            end,
            condition_vocab,
        } => commands_data::build_pack(
            accidents, congestion, weather, poi, stations, gamma_labels, train_end, out, alpha,
            edge_km, origin_lat, origin_lon, epoch, end, condition_vocab, seed,
        ),
        Command::Train {
            pack,
            config,
            model_out,
            w,
            with_baselines,
        } => commands_model::train(pack, config, model_out, w, with_baselines, seed),
        Command::Predict { pack, models, out } => commands_model::predict(pack, models, out),
        Command::Eval { pack, models, out } => commands_model::eval(pack, models, out),
        Command::Gridsearch {
            pack,
            space,
            config,
            budget,
            val_fraction,
            out,
        } => commands_model::gridsearch(pack, space, config, budget, val_fraction, out, seed),
        Command::Ablate {
            pack,
            categories,
            config,
            out,
        } => commands_model::ablate(pack, categories, config, out, seed),
        Command::SweepW { pack, w, config, out } => commands_model::sweep_w(pack, w, config, out, seed),
        Command::Cluster { models, pack, k, out } => commands_model::cluster(models, pack, k, out, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
