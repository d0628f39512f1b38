use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "divbench", version, about = "Diversity evaluation workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score image sets.
    #[command(subcommand)]
    Vendi(VendiCommand),
    /// Pairwise significance matrices.
    #[command(subcommand)]
    Rank(RankCommand),
    /// Pairwise win rates from autorater scores.
    Winrate(WinrateArgs),
    /// Krippendorff's alpha over ratings.
    Agreement(AgreementArgs),
    /// Rank correlation between count differences and verdicts.
    Correlation(AnnotationsArg),
    /// Compare autorater scores against human verdicts.
    #[command(subcommand)]
    Autorater(AutoraterCommand),
    /// Check ratings or scores on golden sets.
    #[command(subcommand)]
    Golden(GoldenCommand),
    /// Rerun the human ranking on nested concept subsets.
    Ablate(AblateArgs),
    /// Generate synthetic corpora with planted ground truth.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Run the annotation service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum VendiCommand {
    /// Score every set under a corpus directory.
    Compute(VendiComputeArgs),
}

#[derive(Debug, Args)]
pub struct VendiComputeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Registered autorater name.
    #[arg(long, default_value = "vendi")]
    pub rater: String,
    /// Score file for the `external` autorater.
    #[arg(long)]
    pub external_scores: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum RankCommand {
    /// Binomial test over aggregated human verdicts.
    Human(RankHumanArgs),
    /// Wilcoxon test over per-concept autorater scores.
    Auto(RankAutoArgs),
}

#[derive(Debug, Args)]
pub struct RankHumanArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Print the sign grid.
    #[arg(long)]
    pub render: bool,
}

#[derive(Debug, Args)]
pub struct RankAutoArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub render: bool,
}

#[derive(Debug, Args)]
pub struct WinrateArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnnotationsArg {
    #[arg(long)]
    pub annotations: PathBuf,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    /// One alpha per unordered model pair instead of one overall.
    #[arg(long)]
    pub by_model_pair: bool,
}

#[derive(Debug, Subcommand)]
pub enum AutoraterCommand {
    /// Accuracy on decisive human comparisons.
    Eval(AutoraterEvalArgs),
    /// AUC of |score difference| for detecting unequal comparisons.
    Auc(AutoraterAucArgs),
}

#[derive(Debug, Args)]
pub struct AutoraterEvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    /// Keep comparisons whose modal count gap exceeds this.
    #[arg(long)]
    pub min_gap: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AutoraterAucArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum GoldenCommand {
    Validate(GoldenValidateArgs),
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["annotations", "scores"])))]
pub struct GoldenValidateArgs {
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// JSON array of expectations, or `default`.
    #[arg(long)]
    pub expectations: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SynthCommand {
    /// Cluster-structured embedding corpus, one model per cluster count.
    Embeddings(SynthEmbeddingsArgs),
    /// Simulated ratings for models with planted strengths.
    Annotations(SynthAnnotationsArgs),
}

#[derive(Debug, Args)]
pub struct SynthEmbeddingsArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Cluster counts; model `k{K}` is generated for each.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    pub clusters: Vec<usize>,
    #[arg(long, default_value_t = 86)]
    pub pairs: usize,
    #[arg(long, default_value_t = 10)]
    pub replicates: u32,
    #[arg(long, default_value_t = 8)]
    pub set_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthAnnotationsArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// `name:strength` list; a higher strength is the planted winner.
    #[arg(long, value_delimiter = ',', default_value = "k1:1,k2:2,k4:4,k8:8")]
    pub models: Vec<String>,
    #[arg(long, default_value_t = 86)]
    pub pairs: usize,
    #[arg(long, default_value_t = 10)]
    pub replicates: u32,
    #[arg(long, default_value_t = 5)]
    pub raters: usize,
    #[arg(long, default_value_t = 1.0)]
    pub fidelity: f64,
    #[arg(long, default_value_t = 8)]
    pub set_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "synth")]
    pub study_id: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long)]
    pub store: PathBuf,
    /// Directory served under /static/.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
}
