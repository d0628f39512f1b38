use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use divbench_core::annotations::{
    aggregate_all, alpha_by_model_pair, count_verdict_correlation, krippendorff_alpha,
    AnnotationError,
};
use divbench_core::autorater::{score_corpus, AutoraterError, AutoraterOptions, AutoraterRegistry};
use divbench_core::domain::PairingPolicy;
use divbench_core::embed_io::scan_corpus;
use divbench_core::json::{self, JsonError};
use divbench_core::metric_eval::{
    accuracy_by_autorater, default_expectations, equal_detection_auc, golden_validate,
    golden_validate_scores, split_by_autorater, EvalError, GoldenExpectation,
};
use divbench_core::ranking::{
    rank_auto, rank_human, sufficiency_ablation, win_rate_matrix, RankError,
};
use divbench_core::synth::{
    generate_annotations, generate_embeddings, plan_from_strengths, synth_pairs, AnnotationSpec,
    SynthError, SynthModelSpec,
};
use divbench_core::{ModelId, RatingRecord, ScoreRecord};

use crate::args::*;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

impl From<JsonError> for CliError {
    fn from(e: JsonError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io(divbench_core::embed_io::EmbedIoError::Io { .. }) => {
                CliError::Io(e.to_string())
            }
            other => invalid(other),
        }
    }
}

impl From<AutoraterError> for CliError {
    fn from(e: AutoraterError) -> Self {
        match &e {
            AutoraterError::Io(divbench_core::embed_io::EmbedIoError::Io { .. }) => {
                CliError::Io(e.to_string())
            }
            AutoraterError::Json(j) if j.is_io() => CliError::Io(e.to_string()),
            _ => invalid(e),
        }
    }
}

macro_rules! invalid_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                invalid(e)
            }
        }
    )*};
}

invalid_from!(RankError, EvalError, AnnotationError);

fn read_annotations(path: &Path) -> Result<Vec<RatingRecord>, CliError> {
    Ok(json::read_jsonl(path)?)
}

fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>, CliError> {
    Ok(json::read_jsonl(path)?)
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("--alpha {alpha} outside (0, 1)")))
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let s = json::to_canonical_pretty(value)?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{s}").map_err(|e| CliError::Io(format!("stdout: {e}")))
}

fn emit<T: Serialize>(value: &T, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(p) => Ok(json::write_json(p, value)?),
        None => print_json(value),
    }
}

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Vendi(VendiCommand::Compute(a)) => vendi_compute(a),
        Command::Rank(RankCommand::Human(a)) => {
            check_alpha(a.alpha)?;
            let m = rank_human(&aggregate_all(&read_annotations(&a.annotations)?), a.alpha)?;
            json::write_json(&a.out, &m)?;
            if a.render {
                print!("{}", m.render());
            }
            Ok(())
        }
        Command::Rank(RankCommand::Auto(a)) => {
            check_alpha(a.alpha)?;
            let m = rank_auto(&read_scores(&a.scores)?, a.alpha)?;
            json::write_json(&a.out, &m)?;
            if a.render {
                print!("{}", m.render());
            }
            Ok(())
        }
        Command::Winrate(a) => Ok(json::write_json(
            &a.out,
            &win_rate_matrix(&read_scores(&a.scores)?)?,
        )?),
        Command::Agreement(a) => agreement(a),
        Command::Correlation(a) => print_json(&count_verdict_correlation(&read_annotations(
            &a.annotations,
        )?)?),
        Command::Autorater(AutoraterCommand::Eval(a)) => {
            let human = aggregate_all(&read_annotations(&a.annotations)?);
            let scores = read_scores(&a.scores)?;
            let reports = accuracy_by_autorater(&human, &scores, a.min_gap)
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            emit(&reports, a.out.as_ref())
        }
        Command::Autorater(AutoraterCommand::Auc(a)) => {
            let human = aggregate_all(&read_annotations(&a.annotations)?);
            let reports = split_by_autorater(&read_scores(&a.scores)?)
                .iter()
                .map(|group| equal_detection_auc(&human, group))
                .collect::<Result<Vec<_>, _>>()?;
            emit(&reports, a.out.as_ref())
        }
        Command::Golden(GoldenCommand::Validate(a)) => golden(a),
        Command::Ablate(a) => {
            check_alpha(a.alpha)?;
            let human = aggregate_all(&read_annotations(&a.annotations)?);
            emit(
                &sufficiency_ablation(&human, &a.sizes, a.seed, a.alpha)?,
                a.out.as_ref(),
            )
        }
        Command::Synth(SynthCommand::Embeddings(a)) => synth_embeddings(a),
        Command::Synth(SynthCommand::Annotations(a)) => synth_annotations(a),
        Command::Serve(a) => serve(a),
    }
}

fn vendi_compute(a: VendiComputeArgs) -> Result<(), CliError> {
    if !a.corpus.is_dir() {
        return Err(CliError::Io(format!(
            "{}: not a directory",
            a.corpus.display()
        )));
    }
    let rater = AutoraterRegistry::with_builtins().create(
        &a.rater,
        &AutoraterOptions {
            external_scores: a.external_scores.clone(),
        },
    )?;
    let scan = scan_corpus(&a.corpus);
    for w in &scan.warnings {
        eprintln!("warning: {w}");
    }
    if scan.entries.is_empty() {
        return Err(invalid(format!(
            "{}: no image sets found",
            a.corpus.display()
        )));
    }
    let (scores, errors) = score_corpus(rater.as_ref(), &scan.entries);
    if let Some((dir, e)) = errors.into_iter().next() {
        return Err(CliError::from(e).prefixed(&dir.display().to_string()));
    }
    Ok(json::write_jsonl(&a.out, &scores)?)
}

impl CliError {
    fn prefixed(self, what: &str) -> Self {
        match self {
            CliError::Invalid(m) => CliError::Invalid(format!("{what}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{what}: {m}")),
        }
    }
}

fn agreement(a: AgreementArgs) -> Result<(), CliError> {
    let records = read_annotations(&a.annotations)?;
    if !a.by_model_pair {
        return print_json(&krippendorff_alpha(&records)?);
    }
    let rows: Vec<_> = alpha_by_model_pair(&records)
        .into_iter()
        .map(|((ma, mb), r)| match r {
            Ok(rep) => json!({"model_a": ma, "model_b": mb, "report": rep}),
            Err(e) => json!({"model_a": ma, "model_b": mb, "error": e.to_string()}),
        })
        .collect();
    print_json(&rows)
}

fn golden(a: GoldenValidateArgs) -> Result<(), CliError> {
    let expectations: Vec<GoldenExpectation> = if a.expectations == "default" {
        default_expectations()
    } else {
        json::read_json(Path::new(&a.expectations))?
    };
    match (&a.annotations, &a.scores) {
        (Some(p), _) => emit(
            &golden_validate(&read_annotations(p)?, &expectations)?,
            a.out.as_ref(),
        ),
        (None, Some(p)) => emit(
            &golden_validate_scores(&read_scores(p)?, &expectations)?,
            a.out.as_ref(),
        ),
        (None, None) => Err(invalid("one of --annotations or --scores is required")),
    }
}

fn synth_embeddings(a: SynthEmbeddingsArgs) -> Result<(), CliError> {
    if a.clusters.is_empty() {
        return Err(invalid("--clusters is empty"));
    }
    let pairs = synth_pairs(a.pairs);
    let mut n = 0;
    for &k in &a.clusters {
        let spec = SynthModelSpec {
            model: ModelId(format!("k{k}")),
            clusters_per_pair: k,
            noise_sigma: a.sigma,
            dim: a.dim,
            seed: a.seed,
        };
        n += generate_embeddings(&spec, &pairs, a.replicates, a.set_size, &a.out)?.len();
    }
    eprintln!("wrote {n} sets under {}", a.out.display());
    Ok(())
}

fn parse_strengths(items: &[String]) -> Result<Vec<(ModelId, f64)>, CliError> {
    items
        .iter()
        .map(|s| {
            let (name, v) = s
                .split_once(':')
                .ok_or_else(|| invalid(format!("--models entry {s:?} is not name:strength")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| invalid(format!("--models entry {s:?}: bad strength")))?;
            Ok((ModelId::new(name).map_err(invalid)?, v))
        })
        .collect()
}

fn synth_annotations(a: SynthAnnotationsArgs) -> Result<(), CliError> {
    let models = parse_strengths(&a.models)?;
    if models.len() < 2 {
        return Err(invalid("--models needs at least two entries"));
    }
    let plan = plan_from_strengths(
        &models,
        &synth_pairs(a.pairs),
        a.replicates,
        PairingPolicy::SameIndex,
    );
    let records = generate_annotations(
        &plan,
        &AnnotationSpec {
            study_id: a.study_id,
            raters: a.raters,
            fidelity: a.fidelity,
            set_size: a.set_size,
            seed: a.seed,
        },
    )?;
    Ok(json::write_jsonl(&a.out, &records)?)
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|_| invalid(format!("bad listen address {}:{}", a.host, a.port)))?;
    let config = divbench_service::ServeConfig {
        addr,
        store: a.store,
        static_dir: a.static_dir,
    };
    divbench_service::run(config, |addr, report| {
        eprintln!(
            "listening on http://{addr} ({} studies, {} ratings replayed, {} dropped{})",
            report.studies,
            report.ratings,
            report.dropped,
            if report.torn_tail {
                ", torn tail discarded"
            } else {
                ""
            }
        );
    })
    .map_err(|e| match e {
        divbench_service::ServeError::Service(divbench_service::ServiceError::BadRequest(m)) => {
            invalid(m)
        }
        other => CliError::Io(other.to_string()),
    })
}
