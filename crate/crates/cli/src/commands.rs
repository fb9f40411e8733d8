use std::fs;
use std::path::{Path, PathBuf};

use sinmt::evaluation::{breakdown_report_expecting, score_split, separability, EmbeddingSet};
use sinmt::model::{load_checkpoint, save_checkpoint};
use sinmt::synthdata::corpus::MANIFEST_FILE;
use sinmt::synthdata::{generate_corpus, CorpusManifest, Label};
use sinmt::training::{history_to_text, train_from_corpus};
use sinmt::{Mode, SInMTNetwork};

use crate::config::{ExperimentConfig, ProbeScope};
use crate::exit::CliError;

pub const RESOLVED: &str = "config.resolved";

#[derive(Debug, Default)]
pub struct TrainOverrides {
    pub mode: Option<Mode>,
    pub init: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// Creates `dir`, refusing to touch any of `outputs` that already exist
/// unless `force` is set.
fn prepare_out(dir: &Path, outputs: &[&str], force: bool) -> Result<(), CliError> {
    if !force {
        if let Some(existing) = outputs.iter().map(|o| dir.join(o)).find(|p| p.exists()) {
            return Err(CliError::io(format!(
                "{} already exists; pass --force to overwrite",
                existing.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

fn load_inputs(ckpt: &Path, corpus: &Path) -> Result<(SInMTNetwork, CorpusManifest), CliError> {
    let net = load_checkpoint(ckpt, None).map_err(CliError::load)?;
    let manifest = CorpusManifest::load(corpus).map_err(CliError::load)?;
    Ok((net, manifest))
}

fn embeddings(net: &SInMTNetwork, manifest: &CorpusManifest, corpus: &Path, scope: ProbeScope) -> Result<EmbeddingSet, CliError> {
    let mut set = EmbeddingSet::default();
    for split in scope.splits() {
        if manifest.split(split).next().is_none() {
            continue;
        }
        set.rows.extend(score_split(net, manifest, corpus, split)?.1.rows);
    }
    Ok(set)
}

pub fn gen(config: Option<&Path>, out: &Path, force: bool) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config)?;
    cfg.corpus.validate()?;
    prepare_out(out, &[MANIFEST_FILE, RESOLVED], force)?;
    let manifest = generate_corpus(&cfg.corpus, out)?;
    write(&out.join(RESOLVED), cfg.to_text())?;
    let c = manifest.counts();
    println!(
        "wrote {} utterances ({} bonafide, {} spoof) to {}",
        c.total,
        c.bonafide,
        c.spoof,
        out.display()
    );
    Ok(())
}

pub fn train(config: Option<&Path>, corpus: &Path, out: &Path, overrides: TrainOverrides, force: bool) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(m) = overrides.mode {
        cfg.train.mode = m;
    }
    if let Some(p) = overrides.init {
        cfg.train.init_checkpoint = Some(p);
    }
    if let Some(e) = overrides.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = overrides.seed {
        cfg.train.seed = s;
    }
    cfg.train.validate()?;
    cfg.model.validate()?;
    if cfg.train.mode == Mode::SpeakerInvariant && cfg.train.init_checkpoint.is_none() {
        log::warn!("ivspk is starting from random weights; the two-stage recipe warm-starts it with --init <spk best.ckpt>");
    }
    let manifest = CorpusManifest::load(corpus).map_err(CliError::load)?;
    prepare_out(out, &["best.ckpt", "history.txt", RESOLVED], force)?;
    let outcome = train_from_corpus(&cfg.train, &cfg.model, &manifest, corpus)?;
    let ckpt = out.join("best.ckpt");
    save_checkpoint(outcome.selected(), &ckpt)?;
    write(&out.join("history.txt"), history_to_text(&outcome.history))?;
    write(&out.join(RESOLVED), cfg.to_text())?;
    let dev = outcome
        .history
        .iter()
        .find(|r| r.epoch == outcome.best_epoch)
        .map_or(outcome.initial_dev.eer, |r| r.dev_eer);
    println!(
        "{} model: best epoch {} of {}, dev EER {:.2}%, checkpoint {}",
        cfg.train.mode,
        outcome.best_epoch,
        outcome.history.len(),
        100.0 * dev,
        ckpt.display()
    );
    Ok(())
}

pub fn eval(ckpt: &Path, corpus: &Path, out: &Path, config: Option<&Path>, force: bool) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let (net, manifest) = load_inputs(ckpt, corpus)?;
    prepare_out(out, &["scores.txt", "report.txt", "report.json"], force)?;
    let (scores, _) = score_split(&net, &manifest, corpus, cfg.eval.split)?;
    let attacks: Vec<String> = manifest
        .split(cfg.eval.split)
        .filter(|r| r.label == Label::Spoof)
        .map(|r| r.attack_id.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let report = breakdown_report_expecting(&scores, &attacks)?;
    write(&out.join("scores.txt"), scores.to_text())?;
    let table = report.to_table();
    write(&out.join("report.txt"), &table)?;
    write(&out.join("report.json"), report.to_json())?;
    print!("{table}");
    Ok(())
}

pub fn probe(
    ckpt: &Path,
    corpus: &Path,
    config: Option<&Path>,
    scope: Option<ProbeScope>,
    json: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let scope = scope.unwrap_or(cfg.eval.probe_scope);
    let (net, manifest) = load_inputs(ckpt, corpus)?;
    let set = embeddings(&net, &manifest, corpus, scope)?;
    let report = separability(&set, &cfg.eval.probe)?;
    println!("embeddings: {} x {}", report.n_embeddings, report.dim);
    println!("speakers: {}", report.n_speakers);
    println!("probe accuracy: {:.4}", report.probe_accuracy);
    println!("chance: 1/{} = {:.4}", report.n_speakers, report.chance);
    println!("silhouette: {:.4}", report.silhouette);
    if let Some(path) = json {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        write(path, text)?;
    }
    Ok(())
}

pub fn export(ckpt: &Path, corpus: &Path, out: &Path, split: ProbeScope) -> Result<(), CliError> {
    let (net, manifest) = load_inputs(ckpt, corpus)?;
    let set = embeddings(&net, &manifest, corpus, split)?;
    write(out, set.to_text())?;
    println!("wrote {} embeddings of dimension {} to {}", set.rows.len(), set.dim(), out.display());
    Ok(())
}
