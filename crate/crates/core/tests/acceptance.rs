//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sinmt::autodiff::{check_gradients, sgd_step, GradCheckConfig, GradMap, OptimizerState};
use sinmt::evaluation::{compute_eer, mean_eer, relative_reduction, score_split, silhouette, speaker_probe, ProbeConfig};
use sinmt::model::{checkpoint_bytes, load_checkpoint, save_checkpoint, ModelConfig, SpeakerBranch};
use sinmt::rng::{domain, rng_for};
use sinmt::synthdata::dsp::rms;
use sinmt::synthdata::{
    apply_augmentation, generate_corpus, generate_in_memory, plan_augmentation, synthesize_bonafide, AugmentKind,
    CorpusConfig, CorpusManifest, Label, SpeakerProfile, Split, Utterance, BONAFIDE_ID,
};
use sinmt::training::{
    build_network, combined_loss, mean_cross_entropy, train, train_step, weighted_cross_entropy, Batch, StepConfig,
    TrainConfig, TrainData,
};
use sinmt::{Mode, ParamGroup, SInMTNetwork, Tape, Tensor};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// 1

fn grl_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for lambda in [-1.0, 0.0, 0.5, 1.0] {
        let x: Vec<f64> = (0..64).map(|_| rng.random_range(-3.0..3.0)).collect();
        let w: Vec<f64> = (0..64).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut tape = Tape::new();
        let xv = tape.param(Tensor::vector(x.clone()));
        let y = tape.gradient_reversal(xv, lambda);
        ensure(tape.value(y).data().iter().zip(&x).all(|(a, b)| a.to_bits() == b.to_bits()), || {
            format!("forward not bit-exact for lambda {lambda}")
        })?;
        let wv = tape.constant(Tensor::vector(w.clone()));
        let prod = tape.mul(y, wv).map_err(e2s)?;
        let loss = tape.sum(prod);
        let g = tape.backward(loss).map_err(e2s)?.wrt(xv);
        ensure(g.data().iter().zip(&w).all(|(g, w)| *g == -lambda * w), || {
            format!("backward differs from -lambda * upstream for lambda {lambda}")
        })?;
    }
    Ok("identity forward, -lambda backward for lambda in {-1, 0, 0.5, 1}".into())
}

// 2

fn waves(n: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let f = rng.random_range(0.05..0.4);
            (0..len)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    0.5 * (i as f64 * f).sin() + 0.1 * z
                })
                .collect()
        })
        .collect()
}

fn full_network_gradcheck() -> Outcome {
    let (lambda, alpha) = (1.0, 0.1);
    let net = SInMTNetwork::new(&ModelConfig::default(), Mode::SpeakerInvariant, lambda, alpha, 5, 3).map_err(e2s)?;
    let x = waves(2, 256, 7);
    let views: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let (spoof, speaker) = ([0usize, 1], [3usize, 1]);
    let weights = [0.8, 1.3];
    let report = check_gradients(
        &net.params,
        &GradCheckConfig::default(),
        |tape, b| {
            let out = net.forward(tape, b, &views, SpeakerBranch::Reversal(lambda))?;
            let parts = combined_loss(tape, out.spoof_logits, out.speaker_logits, &spoof, Some(&speaker), &weights, alpha)?;
            Ok(parts.total)
        },
        |p, name| {
            let mut tape = Tape::new();
            let b = p.bind_frozen(&mut tape);
            let out = net.forward(&mut tape, &b, &views, SpeakerBranch::Bypass)?;
            let ls = weighted_cross_entropy(&mut tape, out.spoof_logits, &spoof, &weights)?;
            let ld = mean_cross_entropy(&mut tape, out.speaker_logits.expect("speaker head"), &speaker)?;
            let (ls, ld) = (tape.value(ls).item()?, tape.value(ld).item()?);
            Ok(match p.get(name).expect("known parameter").group {
                ParamGroup::Extractor => ls - lambda * alpha * ld,
                _ => ls + alpha * ld,
            })
        },
    )
    .map_err(e2s)?;
    let worst = report.worst().cloned();
    ensure(report.passed(), || format!("max relative error {:.3e} at {:?}", report.max_rel_error(), worst))?;
    Ok(format!(
        "{} coordinates over {} tensors, max relative error {:.2e}",
        report.coords_checked(),
        report.params.len(),
        report.max_rel_error()
    ))
}

// 3

fn step_batch() -> Batch {
    Batch {
        waveforms: waves(3, 400, 11),
        spoof_labels: vec![1, 0, 1],
        speaker_labels: Some(vec![0, 2, 4]),
    }
}

fn separate_gradients(net: &SInMTNetwork, batch: &Batch, weights: &[f64; 2]) -> Result<(GradMap, GradMap), String> {
    let views: Vec<&[f64]> = batch.waveforms.iter().map(Vec::as_slice).collect();
    let mut tape = Tape::new();
    let b = net.params.bind(&mut tape);
    let out = net.forward(&mut tape, &b, &views, SpeakerBranch::Skip).map_err(e2s)?;
    let ls = weighted_cross_entropy(&mut tape, out.spoof_logits, &batch.spoof_labels, weights).map_err(e2s)?;
    let gs = b.gradients(&tape.backward(ls).map_err(e2s)?);

    let mut tape = Tape::new();
    let b = net.params.bind(&mut tape);
    let out = net.forward(&mut tape, &b, &views, SpeakerBranch::Bypass).map_err(e2s)?;
    let labels = batch.speaker_labels.as_deref().expect("speaker labels");
    let ld = mean_cross_entropy(&mut tape, out.speaker_logits.expect("speaker head"), labels).map_err(e2s)?;
    let gd = b.gradients(&tape.backward(ld).map_err(e2s)?);
    Ok((gs, gd))
}

fn update_rules() -> Outcome {
    let batch = step_batch();
    let weights = [0.6, 1.9];
    let lr = 0.05;
    let mut worst: f64 = 0.0;
    for (mode, lambda) in [(Mode::SpeakerInvariant, 1.0), (Mode::SpeakerAware, -1.0)] {
        for fold in [false, true] {
            let alpha = 0.1;
            let net = SInMTNetwork::new(&ModelConfig::default(), mode, lambda, alpha, 5, 4).map_err(e2s)?;
            let alpha_eff = if fold { 1.0 } else { alpha };
            let (gs, gd) = separate_gradients(&net, &batch, &weights)?;
            let mut oracle = net.clone();
            for (name, p) in oracle.params.iter_mut() {
                let (s, d) = (gs.get(name).expect("grad").data(), gd.get(name).expect("grad").data());
                for (k, v) in p.value.data_mut().iter_mut().enumerate() {
                    *v -= lr
                        * match p.group {
                            ParamGroup::Extractor => s[k] - lambda * alpha_eff * d[k],
                            ParamGroup::SpoofHead => s[k],
                            ParamGroup::SpeakerHead => alpha * d[k],
                        };
                }
            }
            let mut stepped = net.clone();
            let cfg = StepConfig {
                class_weights: weights,
                fold_alpha_into_lambda: fold,
            };
            train_step(&mut stepped, &batch, &cfg, &mut OptimizerState::sgd(lr)).map_err(e2s)?;
            let diff = stepped.params.max_abs_diff(&oracle.params);
            ensure(diff <= 1e-12, || format!("{mode} fold={fold}: max abs diff {diff:.3e}"))?;
            worst = worst.max(diff);

            if mode == Mode::SpeakerAware && !fold {
                let mut plain = net.clone();
                let summed = gs.axpy(alpha, &gd).map_err(e2s)?;
                sgd_step(&mut plain.params, &summed, lr).map_err(e2s)?;
                let diff = stepped.params.max_abs_diff(&plain.params);
                ensure(diff <= 1e-12, || format!("spk step vs plain multi-task step: {diff:.3e}"))?;
                worst = worst.max(diff);
            }
        }
    }
    Ok(format!("max abs parameter difference {worst:.2e}"))
}

// 4

fn brute_force_eer(bona: &[f64], spoof: &[f64]) -> f64 {
    let mut all: Vec<f64> = bona.iter().chain(spoof).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut thresholds = vec![all[0] - 1.0];
    thresholds.extend(all.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    thresholds.push(all[all.len() - 1] + 1.0);
    let rates = |t: f64| {
        let far = spoof.iter().filter(|&&s| s >= t).count() as f64 / spoof.len() as f64;
        let frr = bona.iter().filter(|&&s| s < t).count() as f64 / bona.len() as f64;
        (far, frr)
    };
    let mut last = rates(thresholds[0]);
    for &t in &thresholds[1..] {
        let (far, frr) = rates(t);
        let d = far - frr;
        if d == 0.0 {
            return far;
        }
        if d < 0.0 {
            let dp = last.0 - last.1;
            return last.0 + dp / (dp - d) * (far - last.0);
        }
        last = (far, frr);
    }
    unreachable!("FAR - FRR ends at -1")
}

fn eer_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let shift = rng.random_range(-1.0..2.0);
        let quantize = case % 4 == 0;
        let mut draw = |mu: f64| -> Vec<f64> {
            (0..20)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    if quantize {
                        (z + mu).round()
                    } else {
                        z + mu
                    }
                })
                .collect()
        };
        let bona = draw(shift);
        let spoof = draw(0.0);
        let got = compute_eer(&bona, &spoof).map_err(e2s)?.eer;
        let want = brute_force_eer(&bona, &spoof);
        worst = worst.max((got - want).abs());
    }
    ensure(worst <= 1e-9, || format!("max deviation from brute force {worst:.3e}"))?;
    let perfect = compute_eer(&[2.0, 3.0, 4.0], &[-1.0, 0.0, 1.0]).map_err(e2s)?.eer;
    ensure(perfect == 0.0, || format!("perfect separation gave {perfect}"))?;
    let same = [0.1, 0.5, 0.9, 1.3];
    let identical = compute_eer(&same, &same).map_err(e2s)?.eer;
    ensure(identical == 0.5, || format!("identical distributions gave {identical}"))?;
    Ok(format!("1000 seeded sets, max deviation {worst:.2e}; separated 0, identical 0.5"))
}

// 5

fn published_arithmetic() -> Outcome {
    let table1: [(&str, [f64; 4], f64); 5] = [
        ("AASIST", [7.03, 5.54, 13.66, 9.60], 8.95),
        ("Conformer", [5.69, 3.85, 12.49, 10.40], 8.10),
        ("MHFA", [4.31, 4.64, 12.14, 8.58], 7.41),
        ("MHFA-spk", [3.76, 5.29, 8.67, 8.41], 6.53),
        ("MHFA-IVspk", [3.58, 4.98, 8.41, 7.57], 6.13),
    ];
    for (model, row, pooled) in table1 {
        let m = mean_eer(&row).map_err(e2s)?;
        ensure((m - pooled).abs() <= 0.01, || format!("{model}: mean {m:.4} vs pooled {pooled}"))?;
    }
    let quoted = [
        (8.95, 7.41, 17.2),
        (7.03, 4.31, 38.7),
        (7.41, 6.53, 11.8),
        (7.41, 6.13, 17.2),
        (17.02, 8.76, 48.0),
        (20.77, 12.56, 40.0),
        (12.14, 8.41, 30.7),
        (4.31, 3.58, 17.0),
    ];
    for (base, new, pct) in quoted {
        let r = relative_reduction(base, new).map_err(e2s)?;
        ensure((r - pct).abs() <= 1.0, || format!("{base} -> {new}: {r:.2}% vs quoted {pct}%"))?;
    }
    let table2_mhfa = [1.54, 1.91, 0.76, 20.77, 17.02, 3.45, 4.75, 3.82, 1.49, 4.32, 7.01, 19.67, 37.57];
    let m = mean_eer(&table2_mhfa).map_err(e2s)?;
    ensure((m - 9.54).abs() <= 0.01, || format!("per-attack mean {m:.4}, expected 9.54"))?;
    ensure((m - 12.14).abs() > 1.0, || "per-attack mean coincides with the printed pooled value".into())?;
    ensure(table1[2].1[2] == 12.14, || "pooled per-attack entry should equal the LA column".into())?;
    Ok(format!(
        "5 pooled means, {} quoted reductions; per-attack mean {m:.2} vs pooled-score 12.14",
        quoted.len()
    ))
}

// 6

const BASELINE_EPOCHS: usize = 20;
const SPK_EPOCHS: usize = 20;
const IVSPK_EPOCHS: usize = 10;

struct Measured {
    eer: f64,
    probe: f64,
    chance: f64,
    silhouette: f64,
}

fn measure(net: &SInMTNetwork, utts: &[Utterance]) -> Result<Measured, String> {
    let (mut bona, mut spoof, mut emb, mut ids) = (vec![], vec![], vec![], vec![]);
    for u in utts {
        let inf = net.infer(&u.waveform).map_err(e2s)?;
        if u.record.split == Split::Eval {
            match u.record.label {
                Label::Bonafide => bona.push(inf.score),
                Label::Spoof => spoof.push(inf.score),
            }
        }
        emb.push(inf.embedding);
        ids.push(u.record.speaker_id);
    }
    let probe = speaker_probe(&emb, &ids, &ProbeConfig::default()).map_err(e2s)?;
    Ok(Measured {
        eer: compute_eer(&bona, &spoof).map_err(e2s)?.eer,
        probe: probe.accuracy,
        chance: probe.chance,
        silhouette: silhouette(&emb, &ids).map_err(e2s)?,
    })
}

fn directional_experiment() -> Outcome {
    let corpus = CorpusConfig::default();
    let utts = generate_in_memory(&corpus).map_err(e2s)?;
    let data = TrainData::from_utterances(&utts, corpus.sample_rate);
    let model = ModelConfig::default();
    let base = TrainConfig {
        patience: 0,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir().map_err(e2s)?;

    let baseline = train(
        &TrainConfig {
            mode: Mode::Baseline,
            epochs: BASELINE_EPOCHS,
            ..base.clone()
        },
        &model,
        &data,
    )
    .map_err(e2s)?;
    let spk = train(
        &TrainConfig {
            mode: Mode::SpeakerAware,
            epochs: SPK_EPOCHS,
            ..base.clone()
        },
        &model,
        &data,
    )
    .map_err(e2s)?;
    let spk_ckpt = dir.path().join("spk.ckpt");
    save_checkpoint(spk.selected(), &spk_ckpt).map_err(e2s)?;
    let ivspk = train(
        &TrainConfig {
            mode: Mode::SpeakerInvariant,
            lambda: Some(1.0),
            epochs: IVSPK_EPOCHS,
            init_checkpoint: Some(spk_ckpt),
            ..base.clone()
        },
        &model,
        &data,
    )
    .map_err(e2s)?;

    let b = measure(baseline.selected(), &utts)?;
    let s = measure(spk.selected(), &utts)?;
    let i = measure(ivspk.selected(), &utts)?;
    let summary = format!(
        "EER baseline {:.4} spk {:.4} ivspk {:.4}; probe baseline {:.3} spk {:.3} ivspk {:.3} (chance {:.3}); \
         silhouette baseline {:.3} spk {:.3} ivspk {:.3}",
        b.eer, s.eer, i.eer, b.probe, s.probe, i.probe, s.chance, b.silhouette, s.silhouette, i.silhouette
    );
    let mut failed = Vec::new();
    if ![b.eer, s.eer, i.eer].iter().all(|e| *e < 0.15) {
        failed.push("(a) eval EER < 0.15".to_string());
    }
    if i.probe >= 0.5 * s.probe {
        failed.push(format!("(b) ivspk probe {:.3} not below 0.5 x spk probe = {:.3}", i.probe, 0.5 * s.probe));
    }
    if i.silhouette >= s.silhouette {
        failed.push("(c) silhouette(ivspk) < silhouette(spk)".to_string());
    }
    if s.probe < 3.0 * s.chance {
        failed.push("(d) spk probe >= 3 x chance".to_string());
    }
    if failed.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{}; {summary}", failed.join("; ")))
    }
}

// 7

fn tiny_model() -> ModelConfig {
    let mut m = ModelConfig::default();
    m.encoder.n_transformer_layers = 1;
    m
}

fn tiny_corpus() -> CorpusConfig {
    CorpusConfig {
        n_speakers: 8,
        utterances_per_speaker: 16,
        n_samples: 1600,
        ..CorpusConfig::default()
    }
}

fn quick(mode: Mode) -> TrainConfig {
    TrainConfig {
        mode,
        epochs: 2,
        patience: 0,
        batch_size: 16,
        clip_len: 800,
        ..TrainConfig::default()
    }
}

fn artifacts(net: &SInMTNetwork, manifest: &CorpusManifest, dir: &Path) -> Result<(Vec<u8>, String, String), String> {
    let (scores, emb) = score_split(net, manifest, dir, Split::Eval).map_err(e2s)?;
    Ok((checkpoint_bytes(net).map_err(e2s)?, scores.to_text(), emb.to_text()))
}

fn determinism_and_persistence() -> Outcome {
    let tmp = tempfile::tempdir().map_err(e2s)?;
    let corpus_dir = tmp.path().join("corpus");
    let manifest = generate_corpus(&tiny_corpus(), &corpus_dir).map_err(e2s)?;
    let data = TrainData::load(&manifest, &corpus_dir).map_err(e2s)?;
    let model = tiny_model();

    let a = train(&quick(Mode::SpeakerAware), &model, &data).map_err(e2s)?;
    let b = train(&quick(Mode::SpeakerAware), &model, &data).map_err(e2s)?;
    let (ca, sa, ea) = artifacts(a.selected(), &manifest, &corpus_dir)?;
    let (cb, sb, eb) = artifacts(b.selected(), &manifest, &corpus_dir)?;
    ensure(ca == cb, || "rerun checkpoints differ".into())?;
    ensure(sa == sb, || "rerun score files differ".into())?;
    ensure(ea == eb, || "rerun embedding exports differ".into())?;

    let path = tmp.path().join("spk.ckpt");
    save_checkpoint(a.selected(), &path).map_err(e2s)?;
    let loaded = load_checkpoint(&path, None).map_err(e2s)?;
    ensure(checkpoint_bytes(&loaded).map_err(e2s)? == ca, || "save/load changed the checkpoint bytes".into())?;
    let bits_equal = loaded.params.iter().all(|(name, p)| {
        let orig = a.selected().params.tensor(name).expect("same names");
        p.value.data().iter().zip(orig.data()).all(|(x, y)| x.to_bits() == y.to_bits())
    });
    ensure(bits_equal, || "reloaded parameters are not bit-identical".into())?;

    let mut iv = quick(Mode::SpeakerInvariant);
    iv.init_checkpoint = Some(path);
    let warm = build_network(&iv, &model, data.speakers.len()).map_err(e2s)?;
    for group in ParamGroup::ALL {
        let names: Vec<&str> = a.selected().params.group_names(group).collect();
        ensure(!names.is_empty(), || format!("spk model has no {group} parameters"))?;
        for name in names {
            let got = warm.params.tensor(name).map_err(e2s)?;
            let want = a.selected().params.tensor(name).map_err(e2s)?;
            ensure(got == want, || format!("warm start did not copy {name}"))?;
        }
    }
    Ok(format!(
        "checkpoint {} bytes, {} score lines, {} embedding lines reproduced; warm start copied {} tensors",
        ca.len(),
        sa.lines().count(),
        ea.lines().count(),
        warm.params.len()
    ))
}

// 8

fn files_under(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable dir") {
            let p = entry.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).expect("under dir").to_path_buf());
            }
        }
    }
    out.sort();
    out
}

/// Least-squares fit of `out = a s + b n`; SNR of the two fitted parts.
fn fitted_snr_db(out: &[f64], s: &[f64], n: &[f64]) -> f64 {
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let (ss, nn, sn) = (dot(s, s), dot(n, n), dot(s, n));
    let (os, on) = (dot(out, s), dot(out, n));
    let det = ss * nn - sn * sn;
    let a = (os * nn - on * sn) / det;
    let b = (on * ss - os * sn) / det;
    let sig: Vec<f64> = s.iter().map(|v| a * v).collect();
    let int: Vec<f64> = n.iter().map(|v| b * v).collect();
    20.0 * (rms(&sig) / rms(&int)).log10()
}

fn corpus_sanity() -> Outcome {
    let tmp = tempfile::tempdir().map_err(e2s)?;
    let cfg = CorpusConfig::default();
    let (d1, d2) = (tmp.path().join("a"), tmp.path().join("b"));
    let manifest = generate_corpus(&cfg, &d1).map_err(e2s)?;
    generate_corpus(&cfg, &d2).map_err(e2s)?;
    let files = files_under(&d1);
    ensure(files == files_under(&d2), || "regenerated corpus has different files".into())?;
    for f in &files {
        let same = std::fs::read(d1.join(f)).map_err(e2s)? == std::fs::read(d2.join(f)).map_err(e2s)?;
        ensure(same, || format!("{} differs between regenerations", f.display()))?;
    }

    let train_spk = manifest.speakers(Split::Train);
    let eval_spk = manifest.speakers(Split::Eval);
    ensure(train_spk.is_disjoint(&eval_spk), || "train and eval share speakers".into())?;
    for r in &manifest.records {
        let consistent = (r.label == Label::Bonafide) == (r.attack_id == BONAFIDE_ID);
        ensure(consistent, || format!("{}: label {} with attack {}", r.utt_id, r.label, r.attack_id))?;
    }

    let sr = f64::from(cfg.sample_rate);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 0..100u64 {
        let profile = SpeakerProfile::new(3, (seed % 20) as usize + 1);
        let clean = synthesize_bonafide(&profile, seed, 1000, sr);
        for kind in [AugmentKind::Noise, AugmentKind::Speech] {
            let plan = plan_augmentation(kind, seed);
            let out = apply_augmentation(&clean, &plan, sr);
            let mut rng = rng_for(plan.content_seed, domain::AUGMENT, 1);
            let interferer: Vec<f64> = match kind {
                AugmentKind::Noise => (0..clean.len()).map(|_| StandardNormal.sample(&mut rng)).collect(),
                _ => {
                    let other = SpeakerProfile::sample(0, &mut rng);
                    synthesize_bonafide(&other, rng.random(), clean.len(), sr)
                }
            };
            worst = worst.max((fitted_snr_db(&out, &clean, &interferer) - plan.snr_db).abs());
            checked += 1;
        }
    }
    ensure(worst <= 0.5, || format!("realised SNR off target by {worst:.3} dB"))?;
    Ok(format!(
        "{} files byte-identical, {} train / {} eval speakers disjoint, {checked} mixes within {worst:.2e} dB",
        files.len(),
        train_spk.len(),
        eval_spk.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("GRL contract", grl_contract, Duration::from_secs(1)),
        ("gradient check, full network", full_network_gradcheck, Duration::from_secs(30)),
        ("update rules vs two-backward oracle", update_rules, Duration::from_secs(10)),
        ("EER vs threshold-sweep oracle", eer_oracle, Duration::from_secs(10)),
        ("published arithmetic fixtures", published_arithmetic, Duration::from_secs(1)),
        ("baseline / spk / ivspk directional run", directional_experiment, Duration::from_secs(600)),
        ("determinism and persistence", determinism_and_persistence, Duration::from_secs(120)),
        ("corpus sanity", corpus_sanity, Duration::from_secs(60)),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(_) if elapsed > *budget => Err(format!("took {:.1} s, budget {} s", elapsed.as_secs_f64(), budget.as_secs())),
            r => r,
        };
        match result {
            Ok(detail) => println!("PASS {id} {name} [{:.2} s]: {detail}", elapsed.as_secs_f64()),
            Err(detail) => {
                failures += 1;
                println!("FAIL {id} {name} [{:.2} s]: {detail}", elapsed.as_secs_f64());
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criterion(s) failed");
        ExitCode::FAILURE
    }
}
