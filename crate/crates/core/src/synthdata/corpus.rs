use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::attack::{apply_attack, AttackSpec, BONAFIDE_ID};
use super::speaker::{synthesize_bonafide, SpeakerProfile};
use super::wavfile::{read_waveform, write_waveform};
use crate::rng::{derive_seed, domain};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const WAV_DIR: &str = "wav";
const MANIFEST_VERSION: &str = "sinmt-corpus v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Bonafide,
    Spoof,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Bonafide => "bonafide",
            Label::Spoof => "spoof",
        }
    }

    /// Spoof-head class index.
    pub fn class(self) -> usize {
        match self {
            Label::Bonafide => crate::model::BONAFIDE_CLASS,
            Label::Spoof => crate::model::SPOOF_CLASS,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bonafide" => Ok(Label::Bonafide),
            "spoof" => Ok(Label::Spoof),
            other => Err(Error::Corpus(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Eval,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Eval];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Eval => "eval",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Corpus(format!("unknown split `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub dev: f64,
    pub eval: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            dev: 0.1,
            eval: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Total number of speakers, D.
    pub n_speakers: usize,
    pub utterances_per_speaker: usize,
    pub attacks: Vec<AttackSpec>,
    /// `eval` is a fraction of speakers; `dev` is carved out of each
    /// remaining speaker's utterances.
    pub split_fractions: SplitFractions,
    pub n_samples: usize,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            n_speakers: 20,
            utterances_per_speaker: 40,
            attacks: AttackSpec::defaults(),
            split_fractions: SplitFractions::default(),
            n_samples: 4000,
            sample_rate: 4000,
            seed: 0,
        }
    }
}

/// Speaker and utterance layout derived from a validated config.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub n_eval_speakers: usize,
    pub dev_per_speaker: usize,
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<SplitPlan> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_speakers < 4 {
            return bad(format!("n_speakers must be at least 4, got {}", self.n_speakers));
        }
        let u = self.utterances_per_speaker;
        if u < 2 || u % 2 != 0 {
            return bad(format!("utterances_per_speaker must be even and >= 2, got {u}"));
        }
        if self.n_samples == 0 || self.sample_rate == 0 {
            return bad("n_samples and sample_rate must be positive".into());
        }
        let f = &self.split_fractions;
        if [f.train, f.dev, f.eval].iter().any(|v| !(0.0..=1.0).contains(v)) {
            return bad("split fractions must lie in [0, 1]".into());
        }
        if (f.train + f.dev + f.eval - 1.0).abs() > 1e-9 {
            return bad(format!(
                "split fractions sum to {}, expected 1",
                f.train + f.dev + f.eval
            ));
        }
        let n_eval = (f.eval * self.n_speakers as f64).round() as usize;
        if n_eval == 0 || n_eval >= self.n_speakers {
            return bad(format!(
                "{} speakers cannot be split into disjoint train and eval sets with eval fraction {}",
                self.n_speakers, f.eval
            ));
        }
        let held_in = f.train + f.dev;
        let dev = if held_in > 0.0 {
            (f.dev / held_in * u as f64).round() as usize
        } else {
            0
        };
        if dev >= u {
            return bad(format!("dev fraction leaves no train utterances ({dev} of {u} per speaker)"));
        }
        if self.attacks.is_empty() {
            return bad("at least one attack is required".into());
        }
        let mut seen = HashSet::new();
        for a in &self.attacks {
            if a.attack_id == BONAFIDE_ID || a.attack_id.is_empty() || a.attack_id.contains(char::is_whitespace) {
                return bad(format!("invalid attack id `{}`", a.attack_id));
            }
            if !seen.insert(a.attack_id.as_str()) {
                return bad(format!("duplicate attack id `{}`", a.attack_id));
            }
        }
        Ok(SplitPlan {
            n_eval_speakers: n_eval,
            dev_per_speaker: dev,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UttRecord {
    pub utt_id: String,
    /// Relative to the corpus directory.
    pub path: String,
    pub speaker_id: usize,
    pub label: Label,
    pub attack_id: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub record: UttRecord,
    pub waveform: Vec<f64>,
}

fn record_for(cfg: &CorpusConfig, plan: &SplitPlan, speaker_id: usize, j: usize) -> UttRecord {
    let utt_id = format!("spk{speaker_id:03}_{j:03}");
    let (label, attack_id) = if j % 2 == 0 {
        (Label::Bonafide, BONAFIDE_ID.to_string())
    } else {
        let a = &cfg.attacks[(j / 2) % cfg.attacks.len()];
        (Label::Spoof, a.attack_id.clone())
    };
    let n_train_speakers = cfg.n_speakers - plan.n_eval_speakers;
    let split = if speaker_id > n_train_speakers {
        Split::Eval
    } else if j >= cfg.utterances_per_speaker - plan.dev_per_speaker {
        Split::Dev
    } else {
        Split::Train
    };
    UttRecord {
        path: format!("{WAV_DIR}/{utt_id}.bin"),
        utt_id,
        speaker_id,
        label,
        attack_id,
        split,
    }
}

/// Per-utterance seed: a pure function of corpus seed and utterance index.
pub fn utterance_seed(corpus_seed: u64, index: usize) -> u64 {
    derive_seed(derive_seed(corpus_seed, domain::UTTERANCE), index as u64)
}

/// Synthesises utterance `j` of speaker `speaker_id` (1-based).
pub fn generate_utterance(cfg: &CorpusConfig, speaker_id: usize, j: usize) -> Result<Utterance> {
    let plan = cfg.validate()?;
    generate_with_plan(cfg, &plan, speaker_id, j)
}

fn generate_with_plan(cfg: &CorpusConfig, plan: &SplitPlan, speaker_id: usize, j: usize) -> Result<Utterance> {
    let record = record_for(cfg, plan, speaker_id, j);
    let index = (speaker_id - 1) * cfg.utterances_per_speaker + j;
    let seed = utterance_seed(cfg.seed, index);
    let profile = SpeakerProfile::new(cfg.seed, speaker_id);
    let rate = cfg.sample_rate as f64;
    let bona = synthesize_bonafide(&profile, seed, cfg.n_samples, rate);
    let waveform = match record.label {
        Label::Bonafide => bona,
        Label::Spoof => {
            let spec = cfg
                .attacks
                .iter()
                .find(|a| a.attack_id == record.attack_id)
                .expect("attack from config");
            apply_attack(&bona, spec, &profile, seed, rate)?
        }
    };
    Ok(Utterance { record, waveform })
}

/// Every utterance in manifest order, in memory.
pub fn generate_in_memory(cfg: &CorpusConfig) -> Result<Vec<Utterance>> {
    let plan = cfg.validate()?;
    let mut out = Vec::with_capacity(cfg.n_speakers * cfg.utterances_per_speaker);
    for s in 1..=cfg.n_speakers {
        for j in 0..cfg.utterances_per_speaker {
            out.push(generate_with_plan(cfg, &plan, s, j)?);
        }
    }
    Ok(out)
}

/// Writes waveforms and the manifest under `out_dir`.
pub fn generate_corpus(cfg: &CorpusConfig, out_dir: &Path) -> Result<CorpusManifest> {
    let plan = cfg.validate()?;
    let wav_dir = out_dir.join(WAV_DIR);
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let mut records = Vec::with_capacity(cfg.n_speakers * cfg.utterances_per_speaker);
    for s in 1..=cfg.n_speakers {
        for j in 0..cfg.utterances_per_speaker {
            let utt = generate_with_plan(cfg, &plan, s, j)?;
            write_waveform(&out_dir.join(&utt.record.path), &utt.waveform, cfg.sample_rate)?;
            records.push(utt.record);
        }
    }
    let manifest = CorpusManifest {
        seed: cfg.seed,
        n_speakers: cfg.n_speakers,
        sample_rate: cfg.sample_rate,
        n_samples: cfg.n_samples,
        attacks: cfg.attacks.iter().map(|a| a.attack_id.clone()).collect(),
        records,
    };
    manifest.write(out_dir)?;
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusManifest {
    pub seed: u64,
    pub n_speakers: usize,
    pub sample_rate: u32,
    pub n_samples: usize,
    pub attacks: Vec<String>,
    pub records: Vec<UttRecord>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub total: usize,
    pub bonafide: usize,
    pub spoof: usize,
    pub per_split: BTreeMap<Split, usize>,
}

impl fmt::Display for Counts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "total={} bonafide={} spoof={}", self.total, self.bonafide, self.spoof)?;
        for s in Split::ALL {
            write!(f, " {s}={}", self.per_split.get(&s).copied().unwrap_or(0))?;
        }
        Ok(())
    }
}

impl CorpusManifest {
    pub fn counts(&self) -> Counts {
        let mut c = Counts {
            total: self.records.len(),
            ..Counts::default()
        };
        for r in &self.records {
            match r.label {
                Label::Bonafide => c.bonafide += 1,
                Label::Spoof => c.spoof += 1,
            }
            *c.per_split.entry(r.split).or_default() += 1;
        }
        c
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &UttRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn speakers(&self, split: Split) -> BTreeSet<usize> {
        self.split(split).map(|r| r.speaker_id).collect()
    }

    /// Speakers seen in training (train and dev splits), ascending. The
    /// speaker head's class `k` is the `k`-th entry.
    pub fn training_speakers(&self) -> Vec<usize> {
        let mut s = self.speakers(Split::Train);
        s.extend(self.speakers(Split::Dev));
        s.into_iter().collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# {MANIFEST_VERSION}\n"));
        out.push_str(&format!("# seed {}\n", self.seed));
        out.push_str(&format!("# n_speakers {}\n", self.n_speakers));
        out.push_str(&format!("# sample_rate {}\n", self.sample_rate));
        out.push_str(&format!("# n_samples {}\n", self.n_samples));
        out.push_str(&format!("# attacks {}\n", self.attacks.join(",")));
        out.push_str(&format!("# counts {}\n", self.counts()));
        out.push_str("# utt_id\tpath\tspeaker_id\tlabel\tattack_id\tsplit\n");
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.utt_id, r.path, r.speaker_id, r.label, r.attack_id, r.split
            ));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, m: &str| Error::Corpus(format!("manifest line {line}: {m}"));
        let mut header: BTreeMap<String, String> = BTreeMap::new();
        let mut records = Vec::new();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == format!("# {MANIFEST_VERSION}") => {}
            _ => return Err(Error::Corpus(format!("manifest must start with `# {MANIFEST_VERSION}`"))),
        }
        for (i, line) in lines {
            let n = i + 1;
            if let Some(h) = line.strip_prefix("# ") {
                if let Some((k, v)) = h.split_once(' ') {
                    header.insert(k.to_string(), v.to_string());
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(n, &format!("expected 6 fields, found {}", f.len())));
            }
            records.push(UttRecord {
                utt_id: f[0].to_string(),
                path: f[1].to_string(),
                speaker_id: f[2].parse().map_err(|_| bad(n, "speaker_id is not an integer"))?,
                label: f[3].parse()?,
                attack_id: f[4].to_string(),
                split: f[5].parse()?,
            });
        }
        let get = |k: &str| {
            header
                .get(k)
                .ok_or_else(|| Error::Corpus(format!("manifest header lacks `{k}`")))
        };
        let num = |k: &str| -> Result<u64> {
            get(k)?
                .parse()
                .map_err(|_| Error::Corpus(format!("manifest header `{k}` is not an integer")))
        };
        let manifest = CorpusManifest {
            seed: num("seed")?,
            n_speakers: num("n_speakers")? as usize,
            sample_rate: num("sample_rate")? as u32,
            n_samples: num("n_samples")? as usize,
            attacks: get("attacks")?.split(',').map(str::to_string).collect(),
            records,
        };
        let declared = get("counts")?;
        if *declared != manifest.counts().to_string() {
            return Err(Error::Corpus(format!(
                "header counts `{declared}` disagree with records `{}`",
                manifest.counts()
            )));
        }
        manifest.check_consistency()?;
        Ok(manifest)
    }

    /// Label/attack agreement, unique ids and train/eval speaker disjointness.
    pub fn check_consistency(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for r in &self.records {
            if !ids.insert(r.utt_id.as_str()) {
                return Err(Error::Corpus(format!("duplicate utt_id `{}`", r.utt_id)));
            }
            let spoof = r.attack_id != BONAFIDE_ID;
            if spoof != (r.label == Label::Spoof) {
                return Err(Error::Corpus(format!(
                    "`{}` has label {} but attack {}",
                    r.utt_id, r.label, r.attack_id
                )));
            }
            if spoof && !self.attacks.contains(&r.attack_id) {
                return Err(Error::Corpus(format!("`{}` uses undeclared attack {}", r.utt_id, r.attack_id)));
            }
            if r.speaker_id == 0 || r.speaker_id > self.n_speakers {
                return Err(Error::Corpus(format!("`{}` has speaker {} outside 1..={}", r.utt_id, r.speaker_id, self.n_speakers)));
            }
        }
        let eval = self.speakers(Split::Eval);
        if let Some(s) = self.training_speakers().iter().find(|s| eval.contains(s)) {
            return Err(Error::Corpus(format!("speaker {s} appears in both training and eval splits")));
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))
    }

    /// Reads `<dir>/manifest.tsv` and checks that every waveform exists.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest = Self::parse(&text)?;
        if let Some(r) = manifest.records.iter().find(|r| !dir.join(&r.path).is_file()) {
            return Err(Error::Corpus(format!("missing waveform {}", dir.join(&r.path).display())));
        }
        Ok(manifest)
    }

    pub fn waveform_path(&self, dir: &Path, record: &UttRecord) -> PathBuf {
        dir.join(&record.path)
    }

    pub fn load_waveform(&self, dir: &Path, record: &UttRecord) -> Result<Vec<f64>> {
        let (samples, rate) = read_waveform(&self.waveform_path(dir, record))?;
        if rate != self.sample_rate {
            return Err(Error::Corpus(format!(
                "{} has sample rate {rate}, manifest says {}",
                record.path, self.sample_rate
            )));
        }
        Ok(samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusConfig {
        CorpusConfig {
            n_speakers: 5,
            utterances_per_speaker: 8,
            n_samples: 512,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn default_counts() {
        let cfg = CorpusConfig::default();
        let plan = cfg.validate().unwrap();
        assert_eq!(plan, SplitPlan { n_eval_speakers: 4, dev_per_speaker: 5 });
        let records: Vec<_> = (1..=20)
            .flat_map(|s| (0..40).map(move |j| (s, j)))
            .map(|(s, j)| record_for(&cfg, &plan, s, j))
            .collect();
        let m = CorpusManifest {
            seed: 0,
            n_speakers: 20,
            sample_rate: 4000,
            n_samples: 4000,
            attacks: cfg.attacks.iter().map(|a| a.attack_id.clone()).collect(),
            records,
        };
        let c = m.counts();
        assert_eq!((c.total, c.bonafide, c.spoof), (800, 400, 400));
        assert_eq!(c.per_split[&Split::Eval], 160);
        assert_eq!(c.per_split[&Split::Dev], 80);
        assert_eq!(m.training_speakers(), (1..=16).collect::<Vec<_>>());
        m.check_consistency().unwrap();
        assert_eq!(CorpusManifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn too_few_speakers_rejected() {
        let cfg = CorpusConfig {
            n_speakers: 3,
            ..CorpusConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = CorpusConfig {
            split_fractions: SplitFractions { train: 0.95, dev: 0.05, eval: 0.0 },
            ..CorpusConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("disjoint"));
    }

    #[test]
    fn written_corpus_is_reproducible() {
        let cfg = small();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = generate_corpus(&cfg, a.path()).unwrap();
        let mb = generate_corpus(&cfg, b.path()).unwrap();
        assert_eq!(ma, mb);
        let loaded = CorpusManifest::load(a.path()).unwrap();
        assert_eq!(loaded, ma);
        for r in &ma.records {
            let fa = fs::read(a.path().join(&r.path)).unwrap();
            let fb = fs::read(b.path().join(&r.path)).unwrap();
            assert_eq!(fa, fb);
        }
        let one = generate_utterance(&cfg, 3, 5).unwrap();
        assert_eq!(loaded.load_waveform(a.path(), &one.record).unwrap(), one.waveform);
        fs::remove_file(a.path().join(&ma.records[0].path)).unwrap();
        assert!(CorpusManifest::load(a.path()).is_err());
    }

    #[test]
    fn tampered_manifest_rejected() {
        let cfg = small();
        let plan = cfg.validate().unwrap();
        let records = (1..=5).flat_map(|s| (0..8).map(move |j| (s, j))).map(|(s, j)| record_for(&cfg, &plan, s, j)).collect();
        let m = CorpusManifest {
            seed: 0,
            n_speakers: 5,
            sample_rate: 4000,
            n_samples: 512,
            attacks: vec!["A01".into(), "A02".into(), "A03".into(), "A04".into()],
            records,
        };
        let text = m.to_text().replace("\tspoof\tA01", "\tbonafide\tA01");
        assert!(CorpusManifest::parse(&text).is_err());
    }
}
