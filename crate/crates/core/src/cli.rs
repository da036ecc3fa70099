//! The `pvp` command line.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::features::{read_manifest, write_manifest, Label, UtteranceFeatures};
use crate::metrics::{self, evaluate};
use crate::profile::{build_profile, load_profile, save_profile, SpeakerProfile};
use crate::scoring::{self, score_utterance_with, ScoreOptions, ScoreRecord};
use crate::synth::{generate, SynthSpec};

#[derive(Debug, Parser)]
#[command(
    name = "pvp",
    version,
    about = "Phoneme-level voice profiling and deepfake scoring"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a speaker profile from an enrollment manifest.
    BuildProfile {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for reference subsampling and model fitting.
        #[arg(long)]
        seed: Option<u64>,
        /// Fraction of bona fide utterances to use, in (0, 1].
        #[arg(long, value_parser = parse_fraction)]
        ref_fraction: Option<f64>,
        /// Only enroll utterances of this speaker.
        #[arg(long)]
        speaker: Option<String>,
    },
    /// Score every utterance of a manifest against a profile.
    Score {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip the salient tier (ablation).
        #[arg(long)]
        no_salient_tier: bool,
        /// Ignore speaker embeddings (ablation).
        #[arg(long)]
        no_speaker: bool,
    },
    /// Compute ROC, AUC and EER from score records and manifest labels.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        /// Manifest providing the bonafide/spoof labels.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// ROC CSV path; defaults to the output path with a `.roc.csv` extension.
        #[arg(long)]
        roc: Option<PathBuf>,
    },
    /// Write per-phoneme anomaly reports, one file per utterance.
    Explain {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Only explain this utterance.
        #[arg(long)]
        id: Option<String>,
    },
    /// Generate synthetic enrollment and test manifests.
    Synth {
        /// JSON synth spec; the built-in default is used when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Output directory for `enroll.jsonl` and `test.jsonl`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 200)]
        n_enroll: usize,
        #[arg(long, default_value_t = 200)]
        n_genuine: usize,
        #[arg(long, default_value_t = 200)]
        n_spoof: usize,
    },
    /// Per-speaker phoneme distinctiveness matrix from a multi-speaker manifest.
    Distinctiveness {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("fraction must lie in (0, 1], got {v}"))
    }
}

/// Writes through a sibling temporary file so a failed command never leaves
/// a partial output behind.
fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    let result = body(&mut w).and_then(|_| w.flush().map_err(|e| Error::io(&tmp, e)));
    drop(w);
    match result {
        Ok(()) => std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e)),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<Config> {
    let mut config = match path {
        Some(p) => Config::from_json_file(p)?,
        None => Config::default(),
    };
    if let Some(seed) = seed {
        config.rng_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

/// Seeded subsample of `ceil(fraction * n)` utterances (at least one),
/// returned in manifest order.
pub fn subsample(
    utterances: Vec<UtteranceFeatures>,
    fraction: f64,
    seed: u64,
) -> Vec<UtteranceFeatures> {
    let n = utterances.len();
    if n == 0 || fraction >= 1.0 {
        return utterances;
    }
    let keep = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, keep).into_vec();
    picked.sort_unstable();
    let mut slots: Vec<Option<UtteranceFeatures>> = utterances.into_iter().map(Some).collect();
    picked.into_iter().filter_map(|i| slots[i].take()).collect()
}

fn select_enrollment(
    utterances: Vec<UtteranceFeatures>,
    speaker: Option<&str>,
) -> Result<Vec<UtteranceFeatures>> {
    let speaker = match speaker {
        Some(s) => s.to_string(),
        None => {
            let mut ids: Vec<&str> = utterances.iter().map(|u| u.speaker_id.as_str()).collect();
            ids.sort_unstable();
            ids.dedup();
            match ids.as_slice() {
                [one] => one.to_string(),
                [] => return Err(Error::InvalidInput("enrollment manifest is empty".into())),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "manifest holds {} speakers; choose one with --speaker",
                        ids.len()
                    )))
                }
            }
        }
    };
    let before = utterances.len();
    let kept: Vec<_> = utterances
        .into_iter()
        .filter(|u| u.speaker_id == speaker && u.label != Label::Spoof)
        .collect();
    if kept.len() < before {
        log::warn!(
            "enrolling {} of {before} utterances (speaker '{speaker}', spoofs excluded)",
            kept.len()
        );
    }
    Ok(kept)
}

fn print_profile_summary(profile: &SpeakerProfile, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "{:<10} {:>6} {:>4} {:>14} {:>14} {:>8}",
        "phoneme", "N_p", "K_p", "mean_ll", "weight", "salient"
    )?;
    for row in profile.summary() {
        writeln!(
            out,
            "{:<10} {:>6} {:>4} {:>14.4} {:>14.6e} {:>8}",
            row.phoneme_label,
            row.sample_count,
            row.components,
            row.mean_log_likelihood,
            row.reliability_weight,
            if row.salient { "*" } else { "" }
        )?;
    }
    writeln!(
        out,
        "{} phoneme models, {} class models, speaker model: {}",
        profile.phoneme_models.len(),
        profile.class_models.len(),
        if profile.speaker_model.is_some() {
            "yes"
        } else {
            "no"
        }
    )
}

fn check_profile_dims(profile: &SpeakerProfile, utterances: &[UtteranceFeatures]) -> Result<()> {
    if let Some(u) = utterances.iter().find(|u| u.dim() != profile.embedding_dim) {
        return Err(Error::DimensionMismatch {
            expected: profile.embedding_dim,
            found: u.dim(),
        });
    }
    Ok(())
}

pub fn read_score_records(path: &Path) -> Result<Vec<ScoreRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::malformed(i + 1, e.to_string()))?);
    }
    Ok(out)
}

fn sanitize_file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Runs one CLI invocation. Human-readable output goes to `stdout`.
pub fn run(cli: Cli, stdout: &mut impl Write) -> Result<()> {
    let console = |e: std::io::Error| Error::io("<stdout>", e);
    match cli.command {
        Command::BuildProfile {
            manifest,
            out,
            config,
            seed,
            ref_fraction,
            speaker,
        } => {
            let config = load_config(config.as_deref(), seed)?;
            let mut reference = select_enrollment(read_manifest(&manifest)?, speaker.as_deref())?;
            if let Some(f) = ref_fraction {
                reference = subsample(reference, f, config.rng_seed);
            }
            let profile = build_profile(&reference, &config)?;
            save_profile(&profile, &out)?;
            writeln!(stdout, "{} reference utterances", reference.len()).map_err(console)?;
            print_profile_summary(&profile, stdout).map_err(console)?;
        }
        Command::Score {
            profile,
            manifest,
            out,
            no_salient_tier,
            no_speaker,
        } => {
            let profile = load_profile(&profile)?;
            let utterances = read_manifest(&manifest)?;
            check_profile_dims(&profile, &utterances)?;
            let options = ScoreOptions {
                salient_tier: !no_salient_tier,
                speaker_branch: !no_speaker,
            };
            let records: Vec<ScoreRecord> = utterances
                .par_iter()
                .map(|u| score_utterance_with(&profile, u, &options).map(|r| ScoreRecord::from(&r)))
                .collect::<Result<_>>()?;
            write_file(&out, |w| {
                for r in &records {
                    serde_json::to_writer(&mut *w, r).map_err(|e| Error::io(&out, e.into()))?;
                    w.write_all(b"\n").map_err(|e| Error::io(&out, e))?;
                }
                Ok(())
            })?;
            writeln!(stdout, "scored {} utterances", records.len()).map_err(console)?;
        }
        Command::Evaluate {
            scores,
            labels,
            out,
            roc,
        } => {
            let records = read_score_records(&scores)?;
            let label_of: HashMap<String, Label> = read_manifest(&labels)?
                .into_iter()
                .map(|u| (u.utterance_id, u.label))
                .collect();
            let trials: Vec<(f64, Label)> = records
                .iter()
                .map(|r| match label_of.get(&r.id) {
                    Some(&l) => Ok((r.s_final, l)),
                    None => Err(Error::InvalidInput(format!(
                        "no label for utterance '{}'",
                        r.id
                    ))),
                })
                .collect::<Result<_>>()?;
            let result = evaluate(&trials)?;
            write_file(&out, |w| {
                serde_json::to_writer_pretty(&mut *w, &result)
                    .map_err(|e| Error::io(&out, e.into()))
            })?;
            let roc = roc.unwrap_or_else(|| out.with_extension("roc.csv"));
            write_file(&roc, |w| metrics::write_roc_csv(&result, w))?;
            writeln!(
                stdout,
                "AUC {:.2} EER {:.2}",
                result.auc_percent, result.eer_percent
            )
            .map_err(console)?;
        }
        Command::Explain {
            profile,
            manifest,
            out,
            format,
            id,
        } => {
            let profile = load_profile(&profile)?;
            let mut utterances = read_manifest(&manifest)?;
            if let Some(id) = &id {
                utterances.retain(|u| &u.utterance_id == id);
                if utterances.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "no utterance '{id}' in manifest"
                    )));
                }
            }
            check_profile_dims(&profile, &utterances)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for u in &utterances {
                let report = scoring::score_utterance(&profile, u)?;
                let records = scoring::explain(&report, u)?;
                let ext = match format {
                    Format::Json => "json",
                    Format::Csv => "csv",
                };
                let path = out.join(format!("{}.{ext}", sanitize_file_stem(&u.utterance_id)));
                write_file(&path, |w| match format {
                    Format::Json => scoring::write_anomaly_json(&records, w),
                    Format::Csv => scoring::write_anomaly_csv(&records, w),
                })?;
            }
            writeln!(stdout, "explained {} utterances", utterances.len()).map_err(console)?;
        }
        Command::Synth {
            spec,
            out,
            seed,
            n_enroll,
            n_genuine,
            n_spoof,
        } => {
            let mut spec = match spec {
                Some(p) => SynthSpec::from_json_file(p)?,
                None => SynthSpec::default(),
            };
            if let Some(seed) = seed {
                spec.rng_seed = seed;
            }
            let (enroll, test) = generate(&spec, n_enroll, n_genuine, n_spoof)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write_manifest(&enroll, out.join("enroll.jsonl"))?;
            write_manifest(&test, out.join("test.jsonl"))?;
            writeln!(
                stdout,
                "wrote {} enrollment and {} test utterances to {}",
                enroll.len(),
                test.len(),
                out.display()
            )
            .map_err(console)?;
        }
        Command::Distinctiveness { manifest, out } => {
            let utterances = read_manifest(&manifest)?;
            let matrix = metrics::phoneme_distinctiveness(&metrics::group_by_speaker(&utterances))?;
            write_file(&out, |w| metrics::write_distinctiveness_csv(&matrix, w))?;
            writeln!(
                stdout,
                "{} speakers x {} phonemes",
                matrix.speakers.len(),
                matrix.phonemes.len()
            )
            .map_err(console)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fraction_parser_bounds() {
        assert!(parse_fraction("0.01").is_ok());
        assert!(parse_fraction("1").is_ok());
        assert!(parse_fraction("0").is_err());
        assert!(parse_fraction("1.5").is_err());
        assert!(parse_fraction("abc").is_err());
    }

    #[test]
    fn subsample_is_seeded_and_ordered() {
        let spec = SynthSpec::standard(3, 2, 0, 0.0, 0);
        let (enroll, _) = generate(&spec, 100, 0, 0).unwrap();
        let a = subsample(enroll.clone(), 0.1, 42);
        let b = subsample(enroll.clone(), 0.1, 42);
        assert_eq!(a.len(), 10);
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].utterance_id < w[1].utterance_id));
        assert_eq!(subsample(enroll.clone(), 0.001, 1).len(), 1);
        assert_ne!(subsample(enroll, 0.1, 43), a);
    }

    #[test]
    fn file_stems_are_sanitized() {
        assert_eq!(sanitize_file_stem("a/b c:d"), "a_b_c_d");
        assert_eq!(sanitize_file_stem("spoof-00001"), "spoof-00001");
    }
}
