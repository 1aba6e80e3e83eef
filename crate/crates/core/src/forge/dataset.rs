use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::generate::{segment_rng, Stream};
use super::{gen_clean_eeg, gen_emg, gen_eog, mix_at_snr, read_segments, write_segments, ForgeError, MixRecord, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Eog,
    Emg,
    Both,
}

impl fmt::Display for ArtifactKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Eog => "eog",
            Self::Emg => "emg",
            Self::Both => "both",
        })
    }
}

impl FromStr for ArtifactKind {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eog" => Ok(Self::Eog),
            "emg" => Ok(Self::Emg),
            "both" => Ok(Self::Both),
            _ => Err(ForgeError::Degenerate(format!("unknown artifact kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetParams {
    pub count: usize,
    pub segment_len: usize,
    pub fs: f64,
    pub artifact: ArtifactKind,
    /// Inclusive integer SNR range in dB.
    pub snr_range_db: [i32; 2],
    pub seed: u64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            count: 100,
            segment_len: 512,
            fs: 256.0,
            artifact: ArtifactKind::Eog,
            snr_range_db: [-7, 2],
            seed: 0,
        }
    }
}

impl DatasetParams {
    pub fn validate(&self) -> Result<(), ForgeError> {
        if self.count < 10 {
            return Err(ForgeError::Degenerate(format!(
                "count {} leaves an empty split; need at least 10",
                self.count
            )));
        }
        let [lo, hi] = self.snr_range_db;
        if lo > hi {
            return Err(ForgeError::Degenerate(format!("SNR range [{lo}, {hi}] is empty")));
        }
        Ok(())
    }

    /// Source-index ranges of the train, val, and test splits.
    pub fn partition(&self) -> [Range<usize>; 3] {
        let train = self.count * 8 / 10;
        let val = self.count / 10;
        [0..train, train..train + val, train + val..self.count]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<MixRecord>,
    pub val: Vec<MixRecord>,
    pub test: Vec<MixRecord>,
    /// Clean-source indices of each split, in the order train, val, test.
    pub sources: [Range<usize>; 3],
}

impl DatasetSplit {
    pub fn named(&self) -> [(&'static str, &[MixRecord]); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }
}

fn artifact_sum(a: &Segment, b: &Segment) -> Segment {
    let samples = a.samples.iter().zip(&b.samples).map(|(x, y)| x + y).collect();
    Segment::new(samples, a.fs).expect("sum of finite segments")
}

/// Builds a semi-simulated dataset. Segment `i` pairs clean source `i` with
/// artifact `i` at an integer SNR drawn uniformly from the range.
pub fn make_dataset(params: &DatasetParams) -> Result<DatasetSplit, ForgeError> {
    params.validate()?;
    let DatasetParams {
        count,
        segment_len: t,
        fs,
        seed,
        ..
    } = *params;
    let clean = gen_clean_eeg(count, t, fs, seed)?;
    let artifacts = match params.artifact {
        ArtifactKind::Eog => gen_eog(count, t, fs, seed)?,
        ArtifactKind::Emg => gen_emg(count, t, fs, seed)?,
        ArtifactKind::Both => gen_eog(count, t, fs, seed)?
            .iter()
            .zip(&gen_emg(count, t, fs, seed)?)
            .map(|(a, b)| artifact_sum(a, b))
            .collect(),
    };
    let [lo, hi] = params.snr_range_db;
    let mut records = clean
        .iter()
        .zip(&artifacts)
        .enumerate()
        .map(|(i, (c, a))| {
            let level = segment_rng(seed, i, Stream::Levels).gen_range(lo..=hi);
            mix_at_snr(c, a, level as f64)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sources = params.partition();
    let test = records.split_off(sources[2].start);
    let val = records.split_off(sources[1].start);
    Ok(DatasetSplit {
        train: records,
        val,
        test,
        sources,
    })
}

/// Per-record mixing parameters, which the segment files do not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMeta {
    pub snr_db: Vec<f64>,
    pub lambda: Vec<f64>,
}

fn split_path(dir: &Path, split: &str, part: &str) -> std::path::PathBuf {
    dir.join(format!("{split}_{part}.eegs"))
}

/// Writes `{split}_clean.eegs`, `{split}_artifact.eegs`,
/// `{split}_contaminated.eegs`, and `{split}_mix.json` under `dir`.
pub fn save_split(dir: impl AsRef<Path>, split: &str, records: &[MixRecord]) -> Result<(), ForgeError> {
    let dir = dir.as_ref();
    let take = |f: fn(&MixRecord) -> &Segment| records.iter().map(|r| f(r).clone()).collect::<Vec<_>>();
    write_segments(split_path(dir, split, "clean"), &take(|r| &r.clean))?;
    write_segments(split_path(dir, split, "artifact"), &take(|r| &r.artifact))?;
    write_segments(split_path(dir, split, "contaminated"), &take(|r| &r.contaminated))?;
    let meta = SplitMeta {
        snr_db: records.iter().map(|r| r.snr_db).collect(),
        lambda: records.iter().map(|r| r.lambda).collect(),
    };
    fs::write(dir.join(format!("{split}_mix.json")), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn load_split(dir: impl AsRef<Path>, split: &str) -> Result<Vec<MixRecord>, ForgeError> {
    let dir = dir.as_ref();
    let clean = read_segments(split_path(dir, split, "clean"))?;
    let artifact = read_segments(split_path(dir, split, "artifact"))?;
    let contaminated = read_segments(split_path(dir, split, "contaminated"))?;
    let meta: SplitMeta = serde_json::from_slice(&fs::read(dir.join(format!("{split}_mix.json")))?)?;
    let n = clean.len();
    if [artifact.len(), contaminated.len(), meta.snr_db.len(), meta.lambda.len()]
        .iter()
        .any(|&m| m != n)
    {
        return Err(ForgeError::Mismatch(format!("split {split:?} files are not index-aligned")));
    }
    Ok(clean
        .into_iter()
        .zip(artifact)
        .zip(contaminated)
        .zip(meta.snr_db.into_iter().zip(meta.lambda))
        .map(|(((clean, artifact), contaminated), (snr_db, lambda))| MixRecord {
            clean,
            artifact,
            lambda,
            snr_db,
            contaminated,
        })
        .collect())
}
