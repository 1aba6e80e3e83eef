//! Semi-simulated data: synthetic sources, SNR-controlled mixing, and
//! segment files.

mod dataset;
mod generate;
mod io;

pub use dataset::{load_split, make_dataset, save_split, ArtifactKind, DatasetParams, DatasetSplit, SplitMeta};
pub use generate::{gen_clean_eeg, gen_emg, gen_eog, EMG_LOW_HZ, EOG_BAND};
pub use io::{decode_segments, encode_segments, read_segments, read_segments_csv, write_segments, SEGMENT_MAGIC};


#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("degenerate parameters: {0}")]
    Degenerate(String),
    #[error("segments differ: {0}")]
    Mismatch(String),
    #[error("artifact has zero power")]
    ZeroPowerArtifact,
    #[error("non-finite sample in segment")]
    NonFinite,
    #[error("bad magic {found:?}, expected \"EEGS\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported segment file version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated segment file: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after the last segment")]
    TrailingBytes(usize),
    #[error("segments in one file must share length and sample rate")]
    NonUniform,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("split metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A single-channel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub samples: Vec<f32>,
    pub fs: f32,
}

impl Segment {
    pub fn new(samples: Vec<f32>, fs: f32) -> Result<Self, ForgeError> {
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(ForgeError::Degenerate(format!("sample rate {fs}")));
        }
        if samples.is_empty() {
            return Err(ForgeError::Degenerate("empty segment".into()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(ForgeError::NonFinite);
        }
        Ok(Self { samples, fs })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&v| v as f64).collect()
    }

    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / self.len() as f64).sqrt()
    }
}

/// `contaminated = clean + λ·artifact`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixRecord {
    pub clean: Segment,
    pub artifact: Segment,
    pub lambda: f64,
    /// Requested input SNR in dB.
    pub snr_db: f64,
    pub contaminated: Segment,
}

impl MixRecord {
    /// `10·log10(RMS(clean)² / RMS(λ·artifact)²)` measured on the stored samples.
    pub fn measured_snr_db(&self) -> f64 {
        let noise = self.lambda.abs() * self.artifact.rms();
        20.0 * (self.clean.rms() / noise).log10()
    }

    /// Integer SNR group used for per-level reporting.
    pub fn snr_level(&self) -> i32 {
        self.snr_db.round() as i32
    }
}

/// Gain that places `artifact` at `snr_db` below `clean`:
/// `λ = RMS(clean) / (RMS(artifact)·10^(snr_db/20))`.
pub fn lambda_for_snr(clean: &Segment, artifact: &Segment, snr_db: f64) -> Result<f64, ForgeError> {
    let a = artifact.rms();
    if a == 0.0 {
        return Err(ForgeError::ZeroPowerArtifact);
    }
    Ok(clean.rms() / (a * 10f64.powf(snr_db / 20.0)))
}

fn check_pair(clean: &Segment, artifact: &Segment) -> Result<(), ForgeError> {
    if clean.len() != artifact.len() {
        return Err(ForgeError::Mismatch(format!("lengths {} and {}", clean.len(), artifact.len())));
    }
    if clean.fs != artifact.fs {
        return Err(ForgeError::Mismatch(format!("sample rates {} and {}", clean.fs, artifact.fs)));
    }
    Ok(())
}

/// Mixes with an explicit gain. The recorded SNR is the one implied by `λ`.
pub fn mix(clean: &Segment, artifact: &Segment, lambda: f64) -> Result<MixRecord, ForgeError> {
    check_pair(clean, artifact)?;
    let samples = clean
        .samples
        .iter()
        .zip(&artifact.samples)
        .map(|(&c, &a)| (c as f64 + lambda * a as f64) as f32)
        .collect();
    let contaminated = Segment::new(samples, clean.fs)?;
    let a = artifact.rms();
    let snr_db = if lambda == 0.0 || a == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (clean.rms() / (lambda.abs() * a)).log10()
    };
    Ok(MixRecord {
        clean: clean.clone(),
        artifact: artifact.clone(),
        lambda,
        snr_db,
        contaminated,
    })
}

/// Mixes at a requested SNR.
pub fn mix_at_snr(clean: &Segment, artifact: &Segment, snr_db: f64) -> Result<MixRecord, ForgeError> {
    check_pair(clean, artifact)?;
    let lambda = lambda_for_snr(clean, artifact, snr_db)?;
    let mut rec = mix(clean, artifact, lambda)?;
    rec.snr_db = snr_db;
    Ok(rec)
}
