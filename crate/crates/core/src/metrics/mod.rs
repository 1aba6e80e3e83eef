//! Denoising and classification metrics plus the spectral machinery they use.

mod confusion;
mod denoise;
mod spectrum;

pub use confusion::{confusion_metrics, multiclass_metrics, ConfusionCounts, ConfusionMetrics, MulticlassReport};
pub use denoise::{cc, mean_snr_db, rrmse_s, rrmse_s_against, rrmse_t, rrmse_t_against, snr_db};
pub use spectrum::{fft, fft_in_place, psd_welch, psd_with, rfft_padded, Psd, PsdParams};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("length {len} is not a power of two")]
    NotPowerOfTwo { len: usize },
    #[error("PSD segment length {seg_len} exceeds signal length {len}")]
    SegmentTooLong { seg_len: usize, len: usize },
    #[error("overlap fraction {overlap} outside [0, 1)")]
    InvalidOverlap { overlap: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("reference has zero power")]
    ZeroPower,
    #[error("signal has zero variance")]
    ZeroVariance,
    #[error("confusion counts are all zero")]
    EmptyCounts,
}

/// Scores of one denoised segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentScores {
    pub rrmse_t: f64,
    pub rrmse_s: f64,
    pub cc: f64,
    pub snr_before_db: f64,
    pub snr_after_db: f64,
}

impl SegmentScores {
    /// Scores `denoised` against `clean`, with `contaminated` as the
    /// before-denoising estimate.
    pub fn compute(
        clean: &[f64],
        contaminated: &[f64],
        denoised: &[f64],
        fs: f64,
        psd: &PsdParams,
    ) -> Result<Self, MetricError> {
        Ok(Self {
            rrmse_t: rrmse_t(clean, denoised)?,
            rrmse_s: rrmse_s(clean, denoised, fs, psd)?,
            cc: cc(clean, denoised)?,
            snr_before_db: snr_db(clean, contaminated)?,
            snr_after_db: snr_db(clean, denoised)?,
        })
    }
}

/// Segment-averaged metrics. Infinite SNR values serialize as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub segments: usize,
    pub rrmse_t: f64,
    pub rrmse_s: f64,
    pub cc: f64,
    pub snr_before_db: f64,
    pub snr_after_db: f64,
    pub delta_snr_db: f64,
}

impl MetricSummary {
    pub fn average(scores: &[SegmentScores]) -> Option<Self> {
        if scores.is_empty() {
            return None;
        }
        let n = scores.len() as f64;
        let mean = |f: fn(&SegmentScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
        let before = mean(|s| s.snr_before_db);
        let after = mean(|s| s.snr_after_db);
        let delta = if before == after { 0.0 } else { after - before };
        Some(Self {
            segments: scores.len(),
            rrmse_t: mean(|s| s.rrmse_t),
            rrmse_s: mean(|s| s.rrmse_s),
            cc: mean(|s| s.cc),
            snr_before_db: before,
            snr_after_db: after,
            delta_snr_db: delta,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrGroup {
    pub snr_db: i32,
    #[serde(flatten)]
    pub metrics: MetricSummary,
}

/// Overall metrics plus one group per input SNR level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(flatten)]
    pub overall: MetricSummary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_snr: Vec<SnrGroup>,
}

impl MetricReport {
    /// Averages `scores` overall and per level. `levels[i]` is the requested
    /// input SNR of segment `i`.
    pub fn from_scores(scores: &[SegmentScores], levels: &[i32]) -> Result<Self, MetricError> {
        if scores.len() != levels.len() {
            return Err(MetricError::LengthMismatch {
                left: scores.len(),
                right: levels.len(),
            });
        }
        let overall = MetricSummary::average(scores).ok_or(MetricError::Empty)?;
        let mut groups: BTreeMap<i32, Vec<SegmentScores>> = BTreeMap::new();
        for (s, &l) in scores.iter().zip(levels) {
            groups.entry(l).or_default().push(*s);
        }
        let per_snr = groups
            .into_iter()
            .map(|(snr_db, g)| SnrGroup {
                snr_db,
                metrics: MetricSummary::average(&g).expect("non-empty group"),
            })
            .collect();
        Ok(Self { overall, per_snr })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(delta: f64) -> SegmentScores {
        SegmentScores {
            rrmse_t: 0.5,
            rrmse_s: 0.4,
            cc: 0.9,
            snr_before_db: 1.0,
            snr_after_db: 1.0 + delta,
        }
    }

    #[test]
    fn groups_cover_exactly_present_levels() {
        let scores = [score(1.0), score(3.0), score(5.0)];
        let r = MetricReport::from_scores(&scores, &[-7, 2, -7]).unwrap();
        assert_eq!(r.per_snr.iter().map(|g| g.snr_db).collect::<Vec<_>>(), vec![-7, 2]);
        assert_eq!(r.per_snr[0].metrics.segments, 2);
        assert!((r.per_snr[0].metrics.delta_snr_db - 3.0).abs() < 1e-12);
        assert!((r.overall.delta_snr_db - 3.0).abs() < 1e-12);
    }

    #[test]
    fn json_is_snake_case_with_grouping() {
        let r = MetricReport::from_scores(&[score(2.0)], &[0]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert!(v.get("delta_snr_db").is_some());
        assert_eq!(v["per_snr"][0]["snr_db"], 0);
        assert!(v["per_snr"][0].get("rrmse_t").is_some());
    }
}
