//! Evaluation metrics: SI-SDR, log-spectral distance, mel L2 and DOA
//! accuracy on the circular 5° grid.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::FeatTensor;

pub const SI_SDR_CAP_DB: f64 = 100.0;

/// Scale-invariant signal-to-distortion ratio in dB, capped at ±100.
pub fn si_sdr(est: &[f64], reference: &[f64]) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::Shape(format!(
            "si_sdr: estimate has {} samples, reference {}",
            est.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if ref_energy == 0.0 {
        return Err(Error::Empty("si_sdr reference is all zeros".into()));
    }
    let alpha = est.iter().zip(reference).map(|(e, r)| e * r).sum::<f64>() / ref_energy;
    let target: f64 = alpha * alpha * ref_energy;
    let noise: f64 = est
        .iter()
        .zip(reference)
        .map(|(e, r)| (e - alpha * r).powi(2))
        .sum();
    let db = if target == 0.0 {
        -SI_SDR_CAP_DB
    } else if noise == 0.0 {
        SI_SDR_CAP_DB
    } else {
        10.0 * (target / noise).log10()
    };
    Ok(db.clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

fn check_same_shape(a: &FeatTensor, b: &FeatTensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    if a.frames == 0 || a.channels == 0 || a.dims == 0 {
        return Err(Error::Empty(format!("{what}: empty tensor")));
    }
    Ok(())
}

/// Log-spectral distance between two log-magnitude tensors: the mean over
/// (channel, frame) rows of the RMS difference across dims.
pub fn lsd(est: &FeatTensor, reference: &FeatTensor) -> Result<f64> {
    check_same_shape(est, reference, "lsd")?;
    let rows = est.channels * est.frames;
    let total: f64 = est
        .data
        .chunks(est.dims)
        .zip(reference.data.chunks(reference.dims))
        .map(|(a, b)| {
            let ms = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
            ms.sqrt()
        })
        .sum();
    Ok(total / rows as f64)
}

/// Frame-summed squared error between two (log-)mel tensors.
pub fn mel_l2(est: &FeatTensor, reference: &FeatTensor) -> Result<f64> {
    check_same_shape(est, reference, "mel_l2")?;
    Ok(est
        .data
        .iter()
        .zip(&reference.data)
        .map(|(x, y)| (x - y).powi(2))
        .sum())
}

/// Absolute angular difference on the circle, in degrees within [0, 180].
pub fn circular_error(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoaReport {
    pub count: usize,
    #[serde(rename = "acc@1")]
    pub acc_at_1: f64,
    pub top1_err: f64,
    pub top5_err: f64,
    #[serde(rename = "mae@1")]
    pub mae_at_1: f64,
    pub top5_mae: f64,
}

/// Top-1 and best-of-`k` accuracy and circular MAE. Each prediction is a
/// ranked candidate list; rates are fractions in [0, 1].
pub fn doa_report(predictions: &[Vec<f64>], truths: &[f64], k: usize) -> Result<DoaReport> {
    if predictions.is_empty() {
        return Err(Error::Empty("doa_report: no predictions".into()));
    }
    if predictions.len() != truths.len() {
        return Err(Error::Shape(format!(
            "doa_report: {} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("doa_report: k must be at least 1".into()));
    }
    let (mut hit1, mut hitk, mut mae1, mut maek) = (0usize, 0usize, 0.0, 0.0);
    for (i, (cands, &truth)) in predictions.iter().zip(truths).enumerate() {
        let Some(&first) = cands.first() else {
            return Err(Error::Empty(format!("doa_report: prediction {i} has no candidates")));
        };
        let e1 = circular_error(first, truth);
        let ek = cands
            .iter()
            .take(k)
            .map(|&c| circular_error(c, truth))
            .fold(f64::INFINITY, f64::min);
        hit1 += usize::from(e1 < 1e-9);
        hitk += usize::from(ek < 1e-9);
        mae1 += e1;
        maek += ek;
    }
    let n = predictions.len() as f64;
    Ok(DoaReport {
        count: predictions.len(),
        acc_at_1: hit1 as f64 / n,
        top1_err: 1.0 - hit1 as f64 / n,
        top5_err: 1.0 - hitk as f64 / n,
        mae_at_1: mae1 / n,
        top5_mae: maek / n,
    })
}

/// Per-utterance scores of one system, used for the grouped summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UttScore {
    pub utt_id: String,
    pub system: String,
    pub t60: f64,
    pub si_sdr: Option<f64>,
    pub lsd: Option<f64>,
    pub mel_l2: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> String {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        String::new()
    } else {
        format!("{:.4}", v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// CSV table of mean scores per (system, T60), systems and T60s in sorted
/// order. Missing scores are left blank.
pub fn t60_summary_csv(scores: &[UttScore]) -> String {
    let mut groups: BTreeMap<(String, u64), Vec<&UttScore>> = BTreeMap::new();
    for s in scores {
        let key = (s.system.clone(), (s.t60 * 1000.0).round() as u64);
        groups.entry(key).or_default().push(s);
    }
    let mut out = String::from("system,t60,count,si_sdr,lsd,mel_l2\n");
    for ((system, t60_ms), rows) in &groups {
        let _ = writeln!(
            out,
            "{system},{:.1},{},{},{},{}",
            *t60_ms as f64 / 1000.0,
            rows.len(),
            mean_of(rows.iter().map(|r| r.si_sdr)),
            mean_of(rows.iter().map(|r| r.lsd)),
            mean_of(rows.iter().map(|r| r.mel_l2)),
        );
    }
    out
}
