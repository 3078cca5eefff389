//! Thresholded multi-label evaluation: per-label accuracy and macro
//! precision / recall / F1 over the six species.

use std::collections::HashMap;
use std::io::Read;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::species::{SpeciesId, NUM_SPECIES};

pub const DEFAULT_TAUS: [f64; 3] = [0.3, 0.5, 0.7];

/// Scores in [0, 1], one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    pub sample_ids: Vec<String>,
    pub scores: Array2<f64>,
}

impl PredictionMatrix {
    pub fn new(sample_ids: Vec<String>, scores: Array2<f64>) -> Result<Self> {
        if scores.ncols() != NUM_SPECIES || scores.nrows() != sample_ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} ids vs scores {:?}",
                sample_ids.len(),
                scores.dim()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::InvalidPredictions(format!("score {bad} outside [0, 1]")));
        }
        Ok(Self { sample_ids, scores })
    }

    /// CSV header row expected by [`PredictionMatrix::read_csv`].
    pub fn csv_header() -> Vec<&'static str> {
        std::iter::once("sample_id")
            .chain(SpeciesId::ALL.iter().map(|s| s.score_column()))
            .collect()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header != Self::csv_header() {
            return Err(Error::InvalidPredictions(format!(
                "header {:?}, expected {:?}",
                header,
                Self::csv_header()
            )));
        }
        let mut ids = Vec::new();
        let mut flat = Vec::new();
        for row in rdr.records() {
            let row = row?;
            ids.push(row[0].to_owned());
            for j in 1..=NUM_SPECIES {
                let v: f64 = row[j].parse().map_err(|_| {
                    Error::InvalidPredictions(format!("row {}: bad score {:?}", ids.len(), &row[j]))
                })?;
                flat.push(v);
            }
        }
        let scores =
            Array2::from_shape_vec((ids.len(), NUM_SPECIES), flat).expect("row width checked by csv reader");
        Self::new(ids, scores)
    }

    /// Reorder rows to follow `ids`. Every id must be present.
    pub fn aligned_to(&self, ids: &[String]) -> Result<Array2<f64>> {
        let pos: HashMap<&str, usize> = self
            .sample_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        if pos.len() != self.sample_ids.len() {
            return Err(Error::InvalidPredictions("duplicate sample_id rows".into()));
        }
        let mut out = Array2::zeros((ids.len(), NUM_SPECIES));
        for (r, id) in ids.iter().enumerate() {
            let &src = pos
                .get(id.as_str())
                .ok_or_else(|| Error::InvalidPredictions(format!("no prediction for {id}")))?;
            out.row_mut(r).assign(&self.scores.row(src));
        }
        Ok(out)
    }
}

pub fn validate_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(tau))
    }
}

/// `1` where `score > tau` (strict).
pub fn binarize(scores: ArrayView2<f64>, tau: f64) -> Array2<u8> {
    scores.mapv(|s| u8::from(s > tau))
}

fn check_shapes(y: &ArrayView2<u8>, y_hat: &ArrayView2<u8>) -> Result<()> {
    if y.dim() != y_hat.dim() {
        return Err(Error::ShapeMismatch(format!(
            "labels {:?} vs predictions {:?}",
            y.dim(),
            y_hat.dim()
        )));
    }
    if y.nrows() == 0 {
        return Err(Error::ShapeMismatch("no samples".into()));
    }
    Ok(())
}

/// Mean over samples of the fraction of labels predicted correctly.
pub fn multilabel_accuracy(y: ArrayView2<u8>, y_hat: ArrayView2<u8>) -> Result<f64> {
    check_shapes(&y, &y_hat)?;
    let classes = y.ncols() as f64;
    let per_sample: f64 = y
        .rows()
        .into_iter()
        .zip(y_hat.rows())
        .map(|(t, p)| t.iter().zip(p).filter(|(a, b)| a == b).count() as f64 / classes)
        .sum();
    Ok(per_sample / y.nrows() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

/// Per-class scores. A metric whose denominator is zero is reported as 0 with
/// its `*_defined` flag cleared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub species: SpeciesId,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_defined: bool,
    pub recall_defined: bool,
    pub f1_defined: bool,
    pub support: u64,
    pub confusion: Confusion,
}

impl ClassMetrics {
    pub fn from_confusion(species: SpeciesId, c: Confusion) -> Self {
        let ratio = |num: u64, den: u64| {
            if den == 0 {
                (0.0, false)
            } else {
                (num as f64 / den as f64, true)
            }
        };
        let (precision, precision_defined) = ratio(c.tp, c.tp + c.fp);
        let (recall, recall_defined) = ratio(c.tp, c.tp + c.fn_);
        // Equal to 2PR/(P+R) whenever that is defined.
        let (f1, f1_defined) = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
        Self {
            species,
            precision,
            recall,
            f1,
            precision_defined,
            recall_defined,
            f1_defined,
            support: c.tp + c.fn_,
            confusion: c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroPrf {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

pub fn confusion(y: ArrayView2<u8>, y_hat: ArrayView2<u8>, class: usize) -> Confusion {
    let mut c = Confusion::default();
    for (&t, &p) in y.column(class).iter().zip(y_hat.column(class)) {
        match (t != 0, p != 0) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

pub fn macro_prf(y: ArrayView2<u8>, y_hat: ArrayView2<u8>) -> Result<MacroPrf> {
    check_shapes(&y, &y_hat)?;
    if y.ncols() != NUM_SPECIES {
        return Err(Error::ShapeMismatch(format!(
            "expected {NUM_SPECIES} columns, got {}",
            y.ncols()
        )));
    }
    let per_class: Vec<ClassMetrics> = SpeciesId::ALL
        .iter()
        .map(|&s| ClassMetrics::from_confusion(s, confusion(y, y_hat, s.index())))
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / NUM_SPECIES as f64;
    Ok(MacroPrf {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tau: f64,
    pub n_samples: usize,
    pub multilabel_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

pub fn evaluate(scores: ArrayView2<f64>, y: ArrayView2<u8>, tau: f64) -> Result<EvalReport> {
    validate_tau(tau)?;
    let y_hat = binarize(scores, tau);
    let accuracy = multilabel_accuracy(y, y_hat.view())?;
    let prf = macro_prf(y, y_hat.view())?;
    Ok(EvalReport {
        tau,
        n_samples: y.nrows(),
        multilabel_accuracy: accuracy,
        macro_precision: prf.macro_precision,
        macro_recall: prf.macro_recall,
        macro_f1: prf.macro_f1,
        per_class: prf.per_class,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub taus: Vec<f64>,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            taus: DEFAULT_TAUS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub reports: Vec<EvalReport>,
    /// Macro and per-class recall never increase as the threshold rises.
    pub recall_monotone: bool,
}

pub fn threshold_sweep(
    scores: ArrayView2<f64>,
    y: ArrayView2<u8>,
    cfg: &ThresholdConfig,
) -> Result<SweepReport> {
    if scores.dim() != y.dim() {
        return Err(Error::ShapeMismatch(format!(
            "scores {:?} vs labels {:?}",
            scores.dim(),
            y.dim()
        )));
    }
    let reports: Vec<EvalReport> = cfg
        .taus
        .iter()
        .map(|&t| evaluate(scores, y, t))
        .collect::<Result<_>>()?;

    let mut by_tau: Vec<&EvalReport> = reports.iter().collect();
    by_tau.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    let recall_monotone = by_tau.windows(2).all(|w| {
        w[1].macro_recall <= w[0].macro_recall
            && w[0]
                .per_class
                .iter()
                .zip(&w[1].per_class)
                .all(|(lo, hi)| hi.confusion.tp <= lo.confusion.tp)
    });
    if !recall_monotone {
        log::warn!("recall increased with threshold; check score inputs");
    }
    Ok(SweepReport {
        reports,
        recall_monotone,
    })
}
