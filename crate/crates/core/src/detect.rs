//! Boundary detection by walking a stepper from an entrance.
//!
//! [`bd_search`] walks pairs `p = [p2, next(p2)]` from the entrance and stops
//! at the first pair whose output distance is a k-sigma outlier against all
//! distances collected before it. [`scan`] walks a fixed number of pairs
//! without stopping and records every sample.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::distance::{DistanceError, DistanceFunction};
use crate::sut::{Entrance, InputPoint, Stepper, Sut, SutError, SutOutput};

pub const DEFAULT_MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error(transparent)]
    Sut(#[from] SutError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error("invalid outlier rule: {0}")]
    InvalidRule(String),
    #[error("invalid search parameters: {0}")]
    InvalidParams(String),
}

/// `value > mean + k * stddev`, or `value > mean + epsilon` when the spread is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutlierRule {
    pub k: f64,
    pub warmup: usize,
    pub epsilon: f64,
}

impl Default for OutlierRule {
    fn default() -> Self {
        OutlierRule {
            k: 3.0,
            warmup: 30,
            epsilon: 1e-9,
        }
    }
}

impl OutlierRule {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(DetectError::InvalidRule(format!(
                "k must be positive, got {}",
                self.k
            )));
        }
        if self.warmup < 2 {
            return Err(DetectError::InvalidRule(format!(
                "warmup must be >= 2, got {}",
                self.warmup
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(DetectError::InvalidRule(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

pub fn is_outlier(value: f64, mean: f64, stddev: f64, rule: &OutlierRule) -> bool {
    debug_assert!(stddev >= 0.0);
    if stddev > 0.0 {
        value > mean + rule.k * stddev
    } else {
        value > mean + rule.epsilon
    }
}

/// Welford accumulator for mean and population standard deviation.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunningStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn stddev(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.m2 / self.n as f64).max(0.0).sqrt()
        }
    }
}

/// Per-run memo of SUT outputs and output distances.
///
/// Inputs are keyed by coordinates only since one run never mixes dims.
struct Evaluator<'a> {
    sut: &'a dyn Sut,
    d_out: DistanceFunction,
    outputs: HashMap<Vec<i64>, SutOutput>,
    distances: HashMap<SutOutput, HashMap<SutOutput, f64>>,
}

impl<'a> Evaluator<'a> {
    fn new(sut: &'a dyn Sut, d_out: DistanceFunction) -> Self {
        Evaluator {
            sut,
            d_out,
            outputs: HashMap::new(),
            distances: HashMap::new(),
        }
    }

    fn output(&mut self, x: &InputPoint) -> Result<SutOutput, SutError> {
        if let Some(o) = self.outputs.get(x.coords()) {
            return Ok(o.clone());
        }
        let o = self.sut.eval(x)?;
        self.outputs.insert(x.coords().to_vec(), o.clone());
        Ok(o)
    }

    fn distance(&mut self, o1: &SutOutput, o2: &SutOutput) -> Result<f64, DistanceError> {
        if let Some(&d) = self.distances.get(o1).and_then(|m| m.get(o2)) {
            return Ok(d);
        }
        let d = self.d_out.between_outputs(o1, o2)?;
        self.distances
            .entry(o1.clone())
            .or_default()
            .insert(o2.clone(), d);
        Ok(d)
    }

    fn evaluations(&self) -> usize {
        self.outputs.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryCandidate {
    pub pair: (InputPoint, InputPoint),
    pub outputs: (SutOutput, SutOutput),
    pub distance: f64,
    pub steps_taken: usize,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum BdOutcome {
    Candidate(BoundaryCandidate),
    Exhausted {
        steps_taken: usize,
        mean: f64,
        stddev: f64,
    },
    RangeEnd {
        steps_taken: usize,
        last: InputPoint,
        reason: String,
        mean: f64,
        stddev: f64,
    },
}

impl BdOutcome {
    pub fn candidate(&self) -> Option<&BoundaryCandidate> {
        match self {
            BdOutcome::Candidate(c) => Some(c),
            _ => None,
        }
    }

    pub fn steps_taken(&self) -> usize {
        match self {
            BdOutcome::Candidate(c) => c.steps_taken,
            BdOutcome::Exhausted { steps_taken, .. } | BdOutcome::RangeEnd { steps_taken, .. } => {
                *steps_taken
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BdReport {
    #[serde(flatten)]
    pub outcome: BdOutcome,
    /// Distinct inputs handed to the SUT.
    pub sut_evaluations: usize,
}

fn check_entrance(stepper: &Stepper, entrance: &Entrance) -> Result<(), DetectError> {
    if entrance.direction != stepper.direction {
        return Err(DetectError::InvalidParams(format!(
            "entrance {:?} runs {:?} but the stepper runs {:?}",
            entrance.name, entrance.direction, stepper.direction
        )));
    }
    entrance.check(&stepper.kind)?;
    Ok(())
}

/// Walks pairs from `entrance` until an outlier, `max_steps` pairs, or the
/// end of the stepper's range. Step `n` is the n-th pair; the entrance is step 1.
pub fn bd_search(
    sut: &dyn Sut,
    stepper: &Stepper,
    d_out: DistanceFunction,
    entrance: &Entrance,
    rule: &OutlierRule,
    max_steps: usize,
) -> Result<BdReport, DetectError> {
    rule.validate()?;
    if max_steps < rule.warmup {
        return Err(DetectError::InvalidParams(format!(
            "max_steps {max_steps} is below warmup {}",
            rule.warmup
        )));
    }
    check_entrance(stepper, entrance)?;

    let mut eval = Evaluator::new(sut, d_out);
    let mut stats = RunningStats::default();
    let (mut p1, mut p2) = (entrance.e1.clone(), entrance.e2.clone());
    let mut step = 0;
    let outcome = loop {
        step += 1;
        let o1 = eval.output(&p1)?;
        let o2 = eval.output(&p2)?;
        let d = eval.distance(&o1, &o2)?;
        if stats.count() >= rule.warmup && is_outlier(d, stats.mean(), stats.stddev(), rule) {
            break BdOutcome::Candidate(BoundaryCandidate {
                pair: (p1, p2),
                outputs: (o1, o2),
                distance: d,
                steps_taken: step,
                mean: stats.mean(),
                stddev: stats.stddev(),
            });
        }
        stats.push(d);
        if step >= max_steps {
            break BdOutcome::Exhausted {
                steps_taken: step,
                mean: stats.mean(),
                stddev: stats.stddev(),
            };
        }
        match stepper.apply(&p2) {
            Ok(next) => {
                p1 = std::mem::replace(&mut p2, next);
            }
            Err(e) => {
                break BdOutcome::RangeEnd {
                    steps_taken: step,
                    last: p2,
                    reason: e.to_string(),
                    mean: stats.mean(),
                    stddev: stats.stddev(),
                };
            }
        }
    };
    Ok(BdReport {
        outcome,
        sut_evaluations: eval.evaluations(),
    })
}

/// Input distance used for the derivative in a scan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "metric")]
pub enum InputDistance {
    /// One stepper application is distance 1.
    #[default]
    Steps,
    Metric(DistanceFunction),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanSample {
    pub step: usize,
    pub pair: (InputPoint, InputPoint),
    pub outputs: (SutOutput, SutOutput),
    pub d_out: f64,
    pub derivative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanTrace {
    pub sut: String,
    pub stepper: String,
    pub d_out: DistanceFunction,
    pub d_in: InputDistance,
    pub samples: Vec<ScanSample>,
    /// Set when the stepper left its range before `n_steps` samples.
    pub truncated: Option<String>,
}

impl ScanTrace {
    /// 1-based step of the largest `d_out`, first one on ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<&ScanSample> = None;
        for s in &self.samples {
            if best.is_none_or(|b| s.d_out > b.d_out) {
                best = Some(s);
            }
        }
        best.map(|s| s.step)
    }

    /// CSV with hashed output texts; a `#`-prefixed `header` line comes first when given.
    pub fn write_csv<W: std::io::Write>(
        &self,
        mut w: W,
        header: Option<&str>,
    ) -> std::io::Result<()> {
        if let Some(h) = header {
            writeln!(w, "# {h}")?;
        }
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "step",
            "x1",
            "x2",
            "o1_status",
            "o1_text_hash",
            "o2_status",
            "o2_text_hash",
            "d_out",
            "derivative",
        ])?;
        for s in &self.samples {
            csv.write_record([
                s.step.to_string(),
                coords_field(&s.pair.0),
                coords_field(&s.pair.1),
                s.outputs.0.status.as_str().to_string(),
                text_hash(&s.outputs.0.text),
                s.outputs.1.status.as_str().to_string(),
                text_hash(&s.outputs.1.text),
                s.d_out.to_string(),
                s.derivative.to_string(),
            ])?;
        }
        csv.flush()
    }
}

fn coords_field(x: &InputPoint) -> String {
    x.coords()
        .iter()
        .map(i64::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn text_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn scan(
    sut: &dyn Sut,
    stepper: &Stepper,
    d_out: DistanceFunction,
    d_in: InputDistance,
    entrance: &Entrance,
    n_steps: usize,
) -> Result<ScanTrace, DetectError> {
    if n_steps == 0 {
        return Err(DetectError::InvalidParams("n_steps must be >= 1".into()));
    }
    check_entrance(stepper, entrance)?;

    let mut eval = Evaluator::new(sut, d_out);
    let mut samples = Vec::with_capacity(n_steps.min(1 << 20));
    let mut truncated = None;
    let (mut p1, mut p2) = (entrance.e1.clone(), entrance.e2.clone());
    for step in 1..=n_steps {
        let o1 = eval.output(&p1)?;
        let o2 = eval.output(&p2)?;
        let d = eval.distance(&o1, &o2)?;
        let din = match d_in {
            InputDistance::Steps => 1.0,
            InputDistance::Metric(m) => m.between_inputs(&p1, &p2)?,
        };
        if din <= 0.0 {
            return Err(DistanceError::ZeroInputDistance.into());
        }
        let next = if step < n_steps {
            match stepper.apply(&p2) {
                Ok(n) => Some(n),
                Err(e) => {
                    truncated = Some(e.to_string());
                    None
                }
            }
        } else {
            None
        };
        samples.push(ScanSample {
            step,
            pair: (p1.clone(), p2.clone()),
            outputs: (o1, o2),
            d_out: d,
            derivative: d / din,
        });
        match next {
            Some(n) => {
                p1 = std::mem::replace(&mut p2, n);
            }
            None => break,
        }
    }
    Ok(ScanTrace {
        sut: sut.id().to_string(),
        stepper: stepper.id(),
        d_out,
        d_in,
        samples,
        truncated,
    })
}
