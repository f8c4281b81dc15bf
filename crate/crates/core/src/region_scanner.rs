//! 2-D sweeps over a pair of feedback gains, classifying every grid cell by
//! its string/plant stability verdict.
//!
//! Cells are pure, independent evaluations, so the scan is the one workload
//! here that parallelizes; results are collected by cell index, which keeps
//! the chart bit-identical however many workers run. Per-cell analysis
//! failures degrade that cell to `Marginal` with a note instead of aborting
//! the sweep.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::car_following::LinearGains;
use crate::string_stability::{
    string_stability_verdict, OmegaGrid, StabilityVerdict, StringStabilityError, TriState,
};
use crate::system_builder::{FeedbackGains, LccTopology};

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("invalid scan spec: {0}")]
    InvalidSpec(String),
    #[error("charts cover different axes and cannot be diffed")]
    AxesMismatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainKind {
    Mu,
    K,
}

/// One scannable gain: which vehicle and which of its two gains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainRef {
    pub vehicle: i32,
    pub kind: GainKind,
}

/// Inclusive linear range with a fixed number of samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAxisRange")]
pub struct AxisRange {
    min: f64,
    max: f64,
    steps: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAxisRange {
    min: f64,
    max: f64,
    steps: usize,
}

impl TryFrom<RawAxisRange> for AxisRange {
    type Error = ScanError;

    fn try_from(raw: RawAxisRange) -> Result<Self, Self::Error> {
        AxisRange::new(raw.min, raw.max, raw.steps)
    }
}

impl AxisRange {
    pub fn new(min: f64, max: f64, steps: usize) -> Result<Self, ScanError> {
        if !(min.is_finite() && max.is_finite()) || min >= max {
            return Err(ScanError::InvalidSpec(format!(
                "axis range must be finite with min < max, got [{min}, {max}]"
            )));
        }
        if steps < 2 {
            return Err(ScanError::InvalidSpec(format!(
                "axis needs at least 2 steps, got {steps}"
            )));
        }
        Ok(AxisRange { min, max, steps })
    }

    /// Default chart axis: [-10, 10] at 201 samples, so the grid passes
    /// through integer gains including the origin.
    pub fn default_gain_axis() -> Self {
        AxisRange {
            min: -10.0,
            max: 10.0,
            steps: 201,
        }
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// i-th sample; endpoints are exact.
    pub fn value(&self, i: usize) -> f64 {
        if i == self.steps - 1 {
            return self.max;
        }
        self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64
    }
}

/// Everything a sweep needs: the two varying gains, the gain values held
/// fixed, and the system under study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub topology: LccTopology,
    pub gains: LinearGains,
    pub x_gain: GainRef,
    pub y_gain: GainRef,
    pub x_range: AxisRange,
    pub y_range: AxisRange,
    #[serde(default)]
    pub fixed_gains: FeedbackGains,
    #[serde(default)]
    pub omega_grid: OmegaGrid,
}

impl ScanSpec {
    fn validate(&self) -> Result<(), ScanError> {
        if !self.topology.has_head() {
            return Err(ScanError::InvalidSpec(
                "free-driving topologies have no head vehicle to scan against".into(),
            ));
        }
        if self.x_gain == self.y_gain {
            return Err(ScanError::InvalidSpec(format!(
                "x and y axes vary the same gain {:?}",
                self.x_gain
            )));
        }
        for (axis, gain) in [("x", self.x_gain), ("y", self.y_gain)] {
            if !self.topology.monitors(gain.vehicle) {
                return Err(ScanError::InvalidSpec(format!(
                    "{axis}-axis vehicle {} is not monitored by the topology",
                    gain.vehicle
                )));
            }
            let held = match gain.kind {
                GainKind::Mu => self.fixed_gains.mu(gain.vehicle),
                GainKind::K => self.fixed_gains.k(gain.vehicle),
            };
            if held != 0.0 {
                return Err(ScanError::InvalidSpec(format!(
                    "{axis}-axis gain is also fixed to {held}; drop it from fixed_gains"
                )));
            }
        }
        self.fixed_gains
            .validate_for(&self.topology)
            .map_err(|e| ScanError::InvalidSpec(e.to_string()))?;
        Ok(())
    }

    fn cell_gains(&self, ix: usize, iy: usize) -> FeedbackGains {
        let mut fb = self.fixed_gains.clone();
        let mut set = |gain: GainRef, value: f64| match gain.kind {
            GainKind::Mu => fb.set_mu(gain.vehicle, value),
            GainKind::K => fb.set_k(gain.vehicle, value),
        };
        set(self.x_gain, self.x_range.value(ix));
        set(self.y_gain, self.y_range.value(iy));
        fb
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    StringStable,
    StringUnstable,
    PlantUnstable,
    Marginal,
}

/// Per-class cell tallies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub string_stable: usize,
    pub string_unstable: usize,
    pub plant_unstable: usize,
    pub marginal: usize,
}

impl ClassCounts {
    pub fn of(&self, class: CellClass) -> usize {
        match class {
            CellClass::StringStable => self.string_stable,
            CellClass::StringUnstable => self.string_unstable,
            CellClass::PlantUnstable => self.plant_unstable,
            CellClass::Marginal => self.marginal,
        }
    }

    pub fn total(&self) -> usize {
        self.string_stable + self.string_unstable + self.plant_unstable + self.marginal
    }

    fn bump(&mut self, class: CellClass) {
        match class {
            CellClass::StringStable => self.string_stable += 1,
            CellClass::StringUnstable => self.string_unstable += 1,
            CellClass::PlantUnstable => self.plant_unstable += 1,
            CellClass::Marginal => self.marginal += 1,
        }
    }
}

/// A cell the scan could not classify, kept next to its grid position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellNote {
    pub ix: usize,
    pub iy: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityChart {
    pub spec: ScanSpec,
    /// Row-major by y: cell (ix, iy) lives at iy * x_steps + ix.
    classes: Vec<CellClass>,
    counts: ClassCounts,
    notes: Vec<CellNote>,
}

impl StabilityChart {
    pub fn class(&self, ix: usize, iy: usize) -> CellClass {
        self.classes[iy * self.spec.x_range.steps() + ix]
    }

    pub fn counts(&self) -> &ClassCounts {
        &self.counts
    }

    pub fn notes(&self) -> &[CellNote] {
        &self.notes
    }

    /// All cells with their gain values, x fastest.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64, f64, CellClass)> + '_ {
        let sx = self.spec.x_range.steps();
        self.classes.iter().enumerate().map(move |(idx, &class)| {
            let (ix, iy) = (idx % sx, idx / sx);
            (
                ix,
                iy,
                self.spec.x_range.value(ix),
                self.spec.y_range.value(iy),
                class,
            )
        })
    }

    fn same_axes(&self, other: &StabilityChart) -> bool {
        self.spec.topology == other.spec.topology
            && self.spec.x_gain == other.spec.x_gain
            && self.spec.y_gain == other.spec.y_gain
            && self.spec.x_range == other.spec.x_range
            && self.spec.y_range == other.spec.y_range
    }
}

fn classify(verdict: &StabilityVerdict) -> CellClass {
    // A diverging plant makes the frequency-domain answer moot.
    if verdict.plant_stable == TriState::Unstable {
        return CellClass::PlantUnstable;
    }
    match verdict.string_stable {
        TriState::Unstable => CellClass::StringUnstable,
        TriState::Stable if verdict.plant_stable == TriState::Stable => CellClass::StringStable,
        _ => CellClass::Marginal,
    }
}

/// Sweep the two axis gains over their grids and classify every cell.
pub fn scan(spec: &ScanSpec) -> Result<StabilityChart, ScanError> {
    spec.validate()?;
    let (sx, sy) = (spec.x_range.steps(), spec.y_range.steps());
    let results: Vec<(CellClass, Option<String>)> = (0..sx * sy)
        .into_par_iter()
        .map(|idx| {
            let (ix, iy) = (idx % sx, idx / sx);
            let fb = spec.cell_gains(ix, iy);
            match string_stability_verdict(&spec.topology, &spec.gains, &fb, &spec.omega_grid)
            {
                Ok(verdict) => (classify(&verdict), None),
                Err(e @ StringStabilityError::NoHeadVehicle) => {
                    // Unreachable past validation; kept as a note to be safe.
                    (CellClass::Marginal, Some(e.to_string()))
                }
                Err(e) => (CellClass::Marginal, Some(e.to_string())),
            }
        })
        .collect();

    let mut classes = Vec::with_capacity(results.len());
    let mut counts = ClassCounts::default();
    let mut notes = Vec::new();
    for (idx, (class, note)) in results.into_iter().enumerate() {
        classes.push(class);
        counts.bump(class);
        if let Some(message) = note {
            notes.push(CellNote {
                ix: idx % sx,
                iy: idx / sx,
                message,
            });
        }
    }
    Ok(StabilityChart {
        spec: spec.clone(),
        classes,
        counts,
        notes,
    })
}

/// Cells that changed stability between two charts over identical axes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionDelta {
    /// Cells string-stable in `b` but not in `a`.
    pub newly_stable: Vec<[usize; 2]>,
    /// Cells string-stable in `a` that `b` classifies as string- or
    /// plant-unstable (marginal drift is not counted).
    pub newly_unstable: Vec<[usize; 2]>,
}

impl RegionDelta {
    pub fn is_empty(&self) -> bool {
        self.newly_stable.is_empty() && self.newly_unstable.is_empty()
    }
}

pub fn region_delta(a: &StabilityChart, b: &StabilityChart) -> Result<RegionDelta, ScanError> {
    if !a.same_axes(b) {
        return Err(ScanError::AxesMismatch);
    }
    let mut delta = RegionDelta::default();
    let sx = a.spec.x_range.steps();
    for idx in 0..a.classes.len() {
        let cell = [idx % sx, idx / sx];
        let (ca, cb) = (a.classes[idx], b.classes[idx]);
        if cb == CellClass::StringStable && ca != CellClass::StringStable {
            delta.newly_stable.push(cell);
        }
        if ca == CellClass::StringStable
            && matches!(cb, CellClass::StringUnstable | CellClass::PlantUnstable)
        {
            delta.newly_unstable.push(cell);
        }
    }
    Ok(delta)
}
