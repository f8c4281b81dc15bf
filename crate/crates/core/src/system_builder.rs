//! State-space assembly for a mixed vehicle string.
//!
//! One connected automated vehicle (CAV, index `0`) drives among human
//! vehicles: `m` of them ahead (indices `-m..=-1`, front to rear) and `n`
//! behind (indices `1..=n`). A head vehicle in front of everything acts as
//! the exogenous disturbance. Errors are taken around an equilibrium
//! `(s*, v*)` and stacked front to rear,
//!
//! ```text
//! x = [s~(-m), v~(-m), ..., s~0, v~0, ..., s~n, v~n]
//! ```
//!
//! giving `x' = A x + B u + H v~_h` built from 2x2 blocks
//!
//! ```text
//! P1 = | 0   -1 |   P2 = | 0   1  |   S1 = | 0 -1 |   S2 = | 0 1 |
//!      | a1  -a2|        | 0   a3 |        | 0  0 |        | 0 0 |
//! ```
//!
//! with `P2 P1` bands for human rows and `S2 S1` for the CAV row, whose
//! acceleration is the control input. Three topology variants exist:
//!
//! * `General`: `m >= 1` vehicles ahead are monitored but the head vehicle
//!   itself is not; the CAV row is `S2 S1`.
//! * `CarFollowing`: the CAV directly follows the head vehicle (`m = 0`),
//!   keeps the human feedback terms in its own row (`P1`) and adds its
//!   extra input on top, so the head coupling rides on `H`, not on the
//!   feedback row.
//! * `FreeDriving`: no vehicle ahead at all; the first state is the negated
//!   CAV position `-p_0` (the sign keeps the `S1` block shared) and there
//!   is no `H`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::car_following::LinearGains;

#[derive(Debug, Clone, Error)]
pub enum BuildError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("feedback gain on vehicle {index} which is not monitored by this topology")]
    GainIndexOutOfRange { index: i32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LccVariant {
    General,
    CarFollowing,
    FreeDriving,
}

/// Which vehicles surround the CAV. Invariants: `General` has `m >= 1`;
/// the single-lane variants have `m = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTopology")]
pub struct LccTopology {
    variant: LccVariant,
    n: usize,
    m: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTopology {
    variant: LccVariant,
    n: usize,
    #[serde(default)]
    m: usize,
}

impl TryFrom<RawTopology> for LccTopology {
    type Error = BuildError;

    fn try_from(r: RawTopology) -> Result<Self, Self::Error> {
        LccTopology::new(r.variant, r.n, r.m)
    }
}

impl LccTopology {
    pub fn new(variant: LccVariant, n: usize, m: usize) -> Result<Self, BuildError> {
        match variant {
            LccVariant::General if m == 0 => Err(BuildError::InvalidTopology(
                "the general variant monitors at least one vehicle ahead (m >= 1)".into(),
            )),
            LccVariant::CarFollowing | LccVariant::FreeDriving if m != 0 => {
                Err(BuildError::InvalidTopology(format!(
                    "single-lane variants have no vehicles ahead of the CAV, got m = {m}"
                )))
            }
            _ => Ok(Self { variant, n, m }),
        }
    }

    pub fn general(n: usize, m: usize) -> Result<Self, BuildError> {
        Self::new(LccVariant::General, n, m)
    }

    pub fn car_following(n: usize) -> Self {
        Self {
            variant: LccVariant::CarFollowing,
            n,
            m: 0,
        }
    }

    pub fn free_driving(n: usize) -> Self {
        Self {
            variant: LccVariant::FreeDriving,
            n,
            m: 0,
        }
    }

    pub fn variant(&self) -> LccVariant {
        self.variant
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn vehicle_count(&self) -> usize {
        self.n + self.m + 1
    }

    pub fn state_dim(&self) -> usize {
        2 * self.vehicle_count()
    }

    /// Whether an exogenous head vehicle feeds the string.
    pub fn has_head(&self) -> bool {
        self.variant != LccVariant::FreeDriving
    }

    /// True when the CAV may close feedback over vehicle `i`.
    pub fn monitors(&self, i: i32) -> bool {
        i != 0 && i >= -(self.m as i32) && i <= self.n as i32
    }

    /// Monitored vehicles ahead, front to rear: `-m, ..., -1`.
    pub fn preceding(&self) -> impl Iterator<Item = i32> {
        -(self.m as i32)..0
    }

    /// Monitored vehicles behind: `1, ..., n`.
    pub fn following(&self) -> impl Iterator<Item = i32> + use<> {
        1..=self.n as i32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    SpacingError,
    VelocityError,
    /// Negated absolute position of a free-driving CAV.
    NegativePosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateLabel {
    pub vehicle: i32,
    pub kind: StateKind,
}

/// Extra CAV feedback gains, `mu_i` on spacing errors and `k_i` on velocity
/// errors, keyed by vehicle index. Missing indices mean zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackGains {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    mu: BTreeMap<i32, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    k: BTreeMap<i32, f64>,
}

impl FeedbackGains {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_mu(mut self, vehicle: i32, value: f64) -> Self {
        self.mu.insert(vehicle, value);
        self
    }

    pub fn with_k(mut self, vehicle: i32, value: f64) -> Self {
        self.k.insert(vehicle, value);
        self
    }

    pub fn set_mu(&mut self, vehicle: i32, value: f64) {
        self.mu.insert(vehicle, value);
    }

    pub fn set_k(&mut self, vehicle: i32, value: f64) {
        self.k.insert(vehicle, value);
    }

    pub fn mu(&self, vehicle: i32) -> f64 {
        self.mu.get(&vehicle).copied().unwrap_or(0.0)
    }

    pub fn k(&self, vehicle: i32) -> f64 {
        self.k.get(&vehicle).copied().unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty() && self.k.is_empty()
    }

    /// Vehicles with any recorded gain, ascending.
    pub fn indices(&self) -> impl Iterator<Item = i32> + use<> {
        let mut set: Vec<i32> = self.mu.keys().chain(self.k.keys()).copied().collect();
        set.sort_unstable();
        set.dedup();
        set.into_iter()
    }

    pub fn validate_for(&self, topology: &LccTopology) -> Result<(), BuildError> {
        for index in self.indices() {
            if !topology.monitors(index) {
                return Err(BuildError::GainIndexOutOfRange { index });
            }
        }
        Ok(())
    }
}

/// `x' = A x + B u + H v~_h` plus the metadata needed to interpret rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "RawStateSpace", try_from = "RawStateSpace")]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DVector<f64>,
    h: Option<DVector<f64>>,
    ordering: Vec<StateLabel>,
    topology: LccTopology,
    gains: LinearGains,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStateSpace {
    dim: usize,
    /// Row-major `dim * dim` entries.
    a: Vec<f64>,
    b: Vec<f64>,
    h: Option<Vec<f64>>,
    ordering: Vec<StateLabel>,
    topology: LccTopology,
    gains: LinearGains,
}

impl From<StateSpace> for RawStateSpace {
    fn from(s: StateSpace) -> Self {
        let dim = s.a.nrows();
        let mut a = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                a.push(s.a[(i, j)]);
            }
        }
        RawStateSpace {
            dim,
            a,
            b: s.b.iter().copied().collect(),
            h: s.h.as_ref().map(|h| h.iter().copied().collect()),
            ordering: s.ordering.clone(),
            topology: s.topology,
            gains: s.gains,
        }
    }
}

impl TryFrom<RawStateSpace> for StateSpace {
    type Error = String;

    fn try_from(r: RawStateSpace) -> Result<Self, Self::Error> {
        if r.a.len() != r.dim * r.dim {
            return Err(format!(
                "a has {} entries, expected dim * dim = {}",
                r.a.len(),
                r.dim * r.dim
            ));
        }
        if r.b.len() != r.dim {
            return Err(format!("b has {} entries, expected {}", r.b.len(), r.dim));
        }
        if let Some(h) = &r.h {
            if h.len() != r.dim {
                return Err(format!("h has {} entries, expected {}", h.len(), r.dim));
            }
        }
        if r.ordering.len() != r.dim {
            return Err(format!(
                "ordering has {} labels, expected {}",
                r.ordering.len(),
                r.dim
            ));
        }
        Ok(StateSpace {
            a: DMatrix::from_row_slice(r.dim, r.dim, &r.a),
            b: DVector::from_vec(r.b),
            h: r.h.map(DVector::from_vec),
            ordering: r.ordering,
            topology: r.topology,
            gains: r.gains,
        })
    }
}

impl StateSpace {
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn h(&self) -> Option<&DVector<f64>> {
        self.h.as_ref()
    }

    pub fn ordering(&self) -> &[StateLabel] {
        &self.ordering
    }

    pub fn topology(&self) -> &LccTopology {
        &self.topology
    }

    pub fn gains(&self) -> &LinearGains {
        &self.gains
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn state_index(&self, vehicle: i32, kind: StateKind) -> Option<usize> {
        self.ordering
            .iter()
            .position(|l| l.vehicle == vehicle && l.kind == kind)
    }
}

fn set_block(a: &mut DMatrix<f64>, row_block: usize, col_block: usize, block: [[f64; 2]; 2]) {
    for (i, row) in block.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            a[(2 * row_block + i, 2 * col_block + j)] = *v;
        }
    }
}

/// Assemble the open-loop system for a validated topology.
pub fn build(topology: &LccTopology, gains: &LinearGains) -> StateSpace {
    let (a1, a2, a3) = (gains.alpha1(), gains.alpha2(), gains.alpha3());
    let p1 = [[0.0, -1.0], [a1, -a2]];
    let p2 = [[0.0, 1.0], [0.0, a3]];
    let s1 = [[0.0, -1.0], [0.0, 0.0]];
    let s2 = [[0.0, 1.0], [0.0, 0.0]];

    let m = topology.m();
    let dim = topology.state_dim();
    let mut a = DMatrix::zeros(dim, dim);
    let mut ordering = Vec::with_capacity(dim);

    for block in 0..topology.vehicle_count() {
        let vehicle = block as i32 - m as i32;
        let cav = vehicle == 0;
        let diag = match topology.variant() {
            // The car-following CAV keeps the human law in its own row.
            LccVariant::CarFollowing if cav => p1,
            _ if cav => s1,
            _ => p1,
        };
        set_block(&mut a, block, block, diag);
        if block > 0 {
            set_block(&mut a, block, block - 1, if cav { s2 } else { p2 });
        }
        let spacing_kind = if cav && topology.variant() == LccVariant::FreeDriving {
            StateKind::NegativePosition
        } else {
            StateKind::SpacingError
        };
        ordering.push(StateLabel {
            vehicle,
            kind: spacing_kind,
        });
        ordering.push(StateLabel {
            vehicle,
            kind: StateKind::VelocityError,
        });
    }

    let mut b = DVector::zeros(dim);
    b[2 * m + 1] = 1.0;

    // The head vehicle feeds the leading vehicle of the string, which reacts
    // like any human follower.
    let h = topology.has_head().then(|| {
        let mut h = DVector::zeros(dim);
        h[0] = 1.0;
        h[1] = a3;
        h
    });

    StateSpace {
        a,
        b,
        h,
        ordering,
        topology: *topology,
        gains: *gains,
    }
}

pub fn build_general(n: usize, m: usize, gains: &LinearGains) -> Result<StateSpace, BuildError> {
    Ok(build(&LccTopology::general(n, m)?, gains))
}

pub fn build_cf_lcc(n: usize, gains: &LinearGains) -> StateSpace {
    build(&LccTopology::car_following(n), gains)
}

pub fn build_fd_lcc(n: usize, gains: &LinearGains) -> StateSpace {
    build(&LccTopology::free_driving(n), gains)
}

/// Feedback row `K` such that `u = K x` realizes the CAV control law.
///
/// For the general variant the baseline car-following terms
/// `a1 s~0 - a2 v~0 + a3 v~(-1)` are part of `K`, so zero extra gains make
/// the closed-loop CAV row identical to a human row. The single-lane
/// variants already carry their baseline inside `A`/`H` and contribute the
/// extra gains only.
pub fn feedback_row(sys: &StateSpace, fb: &FeedbackGains) -> Result<RowDVector<f64>, BuildError> {
    fb.validate_for(&sys.topology)?;
    let mut k = RowDVector::zeros(sys.dim());
    if sys.topology.variant() == LccVariant::General {
        let g = &sys.gains;
        k[sys.state_index(0, StateKind::SpacingError).unwrap()] = g.alpha1();
        k[sys.state_index(0, StateKind::VelocityError).unwrap()] = -g.alpha2();
        k[sys.state_index(-1, StateKind::VelocityError).unwrap()] += g.alpha3();
    }
    for i in fb.indices() {
        if let Some(col) = sys.state_index(i, StateKind::SpacingError) {
            k[col] += fb.mu(i);
        }
        if let Some(col) = sys.state_index(i, StateKind::VelocityError) {
            k[col] += fb.k(i);
        }
    }
    Ok(k)
}

/// Closed-loop matrix `A + B K`.
pub fn closed_loop(sys: &StateSpace, fb: &FeedbackGains) -> Result<DMatrix<f64>, BuildError> {
    let k = feedback_row(sys, fb)?;
    Ok(&sys.a + &sys.b * k)
}
