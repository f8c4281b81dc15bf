//! Time-domain response of an LCC string to a head-vehicle perturbation.
//!
//! Two modes share one fixed-step classical Runge-Kutta core:
//!
//! * linear: integrates the closed-loop deviation dynamics
//!   x' = A_cl x + H w(t) from x(0) = 0 and reports absolute quantities
//!   (v* + deviation), which is what velocity-profile plots want;
//! * nonlinear: integrates the coupled car-following ODEs in absolute
//!   (spacing, velocity) pairs, with the CAV applying its linear feedback
//!   law around the equilibrium.
//!
//! The step size is fixed so reruns are bit-reproducible. The end-of-step
//! input sample backs off by a relative 1e-9: a perturbation jump aligned
//! to the step grid then lands entirely in the next step, and
//! piecewise-constant inputs integrate exactly as their matrix-exponential
//! solution up to integrator order. Smooth inputs see a time offset far
//! below the truncation error.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::car_following::{ovm_acceleration, DriverParams, Equilibrium};
use crate::system_builder::{
    closed_loop, BuildError, FeedbackGains, LccTopology, LccVariant, StateKind, StateSpace,
};

/// States are declared blown up past this magnitude.
pub const STATE_BLOWUP_LIMIT: f64 = 1e9;

/// Default simulation horizon in seconds.
pub const DEFAULT_HORIZON: f64 = 100.0;

/// Default integration step in seconds.
pub const DEFAULT_DT: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("state left the finite range at t = {time}")]
    NonFiniteState { time: f64 },
    #[error("vehicle {vehicle} spacing went nonpositive at t = {time} (collision)")]
    NegativeSpacing { vehicle: i32, time: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Build(#[from] BuildError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    SinePulse,
    BrakePulse,
    Step,
}

/// Head-vehicle velocity deviation signal. `duration` is the sine period
/// for `SinePulse`, the hold time for `BrakePulse`, and unused for `Step`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPerturbation")]
pub struct Perturbation {
    pub kind: PerturbationKind,
    pub amplitude: f64,
    pub duration: f64,
    pub start_time: f64,
    pub cycles: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPerturbation {
    #[serde(default = "default_kind")]
    kind: PerturbationKind,
    #[serde(default = "default_amplitude")]
    amplitude: f64,
    #[serde(default = "default_duration")]
    duration: f64,
    #[serde(default = "default_start_time")]
    start_time: f64,
    #[serde(default = "default_cycles")]
    cycles: u32,
}

fn default_kind() -> PerturbationKind {
    PerturbationKind::SinePulse
}

fn default_amplitude() -> f64 {
    2.0
}

fn default_duration() -> f64 {
    10.0
}

fn default_start_time() -> f64 {
    20.0
}

fn default_cycles() -> u32 {
    1
}

impl TryFrom<RawPerturbation> for Perturbation {
    type Error = SimulationError;

    fn try_from(raw: RawPerturbation) -> Result<Self, Self::Error> {
        Perturbation::new(raw.kind, raw.amplitude, raw.duration, raw.start_time, raw.cycles)
    }
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation {
            kind: default_kind(),
            amplitude: default_amplitude(),
            duration: default_duration(),
            start_time: default_start_time(),
            cycles: default_cycles(),
        }
    }
}

impl Perturbation {
    pub fn new(
        kind: PerturbationKind,
        amplitude: f64,
        duration: f64,
        start_time: f64,
        cycles: u32,
    ) -> Result<Self, SimulationError> {
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(SimulationError::InvalidInput(format!(
                "perturbation amplitude must be finite and nonnegative, got {amplitude}"
            )));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(SimulationError::InvalidInput(format!(
                "perturbation duration must be finite and positive, got {duration}"
            )));
        }
        if !(start_time.is_finite() && start_time >= 0.0) {
            return Err(SimulationError::InvalidInput(format!(
                "perturbation start time must be finite and nonnegative, got {start_time}"
            )));
        }
        if cycles == 0 {
            return Err(SimulationError::InvalidInput(
                "sine pulse needs at least one cycle".into(),
            ));
        }
        Ok(Perturbation {
            kind,
            amplitude,
            duration,
            start_time,
            cycles,
        })
    }

    /// Velocity deviation of the head vehicle at time t. Right-continuous
    /// at the switching instants.
    pub fn velocity_deviation(&self, t: f64) -> f64 {
        let local = t - self.start_time;
        match self.kind {
            PerturbationKind::SinePulse => {
                let span = self.duration * self.cycles as f64;
                if (0.0..span).contains(&local) {
                    self.amplitude * (2.0 * std::f64::consts::PI * local / self.duration).sin()
                } else {
                    0.0
                }
            }
            PerturbationKind::BrakePulse => {
                if (0.0..self.duration).contains(&local) {
                    -self.amplitude
                } else {
                    0.0
                }
            }
            PerturbationKind::Step => {
                if local >= 0.0 {
                    self.amplitude
                } else {
                    0.0
                }
            }
        }
    }
}

/// Trajectory of one vehicle. Spacing is absent for a free-driving CAV,
/// which has no vehicle ahead to measure spacing against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleSeries {
    pub vehicle: i32,
    pub velocity: Vec<f64>,
    pub spacing: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub times: Vec<f64>,
    /// Absolute head-vehicle velocity; absent for free-driving topologies.
    pub head_velocity: Option<Vec<f64>>,
    /// One series per vehicle, ordered front to back (-m ..= n).
    pub vehicles: Vec<VehicleSeries>,
    pub topology: LccTopology,
    pub gains: FeedbackGains,
    pub perturbation: Perturbation,
}

fn validate_steps(horizon: f64, dt: f64) -> Result<usize, SimulationError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimulationError::InvalidInput(format!(
            "dt must be finite and positive, got {dt}"
        )));
    }
    if !(horizon.is_finite() && horizon >= dt) {
        return Err(SimulationError::InvalidInput(format!(
            "horizon must be finite and at least one step ({dt}), got {horizon}"
        )));
    }
    Ok((horizon / dt).round() as usize)
}

/// One classical 4th-order step. Stage times for the end of the step back
/// off by a relative 1e-9, see the module docs.
fn rk4_step<F>(f: &F, t: f64, dt: f64, x: &DVector<f64>) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let t_end = t + dt * (1.0 - 1e-9);
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * dt, &(x + 0.5 * dt * &k1));
    let k3 = f(t + 0.5 * dt, &(x + 0.5 * dt * &k2));
    let k4 = f(t_end, &(x + dt * &k3));
    x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn check_finite(x: &DVector<f64>, t: f64) -> Result<(), SimulationError> {
    if x.iter().any(|v| !v.is_finite() || v.abs() > STATE_BLOWUP_LIMIT) {
        return Err(SimulationError::NonFiniteState { time: t });
    }
    Ok(())
}

/// Integrate the closed-loop deviation dynamics x' = A_cl x + H w(t) from
/// x(0) = 0 under an arbitrary scalar input. Returns the time grid and the
/// raw deviation states, one vector per sample.
pub fn simulate_linear_response<F>(
    sys: &StateSpace,
    fb: &FeedbackGains,
    input: F,
    horizon: f64,
    dt: f64,
) -> Result<(Vec<f64>, Vec<DVector<f64>>), SimulationError>
where
    F: Fn(f64) -> f64,
{
    let steps = validate_steps(horizon, dt)?;
    let a_cl = closed_loop(sys, fb)?;
    let h = sys.h().cloned();
    let zero = DVector::zeros(sys.dim());
    let f = |t: f64, x: &DVector<f64>| -> DVector<f64> {
        let mut dx = &a_cl * x;
        if let Some(h) = &h {
            dx += h * input(t);
        }
        dx
    };
    let mut states = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    let mut x = zero;
    times.push(0.0);
    states.push(x.clone());
    for k in 0..steps {
        let t = k as f64 * dt;
        x = rk4_step(&f, t, dt, &x);
        let t_next = (k + 1) as f64 * dt;
        check_finite(&x, t_next)?;
        times.push(t_next);
        states.push(x.clone());
    }
    Ok((times, states))
}

/// Linearized simulation with plot-ready absolute outputs.
pub fn simulate_linear(
    sys: &StateSpace,
    fb: &FeedbackGains,
    eq: &Equilibrium,
    pert: &Perturbation,
    horizon: f64,
    dt: f64,
) -> Result<SimulationResult, SimulationError> {
    let (times, states) =
        simulate_linear_response(sys, fb, |t| pert.velocity_deviation(t), horizon, dt)?;
    let topology = *sys.topology();
    let head_velocity = topology.has_head().then(|| {
        times
            .iter()
            .map(|&t| eq.v_star() + pert.velocity_deviation(t))
            .collect()
    });
    let mut vehicles = Vec::new();
    for vehicle in topology.preceding().chain(0..=topology.n() as i32) {
        let vel_idx = sys
            .state_index(vehicle, StateKind::VelocityError)
            .expect("every vehicle has a velocity state");
        let velocity = states.iter().map(|x| eq.v_star() + x[vel_idx]).collect();
        let spacing = sys
            .state_index(vehicle, StateKind::SpacingError)
            .map(|idx| states.iter().map(|x| eq.s_star() + x[idx]).collect());
        vehicles.push(VehicleSeries {
            vehicle,
            velocity,
            spacing,
        });
    }
    Ok(SimulationResult {
        times,
        head_velocity,
        vehicles,
        topology,
        gains: fb.clone(),
        perturbation: *pert,
    })
}

/// Nonlinear simulation state layout: the free-driving CAV contributes only
/// its velocity, every other vehicle a (spacing, velocity) pair, front to
/// back.
struct NonlinearLayout {
    topology: LccTopology,
}

impl NonlinearLayout {
    fn dim(&self) -> usize {
        if self.topology.has_head() {
            2 * self.topology.vehicle_count()
        } else {
            2 * self.topology.vehicle_count() - 1
        }
    }

    /// Index of the vehicle's spacing state; None for a free-driving CAV.
    fn spacing(&self, vehicle: i32) -> Option<usize> {
        let pos = (vehicle + self.topology.m() as i32) as usize;
        if self.topology.has_head() {
            Some(2 * pos)
        } else if vehicle == 0 {
            None
        } else {
            Some(2 * pos - 1)
        }
    }

    fn velocity(&self, vehicle: i32) -> usize {
        let pos = (vehicle + self.topology.m() as i32) as usize;
        if self.topology.has_head() {
            2 * pos + 1
        } else if vehicle == 0 {
            0
        } else {
            2 * pos
        }
    }
}

/// Nonlinear OVM simulation of the whole string, CAV included, around an
/// equilibrium. Initial condition is the equilibrium itself.
pub fn simulate_nonlinear(
    params: &DriverParams,
    topology: &LccTopology,
    fb: &FeedbackGains,
    eq: &Equilibrium,
    pert: &Perturbation,
    horizon: f64,
    dt: f64,
) -> Result<SimulationResult, SimulationError> {
    let steps = validate_steps(horizon, dt)?;
    fb.validate_for(topology)?;
    let gains = crate::car_following::linearize(params, eq)
        .map_err(|e| SimulationError::InvalidInput(e.to_string()))?;
    let layout = NonlinearLayout {
        topology: *topology,
    };
    let (s_star, v_star) = (eq.s_star(), eq.v_star());

    let front: i32 = -(topology.m() as i32);
    let cav_spacing = layout.spacing(0);
    let f = |t: f64, x: &DVector<f64>| -> DVector<f64> {
        let mut dx = DVector::zeros(layout.dim());
        let head_v = v_star + pert.velocity_deviation(t);
        for vehicle in front..=(topology.n() as i32) {
            let pred_v = if vehicle == front {
                if topology.has_head() {
                    head_v
                } else {
                    // Free-driving CAV: no predecessor, no spacing state.
                    x[layout.velocity(vehicle)]
                }
            } else {
                x[layout.velocity(vehicle - 1)]
            };
            let v = x[layout.velocity(vehicle)];
            if let Some(si) = layout.spacing(vehicle) {
                dx[si] = pred_v - v;
            }
            let accel = if vehicle != 0 {
                let s = x[layout.spacing(vehicle).expect("HDVs track spacing")];
                ovm_acceleration(params, s, pred_v - v, v)
            } else {
                // CAV control law around the equilibrium.
                let mut u = match topology.variant() {
                    LccVariant::General => {
                        let s = x[cav_spacing.expect("general CAV tracks spacing")];
                        gains.alpha1() * (s - s_star) - gains.alpha2() * (v - v_star)
                            + gains.alpha3() * (pred_v - v_star)
                    }
                    LccVariant::CarFollowing => {
                        let s = x[cav_spacing.expect("car-following CAV tracks spacing")];
                        ovm_acceleration(params, s, pred_v - v, v)
                    }
                    LccVariant::FreeDriving => 0.0,
                };
                for i in topology.preceding().chain(topology.following()) {
                    let si = layout.spacing(i).expect("monitored vehicles track spacing");
                    u += fb.mu(i) * (x[si] - s_star)
                        + fb.k(i) * (x[layout.velocity(i)] - v_star);
                }
                u
            };
            dx[layout.velocity(vehicle)] = accel;
        }
        dx
    };

    let mut x = DVector::zeros(layout.dim());
    for vehicle in front..=(topology.n() as i32) {
        if let Some(si) = layout.spacing(vehicle) {
            x[si] = s_star;
        }
        x[layout.velocity(vehicle)] = v_star;
    }

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(x.clone());
    for k in 0..steps {
        let t = k as f64 * dt;
        x = rk4_step(&f, t, dt, &x);
        let t_next = (k + 1) as f64 * dt;
        check_finite(&x, t_next)?;
        for vehicle in front..=(topology.n() as i32) {
            if let Some(si) = layout.spacing(vehicle) {
                if x[si] <= 0.0 {
                    return Err(SimulationError::NegativeSpacing {
                        vehicle,
                        time: t_next,
                    });
                }
            }
        }
        times.push(t_next);
        states.push(x.clone());
    }

    let head_velocity = topology.has_head().then(|| {
        times
            .iter()
            .map(|&t| v_star + pert.velocity_deviation(t))
            .collect()
    });
    let mut vehicles = Vec::new();
    for vehicle in front..=(topology.n() as i32) {
        let velocity = states.iter().map(|x| x[layout.velocity(vehicle)]).collect();
        let spacing = layout
            .spacing(vehicle)
            .map(|si| states.iter().map(|x| x[si]).collect());
        vehicles.push(VehicleSeries {
            vehicle,
            velocity,
            spacing,
        });
    }
    Ok(SimulationResult {
        times,
        head_velocity,
        vehicles,
        topology: *topology,
        gains: fb.clone(),
        perturbation: *pert,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::car_following::{equilibrium_from_spacing, LinearGains};
    use crate::system_builder::build;
    use approx::assert_relative_eq;

    fn typical_params() -> DriverParams {
        DriverParams::default()
    }

    fn typical_eq() -> Equilibrium {
        equilibrium_from_spacing(&typical_params(), 20.0)
    }

    fn typical_gains() -> LinearGains {
        LinearGains::new(0.3 * std::f64::consts::PI, 1.5, 0.9).unwrap()
    }

    #[test]
    fn perturbation_shapes() {
        let sine = Perturbation::default();
        assert_eq!(sine.velocity_deviation(19.99), 0.0);
        assert_eq!(sine.velocity_deviation(30.0), 0.0);
        assert_relative_eq!(sine.velocity_deviation(22.5), 2.0, max_relative = 1e-12);
        assert_relative_eq!(sine.velocity_deviation(27.5), -2.0, max_relative = 1e-12);

        let brake =
            Perturbation::new(PerturbationKind::BrakePulse, 3.0, 5.0, 10.0, 1).unwrap();
        assert_eq!(brake.velocity_deviation(9.999), 0.0);
        assert_eq!(brake.velocity_deviation(10.0), -3.0);
        assert_eq!(brake.velocity_deviation(14.999), -3.0);
        assert_eq!(brake.velocity_deviation(15.0), 0.0);

        let step = Perturbation::new(PerturbationKind::Step, 1.5, 1.0, 2.0, 1).unwrap();
        assert_eq!(step.velocity_deviation(1.999), 0.0);
        assert_eq!(step.velocity_deviation(2.0), 1.5);
        assert_eq!(step.velocity_deviation(1e6), 1.5);
    }

    #[test]
    fn perturbation_validation_and_serde() {
        assert!(Perturbation::new(PerturbationKind::Step, -1.0, 1.0, 0.0, 1).is_err());
        assert!(Perturbation::new(PerturbationKind::Step, 1.0, 0.0, 0.0, 1).is_err());
        assert!(Perturbation::new(PerturbationKind::Step, 1.0, 1.0, -1.0, 1).is_err());
        assert!(Perturbation::new(PerturbationKind::SinePulse, 1.0, 1.0, 0.0, 0).is_err());
        let p: Perturbation = serde_json::from_str("{}").unwrap();
        assert_eq!(p, Perturbation::default());
        let p: Perturbation =
            serde_json::from_str(r#"{"kind": "brake_pulse", "amplitude": 4.0}"#).unwrap();
        assert_eq!(p.kind, PerturbationKind::BrakePulse);
        assert_eq!(p.amplitude, 4.0);
        assert!(serde_json::from_str::<Perturbation>(r#"{"amplitude": -2.0}"#).is_err());
        assert!(serde_json::from_str::<Perturbation>(r#"{"king": "step"}"#).is_err());
    }

    #[test]
    fn zero_perturbation_holds_equilibrium() {
        let gains = typical_gains();
        let eq = typical_eq();
        let topo = LccTopology::general(2, 2).unwrap();
        let sys = build(&topo, &gains);
        let pert = Perturbation::new(PerturbationKind::SinePulse, 0.0, 10.0, 0.0, 1).unwrap();
        let fb = FeedbackGains::new().with_mu(-1, 3.0).with_k(-1, -3.0);
        let out = simulate_linear(&sys, &fb, &eq, &pert, 10.0, 0.01).unwrap();
        for series in &out.vehicles {
            assert!(series.velocity.iter().all(|&v| v == eq.v_star()));
            let spacing = series.spacing.as_ref().unwrap();
            assert!(spacing.iter().all(|&s| s == eq.s_star()));
        }

        let non = simulate_nonlinear(
            &typical_params(),
            &topo,
            &fb,
            &eq,
            &pert,
            10.0,
            0.01,
        )
        .unwrap();
        for series in &non.vehicles {
            // The nonlinear equilibrium residual is the arccos rounding, so
            // drift stays at integration noise.
            assert!(series
                .velocity
                .iter()
                .all(|&v| (v - eq.v_star()).abs() < 1e-9));
            assert!(series
                .spacing
                .as_ref()
                .unwrap()
                .iter()
                .all(|&s| (s - eq.s_star()).abs() < 1e-9));
        }
    }

    #[test]
    fn sampling_grid_shape() {
        let gains = typical_gains();
        let eq = typical_eq();
        let sys = build(&LccTopology::car_following(1), &gains);
        let out = simulate_linear(
            &sys,
            &FeedbackGains::new(),
            &eq,
            &Perturbation::default(),
            1.0,
            0.25,
        )
        .unwrap();
        assert_eq!(out.times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(out.vehicles.len(), 2);
        assert_eq!(out.head_velocity.as_ref().unwrap().len(), 5);
        assert!(simulate_linear(
            &sys,
            &FeedbackGains::new(),
            &eq,
            &Perturbation::default(),
            0.5,
            0.0
        )
        .is_err());
        assert!(simulate_linear(
            &sys,
            &FeedbackGains::new(),
            &eq,
            &Perturbation::default(),
            0.1,
            0.25
        )
        .is_err());
    }

    #[test]
    fn spacing_derivative_matches_velocity_difference() {
        let gains = typical_gains();
        let eq = typical_eq();
        let topo = LccTopology::general(1, 1).unwrap();
        let sys = build(&topo, &gains);
        let dt = 0.01;
        let out = simulate_linear(
            &sys,
            &FeedbackGains::new(),
            &eq,
            &Perturbation::default(),
            60.0,
            dt,
        )
        .unwrap();
        let head = out.head_velocity.as_ref().unwrap();
        for (idx, series) in out.vehicles.iter().enumerate() {
            let spacing = series.spacing.as_ref().unwrap();
            let pred: &[f64] = if idx == 0 {
                head
            } else {
                &out.vehicles[idx - 1].velocity
            };
            let mut worst = 0.0f64;
            for k in 1..spacing.len() - 1 {
                let ds = (spacing[k + 1] - spacing[k - 1]) / (2.0 * dt);
                worst = worst.max((ds - (pred[k] - series.velocity[k])).abs());
            }
            // Central differencing drops to first order across the pulse
            // edges, which bounds the residual at ~A*(2pi/T)*dt/2. A
            // wiring mistake would show up orders of magnitude above this.
            assert!(worst < 1e-2, "vehicle {} drift {worst}", series.vehicle);
        }

        // Smooth input: the same identity holds at second-order tightness.
        let (_, states) = simulate_linear_response(
            &sys,
            &FeedbackGains::new(),
            |t| 0.5 * (0.7 * t).sin(),
            30.0,
            dt,
        )
        .unwrap();
        let si = sys.state_index(1, StateKind::SpacingError).unwrap();
        let vi = sys.state_index(1, StateKind::VelocityError).unwrap();
        let pi = sys.state_index(0, StateKind::VelocityError).unwrap();
        let mut worst = 0.0f64;
        for k in 1..states.len() - 1 {
            let ds = (states[k + 1][si] - states[k - 1][si]) / (2.0 * dt);
            worst = worst.max((ds - (states[k][pi] - states[k][vi])).abs());
        }
        assert!(worst < 1e-5, "smooth-input drift {worst}");
    }

    #[test]
    fn nonlinear_matches_linear_for_small_amplitudes() {
        let params = typical_params();
        let eq = typical_eq();
        let gains = typical_gains();
        let topo = LccTopology::general(2, 2).unwrap();
        let sys = build(&topo, &gains);
        let fb = FeedbackGains::new().with_mu(-1, 3.0).with_k(-1, -3.0);
        let pert = Perturbation::new(PerturbationKind::SinePulse, 0.1, 10.0, 5.0, 1).unwrap();
        let lin = simulate_linear(&sys, &fb, &eq, &pert, 60.0, 0.01).unwrap();
        let non = simulate_nonlinear(&params, &topo, &fb, &eq, &pert, 60.0, 0.01).unwrap();
        let peak = |r: &SimulationResult| {
            r.vehicles
                .last()
                .unwrap()
                .velocity
                .iter()
                .map(|v| (v - eq.v_star()).abs())
                .fold(0.0, f64::max)
        };
        let (pl, pn) = (peak(&lin), peak(&non));
        assert!(
            (pl / pn - 1.0).abs() < 0.05,
            "linear peak {pl} vs nonlinear peak {pn}"
        );
    }

    #[test]
    fn blowup_is_reported_for_plant_unstable_gains() {
        let gains = typical_gains();
        let eq = typical_eq();
        let topo = LccTopology::general(1, 1).unwrap();
        let sys = build(&topo, &gains);
        let fb = FeedbackGains::new().with_k(1, 8.0);
        let pert = Perturbation::new(PerturbationKind::SinePulse, 1.0, 10.0, 1.0, 1).unwrap();
        let err = simulate_linear(&sys, &fb, &eq, &pert, 400.0, 0.01).unwrap_err();
        assert!(matches!(err, SimulationError::NonFiniteState { .. }));
    }

    #[test]
    fn hard_brake_collides_in_nonlinear_mode() {
        let params = typical_params();
        let eq = typical_eq();
        let topo = LccTopology::general(2, 2).unwrap();
        // A 12 m/s brake is absorbed: the driver model stops before contact
        // (desired velocity hits zero below s_st). Reversing the head keeps
        // the gap closing through zero.
        let pert =
            Perturbation::new(PerturbationKind::BrakePulse, 20.0, 15.0, 5.0, 1).unwrap();
        let err = simulate_nonlinear(
            &params,
            &topo,
            &FeedbackGains::new(),
            &eq,
            &pert,
            60.0,
            0.01,
        )
        .unwrap_err();
        match err {
            SimulationError::NegativeSpacing { vehicle, time } => {
                assert_eq!(vehicle, -2);
                assert!(time > 5.0);
            }
            other => panic!("expected a collision, got {other:?}"),
        }
    }

    #[test]
    fn free_driving_ignores_head_perturbation() {
        let gains = typical_gains();
        let eq = typical_eq();
        let topo = LccTopology::free_driving(2);
        let sys = build(&topo, &gains);
        let out = simulate_linear(
            &sys,
            &FeedbackGains::new(),
            &eq,
            &Perturbation::default(),
            10.0,
            0.01,
        )
        .unwrap();
        assert!(out.head_velocity.is_none());
        assert!(out.vehicles[0].spacing.is_none());
        assert!(out
            .vehicles
            .iter()
            .all(|s| s.velocity.iter().all(|&v| v == eq.v_star())));

        let non = simulate_nonlinear(
            &typical_params(),
            &topo,
            &FeedbackGains::new(),
            &eq,
            &Perturbation::default(),
            10.0,
            0.01,
        )
        .unwrap();
        assert!(non.head_velocity.is_none());
        assert!(non.vehicles[0].spacing.is_none());
        assert_eq!(non.vehicles.len(), 3);
        assert!(non
            .vehicles
            .iter()
            .all(|s| s.velocity.iter().all(|&v| (v - eq.v_star()).abs() < 1e-12)));
    }
}
