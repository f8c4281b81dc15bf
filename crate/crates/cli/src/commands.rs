//! One function per subcommand. Each takes a parsed config and an output
//! directory, writes its artifacts, and maps library errors onto the two
//! failure exit classes (config vs analysis).

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use lcc_core::car_following::{equilibrium_from_spacing, linearize, solve_equilibrium};
use lcc_core::controllability::{analyze, controllability_condition, DEFAULT_CTRB_TOL};
use lcc_core::region_scanner::{scan, ScanSpec};
use lcc_core::simulator::{simulate_linear, simulate_nonlinear};
use lcc_core::string_stability::evaluate_grid;
use lcc_core::system_builder::build;
use lcc_core::{
    Equilibrium, FeedbackGains, LccTopology, LinearGains, Perturbation, SimulationResult,
};

use crate::config::{EquilibriumSpec, ScenarioConfig, SimulationMode};
use crate::svg::{chart_svg, gain_name, trajectory_svg};
use crate::CliError;

pub fn resolve_equilibrium(cfg: &ScenarioConfig) -> Result<Equilibrium, CliError> {
    match cfg.equilibrium {
        EquilibriumSpec::Spacing { s_star } => Ok(equilibrium_from_spacing(&cfg.driver, s_star)),
        EquilibriumSpec::Velocity { v_star } => {
            solve_equilibrium(&cfg.driver, v_star).map_err(|e| CliError::Analysis(e.to_string()))
        }
    }
}

pub fn linearized_gains(cfg: &ScenarioConfig, eq: &Equilibrium) -> Result<LinearGains, CliError> {
    linearize(&cfg.driver, eq).map_err(|e| CliError::Analysis(e.to_string()))
}

fn require_topology(cfg: &ScenarioConfig) -> Result<LccTopology, CliError> {
    cfg.topology.ok_or_else(|| {
        CliError::Config("field `topology` is required by this subcommand".into())
    })
}

fn validated_feedback(
    cfg: &ScenarioConfig,
    topology: &LccTopology,
) -> Result<FeedbackGains, CliError> {
    cfg.feedback
        .validate_for(topology)
        .map_err(|e| CliError::Config(format!("field `feedback`: {e}")))?;
    Ok(cfg.feedback.clone())
}

pub fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Analysis(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, content)
        .map_err(|e| CliError::Analysis(format!("cannot write {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Analysis(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

/// CSV floats: 10 significant digits, scientific, locale-independent.
fn csv_f(v: f64) -> String {
    format!("{v:.9e}")
}

pub fn run_equilibrium(cfg: &ScenarioConfig, out: &Path) -> Result<(), CliError> {
    let eq = resolve_equilibrium(cfg)?;
    write_json(&out.join("equilibrium.json"), &eq)
}

pub fn run_linearize(cfg: &ScenarioConfig, out: &Path) -> Result<(), CliError> {
    let eq = resolve_equilibrium(cfg)?;
    let gains = linearized_gains(cfg, &eq)?;
    write_json(
        &out.join("linearization.json"),
        &json!({
            "s_star": eq.s_star(),
            "v_star": eq.v_star(),
            "alpha1": gains.alpha1(),
            "alpha2": gains.alpha2(),
            "alpha3": gains.alpha3(),
            "condition_value": controllability_condition(&gains),
        }),
    )
}

pub fn run_build(cfg: &ScenarioConfig, out: &Path) -> Result<(), CliError> {
    let topology = require_topology(cfg)?;
    let eq = resolve_equilibrium(cfg)?;
    let gains = linearized_gains(cfg, &eq)?;
    write_json(&out.join("state_space.json"), &build(&topology, &gains))
}

pub fn ctrb_report_value(cfg: &ScenarioConfig) -> Result<serde_json::Value, CliError> {
    let topology = require_topology(cfg)?;
    let eq = resolve_equilibrium(cfg)?;
    let gains = linearized_gains(cfg, &eq)?;
    let report = analyze(&build(&topology, &gains), DEFAULT_CTRB_TOL)
        .map_err(|e| CliError::Analysis(e.to_string()))?;
    let mut value = serde_json::to_value(&report)
        .map_err(|e| CliError::Analysis(format!("cannot serialize report: {e}")))?;
    value["topology"] = serde_json::to_value(topology)
        .map_err(|e| CliError::Analysis(format!("cannot serialize topology: {e}")))?;
    Ok(value)
}

pub fn run_ctrb(cfg: &ScenarioConfig, out: &Path) -> Result<(), CliError> {
    write_json(&out.join("ctrb_report.json"), &ctrb_report_value(cfg)?)
}

pub fn run_ss_check(cfg: &ScenarioConfig, out: &Path) -> Result<(), CliError> {
    let topology = require_topology(cfg)?;
    let eq = resolve_equilibrium(cfg)?;
    let gains = linearized_gains(cfg, &eq)?;
    let fb = validated_feedback(cfg, &topology)?;
    let grid = cfg.omega_grid.unwrap_or_default();
    let verdict = lcc_core::string_stability::string_stability_verdict(
        &topology, &gains, &fb, &grid,
    )
    .map_err(|e| CliError::Analysis(e.to_string()))?;
    write_json(&out.join("stability.json"), &verdict)?;

    let mut csv = String::from("omega,magnitude_sq\n");
    match evaluate_grid(&topology, &gains, &fb, &grid) {
        Ok(evals) => {
            for e in evals {
                csv.push_str(&csv_f(e.omega));
                csv.push(',');
                csv.push_str(&csv_f(e.magnitude_sq));
                csv.push('\n');
            }
        }
        // A pole on the grid leaves the verdict (unstable) in charge; the
        // magnitude sweep is unavailable, not an error.
        Err(e) => eprintln!("note: magnitude sweep skipped: {e}"),
    }
    write_text(&out.join("magnitude.csv"), &csv)
}

pub fn assemble_scan_spec(cfg: &ScenarioConfig) -> Result<ScanSpec, CliError> {
    let topology = require_topology(cfg)?;
    let block = cfg
        .scan
        .ok_or_else(|| CliError::Config("field `scan` is required by this subcommand".into()))?;
    let eq = resolve_equilibrium(cfg)?;
    let gains = linearized_gains(cfg, &eq)?;
    Ok(ScanSpec {
        topology,
        gains,
        x_gain: block.x_gain,
        y_gain: block.y_gain,
        x_range: block.x_range,
        y_range: block.y_range,
        fixed_gains: cfg.feedback.clone(),
        omega_grid: cfg.omega_grid.unwrap_or_default(),
    })
}

pub fn run_scan(cfg: &ScenarioConfig, out: &Path) -> Result<(), CliError> {
    let spec = assemble_scan_spec(cfg)?;
    let chart = scan(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    for note in chart.notes() {
        eprintln!(
            "note: cell ({}, {}) left marginal: {}",
            note.ix, note.iy, note.message
        );
    }
    write_chart(&chart, out, "chart")
}

pub fn write_chart(
    chart: &lcc_core::StabilityChart,
    out: &Path,
    stem: &str,
) -> Result<(), CliError> {
    let mut csv = format!(
        "{},{},class\n",
        gain_name(chart.spec.x_gain),
        gain_name(chart.spec.y_gain)
    );
    for (_, _, x, y, class) in chart.cells() {
        csv.push_str(&csv_f(x));
        csv.push(',');
        csv.push_str(&csv_f(y));
        csv.push(',');
        csv.push_str(match class {
            lcc_core::CellClass::StringStable => "string_stable",
            lcc_core::CellClass::StringUnstable => "string_unstable",
            lcc_core::CellClass::PlantUnstable => "plant_unstable",
            lcc_core::CellClass::Marginal => "marginal",
        });
        csv.push('\n');
    }
    write_text(&out.join(format!("{stem}.csv")), &csv)?;
    write_text(&out.join(format!("{stem}.svg")), &chart_svg(chart))
}

pub fn run_simulate(cfg: &ScenarioConfig, out: &Path) -> Result<(), CliError> {
    let result = simulate_from_config(cfg)?;
    write_trajectory(&result, out, "trajectory")
}

pub fn simulate_from_config(cfg: &ScenarioConfig) -> Result<SimulationResult, CliError> {
    let topology = require_topology(cfg)?;
    let eq = resolve_equilibrium(cfg)?;
    let gains = linearized_gains(cfg, &eq)?;
    let fb = validated_feedback(cfg, &topology)?;
    let pert: Perturbation = cfg.perturbation.unwrap_or_default();
    let sim = cfg.simulation.unwrap_or_default();
    let result = match sim.mode {
        SimulationMode::Linear => simulate_linear(
            &build(&topology, &gains),
            &fb,
            &eq,
            &pert,
            sim.horizon,
            sim.dt,
        ),
        SimulationMode::Nonlinear => simulate_nonlinear(
            &cfg.driver,
            &topology,
            &fb,
            &eq,
            &pert,
            sim.horizon,
            sim.dt,
        ),
    };
    result.map_err(|e| CliError::Analysis(e.to_string()))
}

pub fn write_trajectory(
    result: &SimulationResult,
    out: &Path,
    stem: &str,
) -> Result<(), CliError> {
    let mut header = String::from("time");
    if result.head_velocity.is_some() {
        header.push_str(",head_velocity");
    }
    for v in &result.vehicles {
        header.push_str(&format!(",vel_{}", v.vehicle));
        if v.spacing.is_some() {
            header.push_str(&format!(",gap_{}", v.vehicle));
        }
    }
    header.push('\n');

    let mut csv = header;
    for (i, &t) in result.times.iter().enumerate() {
        csv.push_str(&csv_f(t));
        if let Some(head) = &result.head_velocity {
            csv.push(',');
            csv.push_str(&csv_f(head[i]));
        }
        for v in &result.vehicles {
            csv.push(',');
            csv.push_str(&csv_f(v.velocity[i]));
            if let Some(sp) = &v.spacing {
                csv.push(',');
                csv.push_str(&csv_f(sp[i]));
            }
        }
        csv.push('\n');
    }
    write_text(&out.join(format!("{stem}.csv")), &csv)?;
    write_text(&out.join(format!("{stem}.svg")), &trajectory_svg(result))
}

/// Largest deviation from equilibrium velocity across the vehicles behind
/// the CAV. Vehicles ahead never feel the CAV's gains, so including them
/// would mask any difference between feedback settings.
pub fn follower_peak_deviation(result: &SimulationResult, v_star: f64) -> f64 {
    result
        .vehicles
        .iter()
        .filter(|v| v.vehicle >= 1)
        .flat_map(|v| v.velocity.iter())
        .map(|v| (v - v_star).abs())
        .fold(0.0, f64::max)
}

/// Default driver setup shared by the bundled reproduce scenarios.
pub fn default_system() -> (Equilibrium, LinearGains) {
    let driver = lcc_core::DriverParams::default();
    let eq = equilibrium_from_spacing(&driver, 20.0);
    let gains = linearize(&driver, &eq).expect("default equilibrium is non-degenerate");
    (eq, gains)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_floats_use_ten_significant_digits() {
        assert_eq!(csv_f(15.0), "1.500000000e1");
        assert_eq!(csv_f(0.01), "1.000000000e-2");
        assert_eq!(csv_f(-3.0), "-3.000000000e0");
    }
}
