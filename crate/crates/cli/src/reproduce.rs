//! End-to-end run of every bundled scenario: controllability reports,
//! single-gain region charts, the charts with a fixed helper gain behind
//! (plus their region deltas), and the case-study simulations.

use std::path::Path;

use serde_json::json;

use lcc_core::region_scanner::{region_delta, scan, StabilityChart};
use lcc_core::string_stability::string_stability_verdict;
use lcc_core::OmegaGrid;

/// Low end of the DC-excluded band. Gamma(0) = 1 for every topology, so the
/// supremum over the full grid reads ~1.0 for any string-stable setup; above
/// this cutoff the peak reflects actual damping.
const AC_OMEGA_MIN: f64 = 0.1;

use crate::commands::{
    assemble_scan_spec, ctrb_report_value, default_system, follower_peak_deviation,
    simulate_from_config, write_chart, write_json, write_trajectory,
};
use crate::config::{parse_config, ScenarioConfig};
use crate::CliError;

pub const BUNDLED: &[(&str, &str)] = &[
    ("fd-n1", include_str!("../configs/fd-n1.json")),
    ("fd-n2", include_str!("../configs/fd-n2.json")),
    ("fd-n3", include_str!("../configs/fd-n3.json")),
    ("fd-n4", include_str!("../configs/fd-n4.json")),
    ("fd-n5", include_str!("../configs/fd-n5.json")),
    ("general-n2-m2", include_str!("../configs/general-n2-m2.json")),
    ("chart-behind-1", include_str!("../configs/chart-behind-1.json")),
    ("chart-behind-2", include_str!("../configs/chart-behind-2.json")),
    ("chart-ahead-1", include_str!("../configs/chart-ahead-1.json")),
    ("chart-ahead-2", include_str!("../configs/chart-ahead-2.json")),
    (
        "chart-ahead-1-with-behind-1",
        include_str!("../configs/chart-ahead-1-with-behind-1.json"),
    ),
    (
        "chart-ahead-1-with-behind-2",
        include_str!("../configs/chart-ahead-1-with-behind-2.json"),
    ),
    ("sim-hdv", include_str!("../configs/sim-hdv.json")),
    ("sim-case-a", include_str!("../configs/sim-case-a.json")),
    ("sim-case-b", include_str!("../configs/sim-case-b.json")),
    ("sim-case-c", include_str!("../configs/sim-case-c.json")),
];

pub fn bundled(name: &str) -> Result<ScenarioConfig, CliError> {
    let text = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| CliError::Config(format!("no bundled scenario named {name}")))?;
    parse_config(text)
}

fn run_chart(name: &str) -> Result<StabilityChart, CliError> {
    let cfg = bundled(name)?;
    scan(&assemble_scan_spec(&cfg)?).map_err(|e| CliError::Config(e.to_string()))
}

fn delta_value(baseline: &StabilityChart, assisted: &StabilityChart) -> Result<serde_json::Value, CliError> {
    let d = region_delta(baseline, assisted).map_err(|e| CliError::Analysis(e.to_string()))?;
    Ok(json!({
        "newly_stable_count": d.newly_stable.len(),
        "newly_unstable_count": d.newly_unstable.len(),
        "newly_stable": d.newly_stable,
        "newly_unstable": d.newly_unstable,
    }))
}

pub fn run_reproduce(out: &Path) -> Result<(), CliError> {
    let dir = out.join("controllability");
    for name in ["fd-n1", "fd-n2", "fd-n3", "fd-n4", "fd-n5", "general-n2-m2"] {
        let report = ctrb_report_value(&bundled(name)?)?;
        write_json(&dir.join(format!("{name}.json")), &report)?;
        println!(
            "controllability/{name}.json: verdict {}",
            report["verdict"].as_str().unwrap_or("?")
        );
    }

    let dir = out.join("charts-single-gain");
    let mut ahead_1 = None;
    for name in ["behind-1", "behind-2", "ahead-1", "ahead-2"] {
        let chart = run_chart(&format!("chart-{name}"))?;
        write_chart(&chart, &dir, name)?;
        println!(
            "charts-single-gain/{name}: {} string-stable cells",
            chart.counts().string_stable
        );
        if name == "ahead-1" {
            ahead_1 = Some(chart);
        }
    }
    // Same spec as charts-single-gain/ahead-1; reused as the comparison
    // baseline rather than scanned twice.
    let baseline = ahead_1.expect("ahead-1 chart is in the loop above");

    let dir = out.join("charts-behind-fixed");
    write_chart(&baseline, &dir, "baseline")?;
    for helper in ["behind-1", "behind-2"] {
        let assisted = run_chart(&format!("chart-ahead-1-with-{helper}"))?;
        write_chart(&assisted, &dir, &format!("with-{helper}"))?;
        let delta = delta_value(&baseline, &assisted)?;
        write_json(&dir.join(format!("delta-{helper}.json")), &delta)?;
        println!(
            "charts-behind-fixed/with-{helper}: {} newly stable, {} newly unstable",
            delta["newly_stable_count"], delta["newly_unstable_count"]
        );
    }

    let dir = out.join("case-study");
    let (eq, gains) = default_system();
    let mut summary = Vec::new();
    for name in ["hdv", "case-a", "case-b", "case-c"] {
        let cfg = bundled(&format!("sim-{name}"))?;
        let result = simulate_from_config(&cfg)?;
        write_trajectory(&result, &dir, name)?;
        let peak = follower_peak_deviation(&result, eq.v_star());
        let topology = cfg.topology.expect("bundled sims set a topology");
        let verdict = string_stability_verdict(
            &topology,
            &gains,
            &cfg.feedback,
            &cfg.omega_grid.unwrap_or_default(),
        )
        .map_err(|e| CliError::Analysis(e.to_string()))?;
        let full_grid = cfg.omega_grid.unwrap_or_default();
        let ac_grid = OmegaGrid::new(AC_OMEGA_MIN, full_grid.omega_max(), full_grid.points())
            .map_err(|e| CliError::Analysis(e.to_string()))?;
        let ac = string_stability_verdict(&topology, &gains, &cfg.feedback, &ac_grid)
            .map_err(|e| CliError::Analysis(e.to_string()))?;
        println!(
            "case-study/{name}: follower peak deviation {peak:.4} m/s, band |Gamma| peak {:.4}",
            ac.peak_magnitude
        );
        summary.push(json!({
            "scenario": name,
            "follower_peak_deviation": peak,
            "string_stable": verdict.string_stable,
            "peak_magnitude": verdict.peak_magnitude,
            "peak_omega": verdict.peak_omega,
            "ac_peak_magnitude": ac.peak_magnitude,
            "ac_peak_omega": ac.peak_omega,
        }));
    }
    write_json(&dir.join("summary.json"), &summary)
}
