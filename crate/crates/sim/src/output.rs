//! Run log serialization: full CSV log, plot-data CSVs and a flat summary.
//!
//! `run.csv` columns, in order:
//!
//! ```text
//! t_s,
//! x_m, y_m, z_m, vx_mps, vy_mps, vz_mps,
//! roll_rad, pitch_rad, yaw_rad, p_radps, q_radps, r_radps,
//! x_des_m, y_des_m, z_des_m,
//! f1_cmd_n, f2_cmd_n, f3_cmd_n, f4_cmd_n,
//! theta1_cmd_rad, theta2_cmd_rad, theta1_rad, theta2_rad,
//! tau_x_des_nm, tau_y_des_nm, tau_z_des_nm, f_x_des_n, f_y_des_n, f_z_des_n,
//! tau_x_nm, tau_y_nm, tau_z_nm, f_x_n, f_y_n, f_z_n,
//! k_tilde_1, k_tilde_2, k_tilde_3, gamma_1, gamma_2, gamma_3, v_1, v_2, v_3,
//! com_est_x_m, com_est_y_m, com_est_z_m,
//! sat_thrust, sat_servo1, sat_servo2, estimating
//! ```
//!
//! Reals use 9 significant digits; flags are `0`/`1`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::runner::{LogRecord, RunLog};

pub const RUN_CSV: &str = "run.csv";
pub const ESTIMATION_CSV: &str = "plot_estimation.csv";
pub const TRANSPORT_CSV: &str = "plot_transport.csv";
pub const SUMMARY: &str = "summary.txt";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("log is empty; nothing to write")]
    EmptyLog,
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

pub fn fmt_real(x: f64) -> String {
    format!("{x:.8e}")
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

const RUN_HEADER: &[&str] = &[
    "t_s",
    "x_m",
    "y_m",
    "z_m",
    "vx_mps",
    "vy_mps",
    "vz_mps",
    "roll_rad",
    "pitch_rad",
    "yaw_rad",
    "p_radps",
    "q_radps",
    "r_radps",
    "x_des_m",
    "y_des_m",
    "z_des_m",
    "f1_cmd_n",
    "f2_cmd_n",
    "f3_cmd_n",
    "f4_cmd_n",
    "theta1_cmd_rad",
    "theta2_cmd_rad",
    "theta1_rad",
    "theta2_rad",
    "tau_x_des_nm",
    "tau_y_des_nm",
    "tau_z_des_nm",
    "f_x_des_n",
    "f_y_des_n",
    "f_z_des_n",
    "tau_x_nm",
    "tau_y_nm",
    "tau_z_nm",
    "f_x_n",
    "f_y_n",
    "f_z_n",
    "k_tilde_1",
    "k_tilde_2",
    "k_tilde_3",
    "gamma_1",
    "gamma_2",
    "gamma_3",
    "v_1",
    "v_2",
    "v_3",
    "com_est_x_m",
    "com_est_y_m",
    "com_est_z_m",
    "sat_thrust",
    "sat_servo1",
    "sat_servo2",
    "estimating",
];

fn run_row(r: &LogRecord) -> Vec<String> {
    let reals = std::iter::once(r.t)
        .chain(r.position.iter().copied())
        .chain(r.velocity.iter().copied())
        .chain(r.euler.iter().copied())
        .chain(r.body_rates.iter().copied())
        .chain(r.position_des.iter().copied())
        .chain(r.thrust_cmd.iter().copied())
        .chain(r.servo_cmd.iter().copied())
        .chain(r.servo.iter().copied())
        .chain(r.torque_des.iter().copied())
        .chain(r.force_des.iter().copied())
        .chain(r.torque_real.iter().copied())
        .chain(r.force_real.iter().copied())
        .chain(r.k_tilde.iter().copied())
        .chain(r.gamma.iter().copied())
        .chain(r.v.iter().copied())
        .chain(r.com_est.iter().copied());
    let mut row: Vec<String> = reals.map(fmt_real).collect();
    row.push(flag(r.saturation.thrust));
    row.push(flag(r.saturation.servo[0]));
    row.push(flag(r.saturation.servo[1]));
    row.push(flag(r.estimating));
    row
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), OutputError> {
    let err = |source| OutputError::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(io(path))
}

/// Writes the full log as CSV.
pub fn write_run_csv(log: &RunLog, path: &Path) -> Result<(), OutputError> {
    write_csv(path, RUN_HEADER, log.records.iter().map(run_row))
}

/// Estimator internals against the true center of mass.
pub fn write_estimation_csv(log: &RunLog, path: &Path) -> Result<(), OutputError> {
    let header = [
        "t_s",
        "com_est_x_m",
        "com_est_y_m",
        "com_est_z_m",
        "com_true_x_m",
        "com_true_y_m",
        "com_true_z_m",
        "gamma_1",
        "gamma_2",
        "gamma_3",
        "v_1",
        "v_2",
        "v_3",
        "k_tilde_1",
        "k_tilde_2",
        "k_tilde_3",
        "estimating",
    ];
    let rows = log.records.iter().map(|r| {
        let mut row: Vec<String> = std::iter::once(r.t)
            .chain(r.com_est.iter().copied())
            .chain(log.com_true.iter().copied())
            .chain(r.gamma.iter().copied())
            .chain(r.v.iter().copied())
            .chain(r.k_tilde.iter().copied())
            .map(fmt_real)
            .collect();
        row.push(flag(r.estimating));
        row
    });
    write_csv(path, &header, rows)
}

/// Position tracking, attitude and servo traces.
pub fn write_transport_csv(log: &RunLog, path: &Path) -> Result<(), OutputError> {
    let header = [
        "t_s",
        "x_m",
        "y_m",
        "z_m",
        "x_des_m",
        "y_des_m",
        "z_des_m",
        "roll_rad",
        "pitch_rad",
        "theta1_cmd_rad",
        "theta2_cmd_rad",
        "theta1_rad",
        "theta2_rad",
        "sat_servo1",
        "sat_servo2",
    ];
    let rows = log.records.iter().map(|r| {
        let mut row: Vec<String> = std::iter::once(r.t)
            .chain(r.position.iter().copied())
            .chain(r.position_des.iter().copied())
            .chain([r.euler[0], r.euler[1]])
            .chain(r.servo_cmd.iter().copied())
            .chain(r.servo.iter().copied())
            .map(fmt_real)
            .collect();
        row.push(flag(r.saturation.servo[0]));
        row.push(flag(r.saturation.servo[1]));
        row
    });
    write_csv(path, &header, rows)
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_else(|| "none".into())
}

fn vec3(v: &nalgebra::Vector3<f64>) -> String {
    format!("[{}, {}, {}]", fmt_real(v[0]), fmt_real(v[1]), fmt_real(v[2]))
}

/// Flat `key = value` run summary.
pub fn summary(log: &RunLog, scenario: &str, seed: u64) -> String {
    let mut lines = vec![
        ("scenario", scenario.to_string()),
        ("seed", seed.to_string()),
        ("termination_cause", log.termination.label().to_string()),
        ("termination_detail", log.termination.detail()),
        ("termination_time_s", fmt_real(log.end_time)),
        ("convergence_time_s", opt(log.convergence_time)),
        ("freeze_time_s", opt(log.freeze_time)),
        ("first_servo_saturation_s", opt(log.first_servo_saturation)),
        ("servo_saturation_ticks", log.servo_saturation_ticks.to_string()),
        ("max_abs_roll_rad", fmt_real(log.max_abs_roll)),
        ("max_abs_pitch_rad", fmt_real(log.max_abs_pitch)),
        ("rms_position_error_m", fmt_real(log.rms_position_error)),
        ("com_true_m", vec3(&log.com_true)),
        ("com_initial_m", vec3(&log.com_initial)),
        ("final_com_est_m", vec3(&log.final_com_est())),
        ("final_com_error_m", vec3(&(log.com_true - log.final_com_est()))),
    ];
    if let Some(tr) = &log.transport {
        lines.push(("transport_max_abs_roll_rad", fmt_real(tr.max_abs_roll)));
        lines.push(("transport_max_abs_pitch_rad", fmt_real(tr.max_abs_pitch)));
        lines.push(("transport_rms_tracking_error_m", fmt_real(tr.rms_tracking_error)));
    }
    lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

/// Writes every output file into `out_dir`, creating it if needed.
pub fn emit_outputs(
    log: &RunLog,
    out_dir: &Path,
    scenario: &str,
    seed: u64,
    config_toml: &str,
) -> Result<(), OutputError> {
    if log.records.is_empty() {
        return Err(OutputError::EmptyLog);
    }
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    write_run_csv(log, &out_dir.join(RUN_CSV))?;
    write_estimation_csv(log, &out_dir.join(ESTIMATION_CSV))?;
    write_transport_csv(log, &out_dir.join(TRANSPORT_CSV))?;
    let p = out_dir.join(SUMMARY);
    fs::File::create(&p).and_then(|mut f| f.write_all(summary(log, scenario, seed).as_bytes())).map_err(io(&p))?;
    let p = out_dir.join("config.toml");
    fs::write(&p, config_toml).map_err(io(&p))
}
