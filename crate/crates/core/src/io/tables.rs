//! Bench CSV files.
//!
//! `results.csv` columns, in order:
//! `load_N,height_mm,position,f_h,f_p,f_m,rot_m1..rot_m6` followed by the
//! diagnostics `total_force_N,expected_total_N,balance_error,closure_residual_m,
//! tendon_length_m,tendon_max_length_m,limit_excess_deg,settle_time_s,status`.
//! Forces are in N and rotations in rad. Failed trials leave the numeric
//! fields empty and carry the error in `status`.
//!
//! The experimental CSV uses the first twelve columns; extra columns are
//! ignored, so a `results.csv` can be fed back as experimental data.
//!
//! `sensitivity.csv` columns: `parameter,value,mean_e_h_pct,mean_e_p_pct,
//! mean_e_m_pct,delta_e_h_pct,delta_e_p_pct,delta_e_m_pct,failed_trials`.

use std::io::{Read, Write};

use crate::bench::{ExperimentalRecord, SensitivityRow, TrialResult};
use crate::error::{Error, Result};
use crate::model::{FootModel, FASCIA_MODULES};

pub const MEASURED_COLUMNS: [&str; 12] = [
    "load_N", "height_mm", "position", "f_h", "f_p", "f_m", "rot_m1", "rot_m2", "rot_m3", "rot_m4", "rot_m5",
    "rot_m6",
];

pub const DIAGNOSTIC_COLUMNS: [&str; 9] = [
    "total_force_N",
    "expected_total_N",
    "balance_error",
    "closure_residual_m",
    "tendon_length_m",
    "tendon_max_length_m",
    "limit_excess_deg",
    "settle_time_s",
    "status",
];

pub const SENSITIVITY_COLUMNS: [&str; 9] = [
    "parameter",
    "value",
    "mean_e_h_pct",
    "mean_e_p_pct",
    "mean_e_m_pct",
    "delta_e_h_pct",
    "delta_e_p_pct",
    "delta_e_m_pct",
    "failed_trials",
];

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn write_results<W: Write>(out: W, model: &FootModel, results: &[TrialResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MEASURED_COLUMNS.iter().chain(&DIAGNOSTIC_COLUMNS))?;
    for r in results {
        let key = r.config.key();
        let mut row = vec![
            num(key.load_dn as f64 / 10.0),
            num(key.height_dmm as f64 / 10.0),
            r.config.position.to_string(),
        ];
        row.extend(r.forces.iter().map(|f| num(*f)));
        row.extend(r.rotations.iter().map(|a| num(*a)));
        row.extend([
            num(r.total_contact_force),
            num(r.expected_total),
            num(r.force_balance_error()),
            num(r.closure_residual),
            num(r.tendon_length),
            num(r.tendon_max_length),
            if r.ok() { num(r.max_limit_excess_deg(model)) } else { String::new() },
            num(r.settle_time),
            r.failure.clone().unwrap_or_else(|| "ok".into()),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn results_to_string(model: &FootModel, results: &[TrialResult]) -> Result<String> {
    let mut buf = Vec::new();
    write_results(&mut buf, model, results)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

fn parse_error(line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        column,
        message: message.into(),
    }
}

/// Reads measured forces and rotations. Positions may be written `3` or `p3`.
pub fn read_experimental<R: Read>(input: R) -> Result<Vec<ExperimentalRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    let mut index = [0usize; 12];
    for (slot, name) in index.iter_mut().zip(MEASURED_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_error(1, 0, format!("missing column `{name}`")))?;
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |k: usize| -> Result<f64> {
            let i = index[k];
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_error(line, i + 1, format!("`{}`: not a number: {raw:?}", MEASURED_COLUMNS[k])))
        };
        let raw_pos = record.get(index[2]).unwrap_or("");
        let position = raw_pos
            .trim_start_matches(['p', 'P'])
            .parse::<usize>()
            .ok()
            .filter(|p| (1..=FASCIA_MODULES).contains(p))
            .ok_or_else(|| parse_error(line, index[2] + 1, format!("invalid position {raw_pos:?}")))?;
        let mut rotations = Vec::with_capacity(FASCIA_MODULES);
        for k in 6..12 {
            rotations.push(field(k)?);
        }
        out.push(ExperimentalRecord {
            load: field(0)?,
            obstacle_height: field(1)? * 1e-3,
            position,
            forces: [field(3)?, field(4)?, field(5)?],
            rotations,
        });
    }
    Ok(out)
}

pub fn write_sensitivity<W: Write>(out: W, rows: &[SensitivityRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SENSITIVITY_COLUMNS)?;
    for r in rows {
        let mut row = vec![r.parameter.label().to_string(), num(r.value)];
        row.extend(r.mean_pct.iter().map(|v| opt(*v)));
        row.extend(r.delta_pct.iter().map(|v| opt(*v)));
        row.push(r.failed_trials.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
