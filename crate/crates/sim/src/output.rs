//! CSV trajectories and TOML summaries.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use adaptml_core::sim::Trajectory;
use serde::Serialize;

/// 17 significant digits round-trip every finite `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trajectory<W: Write>(writer: W, traj: &Trajectory) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(traj.column_names())?;
    for row in &traj.rows {
        w.write_record(traj.row_values(row).into_iter().map(format_value))?;
    }
    w.flush()?;
    Ok(())
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut buf = Vec::new();
    write_trajectory(&mut buf, traj).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

pub fn write_csv_file(path: &Path, traj: &Trajectory) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let file = io::BufWriter::new(fs::File::create(path)?);
    write_trajectory(file, traj).map_err(io::Error::other)
}

pub fn to_toml<T: Serialize>(value: &T) -> String {
    toml::to_string(value).expect("report serializes")
}

pub fn write_toml_file<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, to_toml(value))
}

/// File-system friendly version of an experiment name.
pub fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c.to_ascii_lowercase() } else { '-' })
        .collect();
    if s.is_empty() {
        "experiment".into()
    } else {
        s
    }
}

pub fn csv_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{}.csv", slug(name)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            assert_eq!(format_value(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_value(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("PE convergence"), "pe-convergence");
        assert_eq!(slug(""), "experiment");
    }
}
