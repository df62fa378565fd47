//! Files written by the subcommands. Floats use 17 significant digits.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use volsurf::diagnostics::{fmt_f64, write_key_values, DEFAULT_SKIP_FRACTION};
use volsurf::model::DEFAULT_DISSIPATION_FLOOR;
use volsurf::monotone::{COMPARISON_SLACK, SANDWICH_SLACK};
use volsurf::{GridGeometry, State};

use crate::config::{ManifestInfo, RunConfig};
use crate::error::CliError;

pub fn ensure_dir(stage: &'static str, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { stage, path: dir.to_path_buf(), source })
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_file<F>(stage: &'static str, path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let io_err = |source| CliError::Io { stage, path: path.to_path_buf(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    body(&mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

pub fn write_report(stage: &'static str, path: &Path, pairs: &[(&str, String)]) -> Result<(), CliError> {
    write_file(stage, path, |out| write_key_values(pairs, out))
}

/// Echo of the effective configuration plus tolerances, readable as a config.
pub fn write_manifest(path: &Path, cfg: &RunConfig, command: &str) -> Result<(), CliError> {
    let mut echo = cfg.clone();
    echo.manifest = Some(ManifestInfo {
        command: command.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        dissipation_floor: DEFAULT_DISSIPATION_FLOOR,
        rate_fit_skip_fraction: DEFAULT_SKIP_FRACTION,
        sandwich_slack: SANDWICH_SLACK,
        comparison_slack: COMPARISON_SLACK,
    });
    write_file("manifest", path, |out| writeln!(out, "{}", echo.to_json()))
}

pub const STATE_HEADER: &str = "field,cell,x,y,value";

pub fn write_state_csv<W: Write>(state: &State, geom: &GridGeometry, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "{STATE_HEADER}")?;
    for (field, cells, values) in [("u", &geom.omega_cells, &state.u), ("v", &geom.gamma_cells, &state.v)] {
        for (i, (c, x)) in cells.iter().zip(values.iter()).enumerate() {
            writeln!(out, "{field},{i},{},{},{}", fmt_f64(c.center[0]), fmt_f64(c.center[1]), fmt_f64(*x))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_csv_has_header_and_one_row_per_cell() {
        let g = GridGeometry::build_interval(3, 1.0).unwrap();
        let s = State::new(&g, vec![1.0, 2.0, 0.1], vec![0.5, 0.25], 0.0).unwrap();
        let mut buf = Vec::new();
        write_state_csv(&s, &g, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], STATE_HEADER);
        assert_eq!(lines.len(), 1 + 3 + 2);
        let value: f64 = lines[3].rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(value.to_bits(), 0.1f64.to_bits());
    }
}
