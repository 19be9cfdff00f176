//! Artifact files, written to a temporary file in the target directory and
//! renamed into place.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ValueField};
use crate::simulate::PathBundle;

/// Which time levels of a field go into the value CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelSelection {
    All,
    /// t = 0 only.
    Initial,
    /// Every k-th level counted from t = 0, plus the terminal level.
    Stride(usize),
}

impl LevelSelection {
    pub fn levels(self, count: usize) -> Vec<usize> {
        let last = count - 1;
        match self {
            LevelSelection::All => (0..count).collect(),
            LevelSelection::Initial => vec![0],
            LevelSelection::Stride(k) => {
                let mut v: Vec<usize> = (0..count).step_by(k.max(1)).collect();
                if v.last() != Some(&last) {
                    v.push(last);
                }
                v
            }
        }
    }
}

/// Writes through `fill` into a temporary sibling of `path`, then renames
/// it over `path`.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let tmp = NamedTempFile::new_in(&dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    log::debug!("wrote {}", path.display());
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_atomic(path, |w| writeln!(w, "{text}"))
}

/// Value CSV with columns `t,x_1..x_d,regime,value`; regimes are written
/// one-based.
pub fn write_value_csv(path: &Path, field: &ValueField, levels: LevelSelection) -> Result<()> {
    let grid = field.grid();
    let d = grid.dim();
    let m = field.regimes();
    write_atomic(path, |w| {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=d).map(|k| format!("x_{k}")))
            .chain(["regime".to_string(), "value".to_string()])
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for level in levels.levels(field.levels()) {
            let t = grid.time(level);
            for node in 0..grid.node_count() {
                let mut prefix = format!("{t}");
                for c in grid.coordinates(node) {
                    prefix.push(',');
                    prefix.push_str(&c.to_string());
                }
                for i in 0..m {
                    writeln!(w, "{prefix},{},{}", i + 1, field.get(level, node, i))?;
                }
            }
        }
        Ok(())
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FieldMetadata<'a> {
    pub model: &'a str,
    pub model_fingerprint: &'a str,
    pub penalty: u32,
    pub regimes: usize,
    pub grid: &'a GridSpec,
    pub time_steps: usize,
    pub dt: f64,
    pub horizon: f64,
    pub levels_written: Vec<usize>,
    pub columns: Vec<String>,
}

/// Sidecar record identifying the grid, penalty level and model of a value
/// CSV.
pub fn write_field_metadata(path: &Path, field: &ValueField, levels: LevelSelection) -> Result<()> {
    let grid = field.grid();
    let columns = std::iter::once("t".to_string())
        .chain((1..=grid.dim()).map(|k| format!("x_{k}")))
        .chain(["regime".to_string(), "value".to_string()])
        .collect();
    let meta = FieldMetadata {
        model: field.model_name(),
        model_fingerprint: field.model_fingerprint(),
        penalty: field.penalty().get(),
        regimes: field.regimes(),
        grid: grid.spec(),
        time_steps: grid.time_steps(),
        dt: grid.dt(),
        horizon: grid.horizon(),
        levels_written: levels.levels(field.levels()),
        columns,
    };
    write_json(path, &meta)
}

/// Path CSV with columns `path_id,t,x_1..x_d,regime,event`. A sample row
/// has an empty event; each switch adds a row `switch:<from>-><to>` at the
/// switch time and state. Regimes are one-based.
pub fn write_paths_csv(path: &Path, bundle: &PathBundle, dim: usize) -> Result<()> {
    write_atomic(path, |w| {
        let coords: Vec<String> = (1..=dim).map(|k| format!("x_{k}")).collect();
        writeln!(w, "path_id,t,{},regime,event", coords.join(","))?;
        for (id, p) in bundle.paths.iter().enumerate() {
            let mut switches = p.switches.iter().peekable();
            for s in &p.samples {
                let xs: Vec<String> = s.x.iter().map(f64::to_string).collect();
                let xs = xs.join(",");
                while let Some(e) = switches.next_if(|e| e.t <= s.t) {
                    writeln!(w, "{id},{},{xs},{},switch:{}->{}", e.t, e.to + 1, e.from + 1, e.to + 1)?;
                }
                writeln!(w, "{id},{},{xs},{},", s.t, s.regime + 1)?;
            }
            if p.escaped {
                writeln!(w, "{id},,{},,escaped", vec![""; dim].join(","))?;
            }
        }
        Ok(())
    })
}
