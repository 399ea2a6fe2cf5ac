use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use wedgefield::container::MatrixContainer;

use crate::error::{CliError, CliResult};

/// Schema version of every CSV written here; bumped on header changes.
pub const FORMAT: u32 = 1;

/// Everything a run writes.
#[derive(Debug)]
pub struct Artifacts {
    pub csv: String,
    pub metadata: Value,
    /// Extra binary containers, by file name.
    pub containers: Vec<(String, MatrixContainer)>,
}

impl Artifacts {
    pub fn new(csv: String, metadata: Value) -> Self {
        Artifacts {
            csv,
            metadata,
            containers: Vec::new(),
        }
    }

    pub fn header(&self) -> &str {
        self.csv.lines().next().unwrap_or("")
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        context: path.to_path_buf(),
        source,
    }
}

/// Writes `results.csv`, `metadata.json` and any containers into `dir`.
pub fn write_artifacts(dir: &Path, a: &Artifacts) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    let csv = dir.join("results.csv");
    std::fs::write(&csv, &a.csv).map_err(io(&csv))?;
    written.push(csv);
    let meta = dir.join("metadata.json");
    let mut text = serde_json::to_string_pretty(&a.metadata).expect("metadata serializes");
    text.push('\n');
    std::fs::write(&meta, text).map_err(io(&meta))?;
    written.push(meta);
    for (name, c) in &a.containers {
        let p = dir.join(name);
        std::fs::write(&p, c.encode()).map_err(io(&p))?;
        written.push(p);
    }
    Ok(written)
}

/// Tolerances the library and runner apply, recorded in every metadata file.
pub fn tolerance_table() -> Value {
    json!({
        "dirac_algebra_abs": 1e-14,
        "projector_abs": 1e-12,
        "propagator_unitarity_fro": 1e-9,
        "q_skew_fro": 1e-10,
        "wedge_unitarity_per_sqrt_dim": wedgefield::wedge::UNITARITY_TOLERANCE,
        "gray_zone": {
            "low": wedgefield::wedge::GrayZone::default().low,
            "high": wedgefield::wedge::GrayZone::default().high,
        },
        "born_resolution": wedgefield::dynamics::DEFAULT_RESOLUTION_TOLERANCE,
    })
}
