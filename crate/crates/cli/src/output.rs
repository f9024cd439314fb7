use std::fs;
use std::io::Write;
use std::path::Path;

use ecoflux_core::export::{Manifest, Table};

use crate::args::Format;
use crate::{invalid, Classify, CliResult, EXIT_IO};

/// A named result of a command.
pub enum Artifact {
    /// Written as `<name>.csv` or `<name>.json` depending on `--format`.
    Table(String, Table),
    /// Always JSON, written as `<name>.json`.
    Json(String, String),
}

impl Artifact {
    fn render(&self, format: Format) -> (String, String) {
        match self {
            Artifact::Table(name, t) => match format {
                Format::Csv => (format!("{name}.csv"), t.to_csv()),
                Format::Json => (format!("{name}.json"), t.to_json()),
            },
            Artifact::Json(name, s) => (format!("{name}.json"), s.clone()),
        }
    }
}

/// Write artifacts into `out`, or print a single artifact to standard output.
///
/// Returns `(file name, contents)` for every written file, in order.
pub fn emit(
    artifacts: &[Artifact],
    out: Option<&Path>,
    format: Format,
) -> CliResult<Vec<(String, String)>> {
    let rendered: Vec<(String, String)> = artifacts.iter().map(|a| a.render(format)).collect();
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)
                .map_err(|e| anyhow::anyhow!("cannot create {}: {e}", dir.display()))
                .or_exit(EXIT_IO)?;
            for (name, body) in &rendered {
                write_file(&dir.join(name), body)?;
            }
            Ok(rendered)
        }
        None => {
            if rendered.len() > 1 {
                let names: Vec<&str> = rendered.iter().map(|(n, _)| n.as_str()).collect();
                return invalid(format!(
                    "this run produces several files ({}); pass --out DIR",
                    names.join(", ")
                ));
            }
            let mut stdout = std::io::stdout().lock();
            for (_, body) in &rendered {
                match stdout
                    .write_all(body.as_bytes())
                    .and_then(|()| stdout.flush())
                {
                    Ok(()) => {}
                    // A closed reader (e.g. `| head`) is not an error.
                    Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => break,
                    Err(e) => {
                        return Err(anyhow::anyhow!("writing standard output: {e}"))
                            .or_exit(EXIT_IO)
                    }
                }
            }
            Ok(Vec::new())
        }
    }
}

pub fn write_file(path: &Path, body: &str) -> CliResult<()> {
    fs::write(path, body)
        .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display()))
        .or_exit(EXIT_IO)
}

/// Write `manifest.json` listing `files` with checksums.
pub fn write_manifest(
    dir: &Path,
    mut manifest: Manifest,
    files: &[(String, String)],
) -> CliResult<()> {
    for (name, body) in files {
        manifest.add(name, body.as_bytes());
    }
    write_file(
        &dir.join("manifest.json"),
        &ecoflux_core::export::to_json(&manifest),
    )
}
