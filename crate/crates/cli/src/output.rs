use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use cqed_pairs::mcwf::SEEDING_SCHEME;

use crate::config::{Resolved, RunConfig};
use crate::CliError;

/// Self-description embedded in every output file.
#[derive(Clone, Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub preset: Option<String>,
    pub seeding: &'static str,
    pub window: String,
    /// The only field that differs between repeated runs.
    pub generated_unix: u64,
    pub config: RunConfig,
}

impl Provenance {
    pub fn new(command: &str, run: &Resolved, window: &str) -> Provenance {
        Provenance {
            tool: "cqed-pairs",
            version: cqed_pairs::VERSION,
            command: command.to_string(),
            preset: run.preset.clone(),
            seeding: SEEDING_SCHEME,
            window: window.to_string(),
            generated_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            config: run.config.clone(),
        }
    }

    fn comment_block(&self) -> Result<String, CliError> {
        let config = serde_json::to_string(&self.config).map_err(CliError::Json)?;
        Ok(format!(
            "# {} {} {}\n# preset: {}\n# seeding: {}\n# window: {}\n# generated_unix: {}\n# config: {}\n",
            self.tool,
            self.version,
            self.command,
            self.preset.as_deref().unwrap_or("none (explicit params)"),
            self.seeding,
            self.window,
            self.generated_unix,
            config,
        ))
    }
}

pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    Ok(dir.join(name))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// Writes a provenance comment block, a header row and the data rows.
pub fn write_csv(
    path: &Path,
    prov: &Provenance,
    header: &[String],
    rows: &[Vec<String>],
) -> Result<(), CliError> {
    let mut file = create(path)?;
    let io = |e| CliError::Io(path.to_path_buf(), e);
    file.write_all(prov.comment_block()?.as_bytes()).map_err(io)?;
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| CliError::Io(path.to_path_buf(), e.into());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(io)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut file = create(path)?;
    serde_json::to_writer_pretty(&mut file, value).map_err(CliError::Json)?;
    writeln!(file).and_then(|_| file.flush()).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

/// One JSON document per line.
pub fn write_ndjson<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> Result<(), CliError> {
    let mut file = create(path)?;
    for item in items {
        serde_json::to_writer(&mut file, &item).map_err(CliError::Json)?;
        writeln!(file).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    }
    file.flush().map_err(|e| CliError::Io(path.to_path_buf(), e))
}

pub fn fmt(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comment_block_lines_all_start_with_hash() {
        let run = RunConfig::default().resolve().unwrap();
        let block = Provenance::new("coherent", &run, "exit").comment_block().unwrap();
        assert!(block.lines().all(|l| l.starts_with("# ")));
        assert_eq!(block.lines().filter(|l| l.starts_with("# generated_unix:")).count(), 1);
        assert!(block.contains(cqed_pairs::VERSION));
    }
}
