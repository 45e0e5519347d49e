use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use aoii::grid::TOOL_VERSION;

use crate::error::CliError;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))
}

/// CSV writer whose file starts with `# tool_version` and `# config_hash`
/// comment lines, followed by `header`.
pub fn csv_file(path: &Path, config_hash: &str, header: &[&str]) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "# tool_version: {TOOL_VERSION}")?;
    writeln!(file, "# config_hash: {config_hash}")?;
    let mut writer = csv::Writer::from_writer(file);
    writer.write_record(header)?;
    Ok(writer)
}

pub fn write_text(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    std::fs::write(path, text)?;
    Ok(path.to_path_buf())
}

pub fn num(x: f64) -> String {
    format!("{x}")
}
