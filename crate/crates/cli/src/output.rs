use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;
use zoo_sdf::panel::write_dated_csv;
use zoo_sdf::report::to_json;

use crate::CliError;

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Core(zoo_sdf::Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic<F>(path: &Path, write: F) -> Result<(), CliError>
where
    F: FnOnce(&Path) -> zoo_sdf::Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::Builder::new()
        .prefix(".zoo-sdf-")
        .tempfile_in(dir)
        .map_err(|e| io_error(path, e))?;
    write(tmp.path())?;
    tmp.persist(path).map_err(|e| io_error(path, e.error))?;
    Ok(())
}

/// Pretty JSON to `out`, or to stdout without a path.
pub fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let text = to_json(value)?;
    match out {
        Some(path) => write_atomic(path, |tmp| {
            std::fs::write(tmp, &text).map_err(|source| zoo_sdf::Error::Io {
                path: tmp.to_path_buf(),
                source,
            })
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn write_series(path: &Path, dates: &[String], name: &str, values: &[f64]) -> Result<(), CliError> {
    let m = DMatrix::from_column_slice(values.len(), 1, values);
    write_atomic(path, |tmp| write_dated_csv(tmp, dates, &[name.to_string()], &m))
}

pub fn write_columns(path: &Path, dates: &[String], names: &[&str], columns: &[&[f64]]) -> Result<(), CliError> {
    let m = DMatrix::from_fn(dates.len(), columns.len(), |r, c| columns[c][r]);
    let names: Vec<String> = names.iter().map(|s| s.to_string()).collect();
    write_atomic(path, |tmp| write_dated_csv(tmp, dates, &names, &m))
}
