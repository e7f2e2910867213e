//! CSV, JSON and plot-script writers.

use crate::CliError;
use serde::Serialize;
use std::path::Path;

/// Writes `header` and `rows` as CSV. Floats use the shortest round-trip
/// representation so identical runs give identical bytes.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::Io(io),
        other => CliError::Compute(format!("csv: {other:?}")),
    }
}

pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Compute(format!("json: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Matplotlib script plotting column `y` against column `x` of `csv`.
pub fn write_plot_script(dir: &Path, name: &str, csv: &str, x: &str, ys: &[&str], logy: bool) -> Result<(), CliError> {
    let ys = ys.iter().map(|y| format!("{y:?}")).collect::<Vec<_>>().join(", ");
    let script = format!(
        r#"# Plot {csv}; run from the output directory.
import csv
import matplotlib.pyplot as plt

with open({csv:?}, newline="") as fh:
    rows = list(csv.DictReader(fh))

fig, ax = plt.subplots()
for col in [{ys}]:
    ax.plot([float(r[{x:?}]) for r in rows], [float(r[col]) for r in rows], ".", label=col)
ax.set_xlabel({x:?})
{log}ax.legend()
fig.savefig({png:?}, dpi=150)
"#,
        log = if logy { "ax.set_yscale(\"log\")\n" } else { "" },
        png = format!("{}.png", csv.trim_end_matches(".csv")),
    );
    std::fs::write(dir.join(name), script)?;
    Ok(())
}
