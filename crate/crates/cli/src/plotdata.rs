//! Plot-data CSV writer: rows of `(series, x, y, lower, upper)` usable by
//! any plotting tool.

use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct PlotRow {
    pub series: String,
    pub x: f64,
    pub y: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl PlotRow {
    pub fn point(series: &str, x: f64, y: f64) -> Self {
        PlotRow {
            series: series.to_string(),
            x,
            y,
            lower: None,
            upper: None,
        }
    }

    pub fn with_interval(series: &str, x: f64, y: f64, lower: f64, upper: f64) -> Self {
        PlotRow {
            series: series.to_string(),
            x,
            y,
            lower: Some(lower),
            upper: Some(upper),
        }
    }
}

pub fn write_plot_csv(path: &Path, rows: &[PlotRow]) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "series,x,y,lower,upper")?;
    for row in rows {
        let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            file,
            "{},{},{},{},{}",
            row.series,
            row.x,
            row.y,
            fmt(row.lower),
            fmt(row.upper)
        )?;
    }
    file.flush()
}
