//! Per-sample CSV telemetry and its column manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::simulate::Trajectory;
use crate::{Error, Result};

/// Column names, in file order.
pub const COLUMNS: [&str; 16] = [
    "t",
    "phi_gamma",
    "phi_delta",
    "omega",
    "theta",
    "theta_c",
    "i_gamma",
    "i_delta",
    "u_gamma",
    "u_delta",
    "i_bar_gamma",
    "i_bar_delta",
    "i_tilde_gamma",
    "i_tilde_delta",
    "theta_hat",
    "err_deg",
];

const UNITS: [(&str, &str); 16] = [
    ("s", "sample time"),
    ("Wb", "current-produced flux, gamma axis"),
    ("Wb", "current-produced flux, delta axis"),
    ("rad/s", "electrical rotor speed"),
    ("rad", "electrical rotor angle"),
    ("rad", "controller angle"),
    ("A", "measured current, gamma axis"),
    ("A", "measured current, delta axis"),
    ("V", "applied voltage, gamma axis"),
    ("V", "applied voltage, delta axis"),
    ("A", "one-period mean current, gamma axis"),
    ("A", "one-period mean current, delta axis"),
    ("A", "ripple envelope, gamma axis"),
    ("A", "ripple envelope, delta axis"),
    ("rad", "estimated electrical angle"),
    ("deg", "wrapped estimation error, electrical"),
];

fn row_values(traj: &Trajectory, k: usize) -> [f64; 16] {
    let s = &traj.states[k];
    let (i, u) = (traj.i_gd[k], traj.u_gd[k]);
    let nan = f64::NAN;
    let e = traj.estimates.get(k).copied().flatten();
    [
        traj.t[k],
        s.phi_gd.x,
        s.phi_gd.y,
        s.omega,
        s.theta,
        s.theta_c,
        i.x,
        i.y,
        u.x,
        u.y,
        e.map_or(nan, |e| e.i_bar.x),
        e.map_or(nan, |e| e.i_bar.y),
        e.map_or(nan, |e| e.i_tilde.x),
        e.map_or(nan, |e| e.i_tilde.y),
        e.map_or(nan, |e| e.theta_hat),
        e.map_or(nan, |e| e.error.to_degrees()),
    ]
}

/// Write the header and one row per sample: 9 significant digits, comma
/// separated, LF line endings, `NaN` where no estimate exists.
pub fn write_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(COLUMNS).map_err(csv_error)?;
    let mut fields: Vec<String> = Vec::with_capacity(COLUMNS.len());
    for k in 0..traj.len() {
        fields.clear();
        fields.extend(row_values(traj, k).iter().map(|v| format!("{v:.8e}")));
        w.write_record(&fields).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(traj: &Trajectory, path: &Path) -> Result<()> {
    write_csv(traj, BufWriter::new(File::create(path)?))
}

/// Column manifest: one `[[column]]` table per column with unit and meaning.
pub fn emit_manifest(path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for (name, (unit, what)) in COLUMNS.iter().zip(UNITS) {
        writeln!(f, "[[column]]\nname = \"{name}\"\nunit = \"{unit}\"\ndescription = \"{what}\"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Parsed CSV: header plus numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header = r
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let row = rec
            .iter()
            .map(|s| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: k + 2,
                    message: format!("{s:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}
