//! CSV time series and legacy ASCII VTK snapshots.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::cahnhilliard::{Discretization, FieldState, RunSink};
use crate::diagnostics::DiagnosticsRecord;
use crate::error::Result;

pub const TIMESERIES_HEADER: &str = "# chb-timeseries v1";

/// Writes `timeseries.csv` and optional VTK snapshots into one run directory.
pub struct DirectorySink {
    dir: PathBuf,
    csv: BufWriter<File>,
    pub records: Vec<DiagnosticsRecord>,
}

impl DirectorySink {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut csv = BufWriter::new(File::create(dir.join("timeseries.csv"))?);
        writeln!(csv, "{TIMESERIES_HEADER}")?;
        writeln!(csv, "{}", DiagnosticsRecord::COLUMNS.join(","))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            csv,
            records: Vec::new(),
        })
    }

    pub fn finish(mut self) -> Result<Vec<DiagnosticsRecord>> {
        self.csv.flush()?;
        Ok(self.records)
    }
}

impl RunSink for DirectorySink {
    fn record(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.csv, "{}", rec.csv_row())?;
        self.records.push(rec.clone());
        Ok(())
    }

    fn snapshot(&mut self, step: usize, state: &FieldState, disc: &Discretization) -> Result<()> {
        write_vtk(&self.dir.join(format!("fields_{step}.vtk")), disc, state)?;
        write_surface_vtk(&self.dir.join(format!("fields_{step}_surface.vtk")), disc, state)
    }
}

/// Bulk snapshot: triangles with phi, mu, pressure and the vertex velocity.
pub fn write_vtk(path: &Path, disc: &Discretization, state: &FieldState) -> Result<()> {
    let bulk = &disc.mesh.bulk;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "chb bulk t={:.17e}", state.t)?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", bulk.n_nodes())?;
    for p in &bulk.node_coords {
        writeln!(w, "{:.17e} {:.17e} 0", p[0], p[1])?;
    }
    writeln!(w, "CELLS {} {}", bulk.n_triangles(), 4 * bulk.n_triangles())?;
    for t in &bulk.triangles {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "CELL_TYPES {}", bulk.n_triangles())?;
    for _ in &bulk.triangles {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {}", bulk.n_nodes())?;
    for (name, field) in [("phi", &state.phi), ("mu", &state.mu), ("pressure", &state.flow.pressure)] {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for x in field.iter() {
            writeln!(w, "{x:.17e}")?;
        }
    }
    // P2 vertex nodes share the bulk numbering
    let vel = disc.space.expand(&state.flow.velocity);
    writeln!(w, "VECTORS velocity double")?;
    for v in vel.iter().take(bulk.n_nodes()) {
        writeln!(w, "{:.17e} {:.17e} 0", v[0], v[1])?;
    }
    w.flush()?;
    Ok(())
}

/// Surface snapshot: the closed boundary polyline with psi and theta.
pub fn write_surface_vtk(path: &Path, disc: &Discretization, state: &FieldState) -> Result<()> {
    let surf = &disc.mesh.surface;
    let n = surf.n_nodes();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "chb surface t={:.17e}", state.t)?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {n} double")?;
    for p in &surf.coords {
        writeln!(w, "{:.17e} {:.17e} 0", p[0], p[1])?;
    }
    writeln!(w, "CELLS {n} {}", 3 * n)?;
    for k in 0..n {
        writeln!(w, "2 {k} {}", surf.next(k))?;
    }
    writeln!(w, "CELL_TYPES {n}")?;
    for _ in 0..n {
        writeln!(w, "3")?;
    }
    writeln!(w, "POINT_DATA {n}")?;
    for (name, field) in [("psi", &state.psi), ("theta", &state.theta)] {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for x in field.iter() {
            writeln!(w, "{x:.17e}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A plain CSV table with a fixed header.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub fn fmt_f(x: f64) -> String {
    format!("{x:.17e}")
}
