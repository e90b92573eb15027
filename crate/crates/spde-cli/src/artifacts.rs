//! Artifact emission: JSON for reports and configs, CSV for field dumps.
//! Floats go through Display, which prints the shortest exact representation,
//! so a repeated run writes identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use spde_core::picard::FieldEnsemble;
use spde_core::wave::WaveAtom;
use spde_core::{Result, SpdeError};

fn io_err(path: &Path, e: std::io::Error) -> SpdeError {
    SpdeError::parameter(format!("cannot write {}: {e}", path.display()))
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| SpdeError::contract(format!("report serialization failed: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// One row per grid cell per replica: replica, j, i, t, x, u.
pub fn write_fields_csv(path: &Path, ens: &FieldEnsemble) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let grid = &ens.grid;
    let mut run = || -> std::io::Result<()> {
        writeln!(w, "replica,j,i,t,x,u")?;
        for (r, field) in ens.replicas.iter().enumerate() {
            for j in 0..grid.n_t {
                let t = grid.time_of_row(j);
                for i in 0..grid.n_x {
                    writeln!(
                        w,
                        "{r},{j},{i},{t},{},{}",
                        grid.x_of_col(i),
                        field[j * grid.n_x + i]
                    )?;
                }
            }
        }
        w.flush()
    };
    run().map_err(|e| io_err(path, e))
}

/// Atom track of the wave solution: j, t, location, weight, nearest_col,
/// cell_offset. nearest_col is empty when the atom left the domain.
pub fn write_atoms_csv(
    path: &Path,
    times: &[f64],
    atoms_by_row: &[Vec<WaveAtom>],
) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut run = || -> std::io::Result<()> {
        writeln!(w, "j,t,location,weight,nearest_col,cell_offset")?;
        for (j, atoms) in atoms_by_row.iter().enumerate() {
            for a in atoms {
                let col = a
                    .nearest_col
                    .map(|c| c.to_string())
                    .unwrap_or_default();
                writeln!(
                    w,
                    "{j},{},{},{},{col},{}",
                    times[j], a.location, a.weight, a.cell_offset
                )?;
            }
        }
        w.flush()
    };
    run().map_err(|e| io_err(path, e))
}

/// Per-replica scalar contributions: replica, value.
pub fn write_replica_csv(path: &Path, values: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut run = || -> std::io::Result<()> {
        writeln!(w, "replica,value")?;
        for (r, v) in values.iter().enumerate() {
            writeln!(w, "{r},{v}")?;
        }
        w.flush()
    };
    run().map_err(|e| io_err(path, e))
}
