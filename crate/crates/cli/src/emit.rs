//! CSV and JSON emission.
//!
//! Floats are written with Rust's shortest round-trip formatting; infinities
//! come out as `inf`. The trajectory header is fixed:
//! `t,phi,psi,r,norm_sq,loss,i_star,batch_hit,delta_r`, extended with
//! `c_1..c_n` columns when coordinate snapshots are present. The `i_star`
//! column is 1-based.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use batchlens::dynamics::TrajectoryRecord;

pub fn emit_trajectory_csv(
    path: &Path,
    records: &[TrajectoryRecord<f64>],
    coords: Option<&[Vec<f64>]>,
) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "t,phi,psi,r,norm_sq,loss,i_star,batch_hit,delta_r")?;
    if let Some(snaps) = coords {
        let n = snaps.first().map_or(0, Vec::len);
        for i in 1..=n {
            write!(out, ",c_{i}")?;
        }
    }
    writeln!(out)?;
    for (k, rec) in records.iter().enumerate() {
        write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            rec.t,
            rec.phi,
            rec.psi,
            rec.r,
            rec.norm_sq,
            rec.loss,
            rec.i_star + 1,
            rec.batch_hit,
            rec.delta_r
        )?;
        if let Some(snaps) = coords {
            for c in &snaps[k] {
                write!(out, ",{c}")?;
            }
        }
        writeln!(out)?;
    }
    out.flush()
}

/// Loss surface samples for the landscape grid.
pub fn emit_grid_csv(path: &Path, rows: &[(f64, f64, f64)]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "w1,w2,loss")?;
    for (w1, w2, loss) in rows {
        writeln!(out, "{w1},{w2},{loss}")?;
    }
    out.flush()
}

/// Generic row dump for tabular summaries (header plus preformatted rows).
pub fn emit_rows_csv(path: &Path, header: &str, rows: &[String]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    out.flush()
}

pub fn emit_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()
}
