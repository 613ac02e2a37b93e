//! Output files: atomic writes, CSV tables, control and mask formats.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{BoundaryControl, SpatialGrid, TimeGrid};
use crate::mushy::MushyMask;

/// Writes into a temporary file next to `path` and renames it into place,
/// so readers never observe a partial file.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut out = BufWriter::new(tmp.as_file());
        fill(&mut out)?;
        out.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |out| {
        serde_json::to_writer_pretty(&mut *out, value).map_err(|e| Error::Parse(e.to_string()))?;
        writeln!(out).map_err(|e| Error::io(path, e))
    })
}

/// CSV with a header row; every row must have the header's width.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    write_atomic(path, |out| {
        let io = |e| Error::io(path, e);
        writeln!(out, "{}", header.join(",")).map_err(io)?;
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            writeln!(out, "{}", row.join(",")).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

/// Output directory of one run.
#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

/// Control table: `step,time,face,side,value` with `time = t_{n+1}`.
pub fn write_control_csv(path: &Path, grid: &SpatialGrid, u: &BoundaryControl) -> Result<()> {
    let faces = grid.boundary_faces();
    let times = u.times();
    let mut rows = Vec::with_capacity(u.values().len());
    for n in 0..times.steps() {
        for (f, (face, v)) in faces.iter().zip(u.step(n)).enumerate() {
            let side = serde_json::to_value(face.side).expect("side serializes");
            rows.push(vec![
                n.to_string(),
                format!("{:e}", times.time(n + 1)),
                f.to_string(),
                side.as_str().unwrap_or_default().to_string(),
                format!("{v:e}"),
            ]);
        }
    }
    write_csv(path, &["step", "time", "face", "side", "value"], &rows)
}

pub fn read_control_csv(path: &Path, grid: &SpatialGrid, times: TimeGrid) -> Result<BoundaryControl> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut u = BoundaryControl::zeros(grid, times);
    let faces = grid.boundary_face_count();
    let mut seen = vec![false; u.values().len()];
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::Parse(format!("{}:{}: expected step,time,face,side,value", path.display(), lineno + 1));
        if cols.len() != 5 {
            return Err(bad());
        }
        let n: usize = cols[0].parse().map_err(|_| bad())?;
        let f: usize = cols[2].parse().map_err(|_| bad())?;
        let v: f64 = cols[4].parse().map_err(|_| bad())?;
        if n >= times.steps() || f >= faces {
            return Err(Error::Parse(format!("{}:{}: step or face out of range", path.display(), lineno + 1)));
        }
        u.step_mut(n)[f] = v;
        seen[n * faces + f] = true;
    }
    if !seen.iter().all(|&s| s) {
        return Err(Error::Parse(format!("{}: control table is incomplete", path.display())));
    }
    Ok(u)
}

/// Mask as a cell list: `cell,x,y`.
pub fn write_mask_csv(path: &Path, grid: &SpatialGrid, mask: &MushyMask) -> Result<()> {
    let rows: Vec<Vec<String>> = mask
        .cells()
        .into_iter()
        .map(|c| {
            let x = grid.cell_center(c);
            vec![c.to_string(), format!("{:e}", x[0]), format!("{:e}", x[1])]
        })
        .collect();
    write_csv(path, &["cell", "x", "y"], &rows)
}

/// Reads a cell list (first column) into a boolean mask.
pub fn read_mask_csv(path: &Path, cells: usize) -> Result<Vec<bool>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut mask = vec![false; cells];
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let first = line.split(',').next().unwrap_or("").trim();
        if lineno == 0 && first.parse::<usize>().is_err() || first.is_empty() {
            continue;
        }
        let c: usize = first
            .parse()
            .map_err(|_| Error::Parse(format!("{}:{}: expected a cell index", path.display(), lineno + 1)))?;
        if c >= cells {
            return Err(Error::Parse(format!("{}:{}: cell {c} out of range", path.display(), lineno + 1)));
        }
        mask[c] = true;
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = SpatialGrid::rectangle(1.0, 2.0, 4, 5).unwrap();
        let times = TimeGrid::new(0.3, 3).unwrap();
        let u = BoundaryControl::from_fn(&g, times, |t, f| t * f.center[0] - f.center[1] / 3.0);
        let path = dir.path().join("u.csv");
        write_control_csv(&path, &g, &u).unwrap();
        let back = read_control_csv(&path, &g, times).unwrap();
        assert_eq!(back.values(), u.values());
        let short = TimeGrid::new(0.3, 4).unwrap();
        assert!(read_control_csv(&path, &g, short).is_err());
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = SpatialGrid::line(1.0, 10).unwrap();
        let mask = MushyMask { level: 0, mask: (0..10).map(|c| c % 3 == 0).collect() };
        let path = dir.path().join("m.csv");
        write_mask_csv(&path, &g, &mask).unwrap();
        assert_eq!(read_mask_csv(&path, 10).unwrap(), mask.mask);
        assert!(read_mask_csv(&path, 5).is_err());
    }

    #[test]
    fn atomic_write_leaves_nothing_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        let r = write_atomic(&path, |out| {
            writeln!(out, "partial").unwrap();
            Err(Error::Parse("boom".into()))
        });
        assert!(r.is_err());
        assert!(!path.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
        write_atomic(&path, |out| writeln!(out, "done").map_err(|e| Error::io("x", e))).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "done\n");
    }
}
