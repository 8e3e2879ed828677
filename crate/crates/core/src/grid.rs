//! Structured-grid snapshot data model: normalization, train/validation
//! splitting, relative L2 errors, and the binary snapshot file format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::binio::{ByteReader, ByteWriter};
use crate::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"ROMS";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Uniform structured grid. `nz == 1` for 2D problems; the cell center of
/// cell `(i, j, k)` is `(x0 + (i+1/2) dx, y0 + (j+1/2) dy, z0 + (k+1/2) dz)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub x0: f64,
    pub y0: f64,
    pub z0: f64,
}

impl GridSpec {
    pub fn new_2d(nx: usize, ny: usize, dx: f64, dy: f64) -> Self {
        Self {
            nx,
            ny,
            nz: 1,
            dx,
            dy,
            dz: 1.0,
            x0: 0.0,
            y0: 0.0,
            z0: 0.0,
        }
    }

    pub fn new_3d(nx: usize, ny: usize, nz: usize, dx: f64, dy: f64, dz: f64) -> Self {
        Self {
            nx,
            ny,
            nz,
            dx,
            dy,
            dz,
            x0: 0.0,
            y0: 0.0,
            z0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx * self.ny * self.nz == 0 {
            return Err(Error::InvalidArgument("grid has zero cells".into()));
        }
        if self.dx <= 0.0 || self.dy <= 0.0 || self.dz <= 0.0 {
            return Err(Error::InvalidArgument("cell sizes must be positive".into()));
        }
        Ok(())
    }

    /// Total cell count N_c.
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_2d(&self) -> bool {
        self.nz == 1
    }

    /// Flat index for cell (i, j, k), x-fastest then y then z.
    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny && k < self.nz);
        (k * self.ny + j) * self.nx + i
    }

    /// Cell-center coordinates of cell (i, j, k).
    pub fn center(&self, i: usize, j: usize, k: usize) -> (f64, f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.dx,
            self.y0 + (j as f64 + 0.5) * self.dy,
            self.z0 + (k as f64 + 0.5) * self.dz,
        )
    }
}

/// One scalar field sample over the full grid at a single time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub values: Vec<f64>,
    pub time: f64,
}

impl Snapshot {
    pub fn new(values: Vec<f64>, time: f64) -> Self {
        Self { values, time }
    }
}

/// An ordered, uniformly sampled snapshot time series over one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub grid: GridSpec,
    pub snapshots: Vec<Snapshot>,
    pub dt: f64,
}

impl SnapshotSet {
    pub fn new(grid: GridSpec, snapshots: Vec<Snapshot>, dt: f64) -> Result<Self> {
        let set = Self {
            grid,
            snapshots,
            dt,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.dt <= 0.0 {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        let nc = self.grid.n_cells();
        for (i, s) in self.snapshots.iter().enumerate() {
            if s.values.len() != nc {
                return Err(Error::ShapeMismatch(format!(
                    "snapshot {i} has {} values, grid has {nc} cells",
                    s.values.len()
                )));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "snapshot {i} contains non-finite values"
                )));
            }
        }
        for w in self.snapshots.windows(2) {
            let gap = w[1].time - w[0].time;
            if gap <= 0.0 || (gap - self.dt).abs() > 1e-9 * self.dt {
                return Err(Error::InvalidArgument(format!(
                    "snapshot times not uniformly spaced by dt={}: gap {gap}",
                    self.dt
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }
}

/// Field-wide min/max statistics, computed on the training portion only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub vmin: f64,
    pub vmax: f64,
}

impl NormStats {
    /// Identity mapping under `normalize` (range [-1, 1] maps to itself).
    pub fn identity() -> Self {
        Self {
            vmin: -1.0,
            vmax: 1.0,
        }
    }

    pub fn from_set(set: &SnapshotSet) -> Result<Self> {
        let mut vmin = f64::INFINITY;
        let mut vmax = f64::NEG_INFINITY;
        for s in &set.snapshots {
            for &v in &s.values {
                vmin = vmin.min(v);
                vmax = vmax.max(v);
            }
        }
        if !vmin.is_finite() || !vmax.is_finite() {
            return Err(Error::InvalidArgument(
                "cannot compute normalization stats on an empty set".into(),
            ));
        }
        Ok(Self { vmin, vmax })
    }

    /// Map a value into [-1, 1]. Degenerate ranges map everything to 0.
    #[inline]
    pub fn forward(&self, v: f64) -> f64 {
        if self.vmax == self.vmin {
            0.0
        } else {
            2.0 * (v - self.vmin) / (self.vmax - self.vmin) - 1.0
        }
    }

    /// Inverse of `forward` up to round-off.
    #[inline]
    pub fn inverse(&self, v: f64) -> f64 {
        if self.vmax == self.vmin {
            self.vmin
        } else {
            (v + 1.0) * 0.5 * (self.vmax - self.vmin) + self.vmin
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.vmin.is_finite() || !self.vmax.is_finite() || self.vmin > self.vmax {
            return Err(Error::InvalidArgument(format!(
                "invalid normalization stats vmin={}, vmax={}",
                self.vmin, self.vmax
            )));
        }
        Ok(())
    }
}

/// Split into (training, validation): the first `floor(train_fraction * N)`
/// snapshots (earliest times) form the training set.
pub fn split(set: &SnapshotSet, train_fraction: f64) -> Result<(SnapshotSet, SnapshotSet)> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty set".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = set.len();
    let n_train = ((train_fraction * n as f64).floor() as usize).max(1);
    if n_train >= n {
        return Err(Error::InvalidArgument(format!(
            "split leaves no validation snapshots ({n_train} of {n} in training)"
        )));
    }
    let train = SnapshotSet {
        grid: set.grid,
        snapshots: set.snapshots[..n_train].to_vec(),
        dt: set.dt,
    };
    let valid = SnapshotSet {
        grid: set.grid,
        snapshots: set.snapshots[n_train..].to_vec(),
        dt: set.dt,
    };
    Ok((train, valid))
}

/// Map every value through `stats.forward`.
pub fn normalize(set: &SnapshotSet, stats: &NormStats) -> Result<SnapshotSet> {
    stats.validate()?;
    Ok(map_values(set, |v| stats.forward(v)))
}

/// Map every value through `stats.inverse`.
pub fn denormalize(set: &SnapshotSet, stats: &NormStats) -> Result<SnapshotSet> {
    stats.validate()?;
    Ok(map_values(set, |v| stats.inverse(v)))
}

fn map_values(set: &SnapshotSet, f: impl Fn(f64) -> f64) -> SnapshotSet {
    SnapshotSet {
        grid: set.grid,
        snapshots: set
            .snapshots
            .iter()
            .map(|s| Snapshot {
                values: s.values.iter().map(|&v| f(v)).collect(),
                time: s.time,
            })
            .collect(),
        dt: set.dt,
    }
}

/// Relative L2 error in percent: `100 * ||truth - approx|| / ||truth||`.
/// Uniform cells make the cell-volume weight cancel in the ratio.
pub fn relative_l2_error(truth: &Snapshot, approx: &Snapshot) -> Result<f64> {
    if truth.values.len() != approx.values.len() {
        return Err(Error::ShapeMismatch(format!(
            "truth has {} cells, approx has {}",
            truth.values.len(),
            approx.values.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (&t, &a) in truth.values.iter().zip(&approx.values) {
        num += (t - a) * (t - a);
        den += t * t;
    }
    if den == 0.0 {
        return Err(Error::Domain(
            "relative L2 error undefined for identically zero truth field".into(),
        ));
    }
    Ok(100.0 * (num / den).sqrt())
}

/// Write the binary snapshot format: magic "ROMS", u32 version, u32
/// nx/ny/nz/nt, f64 dx/dy/dz/x0/y0/z0/dt/t_start, then the nt*nc values
/// in time-major, x-fastest order. All little-endian.
pub fn save_snapshots(set: &SnapshotSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    set.validate()?;
    if set.is_empty() {
        return Err(Error::InvalidArgument("cannot save an empty set".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = ByteWriter::new(BufWriter::new(file), path.display().to_string());
    w.bytes(SNAPSHOT_MAGIC)?;
    w.u32(SNAPSHOT_VERSION)?;
    let g = &set.grid;
    for v in [g.nx, g.ny, g.nz, set.len()] {
        w.u32(v as u32)?;
    }
    for v in [
        g.dx,
        g.dy,
        g.dz,
        g.x0,
        g.y0,
        g.z0,
        set.dt,
        set.snapshots[0].time,
    ] {
        w.f64(v)?;
    }
    for s in &set.snapshots {
        w.f64_slice(&s.values)?;
    }
    w.finish()
}

/// Read the binary format produced by `save_snapshots`.
pub fn load_snapshots(path: impl AsRef<Path>) -> Result<SnapshotSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = ByteReader::new(BufReader::new(file), path.display().to_string());
    r.magic(SNAPSHOT_MAGIC)?;
    let version = r.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::format(
            r.path(),
            format!("unsupported snapshot version {version}"),
        ));
    }
    let nx = r.u32()? as usize;
    let ny = r.u32()? as usize;
    let nz = r.u32()? as usize;
    let nt = r.u32()? as usize;
    let dx = r.f64()?;
    let dy = r.f64()?;
    let dz = r.f64()?;
    let x0 = r.f64()?;
    let y0 = r.f64()?;
    let z0 = r.f64()?;
    let dt = r.f64()?;
    let t_start = r.f64()?;
    let grid = GridSpec {
        nx,
        ny,
        nz,
        dx,
        dy,
        dz,
        x0,
        y0,
        z0,
    };
    let nc = grid.n_cells();
    let mut snapshots = Vec::with_capacity(nt);
    for i in 0..nt {
        let values = r.f64_vec(nc)?;
        snapshots.push(Snapshot {
            values,
            time: t_start + i as f64 * dt,
        });
    }
    let set = SnapshotSet {
        grid,
        snapshots,
        dt,
    };
    set.validate()
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    Ok(set)
}

/// CSV export: one row per cell per time, columns t,x,y,z,value.
pub fn write_csv(set: &SnapshotSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    writeln!(w, "t,x,y,z,value").map_err(io_err)?;
    let g = &set.grid;
    for s in &set.snapshots {
        for k in 0..g.nz {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let (x, y, z) = g.center(i, j, k);
                    writeln!(w, "{},{},{},{},{}", s.time, x, y, z, s.values[g.idx(i, j, k)])
                        .map_err(io_err)?;
                }
            }
        }
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set_of(n: usize, nc: usize) -> SnapshotSet {
        let grid = GridSpec::new_2d(nc, 1, 1.0, 1.0);
        let snapshots = (0..n)
            .map(|i| Snapshot::new(vec![i as f64; nc], i as f64))
            .collect();
        SnapshotSet::new(grid, snapshots, 1.0).unwrap()
    }

    #[test]
    fn table1_splits() {
        let set = set_of(1020, 2);
        for (frac, expect) in [(0.4, (408, 612)), (0.6, (612, 408)), (0.8, (816, 204))] {
            let (tr, va) = split(&set, frac).unwrap();
            assert_eq!((tr.len(), va.len()), expect);
        }
    }

    #[test]
    fn split_smallest_legal() {
        let set = set_of(2, 1);
        let (tr, va) = split(&set, 0.5).unwrap();
        assert_eq!((tr.len(), va.len()), (1, 1));
        // training snapshots hold the earliest times
        assert!(tr.snapshots[0].time < va.snapshots[0].time);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let set = set_of(10, 1);
        assert!(split(&set, 0.0).is_err());
        assert!(split(&set, 1.0).is_err());
        assert!(split(&set, -0.2).is_err());
    }

    #[test]
    fn normalize_bounds_and_midpoint() {
        let stats = NormStats {
            vmin: 0.0,
            vmax: 4.0,
        };
        assert_eq!(stats.forward(0.0), -1.0);
        assert_eq!(stats.forward(4.0), 1.0);
        assert_eq!(stats.forward(1.0), -0.5);
    }

    #[test]
    fn denormalize_examples() {
        let sym = NormStats {
            vmin: -2.0,
            vmax: 2.0,
        };
        assert_eq!(sym.inverse(0.0), 0.0);
        let s = NormStats {
            vmin: 3.0,
            vmax: 7.0,
        };
        assert_eq!(s.inverse(-1.0), 3.0);
        let s = NormStats {
            vmin: 0.0,
            vmax: 4.0,
        };
        assert_eq!(s.inverse(0.5), 3.0);
    }

    #[test]
    fn degenerate_range_maps_to_zero() {
        let s = NormStats {
            vmin: 5.0,
            vmax: 5.0,
        };
        assert_eq!(s.forward(5.0), 0.0);
    }

    #[test]
    fn relative_l2_hand_case() {
        let t = Snapshot::new(vec![3.0, 4.0], 0.0);
        let a = Snapshot::new(vec![3.0, 0.0], 0.0);
        assert!((relative_l2_error(&t, &a).unwrap() - 80.0).abs() < 1e-12);
    }

    #[test]
    fn relative_l2_identical_and_zero_approx() {
        let t = Snapshot::new(vec![1.0, -2.0, 0.5], 0.0);
        assert_eq!(relative_l2_error(&t, &t).unwrap(), 0.0);
        let z = Snapshot::new(vec![0.0; 3], 0.0);
        assert!((relative_l2_error(&t, &z).unwrap() - 100.0).abs() < 1e-12);
        assert!(relative_l2_error(&z, &t).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let grid = GridSpec::new_2d(2, 2, 0.5, 0.25);
        let set = SnapshotSet::new(
            grid,
            vec![Snapshot::new(vec![1.0, -2.5, 3.25, 0.0], 10.0)],
            2.0,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.bin");
        save_snapshots(&set, &path).unwrap();
        let loaded = load_snapshots(&path).unwrap();
        assert_eq!(set, loaded);
    }

    #[test]
    fn load_truncated_file_is_format_error() {
        let grid = GridSpec::new_2d(2, 2, 1.0, 1.0);
        let set = SnapshotSet::new(grid, vec![Snapshot::new(vec![0.5; 4], 0.0)], 1.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.bin");
        save_snapshots(&set, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(
            load_snapshots(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn csv_export_has_one_row_per_cell_per_time() {
        let set = set_of(3, 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snap.csv");
        write_csv(&set, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 4);
        assert!(text.starts_with("t,x,y,z,value"));
    }

    proptest! {
        #[test]
        fn normalize_denormalize_identity(
            values in proptest::collection::vec(-1e6f64..1e6, 1..40),
            lo in -1e3f64..0.0,
            span in 1e-3f64..1e3,
        ) {
            let stats = NormStats { vmin: lo, vmax: lo + span };
            for &v in &values {
                let back = stats.inverse(stats.forward(v));
                prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(1.0));
            }
        }

        #[test]
        fn relative_l2_scale_invariant(
            truth in proptest::collection::vec(-10.0f64..10.0, 2..20),
            scale in prop_oneof![0.001f64..1000.0, -1000.0f64..-0.001],
        ) {
            prop_assume!(truth.iter().any(|&v| v != 0.0));
            let approx: Vec<f64> = truth.iter().map(|v| v * 0.9).collect();
            let t = Snapshot::new(truth.clone(), 0.0);
            let a = Snapshot::new(approx.clone(), 0.0);
            let ts = Snapshot::new(truth.iter().map(|v| v * scale).collect(), 0.0);
            let as_ = Snapshot::new(approx.iter().map(|v| v * scale).collect(), 0.0);
            let e1 = relative_l2_error(&t, &a).unwrap();
            let e2 = relative_l2_error(&ts, &as_).unwrap();
            prop_assert!((e1 - e2).abs() <= 1e-9 * e1.max(1.0));
        }
    }
}
