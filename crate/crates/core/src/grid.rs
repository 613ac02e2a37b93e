//! Structured cell-centered grids on boxes, space–time fields, boundary
//! controls and the discrete norms used throughout the solvers.
//!
//! Cells are stored row-major with the first axis fastest: cell `(i, j)` of a
//! 2D grid has linear index `j * nx + i`. Boundary faces are enumerated side by
//! side in the order left, right, bottom, top.

use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of cells along each axis.
pub const MIN_CELLS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// A face shared by two cells.
#[derive(Clone, Copy, Debug)]
pub struct InteriorFace {
    pub lower: usize,
    pub upper: usize,
    /// Face measure divided by the distance between the two cell centers.
    pub transmissibility: f64,
}

/// A face of a cell lying on the domain boundary.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryFace {
    pub cell: usize,
    pub side: Side,
    /// Face measure (1 in 1D).
    pub area: f64,
    pub center: [f64; 2],
}

/// Uniform cell-centered grid on `[0, L1]` or `[0, L1] x [0, L2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGrid {
    extent: Vec<f64>,
    cells: Vec<usize>,
    spacing: Vec<f64>,
}

impl SpatialGrid {
    pub fn new(extent: &[f64], cells: &[usize]) -> Result<Self> {
        let dim = extent.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::config("extent", "dimension must be 1 or 2"));
        }
        if cells.len() != dim {
            return Err(Error::config("cells", "one cell count per axis is required"));
        }
        for (axis, (&l, &n)) in extent.iter().zip(cells).enumerate() {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::config(
                    format!("extent[{axis}]"),
                    "must be positive and finite",
                ));
            }
            if n < MIN_CELLS {
                return Err(Error::config(
                    format!("cells[{axis}]"),
                    format!("must be at least {MIN_CELLS}"),
                ));
            }
        }
        let spacing = extent.iter().zip(cells).map(|(l, &n)| l / n as f64).collect();
        Ok(Self {
            extent: extent.to_vec(),
            cells: cells.to_vec(),
            spacing,
        })
    }

    pub fn line(length: f64, cells: usize) -> Result<Self> {
        Self::new(&[length], &[cells])
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        Self::new(&[lx, ly], &[nx, ny])
    }

    pub fn dimension(&self) -> usize {
        self.extent.len()
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Measure of the whole domain.
    pub fn volume(&self) -> f64 {
        self.extent.iter().product()
    }

    fn nx(&self) -> usize {
        self.cells[0]
    }

    fn ny(&self) -> usize {
        if self.dimension() == 2 {
            self.cells[1]
        } else {
            1
        }
    }

    /// Axis indices `(i, j)` of a cell (`j = 0` in 1D).
    pub fn axis_index(&self, cell: usize) -> (usize, usize) {
        (cell % self.nx(), cell / self.nx())
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.nx() + i
    }

    /// Cell center; the second coordinate is 0 in 1D.
    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let (i, j) = self.axis_index(cell);
        let x = (i as f64 + 0.5) * self.spacing[0];
        let y = if self.dimension() == 2 {
            (j as f64 + 0.5) * self.spacing[1]
        } else {
            0.0
        };
        [x, y]
    }

    /// Distance from a cell center to the boundary of the box.
    pub fn distance_to_boundary(&self, cell: usize) -> f64 {
        let c = self.cell_center(cell);
        (0..self.dimension())
            .map(|a| c[a].min(self.extent[a] - c[a]))
            .fold(f64::INFINITY, f64::min)
    }

    /// True when none of the cell's faces lies on the boundary.
    pub fn is_interior_cell(&self, cell: usize) -> bool {
        let (i, j) = self.axis_index(cell);
        let x_ok = i > 0 && i + 1 < self.nx();
        let y_ok = self.dimension() == 1 || (j > 0 && j + 1 < self.ny());
        x_ok && y_ok
    }

    pub fn interior_faces(&self) -> Vec<InteriorFace> {
        let (nx, ny) = (self.nx(), self.ny());
        let mut faces = Vec::new();
        let hx = self.spacing[0];
        let area_x = if self.dimension() == 2 { self.spacing[1] } else { 1.0 };
        for j in 0..ny {
            for i in 0..nx - 1 {
                faces.push(InteriorFace {
                    lower: self.cell_index(i, j),
                    upper: self.cell_index(i + 1, j),
                    transmissibility: area_x / hx,
                });
            }
        }
        if self.dimension() == 2 {
            let hy = self.spacing[1];
            for j in 0..ny - 1 {
                for i in 0..nx {
                    faces.push(InteriorFace {
                        lower: self.cell_index(i, j),
                        upper: self.cell_index(i, j + 1),
                        transmissibility: hx / hy,
                    });
                }
            }
        }
        faces
    }

    pub fn boundary_faces(&self) -> Vec<BoundaryFace> {
        let (nx, ny) = (self.nx(), self.ny());
        let lx = self.extent[0];
        if self.dimension() == 1 {
            return vec![
                BoundaryFace { cell: 0, side: Side::Left, area: 1.0, center: [0.0, 0.0] },
                BoundaryFace { cell: nx - 1, side: Side::Right, area: 1.0, center: [lx, 0.0] },
            ];
        }
        let (hx, hy) = (self.spacing[0], self.spacing[1]);
        let ly = self.extent[1];
        let mut faces = Vec::with_capacity(2 * (nx + ny));
        for j in 0..ny {
            let y = (j as f64 + 0.5) * hy;
            faces.push(BoundaryFace { cell: self.cell_index(0, j), side: Side::Left, area: hy, center: [0.0, y] });
        }
        for j in 0..ny {
            let y = (j as f64 + 0.5) * hy;
            faces.push(BoundaryFace { cell: self.cell_index(nx - 1, j), side: Side::Right, area: hy, center: [lx, y] });
        }
        for i in 0..nx {
            let x = (i as f64 + 0.5) * hx;
            faces.push(BoundaryFace { cell: self.cell_index(i, 0), side: Side::Bottom, area: hx, center: [x, 0.0] });
        }
        for i in 0..nx {
            let x = (i as f64 + 0.5) * hx;
            faces.push(BoundaryFace { cell: self.cell_index(i, ny - 1), side: Side::Top, area: hx, center: [x, ly] });
        }
        faces
    }

    pub fn boundary_face_count(&self) -> usize {
        if self.dimension() == 1 {
            2
        } else {
            2 * (self.nx() + self.ny())
        }
    }

    /// Values of a cell field on the cells adjacent to each boundary face.
    pub fn boundary_trace(&self, values: &[f64]) -> Vec<f64> {
        self.boundary_faces().iter().map(|f| values[f.cell]).collect()
    }

    /// Samples a function of the position at every cell center.
    pub fn sample<F: Fn([f64; 2]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.cell_count()).map(|c| f(self.cell_center(c))).collect()
    }

    /// `sum(vol * a * b)`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell_volume() * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    }

    /// Interpolates a cell field at an arbitrary point; points outside the
    /// hull of cell centers are clamped to it (nearest-point extension).
    pub fn interpolate(&self, values: &[f64], point: &[f64]) -> f64 {
        let (i0, i1, wx) = bracket(point[0], self.spacing[0], self.nx());
        if self.dimension() == 1 {
            return (1.0 - wx) * values[i0] + wx * values[i1];
        }
        let (j0, j1, wy) = bracket(point[1], self.spacing[1], self.ny());
        let v = |i, j| values[self.cell_index(i, j)];
        (1.0 - wy) * ((1.0 - wx) * v(i0, j0) + wx * v(i1, j0))
            + wy * ((1.0 - wx) * v(i0, j1) + wx * v(i1, j1))
    }

    pub(crate) fn check_slice(&self, values: &[f64], what: &str) -> Result<()> {
        if values.len() != self.cell_count() {
            return Err(Error::config(
                what,
                format!("expected {} cell values, got {}", self.cell_count(), values.len()),
            ));
        }
        Ok(())
    }
}

/// Returns neighbouring lattice indices and the weight of the upper one for
/// coordinate `x` on a cell-centered lattice with `n` nodes.
fn bracket(x: f64, h: f64, n: usize) -> (usize, usize, f64) {
    let s = x / h - 0.5;
    if s <= 0.0 {
        return (0, 0, 0.0);
    }
    let last = (n - 1) as f64;
    if s >= last {
        return (n - 1, n - 1, 0.0);
    }
    let i0 = s.floor() as usize;
    let i0 = i0.min(n - 2);
    (i0, i0 + 1, s - i0 as f64)
}

/// Uniform partition of `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::config("horizon", "must be positive and finite"));
        }
        if steps < 2 {
            return Err(Error::config("steps", "must be at least 2"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn levels(&self) -> usize {
        self.steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, level: usize) -> f64 {
        if level == self.steps {
            self.horizon
        } else {
            level as f64 * self.dt()
        }
    }
}

/// Scalar field on every time level and cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    grid: SpatialGrid,
    times: TimeGrid,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &SpatialGrid, times: TimeGrid) -> Self {
        Self {
            grid: grid.clone(),
            times,
            values: vec![0.0; grid.cell_count() * times.levels()],
        }
    }

    /// Field equal to `slice` at every time level.
    pub fn constant_in_time(grid: &SpatialGrid, times: TimeGrid, slice: &[f64]) -> Result<Self> {
        grid.check_slice(slice, "initial field")?;
        let mut values = Vec::with_capacity(slice.len() * times.levels());
        for _ in 0..times.levels() {
            values.extend_from_slice(slice);
        }
        Self::from_values(grid, times, values)
    }

    pub fn from_values(grid: &SpatialGrid, times: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() * times.levels() {
            return Err(Error::config(
                "field",
                format!(
                    "expected {} values, got {}",
                    grid.cell_count() * times.levels(),
                    values.len()
                ),
            ));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("non-finite field value at index {k}")));
        }
        Ok(Self {
            grid: grid.clone(),
            times,
            values,
        })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn times(&self) -> TimeGrid {
        self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn level(&self, n: usize) -> &[f64] {
        let m = self.grid.cell_count();
        &self.values[n * m..(n + 1) * m]
    }

    pub fn level_mut(&mut self, n: usize) -> &mut [f64] {
        let m = self.grid.cell_count();
        &mut self.values[n * m..(n + 1) * m]
    }

    pub fn initial(&self) -> &[f64] {
        self.level(0)
    }

    pub fn terminal(&self) -> &[f64] {
        self.level(self.times.steps())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `L2(Q)` norm, trapezoidal in time.
    pub fn l2_norm(&self) -> f64 {
        self.weighted_sum_sq().sqrt()
    }

    /// `L2(Q)` norm of `self - other`.
    pub fn l2_distance(&self, other: &SpaceTimeField) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        let diff = SpaceTimeField {
            grid: self.grid.clone(),
            times: self.times,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        };
        diff.l2_norm()
    }

    fn weighted_sum_sq(&self) -> f64 {
        let dt = self.times.dt();
        let last = self.times.steps();
        (0..=last)
            .map(|n| {
                let w = if n == 0 || n == last { 0.5 * dt } else { dt };
                let s = self.level(n);
                w * self.grid.inner(s, s)
            })
            .sum()
    }

    /// `(1 - w) * self + w * other`.
    pub fn blend(&self, other: &SpaceTimeField, w: f64) -> SpaceTimeField {
        SpaceTimeField {
            grid: self.grid.clone(),
            times: self.times,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect(),
        }
    }
}

/// Neumann flux on every time step and boundary face.
///
/// `values` row `n` is the flux applied over the step `(t_n, t_{n+1}]`, so a
/// control carries one row per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryControl {
    times: TimeGrid,
    face_areas: Vec<f64>,
    values: Vec<f64>,
}

impl BoundaryControl {
    pub fn zeros(grid: &SpatialGrid, times: TimeGrid) -> Self {
        let face_areas: Vec<f64> = grid.boundary_faces().iter().map(|f| f.area).collect();
        let values = vec![0.0; face_areas.len() * times.steps()];
        Self { times, face_areas, values }
    }

    pub fn from_fn<F: FnMut(f64, &BoundaryFace) -> f64>(grid: &SpatialGrid, times: TimeGrid, mut f: F) -> Self {
        let faces = grid.boundary_faces();
        let mut u = Self::zeros(grid, times);
        for n in 0..times.steps() {
            let t = times.time(n + 1);
            for (k, face) in faces.iter().enumerate() {
                u.values[n * faces.len() + k] = f(t, face);
            }
        }
        u
    }

    pub fn from_values(grid: &SpatialGrid, times: TimeGrid, values: Vec<f64>) -> Result<Self> {
        let mut u = Self::zeros(grid, times);
        if values.len() != u.values.len() {
            return Err(Error::config(
                "control",
                format!("expected {} flux values, got {}", u.values.len(), values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant("non-finite control value".into()));
        }
        u.values = values;
        Ok(u)
    }

    pub fn times(&self) -> TimeGrid {
        self.times
    }

    pub fn face_count(&self) -> usize {
        self.face_areas.len()
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn step(&self, n: usize) -> &[f64] {
        let m = self.face_count();
        &self.values[n * m..(n + 1) * m]
    }

    pub fn step_mut(&mut self, n: usize) -> &mut [f64] {
        let m = self.face_count();
        &mut self.values[n * m..(n + 1) * m]
    }

    pub fn matches(&self, grid: &SpatialGrid, times: TimeGrid) -> bool {
        self.face_count() == grid.boundary_face_count() && self.times == times
    }

    /// `L2(Sigma)` inner product, `sum(dt * area * a * b)`.
    pub fn inner(&self, other: &BoundaryControl) -> f64 {
        let dt = self.times.dt();
        let m = self.face_count();
        self.values
            .iter()
            .zip(&other.values)
            .enumerate()
            .map(|(k, (a, b))| dt * self.face_areas[k % m] * a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &BoundaryControl) {
        for (s, v) in self.values.iter_mut().zip(&x.values) {
            *s += a * v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }

    pub fn scaled(&self, a: f64) -> BoundaryControl {
        let mut out = self.clone();
        out.scale(a);
        out
    }
}

/// `|f|_2` on one time level.
pub fn l2_norm_space(grid: &SpatialGrid, f: &[f64]) -> f64 {
    grid.inner(f, f).sqrt()
}

/// Discrete gradient per cell and axis: central differences inside,
/// second-order one-sided at the first and last cell of each line.
pub fn gradient(grid: &SpatialGrid, f: &[f64]) -> Vec<[f64; 2]> {
    let dim = grid.dimension();
    let cells = grid.cells_per_axis();
    let mut g = vec![[0.0; 2]; f.len()];
    for (cell, gc) in g.iter_mut().enumerate() {
        let (i, j) = grid.axis_index(cell);
        for axis in 0..dim {
            let (k, n, h) = (if axis == 0 { i } else { j }, cells[axis], grid.spacing()[axis]);
            let at = |kk: usize| {
                if axis == 0 {
                    f[grid.cell_index(kk, j)]
                } else {
                    f[grid.cell_index(i, kk)]
                }
            };
            gc[axis] = if k == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2.0 * h)
            } else if k == n - 1 {
                (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) / (2.0 * h)
            } else {
                (at(k + 1) - at(k - 1)) / (2.0 * h)
            };
        }
    }
    g
}

/// `|grad f|_2` on one time level.
pub fn gradient_norm(grid: &SpatialGrid, f: &[f64]) -> f64 {
    let vol = grid.cell_volume();
    gradient(grid, f)
        .iter()
        .map(|g| vol * (g[0] * g[0] + g[1] * g[1]))
        .sum::<f64>()
        .sqrt()
}

/// `||f||_V = (|f|_2^2 + |grad f|_2^2)^(1/2)`.
pub fn v_norm(grid: &SpatialGrid, f: &[f64]) -> f64 {
    let a = l2_norm_space(grid, f);
    let b = gradient_norm(grid, f);
    (a * a + b * b).sqrt()
}

/// `sum_faces area * u * w` on time step `step`, with `w` a boundary trace.
pub fn boundary_integral(u: &BoundaryControl, w: &[f64], step: usize) -> Result<f64> {
    if w.len() != u.face_count() {
        return Err(Error::config(
            "boundary trace",
            format!("expected {} face values, got {}", u.face_count(), w.len()),
        ));
    }
    if step >= u.times().steps() {
        return Err(Error::config("step", "outside the control horizon"));
    }
    Ok(u
        .step(step)
        .iter()
        .zip(w)
        .zip(u.face_areas())
        .map(|((a, b), s)| s * a * b)
        .sum())
}

/// Evaluates `z` at `(s, x)`: multilinear inside `[0, T] x Omega`, constant
/// in time beyond `T` (and before 0), clamped to the nearest boundary point
/// in space.
pub fn extend_field(z: &SpaceTimeField, s: f64, x: &[f64]) -> f64 {
    let times = z.times();
    let tau = (s / times.dt()).clamp(0.0, times.steps() as f64);
    let n0 = (tau.floor() as usize).min(times.steps() - 1);
    let w = tau - n0 as f64;
    let grid = z.grid();
    let a = grid.interpolate(z.level(n0), x);
    if w == 0.0 {
        return a;
    }
    let b = grid.interpolate(z.level(n0 + 1), x);
    (1.0 - w) * a + w * b
}

/// Writes one row per cell: coordinates then value.
pub fn write_slice_csv<W: Write>(grid: &SpatialGrid, values: &[f64], mut out: W) -> Result<()> {
    let io = |e| Error::io("<csv>", e);
    let header = if grid.dimension() == 1 { "x,value" } else { "x,y,value" };
    writeln!(out, "{header}").map_err(io)?;
    for (cell, v) in values.iter().enumerate() {
        let c = grid.cell_center(cell);
        if grid.dimension() == 1 {
            writeln!(out, "{:.17e},{:.17e}", c[0], v).map_err(io)?;
        } else {
            writeln!(out, "{:.17e},{:.17e},{:.17e}", c[0], c[1], v).map_err(io)?;
        }
    }
    Ok(())
}

/// Reads a slice written by [`write_slice_csv`]; rows must be in cell order.
pub fn read_slice_csv<R: BufRead>(grid: &SpatialGrid, input: R) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(grid.cell_count());
    for (k, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<csv>", e))?;
        if k == 0 || line.trim().is_empty() {
            continue;
        }
        let last = line
            .rsplit(',')
            .next()
            .ok_or_else(|| Error::Parse(format!("line {}: empty row", k + 1)))?;
        let v: f64 = last
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad value `{last}`", k + 1)))?;
        values.push(v);
    }
    grid.check_slice(&values, "csv field")?;
    Ok(values)
}

/// Binary field dump, all little-endian:
/// `u64 dimension`, `f64 extent[dimension]`, `u64 cells[dimension]`, then
/// `f64` values in cell order.
pub fn write_slice_binary<W: Write>(grid: &SpatialGrid, values: &[f64], mut out: W) -> Result<()> {
    grid.check_slice(values, "binary field")?;
    let io = |e| Error::io("<binary>", e);
    out.write_all(&(grid.dimension() as u64).to_le_bytes()).map_err(io)?;
    for l in grid.extent() {
        out.write_all(&l.to_le_bytes()).map_err(io)?;
    }
    for &n in grid.cells_per_axis() {
        out.write_all(&(n as u64).to_le_bytes()).map_err(io)?;
    }
    for v in values {
        out.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    Ok(())
}

/// Reads a binary dump, returning the grid it was written on and the values.
pub fn read_slice_binary<R: Read>(mut input: R) -> Result<(SpatialGrid, Vec<f64>)> {
    let mut buf = [0u8; 8];
    let mut next = |input: &mut R| -> Result<[u8; 8]> {
        input
            .read_exact(&mut buf)
            .map_err(|e| Error::Parse(format!("truncated binary field: {e}")))?;
        Ok(buf)
    };
    let dim = u64::from_le_bytes(next(&mut input)?) as usize;
    if !(1..=2).contains(&dim) {
        return Err(Error::Parse(format!("unsupported dimension {dim}")));
    }
    let mut extent = Vec::with_capacity(dim);
    for _ in 0..dim {
        extent.push(f64::from_le_bytes(next(&mut input)?));
    }
    let mut cells = Vec::with_capacity(dim);
    for _ in 0..dim {
        cells.push(u64::from_le_bytes(next(&mut input)?) as usize);
    }
    let grid = SpatialGrid::new(&extent, &cells)?;
    let mut values = Vec::with_capacity(grid.cell_count());
    for _ in 0..grid.cell_count() {
        values.push(f64::from_le_bytes(next(&mut input)?));
    }
    Ok((grid, values))
}
