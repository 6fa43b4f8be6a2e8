//! Uniform tensor-product grids on boxes `Π (0, L_i)` with the
//! homogeneous-Neumann (mirror ghost cell) discrete calculus.
//!
//! Cells are stored with axis 0 varying fastest. Faces normal to axis `a`
//! are stored in the same layout with `n_a + 1` entries along that axis;
//! the two boundary layers always carry a zero normal gradient.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the total number of cells of a grid.
pub const DEFAULT_MAX_CELLS: usize = 1 << 24;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
}

/// Uniform rectangular grid in one to three dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    dim: usize,
    extents: [f64; 3],
    cells: [usize; 3],
}

impl TryFrom<GridSpec> for Grid {
    type Error = Error;
    fn try_from(spec: GridSpec) -> Result<Self> {
        Grid::new(spec.dim, &spec.extents, &spec.cells)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        GridSpec {
            dim: g.dim,
            extents: g.extents().to_vec(),
            cells: g.cells().to_vec(),
        }
    }
}

impl Grid {
    pub fn new(dim: usize, extents: &[f64], cells: &[usize]) -> Result<Self> {
        Self::with_cap(dim, extents, cells, DEFAULT_MAX_CELLS)
    }

    pub fn with_cap(dim: usize, extents: &[f64], cells: &[usize], cap: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if extents.len() != dim || cells.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} extents and cell counts, got {} and {}",
                extents.len(),
                cells.len()
            )));
        }
        let mut e = [1.0; 3];
        let mut n = [1usize; 3];
        let mut total: usize = 1;
        for a in 0..dim {
            if !(extents[a].is_finite() && extents[a] > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "extent along axis {a} must be positive, got {}",
                    extents[a]
                )));
            }
            if cells[a] < 2 {
                return Err(Error::InvalidGrid(format!(
                    "axis {a} needs at least 2 cells, got {}",
                    cells[a]
                )));
            }
            total = total.checked_mul(cells[a]).ok_or_else(|| {
                Error::InvalidGrid("cell count overflows".to_string())
            })?;
            e[a] = extents[a];
            n[a] = cells[a];
        }
        if total > cap {
            return Err(Error::InvalidGrid(format!(
                "{total} cells exceeds the cap of {cap}"
            )));
        }
        Ok(Grid {
            dim,
            extents: e,
            cells: n,
        })
    }

    /// Unit box `(0,1)^dim` with `n` cells per axis.
    pub fn unit(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, &vec![1.0; dim], &vec![n; dim])
    }

    /// Same box with every axis refined by a factor of two.
    pub fn refined(&self) -> Result<Self> {
        let cells: Vec<usize> = self.cells().iter().map(|n| 2 * n).collect();
        Self::new(self.dim, self.extents(), &cells)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dim]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.cells[axis] as f64
    }

    pub fn spacings(&self) -> Vec<f64> {
        (0..self.dim).map(|a| self.spacing(a)).collect()
    }

    /// Largest spacing over all axes.
    pub fn h_max(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.extents().iter().product()
    }

    /// Area of a face normal to `axis`.
    pub fn face_area(&self, axis: usize) -> f64 {
        self.cell_volume() / self.spacing(axis)
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.cells[..axis].iter().product()
    }

    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.cells[0];
        let j = (idx / self.cells[0]) % self.cells[1];
        let k = idx / (self.cells[0] * self.cells[1]);
        [i, j, k]
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.cells[0] * (c[1] + self.cells[1] * c[2])
    }

    /// Cell-center coordinates (unused axes report 0.5).
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let mut x = [0.5; 3];
        for a in 0..self.dim {
            x[a] = (c[a] as f64 + 0.5) * self.spacing(a);
        }
        x
    }

    /// Whether the cell touches the boundary along any axis.
    pub fn is_boundary_cell(&self, idx: usize) -> bool {
        let c = self.coords(idx);
        (0..self.dim).any(|a| c[a] == 0 || c[a] + 1 == self.cells[a])
    }

    pub fn faces_len(&self, axis: usize) -> usize {
        self.len() / self.cells[axis] * (self.cells[axis] + 1)
    }

    /// Index of the face normal to `axis` at multi-index `c`, where
    /// `c[axis]` ranges over `0..=n_axis` (face `c[axis]` lies on the low
    /// side of cell `c[axis]`).
    pub fn face_index(&self, axis: usize, c: [usize; 3]) -> usize {
        let mut dims = self.cells;
        dims[axis] += 1;
        c[0] + dims[0] * (c[1] + dims[1] * c[2])
    }

    /// Eigenvalue of the 1D mirror-Neumann `-Δ_h` along `axis` for mode `m`.
    pub fn axis_eigenvalue(&self, axis: usize, m: usize) -> f64 {
        let h = self.spacing(axis);
        let n = self.cells[axis] as f64;
        (2.0 / (h * h)) * (1.0 - (m as f64 * std::f64::consts::PI / n).cos())
    }

    /// First positive eigenvalue of the discrete Neumann `-Δ_h`.
    pub fn lambda1(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.axis_eigenvalue(a, 1))
            .fold(f64::INFINITY, f64::min)
    }

    /// First positive eigenvalue of the continuum Neumann Laplacian on the box.
    pub fn lambda1_continuum(&self) -> f64 {
        let lmax = self.extents().iter().cloned().fold(0.0, f64::max);
        (std::f64::consts::PI / lmax).powi(2)
    }
}

/// Cell-centered scalar samples on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite field value at cell {i}")));
        }
        Ok(Field { grid, values })
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Field {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index and value of the smallest entry.
    pub fn argmin(&self) -> (usize, f64) {
        self.values
            .iter()
            .cloned()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc })
    }

    /// Midpoint-rule integral `Σ f · vol`.
    pub fn integral(&self) -> f64 {
        pairwise_sum(&self.values) * self.grid.cell_volume()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 64;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Normal differences on faces, one array per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    grid: Grid,
    axes: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn zeros(grid: Grid) -> Self {
        let axes = (0..grid.dim()).map(|a| vec![0.0; grid.faces_len(a)]).collect();
        FaceField { grid, axes }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.axes[a]
    }

    pub fn axis_mut(&mut self, a: usize) -> &mut [f64] {
        &mut self.axes[a]
    }

    /// Face value normal to `axis` at multi-index `c` (see [`Grid::face_index`]).
    pub fn get(&self, axis: usize, c: [usize; 3]) -> f64 {
        self.axes[axis][self.grid.face_index(axis, c)]
    }

    /// `Σ_faces F² · vol`, the face-based squared L² norm.
    pub fn squared_norm(&self) -> f64 {
        let vol = self.grid.cell_volume();
        self.axes
            .iter()
            .map(|ax| pairwise_sum(&ax.iter().map(|v| v * v).collect::<Vec<_>>()))
            .sum::<f64>()
            * vol
    }

    /// Averages the two faces adjacent to each cell, per axis.
    pub fn to_cells(&self) -> Vec<Vec<f64>> {
        let g = &self.grid;
        (0..g.dim())
            .map(|a| {
                (0..g.len())
                    .map(|idx| {
                        let mut c = g.coords(idx);
                        let lo = self.axes[a][g.face_index(a, c)];
                        c[a] += 1;
                        let hi = self.axes[a][g.face_index(a, c)];
                        0.5 * (lo + hi)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Discrete Neumann Laplacian of raw cell values: central second
/// differences with mirrored ghost cells.
pub fn laplacian_into(grid: &Grid, f: &[f64], out: &mut [f64]) {
    let n = grid.cells;
    let inv_h2: Vec<f64> = (0..grid.dim).map(|a| 1.0 / grid.spacing(a).powi(2)).collect();
    for (idx, o) in out.iter_mut().enumerate() {
        let c = grid.coords(idx);
        let fc = f[idx];
        let mut acc = 0.0;
        for a in 0..grid.dim {
            let s = grid.stride(a);
            let lo = if c[a] > 0 { f[idx - s] } else { fc };
            let hi = if c[a] + 1 < n[a] { f[idx + s] } else { fc };
            acc += (hi - 2.0 * fc + lo) * inv_h2[a];
        }
        *o = acc;
    }
}

pub fn apply_laplacian(f: &Field) -> Field {
    let mut out = vec![0.0; f.grid.len()];
    laplacian_into(&f.grid, &f.values, &mut out);
    Field::from_raw(f.grid, out)
}

/// Face gradients `(f_R - f_L)/h`; boundary faces are zero.
pub fn gradient_faces(f: &Field) -> FaceField {
    let g = f.grid;
    let mut out = FaceField::zeros(g);
    for a in 0..g.dim() {
        let s = g.stride(a);
        let h = g.spacing(a);
        for idx in 0..g.len() {
            let c = g.coords(idx);
            if c[a] == 0 {
                continue;
            }
            let fi = g.face_index(a, c);
            out.axes[a][fi] = (f.values[idx] - f.values[idx - s]) / h;
        }
    }
    out
}

/// Discrete divergence of a face field.
pub fn divergence(flux: &FaceField) -> Field {
    let g = flux.grid;
    let mut out = vec![0.0; g.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let c = g.coords(idx);
        let mut acc = 0.0;
        for a in 0..g.dim() {
            let lo = flux.axes[a][g.face_index(a, c)];
            let mut cu = c;
            cu[a] += 1;
            let hi = flux.axes[a][g.face_index(a, cu)];
            acc += (hi - lo) / g.spacing(a);
        }
        *o = acc;
    }
    Field::from_raw(g, out)
}

/// `‖∇_h f‖²` on faces, which equals `⟨-Δ_h f, f⟩`.
pub fn dirichlet_energy(f: &Field) -> f64 {
    gradient_faces(f).squared_norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StencilKind {
    NeumannLaplacian,
    /// `Δ_h - σ I`.
    ShiftedLaplacian(f64),
}

/// A constant-coefficient stencil operator bound to a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilOperator {
    pub kind: StencilKind,
    pub grid: Grid,
}

impl StencilOperator {
    pub fn laplacian(grid: Grid) -> Self {
        StencilOperator {
            kind: StencilKind::NeumannLaplacian,
            grid,
        }
    }

    pub fn shifted(grid: Grid, sigma: f64) -> Self {
        StencilOperator {
            kind: StencilKind::ShiftedLaplacian(sigma),
            grid,
        }
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        check_same_grid(&self.grid, &f.grid)?;
        let mut out = apply_laplacian(f);
        if let StencilKind::ShiftedLaplacian(sigma) = self.kind {
            for (o, v) in out.values.iter_mut().zip(&f.values) {
                *o -= sigma * v;
            }
        }
        Ok(out)
    }

    /// Dense matrix of the operator; only for small grids.
    pub fn dense_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.grid.len();
        if n > 4096 {
            return Err(Error::arg(format!("dense assembly refused for {n} cells")));
        }
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            laplacian_into(&self.grid, &e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                m[(i, j)] = col[i];
            }
            if let StencilKind::ShiftedLaplacian(sigma) = self.kind {
                m[(j, j)] -= sigma;
            }
        }
        Ok(m)
    }
}

/// First `k` eigenvalues of `-Δ_h` in ascending order, from the
/// closed-form tensor-product spectrum.
pub fn neumann_eigs(grid: &Grid, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::arg("requested zero eigenvalues"));
    }
    if k > grid.len() {
        return Err(Error::arg(format!(
            "requested {k} eigenvalues on a grid with {} cells",
            grid.len()
        )));
    }
    let axis: Vec<Vec<f64>> = (0..grid.dim())
        .map(|a| (0..grid.cells()[a]).map(|m| grid.axis_eigenvalue(a, m)).collect())
        .collect();
    Ok(smallest_tensor_sums(&axis, k))
}

/// First `k` eigenvalues `Σ (π m_a / L_a)²` of the continuum Neumann
/// Laplacian on the box of `grid`.
pub fn continuum_neumann_eigs(grid: &Grid, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::arg("requested zero eigenvalues"));
    }
    let axis: Vec<Vec<f64>> = (0..grid.dim())
        .map(|a| {
            let l = grid.extents()[a];
            (0..k).map(|m| (std::f64::consts::PI * m as f64 / l).powi(2)).collect()
        })
        .collect();
    Ok(smallest_tensor_sums(&axis, k))
}

/// The `k` smallest sums `Σ_a axis[a][m_a]`, each axis list ascending.
fn smallest_tensor_sums(axis: &[Vec<f64>], k: usize) -> Vec<f64> {
    let d = axis.len();
    let value = |m: &[usize; 3]| (0..d).map(|a| axis[a][m[a]]).sum::<f64>();

    // Best-first enumeration over multi-indices.
    #[derive(PartialEq, PartialOrd)]
    struct Key(f64);
    impl Eq for Key {}
    #[allow(clippy::derive_ord_xor_partial_ord)]
    impl Ord for Key {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0)
        }
    }
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    let start = [0usize; 3];
    heap.push(Reverse((Key(value(&start)), start)));
    seen.insert(start);
    let mut out = Vec::with_capacity(k);
    while let Some(Reverse((Key(v), m))) = heap.pop() {
        out.push(v);
        if out.len() == k {
            break;
        }
        for a in 0..d {
            if m[a] + 1 < axis[a].len() {
                let mut next = m;
                next[a] += 1;
                if seen.insert(next) {
                    heap.push(Reverse((Key(value(&next)), next)));
                }
            }
        }
    }
    out
}

/// First `k` eigenvalues of `-Δ_h` by dense symmetric eigendecomposition.
pub fn dense_neumann_eigs(grid: &Grid, k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > grid.len() {
        return Err(Error::arg(format!("invalid eigenvalue count {k}")));
    }
    let m = -StencilOperator::laplacian(*grid).dense_matrix()?;
    let eig = SymmetricEigen::new(m);
    let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    vals.sort_by(|a, b| a.total_cmp(b));
    vals.truncate(k);
    Ok(vals)
}
