//! MAC-staggered discretization of the rectangle `[0, lx] x [0, ly]`.
//!
//! Scalars live at cell centers, `ux` on vertical faces and `uy` on
//! horizontal faces. All arrays are row-major with the x index fastest.
//! Walls are no-slip: tangential ghost values reflect through the wall
//! (`u_ghost = -u_inside`), normal components sit on the wall faces.

use crate::error::{Error, Result};

const MIN_CELLS: usize = 8;
const SQUARE_CELL_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub h: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < MIN_CELLS || ny < MIN_CELLS {
            return Err(Error::Config(format!(
                "grid too coarse: {nx}x{ny} (need at least {MIN_CELLS} cells per direction)"
            )));
        }
        if !(lx > 0.0 && lx.is_finite() && ly > 0.0 && ly.is_finite()) {
            return Err(Error::Config(format!(
                "domain lengths must be positive and finite (lx = {lx}, ly = {ly})"
            )));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        if ((hx - hy) / hx).abs() > SQUARE_CELL_RTOL {
            return Err(Error::Config(format!(
                "non-square cells: lx/nx = {hx} but ly/ny = {hy}"
            )));
        }
        Ok(Self { nx, ny, lx, ly, h: hx })
    }

    /// Unit square with `n x n` cells.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    /// Position of the `ux` sample `(i, j)`, `i in 0..=nx`.
    pub fn ux_point(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h, (j as f64 + 0.5) * self.h)
    }

    /// Position of the `uy` sample `(i, j)`, `j in 0..=ny`.
    pub fn uy_point(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.h, j as f64 * self.h)
    }

    /// Grid with half the spacing on the same domain.
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx,
            ny: 2 * self.ny,
            h: 0.5 * self.h,
            ..*self
        }
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "{}x{} vs {}x{}",
                self.nx, self.ny, other.nx, other.ny
            )));
        }
        Ok(())
    }
}

/// Validated grid constructor.
pub fn make_grid(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<GridSpec> {
    GridSpec::new(nx, ny, lx, ly)
}

/// Cell-centered scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            data: vec![0.0; grid.cell_count()],
        }
    }

    pub fn constant(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            data: vec![value; grid.cell_count()],
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.cell_count());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.cell_center(i, j);
                data.push(f(x, y));
            }
        }
        Self { grid, data }
    }

    pub fn from_vec(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.cell_count() {
            return Err(Error::GridMismatch(format!(
                "scalar data has {} values, grid needs {}",
                data.len(),
                grid.cell_count()
            )));
        }
        Ok(Self { grid, data })
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.grid.nx + i
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.grid.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|v| a * v).collect(),
        }
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        for (s, o) in self.data.iter_mut().zip(&other.data) {
            *s += a * o;
        }
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn remove_mean(&mut self) {
        let m = self.mean();
        self.data.iter_mut().for_each(|v| *v -= m);
    }

    /// `sum(f g) h^2`
    pub fn dot(&self, other: &ScalarField) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum::<f64>()
            * self.grid.cell_area()
    }

    /// Discrete L2 norm with midpoint quadrature.
    pub fn l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Face-centered velocity on the MAC grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    pub grid: GridSpec,
    /// `(nx + 1) x ny` values on vertical faces.
    pub ux: Vec<f64>,
    /// `nx x (ny + 1)` values on horizontal faces.
    pub uy: Vec<f64>,
    /// Wall-normal faces are held at zero and tangential ghosts reflect.
    pub no_slip: bool,
}

impl VelocityField {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            ux: vec![0.0; (grid.nx + 1) * grid.ny],
            uy: vec![0.0; grid.nx * (grid.ny + 1)],
            no_slip: true,
        }
    }

    /// Samples `(fx, fy)` at the face positions. The no-slip flag is left off.
    pub fn from_fn(
        grid: GridSpec,
        fx: impl Fn(f64, f64) -> f64,
        fy: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut ux = Vec::with_capacity((grid.nx + 1) * grid.ny);
        for j in 0..grid.ny {
            for i in 0..=grid.nx {
                let (x, y) = grid.ux_point(i, j);
                ux.push(fx(x, y));
            }
        }
        let mut uy = Vec::with_capacity(grid.nx * (grid.ny + 1));
        for j in 0..=grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.uy_point(i, j);
                uy.push(fy(x, y));
            }
        }
        Self {
            grid,
            ux,
            uy,
            no_slip: false,
        }
    }

    pub fn from_parts(grid: GridSpec, ux: Vec<f64>, uy: Vec<f64>) -> Result<Self> {
        if ux.len() != (grid.nx + 1) * grid.ny || uy.len() != grid.nx * (grid.ny + 1) {
            return Err(Error::GridMismatch(format!(
                "velocity arrays have {}/{} values, grid needs {}/{}",
                ux.len(),
                uy.len(),
                (grid.nx + 1) * grid.ny,
                grid.nx * (grid.ny + 1)
            )));
        }
        Ok(Self {
            grid,
            ux,
            uy,
            no_slip: false,
        })
    }

    #[inline]
    pub fn ix(&self, i: usize, j: usize) -> usize {
        j * (self.grid.nx + 1) + i
    }

    #[inline]
    pub fn iy(&self, i: usize, j: usize) -> usize {
        j * self.grid.nx + i
    }

    #[inline]
    pub fn ux_at(&self, i: usize, j: usize) -> f64 {
        self.ux[j * (self.grid.nx + 1) + i]
    }

    #[inline]
    pub fn uy_at(&self, i: usize, j: usize) -> f64 {
        self.uy[j * self.grid.nx + i]
    }

    /// Zeroes every wall-normal face and sets the no-slip flag.
    pub fn enforce_no_slip(&mut self) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        for j in 0..ny {
            let a = self.ix(0, j);
            let b = self.ix(nx, j);
            self.ux[a] = 0.0;
            self.ux[b] = 0.0;
        }
        for i in 0..nx {
            let a = self.iy(i, 0);
            let b = self.iy(i, ny);
            self.uy[a] = 0.0;
            self.uy[b] = 0.0;
        }
        self.no_slip = true;
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            grid: self.grid,
            ux: self.ux.iter().map(|v| a * v).collect(),
            uy: self.uy.iter().map(|v| a * v).collect(),
            no_slip: self.no_slip,
        }
    }

    /// `self += a * other`; the result is no-slip only if both inputs are.
    pub fn axpy(&mut self, a: f64, other: &VelocityField) {
        for (s, o) in self.ux.iter_mut().zip(&other.ux) {
            *s += a * o;
        }
        for (s, o) in self.uy.iter_mut().zip(&other.uy) {
            *s += a * o;
        }
        self.no_slip &= other.no_slip;
    }

    pub fn sub(&self, other: &VelocityField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Face inner product; wall faces carry half weight.
    pub fn dot(&self, other: &VelocityField) -> f64 {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut s = 0.0;
        for j in 0..ny {
            for i in 0..=nx {
                let w = if i == 0 || i == nx { 0.5 } else { 1.0 };
                let k = self.ix(i, j);
                s += w * self.ux[k] * other.ux[k];
            }
        }
        for j in 0..=ny {
            let w = if j == 0 || j == ny { 0.5 } else { 1.0 };
            for i in 0..nx {
                let k = self.iy(i, j);
                s += w * self.uy[k] * other.uy[k];
            }
        }
        s * self.grid.cell_area()
    }

    pub fn l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.ux
            .iter()
            .chain(&self.uy)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.ux.iter().chain(&self.uy).all(|v| v.is_finite())
    }

    /// Largest wall-normal face value in magnitude.
    pub fn wall_normal_max(&self) -> f64 {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut m: f64 = 0.0;
        for j in 0..ny {
            m = m.max(self.ux_at(0, j).abs()).max(self.ux_at(nx, j).abs());
        }
        for i in 0..nx {
            m = m.max(self.uy_at(i, 0).abs()).max(self.uy_at(i, ny).abs());
        }
        m
    }

    /// Components averaged to cell centers.
    pub fn to_cell_centers(&self) -> (ScalarField, ScalarField) {
        let g = self.grid;
        let mut cx = ScalarField::zeros(g);
        let mut cy = ScalarField::zeros(g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = j * g.nx + i;
                cx.data[k] = 0.5 * (self.ux_at(i, j) + self.ux_at(i + 1, j));
                cy.data[k] = 0.5 * (self.uy_at(i, j) + self.uy_at(i, j + 1));
            }
        }
        (cx, cy)
    }
}

/// Discrete divergence at cell centers.
pub fn divergence(u: &VelocityField) -> ScalarField {
    let g = u.grid;
    let inv_h = 1.0 / g.h;
    let mut out = ScalarField::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nx {
            out.data[j * g.nx + i] = (u.ux_at(i + 1, j) - u.ux_at(i, j)) * inv_h
                + (u.uy_at(i, j + 1) - u.uy_at(i, j)) * inv_h;
        }
    }
    out
}

/// MAC pressure gradient on interior faces; wall faces are zero.
/// This is the negative adjoint of [`divergence`] on no-slip fields.
pub fn gradient(p: &ScalarField) -> VelocityField {
    let g = p.grid;
    let inv_h = 1.0 / g.h;
    let mut out = VelocityField::zeros(g);
    for j in 0..g.ny {
        for i in 1..g.nx {
            let k = out.ix(i, j);
            out.ux[k] = (p.at(i, j) - p.at(i - 1, j)) * inv_h;
        }
    }
    for j in 1..g.ny {
        for i in 0..g.nx {
            let k = out.iy(i, j);
            out.uy[k] = (p.at(i, j) - p.at(i, j - 1)) * inv_h;
        }
    }
    out
}

/// Node values `(nx + 1) x (ny + 1)` of a cell field: four-cell averages
/// inside, linear extrapolation through the walls.
pub(crate) fn cell_to_nodes(w: &ScalarField) -> Vec<f64> {
    let g = w.grid;
    let (nx, ny) = (g.nx, g.ny);
    // x-interpolated values per cell row
    let mut rows = vec![0.0; (nx + 1) * ny];
    for j in 0..ny {
        let r = &mut rows[j * (nx + 1)..(j + 1) * (nx + 1)];
        r[0] = 1.5 * w.at(0, j) - 0.5 * w.at(1, j);
        r[nx] = 1.5 * w.at(nx - 1, j) - 0.5 * w.at(nx - 2, j);
        for (i, v) in r.iter_mut().enumerate().take(nx).skip(1) {
            *v = 0.5 * (w.at(i - 1, j) + w.at(i, j));
        }
    }
    let s = nx + 1;
    let mut nodes = vec![0.0; (nx + 1) * (ny + 1)];
    for i in 0..=nx {
        nodes[i] = 1.5 * rows[i] - 0.5 * rows[s + i];
        nodes[ny * s + i] = 1.5 * rows[(ny - 1) * s + i] - 0.5 * rows[(ny - 2) * s + i];
        for j in 1..ny {
            nodes[j * s + i] = 0.5 * (rows[(j - 1) * s + i] + rows[j * s + i]);
        }
    }
    nodes
}

/// Discrete curl of a node streamfunction `(nx + 1) x (ny + 1)`.
pub(crate) fn curl_of_nodes(g: GridSpec, psi: &[f64]) -> VelocityField {
    let s = g.nx + 1;
    let inv_h = 1.0 / g.h;
    let mut out = VelocityField::zeros(g);
    out.no_slip = false;
    for j in 0..g.ny {
        for i in 0..=g.nx {
            let k = out.ix(i, j);
            out.ux[k] = -(psi[(j + 1) * s + i] - psi[j * s + i]) * inv_h;
        }
    }
    for j in 0..=g.ny {
        for i in 0..g.nx {
            let k = out.iy(i, j);
            out.uy[k] = (psi[j * s + i + 1] - psi[j * s + i]) * inv_h;
        }
    }
    out
}

/// `(-dw/dy, dw/dx)` on faces, taken as the discrete curl of the node
/// interpolant of `w`. Its divergence vanishes identically, and only
/// values of `w` (no derivatives) enter the face data beyond one difference.
pub fn perp_gradient(w: &ScalarField) -> VelocityField {
    curl_of_nodes(w.grid, &cell_to_nodes(w))
}

/// Scalar vorticity `d uy/dx - d ux/dy` at cell centers.
///
/// Node vorticity comes from the circulation around each interior node,
/// wall nodes are extrapolated linearly, and cells average their corners.
pub fn perp_divergence(u: &VelocityField) -> ScalarField {
    let g = u.grid;
    let (nx, ny) = (g.nx, g.ny);
    let s = nx + 1;
    let inv_h = 1.0 / g.h;
    let mut z = vec![0.0; (nx + 1) * (ny + 1)];
    for j in 1..ny {
        for i in 1..nx {
            z[j * s + i] = (u.uy_at(i, j) - u.uy_at(i - 1, j)) * inv_h
                - (u.ux_at(i, j) - u.ux_at(i, j - 1)) * inv_h;
        }
    }
    for j in 1..ny {
        z[j * s] = 2.0 * z[j * s + 1] - z[j * s + 2];
        z[j * s + nx] = 2.0 * z[j * s + nx - 1] - z[j * s + nx - 2];
    }
    for i in 0..=nx {
        z[i] = 2.0 * z[s + i] - z[2 * s + i];
        z[ny * s + i] = 2.0 * z[(ny - 1) * s + i] - z[(ny - 2) * s + i];
    }
    let mut out = ScalarField::zeros(g);
    for j in 0..ny {
        for i in 0..nx {
            out.data[j * nx + i] = 0.25
                * (z[j * s + i] + z[j * s + i + 1] + z[(j + 1) * s + i] + z[(j + 1) * s + i + 1]);
        }
    }
    out
}

/// Five-point Laplacian with homogeneous Dirichlet walls (ghost = -inside).
/// This is the operator inverted by the Dirichlet Poisson solver.
pub fn laplacian(w: &ScalarField) -> ScalarField {
    laplacian_with_ghost(w, -1.0)
}

/// Five-point Laplacian with zero-flux walls (ghost = inside).
pub fn laplacian_neumann(w: &ScalarField) -> ScalarField {
    laplacian_with_ghost(w, 1.0)
}

fn laplacian_with_ghost(w: &ScalarField, reflect: f64) -> ScalarField {
    let g = w.grid;
    let (nx, ny) = (g.nx, g.ny);
    let inv_h2 = 1.0 / (g.h * g.h);
    let mut out = ScalarField::zeros(g);
    for j in 0..ny {
        for i in 0..nx {
            let c = w.at(i, j);
            let we = if i > 0 { w.at(i - 1, j) } else { reflect * c };
            let ea = if i + 1 < nx { w.at(i + 1, j) } else { reflect * c };
            let so = if j > 0 { w.at(i, j - 1) } else { reflect * c };
            let no = if j + 1 < ny { w.at(i, j + 1) } else { reflect * c };
            out.data[j * nx + i] = (we + ea + so + no - 4.0 * c) * inv_h2;
        }
    }
    out
}

/// Vector Laplacian on interior faces with no-slip wall treatment.
/// Wall-normal output faces are zero.
pub fn laplacian_vec(u: &VelocityField) -> VelocityField {
    let g = u.grid;
    let (nx, ny) = (g.nx, g.ny);
    let inv_h2 = 1.0 / (g.h * g.h);
    let mut out = VelocityField::zeros(g);
    out.no_slip = false;
    for j in 0..ny {
        for i in 1..nx {
            let c = u.ux_at(i, j);
            let so = if j > 0 { u.ux_at(i, j - 1) } else { -c };
            let no = if j + 1 < ny { u.ux_at(i, j + 1) } else { -c };
            let k = out.ix(i, j);
            out.ux[k] = (u.ux_at(i - 1, j) + u.ux_at(i + 1, j) + so + no - 4.0 * c) * inv_h2;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let c = u.uy_at(i, j);
            let we = if i > 0 { u.uy_at(i - 1, j) } else { -c };
            let ea = if i + 1 < nx { u.uy_at(i + 1, j) } else { -c };
            let k = out.iy(i, j);
            out.uy[k] = (we + ea + u.uy_at(i, j - 1) + u.uy_at(i, j + 1) - 4.0 * c) * inv_h2;
        }
    }
    out
}

/// `<-laplacian_vec(u), u>`, written as a sum of squared face differences
/// (wall ghosts included) so it is nonnegative by construction.
pub fn dirichlet_energy(u: &VelocityField) -> f64 {
    let g = u.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut s = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let d = u.ux_at(i + 1, j) - u.ux_at(i, j);
            s += d * d;
        }
    }
    for i in 1..nx {
        for j in 0..ny - 1 {
            let d = u.ux_at(i, j + 1) - u.ux_at(i, j);
            s += d * d;
        }
        s += 2.0 * u.ux_at(i, 0).powi(2) + 2.0 * u.ux_at(i, ny - 1).powi(2);
    }
    for j in 0..ny {
        for i in 0..nx {
            let d = u.uy_at(i, j + 1) - u.uy_at(i, j);
            s += d * d;
        }
    }
    for j in 1..ny {
        for i in 0..nx - 1 {
            let d = u.uy_at(i + 1, j) - u.uy_at(i, j);
            s += d * d;
        }
        s += 2.0 * u.uy_at(0, j).powi(2) + 2.0 * u.uy_at(nx - 1, j).powi(2);
    }
    s
}

/// Advective term `(b . grad) u` on interior faces with centered differences.
pub fn convective_term(u: &VelocityField, b: &VelocityField) -> VelocityField {
    let g = u.grid;
    let (nx, ny) = (g.nx, g.ny);
    let inv_2h = 0.5 / g.h;
    let mut out = VelocityField::zeros(g);
    out.no_slip = false;
    for j in 0..ny {
        for i in 1..nx {
            let c = u.ux_at(i, j);
            let so = if j > 0 { u.ux_at(i, j - 1) } else { -c };
            let no = if j + 1 < ny { u.ux_at(i, j + 1) } else { -c };
            let bx = b.ux_at(i, j);
            let by = 0.25
                * (b.uy_at(i - 1, j) + b.uy_at(i, j) + b.uy_at(i - 1, j + 1) + b.uy_at(i, j + 1));
            let k = out.ix(i, j);
            out.ux[k] = bx * (u.ux_at(i + 1, j) - u.ux_at(i - 1, j)) * inv_2h + by * (no - so) * inv_2h;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let c = u.uy_at(i, j);
            let we = if i > 0 { u.uy_at(i - 1, j) } else { -c };
            let ea = if i + 1 < nx { u.uy_at(i + 1, j) } else { -c };
            let bx = 0.25
                * (b.ux_at(i, j - 1) + b.ux_at(i + 1, j - 1) + b.ux_at(i, j) + b.ux_at(i + 1, j));
            let by = b.uy_at(i, j);
            let k = out.iy(i, j);
            out.uy[k] = bx * (ea - we) * inv_2h + by * (u.uy_at(i, j + 1) - u.uy_at(i, j - 1)) * inv_2h;
        }
    }
    out
}

/// Face fluxes `u * w` with `w` averaged to faces, then their divergence:
/// the conservative form of `u . grad w` for divergence-free `u`.
pub fn flux_divergence(u: &VelocityField, w: &ScalarField) -> ScalarField {
    let g = u.grid;
    let (nx, ny) = (g.nx, g.ny);
    let inv_h = 1.0 / g.h;
    let fx = |i: usize, j: usize| -> f64 {
        if i == 0 || i == nx {
            0.0
        } else {
            u.ux_at(i, j) * 0.5 * (w.at(i - 1, j) + w.at(i, j))
        }
    };
    let fy = |i: usize, j: usize| -> f64 {
        if j == 0 || j == ny {
            0.0
        } else {
            u.uy_at(i, j) * 0.5 * (w.at(i, j - 1) + w.at(i, j))
        }
    };
    let mut out = ScalarField::zeros(g);
    for j in 0..ny {
        for i in 0..nx {
            out.data[j * nx + i] =
                (fx(i + 1, j) - fx(i, j)) * inv_h + (fy(i, j + 1) - fy(i, j)) * inv_h;
        }
    }
    out
}

/// Cell-centered first derivatives: centered inside, one-sided
/// second-order in wall cells.
pub fn cell_gradient(f: &ScalarField) -> (ScalarField, ScalarField) {
    let g = f.grid;
    let mut dx = ScalarField::zeros(g);
    let mut dy = ScalarField::zeros(g);
    let inv_2h = 0.5 / g.h;
    let d1 = |a: &dyn Fn(usize) -> f64, k: usize, n: usize| -> f64 {
        if k == 0 {
            (-3.0 * a(0) + 4.0 * a(1) - a(2)) * inv_2h
        } else if k == n - 1 {
            (3.0 * a(n - 1) - 4.0 * a(n - 2) + a(n - 3)) * inv_2h
        } else {
            (a(k + 1) - a(k - 1)) * inv_2h
        }
    };
    for j in 0..g.ny {
        for i in 0..g.nx {
            dx.data[j * g.nx + i] = d1(&|k| f.at(k, j), i, g.nx);
            dy.data[j * g.nx + i] = d1(&|k| f.at(i, k), j, g.ny);
        }
    }
    (dx, dy)
}

/// Cell-centered pure second derivatives `(f_xx, f_yy)`.
pub fn cell_second_derivatives(f: &ScalarField) -> (ScalarField, ScalarField) {
    let g = f.grid;
    let mut dxx = ScalarField::zeros(g);
    let mut dyy = ScalarField::zeros(g);
    let inv_h2 = 1.0 / (g.h * g.h);
    let d2 = |a: &dyn Fn(usize) -> f64, k: usize, n: usize| -> f64 {
        if k == 0 {
            (2.0 * a(0) - 5.0 * a(1) + 4.0 * a(2) - a(3)) * inv_h2
        } else if k == n - 1 {
            (2.0 * a(n - 1) - 5.0 * a(n - 2) + 4.0 * a(n - 3) - a(n - 4)) * inv_h2
        } else {
            (a(k - 1) - 2.0 * a(k) + a(k + 1)) * inv_h2
        }
    };
    for j in 0..g.ny {
        for i in 0..g.nx {
            dxx.data[j * g.nx + i] = d2(&|k| f.at(k, j), i, g.nx);
            dyy.data[j * g.nx + i] = d2(&|k| f.at(i, k), j, g.ny);
        }
    }
    (dxx, dyy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn make_grid_cases() {
        let g = make_grid(64, 64, 1.0, 1.0).unwrap();
        assert_eq!(g.h, 0.015625);
        let g = make_grid(8, 8, 1.0, 1.0).unwrap();
        assert_eq!(g.h, 0.125);
        assert!(matches!(make_grid(64, 32, 1.0, 1.0), Err(Error::Config(_))));
        assert!(matches!(make_grid(7, 7, 1.0, 1.0), Err(Error::Config(_))));
        assert!(make_grid(64, 32, 2.0, 1.0).is_ok());
        assert!(make_grid(16, 16, -1.0, -1.0).is_err());
    }

    #[test]
    fn divergence_examples() {
        let g = GridSpec::unit(16).unwrap();
        let z = divergence(&VelocityField::zeros(g));
        assert!(z.data.iter().all(|&v| v == 0.0));
        let u = VelocityField::from_fn(g, |x, _| x, |_, _| 0.0);
        let d = divergence(&u);
        assert!(d.data.iter().all(|v| (v - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn perp_gradient_examples() {
        let g = GridSpec::unit(16).unwrap();
        let c = perp_gradient(&ScalarField::constant(g, 3.5));
        assert!(c.max_abs() < 1e-12);
        let u = perp_gradient(&ScalarField::from_fn(g, |_, y| y));
        assert!(u.ux.iter().all(|v| (v + 1.0).abs() <= 1e-12));
        assert!(u.uy.iter().all(|v| v.abs() <= 1e-12));
    }

    fn perp_gradient_error(n: usize) -> f64 {
        let g = GridSpec::unit(n).unwrap();
        let w = ScalarField::from_fn(g, |x, y| (PI * x).sin() * (PI * y).sin());
        let exact = VelocityField::from_fn(
            g,
            |x, y| -PI * (PI * x).sin() * (PI * y).cos(),
            |x, y| PI * (PI * x).cos() * (PI * y).sin(),
        );
        perp_gradient(&w).sub(&exact).max_abs()
    }

    #[test]
    fn perp_gradient_second_order() {
        let e1 = perp_gradient_error(32);
        let e2 = perp_gradient_error(64);
        assert!(e1 < 20.0 / (32.0 * 32.0), "{e1}");
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
    }

    #[test]
    fn perp_divergence_examples() {
        let g = GridSpec::unit(16).unwrap();
        assert!(perp_divergence(&VelocityField::zeros(g)).max_abs() == 0.0);
        let rot = VelocityField::from_fn(g, |_, y| -y, |x, _| x);
        let z = perp_divergence(&rot);
        for j in 1..15 {
            for i in 1..15 {
                assert!((z.at(i, j) - 2.0).abs() <= 1e-12);
            }
        }
        // curl of a gradient
        let grad = VelocityField::from_fn(
            g,
            |x, y| PI * (PI * x).cos() * (PI * y).sin(),
            |x, y| PI * (PI * x).sin() * (PI * y).cos(),
        );
        assert!(perp_divergence(&grad).max_abs() < 50.0 / (16.0 * 16.0));
    }

    #[test]
    fn laplacian_examples() {
        let g = GridSpec::unit(16).unwrap();
        let l = laplacian(&ScalarField::constant(g, 2.0));
        let q = laplacian(&ScalarField::from_fn(g, |x, y| x * x + y * y));
        for j in 1..15 {
            for i in 1..15 {
                assert!(l.at(i, j).abs() < 1e-12);
                assert!((q.at(i, j) - 4.0).abs() <= 1e-10);
            }
        }
        let mut errs = vec![];
        for n in [32, 64] {
            let g = GridSpec::unit(n).unwrap();
            let w = ScalarField::from_fn(g, |x, y| (PI * x).sin() * (PI * y).sin());
            let lw = laplacian(&w);
            let e = lw.sub(&w.scaled(-2.0 * PI * PI)).max_abs() / (2.0 * PI * PI);
            errs.push(e);
        }
        assert!(errs[0] < 2.0 / 32.0f64.powi(2), "{errs:?}");
        assert!((errs[0] / errs[1]).log2() > 1.8, "{errs:?}");
    }

    #[test]
    fn curl_is_divergence_free() {
        let g = GridSpec::unit(12).unwrap();
        let w = ScalarField::from_fn(g, |x, y| (7.0 * x * y).sin() + x.exp() * y);
        let d = divergence(&perp_gradient(&w));
        assert!(d.max_abs() < 1e-11 * perp_gradient(&w).max_abs() / g.h);
    }

    #[test]
    fn dirichlet_energy_matches_laplacian() {
        let g = GridSpec::unit(10).unwrap();
        let psi: Vec<f64> = (0..11 * 11)
            .map(|k| {
                let (i, j) = (k % 11, k / 11);
                if i == 0 || j == 0 || i == 10 || j == 10 {
                    0.0
                } else {
                    ((i * 7 + j * 3) % 5) as f64 - 2.0
                }
            })
            .collect();
        let mut u = curl_of_nodes(g, &psi);
        u.enforce_no_slip();
        let e1 = dirichlet_energy(&u);
        let e2 = -laplacian_vec(&u).dot(&u);
        assert!((e1 - e2).abs() < 1e-9 * e1, "{e1} {e2}");
    }
}
