//! Grids, nodal fields and discrete differential operators.
//!
//! The 3D reference domain is `S × (−½, ½)` with `S = (0, lx) × (0, ly)`.
//! Deformations live on the rescaled domain, so the thickness coordinate is
//! always of unit length and the thickness `h` enters only through the scaled
//! gradient `(∂₁y, ∂₂y, h⁻¹∂₃y)`.

use std::io::{self, BufRead, Read, Write};

use nalgebra::{Matrix2, Matrix3};
use thiserror::Error;

use crate::rigidity::RotationField;
use crate::stencil::{self, Stencil};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("grid needs nx, ny >= {min_planar} and nz >= {min_layers}, got {nx}x{ny}x{nz}")]
    TooFewNodes {
        nx: usize,
        ny: usize,
        nz: usize,
        min_planar: usize,
        min_layers: usize,
    },
    #[error("grid side lengths must be positive, got {lx} x {ly}")]
    BadExtent { lx: f64, ly: f64 },
    #[error("thickness must lie in (0, 1], got {0}")]
    BadThickness(f64),
    #[error("expected {expected} values, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("second derivatives across the thickness need nz >= 3, got {0}")]
    TooFewLayers(usize),
    #[error("malformed snapshot: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Uniform node grid on the rectangle `(0, lx) × (0, ly)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2 {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Grid2 {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self, FieldError> {
        if nx < 4 || ny < 4 {
            return Err(FieldError::TooFewNodes {
                nx,
                ny,
                nz: 1,
                min_planar: 4,
                min_layers: 1,
            });
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(FieldError::BadExtent { lx, ly });
        }
        Ok(Self { nx, ny, lx, ly })
    }

    /// Unit square with `n × n` nodes.
    pub fn unit(n: usize) -> Result<Self, FieldError> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn dx(&self) -> f64 {
        self.lx / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / (self.ny - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn x1(&self, i: usize) -> f64 {
        if i == self.nx - 1 {
            self.lx
        } else {
            i as f64 * self.dx()
        }
    }

    pub fn x2(&self, j: usize) -> f64 {
        if j == self.ny - 1 {
            self.ly
        } else {
            j as f64 * self.dy()
        }
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx - 1 || j == self.ny - 1
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// Trapezoid quadrature weights per node.
    pub fn weights(&self) -> Vec<f64> {
        let wx = stencil::trapezoid(self.nx, self.dx());
        let wy = stencil::trapezoid(self.ny, self.dy());
        let mut w = Vec::with_capacity(self.len());
        for i in 0..self.nx {
            for j in 0..self.ny {
                w.push(wx[i] * wy[j]);
            }
        }
        w
    }
}

/// Uniform node grid on `S × [−½, ½]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3 {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
}

impl Grid3 {
    pub fn new(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64) -> Result<Self, FieldError> {
        if nx < 4 || ny < 4 || nz < 2 {
            return Err(FieldError::TooFewNodes {
                nx,
                ny,
                nz,
                min_planar: 4,
                min_layers: 2,
            });
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(FieldError::BadExtent { lx, ly });
        }
        Ok(Self { nx, ny, nz, lx, ly })
    }

    /// Grid over `plane × [−½, ½]` with `nz` thickness nodes.
    pub fn over(plane: Grid2, nz: usize) -> Result<Self, FieldError> {
        Self::new(plane.nx, plane.ny, nz, plane.lx, plane.ly)
    }

    pub fn plane(&self) -> Grid2 {
        Grid2 {
            nx: self.nx,
            ny: self.ny,
            lx: self.lx,
            ly: self.ly,
        }
    }

    pub fn dx(&self) -> f64 {
        self.plane().dx()
    }

    pub fn dy(&self) -> f64 {
        self.plane().dy()
    }

    pub fn dz(&self) -> f64 {
        1.0 / (self.nz - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.ny + j) * self.nz + k
    }

    /// Thickness coordinate of layer `k`, exactly antisymmetric about the
    /// middle layer.
    pub fn x3(&self, k: usize) -> f64 {
        let m = (self.nz - 1) as f64;
        (2.0 * k as f64 - m) / (2.0 * m)
    }

    /// Number of elements (cells).
    pub fn n_elements(&self) -> usize {
        (self.nx - 1) * (self.ny - 1) * (self.nz - 1)
    }

    /// Trapezoid quadrature weights per node; they sum to `|S|`.
    pub fn weights(&self) -> Vec<f64> {
        let wp = self.plane().weights();
        let wz = stencil::trapezoid(self.nz, self.dz());
        let mut w = Vec::with_capacity(self.len());
        for wa in wp {
            for &wk in &wz {
                w.push(wa * wk);
            }
        }
        w
    }
}

/// Gauss abscissae of the two-point rule on `[0, 1]`.
pub(crate) fn gauss2() -> [f64; 2] {
    let d = 0.5 / 3f64.sqrt();
    [0.5 - d, 0.5 + d]
}

/// Shape-function gradients of the trilinear element at its eight Gauss
/// points. Local node `a` sits at offsets `(a >> 2 & 1, a >> 1 & 1, a & 1)`,
/// matching the global node ordering.
#[derive(Debug, Clone)]
pub(crate) struct HexKernel {
    /// `grad[g][a]` = `(∂₁N_a, ∂₂N_a, ∂₃N_a)` in reference coordinates.
    pub grad: [[[f64; 3]; 8]; 8],
    /// Quadrature weight of each Gauss point (element volume / 8).
    pub weight: f64,
}

impl HexKernel {
    pub fn new(grid: &Grid3) -> Self {
        let (dx, dy, dz) = (grid.dx(), grid.dy(), grid.dz());
        let pts = gauss2();
        let mut grad = [[[0.0; 3]; 8]; 8];
        for g in 0..8 {
            let xi = [pts[g >> 2 & 1], pts[g >> 1 & 1], pts[g & 1]];
            for a in 0..8 {
                let o = [a >> 2 & 1, a >> 1 & 1, a & 1];
                let n1 = |d: usize| if o[d] == 1 { xi[d] } else { 1.0 - xi[d] };
                let s1 = |d: usize| if o[d] == 1 { 1.0 } else { -1.0 };
                grad[g][a] = [
                    s1(0) * n1(1) * n1(2) / dx,
                    n1(0) * s1(1) * n1(2) / dy,
                    n1(0) * n1(1) * s1(2) / dz,
                ];
            }
        }
        Self {
            grad,
            weight: dx * dy * dz / 8.0,
        }
    }

    /// Global node indices of element `(i, j, k)`.
    pub fn nodes(grid: &Grid3, i: usize, j: usize, k: usize) -> [usize; 8] {
        std::array::from_fn(|a| grid.node(i + (a >> 2 & 1), j + (a >> 1 & 1), k + (a & 1)))
    }
}

/// Bilinear counterpart of [`HexKernel`] on a planar grid.
#[derive(Debug, Clone)]
pub(crate) struct QuadKernel {
    pub grad: [[[f64; 2]; 4]; 4],
    pub value: [[f64; 4]; 4],
    pub weight: f64,
}

impl QuadKernel {
    pub fn new(grid: &Grid2) -> Self {
        let (dx, dy) = (grid.dx(), grid.dy());
        let pts = gauss2();
        let mut grad = [[[0.0; 2]; 4]; 4];
        let mut value = [[0.0; 4]; 4];
        for g in 0..4 {
            let xi = [pts[g >> 1 & 1], pts[g & 1]];
            for a in 0..4 {
                let o = [a >> 1 & 1, a & 1];
                let n1 = |d: usize| if o[d] == 1 { xi[d] } else { 1.0 - xi[d] };
                let s1 = |d: usize| if o[d] == 1 { 1.0 } else { -1.0 };
                value[g][a] = n1(0) * n1(1);
                grad[g][a] = [s1(0) * n1(1) / dx, n1(0) * s1(1) / dy];
            }
        }
        Self {
            grad,
            value,
            weight: dx * dy / 4.0,
        }
    }

    pub fn nodes(grid: &Grid2, i: usize, j: usize) -> [usize; 4] {
        std::array::from_fn(|a| grid.node(i + (a >> 1 & 1), j + (a & 1)))
    }
}

/// Nodal deformation of the rescaled plate.
///
/// Values are kept as the displacement `y − (x', h·x₃)` from the reference
/// configuration, which keeps small strains at full relative precision; the
/// deformation itself is available through [`DeformationField3::y`].
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField3 {
    grid: Grid3,
    h: f64,
    disp: Vec<f64>,
}

impl DeformationField3 {
    /// The reference configuration `y = (x', h·x₃)`.
    pub fn identity(grid: Grid3, h: f64) -> Result<Self, FieldError> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(FieldError::BadThickness(h));
        }
        Ok(Self {
            grid,
            h,
            disp: vec![0.0; 3 * grid.len()],
        })
    }

    /// Field from nodal displacements (three per node, node-major).
    pub fn from_displacement(grid: Grid3, h: f64, disp: Vec<f64>) -> Result<Self, FieldError> {
        let mut field = Self::identity(grid, h)?;
        if disp.len() != field.disp.len() {
            return Err(FieldError::SizeMismatch {
                expected: field.disp.len(),
                got: disp.len(),
            });
        }
        field.disp = disp;
        Ok(field)
    }

    /// Field sampling a displacement function `(x1, x2, x3) ↦ y − (x', h·x₃)`.
    pub fn from_displacement_fn(
        grid: Grid3,
        h: f64,
        f: impl Fn(f64, f64, f64) -> [f64; 3],
    ) -> Result<Self, FieldError> {
        let mut field = Self::identity(grid, h)?;
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                for k in 0..grid.nz {
                    let d = f(grid.plane().x1(i), grid.plane().x2(j), grid.x3(k));
                    let n = grid.node(i, j, k);
                    field.disp[3 * n..3 * n + 3].copy_from_slice(&d);
                }
            }
        }
        Ok(field)
    }

    /// Field sampling a deformation `(x1, x2, x3) ↦ y`.
    pub fn from_fn(
        grid: Grid3,
        h: f64,
        f: impl Fn(f64, f64, f64) -> [f64; 3],
    ) -> Result<Self, FieldError> {
        Self::from_displacement_fn(grid, h, |x1, x2, x3| {
            let y = f(x1, x2, x3);
            [y[0] - x1, y[1] - x2, y[2] - h * x3]
        })
    }

    pub fn grid(&self) -> &Grid3 {
        &self.grid
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn displacement(&self) -> &[f64] {
        &self.disp
    }

    pub fn displacement_mut(&mut self) -> &mut [f64] {
        &mut self.disp
    }

    pub fn into_displacement(self) -> Vec<f64> {
        self.disp
    }

    /// Reference position `(x1, x2, h·x3)` of a node.
    pub fn reference(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let p = self.grid.plane();
        [p.x1(i), p.x2(j), self.h * self.grid.x3(k)]
    }

    /// Deformed position of a node.
    pub fn y(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let r = self.reference(i, j, k);
        let n = self.grid.node(i, j, k);
        [
            r[0] + self.disp[3 * n],
            r[1] + self.disp[3 * n + 1],
            r[2] + self.disp[3 * n + 2],
        ]
    }

    /// Mask over the flat displacement vector, `true` on the lateral boundary
    /// `∂S × I`.
    pub fn boundary_mask(&self) -> Vec<bool> {
        boundary_mask(&self.grid)
    }

    /// Whether the clamped condition `y = (x', h·x₃)` holds on `∂S × I`.
    pub fn satisfies_bc(&self) -> bool {
        self.disp
            .iter()
            .zip(self.boundary_mask())
            .all(|(d, on_boundary)| !on_boundary || *d == 0.0)
    }

    /// Sets the lateral boundary to the reference configuration.
    pub fn apply_bc(&mut self) {
        for (d, on_boundary) in self.disp.iter_mut().zip(boundary_mask(&self.grid)) {
            if on_boundary {
                *d = 0.0;
            }
        }
    }

    /// Nodal displacement gradient `(∂₁d, ∂₂d, h⁻¹∂₃d)` by finite differences,
    /// so the scaled gradient is `I` plus this matrix.
    pub fn nodal_displacement_gradients(&self) -> Vec<Matrix3<f64>> {
        let g = &self.grid;
        let sx = stencil::first_derivative(g.nx, g.dx());
        let sy = stencil::first_derivative(g.ny, g.dy());
        let sz = stencil::first_derivative(g.nz, g.dz());
        let inv_h = 1.0 / self.h;
        let mut out = Vec::with_capacity(g.len());
        for i in 0..g.nx {
            for j in 0..g.ny {
                for k in 0..g.nz {
                    let mut m = Matrix3::zeros();
                    for c in 0..3 {
                        let comp = |n: usize| self.disp[3 * n + c];
                        m[(c, 0)] = sx[i].apply(|ii| comp(g.node(ii, j, k)));
                        m[(c, 1)] = sy[j].apply(|jj| comp(g.node(i, jj, k)));
                        m[(c, 2)] = inv_h * sz[k].apply(|kk| comp(g.node(i, j, kk)));
                    }
                    out.push(m);
                }
            }
        }
        out
    }

    /// Writes the snapshot format: header `PLT3 nx ny nz lx ly h`, newline,
    /// then `3·nx·ny·nz` little-endian `f64` deformation values in node order.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<(), FieldError> {
        let g = &self.grid;
        writeln!(w, "PLT3 {} {} {} {} {} {}", g.nx, g.ny, g.nz, g.lx, g.ly, self.h)?;
        for i in 0..g.nx {
            for j in 0..g.ny {
                for k in 0..g.nz {
                    for y in self.y(i, j, k) {
                        w.write_all(&y.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(mut r: R) -> Result<Self, FieldError> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 7 || parts[0] != "PLT3" {
            return Err(FieldError::Format(format!("bad header `{}`", header.trim())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| FieldError::Format(e.to_string()));
        let float = |s: &str| s.parse::<f64>().map_err(|e| FieldError::Format(e.to_string()));
        let grid = Grid3::new(
            int(parts[1])?,
            int(parts[2])?,
            int(parts[3])?,
            float(parts[4])?,
            float(parts[5])?,
        )?;
        let h = float(parts[6])?;
        let mut field = Self::identity(grid, h)?;
        let values = read_f64s(&mut r, 3 * grid.len())?;
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                for k in 0..grid.nz {
                    let n = grid.node(i, j, k);
                    let reference = field.reference(i, j, k);
                    for c in 0..3 {
                        field.disp[3 * n + c] = values[3 * n + c] - reference[c];
                    }
                }
            }
        }
        Ok(field)
    }
}

pub(crate) fn boundary_mask(grid: &Grid3) -> Vec<bool> {
    let p = grid.plane();
    let mut mask = Vec::with_capacity(3 * grid.len());
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let b = p.is_boundary(i, j);
            mask.extend(std::iter::repeat_n(b, 3 * grid.nz));
        }
    }
    mask
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>, FieldError> {
    let mut bytes = vec![0u8; 8 * count];
    r.read_exact(&mut bytes)
        .map_err(|e| FieldError::Format(format!("payload: {e}")))?;
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(FieldError::Format("trailing bytes after payload".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

/// One quadrature sample of the scaled gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainSample {
    /// Element index in `(i, j, k)` lexicographic order.
    pub element: usize,
    /// Gauss point within the element, `0..8`.
    pub point: usize,
    /// Scaled gradient `∇_h y`.
    pub fh: Matrix3<f64>,
    /// In-plane strain `∇'y'ᵀ∇'y' + ∇'y₃ ⊗ ∇'y₃`.
    pub cprime: Matrix2<f64>,
}

/// Scaled gradient at every Gauss point of every trilinear element.
pub fn grad_h(y: &DeformationField3) -> Vec<StrainSample> {
    let g = y.grid();
    let kernel = HexKernel::new(g);
    let mut out = Vec::with_capacity(8 * g.n_elements());
    let mut element = 0;
    for i in 0..g.nx - 1 {
        for j in 0..g.ny - 1 {
            for k in 0..g.nz - 1 {
                let nodes = HexKernel::nodes(g, i, j, k);
                for point in 0..8 {
                    let hd = element_displacement_gradient(&kernel, point, &nodes, y.displacement(), y.h());
                    let fh = Matrix3::identity() + hd;
                    let fp = fh.fixed_view::<3, 2>(0, 0);
                    let cprime = fp.transpose() * fp;
                    out.push(StrainSample {
                        element,
                        point,
                        fh,
                        cprime,
                    });
                }
                element += 1;
            }
        }
    }
    out
}

/// `(∂₁d, ∂₂d, h⁻¹∂₃d)` at one Gauss point.
#[inline]
pub(crate) fn element_displacement_gradient(
    kernel: &HexKernel,
    point: usize,
    nodes: &[usize; 8],
    disp: &[f64],
    h: f64,
) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for (a, &n) in nodes.iter().enumerate() {
        let gr = kernel.grad[point][a];
        for c in 0..3 {
            let d = disp[3 * n + c];
            m[(c, 0)] += d * gr[0];
            m[(c, 1)] += d * gr[1];
            m[(c, 2)] += d * gr[2];
        }
    }
    for c in 0..3 {
        m[(c, 2)] /= h;
    }
    m
}

/// Scaled second derivatives of the displacement at one node, per component.
///
/// `d12` is the mixed in-plane derivative; it appears twice in the squared
/// norm (as `∂₁∂₂` and `∂₂∂₁`). The thickness-mixed entries
/// `h⁻¹∂ᵢ∂₃` and `h⁻²∂₃²` appear once each.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SecondGradient {
    pub d11: [f64; 3],
    pub d12: [f64; 3],
    pub d22: [f64; 3],
    pub d13: [f64; 3],
    pub d23: [f64; 3],
    pub d33: [f64; 3],
}

impl SecondGradient {
    pub fn norm_squared(&self) -> f64 {
        (0..3)
            .map(|c| {
                self.d11[c].powi(2)
                    + 2.0 * self.d12[c].powi(2)
                    + self.d22[c].powi(2)
                    + self.d13[c].powi(2)
                    + self.d23[c].powi(2)
                    + self.d33[c].powi(2)
            })
            .sum()
    }
}

/// The six second-derivative operators as tensor products of 1D stencils.
#[derive(Debug, Clone)]
pub(crate) struct SecondDerivativeOps {
    sx1: Vec<Stencil>,
    sy1: Vec<Stencil>,
    sz1: Vec<Stencil>,
    sx2: Vec<Stencil>,
    sy2: Vec<Stencil>,
    sz2: Vec<Stencil>,
    /// `∂₃²` with unit spacing; integer weights keep sums exact.
    sz2_unit: Vec<Stencil>,
    inv_h: f64,
}

/// Which scaled second derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SecondOp {
    D11,
    D12,
    D22,
    D13,
    D23,
    D33,
}

impl SecondOp {
    pub const ALL: [SecondOp; 6] = [
        SecondOp::D11,
        SecondOp::D12,
        SecondOp::D22,
        SecondOp::D13,
        SecondOp::D23,
        SecondOp::D33,
    ];

    /// Multiplicity in the squared norm.
    pub fn multiplicity(self) -> f64 {
        if self == SecondOp::D12 {
            2.0
        } else {
            1.0
        }
    }
}

impl SecondDerivativeOps {
    pub fn new(grid: &Grid3, h: f64) -> Self {
        Self {
            sx1: stencil::first_derivative(grid.nx, grid.dx()),
            sy1: stencil::first_derivative(grid.ny, grid.dy()),
            sz1: stencil::first_derivative(grid.nz, grid.dz()),
            sx2: stencil::second_derivative(grid.nx, grid.dx()),
            sy2: stencil::second_derivative(grid.ny, grid.dy()),
            sz2: stencil::second_derivative(grid.nz, grid.dz()),
            sz2_unit: stencil::second_derivative(grid.nz, 1.0),
            inv_h: 1.0 / h,
        }
    }

    /// Calls `f(i', j', k', weight)` for each stencil entry of `op` at node
    /// `(i, j, k)`.
    pub fn for_each(
        &self,
        op: SecondOp,
        (i, j, k): (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize, f64),
    ) {
        match op {
            SecondOp::D11 => self.sx2[i].iter().for_each(|(a, w)| f(a, j, k, w)),
            SecondOp::D22 => self.sy2[j].iter().for_each(|(b, w)| f(i, b, k, w)),
            SecondOp::D33 => {
                let s = self.inv_h * self.inv_h;
                self.sz2[k].iter().for_each(|(c, w)| f(i, j, c, s * w))
            }
            SecondOp::D12 => {
                for (a, wa) in self.sx1[i].iter() {
                    for (b, wb) in self.sy1[j].iter() {
                        f(a, b, k, wa * wb);
                    }
                }
            }
            SecondOp::D13 => {
                for (a, wa) in self.sx1[i].iter() {
                    for (c, wc) in self.sz1[k].iter() {
                        f(a, j, c, self.inv_h * wa * wc);
                    }
                }
            }
            SecondOp::D23 => {
                for (b, wb) in self.sy1[j].iter() {
                    for (c, wc) in self.sz1[k].iter() {
                        f(i, b, c, self.inv_h * wb * wc);
                    }
                }
            }
        }
    }

    /// `∂₃²` stencil of layer `k` with unit spacing; multiply the result by
    /// [`Self::thickness_scale`].
    pub fn thickness_second(&self, k: usize) -> &Stencil {
        &self.sz2_unit[k]
    }

    /// `1/dz²`.
    pub fn thickness_scale(&self) -> f64 {
        let m = (self.sz2_unit.len() - 1) as f64;
        m * m
    }
}

/// Scaled second derivatives `∂ᵢ∂ⱼy`, `h⁻¹∂ᵢ∂₃y`, `h⁻²∂₃²y` at every node.
/// The reference part `(x', h·x₃)` is affine and contributes nothing.
pub fn second_grads(y: &DeformationField3) -> Result<Vec<SecondGradient>, FieldError> {
    let g = y.grid();
    if g.nz < 3 {
        return Err(FieldError::TooFewLayers(g.nz));
    }
    let ops = SecondDerivativeOps::new(g, y.h());
    let disp = y.displacement();
    let mut out = Vec::with_capacity(g.len());
    for i in 0..g.nx {
        for j in 0..g.ny {
            for k in 0..g.nz {
                let mut sg = SecondGradient::default();
                for op in SecondOp::ALL {
                    let mut val = [0.0; 3];
                    ops.for_each(op, (i, j, k), |a, b, c, w| {
                        let n = g.node(a, b, c);
                        for comp in 0..3 {
                            val[comp] += w * disp[3 * n + comp];
                        }
                    });
                    let slot = match op {
                        SecondOp::D11 => &mut sg.d11,
                        SecondOp::D12 => &mut sg.d12,
                        SecondOp::D22 => &mut sg.d22,
                        SecondOp::D13 => &mut sg.d13,
                        SecondOp::D23 => &mut sg.d23,
                        SecondOp::D33 => &mut sg.d33,
                    };
                    *slot = val;
                }
                out.push(sg);
            }
        }
    }
    Ok(out)
}

/// Trapezoid average over the thickness of one nodal value per 3D node.
pub fn average_x3(grid: &Grid3, values: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), grid.len());
    values.chunks_exact(grid.nz).map(column_average).collect()
}

/// `(½f₀ + f₁ + … + f_{m−1} + ½f_m) / m`.
pub(crate) fn column_average(col: &[f64]) -> f64 {
    let m = col.len() - 1;
    let inner: f64 = col[1..m].iter().sum();
    (0.5 * col[0] + inner + 0.5 * col[m]) / m as f64
}

/// Values `a + b·x₃` at the thickness nodes, rounded onto a common dyadic
/// lattice so that discrete second differences across the column vanish
/// exactly and the column average reproduces the rounded `a`.
pub(crate) fn affine_column(a: f64, b: f64, nz: usize, out: &mut [f64]) {
    let m = (nz - 1) as i64;
    let scale = a.abs().max(0.5 * b.abs());
    if scale == 0.0 || !scale.is_finite() {
        for (k, o) in out.iter_mut().enumerate() {
            let x3 = (2 * k as i64 - m) as f64 / (2 * m) as f64;
            *o = a + b * x3;
        }
        return;
    }
    // headroom for stencils with coefficients up to 5 on 2^47-sized integers
    let quantum = 2f64.powi(scale.log2().floor() as i32 - 46);
    let na = (a / quantum).round();
    let nb = (b / (2.0 * m as f64 * quantum)).round();
    for (k, o) in out.iter_mut().enumerate() {
        *o = quantum * (na + (2 * k as i64 - m) as f64 * nb);
    }
}

/// Mid-surface unknowns `(u, v, φ)` on a planar grid, stored node-major as
/// `[u1, u2, v, φ1, φ2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MidsurfaceState {
    grid: Grid2,
    values: Vec<f64>,
}

/// Number of unknowns per planar node.
pub const STATE_COMPONENTS: usize = 5;

impl MidsurfaceState {
    pub fn zeros(grid: Grid2) -> Self {
        Self {
            grid,
            values: vec![0.0; STATE_COMPONENTS * grid.len()],
        }
    }

    pub fn from_values(grid: Grid2, values: Vec<f64>) -> Result<Self, FieldError> {
        let expected = STATE_COMPONENTS * grid.len();
        if values.len() != expected {
            return Err(FieldError::SizeMismatch {
                expected,
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    /// State sampling `(x1, x2) ↦ [u1, u2, v, φ1, φ2]`.
    pub fn from_fn(grid: Grid2, f: impl Fn(f64, f64) -> [f64; 5]) -> Self {
        let mut s = Self::zeros(grid);
        for i in 0..grid.nx {
            for j in 0..grid.ny {
                let n = grid.node(i, j);
                let vals = f(grid.x1(i), grid.x2(j));
                s.values[STATE_COMPONENTS * n..STATE_COMPONENTS * (n + 1)].copy_from_slice(&vals);
            }
        }
        s
    }

    pub fn grid(&self) -> &Grid2 {
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

    pub fn u(&self, n: usize) -> [f64; 2] {
        [self.values[5 * n], self.values[5 * n + 1]]
    }

    pub fn v(&self, n: usize) -> f64 {
        self.values[5 * n + 2]
    }

    pub fn phi(&self, n: usize) -> [f64; 2] {
        [self.values[5 * n + 3], self.values[5 * n + 4]]
    }

    /// Mask over the flat values, `true` for boundary nodes (all components).
    pub fn boundary_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.values.len());
        for i in 0..self.grid.nx {
            for j in 0..self.grid.ny {
                let b = self.grid.is_boundary(i, j);
                mask.extend(std::iter::repeat_n(b, STATE_COMPONENTS));
            }
        }
        mask
    }

    /// Whether every field vanishes on `∂S`.
    pub fn vanishes_on_boundary(&self) -> bool {
        self.values
            .iter()
            .zip(self.boundary_mask())
            .all(|(x, b)| !b || *x == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// CSV with header `i,j,x1,x2,u1,u2,v,phi1,phi2`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "i,j,x1,x2,u1,u2,v,phi1,phi2")?;
        for i in 0..self.grid.nx {
            for j in 0..self.grid.ny {
                let n = self.grid.node(i, j);
                let [u1, u2] = self.u(n);
                let [p1, p2] = self.phi(n);
                writeln!(
                    w,
                    "{i},{j},{},{},{u1},{u2},{},{p1},{p2}",
                    self.grid.x1(i),
                    self.grid.x2(j),
                    self.v(n)
                )?;
            }
        }
        Ok(())
    }

    /// Snapshot: header `PLT2 nx ny lx ly`, newline, then the five components
    /// per node as little-endian `f64`.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> Result<(), FieldError> {
        let g = &self.grid;
        writeln!(w, "PLT2 {} {} {} {}", g.nx, g.ny, g.lx, g.ly)?;
        for x in &self.values {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(mut r: R) -> Result<Self, FieldError> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 5 || parts[0] != "PLT2" {
            return Err(FieldError::Format(format!("bad header `{}`", header.trim())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| FieldError::Format(e.to_string()));
        let float = |s: &str| s.parse::<f64>().map_err(|e| FieldError::Format(e.to_string()));
        let grid = Grid2::new(int(parts[1])?, int(parts[2])?, float(parts[3])?, float(parts[4])?)?;
        let values = read_f64s(&mut r, STATE_COMPONENTS * grid.len())?;
        Self::from_values(grid, values)
    }
}

/// Nodal first and second derivatives on a planar grid.
#[derive(Debug, Clone)]
pub(crate) struct PlanarOps {
    pub sx1: Vec<Stencil>,
    pub sy1: Vec<Stencil>,
    pub sx2: Vec<Stencil>,
    pub sy2: Vec<Stencil>,
}

impl PlanarOps {
    pub fn new(grid: &Grid2) -> Self {
        Self {
            sx1: stencil::first_derivative(grid.nx, grid.dx()),
            sy1: stencil::first_derivative(grid.ny, grid.dy()),
            sx2: stencil::second_derivative(grid.nx, grid.dx()),
            sy2: stencil::second_derivative(grid.ny, grid.dy()),
        }
    }

    /// Nodal gradient of a scalar nodal field read through `f`.
    pub fn gradient(&self, grid: &Grid2, i: usize, j: usize, f: impl Fn(usize) -> f64) -> [f64; 2] {
        [
            self.sx1[i].apply(|a| f(grid.node(a, j))),
            self.sy1[j].apply(|b| f(grid.node(i, b))),
        ]
    }
}

/// Thickness-dependent bending diagnostic `h^{−σ/2} Qᵀ(∇'y' − ∫∇'y' dx₃)`,
/// one 2×2 matrix per 3D node.
#[derive(Debug, Clone, PartialEq)]
pub struct BendingField {
    pub grid: Grid3,
    pub values: Vec<Matrix2<f64>>,
}

/// Normalized mid-surface quantities of a 3D deformation.
///
/// `u = h^{−σ/2}⟨y' − x'⟩`, `v = h^{1−σ/2}⟨y₃⟩`, and `φ = h^{−σ/2}⟨Qᵀ∂₃y'⟩`
/// where `⟨·⟩` is the thickness average and `Q` the optional in-plane rotation
/// field (identity when absent). The full thickness-dependent `φ` is not
/// stored; its fluctuation is exported through [`BendingField`].
pub fn extract_midsurface(
    y: &DeformationField3,
    sigma: f64,
    q: Option<&RotationField>,
) -> (MidsurfaceState, BendingField) {
    let g = *y.grid();
    let plane = g.plane();
    let h = y.h();
    let su = h.powf(-0.5 * sigma);
    let sv = h.powf(1.0 - 0.5 * sigma);
    let sz = stencil::first_derivative(g.nz, g.dz());
    let sx = stencil::first_derivative(g.nx, g.dx());
    let sy = stencil::first_derivative(g.ny, g.dy());
    let disp = y.displacement();

    let rotation = |n2: usize| -> Matrix2<f64> {
        match q {
            Some(field) => field.planar(n2),
            None => Matrix2::identity(),
        }
    };

    let mut state = MidsurfaceState::zeros(plane);
    let mut bending = BendingField {
        grid: g,
        values: vec![Matrix2::zeros(); g.len()],
    };
    let mut col = vec![0.0; g.nz];
    let mut phi_col = vec![[0.0; 2]; g.nz];
    let mut grads = vec![Matrix2::zeros(); g.nz];
    for i in 0..g.nx {
        for j in 0..g.ny {
            let n2 = plane.node(i, j);
            let qt = rotation(n2).transpose();
            let vals = &mut state.values[5 * n2..5 * n2 + 5];
            for c in 0..3 {
                for (k, slot) in col.iter_mut().enumerate() {
                    *slot = disp[3 * g.node(i, j, k) + c];
                }
                let avg = column_average(&col);
                vals[c] = if c < 2 { su * avg } else { sv * avg };
            }
            for k in 0..g.nz {
                let mut d3 = nalgebra::Vector2::zeros();
                for c in 0..2 {
                    d3[c] = sz[k].apply(|kk| disp[3 * g.node(i, j, kk) + c]);
                }
                let rotated = qt * d3;
                phi_col[k] = [su * rotated[0], su * rotated[1]];
                let mut gm = Matrix2::zeros();
                for c in 0..2 {
                    gm[(c, 0)] = sx[i].apply(|ii| disp[3 * g.node(ii, j, k) + c]);
                    gm[(c, 1)] = sy[j].apply(|jj| disp[3 * g.node(i, jj, k) + c]);
                }
                grads[k] = gm;
            }
            for c in 0..2 {
                for (k, slot) in col.iter_mut().enumerate() {
                    *slot = phi_col[k][c];
                }
                vals[3 + c] = column_average(&col);
            }
            let mut mean = Matrix2::zeros();
            for r in 0..2 {
                for s in 0..2 {
                    for (k, slot) in col.iter_mut().enumerate() {
                        *slot = grads[k][(r, s)];
                    }
                    mean[(r, s)] = column_average(&col);
                }
            }
            for k in 0..g.nz {
                bending.values[g.node(i, j, k)] = qt * (grads[k] - mean) * su;
            }
        }
    }
    (state, bending)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid3 {
        Grid3::new(6, 5, 5, 1.0, 0.8).unwrap()
    }

    #[test]
    fn identity_configuration_has_identity_strain() {
        let y = DeformationField3::identity(grid(), 0.1).unwrap();
        for s in grad_h(&y) {
            assert_eq!(s.fh, Matrix3::identity());
            assert_eq!(s.cprime, Matrix2::identity());
        }
    }

    #[test]
    fn in_plane_rotation_keeps_identity_strain() {
        let (s, c) = 0.4f64.sin_cos();
        let h = 0.2;
        let y = DeformationField3::from_fn(grid(), h, |x1, x2, x3| {
            [c * x1 - s * x2, s * x1 + c * x2, h * x3]
        })
        .unwrap();
        for sample in grad_h(&y) {
            assert!((sample.cprime - Matrix2::identity()).norm() < 1e-13);
        }
    }

    #[test]
    fn tilted_thickness_coordinate() {
        let (h, a) = (0.1, 0.3);
        let y = DeformationField3::from_fn(grid(), h, |x1, x2, x3| [x1, x2, h * x3 + a * x1])
            .unwrap();
        for s in grad_h(&y) {
            assert!((s.fh[(2, 0)] - a).abs() < 1e-13);
            let expected = Matrix2::new(1.0 + a * a, 0.0, 0.0, 1.0);
            assert!((s.cprime - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn second_derivatives_of_quadratic_deflection() {
        let h: f64 = 0.05;
        let amp = h.powf(1.5);
        let y = DeformationField3::from_displacement_fn(grid(), h, |x1, x2, _| {
            [0.0, 0.0, amp * (x1 * x1 + 3.0 * x1 * x2 - x2 * x2)]
        })
        .unwrap();
        for sg in second_grads(&y).unwrap() {
            assert!((sg.d11[2] - 2.0 * amp).abs() < 1e-12);
            assert!((sg.d12[2] - 3.0 * amp).abs() < 1e-12);
            assert!((sg.d22[2] + 2.0 * amp).abs() < 1e-12);
            assert!(sg.d13[2].abs() < 1e-12 && sg.d33[2].abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_thickness_derivative_picks_up_rotation_gradient() {
        let h = 0.1;
        let y = DeformationField3::from_displacement_fn(grid(), h, |x1, x2, x3| {
            [x3 * h * (x1 + 2.0 * x2), 0.0, 0.0]
        })
        .unwrap();
        for sg in second_grads(&y).unwrap() {
            assert!((sg.d13[0] - 1.0).abs() < 1e-12);
            assert!((sg.d23[0] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn thickness_average() {
        let g = Grid3::new(4, 4, 33, 1.0, 1.0).unwrap();
        let constant = vec![2.5; g.len()];
        assert!(average_x3(&g, &constant).iter().all(|&v| v == 2.5));
        let odd: Vec<f64> = (0..g.len()).map(|n| g.x3(n % g.nz)).collect();
        assert!(average_x3(&g, &odd).iter().all(|v| v.abs() < 1e-14));
        let square: Vec<f64> = (0..g.len()).map(|n| g.x3(n % g.nz).powi(2)).collect();
        // trapezoid rule error for x² is exactly dz²/6
        let expected = 1.0 / 12.0 + g.dz() * g.dz() / 6.0;
        assert!(average_x3(&g, &square).iter().all(|v| (v - expected).abs() < 1e-15));
    }

    #[test]
    fn affine_columns_have_vanishing_second_differences() {
        let mut col = vec![0.0; 8];
        affine_column(0.123456789, -3.75e-3, 8, &mut col);
        for k in 1..7 {
            assert_eq!(col[k - 1] - 2.0 * col[k] + col[k + 1], 0.0);
        }
        assert_eq!(2.0 * col[0] - 5.0 * col[1] + 4.0 * col[2] - col[3], 0.0);
        assert!((column_average(&col) - 0.123456789).abs() < 1e-14);
    }

    #[test]
    fn boundary_condition_application() {
        let mut y = DeformationField3::from_displacement_fn(grid(), 0.1, |_, _, _| [1.0, 2.0, 3.0])
            .unwrap();
        assert!(!y.satisfies_bc());
        y.apply_bc();
        assert!(y.satisfies_bc());
        let once = y.clone();
        y.apply_bc();
        assert_eq!(once, y);
        let g = *y.grid();
        assert_eq!(y.y(0, 2, 1), [0.0, g.plane().x2(2), 0.1 * g.x3(1)]);
        assert_eq!(y.displacement()[3 * g.node(2, 2, 1)], 1.0);
    }

    #[test]
    fn snapshot_round_trip() {
        let y = DeformationField3::from_displacement_fn(grid(), 0.25, |x1, x2, x3| {
            [0.5 * x1 * x2, x3, x1 - x2]
        })
        .unwrap();
        let mut buf = Vec::new();
        y.write_snapshot(&mut buf).unwrap();
        assert!(buf.starts_with(b"PLT3 6 5 5 1 0.8 0.25\n"));
        let back = DeformationField3::read_snapshot(&buf[..]).unwrap();
        for (a, b) in back.displacement().iter().zip(y.displacement()) {
            assert!((a - b).abs() < 1e-15);
        }

        let s = MidsurfaceState::from_fn(Grid2::unit(4).unwrap(), |x1, x2| [x1, x2, 1.0, -x1, 0.5]);
        let mut buf = Vec::new();
        s.write_snapshot(&mut buf).unwrap();
        assert_eq!(MidsurfaceState::read_snapshot(&buf[..]).unwrap(), s);
    }

    #[test]
    fn extraction_of_reference_configuration_is_zero() {
        let y = DeformationField3::identity(grid(), 0.1).unwrap();
        let (state, bending) = extract_midsurface(&y, 5.0, None);
        assert_eq!(state.max_abs(), 0.0);
        assert!(bending.values.iter().all(|m| m.norm() == 0.0));
    }

    #[test]
    fn extraction_of_constant_deflection() {
        let (h, sigma, v0) = (0.1_f64, 5.0, 0.7);
        let amp = h.powf(0.5 * sigma - 1.0);
        let y = DeformationField3::from_displacement_fn(grid(), h, |_, _, _| [0.0, 0.0, amp * v0])
            .unwrap();
        let (state, _) = extract_midsurface(&y, sigma, None);
        for n in 0..state.grid().len() {
            assert!((state.v(n) - v0).abs() < 1e-12);
        }
    }
}
