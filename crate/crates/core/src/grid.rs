//! Discrete slab `[0,Lx) x [0,Ly) x [-D,0]`: Fourier calculus in the two periodic
//! directions, fourth-order finite differences across the depth.
//!
//! Fields are stored as `Array3` of shape `(nx, ny, nz)`. Depth index `k = 0` is the
//! top boundary `y3 = 0` and `y3` decreases with `k`.

use std::fmt;
use std::sync::Arc;

use ndarray::{s, Array2, Array3, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

pub type ScalarField = Array3<f64>;
pub type BoundaryField = Array2<f64>;
/// Three components indexed by `alpha = 0, 1, 2`.
pub type VectorField = [ScalarField; 3];
/// `m[mu][alpha]`, e.g. the cofactor `a^{mu alpha}`.
pub type MatrixField = [[ScalarField; 3]; 3];

/// Fourier coefficients of a 3-D field, layout `[k][j][i]` (x fastest), unnormalised.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub data: Vec<Complex64>,
}

/// Fourier coefficients of a boundary field, layout `[j][i]`, unnormalised.
#[derive(Clone, Debug)]
pub struct BoundarySpectrum {
    pub data: Vec<Complex64>,
}

/// A tangential Fourier multiplier sampled on the mode lattice, layout `[j][i]`.
#[derive(Clone, Debug)]
pub struct Symbol {
    pub data: Vec<Complex64>,
}

#[derive(Clone)]
pub struct SlabGrid {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub depth: f64,
    pub dz: f64,
    z: Vec<f64>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    fx: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SlabGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SlabGrid")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("nz", &self.nz)
            .field("lx", &self.lx)
            .field("ly", &self.ly)
            .field("depth", &self.depth)
            .finish()
    }
}

impl PartialEq for SlabGrid {
    fn eq(&self, o: &Self) -> bool {
        self.nx == o.nx
            && self.ny == o.ny
            && self.nz == o.nz
            && self.lx == o.lx
            && self.ly == o.ly
            && self.depth == o.depth
    }
}

fn signed_mode(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// Boundary block of the diagonal-norm summation-by-parts first derivative
/// (fourth order inside, second order on the four edge rows).
const D1_SBP: [[f64; 6]; 4] = [
    [-24.0 / 17.0, 59.0 / 34.0, -4.0 / 17.0, -3.0 / 34.0, 0.0, 0.0],
    [-0.5, 0.0, 0.5, 0.0, 0.0, 0.0],
    [4.0 / 43.0, -59.0 / 86.0, 0.0, 59.0 / 86.0, -4.0 / 43.0, 0.0],
    [3.0 / 98.0, 0.0, -59.0 / 98.0, 0.0, 32.0 / 49.0, -4.0 / 49.0],
];
/// Weights of the matching norm on the edge rows, in units of the spacing.
pub const SBP_NORM_EDGE: [f64; 4] = [17.0 / 48.0, 59.0 / 48.0, 43.0 / 48.0, 49.0 / 48.0];
const D1_INNER: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const D2_EDGE0: [f64; 6] = [45.0, -154.0, 214.0, -156.0, 61.0, -10.0];
const D2_EDGE1: [f64; 6] = [10.0, -15.0, -4.0, 14.0, -6.0, 1.0];
const D2_INNER: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];

/// d/dk in index space with the summation-by-parts closure; needs `n >= 8`.
fn stencil_d1(src: &[f64], dst: &mut [f64]) {
    let n = src.len();
    for k in 4..n - 4 {
        dst[k] = D1_INNER.iter().enumerate().map(|(q, w)| w * src[k - 2 + q]).sum::<f64>() / 12.0;
    }
    for (r, row) in D1_SBP.iter().enumerate() {
        dst[r] = row.iter().enumerate().map(|(q, w)| w * src[q]).sum();
        dst[n - 1 - r] = -row.iter().enumerate().map(|(q, w)| w * src[n - 1 - q]).sum::<f64>();
    }
}

const D1_EDGE0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
const D1_EDGE1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];

/// d/dk in index space, fourth order up to the boundary rows (used for norms).
fn stencil_d1_accurate(src: &[f64], dst: &mut [f64]) {
    let n = src.len();
    let dot = |c: &[f64], off: usize| c.iter().enumerate().map(|(q, w)| w * src[off + q]).sum::<f64>();
    dst[0] = dot(&D1_EDGE0, 0) / 12.0;
    dst[1] = dot(&D1_EDGE1, 0) / 12.0;
    for k in 2..n - 2 {
        dst[k] = dot(&D1_INNER, k - 2) / 12.0;
    }
    let rdot = |c: &[f64]| c.iter().enumerate().map(|(q, w)| w * src[n - 1 - q]).sum::<f64>();
    dst[n - 1] = -rdot(&D1_EDGE0) / 12.0;
    dst[n - 2] = -rdot(&D1_EDGE1) / 12.0;
}

/// d^2/dk^2 in index space, fourth order.
fn stencil_d2(src: &[f64], dst: &mut [f64]) {
    let n = src.len();
    let dot = |c: &[f64], off: usize| c.iter().enumerate().map(|(q, w)| w * src[off + q]).sum::<f64>();
    dst[0] = dot(&D2_EDGE0, 0) / 12.0;
    dst[1] = dot(&D2_EDGE1, 0) / 12.0;
    for k in 2..n - 2 {
        dst[k] = dot(&D2_INNER, k - 2) / 12.0;
    }
    let rdot = |c: &[f64]| c.iter().enumerate().map(|(q, w)| w * src[n - 1 - q]).sum::<f64>();
    dst[n - 1] = rdot(&D2_EDGE0) / 12.0;
    dst[n - 2] = rdot(&D2_EDGE1) / 12.0;
}

impl SlabGrid {
    pub fn new(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, depth: f64) -> Result<Self> {
        if nx < 8 || ny < 8 || nx % 2 != 0 || ny % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "tangential sizes must be even and >= 8, got {nx} x {ny}"
            )));
        }
        if nz < 8 {
            return Err(Error::InvalidGrid(format!("nz must be >= 8, got {nz}")));
        }
        if !(lx > 0.0 && ly > 0.0 && depth > 0.0) {
            return Err(Error::InvalidGrid("lengths must be positive".into()));
        }
        let dz = depth / (nz - 1) as f64;
        let z = (0..nz).map(|k| if k == 0 { 0.0 } else { -(k as f64) * dz }).collect();
        let two_pi = 2.0 * std::f64::consts::PI;
        let kx = (0..nx).map(|m| two_pi * signed_mode(m, nx) as f64 / lx).collect();
        let ky = (0..ny).map(|m| two_pi * signed_mode(m, ny) as f64 / ly).collect();
        let mut planner = FftPlanner::new();
        Ok(SlabGrid {
            nx,
            ny,
            nz,
            lx,
            ly,
            depth,
            dz,
            z,
            kx,
            ky,
            fx: planner.plan_fft_forward(nx),
            ix: planner.plan_fft_inverse(nx),
            fy: planner.plan_fft_forward(ny),
            iy: planner.plan_fft_inverse(ny),
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    /// Depth nodes, `z[0] = 0` and strictly decreasing.
    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn min_spacing(&self) -> f64 {
        self.dx().min(self.dy()).min(self.dz)
    }

    pub fn volume(&self) -> f64 {
        self.lx * self.ly * self.depth
    }

    pub fn y1(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn y2(&self, j: usize) -> f64 {
        j as f64 * self.dy()
    }

    pub fn zeros(&self) -> ScalarField {
        Array3::zeros((self.nx, self.ny, self.nz))
    }

    pub fn zeros_vec(&self) -> VectorField {
        [self.zeros(), self.zeros(), self.zeros()]
    }

    pub fn zeros_boundary(&self) -> BoundaryField {
        Array2::zeros((self.nx, self.ny))
    }

    /// Samples `f(y1, y2, y3)` at the nodes.
    pub fn field(&self, f: impl Fn(f64, f64, f64) -> f64) -> ScalarField {
        Array3::from_shape_fn((self.nx, self.ny, self.nz), |(i, j, k)| {
            f(self.y1(i), self.y2(j), self.z[k])
        })
    }

    pub fn boundary(&self, f: impl Fn(f64, f64) -> f64) -> BoundaryField {
        Array2::from_shape_fn((self.nx, self.ny), |(i, j)| f(self.y1(i), self.y2(j)))
    }

    /// Angular wavenumbers `(xi_1, xi_2)` of lattice entry `(i, j)`.
    pub fn wavenumber(&self, i: usize, j: usize) -> (f64, f64) {
        (self.kx[i], self.ky[j])
    }

    pub fn is_nyquist_x(&self, i: usize) -> bool {
        i == self.nx / 2
    }

    pub fn is_nyquist_y(&self, j: usize) -> bool {
        j == self.ny / 2
    }

    // ---------------------------------------------------------------- transforms

    pub fn forward(&self, f: &ScalarField) -> Spectrum {
        let (nx, ny, nz) = self.shape();
        let mut a = vec![Complex64::default(); nx * ny * nz];
        for ((i, j, k), &val) in f.indexed_iter() {
            a[(k * nx + i) * ny + j] = Complex64::new(val, 0.0);
        }
        self.fy.process(&mut a);
        let mut b = vec![Complex64::default(); nx * ny * nz];
        for k in 0..nz {
            for i in 0..nx {
                let src = &a[(k * nx + i) * ny..(k * nx + i + 1) * ny];
                for (j, c) in src.iter().enumerate() {
                    b[(k * ny + j) * nx + i] = *c;
                }
            }
        }
        self.fx.process(&mut b);
        Spectrum { data: b }
    }

    pub fn inverse(&self, s: &Spectrum) -> ScalarField {
        let (nx, ny, nz) = self.shape();
        let mut b = s.data.clone();
        self.ix.process(&mut b);
        let mut a = vec![Complex64::default(); nx * ny * nz];
        for k in 0..nz {
            for j in 0..ny {
                let src = &b[(k * ny + j) * nx..(k * ny + j + 1) * nx];
                for (i, c) in src.iter().enumerate() {
                    a[(k * nx + i) * ny + j] = *c;
                }
            }
        }
        self.iy.process(&mut a);
        let norm = 1.0 / (nx * ny) as f64;
        Array3::from_shape_fn((nx, ny, nz), |(i, j, k)| a[(k * nx + i) * ny + j].re * norm)
    }

    pub fn forward_boundary(&self, g: &BoundaryField) -> BoundarySpectrum {
        let (nx, ny) = (self.nx, self.ny);
        let mut a = vec![Complex64::default(); nx * ny];
        for ((i, j), &val) in g.indexed_iter() {
            a[i * ny + j] = Complex64::new(val, 0.0);
        }
        self.fy.process(&mut a);
        let mut b = vec![Complex64::default(); nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                b[j * nx + i] = a[i * ny + j];
            }
        }
        self.fx.process(&mut b);
        BoundarySpectrum { data: b }
    }

    pub fn inverse_boundary(&self, s: &BoundarySpectrum) -> BoundaryField {
        let (nx, ny) = (self.nx, self.ny);
        let mut b = s.data.clone();
        self.ix.process(&mut b);
        let mut a = vec![Complex64::default(); nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                a[i * ny + j] = b[j * nx + i];
            }
        }
        self.iy.process(&mut a);
        let norm = 1.0 / (nx * ny) as f64;
        Array2::from_shape_fn((nx, ny), |(i, j)| a[i * ny + j].re * norm)
    }

    /// Builds a multiplier from a function of `(xi_1, xi_2, i, j)`.
    pub fn symbol(&self, f: impl Fn(f64, f64, usize, usize) -> Complex64) -> Symbol {
        let mut data = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                data.push(f(self.kx[i], self.ky[j], i, j));
            }
        }
        Symbol { data }
    }

    /// Radial multiplier `m(|xi|)`.
    pub fn radial_symbol(&self, m: impl Fn(f64) -> f64) -> Symbol {
        self.symbol(|a, b, _, _| Complex64::new(m((a * a + b * b).sqrt()), 0.0))
    }

    /// Symbol of `d/dy_dir`, `dir` in {1, 2}; zero on the Nyquist line so that real
    /// fields stay real.
    pub fn dbar_symbol(&self, dir: usize) -> Symbol {
        self.symbol(|a, b, i, j| match dir {
            1 if !self.is_nyquist_x(i) => Complex64::new(0.0, a),
            2 if !self.is_nyquist_y(j) => Complex64::new(0.0, b),
            _ => Complex64::default(),
        })
    }

    /// Symbol of `d1^p d2^q`.
    pub fn dbar_power_symbol(&self, p: usize, q: usize) -> Symbol {
        self.symbol(|a, b, i, j| {
            let fx = if p % 2 == 1 && self.is_nyquist_x(i) {
                Complex64::default()
            } else {
                Complex64::new(0.0, a).powu(p as u32)
            };
            let fy = if q % 2 == 1 && self.is_nyquist_y(j) {
                Complex64::default()
            } else {
                Complex64::new(0.0, b).powu(q as u32)
            };
            fx * fy
        })
    }

    /// Symbol of the tangential Laplacian `-|xi|^2`.
    pub fn lap_symbol(&self) -> Symbol {
        self.symbol(|a, b, _, _| Complex64::new(-(a * a + b * b), 0.0))
    }

    /// Two-thirds truncation mask.
    pub fn dealias_symbol(&self) -> Symbol {
        let (cx, cy) = ((self.nx / 3) as i64, (self.ny / 3) as i64);
        self.symbol(|_, _, i, j| {
            let keep = signed_mode(i, self.nx).abs() <= cx && signed_mode(j, self.ny).abs() <= cy;
            Complex64::new(if keep { 1.0 } else { 0.0 }, 0.0)
        })
    }

    pub fn apply_symbol(&self, s: &Spectrum, m: &Symbol) -> Spectrum {
        let layer = self.nx * self.ny;
        let mut data = s.data.clone();
        for chunk in data.chunks_mut(layer) {
            for (c, w) in chunk.iter_mut().zip(&m.data) {
                *c *= *w;
            }
        }
        Spectrum { data }
    }

    pub fn apply_symbol_boundary(&self, s: &BoundarySpectrum, m: &Symbol) -> BoundarySpectrum {
        BoundarySpectrum {
            data: s.data.iter().zip(&m.data).map(|(c, w)| c * w).collect(),
        }
    }

    pub fn multiply(&self, f: &ScalarField, m: &Symbol) -> ScalarField {
        self.inverse(&self.apply_symbol(&self.forward(f), m))
    }

    pub fn multiply_boundary(&self, g: &BoundaryField, m: &Symbol) -> BoundaryField {
        self.inverse_boundary(&self.apply_symbol_boundary(&self.forward_boundary(g), m))
    }

    // ---------------------------------------------------------------- derivatives

    /// Exact derivative of the trigonometric interpolant along `y_dir`, `dir` in {1, 2}.
    pub fn dbar(&self, f: &ScalarField, dir: usize) -> ScalarField {
        self.multiply(f, &self.dbar_symbol(dir))
    }

    /// Both tangential derivatives from one forward transform.
    pub fn dbar_both(&self, f: &ScalarField) -> [ScalarField; 2] {
        let s = self.forward(f);
        [
            self.inverse(&self.apply_symbol(&s, &self.dbar_symbol(1))),
            self.inverse(&self.apply_symbol(&s, &self.dbar_symbol(2))),
        ]
    }

    pub fn dbar_boundary(&self, g: &BoundaryField, dir: usize) -> BoundaryField {
        self.multiply_boundary(g, &self.dbar_symbol(dir))
    }

    fn along_z(&self, f: &ScalarField, scale: f64, op: fn(&[f64], &mut [f64])) -> ScalarField {
        let mut out = self.zeros();
        let mut src = vec![0.0; self.nz];
        let mut dst = vec![0.0; self.nz];
        for i in 0..self.nx {
            for j in 0..self.ny {
                for (k, v) in src.iter_mut().enumerate() {
                    *v = f[[i, j, k]];
                }
                op(&src, &mut dst);
                for (k, v) in dst.iter().enumerate() {
                    out[[i, j, k]] = v * scale;
                }
            }
        }
        out
    }

    /// `d/dy3`: fourth-order centred differences with a summation-by-parts closure,
    /// which keeps the Dirichlet-top wave problem free of growing boundary modes.
    pub fn dnormal(&self, f: &ScalarField) -> ScalarField {
        // y3 decreases with k
        self.along_z(f, -1.0 / self.dz, stencil_d1)
    }

    /// `d/dy3` with fourth-order one-sided closures; accurate up to the boundary but
    /// not energy stable, so it only serves measurement.
    pub fn dnormal_accurate(&self, f: &ScalarField) -> ScalarField {
        self.along_z(f, -1.0 / self.dz, stencil_d1_accurate)
    }

    /// `d^2/dy3^2`, fourth order including the boundary rows.
    pub fn dnormal2(&self, f: &ScalarField) -> ScalarField {
        self.along_z(f, 1.0 / (self.dz * self.dz), stencil_d2)
    }

    /// `d_mu f` for `mu = 1, 2, 3` (returned with index `mu - 1`).
    pub fn grad(&self, f: &ScalarField) -> VectorField {
        let [d1, d2] = self.dbar_both(f);
        [d1, d2, self.dnormal(f)]
    }

    /// Gradient built on `dnormal_accurate`, for measurement.
    pub fn grad_accurate(&self, f: &ScalarField) -> VectorField {
        let [d1, d2] = self.dbar_both(f);
        [d1, d2, self.dnormal_accurate(f)]
    }

    /// `d_mu f`, `mu` in {0, 1, 2} (zero based).
    pub fn partial(&self, f: &ScalarField, mu: usize) -> ScalarField {
        match mu {
            0 => self.dbar(f, 1),
            1 => self.dbar(f, 2),
            _ => self.dnormal(f),
        }
    }

    pub fn dealias(&self, f: &ScalarField) -> ScalarField {
        self.multiply(f, &self.dealias_symbol())
    }

    pub fn trace_top(&self, f: &ScalarField) -> BoundaryField {
        f.slice(s![.., .., 0]).to_owned()
    }

    /// Extends a boundary field constantly in depth.
    pub fn extend_constant(&self, g: &BoundaryField) -> ScalarField {
        Array3::from_shape_fn(self.shape(), |(i, j, _)| g[[i, j]])
    }

    // ---------------------------------------------------------------- quadrature and norms

    /// Trapezoid weights in depth.
    pub fn z_weights(&self) -> Vec<f64> {
        let mut w = vec![self.dz; self.nz];
        w[0] *= 0.5;
        w[self.nz - 1] *= 0.5;
        w
    }

    /// Fourth-order (Gregory) end-corrected trapezoid weights in depth.
    pub fn z_weights_high_order(&self) -> Vec<f64> {
        let mut w = vec![self.dz; self.nz];
        let corr = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
        for (q, c) in corr.iter().enumerate() {
            w[q] = c * self.dz;
            w[self.nz - 1 - q] = c * self.dz;
        }
        w
    }

    fn integrate_with(&self, f: &ScalarField, w: &[f64]) -> f64 {
        let da = self.dx() * self.dy();
        let mut total = 0.0;
        for i in 0..self.nx {
            for j in 0..self.ny {
                let lane = f.slice(s![i, j, ..]);
                total += lane.iter().zip(w).map(|(v, q)| v * q).sum::<f64>();
            }
        }
        total * da
    }

    /// Volume integral: exact tangential quadrature, trapezoid in depth.
    pub fn integrate(&self, f: &ScalarField) -> f64 {
        self.integrate_with(f, &self.z_weights())
    }

    /// Volume integral with the fourth-order depth rule.
    pub fn integrate_high_order(&self, f: &ScalarField) -> f64 {
        self.integrate_with(f, &self.z_weights_high_order())
    }

    pub fn integrate_boundary(&self, g: &BoundaryField) -> f64 {
        g.sum() * self.dx() * self.dy()
    }

    /// `sum_xi w(xi) |f_hat(xi, z)|^2` integrated in depth, normalised so that
    /// `w = 1` gives the squared `L^2` norm.
    fn weighted_energy(&self, s: &Spectrum, w: &[f64], zw: &[f64]) -> f64 {
        let layer = self.nx * self.ny;
        let norm = self.lx * self.ly / (layer as f64 * layer as f64);
        let mut total = 0.0;
        for (k, chunk) in s.data.chunks(layer).enumerate() {
            let e: f64 = chunk.iter().zip(w).map(|(c, q)| q * c.norm_sqr()).sum();
            total += e * zw[k];
        }
        total * norm
    }

    /// `||f||_{L^2(Omega)}^2`.
    pub fn l2_sq(&self, f: &ScalarField) -> f64 {
        self.integrate(&f.mapv(|v| v * v))
    }

    pub fn l2(&self, f: &ScalarField) -> f64 {
        self.l2_sq(f).sqrt()
    }

    /// `d3^p f` built from the first and second difference operators.
    pub fn dnormal_pow(&self, f: &ScalarField, p: usize) -> ScalarField {
        match p {
            0 => f.clone(),
            1 => self.dnormal_accurate(f),
            2 => self.dnormal2(f),
            _ => {
                let g = self.dnormal2(f);
                self.dnormal_pow(&g, p - 2)
            }
        }
    }

    /// Squared `H^k(Omega)` norm, summing `||d^alpha f||^2` over distinct multi-indices.
    pub fn norm_interior_sq(&self, f: &ScalarField, k: usize) -> f64 {
        assert!(k <= 4, "interior norms are implemented for k <= 4");
        let zw = self.z_weights();
        let mut total = 0.0;
        for a3 in 0..=k {
            let g = self.dnormal_pow(f, a3);
            let s = self.forward(&g);
            let m = k - a3;
            let w: Vec<f64> = (0..self.ny)
                .flat_map(|j| (0..self.nx).map(move |i| (i, j)))
                .map(|(i, j)| {
                    let mut acc = 0.0;
                    for a1 in 0..=m {
                        for a2 in 0..=(m - a1) {
                            acc += self.tangential_weight(i, j, a1, a2);
                        }
                    }
                    acc
                })
                .collect();
            total += self.weighted_energy(&s, &w, &zw);
        }
        total
    }

    /// `|symbol of d1^p d2^q|^2` at lattice entry `(i, j)`.
    fn tangential_weight(&self, i: usize, j: usize, p: usize, q: usize) -> f64 {
        if (p % 2 == 1 && self.is_nyquist_x(i)) || (q % 2 == 1 && self.is_nyquist_y(j)) {
            return 0.0;
        }
        self.kx[i].powi(2 * p as i32) * self.ky[j].powi(2 * q as i32)
    }

    pub fn norm_interior(&self, f: &ScalarField, k: usize) -> f64 {
        self.norm_interior_sq(f, k).sqrt()
    }

    pub fn norm_interior_vec(&self, f: &VectorField, k: usize) -> f64 {
        f.iter().map(|c| self.norm_interior_sq(c, k)).sum::<f64>().sqrt()
    }

    pub fn norm_interior_mat(&self, m: &MatrixField, k: usize) -> f64 {
        m.iter()
            .flat_map(|row| row.iter())
            .map(|c| self.norm_interior_sq(c, k))
            .sum::<f64>()
            .sqrt()
    }

    /// `|g|_{H^s(Gamma)}` through the multiplier `(1 + |xi|^2)^s`.
    pub fn norm_boundary(&self, g: &BoundaryField, s: f64) -> f64 {
        self.norm_boundary_with(g, |r| (1.0 + r * r).powf(s))
    }

    /// Homogeneous `|g|_{\dot H^s(Gamma)}`; the zero mode is dropped.
    pub fn norm_boundary_homogeneous(&self, g: &BoundaryField, s: f64) -> f64 {
        self.norm_boundary_with(g, |r| if r == 0.0 { 0.0 } else { r.powf(2.0 * s) })
    }

    fn norm_boundary_with(&self, g: &BoundaryField, w: impl Fn(f64) -> f64) -> f64 {
        let sp = self.forward_boundary(g);
        let layer = (self.nx * self.ny) as f64;
        let mut total = 0.0;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (a, b) = self.wavenumber(i, j);
                total += w((a * a + b * b).sqrt()) * sp.data[j * self.nx + i].norm_sqr();
            }
        }
        (total * self.lx * self.ly / (layer * layer)).sqrt()
    }

    pub fn norm_linf(f: &ScalarField) -> f64 {
        f.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn norm_linf_boundary(g: &BoundaryField) -> f64 {
        g.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// All nine second derivatives `d_mu d_nu f` (symmetric, `mu <= nu` computed once).
    pub fn hessian(&self, f: &ScalarField) -> MatrixField {
        let s = self.forward(f);
        let t = |p: usize, q: usize, src: &Spectrum| {
            self.inverse(&self.apply_symbol(src, &self.dbar_power_symbol(p, q)))
        };
        let d11 = t(2, 0, &s);
        let d12 = t(1, 1, &s);
        let d22 = t(0, 2, &s);
        let f3 = self.dnormal_accurate(f);
        let s3 = self.forward(&f3);
        let d13 = t(1, 0, &s3);
        let d23 = t(0, 1, &s3);
        let d33 = self.dnormal2(f);
        [
            [d11, d12.clone(), d13.clone()],
            [d12, d22, d23.clone()],
            [d13, d23, d33],
        ]
    }

    /// `||d f||_{L^infty}` with the pointwise Euclidean length of the gradient.
    pub fn grad_linf(&self, f: &ScalarField) -> f64 {
        let g = self.grad_accurate(f);
        let mut m = 0.0_f64;
        Zip::from(&g[0]).and(&g[1]).and(&g[2]).for_each(|a, b, c| {
            m = m.max((a * a + b * b + c * c).sqrt());
        });
        m
    }

    /// `||f||_H = ||d f||_{L^infty} + ||d^2 f||_{H^2}`, the Hessian norm summing all
    /// nine ordered entries.
    pub fn norm_script_h(&self, f: &ScalarField) -> f64 {
        let hess = self.hessian(f);
        self.grad_linf(f) + self.norm_interior_mat(&hess, 2)
    }

    /// Vector version: pointwise Frobenius length of `d u` and the summed Hessian norms.
    pub fn norm_script_h_vec(&self, u: &VectorField) -> f64 {
        let grads: Vec<VectorField> = u.iter().map(|c| self.grad_accurate(c)).collect();
        let mut linf = 0.0_f64;
        for idx in 0..self.nx * self.ny * self.nz {
            let mut acc = 0.0;
            for g in &grads {
                for c in g {
                    let v = c.as_slice().expect("standard layout")[idx];
                    acc += v * v;
                }
            }
            linf = linf.max(acc.sqrt());
        }
        let h2: f64 = u
            .iter()
            .map(|c| {
                let h = self.hessian(c);
                self.norm_interior_mat(&h, 2).powi(2)
            })
            .sum();
        linf + h2.sqrt()
    }
}

/// Pointwise helpers for vector and matrix fields.
pub fn add_scaled(dst: &mut ScalarField, src: &ScalarField, c: f64) {
    Zip::from(dst).and(src).for_each(|d, s| *d += c * s);
}

pub fn vec_add_scaled(dst: &mut VectorField, src: &VectorField, c: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        add_scaled(d, s, c);
    }
}

pub fn vec_sub(a: &VectorField, b: &VectorField) -> VectorField {
    [&a[0] - &b[0], &a[1] - &b[1], &a[2] - &b[2]]
}

pub fn vec_scale(a: &VectorField, c: f64) -> VectorField {
    [&a[0] * c, &a[1] * c, &a[2] * c]
}

pub fn mat_sub(a: &MatrixField, b: &MatrixField) -> MatrixField {
    std::array::from_fn(|m| std::array::from_fn(|n| &a[m][n] - &b[m][n]))
}

pub fn mat_identity(grid: &SlabGrid) -> MatrixField {
    std::array::from_fn(|m| {
        std::array::from_fn(|n| if m == n { grid.zeros() + 1.0 } else { grid.zeros() })
    })
}

pub fn check_finite(f: &ScalarField, what: &str) -> Result<()> {
    if f.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Blowup {
            what: what.to_string(),
            value: f64::NAN,
            ceiling: f64::INFINITY,
        })
    }
}
