//! Flow-map geometry: deformation gradient, cofactor matrix `a = (d eta)^{-1}`,
//! Jacobian, their smoothed counterparts, and covariant differential operators.

use ndarray::Zip;

use crate::grid::{MatrixField, ScalarField, SlabGrid, VectorField};
use crate::harmonic::{mollify2_vec, MollifierSpec};
use crate::{Error, Result};

/// Breakdown threshold on `det(d eta)`.
pub const DET_FLOOR: f64 = 0.1;

/// `eta(y) = y + u(y)` with `u` periodic in `y1, y2`.
#[derive(Clone, Debug)]
pub struct FlowMap {
    pub u: VectorField,
    pub t: f64,
}

impl FlowMap {
    pub fn identity(grid: &SlabGrid) -> Self {
        FlowMap { u: grid.zeros_vec(), t: 0.0 }
    }

    /// Component `alpha` of `eta` itself, identity part included.
    pub fn eta_component(&self, grid: &SlabGrid, alpha: usize) -> ScalarField {
        let mut e = self.u[alpha].clone();
        for ((i, j, k), v) in e.indexed_iter_mut() {
            *v += match alpha {
                0 => grid.y1(i),
                1 => grid.y2(j),
                _ => grid.z()[k],
            };
        }
        e
    }
}

#[derive(Clone, Debug)]
pub struct GeometryBundle {
    pub kappa: f64,
    /// `d_mu eta_alpha`, indexed `[alpha][mu]`.
    pub deta: MatrixField,
    /// `a^{mu alpha}`, indexed `[mu][alpha]`.
    pub a: MatrixField,
    pub j: ScalarField,
    /// Displacement of the smoothed map `Lambda_kappa^2 eta`.
    pub u_tilde: VectorField,
    pub deta_tilde: MatrixField,
    pub a_tilde: MatrixField,
    pub j_tilde: ScalarField,
}

/// `delta_{alpha mu} + d_mu u_alpha`, indexed `[alpha][mu]`.
pub fn deformation_gradient(grid: &SlabGrid, u: &VectorField) -> MatrixField {
    let grads: Vec<VectorField> = u.iter().map(|c| grid.grad(c)).collect();
    std::array::from_fn(|alpha| {
        std::array::from_fn(|mu| {
            let d = grads[alpha][mu].clone();
            if alpha == mu {
                d + 1.0
            } else {
                d
            }
        })
    })
}

/// Pointwise inverse and determinant of `m[alpha][mu]`; returns `a[mu][alpha]`.
pub fn invert_gradient(grid: &SlabGrid, m: &MatrixField) -> Result<(MatrixField, ScalarField)> {
    let mut a: MatrixField = std::array::from_fn(|_| std::array::from_fn(|_| grid.zeros()));
    let mut det = grid.zeros();
    let n = grid.nx * grid.ny * grid.nz;
    let sl = |f: &ScalarField| -> Vec<f64> { f.iter().copied().collect() };
    let ms: Vec<Vec<Vec<f64>>> = m.iter().map(|row| row.iter().map(sl).collect()).collect();
    let mut out = vec![vec![vec![0.0; n]; 3]; 3];
    let mut dv = vec![0.0; n];
    let mut worst = (f64::INFINITY, 0usize);
    for p in 0..n {
        let e = |r: usize, c: usize| ms[r][c][p];
        let c00 = e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1);
        let c01 = e(1, 2) * e(2, 0) - e(1, 0) * e(2, 2);
        let c02 = e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0);
        let d = e(0, 0) * c00 + e(0, 1) * c01 + e(0, 2) * c02;
        if d < worst.0 {
            worst = (d, p);
        }
        let inv = 1.0 / d;
        // inverse[mu][alpha] = cofactor(alpha, mu) / det
        out[0][0][p] = c00 * inv;
        out[1][0][p] = c01 * inv;
        out[2][0][p] = c02 * inv;
        out[0][1][p] = (e(0, 2) * e(2, 1) - e(0, 1) * e(2, 2)) * inv;
        out[1][1][p] = (e(0, 0) * e(2, 2) - e(0, 2) * e(2, 0)) * inv;
        out[2][1][p] = (e(0, 1) * e(2, 0) - e(0, 0) * e(2, 1)) * inv;
        out[0][2][p] = (e(0, 1) * e(1, 2) - e(0, 2) * e(1, 1)) * inv;
        out[1][2][p] = (e(0, 2) * e(1, 0) - e(0, 0) * e(1, 2)) * inv;
        out[2][2][p] = (e(0, 0) * e(1, 1) - e(0, 1) * e(1, 0)) * inv;
        dv[p] = d;
    }
    if !(worst.0 > DET_FLOOR) {
        let p = worst.1;
        let node = (p / (grid.ny * grid.nz), (p / grid.nz) % grid.ny, p % grid.nz);
        return Err(Error::SingularMap { det: worst.0, node });
    }
    for mu in 0..3 {
        for alpha in 0..3 {
            for (dst, src) in a[mu][alpha].iter_mut().zip(&out[mu][alpha]) {
                *dst = *src;
            }
        }
    }
    for (dst, src) in det.iter_mut().zip(&dv) {
        *dst = *src;
    }
    Ok((a, det))
}

/// Smoothed geometry only: `(u_tilde, d eta_tilde, a_tilde, J_tilde)`.
pub fn smoothed_geometry(
    grid: &SlabGrid,
    u: &VectorField,
    kappa: f64,
) -> Result<(VectorField, MatrixField, MatrixField, ScalarField)> {
    let ut = mollify2_vec(grid, u, &MollifierSpec::gaussian(kappa));
    let m = deformation_gradient(grid, &ut);
    let (a, j) = invert_gradient(grid, &m)?;
    Ok((ut, m, a, j))
}

impl GeometryBundle {
    pub fn build(grid: &SlabGrid, flow: &FlowMap, kappa: f64) -> Result<Self> {
        let deta = deformation_gradient(grid, &flow.u);
        let (a, j) = invert_gradient(grid, &deta)?;
        let (u_tilde, deta_tilde, a_tilde, j_tilde) = if kappa == 0.0 {
            (flow.u.clone(), deta.clone(), a.clone(), j.clone())
        } else {
            smoothed_geometry(grid, &flow.u, kappa)?
        };
        Ok(GeometryBundle { kappa, deta, a, j, u_tilde, deta_tilde, a_tilde, j_tilde })
    }

    pub fn cofactor(&self, smoothed: bool) -> &MatrixField {
        if smoothed {
            &self.a_tilde
        } else {
            &self.a
        }
    }
}

fn zero_vec(grid: &SlabGrid) -> VectorField {
    grid.zeros_vec()
}

/// `nabla_a^alpha f = a^{mu alpha} d_mu f`, dealiased.
pub fn grad_a(grid: &SlabGrid, f: &ScalarField, a: &MatrixField) -> VectorField {
    let df = grid.grad(f);
    let mut out = zero_vec(grid);
    for (alpha, o) in out.iter_mut().enumerate() {
        for (mu, d) in df.iter().enumerate() {
            Zip::from(&mut *o).and(&a[mu][alpha]).and(d).for_each(|o, c, d| *o += c * d);
        }
        *o = grid.dealias(o);
    }
    out
}

/// `B[mu][alpha] = nabla_a^mu X_alpha = a^{nu mu} d_nu X_alpha`, not dealiased.
pub fn covariant_gradient(grid: &SlabGrid, x: &VectorField, a: &MatrixField) -> MatrixField {
    let dx: Vec<VectorField> = x.iter().map(|c| grid.grad(c)).collect();
    std::array::from_fn(|mu| {
        std::array::from_fn(|alpha| {
            let mut o = grid.zeros();
            for nu in 0..3 {
                Zip::from(&mut o).and(&a[nu][mu]).and(&dx[alpha][nu]).for_each(|o, c, d| *o += c * d);
            }
            o
        })
    })
}

/// `div_a X = a^{mu alpha} d_mu X_alpha`, dealiased.
pub fn div_a(grid: &SlabGrid, x: &VectorField, a: &MatrixField) -> ScalarField {
    let mut out = grid.zeros();
    for (alpha, xa) in x.iter().enumerate() {
        let d = grid.grad(xa);
        for (mu, dm) in d.iter().enumerate() {
            Zip::from(&mut out).and(&a[mu][alpha]).and(dm).for_each(|o, c, d| *o += c * d);
        }
    }
    grid.dealias(&out)
}

const LEVI: [(usize, usize, usize, f64); 6] = [
    (0, 1, 2, 1.0),
    (1, 2, 0, 1.0),
    (2, 0, 1, 1.0),
    (0, 2, 1, -1.0),
    (2, 1, 0, -1.0),
    (1, 0, 2, -1.0),
];

/// `(curl_a X)_lambda = eps_{lambda mu alpha} a^{nu mu} d_nu X^alpha`, dealiased.
pub fn curl_a(grid: &SlabGrid, x: &VectorField, a: &MatrixField) -> VectorField {
    let b = covariant_gradient(grid, x, a);
    let mut out = zero_vec(grid);
    for &(l, mu, alpha, sgn) in LEVI.iter() {
        crate::grid::add_scaled(&mut out[l], &b[mu][alpha], sgn);
    }
    std::array::from_fn(|l| grid.dealias(&out[l]))
}

/// `Delta_a f = a^{nu alpha} d_nu (a^{mu}_alpha d_mu f)`, realised as `div_a(grad_a f)`.
pub fn laplace_a(grid: &SlabGrid, f: &ScalarField, a: &MatrixField) -> ScalarField {
    div_a(grid, &grad_a(grid, f, a), a)
}

pub fn identity_cofactor(grid: &SlabGrid) -> MatrixField {
    crate::grid::mat_identity(grid)
}

pub fn flat_div(grid: &SlabGrid, x: &VectorField) -> ScalarField {
    grid.dbar(&x[0], 1) + grid.dbar(&x[1], 2) + grid.dnormal(&x[2])
}

pub fn flat_curl(grid: &SlabGrid, x: &VectorField) -> VectorField {
    [
        grid.dbar(&x[2], 2) - grid.dnormal(&x[1]),
        grid.dnormal(&x[0]) - grid.dbar(&x[2], 1),
        grid.dbar(&x[1], 1) - grid.dbar(&x[0], 2),
    ]
}

/// `d_t J = J a^{mu alpha} d_mu v_alpha` (unsmoothed geometry).
pub fn jacobian_rate(grid: &SlabGrid, g: &GeometryBundle, v: &VectorField) -> ScalarField {
    let dv = div_a(grid, v, &g.a);
    &g.j * &dv
}

/// `sum_alpha ||d_mu (J a^{mu alpha})||_{L^2}`.
pub fn piola_residual(grid: &SlabGrid, a: &MatrixField, j: &ScalarField) -> f64 {
    let mut total = 0.0;
    for alpha in 0..3 {
        let mut s = grid.zeros();
        for mu in 0..3 {
            let ja = j * &a[mu][alpha];
            s += &grid.partial(&ja, mu);
        }
        total += grid.l2_sq(&s);
    }
    total.sqrt()
}

/// Pointwise `max |a . d eta - I|` over both products.
pub fn inverse_defect(a: &MatrixField, deta: &MatrixField) -> f64 {
    let mut worst = 0.0_f64;
    let n = a[0][0].len();
    let flat = |f: &ScalarField| f.as_slice().expect("standard layout").to_vec();
    let av: Vec<Vec<Vec<f64>>> = a.iter().map(|r| r.iter().map(flat).collect()).collect();
    let mv: Vec<Vec<Vec<f64>>> = deta.iter().map(|r| r.iter().map(flat).collect()).collect();
    for p in 0..n {
        for r in 0..3 {
            for c in 0..3 {
                // (d eta a)_{beta alpha} = sum_mu M[beta][mu] a[mu][alpha]
                let left: f64 = (0..3).map(|m| mv[r][m][p] * av[m][c][p]).sum();
                // (a d eta)_{mu nu} = sum_alpha a[mu][alpha] M[alpha][nu]
                let right: f64 = (0..3).map(|m| av[r][m][p] * mv[m][c][p]).sum();
                let id = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((left - id).abs()).max((right - id).abs());
            }
        }
    }
    worst
}
