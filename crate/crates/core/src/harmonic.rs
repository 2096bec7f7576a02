//! Tangential mollifier, Littlewood-Paley cut-offs, the cut inverse tangential
//! Laplacian and the half-space harmonic extension.

use ndarray::Array3;
use num_complex::Complex64;

use crate::grid::{BoundaryField, ScalarField, SlabGrid, Spectrum, VectorField};
use crate::{Error, Result};

/// Even radial symbol of the mollifier.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MollifierSymbol {
    /// `m(r) = exp(-r^2)`
    Gaussian,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MollifierSpec {
    pub kappa: f64,
    pub symbol: MollifierSymbol,
}

impl MollifierSpec {
    pub fn gaussian(kappa: f64) -> Self {
        MollifierSpec { kappa, symbol: MollifierSymbol::Gaussian }
    }

    /// `m(kappa |xi|)`; `kappa = 0` is the identity.
    pub fn multiplier(&self, r: f64) -> f64 {
        match self.symbol {
            MollifierSymbol::Gaussian => (-(self.kappa * r).powi(2)).exp(),
        }
    }
}

/// Smooth radial cut-off: 1 on `[0,1]`, 0 on `[2, inf)`, exponential-spline blend.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CutoffSpec;

fn exp_spline(x: f64) -> f64 {
    if x > 0.0 {
        (-1.0 / x).exp()
    } else {
        0.0
    }
}

/// Smooth step from 0 (at `x <= 0`) to 1 (at `x >= 1`).
pub fn smooth_step(x: f64) -> f64 {
    let a = exp_spline(x);
    let b = exp_spline(1.0 - x);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

impl CutoffSpec {
    pub fn chi(&self, r: f64) -> f64 {
        1.0 - smooth_step(r - 1.0)
    }
}

pub fn mollify(grid: &SlabGrid, f: &ScalarField, spec: &MollifierSpec) -> ScalarField {
    if spec.kappa == 0.0 {
        return f.clone();
    }
    grid.multiply(f, &grid.radial_symbol(|r| spec.multiplier(r)))
}

/// `Lambda_kappa^2`.
pub fn mollify2(grid: &SlabGrid, f: &ScalarField, spec: &MollifierSpec) -> ScalarField {
    if spec.kappa == 0.0 {
        return f.clone();
    }
    grid.multiply(f, &grid.radial_symbol(|r| spec.multiplier(r).powi(2)))
}

pub fn mollify_vec(grid: &SlabGrid, f: &VectorField, spec: &MollifierSpec) -> VectorField {
    std::array::from_fn(|a| mollify(grid, &f[a], spec))
}

pub fn mollify2_vec(grid: &SlabGrid, f: &VectorField, spec: &MollifierSpec) -> VectorField {
    std::array::from_fn(|a| mollify2(grid, &f[a], spec))
}

pub fn mollify_boundary(grid: &SlabGrid, g: &BoundaryField, spec: &MollifierSpec) -> BoundaryField {
    if spec.kappa == 0.0 {
        return g.clone();
    }
    grid.multiply_boundary(g, &grid.radial_symbol(|r| spec.multiplier(r)))
}

pub fn mollify2_boundary(grid: &SlabGrid, g: &BoundaryField, spec: &MollifierSpec) -> BoundaryField {
    if spec.kappa == 0.0 {
        return g.clone();
    }
    grid.multiply_boundary(g, &grid.radial_symbol(|r| spec.multiplier(r).powi(2)))
}

/// `P_{>= n}`: multiplier `1 - chi(|xi| / n)`.
pub fn project_geq(grid: &SlabGrid, f: &ScalarField, n: f64, spec: &CutoffSpec) -> ScalarField {
    grid.multiply(f, &grid.radial_symbol(|r| 1.0 - spec.chi(r / n)))
}

pub fn project_geq_boundary(grid: &SlabGrid, g: &BoundaryField, n: f64, spec: &CutoffSpec) -> BoundaryField {
    grid.multiply_boundary(g, &grid.radial_symbol(|r| 1.0 - spec.chi(r / n)))
}

/// `P_{<= n}`: multiplier `chi(|xi| / n)`.
pub fn project_leq_boundary(grid: &SlabGrid, g: &BoundaryField, n: f64, spec: &CutoffSpec) -> BoundaryField {
    grid.multiply_boundary(g, &grid.radial_symbol(|r| spec.chi(r / n)))
}

/// `Delta_bar^{-1} P g` with `Delta_bar^{-1}` the multiplier `-|xi|^{-2}`.
pub fn inv_tang_laplacian_proj(grid: &SlabGrid, g: &BoundaryField, spec: &CutoffSpec) -> BoundaryField {
    grid.multiply_boundary(
        g,
        &grid.radial_symbol(|r| if r == 0.0 { 0.0 } else { -(1.0 - spec.chi(r)) / (r * r) }),
    )
}

pub fn tangential_laplacian_boundary(grid: &SlabGrid, g: &BoundaryField) -> BoundaryField {
    grid.multiply_boundary(g, &grid.lap_symbol())
}

pub fn tangential_laplacian(grid: &SlabGrid, f: &ScalarField) -> ScalarField {
    grid.multiply(f, &grid.lap_symbol())
}

/// Bounded harmonic function of the lower half-space with trace `g`, sampled at the
/// slab nodes: `g_hat(xi) exp(|xi| y3)`.
pub fn harmonic_extend(grid: &SlabGrid, g: &BoundaryField) -> Result<ScalarField> {
    let mean = g.mean().unwrap_or(0.0);
    let scale = 1.0 + SlabGrid::norm_linf_boundary(g);
    if mean.abs() > 1e-12 * scale {
        return Err(Error::NonZeroMean(mean));
    }
    let gh = grid.forward_boundary(g);
    let layer = grid.nx * grid.ny;
    let mut data = vec![Complex64::default(); layer * grid.nz];
    let z = grid.z();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (a, b) = grid.wavenumber(i, j);
            let r = (a * a + b * b).sqrt();
            let c = if r == 0.0 { Complex64::default() } else { gh.data[j * grid.nx + i] };
            for (k, zk) in z.iter().enumerate() {
                data[k * layer + j * grid.nx + i] = c * (r * zk).exp();
            }
        }
    }
    Ok(grid.inverse(&Spectrum { data }))
}

/// Spectral Laplacian in the tangential directions plus the fourth-order depth
/// stencil; used to measure discrete harmonicity.
pub fn mixed_laplacian(grid: &SlabGrid, f: &ScalarField) -> ScalarField {
    tangential_laplacian(grid, f) + grid.dnormal2(f)
}

/// Homogeneous `Hdot^s` norm of `P_{<= n} g`.
pub fn bernstein_lhs(grid: &SlabGrid, g: &BoundaryField, n: f64, s: f64, spec: &CutoffSpec) -> f64 {
    let p = project_leq_boundary(grid, g, n, spec);
    grid.norm_boundary_homogeneous(&p, s)
}

/// `||P_{<= n} g||_{Hdot^s} / (n^s ||g||_{L^2})`.
pub fn bernstein_ratio(grid: &SlabGrid, g: &BoundaryField, n: f64, s: f64, spec: &CutoffSpec) -> f64 {
    let den = n.powf(s) * grid.norm_boundary(g, 0.0);
    if den == 0.0 {
        0.0
    } else {
        bernstein_lhs(grid, g, n, s, spec) / den
    }
}

/// Boundary-field mollifier defect `|f - Lambda_kappa f|_{L^infty}`.
pub fn mollifier_defect_linf(grid: &SlabGrid, g: &BoundaryField, spec: &MollifierSpec) -> f64 {
    let m = mollify_boundary(grid, g, spec);
    SlabGrid::norm_linf_boundary(&(g - &m))
}

/// Helper producing a constant field.
pub fn constant(grid: &SlabGrid, c: f64) -> ScalarField {
    Array3::from_elem(grid.shape(), c)
}
