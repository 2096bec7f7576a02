//! The harmonic correction `psi` added to the flow-map velocity.
//!
//! Boundary data per component `alpha`:
//! `Lap_bar eta_beta a~^{i beta} d_i Lambda^2 v_alpha - Lap_bar Lambda^2 eta_beta a~^{i beta} d_i v_alpha`,
//! then the cut inverse tangential Laplacian and the half-space extension.

use crate::geometry::GeometryBundle;
use crate::grid::{BoundaryField, SlabGrid, VectorField};
use crate::harmonic::{
    harmonic_extend, inv_tang_laplacian_proj, mollify2_boundary, tangential_laplacian_boundary,
    CutoffSpec, MollifierSpec,
};
use crate::Result;

#[derive(Clone, Debug)]
pub struct CorrectionField {
    pub psi: VectorField,
    /// Data before `Lap_bar^{-1} P` and extension.
    pub boundary_rhs: [BoundaryField; 3],
    /// `Lap_bar^{-1} P` of the data, the trace of `psi`.
    pub boundary_data: [BoundaryField; 3],
    pub kappa: f64,
}

fn dealias_boundary(grid: &SlabGrid, g: &BoundaryField) -> BoundaryField {
    grid.multiply_boundary(g, &grid.dealias_symbol())
}

/// Boundary right-hand side for each component of `v`; `u` is the displacement of `eta`.
pub fn psi_boundary_rhs(
    grid: &SlabGrid,
    u: &VectorField,
    v: &VectorField,
    geo: &GeometryBundle,
) -> [BoundaryField; 3] {
    let spec = MollifierSpec::gaussian(geo.kappa);
    let ut: Vec<BoundaryField> = u.iter().map(|c| grid.trace_top(c)).collect();
    let lap_eta: Vec<BoundaryField> = ut.iter().map(|c| tangential_laplacian_boundary(grid, c)).collect();
    let lap_eta_s: Vec<BoundaryField> = ut
        .iter()
        .map(|c| tangential_laplacian_boundary(grid, &mollify2_boundary(grid, c, &spec)))
        .collect();
    // weights  W_i = Lap eta_beta a~^{i beta},  Ws_i = Lap Lambda^2 eta_beta a~^{i beta}
    let mut w = [grid.zeros_boundary(), grid.zeros_boundary()];
    let mut ws = [grid.zeros_boundary(), grid.zeros_boundary()];
    for i in 0..2 {
        for beta in 0..3 {
            let at = grid.trace_top(&geo.a_tilde[i][beta]);
            w[i] = &w[i] + &(&lap_eta[beta] * &at);
            ws[i] = &ws[i] + &(&lap_eta_s[beta] * &at);
        }
        w[i] = dealias_boundary(grid, &w[i]);
        ws[i] = dealias_boundary(grid, &ws[i]);
    }
    std::array::from_fn(|alpha| {
        let va = grid.trace_top(&v[alpha]);
        let vs = mollify2_boundary(grid, &va, &spec);
        let mut out = grid.zeros_boundary();
        for i in 0..2 {
            let d_vs = grid.dbar_boundary(&vs, i + 1);
            let d_v = grid.dbar_boundary(&va, i + 1);
            out = out + &(&w[i] * &d_vs) - &(&ws[i] * &d_v);
        }
        dealias_boundary(grid, &out)
    })
}

pub fn build_correction(
    grid: &SlabGrid,
    u: &VectorField,
    v: &VectorField,
    geo: &GeometryBundle,
) -> Result<CorrectionField> {
    let boundary_rhs = psi_boundary_rhs(grid, u, v, geo);
    let cut = CutoffSpec;
    let boundary_data: [BoundaryField; 3] =
        std::array::from_fn(|a| inv_tang_laplacian_proj(grid, &boundary_rhs[a], &cut));
    let psi = [
        harmonic_extend(grid, &boundary_data[0])?,
        harmonic_extend(grid, &boundary_data[1])?,
        harmonic_extend(grid, &boundary_data[2])?,
    ];
    Ok(CorrectionField { psi, boundary_rhs, boundary_data, kappa: geo.kappa })
}
