//! Isentropic liquid closure `p(rho) = (rho^gamma - 1) / gamma` in enthalpy form.

use crate::grid::ScalarField;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EoS {
    pub gamma: f64,
}

/// `rho(h), e(h), e'(h), e''(h)` sampled on a field.
#[derive(Clone, Debug)]
pub struct EosFields {
    pub rho: ScalarField,
    pub e: ScalarField,
    pub de: ScalarField,
    pub d2e: ScalarField,
}

impl Default for EoS {
    fn default() -> Self {
        EoS { gamma: 1.0 }
    }
}

impl EoS {
    pub fn new(gamma: f64) -> Self {
        assert!(gamma >= 1.0, "adiabatic index must be >= 1");
        EoS { gamma }
    }

    fn isothermal(&self) -> bool {
        self.gamma == 1.0
    }

    /// `1 + (gamma - 1) h`; positive on the admissible range.
    fn base(&self, h: f64) -> f64 {
        1.0 + (self.gamma - 1.0) * h
    }

    pub fn admissible(&self, h: f64) -> bool {
        h.is_finite() && (self.isothermal() || self.base(h) > 0.0)
    }

    pub fn rho(&self, h: f64) -> f64 {
        if self.isothermal() {
            h.exp()
        } else {
            self.base(h).powf(1.0 / (self.gamma - 1.0))
        }
    }

    /// `e(h) = log rho(h)`.
    pub fn e(&self, h: f64) -> f64 {
        if self.isothermal() {
            h
        } else {
            self.base(h).ln() / (self.gamma - 1.0)
        }
    }

    pub fn de(&self, h: f64) -> f64 {
        if self.isothermal() {
            1.0
        } else {
            1.0 / self.base(h)
        }
    }

    pub fn d2e(&self, h: f64) -> f64 {
        if self.isothermal() {
            0.0
        } else {
            -(self.gamma - 1.0) / self.base(h).powi(2)
        }
    }

    /// Inverse of `rho(h)`: `h(rho) = int_1^rho p'(l) / l dl`.
    pub fn enthalpy(&self, rho: f64) -> f64 {
        if self.isothermal() {
            rho.ln()
        } else {
            (rho.powf(self.gamma - 1.0) - 1.0) / (self.gamma - 1.0)
        }
    }

    pub fn pressure(&self, rho: f64) -> f64 {
        (rho.powf(self.gamma) - 1.0) / self.gamma
    }

    /// `Q(rho) = int_1^rho p(l) l^{-2} dl = (h(rho) + 1/rho - 1) / gamma`.
    pub fn q(&self, rho: f64) -> f64 {
        (self.enthalpy(rho) + 1.0 / rho - 1.0) / self.gamma
    }

    /// Squared sound speed `p'(rho) = rho^{gamma - 1}`.
    pub fn sound_speed_sq(&self, rho: f64) -> f64 {
        rho.powf(self.gamma - 1.0)
    }

    pub fn check(&self, h: &ScalarField) -> Result<()> {
        for ((i, j, k), &v) in h.indexed_iter() {
            if !self.admissible(v) {
                return Err(Error::InadmissibleEnthalpy { h: v, node: (i, j, k) });
            }
        }
        Ok(())
    }

    pub fn eval(&self, h: &ScalarField) -> Result<EosFields> {
        self.check(h)?;
        Ok(EosFields {
            rho: h.mapv(|x| self.rho(x)),
            e: h.mapv(|x| self.e(x)),
            de: h.mapv(|x| self.de(x)),
            d2e: h.mapv(|x| self.d2e(x)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        // composite Simpson, plenty for smooth integrands
        let n = 2000;
        let hstep = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * hstep);
        }
        s * hstep / 3.0
    }

    #[test]
    fn isothermal_enthalpy_is_identity() {
        let eos = EoS::new(1.0);
        for h in [-0.7, 0.0, 0.3, 2.0] {
            assert_eq!(eos.e(h), h);
            assert_eq!(eos.de(h), 1.0);
            assert_eq!(eos.d2e(h), 0.0);
        }
    }

    #[test]
    fn reference_state() {
        for g in [1.0, 1.4, 2.0, 7.0] {
            let eos = EoS::new(g);
            assert_eq!(eos.rho(0.0), 1.0);
            assert_eq!(eos.e(0.0), 0.0);
            assert_eq!(eos.pressure(1.0), 0.0);
            assert_eq!(eos.q(1.0), 0.0);
            assert_eq!(eos.enthalpy(1.0), 0.0);
        }
    }

    #[test]
    fn gamma_two_at_unit_enthalpy() {
        let eos = EoS::new(2.0);
        assert!((eos.rho(1.0) - 2.0).abs() < 1e-15);
        assert!((eos.e(1.0) - 2f64.ln()).abs() < 1e-15);
        assert!((eos.de(1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn closures_match_quadrature() {
        for gamma in [1.0, 1.4, 2.0] {
            let eos = EoS::new(gamma);
            for rho in [0.6, 1.0, 1.7, 3.0] {
                let p = |l: f64| (l.powf(gamma) - 1.0) / gamma;
                let dp = |l: f64| l.powf(gamma - 1.0);
                let h = quad(|l| dp(l) / l, 1.0, rho);
                let q = quad(|l| p(l) / (l * l), 1.0, rho);
                assert!((eos.enthalpy(rho) - h).abs() < 1e-10);
                assert!((eos.q(rho) - q).abs() < 1e-10);
                assert!((eos.rho(eos.enthalpy(rho)) - rho).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let eos = EoS::new(1.6);
        let step = 1e-5;
        for h in [-0.5, 0.0, 0.8] {
            let fd1 = (eos.e(h + step) - eos.e(h - step)) / (2.0 * step);
            let fd2 = (eos.de(h + step) - eos.de(h - step)) / (2.0 * step);
            assert!((fd1 - eos.de(h)).abs() < 1e-8);
            assert!((fd2 - eos.d2e(h)).abs() < 1e-8);
        }
    }

    #[test]
    fn vacuum_is_rejected() {
        let eos = EoS::new(2.0);
        let mut h = ndarray::Array3::zeros((2, 2, 2));
        h[[1, 0, 1]] = -1.5;
        match eos.eval(&h) {
            Err(Error::InadmissibleEnthalpy { node, .. }) => assert_eq!(node, (1, 0, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
