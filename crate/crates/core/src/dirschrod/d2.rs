use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::DirSchrodError;
use crate::numlin::{BandMatrix, CMat, HermMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum D2Variant {
    /// `-i (u_{j+1} - u_{j-1}) / 2h` with wrap-around, `N x N`.
    PeriodicCentral,
    /// `-i (u_{j+1} - u_j) / h` on `N + 1` nodes, `N x (N + 1)`.
    MidpointForward,
    /// Central stencil on `N + 1` nodes with zero extension, hermitian, `(N + 1) x (N + 1)`.
    DirichletCentral,
}

/// Discretisation of `-i d/dx`; the propagation speed is 1.
#[derive(Debug, Clone)]
pub struct DiscreteD2 {
    variant: D2Variant,
    intervals: usize,
    h: f64,
    triplets: Vec<(usize, usize, Complex64)>,
    rows: usize,
    cols: usize,
}

pub const PROPAGATION_SPEED: f64 = 1.0;

pub fn build_d2(intervals: usize, h: f64, variant: D2Variant) -> Result<DiscreteD2, DirSchrodError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(DirSchrodError::InvalidParameter(format!("grid spacing {h}")));
    }
    let min = match variant {
        D2Variant::PeriodicCentral => 3,
        _ => 1,
    };
    if intervals < min {
        return Err(DirSchrodError::InvalidParameter(format!(
            "{variant:?} needs at least {min} intervals, got {intervals}"
        )));
    }
    let mut t = Vec::new();
    let (rows, cols) = match variant {
        D2Variant::PeriodicCentral => {
            let n = intervals;
            let a = Complex64::new(0.0, -0.5 / h);
            for j in 0..n {
                t.push((j, (j + 1) % n, a));
                t.push((j, (j + n - 1) % n, -a));
            }
            (n, n)
        }
        D2Variant::MidpointForward => {
            let a = Complex64::new(0.0, -1.0 / h);
            for j in 0..intervals {
                t.push((j, j + 1, a));
                t.push((j, j, -a));
            }
            (intervals, intervals + 1)
        }
        D2Variant::DirichletCentral => {
            let n = intervals + 1;
            let a = Complex64::new(0.0, -0.5 / h);
            for j in 0..n {
                if j + 1 < n {
                    t.push((j, j + 1, a));
                }
                if j > 0 {
                    t.push((j, j - 1, -a));
                }
            }
            (n, n)
        }
    };
    Ok(DiscreteD2 {
        variant,
        intervals,
        h,
        triplets: t,
        rows,
        cols,
    })
}

impl DiscreteD2 {
    pub fn variant(&self) -> D2Variant {
        self.variant
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn triplets(&self) -> &[(usize, usize, Complex64)] {
        &self.triplets
    }

    pub fn dense(&self) -> CMat {
        let mut m = CMat::zeros(self.rows, self.cols);
        for &(i, j, z) in &self.triplets {
            m[(i, j)] += z;
        }
        m
    }

    pub fn band(&self) -> BandMatrix {
        BandMatrix::from_triplets(self.rows, self.cols, self.triplets.clone())
    }

    /// The square variants as a validated hermitian matrix.
    pub fn hermitian(&self) -> Result<HermMatrix, DirSchrodError> {
        if self.variant == D2Variant::MidpointForward {
            return Err(DirSchrodError::InvalidParameter(
                "midpoint_forward is rectangular".into(),
            ));
        }
        Ok(HermMatrix::new(self.dense())?)
    }

    /// Exact spectrum of the periodic variant, `sin(2πk/N)/h`, ascending.
    pub fn periodic_spectrum(intervals: usize, h: f64) -> Vec<f64> {
        let mut v: Vec<f64> = (0..intervals)
            .map(|k| (2.0 * std::f64::consts::PI * k as f64 / intervals as f64).sin() / h)
            .collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::eigvalsh;

    #[test]
    fn periodic_spectrum_matches_fourier() {
        for n in [4, 9, 32] {
            let h = 0.3;
            let d = build_d2(n, h, D2Variant::PeriodicCentral).unwrap();
            let vals = eigvalsh(&d.hermitian().unwrap()).unwrap();
            let exact = DiscreteD2::periodic_spectrum(n, h);
            for (a, b) in vals.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-10);
            }
        }
        let exact = DiscreteD2::periodic_spectrum(4, 0.5);
        assert!((exact[0] + 2.0).abs() < 1e-15 && (exact[3] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn hermitian_variants() {
        for v in [D2Variant::PeriodicCentral, D2Variant::DirichletCentral] {
            let m = build_d2(16, 0.1, v).unwrap().dense();
            let dev = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(dev <= 1e-13);
        }
    }

    #[test]
    fn forward_kills_constants() {
        let d = build_d2(10, 0.2, D2Variant::MidpointForward).unwrap();
        assert_eq!(d.shape(), (10, 11));
        let ones = vec![Complex64::new(1.0, 0.0); 11];
        assert!(d.band().mul_vec(&ones).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_d2(2, 0.1, D2Variant::PeriodicCentral).is_err());
        assert!(build_d2(8, 0.0, D2Variant::MidpointForward).is_err());
    }
}
