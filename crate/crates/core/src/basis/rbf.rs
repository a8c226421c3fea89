use nalgebra::DMatrix;

use super::{AdaptiveBasis, ParamBox};
use crate::{Error, Result};

/// Width floor as a fraction of the state-space extent on each axis.
pub const WIDTH_FLOOR_FRACTION: f64 = 1e-3;

/// Gaussian radial basis over a two-dimensional state `(p, v)`:
/// `φ_i = exp(−(p − c^p_i)²/w^p_i² − (v − c^v_i)²/w^v_i²)`.
///
/// Parameters are laid out as `(c^p, c^v, w^p, w^v)`, each block of length
/// `M`, so `K_s = 4M`.
#[derive(Clone, Debug, PartialEq)]
pub struct RbfBasis {
    centers: usize,
    grid: (usize, usize),
    bounds: [(f64, f64); 2],
}

impl RbfBasis {
    /// Basis with `rows × cols` bumps whose default placement is a uniform
    /// grid over `bounds` (position axis first).
    pub fn grid(rows: usize, cols: usize, bounds: [(f64, f64); 2]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidModel("RBF grid needs at least one bump".into()));
        }
        for (lo, hi) in bounds {
            if !(hi > lo) {
                return Err(Error::InvalidModel(format!("empty RBF axis [{lo}, {hi}]")));
            }
        }
        Ok(Self {
            centers: rows * cols,
            grid: (rows, cols),
            bounds,
        })
    }

    /// Basis with `m` bumps arranged on the most nearly square grid.
    pub fn with_centers(m: usize, bounds: [(f64, f64); 2]) -> Result<Self> {
        let mut rows = (m as f64).sqrt().floor() as usize;
        while rows > 1 && !m.is_multiple_of(rows) {
            rows -= 1;
        }
        let rows = rows.max(1);
        Self::grid(rows, m / rows.max(1), bounds)
    }

    pub fn num_centers(&self) -> usize {
        self.centers
    }

    pub fn bounds(&self) -> [(f64, f64); 2] {
        self.bounds
    }

    fn extent(&self, axis: usize) -> f64 {
        self.bounds[axis].1 - self.bounds[axis].0
    }

    pub fn width_floor(&self, axis: usize) -> f64 {
        WIDTH_FLOOR_FRACTION * self.extent(axis)
    }

    fn check(&self, s: &[f64], x: &[f64; 2]) -> Result<()> {
        if s.len() != 4 * self.centers {
            return Err(Error::DimensionMismatch {
                what: "RBF parameters",
                expected: 4 * self.centers,
                found: s.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidState(format!("non-finite RBF input {x:?}")));
        }
        let m = self.centers;
        for axis in 0..2 {
            let floor = self.width_floor(axis);
            let start = (2 + axis) * m;
            for (i, &w) in s[start..start + m].iter().enumerate() {
                if !(w >= floor) {
                    return Err(Error::WidthUnderflow {
                        index: start + i,
                        width: w,
                        floor,
                    });
                }
            }
        }
        Ok(())
    }

    #[inline]
    fn bump(&self, s: &[f64], x: &[f64; 2], i: usize) -> (f64, f64, f64) {
        let m = self.centers;
        let dp = x[0] - s[i];
        let dv = x[1] - s[m + i];
        let wp = s[2 * m + i];
        let wv = s[3 * m + i];
        ((-(dp * dp) / (wp * wp) - (dv * dv) / (wv * wv)).exp(), dp, dv)
    }
}

impl AdaptiveBasis for RbfBasis {
    type State = [f64; 2];

    fn num_features(&self) -> usize {
        self.centers
    }

    fn num_params(&self) -> usize {
        4 * self.centers
    }

    /// Uniform grid with widths equal to the grid spacing.
    fn default_params(&self) -> Vec<f64> {
        let (rows, cols) = self.grid;
        let axis_points = |axis: usize, k: usize| -> (Vec<f64>, f64) {
            let (lo, hi) = self.bounds[axis];
            if k == 1 {
                (vec![0.5 * (lo + hi)], hi - lo)
            } else {
                let step = (hi - lo) / (k - 1) as f64;
                ((0..k).map(|j| lo + step * j as f64).collect(), step)
            }
        };
        let (pos, wp) = axis_points(0, rows);
        let (vel, wv) = axis_points(1, cols);
        let m = self.centers;
        let mut s = vec![0.0; 4 * m];
        for (a, p) in pos.iter().enumerate() {
            for (b, v) in vel.iter().enumerate() {
                let i = a * cols + b;
                s[i] = *p;
                s[m + i] = *v;
                s[2 * m + i] = wp;
                s[3 * m + i] = wv;
            }
        }
        s
    }

    fn param_box(&self) -> ParamBox {
        let m = self.centers;
        let mut lower = Vec::with_capacity(4 * m);
        let mut upper = Vec::with_capacity(4 * m);
        for axis in 0..2 {
            lower.extend(std::iter::repeat_n(self.bounds[axis].0, m));
            upper.extend(std::iter::repeat_n(self.bounds[axis].1, m));
        }
        for axis in 0..2 {
            lower.extend(std::iter::repeat_n(self.width_floor(axis), m));
            upper.extend(std::iter::repeat_n(self.extent(axis), m));
        }
        ParamBox { lower, upper }
    }

    fn features_into(&self, s: &[f64], x: &[f64; 2], out: &mut [f64]) -> Result<()> {
        self.check(s, x)?;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.bump(s, x, i).0;
        }
        Ok(())
    }

    fn jacobian_into(&self, s: &[f64], x: &[f64; 2], out: &mut DMatrix<f64>) -> Result<()> {
        self.check(s, x)?;
        out.fill(0.0);
        let m = self.centers;
        for i in 0..m {
            let (phi, dp, dv) = self.bump(s, x, i);
            let wp = s[2 * m + i];
            let wv = s[3 * m + i];
            out[(i, i)] = phi * 2.0 * dp / (wp * wp);
            out[(i, m + i)] = phi * 2.0 * dv / (wv * wv);
            out[(i, 2 * m + i)] = phi * 2.0 * dp * dp / (wp * wp * wp);
            out[(i, 3 * m + i)] = phi * 2.0 * dv * dv / (wv * wv * wv);
        }
        Ok(())
    }

    fn param_gradient_into(&self, s: &[f64], x: &[f64; 2], r: &[f64], out: &mut [f64]) -> Result<()> {
        self.check(s, x)?;
        let m = self.centers;
        for i in 0..m {
            let (phi, dp, dv) = self.bump(s, x, i);
            let wp = s[2 * m + i];
            let wv = s[3 * m + i];
            let scale = phi * r[i] * 2.0;
            out[i] = scale * dp / (wp * wp);
            out[m + i] = scale * dv / (wv * wv);
            out[2 * m + i] = scale * dp * dp / (wp * wp * wp);
            out[3 * m + i] = scale * dv * dv / (wv * wv * wv);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAR: [(f64, f64); 2] = [(-1.2, 0.6), (-0.07, 0.07)];

    #[test]
    fn default_grid_layout() {
        let basis = RbfBasis::with_centers(16, CAR).unwrap();
        assert_eq!(basis.grid, (4, 4));
        let s = basis.default_params();
        assert_eq!(s.len(), 64);
        assert!((s[0] + 1.2).abs() < 1e-15 && (s[16] + 0.07).abs() < 1e-15);
        assert!((s[15] - 0.6).abs() < 1e-12 && (s[31] - 0.07).abs() < 1e-12);
        assert!((s[32] - 0.6).abs() < 1e-12);
        assert!(basis.param_box().contains(&s));
    }

    #[test]
    fn bump_is_one_at_its_center() {
        let basis = RbfBasis::with_centers(9, CAR).unwrap();
        let s = basis.default_params();
        for i in 0..9 {
            let x = [s[i], s[9 + i]];
            let phi = basis.features(&s, &x).unwrap();
            assert_eq!(phi[i], 1.0);
            let jac = basis.jacobian(&s, &x).unwrap();
            assert_eq!(jac[(i, i)], 0.0);
            assert_eq!(jac[(i, 9 + i)], 0.0);
        }
    }

    #[test]
    fn width_below_floor_is_rejected() {
        let basis = RbfBasis::with_centers(4, CAR).unwrap();
        let mut s = basis.default_params();
        s[13] = 1e-6;
        match basis.features(&s, &[0.0, 0.0]) {
            Err(Error::WidthUnderflow { index, .. }) => assert_eq!(index, 13),
            other => panic!("expected width underflow, got {other:?}"),
        }
    }

    #[test]
    fn non_square_counts_factor() {
        let basis = RbfBasis::with_centers(12, CAR).unwrap();
        assert_eq!(basis.grid, (3, 4));
        let basis = RbfBasis::with_centers(7, CAR).unwrap();
        assert_eq!(basis.grid, (1, 7));
    }
}
