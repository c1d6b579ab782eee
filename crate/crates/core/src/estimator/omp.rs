use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::grid::DynamicGrid;
use crate::beam::AnalogBeamMatrix;
use crate::error::{Error, Result};

/// Column access and adjoint products of a sensing dictionary.
pub trait Dictionary {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn column(&self, j: usize) -> DVector<Complex64>;
    /// `Ξ^H r`.
    fn correlate(&self, r: &DVector<Complex64>) -> Vec<Complex64>;
    fn column_norms(&self) -> Vec<f64> {
        (0..self.ncols()).map(|j| self.column(j).norm()).collect()
    }
}

impl Dictionary for DMatrix<Complex64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }
    fn ncols(&self) -> usize {
        self.ncols()
    }
    fn column(&self, j: usize) -> DVector<Complex64> {
        self.column(j).into_owned()
    }
    fn correlate(&self, r: &DVector<Complex64>) -> Vec<Complex64> {
        self.ad_mul(r).iter().copied().collect()
    }
}

/// `F_a A(Ω)` for an unrefined `l1 x l2` grid, applied through its
/// column/elevation structure instead of a dense matrix.
pub struct SeparableDictionary<'a> {
    f_a: &'a AnalogBeamMatrix,
    rows: Vec<usize>,
    theta: Vec<f64>,
    phi: Vec<f64>,
    /// `conj(w_k^T a_z(v_j))` for row `k` (row-major over `j`).
    inner: Vec<Complex64>,
    column_of_row: Vec<usize>,
}

impl<'a> SeparableDictionary<'a> {
    pub fn new(f_a: &'a AnalogBeamMatrix, rows: Vec<usize>, grid: &DynamicGrid) -> Result<Self> {
        let (l1, l2) = (grid.l1(), grid.l2());
        let theta: Vec<f64> = (0..l1).map(|i| grid.theta[i * l2]).collect();
        let phi: Vec<f64> = (0..l2).map(|j| grid.phi[j]).collect();
        for i in 0..l1 {
            for j in 0..l2 {
                let p = i * l2 + j;
                if grid.theta[p] != theta[i] || grid.phi[p] != phi[j] {
                    return Err(Error::InvalidArgument("grid is no longer separable".into()));
                }
            }
        }
        let mut inner = vec![Complex64::new(0.0, 0.0); l2 * rows.len()];
        for (j, &v) in phi.iter().enumerate() {
            let out = &mut inner[j * rows.len()..(j + 1) * rows.len()];
            f_a.response_rows(&rows, 0.0, v, out);
            out.iter_mut().for_each(|z| *z = z.conj());
        }
        let t = f_a.geom().t();
        let column_of_row = rows.iter().map(|k| k / t).collect();
        Ok(Self { f_a, rows, theta, phi, inner, column_of_row })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }
}

impl Dictionary for SeparableDictionary<'_> {
    fn nrows(&self) -> usize {
        self.rows.len()
    }
    fn ncols(&self) -> usize {
        self.theta.len() * self.phi.len()
    }
    fn column(&self, j: usize) -> DVector<Complex64> {
        let l2 = self.phi.len();
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows.len()];
        self.f_a.response_rows(&self.rows, self.theta[j / l2], self.phi[j % l2], &mut out);
        DVector::from_vec(out)
    }
    fn column_norms(&self) -> Vec<f64> {
        // the azimuth phase has unit modulus, so norms depend on elevation only
        let nr = self.rows.len();
        let per_phi: Vec<f64> = (0..self.phi.len())
            .map(|j| self.inner[j * nr..(j + 1) * nr].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
            .collect();
        (0..self.ncols()).map(|j| per_phi[j % self.phi.len()]).collect()
    }
    fn correlate(&self, r: &DVector<Complex64>) -> Vec<Complex64> {
        let (l1, l2) = (self.theta.len(), self.phi.len());
        let n_y = self.f_a.geom().n_y();
        let nr = self.rows.len();
        let mut out = vec![Complex64::new(0.0, 0.0); l1 * l2];
        let mut z = vec![Complex64::new(0.0, 0.0); n_y];
        for j in 0..l2 {
            z.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for (k, (&col, w)) in self.column_of_row.iter().zip(&self.inner[j * nr..(j + 1) * nr]).enumerate() {
                z[col] += w * r[k];
            }
            let c = (1.0 - self.phi[j] * self.phi[j]).max(0.0).sqrt();
            for i in 0..l1 {
                // Σ_n z[n] e^{-jπ n u c}, Horner from the last column
                let w = Complex64::cis(-std::f64::consts::PI * self.theta[i] * c);
                let mut acc = Complex64::new(0.0, 0.0);
                for zn in z.iter().rev() {
                    acc = acc * w + zn;
                }
                out[i * l2 + j] = acc;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    /// Selected columns in selection order.
    pub support: Vec<usize>,
    pub coefficients: Vec<Complex64>,
    /// `‖r‖` before the first atom and after each one.
    pub residual_norms: Vec<f64>,
}

/// Greedy selection of the column most correlated with the residual
/// followed by a least-squares refit, until `k_max` atoms, `‖r‖² <=
/// residual_tol`, or a rank-deficient selection.
pub fn omp<D: Dictionary + ?Sized>(
    y: &DVector<Complex64>,
    sensing: &D,
    k_max: usize,
    residual_tol: f64,
) -> Result<OmpResult> {
    if y.len() != sensing.nrows() {
        return Err(Error::DimensionMismatch { expected: sensing.nrows(), got: y.len() });
    }
    let norms = sensing.column_norms();
    if norms.iter().all(|n| *n == 0.0) {
        return Err(Error::InvalidArgument("sensing matrix has no nonzero column".into()));
    }
    let mut support = Vec::new();
    let mut cols: Vec<DVector<Complex64>> = Vec::new();
    let mut coef = DVector::<Complex64>::zeros(0);
    let mut resid = y.clone();
    let mut residual_norms = vec![resid.norm()];
    while support.len() < k_max.min(sensing.nrows()) && resid.norm_squared() > residual_tol {
        let corr = sensing.correlate(&resid);
        let best = (0..corr.len())
            .filter(|j| norms[*j] > 0.0 && !support.contains(j))
            .map(|j| (corr[j].norm() / norms[j], j))
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        let Some((_, j)) = best else { break };
        cols.push(sensing.column(j));
        let a = DMatrix::from_columns(&cols);
        let qr = a.clone().qr();
        let r = qr.r();
        let diag_max = (0..r.ncols()).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
        if (0..r.ncols()).any(|i| r[(i, i)].norm() <= 1e-10 * diag_max) {
            cols.pop();
            break;
        }
        let rhs = qr.q().ad_mul(y);
        let Some(c) = r.solve_upper_triangular(&rhs) else {
            cols.pop();
            break;
        };
        support.push(j);
        coef = c;
        resid = y - a * &coef;
        residual_norms.push(resid.norm());
    }
    Ok(OmpResult { support, coefficients: coef.iter().copied().collect(), residual_norms })
}
