//! Ambiguity functions, integrated side-lobe level, Fisher information and
//! the statistical resolution limit of a group's horizontal aperture.

use std::f64::consts::PI;

use nalgebra::{Matrix6, SymmetricEigen};
use num_complex::Complex64;

use crate::array::{array_response_sin, steering_z};
use crate::beam::AnalogBeamMatrix;
use crate::error::{Error, Result};

/// Symmetric side-lobe region `[-b, -a] ∪ [a, b]` in the `sin(theta)`
/// difference domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidelobeRegion {
    a: f64,
    b: f64,
}

impl SidelobeRegion {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a < b && b <= 2.0) {
            return Err(Error::InvalidArgument(format!(
                "side-lobe region needs 0 < a < b <= 2, got a={a}, b={b}"
            )));
        }
        Ok(Self { a, b })
    }

    /// `a = 4 / n_y` (first null of the full horizontal aperture), `b = 1`.
    pub fn default_for(n_y: usize) -> Self {
        Self::new((4.0 / n_y as f64).min(0.5), 1.0).expect("default region is valid")
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn measure(&self) -> f64 {
        2.0 * (self.b - self.a)
    }
}

/// First column of the symmetric Toeplitz matrix
/// `V_g = ∫_R a_y(Δ, φ_g) a_y(Δ, φ_g)^H dΔ`.
#[derive(Debug, Clone, PartialEq)]
pub struct IslKernel {
    phi_g: f64,
    region: SidelobeRegion,
    first_column: Vec<f64>,
}

impl IslKernel {
    /// `phi_g` in radians.
    pub fn new(phi_g: f64, n_y: usize, region: SidelobeRegion) -> Self {
        let c = phi_g.cos();
        let (a, b) = (region.a(), region.b());
        let first_column = (0..n_y)
            .map(|n| {
                if n == 0 {
                    2.0 * b - 2.0 * a
                } else {
                    let w = n as f64 * PI * c;
                    2.0 * ((w * b).sin() - (w * a).sin()) / w
                }
            })
            .collect();
        Self { phi_g, region, first_column }
    }

    pub fn phi_g(&self) -> f64 {
        self.phi_g
    }
    pub fn region(&self) -> &SidelobeRegion {
        &self.region
    }
    pub fn first_column(&self) -> &[f64] {
        &self.first_column
    }
    pub fn n_y(&self) -> usize {
        self.first_column.len()
    }
}

/// `ISL_g = s^T V_g s / (|R| (s^T 1)^2)`.
pub fn isl(s_g: &[bool], kernel: &IslKernel) -> Result<f64> {
    if s_g.len() != kernel.n_y() {
        return Err(Error::DimensionMismatch { expected: kernel.n_y(), got: s_g.len() });
    }
    let idx: Vec<usize> = (0..s_g.len()).filter(|&i| s_g[i]).collect();
    if idx.is_empty() {
        return Err(Error::InvalidArgument("ISL of an empty group is undefined".into()));
    }
    let f = kernel.first_column();
    let mut quad = 0.0;
    for (p, &i) in idx.iter().enumerate() {
        quad += f[0];
        for &j in &idx[p + 1..] {
            quad += 2.0 * f[j - i];
        }
    }
    let n = idx.len() as f64;
    Ok(quad / (kernel.region().measure() * n * n))
}

/// `χ_g(Δ) = M s_g^T a_y(Δ, φ_g)`; `m_energy` is the group beam energy
/// `a_z^H W_g^H W_g a_z` (see [`beam_energy`]).
pub fn horizontal_af(s_g: &[bool], delta: f64, phi_g: f64, m_energy: f64) -> Complex64 {
    let c = phi_g.cos();
    let sum: Complex64 = s_g
        .iter()
        .enumerate()
        .filter(|(_, &s)| s)
        .map(|(n, _)| Complex64::cis(PI * n as f64 * delta * c))
        .sum();
    sum * m_energy
}

/// `a_z(φ)^H W^H W a_z(φ)` for `W` made of `t` copies of compression vector
/// `beam` along the column.
pub fn beam_energy(beam: &[Complex64], t: usize, sin_phi: f64) -> f64 {
    let az = steering_z(sin_phi, beam.len()).expect("beam is non-empty");
    let r: Complex64 = beam.iter().zip(&az).map(|(w, a)| w * a).sum();
    t as f64 * r.norm_sqr()
}

/// `χ(φ1, φ2 | θ0) = (F_a a_R(θ0, φ1))^H F_a a_R(θ0, φ2)`, angles in radians.
pub fn vertical_af(f_a: &AnalogBeamMatrix, theta0: f64, phi1: f64, phi2: f64) -> Complex64 {
    vertical_af_sin(f_a, theta0.sin(), phi1.sin(), phi2.sin())
}

pub fn vertical_af_sin(f_a: &AnalogBeamMatrix, sin_theta0: f64, v1: f64, v2: f64) -> Complex64 {
    let r1 = f_a.response(sin_theta0, v1);
    let r2 = f_a.response(sin_theta0, v2);
    r1.iter().zip(&r2).map(|(a, b)| a.conj() * b).sum()
}

/// Dense `a_R^H (F^H F) a_R` evaluation, used to cross-check the compressed
/// forms.
pub fn vertical_af_dense(f_a: &AnalogBeamMatrix, theta0: f64, phi1: f64, phi2: f64) -> Complex64 {
    let geom = f_a.geom();
    let d = f_a.dense();
    let gram = d.adjoint() * &d;
    let a1 = nalgebra::DVector::from_vec(array_response_sin(theta0.sin(), phi1.sin(), geom));
    let a2 = nalgebra::DVector::from_vec(array_response_sin(theta0.sin(), phi2.sin(), geom));
    (a1.adjoint() * gram * a2)[(0, 0)]
}

/// Normalized vertical AF map over a uniform `sin(φ)` grid:
/// `|χ(v1, v2)| / sqrt(χ(v1, v1) χ(v2, v2))`, row `i` is `v1 = grid[i]`.
pub fn vertical_af_map(
    f_a: &AnalogBeamMatrix,
    sin_theta0: f64,
    grid: &[f64],
) -> Vec<Vec<f64>> {
    let resp: Vec<Vec<Complex64>> = grid.iter().map(|&v| f_a.response(sin_theta0, v)).collect();
    let energy: Vec<f64> = resp.iter().map(|r| r.iter().map(|x| x.norm_sqr()).sum()).collect();
    resp.iter()
        .zip(&energy)
        .map(|(r1, e1)| {
            resp.iter()
                .zip(&energy)
                .map(|(r2, e2)| {
                    let c: Complex64 = r1.iter().zip(r2).map(|(a, b)| a.conj() * b).sum();
                    let den = (e1 * e2).sqrt();
                    if den > 0.0 {
                        c.norm() / den
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Largest normalized vertical AF value with `|v2 - v1| > mainlobe` over the
/// `grid x grid` map.
pub fn vertical_sidelobe_peak(
    f_a: &AnalogBeamMatrix,
    sin_theta0: f64,
    grid: &[f64],
    mainlobe: f64,
) -> f64 {
    let map = vertical_af_map(f_a, sin_theta0, grid);
    let mut peak = 0.0_f64;
    for (i, row) in map.iter().enumerate() {
        for (j, val) in row.iter().enumerate() {
            if (grid[j] - grid[i]).abs() > mainlobe {
                peak = peak.max(*val);
            }
        }
    }
    peak
}

/// Inputs of the per-group Fisher information for two paths sharing the
/// group's vertical angle.
#[derive(Debug, Clone, PartialEq)]
pub struct FimParams {
    pub sin_theta_1: f64,
    pub sin_theta_2: f64,
    pub alpha_1: Complex64,
    pub alpha_2: Complex64,
    /// Vertical angle of the group, radians.
    pub phi_g: f64,
    pub noise_var: f64,
    /// Group beam energy `a_z^H W_g^H W_g a_z`.
    pub beam_energy: f64,
    pub s_g: Vec<bool>,
}

/// `S_p(Δ) = Σ_n s[n] (π c n)^p exp(jπ c n Δ)` for `p = 0, 1, 2`.
fn weighted_sums(s_g: &[bool], c: f64, delta: f64) -> [Complex64; 3] {
    let mut out = [Complex64::new(0.0, 0.0); 3];
    for (n, _) in s_g.iter().enumerate().filter(|(_, &s)| s) {
        let w = PI * c * n as f64;
        let e = Complex64::cis(w * delta);
        out[0] += e;
        out[1] += e * w;
        out[2] += e * (w * w);
    }
    out
}

/// Fisher information for `μ = [sinθ1, sinθ2, Re α1, Re α2, Im α1, Im α2]`,
/// `J = (2/σ²) Re{∂b^H/∂μ_i ∂b/∂μ_j}` evaluated in closed form.
pub fn fim(params: &FimParams) -> Result<Matrix6<f64>> {
    if !(params.noise_var > 0.0) {
        return Err(Error::InvalidArgument("noise variance must be positive".into()));
    }
    if !params.s_g.iter().any(|&s| s) {
        return Err(Error::InvalidArgument("FIM of an empty group is degenerate".into()));
    }
    let c = params.phi_g.cos();
    let (u1, u2) = (params.sin_theta_1, params.sin_theta_2);
    let j = Complex64::new(0.0, 1.0);
    let one = Complex64::new(1.0, 0.0);
    // (coefficient, derivative order, angle) of each column of ∂b/∂μ.
    let atoms = [
        (params.alpha_1, 1usize, 0usize),
        (params.alpha_2, 1, 1),
        (one, 0, 0),
        (one, 0, 1),
        (j, 0, 0),
        (j, 0, 1),
    ];
    let sums = [
        weighted_sums(&params.s_g, c, 0.0),
        weighted_sums(&params.s_g, c, u2 - u1),
        weighted_sums(&params.s_g, c, u1 - u2),
    ];
    let sum_for = |from: usize, to: usize| -> &[Complex64; 3] {
        match (from, to) {
            (0, 1) => &sums[1],
            (1, 0) => &sums[2],
            _ => &sums[0],
        }
    };
    let scale = 2.0 / params.noise_var * params.beam_energy;
    let mut out = Matrix6::zeros();
    for (r, &(ca, pa, ia)) in atoms.iter().enumerate() {
        for (col, &(cb, pb, ib)) in atoms.iter().enumerate().skip(r) {
            // conj((jw)^pa) (jw)^pb = (-j)^pa j^pb w^(pa+pb)
            let phase = (-j).powu(pa as u32) * j.powu(pb as u32);
            let v = ca.conj() * cb * phase * sum_for(ia, ib)[pa + pb];
            let val = scale * v.re;
            out[(r, col)] = val;
            out[(col, r)] = val;
        }
    }
    Ok(out)
}

/// Largest tolerated condition number of the diagonally scaled FIM.
pub const FIM_CONDITION_CAP: f64 = 1e12;

/// `CRB_Δ = J⁻¹(1,1) + J⁻¹(2,2) − J⁻¹(1,2) − J⁻¹(2,1)`.
pub fn crb_delta(fim: &Matrix6<f64>) -> Result<f64> {
    let d: Vec<f64> = (0..6).map(|i| fim[(i, i)]).collect();
    if d.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Unresolvable(f64::INFINITY));
    }
    let scale: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let corr = Matrix6::from_fn(|i, j| fim[(i, j)] * scale[i] * scale[j]);
    let eig = SymmetricEigen::new(corr);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || max / min > FIM_CONDITION_CAP {
        return Err(Error::Unresolvable(if min > 0.0 { max / min } else { f64::INFINITY }));
    }
    let inv_corr = eig.eigenvectors
        * Matrix6::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l))
        * eig.eigenvectors.transpose();
    let inv = |i: usize, j: usize| inv_corr[(i, j)] * scale[i] * scale[j];
    Ok((inv(0, 0) + inv(1, 1) - inv(0, 1) - inv(1, 0)).max(0.0))
}

/// Fixed inputs for the SRL of one group: two equal-elevation paths placed
/// symmetrically about `reference` in `sin(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SrlSetup {
    pub s_g: Vec<bool>,
    pub beam_energy: f64,
    pub phi_g: f64,
    pub alpha_1: Complex64,
    pub alpha_2: Complex64,
    pub noise_var: f64,
    pub reference: f64,
    pub search_lo: f64,
    pub search_hi: f64,
}

impl SrlSetup {
    /// Defaults: unit gains, reference 0, search range `[1e-4, 1]`.
    pub fn new(s_g: Vec<bool>, beam_energy: f64, phi_g: f64, noise_var: f64) -> Self {
        Self {
            s_g,
            beam_energy,
            phi_g,
            alpha_1: Complex64::new(1.0, 0.0),
            alpha_2: Complex64::new(1.0, 0.0),
            noise_var,
            reference: 0.0,
            search_lo: 1e-4,
            search_hi: 1.0,
        }
    }

    fn fim_at(&self, delta: f64) -> FimParams {
        FimParams {
            sin_theta_1: self.reference - 0.5 * delta,
            sin_theta_2: self.reference + 0.5 * delta,
            alpha_1: self.alpha_1,
            alpha_2: self.alpha_2,
            phi_g: self.phi_g,
            noise_var: self.noise_var,
            beam_energy: self.beam_energy,
            s_g: self.s_g.clone(),
        }
    }

    /// `Δ² − CRB_Δ(Δ)`; a singular FIM counts as an infinite bound.
    pub fn residual(&self, delta: f64) -> f64 {
        match fim(&self.fim_at(delta)).and_then(|j| crb_delta(&j)) {
            Ok(crb) => delta * delta - crb,
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

const SRL_SCAN_POINTS: usize = 64;
const SRL_TOL: f64 = 1e-8;

fn srl_scan_grid(lo: f64, hi: f64) -> impl Iterator<Item = f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..SRL_SCAN_POINTS)
        .map(move |i| (llo + (lhi - llo) * i as f64 / (SRL_SCAN_POINTS - 1) as f64).exp())
}

fn srl_bisect(setup: &SrlSetup, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = setup.residual(mid);
        if r.abs() < SRL_TOL * 1e-3 || hi - lo < 1e-15 * hi {
            return mid;
        }
        if r < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest `Δ` in the search range solving `Δ = sqrt(CRB_Δ(Δ))`, located by
/// a logarithmic scan for the first sign change followed by bisection.
pub fn srl(setup: &SrlSetup) -> Result<f64> {
    validate_srl(setup)?;
    let out_of_range = || Error::SrlOutOfRange { lo: setup.search_lo, hi: setup.search_hi };
    let mut prev: Option<f64> = None;
    for d in srl_scan_grid(setup.search_lo, setup.search_hi) {
        let r = setup.residual(d);
        if r >= 0.0 {
            return match prev {
                None => Err(out_of_range()),
                Some(p) => Ok(srl_bisect(setup, p, d)),
            };
        }
        prev = Some(d);
    }
    Err(out_of_range())
}

/// `srl(setup) <= bound` without locating the root when the scan already
/// decides it. Errors (no root in range) count as `false`.
pub fn srl_within(setup: &SrlSetup, bound: f64) -> bool {
    if validate_srl(setup).is_err() || !(bound > 0.0) {
        return false;
    }
    let mut prev: Option<f64> = None;
    for d in srl_scan_grid(setup.search_lo, setup.search_hi) {
        let r = setup.residual(d);
        if r >= 0.0 {
            return match prev {
                None => false,
                Some(_) if d <= bound => true,
                Some(p) if p > bound => false,
                Some(p) => srl_bisect(setup, p, d) <= bound,
            };
        }
        if d > bound {
            return false;
        }
        prev = Some(d);
    }
    false
}

fn validate_srl(setup: &SrlSetup) -> Result<()> {
    if setup.alpha_1.norm() == 0.0 || setup.alpha_2.norm() == 0.0 {
        return Err(Error::InvalidArgument("SRL needs nonzero path gains".into()));
    }
    if !(setup.noise_var > 0.0) {
        return Err(Error::InvalidArgument("noise variance must be positive".into()));
    }
    if !(setup.search_lo > 0.0 && setup.search_lo < setup.search_hi) {
        return Err(Error::InvalidArgument("invalid SRL search range".into()));
    }
    if !setup.s_g.iter().any(|&s| s) {
        return Err(Error::InvalidArgument("SRL of an empty group is undefined".into()));
    }
    Ok(())
}
