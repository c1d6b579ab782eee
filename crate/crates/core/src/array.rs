//! Uniform planar array geometry, steering vectors and the synthetic
//! geometric multipath channel.
//!
//! All angles are handled in the sine domain internally: the horizontal
//! steering vector depends on `sin(theta) * cos(phi)` and the vertical one on
//! `sin(phi)`. Element `(n_y, n_z)` of the array response lives at index
//! `n_y * n_z_total + n_z`, i.e. the response is `a_y ⊗ a_z`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::beam::AnalogBeamMatrix;
use crate::error::{Error, Result};

/// Planar array with `n_y` columns of `n_z` antennas, each column driven by
/// `n_z / m` RF chains through `m`-element vertical subarrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpaGeometry {
    n_y: usize,
    n_z: usize,
    m: usize,
}

impl UpaGeometry {
    pub fn new(n_y: usize, n_z: usize, m: usize) -> Result<Self> {
        if n_y == 0 || n_z == 0 || m == 0 {
            return Err(Error::Geometry(format!(
                "all counts must be positive (n_y={n_y}, n_z={n_z}, m={m})"
            )));
        }
        if n_z % m != 0 {
            return Err(Error::Geometry(format!(
                "subarray size {m} does not divide column height {n_z}"
            )));
        }
        Ok(Self { n_y, n_z, m })
    }

    /// Full-scale array: 64 x 72 antennas, 12-element subarrays, 384 RF chains.
    pub fn paper() -> Self {
        Self { n_y: 64, n_z: 72, m: 12 }
    }

    /// Reduced array used for quick sweeps: 16 x 24 antennas, M = 6.
    pub fn desk() -> Self {
        Self { n_y: 16, n_z: 24, m: 6 }
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }
    pub fn n_z(&self) -> usize {
        self.n_z
    }
    /// Subarray size (compression ratio).
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn n_r(&self) -> usize {
        self.n_y * self.n_z
    }
    pub fn n_rf(&self) -> usize {
        self.n_r() / self.m
    }
    /// RF chains per antenna column.
    pub fn t(&self) -> usize {
        self.n_z / self.m
    }
}

/// Prior interval of the vertical angle, stored as `[sin_lo, sin_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalPrior {
    sin_lo: f64,
    sin_hi: f64,
}

impl VerticalPrior {
    pub fn new(sin_lo: f64, sin_hi: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&sin_lo) || !(-1.0..=1.0).contains(&sin_hi) || sin_lo >= sin_hi
        {
            return Err(Error::InvalidArgument(format!(
                "vertical prior [{sin_lo}, {sin_hi}] must satisfy -1 <= lo < hi <= 1"
            )));
        }
        Ok(Self { sin_lo, sin_hi })
    }

    pub fn sin_lo(&self) -> f64 {
        self.sin_lo
    }
    pub fn sin_hi(&self) -> f64 {
        self.sin_hi
    }
    pub fn center(&self) -> f64 {
        0.5 * (self.sin_lo + self.sin_hi)
    }
    pub fn width(&self) -> f64 {
        self.sin_hi - self.sin_lo
    }
    pub fn contains(&self, sin_phi: f64) -> bool {
        (self.sin_lo..=self.sin_hi).contains(&sin_phi)
    }
}

impl Default for VerticalPrior {
    /// phi in [-pi/6, 0].
    fn default() -> Self {
        Self { sin_lo: -0.5, sin_hi: 0.0 }
    }
}

/// Azimuth prior range in the sine domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AzimuthRange {
    sin_lo: f64,
    sin_hi: f64,
}

impl AzimuthRange {
    pub fn new(sin_lo: f64, sin_hi: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&sin_lo) || !(-1.0..=1.0).contains(&sin_hi) || sin_lo >= sin_hi
        {
            return Err(Error::InvalidArgument(format!(
                "azimuth range [{sin_lo}, {sin_hi}] must satisfy -1 <= lo < hi <= 1"
            )));
        }
        Ok(Self { sin_lo, sin_hi })
    }
    pub fn sin_lo(&self) -> f64 {
        self.sin_lo
    }
    pub fn sin_hi(&self) -> f64 {
        self.sin_hi
    }
}

impl Default for AzimuthRange {
    fn default() -> Self {
        Self { sin_lo: -1.0, sin_hi: 1.0 }
    }
}

/// How path gains are drawn by [`sample_channel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainProfile {
    /// Path 0 has magnitude `los_magnitude` and a uniform phase; the remaining
    /// paths are i.i.d. circular Gaussian whose total power is
    /// `nlos_power_ratio` times the LOS power.
    LosNlos { los_magnitude: f64, nlos_power_ratio: f64 },
    /// Every path gets this gain.
    Fixed(Complex64),
}

impl Default for GainProfile {
    fn default() -> Self {
        GainProfile::LosNlos { los_magnitude: 1.0, nlos_power_ratio: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub gain: Complex64,
    /// Azimuth angle of arrival, radians.
    pub azimuth: f64,
    /// Elevation angle of arrival, radians.
    pub elevation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub paths: Vec<PathParams>,
    pub h: Vec<Complex64>,
}

impl ChannelRealization {
    /// Assembles `h = sum_k gain_k * a_R(theta_k, phi_k)`.
    pub fn from_paths(paths: Vec<PathParams>, geom: &UpaGeometry) -> Self {
        let mut h = vec![Complex64::new(0.0, 0.0); geom.n_r()];
        for p in &paths {
            let a = array_response(p.azimuth, p.elevation, geom);
            for (hi, ai) in h.iter_mut().zip(&a) {
                *hi += p.gain * ai;
            }
        }
        Self { paths, h }
    }

    /// Writes the path list as `path,gain_re,gain_im,azimuth,elevation`
    /// (angles in radians).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["path", "gain_re", "gain_im", "azimuth", "elevation"])?;
        for (k, p) in self.paths.iter().enumerate() {
            w.write_record([
                k.to_string(),
                format!("{:e}", p.gain.re),
                format!("{:e}", p.gain.im),
                format!("{:e}", p.azimuth),
                format!("{:e}", p.elevation),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`ChannelRealization::write_csv`] and rebuilds `h`.
    pub fn read_csv<R: Read>(reader: R, geom: &UpaGeometry) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let mut paths = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(Error::Parse(format!("expected 5 fields, got {}", rec.len())));
            }
            let f = |i: usize| -> Result<f64> {
                rec[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("field {i}: {e}")))
            };
            paths.push(PathParams {
                gain: Complex64::new(f(1)?, f(2)?),
                azimuth: f(3)?,
                elevation: f(4)?,
            });
        }
        Ok(Self::from_paths(paths, geom))
    }
}

/// Horizontal steering vector, element `k` is `exp(j pi k sin_theta cos_phi)`.
pub fn steering_y(sin_theta: f64, cos_phi: f64, n_y: usize) -> Result<Vec<Complex64>> {
    if n_y == 0 {
        return Err(Error::InvalidArgument("steering_y needs n_y >= 1".into()));
    }
    Ok(phase_ramp(sin_theta * cos_phi, n_y))
}

/// Vertical steering vector, element `k` is `exp(j pi k sin_phi)`.
pub fn steering_z(sin_phi: f64, n_z: usize) -> Result<Vec<Complex64>> {
    if n_z == 0 {
        return Err(Error::InvalidArgument("steering_z needs n_z >= 1".into()));
    }
    Ok(phase_ramp(sin_phi, n_z))
}

/// `[exp(j pi k x)]_{k < n}`.
pub(crate) fn phase_ramp(x: f64, n: usize) -> Vec<Complex64> {
    (0..n).map(|k| Complex64::cis(PI * k as f64 * x)).collect()
}

/// UPA response `a_y(sin theta, cos phi) ⊗ a_z(sin phi)` for angles in radians.
pub fn array_response(theta: f64, phi: f64, geom: &UpaGeometry) -> Vec<Complex64> {
    array_response_sin(theta.sin(), phi.sin(), geom)
}

/// Same as [`array_response`] with `u = sin(theta)` and `v = sin(phi)`.
pub fn array_response_sin(u: f64, v: f64, geom: &UpaGeometry) -> Vec<Complex64> {
    let cos_phi = (1.0 - v * v).max(0.0).sqrt();
    let ay = phase_ramp(u * cos_phi, geom.n_y());
    let az = phase_ramp(v, geom.n_z());
    let mut out = Vec::with_capacity(geom.n_r());
    for a in &ay {
        out.extend(az.iter().map(|b| a * b));
    }
    out
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes `parts` into `base` with the splitmix64 finalizer; used to give
/// every (point, trial) or (iteration, individual) its own stream.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base.wrapping_add(0x9e37_79b9_7f4a_7c15)), |acc, &p| {
        mix(acc ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(0xd6e8_feb8_6659_fd93))
    })
}

/// Circular complex Gaussian sample with `E|z|^2 = var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Draws a geometric multipath channel. Elevations are uniform in `sin(phi)`
/// over the vertical prior and azimuths uniform in `sin(theta)` over the
/// azimuth range.
pub fn sample_channel(
    k_paths: usize,
    prior: &VerticalPrior,
    azimuth: &AzimuthRange,
    gains: &GainProfile,
    geom: &UpaGeometry,
    seed: u64,
) -> Result<ChannelRealization> {
    if k_paths == 0 {
        return Err(Error::InvalidArgument("k_paths must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut paths = Vec::with_capacity(k_paths);
    for k in 0..k_paths {
        let sin_phi = rng.gen_range(prior.sin_lo()..=prior.sin_hi());
        let sin_theta = rng.gen_range(azimuth.sin_lo()..=azimuth.sin_hi());
        let gain = match *gains {
            GainProfile::Fixed(g) => g,
            GainProfile::LosNlos { los_magnitude, nlos_power_ratio } => {
                if k == 0 {
                    Complex64::from_polar(los_magnitude, rng.gen_range(0.0..2.0 * PI))
                } else {
                    let per_path =
                        nlos_power_ratio * los_magnitude * los_magnitude / (k_paths - 1) as f64;
                    complex_gaussian(&mut rng, per_path)
                }
            }
        };
        paths.push(PathParams { gain, azimuth: sin_theta.asin(), elevation: sin_phi.asin() });
    }
    Ok(ChannelRealization::from_paths(paths, geom))
}

/// `y = F_a h + w` with `w ~ CN(0, noise_var I)`.
pub fn received_signal(
    f_a: &AnalogBeamMatrix,
    h: &[Complex64],
    noise_var: f64,
    seed: u64,
) -> Result<Vec<Complex64>> {
    if noise_var < 0.0 || !noise_var.is_finite() {
        return Err(Error::InvalidArgument(format!("noise variance {noise_var} must be >= 0")));
    }
    let mut y = f_a.apply(h)?;
    if noise_var > 0.0 {
        let mut rng = rng_from_seed(seed);
        for yi in &mut y {
            *yi += complex_gaussian(&mut rng, noise_var);
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn steering_examples() {
        let v = steering_y(0.0, 1.0, 4).unwrap();
        assert!(v.iter().all(|x| (x - c(1.0, 0.0)).norm() < 1e-15));
        let v = steering_y(1.0, 1.0, 2).unwrap();
        assert!((v[1] - c(-1.0, 0.0)).norm() < 1e-15);
        let v = steering_y(0.5, 0.8, 8).unwrap();
        let expect = Complex64::cis(PI * 1.2);
        assert!((v[3] - expect).norm() < 1e-14);

        assert!(steering_z(0.0, 3).unwrap().iter().all(|x| (x - 1.0).norm() < 1e-15));
        assert!((steering_z(1.0, 2).unwrap()[1] + 1.0).norm() < 1e-15);
        assert!((steering_z(-0.5, 4).unwrap()[2] - Complex64::cis(-PI)).norm() < 1e-15);
    }

    #[test]
    fn steering_rejects_zero_length() {
        assert!(steering_y(0.1, 0.9, 0).is_err());
        assert!(steering_z(0.1, 0).is_err());
    }

    #[test]
    fn geometry_validation() {
        assert!(UpaGeometry::new(4, 6, 4).is_err());
        assert!(UpaGeometry::new(0, 6, 3).is_err());
        let g = UpaGeometry::paper();
        assert_eq!(g.n_r(), 4608);
        assert_eq!(g.n_rf(), 384);
        assert_eq!(g.t(), 6);
        assert_eq!(g.n_rf() * g.m(), g.n_r());
    }

    #[test]
    fn array_response_examples() {
        let g = UpaGeometry::new(2, 2, 1).unwrap();
        let a = array_response(0.0, 0.0, &g);
        assert_eq!(a.len(), 4);
        assert!(a.iter().all(|x| (x - 1.0).norm() < 1e-15));

        let g = UpaGeometry::new(4, 6, 2).unwrap();
        let (theta, phi) = (PI / 6.0, -PI / 12.0);
        let a = array_response(theta, phi, &g);
        for ny in 0..4 {
            for nz in 0..6 {
                let scalar = Complex64::cis(
                    PI * (ny as f64 * theta.sin() * phi.cos() + nz as f64 * phi.sin()),
                );
                assert!((a[ny * 6 + nz] - scalar).norm() < 1e-13);
            }
        }
        let norm2: f64 = a.iter().map(|x| x.norm_sqr()).sum();
        assert_abs_diff_eq!(norm2, 24.0, epsilon = 1e-10);
    }

    #[test]
    fn single_fixed_path_is_array_response() {
        let g = UpaGeometry::desk();
        let ch = sample_channel(
            1,
            &VerticalPrior::default(),
            &AzimuthRange::default(),
            &GainProfile::Fixed(c(1.0, 0.0)),
            &g,
            3,
        )
        .unwrap();
        let p = ch.paths[0];
        let a = array_response(p.azimuth, p.elevation, &g);
        for (x, y) in ch.h.iter().zip(&a) {
            assert!((x - y).norm() < 1e-14);
        }
        assert!(VerticalPrior::default().contains(p.elevation.sin()));
    }

    #[test]
    fn channel_is_deterministic_and_resums() {
        let g = UpaGeometry::desk();
        let prior = VerticalPrior::default();
        let az = AzimuthRange::default();
        let a = sample_channel(10, &prior, &az, &GainProfile::default(), &g, 42).unwrap();
        let b = sample_channel(10, &prior, &az, &GainProfile::default(), &g, 42).unwrap();
        assert_eq!(a, b);
        // re-summation oracle with a direct scalar double loop
        let mut err = 0.0;
        let mut norm = 0.0;
        for ny in 0..g.n_y() {
            for nz in 0..g.n_z() {
                let mut s = c(0.0, 0.0);
                for p in &a.paths {
                    s += p.gain
                        * Complex64::cis(
                            PI * (ny as f64 * p.azimuth.sin() * p.elevation.cos()
                                + nz as f64 * p.elevation.sin()),
                        );
                }
                let idx = ny * g.n_z() + nz;
                err += (a.h[idx] - s).norm_sqr();
                norm += s.norm_sqr();
            }
        }
        assert!(err.sqrt() < 1e-12 * norm.sqrt());
        // LOS path dominates on average; at least it has the configured magnitude.
        assert_abs_diff_eq!(a.paths[0].gain.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sample_channel_rejects_zero_paths() {
        let g = UpaGeometry::desk();
        assert!(sample_channel(
            0,
            &VerticalPrior::default(),
            &AzimuthRange::default(),
            &GainProfile::default(),
            &g,
            1
        )
        .is_err());
        assert!(VerticalPrior::new(0.1, 0.1).is_err());
        assert!(AzimuthRange::new(0.5, -0.5).is_err());
    }

    #[test]
    fn channel_csv_roundtrip() {
        let g = UpaGeometry::desk();
        let ch = sample_channel(
            4,
            &VerticalPrior::default(),
            &AzimuthRange::default(),
            &GainProfile::default(),
            &g,
            9,
        )
        .unwrap();
        let mut buf = Vec::new();
        ch.write_csv(&mut buf).unwrap();
        let back = ChannelRealization::read_csv(buf.as_slice(), &g).unwrap();
        for (x, y) in ch.h.iter().zip(&back.h) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn complex_noise_variance() {
        let mut rng = rng_from_seed(5);
        let n = 100_000;
        let var: f64 = (0..n).map(|_| complex_gaussian(&mut rng, 1.0).norm_sqr()).sum::<f64>()
            / n as f64;
        assert!((var - 1.0).abs() < 0.03, "{var}");
    }
}
