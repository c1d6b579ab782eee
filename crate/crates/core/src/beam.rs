//! Analog beam matrices for the partially connected array.
//!
//! RF chain `k` drives antennas `k*M .. (k+1)*M`, which is sub-block
//! `k % T` of antenna column `k / T`. Every matrix here keeps that support
//! pattern; only the phase-shifter values differ between designs.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::PI;

use crate::array::{phase_ramp, rng_from_seed, steering_z, UpaGeometry, VerticalPrior};
use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Uniform split of the vertical prior into `G` sub-intervals in the sine
/// domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SubIntervalPartition {
    edges: Vec<f64>,
    centers: Vec<f64>,
}

impl SubIntervalPartition {
    pub fn uniform(prior: &VerticalPrior, g: usize) -> Result<Self> {
        if g == 0 {
            return Err(Error::InvalidArgument("group count must be >= 1".into()));
        }
        let step = prior.width() / g as f64;
        let mut edges: Vec<f64> = (0..=g).map(|i| prior.sin_lo() + step * i as f64).collect();
        edges[g] = prior.sin_hi();
        let centers = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Self { edges, centers })
    }

    pub fn g(&self) -> usize {
        self.centers.len()
    }
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }
    /// Sub-interval centres as `sin(phi)` values.
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }
    pub fn bounds(&self, g: usize) -> (f64, f64) {
        (self.edges[g], self.edges[g + 1])
    }
    pub fn prior(&self) -> VerticalPrior {
        VerticalPrior::new(self.edges[0], self.edges[self.g()]).expect("partition edges are valid")
    }

    /// Sub-interval containing `sin_phi`; the upper edge belongs to the last
    /// interval.
    pub fn group_of(&self, sin_phi: f64) -> Option<usize> {
        let g = self.g();
        if sin_phi < self.edges[0] || sin_phi > self.edges[g] {
            return None;
        }
        let idx = self.edges[1..g].partition_point(|e| *e <= sin_phi);
        Some(idx.min(g - 1))
    }
}

/// Assignment of antenna columns to groups. Row `n` is the binary row
/// `S(n, :)`; at most one group per column by construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroupingPattern {
    g: usize,
    assign: Vec<Option<usize>>,
}

impl GroupingPattern {
    pub fn new(g: usize, assign: Vec<Option<usize>>) -> Result<Self> {
        if g == 0 || assign.is_empty() {
            return Err(Error::InvalidArgument("pattern needs g >= 1 and n_y >= 1".into()));
        }
        if let Some(bad) = assign.iter().flatten().find(|&&x| x >= g) {
            return Err(Error::InvalidArgument(format!("group index {bad} >= {g}")));
        }
        Ok(Self { g, assign })
    }

    /// Builds from an `n_y x G` 0/1 matrix given row by row.
    pub fn from_binary(rows: &[Vec<u8>]) -> Result<Self> {
        let g = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut assign = Vec::with_capacity(rows.len());
        for (n, row) in rows.iter().enumerate() {
            if row.len() != g {
                return Err(Error::DimensionMismatch { expected: g, got: row.len() });
            }
            let mut hit = None;
            for (j, &b) in row.iter().enumerate() {
                match b {
                    0 => {}
                    1 if hit.is_none() => hit = Some(j),
                    1 => return Err(Error::Overlap { row: n }),
                    _ => return Err(Error::Parse(format!("non-binary entry {b} at row {n}"))),
                }
            }
            assign.push(hit);
        }
        Self::new(g, assign)
    }

    /// Adjacent columns share a group: column `i` goes to `floor(i*G/n_y)`.
    pub fn uniform_contiguous(n_y: usize, g: usize) -> Result<Self> {
        if g == 0 || g > n_y {
            return Err(Error::InvalidArgument(format!("cannot split {n_y} columns into {g}")));
        }
        Self::new(g, (0..n_y).map(|i| Some(i * g / n_y)).collect())
    }

    /// Every column independently uniform over {group 0..G, unassigned};
    /// groups left empty receive one column each afterwards.
    pub fn random<R: Rng + ?Sized>(n_y: usize, g: usize, rng: &mut R) -> Result<Self> {
        if g == 0 || g > n_y {
            return Err(Error::InvalidArgument(format!("cannot split {n_y} columns into {g}")));
        }
        let assign = (0..n_y)
            .map(|_| {
                let k = rng.gen_range(0..=g);
                (k < g).then_some(k)
            })
            .collect();
        let mut p = Self { g, assign };
        p.repair_empty_groups(rng)?;
        Ok(p)
    }

    /// Moves a randomly chosen column into every empty group. Donor columns
    /// are unassigned ones or members of groups with at least two columns.
    pub fn repair_empty_groups<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for g in 0..self.g {
            if self.size(g) > 0 {
                continue;
            }
            let sizes = self.sizes();
            let donors: Vec<usize> = (0..self.n_y())
                .filter(|&n| match self.assign[n] {
                    None => true,
                    Some(h) => sizes[h] >= 2,
                })
                .collect();
            if donors.is_empty() {
                return Err(Error::Sampling(format!("no donor column for empty group {g}")));
            }
            let n = donors[rng.gen_range(0..donors.len())];
            self.assign[n] = Some(g);
        }
        Ok(())
    }

    pub fn n_y(&self) -> usize {
        self.assign.len()
    }
    pub fn g(&self) -> usize {
        self.g
    }
    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assign
    }
    pub fn group_of(&self, column: usize) -> Option<usize> {
        self.assign[column]
    }
    /// Binary grouping vector `s_g`.
    pub fn column(&self, g: usize) -> Vec<bool> {
        self.assign.iter().map(|a| *a == Some(g)).collect()
    }
    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.n_y()).filter(|&n| self.assign[n] == Some(g)).collect()
    }
    pub fn size(&self, g: usize) -> usize {
        self.assign.iter().filter(|a| **a == Some(g)).count()
    }
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.g];
        for a in self.assign.iter().flatten() {
            s[*a] += 1;
        }
        s
    }
    pub fn empty_groups(&self) -> Vec<usize> {
        self.sizes().iter().enumerate().filter(|(_, &s)| s == 0).map(|(g, _)| g).collect()
    }
    pub fn is_complete(&self) -> bool {
        self.sizes().iter().all(|&s| s > 0)
    }

    pub fn to_binary(&self) -> Vec<Vec<u8>> {
        self.assign
            .iter()
            .map(|a| (0..self.g).map(|j| u8::from(*a == Some(j))).collect())
            .collect()
    }

    /// Row-major lexicographic order of the binary matrices.
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        let key = |a: &Option<usize>, g: usize| match a {
            None => 0,
            Some(j) => g - j,
        };
        self.assign
            .iter()
            .map(|a| key(a, self.g))
            .cmp(other.assign.iter().map(|a| key(a, other.g)))
    }

    /// 0/1 CSV, one antenna column per line. `header` lines are written as
    /// `# ` comments first.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        for row in self.to_binary() {
            let cells: Vec<String> = row.iter().map(|b| b.to_string()).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    /// Reads a pattern file; returns the pattern and its `#` header lines.
    pub fn read_csv<R: Read>(r: R) -> Result<(Self, Vec<String>)> {
        let mut header = Vec::new();
        let mut rows = Vec::new();
        for line in BufReader::new(r).lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(h) = t.strip_prefix('#') {
                header.push(h.trim().to_string());
                continue;
            }
            let row = t
                .split(',')
                .map(|c| c.trim().parse::<u8>().map_err(|e| Error::Parse(e.to_string())))
                .collect::<Result<Vec<u8>>>()?;
            rows.push(row);
        }
        Ok((Self::from_binary(&rows)?, header))
    }
}

/// Group-wise structure of a beam matrix: `F_a = sum_g diag(s_g) ⊗ W_g`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupFactorization {
    pub partition: SubIntervalPartition,
    pub pattern: GroupingPattern,
    /// Compression vector shared by every RF chain of group `g`.
    pub beams: Vec<Vec<Complex64>>,
}

/// Block-diagonal constant-modulus analog combiner, `N_RF x N_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogBeamMatrix {
    geom: UpaGeometry,
    /// Distinct compression vectors.
    codebook: Vec<Vec<Complex64>>,
    /// Codebook entry per RF chain, `None` for an unused chain.
    code_of: Vec<Option<usize>>,
    groups: Option<GroupFactorization>,
}

/// `[exp(-j pi k s)]_{k < m}`: its inner product with `a_z(s)` equals `m`.
pub fn narrow_beam(center_sin: f64, m: usize) -> Result<Vec<Complex64>> {
    if m == 0 {
        return Err(Error::InvalidArgument("beam length must be >= 1".into()));
    }
    Ok(steering_z(center_sin, m)?.into_iter().map(|x| x.conj()).collect())
}

/// Group-wise narrow beam: every RF chain of column `i` in group `g` uses the
/// narrow beam aimed at the centre of sub-interval `g`; unassigned columns
/// get zero (unused) chains.
pub fn build_group_beam_matrix(
    partition: &SubIntervalPartition,
    pattern: &GroupingPattern,
    geom: &UpaGeometry,
) -> Result<AnalogBeamMatrix> {
    if pattern.g() != partition.g() {
        return Err(Error::DimensionMismatch { expected: partition.g(), got: pattern.g() });
    }
    if pattern.n_y() != geom.n_y() {
        return Err(Error::DimensionMismatch { expected: geom.n_y(), got: pattern.n_y() });
    }
    if let Some(&g) = pattern.empty_groups().first() {
        return Err(Error::EmptyGroup(g));
    }
    let beams = partition
        .centers()
        .iter()
        .map(|&c| narrow_beam(c, geom.m()))
        .collect::<Result<Vec<_>>>()?;
    let t = geom.t();
    let code_of = (0..geom.n_rf()).map(|k| pattern.group_of(k / t)).collect();
    Ok(AnalogBeamMatrix {
        geom: *geom,
        codebook: beams.clone(),
        code_of,
        groups: Some(GroupFactorization {
            partition: partition.clone(),
            pattern: pattern.clone(),
            beams,
        }),
    })
}

/// All RF chains share one beam aimed at the centre of the vertical prior.
pub fn wide_beam_matrix(prior: &VerticalPrior, geom: &UpaGeometry) -> AnalogBeamMatrix {
    let v = narrow_beam(prior.center(), geom.m()).expect("geometry has m >= 1");
    AnalogBeamMatrix {
        geom: *geom,
        codebook: vec![v],
        code_of: vec![Some(0); geom.n_rf()],
        groups: None,
    }
}

/// Independent uniform phases on every phase shifter.
pub fn random_beam_matrix(geom: &UpaGeometry, seed: u64) -> AnalogBeamMatrix {
    let mut rng = rng_from_seed(seed);
    let codebook: Vec<Vec<Complex64>> = (0..geom.n_rf())
        .map(|_| (0..geom.m()).map(|_| Complex64::cis(rng.gen_range(0.0..2.0 * PI))).collect())
        .collect();
    AnalogBeamMatrix {
        geom: *geom,
        code_of: (0..geom.n_rf()).map(Some).collect(),
        codebook,
        groups: None,
    }
}

impl AnalogBeamMatrix {
    /// Generic constructor from one compression vector per RF chain (`None`
    /// marks an unused chain). Entries must be unit modulus.
    pub fn from_vectors(geom: &UpaGeometry, vectors: Vec<Option<Vec<Complex64>>>) -> Result<Self> {
        if vectors.len() != geom.n_rf() {
            return Err(Error::DimensionMismatch { expected: geom.n_rf(), got: vectors.len() });
        }
        let mut codebook = Vec::new();
        let mut code_of = Vec::with_capacity(vectors.len());
        for v in vectors {
            match v {
                None => code_of.push(None),
                Some(v) => {
                    if v.len() != geom.m() {
                        return Err(Error::DimensionMismatch { expected: geom.m(), got: v.len() });
                    }
                    if v.iter().any(|x| (x.norm() - 1.0).abs() > 1e-9) {
                        return Err(Error::InvalidArgument(
                            "compression vector entries must be unit modulus".into(),
                        ));
                    }
                    code_of.push(Some(codebook.len()));
                    codebook.push(v);
                }
            }
        }
        Ok(Self { geom: *geom, codebook, code_of, groups: None })
    }

    pub fn geom(&self) -> &UpaGeometry {
        &self.geom
    }
    pub fn n_rf(&self) -> usize {
        self.code_of.len()
    }
    pub fn group_factorization(&self) -> Option<&GroupFactorization> {
        self.groups.as_ref()
    }
    pub fn is_used(&self, k: usize) -> bool {
        self.code_of[k].is_some()
    }
    pub fn used_rows(&self) -> Vec<usize> {
        (0..self.n_rf()).filter(|&k| self.is_used(k)).collect()
    }
    /// Compression vector `v_a^k`, `None` for an unused chain.
    pub fn compression_vector(&self, k: usize) -> Option<&[Complex64]> {
        self.code_of[k].map(|c| self.codebook[c].as_slice())
    }

    /// Nonzero rows of `F_g` (the row set `R_g`).
    pub fn group_rows(&self, g: usize) -> Result<Vec<usize>> {
        let f = self.groups.as_ref().ok_or(Error::NotGroupWise)?;
        let t = self.geom.t();
        Ok((0..self.n_rf()).filter(|&k| f.pattern.group_of(k / t) == Some(g)).collect())
    }

    pub fn dense(&self) -> DMatrix<Complex64> {
        let m = self.geom.m();
        let mut d = DMatrix::from_element(self.n_rf(), self.geom.n_r(), ZERO);
        for k in 0..self.n_rf() {
            if let Some(v) = self.compression_vector(k) {
                for (j, x) in v.iter().enumerate() {
                    d[(k, k * m + j)] = *x;
                }
            }
        }
        d
    }

    /// `W_g`, the `T x N_z` block diagonal of `T` copies of beam `g`.
    pub fn group_block(&self, g: usize) -> Result<DMatrix<Complex64>> {
        let f = self.groups.as_ref().ok_or(Error::NotGroupWise)?;
        let (t, m) = (self.geom.t(), self.geom.m());
        let mut w = DMatrix::from_element(t, self.geom.n_z(), ZERO);
        for r in 0..t {
            for (j, x) in f.beams[g].iter().enumerate() {
                w[(r, r * m + j)] = *x;
            }
        }
        Ok(w)
    }

    /// `F_g = diag(s_g) ⊗ W_g` as a dense `N_RF x N_r` matrix.
    pub fn group_dense(&self, g: usize) -> Result<DMatrix<Complex64>> {
        let f = self.groups.as_ref().ok_or(Error::NotGroupWise)?;
        let w = self.group_block(g)?;
        let s = f.pattern.column(g);
        let sd = DMatrix::from_fn(s.len(), s.len(), |i, j| {
            if i == j && s[i] {
                Complex64::new(1.0, 0.0)
            } else {
                ZERO
            }
        });
        Ok(sd.kronecker(&w))
    }

    /// `F_a h`.
    pub fn apply(&self, h: &[Complex64]) -> Result<Vec<Complex64>> {
        if h.len() != self.geom.n_r() {
            return Err(Error::DimensionMismatch { expected: self.geom.n_r(), got: h.len() });
        }
        let m = self.geom.m();
        Ok((0..self.n_rf())
            .map(|k| match self.compression_vector(k) {
                None => ZERO,
                Some(v) => v.iter().zip(&h[k * m..(k + 1) * m]).map(|(a, b)| a * b).sum(),
            })
            .collect())
    }

    /// `F_a a_R(u, v)` with `u = sin(theta)`, `v = sin(phi)`.
    pub fn response(&self, u: f64, v: f64) -> Vec<Complex64> {
        let rows: Vec<usize> = (0..self.n_rf()).collect();
        let mut out = vec![ZERO; rows.len()];
        self.response_rows(&rows, u, v, &mut out);
        out
    }

    /// Entries `rows` of `F_a a_R(u, v)`.
    pub fn response_rows(&self, rows: &[usize], u: f64, v: f64, out: &mut [Complex64]) {
        let (t, m) = (self.geom.t(), self.geom.m());
        let cos_phi = (1.0 - v * v).max(0.0).sqrt();
        let zpha = phase_ramp(v, self.geom.n_z());
        let step = Complex64::cis(PI * u * cos_phi);
        let table = self.inner_table(rows.len(), &zpha, None);
        for (o, &k) in out.iter_mut().zip(rows) {
            let Some(c) = self.code_of[k] else {
                *o = ZERO;
                continue;
            };
            let (col, sub) = (k / t, k % t);
            let inner = match &table {
                Some(tb) => tb[c * t + sub],
                None => dot(&self.codebook[c], &zpha[sub * m..(sub + 1) * m]),
            };
            *o = step.powu(col as u32) * inner;
        }
    }

    /// Entries `rows` of `F_a a_R(u, v)` together with its partial
    /// derivatives with respect to `u` and `v`.
    pub fn response_rows_with_grad(
        &self,
        rows: &[usize],
        u: f64,
        v: f64,
        out: &mut [Complex64],
        d_u: &mut [Complex64],
        d_v: &mut [Complex64],
    ) {
        let (t, m) = (self.geom.t(), self.geom.m());
        let cos_phi = (1.0 - v * v).max(1e-12).sqrt();
        let zpha = phase_ramp(v, self.geom.n_z());
        let zder: Vec<Complex64> = zpha
            .iter()
            .enumerate()
            .map(|(n, z)| z * Complex64::new(0.0, PI * n as f64))
            .collect();
        let table = self.inner_table(rows.len(), &zpha, None);
        let dtable = self.inner_table(rows.len(), &zpha, Some(&zder));
        let ycoef_u = PI * cos_phi;
        let ycoef_v = -PI * u * v / cos_phi;
        for (idx, &k) in rows.iter().enumerate() {
            let Some(c) = self.code_of[k] else {
                out[idx] = ZERO;
                d_u[idx] = ZERO;
                d_v[idx] = ZERO;
                continue;
            };
            let (col, sub) = (k / t, k % t);
            let (inner, dinner) = match (&table, &dtable) {
                (Some(tb), Some(dt)) => (tb[c * t + sub], dt[c * t + sub]),
                _ => (
                    dot(&self.codebook[c], &zpha[sub * m..(sub + 1) * m]),
                    dot(&self.codebook[c], &zder[sub * m..(sub + 1) * m]),
                ),
            };
            let i = col as f64;
            let ypha = Complex64::cis(PI * i * u * cos_phi);
            let val = ypha * inner;
            out[idx] = val;
            d_u[idx] = val * Complex64::new(0.0, ycoef_u * i);
            d_v[idx] = val * Complex64::new(0.0, ycoef_v * i) + ypha * dinner;
        }
    }

    /// Per-(codeword, sub-block) inner products, built only when cheaper than
    /// evaluating every requested row directly.
    fn inner_table(
        &self,
        n_rows: usize,
        zpha: &[Complex64],
        weights: Option<&[Complex64]>,
    ) -> Option<Vec<Complex64>> {
        let (t, m) = (self.geom.t(), self.geom.m());
        if self.codebook.len() * t > n_rows {
            return None;
        }
        let z = weights.unwrap_or(zpha);
        let mut tb = Vec::with_capacity(self.codebook.len() * t);
        for code in &self.codebook {
            for sub in 0..t {
                tb.push(dot(code, &z[sub * m..(sub + 1) * m]));
            }
        }
        Some(tb)
    }

    /// Nonzero entries as `row,col,re,im`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["row", "col", "re", "im"])?;
        let m = self.geom.m();
        for k in 0..self.n_rf() {
            if let Some(v) = self.compression_vector(k) {
                for (j, x) in v.iter().enumerate() {
                    w.write_record([
                        k.to_string(),
                        (k * m + j).to_string(),
                        format!("{:e}", x.re),
                        format!("{:e}", x.im),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `row,col,re,im` form back, checking the block-diagonal
    /// support. Rows with no entries become unused chains.
    pub fn read_csv<R: Read>(reader: R, geom: &UpaGeometry) -> Result<Self> {
        let m = geom.m();
        let mut vectors: Vec<Option<Vec<Complex64>>> = vec![None; geom.n_rf()];
        let mut r = csv::Reader::from_reader(reader);
        for rec in r.records() {
            let rec = rec?;
            let p = |i: usize| rec[i].trim().to_string();
            let row: usize = p(0).parse().map_err(|e| Error::Parse(format!("row: {e}")))?;
            let col: usize = p(1).parse().map_err(|e| Error::Parse(format!("col: {e}")))?;
            let re: f64 = p(2).parse().map_err(|e| Error::Parse(format!("re: {e}")))?;
            let im: f64 = p(3).parse().map_err(|e| Error::Parse(format!("im: {e}")))?;
            if row >= geom.n_rf() || col < row * m || col >= (row + 1) * m {
                return Err(Error::Parse(format!(
                    "entry ({row}, {col}) is outside the block-diagonal support"
                )));
            }
            let v = vectors[row].get_or_insert_with(|| vec![ZERO; m]);
            v[col - row * m] = Complex64::new(re, im);
        }
        Self::from_vectors(geom, vectors)
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
