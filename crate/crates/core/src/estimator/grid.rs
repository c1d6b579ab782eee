use crate::array::{AzimuthRange, VerticalPrior};
use crate::beam::SubIntervalPartition;
use crate::error::{Error, Result};

/// Candidate `(sin theta, sin phi)` dictionary points. Point `i * l2 + j`
/// starts at azimuth cell `i` and elevation cell `j`; refinement moves points
/// individually afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicGrid {
    l1: usize,
    l2: usize,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub group_index: Vec<Option<usize>>,
}

impl DynamicGrid {
    /// Cell midpoints of a uniform `l1 x l2` sine-domain grid. Points are
    /// labeled with the sub-interval containing their elevation when a
    /// partition is given.
    pub fn uniform(
        l1: usize,
        l2: usize,
        azimuth: &AzimuthRange,
        prior: &VerticalPrior,
        partition: Option<&SubIntervalPartition>,
    ) -> Result<Self> {
        if l1 == 0 || l2 == 0 {
            return Err(Error::InvalidArgument("grid sizes must be positive".into()));
        }
        let du = (azimuth.sin_hi() - azimuth.sin_lo()) / l1 as f64;
        let dv = prior.width() / l2 as f64;
        let mut theta = Vec::with_capacity(l1 * l2);
        let mut phi = Vec::with_capacity(l1 * l2);
        for i in 0..l1 {
            for j in 0..l2 {
                theta.push(azimuth.sin_lo() + (i as f64 + 0.5) * du);
                phi.push(prior.sin_lo() + (j as f64 + 0.5) * dv);
            }
        }
        let group_index = match partition {
            Some(p) => phi.iter().map(|&v| p.group_of(v)).collect(),
            None => vec![None; l1 * l2],
        };
        Ok(Self { l1, l2, theta, phi, group_index })
    }

    /// Default sizes: `l1 = 2 n_y`, `l2 = 64`.
    pub fn default_sizes(n_y: usize) -> (usize, usize) {
        (2 * n_y, 64)
    }

    pub fn l1(&self) -> usize {
        self.l1
    }
    pub fn l2(&self) -> usize {
        self.l2
    }
    pub fn len(&self) -> usize {
        self.theta.len()
    }
    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Grid spacing `(Δ sin theta, Δ sin phi)` of the initial layout.
    pub fn spacing(azimuth: &AzimuthRange, prior: &VerticalPrior, l1: usize, l2: usize) -> (f64, f64) {
        ((azimuth.sin_hi() - azimuth.sin_lo()) / l1 as f64, prior.width() / l2 as f64)
    }

    /// Indices of points labeled `g`.
    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.group_index[i] == Some(g)).collect()
    }

    /// `L_g` for `g = 0..n_groups`; errors on an unlabeled point.
    pub fn group_sizes(&self, n_groups: usize) -> Result<Vec<usize>> {
        let mut sizes = vec![0; n_groups];
        for (i, gi) in self.group_index.iter().enumerate() {
            match gi {
                Some(g) if *g < n_groups => sizes[*g] += 1,
                _ => return Err(Error::Unlabeled(i)),
            }
        }
        Ok(sizes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_layout() {
        let prior = VerticalPrior::default();
        let part = SubIntervalPartition::uniform(&prior, 4).unwrap();
        let g = DynamicGrid::uniform(32, 64, &AzimuthRange::default(), &prior, Some(&part)).unwrap();
        assert_eq!(g.len(), 2048);
        assert_eq!(g.group_sizes(4).unwrap(), vec![512; 4]);
        for i in 0..g.len() {
            let (lo, hi) = part.bounds(g.group_index[i].unwrap());
            assert!(g.phi[i] > lo && g.phi[i] < hi);
        }
        assert!((g.theta[0] + 1.0 - 1.0 / 32.0).abs() < 1e-15);
        assert!((g.phi[63] - (-1.0 / 256.0)).abs() < 1e-15);
        let unlabeled =
            DynamicGrid::uniform(4, 4, &AzimuthRange::default(), &prior, None).unwrap();
        assert!(matches!(unlabeled.group_sizes(4), Err(Error::Unlabeled(0))));
    }
}
