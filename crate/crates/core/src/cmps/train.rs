use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::svd::Truncation;
use super::{BlockKey, Bits, Center, ConstrainedMPS, MpsError, MpsResult};

type Boundary = Option<(usize, DVector<f64>)>;

/// Gradient of the negative log-likelihood with respect to the center tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct CenterGradient {
    pub blocks: BTreeMap<BlockKey, DMatrix<f64>>,
    /// Samples with zero amplitude, left out of the data term.
    pub skipped: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainStats {
    pub discarded_weight: f64,
    pub skipped: usize,
}

impl ConstrainedMPS {
    /// `-(1/|T|) sum_x log(psi(x)^2 / Z)`; infinite if some sample has zero amplitude.
    pub fn negative_log_likelihood(&self, data: &[Bits]) -> MpsResult<f64> {
        if data.is_empty() {
            return Err(MpsError::InvalidArgument("empty training set".into()));
        }
        let z = self.norm_squared();
        let mut total = 0.0;
        for x in data {
            let psi = self.evaluate(x)?;
            total -= (psi * psi / z).ln();
        }
        Ok(total / data.len() as f64)
    }

    /// Mutable access to a block of the flux tensor while the center is a site.
    pub fn center_block_mut(&mut self, key: BlockKey) -> Option<&mut DMatrix<f64>> {
        match self.center {
            Center::Site(s) => self.tensors[s].blocks.get_mut(&key),
            Center::Bond(_) => None,
        }
    }

    /// `2A/Z - (2/|T|) sum_x E(x)/psi(x)` for the flux tensor `A` of a
    /// canonical state centered on a site, where `E(x)` is the environment of
    /// the block selected by `x`.
    pub fn center_gradient(&self, data: &[Bits]) -> MpsResult<CenterGradient> {
        let Center::Site(s) = self.center else {
            return Err(MpsError::InvalidArgument("gradient needs a site center".into()));
        };
        if !self.canonical {
            return Err(MpsError::InvalidArgument("gradient needs a canonical state".into()));
        }
        for x in data {
            self.check_bits(x)?;
        }
        let lefts: Vec<Boundary> = data.iter().map(|x| self.left_vector(x, s)).collect();
        let rights: Vec<Boundary> = data.iter().map(|x| self.right_vector(x, s + 1)).collect();
        self.gradient_from(s, data, &lefts, &rights)
    }

    fn gradient_from(
        &self,
        s: usize,
        data: &[Bits],
        lefts: &[Boundary],
        rights: &[Boundary],
    ) -> MpsResult<CenterGradient> {
        if data.is_empty() {
            return Err(MpsError::InvalidArgument("empty training set".into()));
        }
        let tensor = &self.tensors[s].blocks;
        let z: f64 = tensor.values().map(|m| m.norm_squared()).sum();
        if !(z.is_finite() && z > f64::MIN_POSITIVE) {
            return Err(MpsError::NormUnderflow(z.sqrt()));
        }
        let mut blocks: BTreeMap<BlockKey, DMatrix<f64>> =
            tensor.iter().map(|(&k, m)| (k, m * (2.0 / z))).collect();
        let scale = 2.0 / data.len() as f64;
        let mut skipped = 0;
        for ((x, left), right) in data.iter().zip(lefts).zip(rights) {
            let (Some((q, v)), Some((r, u))) = (left, right) else {
                skipped += 1;
                continue;
            };
            let key = (*q, x[s], *r);
            let Some(a) = tensor.get(&key) else {
                skipped += 1;
                continue;
            };
            let psi = v.dot(&(a * u));
            if psi == 0.0 {
                skipped += 1;
                continue;
            }
            let g = blocks.get_mut(&key).expect("block present");
            g.ger(-scale / psi, v, u, 1.0);
        }
        Ok(CenterGradient { blocks, skipped })
    }

    fn descend(&mut self, s: usize, grad: &CenterGradient, rate: f64) -> MpsResult<()> {
        for (key, g) in &grad.blocks {
            if let Some(a) = self.tensors[s].blocks.get_mut(key) {
                *a -= g * rate;
            }
        }
        self.normalize().map(|_| ())
    }

    /// One forward and backward sweep of single-site gradient descent.
    ///
    /// Every site is updated once per direction, and each move of the center
    /// afterwards is truncated with `trunc`. The sweep starts and ends with
    /// the center on site 0; the state is canonicalized first if needed.
    pub fn train_sweep(&mut self, data: &[Bits], rate: f64, trunc: Truncation) -> MpsResult<TrainStats> {
        if data.is_empty() {
            return Err(MpsError::InvalidArgument("empty training set".into()));
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(MpsError::InvalidArgument(format!("learning rate {rate}")));
        }
        for x in data {
            self.check_bits(x)?;
        }
        let mut stats = TrainStats::default();
        if !self.canonical {
            self.canonicalize(0, Truncation::exact())?;
        }
        stats.discarded_weight += self.move_to_site(0, trunc)?;

        let n = self.n_sites();
        let start: Vec<Boundary> = vec![Some((0, DVector::from_element(1, 1.0))); data.len()];
        let mut rights: Vec<Vec<Boundary>> = vec![Vec::new(); n + 1];
        rights[n] = start.clone();
        for s in (1..n).rev() {
            rights[s] = self.step_rights(s, &rights[s + 1], data);
        }
        let mut lefts: Vec<Vec<Boundary>> = vec![Vec::new(); n + 1];
        lefts[0] = start;

        for s in 0..n {
            let grad = self.gradient_from(s, data, &lefts[s], &rights[s + 1])?;
            stats.skipped += grad.skipped;
            self.descend(s, &grad, rate)?;
            if s + 1 < n {
                stats.discarded_weight += self.split_right(trunc)?;
                lefts[s + 1] = self.step_lefts(s, &lefts[s], data);
                self.merge_right();
            }
        }
        for s in (0..n).rev() {
            let grad = self.gradient_from(s, data, &lefts[s], &rights[s + 1])?;
            stats.skipped += grad.skipped;
            self.descend(s, &grad, rate)?;
            if s > 0 {
                stats.discarded_weight += self.split_left(trunc)?;
                rights[s] = self.step_rights(s, &rights[s + 1], data);
                self.merge_left();
            }
        }
        Ok(stats)
    }

    fn step_lefts(&self, s: usize, prev: &[Boundary], data: &[Bits]) -> Vec<Boundary> {
        prev.iter()
            .zip(data)
            .map(|(b, x)| b.as_ref().and_then(|st| self.left_step(s, st, x[s])))
            .collect()
    }

    fn step_rights(&self, s: usize, next: &[Boundary], data: &[Bits]) -> Vec<Boundary> {
        next.iter()
            .zip(data)
            .map(|(b, x)| b.as_ref().and_then(|st| self.right_step(s, st, x[s])))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::cmps::constraints_to_mps;
    use crate::indexing::ConstraintSystem;

    #[test]
    fn uniform_data_is_stationary() {
        let sys = ConstraintSystem::new(vec![vec![1; 4]], vec![2], vec![2]).unwrap();
        let mut mps = constraints_to_mps(&sys, 3).unwrap();
        mps.canonicalize(0, Truncation::exact()).unwrap();
        mps.move_to_site(1, Truncation::exact()).unwrap();
        let data: Vec<Bits> = mps
            .dense_amplitudes()
            .unwrap()
            .into_iter()
            .filter(|(_, a)| *a != 0.0)
            .map(|(x, _)| x)
            .collect();
        assert_eq!(data.len(), 6);
        let grad = mps.center_gradient(&data).unwrap();
        let worst = grad.blocks.values().map(|g| g.amax()).fold(0.0, f64::max);
        assert!(worst < 1e-12, "gradient {worst}");
    }

    #[test]
    fn sweep_lowers_likelihood_loss() {
        let sys = ConstraintSystem::new(vec![vec![1, 2, 1, 1, 3, 1, 2, 1]], vec![2], vec![6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut mps = constraints_to_mps(&sys, 7).unwrap();
        let data = mps.sample(40, &mut rng).unwrap()[..10].to_vec();
        let before = mps.negative_log_likelihood(&data).unwrap();
        mps.train_sweep(&data, 0.05, Truncation::exact()).unwrap();
        let after = mps.negative_log_likelihood(&data).unwrap();
        assert!(after < before, "{after} >= {before}");
        assert_eq!(mps.center(), Center::Site(0));
        assert!(mps.isometry_residual() < 1e-12);
    }
}
