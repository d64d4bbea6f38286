use nalgebra::DVector;
use rand::Rng;

use super::svd::Truncation;
use super::{Bits, Center, ConstrainedMPS, MpsError, MpsResult};

impl ConstrainedMPS {
    /// Draws `count` independent bitstrings with probability `psi(x)^2 / Z`.
    ///
    /// Works on a copy gauged exactly to bond 0, so `self` is left untouched.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> MpsResult<Vec<Bits>> {
        let mut gauged;
        let mps = if self.canonical && self.center == Center::Bond(0) {
            self
        } else {
            gauged = self.clone();
            gauged.canonicalize(0, Truncation::exact())?;
            &gauged
        };
        (0..count).map(|_| mps.sample_one(rng)).collect()
    }

    /// Ancestral sampling from a right-canonical state with center at bond 0.
    fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> MpsResult<Bits> {
        let n = self.n_sites();
        // bond 0 has the single left region {0}; the flux matrix is one row per right region
        let mut candidates: Vec<(usize, DVector<f64>)> = self
            .bond
            .iter()
            .map(|(&(_, r), f)| (r, f.row(0).transpose()))
            .collect();
        let mut x = Vec::with_capacity(n);
        let mut state = pick(&mut candidates, rng)?;
        for s in 0..n {
            let (r, v) = &state;
            let mut options: Vec<(u8, usize, DVector<f64>)> = self.tensors[s]
                .blocks
                .range((*r, 0, 0)..=(*r, 1, usize::MAX))
                .map(|(&(_, bit, rr), t)| (bit, rr, t.tr_mul(v)))
                .collect();
            let weights: Vec<f64> = options.iter().map(|o| o.2.norm_squared()).collect();
            let k = choose(&weights, rng)?;
            let (bit, rr, w) = options.swap_remove(k);
            x.push(bit);
            state = (rr, w);
        }
        Ok(x)
    }
}

/// Picks the starting right region at bond 0 with weight `|F_r|^2`.
fn pick<R: Rng + ?Sized>(
    candidates: &mut Vec<(usize, DVector<f64>)>,
    rng: &mut R,
) -> MpsResult<(usize, DVector<f64>)> {
    let weights: Vec<f64> = candidates.iter().map(|c| c.1.norm_squared()).collect();
    let k = choose(&weights, rng)?;
    Ok(candidates.swap_remove(k))
}

fn choose<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> MpsResult<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(MpsError::NormUnderflow(total));
    }
    let mut target = rng.random::<f64>() * total;
    for (k, &w) in weights.iter().enumerate() {
        if target < w {
            return Ok(k);
        }
        target -= w;
    }
    // rounding left the target past the end; take the last nonzero option
    Ok(weights.iter().rposition(|&w| w > 0.0).expect("positive total"))
}
