//! Block-sparse constrained matrix product states.
//!
//! Sites are numbered `0..N` and bonds `0..=N`; bond `b` sits left of site `b`.
//! Tensors left of the center are labelled by the prefix-sum family
//! [`IndexFamilies::left`], tensors right of it by the suffix-sum family
//! [`IndexFamilies::right`]. The center is either a site, holding a flux
//! tensor that joins the two families, or a bond, holding a flux matrix `F`.
//!
//! Block labels are positions in the precomputed link indices, which are
//! never mutated. Truncation only changes the active block dimension of a
//! region; a region with dimension 0 is inactive and has no blocks.

mod canonical;
mod io;
mod sample;
mod svd;
mod train;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::indexing::{ConstraintSystem, IndexError, IndexFamilies, LinkIndex};
use crate::qregion::{GeometryError, Qn};

pub use svd::{joint_block_svd, JointSvd, Truncation};
pub use train::{CenterGradient, TrainStats};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpsError {
    #[error(transparent)]
    Index(#[from] IndexError),

    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot move the center {0}: already at the boundary")]
    CenterAtBoundary(&'static str),

    #[error("factorization of an all-zero matrix")]
    EmptyFactorization,

    #[error("singular value decomposition did not converge")]
    NoConvergence,

    #[error("center tensor norm {0} is zero or not finite")]
    NormUnderflow(f64),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type MpsResult<T> = Result<T, MpsError>;

/// A bitstring, one `0`/`1` byte per variable.
pub type Bits = Vec<u8>;

/// `(left region, physical value, right region)`.
pub type BlockKey = (usize, u8, usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    /// Labelled by `left(s)` and `left(s + 1)`.
    LeftOfFlux,
    /// Labelled by `left(s)` and `right(s + 1)`.
    Flux,
    /// Labelled by `right(s)` and `right(s + 1)`.
    RightOfFlux,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Center {
    Site(usize),
    Bond(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockTensor {
    site: usize,
    side: Side,
    blocks: BTreeMap<BlockKey, DMatrix<f64>>,
}

impl BlockTensor {
    pub fn site(&self) -> usize {
        self.site
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn blocks(&self) -> &BTreeMap<BlockKey, DMatrix<f64>> {
        &self.blocks
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }
}

/// Structural transitions between consecutive links, fixed by the indices.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Transitions {
    /// `next[s][q][x]`: region of `left(s + 1)` containing `q + A_s x`.
    next: Vec<Vec<[Option<usize>; 2]>>,
    /// `prev[s][r][x]`: region of `right(s)` containing `r + A_s x`, `r` in `right(s + 1)`.
    prev: Vec<Vec<[Option<usize>; 2]>>,
    /// A reachable prefix sum in every region of `left(b)`.
    left_witness: Vec<Vec<Qn>>,
    /// A reachable suffix sum in every region of `right(b)`.
    right_witness: Vec<Vec<Qn>>,
}

impl Transitions {
    fn build(sys: &ConstraintSystem, fam: &IndexFamilies) -> Self {
        let n = sys.n_vars();
        let zero = Qn::zeros(sys.n_constraints());
        let step = |from: &LinkIndex, to: &LinkIndex, col| -> Vec<[Option<usize>; 2]> {
            from.regions()
                .iter()
                .map(|q| [to.find_superset(q, &zero), to.find_superset(q, col)])
                .collect()
        };
        let next: Vec<_> = (0..n).map(|s| step(fam.left(s), fam.left(s + 1), sys.column(s))).collect();
        let prev: Vec<_> = (0..n).map(|s| step(fam.right(s + 1), fam.right(s), sys.column(s))).collect();

        // every validated region is reachable, so each receives a witness
        let mut left_witness = vec![vec![zero.clone()]];
        for s in 0..n {
            let mut w: Vec<Option<Qn>> = vec![None; fam.left(s + 1).len()];
            for (q, row) in next[s].iter().enumerate() {
                for (x, g) in row.iter().enumerate() {
                    if let Some(g) = *g {
                        w[g].get_or_insert_with(|| left_witness[s][q].add_scaled(sys.column(s), x as i64));
                    }
                }
            }
            left_witness.push(w.into_iter().map(|p| p.expect("reachable region")).collect());
        }
        let mut right_witness = vec![vec![zero.clone()]];
        for s in (0..n).rev() {
            let mut w: Vec<Option<Qn>> = vec![None; fam.right(s).len()];
            let later = right_witness.last().expect("seeded");
            for (r, row) in prev[s].iter().enumerate() {
                for (x, h) in row.iter().enumerate() {
                    if let Some(h) = *h {
                        w[h].get_or_insert_with(|| later[r].add_scaled(sys.column(s), x as i64));
                    }
                }
            }
            right_witness.push(w.into_iter().map(|p| p.expect("reachable region")).collect());
        }
        right_witness.reverse();
        Transitions { next, prev, left_witness, right_witness }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstrainedMPS {
    sys: Arc<ConstraintSystem>,
    indices: Arc<IndexFamilies>,
    trans: Arc<Transitions>,
    flux_site: usize,
    tensors: Vec<BlockTensor>,
    center: Center,
    /// Flux matrix blocks `(left region, right region)` while the center is a bond.
    bond: BTreeMap<(usize, usize), DMatrix<f64>>,
    left_dims: Vec<Vec<usize>>,
    right_dims: Vec<Vec<usize>>,
    canonical: bool,
}

/// Builds the uniform superposition of all feasible bitstrings with the flux on site `flux_site` (0-based).
pub fn constraints_to_mps(sys: &ConstraintSystem, flux_site: usize) -> MpsResult<ConstrainedMPS> {
    let fam = IndexFamilies::build(sys)?;
    ConstrainedMPS::from_indices(sys.clone(), fam, flux_site)
}

impl ConstrainedMPS {
    /// Like [`constraints_to_mps`] with already computed index families.
    pub fn from_indices(
        sys: ConstraintSystem,
        indices: IndexFamilies,
        flux_site: usize,
    ) -> MpsResult<Self> {
        let n = sys.n_vars();
        if flux_site >= n {
            return Err(MpsError::InvalidArgument(format!(
                "flux site {flux_site} out of range for {n} sites"
            )));
        }
        let trans = Transitions::build(&sys, &indices);
        let one = || DMatrix::from_element(1, 1, 1.0);

        let mut tensors = Vec::with_capacity(n);
        for s in 0..n {
            let mut blocks = BTreeMap::new();
            let side = match s.cmp(&flux_site) {
                std::cmp::Ordering::Less => {
                    for (q, row) in trans.next[s].iter().enumerate() {
                        for x in 0..2u8 {
                            if let Some(g) = row[x as usize] {
                                blocks.insert((q, x, g), one());
                            }
                        }
                    }
                    Side::LeftOfFlux
                }
                std::cmp::Ordering::Greater => {
                    for (r, row) in trans.prev[s].iter().enumerate() {
                        for x in 0..2u8 {
                            if let Some(h) = row[x as usize] {
                                blocks.insert((h, x, r), one());
                            }
                        }
                    }
                    Side::RightOfFlux
                }
                std::cmp::Ordering::Equal => {
                    // all points of a region share their feasible completions,
                    // so one reachable point per side decides admissibility
                    let flux = sys.flux_box();
                    for (q, wl) in trans.left_witness[s].iter().enumerate() {
                        for x in 0..2u8 {
                            let head = wl.add_scaled(sys.column(s), x as i64);
                            for (r, wr) in trans.right_witness[s + 1].iter().enumerate() {
                                if flux.contains(&head.add_scaled(wr, 1)) {
                                    blocks.insert((q, x, r), one());
                                }
                            }
                        }
                    }
                    Side::Flux
                }
            };
            tensors.push(BlockTensor { site: s, side, blocks });
        }

        let left_dims = (0..=n).map(|b| vec![1; indices.left(b).len()]).collect();
        let right_dims = (0..=n).map(|b| vec![1; indices.right(b).len()]).collect();
        Ok(ConstrainedMPS {
            sys: Arc::new(sys),
            indices: Arc::new(indices),
            trans: Arc::new(trans),
            flux_site,
            tensors,
            center: Center::Site(flux_site),
            bond: BTreeMap::new(),
            left_dims,
            right_dims,
            canonical: false,
        })
    }

    /// The uniform skeleton with every active block dimension set to `dim`
    /// (1 on the boundary bonds) and entries drawn uniformly from `[-1, 1)`.
    pub fn random<R: Rng + ?Sized>(
        sys: &ConstraintSystem,
        flux_site: usize,
        dim: usize,
        rng: &mut R,
    ) -> MpsResult<Self> {
        if dim == 0 {
            return Err(MpsError::InvalidArgument("block dimension must be positive".into()));
        }
        let mut mps = constraints_to_mps(sys, flux_site)?;
        let n = mps.n_sites();
        for b in 1..n {
            mps.left_dims[b].iter_mut().for_each(|d| *d = dim);
            mps.right_dims[b].iter_mut().for_each(|d| *d = dim);
        }
        for s in 0..n {
            let keys: Vec<BlockKey> = mps.tensors[s].blocks.keys().copied().collect();
            for key in keys {
                let (rows, cols) = mps.block_shape(s, key);
                let m = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
                mps.tensors[s].blocks.insert(key, m);
            }
        }
        Ok(mps)
    }

    pub fn system(&self) -> &ConstraintSystem {
        &self.sys
    }

    pub fn indices(&self) -> &IndexFamilies {
        &self.indices
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn flux_site(&self) -> usize {
        self.flux_site
    }

    pub fn center(&self) -> Center {
        self.center
    }

    /// True once every tensor away from the center is an isometry.
    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    pub fn tensor(&self, site: usize) -> &BlockTensor {
        &self.tensors[site]
    }

    pub fn tensors(&self) -> &[BlockTensor] {
        &self.tensors
    }

    /// Flux matrix blocks; empty unless the center is a bond.
    pub fn bond_matrix(&self) -> &BTreeMap<(usize, usize), DMatrix<f64>> {
        &self.bond
    }

    /// Active block dimensions of `left(bond)`, 0 for inactive regions.
    pub fn left_dims(&self, bond: usize) -> &[usize] {
        &self.left_dims[bond]
    }

    /// Active block dimensions of `right(bond)`, 0 for inactive regions.
    pub fn right_dims(&self, bond: usize) -> &[usize] {
        &self.right_dims[bond]
    }

    /// Total number of blocks over all tensors and the flux matrix.
    pub fn total_blocks(&self) -> usize {
        self.tensors.iter().map(BlockTensor::n_blocks).sum::<usize>() + self.bond.len()
    }

    /// Bonds `0..=bl` use the left family, bonds `br..=N` the right family.
    fn family_split(&self) -> (usize, usize) {
        match self.center {
            Center::Bond(b) => (b, b),
            Center::Site(s) => (s, s + 1),
        }
    }

    /// Summed active dimension of `bond` in the family currently labelling it.
    pub fn bond_dimension(&self, bond: usize) -> usize {
        let (bl, br) = self.family_split();
        let left = || self.left_dims[bond].iter().sum::<usize>();
        let right = || self.right_dims[bond].iter().sum::<usize>();
        match (bond <= bl, bond >= br) {
            (true, true) => left().max(right()),
            (true, false) => left(),
            _ => right(),
        }
    }

    pub fn max_bond_dimension(&self) -> usize {
        (0..=self.n_sites()).map(|b| self.bond_dimension(b)).max().unwrap_or(0)
    }

    fn block_shape(&self, s: usize, (a, _, c): BlockKey) -> (usize, usize) {
        match self.tensors[s].side {
            Side::LeftOfFlux => (self.left_dims[s][a], self.left_dims[s + 1][c]),
            Side::Flux => (self.left_dims[s][a], self.right_dims[s + 1][c]),
            Side::RightOfFlux => (self.right_dims[s][a], self.right_dims[s + 1][c]),
        }
    }

    fn check_bits(&self, x: &[u8]) -> MpsResult<()> {
        if x.len() != self.n_sites() || x.iter().any(|&b| b > 1) {
            return Err(MpsError::InvalidArgument(format!(
                "expected a bitstring of length {}",
                self.n_sites()
            )));
        }
        Ok(())
    }

    /// Left boundary vector contracted through sites `0..upto`.
    fn left_vector(&self, x: &[u8], upto: usize) -> Option<(usize, DVector<f64>)> {
        let mut state = (0usize, DVector::from_element(1, 1.0));
        for (s, &b) in x[..upto].iter().enumerate() {
            state = self.left_step(s, &state, b)?;
        }
        Some(state)
    }

    fn left_step(&self, s: usize, (q, v): &(usize, DVector<f64>), x: u8) -> Option<(usize, DVector<f64>)> {
        let g = self.trans.next[s][*q][x as usize]?;
        let block = self.tensors[s].blocks.get(&(*q, x, g))?;
        Some((g, block.tr_mul(v)))
    }

    /// Right boundary vector contracted through sites `from..N`.
    fn right_vector(&self, x: &[u8], from: usize) -> Option<(usize, DVector<f64>)> {
        let mut state = (0usize, DVector::from_element(1, 1.0));
        for s in (from..self.n_sites()).rev() {
            state = self.right_step(s, &state, x[s])?;
        }
        Some(state)
    }

    fn right_step(&self, s: usize, (r, u): &(usize, DVector<f64>), x: u8) -> Option<(usize, DVector<f64>)> {
        let h = self.trans.prev[s][*r][x as usize]?;
        let block = self.tensors[s].blocks.get(&(h, x, *r))?;
        Some((h, block * u))
    }

    /// The amplitude `psi(x)`.
    pub fn evaluate(&self, x: &[u8]) -> MpsResult<f64> {
        self.check_bits(x)?;
        Ok(self.amplitude(x).unwrap_or(0.0))
    }

    fn amplitude(&self, x: &[u8]) -> Option<f64> {
        let (bl, br) = self.family_split();
        let (q, v) = self.left_vector(x, bl)?;
        let (r, u) = self.right_vector(x, br)?;
        let center = match self.center {
            Center::Bond(_) => self.bond.get(&(q, r))?,
            Center::Site(s) => self.tensors[s].blocks.get(&(q, x[s], r))?,
        };
        Some(v.dot(&(center * u)))
    }

    /// Blocks joining the two families at the center, keyed `(left, x, right)`.
    ///
    /// A bond center is reported with physical value 0.
    fn center_blocks(&self) -> Vec<(BlockKey, &DMatrix<f64>)> {
        match self.center {
            Center::Bond(_) => self.bond.iter().map(|(&(q, r), m)| ((q, 0, r), m)).collect(),
            Center::Site(s) => self.tensors[s].blocks.iter().map(|(&k, m)| (k, m)).collect(),
        }
    }

    /// Sum of `psi(x)` over all bitstrings.
    ///
    /// For the uniform MPS this is the number of feasible solutions; it is
    /// exact while the count stays below 2^53.
    pub fn count_solutions(&self) -> f64 {
        let (bl, br) = self.family_split();
        let n = self.n_sites();
        let mut left: Vec<Option<DVector<f64>>> = vec![Some(DVector::from_element(1, 1.0))];
        for s in 0..bl {
            let mut next = vec![None; self.indices.left(s + 1).len()];
            for (&(q, _, g), t) in &self.tensors[s].blocks {
                if let Some(v) = &left[q] {
                    accumulate(&mut next[g], t.tr_mul(v));
                }
            }
            left = next;
        }
        let mut right: Vec<Option<DVector<f64>>> = vec![Some(DVector::from_element(1, 1.0))];
        for s in (br..n).rev() {
            let mut next = vec![None; self.indices.right(s).len()];
            for (&(h, _, r), t) in &self.tensors[s].blocks {
                if let Some(u) = &right[r] {
                    accumulate(&mut next[h], t * u);
                }
            }
            right = next;
        }
        self.center_blocks()
            .into_iter()
            .filter_map(|((q, _, r), m)| Some(left[q].as_ref()?.dot(&(m * right[r].as_ref()?))))
            .sum()
    }

    /// `Z = sum_x psi(x)^2` by transfer contraction.
    pub fn norm_squared(&self) -> f64 {
        let (bl, br) = self.family_split();
        let (left, right) = (self.left_environments(bl), self.right_environments(br));
        self.center_blocks()
            .into_iter()
            .filter_map(|((q, _, r), m)| {
                let (el, er) = (left[q].as_ref()?, right[r].as_ref()?);
                Some((m.transpose() * el * m).component_mul(er).sum())
            })
            .sum()
    }

    /// Block-diagonal left environment `sum_prefix v v^T` per region of `left(bond)`.
    fn left_environments(&self, bond: usize) -> Vec<Option<DMatrix<f64>>> {
        let mut env = vec![Some(DMatrix::from_element(1, 1, 1.0))];
        for s in 0..bond {
            let mut next = vec![None; self.indices.left(s + 1).len()];
            for (&(q, _, g), t) in &self.tensors[s].blocks {
                if let Some(e) = &env[q] {
                    accumulate(&mut next[g], t.transpose() * e * t);
                }
            }
            env = next;
        }
        env
    }

    /// Block-diagonal right environment `sum_suffix u u^T` per region of `right(bond)`.
    fn right_environments(&self, bond: usize) -> Vec<Option<DMatrix<f64>>> {
        let mut env = vec![Some(DMatrix::from_element(1, 1, 1.0))];
        for s in (bond..self.n_sites()).rev() {
            let mut next = vec![None; self.indices.right(s).len()];
            for (&(h, _, r), t) in &self.tensors[s].blocks {
                if let Some(e) = &env[r] {
                    accumulate(&mut next[h], t * e * t.transpose());
                }
            }
            env = next;
        }
        env
    }

    /// Squared Frobenius norm of the center; equals `Z` in canonical form.
    pub fn center_norm_squared(&self) -> f64 {
        self.center_blocks().iter().map(|(_, m)| m.norm_squared()).sum()
    }

    /// Largest deviation from the identity of `sum_x T(x)^T T(x)` over
    /// left-of-center tensors and of `sum_x T(x) T(x)^T` over right-of-center ones.
    pub fn isometry_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for t in &self.tensors {
            let (dims, by_right) = match t.side {
                Side::LeftOfFlux => (&self.left_dims[t.site + 1], true),
                Side::RightOfFlux => (&self.right_dims[t.site], false),
                Side::Flux => continue,
            };
            let mut gram: Vec<Option<DMatrix<f64>>> = vec![None; dims.len()];
            for (&(a, _, c), m) in &t.blocks {
                if by_right {
                    accumulate(&mut gram[c], m.tr_mul(m));
                } else {
                    accumulate(&mut gram[a], m * m.transpose());
                }
            }
            for (k, &d) in dims.iter().enumerate() {
                let g = gram[k].take().unwrap_or_else(|| DMatrix::zeros(d, d));
                worst = worst.max((g - DMatrix::identity(d, d)).amax());
            }
        }
        worst
    }

    /// Every bitstring with its amplitude, last variable fastest. Intended for `N <= 20`.
    pub fn dense_amplitudes(&self) -> MpsResult<Vec<(Bits, f64)>> {
        let n = self.n_sites();
        if n > 24 {
            return Err(MpsError::InvalidArgument(format!("dense expansion of {n} sites")));
        }
        Ok((0u64..1 << n)
            .map(|k| {
                let x = bits_of(k, n);
                let a = self.amplitude(&x).unwrap_or(0.0);
                (x, a)
            })
            .collect())
    }
}

/// The `n`-bit string of `k` with the first variable as the most significant bit.
pub fn bits_of(k: u64, n: usize) -> Bits {
    (0..n).map(|i| ((k >> (n - 1 - i)) & 1) as u8).collect()
}

fn accumulate<T>(slot: &mut Option<T>, value: T)
where
    T: std::ops::AddAssign,
{
    match slot {
        Some(acc) => *acc += value,
        None => *slot = Some(value),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cardinality(n: usize, l: i64, u: i64) -> ConstraintSystem {
        ConstraintSystem::new(vec![vec![1; n]], vec![l], vec![u]).unwrap()
    }

    fn two_inequalities() -> ConstraintSystem {
        ConstraintSystem::new(
            vec![vec![1, 2, -1, -2], vec![-2, 3, -1, 1]],
            vec![-1, -1],
            vec![2, 1],
        )
        .unwrap()
    }

    #[test]
    fn uniform_support() {
        let sys = two_inequalities();
        for m in 0..4 {
            let mps = constraints_to_mps(&sys, m).unwrap();
            for k in 0..16 {
                let x = bits_of(k, 4);
                let expected = if sys.is_feasible(&x) { 1.0 } else { 0.0 };
                assert_eq!(mps.evaluate(&x).unwrap(), expected, "site {m} x {x:?}");
            }
            assert_eq!(mps.count_solutions(), 5.0);
            assert_eq!(mps.norm_squared(), 5.0);
        }
    }

    #[test]
    fn three_choose_two() {
        let mps = constraints_to_mps(&cardinality(3, 2, 2), 2).unwrap();
        assert_eq!(mps.evaluate(&[1, 1, 0]).unwrap(), 1.0);
        assert_eq!(mps.evaluate(&[1, 1, 1]).unwrap(), 0.0);
        assert_eq!(mps.count_solutions(), 3.0);
        assert!(mps.evaluate(&[1, 1]).is_err());
    }

    #[test]
    fn product_state() {
        let mps = constraints_to_mps(&cardinality(5, 0, 5), 4).unwrap();
        for b in 0..=5 {
            assert_eq!(mps.indices().left(b).len(), 1);
        }
        assert_eq!(mps.count_solutions(), 32.0);
    }

    #[test]
    fn single_site() {
        let mps = constraints_to_mps(&cardinality(1, 1, 1), 0).unwrap();
        assert_eq!(mps.evaluate(&[1]).unwrap(), 1.0);
        assert_eq!(mps.evaluate(&[0]).unwrap(), 0.0);
    }

    #[test]
    fn bit_order() {
        assert_eq!(bits_of(6, 3), vec![1, 1, 0]);
        assert_eq!(bits_of(1, 4), vec![0, 0, 0, 1]);
    }
}
