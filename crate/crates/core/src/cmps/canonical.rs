use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::svd::{joint_block_svd, Truncation};
use super::{Center, ConstrainedMPS, MpsError, MpsResult, Side};

fn offsets(dims: &[usize]) -> (Vec<usize>, usize) {
    let mut acc = 0;
    let offs = dims
        .iter()
        .map(|d| {
            let o = acc;
            acc += d;
            o
        })
        .collect();
    (offs, acc)
}

impl ConstrainedMPS {
    /// Contracts the flux matrix at bond `b` into site `b`.
    pub(super) fn merge_right(&mut self) {
        let Center::Bond(b) = self.center else { unreachable!("merge from a bond") };
        let t = std::mem::take(&mut self.tensors[b].blocks);
        let mut merged: BTreeMap<_, DMatrix<f64>> = BTreeMap::new();
        for (&(q, r), f) in &self.bond {
            for (&(_, x, rr), m) in t.range((r, 0, 0)..=(r, 1, usize::MAX)) {
                let prod = f * m;
                merged
                    .entry((q, x, rr))
                    .and_modify(|acc| *acc += &prod)
                    .or_insert(prod);
            }
        }
        self.bond.clear();
        self.tensors[b].blocks = merged;
        self.tensors[b].side = Side::Flux;
        self.center = Center::Site(b);
    }

    /// Contracts the flux matrix at bond `b` into site `b - 1`.
    pub(super) fn merge_left(&mut self) {
        let Center::Bond(b) = self.center else { unreachable!("merge from a bond") };
        let s = b - 1;
        let t = std::mem::take(&mut self.tensors[s].blocks);
        let mut merged: BTreeMap<_, DMatrix<f64>> = BTreeMap::new();
        for (&(q, x, g), m) in &t {
            for (&(_, r), f) in self.bond.range((g, 0)..=(g, usize::MAX)) {
                let prod = m * f;
                merged
                    .entry((q, x, r))
                    .and_modify(|acc| *acc += &prod)
                    .or_insert(prod);
            }
        }
        self.bond.clear();
        self.tensors[s].blocks = merged;
        self.tensors[s].side = Side::Flux;
        self.center = Center::Site(s);
    }

    /// Factorizes the flux tensor at site `s` into a left isometry and the flux matrix at bond `s + 1`.
    pub(super) fn split_right(&mut self, trunc: Truncation) -> MpsResult<f64> {
        let Center::Site(s) = self.center else { unreachable!("split from a site") };
        let n_groups = self.indices.left(s + 1).len();
        let (col_off, n_cols) = offsets(&self.right_dims[s + 1]);
        let row_dims = &self.left_dims[s];

        // rows (q, x) of each group with their offsets, and the columns they touch
        let mut rows: Vec<Vec<(usize, u8, usize)>> = vec![Vec::new(); n_groups];
        let mut height = vec![0usize; n_groups];
        let mut touched: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
        for &(q, x, r) in self.tensors[s].blocks.keys() {
            let Some(g) = self.trans.next[s][q][x as usize] else { continue };
            if rows[g].last().map(|&(a, b, _)| (a, b)) != Some((q, x)) {
                rows[g].push((q, x, height[g]));
                height[g] += row_dims[q];
            }
            touched[g].push(r);
        }
        let mut groups: Vec<DMatrix<f64>> =
            height.iter().map(|&h| DMatrix::zeros(h, n_cols)).collect();
        for (&(q, x, r), m) in &self.tensors[s].blocks {
            let Some(g) = self.trans.next[s][q][x as usize] else { continue };
            let off = rows[g].iter().find(|e| e.0 == q && e.1 == x).expect("row registered").2;
            groups[g].view_mut((off, col_off[r]), m.shape()).copy_from(m);
        }

        let svd = joint_block_svd(&groups, trunc)?;
        let kept = svd.kept();
        let mut tensor = BTreeMap::new();
        let mut bond = BTreeMap::new();
        for g in 0..n_groups {
            if kept[g] == 0 {
                continue;
            }
            for &(q, x, off) in &rows[g] {
                tensor.insert((q, x, g), svd.u[g].rows(off, row_dims[q]).into_owned());
            }
            touched[g].sort_unstable();
            touched[g].dedup();
            for &r in &touched[g] {
                let d = self.right_dims[s + 1][r];
                bond.insert((g, r), svd.f[g].columns(col_off[r], d).into_owned());
            }
        }
        self.tensors[s].blocks = tensor;
        self.tensors[s].side = Side::LeftOfFlux;
        self.bond = bond;
        self.left_dims[s + 1] = kept;
        self.center = Center::Bond(s + 1);
        Ok(svd.discarded_weight)
    }

    /// Factorizes the flux tensor at site `s` into the flux matrix at bond `s` and a right isometry.
    pub(super) fn split_left(&mut self, trunc: Truncation) -> MpsResult<f64> {
        let Center::Site(s) = self.center else { unreachable!("split from a site") };
        let n_groups = self.indices.right(s).len();
        let (col_off, n_cols) = offsets(&self.left_dims[s]);
        let row_dims = &self.right_dims[s + 1];

        // transposed layout: rows (x, r) of each group, columns the left regions q
        let mut rows: Vec<Vec<(u8, usize, usize)>> = vec![Vec::new(); n_groups];
        let mut height = vec![0usize; n_groups];
        let mut touched: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
        let mut keys: Vec<_> = self.tensors[s].blocks.keys().map(|&(q, x, r)| (x, r, q)).collect();
        keys.sort_unstable();
        for &(x, r, q) in &keys {
            let Some(h) = self.trans.prev[s][r][x as usize] else { continue };
            if rows[h].last().map(|&(a, b, _)| (a, b)) != Some((x, r)) {
                rows[h].push((x, r, height[h]));
                height[h] += row_dims[r];
            }
            touched[h].push(q);
        }
        let mut groups: Vec<DMatrix<f64>> =
            height.iter().map(|&h| DMatrix::zeros(h, n_cols)).collect();
        for (&(q, x, r), m) in &self.tensors[s].blocks {
            let Some(h) = self.trans.prev[s][r][x as usize] else { continue };
            let off = rows[h].iter().find(|e| e.0 == x && e.1 == r).expect("row registered").2;
            groups[h]
                .view_mut((off, col_off[q]), (m.ncols(), m.nrows()))
                .copy_from(&m.transpose());
        }

        let svd = joint_block_svd(&groups, trunc)?;
        let kept = svd.kept();
        let mut tensor = BTreeMap::new();
        let mut bond = BTreeMap::new();
        for h in 0..n_groups {
            if kept[h] == 0 {
                continue;
            }
            for &(x, r, off) in &rows[h] {
                tensor.insert((h, x, r), svd.u[h].rows(off, row_dims[r]).transpose());
            }
            touched[h].sort_unstable();
            touched[h].dedup();
            for &q in &touched[h] {
                let d = self.left_dims[s][q];
                bond.insert((q, h), svd.f[h].columns(col_off[q], d).transpose());
            }
        }
        self.tensors[s].blocks = tensor;
        self.tensors[s].side = Side::RightOfFlux;
        self.bond = bond;
        self.right_dims[s] = kept;
        self.center = Center::Bond(s);
        Ok(svd.discarded_weight)
    }

    /// Moves the center one bond to the right, returning the discarded weight.
    ///
    /// From a bond `b` the flux matrix is absorbed into site `b` first; from a
    /// site `s` the flux tensor is split, leaving the center at bond `s + 1`.
    pub fn shift_center_right(&mut self, trunc: Truncation) -> MpsResult<f64> {
        if let Center::Bond(b) = self.center {
            if b == self.n_sites() {
                return Err(MpsError::CenterAtBoundary("right"));
            }
            self.merge_right();
        }
        self.split_right(trunc)
    }

    /// Moves the center one bond to the left, returning the discarded weight.
    pub fn shift_center_left(&mut self, trunc: Truncation) -> MpsResult<f64> {
        if let Center::Bond(b) = self.center {
            if b == 0 {
                return Err(MpsError::CenterAtBoundary("left"));
            }
            self.merge_left();
        }
        self.split_left(trunc)
    }

    /// Moves the center to `bond` by repeated shifts, returning the total discarded weight.
    pub fn move_to_bond(&mut self, bond: usize, trunc: Truncation) -> MpsResult<f64> {
        if bond > self.n_sites() {
            return Err(MpsError::InvalidArgument(format!("bond {bond} out of range")));
        }
        let mut discarded = 0.0;
        loop {
            let step_right = match self.center {
                Center::Bond(c) if c == bond => return Ok(discarded),
                Center::Bond(c) => c < bond,
                Center::Site(s) => s < bond,
            };
            discarded += if step_right {
                self.shift_center_right(trunc)?
            } else {
                self.shift_center_left(trunc)?
            };
        }
    }

    /// Moves the center onto `site`, returning the total discarded weight.
    pub fn move_to_site(&mut self, site: usize, trunc: Truncation) -> MpsResult<f64> {
        if site >= self.n_sites() {
            return Err(MpsError::InvalidArgument(format!("site {site} out of range")));
        }
        let from_left = match self.center {
            Center::Site(s) if s == site => return Ok(0.0),
            Center::Site(s) => s < site,
            Center::Bond(b) => b <= site,
        };
        let discarded = if from_left {
            let d = self.move_to_bond(site, trunc)?;
            self.merge_right();
            d
        } else {
            let d = self.move_to_bond(site + 1, trunc)?;
            self.merge_left();
            d
        };
        Ok(discarded)
    }

    /// Brings the state into canonical form with its center at `bond`.
    ///
    /// A state that is not yet canonical is swept exactly to the left end and
    /// back to the right end first; `trunc` applies to the final approach.
    pub fn canonicalize(&mut self, bond: usize, trunc: Truncation) -> MpsResult<f64> {
        if bond > self.n_sites() {
            return Err(MpsError::InvalidArgument(format!("bond {bond} out of range")));
        }
        if !self.canonical {
            self.move_to_bond(0, Truncation::exact())?;
            self.move_to_bond(self.n_sites(), Truncation::exact())?;
            self.canonical = true;
        }
        self.move_to_bond(bond, trunc)
    }

    /// Rescales the center to unit norm.
    pub fn normalize(&mut self) -> MpsResult<f64> {
        let norm = self.center_norm_squared().sqrt();
        if !(norm.is_finite() && norm > f64::MIN_POSITIVE) {
            return Err(MpsError::NormUnderflow(norm));
        }
        match self.center {
            Center::Bond(_) => self.bond.values_mut().for_each(|m| *m /= norm),
            Center::Site(s) => self.tensors[s].blocks.values_mut().for_each(|m| *m /= norm),
        }
        Ok(norm)
    }
}
