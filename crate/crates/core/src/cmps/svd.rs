use nalgebra::{DMatrix, DVector};

use super::{MpsError, MpsResult};

/// Truncation policy for center moves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Truncation {
    /// Largest fraction of the total squared weight that may be discarded.
    pub cutoff: f64,
    /// Cap on the number of singular values kept over all groups.
    pub max_dim: usize,
}

impl Truncation {
    pub fn new(cutoff: f64, max_dim: usize) -> MpsResult<Self> {
        if !(0.0..1.0).contains(&cutoff) {
            return Err(MpsError::InvalidArgument(format!("cutoff {cutoff} outside [0, 1)")));
        }
        if max_dim == 0 {
            return Err(MpsError::InvalidArgument("max_dim must be positive".into()));
        }
        Ok(Truncation { cutoff, max_dim })
    }

    /// Drops exact zeros only.
    pub fn exact() -> Self {
        Truncation { cutoff: 0.0, max_dim: usize::MAX }
    }

    pub fn with_cutoff(cutoff: f64) -> MpsResult<Self> {
        Self::new(cutoff, usize::MAX)
    }
}

impl Default for Truncation {
    fn default() -> Self {
        Self::exact()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointSvd {
    /// Per group, the kept left singular vectors (`rows x kept`).
    pub u: Vec<DMatrix<f64>>,
    /// Per group, `Lambda V^T` restricted to the kept values (`kept x cols`).
    pub f: Vec<DMatrix<f64>>,
    /// Kept singular values per group, descending.
    pub singular_values: Vec<DVector<f64>>,
    pub discarded_weight: f64,
}

impl JointSvd {
    pub fn kept(&self) -> Vec<usize> {
        self.singular_values.iter().map(|s| s.len()).collect()
    }
}

/// Thin SVD with singular values in descending order.
fn thin_svd(w: &DMatrix<f64>) -> MpsResult<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let m = faer::Mat::<f64>::from_fn(w.nrows(), w.ncols(), |i, j| w[(i, j)]);
    let svd = m.thin_svd().map_err(|_| MpsError::NoConvergence)?;
    let (u, v) = (svd.U(), svd.V());
    let sigma = svd.S().column_vector();
    let k = sigma.nrows();
    Ok((
        DMatrix::from_fn(w.nrows(), k, |i, j| u[(i, j)]),
        (0..k).map(|i| sigma[i]).collect(),
        DMatrix::from_fn(k, w.ncols(), |i, j| v[(j, i)]),
    ))
}

/// Per-group SVD of `W = diag(W_1, ..., W_q)` row groups sharing one column
/// space, truncated jointly.
///
/// All singular values are ranked together (value descending, then group,
/// then position). The smallest are dropped while their squared sum stays
/// within `cutoff * sum sigma^2`, then at most `max_dim` are kept.
pub fn joint_block_svd(groups: &[DMatrix<f64>], trunc: Truncation) -> MpsResult<JointSvd> {
    let cols = groups.first().map(|g| g.ncols()).unwrap_or(0);
    if groups.iter().any(|g| g.ncols() != cols) {
        return Err(MpsError::InvalidArgument("row groups differ in column count".into()));
    }

    let mut factors = Vec::with_capacity(groups.len());
    let mut ranked: Vec<(f64, usize, usize)> = Vec::new();
    for (k, w) in groups.iter().enumerate() {
        if w.nrows() == 0 || cols == 0 {
            factors.push(None);
            continue;
        }
        let (u, sigma, vt) = thin_svd(w)?;
        ranked.extend(sigma.iter().enumerate().map(|(p, &s)| (s, k, p)));
        factors.push(Some((u, sigma, vt)));
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let total: f64 = ranked.iter().map(|r| r.0 * r.0).sum();
    if total == 0.0 {
        return Err(MpsError::EmptyFactorization);
    }
    let budget = trunc.cutoff * total;
    let mut keep = ranked.len();
    let mut dropped = 0.0;
    while keep > 0 {
        let w = ranked[keep - 1].0.powi(2);
        if dropped + w > budget {
            break;
        }
        dropped += w;
        keep -= 1;
    }
    keep = keep.min(trunc.max_dim);

    let mut kept = vec![0usize; groups.len()];
    for &(_, k, _) in &ranked[..keep] {
        kept[k] += 1;
    }
    let discarded_weight = ranked[keep..].iter().map(|r| r.0 * r.0).sum();

    let mut out = JointSvd {
        u: Vec::with_capacity(groups.len()),
        f: Vec::with_capacity(groups.len()),
        singular_values: Vec::with_capacity(groups.len()),
        discarded_weight,
    };
    for (k, factor) in factors.into_iter().enumerate() {
        let c = kept[k];
        match factor {
            Some((u, sigma, vt)) => {
                let s = DVector::from_column_slice(&sigma[..c]);
                let mut f = vt.rows(0, c).into_owned();
                for (i, mut row) in f.row_iter_mut().enumerate() {
                    row *= s[i];
                }
                out.u.push(u.columns(0, c).into_owned());
                out.f.push(f);
                out.singular_values.push(s);
            }
            None => {
                out.u.push(DMatrix::zeros(groups[k].nrows(), 0));
                out.f.push(DMatrix::zeros(0, cols));
                out.singular_values.push(DVector::zeros(0));
            }
        }
    }
    Ok(out)
}
