//! MPS link indices from a system of linear constraints over binary variables.
//!
//! For `l <= A x <= u` with `x` in `{0,1}^N`, the link between sites `i` and
//! `i + 1` is labelled by QRegions of partial sums `sum_{j<=i} A_j x_j`. The
//! indices are found with a backward decomposition sweep that splits the flux
//! box into candidate regions, followed by a forward validation sweep that
//! drops regions no prefix can reach.
//!
//! Running the same construction on the column-reversed system yields the
//! index family used when the flux sits on the first site; [`IndexFamilies`]
//! holds both, laid out per bond.

use std::fmt;
use std::thread;

use thiserror::Error;

use crate::qregion::{GeometryError, IntBox, QRegion, Qn, COORD_LIMIT};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IndexError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),

    #[error("invalid constraint system: {0}")]
    InvalidSystem(String),

    #[error("infeasible system: no bitstring satisfies the constraints")]
    Infeasible,
}

pub type IndexResult<T> = Result<T, IndexError>;

/// `lower <= A x <= upper` over `x` in `{0,1}^N`; equalities use `lower == upper`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintSystem {
    rows: Vec<Vec<i64>>,
    lower: Vec<i64>,
    upper: Vec<i64>,
    columns: Vec<Qn>,
}

impl ConstraintSystem {
    /// `rows` is the `M x N` matrix `A` in row-major order.
    pub fn new(rows: Vec<Vec<i64>>, lower: Vec<i64>, upper: Vec<i64>) -> IndexResult<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(IndexError::InvalidSystem("at least one constraint row is required".into()));
        }
        let n = rows[0].len();
        if n == 0 {
            return Err(IndexError::InvalidSystem("at least one variable is required".into()));
        }
        if let Some(k) = rows.iter().position(|r| r.len() != n) {
            return Err(IndexError::InvalidSystem(format!(
                "row {k} has {} entries, expected {n}",
                rows[k].len()
            )));
        }
        if lower.len() != m || upper.len() != m {
            return Err(IndexError::InvalidSystem(format!(
                "bounds have lengths {} and {}, expected {m}",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(k) = (0..m).find(|&k| lower[k] > upper[k]) {
            return Err(IndexError::InvalidSystem(format!(
                "lower bound {} exceeds upper bound {} in row {k}",
                lower[k], upper[k]
            )));
        }
        let too_big = rows
            .iter()
            .map(|r| r.iter().map(|a| a.unsigned_abs()).sum::<u64>())
            .chain(lower.iter().chain(&upper).map(|b| b.unsigned_abs()))
            .any(|v| v > COORD_LIMIT as u64);
        if too_big {
            return Err(IndexError::Geometry(GeometryError::CoordinateOverflow(COORD_LIMIT)));
        }
        let columns = (0..n)
            .map(|j| Qn::new(rows.iter().map(|r| r[j]).collect()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ConstraintSystem { rows, lower, upper, columns })
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.rows
    }

    pub fn lower(&self) -> &[i64] {
        &self.lower
    }

    pub fn upper(&self) -> &[i64] {
        &self.upper
    }

    /// Column `j` of `A` (0-based), the charge carried by `x_j = 1`.
    pub fn column(&self, j: usize) -> &Qn {
        &self.columns[j]
    }

    pub fn flux_box(&self) -> IntBox {
        IntBox::from_corners(&self.lower, &self.upper).expect("bounds validated at construction")
    }

    /// The same constraints with the variable order reversed.
    pub fn reversed(&self) -> ConstraintSystem {
        let rows = self.rows.iter().map(|r| r.iter().rev().copied().collect()).collect();
        let columns = self.columns.iter().rev().cloned().collect();
        ConstraintSystem {
            rows,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            columns,
        }
    }

    /// `A x` for a bitstring of length `N`.
    pub fn apply(&self, x: &[u8]) -> Vec<i64> {
        assert_eq!(x.len(), self.n_vars(), "bitstring length");
        self.rows
            .iter()
            .map(|r| r.iter().zip(x).filter(|(_, &b)| b != 0).map(|(a, _)| a).sum())
            .collect()
    }

    pub fn is_feasible(&self, x: &[u8]) -> bool {
        self.apply(x)
            .iter()
            .enumerate()
            .all(|(k, v)| self.lower[k] <= *v && *v <= self.upper[k])
    }
}

/// Cumulative bounds `B_1..B_N` of the partial sums `sum_{j<=i} A_j x_j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Boundary {
    boxes: Vec<IntBox>,
}

impl Boundary {
    /// `B_i` for `i` in `1..=N`.
    pub fn get(&self, i: usize) -> &IntBox {
        &self.boxes[i - 1]
    }

    pub fn boxes(&self) -> &[IntBox] {
        &self.boxes
    }
}

pub fn boundary(sys: &ConstraintSystem) -> Boundary {
    let m = sys.n_constraints();
    let mut lo = vec![0i64; m];
    let mut hi = vec![0i64; m];
    let mut boxes = Vec::with_capacity(sys.n_vars());
    for j in 0..sys.n_vars() {
        for (k, &a) in sys.column(j).coords().iter().enumerate() {
            lo[k] += a.min(0);
            hi[k] += a.max(0);
        }
        boxes.push(IntBox::from_corners(&lo, &hi).expect("lo <= 0 <= hi"));
    }
    Boundary { boxes }
}

/// The decomposition of one MPS bond into disjoint QRegion subspaces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinkIndex {
    regions: Vec<QRegion>,
    dims: Vec<usize>,
}

impl LinkIndex {
    /// Sorts `regions` by smallest corner and gives every block dimension 1.
    pub fn new(mut regions: Vec<QRegion>) -> Self {
        regions.retain(|r| !r.is_empty());
        regions.sort_by(|a, b| a.min_corner().cmp(&b.min_corner()));
        let dims = vec![1; regions.len()];
        LinkIndex { regions, dims }
    }

    pub fn empty() -> Self {
        LinkIndex { regions: Vec::new(), dims: Vec::new() }
    }

    /// The single-point index `{0}` closing the chain at either end.
    pub fn origin(dim: usize) -> Self {
        LinkIndex::new(vec![QRegion::point(Qn::zeros(dim))])
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn regions(&self) -> &[QRegion] {
        &self.regions
    }

    pub fn region(&self, k: usize) -> &QRegion {
        &self.regions[k]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Position of the region holding lattice point `p`.
    pub fn find_point(&self, p: &Qn) -> Option<usize> {
        self.regions.iter().position(|r| r.boxes().iter().any(|b| b.contains(p)))
    }

    /// Position of the region that contains `q` shifted by `offset`.
    ///
    /// Regions of one index are disjoint, so at most one can qualify.
    pub fn find_superset(&self, q: &QRegion, offset: &Qn) -> Option<usize> {
        let probe = q.min_corner()?.add_scaled(offset, 1);
        let k = self.find_point(&probe)?;
        let shifted = q.shift(offset).ok()?;
        shifted.is_subset_unchecked(&self.regions[k]).then_some(k)
    }

    fn is_pairwise_disjoint(&self) -> bool {
        self.regions.iter().enumerate().all(|(i, a)| {
            self.regions[i + 1..]
                .iter()
                .all(|b| a.intersect(b).map(|c| c.is_empty()).unwrap_or(false))
        })
    }
}

impl fmt::Display for LinkIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, r) in self.regions.iter().enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{r}")?;
        }
        write!(f, "}}")
    }
}

/// Regions of `sup` that contain `q + offset` for at least one `q` in `sub`.
pub fn chi(sub: &LinkIndex, sup: &LinkIndex, offset: &Qn) -> LinkIndex {
    let keep = chi_mask(sub, sup, offset);
    select(sup, &keep)
}

fn chi_mask(sub: &LinkIndex, sup: &LinkIndex, offset: &Qn) -> Vec<bool> {
    let mut keep = vec![false; sup.len()];
    for q in &sub.regions {
        if let Some(k) = sup.find_superset(q, offset) {
            keep[k] = true;
        }
    }
    keep
}

fn select(sup: &LinkIndex, keep: &[bool]) -> LinkIndex {
    let regions: Vec<QRegion> = sup
        .regions
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k)
        .map(|(r, _)| r.clone())
        .collect();
    let dims = sup.dims.iter().zip(keep).filter(|(_, &k)| k).map(|(d, _)| *d).collect();
    LinkIndex { regions, dims }
}

/// Common refinement of the regions of `a` and `b`.
///
/// Every output region is an atom of the set algebra generated by the input
/// regions (an intersection piece or a difference piece), the outputs are
/// pairwise disjoint and their union is the union of the inputs.
pub fn index_refine(a: &LinkIndex, b: &LinkIndex) -> IndexResult<LinkIndex> {
    let mut atoms: Vec<QRegion> = Vec::new();
    for r in a.regions.iter().chain(&b.regions) {
        let mut next = Vec::with_capacity(atoms.len() + 2);
        let mut rest = r.clone();
        for t in atoms {
            let common = t.intersect(r)?;
            if common.is_empty() {
                next.push(t);
                continue;
            }
            let outside = t.difference(r)?;
            rest = rest.difference(&common)?;
            next.push(common);
            if !outside.is_empty() {
                next.push(outside);
            }
        }
        if !rest.is_empty() {
            next.push(rest);
        }
        atoms = next;
    }
    Ok(LinkIndex::new(atoms))
}

/// Backward decomposition sweep: candidate indices `l_1..l_N`, flux on the last site.
pub fn backward_sweep(sys: &ConstraintSystem) -> IndexResult<Vec<LinkIndex>> {
    let n = sys.n_vars();
    let bounds = boundary(sys);
    let bound_region = |i: usize| QRegion::from_box(bounds.get(i).clone());

    let last = QRegion::from_box(sys.flux_box()).intersect(&bound_region(n))?;
    if last.is_empty() {
        return Err(IndexError::Infeasible);
    }
    let mut links = vec![LinkIndex::empty(); n];
    links[n - 1] = LinkIndex::new(vec![last]);

    for i in (1..n).rev() {
        let b = bound_region(i);
        let step = sys.column(i).neg();
        let next = &links[i];
        let mut stay = Vec::with_capacity(next.len());
        let mut moved = Vec::with_capacity(next.len());
        for q in &next.regions {
            stay.push(q.intersect(&b)?);
            moved.push(q.shift(&step)?.intersect(&b)?);
        }
        let refined = index_refine(&LinkIndex::new(stay), &LinkIndex::new(moved))?;
        debug_assert!(refined.is_pairwise_disjoint());
        if refined.is_empty() {
            return Err(IndexError::Infeasible);
        }
        links[i - 1] = refined;
    }
    Ok(links)
}

/// Forward validation sweep: keeps the regions reachable from the left boundary.
///
/// Never adds regions; the result is a sub-collection of `candidates`.
pub fn forward_validate(
    sys: &ConstraintSystem,
    mut candidates: Vec<LinkIndex>,
) -> IndexResult<Vec<LinkIndex>> {
    let dim = sys.n_constraints();
    let origin = LinkIndex::origin(dim);
    let zero = Qn::zeros(dim);
    for i in 0..candidates.len() {
        let prev = if i == 0 { &origin } else { &candidates[i - 1] };
        let stay = chi_mask(prev, &candidates[i], &zero);
        let moved = chi_mask(prev, &candidates[i], sys.column(i));
        let keep: Vec<bool> = stay.iter().zip(&moved).map(|(a, b)| *a || *b).collect();
        let validated = select(&candidates[i], &keep);
        if validated.is_empty() {
            return Err(IndexError::Infeasible);
        }
        candidates[i] = validated;
    }
    Ok(candidates)
}

/// Link indices `l_1..l_N` for the MPS with its flux on the last site.
pub fn constraints_to_indices(sys: &ConstraintSystem) -> IndexResult<Vec<LinkIndex>> {
    forward_validate(sys, backward_sweep(sys)?)
}

/// Both index families, addressed per bond.
///
/// Bond `b` (for `b` in `0..=N`) sits to the left of site `b` (0-based).
/// `left(b)` labels prefix sums over sites `0..b` and `right(b)` labels
/// suffix sums over sites `b..N`; `left(0)` and `right(N)` are `{0}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexFamilies {
    left: Vec<LinkIndex>,
    right: Vec<LinkIndex>,
}

impl IndexFamilies {
    pub fn build(sys: &ConstraintSystem) -> IndexResult<Self> {
        let reversed = sys.reversed();
        let (fwd, rev) = thread::scope(|s| {
            let handle = s.spawn(|| constraints_to_indices(&reversed));
            let fwd = constraints_to_indices(sys);
            (fwd, handle.join().expect("index construction panicked"))
        });
        let (fwd, rev) = (fwd?, rev?);
        let origin = LinkIndex::origin(sys.n_constraints());

        let mut left = Vec::with_capacity(fwd.len() + 1);
        left.push(origin.clone());
        left.extend(fwd);

        // rev[k - 1] covers the last k variables, i.e. bond N - k
        let mut right: Vec<LinkIndex> = rev.into_iter().rev().collect();
        right.push(origin);
        Ok(IndexFamilies { left, right })
    }

    pub fn n_bonds(&self) -> usize {
        self.left.len()
    }

    pub fn left(&self, bond: usize) -> &LinkIndex {
        &self.left[bond]
    }

    pub fn right(&self, bond: usize) -> &LinkIndex {
        &self.right[bond]
    }

    pub fn charge_complexity(&self) -> usize {
        self.left.iter().chain(&self.right).map(LinkIndex::len).max().unwrap_or(0)
    }
}

/// Largest QRegion count over all links of both flux placements.
pub fn charge_complexity(sys: &ConstraintSystem) -> IndexResult<usize> {
    Ok(IndexFamilies::build(sys)?.charge_complexity())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(text: &str) -> QRegion {
        text.parse().unwrap()
    }

    fn qn(c: &[i64]) -> Qn {
        Qn::new(c.to_vec()).unwrap()
    }

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

    fn index(regions: &[&str]) -> LinkIndex {
        LinkIndex::new(regions.iter().map(|r| region(r)).collect())
    }

    #[test]
    fn cumulative_bounds() {
        let b = boundary(&two_inequalities());
        assert_eq!(b.get(3), &IntBox::from_corners(&[-1, -3], &[3, 3]).unwrap());
        assert_eq!(b.get(4), &IntBox::from_corners(&[-3, -3], &[3, 4]).unwrap());
        let c = boundary(&cardinality(6, 0, 6));
        for i in 1..=6 {
            assert_eq!(c.get(i), &IntBox::from_corners(&[0], &[i as i64]).unwrap());
        }
    }

    #[test]
    fn equality_indices() {
        let links = constraints_to_indices(&cardinality(3, 2, 2)).unwrap();
        assert_eq!(links[0], index(&["[0,0]", "[1,1]"]));
        assert_eq!(links[1], index(&["[1,1]", "[2,2]"]));
        assert_eq!(links[2], index(&["[2,2]"]));
    }

    #[test]
    fn interval_indices() {
        let links = constraints_to_indices(&cardinality(6, 2, 4)).unwrap();
        assert_eq!(links[4], index(&["[1,1]", "[2,3]", "[4,4]"]));
    }

    #[test]
    fn two_inequality_backward_sweep() {
        let sys = two_inequalities();
        let back = backward_sweep(&sys).unwrap();
        assert_eq!(back[3], index(&["[(-1,-1),(2,1)]"]));
        let expected = index(&[
            "[(1,-1),(2,0)]",
            "[(-1,-1),(0,0)]u[(-1,1),(2,1)]",
            "[(1,-2),(3,-2)]u[(3,-1),(3,0)]",
        ]);
        assert_eq!(back[2], expected);

        let links = forward_validate(&sys, back.clone()).unwrap();
        assert_eq!(links.iter().map(LinkIndex::len).max(), Some(3));
        for (v, b) in links.iter().zip(&back) {
            assert!(v.regions().iter().all(|r| b.regions().contains(r)));
        }
    }

    #[test]
    fn two_inequality_left_flux_family() {
        let fam = IndexFamilies::build(&two_inequalities()).unwrap();
        assert_eq!(
            fam.right(1),
            &index(&["[(-2,2),(1,3)]u[(-2,1),(-2,1)]", "[(-1,-1),(2,0)]u[(2,1),(2,1)]"])
        );
        assert_eq!(
            fam.right(2),
            &index(&["[(0,-1),(0,0)]", "[(-1,-1),(-1,0)]", "[(-2,1),(-2,1)]", "[(-3,-1),(-2,0)]"])
        );
        assert_eq!(fam.right(3), &index(&["[(0,0),(0,0)]", "[(-2,1),(-2,1)]"]));
    }

    #[test]
    fn first_site_filter() {
        // l_1 keeps exactly the candidates holding (0,0) or A_1 = (1,-2)
        let sys = two_inequalities();
        let back = backward_sweep(&sys).unwrap();
        let origin = LinkIndex::origin(2);
        let stay = chi(&origin, &back[0], &Qn::zeros(2));
        let moved = chi(&origin, &back[0], sys.column(0));
        let brute: Vec<&QRegion> = back[0]
            .regions()
            .iter()
            .filter(|r| {
                r.contains_point(&qn(&[0, 0])).unwrap() || r.contains_point(&qn(&[1, -2])).unwrap()
            })
            .collect();
        let mut got: Vec<&QRegion> = stay.regions().iter().chain(moved.regions()).collect();
        got.sort();
        got.dedup();
        let mut brute = brute;
        brute.sort();
        assert_eq!(got, brute);
    }

    #[test]
    fn chi_edge_cases() {
        let sup = index(&["[0,0]", "[1,1]"]);
        assert_eq!(chi(&index(&["[0,0]"]), &sup, &qn(&[0])), index(&["[0,0]"]));
        assert!(chi(&LinkIndex::empty(), &sup, &qn(&[0])).is_empty());
    }

    #[test]
    fn refinement() {
        let got = index_refine(&index(&["[2,4]"]), &index(&["[1,3]"])).unwrap();
        assert_eq!(got, index(&["[1,1]", "[2,3]", "[4,4]"]));
        let a = index(&["[0,2]", "[5,6]"]);
        assert_eq!(index_refine(&a, &a).unwrap(), a);
    }

    #[test]
    fn complexity_limits() {
        assert_eq!(charge_complexity(&cardinality(12, 6, 6)).unwrap(), 7);
        assert_eq!(charge_complexity(&cardinality(12, 0, 12)).unwrap(), 1);
    }

    #[test]
    fn infeasible_and_invalid() {
        assert_eq!(
            constraints_to_indices(&cardinality(3, 4, 5)),
            Err(IndexError::Infeasible)
        );
        assert!(matches!(
            ConstraintSystem::new(vec![vec![1, 1]], vec![2], vec![1]),
            Err(IndexError::InvalidSystem(_))
        ));
        assert!(matches!(
            ConstraintSystem::new(vec![vec![1, 1], vec![1]], vec![0, 0], vec![1, 1]),
            Err(IndexError::InvalidSystem(_))
        ));
    }
}
