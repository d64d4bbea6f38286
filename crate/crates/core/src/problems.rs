//! Instance generators, brute-force oracles and the JSON instance format.
//!
//! Random instances are drawn from `ChaCha8Rng::seed_from_u64(seed)`, so a
//! `(parameters, seed)` pair names the same instance on every platform.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cmps::{bits_of, Bits};
use crate::indexing::{ConstraintSystem, IndexError};

/// Largest `N` accepted by the enumeration oracles.
pub const BRUTE_FORCE_LIMIT: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error(transparent)]
    Index(#[from] IndexError),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("{n} variables exceed the enumeration limit of {max}")]
    TooLarge { n: usize, max: usize },

    #[error("infeasible system: no bitstring satisfies the constraints")]
    Infeasible,

    #[error("line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },

    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
}

pub type ProblemResult<T> = Result<T, ProblemError>;

/// `lower <= x_1 + ... + x_n <= upper`.
pub fn gen_cardinality(n: usize, lower: i64, upper: i64) -> ProblemResult<ConstraintSystem> {
    if lower < 0 || lower > upper {
        return Err(ProblemError::InvalidParameters(format!(
            "need 0 <= lower <= upper, got {lower} and {upper}"
        )));
    }
    Ok(ConstraintSystem::new(vec![vec![1; n]], vec![lower], vec![upper])?)
}

/// Quadratic knapsack: minimize `x . Q x` subject to `w . x <= capacity`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QkpInstance {
    pub q: Vec<Vec<i64>>,
    pub w: Vec<i64>,
    pub capacity: i64,
    pub seed: Option<u64>,
}

impl QkpInstance {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    pub fn system(&self) -> ConstraintSystem {
        ConstraintSystem::new(vec![self.w.clone()], vec![0], vec![self.capacity])
            .expect("validated instance")
    }

    pub fn cost(&self, x: &[u8]) -> i64 {
        qkp_cost(self, x)
    }
}

/// `N^2` entries of `Q` row-major from `[-5, 5]`, then `N` weights from `[0, 5]`; capacity `N / 4`.
pub fn gen_qkp(n: usize, seed: u64) -> ProblemResult<QkpInstance> {
    if n == 0 {
        return Err(ProblemError::InvalidParameters("N must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-5..=5)).collect())
        .collect();
    let w = (0..n).map(|_| rng.random_range(0..=5)).collect();
    Ok(QkpInstance { q, w, capacity: (n / 4) as i64, seed: Some(seed) })
}

/// `sum_ij Q_ij x_i x_j`, exact.
pub fn qkp_cost(inst: &QkpInstance, x: &[u8]) -> i64 {
    assert_eq!(x.len(), inst.n(), "bitstring length");
    let on: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0).collect();
    on.iter().map(|&i| on.iter().map(|&j| inst.q[i][j]).sum::<i64>()).sum()
}

/// Facility location: every demand row must be served by between `lower` and `upper` open facilities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FacilityInstance {
    pub a: Vec<Vec<i64>>,
    pub lower: i64,
    pub upper: i64,
    pub seed: Option<u64>,
}

impl FacilityInstance {
    pub fn system(&self) -> ConstraintSystem {
        let m = self.a.len();
        ConstraintSystem::new(self.a.clone(), vec![self.lower; m], vec![self.upper; m])
            .expect("validated instance")
    }
}

/// `m` rows over `n` facilities, each row with `n / 10` ones at distinct random columns; bounds `2 <= . <= upper`.
pub fn gen_facility(n: usize, m: usize, upper: i64, seed: u64) -> ProblemResult<FacilityInstance> {
    let k = n / 10;
    if k < 2 {
        return Err(ProblemError::InvalidParameters(format!(
            "row sum {k} = floor(N/10) cannot reach the lower bound 2"
        )));
    }
    if upper < 2 {
        return Err(ProblemError::InvalidParameters(format!("upper bound {upper} below 2")));
    }
    if m == 0 {
        return Err(ProblemError::InvalidParameters("M must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..m)
        .map(|_| {
            let mut row = vec![0i64; n];
            for j in sample(&mut rng, n, k) {
                row[j] = 1;
            }
            row
        })
        .collect();
    Ok(FacilityInstance { a, lower: 2, upper, seed: Some(seed) })
}

fn check_size(sys: &ConstraintSystem) -> ProblemResult<usize> {
    let n = sys.n_vars();
    if n > BRUTE_FORCE_LIMIT {
        return Err(ProblemError::TooLarge { n, max: BRUTE_FORCE_LIMIT });
    }
    Ok(n)
}

/// Number of feasible bitstrings by enumeration.
pub fn brute_force_count(sys: &ConstraintSystem) -> ProblemResult<u64> {
    let n = check_size(sys)?;
    Ok((0u64..1 << n).filter(|&k| sys.is_feasible(&bits_of(k, n))).count() as u64)
}

/// Every feasible bitstring in lexicographic order (first variable most significant).
pub fn brute_force_solutions(sys: &ConstraintSystem) -> ProblemResult<Vec<Bits>> {
    let n = check_size(sys)?;
    Ok((0u64..1 << n).map(|k| bits_of(k, n)).filter(|x| sys.is_feasible(x)).collect())
}

/// Exact constrained minimum; ties go to the lexicographically smallest bitstring.
pub fn brute_force_solve<F>(sys: &ConstraintSystem, cost: F) -> ProblemResult<(Bits, f64)>
where
    F: Fn(&[u8]) -> f64,
{
    let mut best: Option<(Bits, f64)> = None;
    for x in brute_force_solutions(sys)? {
        let c = cost(&x);
        if best.as_ref().is_none_or(|b| c < b.1) {
            best = Some((x, c));
        }
    }
    best.ok_or(ProblemError::Infeasible)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceKind {
    Qkp,
    Facility,
    Cardinality,
    Raw,
}

/// On-disk form of an instance; field names follow the file format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(rename = "type")]
    pub kind: InstanceKind,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<i64>>,
    pub l: Vec<i64>,
    pub u: Vec<i64>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<i64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<i64>>,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// A validated instance: a constraint system and, when `Q` is given, a quadratic cost.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub kind: InstanceKind,
    pub system: ConstraintSystem,
    pub q: Option<Vec<Vec<i64>>>,
    pub seed: Option<u64>,
}

impl Instance {
    pub fn from_system(kind: InstanceKind, system: ConstraintSystem) -> Self {
        Instance { kind, system, q: None, seed: None }
    }

    /// `x . Q x` when the instance carries `Q`.
    pub fn cost(&self, x: &[u8]) -> Option<i64> {
        let q = self.q.as_ref()?;
        let on: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0).collect();
        Some(on.iter().map(|&i| on.iter().map(|&j| q[i][j]).sum::<i64>()).sum())
    }

    pub fn from_json(text: &str) -> ProblemResult<Self> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| ProblemError::Syntax {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        file.validate()
    }

    pub fn to_json(&self) -> String {
        let sys = &self.system;
        let (w, capacity) = match self.kind {
            InstanceKind::Qkp => (Some(sys.rows()[0].clone()), Some(sys.upper()[0])),
            _ => (None, None),
        };
        let file = InstanceFile {
            kind: self.kind,
            n: sys.n_vars(),
            m: sys.n_constraints(),
            a: sys.rows().to_vec(),
            l: sys.lower().to_vec(),
            u: sys.upper().to_vec(),
            q: self.q.clone(),
            w,
            capacity,
            seed: self.seed,
        };
        serde_json::to_string_pretty(&file).expect("plain data serializes") + "\n"
    }
}

impl From<QkpInstance> for Instance {
    fn from(inst: QkpInstance) -> Self {
        Instance { kind: InstanceKind::Qkp, system: inst.system(), q: Some(inst.q), seed: inst.seed }
    }
}

impl From<FacilityInstance> for Instance {
    fn from(inst: FacilityInstance) -> Self {
        Instance { kind: InstanceKind::Facility, system: inst.system(), q: None, seed: inst.seed }
    }
}

fn invalid(path: impl Into<String>, msg: impl Into<String>) -> ProblemError {
    ProblemError::Invalid { path: path.into(), msg: msg.into() }
}

impl InstanceFile {
    pub fn validate(self) -> ProblemResult<Instance> {
        let (n, m) = (self.n, self.m);
        if n == 0 {
            return Err(invalid("N", "must be positive"));
        }
        if m == 0 {
            return Err(invalid("M", "must be positive"));
        }
        if self.a.len() != m {
            return Err(invalid("A", format!("has {} rows, expected M = {m}", self.a.len())));
        }
        for (i, row) in self.a.iter().enumerate() {
            if row.len() != n {
                return Err(invalid(format!("A[{i}]"), format!("has {} entries, expected N = {n}", row.len())));
            }
        }
        for (name, v) in [("l", &self.l), ("u", &self.u)] {
            if v.len() != m {
                return Err(invalid(name, format!("has {} entries, expected M = {m}", v.len())));
            }
        }
        if let Some(k) = (0..m).find(|&k| self.l[k] > self.u[k]) {
            return Err(invalid(format!("l[{k}]"), format!("exceeds u[{k}] = {}", self.u[k])));
        }
        if let Some(q) = &self.q {
            if q.len() != n {
                return Err(invalid("Q", format!("has {} rows, expected N = {n}", q.len())));
            }
            if let Some(i) = q.iter().position(|r| r.len() != n) {
                return Err(invalid(format!("Q[{i}]"), format!("has {} entries, expected N = {n}", q[i].len())));
            }
        }
        match self.kind {
            InstanceKind::Qkp => self.check_qkp()?,
            InstanceKind::Facility => self.check_facility()?,
            InstanceKind::Cardinality => {
                if m != 1 {
                    return Err(invalid("M", "a cardinality instance has one row"));
                }
                if let Some(j) = self.a[0].iter().position(|&v| v != 1) {
                    return Err(invalid(format!("A[0][{j}]"), "a cardinality row is all ones"));
                }
            }
            InstanceKind::Raw => {}
        }
        let system = ConstraintSystem::new(self.a, self.l, self.u).map_err(|e| invalid("A", e.to_string()))?;
        Ok(Instance { kind: self.kind, system, q: self.q, seed: self.seed })
    }

    fn check_qkp(&self) -> ProblemResult<()> {
        self.q.as_ref().ok_or_else(|| invalid("Q", "required for a qkp instance"))?;
        let w = self.w.as_ref().ok_or_else(|| invalid("w", "required for a qkp instance"))?;
        let cap = self.capacity.ok_or_else(|| invalid("W", "required for a qkp instance"))?;
        if w.len() != self.n {
            return Err(invalid("w", format!("has {} entries, expected N = {}", w.len(), self.n)));
        }
        if let Some(j) = w.iter().position(|&v| v < 0) {
            return Err(invalid(format!("w[{j}]"), "weights are nonnegative"));
        }
        if self.m != 1 || &self.a[0] != w {
            return Err(invalid("A", "a qkp instance has the single row A = [w]"));
        }
        if self.l != [0] || self.u != [cap] {
            return Err(invalid("u", "a qkp instance has l = [0] and u = [W]"));
        }
        Ok(())
    }

    fn check_facility(&self) -> ProblemResult<()> {
        for (i, row) in self.a.iter().enumerate() {
            if let Some(j) = row.iter().position(|&v| v != 0 && v != 1) {
                return Err(invalid(format!("A[{i}][{j}]"), "facility entries are 0 or 1"));
            }
        }
        let sums: Vec<i64> = self.a.iter().map(|r| r.iter().sum()).collect();
        if let Some(i) = sums.iter().position(|&s| s != sums[0]) {
            return Err(invalid(format!("A[{i}]"), "facility rows have equal sums"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cardinality_counts() {
        assert_eq!(brute_force_count(&gen_cardinality(3, 2, 2).unwrap()).unwrap(), 3);
        assert_eq!(brute_force_count(&gen_cardinality(6, 2, 4).unwrap()).unwrap(), 50);
        assert!(gen_cardinality(4, 3, 2).is_err());
    }

    #[test]
    fn two_inequality_count() {
        let sys = ConstraintSystem::new(
            vec![vec![1, 2, -1, -2], vec![-2, 3, -1, 1]],
            vec![-1, -1],
            vec![2, 1],
        )
        .unwrap();
        assert_eq!(brute_force_count(&sys).unwrap(), 5);
    }

    #[test]
    fn qkp_generation() {
        let a = gen_qkp(8, 3).unwrap();
        assert_eq!(a, gen_qkp(8, 3).unwrap());
        assert_ne!(a, gen_qkp(8, 4).unwrap());
        assert_eq!(a.capacity, 2);
        assert_eq!(gen_qkp(50, 0).unwrap().capacity, 12);
        assert!(a.q.iter().flatten().all(|v| (-5..=5).contains(v)));
        assert!(a.w.iter().all(|v| (0..=5).contains(v)));
    }

    #[test]
    fn qkp_costs() {
        let inst = gen_qkp(5, 9).unwrap();
        assert_eq!(qkp_cost(&inst, &[0; 5]), 0);
        assert_eq!(qkp_cost(&inst, &[0, 0, 1, 0, 0]), inst.q[2][2]);
        let (i, j) = (1, 3);
        assert_eq!(
            qkp_cost(&inst, &[0, 1, 0, 1, 0]),
            inst.q[i][i] + inst.q[j][j] + inst.q[i][j] + inst.q[j][i]
        );
    }

    #[test]
    fn facility_generation() {
        let f = gen_facility(40, 3, 2, 1).unwrap();
        assert!(f.a.iter().all(|r| r.iter().sum::<i64>() == 4));
        assert_eq!((f.lower, f.upper), (2, 2));
        assert!(gen_facility(40, 3, 10, 1).unwrap().system().upper().iter().all(|&u| u == 10));
        assert!(gen_facility(15, 2, 2, 1).is_err());
    }

    #[test]
    fn solve_oracle() {
        let sys = gen_cardinality(4, 0, 4).unwrap();
        assert_eq!(brute_force_solve(&sys, |_| 0.0).unwrap(), (vec![0; 4], 0.0));
        let ident = QkpInstance {
            q: (0..3).map(|i| (0..3).map(|j| i64::from(i == j)).collect()).collect(),
            w: vec![1; 3],
            capacity: 1,
            seed: None,
        };
        let (x, c) = brute_force_solve(&ident.system(), |x| ident.cost(x) as f64).unwrap();
        assert_eq!((x, c), (vec![0; 3], 0.0));
        let infeasible = gen_cardinality(2, 3, 3).unwrap();
        assert_eq!(brute_force_solve(&infeasible, |_| 0.0), Err(ProblemError::Infeasible));
        assert!(matches!(
            brute_force_count(&gen_cardinality(25, 0, 1).unwrap()),
            Err(ProblemError::TooLarge { .. })
        ));
    }

    #[test]
    fn json_round_trip_and_diagnostics() {
        let inst: Instance = gen_qkp(6, 2).unwrap().into();
        let text = inst.to_json();
        assert_eq!(Instance::from_json(&text).unwrap(), inst);

        let err = Instance::from_json("{\"type\": \"raw\", \"N\": 2,\n \"M\": 1, \"A\": [[1, 1]], \"l\": [0], \"u\": [1],,}")
            .unwrap_err();
        assert!(matches!(err, ProblemError::Syntax { line: 2, .. }), "{err}");

        let err = Instance::from_json(r#"{"type":"raw","N":2,"M":1,"A":[[1]],"l":[0],"u":[1]}"#).unwrap_err();
        assert_eq!(err, invalid("A[0]", "has 1 entries, expected N = 2"));
        let err = Instance::from_json(r#"{"type":"raw","N":2,"M":1,"A":[[1,1]],"l":[2],"u":[1]}"#).unwrap_err();
        assert!(matches!(err, ProblemError::Invalid { ref path, .. } if path == "l[0]"));
    }
}
