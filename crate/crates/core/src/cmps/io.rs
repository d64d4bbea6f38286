//! Line-based text container for a [`ConstrainedMPS`].
//!
//! ```text
//! cmps-mps 1
//! sites 3
//! constraints 1
//! row 1 1 1
//! lower 2
//! upper 2
//! flux 2
//! center site 2
//! canonical 0
//! index left 0 1
//! 1 [0,0]
//! ...
//! tensor 0 left 2
//! 0 0 0 1 1 1
//! ...
//! bond 0
//! end
//! ```
//!
//! Index lines carry the active dimension and the region. Block lines are
//! `left x right rows cols` followed by the entries in row-major order.
//! Floats use the shortest representation that reads back to the same value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{BlockTensor, Center, ConstrainedMPS, MpsError, MpsResult, Side, Transitions};
use crate::indexing::{ConstraintSystem, IndexFamilies, LinkIndex};
use crate::qregion::QRegion;

const MAGIC: &str = "cmps-mps 1";

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn write_matrix(out: &mut String, m: &DMatrix<f64>) {
    write!(out, " {} {}", m.nrows(), m.ncols()).unwrap();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            write!(out, " {}", m[(i, j)]).unwrap();
        }
    }
}

impl ConstrainedMPS {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let sys = &*self.sys;
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(out, "sites {}", self.n_sites()).unwrap();
        writeln!(out, "constraints {}", sys.n_constraints()).unwrap();
        for row in sys.rows() {
            writeln!(out, "row {}", join(row)).unwrap();
        }
        writeln!(out, "lower {}", join(sys.lower())).unwrap();
        writeln!(out, "upper {}", join(sys.upper())).unwrap();
        writeln!(out, "flux {}", self.flux_site).unwrap();
        match self.center {
            Center::Site(s) => writeln!(out, "center site {s}").unwrap(),
            Center::Bond(b) => writeln!(out, "center bond {b}").unwrap(),
        }
        writeln!(out, "canonical {}", u8::from(self.canonical)).unwrap();
        for (name, dims) in [("left", &self.left_dims), ("right", &self.right_dims)] {
            for (b, d) in dims.iter().enumerate() {
                let index = if name == "left" { self.indices.left(b) } else { self.indices.right(b) };
                writeln!(out, "index {name} {b} {}", index.len()).unwrap();
                for (dim, region) in d.iter().zip(index.regions()) {
                    writeln!(out, "{dim} {region}").unwrap();
                }
            }
        }
        for t in &self.tensors {
            let side = match t.side {
                Side::LeftOfFlux => "left",
                Side::Flux => "flux",
                Side::RightOfFlux => "right",
            };
            writeln!(out, "tensor {} {side} {}", t.site, t.blocks.len()).unwrap();
            for (&(a, x, c), m) in &t.blocks {
                write!(out, "{a} {x} {c}").unwrap();
                write_matrix(&mut out, m);
                out.push('\n');
            }
        }
        writeln!(out, "bond {}", self.bond.len()).unwrap();
        for (&(q, r), m) in &self.bond {
            write!(out, "{q} {r}").unwrap();
            write_matrix(&mut out, m);
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> MpsResult<Self> {
        let mut r = Reader { lines: text.lines().enumerate(), line: 0 };
        r.expect_line(MAGIC)?;
        let n: usize = r.keyed("sites")?.parse_one(&r)?;
        let m: usize = r.keyed("constraints")?.parse_one(&r)?;
        let rows = (0..m).map(|_| r.keyed("row")?.parse_all(&r)).collect::<MpsResult<Vec<Vec<i64>>>>()?;
        let lower = r.keyed("lower")?.parse_all(&r)?;
        let upper = r.keyed("upper")?.parse_all(&r)?;
        let sys = ConstraintSystem::new(rows, lower, upper)?;
        if sys.n_vars() != n {
            return Err(r.error(format!("rows have {} entries, expected {n}", sys.n_vars())));
        }
        let flux_site: usize = r.keyed("flux")?.parse_one(&r)?;
        if flux_site >= n {
            return Err(r.error(format!("flux site {flux_site} out of range")));
        }
        let center = {
            let f = r.keyed("center")?;
            let (kind, pos) = f.0.split_once(' ').ok_or_else(|| r.error("malformed center".into()))?;
            let pos: usize = Fields(pos.to_string()).parse_one(&r)?;
            match kind {
                "site" if pos < n => Center::Site(pos),
                "bond" if pos <= n => Center::Bond(pos),
                _ => return Err(r.error(format!("bad center {kind} {pos}"))),
            }
        };
        let canonical = match r.keyed("canonical")?.0.as_str() {
            "0" => false,
            "1" => true,
            other => return Err(r.error(format!("bad canonical flag {other}"))),
        };

        let indices = IndexFamilies::build(&sys)?;
        let mut left_dims = Vec::with_capacity(n + 1);
        let mut right_dims = Vec::with_capacity(n + 1);
        for name in ["left", "right"] {
            for b in 0..=n {
                let head: Vec<usize> = r.keyed(&format!("index {name} {b}"))?.parse_all(&r)?;
                let expected = if name == "left" { indices.left(b) } else { indices.right(b) };
                if head != [expected.len()] {
                    return Err(r.error(format!("index {name} {b} does not match the system")));
                }
                let dims = r.index_lines(expected, sys.n_constraints())?;
                if name == "left" { left_dims.push(dims) } else { right_dims.push(dims) }
            }
        }

        let mut tensors = Vec::with_capacity(n);
        for s in 0..n {
            let f = r.keyed(&format!("tensor {s}"))?;
            let (side, count) = f.0.split_once(' ').ok_or_else(|| r.error("malformed tensor header".into()))?;
            let side = match side {
                "left" => Side::LeftOfFlux,
                "flux" => Side::Flux,
                "right" => Side::RightOfFlux,
                other => return Err(r.error(format!("unknown side {other}"))),
            };
            let count: usize = Fields(count.to_string()).parse_one(&r)?;
            let mut blocks = BTreeMap::new();
            for _ in 0..count {
                let (key, m) = r.block(3)?;
                if key[1] > 1 {
                    return Err(r.error(format!("physical value {}", key[1])));
                }
                blocks.insert((key[0], key[1] as u8, key[2]), m);
            }
            tensors.push(BlockTensor { site: s, side, blocks });
        }
        let count: usize = r.keyed("bond")?.parse_one(&r)?;
        let mut bond = BTreeMap::new();
        for _ in 0..count {
            let (key, m) = r.block(2)?;
            bond.insert((key[0], key[1]), m);
        }
        r.expect_line("end")?;

        let trans = Transitions::build(&sys, &indices);
        let mps = ConstrainedMPS {
            sys: Arc::new(sys),
            indices: Arc::new(indices),
            trans: Arc::new(trans),
            flux_site,
            tensors,
            center,
            bond,
            left_dims,
            right_dims,
            canonical,
        };
        mps.check_layout().map_err(|msg| MpsError::Parse { line: r.line, msg })?;
        Ok(mps)
    }

    /// Block labels in range and block shapes matching the active dimensions.
    fn check_layout(&self) -> Result<(), String> {
        let (bl, br) = self.family_split();
        let n = self.n_sites();
        for t in &self.tensors {
            let s = t.site;
            let expected = if s < bl {
                Side::LeftOfFlux
            } else if s >= br {
                Side::RightOfFlux
            } else {
                Side::Flux
            };
            if t.side != expected {
                return Err(format!("tensor {s} has the wrong side for the center"));
            }
            let (ld, rd) = match t.side {
                Side::LeftOfFlux => (&self.left_dims[s], &self.left_dims[s + 1]),
                Side::Flux => (&self.left_dims[s], &self.right_dims[s + 1]),
                Side::RightOfFlux => (&self.right_dims[s], &self.right_dims[s + 1]),
            };
            for (&(a, _, c), m) in &t.blocks {
                if a >= ld.len() || c >= rd.len() || m.shape() != (ld[a], rd[c]) {
                    return Err(format!("tensor {s} block ({a}, {c}) does not fit the index"));
                }
            }
        }
        if !self.bond.is_empty() && !matches!(self.center, Center::Bond(_)) {
            return Err("flux matrix present while the center is a site".into());
        }
        if let Center::Bond(b) = self.center {
            let (ld, rd) = (&self.left_dims[b.min(n)], &self.right_dims[b.min(n)]);
            for (&(q, r), m) in &self.bond {
                if q >= ld.len() || r >= rd.len() || m.shape() != (ld[q], rd[r]) {
                    return Err(format!("flux matrix block ({q}, {r}) does not fit the index"));
                }
            }
        }
        Ok(())
    }
}

struct Fields(String);

impl Fields {
    fn parse_all<T: std::str::FromStr>(&self, r: &Reader<'_>) -> MpsResult<Vec<T>> {
        self.0
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| r.error(format!("cannot parse {t:?}"))))
            .collect()
    }

    fn parse_one<T: std::str::FromStr>(&self, r: &Reader<'_>) -> MpsResult<T> {
        let mut v = self.parse_all(r)?;
        if v.len() != 1 {
            return Err(r.error("expected a single value".into()));
        }
        Ok(v.pop().unwrap())
    }
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Reader<'a> {
    fn error(&self, msg: String) -> MpsError {
        MpsError::Parse { line: self.line, msg }
    }

    fn next(&mut self) -> MpsResult<&'a str> {
        let (k, text) = self.lines.next().ok_or_else(|| MpsError::Parse {
            line: self.line + 1,
            msg: "unexpected end of input".into(),
        })?;
        self.line = k + 1;
        Ok(text.trim())
    }

    fn expect_line(&mut self, want: &str) -> MpsResult<()> {
        let got = self.next()?;
        if got != want {
            return Err(self.error(format!("expected {want:?}, found {got:?}")));
        }
        Ok(())
    }

    /// Reads a line starting with `key` and returns the rest.
    fn keyed(&mut self, key: &str) -> MpsResult<Fields> {
        let got = self.next()?;
        match got.strip_prefix(key) {
            Some(rest) if rest.is_empty() || rest.starts_with(' ') => Ok(Fields(rest.trim().to_string())),
            _ => Err(self.error(format!("expected {key:?}, found {got:?}"))),
        }
    }

    fn index_lines(&mut self, expected: &LinkIndex, dim: usize) -> MpsResult<Vec<usize>> {
        let mut dims = Vec::with_capacity(expected.len());
        for region in expected.regions() {
            let got = self.next()?;
            let (d, text) = got.split_once(' ').ok_or_else(|| self.error("malformed index line".into()))?;
            let d: usize = d.parse().map_err(|_| self.error(format!("bad dimension {d:?}")))?;
            let parsed = QRegion::parse(text, dim).map_err(|e| self.error(e.to_string()))?;
            if &parsed != region {
                return Err(self.error(format!("region {text} does not match the system")));
            }
            dims.push(d);
        }
        Ok(dims)
    }

    fn block(&mut self, n_keys: usize) -> MpsResult<(Vec<usize>, DMatrix<f64>)> {
        let line = self.next()?;
        let mut tokens = line.split_whitespace();
        let mut ints = Vec::with_capacity(n_keys + 2);
        for _ in 0..n_keys + 2 {
            let t = tokens.next().ok_or_else(|| self.error("truncated block line".into()))?;
            ints.push(t.parse::<usize>().map_err(|_| self.error(format!("bad integer {t:?}")))?);
        }
        let (rows, cols) = (ints[n_keys], ints[n_keys + 1]);
        let values = tokens
            .map(|t| t.parse::<f64>().map_err(|_| self.error(format!("bad float {t:?}"))))
            .collect::<MpsResult<Vec<f64>>>()?;
        if values.len() != rows * cols {
            return Err(self.error(format!("expected {} entries, found {}", rows * cols, values.len())));
        }
        ints.truncate(n_keys);
        Ok((ints, DMatrix::from_row_slice(rows, cols, &values)))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::cmps::{constraints_to_mps, Truncation};

    fn system() -> ConstraintSystem {
        ConstraintSystem::new(
            vec![vec![1, 2, -1, -2], vec![-2, 3, -1, 1]],
            vec![-1, -1],
            vec![2, 1],
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut mps = ConstrainedMPS::random(&system(), 1, 2, &mut rng).unwrap();
        assert_eq!(ConstrainedMPS::from_text(&mps.to_text()).unwrap(), mps);
        mps.canonicalize(2, Truncation::exact()).unwrap();
        let text = mps.to_text();
        let back = ConstrainedMPS::from_text(&text).unwrap();
        assert_eq!(back, mps);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn rejects_damage() {
        let text = constraints_to_mps(&system(), 3).unwrap().to_text();
        let broken = text.replace("upper 2 1", "upper 2 2");
        assert!(matches!(ConstrainedMPS::from_text(&broken), Err(MpsError::Parse { .. })));
        let truncated = &text[..text.len() / 2];
        assert!(matches!(ConstrainedMPS::from_text(truncated), Err(MpsError::Parse { .. })));
    }
}
