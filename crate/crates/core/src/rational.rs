use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Dense matrix of exact rationals.
#[derive(Clone, PartialEq, Eq)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigRational>,
}

impl RationalMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RationalMatrix { rows, cols, data: vec![BigRational::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = BigRational::one();
        }
        m
    }

    pub fn from_i64(rows: usize, cols: usize, vals: &[i64]) -> Self {
        assert_eq!(vals.len(), rows * cols);
        RationalMatrix {
            rows,
            cols,
            data: vals.iter().map(|&v| BigRational::from_integer(BigInt::from(v))).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &BigRational {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: BigRational) {
        self.data[r * self.cols + c] = v;
    }

    pub fn add_at(&mut self, r: usize, c: usize, v: &BigRational) {
        let e = &mut self.data[r * self.cols + c];
        *e += v;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }

    pub fn row(&self, r: usize) -> &[BigRational] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul(&self, other: &RationalMatrix) -> RationalMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if !b.is_zero() {
                        out.data[i * other.cols + j] += a * b;
                    }
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &RationalMatrix) -> RationalMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        RationalMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, s: &BigRational) -> RationalMatrix {
        RationalMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * s).collect() }
    }

    pub fn transpose(&self) -> RationalMatrix {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.get(i, j).clone();
            }
        }
        out
    }

    /// Exact rank by fraction-free elimination of the rows.
    pub fn rank(&self) -> usize {
        let mut elim = SparseEliminator::new();
        for r in 0..self.rows {
            let mut denom = BigInt::one();
            for x in self.row(r) {
                denom = denom.lcm(x.denom());
            }
            let row: Vec<(usize, BigInt)> = self
                .row(r)
                .iter()
                .enumerate()
                .filter(|(_, x)| !x.is_zero())
                .map(|(c, x)| (c, x.numer() * (&denom / x.denom())))
                .collect();
            elim.push(row);
        }
        elim.rank()
    }

    /// Whether `w` (as a row vector) lies in the row space of `self`.
    pub fn row_space_contains(&self, w: &[BigRational]) -> bool {
        let mut stacked = self.clone();
        stacked.data.extend_from_slice(w);
        stacked.rows += 1;
        stacked.rank() == self.rank()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        use num_traits::ToPrimitive;
        self.data.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
    }
}

impl fmt::Debug for RationalMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RationalMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: Vec<String> = self.row(r).iter().map(|x| x.to_string()).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Incremental fraction-free row reduction over the integers with sparse rows.
/// Each pushed row is reduced against the current pivots; a nonzero remainder becomes a new pivot.
#[derive(Default)]
pub struct SparseEliminator {
    pivots: BTreeMap<usize, BTreeMap<usize, BigInt>>,
}

impl SparseEliminator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: Vec<(usize, BigInt)>) -> bool {
        let mut r: BTreeMap<usize, BigInt> = row.into_iter().filter(|(_, v)| !v.is_zero()).collect();
        loop {
            let Some((&lead, _)) = r.iter().next() else { return false };
            let Some(p) = self.pivots.get(&lead) else { break };
            let a = r[&lead].clone();
            let b = p[&lead].clone();
            let g = a.gcd(&b);
            let (fa, fb) = (&b / &g, &a / &g);
            // r <- fa*r - fb*p, which clears the leading entry
            let mut next = BTreeMap::new();
            for (c, v) in &r {
                let x = v * &fa;
                next.insert(*c, x);
            }
            for (c, v) in p {
                let e = next.entry(*c).or_insert_with(BigInt::zero);
                *e -= v * &fb;
            }
            next.retain(|_, v| !v.is_zero());
            r = next;
        }
        let mut content = BigInt::zero();
        for v in r.values() {
            content = content.gcd(v);
        }
        if !content.is_one() {
            for v in r.values_mut() {
                *v /= &content;
            }
        }
        let lead = *r.keys().next().unwrap();
        if r[&lead].is_negative() {
            for v in r.values_mut() {
                *v = -v.clone();
            }
        }
        self.pivots.insert(lead, r);
        true
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }
}
