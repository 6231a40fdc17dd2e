//! Boolean reachability matrices over the (∨, ∧) semiring.
//!
//! Every matrix in the scheme (module dependencies, full assignments, the
//! I/O/Z view tables, cycle products) is a [`DependencyMatrix`]. Rows are
//! stored as `u64` bitmasks, so a matrix has at most [`MAX_PORTS`] columns.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use smallvec::SmallVec;

/// Upper bound on the number of ports on either side of a module.
pub const MAX_PORTS: usize = 64;

/// Row bitmask: bit `c` set iff column `c` is true.
pub type RowMask = u64;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct DependencyMatrix {
    rows: usize,
    cols: usize,
    bits: SmallVec<[RowMask; 8]>,
}

impl DependencyMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(cols <= MAX_PORTS, "matrix wider than {MAX_PORTS} columns");
        DependencyMatrix {
            rows,
            cols,
            bits: SmallVec::from_elem(0, rows),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for r in 0..n {
            m.bits[r] = 1 << r;
        }
        m
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        let mask = full_mask(cols);
        for r in 0..rows {
            m.bits[r] = mask;
        }
        m
    }

    /// Builds a matrix from 0-based `(row, col)` pairs.
    pub fn from_pairs(rows: usize, cols: usize, pairs: &[(usize, usize)]) -> Self {
        let mut m = Self::zeros(rows, cols);
        for &(r, c) in pairs {
            m.set(r, c, true);
        }
        m
    }

    /// Builds a matrix from 0/1 rows. Returns `None` on ragged input or
    /// entries other than 0 and 1.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R]) -> Option<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if cols > MAX_PORTS {
            return None;
        }
        let mut m = Self::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != cols {
                return None;
            }
            for (c, &v) in row.iter().enumerate() {
                match v {
                    0 => {}
                    1 => m.bits[r] |= 1 << c,
                    _ => return None,
                }
            }
        }
        Some(m)
    }

    pub fn from_row_masks(cols: usize, masks: &[RowMask]) -> Self {
        let mut m = Self::zeros(masks.len(), cols);
        let full = full_mask(cols);
        for (r, &mask) in masks.iter().enumerate() {
            m.bits[r] = mask & full;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        debug_assert!(r < self.rows && c < self.cols);
        self.bits[r] >> c & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        if v {
            self.bits[r] |= 1 << c;
        } else {
            self.bits[r] &= !(1 << c);
        }
    }

    pub fn row_mask(&self, r: usize) -> RowMask {
        self.bits[r]
    }

    pub fn row_masks(&self) -> &[RowMask] {
        &self.bits
    }

    /// Boolean product `self × other`.
    pub fn multiply(&self, other: &DependencyMatrix) -> DependencyMatrix {
        assert_eq!(
            self.cols, other.rows,
            "dimension mismatch: {}x{} × {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            out.bits[r] = other.row_vector_product(self.bits[r]);
        }
        out
    }

    /// Row vector (as a mask over this matrix's rows) times this matrix.
    #[inline]
    pub fn row_vector_product(&self, mut v: RowMask) -> RowMask {
        let mut acc = 0;
        while v != 0 {
            let k = v.trailing_zeros() as usize;
            acc |= self.bits[k];
            v &= v - 1;
        }
        acc
    }

    /// This matrix times a column vector (as a mask over this matrix's columns).
    #[inline]
    pub fn column_vector_product(&self, v: RowMask) -> RowMask {
        let mut acc = 0;
        for (r, &row) in self.bits.iter().enumerate() {
            if row & v != 0 {
                acc |= 1 << r;
            }
        }
        acc
    }

    pub fn transpose(&self) -> DependencyMatrix {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            let mut row = self.bits[r];
            while row != 0 {
                let c = row.trailing_zeros() as usize;
                out.bits[c] |= 1 << r;
                row &= row - 1;
            }
        }
        out
    }

    pub fn union(&self, other: &DependencyMatrix) -> DependencyMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for (a, b) in out.bits.iter_mut().zip(other.bits.iter()) {
            *a |= *b;
        }
        out
    }

    /// `self ⊆ other` entrywise.
    pub fn is_subset_of(&self, other: &DependencyMatrix) -> bool {
        (self.rows, self.cols) == (other.rows, other.cols)
            && self.bits.iter().zip(other.bits.iter()).all(|(a, b)| a & !b == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|r| r.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|&r| r == 0)
    }

    /// Every row and every column has at least one true entry.
    pub fn covers_rows_and_columns(&self) -> bool {
        let mut seen_cols = 0;
        for &row in &self.bits {
            if row == 0 {
                return false;
            }
            seen_cols |= row;
        }
        seen_cols == full_mask(self.cols)
    }

    /// True entries as 0-based `(row, col)` pairs in row-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.count_ones());
        for r in 0..self.rows {
            let mut row = self.bits[r];
            while row != 0 {
                let c = row.trailing_zeros() as usize;
                out.push((r, c));
                row &= row - 1;
            }
        }
        out
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) as u8).collect())
            .collect()
    }

    /// Serialized size of the bitset form, rounded up to whole bytes.
    pub fn packed_bytes(&self) -> usize {
        (self.rows * self.cols).div_ceil(8)
    }
}

pub fn full_mask(cols: usize) -> RowMask {
    if cols >= 64 {
        u64::MAX
    } else {
        (1u64 << cols) - 1
    }
}

impl fmt::Debug for DependencyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for r in 0..self.rows {
            if r > 0 {
                write!(f, ", ")?;
            }
            write!(f, "[")?;
            for c in 0..self.cols {
                if c > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", self.get(r, c) as u8)?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

impl Serialize for DependencyMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DependencyMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows: Vec<Vec<u8>> = Vec::deserialize(deserializer)?;
        DependencyMatrix::from_rows(&rows)
            .ok_or_else(|| D::Error::custom("matrix rows must be equal-length 0/1 lists"))
    }
}

/// Left-to-right product of a non-empty chain.
pub fn chain_product<'a, I>(factors: I) -> Option<DependencyMatrix>
where
    I: IntoIterator<Item = &'a DependencyMatrix>,
{
    let mut it = factors.into_iter();
    let first = it.next()?.clone();
    Some(it.fold(first, |acc, m| acc.multiply(m)))
}
