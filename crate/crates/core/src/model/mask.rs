use crate::error::{Error, Result};

/// Boolean allow-matrix: rows are query positions, columns key positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    rows: usize,
    cols: usize,
    allow: Vec<bool>,
}

impl AttentionMask {
    /// Lower-triangular mask: position `i` sees keys `j <= i`.
    pub fn causal(len: usize) -> Result<Self> {
        Self::prefix(0, len)
    }

    /// Bidirectional over the first `prefix_len` positions, causal afterwards:
    /// `allow[i][j] = j < prefix_len || j <= i`.
    pub fn prefix(prefix_len: usize, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Empty("attention mask length"));
        }
        if prefix_len > len {
            return Err(Error::Range(format!(
                "prefix length {prefix_len} exceeds sequence length {len}"
            )));
        }
        let allow = (0..len)
            .flat_map(|i| (0..len).map(move |j| j < prefix_len || j <= i))
            .collect();
        Ok(Self {
            rows: len,
            cols: len,
            allow,
        })
    }

    pub fn from_rows(rows: Vec<Vec<bool>>) -> Result<Self> {
        let mask = Self::from_rows_unchecked(rows);
        if mask.cols == 0 || mask.allow.len() != mask.rows * mask.cols {
            return Err(Error::Dimension {
                op: "attention_mask",
                detail: "rows must be non-empty and equal length".into(),
            });
        }
        if let Some(r) = (0..mask.rows).find(|&r| !(0..mask.cols).any(|c| mask.allowed(r, c))) {
            return Err(Error::DegenerateMask { row: r });
        }
        Ok(mask)
    }

    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<bool>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        Self {
            rows: r,
            cols: c,
            allow: rows.into_iter().flatten().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn allowed(&self, row: usize, col: usize) -> bool {
        self.allow[row * self.cols + col]
    }

    pub fn to_rows(&self) -> Vec<Vec<bool>> {
        self.allow.chunks(self.cols).map(<[bool]>::to_vec).collect()
    }
}

pub fn build_causal_mask(len: usize) -> Result<AttentionMask> {
    AttentionMask::causal(len)
}

pub fn build_prefix_mask(prefix_len: usize, len: usize) -> Result<AttentionMask> {
    AttentionMask::prefix(prefix_len, len)
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: bool = true;
    const F: bool = false;

    #[test]
    fn causal_examples() {
        assert_eq!(build_causal_mask(1).unwrap().to_rows(), vec![vec![T]]);
        assert_eq!(
            build_causal_mask(3).unwrap().to_rows(),
            vec![vec![T, F, F], vec![T, T, F], vec![T, T, T]]
        );
        assert!(matches!(build_causal_mask(0), Err(Error::Empty(_))));
    }

    #[test]
    fn prefix_examples() {
        for k in 1..6 {
            assert_eq!(build_prefix_mask(0, k).unwrap(), build_causal_mask(k).unwrap());
            let full = build_prefix_mask(k, k).unwrap();
            assert!(full.to_rows().iter().flatten().all(|&b| b));
        }
        assert_eq!(
            build_prefix_mask(2, 3).unwrap().to_rows(),
            vec![vec![T, T, F], vec![T, T, F], vec![T, T, T]]
        );
        assert!(matches!(build_prefix_mask(4, 3), Err(Error::Range(_))));
    }

    #[test]
    fn from_rows_rejects_empty_row() {
        assert!(matches!(
            AttentionMask::from_rows(vec![vec![T, F], vec![F, F]]),
            Err(Error::DegenerateMask { row: 1 })
        ));
    }
}
