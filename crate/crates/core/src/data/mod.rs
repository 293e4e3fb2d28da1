//! Dataset ingestion, dequantization, whitening, and synthetic corpora.

pub mod dequantize;
pub mod idx;
pub mod matrix_io;
pub mod toy2d;
pub mod whitening;

pub use dequantize::{dequantize, DequantizeTarget};
pub use idx::{load_idx_images, load_idx_labels, load_mnist_idx, write_idx_images};
pub use matrix_io::{load_matrix, load_matrix_auto, load_matrix_csv, save_matrix, save_matrix_csv};
pub use toy2d::{make_toy2d, toy2d_log_density, Toy2dKind};
pub use whitening::{
    apply_whitening, approx_whitening_fit, invert_whitening, zca_fit, RmsPropSettings,
    WhiteningKind, WhiteningRecord,
};

use std::ops::Range;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Contiguous, disjoint, covering row ranges: train then validation then test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Range<usize>,
    pub valid: Range<usize>,
    pub test: Range<usize>,
}

impl Splits {
    pub fn new(n: usize, valid_count: usize, test_count: usize) -> Result<Self> {
        if valid_count + test_count > n {
            return Err(Error::Config(format!(
                "splits exceed dataset size: {n} rows, {valid_count} validation, {test_count} test"
            )));
        }
        let train_end = n - valid_count - test_count;
        Ok(Self {
            train: 0..train_end,
            valid: train_end..train_end + valid_count,
            test: train_end + valid_count..n,
        })
    }

    pub fn total(&self) -> usize {
        self.test.end
    }
}

/// A dequantized (and possibly whitened) example matrix with split bookkeeping.
///
/// `examples` always holds the representation the model consumes: if
/// `whitening` is set, rows are whitened and `domain` still refers to the
/// original input interval.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub examples: Tensor,
    pub splits: Splits,
    pub domain: (f64, f64),
    pub whitening: Option<WhiteningRecord>,
}

impl Dataset {
    /// Build from input-space examples, checking that every value lies inside
    /// the domain interval.
    pub fn new(examples: Tensor, splits: Splits, domain: (f64, f64)) -> Result<Self> {
        if splits.total() != examples.rows() {
            return Err(Error::dimension(format!(
                "splits cover {} rows, examples have {}",
                splits.total(),
                examples.rows()
            )));
        }
        if domain.0 >= domain.1 {
            return Err(Error::Config(format!(
                "empty domain interval [{}, {}]",
                domain.0, domain.1
            )));
        }
        if let Some(v) = examples
            .data()
            .iter()
            .find(|v| !v.is_finite() || **v < domain.0 || **v > domain.1)
        {
            return Err(Error::Domain(format!(
                "value {v} outside domain interval [{}, {}]",
                domain.0, domain.1
            )));
        }
        Ok(Self {
            examples,
            splits,
            domain,
            whitening: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.examples.cols()
    }

    pub fn len(&self) -> usize {
        self.examples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.rows() == 0
    }

    /// Fit the requested whitening on the train split and transform all rows.
    pub fn with_whitening(mut self, record: WhiteningRecord) -> Result<Self> {
        self.examples = apply_whitening(&record, &self.examples)?;
        self.whitening = Some(record);
        Ok(self)
    }

    pub fn train_rows(&self) -> Tensor {
        self.examples.slice_rows(self.splits.train.clone())
    }

    pub fn valid_rows(&self) -> Tensor {
        self.examples.slice_rows(self.splits.valid.clone())
    }

    pub fn test_rows(&self) -> Tensor {
        self.examples.slice_rows(self.splits.test.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_partition_the_rows() {
        let s = Splits::new(10, 2, 3).unwrap();
        assert_eq!(s.train, 0..5);
        assert_eq!(s.valid, 5..7);
        assert_eq!(s.test, 7..10);
        assert!(Splits::new(4, 3, 2).is_err());
    }

    #[test]
    fn dataset_rejects_values_outside_domain() {
        let t = Tensor::new(2, 2, vec![0.1, 0.2, 0.3, 1.5]).unwrap();
        let s = Splits::new(2, 0, 0).unwrap();
        assert!(matches!(
            Dataset::new(t, s, (0.0, 1.0)),
            Err(Error::Domain(_))
        ));
    }
}
