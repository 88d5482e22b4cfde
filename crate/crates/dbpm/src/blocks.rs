//! Block partition of the decision vector.
//!
//! The decision variable lives in `R^n` and is split into `B` contiguous
//! blocks with sizes `n_0..n_{B-1}`. Block ids are 0-based everywhere,
//! including trace output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BlockError {
    #[error("block sizes sum to {got}, expected total dimension {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("block {index} has size 0")]
    EmptyBlock { index: usize },
    #[error("block index {index} out of range for {count} blocks")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("vector length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Contiguous decomposition of `R^n` into blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    total_dim: usize,
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockPartition {
    /// Builds a partition of an `total_dim`-dimensional vector into blocks of
    /// the given sizes.
    pub fn new(total_dim: usize, sizes: Vec<usize>) -> Result<Self, BlockError> {
        if let Some(index) = sizes.iter().position(|&s| s == 0) {
            return Err(BlockError::EmptyBlock { index });
        }
        let got: usize = sizes.iter().sum();
        if got != total_dim {
            return Err(BlockError::SizeMismatch {
                expected: total_dim,
                got,
            });
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        Ok(Self {
            total_dim,
            sizes,
            offsets,
        })
    }

    /// Splits `total_dim` into `num_blocks` near-equal blocks; any remainder
    /// goes to the last block.
    pub fn equal(total_dim: usize, num_blocks: usize) -> Result<Self, BlockError> {
        if num_blocks == 0 || num_blocks > total_dim {
            return Err(BlockError::EmptyBlock {
                index: num_blocks.saturating_sub(1),
            });
        }
        let base = total_dim / num_blocks;
        let mut sizes = vec![base; num_blocks];
        *sizes.last_mut().expect("num_blocks > 0") += total_dim % num_blocks;
        Self::new(total_dim, sizes)
    }

    /// Single block covering the whole vector.
    pub fn trivial(total_dim: usize) -> Self {
        Self::new(total_dim, vec![total_dim]).expect("one full-size block is always valid")
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, block: usize) -> usize {
        self.sizes[block]
    }

    pub fn offset(&self, block: usize) -> usize {
        self.offsets[block]
    }

    /// Index range of `block` inside the full vector.
    pub fn range(&self, block: usize) -> Result<std::ops::Range<usize>, BlockError> {
        if block >= self.sizes.len() {
            return Err(BlockError::IndexOutOfRange {
                index: block,
                count: self.sizes.len(),
            });
        }
        let start = self.offsets[block];
        Ok(start..start + self.sizes[block])
    }

    /// Borrow of block `block` of `x`.
    pub fn get_block<'a>(&self, x: &'a [f64], block: usize) -> Result<&'a [f64], BlockError> {
        if x.len() != self.total_dim {
            return Err(BlockError::LengthMismatch {
                expected: self.total_dim,
                got: x.len(),
            });
        }
        Ok(&x[self.range(block)?])
    }

    /// Overwrites block `block` of `x` with `v`, leaving all other
    /// coordinates untouched.
    pub fn set_block(&self, x: &mut [f64], block: usize, v: &[f64]) -> Result<(), BlockError> {
        if x.len() != self.total_dim {
            return Err(BlockError::LengthMismatch {
                expected: self.total_dim,
                got: x.len(),
            });
        }
        let range = self.range(block)?;
        if v.len() != range.len() {
            return Err(BlockError::LengthMismatch {
                expected: range.len(),
                got: v.len(),
            });
        }
        x[range].copy_from_slice(v);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn prefix_sums() {
        let p = BlockPartition::new(4, vec![2, 2]).unwrap();
        assert_eq!(p.offsets, vec![0, 2]);
        assert_eq!(p.sizes(), &[2, 2]);
    }

    #[test]
    fn rejects_mismatched_total() {
        assert_eq!(
            BlockPartition::new(5, vec![2, 2]),
            Err(BlockError::SizeMismatch {
                expected: 5,
                got: 4
            })
        );
    }

    #[test]
    fn rejects_empty_block() {
        assert_eq!(
            BlockPartition::new(4, vec![2, 0, 2]),
            Err(BlockError::EmptyBlock { index: 1 })
        );
    }

    #[test]
    fn five_equal_blocks_of_ten() {
        let p = BlockPartition::new(50, vec![10; 5]).unwrap();
        assert_eq!(p.num_blocks(), 5);
        assert_eq!(p.total_dim(), 50);
        let q = BlockPartition::equal(50, 5).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn equal_split_puts_remainder_last() {
        let p = BlockPartition::equal(51, 25).unwrap();
        assert_eq!(p.size(24), 3);
        assert_eq!(p.sizes()[..24], vec![2; 24]);
    }

    #[test]
    fn get_block_slices() {
        let p = BlockPartition::new(4, vec![2, 2]).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(p.get_block(&x, 1).unwrap(), &[3.0, 4.0]);

        let single = BlockPartition::trivial(1);
        assert_eq!(single.get_block(&[7.0], 0).unwrap(), &[7.0]);

        assert!(matches!(
            p.get_block(&x, 2),
            Err(BlockError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            p.get_block(&x[..3], 0),
            Err(BlockError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn set_block_replaces_only_target() {
        let p = BlockPartition::new(4, vec![2, 2]).unwrap();
        let mut x = [1.0, 2.0, 3.0, 4.0];
        p.set_block(&mut x, 0, &[9.0, 9.0]).unwrap();
        assert_eq!(x, [9.0, 9.0, 3.0, 4.0]);

        assert!(matches!(
            p.set_block(&mut x, 0, &[1.0]),
            Err(BlockError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn set_of_own_get_is_identity() {
        let p = BlockPartition::new(4, vec![1, 3]).unwrap();
        let mut x = [1.0, 2.0, 3.0, 4.0];
        let block = p.get_block(&x, 1).unwrap().to_vec();
        p.set_block(&mut x, 1, &block).unwrap();
        assert_eq!(x, [1.0, 2.0, 3.0, 4.0]);
    }

    fn arb_partition() -> impl Strategy<Value = BlockPartition> {
        proptest::collection::vec(1usize..5, 1..6).prop_map(|sizes| {
            let n = sizes.iter().sum();
            BlockPartition::new(n, sizes).unwrap()
        })
    }

    proptest! {
        // Round trip against a naive coordinate copy.
        #[test]
        fn get_set_round_trip(p in arb_partition(), seed in any::<u64>()) {
            let n = p.total_dim();
            let mut rng = crate::rng::stream(seed, 90, 0);
            let x: Vec<f64> = (0..n).map(|_| crate::rng::standard_normal(&mut rng)).collect();
            for block in 0..p.num_blocks() {
                let v: Vec<f64> = (0..p.size(block)).map(|_| crate::rng::standard_normal(&mut rng)).collect();
                let mut updated = x.clone();
                p.set_block(&mut updated, block, &v).unwrap();
                // naive expectation
                let mut expected = x.clone();
                for (k, &vi) in v.iter().enumerate() {
                    expected[p.offset(block) + k] = vi;
                }
                prop_assert_eq!(&updated, &expected);
                prop_assert_eq!(p.get_block(&updated, block).unwrap(), &v[..]);
            }
        }

        // Writing every block of x onto a zero vector reconstructs x, and the
        // concatenation of all blocks equals x.
        #[test]
        fn blocks_reassemble(p in arb_partition(), seed in any::<u64>()) {
            let n = p.total_dim();
            let mut rng = crate::rng::stream(seed, 91, 0);
            let x: Vec<f64> = (0..n).map(|_| crate::rng::standard_normal(&mut rng)).collect();
            let mut rebuilt = vec![0.0; n];
            let mut concat = Vec::new();
            for block in 0..p.num_blocks() {
                let v = p.get_block(&x, block).unwrap();
                concat.extend_from_slice(v);
                p.set_block(&mut rebuilt, block, v).unwrap();
            }
            prop_assert_eq!(&rebuilt, &x);
            prop_assert_eq!(&concat, &x);
        }
    }
}
