//! Deterministic pairwise (cascade) summation.
//!
//! Values are combined in a binary tree fixed by their order of arrival, so a given
//! sequence always yields the same rounding. Partial sums of fixed-size chunks can be
//! merged in chunk order with the same guarantee.

use std::ops::Add;

#[derive(Clone, Debug, Default)]
pub struct PairwiseSum<T> {
    stack: Vec<(u32, T)>,
    count: u64,
}

impl<T: Copy + Add<Output = T> + Default> PairwiseSum<T> {
    pub fn new() -> Self {
        Self {
            stack: Vec::new(),
            count: 0,
        }
    }

    pub fn push(&mut self, x: T) {
        self.push_block(x, 0, 1);
    }

    fn push_block(&mut self, x: T, level: u32, count: u64) {
        self.count += count;
        let mut level = level;
        let mut value = x;
        while let Some(&(l, top)) = self.stack.last() {
            if l != level {
                break;
            }
            self.stack.pop();
            value = top + value;
            level += 1;
        }
        self.stack.push((level, value));
    }

    /// Appends the total of `other` as a single block at the tree level of its size.
    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        let level = other.count.next_power_of_two().trailing_zeros();
        self.push_block(other.total(), level, other.count);
    }

    pub fn total(&self) -> T {
        let mut it = self.stack.iter().rev();
        match it.next() {
            None => T::default(),
            Some(&(_, first)) => it.fold(first, |acc, &(_, v)| v + acc),
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}
