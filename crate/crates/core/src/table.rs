use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A function of a positive integer, tabulated at a few keys and extended
/// as a right-continuous step function: `at(n)` is the value at the largest
/// key `<= n`, or the first value when `n` precedes every key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepTable<T> {
    entries: Vec<(usize, T)>,
}

impl<T: Clone> StepTable<T> {
    pub fn new(mut entries: Vec<(usize, T)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("step table needs at least one entry".into()));
        }
        entries.sort_by_key(|(k, _)| *k);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument("step table has duplicate keys".into()));
        }
        Ok(Self { entries })
    }

    pub fn constant(value: T) -> Self {
        Self { entries: vec![(1, value)] }
    }

    pub fn at(&self, n: usize) -> T {
        let idx = self.entries.partition_point(|(k, _)| *k <= n);
        if idx == 0 {
            self.entries[0].1.clone()
        } else {
            self.entries[idx - 1].1.clone()
        }
    }

    pub fn entries(&self) -> &[(usize, T)] {
        &self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_lookup() {
        let t = StepTable::new(vec![(4, 2usize), (1, 0), (8, 3)]).unwrap();
        assert_eq!(t.at(1), 0);
        assert_eq!(t.at(3), 0);
        assert_eq!(t.at(4), 2);
        assert_eq!(t.at(7), 2);
        assert_eq!(t.at(100), 3);
        assert_eq!(t.at(0), 0);
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        assert!(StepTable::<usize>::new(vec![]).is_err());
        assert!(StepTable::new(vec![(1, 0usize), (1, 2)]).is_err());
    }
}
