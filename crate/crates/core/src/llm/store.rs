//! Bounded store of labelled examples, refreshed as new labels arrive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleEntry {
    pub excerpt: String,
    pub label: u8,
    pub slot_index: usize,
    pub timestamp: u64,
}

impl ExampleEntry {
    pub fn new(excerpt: impl Into<String>, label: u8, slot_index: usize, timestamp: u64) -> Self {
        Self {
            excerpt: excerpt.into(),
            label,
            slot_index,
            timestamp,
        }
    }
}

/// Entries ordered by timestamp, at most `capacity` of them.
///
/// Eviction is oldest-first but never removes the last entry of a class, so
/// a store that has seen both labels keeps one of each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleStore {
    capacity: usize,
    entries: Vec<ExampleEntry>,
}

impl ExampleStore {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity < 2 {
            return Err(Error::InvalidInput(format!(
                "example store needs room for one example per class, got capacity {capacity}"
            )));
        }
        Ok(Self {
            capacity,
            entries: Vec::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[ExampleEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Returns `false` when an entry with the same timestamp already exists.
    pub fn insert(&mut self, entry: ExampleEntry) -> bool {
        if entry.label > 1 || self.entries.iter().any(|e| e.timestamp == entry.timestamp) {
            return false;
        }
        let pos = self.entries.partition_point(|e| e.timestamp < entry.timestamp);
        self.entries.insert(pos, entry);
        while self.entries.len() > self.capacity {
            let count = |l: u8| self.entries.iter().filter(|e| e.label == l).count();
            let victim = self
                .entries
                .iter()
                .position(|e| count(e.label) > 1)
                .unwrap_or(0);
            self.entries.remove(victim);
        }
        true
    }
}

/// Appends labelled entries, evicting as needed. Labels other than 0/1 are
/// skipped.
pub fn refresh_examples(store: &ExampleStore, labeled: impl IntoIterator<Item = ExampleEntry>) -> ExampleStore {
    let mut next = store.clone();
    for e in labeled {
        next.insert(e);
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(label: u8, t: u64) -> ExampleEntry {
        ExampleEntry::new(format!("x{t}"), label, 0, t)
    }

    #[test]
    fn fifo_eviction() {
        let s = refresh_examples(&ExampleStore::new(2).unwrap(), [e(0, 1), e(1, 2), e(1, 3)]);
        let ts: Vec<u64> = s.entries().iter().map(|e| e.timestamp).collect();
        assert_eq!(ts, vec![1, 3], "t1 is the only negative so t2 goes");
        let s = refresh_examples(&ExampleStore::new(2).unwrap(), [e(0, 1), e(0, 2), e(0, 3)]);
        let ts: Vec<u64> = s.entries().iter().map(|e| e.timestamp).collect();
        assert_eq!(ts, vec![2, 3]);
    }

    #[test]
    fn class_preserving_eviction() {
        let s = refresh_examples(&ExampleStore::new(2).unwrap(), [e(1, 1), e(0, 2), e(0, 3)]);
        let got: Vec<(u8, u64)> = s.entries().iter().map(|e| (e.label, e.timestamp)).collect();
        assert_eq!(got, vec![(1, 1), (0, 3)]);
    }

    #[test]
    fn duplicate_timestamp_is_ignored() {
        let s = refresh_examples(&ExampleStore::new(3).unwrap(), [e(1, 1), e(0, 2)]);
        let again = refresh_examples(&s, [e(0, 2)]);
        assert_eq!(s, again);
    }

    proptest! {
        #[test]
        fn invariants_hold(cap in 2usize..6, items in proptest::collection::vec((0u8..2, 0u64..50), 0..40)) {
            let mut s = ExampleStore::new(cap).unwrap();
            let (mut seen0, mut seen1) = (false, false);
            for (l, t) in items {
                if s.insert(e(l, t)) {
                    seen0 |= l == 0;
                    seen1 |= l == 1;
                }
                prop_assert!(s.len() <= cap);
                prop_assert!(s.entries().windows(2).all(|w| w[0].timestamp < w[1].timestamp));
                let has = |l: u8| s.entries().iter().any(|e| e.label == l);
                prop_assert!(!seen0 || has(0));
                prop_assert!(!seen1 || has(1));
            }
        }
    }
}
