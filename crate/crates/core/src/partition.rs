//! Helpers for comparing hard partitions.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

/// Relabels so that labels appear as 0, 1, 2, ... in order of first use.
pub fn canonicalize(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

pub fn num_blocks(labels: &[usize]) -> usize {
    canonicalize(labels).iter().max().map_or(0, |m| m + 1)
}

fn choose2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Hubert-Arabie adjusted Rand index. Returns 1 when both partitions are
/// trivial in the same way (all singletons or one block) since the index is
/// otherwise 0/0.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "partitions must cover the same items");
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let (a, b) = (canonicalize(a), canonicalize(b));
    let mut table: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut rows: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cols: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(&b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sb: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sa * sb / choose2(n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return if a == b { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn first_occurrence_labels() {
        assert_eq!(canonicalize(&[5, 5, 2, 9, 2]), [0, 0, 1, 2, 1]);
        assert_eq!(num_blocks(&[5, 5, 2, 9, 2]), 3);
    }

    // Two-by-two contingency worked by hand: a = {0,1,2}{3,4,5}, b moves item 2.
    // index = C(2,2)+C(1,2)+C(3,2) = 1 + 0 + 3 = 4, sa = 6, sb = C(2,2)+C(4,2) = 7,
    // expected = 42/15 = 2.8, max = 6.5, ARI = 1.2/3.7.
    #[test]
    fn hand_computed_value() {
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 1, 1, 1];
        assert!((adjusted_rand_index(&a, &b) - 1.2 / 3.7).abs() < 1e-12);
    }

    #[test]
    fn identical_up_to_relabelling() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 2], &[7, 7, 3, 1]), 1.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[4, 4, 4]), 1.0);
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in prop::collection::vec(0usize..4, 2..12), seed in 0usize..50) {
            let b: Vec<usize> = a.iter().enumerate().map(|(i, x)| (x + i * seed) % 3).collect();
            let ab = adjusted_rand_index(&a, &b);
            prop_assert!((ab - adjusted_rand_index(&b, &a)).abs() < 1e-12);
            prop_assert!(ab <= 1.0 + 1e-12);
            prop_assert!((adjusted_rand_index(&a, &a) - 1.0).abs() < 1e-12);
        }
    }
}
