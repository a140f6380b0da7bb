//! Anonymous walk patterns.
//!
//! A walk is re-encoded by first-visit order: position `t` holds the number of
//! distinct nodes seen up to and including the first occurrence of `w[t]`.
//! Two walks over different nodes share a pattern when they trace the same
//! shape.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Longest walk for which [`enumerate_patterns`] will run.
pub const MAX_ENUMERATION_LENGTH: usize = 10;

/// Encodes `walk` as its anonymous pattern.
pub fn anonymize<T: PartialEq>(walk: &[T]) -> Vec<u8> {
    let mut out = Vec::with_capacity(walk.len());
    anonymize_into(walk, &mut out);
    out
}

/// Like [`anonymize`] but reuses `out`.
pub fn anonymize_into<T: PartialEq>(walk: &[T], out: &mut Vec<u8>) {
    out.clear();
    let mut first_seen: Vec<&T> = Vec::with_capacity(walk.len());
    for x in walk {
        let idx = match first_seen.iter().position(|s| *s == x) {
            Some(i) => i + 1,
            None => {
                first_seen.push(x);
                first_seen.len()
            }
        };
        out.push(u8::try_from(idx).expect("walks longer than 255 nodes are not supported"));
    }
}

/// Whether `steps` is a valid pattern of a walk on a simple graph: starts at
/// 1, first-visit indices are dense, and no two consecutive steps repeat.
pub fn is_valid_pattern(steps: &[u8]) -> bool {
    let mut max = 0u8;
    for (t, &s) in steps.iter().enumerate() {
        if s == 0 || s > max + 1 || (t > 0 && steps[t - 1] == s) {
            return false;
        }
        max = max.max(s);
    }
    !steps.is_empty()
}

/// All patterns of length `l`, lexicographically sorted.
pub fn enumerate_patterns(l: usize) -> Result<Vec<Vec<u8>>> {
    if l == 0 || l > MAX_ENUMERATION_LENGTH {
        return Err(Error::invalid(format!(
            "pattern enumeration supports 1 <= l <= {MAX_ENUMERATION_LENGTH}, got {l}"
        )));
    }
    let mut out = Vec::new();
    let mut prefix = vec![1u8];
    extend(&mut prefix, 1, l, &mut out);
    Ok(out)
}

fn extend(prefix: &mut Vec<u8>, max: u8, l: usize, out: &mut Vec<Vec<u8>>) {
    if prefix.len() == l {
        out.push(prefix.clone());
        return;
    }
    let last = *prefix.last().unwrap();
    for next in 1..=max + 1 {
        if next == last {
            continue;
        }
        prefix.push(next);
        extend(prefix, max.max(next), l, out);
        prefix.pop();
    }
}

/// Number of leading walk positions treated as neighbors:
/// `floor(2l / distinct_nodes)`, capped at `l`.
pub fn receptive_radius(steps: &[u8]) -> usize {
    let l = steps.len();
    let distinct = steps.iter().copied().max().unwrap_or(1).max(1) as usize;
    (2 * l / distinct).min(l)
}

/// An observed pattern with its registry id and cached radius.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnonPattern {
    pub steps: Vec<u8>,
    pub id: u32,
    pub receptive_radius: usize,
}

/// Bidirectional map between patterns and dense ids, assigned in first-seen
/// order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatternRegistry {
    ids: HashMap<Vec<u8>, u32>,
    patterns: Vec<AnonPattern>,
}

impl PatternRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, steps: &[u8]) -> u32 {
        if let Some(&id) = self.ids.get(steps) {
            return id;
        }
        let id = self.patterns.len() as u32;
        self.ids.insert(steps.to_vec(), id);
        self.patterns.push(AnonPattern {
            steps: steps.to_vec(),
            id,
            receptive_radius: receptive_radius(steps),
        });
        id
    }

    pub fn get(&self, steps: &[u8]) -> Option<u32> {
        self.ids.get(steps).copied()
    }

    pub fn pattern(&self, id: u32) -> &AnonPattern {
        &self.patterns[id as usize]
    }

    pub fn patterns(&self) -> &[AnonPattern] {
        &self.patterns
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_examples() {
        assert_eq!(anonymize(&["v1", "v2", "v3", "v4", "v2"]), vec![1, 2, 3, 4, 2]);
        assert_eq!(anonymize(&["v2", "v1", "v3", "v4", "v1"]), vec![1, 2, 3, 4, 2]);
        assert_eq!(anonymize(&['x', 'y', 'x', 'y']), vec![1, 2, 1, 2]);
    }

    #[test]
    fn first_patterns_of_length_four() {
        let p = enumerate_patterns(4).unwrap();
        assert_eq!(p[0], vec![1, 2, 1, 2]);
        assert_eq!(p[1], vec![1, 2, 1, 3]);
        assert_eq!(p[2], vec![1, 2, 3, 1]);
        assert!(p.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn length_two_has_one_pattern() {
        assert_eq!(enumerate_patterns(2).unwrap(), vec![vec![1, 2]]);
        assert_eq!(enumerate_patterns(1).unwrap(), vec![vec![1]]);
    }

    /// Brute force over `{1..l}^l`, keeping valid sequences.
    fn brute_force(l: usize) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        let total = l.pow(l as u32);
        for mut code in 0..total {
            let mut seq = Vec::with_capacity(l);
            for _ in 0..l {
                seq.push((code % l) as u8 + 1);
                code /= l;
            }
            seq.reverse();
            if is_valid_pattern(&seq) {
                out.push(seq);
            }
        }
        out
    }

    #[test]
    fn enumeration_matches_brute_force() {
        // counts: 1, 1, 2, 5, 15, 52, 203 (l=1..7)
        let counts: Vec<usize> = (1..=7).map(|l| brute_force(l).len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 5, 15, 52, 203]);
        for l in 1..=7 {
            assert_eq!(enumerate_patterns(l).unwrap(), brute_force(l), "l = {l}");
        }
    }

    #[test]
    fn enumeration_guard() {
        assert!(enumerate_patterns(0).is_err());
        assert!(enumerate_patterns(11).is_err());
        assert_eq!(enumerate_patterns(10).unwrap().len(), 21147);
    }

    #[test]
    fn radius_examples() {
        assert_eq!(receptive_radius(&[1, 2, 3, 4, 5, 6, 7, 8]), 2);
        assert_eq!(receptive_radius(&[1, 2, 1, 2, 1, 2, 1, 2]), 8);
        assert_eq!(receptive_radius(&[1, 2, 3, 1, 2, 3, 1, 2]), 5);
    }

    #[test]
    fn radius_range_over_all_patterns() {
        for l in 2..=8 {
            for p in enumerate_patterns(l).unwrap() {
                let r = receptive_radius(&p);
                assert!((2..=l).contains(&r), "{p:?} -> {r}");
            }
        }
    }

    #[test]
    fn registry_is_first_seen_and_stable() {
        let mut reg = PatternRegistry::new();
        assert_eq!(reg.register(&[1, 2, 1]), 0);
        assert_eq!(reg.register(&[1, 2, 3]), 1);
        assert_eq!(reg.register(&[1, 2, 1]), 0);
        assert_eq!(reg.get(&[1, 2, 3]), Some(1));
        assert_eq!(reg.get(&[1, 2, 2]), None);
        assert_eq!(reg.pattern(1).steps, vec![1, 2, 3]);
        assert_eq!(reg.pattern(0).receptive_radius, 3);
        assert_eq!(reg.len(), 2);
    }

    proptest! {
        #[test]
        fn relabeling_invariance(
            walk in prop::collection::vec(0u32..6, 1..12),
            perm_seed in any::<u64>(),
        ) {
            let mut perm: Vec<u32> = (0..6).collect();
            let mut s = perm_seed;
            for i in (1..perm.len()).rev() {
                s = crate::seed::splitmix64(s);
                perm.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let relabeled: Vec<u32> = walk.iter().map(|&x| perm[x as usize]).collect();
            prop_assert_eq!(anonymize(&walk), anonymize(&relabeled));
        }

        #[test]
        fn anonymized_walks_are_dense(walk in prop::collection::vec(0u8..5, 1..10)) {
            let steps = anonymize(&walk);
            prop_assert_eq!(steps[0], 1);
            let mut max = 0;
            for &s in &steps {
                prop_assert!(s <= max + 1);
                max = max.max(s);
            }
        }
    }
}
