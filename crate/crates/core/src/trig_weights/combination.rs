use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Binomial coefficient `C(n, k)`, or `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<usize> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        acc = acc * (n as u128 - k as u128 + i) / i;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

/// Which r-subsets of `n_angles` angles generate weights: the first `count`
/// subsets of `{0..n_angles}` in lexicographic order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CombinationSpec {
    n_angles: usize,
    r: usize,
    count: usize,
}

impl CombinationSpec {
    pub fn new(n_angles: usize, r: usize, count: usize) -> Result<Self> {
        if n_angles == 0 || r == 0 || r > n_angles {
            return Err(Error::Config(format!(
                "need 1 <= r <= N, got N={n_angles}, r={r}"
            )));
        }
        let capacity = binomial(n_angles, r).unwrap_or(usize::MAX);
        if count > capacity {
            return Err(capacity_error(n_angles, r, count));
        }
        Ok(Self { n_angles, r, count })
    }

    /// Every subset: `count = C(N, r)`.
    pub fn full(n_angles: usize, r: usize) -> Result<Self> {
        let capacity = binomial(n_angles, r).ok_or_else(|| {
            Error::Capacity(format!("C({n_angles}, {r}) overflows"))
        })?;
        Self::new(n_angles, r, capacity)
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn capacity(&self) -> usize {
        binomial(self.n_angles, self.r).unwrap_or(usize::MAX)
    }

    /// The `k`-th subset in lexicographic order.
    pub fn subset(&self, k: usize) -> Result<Vec<usize>> {
        if k >= self.count {
            return Err(Error::Index(format!(
                "combination {k} outside count {}",
                self.count
            )));
        }
        Ok(unrank(self.n_angles, self.r, k))
    }

    /// Lexicographic rank of a strictly increasing subset.
    pub fn rank(&self, subset: &[usize]) -> Result<usize> {
        if subset.len() != self.r
            || subset.windows(2).any(|w| w[0] >= w[1])
            || subset.iter().any(|&i| i >= self.n_angles)
        {
            return Err(Error::Index(format!(
                "{subset:?} is not a sorted {}-subset of 0..{}",
                self.r, self.n_angles
            )));
        }
        let n = self.n_angles;
        let r = self.r;
        let mut rank = 0;
        let mut start = 0;
        for (i, &c) in subset.iter().enumerate() {
            for j in start..c {
                rank += binomial(n - j - 1, r - i - 1).unwrap_or(0);
            }
            start = c + 1;
        }
        Ok(rank)
    }

    /// All `count` subsets, flattened row-major into `count × r` indices.
    pub fn table(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.count * self.r);
        let mut current: Vec<usize> = (0..self.r).collect();
        for k in 0..self.count {
            out.extend_from_slice(&current);
            if k + 1 < self.count {
                advance(&mut current, self.n_angles);
            }
        }
        out
    }
}

pub(crate) fn capacity_error(n_angles: usize, r: usize, needed: usize) -> Error {
    let min_n = (n_angles..)
        .find(|&n| binomial(n, r).is_none_or(|c| c >= needed))
        .unwrap_or(usize::MAX);
    let min_r = (1..=n_angles).find(|&rr| binomial(n_angles, rr).is_none_or(|c| c >= needed));
    let r_hint = match min_r {
        Some(rr) => format!("or r >= {rr} at N={n_angles}"),
        None => format!("no r works at N={n_angles}"),
    };
    Error::Capacity(format!(
        "{needed} weights need C(N, r) >= {needed}, but C({n_angles}, {r}) = {}; \
         use N >= {min_n} at r={r} {r_hint}",
        binomial(n_angles, r).unwrap_or(usize::MAX)
    ))
}

/// Lexicographic unranking of an r-subset of `0..n`.
fn unrank(n: usize, r: usize, mut rank: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(r);
    let mut c = 0;
    for i in 0..r {
        loop {
            let below = binomial(n - c - 1, r - i - 1).unwrap_or(usize::MAX);
            if rank < below {
                out.push(c);
                c += 1;
                break;
            }
            rank -= below;
            c += 1;
        }
    }
    out
}

/// Steps a sorted subset to its lexicographic successor.
fn advance(current: &mut [usize], n: usize) {
    let r = current.len();
    let mut i = r;
    while i > 0 {
        i -= 1;
        if current[i] < n - r + i {
            current[i] += 1;
            for j in i + 1..r {
                current[j] = current[j - 1] + 1;
            }
            return;
        }
    }
}

/// The `k`-th r-subset of the spec's angle pool.
pub fn enumerate_combination(spec: &CombinationSpec, k: usize) -> Result<Vec<usize>> {
    spec.subset(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: recursive generation in lexicographic order.
    fn brute_force(n: usize, r: usize) -> Vec<Vec<usize>> {
        fn go(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == r {
                out.push(cur.clone());
                return;
            }
            for i in start..n {
                cur.push(i);
                go(i + 1, n, r, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        go(0, n, r, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(15, 5), Some(3003));
        assert_eq!(binomial(20, 5), Some(15504));
        assert_eq!(binomial(5, 6), Some(0));
        assert_eq!(binomial(0, 0), Some(1));
    }

    #[test]
    fn small_enumerations() {
        let spec = CombinationSpec::full(3, 2).unwrap();
        let all: Vec<_> = (0..3).map(|k| spec.subset(k).unwrap()).collect();
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
        let spec = CombinationSpec::full(4, 1).unwrap();
        assert_eq!(spec.subset(3).unwrap(), vec![3]);
        assert!(matches!(spec.subset(4), Err(Error::Index(_))));
    }

    #[test]
    fn matches_brute_force_at_n15_r5() {
        let spec = CombinationSpec::full(15, 5).unwrap();
        let brute = brute_force(15, 5);
        assert_eq!(brute.len(), 3003);
        assert_eq!(spec.subset(783).unwrap(), brute[783]);
    }

    #[test]
    fn bijection_exhaustive_up_to_16() {
        for n in 1..=16 {
            for r in 1..=n.min(5) {
                let spec = CombinationSpec::full(n, r).unwrap();
                let brute = brute_force(n, r);
                let table = spec.table();
                assert_eq!(table.len(), brute.len() * r);
                for (k, subset) in brute.iter().enumerate() {
                    assert_eq!(&table[k * r..(k + 1) * r], subset.as_slice());
                    assert_eq!(&spec.subset(k).unwrap(), subset);
                    assert_eq!(spec.rank(subset).unwrap(), k);
                }
            }
        }
        // Larger r at the top of the range, spot-checking the table.
        let spec = CombinationSpec::full(16, 8).unwrap();
        let table = spec.table();
        for k in (0..spec.count()).step_by(97) {
            assert_eq!(&table[k * 8..(k + 1) * 8], spec.subset(k).unwrap().as_slice());
        }
    }

    #[test]
    fn count_bounded_by_capacity() {
        assert!(CombinationSpec::new(15, 5, 3003).is_ok());
        let err = CombinationSpec::new(15, 5, 3004).unwrap_err();
        assert!(matches!(err, Error::Capacity(ref m) if m.contains("N >= 16")), "{err}");
        assert!(matches!(CombinationSpec::new(3, 4, 1), Err(Error::Config(_))));
    }
}
