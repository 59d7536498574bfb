//! Exact rank over a prime field GF(p) for p just below 2^61.
//!
//! Entries are reduced mod p and eliminated with single-word arithmetic
//! (products go through u128). A rank computed this way equals the rational
//! rank unless p divides some critical minor; drawing p pseudo-randomly per
//! matrix makes that event vanishingly unlikely, and the SVD backend
//! cross-checks it anyway.

use crate::seeding::splitmix64;

/// Modular product via a 128-bit intermediate. Requires p < 2^63.
#[inline]
fn mul_mod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, p: u64) -> u64 {
    let mut acc = 1u64;
    base %= p;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, p);
        }
        base = mul_mod(base, base, p);
        exp >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin for u64 (the 12-base set covers all of u64).
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &q in &[2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == q {
            return true;
        }
        if n.is_multiple_of(q) {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0u32;
    while d & 1 == 0 {
        d >>= 1;
        s += 1;
    }
    'witness: for &a in &[2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// First prime at or above a seed-derived point in [2^60, 2^61).
pub fn prime_from_seed(seed: u64) -> u64 {
    let lo = 1u64 << 60;
    let span = 1u64 << 60;
    let mut candidate = lo + splitmix64(seed) % span;
    candidate |= 1;
    while !is_prime_u64(candidate) {
        candidate += 2;
    }
    candidate
}

/// Stable 64-bit fingerprint of an integer matrix, used to pick the default
/// prime deterministically per input.
pub fn fingerprint(rows: usize, cols: usize, entries: impl Iterator<Item = i64>) -> u64 {
    let mut acc = splitmix64((rows as u64) << 32 ^ cols as u64);
    for e in entries {
        acc = splitmix64(acc ^ e as u64);
    }
    acc
}

#[inline]
fn reduce(x: i64, p: u64) -> u64 {
    let r = x % p as i64;
    if r < 0 {
        (r + p as i64) as u64
    } else {
        r as u64
    }
}

/// Row-reduces `a` (row-major, `rows` x `cols`) over GF(p) and returns the
/// rank together with the row and column indices where pivots were found,
/// in pivot order.
pub fn rank_mod_p_with_pivots(
    entries: &[i64],
    rows: usize,
    cols: usize,
    p: u64,
) -> (usize, Vec<usize>, Vec<usize>) {
    let mut m: Vec<u64> = entries.iter().map(|&x| reduce(x, p)).collect();
    let mut row_of = (0..rows).collect::<Vec<_>>(); // logical row -> original index
    let mut pivot_rows = Vec::new();
    let mut pivot_cols = Vec::new();
    let mut rank = 0usize;
    for col in 0..cols {
        if rank == rows {
            break;
        }
        // find a pivot in this column at or below `rank`
        let Some(pr) = (rank..rows).find(|&r| m[row_of[r] * cols + col] != 0) else {
            continue;
        };
        row_of.swap(rank, pr);
        let prow = row_of[rank];
        let inv = pow_mod(m[prow * cols + col], p - 2, p);
        for &orow in &row_of[rank + 1..] {
            let lead = m[orow * cols + col];
            if lead == 0 {
                continue;
            }
            let factor = mul_mod(lead, inv, p);
            for c in col..cols {
                let sub = mul_mod(factor, m[prow * cols + c], p);
                let cur = m[orow * cols + c];
                m[orow * cols + c] = if cur >= sub { cur - sub } else { cur + p - sub };
            }
        }
        pivot_rows.push(prow);
        pivot_cols.push(col);
        rank += 1;
    }
    (rank, pivot_rows, pivot_cols)
}

/// Rank of an integer matrix over GF(p).
pub fn rank_mod_p(entries: &[i64], rows: usize, cols: usize, p: u64) -> usize {
    rank_mod_p_with_pivots(entries, rows, cols, p).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_primes() {
        assert!(is_prime_u64(2));
        assert!(is_prime_u64(3));
        assert!(!is_prime_u64(1));
        assert!(!is_prime_u64(561)); // Carmichael
        assert!(is_prime_u64((1 << 61) - 1)); // Mersenne
    }

    #[test]
    fn prime_from_seed_in_range() {
        for s in 0..20 {
            let p = prime_from_seed(s);
            assert!((1 << 60..(1 << 61) + (1 << 32)).contains(&p));
            assert!(is_prime_u64(p));
        }
    }

    #[test]
    fn rank_of_proportional_rows_is_one() {
        let m = [2i64, 4, 1, 2];
        assert_eq!(rank_mod_p(&m, 2, 2, prime_from_seed(0)), 1);
    }

    #[test]
    fn rank_identity() {
        let mut m = vec![0i64; 25];
        for i in 0..5 {
            m[i * 5 + i] = 1;
        }
        assert_eq!(rank_mod_p(&m, 5, 5, prime_from_seed(3)), 5);
    }

    #[test]
    fn pivots_mark_invertible_corner() {
        // rank-2 matrix with a zero leading column
        let m = [0i64, 1, 2, 0, 3, 6, 0, 4, 9];
        let (rank, prows, pcols) = rank_mod_p_with_pivots(&m, 3, 3, prime_from_seed(1));
        assert_eq!(rank, 2);
        assert_eq!(prows.len(), 2);
        // the 2x2 submatrix at (prows, pcols) must itself have rank 2
        let sub: Vec<i64> = prows
            .iter()
            .flat_map(|&r| pcols.iter().map(move |&c| m[r * 3 + c]))
            .collect();
        assert_eq!(rank_mod_p(&sub, 2, 2, prime_from_seed(1)), 2);
    }

    #[test]
    fn negative_entries_reduce_correctly() {
        let p = prime_from_seed(9);
        let m = [-1i64, 1, 1, -1];
        assert_eq!(rank_mod_p(&m, 2, 2, p), 1);
    }
}
