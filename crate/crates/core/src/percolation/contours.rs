//! Enumeration of *-contours around the origin.
//!
//! A *-contour of length `N` is a closed walk through `N` distinct sites of
//! ℤ² with Chebyshev-distance-1 steps. It contains the origin when the origin
//! is off the contour and cannot reach infinity by nearest-neighbor steps
//! avoiding it. Such a contour must cross the positive horizontal axis, which
//! roots the first enumerator; the second roots each contour at its least
//! site in row-major order and tests enclosure afterwards.

use std::collections::HashSet;

use crate::error::{config, Result};

type Site = (i32, i32);

const KING: [Site; 8] = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)];

fn check_len(n: usize) -> Result<()> {
    if !(4..=9).contains(&n) {
        return config(format!("contour length must be in 4..=9, got {n}"));
    }
    Ok(())
}

fn cheb(a: Site, b: Site) -> i32 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

/// Whether the origin lies in a bounded component of the complement of
/// `sites` under nearest-neighbor connectivity.
pub fn encloses_origin(sites: &[Site]) -> bool {
    if sites.contains(&(0, 0)) {
        return false;
    }
    let bound = sites.iter().map(|s| s.0.abs().max(s.1.abs())).max().unwrap_or(0) + 1;
    let blocked: HashSet<Site> = sites.iter().copied().collect();
    let mut seen: HashSet<Site> = HashSet::from([(0, 0)]);
    let mut stack: Vec<Site> = vec![(0, 0)];
    while let Some(p) = stack.pop() {
        if p.0.abs() >= bound || p.1.abs() >= bound {
            return false;
        }
        for u in [(1, 0), (0, 1), (-1, 0), (0, -1)] {
            let q = (p.0 + u.0, p.1 + u.1);
            if !blocked.contains(&q) && seen.insert(q) {
                stack.push(q);
            }
        }
    }
    true
}

/// Counts *-contours of `n` sites containing the origin, rooted at their
/// leftmost crossing `(x, 0)`, `x ≥ 1`, of the positive axis.
pub fn count_star_contours(n: usize) -> Result<u64> {
    check_len(n)?;
    let mut total = 0u64;
    for x0 in 1..=(n as i32) {
        let start = (x0, 0);
        // sites (x, 0) with 1 ≤ x < x0 are forbidden so each contour has one root
        let allowed = |s: Site| !(s.1 == 0 && s.0 >= 1 && s.0 < x0);
        let mut path = vec![start];
        total += extend(&mut path, n, start, &allowed);
    }
    // each contour is found once per orientation
    Ok(total / 2)
}

fn extend(path: &mut Vec<Site>, n: usize, start: Site, allowed: &dyn Fn(Site) -> bool) -> u64 {
    let last = *path.last().unwrap();
    if path.len() == n {
        return u64::from(cheb(last, start) == 1 && encloses_origin(path));
    }
    let left = n - path.len();
    let mut count = 0;
    for u in KING {
        let s = (last.0 + u.0, last.1 + u.1);
        if s == (0, 0) || !allowed(s) || path.contains(&s) || cheb(s, start) > left as i32 {
            continue;
        }
        path.push(s);
        count += extend(path, n, start, allowed);
        path.pop();
    }
    count
}

/// Independent count: every closed *-walk of `n` distinct sites, rooted at
/// its least site in `(y, x)` order, kept if it encloses the origin.
pub fn count_star_contours_by_min_vertex(n: usize) -> Result<u64> {
    check_len(n)?;
    let reach = n as i32;
    let mut found = 0u64;
    for y in -reach..=0 {
        for x in -reach..=reach {
            let root = (x, y);
            let above = |s: Site| (s.1, s.0) > (root.1, root.0);
            let mut path = vec![root];
            found += walk_min_rooted(&mut path, n, root, &above);
        }
    }
    Ok(found / 2)
}

fn walk_min_rooted(path: &mut Vec<Site>, n: usize, root: Site, above: &dyn Fn(Site) -> bool) -> u64 {
    let last = *path.last().unwrap();
    if path.len() == n {
        return u64::from(cheb(last, root) == 1 && encloses_origin(path));
    }
    let left = (n - path.len()) as i32;
    let mut count = 0;
    for u in KING.iter().rev() {
        let s = (last.0 + u.0, last.1 + u.1);
        if !above(s) || path.contains(&s) || cheb(s, root) > left {
            continue;
        }
        path.push(s);
        count += walk_min_rooted(path, n, root, above);
        path.pop();
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diamond_encloses_origin() {
        assert!(encloses_origin(&[(1, 0), (0, 1), (-1, 0), (0, -1)]));
        assert!(!encloses_origin(&[(1, 0), (1, 1), (0, 1)]));
        assert!(!encloses_origin(&[(0, 0), (1, 0), (0, 1)]));
    }

    #[test]
    fn four_sites_only_the_diamond() {
        assert_eq!(count_star_contours(4).unwrap(), 1);
        assert_eq!(count_star_contours_by_min_vertex(4).unwrap(), 1);
    }

    #[test]
    fn enumerators_agree_on_small_lengths() {
        for n in 4..=6 {
            assert_eq!(count_star_contours(n).unwrap(), count_star_contours_by_min_vertex(n).unwrap(), "n={n}");
        }
    }

    #[test]
    fn out_of_range() {
        assert!(count_star_contours(3).is_err());
        assert!(count_star_contours(10).is_err());
    }
}
