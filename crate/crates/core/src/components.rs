//! 6-connected component labeling and left/right splitting of bilateral masks.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::volume::{linear_index, neighbors6, unravel, Mask};

/// Label 6-connected foreground components. Returns per-voxel labels
/// (0 = background, 1..=n) in raster order of first voxel, and n.
pub fn label_components(mask: &Mask) -> (Vec<u32>, usize) {
    let mut labels = vec![0u32; mask.data.len()];
    let mut n = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..mask.data.len() {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        n += 1;
        labels[start] = n;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for q in neighbors6(unravel(mask.shape, i), mask.shape) {
                let j = linear_index(mask.shape, q[0], q[1], q[2]);
                if mask.data[j] && labels[j] == 0 {
                    labels[j] = n;
                    queue.push_back(j);
                }
            }
        }
    }
    (labels, n as usize)
}

fn component_centroid_x(mask: &Mask, labels: &[u32], label: u32) -> f64 {
    let (mut s, mut c) = (0.0, 0usize);
    for (i, &l) in labels.iter().enumerate() {
        if l == label {
            s += unravel(mask.shape, i)[0] as f64;
            c += 1;
        }
    }
    s / c as f64
}

/// Keep only the largest 6-connected component (ties: first in raster order).
pub fn largest_component(mask: &Mask) -> Mask {
    let (labels, n) = label_components(mask);
    if n <= 1 {
        return mask.clone();
    }
    let mut sizes = vec![0usize; n + 1];
    for &l in &labels {
        sizes[l as usize] += 1;
    }
    let best = (1..=n).max_by_key(|&l| (sizes[l], std::cmp::Reverse(l))).unwrap() as u32;
    Mask {
        shape: mask.shape,
        spacing: mask.spacing,
        data: labels.iter().map(|&l| l == best).collect(),
    }
}

/// Split a mask of at most two components into (left, right), where left
/// is the component with the smaller centroid x. A single component goes to
/// the side of the grid holding its centroid.
pub fn split_bilateral(mask: &Mask) -> Result<(Mask, Mask)> {
    let (labels, n) = label_components(mask);
    let pick = |label: u32| Mask {
        shape: mask.shape,
        spacing: mask.spacing,
        data: labels.iter().map(|&l| l == label).collect(),
    };
    let empty = Mask::empty(mask.shape, mask.spacing);
    match n {
        0 => Ok((empty.clone(), empty)),
        1 => {
            let cx = component_centroid_x(mask, &labels, 1);
            if cx < (mask.shape[0] as f64 - 1.0) / 2.0 {
                Ok((pick(1), empty))
            } else {
                Ok((empty, pick(1)))
            }
        }
        2 => {
            let c1 = component_centroid_x(mask, &labels, 1);
            let c2 = component_centroid_x(mask, &labels, 2);
            if c1 <= c2 {
                Ok((pick(1), pick(2)))
            } else {
                Ok((pick(2), pick(1)))
            }
        }
        k => Err(Error::TooManyComponents(k)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use crate::volume::{Shape, Spacing};

    fn sphere(shape: Shape, c: [f64; 3], r: f64) -> Mask {
        Mask::from_fn(shape, Spacing::default(), |x, y, z| {
            (x as f64 - c[0]).powi(2) + (y as f64 - c[1]).powi(2) + (z as f64 - c[2]).powi(2) <= r * r
        })
    }

    #[test]
    fn two_spheres_split_by_x() {
        let shape = [64, 32, 32];
        let a = sphere(shape, [10.0, 16.0, 16.0], 5.0);
        let b = sphere(shape, [50.0, 16.0, 16.0], 5.0);
        let both = a.union(&b).unwrap();
        let (l, r) = split_bilateral(&both).unwrap();
        assert_eq!(l, a);
        assert_eq!(r, b);
    }

    #[test]
    fn empty_and_single() {
        let shape = [20, 8, 8];
        let (l, r) = split_bilateral(&Mask::empty(shape, Spacing::default())).unwrap();
        assert!(l.is_empty_mask() && r.is_empty_mask());
        let s = sphere(shape, [15.0, 4.0, 4.0], 2.0);
        let (l, r) = split_bilateral(&s).unwrap();
        assert!(l.is_empty_mask());
        assert_eq!(r, s);
    }

    #[test]
    fn three_components_error() {
        let shape = [30, 5, 5];
        let m = Mask::from_fn(shape, Spacing::default(), |x, y, z| x % 10 == 0 && y == 2 && z == 2);
        assert!(matches!(split_bilateral(&m), Err(Error::TooManyComponents(3))));
    }

    /// Brute-force oracle: connectivity by repeated relaxation of labels to
    /// the minimum over 6-neighbors until a fixed point.
    fn relax_labels(mask: &Mask) -> Vec<usize> {
        let n = mask.data.len();
        let mut lab: Vec<usize> = (0..n).map(|i| if mask.data[i] { i + 1 } else { 0 }).collect();
        loop {
            let mut changed = false;
            for i in 0..n {
                if lab[i] == 0 {
                    continue;
                }
                for q in neighbors6(unravel(mask.shape, i), mask.shape) {
                    let j = linear_index(mask.shape, q[0], q[1], q[2]);
                    if lab[j] != 0 && lab[j] < lab[i] {
                        lab[i] = lab[j];
                        changed = true;
                    }
                }
            }
            if !changed {
                return lab;
            }
        }
    }

    #[test]
    fn random_pairs_match_relaxation_oracle() {
        let shape = [24, 10, 10];
        for seed in 0..40u64 {
            let mut r = CounterRng::new(seed);
            let c1 = [r.uniform(3.0, 9.0), r.uniform(3.0, 7.0), r.uniform(3.0, 7.0)];
            let c2 = [r.uniform(14.0, 21.0), r.uniform(3.0, 7.0), r.uniform(3.0, 7.0)];
            let m = sphere(shape, c1, r.uniform(1.0, 3.0))
                .union(&sphere(shape, c2, r.uniform(1.0, 3.0)))
                .unwrap();
            let oracle = relax_labels(&m);
            let (l, rr) = split_bilateral(&m).unwrap();
            // union and disjointness
            assert_eq!(l.union(&rr).unwrap(), m);
            assert_eq!(l.intersection_count(&rr).unwrap(), 0);
            // each output is exactly one oracle component
            for side in [&l, &rr] {
                let ls: std::collections::BTreeSet<usize> = side
                    .data
                    .iter()
                    .enumerate()
                    .filter(|(_, &b)| b)
                    .map(|(i, _)| oracle[i])
                    .collect();
                assert_eq!(ls.len(), 1);
                let label = *ls.iter().next().unwrap();
                assert_eq!(oracle.iter().filter(|&&o| o == label).count(), side.count());
            }
            let cl = crate::preprocess::centroid(&l).unwrap();
            let cr = crate::preprocess::centroid(&rr).unwrap();
            assert!(cl[0] < cr[0]);
        }
    }

    #[test]
    fn largest_component_keeps_biggest() {
        let shape = [30, 10, 10];
        let big = sphere(shape, [8.0, 5.0, 5.0], 3.0);
        let small = sphere(shape, [22.0, 5.0, 5.0], 1.0);
        assert_eq!(largest_component(&big.union(&small).unwrap()), big);
    }
}
