use crate::oracle::BinaryMask;

/// Offsets within Euclidean distance `radius` of the origin.
fn disk(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .filter(|(dy, dx)| dy * dy + dx * dx <= r * r)
        .collect()
}

/// Morphological closing (dilation, then erosion) with a discrete disk.
///
/// Computed as if the mask sat on an unbounded background and then cropped
/// back, so the result is extensive and idempotent up to the image border.
pub fn binary_closure(mask: &BinaryMask, radius: usize) -> BinaryMask {
    let (h, w) = mask.shape();
    let r = radius as isize;
    let (ph, pw) = (h + 2 * radius, w + 2 * radius);
    let offsets = disk(radius);

    let mut dilated = vec![false; ph * pw];
    for i in 0..h {
        for j in 0..w {
            if !mask.get(i, j) {
                continue;
            }
            let (ci, cj) = ((i + radius) as isize, (j + radius) as isize);
            for &(dy, dx) in &offsets {
                dilated[(ci + dy) as usize * pw + (cj + dx) as usize] = true;
            }
        }
    }

    let mut out = BinaryMask::empty(h, w).expect("mask shape is valid");
    for i in 0..h {
        for j in 0..w {
            let (ci, cj) = (i as isize + r, j as isize + r);
            let kept = offsets
                .iter()
                .all(|&(dy, dx)| dilated[(ci + dy) as usize * pw + (cj + dx) as usize]);
            out.set(i, j, kept);
        }
    }
    debug_assert_eq!(dilated.len(), ph * pw);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_sizes() {
        assert_eq!(disk(0).len(), 1);
        assert_eq!(disk(1).len(), 5);
        assert_eq!(disk(3).len(), 29);
    }

    #[test]
    fn full_and_empty_masks_are_fixed() {
        let full = BinaryMask::new(5, 7, vec![true; 35]).unwrap();
        assert_eq!(binary_closure(&full, 3), full);
        let empty = BinaryMask::empty(5, 7).unwrap();
        assert_eq!(binary_closure(&empty, 3), empty);
    }

    #[test]
    fn fills_narrow_gap() {
        let m = BinaryMask::from_art(&["##.##", "##.##", "##.##"]).unwrap();
        let closed = binary_closure(&m, 1);
        assert!(closed.get(1, 2));
        // the border rows see background just outside the image
        assert!(!closed.get(0, 2) && !closed.get(2, 2));
    }
}
