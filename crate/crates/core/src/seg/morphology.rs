//! Binary morphology on 2D masks.

use std::collections::VecDeque;

use super::mask::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

const N4: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
const N8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &N4,
            Connectivity::Eight => &N8,
        }
    }
}

#[inline]
fn step(r: usize, c: usize, d: (isize, isize), rows: usize, cols: usize) -> Option<(usize, usize)> {
    let nr = r as isize + d.0;
    let nc = c as isize + d.1;
    (nr >= 0 && nc >= 0 && (nr as usize) < rows && (nc as usize) < cols)
        .then_some((nr as usize, nc as usize))
}

/// Component id per pixel (0 = unset, `k + 1` = component `k`) and the
/// size of each component.
pub fn label_components(m: &BinaryMask, conn: Connectivity) -> (Vec<u32>, Vec<usize>) {
    let (rows, cols) = (m.rows, m.cols);
    let mut ids = vec![0u32; rows * cols];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..rows * cols {
        if !m.data[start] || ids[start] != 0 {
            continue;
        }
        let id = sizes.len() as u32 + 1;
        ids[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (r, c) = (i / cols, i % cols);
            for &d in conn.offsets() {
                if let Some((nr, nc)) = step(r, c, d, rows, cols) {
                    let j = nr * cols + nc;
                    if m.data[j] && ids[j] == 0 {
                        ids[j] = id;
                        queue.push_back(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (ids, sizes)
}

/// Largest connected component; empty input gives an empty mask.
pub fn largest_component(m: &BinaryMask, conn: Connectivity) -> BinaryMask {
    let (ids, sizes) = label_components(m, conn);
    let Some(best) = (0..sizes.len()).max_by_key(|&k| (sizes[k], std::cmp::Reverse(k))) else {
        return BinaryMask::new(m.rows, m.cols);
    };
    let keep = best as u32 + 1;
    BinaryMask {
        rows: m.rows,
        cols: m.cols,
        data: ids.iter().map(|&i| i == keep).collect(),
    }
}

/// Drops components with fewer than `min_pixels` pixels.
pub fn remove_small_components(m: &BinaryMask, min_pixels: usize, conn: Connectivity) -> BinaryMask {
    let (ids, sizes) = label_components(m, conn);
    BinaryMask {
        rows: m.rows,
        cols: m.cols,
        data: ids
            .iter()
            .map(|&i| i != 0 && sizes[i as usize - 1] >= min_pixels)
            .collect(),
    }
}

/// Pixels of `passable` reachable from the image border by 4-connected
/// steps through passable pixels.
pub fn flood_from_border(passable: &BinaryMask) -> BinaryMask {
    let (rows, cols) = (passable.rows, passable.cols);
    let mut seen = BinaryMask::new(rows, cols);
    let mut queue = VecDeque::new();
    let seed = |r: usize, c: usize, seen: &mut BinaryMask, q: &mut VecDeque<(usize, usize)>| {
        if passable.get(r, c) && !seen.get(r, c) {
            seen.set(r, c, true);
            q.push_back((r, c));
        }
    };
    for r in 0..rows {
        seed(r, 0, &mut seen, &mut queue);
        if cols > 0 {
            seed(r, cols - 1, &mut seen, &mut queue);
        }
    }
    for c in 0..cols {
        seed(0, c, &mut seen, &mut queue);
        if rows > 0 {
            seed(rows - 1, c, &mut seen, &mut queue);
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        for &d in &N4 {
            if let Some((nr, nc)) = step(r, c, d, rows, cols) {
                seed(nr, nc, &mut seen, &mut queue);
            }
        }
    }
    seen
}

/// Sets every background pixel not reachable from the border.
pub fn fill_holes(m: &BinaryMask) -> BinaryMask {
    let outside = BinaryMask {
        rows: m.rows,
        cols: m.cols,
        data: m.data.iter().map(|&b| !b).collect(),
    };
    let reach = flood_from_border(&outside);
    BinaryMask {
        rows: m.rows,
        cols: m.cols,
        data: reach.data.iter().map(|&b| !b).collect(),
    }
}

/// Offsets `(dr, dc)` of a disk with physical radius `radius_mm` on a grid
/// with row spacing `sy` and column spacing `sx`.
pub fn disk_offsets(radius_mm: f64, sy: f64, sx: f64) -> Vec<(isize, isize)> {
    let ry = (radius_mm / sy).floor() as isize;
    let rx = (radius_mm / sx).floor() as isize;
    let mut out = Vec::new();
    for dr in -ry..=ry {
        for dc in -rx..=rx {
            let y = dr as f64 * sy;
            let x = dc as f64 * sx;
            if y * y + x * x <= radius_mm * radius_mm + 1e-9 {
                out.push((dr, dc));
            }
        }
    }
    out
}

fn reach(offsets: &[(isize, isize)]) -> (usize, usize) {
    offsets.iter().fold((0, 0), |(a, b), &(r, c)| {
        (a.max(r.unsigned_abs()), b.max(c.unsigned_abs()))
    })
}

/// Dilation; pixels beyond the image count as unset.
pub fn dilate(m: &BinaryMask, offsets: &[(isize, isize)]) -> BinaryMask {
    let mut out = BinaryMask::new(m.rows, m.cols);
    for r in 0..m.rows {
        for c in 0..m.cols {
            if !m.get(r, c) {
                continue;
            }
            for &d in offsets {
                if let Some((nr, nc)) = step(r, c, d, m.rows, m.cols) {
                    out.set(nr, nc, true);
                }
            }
        }
    }
    out
}

/// Erosion; pixels beyond the image count as unset.
pub fn erode(m: &BinaryMask, offsets: &[(isize, isize)]) -> BinaryMask {
    BinaryMask::from_fn(m.rows, m.cols, |r, c| {
        offsets.iter().all(|&d| {
            step(r, c, (-d.0, -d.1), m.rows, m.cols).is_some_and(|(nr, nc)| m.get(nr, nc))
        })
    })
}

/// Closing computed on a padded canvas so structures near the edge are not
/// eroded away by the border.
pub fn close(m: &BinaryMask, offsets: &[(isize, isize)]) -> BinaryMask {
    let (pr, pc) = reach(offsets);
    let (rows, cols) = (m.rows + 2 * pr, m.cols + 2 * pc);
    let padded = BinaryMask::from_fn(rows, cols, |r, c| {
        r >= pr && c >= pc && r < pr + m.rows && c < pc + m.cols && m.get(r - pr, c - pc)
    });
    let closed = erode(&dilate(&padded, offsets), offsets);
    BinaryMask::from_fn(m.rows, m.cols, |r, c| closed.get(r + pr, c + pc))
}
