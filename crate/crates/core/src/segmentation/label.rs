//! Connected-component labeling (two-pass, union-find).

use crate::imaging::Rect;

use super::BitMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Component labels, 0 for background, 1..=count in raster first-touch order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Component {
    pub label: u32,
    pub area: usize,
    pub bbox: Rect,
}

impl LabelMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Area and bounding box of each component, indexed by `label - 1`.
    pub fn components(&self) -> Vec<Component> {
        let mut acc: Vec<(usize, usize, usize, usize, usize)> =
            vec![(0, usize::MAX, usize::MAX, 0, 0); self.count as usize];
        for y in 0..self.height {
            for x in 0..self.width {
                let l = self.labels[y * self.width + x];
                if l > 0 {
                    let a = &mut acc[l as usize - 1];
                    a.0 += 1;
                    a.1 = a.1.min(x);
                    a.2 = a.2.min(y);
                    a.3 = a.3.max(x);
                    a.4 = a.4.max(y);
                }
            }
        }
        acc.into_iter()
            .enumerate()
            .map(|(i, (area, x0, y0, x1, y1))| Component {
                label: i as u32 + 1,
                area,
                bbox: Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
            })
            .collect()
    }

    /// Foreground wherever `keep(label)` holds.
    pub fn to_mask(&self, mut keep: impl FnMut(u32) -> bool) -> BitMask {
        let mut flags = vec![false; self.count as usize + 1];
        for (l, f) in flags.iter_mut().enumerate().skip(1) {
            *f = keep(l as u32);
        }
        BitMask::from_bits(
            self.width,
            self.height,
            self.labels.iter().map(|&l| flags[l as usize]).collect(),
        )
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize];
        x = parent[x as usize];
    }
    x
}

fn union(parent: &mut [u32], a: u32, b: u32) -> u32 {
    let (ra, rb) = (find(parent, a), find(parent, b));
    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
    parent[hi as usize] = lo;
    lo
}

pub fn label_with(m: &BitMask, conn: Connectivity) -> LabelMap {
    let (w, h) = m.dimensions();
    let bits = m.bits();
    let mut prov = vec![0u32; w * h];
    let mut parent: Vec<u32> = vec![0];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !bits[i] {
                continue;
            }
            let mut neighbors = [0u32; 4];
            let mut k = 0;
            if x > 0 && bits[i - 1] {
                neighbors[k] = prov[i - 1];
                k += 1;
            }
            if y > 0 {
                let up = i - w;
                if bits[up] {
                    neighbors[k] = prov[up];
                    k += 1;
                }
                if conn == Connectivity::Eight {
                    if x > 0 && bits[up - 1] {
                        neighbors[k] = prov[up - 1];
                        k += 1;
                    }
                    if x + 1 < w && bits[up + 1] {
                        neighbors[k] = prov[up + 1];
                        k += 1;
                    }
                }
            }
            prov[i] = if k == 0 {
                let l = parent.len() as u32;
                parent.push(l);
                l
            } else {
                let mut root = neighbors[0];
                for &n in &neighbors[1..k] {
                    root = union(&mut parent, root, n);
                }
                find(&mut parent, root)
            };
        }
    }
    // Final labels in order of first raster appearance.
    let mut remap = vec![0u32; parent.len()];
    let mut count = 0;
    let mut labels = vec![0u32; w * h];
    for i in 0..w * h {
        if prov[i] == 0 {
            continue;
        }
        let root = find(&mut parent, prov[i]) as usize;
        if remap[root] == 0 {
            count += 1;
            remap[root] = count;
        }
        labels[i] = remap[root];
    }
    LabelMap {
        width: w,
        height: h,
        labels,
        count,
    }
}

/// 8-connected foreground components.
pub fn label_components(m: &BitMask) -> LabelMap {
    label_with(m, Connectivity::Eight)
}
