use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::boundary;
use super::RgbImage;
use crate::geometry::Vec2;

pub fn color_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentParams {
    pub target_region_size: usize,
    /// Color distance below which neighbors may merge.
    pub merge_threshold: f64,
    /// Douglas-Peucker tolerance for boundary chains, in pixels.
    pub simplify_tolerance: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self { target_region_size: 256, merge_threshold: 0.08, simplify_tolerance: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub area: usize,
    pub color: [f64; 3],
    /// Mean squared color deviation from `color`.
    pub variance: f64,
    /// Closed boundary loops in pixel coordinates (outer boundary and holes).
    /// The closing vertex is not repeated.
    pub loops: Vec<Vec<Vec2>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub regions: Vec<Region>,
}

impl Segmentation {
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// Builds a segmentation from an arbitrary label map. Labels are split into
    /// 4-connected components and renumbered in raster order of first pixel.
    pub fn from_labels(image: &RgbImage, labels: &[u32], simplify_tolerance: f64) -> Self {
        let (w, h) = (image.width(), image.height());
        assert_eq!(labels.len(), w * h, "label map size mismatch");
        let mut out = vec![u32::MAX; w * h];
        let mut next = 0u32;
        let mut stack = Vec::new();
        for start in 0..w * h {
            if out[start] != u32::MAX {
                continue;
            }
            out[start] = next;
            stack.push(start);
            while let Some(p) = stack.pop() {
                for q in neighbors4(p, w, h) {
                    if out[q] == u32::MAX && labels[q] == labels[start] {
                        out[q] = next;
                        stack.push(q);
                    }
                }
            }
            next += 1;
        }
        Self::finish(image, out, next as usize, simplify_tolerance)
    }

    fn finish(image: &RgbImage, labels: Vec<u32>, count: usize, tol: f64) -> Self {
        let (w, h) = (image.width(), image.height());
        let mut area = vec![0usize; count];
        let mut sum = vec![[0.0f64; 3]; count];
        for (i, &l) in labels.iter().enumerate() {
            let c = image.pixels()[i];
            area[l as usize] += 1;
            for k in 0..3 {
                sum[l as usize][k] += c[k];
            }
        }
        let color: Vec<[f64; 3]> = (0..count).map(|r| sum[r].map(|s| s / area[r] as f64)).collect();
        let mut var = vec![0.0f64; count];
        for (i, &l) in labels.iter().enumerate() {
            let d = color_distance(&image.pixels()[i], &color[l as usize]);
            var[l as usize] += d * d;
        }
        let loops = boundary::region_loops(w, h, &labels, count, tol);
        let regions = loops
            .into_iter()
            .enumerate()
            .map(|(r, loops)| Region { area: area[r], color: color[r], variance: var[r] / area[r] as f64, loops })
            .collect();
        Self { width: w, height: h, labels, regions }
    }
}

fn neighbors4(p: usize, w: usize, h: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (p % w, p / w);
    let mut n = [usize::MAX; 4];
    if x > 0 {
        n[0] = p - 1;
    }
    if x + 1 < w {
        n[1] = p + 1;
    }
    if y > 0 {
        n[2] = p - w;
    }
    if y + 1 < h {
        n[3] = p + w;
    }
    n.into_iter().filter(|&q| q != usize::MAX)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist: f64,
    a: u32,
    b: u32,
    va: u32,
    vb: u32,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist.total_cmp(&other.dist).then(self.a.cmp(&other.a)).then(self.b.cmp(&other.b))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Merger {
    parent: Vec<u32>,
    area: Vec<usize>,
    sum: Vec<[f64; 3]>,
    version: Vec<u32>,
    adj: Vec<BTreeSet<u32>>,
}

impl Merger {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn color(&self, r: u32) -> [f64; 3] {
        let a = self.area[r as usize] as f64;
        self.sum[r as usize].map(|s| s / a)
    }

    fn dist(&self, a: u32, b: u32) -> f64 {
        color_distance(&self.color(a), &self.color(b))
    }

    /// Merges `b` into `a` (both roots); the smaller index survives.
    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (keep, gone) = if a < b { (a, b) } else { (b, a) };
        self.parent[gone as usize] = keep;
        self.area[keep as usize] += self.area[gone as usize];
        for k in 0..3 {
            self.sum[keep as usize][k] += self.sum[gone as usize][k];
        }
        let moved = std::mem::take(&mut self.adj[gone as usize]);
        for n in moved {
            self.adj[n as usize].remove(&gone);
            if n != keep {
                self.adj[n as usize].insert(keep);
                self.adj[keep as usize].insert(n);
            }
        }
        self.adj[keep as usize].remove(&gone);
        self.version[keep as usize] += 1;
        self.version[gone as usize] += 1;
        keep
    }

    fn candidate(&self, a: u32, b: u32) -> Candidate {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        Candidate { dist: self.dist(a, b), a, b, va: self.version[a as usize], vb: self.version[b as usize] }
    }
}

/// Greedy region merging from a regular grid of seeds.
///
/// Each tile of side `round(sqrt(target))` is first split into 4-connected
/// color-coherent pieces, then adjacent regions are merged cheapest-first while
/// their mean colors are closer than the merge threshold and the merged area
/// stays below twice the target. Tiny leftovers are absorbed into their most
/// similar neighbor.
pub fn oversegment(image: &RgbImage, params: &SegmentParams) -> Segmentation {
    assert!(!image.is_empty(), "oversegment needs a non-empty image");
    let (w, h) = (image.width(), image.height());
    let target = params.target_region_size.max(1);
    let tile = ((target as f64).sqrt().round() as usize).max(1);
    let tau = params.merge_threshold;
    let px = image.pixels();

    // Seed components: color-coherent pieces of each grid tile.
    let mut labels = vec![u32::MAX; w * h];
    let mut count = 0u32;
    let mut stack = Vec::new();
    for start in 0..w * h {
        if labels[start] != u32::MAX {
            continue;
        }
        let tile_of = |p: usize| ((p % w) / tile, (p / w) / tile);
        let t0 = tile_of(start);
        labels[start] = count;
        stack.push(start);
        while let Some(p) = stack.pop() {
            for q in neighbors4(p, w, h) {
                if labels[q] == u32::MAX && tile_of(q) == t0 && color_distance(&px[p], &px[q]) < tau {
                    labels[q] = count;
                    stack.push(q);
                }
            }
        }
        count += 1;
    }

    let n = count as usize;
    let mut m = Merger {
        parent: (0..count).collect(),
        area: vec![0; n],
        sum: vec![[0.0; 3]; n],
        version: vec![0; n],
        adj: vec![BTreeSet::new(); n],
    };
    for (i, &l) in labels.iter().enumerate() {
        m.area[l as usize] += 1;
        for k in 0..3 {
            m.sum[l as usize][k] += px[i][k];
        }
        let (x, y) = (i % w, i / w);
        if x + 1 < w && labels[i + 1] != l {
            m.adj[l as usize].insert(labels[i + 1]);
            m.adj[labels[i + 1] as usize].insert(l);
        }
        if y + 1 < h && labels[i + w] != l {
            m.adj[l as usize].insert(labels[i + w]);
            m.adj[labels[i + w] as usize].insert(l);
        }
    }

    let mut heap = BinaryHeap::new();
    for a in 0..count {
        for &b in &m.adj[a as usize] {
            if a < b {
                let c = m.candidate(a, b);
                if c.dist < tau {
                    heap.push(Reverse(c));
                }
            }
        }
    }
    while let Some(Reverse(c)) = heap.pop() {
        if m.parent[c.a as usize] != c.a
            || m.parent[c.b as usize] != c.b
            || m.version[c.a as usize] != c.va
            || m.version[c.b as usize] != c.vb
        {
            continue;
        }
        if m.area[c.a as usize] + m.area[c.b as usize] >= 2 * target {
            continue;
        }
        let r = m.union(c.a, c.b);
        let nbrs: Vec<u32> = m.adj[r as usize].iter().copied().collect();
        for nb in nbrs {
            let cand = m.candidate(r, nb);
            if cand.dist < tau {
                heap.push(Reverse(cand));
            }
        }
    }

    // Absorb specks into the most similar neighbor.
    let min_area = (target / 16).max(4);
    loop {
        let mut specks: Vec<u32> =
            (0..count).filter(|&r| m.parent[r as usize] == r && m.area[r as usize] < min_area).collect();
        specks.sort_by_key(|&r| (m.area[r as usize], r));
        let mut changed = false;
        for s in specks {
            if m.parent[s as usize] != s || m.area[s as usize] >= min_area {
                continue;
            }
            let best = m.adj[s as usize]
                .iter()
                .map(|&nb| (m.dist(s, nb), nb))
                .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            if let Some((_, nb)) = best {
                m.union(s, nb);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    // Compact relabel in raster order of first pixel.
    let mut remap = vec![u32::MAX; n];
    let mut next = 0u32;
    for l in labels.iter_mut() {
        let root = m.find(*l);
        if remap[root as usize] == u32::MAX {
            remap[root as usize] = next;
            next += 1;
        }
        *l = remap[root as usize];
    }
    Segmentation::finish(image, labels, next as usize, params.simplify_tolerance)
}
