//! Region boundaries on the pixel-corner lattice.
//!
//! Boundaries are split into chains between junctions (lattice points where
//! three or more boundary edges meet, plus the image corners). Each chain is
//! simplified independently with fixed endpoints, so neighboring regions share
//! exactly the same polyline. Simplified chains that would touch or cross
//! another chain fall back to their exact staircase.

use std::collections::HashMap;

use crate::geometry::Vec2;

const NONE: u32 = u32::MAX;
const GRID: i64 = 16;

type P = (i64, i64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dir {
    E,
    S,
    W,
    N,
}

impl Dir {
    fn step(self) -> P {
        match self {
            Dir::E => (1, 0),
            Dir::S => (0, 1),
            Dir::W => (-1, 0),
            Dir::N => (0, -1),
        }
    }
}

struct Lattice<'a> {
    w: i64,
    h: i64,
    labels: &'a [u32],
}

impl Lattice<'_> {
    fn lab(&self, x: i64, y: i64) -> u32 {
        if x < 0 || y < 0 || x >= self.w || y >= self.h {
            NONE
        } else {
            self.labels[(y * self.w + x) as usize]
        }
    }

    fn point_id(&self, p: P) -> usize {
        (p.1 * (self.w + 1) + p.0) as usize
    }

    fn num_points(&self) -> usize {
        ((self.w + 1) * (self.h + 1)) as usize
    }

    /// Edge id and (left, right) labels of the unit edge leaving `p` along `d`,
    /// if that edge exists and separates two labels.
    fn edge(&self, p: P, d: Dir) -> Option<(usize, u32, u32)> {
        let (i, j) = p;
        let hn = (self.w * (self.h + 1)) as usize;
        let (id, left, right) = match d {
            Dir::E if i < self.w => ((j * self.w + i) as usize, self.lab(i, j), self.lab(i, j - 1)),
            Dir::W if i > 0 => ((j * self.w + i - 1) as usize, self.lab(i - 1, j - 1), self.lab(i - 1, j)),
            Dir::S if j < self.h => (hn + (j * (self.w + 1) + i) as usize, self.lab(i - 1, j), self.lab(i, j)),
            Dir::N if j > 0 => (hn + ((j - 1) * (self.w + 1) + i) as usize, self.lab(i, j - 1), self.lab(i - 1, j - 1)),
            _ => return None,
        };
        (left != right).then_some((id, left, right))
    }

    fn num_edges(&self) -> usize {
        (self.w * (self.h + 1) + (self.w + 1) * self.h) as usize
    }

    fn degree(&self, p: P) -> usize {
        [Dir::E, Dir::S, Dir::W, Dir::N].iter().filter(|&&d| self.edge(p, d).is_some()).count()
    }
}

#[derive(Debug, Clone)]
struct Chain {
    /// Exact corner points of the staircase (endpoints included).
    exact: Vec<P>,
    points: Vec<P>,
    left: u32,
    right: u32,
}

fn trace_chains(lat: &Lattice) -> Vec<Chain> {
    let np = lat.num_points();
    let mut junction = vec![false; np];
    for j in 0..=lat.h {
        for i in 0..=lat.w {
            let corner = (i == 0 || i == lat.w) && (j == 0 || j == lat.h);
            junction[lat.point_id((i, j))] = corner || lat.degree((i, j)) >= 3;
        }
    }
    let mut visited = vec![false; lat.num_edges()];
    let mut chains = Vec::new();

    let walk = |start: P, dir: Dir, visited: &mut Vec<bool>, junction: &[bool]| -> Chain {
        let (_, left, right) = lat.edge(start, dir).expect("walk starts on a boundary edge");
        let mut pts = vec![start];
        let mut p = start;
        let mut d = dir;
        loop {
            let (id, _, _) = lat.edge(p, d).expect("boundary edge");
            visited[id] = true;
            let s = d.step();
            p = (p.0 + s.0, p.1 + s.1);
            pts.push(p);
            if junction[lat.point_id(p)] || p == start {
                break;
            }
            let next = [Dir::E, Dir::S, Dir::W, Dir::N]
                .into_iter()
                .find(|&nd| lat.edge(p, nd).is_some_and(|(id, _, _)| !visited[id]));
            match next {
                Some(nd) => d = nd,
                None => break,
            }
        }
        Chain { exact: corners_only(&pts), points: Vec::new(), left, right }
    };

    for j in 0..=lat.h {
        for i in 0..=lat.w {
            if !junction[lat.point_id((i, j))] {
                continue;
            }
            for d in [Dir::E, Dir::S, Dir::W, Dir::N] {
                if let Some((id, _, _)) = lat.edge((i, j), d) {
                    if !visited[id] {
                        chains.push(walk((i, j), d, &mut visited, &junction));
                    }
                }
            }
        }
    }
    // Remaining boundaries are closed loops without junctions; each starts at
    // its first lattice point in raster order.
    for j in 0..=lat.h {
        for i in 0..=lat.w {
            for d in [Dir::E, Dir::S, Dir::W, Dir::N] {
                if let Some((id, _, _)) = lat.edge((i, j), d) {
                    if !visited[id] {
                        chains.push(walk((i, j), d, &mut visited, &junction));
                    }
                }
            }
        }
    }
    chains
}

fn corners_only(pts: &[P]) -> Vec<P> {
    let mut out = vec![pts[0]];
    for k in 1..pts.len() - 1 {
        let a = (pts[k].0 - pts[k - 1].0, pts[k].1 - pts[k - 1].1);
        let b = (pts[k + 1].0 - pts[k].0, pts[k + 1].1 - pts[k].1);
        if a != b {
            out.push(pts[k]);
        }
    }
    out.push(*pts.last().unwrap());
    out
}

fn point_segment_distance(p: P, a: P, b: P) -> f64 {
    let (px, py) = (p.0 as f64, p.1 as f64);
    let (ax, ay) = (a.0 as f64, a.1 as f64);
    let (dx, dy) = ((b.0 - a.0) as f64, (b.1 - a.1) as f64);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0) };
    ((px - ax - t * dx).powi(2) + (py - ay - t * dy).powi(2)).sqrt()
}

fn douglas_peucker(pts: &[P], tol: f64) -> Vec<P> {
    let n = pts.len();
    if n <= 2 {
        return pts.to_vec();
    }
    let mut keep = vec![false; n];
    keep[0] = true;
    keep[n - 1] = true;
    let mut stack = vec![(0usize, n - 1)];
    while let Some((a, b)) = stack.pop() {
        let mut best = (0.0, 0usize);
        for k in a + 1..b {
            let d = point_segment_distance(pts[k], pts[a], pts[b]);
            if d > best.0 {
                best = (d, k);
            }
        }
        if best.0 > tol {
            keep[best.1] = true;
            stack.push((a, best.1));
            stack.push((best.1, b));
        }
    }
    pts.iter().zip(&keep).filter(|(_, &k)| k).map(|(p, _)| *p).collect()
}

fn simplify_chain(exact: &[P], tol: f64) -> Vec<P> {
    let closed = exact.first() == exact.last();
    if !closed {
        return douglas_peucker(exact, tol);
    }
    let p0 = exact[0];
    let far = (1..exact.len() - 1)
        .max_by(|&a, &b| {
            let da = (exact[a].0 - p0.0).pow(2) + (exact[a].1 - p0.1).pow(2);
            let db = (exact[b].0 - p0.0).pow(2) + (exact[b].1 - p0.1).pow(2);
            da.cmp(&db).then(b.cmp(&a))
        })
        .unwrap_or(0);
    let mut out = douglas_peucker(&exact[..=far], tol);
    out.extend_from_slice(&douglas_peucker(&exact[far..], tol)[1..]);
    // A closed chain needs at least three distinct vertices.
    if out.len() < 4 {
        exact.to_vec()
    } else {
        out
    }
}

fn orient(a: P, b: P, c: P) -> i64 {
    ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).signum()
}

fn on_segment(a: P, b: P, p: P) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

fn segments_touch(a: P, b: P, c: P, d: P) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if o1 * o2 < 0 && o3 * o4 < 0 {
        return true;
    }
    (o1 == 0 && on_segment(a, b, c))
        || (o2 == 0 && on_segment(a, b, d))
        || (o3 == 0 && on_segment(c, d, a))
        || (o4 == 0 && on_segment(c, d, b))
}

/// Two segments are compatible when they are disjoint, or meet only at one
/// shared endpoint without overlapping.
fn compatible(a: P, b: P, c: P, d: P) -> bool {
    if !segments_touch(a, b, c, d) {
        return true;
    }
    let shared = [(a, b, c, d), (a, b, d, c), (b, a, c, d), (b, a, d, c)].into_iter().find(|(p, _, q, _)| p == q);
    let Some((p, s_other, _, t_other)) = shared else {
        return false;
    };
    let collinear = orient(a, b, c) == 0 && orient(a, b, d) == 0;
    if !collinear {
        return true;
    }
    let dot = (s_other.0 - p.0) * (t_other.0 - p.0) + (s_other.1 - p.1) * (t_other.1 - p.1);
    dot < 0
}

/// Returns the chains involved in an incompatible segment pair.
fn find_conflicts(chains: &[Chain]) -> Vec<usize> {
    let mut cells: HashMap<(i64, i64), Vec<(usize, usize)>> = HashMap::new();
    for (ci, c) in chains.iter().enumerate() {
        for s in 0..c.points.len() - 1 {
            let (a, b) = (c.points[s], c.points[s + 1]);
            for gx in a.0.min(b.0).div_euclid(GRID)..=a.0.max(b.0).div_euclid(GRID) {
                for gy in a.1.min(b.1).div_euclid(GRID)..=a.1.max(b.1).div_euclid(GRID) {
                    cells.entry((gx, gy)).or_default().push((ci, s));
                }
            }
        }
    }
    let mut bad = vec![false; chains.len()];
    for segs in cells.values() {
        for x in 0..segs.len() {
            for y in x + 1..segs.len() {
                let (ci, si) = segs[x];
                let (cj, sj) = segs[y];
                if ci == cj && si == sj {
                    continue;
                }
                if bad[ci] && bad[cj] {
                    continue;
                }
                let (a, b) = (chains[ci].points[si], chains[ci].points[si + 1]);
                let (c, d) = (chains[cj].points[sj], chains[cj].points[sj + 1]);
                if !compatible(a, b, c, d) {
                    bad[ci] = true;
                    bad[cj] = true;
                }
            }
        }
    }
    (0..chains.len()).filter(|&i| bad[i]).collect()
}

fn to_pixel(p: P) -> Vec2 {
    Vec2::new(p.0 as f64 - 0.5, p.1 as f64 - 0.5)
}

/// Closed boundary loops per region, in pixel coordinates.
pub(super) fn region_loops(w: usize, h: usize, labels: &[u32], count: usize, tol: f64) -> Vec<Vec<Vec<Vec2>>> {
    let lat = Lattice { w: w as i64, h: h as i64, labels };
    let mut chains = trace_chains(&lat);
    let mut simplified = vec![true; chains.len()];
    for c in chains.iter_mut() {
        c.points = simplify_chain(&c.exact, tol);
    }
    loop {
        let conflicts: Vec<usize> = find_conflicts(&chains).into_iter().filter(|&c| simplified[c]).collect();
        if conflicts.is_empty() {
            break;
        }
        for c in conflicts {
            chains[c].points = chains[c].exact.clone();
            simplified[c] = false;
        }
    }

    // Directed pieces per region, oriented with the region on the left.
    let mut pieces: Vec<Vec<Vec<P>>> = vec![Vec::new(); count];
    for c in &chains {
        if c.left != NONE {
            pieces[c.left as usize].push(c.points.clone());
        }
        if c.right != NONE {
            let mut rev = c.points.clone();
            rev.reverse();
            pieces[c.right as usize].push(rev);
        }
    }
    pieces.into_iter().map(|p| trace_loops(&p)).collect()
}

fn turn_angle(h: P, o: P) -> f64 {
    let cross = (h.0 * o.1 - h.1 * o.0) as f64;
    let dot = (h.0 * o.0 + h.1 * o.1) as f64;
    cross.atan2(dot)
}

/// Joins directed pieces into closed loops. At pinch points the sharpest turn
/// toward the region side is taken, which keeps loops from crossing.
fn trace_loops(pieces: &[Vec<P>]) -> Vec<Vec<Vec2>> {
    let mut by_start: HashMap<P, Vec<usize>> = HashMap::new();
    for (i, p) in pieces.iter().enumerate() {
        by_start.entry(p[0]).or_default().push(i);
    }
    let mut used = vec![false; pieces.len()];
    let mut loops = Vec::new();
    for first in 0..pieces.len() {
        if used[first] {
            continue;
        }
        used[first] = true;
        let origin = pieces[first][0];
        let mut pts: Vec<P> = pieces[first].clone();
        let mut current = first;
        loop {
            let cur = &pieces[current];
            let end = *cur.last().unwrap();
            let hd = (end.0 - cur[cur.len() - 2].0, end.1 - cur[cur.len() - 2].1);
            let mut options: Vec<(usize, P)> = by_start
                .get(&end)
                .map(|v| v.iter().filter(|&&i| !used[i]).map(|&i| (i, pieces[i][1])).collect())
                .unwrap_or_default();
            if end == origin {
                options.push((first, pieces[first][1]));
            }
            let Some(&(next, _)) = options.iter().max_by(|a, b| {
                let ta = turn_angle(hd, (a.1 .0 - end.0, a.1 .1 - end.1));
                let tb = turn_angle(hd, (b.1 .0 - end.0, b.1 .1 - end.1));
                ta.total_cmp(&tb).then(b.0.cmp(&a.0))
            }) else {
                break;
            };
            if next == first {
                break;
            }
            used[next] = true;
            pts.extend_from_slice(&pieces[next][1..]);
            current = next;
        }
        if pts.first() == pts.last() {
            pts.pop();
        }
        loops.push(pts.into_iter().map(to_pixel).collect());
    }
    loops
}
