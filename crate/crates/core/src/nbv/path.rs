use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::Serialize;

use super::{PlanningError, ViewCandidate};
use crate::geometry::{Bvh, Vec2, Vec3};

pub type Cell = (usize, usize);

/// Horizontal occupancy on a constant-altitude plane. A cell is occupied when
/// its center is closer than the safe distance to the surface.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub altitude: f64,
    pub cell_size: f64,
    /// World xy of the center of cell (0, 0).
    pub origin: Vec2,
    pub nx: usize,
    pub ny: usize,
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    /// Covers `[min, max]` in xy.
    pub fn build(
        surface: &Bvh,
        altitude: f64,
        cell_size: f64,
        safe_distance: f64,
        min: Vec2,
        max: Vec2,
    ) -> Result<Self, PlanningError> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(PlanningError::InvalidParameter(format!("cell size {cell_size}")));
        }
        let nx = (((max.x - min.x) / cell_size).ceil() as usize).max(1) + 1;
        let ny = (((max.y - min.y) / cell_size).ceil() as usize).max(1) + 1;
        let mut g = Self { altitude, cell_size, origin: min, nx, ny, occupied: vec![false; nx * ny] };
        for j in 0..ny {
            for i in 0..nx {
                let c = g.center((i, j));
                g.occupied[j * nx + i] = surface.any_within(&c, safe_distance);
            }
        }
        Ok(g)
    }

    /// All-free grid; handy for tests.
    pub fn from_occupancy(nx: usize, ny: usize, occupied: Vec<bool>) -> Self {
        assert_eq!(occupied.len(), nx * ny);
        Self { altitude: 0.0, cell_size: 1.0, origin: Vec2::zeros(), nx, ny, occupied }
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        self.occupied[c.1 * self.nx + c.0]
    }

    pub fn center(&self, c: Cell) -> Vec3 {
        Vec3::new(
            self.origin.x + c.0 as f64 * self.cell_size,
            self.origin.y + c.1 as f64 * self.cell_size,
            self.altitude,
        )
    }

    /// Cell containing world xy, clamped to the grid.
    pub fn cell_of(&self, p: &Vec3) -> Cell {
        let f = |v: f64, o: f64, n: usize| (((v - o) / self.cell_size).round().max(0.0) as usize).min(n - 1);
        (f(p.x, self.origin.x, self.nx), f(p.y, self.origin.y, self.ny))
    }

    fn neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        let (i, j) = (c.0 as i64, c.1 as i64);
        [(1, 0), (-1, 0), (0, 1), (0, -1)].into_iter().filter_map(move |(di, dj)| {
            let (a, b) = (i + di, j + dj);
            (a >= 0 && b >= 0 && (a as usize) < self.nx && (b as usize) < self.ny).then_some((a as usize, b as usize))
        })
    }

    /// Nearest free cell within `radius` cells (Chebyshev), by Manhattan
    /// distance, ties to the lower (y, x).
    pub fn snap_free(&self, c: Cell, radius: usize) -> Option<Cell> {
        let r = radius as i64;
        let mut best: Option<(i64, Cell)> = None;
        for dj in -r..=r {
            for di in -r..=r {
                let (a, b) = (c.0 as i64 + di, c.1 as i64 + dj);
                if a < 0 || b < 0 || a as usize >= self.nx || b as usize >= self.ny {
                    continue;
                }
                let cell = (a as usize, b as usize);
                if self.is_occupied(cell) {
                    continue;
                }
                let d = di.abs() + dj.abs();
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, cell));
                }
            }
        }
        best.map(|b| b.1)
    }

    pub fn free_cells(&self) -> usize {
        self.occupied.iter().filter(|o| !**o).count()
    }
}

fn manhattan(a: Cell, b: Cell) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

/// A* on the 4-connected free cells with unit steps and the Manhattan
/// heuristic. Returns the cell sequence including both ends.
pub fn astar(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Option<Vec<Cell>> {
    if grid.is_occupied(start) || grid.is_occupied(goal) {
        return None;
    }
    let idx = |c: Cell| c.1 * grid.nx + c.0;
    let n = grid.nx * grid.ny;
    let mut g = vec![usize::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[idx(start)] = 0;
    open.push(Reverse((manhattan(start, goal), 0usize, idx(start))));
    while let Some(Reverse((_, gc, k))) = open.pop() {
        if closed[k] {
            continue;
        }
        closed[k] = true;
        let c = (k % grid.nx, k / grid.nx);
        if c == goal {
            let mut path = vec![c];
            let mut k = k;
            while parent[k] != usize::MAX {
                k = parent[k];
                path.push((k % grid.nx, k / grid.nx));
            }
            path.reverse();
            return Some(path);
        }
        for nb in grid.neighbors(c) {
            let m = idx(nb);
            if grid.is_occupied(nb) || closed[m] {
                continue;
            }
            let ng = gc + 1;
            if ng < g[m] {
                g[m] = ng;
                parent[m] = k;
                open.push(Reverse((ng + manhattan(nb, goal), ng, m)));
            }
        }
    }
    None
}

/// Breadth-first shortest path length in steps.
pub fn bfs_distance(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Option<usize> {
    if grid.is_occupied(start) || grid.is_occupied(goal) {
        return None;
    }
    let mut dist = vec![usize::MAX; grid.nx * grid.ny];
    let mut q = VecDeque::from([start]);
    dist[start.1 * grid.nx + start.0] = 0;
    while let Some(c) = q.pop_front() {
        let d = dist[c.1 * grid.nx + c.0];
        if c == goal {
            return Some(d);
        }
        for nb in grid.neighbors(c) {
            let m = nb.1 * grid.nx + nb.0;
            if !grid.is_occupied(nb) && dist[m] == usize::MAX {
                dist[m] = d + 1;
                q.push_back(nb);
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Waypoint {
    pub position: Vec3,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
    /// Index into the NBV list when this waypoint is an NBV.
    pub nbv: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlightPath {
    pub waypoints: Vec<Waypoint>,
    pub cells: Vec<Cell>,
    /// Steps between consecutive cells.
    pub length_cells: usize,
    pub length: f64,
    pub visit_order: Vec<usize>,
    pub unreachable: Vec<usize>,
}

/// Visits NBVs greedily by A* length from the current cell. NBVs in occupied
/// cells are snapped to a free cell within `snap_radius`; the rest are
/// reported as unreachable.
pub fn plan_path(
    grid: &OccupancyGrid,
    start: &Vec3,
    nbvs: &[ViewCandidate],
    snap_radius: usize,
) -> Result<FlightPath, PlanningError> {
    let start_cell = grid.cell_of(start);
    if grid.is_occupied(start_cell) {
        return Err(PlanningError::StartOccupied { x: start.x, y: start.y });
    }
    let mut unreachable = Vec::new();
    let mut pending: Vec<(usize, Cell)> = Vec::new();
    for (k, n) in nbvs.iter().enumerate() {
        match grid.snap_free(grid.cell_of(&n.position), snap_radius) {
            Some(c) => pending.push((k, c)),
            None => unreachable.push(k),
        }
    }
    let (yaw0, pitch0) = nbvs.first().map_or((0.0, 0.0), |n| (n.yaw_deg, n.pitch_deg));
    let mut cells = vec![start_cell];
    let mut waypoints =
        vec![Waypoint { position: grid.center(start_cell), yaw_deg: yaw0, pitch_deg: pitch0, nbv: None }];
    let mut visit_order = Vec::new();
    let mut current = start_cell;
    while !pending.is_empty() {
        let mut best: Option<(usize, usize, Vec<Cell>)> = None;
        for (p, &(_, c)) in pending.iter().enumerate() {
            if let Some(path) = astar(grid, current, c) {
                if best.as_ref().is_none_or(|b| path.len() < b.2.len()) {
                    best = Some((p, path.len(), path));
                }
            }
        }
        let Some((p, _, path)) = best else {
            unreachable.extend(pending.iter().map(|x| x.0));
            break;
        };
        let (k, goal) = pending.remove(p);
        let nbv = &nbvs[k];
        for (s, &c) in path.iter().enumerate().skip(1) {
            cells.push(c);
            let last = s + 1 == path.len();
            waypoints.push(Waypoint {
                position: grid.center(c),
                yaw_deg: nbv.yaw_deg,
                pitch_deg: nbv.pitch_deg,
                nbv: last.then_some(k),
            });
        }
        if path.len() == 1 {
            // Already there.
            waypoints.push(Waypoint {
                position: grid.center(goal),
                yaw_deg: nbv.yaw_deg,
                pitch_deg: nbv.pitch_deg,
                nbv: Some(k),
            });
            cells.push(goal);
        }
        visit_order.push(k);
        current = goal;
    }
    unreachable.sort_unstable();
    let length_cells = cells.windows(2).map(|w| manhattan(w[0], w[1])).sum::<usize>();
    Ok(FlightPath {
        waypoints,
        cells,
        length_cells,
        length: length_cells as f64 * grid.cell_size,
        visit_order,
        unreachable,
    })
}
