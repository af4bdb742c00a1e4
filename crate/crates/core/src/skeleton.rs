//! Medial-axis thinning of binary organ masks and centerline extraction.
//!
//! [`thin`] erodes a mask to a one-voxel-wide skeleton with successive passes
//! over the six border directions, deleting only *simple* points (points
//! whose deletion preserves local topology) that are not curve endpoints,
//! with sequential rechecking inside each pass. Simplicity uses the standard
//! (26, 6) characterization: exactly one 26-connected foreground component in
//! the 26-neighborhood and exactly one 6-connected background component of
//! the 18-neighborhood touching a face. Border passes run in the fixed order
//! +z, -z, +y, -y, +x, -x.
//!
//! [`build_graph`] and [`longest_path`] turn the skeleton into an ordered
//! centerline: endpoints are auto-selected by double-sweep BFS (exact on
//! trees) unless given explicitly, branch voxels are discarded, and
//! per-point orthonormal frames are built by parallel transport after a
//! 5-point moving average of the positions.

use crate::error::{Error, Result};
use crate::grid::{GridGeometry, LabelMask};
use crate::real::Real;
use crate::vec3;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};

/// Border-pass directions, fixed order.
const DIRECTIONS: [(i64, i64, i64); 6] = [
    (0, 0, 1),
    (0, 0, -1),
    (0, 1, 0),
    (0, -1, 0),
    (1, 0, 0),
    (-1, 0, 0),
];

/// 3x3x3 neighborhood occupancy around one voxel; cell index
/// `(dx+1) + 3(dy+1) + 9(dz+1)`, center at 13, out-of-grid cells background.
fn neighborhood(img: &[bool], dims: [usize; 3], v: [usize; 3]) -> [bool; 27] {
    let mut n = [false; 27];
    let idx = |x: usize, y: usize, z: usize| x + dims[0] * (y + dims[1] * z);
    for dz in -1i64..=1 {
        let z = v[2] as i64 + dz;
        if z < 0 || z >= dims[2] as i64 {
            continue;
        }
        for dy in -1i64..=1 {
            let y = v[1] as i64 + dy;
            if y < 0 || y >= dims[1] as i64 {
                continue;
            }
            for dx in -1i64..=1 {
                let x = v[0] as i64 + dx;
                if x < 0 || x >= dims[0] as i64 {
                    continue;
                }
                n[((dx + 1) + 3 * (dy + 1) + 9 * (dz + 1)) as usize] =
                    img[idx(x as usize, y as usize, z as usize)];
            }
        }
    }
    n
}

#[inline]
fn cell_offset(i: usize) -> (i64, i64, i64) {
    ((i % 3) as i64 - 1, ((i / 3) % 3) as i64 - 1, (i / 9) as i64 - 1)
}

fn foreground_neighbor_count(n: &[bool; 27]) -> usize {
    n.iter().enumerate().filter(|&(i, &on)| i != 13 && on).count()
}

/// Number of 26-connected foreground components among the 26 neighbors.
fn fg_components_26(n: &[bool; 27]) -> usize {
    let mut seen = [false; 27];
    let mut count = 0;
    for start in 0..27 {
        if start == 13 || !n[start] || seen[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(c) = stack.pop() {
            let (cx, cy, cz) = cell_offset(c);
            for j in 0..27 {
                if j == 13 || seen[j] || !n[j] {
                    continue;
                }
                let (jx, jy, jz) = cell_offset(j);
                if (cx - jx).abs() <= 1 && (cy - jy).abs() <= 1 && (cz - jz).abs() <= 1 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

/// Number of 6-connected background components of the 18-neighborhood that
/// contain a face neighbor of the center.
fn bg_components_6(n: &[bool; 27]) -> usize {
    let in_n18 = |i: usize| {
        let (x, y, z) = cell_offset(i);
        i != 13 && x.abs() + y.abs() + z.abs() <= 2
    };
    // face-neighbor cells: x±1, y±1, z±1
    let faces: [usize; 6] = [12, 14, 10, 16, 4, 22];
    let mut seen = [false; 27];
    let mut count = 0;
    for &f in &faces {
        if n[f] || seen[f] {
            continue;
        }
        count += 1;
        let mut stack = vec![f];
        seen[f] = true;
        while let Some(c) = stack.pop() {
            let (cx, cy, cz) = cell_offset(c);
            for j in 0..27 {
                if seen[j] || n[j] || !in_n18(j) {
                    continue;
                }
                let (jx, jy, jz) = cell_offset(j);
                if (cx - jx).abs() + (cy - jy).abs() + (cz - jz).abs() == 1 {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

/// Deleting a simple point cannot change the topology of the object.
fn is_simple(n: &[bool; 27]) -> bool {
    fg_components_26(n) == 1 && bg_components_6(n) == 1
}

fn is_endpoint(n: &[bool; 27]) -> bool {
    foreground_neighbor_count(n) == 1
}

/// Thin one label of a mask to its medial skeleton. The result contains only
/// voxels that were foreground, preserves 26-component count and Euler
/// characteristic, and is idempotent.
pub fn thin<T: Real>(mask: &LabelMask<T>, label: u16) -> Result<LabelMask<T>> {
    let dims = mask.geometry.dims;
    let mut img = mask.binary(label);
    if !img.iter().any(|&b| b) {
        return Err(Error::EmptyLabel(label));
    }

    // Bounding box of the label, padded one voxel.
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for (i, &on) in img.iter().enumerate() {
        if on {
            let c = mask.geometry.coords(i);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
    }
    for a in 0..3 {
        lo[a] = lo[a].saturating_sub(1);
        hi[a] = (hi[a] + 1).min(dims[a] - 1);
    }

    let idx = |x: usize, y: usize, z: usize| x + dims[0] * (y + dims[1] * z);
    let mut candidates: Vec<[usize; 3]> = Vec::new();
    loop {
        let mut deleted_any = false;
        for (dx, dy, dz) in DIRECTIONS {
            candidates.clear();
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        if !img[idx(x, y, z)] {
                            continue;
                        }
                        // border point: the face neighbor in this direction is background
                        let bx = x as i64 + dx;
                        let by = y as i64 + dy;
                        let bz = z as i64 + dz;
                        let inside = bx >= 0
                            && by >= 0
                            && bz >= 0
                            && (bx as usize) < dims[0]
                            && (by as usize) < dims[1]
                            && (bz as usize) < dims[2];
                        if inside && img[idx(bx as usize, by as usize, bz as usize)] {
                            continue;
                        }
                        let n = neighborhood(&img, dims, [x, y, z]);
                        if is_endpoint(&n) || !is_simple(&n) {
                            continue;
                        }
                        candidates.push([x, y, z]);
                    }
                }
            }
            // Sequential recheck with an opposite-support rule: a candidate
            // is only deleted while the face neighbor opposite the pass
            // direction is still foreground. A plain layer peel always has
            // that support; without the rule, deletions cascade down the
            // length of an even-width rod and swallow it whole.
            for &v in &candidates {
                let sx = v[0] as i64 - dx;
                let sy = v[1] as i64 - dy;
                let sz = v[2] as i64 - dz;
                let supported = sx >= 0
                    && sy >= 0
                    && sz >= 0
                    && (sx as usize) < dims[0]
                    && (sy as usize) < dims[1]
                    && (sz as usize) < dims[2]
                    && img[idx(sx as usize, sy as usize, sz as usize)];
                if !supported {
                    continue;
                }
                let n = neighborhood(&img, dims, v);
                if is_simple(&n) && !is_endpoint(&n) {
                    img[idx(v[0], v[1], v[2])] = false;
                    deleted_any = true;
                }
            }
        }
        if !deleted_any {
            break;
        }
    }

    let labels: Vec<u16> = img.iter().map(|&b| u16::from(b)).collect();
    let mut names = BTreeMap::new();
    let name = mask
        .label_names
        .get(&label)
        .cloned()
        .unwrap_or_else(|| format!("label_{label}"));
    names.insert(1, format!("{name}_skeleton"));
    Ok(LabelMask::new(mask.geometry, labels, names))
}

/// Skeleton voxels as a graph under 26-connectivity.
#[derive(Debug, Clone, Default)]
pub struct SkeletonGraph {
    /// Voxel coordinates, in scan order.
    pub nodes: Vec<[usize; 3]>,
    /// Undirected edges (a < b), Chebyshev distance 1.
    pub edges: Vec<(u32, u32)>,
    /// Sorted neighbor lists per node.
    pub adjacency: Vec<Vec<u32>>,
}

impl SkeletonGraph {
    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }
}

/// One node per nonzero skeleton voxel; edges per 26-neighborhood.
pub fn build_graph<T: Real>(skeleton: &LabelMask<T>) -> SkeletonGraph {
    let geom = &skeleton.geometry;
    let mut nodes = Vec::new();
    let mut node_of = vec![u32::MAX; geom.len()];
    for i in 0..geom.len() {
        if skeleton.labels[i] != 0 {
            node_of[i] = nodes.len() as u32;
            nodes.push(geom.coords(i));
        }
    }
    let mut edges = Vec::new();
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for (a, &v) in nodes.iter().enumerate() {
        for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let w = [v[0] as i64 + dx, v[1] as i64 + dy, v[2] as i64 + dz];
                    if !geom.contains(w) {
                        continue;
                    }
                    let b = node_of[geom.index([w[0] as usize, w[1] as usize, w[2] as usize])];
                    if b != u32::MAX && (a as u32) < b {
                        edges.push((a as u32, b));
                        adjacency[a].push(b);
                        adjacency[b as usize].push(a as u32);
                    }
                }
            }
        }
    }
    for adj in &mut adjacency {
        adj.sort_unstable();
    }
    SkeletonGraph { nodes, edges, adjacency }
}

/// BFS distances and parents from `start`.
fn bfs(graph: &SkeletonGraph, start: u32) -> (Vec<u32>, Vec<u32>) {
    let n = graph.nodes.len();
    let mut dist = vec![u32::MAX; n];
    let mut parent = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    dist[start as usize] = 0;
    queue.push_back(start);
    while let Some(c) = queue.pop_front() {
        for &j in &graph.adjacency[c as usize] {
            if dist[j as usize] == u32::MAX {
                dist[j as usize] = dist[c as usize] + 1;
                parent[j as usize] = c;
                queue.push_back(j);
            }
        }
    }
    (dist, parent)
}

/// Farthest reachable node; ties broken by smallest node index.
fn farthest(dist: &[u32]) -> u32 {
    let mut best = 0u32;
    let mut best_d = 0u32;
    for (i, &d) in dist.iter().enumerate() {
        if d != u32::MAX && d > best_d {
            best_d = d;
            best = i as u32;
        }
    }
    best
}

fn largest_component(graph: &SkeletonGraph) -> u32 {
    let n = graph.nodes.len();
    let mut comp = vec![u32::MAX; n];
    let mut sizes: Vec<usize> = Vec::new();
    for s in 0..n {
        if comp[s] != u32::MAX {
            continue;
        }
        let id = sizes.len() as u32;
        let mut size = 0;
        let mut queue = VecDeque::from([s as u32]);
        comp[s] = id;
        while let Some(c) = queue.pop_front() {
            size += 1;
            for &j in &graph.adjacency[c as usize] {
                if comp[j as usize] == u32::MAX {
                    comp[j as usize] = id;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    if sizes.len() > 1 {
        log::warn!("skeleton has {} components; using the largest", sizes.len());
    }
    // first node of the largest component (components discovered in node order)
    let best = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i as u32)
        .unwrap();
    comp.iter().position(|&c| c == best).unwrap() as u32
}

/// Node sequence of the path (endpoints given or double-sweep selected).
fn path_nodes(
    graph: &SkeletonGraph,
    endpoints: Option<([usize; 3], [usize; 3])>,
) -> Result<Vec<u32>> {
    if graph.nodes.is_empty() {
        return Err(Error::SkeletonGraph("empty graph".into()));
    }
    let (start, goal) = match endpoints {
        Some((a, b)) => {
            let find = |v: [usize; 3]| {
                graph
                    .nodes
                    .iter()
                    .position(|&n| n == v)
                    .map(|i| i as u32)
                    .ok_or_else(|| Error::SkeletonGraph(format!("endpoint {v:?} not on the skeleton")))
            };
            (find(a)?, find(b)?)
        }
        None => {
            let seed = largest_component(graph);
            let (dist, _) = bfs(graph, seed);
            let e1 = farthest(&dist);
            let (dist1, _) = bfs(graph, e1);
            let e2 = farthest(&dist1);
            // lexicographic tie-break on the endpoint pair
            if e1 <= e2 {
                (e1, e2)
            } else {
                (e2, e1)
            }
        }
    };
    let (dist, parent) = bfs(graph, start);
    if dist[goal as usize] == u32::MAX {
        return Err(Error::SkeletonGraph("endpoints are not connected".into()));
    }
    let mut path = vec![goal];
    let mut cur = goal;
    while cur != start {
        cur = parent[cur as usize];
        path.push(cur);
    }
    path.reverse();
    Ok(path)
}

/// Voxel coordinates along the longest path (branch voxels discarded).
pub fn longest_path_voxels(
    graph: &SkeletonGraph,
    endpoints: Option<([usize; 3], [usize; 3])>,
) -> Result<Vec<[usize; 3]>> {
    Ok(path_nodes(graph, endpoints)?
        .into_iter()
        .map(|i| graph.nodes[i as usize])
        .collect())
}

/// Longest connected path through the skeleton graph as a world-space
/// centerline. Without `endpoints`, a double BFS sweep picks them (exact on
/// trees); with `endpoints`, the BFS path between exactly those voxels is
/// returned.
pub fn longest_path<T: Real>(
    graph: &SkeletonGraph,
    geometry: &GridGeometry<T>,
    endpoints: Option<([usize; 3], [usize; 3])>,
) -> Result<Centerline<T>> {
    let path = path_nodes(graph, endpoints)?;
    let raw: Vec<[T; 3]> = path.iter().map(|&i| geometry.world(graph.nodes[i as usize])).collect();
    Centerline::from_points(smooth_positions(&raw))
}

/// Orthonormal frame at one centerline sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame<T> {
    pub tangent: [T; 3],
    pub normal: [T; 3],
    pub binormal: [T; 3],
}

/// Ordered polyline through an organ with arc length and transported frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Centerline<T> {
    /// World-space points (mm).
    pub points: Vec<[T; 3]>,
    /// Cumulative arc length (mm), first entry 0, strictly increasing.
    pub cumulative_arclength: Vec<T>,
    pub frames: Vec<Frame<T>>,
}

impl<T: Real> Centerline<T> {
    /// Build arc length and parallel-transported frames from raw points.
    /// Consecutive duplicates are dropped; fewer than two distinct points is
    /// a degenerate centerline.
    pub fn from_points(raw: Vec<[T; 3]>) -> Result<Self> {
        let mut points: Vec<[T; 3]> = Vec::with_capacity(raw.len());
        for p in raw {
            if points.last().map_or(true, |q| vec3::dist(*q, p) > T::of(1e-12)) {
                points.push(p);
            }
        }
        if points.len() < 2 {
            return Err(Error::DegenerateCenterline(format!(
                "{} distinct points, need at least 2",
                points.len()
            )));
        }
        let n = points.len();
        let mut arclength = Vec::with_capacity(n);
        arclength.push(T::zero());
        for i in 1..n {
            let s = arclength[i - 1] + vec3::dist(points[i - 1], points[i]);
            arclength.push(s);
        }

        // Tangents: central differences, one-sided at the ends.
        let mut tangents = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = if i == 0 {
                (points[0], points[1])
            } else if i == n - 1 {
                (points[n - 2], points[n - 1])
            } else {
                (points[i - 1], points[i + 1])
            };
            let t = vec3::normalize(vec3::sub(b, a))
                .ok_or_else(|| Error::DegenerateCenterline("zero tangent".into()))?;
            tangents.push(t);
        }

        // Parallel transport: rotate the previous normal by the rotation that
        // carries the previous tangent onto the current one. Frenet frames are
        // undefined at zero curvature; transport never flips.
        let mut frames: Vec<Frame<T>> = Vec::with_capacity(n);
        let mut normal = vec3::any_orthonormal(tangents[0]);
        for i in 0..n {
            let t = tangents[i];
            if i > 0 {
                let prev = tangents[i - 1];
                let axis = vec3::cross(prev, t);
                let s = vec3::norm(axis);
                let c = vec3::dot(prev, t).min(T::one()).max(-T::one());
                if s > T::of(1e-12) {
                    let k = vec3::scale(axis, T::one() / s);
                    normal = vec3::rotate_about(normal, k, s.atan2(c));
                }
            }
            // re-orthogonalize against accumulated rounding
            let mut nrm = vec3::sub(normal, vec3::scale(t, vec3::dot(normal, t)));
            nrm = vec3::normalize(nrm)
                .ok_or_else(|| Error::DegenerateCenterline("frame collapse".into()))?;
            normal = nrm;
            frames.push(Frame { tangent: t, normal: nrm, binormal: vec3::cross(t, nrm) });
        }
        Ok(Centerline { points, cumulative_arclength: arclength, frames })
    }

    pub fn total_length(&self) -> T {
        *self.cumulative_arclength.last().unwrap()
    }

    /// Point at arc length `s` (clamped to the curve) by linear interpolation.
    pub fn point_at(&self, s: T) -> [T; 3] {
        let s = s.max(T::zero()).min(self.total_length());
        let arc = &self.cumulative_arclength;
        let mut i = match arc.binary_search_by(|a| a.partial_cmp(&s).unwrap()) {
            Ok(i) => return self.points[i],
            Err(i) => i,
        };
        i = i.clamp(1, arc.len() - 1);
        let t = (s - arc[i - 1]) / (arc[i] - arc[i - 1]);
        vec3::lerp(self.points[i - 1], self.points[i], t)
    }
}

/// 5-point moving average; ends padded by linear extrapolation so straight
/// segments keep their endpoints.
fn smooth_positions<T: Real>(points: &[[T; 3]]) -> Vec<[T; 3]> {
    let n = points.len();
    if n < 3 {
        return points.to_vec();
    }
    let two = T::of(2.0);
    let fetch = |i: i64| -> [T; 3] {
        if i < 0 {
            let k = ((-i) as usize).min(n - 1);
            vec3::sub(vec3::scale(points[0], two), points[k])
        } else if i >= n as i64 {
            let k = (i as usize - (n - 1)).min(n - 1);
            vec3::sub(vec3::scale(points[n - 1], two), points[n - 1 - k])
        } else {
            points[i as usize]
        }
    };
    (0..n as i64)
        .map(|i| {
            let mut acc = [T::zero(); 3];
            for d in -2..=2 {
                acc = vec3::add(acc, fetch(i + d));
            }
            vec3::scale(acc, T::of(0.2))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeometry;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mask_from(dims: [usize; 3], fg: &[[usize; 3]]) -> LabelMask<f64> {
        let geom = GridGeometry::new(dims, [1.0, 1.0, 1.0], [0.0, 0.0, 0.0]);
        let mut m = LabelMask::zeros(geom);
        m.label_names.insert(1, "organ".into());
        for &v in fg {
            let idx = geom.index(v);
            m.labels[idx] = 1;
        }
        m
    }

    fn fg_voxels(mask: &LabelMask<f64>) -> Vec<[usize; 3]> {
        (0..mask.geometry.len())
            .filter(|&i| mask.labels[i] != 0)
            .map(|i| mask.geometry.coords(i))
            .collect()
    }

    /// Independent Euler characteristic of the union of closed unit cubes:
    /// chi = V - E + F - C over the cell complex.
    fn euler_characteristic(mask: &LabelMask<f64>) -> i64 {
        let d = mask.geometry.dims;
        let fg = |x: i64, y: i64, z: i64| -> bool {
            x >= 0
                && y >= 0
                && z >= 0
                && (x as usize) < d[0]
                && (y as usize) < d[1]
                && (z as usize) < d[2]
                && mask.labels[mask.geometry.index([x as usize, y as usize, z as usize])] != 0
        };
        let mut c = 0i64;
        for z in 0..d[2] as i64 {
            for y in 0..d[1] as i64 {
                for x in 0..d[0] as i64 {
                    if fg(x, y, z) {
                        c += 1;
                    }
                }
            }
        }
        // vertices: lattice points with any of 8 incident voxels on
        let mut v = 0i64;
        for z in 0..=d[2] as i64 {
            for y in 0..=d[1] as i64 {
                for x in 0..=d[0] as i64 {
                    'v: for dz in -1..=0 {
                        for dy in -1..=0 {
                            for dx in -1..=0 {
                                if fg(x + dx, y + dy, z + dz) {
                                    v += 1;
                                    break 'v;
                                }
                            }
                        }
                    }
                }
            }
        }
        // edges along each axis: any of 4 incident voxels on
        let mut e = 0i64;
        for axis in 0..3usize {
            let (ex, ey, ez) = match axis {
                0 => (d[0] as i64, d[1] as i64 + 1, d[2] as i64 + 1),
                1 => (d[0] as i64 + 1, d[1] as i64, d[2] as i64 + 1),
                _ => (d[0] as i64 + 1, d[1] as i64 + 1, d[2] as i64),
            };
            for z in 0..ez {
                for y in 0..ey {
                    for x in 0..ex {
                        let incident: [(i64, i64, i64); 4] = match axis {
                            0 => [(x, y - 1, z - 1), (x, y, z - 1), (x, y - 1, z), (x, y, z)],
                            1 => [(x - 1, y, z - 1), (x, y, z - 1), (x - 1, y, z), (x, y, z)],
                            _ => [(x - 1, y - 1, z), (x, y - 1, z), (x - 1, y, z), (x, y, z)],
                        };
                        if incident.iter().any(|&(a, b, cc)| fg(a, b, cc)) {
                            e += 1;
                        }
                    }
                }
            }
        }
        // faces perpendicular to each axis: either of 2 incident voxels on
        let mut f = 0i64;
        for axis in 0..3usize {
            let (fx, fy, fz) = match axis {
                0 => (d[0] as i64 + 1, d[1] as i64, d[2] as i64),
                1 => (d[0] as i64, d[1] as i64 + 1, d[2] as i64),
                _ => (d[0] as i64, d[1] as i64, d[2] as i64 + 1),
            };
            for z in 0..fz {
                for y in 0..fy {
                    for x in 0..fx {
                        let (a, b) = match axis {
                            0 => ((x - 1, y, z), (x, y, z)),
                            1 => ((x, y - 1, z), (x, y, z)),
                            _ => ((x, y, z - 1), (x, y, z)),
                        };
                        if fg(a.0, a.1, a.2) || fg(b.0, b.1, b.2) {
                            f += 1;
                        }
                    }
                }
            }
        }
        v - e + f - c
    }

    fn component_count_26(mask: &LabelMask<f64>) -> usize {
        let g = build_graph(mask);
        let n = g.nodes.len();
        if n == 0 {
            return 0;
        }
        let mut seen = vec![false; n];
        let mut count = 0;
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(c) = stack.pop() {
                for &j in &g.adjacency[c] {
                    if !seen[j as usize] {
                        seen[j as usize] = true;
                        stack.push(j as usize);
                    }
                }
            }
        }
        count
    }

    #[test]
    fn single_voxel_is_fixed_point() {
        let m = mask_from([5, 5, 5], &[[2, 2, 2]]);
        let s = thin(&m, 1).unwrap();
        assert_eq!(fg_voxels(&s), vec![[2, 2, 2]]);
    }

    #[test]
    fn empty_label_errors() {
        let m = mask_from([5, 5, 5], &[[2, 2, 2]]);
        assert!(matches!(thin(&m, 7), Err(Error::EmptyLabel(7))));
    }

    #[test]
    fn digital_line_unchanged() {
        // 26-connected staircase line of length 20
        let fg: Vec<[usize; 3]> = (0..20).map(|i| [i, i / 2, 3]).collect();
        let m = mask_from([24, 14, 7], &fg);
        let s = thin(&m, 1).unwrap();
        assert_eq!(fg_voxels(&s), fg);
    }

    #[test]
    fn solid_box_thins_to_axis() {
        let mut fg = Vec::new();
        for z in 0..40 {
            for y in 0..5 {
                for x in 0..5 {
                    fg.push([x + 2, y + 2, z + 2]);
                }
            }
        }
        let m = mask_from([9, 9, 44], &fg);
        let s = thin(&m, 1).unwrap();
        let g = build_graph(&s);
        let path = longest_path_voxels(&g, None).unwrap();
        assert!(
            (36..=44).contains(&path.len()),
            "longest path has {} voxels, expected 36..=44",
            path.len()
        );
        // every path voxel within 2 voxels of the box axis (x=4, y=4), brute force
        for v in &path {
            let dx = v[0] as f64 - 4.0;
            let dy = v[1] as f64 - 4.0;
            assert!(
                (dx * dx + dy * dy).sqrt() <= 2.0,
                "path voxel {v:?} strays from the axis"
            );
        }
    }

    fn random_blob(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> LabelMask<f64> {
        // union of 2-4 random balls, clipped to the grid
        let geom = GridGeometry::new(dims, [1.0, 1.0, 1.0], [0.0, 0.0, 0.0]);
        let mut m = LabelMask::zeros(geom);
        m.label_names.insert(1, "blob".into());
        let n_balls = rng.gen_range(2..=4);
        let balls: Vec<([f64; 3], f64)> = (0..n_balls)
            .map(|_| {
                let c = [
                    rng.gen_range(2.0..dims[0] as f64 - 2.0),
                    rng.gen_range(2.0..dims[1] as f64 - 2.0),
                    rng.gen_range(2.0..dims[2] as f64 - 2.0),
                ];
                (c, rng.gen_range(1.5..3.5))
            })
            .collect();
        for i in 0..geom.len() {
            let v = geom.coords(i);
            let p = [v[0] as f64, v[1] as f64, v[2] as f64];
            if balls.iter().any(|(c, r)| vec3::dist(p, *c) <= *r) {
                m.labels[i] = 1;
            }
        }
        m
    }

    #[test]
    fn thinning_preserves_topology_and_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..50 {
            let m = random_blob(&mut rng, [14, 14, 14]);
            if m.count(1) == 0 {
                continue;
            }
            let s = thin(&m, 1).unwrap();
            // subset of input
            for i in 0..m.geometry.len() {
                assert!(s.labels[i] == 0 || m.labels[i] != 0, "trial {trial}: grew outside input");
            }
            // topology preserved
            assert_eq!(
                component_count_26(&s),
                component_count_26(&m),
                "trial {trial}: component count changed"
            );
            assert_eq!(
                euler_characteristic(&s),
                euler_characteristic(&m),
                "trial {trial}: Euler characteristic changed"
            );
            // idempotent
            let s2 = thin(&s, 1).unwrap();
            assert_eq!(s2.labels, s.labels, "trial {trial}: thin(thin(m)) != thin(m)");
        }
    }

    #[test]
    fn build_graph_empty() {
        let m = mask_from([4, 4, 4], &[]);
        let g = build_graph(&m);
        assert!(g.nodes.is_empty());
        assert!(g.edges.is_empty());
    }

    #[test]
    fn build_graph_line() {
        let fg: Vec<[usize; 3]> = (0..10).map(|i| [i, 1, 1]).collect();
        let m = mask_from([12, 3, 3], &fg);
        let g = build_graph(&m);
        assert_eq!(g.nodes.len(), 10);
        assert_eq!(g.edges.len(), 9);
    }

    /// Y-shape: stem of 10, two arms of length 10 and 6 joined at the stem top.
    fn y_fixture() -> LabelMask<f64> {
        let mut fg: Vec<[usize; 3]> = Vec::new();
        for i in 0..10 {
            fg.push([10, 10, i]); // stem along z
        }
        for i in 1..=10 {
            fg.push([10 + i, 10, 9 + i]); // long arm, diagonal
        }
        for i in 1..=6 {
            fg.push([10 - i, 10, 9 + i]); // short arm, diagonal
        }
        mask_from([24, 20, 22], &fg)
    }

    #[test]
    fn y_shape_has_one_branch_node() {
        let m = y_fixture();
        let g = build_graph(&m);
        let branch_nodes: Vec<_> = (0..g.nodes.len()).filter(|&i| g.degree(i) == 3).collect();
        assert_eq!(branch_nodes.len(), 1, "expected exactly one degree-3 node");
        assert_eq!(g.nodes[branch_nodes[0]], [10, 10, 9]);
    }

    /// All simple paths between every node pair, by DFS (fixture-sized only).
    fn all_paths_max_len(g: &SkeletonGraph) -> usize {
        fn dfs(g: &SkeletonGraph, cur: usize, visited: &mut Vec<bool>, len: usize, best: &mut usize) {
            *best = (*best).max(len);
            for &j in &g.adjacency[cur] {
                if !visited[j as usize] {
                    visited[j as usize] = true;
                    dfs(g, j as usize, visited, len + 1, best);
                    visited[j as usize] = false;
                }
            }
        }
        let mut best = 0;
        for s in 0..g.nodes.len() {
            let mut visited = vec![false; g.nodes.len()];
            visited[s] = true;
            dfs(g, s, &mut visited, 0, &mut best);
        }
        best
    }

    #[test]
    fn longest_path_on_path_graph_is_whole_graph() {
        let fg: Vec<[usize; 3]> = (0..10).map(|i| [i, 1, 1]).collect();
        let m = mask_from([12, 3, 3], &fg);
        let g = build_graph(&m);
        let path = longest_path_voxels(&g, None).unwrap();
        assert_eq!(path.len(), 10);
    }

    #[test]
    fn longest_path_on_y_discards_short_arm() {
        let m = y_fixture();
        let g = build_graph(&m);
        let path = longest_path_voxels(&g, None).unwrap();
        // exhaustive enumeration oracle: the diameter in edges
        let best_edges = all_paths_max_len(&g);
        assert_eq!(path.len(), best_edges + 1, "double sweep must find the diameter on a tree");
        // stem (10) + long arm (10) = 20 voxels; short-arm tip excluded
        assert_eq!(path.len(), 20);
        assert!(!path.contains(&[4, 10, 15]), "short-arm tip should be discarded");
    }

    #[test]
    fn longest_path_with_explicit_endpoints() {
        let m = y_fixture();
        let g = build_graph(&m);
        let short_tip = [4, 10, 15];
        let long_tip = [20, 10, 19];
        let path = longest_path_voxels(&g, Some((short_tip, long_tip))).unwrap();
        assert_eq!(path.first(), Some(&short_tip));
        assert_eq!(path.last(), Some(&long_tip));
        // path through the branch point: 6 + 1 + 10 voxels... branch at [10,10,9]
        assert!(path.contains(&[10, 10, 9]));
        assert_eq!(path.len(), 17);
    }

    #[test]
    fn endpoints_not_on_skeleton_error() {
        let m = y_fixture();
        let g = build_graph(&m);
        assert!(longest_path_voxels(&g, Some(([0, 0, 0], [1, 1, 1]))).is_err());
    }

    #[test]
    fn centerline_frames_are_orthonormal() {
        // quarter circle arc
        let pts: Vec<[f64; 3]> = (0..=32)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 * i as f64 / 32.0;
                [50.0 * a.cos(), 50.0 * a.sin(), 0.3 * i as f64]
            })
            .collect();
        let c = Centerline::from_points(pts).unwrap();
        for (i, f) in c.frames.iter().enumerate() {
            assert!((vec3::norm(f.tangent) - 1.0).abs() < 1e-9, "tangent {i} not unit");
            assert!((vec3::norm(f.normal) - 1.0).abs() < 1e-9, "normal {i} not unit");
            assert!((vec3::norm(f.binormal) - 1.0).abs() < 1e-9, "binormal {i} not unit");
            assert!(vec3::dot(f.tangent, f.normal).abs() < 1e-9);
            assert!(vec3::dot(f.tangent, f.binormal).abs() < 1e-9);
            assert!(vec3::dot(f.normal, f.binormal).abs() < 1e-9);
            if i > 0 {
                let prev = &c.frames[i - 1];
                assert!(
                    vec3::dot(prev.normal, f.normal) > 0.0,
                    "frame flipped between {} and {}",
                    i - 1,
                    i
                );
            }
        }
        // arc length strictly increasing
        for i in 1..c.cumulative_arclength.len() {
            assert!(c.cumulative_arclength[i] > c.cumulative_arclength[i - 1]);
        }
    }

    #[test]
    fn thinned_cylinder_arclength_close_to_analytic() {
        // digital cylinder radius 4 along z, length 60; thinning erodes the
        // blunt ends by about one radius each, absorbed by the 15% allowance
        let geom = GridGeometry::new([16, 16, 64], [1.0, 1.0, 1.0], [0.0, 0.0, 0.0]);
        let mut m = LabelMask::zeros(geom);
        m.label_names.insert(1, "cyl".into());
        for z in 2..62 {
            for y in 0..16 {
                for x in 0..16 {
                    let dx = x as f64 - 7.5;
                    let dy = y as f64 - 7.5;
                    if (dx * dx + dy * dy).sqrt() <= 4.0 {
                        m.labels[geom.index([x, y, z])] = 1;
                    }
                }
            }
        }
        let s = thin(&m, 1).unwrap();
        let g = build_graph(&s);
        let c = longest_path(&g, &geom, None).unwrap();
        let analytic = 59.0f64; // voxel centers z=2..61
        let rel = (c.total_length() - analytic).abs() / analytic;
        assert!(rel < 0.15, "arc length {} vs analytic {analytic}", c.total_length());
    }
}
