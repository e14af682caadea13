use super::distance::DistanceField;
use super::Scene;
use crate::error::{Error, Result};
use crate::geom::Vec2;

/// An ordered polyline with precomputed cumulative arc lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct PathPolyline {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl PathPolyline {
    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParam("polyline needs at least one point".into()));
        }
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in points.windows(2) {
            acc += w[0].distance(w[1]);
            cumulative.push(acc);
        }
        Ok(PathPolyline { points, cumulative })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    pub fn start(&self) -> Vec2 {
        self.points[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.points.last().expect("non-empty")
    }

    /// Point at arc length `s`, clamped to `[0, length]`.
    pub fn point_at(&self, s: f64) -> Vec2 {
        if self.points.len() == 1 || s <= 0.0 {
            return self.points[0];
        }
        if s >= self.length() {
            return self.end();
        }
        // first vertex with cumulative > s
        let k = self.cumulative.partition_point(|&c| c <= s);
        let (a, b) = (self.points[k - 1], self.points[k]);
        let seg = self.cumulative[k] - self.cumulative[k - 1];
        if seg <= 0.0 {
            return a;
        }
        a.lerp(b, (s - self.cumulative[k - 1]) / seg)
    }

    pub fn reversed(&self) -> PathPolyline {
        let mut pts = self.points.clone();
        pts.reverse();
        PathPolyline::new(pts).expect("non-empty")
    }
}

/// Shortest path between two points for a body needing `clearance` meters.
///
/// Runs Dijkstra on cells with sufficient clearance, follows the optimal
/// grid path, and then string-pulls it (drops waypoints while the straight
/// segment stays on passable cells). The path for the unordered pair is
/// canonical, so `shortest_path(a, b)` is the reverse of `shortest_path(b, a)`.
pub fn shortest_path(scene: &Scene, a: Vec2, b: Vec2, clearance: f64) -> Result<PathPolyline> {
    for p in [a, b] {
        if scene.grid().cell_of(p).is_none() {
            return Err(Error::OutOfBounds { x: p.x, y: p.y });
        }
        if !scene.is_navigable(p, clearance) {
            return Err(Error::NotNavigable { x: p.x, y: p.y });
        }
    }
    if a == b {
        return PathPolyline::new(vec![a]);
    }
    let swap = (b.x, b.y) < (a.x, a.y);
    let (from, to) = if swap { (b, a) } else { (a, b) };
    let mask = scene.passable_mask(clearance);
    let field = DistanceField::compute(scene.grid(), to, &mask)?;
    let path = path_from_field(scene, &field, &mask, from)?;
    Ok(if swap { path.reversed() } else { path })
}

/// Descends `field` from `from` to the field's goal, then string-pulls.
pub(crate) fn path_from_field(
    scene: &Scene,
    field: &DistanceField,
    mask: &[bool],
    from: Vec2,
) -> Result<PathPolyline> {
    let grid = scene.grid();
    let (sx, sy) = grid.cell_of(from).ok_or(Error::OutOfBounds { x: from.x, y: from.y })?;
    if !field.is_reachable(sx, sy) {
        return Err(Error::Disconnected);
    }
    let goal_idx = {
        let (gx, gy) = field.goal_cell();
        grid.index(gx, gy)
    };
    let res = grid.resolution();
    let values = field.values();
    let pass = |i: usize| mask[i];

    let mut raw = vec![from];
    let mut cur = grid.index(sx, sy);
    while cur != goal_idx {
        let mut next = None;
        let mut best = f64::INFINITY;
        for (n, diagonal) in grid.neighbours(cur, &pass) {
            let step = if diagonal { std::f64::consts::SQRT_2 * res } else { res };
            let total = values[n] + step;
            if values[n] < values[cur] && total < best {
                best = total;
                next = Some(n);
            }
        }
        cur = next.ok_or(Error::Disconnected)?;
        if cur != goal_idx {
            let (ix, iy) = grid.coords(cur);
            raw.push(grid.cell_center(ix, iy));
        }
    }
    raw.push(field.goal());
    PathPolyline::new(string_pull(scene, mask, &raw))
}

fn segment_clear(scene: &Scene, mask: &[bool], a: Vec2, b: Vec2) -> bool {
    let grid = scene.grid();
    let step = grid.resolution() * 0.25;
    let n = (a.distance(b) / step).ceil().max(1.0) as usize;
    (0..=n).all(|i| {
        let p = a.lerp(b, i as f64 / n as f64);
        grid.cell_of(p).is_some_and(|(ix, iy)| mask[grid.index(ix, iy)])
    })
}

fn string_pull(scene: &Scene, mask: &[bool], raw: &[Vec2]) -> Vec<Vec2> {
    let mut out = vec![raw[0]];
    let mut anchor = 0;
    while anchor + 1 < raw.len() {
        let mut reach = anchor + 1;
        while reach + 1 < raw.len() && segment_clear(scene, mask, raw[anchor], raw[reach + 1]) {
            reach += 1;
        }
        out.push(raw[reach]);
        anchor = reach;
    }
    out
}
