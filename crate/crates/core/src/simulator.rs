//! Deterministic quasi-static pushing of convex pieces on the unit board.
//!
//! Pieces translate but never rotate. The pusher is a thin bar of width
//! `pusher_width` that advances along the push in fixed substeps; pieces
//! touching it are displaced just enough to clear it, then piece-piece
//! overlaps are relaxed by splitting each pair's minimum translation vector.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Action, Vec2, DEFAULT_PUSHER_WIDTH};
use crate::imaging::Image;

type P = Vec2<f64>;

/// Depth of the pusher bar behind its leading edge, world units.
const PUSHER_THICKNESS: f64 = 0.02;
/// Extra clearance added when separating bodies.
const SLOP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub piece_radius: f64,
    pub verts_per_piece: usize,
    pub substeps_per_unit_length: usize,
    pub settle_iterations: usize,
    /// Largest tolerated pairwise overlap area.
    pub overlap_tol: f64,
    pub supersample: usize,
    pub pusher_width: f64,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            piece_radius: 0.02,
            verts_per_piece: 7,
            substeps_per_unit_length: 100,
            settle_iterations: 20,
            overlap_tol: 1e-4,
            supersample: 4,
            pusher_width: DEFAULT_PUSHER_WIDTH,
            rng_seed: 0,
        }
    }
}

/// Axis-aligned spawn region inside the workspace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Region {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn square(lo: f64, hi: f64) -> Self {
        Self::new(lo, lo, hi, hi)
    }

    pub fn contains(&self, p: P) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }

    fn is_valid(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        unit(self.x0) && unit(self.x1) && unit(self.y0) && unit(self.y1) && self.x0 <= self.x1 && self.y0 <= self.y1
    }
}

/// Convex polygon, counter-clockwise in `(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Piece {
    vertices: Vec<P>,
}

impl Piece {
    /// Validates convexity, orientation and positive area.
    pub fn new(vertices: Vec<P>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidValue(format!("piece needs at least 3 vertices, got {}", vertices.len())));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(Error::InvalidValue("non-finite piece vertex".into()));
        }
        let piece = Self { vertices };
        if piece.area() <= 0.0 {
            return Err(Error::InvalidValue("piece must be counter-clockwise with positive area".into()));
        }
        let m = piece.vertices.len();
        for k in 0..m {
            let (a, b, c) = (piece.vertices[k], piece.vertices[(k + 1) % m], piece.vertices[(k + 2) % m]);
            if (b - a).cross(c - b) < -1e-15 {
                return Err(Error::InvalidValue("piece is not convex".into()));
            }
        }
        Ok(piece)
    }

    pub fn vertices(&self) -> &[P] {
        &self.vertices
    }

    /// Signed shoelace area.
    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }

    pub fn centroid(&self) -> P {
        let m = self.vertices.len();
        let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
        for k in 0..m {
            let (p, q) = (self.vertices[k], self.vertices[(k + 1) % m]);
            let c = p.cross(q);
            a2 += c;
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        P::new(cx / (3.0 * a2), cy / (3.0 * a2))
    }

    pub fn translate(&mut self, d: P) {
        for v in &mut self.vertices {
            *v = *v + d;
        }
    }

    fn bounds(&self) -> (P, P) {
        let mut lo = P::new(f64::INFINITY, f64::INFINITY);
        let mut hi = P::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = P::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = P::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        (lo, hi)
    }

    fn project(&self, axis: P) -> (f64, f64) {
        self.vertices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            let d = v.dot(axis);
            (lo.min(d), hi.max(d))
        })
    }

    /// Closed point-in-polygon test.
    pub fn contains(&self, p: P) -> bool {
        let m = self.vertices.len();
        (0..m).all(|k| {
            let (a, b) = (self.vertices[k], self.vertices[(k + 1) % m]);
            (b - a).cross(p - a) >= 0.0
        })
    }

    /// Moves the piece inside the unit square.
    fn clamp_to_workspace(&mut self) -> bool {
        let (lo, hi) = self.bounds();
        let mut d = P::new(0.0, 0.0);
        if lo.x < 0.0 {
            d.x = -lo.x;
        } else if hi.x > 1.0 {
            d.x = 1.0 - hi.x;
        }
        if lo.y < 0.0 {
            d.y = -lo.y;
        } else if hi.y > 1.0 {
            d.y = 1.0 - hi.y;
        }
        if d.x != 0.0 || d.y != 0.0 {
            self.translate(d);
            true
        } else {
            false
        }
    }
}

pub fn polygon_area(v: &[P]) -> f64 {
    let m = v.len();
    (0..m).map(|k| v[k].cross(v[(k + 1) % m])).sum::<f64>() * 0.5
}

/// Minimum translation vector pushing `b` out of `a` (separating axis test).
fn penetration(a: &Piece, b: &Piece) -> Option<P> {
    let mut best: Option<(f64, P)> = None;
    for poly in [a, b] {
        let m = poly.vertices.len();
        for k in 0..m {
            let e = poly.vertices[(k + 1) % m] - poly.vertices[k];
            let len = e.norm();
            if len < 1e-15 {
                continue;
            }
            // outward normal of a CCW edge
            let axis = P::new(e.y / len, -e.x / len);
            let (amin, amax) = a.project(axis);
            let (bmin, bmax) = b.project(axis);
            let overlap = (amax - bmin).min(bmax - amin);
            if overlap <= 0.0 {
                return None;
            }
            if best.is_none_or(|(o, _)| overlap < o) {
                let dir = if amax - bmin <= bmax - amin { axis } else { axis * -1.0 };
                best = Some((overlap, dir));
            }
        }
    }
    best.map(|(o, dir)| dir * o)
}

fn boxes_overlap(a: &(P, P), b: &(P, P)) -> bool {
    a.0.x < b.1.x && b.0.x < a.1.x && a.0.y < b.1.y && b.0.y < a.1.y
}

/// Area of the intersection of two convex polygons (Sutherland-Hodgman clip).
pub fn intersection_area(a: &Piece, b: &Piece) -> f64 {
    let mut poly: Vec<P> = a.vertices.clone();
    let m = b.vertices.len();
    for k in 0..m {
        if poly.is_empty() {
            break;
        }
        let (e0, e1) = (b.vertices[k], b.vertices[(k + 1) % m]);
        let inside = |p: P| (e1 - e0).cross(p - e0) >= 0.0;
        let mut out = Vec::with_capacity(poly.len() + 2);
        for t in 0..poly.len() {
            let (cur, nxt) = (poly[t], poly[(t + 1) % poly.len()]);
            let (ci, ni) = (inside(cur), inside(nxt));
            if ci {
                out.push(cur);
            }
            if ci != ni {
                let d = nxt - cur;
                let denom = (e1 - e0).cross(d);
                if denom.abs() > 1e-300 {
                    let s = (e1 - e0).cross(e0 - cur) / denom;
                    out.push(cur + d * s);
                }
            }
        }
        poly = out;
    }
    if poly.len() < 3 {
        0.0
    } else {
        polygon_area(&poly).abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pieces: Vec<Piece>,
    pub seed: u64,
}

impl Scene {
    pub fn new(pieces: Vec<Piece>, seed: u64) -> Self {
        Self { pieces, seed }
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn centroids(&self) -> Vec<P> {
        self.pieces.iter().map(Piece::centroid).collect()
    }

    /// Largest pairwise intersection area.
    pub fn max_overlap(&self) -> f64 {
        let boxes: Vec<_> = self.pieces.iter().map(Piece::bounds).collect();
        let mut worst = 0.0f64;
        for i in 0..self.pieces.len() {
            for j in i + 1..self.pieces.len() {
                if boxes_overlap(&boxes[i], &boxes[j]) {
                    worst = worst.max(intersection_area(&self.pieces[i], &self.pieces[j]));
                }
            }
        }
        worst
    }

    /// Text snapshot: a `scene N=<count> seed=<seed>` header, then one
    /// `piece x0 y0 x1 y1 ...` line per piece.
    pub fn to_text(&self) -> String {
        let mut s = format!("scene N={} seed={}\n", self.pieces.len(), self.seed);
        for p in &self.pieces {
            s.push_str("piece");
            for v in &p.vertices {
                let _ = write!(s, " {} {}", v.x, v.y);
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty scene snapshot".into()))?;
        let mut count = None;
        let mut seed = None;
        let mut words = header.split_whitespace();
        if words.next() != Some("scene") {
            return Err(Error::Format(format!("bad scene header {header:?}")));
        }
        for w in words {
            if let Some(v) = w.strip_prefix("N=") {
                count = v.parse::<usize>().ok();
            } else if let Some(v) = w.strip_prefix("seed=") {
                seed = v.parse::<u64>().ok();
            }
        }
        let (count, seed) = match (count, seed) {
            (Some(c), Some(s)) => (c, s),
            _ => return Err(Error::Format(format!("bad scene header {header:?}"))),
        };
        let mut pieces = Vec::with_capacity(count);
        for line in lines {
            let mut words = line.split_whitespace();
            if words.next() != Some("piece") {
                return Err(Error::Format(format!("bad piece line {line:?}")));
            }
            let nums =
                words.map(|w| w.parse::<f64>().map_err(|_| Error::Format(format!("bad coordinate {w:?}")))).collect::<Result<Vec<_>>>()?;
            if nums.len() % 2 != 0 {
                return Err(Error::Format("odd number of piece coordinates".into()));
            }
            pieces.push(Piece::new(nums.chunks(2).map(|c| P::new(c[0], c[1])).collect())?);
        }
        if pieces.len() != count {
            return Err(Error::Format(format!("header declares {count} pieces, found {}", pieces.len())));
        }
        Ok(Self { pieces, seed })
    }

    /// Pairwise separation rounds; returns whether anything moved in the last round.
    fn relax_pairs(&mut self) -> bool {
        let boxes: Vec<_> = self.pieces.iter().map(Piece::bounds).collect();
        let mut moves = vec![P::new(0.0, 0.0); self.pieces.len()];
        let mut any = false;
        for i in 0..self.pieces.len() {
            for j in i + 1..self.pieces.len() {
                if !boxes_overlap(&boxes[i], &boxes[j]) {
                    continue;
                }
                if let Some(mtv) = penetration(&self.pieces[i], &self.pieces[j]) {
                    let len = mtv.norm();
                    let half = mtv * ((0.5 * len + SLOP) / len);
                    moves[i] = moves[i] - half;
                    moves[j] = moves[j] + half;
                    any = true;
                }
            }
        }
        if any {
            for (p, d) in self.pieces.iter_mut().zip(moves) {
                if d.x != 0.0 || d.y != 0.0 {
                    p.translate(d);
                }
            }
        }
        any
    }

    fn clamp_all(&mut self) -> bool {
        let mut any = false;
        for p in &mut self.pieces {
            any |= p.clamp_to_workspace();
        }
        any
    }
}

/// The pusher bar at one instant, in the frame of the push.
struct Pusher {
    start: P,
    dir: P,
    side: P,
    half_width: f64,
}

impl Pusher {
    fn new(a: &Action<f64>, width: f64) -> Self {
        let dir = a.direction();
        Self { start: a.start(), dir, side: dir.perp(), half_width: 0.5 * width }
    }

    /// Extent of the part of `piece` inside the lateral band, along the push,
    /// plus the piece's full lateral extent.
    fn extents(&self, piece: &Piece) -> Option<((f64, f64), (f64, f64))> {
        let local: Vec<(f64, f64)> = piece
            .vertices
            .iter()
            .map(|&v| {
                let d = v - self.start;
                (d.dot(self.dir), d.dot(self.side))
            })
            .collect();
        let (lat_lo, lat_hi) = local.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, l)| (lo.min(l), hi.max(l)));
        if lat_lo >= self.half_width || lat_hi <= -self.half_width {
            return None;
        }
        // clip the polygon to |lateral| <= half_width and take its extent along the push
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let m = local.len();
        let h = self.half_width;
        for k in 0..m {
            let (a, b) = (local[k], local[(k + 1) % m]);
            if a.1.abs() <= h {
                lo = lo.min(a.0);
                hi = hi.max(a.0);
            }
            for edge in [-h, h] {
                if (a.1 - edge) * (b.1 - edge) < 0.0 {
                    let s = (edge - a.1) / (b.1 - a.1);
                    let x = a.0 + s * (b.0 - a.0);
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
            }
        }
        if lo > hi {
            return None;
        }
        Some(((lo, hi), (lat_lo, lat_hi)))
    }

    /// Displacement clearing `piece` from the bar whose leading edge is at `t`.
    fn clearance(&self, piece: &Piece, t: f64) -> Option<P> {
        let ((lo, hi), (lat_lo, lat_hi)) = self.extents(piece)?;
        if lo >= t || hi <= t - PUSHER_THICKNESS {
            return None;
        }
        let forward = t - lo + SLOP;
        let right = self.half_width - lat_lo + SLOP;
        let left = lat_hi + self.half_width + SLOP;
        let d = if forward <= right && forward <= left {
            self.dir * forward
        } else if right <= left {
            self.side * right
        } else {
            self.side * -left
        };
        Some(d)
    }
}

pub fn spawn_scene(cfg: &SimConfig, count: usize, region: Region, seed: u64) -> Result<Scene> {
    spawn_scene_groups(cfg, &[(count, region)], seed)
}

/// Like [`spawn_scene`] with several `(count, region)` groups drawn in order
/// from one stream and settled together.
pub fn spawn_scene_groups(cfg: &SimConfig, groups: &[(usize, Region)], seed: u64) -> Result<Scene> {
    if groups.iter().any(|(_, r)| !r.is_valid()) {
        return Err(Error::InvalidRegion);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = cfg.piece_radius;
    let verts = cfg.verts_per_piece.max(3);
    let total: usize = groups.iter().map(|g| g.0).sum();
    let mut pieces = Vec::with_capacity(total);
    for &(count, region) in groups {
        let goal = pieces.len() + count;
        while pieces.len() < goal {
            let c = P::new(rng.gen_range(region.x0..=region.x1), rng.gen_range(region.y0..=region.y1));
            let mut angles: Vec<f64> = (0..verts).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
            angles.sort_by(f64::total_cmp);
            angles.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            // points on a circle in angular order are already their own convex hull
            let vertices: Vec<P> = angles.iter().map(|&t| c + P::from_angle(t) * r).collect();
            if vertices.len() < 3 || polygon_area(&vertices) < 0.05 * r * r {
                continue;
            }
            let mut piece = Piece::new(vertices)?;
            piece.clamp_to_workspace();
            pieces.push(piece);
        }
    }
    let mut scene = Scene { pieces, seed };
    let rounds = cfg.settle_iterations.max(1) * 50;
    for _ in 0..rounds {
        let moved = scene.relax_pairs();
        scene.clamp_all();
        if !moved {
            break;
        }
    }
    Ok(scene)
}

/// Whether the swept pusher meets any piece. Pushes that do not leave the
/// scene unchanged.
pub fn push_touches(scene: &Scene, a: &Action<f64>, cfg: &SimConfig) -> bool {
    let pusher = Pusher::new(a, cfg.pusher_width);
    scene.pieces.iter().any(|p| pusher.extents(p).is_some_and(|((lo, hi), _)| lo < a.length && hi > -PUSHER_THICKNESS))
}

/// Simulates one push. Pure function of its inputs.
pub fn apply_push(scene: &Scene, a: &Action<f64>, cfg: &SimConfig) -> Scene {
    let mut next = scene.clone();
    if !push_touches(scene, a, cfg) {
        return next;
    }
    let pusher = Pusher::new(a, cfg.pusher_width);
    let substeps = ((a.length * cfg.substeps_per_unit_length as f64).ceil() as usize).max(1);
    for s in 1..=substeps {
        let t = a.length * s as f64 / substeps as f64;
        let mut pushed = resolve_pusher(&mut next, &pusher, t);
        for _ in 0..cfg.settle_iterations {
            if !pushed {
                break;
            }
            let moved = next.relax_pairs();
            let clamped = next.clamp_all();
            let again = resolve_pusher(&mut next, &pusher, t);
            pushed = moved || clamped || again;
            if !moved {
                break;
            }
        }
        next.clamp_all();
    }
    next
}

fn resolve_pusher(scene: &mut Scene, pusher: &Pusher, t: f64) -> bool {
    let mut any = false;
    for p in &mut scene.pieces {
        if let Some(d) = pusher.clearance(p, t) {
            p.translate(d);
            any = true;
        }
    }
    any
}

/// Fraction of `supersample^2` subsample points per pixel covered by any piece.
pub fn rasterize(scene: &Scene, n: usize, supersample: usize) -> Image<f64> {
    let ss = supersample.max(1);
    let fine = n * ss;
    let mut covered = vec![false; fine * fine];
    let step = 1.0 / fine as f64;
    for piece in &scene.pieces {
        let (lo, hi) = piece.bounds();
        let col0 = ((lo.x / step - 0.5).floor().max(0.0)) as usize;
        let col1 = (((hi.x / step - 0.5).ceil()).max(0.0) as usize).min(fine - 1);
        let row0 = ((lo.y / step - 0.5).floor().max(0.0)) as usize;
        let row1 = (((hi.y / step - 0.5).ceil()).max(0.0) as usize).min(fine - 1);
        for r in row0..=row1 {
            for c in col0..=col1 {
                let k = r * fine + c;
                if !covered[k] && piece.contains(P::new((c as f64 + 0.5) * step, (r as f64 + 0.5) * step)) {
                    covered[k] = true;
                }
            }
        }
    }
    let norm = (ss * ss) as f64;
    Image::from_fn_clamped(n, |i, j| {
        let mut count = 0usize;
        for r in i * ss..(i + 1) * ss {
            count += covered[r * fine + j * ss..r * fine + (j + 1) * ss].iter().filter(|&&b| b).count();
        }
        count as f64 / norm
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{grand_sum, Image};

    fn square_piece(cx: f64, cy: f64, h: f64) -> Piece {
        Piece::new(vec![P::new(cx - h, cy - h), P::new(cx + h, cy - h), P::new(cx + h, cy + h), P::new(cx - h, cy + h)]).unwrap()
    }

    fn cfg() -> SimConfig {
        SimConfig::default()
    }

    #[test]
    fn empty_spawn() {
        let s = spawn_scene(&cfg(), 0, Region::square(0.1, 0.9), 1).unwrap();
        assert!(s.is_empty());
        assert!(spawn_scene(&cfg(), 3, Region::new(-0.1, 0.0, 0.5, 0.5), 1).is_err());
    }

    #[test]
    fn spawn_is_deterministic() {
        let a = spawn_scene(&cfg(), 30, Region::square(0.2, 0.8), 42).unwrap();
        let b = spawn_scene(&cfg(), 30, Region::square(0.2, 0.8), 42).unwrap();
        assert_eq!(a, b);
        let c = spawn_scene(&cfg(), 30, Region::square(0.2, 0.8), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn spawn_fifty_resolves_overlaps() {
        let region = Region::square(0.1, 0.9);
        for seed in 0..5 {
            let s = spawn_scene(&cfg(), 50, region, seed).unwrap();
            assert_eq!(s.len(), 50);
            let slack = cfg().piece_radius;
            for c in s.centroids() {
                // settling may nudge a centroid past the region edge by at most a radius
                assert!(c.x >= region.x0 - slack && c.x <= region.x1 + slack && c.y >= region.y0 - slack && c.y <= region.y1 + slack);
            }
            assert!(s.max_overlap() <= cfg().overlap_tol, "overlap {}", s.max_overlap());
            for p in s.pieces() {
                assert!(p.area() > 0.0);
            }
        }
    }

    #[test]
    fn push_missing_everything_is_identity() {
        let s = Scene::new(vec![square_piece(0.2, 0.2, 0.02)], 0);
        let a = Action::new(0.6, 0.6, 0.0, 0.2).unwrap();
        assert_eq!(apply_push(&s, &a, &cfg()), s);
    }

    #[test]
    fn single_piece_ends_ahead_of_pusher() {
        let h = 0.02;
        let d = 0.1;
        let s = Scene::new(vec![square_piece(0.3 + d, 0.5, h)], 0);
        let a = Action::new(0.3, 0.5, 0.0, 0.25).unwrap();
        let out = apply_push(&s, &a, &cfg());
        let c = out.pieces()[0].centroid();
        let pitch = 1.0 / 32.0;
        // the rear face ends on the pusher's final edge
        let expected = a.length - d + h;
        assert!(((c.x - (0.3 + d)) - expected).abs() <= 2.0 * pitch, "moved {}", c.x - 0.3 - d);
        assert!(c.x - h >= 0.3 + a.length - 1e-6);
        assert!((c.y - 0.5).abs() < 1e-9);
    }

    #[test]
    fn single_file_pieces_both_end_ahead() {
        let h = 0.02;
        let s = Scene::new(vec![square_piece(0.35, 0.5, h), square_piece(0.42, 0.5, h)], 0);
        let a = Action::new(0.3, 0.5, 0.0, 0.3).unwrap();
        let out = apply_push(&s, &a, &cfg());
        for p in out.pieces() {
            assert!(p.centroid().x - h >= 0.6 - 1e-6);
        }
        assert!(out.max_overlap() <= cfg().overlap_tol);
    }

    #[test]
    fn rasterize_examples() {
        let empty = rasterize(&Scene::new(vec![], 0), 8, 4);
        assert_eq!(empty, Image::zeros(8));
        let full = Scene::new(vec![square_piece(0.5, 0.5, 0.5)], 0);
        assert_eq!(rasterize(&full, 8, 4), Image::ones(8));
    }

    #[test]
    fn rasterize_supersample_convergence() {
        let s = spawn_scene(&cfg(), 40, Region::square(0.1, 0.9), 5).unwrap();
        let coarse = rasterize(&s, 32, 4);
        let fine = rasterize(&s, 32, 16);
        for (a, b) in coarse.as_slice().iter().zip(fine.as_slice()) {
            assert!((a - b).abs() <= 0.25);
        }
    }

    #[test]
    fn snapshot_roundtrip() {
        let s = spawn_scene(&cfg(), 12, Region::square(0.2, 0.8), 9).unwrap();
        let text = s.to_text();
        assert!(text.starts_with("scene N=12 seed=9\n"));
        assert_eq!(Scene::from_text(&text).unwrap(), s);
        assert!(Scene::from_text("scene N=2 seed=1\npiece 0 0 1 0 1 1\n").is_err());
    }

    #[test]
    fn intersection_area_of_offset_squares() {
        let a = square_piece(0.5, 0.5, 0.1);
        let b = square_piece(0.55, 0.55, 0.1);
        assert!((intersection_area(&a, &b) - 0.15 * 0.15).abs() < 1e-12);
        assert_eq!(intersection_area(&a, &square_piece(0.9, 0.9, 0.05)), 0.0);
    }

    #[test]
    fn push_conserves_mass_roughly() {
        let c = cfg();
        let s = spawn_scene(&c, 50, Region::square(0.2, 0.8), 3).unwrap();
        let a = Action::new(0.2, 0.5, 0.0, 0.3).unwrap();
        let before = grand_sum(&rasterize(&s, 32, 4));
        let after = grand_sum(&rasterize(&apply_push(&s, &a, &c), 32, 4));
        assert!((after - before).abs() <= 0.15 * before);
    }
}
