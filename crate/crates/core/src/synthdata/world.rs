use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::geometry::KdTree;
use crate::pointcloud::{Point, PointCloud};
use crate::rng;

/// Owner id of ground points.
pub const GROUND_OWNER: u32 = u32::MAX;

/// Intensity ranges per surface class; each primitive draws one value from
/// its class band.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntensityBands {
    pub ground: (f64, f64),
    pub boxes: (f64, f64),
    pub cylinders: (f64, f64),
    pub planes: (f64, f64),
}

impl Default for IntensityBands {
    fn default() -> Self {
        Self {
            ground: (0.05, 0.15),
            boxes: (0.2, 0.45),
            cylinders: (0.5, 0.7),
            planes: (0.75, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldConfig {
    /// Road centerline; primitives are placed beside it.
    pub corridor: Vec<[f64; 2]>,
    pub corridor_half_width: f64,
    /// Width of the band beyond the road edge where primitives stand.
    pub roadside_width: f64,
    pub num_boxes: usize,
    pub num_cylinders: usize,
    pub num_planes: usize,
    /// Expected surface points per m² on primitives.
    pub surface_density: f64,
    /// Expected ground points per m²; ground covers the road plus `ground_margin`.
    pub ground_density: f64,
    pub ground_margin: f64,
    /// Length of the stretches of road that share a primitive mix.
    pub region_length: f64,
    /// Minimum clearance between primitive footprints.
    pub min_gap: f64,
    pub intensity: IntensityBands,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            corridor: vec![[-60.0, -60.0], [60.0, -60.0], [60.0, 60.0], [-60.0, 60.0], [-60.0, -60.0]],
            corridor_half_width: 4.0,
            roadside_width: 14.0,
            num_boxes: 60,
            num_cylinders: 60,
            num_planes: 30,
            surface_density: 2.0,
            ground_density: 0.6,
            ground_margin: 3.0,
            region_length: 40.0,
            min_gap: 0.5,
            intensity: IntensityBands::default(),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_boxes + self.num_cylinders + self.num_planes == 0 {
            return Err(Error::Config("world has no primitives".into()));
        }
        if self.corridor.len() < 2 {
            return Err(Error::Config("corridor needs at least two waypoints".into()));
        }
        let positive = [
            self.corridor_half_width,
            self.roadside_width,
            self.surface_density,
            self.region_length,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.ground_density >= 0.0 && self.min_gap >= 0.0 && self.ground_margin >= 0.0) {
            return Err(Error::Config(format!("invalid world config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimitiveKind {
    Box,
    Cylinder,
    Plane,
}

/// A primitive standing on the ground at `center`. `size` is
/// `(length, width, height)` for boxes, `(radius, radius, height)` for
/// cylinders and `(length, 0, height)` for vertical planes.
#[derive(Clone, Debug, PartialEq)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    pub center: [f64; 2],
    pub size: [f64; 3],
    pub yaw: f64,
    pub intensity: f64,
}

impl Primitive {
    pub fn footprint_radius(&self) -> f64 {
        match self.kind {
            PrimitiveKind::Box => 0.5 * self.size[0].hypot(self.size[1]),
            PrimitiveKind::Cylinder => self.size[0],
            PrimitiveKind::Plane => 0.5 * self.size[0],
        }
    }

    /// Total sampled surface area.
    pub fn area(&self) -> f64 {
        let [a, b, h] = self.size;
        match self.kind {
            PrimitiveKind::Box => 2.0 * (a + b) * h + a * b,
            PrimitiveKind::Cylinder => 2.0 * std::f64::consts::PI * a * h + std::f64::consts::PI * a * a,
            PrimitiveKind::Plane => a * h,
        }
    }

    fn local_to_world(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [
            self.center[0] + c * p[0] - s * p[1],
            self.center[1] + s * p[0] + c * p[1],
            p[2],
        ]
    }

    /// Samples the surface with a Poisson point count per face.
    fn sample_surface(&self, density: f64, r: &mut rng::Rng, out: &mut Vec<[f64; 3]>) {
        let [a, b, h] = self.size;
        let face = |area: f64, r: &mut rng::Rng, out: &mut Vec<[f64; 3]>, f: &dyn Fn(f64, f64) -> [f64; 3]| {
            let n = poisson(density * area, r);
            for _ in 0..n {
                let (u, v) = (r.random::<f64>(), r.random::<f64>());
                out.push(self.local_to_world(f(u, v)));
            }
        };
        match self.kind {
            PrimitiveKind::Box => {
                let (ha, hb) = (a / 2.0, b / 2.0);
                face(a * h, r, out, &|u, v| [(u - 0.5) * a, -hb, v * h]);
                face(a * h, r, out, &|u, v| [(u - 0.5) * a, hb, v * h]);
                face(b * h, r, out, &|u, v| [-ha, (u - 0.5) * b, v * h]);
                face(b * h, r, out, &|u, v| [ha, (u - 0.5) * b, v * h]);
                face(a * b, r, out, &|u, v| [(u - 0.5) * a, (v - 0.5) * b, h]);
            }
            PrimitiveKind::Cylinder => {
                let tau = std::f64::consts::TAU;
                face(tau * a * h, r, out, &|u, v| {
                    let t = u * tau;
                    [a * t.cos(), a * t.sin(), v * h]
                });
                face(std::f64::consts::PI * a * a, r, out, &|u, v| {
                    let (rad, t) = (a * u.sqrt(), v * tau);
                    [rad * t.cos(), rad * t.sin(), h]
                });
            }
            PrimitiveKind::Plane => {
                face(a * h, r, out, &|u, v| [(u - 0.5) * a, 0.0, v * h]);
            }
        }
    }
}

fn poisson(mean: f64, r: &mut rng::Rng) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(r) as usize).unwrap_or(0)
}

/// Generated scene: primitives and their pre-sampled surface points in the
/// world frame.
#[derive(Clone, Debug)]
pub struct SyntheticWorld {
    pub config: WorldConfig,
    pub seed: u64,
    pub primitives: Vec<Primitive>,
    pub points: PointCloud,
    /// Primitive index of each point, or [`GROUND_OWNER`].
    pub owner: Vec<u32>,
    pub(crate) tree: KdTree,
}

struct Corridor {
    segments: Vec<([f64; 2], [f64; 2], f64)>,
    length: f64,
}

impl Corridor {
    fn new(points: &[[f64; 2]]) -> Self {
        let mut segments = Vec::new();
        let mut length = 0.0;
        for w in points.windows(2) {
            let l = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            if l > 0.0 {
                segments.push((w[0], w[1], length));
                length += l;
            }
        }
        Self { segments, length }
    }

    /// Point and unit direction at arc length `s`.
    fn at(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let idx = self
            .segments
            .iter()
            .rposition(|(_, _, s0)| *s0 <= s)
            .unwrap_or(0);
        let (a, b, s0) = self.segments[idx];
        let l = (b[0] - a[0]).hypot(b[1] - a[1]);
        let d = [(b[0] - a[0]) / l, (b[1] - a[1]) / l];
        let t = (s - s0).clamp(0.0, l);
        ([a[0] + d[0] * t, a[1] + d[1] * t], d)
    }

    fn distance(&self, p: [f64; 2]) -> f64 {
        self.segments
            .iter()
            .map(|(a, b, _)| {
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
                (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn draw_primitive(kind: PrimitiveKind, cfg: &WorldConfig, r: &mut rng::Rng) -> Primitive {
    let band = match kind {
        PrimitiveKind::Box => cfg.intensity.boxes,
        PrimitiveKind::Cylinder => cfg.intensity.cylinders,
        PrimitiveKind::Plane => cfg.intensity.planes,
    };
    let size = match kind {
        PrimitiveKind::Box => [r.random_range(1.5..6.0), r.random_range(1.5..6.0), r.random_range(1.5..5.0)],
        PrimitiveKind::Cylinder => {
            let rad = r.random_range(0.2..1.0);
            [rad, rad, r.random_range(2.0..7.0)]
        }
        PrimitiveKind::Plane => [r.random_range(4.0..12.0), 0.0, r.random_range(2.0..4.0)],
    };
    Primitive {
        kind,
        center: [0.0, 0.0],
        size,
        yaw: r.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        intensity: r.random_range(band.0..=band.1),
    }
}

/// Places the configured primitives beside the corridor without overlap,
/// with class frequencies that vary from one stretch of road to the next,
/// and samples their surfaces and the ground.
pub fn generate_world(cfg: &WorldConfig, seed: u64) -> Result<SyntheticWorld> {
    cfg.validate()?;
    let corridor = Corridor::new(&cfg.corridor);
    if corridor.segments.is_empty() {
        return Err(Error::Config("corridor has zero length".into()));
    }
    let mut r = rng::seeded(rng::derive(seed, 1));
    let num_regions = (corridor.length / cfg.region_length).ceil().max(1.0) as usize;
    let kinds = [
        (PrimitiveKind::Box, cfg.num_boxes),
        (PrimitiveKind::Cylinder, cfg.num_cylinders),
        (PrimitiveKind::Plane, cfg.num_planes),
    ];
    let mut primitives: Vec<Primitive> = Vec::new();
    for (kind, count) in kinds {
        let weights: Vec<f64> = (0..num_regions).map(|_| r.random::<f64>().powi(2) + 0.05).collect();
        let total: f64 = weights.iter().sum();
        for _ in 0..count {
            let mut placed = false;
            for _ in 0..1000 {
                let mut pick = r.random::<f64>() * total;
                let mut region = num_regions - 1;
                for (i, w) in weights.iter().enumerate() {
                    if pick < *w {
                        region = i;
                        break;
                    }
                    pick -= w;
                }
                let s = ((region as f64 + r.random::<f64>()) * cfg.region_length).min(corridor.length);
                let (base, dir) = corridor.at(s);
                let mut prim = draw_primitive(kind, cfg, &mut r);
                let side = if r.random::<bool>() { 1.0 } else { -1.0 };
                let rad = prim.footprint_radius();
                let offset = cfg.corridor_half_width + cfg.min_gap + rad + r.random::<f64>() * cfg.roadside_width;
                prim.center = [base[0] - side * dir[1] * offset, base[1] + side * dir[0] * offset];
                if corridor.distance(prim.center) < cfg.corridor_half_width + cfg.min_gap + rad {
                    continue;
                }
                let clear = primitives.iter().all(|q| {
                    (q.center[0] - prim.center[0]).hypot(q.center[1] - prim.center[1])
                        >= q.footprint_radius() + rad + cfg.min_gap
                });
                if clear {
                    primitives.push(prim);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::Config(format!(
                    "could not place {} primitives without overlap; reduce counts or sizes",
                    cfg.num_boxes + cfg.num_cylinders + cfg.num_planes
                )));
            }
        }
    }

    let mut positions = Vec::new();
    let mut owner = Vec::new();
    let mut intensities = Vec::new();
    let mut sr = rng::seeded(rng::derive(seed, 2));
    for (i, prim) in primitives.iter().enumerate() {
        let before = positions.len();
        prim.sample_surface(cfg.surface_density, &mut sr, &mut positions);
        owner.extend(std::iter::repeat_n(i as u32, positions.len() - before));
        intensities.extend(std::iter::repeat_n(prim.intensity, positions.len() - before));
    }
    let half = cfg.corridor_half_width + cfg.ground_margin;
    for (a, b, _) in &corridor.segments {
        let l = (b[0] - a[0]).hypot(b[1] - a[1]);
        let d = [(b[0] - a[0]) / l, (b[1] - a[1]) / l];
        let n = poisson(cfg.ground_density * l * 2.0 * half, &mut sr);
        for _ in 0..n {
            let (u, v) = (sr.random::<f64>() * l, sr.random_range(-half..half));
            positions.push([a[0] + d[0] * u - d[1] * v, a[1] + d[1] * u + d[0] * v, 0.0]);
            owner.push(GROUND_OWNER);
            intensities.push(sr.random_range(cfg.intensity.ground.0..=cfg.intensity.ground.1));
        }
    }
    let points: PointCloud = positions
        .iter()
        .zip(&intensities)
        .map(|(p, &i)| Point::new(p[0], p[1], p[2], i))
        .collect();
    let tree = KdTree::new(positions);
    Ok(SyntheticWorld {
        config: cfg.clone(),
        seed,
        primitives,
        points,
        owner,
        tree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_box() -> WorldConfig {
        WorldConfig {
            num_boxes: 1,
            num_cylinders: 0,
            num_planes: 0,
            ground_density: 0.0,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn single_box_world() {
        let w = generate_world(&single_box(), 3).unwrap();
        assert_eq!(w.primitives.len(), 1);
        assert_eq!(w.primitives[0].kind, PrimitiveKind::Box);
        assert!(w.owner.iter().all(|&o| o == 0));
    }

    #[test]
    fn zero_primitives_rejected() {
        let cfg = WorldConfig {
            num_boxes: 0,
            num_cylinders: 0,
            num_planes: 0,
            ..WorldConfig::default()
        };
        assert!(matches!(generate_world(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_world() {
        let a = generate_world(&WorldConfig::default(), 11).unwrap();
        let b = generate_world(&WorldConfig::default(), 11).unwrap();
        assert_eq!(a.primitives, b.primitives);
        assert_eq!(a.points, b.points);
        let c = generate_world(&WorldConfig::default(), 12).unwrap();
        assert_ne!(a.primitives, c.primitives);
    }

    #[test]
    fn primitives_do_not_overlap() {
        let w = generate_world(&WorldConfig::default(), 5).unwrap();
        let gap = w.config.min_gap;
        for (i, a) in w.primitives.iter().enumerate() {
            for b in &w.primitives[i + 1..] {
                let d = (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1]);
                assert!(d >= a.footprint_radius() + b.footprint_radius() + gap - 1e-9);
            }
        }
    }

    #[test]
    fn surface_count_matches_density() {
        // Poisson total over the faces: mean and variance both ρA
        let cfg = WorldConfig {
            surface_density: 5.0,
            ..single_box()
        };
        let mut outside = 0;
        for seed in 0..40 {
            let w = generate_world(&cfg, seed).unwrap();
            let mean = cfg.surface_density * w.primitives[0].area();
            let n = w.points.len() as f64;
            if (n - mean).abs() > 3.0 * mean.sqrt() {
                outside += 1;
            }
        }
        // P(|Z| > 3) ≈ 0.0027; more than 2 of 40 is very unlikely
        assert!(outside <= 2, "{outside} worlds outside 3σ");
    }

    #[test]
    fn points_lie_on_surfaces() {
        let w = generate_world(&single_box(), 8).unwrap();
        let p = &w.primitives[0];
        let (s, c) = p.yaw.sin_cos();
        let [a, b, h] = p.size;
        for q in w.points.iter() {
            let (dx, dy) = (q.x - p.center[0], q.y - p.center[1]);
            let (lx, ly) = (c * dx + s * dy, -s * dx + c * dy);
            let on_side = ((lx.abs() - a / 2.0).abs() < 1e-9 && ly.abs() <= b / 2.0 + 1e-9)
                || ((ly.abs() - b / 2.0).abs() < 1e-9 && lx.abs() <= a / 2.0 + 1e-9);
            let on_top = (q.z - h).abs() < 1e-9;
            assert!(on_side || on_top);
            assert!(q.z >= 0.0 && q.z <= h + 1e-9);
        }
    }
}
