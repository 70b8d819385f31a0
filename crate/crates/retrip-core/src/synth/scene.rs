//! Scene construction: rectangles with reflectivity bands, assembled into
//! town and corridor layouts with reflective markers on walls and poles.

use nalgebra::{Point3, Unit, Vector3};
use rand_chacha::ChaCha8Rng;

use super::trajectory::figure_eight_point;
use super::{mix_seed, rng_for, uniform_in, SALT_BUILDINGS, SALT_MARKERS};

/// Uniform reflectivity distribution: `mean ± spread`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectivityBand {
    pub mean: f64,
    pub spread: f64,
}

impl ReflectivityBand {
    pub fn new(mean: f64, spread: f64) -> Self {
        ReflectivityBand { mean, spread }
    }

    pub(crate) fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        (uniform_in(rng, self.mean - self.spread, self.mean + self.spread)).max(0.0)
    }
}

/// World layout family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SceneLayout {
    /// Open world with buildings around a figure-eight course.
    Town {
        /// Circle radius of the figure-eight the scene keeps clear.
        course_radius: f64,
    },
    /// Long indoor corridor with repeated identical bays.
    Corridor {
        length: f64,
        width: f64,
        bay_spacing: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub seed: u64,
    pub num_markers: usize,
    pub marker_reflectivity: ReflectivityBand,
    pub background_reflectivity: ReflectivityBand,
    /// Number of wall structures: buildings for the town layout, bays per
    /// side for the corridor layout.
    pub num_walls: usize,
    /// Half-extent of the world, meters.
    pub world_extent: f64,
    /// Fraction of returns per scan replaced by transient clutter.
    pub dynamic_ratio: f64,
    /// Range noise applied along each beam, meters.
    pub noise_sigma_xyz: f64,
    /// Sensor reflectivity noise, reflectivity units.
    pub noise_sigma_r: f64,
    pub layout: SceneLayout,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            seed: 1,
            num_markers: 30,
            marker_reflectivity: ReflectivityBand::new(200.0, 10.0),
            background_reflectivity: ReflectivityBand::new(20.0, 5.0),
            num_walls: 10,
            world_extent: 100.0,
            dynamic_ratio: 0.0,
            noise_sigma_xyz: 0.01,
            noise_sigma_r: 2.0,
            layout: SceneLayout::Town {
                course_radius: 250.0 / (4.0 * std::f64::consts::PI),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceKind {
    Ground,
    Ceiling,
    Wall,
    Pole,
    Marker(u32),
}

/// A bounded rectangle: center plus two half-edge vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub center: Point3<f64>,
    pub half_u: Vector3<f64>,
    pub half_v: Vector3<f64>,
    pub normal: Unit<Vector3<f64>>,
    pub reflectivity: ReflectivityBand,
    pub kind: SurfaceKind,
    // Cached for ray intersection.
    pub(crate) u_dir: Vector3<f64>,
    pub(crate) v_dir: Vector3<f64>,
    pub(crate) u_len: f64,
    pub(crate) v_len: f64,
}

impl Surface {
    pub fn new(
        center: Point3<f64>,
        half_u: Vector3<f64>,
        half_v: Vector3<f64>,
        reflectivity: ReflectivityBand,
        kind: SurfaceKind,
    ) -> Self {
        let u_len = half_u.norm();
        let v_len = half_v.norm();
        let u_dir = half_u / u_len;
        let v_dir = half_v / v_len;
        let normal = Unit::new_normalize(half_u.cross(&half_v));
        Surface {
            center,
            half_u,
            half_v,
            normal,
            reflectivity,
            kind,
            u_dir,
            v_dir,
            u_len,
            v_len,
        }
    }
}

/// Manifest entry for one reflective marker.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerInfo {
    pub id: u32,
    pub center: Point3<f64>,
    pub width: f64,
    pub height: f64,
    pub normal: Vector3<f64>,
    pub reflectivity: ReflectivityBand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub config: SceneConfig,
    pub surfaces: Vec<Surface>,
    pub markers: Vec<MarkerInfo>,
}

impl Scene {
    /// A bare scene over explicit surfaces, for tests and custom worlds.
    pub fn from_surfaces(config: SceneConfig, surfaces: Vec<Surface>) -> Self {
        Scene {
            config,
            surfaces,
            markers: Vec::new(),
        }
    }
}

/// Deterministic function of the config: same seed, same scene.
pub fn generate_scene(cfg: &SceneConfig) -> Scene {
    match cfg.layout {
        SceneLayout::Town { course_radius } => generate_town(cfg, course_radius),
        SceneLayout::Corridor {
            length,
            width,
            bay_spacing,
        } => generate_corridor(cfg, length, width, bay_spacing),
    }
}

fn ground_surface(cfg: &SceneConfig, half: f64) -> Surface {
    Surface::new(
        Point3::new(0.0, 0.0, 0.0),
        Vector3::new(half, 0.0, 0.0),
        Vector3::new(0.0, half, 0.0),
        cfg.background_reflectivity,
        SurfaceKind::Ground,
    )
}

/// Four vertical walls of an axis-aligned box footprint.
fn box_walls(
    cx: f64,
    cy: f64,
    half_x: f64,
    half_y: f64,
    height: f64,
    reflectivity: ReflectivityBand,
    kind: SurfaceKind,
) -> Vec<Surface> {
    let hz = height / 2.0;
    vec![
        Surface::new(
            Point3::new(cx + half_x, cy, hz),
            Vector3::new(0.0, half_y, 0.0),
            Vector3::new(0.0, 0.0, hz),
            reflectivity,
            kind,
        ),
        Surface::new(
            Point3::new(cx - half_x, cy, hz),
            Vector3::new(0.0, half_y, 0.0),
            Vector3::new(0.0, 0.0, hz),
            reflectivity,
            kind,
        ),
        Surface::new(
            Point3::new(cx, cy + half_y, hz),
            Vector3::new(half_x, 0.0, 0.0),
            Vector3::new(0.0, 0.0, hz),
            reflectivity,
            kind,
        ),
        Surface::new(
            Point3::new(cx, cy - half_y, hz),
            Vector3::new(half_x, 0.0, 0.0),
            Vector3::new(0.0, 0.0, hz),
            reflectivity,
            kind,
        ),
    ]
}

/// Vertical marker rectangle facing `normal` (horizontal unit vector).
fn marker_surface(
    id: u32,
    center: Point3<f64>,
    half_w: f64,
    half_h: f64,
    normal: Vector3<f64>,
    reflectivity: ReflectivityBand,
) -> (Surface, MarkerInfo) {
    let along = Vector3::new(-normal.y, normal.x, 0.0);
    let surface = Surface::new(
        center,
        along * half_w,
        Vector3::new(0.0, 0.0, half_h),
        reflectivity,
        SurfaceKind::Marker(id),
    );
    let info = MarkerInfo {
        id,
        center,
        width: 2.0 * half_w,
        height: 2.0 * half_h,
        normal,
        reflectivity,
    };
    (surface, info)
}

fn generate_town(cfg: &SceneConfig, course_radius: f64) -> Scene {
    let mut surfaces = vec![ground_surface(cfg, cfg.world_extent)];
    let mut markers = Vec::new();
    let lap = 4.0 * std::f64::consts::PI * course_radius;

    // Course samples for clearance checks.
    let course: Vec<(f64, f64)> = (0..(lap / 0.5) as usize)
        .map(|i| {
            let p = figure_eight_point(course_radius, i as f64 * 0.5);
            (p.0, p.1)
        })
        .collect();
    let clear_of_course = |x: f64, y: f64, margin: f64| {
        course
            .iter()
            .all(|&(cx, cy)| (cx - x).hypot(cy - y) > margin)
    };

    // Buildings: axis-aligned boxes kept clear of the course.
    let mut rng = rng_for(cfg.seed, SALT_BUILDINGS, 0);
    let mut placed: Vec<(f64, f64, f64)> = Vec::new();
    for _ in 0..cfg.num_walls {
        for _attempt in 0..200 {
            let half = uniform_in(&mut rng, 4.0, 7.0);
            let x = uniform_in(&mut rng, -0.8 * cfg.world_extent, 0.8 * cfg.world_extent);
            let y = uniform_in(&mut rng, -0.8 * cfg.world_extent, 0.8 * cfg.world_extent);
            let margin = half * std::f64::consts::SQRT_2 + 3.0;
            if !clear_of_course(x, y, margin) {
                continue;
            }
            if placed
                .iter()
                .any(|&(px, py, ph)| (px - x).hypot(py - y) < (half + ph) * 1.5 + 2.0)
            {
                continue;
            }
            let height = uniform_in(&mut rng, 6.0, 10.0);
            surfaces.extend(box_walls(
                x,
                y,
                half,
                half,
                height,
                cfg.background_reflectivity,
                SurfaceKind::Wall,
            ));
            placed.push((x, y, half));
            break;
        }
    }

    // Markers: stratified along the course arc so coverage stays uniform,
    // pole-mounted at the roadside, with a marker plate facing the course.
    let mut mrng = rng_for(cfg.seed, SALT_MARKERS, 0);
    for id in 0..cfg.num_markers as u32 {
        let base_arc = (id as f64 + 0.5) / cfg.num_markers.max(1) as f64 * lap;
        let mut chosen: Option<(Point3<f64>, Vector3<f64>)> = None;
        for _attempt in 0..40 {
            let arc = base_arc + uniform_in(&mut mrng, -2.0, 2.0);
            let (px, py, tx, ty) = figure_eight_point(course_radius, arc.rem_euclid(lap));
            // Lateral left/right of travel direction.
            let side = if mix_seed(cfg.seed, SALT_MARKERS, 1000 + id as u64) % 2 == 0 {
                1.0
            } else {
                -1.0
            };
            let lateral = Vector3::new(-ty, tx, 0.0) * side;
            let offset = uniform_in(&mut mrng, 2.5, 5.0);
            let pos = Vector3::new(px, py, 0.0) + lateral * offset;
            let z = uniform_in(&mut mrng, 1.2, 2.0);
            let center = Point3::new(pos.x, pos.y, z);
            let far_enough = markers
                .iter()
                .all(|m: &MarkerInfo| (m.center - center).norm() > 3.0);
            if far_enough {
                chosen = Some((center, -lateral));
                break;
            }
        }
        let (center, facing) = chosen.unwrap_or_else(|| {
            let (px, py, tx, ty) = figure_eight_point(course_radius, base_arc.rem_euclid(lap));
            let lateral = Vector3::new(-ty, tx, 0.0);
            (
                Point3::new(px + lateral.x * 4.0, py + lateral.y * 4.0, 1.6),
                -lateral,
            )
        });
        // Supporting pole: two crossed thin rectangles, background colored.
        let pole_h = 3.0;
        surfaces.push(Surface::new(
            Point3::new(center.x, center.y, pole_h / 2.0),
            Vector3::new(0.06, 0.0, 0.0),
            Vector3::new(0.0, 0.0, pole_h / 2.0),
            cfg.background_reflectivity,
            SurfaceKind::Pole,
        ));
        surfaces.push(Surface::new(
            Point3::new(center.x, center.y, pole_h / 2.0),
            Vector3::new(0.0, 0.06, 0.0),
            Vector3::new(0.0, 0.0, pole_h / 2.0),
            cfg.background_reflectivity,
            SurfaceKind::Pole,
        ));
        let half_w = uniform_in(&mut mrng, 0.25, 0.5);
        let half_h = uniform_in(&mut mrng, 0.3, 0.5);
        let plate_center = center + facing * 0.08;
        let (surface, info) = marker_surface(
            id,
            plate_center,
            half_w,
            half_h,
            facing,
            cfg.marker_reflectivity,
        );
        surfaces.push(surface);
        markers.push(info);
    }

    Scene {
        config: *cfg,
        surfaces,
        markers,
    }
}

fn generate_corridor(cfg: &SceneConfig, length: f64, width: f64, bay_spacing: f64) -> Scene {
    let hw = width / 2.0;
    let wall_h = 3.0;
    let bay_depth = 0.8;
    let bay_half_w = 1.5;
    let mut surfaces = Vec::new();

    // Floor and ceiling span the corridor plus margins.
    surfaces.push(Surface::new(
        Point3::new(length / 2.0, 0.0, 0.0),
        Vector3::new(length / 2.0 + 1.0, 0.0, 0.0),
        Vector3::new(0.0, hw + 1.0, 0.0),
        cfg.background_reflectivity,
        SurfaceKind::Ground,
    ));
    surfaces.push(Surface::new(
        Point3::new(length / 2.0, 0.0, wall_h),
        Vector3::new(length / 2.0 + 1.0, 0.0, 0.0),
        Vector3::new(0.0, hw + 1.0, 0.0),
        cfg.background_reflectivity,
        SurfaceKind::Ceiling,
    ));
    // Side walls and end caps.
    for side in [-1.0, 1.0] {
        surfaces.push(Surface::new(
            Point3::new(length / 2.0, side * hw, wall_h / 2.0),
            Vector3::new(length / 2.0, 0.0, 0.0),
            Vector3::new(0.0, 0.0, wall_h / 2.0),
            cfg.background_reflectivity,
            SurfaceKind::Wall,
        ));
    }
    for cap_x in [0.0, length] {
        surfaces.push(Surface::new(
            Point3::new(cap_x, 0.0, wall_h / 2.0),
            Vector3::new(0.0, hw, 0.0),
            Vector3::new(0.0, 0.0, wall_h / 2.0),
            cfg.background_reflectivity,
            SurfaceKind::Wall,
        ));
    }

    // Identical bays protruding from both walls at regular spacing: the
    // geometrically degenerate part of the layout.
    let bays_per_side = cfg.num_walls.min((length / bay_spacing) as usize);
    let mut bay_ranges: Vec<(f64, f64, f64)> = Vec::new();
    for b in 0..bays_per_side {
        let bx = (b as f64 + 0.5) * bay_spacing;
        if bx + bay_half_w > length - 1.0 {
            continue;
        }
        for side in [-1.0f64, 1.0] {
            let front_y = side * (hw - bay_depth);
            // Front face.
            surfaces.push(Surface::new(
                Point3::new(bx, front_y, wall_h / 2.0),
                Vector3::new(bay_half_w, 0.0, 0.0),
                Vector3::new(0.0, 0.0, wall_h / 2.0),
                cfg.background_reflectivity,
                SurfaceKind::Wall,
            ));
            // Side faces.
            for end in [-1.0, 1.0] {
                surfaces.push(Surface::new(
                    Point3::new(
                        bx + end * bay_half_w,
                        side * (hw - bay_depth / 2.0),
                        wall_h / 2.0,
                    ),
                    Vector3::new(0.0, bay_depth / 2.0, 0.0),
                    Vector3::new(0.0, 0.0, wall_h / 2.0),
                    cfg.background_reflectivity,
                    SurfaceKind::Wall,
                ));
            }
            bay_ranges.push((bx - bay_half_w, bx + bay_half_w, side));
        }
    }

    // Markers stratified along the corridor, alternating walls; a marker
    // falling inside a bay footprint mounts on the bay front instead.
    let mut markers = Vec::new();
    let mut mrng = rng_for(cfg.seed, SALT_MARKERS, 0);
    for id in 0..cfg.num_markers as u32 {
        let x = ((id as f64 + 0.5) / cfg.num_markers.max(1) as f64) * (length - 4.0)
            + 2.0
            + uniform_in(&mut mrng, -0.8, 0.8);
        let side = if id % 2 == 0 { 1.0 } else { -1.0 };
        let in_bay = bay_ranges
            .iter()
            .any(|&(lo, hi, bside)| bside == side && x >= lo && x <= hi);
        let wall_y = if in_bay {
            side * (hw - bay_depth)
        } else {
            side * hw
        };
        let normal = Vector3::new(0.0, -side, 0.0);
        let z = uniform_in(&mut mrng, 1.0, 2.2);
        let half_w = uniform_in(&mut mrng, 0.2, 0.45);
        let half_h = uniform_in(&mut mrng, 0.25, 0.45);
        let center = Point3::new(x, wall_y - side * 0.05, z);
        let (surface, info) =
            marker_surface(id, center, half_w, half_h, normal, cfg.marker_reflectivity);
        surfaces.push(surface);
        markers.push(info);
    }

    Scene {
        config: *cfg,
        surfaces,
        markers,
    }
}
