//! Procedural street scenes with known geometry.
//!
//! A closed loop road is lined with buildings, light poles (some carrying
//! traffic lights), telegraph poles, traffic signs and trees. Every round
//! samples the same surfaces with fresh jitter, and short-lived "movers" are
//! added to single rounds. Ground truth rasters come from ray casting the
//! shapes directly, see [`SyntheticScene::ground_truth`].

mod layout;
mod primitives;
mod truth;

pub use layout::{CrossSection, Stadium, Station};
pub use primitives::{faces, Primitive, Shape};

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::render::LabelMap;
use crate::semantic_map::{ClassRegistry, SemanticPoint, SemanticPointCloud};

/// Scene parameters. Lengths are meters, densities are counts per 100 m of
/// road side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    /// Centerline length of the loop.
    pub road_length: f64,
    pub curve_radius: f64,
    /// Width of each of the two car lanes.
    pub lane_width: f64,
    pub bike_lane_width: f64,
    pub curb_width: f64,
    pub ped_lane_width: f64,
    pub camera_height: f64,
    pub building_density: f64,
    pub light_pole_spacing: f64,
    pub tele_pole_spacing: f64,
    pub sign_density: f64,
    pub tree_density: f64,
    /// Distance between neighboring surface samples.
    pub point_spacing: f64,
    /// Sample spacing on building facades, which are seen from farther away
    /// and get the largest splats.
    pub facade_spacing: f64,
    /// Ground samples lie on rows `point_spacing` apart across the road and
    /// `ground_spacing_along` apart along it. Seen from the camera height the
    /// ground is foreshortened, so the along-road spacing can be coarser.
    pub ground_spacing_along: f64,
    /// Uniform per-axis jitter added to every sample of every round.
    pub jitter: f64,
    /// Frame spacing of each drive is drawn once from this range.
    pub frame_spacing_min: f64,
    pub frame_spacing_max: f64,
    pub frames: usize,
    pub rounds: usize,
    /// Movers per round per 100 m of road.
    pub mover_rate: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            road_length: 400.0,
            curve_radius: 25.0,
            lane_width: 3.5,
            bike_lane_width: 0.0,
            curb_width: 0.3,
            ped_lane_width: 2.5,
            camera_height: 1.5,
            building_density: 4.0,
            light_pole_spacing: 30.0,
            tele_pole_spacing: 45.0,
            sign_density: 2.0,
            tree_density: 4.0,
            point_spacing: 0.025,
            facade_spacing: 0.05,
            ground_spacing_along: 0.045,
            jitter: 0.005,
            frame_spacing_min: 5.0,
            frame_spacing_max: 10.0,
            frames: 100,
            rounds: 6,
            mover_rate: 1.0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("road_length", self.road_length),
            ("curve_radius", self.curve_radius),
            ("lane_width", self.lane_width),
            ("camera_height", self.camera_height),
            ("point_spacing", self.point_spacing),
            ("facade_spacing", self.facade_spacing),
            ("ground_spacing_along", self.ground_spacing_along),
            ("frame_spacing_min", self.frame_spacing_min),
            ("light_pole_spacing", self.light_pole_spacing),
            ("tele_pole_spacing", self.tele_pole_spacing),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("scene {name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("bike_lane_width", self.bike_lane_width),
            ("curb_width", self.curb_width),
            ("ped_lane_width", self.ped_lane_width),
            ("building_density", self.building_density),
            ("sign_density", self.sign_density),
            ("tree_density", self.tree_density),
            ("jitter", self.jitter),
            ("mover_rate", self.mover_rate),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("scene {name} must be non-negative, got {v}")));
            }
        }
        if self.road_length < 2.0 * std::f64::consts::PI * self.curve_radius {
            return Err(Error::invalid(format!(
                "road length {} is shorter than the two curves of radius {}",
                self.road_length, self.curve_radius
            )));
        }
        if self.curve_radius <= self.half_width() {
            return Err(Error::invalid("curve radius must exceed the road half width"));
        }
        if self.frame_spacing_max < self.frame_spacing_min {
            return Err(Error::invalid("frame_spacing_max is below frame_spacing_min"));
        }
        if self.rounds == 0 || self.rounds > 255 {
            return Err(Error::invalid(format!(
                "scene rounds must be in 1..=255, got {}",
                self.rounds
            )));
        }
        Ok(())
    }

    fn half_width(&self) -> f64 {
        self.lane_width + self.bike_lane_width + self.curb_width + self.ped_lane_width
    }

    pub fn layout(&self) -> Stadium {
        Stadium {
            straight: (self.road_length - 2.0 * std::f64::consts::PI * self.curve_radius) / 2.0,
            radius: self.curve_radius,
        }
    }

    pub fn cross_section(&self, registry: &ClassRegistry) -> CrossSection {
        let mut edge = 0.0;
        let mut bands = Vec::new();
        for (w, name) in [
            (self.lane_width, "car-lane"),
            (self.bike_lane_width, "bike-lane"),
            (self.curb_width, "curb"),
            (self.ped_lane_width, "ped-lane"),
        ] {
            if w > 0.0 {
                edge += w;
                bands.push((edge, registry.id(name)));
            }
        }
        CrossSection { bands }
    }

    /// Lateral offset of the right-hand lane center.
    pub fn lane_offset(&self) -> f64 {
        -self.lane_width / 2.0
    }
}

/// A generated scene with everything needed to run and check the pipeline.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub seed: u64,
    pub layout: Stadium,
    pub section: CrossSection,
    pub registry: ClassRegistry,
    /// Static shapes; the ground is handled separately.
    pub primitives: Vec<Primitive>,
    /// Movers as `(round, shape)`.
    pub movers: Vec<(u8, Primitive)>,
    pub rounds: Vec<SemanticPointCloud>,
    /// One drive per round at that round's frame spacing.
    pub scan_trajectories: Vec<Vec<Pose>>,
    /// Densely spaced lap used to size splats.
    pub mapping_trajectory: Vec<Pose>,
    /// The evaluation drive.
    pub trajectory: Vec<Pose>,
    /// Lateral ground rows as `(offset, class)`.
    ground_rows: Vec<(f64, u8)>,
}

/// Ground rows at the cell centers of an even partition of the cross section.
fn ground_rows(section: &CrossSection, spacing: f64) -> Vec<(f64, u8)> {
    let hw = section.half_width();
    let n = ((2.0 * hw) / spacing).round().max(1.0) as usize;
    (0..n)
        .filter_map(|j| {
            let o = -hw + (j as f64 + 0.5) * 2.0 * hw / n as f64;
            section.class_at(o).map(|c| (o, c))
        })
        .collect()
}

fn drive(layout: &Stadium, spec: &SceneSpec, start: f64, spacing: f64, frames: usize) -> Vec<Pose> {
    (0..frames)
        .map(|i| {
            let o = spec.lane_offset();
            let st = layout.station(layout.centerline_u(start + i as f64 * spacing, o), o);
            Pose::looking_along(Vector3::new(st.x, st.y, spec.camera_height), st.heading)
        })
        .collect()
}

/// Positions along the centerline with gaps drawn around `100 / density`.
fn scatter(rng: &mut ChaCha8Rng, perimeter: f64, density: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if density <= 0.0 {
        return out;
    }
    let mean = 100.0 / density;
    let mut u = rng.gen_range(0.0..mean);
    while u < perimeter {
        out.push(u);
        u += mean * rng.gen_range(0.5..1.5);
    }
    out
}

fn ground_point(layout: &Stadium, u: f64, o: f64, z: f64) -> (Point3<f64>, f64) {
    let st = layout.station(u, o);
    (Point3::new(st.x, st.y, z), st.heading)
}

struct Planter<'a> {
    spec: &'a SceneSpec,
    layout: Stadium,
    registry: &'a ClassRegistry,
    out: Vec<Primitive>,
}

impl Planter<'_> {
    fn class(&self, name: &str) -> u8 {
        self.registry.id(name)
    }

    fn push(&mut self, shape: Shape, class: &str) {
        let class_id = self.class(class);
        self.out.push(Primitive { shape, class_id });
    }

    fn pole(&mut self, u: f64, o: f64, radius: f64, height: f64, class: &str) -> (Point3<f64>, f64) {
        let (base, heading) = ground_point(&self.layout, u, o, 0.0);
        self.push(Shape::Cylinder { base, radius, height }, class);
        (base, heading)
    }

    fn buildings(&mut self, rng: &mut ChaCha8Rng, side: f64) {
        let hw = self.spec.half_width();
        let front = hw + 5.0;
        let perimeter = self.layout.perimeter();
        let density = self.spec.building_density;
        if density <= 0.0 {
            return;
        }
        let mean_len: f64 = 17.5;
        let mut u = rng.gen_range(0.0..10.0);
        loop {
            let len = rng.gen_range(10.0..25.0);
            let mut depth: f64 = rng.gen_range(8.0..15.0);
            let height = rng.gen_range(5.0..14.0);
            let (lo, hi) = (u, u + len);
            if hi >= perimeter {
                break;
            }
            let fits = if side > 0.0 {
                depth = depth.min(self.spec.curve_radius - 1.0 - front);
                self.layout.on_straight(lo)
                    && self.layout.on_straight(hi)
                    && self.straight_index(lo) == self.straight_index(hi)
            } else {
                true
            };
            if fits && depth >= 4.0 {
                let mid = (lo + hi) / 2.0;
                let o = side * (front + depth / 2.0);
                let st = self.layout.station(mid, o);
                self.push(
                    Shape::Box {
                        center: Point3::new(st.x, st.y, height / 2.0),
                        yaw: st.heading,
                        half: Vector3::new(len / 2.0, depth / 2.0, height / 2.0),
                        // The face away from the road is never visible.
                        faces: faces::VERTICAL & !if side > 0.0 { faces::POS_Y } else { faces::NEG_Y },
                    },
                    "building",
                );
            }
            let gap = (100.0 / density - mean_len).max(2.0) * rng.gen_range(0.5..1.5);
            u = hi + gap;
        }
    }

    fn straight_index(&self, u: f64) -> u8 {
        u8::from(u >= self.layout.straight + std::f64::consts::PI * self.layout.radius)
    }

    fn plant(mut self, rng: &mut ChaCha8Rng) -> Vec<Primitive> {
        let spec = self.spec;
        let hw = spec.half_width();
        let perimeter = self.layout.perimeter();
        let ped_mid = hw - spec.ped_lane_width / 2.0;

        self.buildings(rng, -1.0);
        self.buildings(rng, 1.0);

        let mut k = 0usize;
        let mut u = rng.gen_range(0.0..spec.light_pole_spacing);
        while u < perimeter {
            for side in [-1.0, 1.0] {
                let (base, heading) = self.pole(u, side * ped_mid, 0.12, 7.0, "light-pole");
                if k.is_multiple_of(3) {
                    // Signal head hung on the road side of the pole.
                    let toward = Vector3::new(-heading.sin(), heading.cos(), 0.0) * side;
                    let c = base + Vector3::new(0.0, 0.0, 5.5) - toward * 0.35;
                    self.push(
                        Shape::Box {
                            center: c,
                            yaw: heading,
                            half: Vector3::new(0.18, 0.18, 0.45),
                            faces: faces::ALL,
                        },
                        "traffic-light",
                    );
                }
            }
            k += 1;
            u += spec.light_pole_spacing;
        }

        let mut u = rng.gen_range(0.0..spec.tele_pole_spacing);
        while u < perimeter {
            self.pole(u, -(hw + 0.8), 0.15, 9.0, "tele-pole");
            u += spec.tele_pole_spacing;
        }

        for side in [-1.0, 1.0] {
            for u in scatter(rng, perimeter, spec.sign_density / 2.0) {
                let o = side * (hw - spec.ped_lane_width + 0.5);
                let (base, heading) = self.pole(u, o, 0.04, 2.2, "traffic-sign");
                self.push(
                    Shape::Box {
                        center: base + Vector3::new(0.0, 0.0, 2.55),
                        yaw: heading,
                        half: Vector3::new(0.025, 0.35, 0.35),
                        faces: faces::ALL,
                    },
                    "traffic-sign",
                );
            }
        }

        for side in [-1.0, 1.0] {
            for u in scatter(rng, perimeter, spec.tree_density) {
                let r = rng.gen_range(1.2..2.0);
                let (base, _) = self.pole(u, side * (hw + 2.0), 0.15, 2.5, "plants");
                self.push(
                    Shape::Sphere {
                        center: base + Vector3::new(0.0, 0.0, 2.5 + 0.8 * r),
                        radius: r,
                    },
                    "plants",
                );
            }
        }
        self.out
    }
}

impl SyntheticScene {
    /// Ground class at a world position on the ground plane, if any.
    pub fn ground_class(&self, x: f64, y: f64) -> Option<u8> {
        let hw = self.section.half_width();
        let o = self.layout.lateral_offset(x, y);
        if o.abs() > hw || self.ground_rows.is_empty() {
            return None;
        }
        let n = ((2.0 * hw) / self.spec.point_spacing).round().max(1.0) as usize;
        let j = (((o + hw) / (2.0 * hw) * n as f64).floor() as usize).min(n - 1);
        let oj = -hw + (j as f64 + 0.5) * 2.0 * hw / n as f64;
        self.section.class_at(oj)
    }

    /// Ground-truth label maps of the evaluation drive.
    pub fn frame_labels(&self, k: &CameraIntrinsics) -> Vec<LabelMap> {
        self.trajectory.iter().map(|p| self.ground_truth(p, k).0).collect()
    }

    /// Splat range matched to the sampling density: the nearest class gets
    /// the point spacing, the farthest the facade spacing.
    pub fn splat_range(&self) -> (f64, f64) {
        (
            self.spec.point_spacing,
            self.spec.facade_spacing.max(self.spec.point_spacing),
        )
    }
}

fn sample_round(
    spec: &SceneSpec,
    layout: &Stadium,
    rows: &[(f64, u8)],
    shapes: &[&Primitive],
    round: u8,
    seed: u64,
) -> SemanticPointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + round as u64);
    let mut points = Vec::new();
    let mut jitter = |p: Point3<f64>, class: u8, rng: &mut ChaCha8Rng| {
        let j = spec.jitter;
        let d = if j > 0.0 {
            Vector3::new(rng.gen_range(-j..=j), rng.gen_range(-j..=j), rng.gen_range(-j..=j))
        } else {
            Vector3::zeros()
        };
        points.push(SemanticPoint::new((p + d).cast::<f32>(), class, round));
    };
    let mut xy = Vec::new();
    for &(o, class) in rows {
        xy.clear();
        layout.sample_row(o, spec.ground_spacing_along, &mut xy);
        for &(x, y) in &xy {
            jitter(Point3::new(x, y, 0.0), class, &mut rng);
        }
    }
    let mut surf = Vec::new();
    let building = ClassRegistry::street_default().id("building");
    for p in shapes {
        surf.clear();
        let spacing = if p.class_id == building {
            spec.facade_spacing
        } else {
            spec.point_spacing
        };
        p.sample(spacing, &mut surf);
        for &s in &surf {
            jitter(s, p.class_id, &mut rng);
        }
    }
    SemanticPointCloud::new(points, spec.rounds as u8)
}

/// Builds a scene from `spec`; the same seed always gives identical output.
pub fn generate_synthetic_scene(spec: &SceneSpec, seed: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    let registry = ClassRegistry::street_default();
    let layout = spec.layout();
    let section = spec.cross_section(&registry);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let primitives = Planter {
        spec,
        layout,
        registry: &registry,
        out: Vec::new(),
    }
    .plant(&mut rng);

    let perimeter = layout.perimeter();
    let per_round = (spec.mover_rate * spec.road_length / 100.0).round() as usize;
    let object = registry.id("object");
    let mut movers = Vec::new();
    for r in 0..spec.rounds {
        for _ in 0..per_round {
            let u = rng.gen_range(0.0..perimeter);
            let o = if rng.gen_bool(0.5) { -1.0 } else { 1.0 } * spec.lane_width / 2.0;
            let st = layout.station(u, o);
            movers.push((
                r as u8,
                Primitive {
                    shape: Shape::Box {
                        center: Point3::new(st.x, st.y, 1.05),
                        yaw: st.heading,
                        half: Vector3::new(2.1, 0.9, 0.75),
                        faces: faces::ALL,
                    },
                    class_id: object,
                },
            ));
        }
    }

    let rows = ground_rows(&section, spec.point_spacing);
    let rounds: Vec<SemanticPointCloud> = (0..spec.rounds)
        .into_par_iter()
        .map(|r| {
            let shapes: Vec<&Primitive> = primitives
                .iter()
                .chain(movers.iter().filter(|m| m.0 as usize == r).map(|m| &m.1))
                .collect();
            sample_round(spec, &layout, &rows, &shapes, r as u8, seed)
        })
        .collect();

    let mut spacing = || rng.gen_range(spec.frame_spacing_min..=spec.frame_spacing_max);
    let mut scan_trajectories = Vec::with_capacity(spec.rounds);
    for _ in 0..spec.rounds {
        let s = spacing();
        let n = (perimeter / s).ceil() as usize;
        scan_trajectories.push(drive(&layout, spec, 0.0, s, n));
    }
    let test_spacing = spacing();
    let start = rng.gen_range(0.0..perimeter);
    let trajectory = drive(&layout, spec, start, test_spacing, spec.frames);
    let mapping_trajectory = drive(&layout, spec, 0.0, 1.0, perimeter.ceil() as usize);

    Ok(SyntheticScene {
        spec: spec.clone(),
        seed,
        layout,
        section,
        registry,
        primitives,
        movers,
        rounds,
        scan_trajectories,
        mapping_trajectory,
        trajectory,
        ground_rows: rows,
    })
}
