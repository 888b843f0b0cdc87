//! Semantic point clouds, the class registry, and static-map construction.

mod filter;
mod splat;

pub use filter::{temporal_consistency_filter, VoxelHash};
pub use splat::{compute_splat_sizes, SplatTable};

use log::info;
use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::geometry::Pose;

/// Class id reserved for unlabeled pixels; never assigned to map points.
pub const VOID: u8 = 255;

/// Default range of splat square sides in meters.
pub const DEFAULT_SPLAT_RANGE: (f64, f64) = (0.025, 0.05);
/// Default fraction of rounds a point must be observed in.
pub const DEFAULT_DELTA: f64 = 0.6;
/// Default cross-round match radius in meters.
pub const DEFAULT_EPS_D: f64 = 0.025;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassInfo {
    pub id: u8,
    pub name: String,
    pub is_road: bool,
    pub is_dynamic: bool,
    /// Weight of this class in the geometric matching loss.
    pub weight: f64,
}

/// Ordered set of semantic classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassRegistry {
    classes: Vec<ClassInfo>,
    slot: Vec<Option<usize>>,
}

impl ClassRegistry {
    pub fn new(classes: Vec<ClassInfo>) -> Result<Self> {
        let mut slot = vec![None; 256];
        for (i, c) in classes.iter().enumerate() {
            if c.id == VOID {
                return Err(Error::invalid("class id 255 is reserved for void"));
            }
            if slot[c.id as usize].is_some() {
                return Err(Error::invalid(format!("duplicate class id {}", c.id)));
            }
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::invalid(format!(
                    "class {} has non-positive weight {}",
                    c.id, c.weight
                )));
            }
            if c.name.is_empty() || c.name.contains(char::is_whitespace) {
                return Err(Error::invalid(format!("class {} has an invalid name", c.id)));
            }
            slot[c.id as usize] = Some(i);
        }
        if !classes.iter().any(|c| c.is_road) {
            return Err(Error::invalid("registry needs at least one road class"));
        }
        Ok(ClassRegistry { classes, slot })
    }

    /// Street-scene classes; traffic lights, signs and poles weigh 2.0 in the loss.
    pub fn street_default() -> Self {
        const TABLE: &[(u8, &str, bool, bool, f64)] = &[
            (0, "sky", false, false, 1.0),
            (1, "car-lane", true, false, 1.0),
            (2, "ped-lane", true, false, 1.0),
            (3, "bike-lane", true, false, 1.0),
            (4, "curb", false, false, 1.0),
            (5, "traffic-cone", false, false, 1.0),
            (6, "traffic-stack", false, false, 1.0),
            (7, "traffic-fence", false, false, 1.0),
            (8, "light-pole", false, false, 2.0),
            (9, "traffic-light", false, false, 2.0),
            (10, "tele-pole", false, false, 2.0),
            (11, "traffic-sign", false, false, 2.0),
            (12, "billboard", false, false, 1.0),
            (13, "temp-building", false, false, 1.0),
            (14, "building", false, false, 1.0),
            (15, "security-stand", false, false, 1.0),
            (16, "plants", false, false, 1.0),
            (17, "object", false, false, 1.0),
            (18, "car", false, true, 1.0),
            (19, "cyclist", false, true, 1.0),
            (20, "motorbike", false, true, 1.0),
            (21, "truck", false, true, 1.0),
            (22, "bus", false, true, 1.0),
        ];
        let classes = TABLE
            .iter()
            .map(|&(id, name, is_road, is_dynamic, weight)| ClassInfo {
                id,
                name: name.to_string(),
                is_road,
                is_dynamic,
                weight,
            })
            .collect();
        ClassRegistry::new(classes).expect("built-in registry is valid")
    }

    pub fn classes(&self) -> &[ClassInfo] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn get(&self, id: u8) -> Option<&ClassInfo> {
        self.slot[id as usize].map(|i| &self.classes[i])
    }

    pub fn contains(&self, id: u8) -> bool {
        self.slot[id as usize].is_some()
    }

    pub fn by_name(&self, name: &str) -> Option<&ClassInfo> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// Class id by name; panics if absent. Meant for built-in registries.
    pub fn id(&self, name: &str) -> u8 {
        self.by_name(name)
            .unwrap_or_else(|| panic!("class {name:?} not in registry"))
            .id
    }

    pub fn is_road(&self, id: u8) -> bool {
        self.get(id).is_some_and(|c| c.is_road)
    }

    pub fn is_dynamic(&self, id: u8) -> bool {
        self.get(id).is_some_and(|c| c.is_dynamic)
    }

    /// Loss weight per class id (1.0 for unregistered ids).
    pub fn weight_table(&self) -> [f64; 256] {
        let mut w = [1.0; 256];
        for c in &self.classes {
            w[c.id as usize] = c.weight;
        }
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SemanticPoint {
    pub position: Point3<f32>,
    pub class_id: u8,
    pub round_id: u8,
}

impl SemanticPoint {
    pub fn new(position: Point3<f32>, class_id: u8, round_id: u8) -> Self {
        SemanticPoint {
            position,
            class_id,
            round_id,
        }
    }
}

/// Labelled points with per-round provenance.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SemanticPointCloud {
    pub points: Vec<SemanticPoint>,
    /// Number of scan rounds the point round ids index into.
    pub round_count: u8,
}

impl SemanticPointCloud {
    pub fn new(points: Vec<SemanticPoint>, round_count: u8) -> Self {
        SemanticPointCloud { points, round_count }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks finiteness, round ids and (optionally) class registration.
    pub fn validate(&self, registry: Option<&ClassRegistry>) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if !p.position.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid(format!("point {i} has non-finite coordinates")));
            }
            if p.round_id >= self.round_count {
                return Err(Error::invalid(format!(
                    "point {i} has round id {} but the cloud has {} rounds",
                    p.round_id, self.round_count
                )));
            }
            if p.class_id == VOID {
                return Err(Error::invalid(format!("point {i} carries the void class")));
            }
            if let Some(reg) = registry {
                if !reg.contains(p.class_id) {
                    return Err(Error::UnregisteredClass(p.class_id));
                }
            }
        }
        Ok(())
    }

    /// Splits a multi-round cloud into one cloud per round, preserving order.
    pub fn split_rounds(&self) -> Vec<SemanticPointCloud> {
        let mut out: Vec<Vec<SemanticPoint>> = vec![Vec::new(); self.round_count as usize];
        for p in &self.points {
            if let Some(r) = out.get_mut(p.round_id as usize) {
                r.push(*p);
            }
        }
        out.into_iter()
            .map(|pts| SemanticPointCloud::new(pts, self.round_count))
            .collect()
    }

    /// Concatenates rounds, stamping each point with its list index as round id.
    pub fn merge_rounds(rounds: &[SemanticPointCloud]) -> SemanticPointCloud {
        let total = rounds.iter().map(|r| r.len()).sum();
        let mut points = Vec::with_capacity(total);
        for (r, cloud) in rounds.iter().enumerate() {
            points.extend(cloud.points.iter().map(|p| SemanticPoint {
                round_id: r as u8,
                ..*p
            }));
        }
        SemanticPointCloud::new(points, rounds.len() as u8)
    }

    /// Keeps only points whose class passes `keep`.
    pub fn retain_classes(&self, keep: impl Fn(u8) -> bool) -> SemanticPointCloud {
        SemanticPointCloud::new(
            self.points.iter().filter(|p| keep(p.class_id)).copied().collect(),
            self.round_count,
        )
    }
}

/// Parameters for [`build_map`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapBuildParams {
    pub delta: f64,
    pub eps_d: f64,
    pub splat_min: f64,
    pub splat_max: f64,
}

impl Default for MapBuildParams {
    fn default() -> Self {
        MapBuildParams {
            delta: DEFAULT_DELTA,
            eps_d: DEFAULT_EPS_D,
            splat_min: DEFAULT_SPLAT_RANGE.0,
            splat_max: DEFAULT_SPLAT_RANGE.1,
        }
    }
}

/// Builds the static map: strip dynamic classes, drop temporally inconsistent
/// points, then size the per-class splats from the trajectory.
pub fn build_map(
    rounds: &[SemanticPointCloud],
    params: &MapBuildParams,
    trajectory: &[Pose],
    registry: &ClassRegistry,
) -> Result<(SemanticPointCloud, SplatTable)> {
    if rounds.is_empty() {
        return Err(Error::invalid("no scan rounds given"));
    }
    let mut static_rounds = Vec::with_capacity(rounds.len());
    for r in rounds {
        for p in &r.points {
            if !registry.contains(p.class_id) {
                return Err(Error::UnregisteredClass(p.class_id));
            }
        }
        static_rounds.push(r.retain_classes(|c| !registry.is_dynamic(c)));
    }
    let kept = temporal_consistency_filter(&static_rounds, params.delta, params.eps_d)?;
    info!(
        "temporal filter kept {} of {} static points",
        kept.len(),
        static_rounds.iter().map(|r| r.len()).sum::<usize>()
    );
    if kept.is_empty() {
        return Err(Error::EmptyMap);
    }
    let splats = compute_splat_sizes(&kept, trajectory, params.splat_min, params.splat_max)?;
    Ok((kept, splats))
}
