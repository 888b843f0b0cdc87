use nalgebra::{Point3, UnitQuaternion, Vector3};
use proptest::prelude::*;

use semloc::fusion::Mask;
use semloc::geometry::Pose;
use semloc::io::{self, FramePose};
use semloc::render::{DepthMap, LabelMap};
use semloc::road::{build_offset_field, RoadGrid};
use semloc::semantic_map::{SemanticPoint, SemanticPointCloud};

fn point() -> impl Strategy<Value = SemanticPoint> {
    (prop::array::uniform3(-1e4f32..1e4f32), 0u8..255, 0u8..8)
        .prop_map(|(p, c, r)| SemanticPoint::new(Point3::from(p), c, r))
}

fn pose() -> impl Strategy<Value = Pose> {
    (
        prop::array::uniform3(-1.0f64..1.0),
        -3.2f64..3.2,
        prop::array::uniform3(-1e5f64..1e5),
    )
        .prop_map(|(axis, angle, t)| {
            let axis = Vector3::from(axis);
            let q = if axis.norm() > 1e-6 {
                UnitQuaternion::from_scaled_axis(axis.normalize() * angle)
            } else {
                UnitQuaternion::identity()
            };
            Pose::new(q, Vector3::from(t))
        })
}

fn raster<T: Strategy + Clone>(cell: T) -> impl Strategy<Value = (usize, usize, Vec<T::Value>)>
where
    T::Value: Clone + std::fmt::Debug,
{
    (1usize..24, 1usize..24).prop_flat_map(move |(w, h)| (Just(w), Just(h), prop::collection::vec(cell.clone(), w * h)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn map_bytes(points in prop::collection::vec(point(), 0..300)) {
        let map = SemanticPointCloud::new(points, 8);
        let bytes = io::map_to_bytes(&map).unwrap();
        prop_assert_eq!(io::map_from_bytes(&bytes).unwrap(), map);
    }

    #[test]
    fn void_points_are_not_written(mut points in prop::collection::vec(point(), 1..50), at in any::<prop::sample::Index>()) {
        let i = at.index(points.len());
        points[i].class_id = semloc::semantic_map::VOID;
        prop_assert!(io::map_to_bytes(&SemanticPointCloud::new(points, 8)).is_err());
    }

    #[test]
    fn truncated_map_is_rejected(points in prop::collection::vec(point(), 1..50), cut in 1usize..20) {
        let bytes = io::map_to_bytes(&SemanticPointCloud::new(points, 8)).unwrap();
        let cut = cut.min(bytes.len());
        prop_assert!(io::map_from_bytes(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn poses_text(poses in prop::collection::vec((any::<u32>(), pose()), 0..40)) {
        let tagged: Vec<FramePose> = poses.into_iter().map(|(f, pose)| FramePose { frame: f as u64, pose }).collect();
        let text = io::format_poses(&tagged);
        prop_assert_eq!(io::parse_poses(&text, "poses").unwrap(), tagged);
    }

    #[test]
    fn label_png((w, h, data) in raster(any::<u8>())) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.png");
        let labels = LabelMap::from_raw(w, h, data).unwrap();
        io::save_label_png(&path, &labels).unwrap();
        prop_assert_eq!(io::load_label_png(&path).unwrap(), labels);
    }

    #[test]
    fn dpt_depth((w, h, data) in raster(prop_oneof![Just(0.0f32), 0.01f32..1e4])) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.dpt");
        let depth = DepthMap::from_raw(w, h, data).unwrap();
        io::save_depth(&path, &depth).unwrap();
        prop_assert_eq!(io::load_depth(&path).unwrap(), depth);
    }

    #[test]
    fn millimeter_png((w, h, data) in raster(0u16..=65535)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let depth = DepthMap::from_raw(w, h, data.iter().map(|&mm| mm as f32 / 1000.0).collect()).unwrap();
        io::save_depth_png(&path, &depth).unwrap();
        prop_assert_eq!(io::load_depth_png(&path).unwrap(), depth);
    }

    #[test]
    fn mask_png((w, h, data) in raster(any::<bool>())) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let mask = Mask { width: w, height: h, data };
        io::save_mask_png(&path, &mask).unwrap();
        prop_assert_eq!(io::load_mask_png(&path).unwrap(), mask);
    }

    #[test]
    fn road_field((w, h, data) in raster(prop::bool::weighted(0.05)), x0 in -1e3f64..1e3, y0 in -1e3f64..1e3) {
        let mut g = RoadGrid::new([x0, y0], 0.05, w, h);
        g.road = data;
        g.road[0] = true;
        let f = build_offset_field(&g).unwrap();
        let bytes = io::field_to_bytes(&f).unwrap();
        prop_assert_eq!(io::field_from_bytes(&bytes).unwrap(), f);
    }
}

#[test]
fn config_text_round_trip() {
    let mut cfg = io::Config {
        seed: 12,
        threads: 3,
        ..Default::default()
    };
    cfg.refiner.trans_step = 1.25;
    cfg.noise.eps_t = 2.5;
    cfg.scene.frames = 17;
    let back = io::Config::parse(&cfg.to_text(), "config").unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn unknown_config_key_reports_its_line() {
    let err = io::Config::parse("seed = 1\n[refiner]\nbogus = 2\n", "cfg").unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("cfg") && msg.contains('3'), "{msg}");
}

#[test]
fn registry_and_splats_text() {
    let reg = semloc::semantic_map::ClassRegistry::street_default();
    let text = io::registry_to_string(&reg);
    assert_eq!(io::parse_registry(&text, "reg").unwrap(), reg);
    let mut t = semloc::semantic_map::SplatTable::from_entries(0.02, 0.1, &[(1, 0.03)]).unwrap();
    t.set(14, 0.0625);
    assert_eq!(io::parse_splats(&io::splats_to_string(&t), "splats").unwrap(), t);
}
