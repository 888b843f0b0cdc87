use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::loss::{geometric_loss, LossPointSet};
use crate::error::{Error, Result};
use crate::geometry::{angular_distance, apply_correction, axis_angle, relative_pose, CameraIntrinsics, Pose};
use crate::render::{LabelMap, RenderIndex};
use crate::semantic_map::{SemanticPointCloud, SplatTable, VOID};

/// What the refiner optimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Fraction of pixels with matching labels, against an observed label map.
    LabelAgreement,
    /// Geometric matching loss against a known reference pose.
    GeometricLoss,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinerConfig {
    /// Initial translation step in meters.
    pub trans_step: f64,
    /// Initial rotation step in degrees.
    pub rot_step_deg: f64,
    pub shrink: f64,
    /// Search stops once steps fall below these.
    pub trans_tol: f64,
    pub rot_tol_deg: f64,
    /// Candidates farther than this from the coarse pose are rejected.
    pub max_trans: f64,
    pub max_rot_deg: f64,
    pub objective: Objective,
    /// Starting points per camera axis on a translation grid around the
    /// coarse pose; 1 starts from the coarse pose only.
    pub seed_grid: usize,
    /// Half extent of the start grid in meters.
    pub seed_span: f64,
    /// Best grid points that get a local search at the seed level.
    pub seeds_kept: usize,
    /// Seed-level renders use `1 / seed_downsample` of the width and height.
    pub seed_downsample: usize,
    /// Voxel edge of the map rendered at the seed level; 0 renders the full map.
    pub seed_voxel: f64,
    /// Search renders at `1 / search_downsample` of the width and height.
    pub search_downsample: usize,
    /// Voxel edge of the thinned map rendered during the search; 0 renders
    /// the full map.
    pub search_voxel: f64,
    /// Re-run the finest steps at full resolution after the search.
    pub polish: bool,
    /// Voxel edge of the map rendered while polishing; 0 renders the full map.
    pub polish_voxel: f64,
    /// Agreement below this at every probe marks the frame as failed.
    pub failure_floor: f64,
    pub max_evaluations: usize,
}

impl Default for RefinerConfig {
    fn default() -> Self {
        RefinerConfig {
            trans_step: 2.0,
            rot_step_deg: 4.0,
            shrink: 0.5,
            trans_tol: 0.01,
            rot_tol_deg: 0.05,
            max_trans: 10.0,
            max_rot_deg: 20.0,
            objective: Objective::LabelAgreement,
            seed_grid: 5,
            seed_span: 6.0,
            seeds_kept: 3,
            seed_downsample: 8,
            seed_voxel: 0.5,
            search_downsample: 2,
            search_voxel: 0.25,
            polish: true,
            polish_voxel: 0.1,
            failure_floor: 0.2,
            max_evaluations: 4000,
        }
    }
}

impl RefinerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("trans_step", self.trans_step),
            ("rot_step_deg", self.rot_step_deg),
            ("trans_tol", self.trans_tol),
            ("rot_tol_deg", self.rot_tol_deg),
            ("max_trans", self.max_trans),
            ("max_rot_deg", self.max_rot_deg),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("refiner {name} must be positive, got {v}")));
            }
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::invalid(format!(
                "refiner shrink must be in (0, 1), got {}",
                self.shrink
            )));
        }
        if self.search_downsample == 0 || self.seed_downsample == 0 {
            return Err(Error::invalid("refiner downsample factors must be at least 1"));
        }
        if self.seed_grid == 0 || self.seeds_kept == 0 {
            return Err(Error::invalid("refiner seed_grid and seeds_kept must be at least 1"));
        }
        for (name, v) in [
            ("seed_span", self.seed_span),
            ("seed_voxel", self.seed_voxel),
            ("search_voxel", self.search_voxel),
            ("polish_voxel", self.polish_voxel),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("refiner {name} must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.failure_floor) {
            return Err(Error::invalid("refiner failure_floor must be in [0, 1]"));
        }
        Ok(())
    }

    fn within_bounds(&self, coarse: &Pose, p: &Pose) -> bool {
        (p.translation() - coarse.translation()).norm() <= self.max_trans
            && angular_distance(coarse.rotation(), p.rotation()) <= self.max_rot_deg
    }
}

/// Equal non-void pixels over pixels that are non-void in either map.
pub fn label_agreement(a: &LabelMap, b: &LabelMap) -> Result<f64> {
    a.check_same_dims(b.width(), b.height())?;
    let (mut same, mut any) = (0usize, 0usize);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        if x != VOID || y != VOID {
            any += 1;
            same += (x == y) as usize;
        }
    }
    Ok(if any == 0 { 0.0 } else { same as f64 / any as f64 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefineStatus {
    Converged,
    /// No probe reached the agreement floor; the coarse pose is returned.
    NoOverlap,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineOutcome {
    pub pose: Pose,
    pub status: RefineStatus,
    /// Full-resolution objective at the coarse and returned poses.
    pub coarse_score: f64,
    pub score: f64,
    /// Best objective seen during the search.
    pub best_probe: f64,
    pub evaluations: usize,
}

impl RefineOutcome {
    pub fn failed(&self) -> bool {
        self.status != RefineStatus::Converged
    }
}

/// Moves `p` by `amount` along one of six camera-local parameters: meters
/// along the camera x, y, z axes, then degrees about them.
pub fn step_pose(p: &Pose, param: usize, amount: f64) -> Pose {
    let axis = Vector3::ith(param % 3, 1.0);
    if param < 3 {
        Pose::new(*p.rotation(), p.translation() + p.rotation() * axis * amount)
    } else {
        let q: UnitQuaternion<f64> = p.rotation() * axis_angle(axis, amount);
        Pose::new(q, *p.translation())
    }
}

struct Search {
    evaluations: usize,
    budget: usize,
    best_probe: f64,
}

impl Search {
    fn eval(&mut self, f: &mut dyn FnMut(&Pose) -> f64, p: &Pose) -> f64 {
        let v = f(p);
        self.evaluations += 1;
        self.best_probe = self.best_probe.max(v);
        v
    }

    /// One sweep over the six parameters, keeping every improving step.
    fn explore(
        &mut self,
        mut x: Pose,
        mut best: f64,
        (st, sr): (f64, f64),
        (tt, tr): (f64, f64),
        f: &mut dyn FnMut(&Pose) -> f64,
    ) -> (Pose, f64) {
        for param in 0..6 {
            let (step, tol) = if param < 3 { (st, tt) } else { (sr, tr) };
            if step < tol {
                continue;
            }
            for sign in [1.0, -1.0] {
                if self.evaluations >= self.budget {
                    return (x, best);
                }
                let cand = step_pose(&x, param, sign * step);
                let v = self.eval(f, &cand);
                if v > best {
                    x = cand;
                    best = v;
                    break;
                }
            }
        }
        (x, best)
    }

    /// Pattern search: coordinate sweeps with a shrinking step, followed by
    /// extrapolation along the last successful displacement. Stops once both
    /// steps fall below `tol`.
    fn run(
        &mut self,
        start: Pose,
        start_score: f64,
        steps: (f64, f64),
        tol: (f64, f64),
        shrink: f64,
        f: &mut dyn FnMut(&Pose) -> f64,
    ) -> (Pose, f64) {
        let (mut x, mut best) = (start, start_score);
        let (mut st, mut sr) = steps;
        while (st >= tol.0 || sr >= tol.1) && self.evaluations < self.budget {
            let (mut next, mut next_score) = self.explore(x, best, (st, sr), tol, f);
            if next_score <= best {
                st *= shrink;
                sr *= shrink;
                continue;
            }
            let mut base = x;
            while self.evaluations < self.budget {
                let jump = apply_correction(&next, &relative_pose(&base, &next));
                let jump_score = self.eval(f, &jump);
                let (cand, cand_score) = self.explore(jump, jump_score, (st, sr), tol, f);
                if cand_score > next_score {
                    base = next;
                    next = cand;
                    next_score = cand_score;
                } else {
                    break;
                }
            }
            x = next;
            best = next_score;
        }
        (x, best)
    }
}

/// Render-and-compare refinement against an observed label map.
///
/// Works coarse to fine: a translation grid of starts scored on a heavily
/// thinned map at low resolution, a pattern search from the best starts, a
/// finer search, then a polish at full resolution. Holds render indices so
/// one map can serve many frames.
pub struct Refiner {
    full: RenderIndex,
    seed: Option<RenderIndex>,
    search: Option<RenderIndex>,
    polish: Option<RenderIndex>,
    cfg: RefinerConfig,
    weights: [f64; 256],
}

impl Refiner {
    pub fn new(map: &SemanticPointCloud, splats: &SplatTable, cfg: RefinerConfig) -> Result<Self> {
        cfg.validate()?;
        let full = RenderIndex::new(map, splats);
        let proxy = |v: f64| (v > 0.0).then(|| RenderIndex::voxel_proxy(map, splats, v));
        Ok(Refiner {
            full,
            seed: if cfg.seed_grid > 1 { proxy(cfg.seed_voxel) } else { None },
            search: proxy(cfg.search_voxel),
            polish: if cfg.polish { proxy(cfg.polish_voxel) } else { None },
            cfg,
            weights: [1.0; 256],
        })
    }

    /// Class weights for the geometric-loss objective.
    pub fn with_loss_weights(mut self, weights: [f64; 256]) -> Self {
        self.weights = weights;
        self
    }

    pub fn loss_weights(&self) -> &[f64; 256] {
        &self.weights
    }

    pub fn config(&self) -> &RefinerConfig {
        &self.cfg
    }

    pub fn full_index(&self) -> &RenderIndex {
        &self.full
    }

    /// Candidate starts: `coarse` plus the best poses reached from the
    /// start grid at the seed level.
    fn seed_starts(&self, search: &mut Search, observed: &LabelMap, coarse: &Pose, k: &CameraIntrinsics) -> Vec<Pose> {
        let cfg = &self.cfg;
        let n = cfg.seed_grid;
        if n <= 1 {
            return vec![*coarse];
        }
        let obs = observed.downsample(cfg.seed_downsample);
        let sk = k.scaled(cfg.seed_downsample);
        let index = self.seed.as_ref().unwrap_or(&self.full);
        let mut f = |p: &Pose| {
            if !cfg.within_bounds(coarse, p) {
                return f64::NEG_INFINITY;
            }
            label_agreement(&index.render_labels(p, &sk), &obs).expect("same dims")
        };
        let offset = |i: usize| -cfg.seed_span + 2.0 * cfg.seed_span * i as f64 / (n - 1) as f64;
        let mut starts = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let d = Vector3::new(offset(i), offset(j), offset(l));
                    let p = Pose::new(*coarse.rotation(), coarse.translation() + coarse.rotation() * d);
                    let v = search.eval(&mut f, &p);
                    starts.push((v, p));
                }
            }
        }
        starts.sort_by(|a, b| b.0.total_cmp(&a.0));
        let tol = (cfg.seed_span / 16.0, cfg.rot_step_deg / 8.0);
        let steps = (cfg.trans_step, cfg.rot_step_deg);
        let mut out = vec![*coarse];
        for &(v, p) in starts.iter().take(cfg.seeds_kept) {
            out.push(search.run(p, v, steps, tol, cfg.shrink, &mut f).0);
        }
        out
    }

    /// Returns the pose near `coarse` whose rendering best agrees with
    /// `observed` (rendered with intrinsics `k`). The result never scores
    /// below `coarse` at full resolution.
    pub fn refine(&self, observed: &LabelMap, coarse: &Pose, k: &CameraIntrinsics) -> Result<RefineOutcome> {
        observed.check_same_dims(k.width, k.height)?;
        let cfg = &self.cfg;
        let mut search = Search {
            evaluations: 0,
            budget: cfg.max_evaluations,
            best_probe: f64::NEG_INFINITY,
        };
        let candidates = self.seed_starts(&mut search, observed, coarse, k);

        let small_obs = observed.downsample(cfg.search_downsample);
        let small_k = k.scaled(cfg.search_downsample);
        let index = self.search.as_ref().unwrap_or(&self.full);
        let mut score_small = |p: &Pose| {
            if !cfg.within_bounds(coarse, p) {
                return f64::NEG_INFINITY;
            }
            label_agreement(&index.render_labels(p, &small_k), &small_obs).expect("same dims")
        };
        let tol = (cfg.trans_tol, cfg.rot_tol_deg);
        let steps = if cfg.seed_grid > 1 {
            (cfg.seed_span / 8.0, cfg.rot_step_deg / 4.0)
        } else {
            (cfg.trans_step, cfg.rot_step_deg)
        };
        // The seed level is too coarse to rank its own results reliably.
        let mut seeded = (f64::NEG_INFINITY, *coarse);
        for p in candidates {
            let v = search.eval(&mut score_small, &p);
            if v > seeded.0 {
                seeded = (v, p);
            }
        }
        let (mut pose, _) = search.run(seeded.1, seeded.0, steps, tol, cfg.shrink, &mut score_small);

        let fine = self.polish.as_ref().unwrap_or(&self.full);
        let mut score_full = |p: &Pose| {
            if !cfg.within_bounds(coarse, p) {
                return f64::NEG_INFINITY;
            }
            label_agreement(&fine.render_labels(p, k), observed).expect("same dims")
        };
        let coarse_score = search.eval(&mut score_full, coarse);
        if search.best_probe < cfg.failure_floor {
            return Ok(RefineOutcome {
                pose: *coarse,
                status: RefineStatus::NoOverlap,
                coarse_score,
                score: coarse_score,
                best_probe: search.best_probe,
                evaluations: search.evaluations,
            });
        }
        let mut score = search.eval(&mut score_full, &pose);
        if cfg.polish {
            let steps = (2.0 * cfg.trans_tol, 2.0 * cfg.rot_tol_deg);
            let (p, s) = search.run(pose, score, steps, tol, cfg.shrink, &mut score_full);
            pose = p;
            score = s;
        }
        if score < coarse_score {
            pose = *coarse;
            score = coarse_score;
        }
        Ok(RefineOutcome {
            pose,
            status: RefineStatus::Converged,
            coarse_score,
            score,
            best_probe: search.best_probe,
            evaluations: search.evaluations,
        })
    }
}

/// One-shot [`Refiner::refine`].
pub fn refine_pose(
    observed: &LabelMap,
    coarse: &Pose,
    map: &SemanticPointCloud,
    splats: &SplatTable,
    k: &CameraIntrinsics,
    cfg: &RefinerConfig,
) -> Result<RefineOutcome> {
    Refiner::new(map, splats, cfg.clone())?.refine(observed, coarse, k)
}

/// Minimizes the geometric matching loss to a known `target` with the same
/// coordinate search. Scores in the outcome are negated losses.
pub fn refine_pose_geometric(
    coarse: &Pose,
    target: &Pose,
    pts: &LossPointSet,
    k: &CameraIntrinsics,
    cfg: &RefinerConfig,
) -> Result<RefineOutcome> {
    cfg.validate()?;
    let coarse_loss = geometric_loss(coarse, target, pts, k)?.loss;
    let mut f = |p: &Pose| match geometric_loss(p, target, pts, k) {
        Ok(v) => -v.loss,
        Err(_) => f64::NEG_INFINITY,
    };
    let mut search = Search {
        evaluations: 1,
        budget: cfg.max_evaluations,
        best_probe: -coarse_loss,
    };
    let (pose, score) = search.run(
        *coarse,
        -coarse_loss,
        (cfg.trans_step, cfg.rot_step_deg),
        (cfg.trans_tol, cfg.rot_tol_deg),
        cfg.shrink,
        &mut f,
    );
    Ok(RefineOutcome {
        pose,
        status: RefineStatus::Converged,
        coarse_score: -coarse_loss,
        score,
        best_probe: search.best_probe,
        evaluations: search.evaluations,
    })
}
