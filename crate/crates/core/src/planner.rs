//! Slow-loop path planner: waypoint segmentation into linear segments and
//! trapezoidal velocity planning along them.

use std::path::Path;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::terrain::{TerrainField, TerrainKind};

/// Chassis speed limit used when a segment carries no tighter one.
pub const PLATFORM_V_MAX: f64 = 1.0;
/// Minimum span of a subdivided segment.
pub const MIN_SEGMENT: f64 = 1e-3;
/// Gradient change along a segment above which it is checked for subdivision.
pub const GRADIENT_CHANGE_DEG: f64 = 1.0;
/// Heading change above which the path stops at the junction and turns in place.
pub const CORNER_DEG: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerrainHint {
    Flat,
    Slope,
    Rough,
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSegment {
    pub p0: Pose,
    pub pf: Pose,
    pub length: f64,
    pub v_max: f64,
    pub terrain_class_hint: TerrainHint,
}

impl PathSegment {
    pub fn direction(&self) -> Vector3<f64> {
        if self.length > 0.0 {
            (self.pf.position - self.p0.position) / self.length
        } else {
            Vector3::zeros()
        }
    }

    pub fn heading(&self) -> f64 {
        let d = self.pf.position - self.p0.position;
        d.y.atan2(d.x)
    }

    /// Fraction of the length covered in the ground plane.
    pub fn horizontal_ratio(&self) -> f64 {
        let d = self.pf.position - self.p0.position;
        if self.length > 0.0 {
            d.x.hypot(d.y) / self.length
        } else {
            1.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPlan {
    pub segments: Vec<PathSegment>,
    pub total_length: f64,
}

/// Tool orientation aligned with the terrain normal, heading along `yaw`.
pub fn terrain_aligned(field: &TerrainField, x: f64, y: f64, yaw: f64) -> UnitQuaternion<f64> {
    let g = field.query(x, y).gradient;
    let h = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let n = Vector3::new(-g.x, -g.y, 1.0).normalize();
    let xa = (h - n * h.dot(&n)).normalize();
    let ya = n.cross(&xa);
    UnitQuaternion::from_matrix(&nalgebra::Matrix3::from_columns(&[xa, ya, n]))
}

fn hint_for(field: &TerrainField, a: &Vector3<f64>, b: &Vector3<f64>) -> TerrainHint {
    match field.kind {
        TerrainKind::Flat => TerrainHint::Flat,
        TerrainKind::Rough => TerrainHint::Rough,
        TerrainKind::Mixed => TerrainHint::Mixed,
        TerrainKind::Slope => {
            if a.x.max(b.x) >= field.slope_start {
                TerrainHint::Slope
            } else {
                TerrainHint::Flat
            }
        }
    }
}

fn directional_slope_deg(field: &TerrainField, p: &Vector3<f64>, dir: &Vector3<f64>) -> f64 {
    let g = field.query(p.x, p.y).gradient;
    let h = dir.xy();
    let n = h.norm();
    if n < 1e-12 {
        return 0.0;
    }
    (g.dot(&(h / n))).atan().to_degrees()
}

struct Chord {
    a: Vector3<f64>,
    b: Vector3<f64>,
    /// print height above terrain at each end
    za: f64,
    zb: f64,
}

impl Chord {
    fn lift(field: &TerrainField, xy: (f64, f64), z: f64) -> Vector3<f64> {
        Vector3::new(xy.0, xy.1, field.height(xy.0, xy.1) + z)
    }

    fn deviation(&self, field: &TerrainField, s: f64) -> f64 {
        let p = self.a * (1.0 - s) + self.b * s;
        let z = self.za * (1.0 - s) + self.zb * s;
        (p.z - (field.height(p.x, p.y) + z)).abs()
    }

    fn gradient_change_deg(&self, field: &TerrainField) -> f64 {
        let dir = self.b - self.a;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..=20 {
            let s = i as f64 / 20.0;
            let v = directional_slope_deg(field, &(self.a * (1.0 - s) + self.b * s), &dir);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    }

    fn needs_split(&self, field: &TerrainField, tol: f64) -> bool {
        let span = (self.b - self.a).xy().norm();
        if span < 2.0 * MIN_SEGMENT {
            return false;
        }
        if self.gradient_change_deg(field) <= GRADIENT_CHANGE_DEG {
            return false;
        }
        [0.25, 0.5, 0.75].iter().any(|&s| self.deviation(field, s) > tol)
    }
}

/// Turns waypoints into a terrain-following piecewise-linear plan.
///
/// Waypoint `z` is the print height above the terrain; segment poses are in
/// world coordinates.
pub fn segment_path(waypoints: &[Pose], chord_tol: f64, field: &TerrainField) -> Result<PathPlan> {
    if waypoints.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 waypoints, got {}",
            waypoints.len()
        )));
    }
    if !(chord_tol > 0.0) {
        return Err(Error::InvalidInput("chord tolerance must be > 0".into()));
    }

    let mut points: Vec<Vector3<f64>> = Vec::new();
    for w in waypoints.windows(2) {
        let (pa, pb) = (w[0].position, w[1].position);
        let mut stack = vec![Chord {
            a: Chord::lift(field, (pa.x, pa.y), pa.z),
            b: Chord::lift(field, (pb.x, pb.y), pb.z),
            za: pa.z,
            zb: pb.z,
        }];
        if points.is_empty() {
            points.push(stack[0].a);
        }
        // depth-first, left half first, so points come out in path order
        while let Some(c) = stack.pop() {
            if c.needs_split(field, chord_tol) {
                let m = (c.a + c.b) / 2.0;
                let zm = (c.za + c.zb) / 2.0;
                let mid = Chord::lift(field, (m.x, m.y), zm);
                stack.push(Chord { a: mid, b: c.b, za: zm, zb: c.zb });
                stack.push(Chord { a: c.a, b: mid, za: c.za, zb: zm });
            } else {
                points.push(c.b);
            }
        }
    }

    let mut segments = Vec::with_capacity(points.len() - 1);
    let mut prev_pf: Option<Pose> = None;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let d = b - a;
        let yaw = if d.xy().norm() > 1e-12 {
            d.y.atan2(d.x)
        } else {
            prev_pf.map_or(0.0, |p| p.yaw())
        };
        let p0 = match prev_pf {
            Some(p) => p,
            None => Pose::new(a, terrain_aligned(field, a.x, a.y, yaw)),
        };
        let pf = Pose::new(b, terrain_aligned(field, b.x, b.y, yaw));
        segments.push(PathSegment {
            p0,
            pf,
            length: d.norm(),
            v_max: PLATFORM_V_MAX,
            terrain_class_hint: hint_for(field, &a, &b),
        });
        prev_pf = Some(pf);
    }
    let total_length = segments.iter().map(|s| s.length).sum();
    Ok(PathPlan { segments, total_length })
}

/// Pose at path parameter `s` along a segment.
pub fn eval_segment(seg: &PathSegment, s: f64) -> Result<Pose> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidInput(format!("path parameter {s} outside [0, 1]")));
    }
    if s == 0.0 {
        return Ok(seg.p0);
    }
    if s == 1.0 {
        return Ok(seg.pf);
    }
    let p = seg.p0.position * (1.0 - s) + seg.pf.position * s;
    let r = seg.p0.rotation.slerp(&seg.pf.rotation, s);
    Ok(Pose::new(p, r))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityLimits {
    pub v_max: f64,
    pub a_max: f64,
    /// Yaw rate used for in-place turns at corners.
    pub turn_rate: f64,
}

impl Default for VelocityLimits {
    fn default() -> Self {
        Self {
            v_max: 0.36,
            a_max: 0.2,
            turn_rate: 0.5,
        }
    }
}

/// Trapezoidal (or triangular) speed profile over one segment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentProfile {
    pub length: f64,
    pub v_start: f64,
    pub v_peak: f64,
    pub v_end: f64,
    pub a_max: f64,
    pub t_accel: f64,
    pub t_cruise: f64,
    pub t_decel: f64,
}

impl SegmentProfile {
    pub fn new(length: f64, v_start: f64, v_end: f64, v_max: f64, a_max: f64) -> Self {
        if length <= 0.0 {
            return Self {
                length: 0.0,
                v_start: 0.0,
                v_peak: 0.0,
                v_end: 0.0,
                a_max,
                t_accel: 0.0,
                t_cruise: 0.0,
                t_decel: 0.0,
            };
        }
        let v_peak = v_max.min(((2.0 * a_max * length + v_start * v_start + v_end * v_end) / 2.0).sqrt());
        let v_peak = v_peak.max(v_start).max(v_end);
        let d_acc = (v_peak * v_peak - v_start * v_start) / (2.0 * a_max);
        let d_dec = (v_peak * v_peak - v_end * v_end) / (2.0 * a_max);
        let d_cruise = (length - d_acc - d_dec).max(0.0);
        Self {
            length,
            v_start,
            v_peak,
            v_end,
            a_max,
            t_accel: (v_peak - v_start) / a_max,
            t_cruise: if v_peak > 0.0 { d_cruise / v_peak } else { 0.0 },
            t_decel: (v_peak - v_end) / a_max,
        }
    }

    pub fn duration(&self) -> f64 {
        self.t_accel + self.t_cruise + self.t_decel
    }

    /// Distance and speed at local time `t`, clamped to the profile.
    pub fn state(&self, t: f64) -> (f64, f64) {
        let a = self.a_max;
        let t = t.clamp(0.0, self.duration());
        if t < self.t_accel {
            (self.v_start * t + 0.5 * a * t * t, self.v_start + a * t)
        } else if t < self.t_accel + self.t_cruise {
            let d0 = self.v_start * self.t_accel + 0.5 * a * self.t_accel * self.t_accel;
            (d0 + self.v_peak * (t - self.t_accel), self.v_peak)
        } else {
            let tr = (self.duration() - t).max(0.0);
            // measured back from the end keeps s(T) = length exactly
            (self.length - (self.v_end * tr + 0.5 * a * tr * tr), self.v_end + a * tr)
        }
    }

    /// Normalized path parameter s(t) in [0, 1].
    pub fn s(&self, t: f64) -> f64 {
        if self.length <= 0.0 {
            return 1.0;
        }
        (self.state(t).0 / self.length).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Phase {
    Move { segment: usize, profile: SegmentProfile },
    Turn { at: usize, yaw_from: f64, yaw_to: f64, duration: f64 },
}

impl Phase {
    pub fn duration(&self) -> f64 {
        match self {
            Phase::Move { profile, .. } => profile.duration(),
            Phase::Turn { duration, .. } => *duration,
        }
    }
}

/// Timed schedule over a plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityPlan {
    pub phases: Vec<(f64, Phase)>,
    pub duration: f64,
}

/// Reference sample: pose plus the feedforward chassis rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefSample {
    pub pose: Pose,
    /// Ground-plane speed along the path.
    pub speed: f64,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub segment: usize,
}

fn wrap(a: f64) -> f64 {
    let mut a = a % (2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    } else if a < -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}

/// Plans speeds over the whole path: per-segment trapezoids whose junction
/// speeds come from a forward/backward pass, zero at the ends and at corners.
/// Segments hinted rough or mixed run at half the speed limit.
pub fn plan_velocity(plan: &PathPlan, limits: &VelocityLimits) -> VelocityPlan {
    let segs = &plan.segments;
    let n = segs.len();
    let vmax: Vec<f64> = segs
        .iter()
        .map(|s| {
            let v = limits.v_max.min(s.v_max);
            match s.terrain_class_hint {
                TerrainHint::Rough | TerrainHint::Mixed => 0.5 * v,
                _ => v,
            }
        })
        .collect();
    let a = limits.a_max;

    // junction j sits between segment j-1 and j
    let mut vj = vec![0.0; n + 1];
    let mut corner = vec![false; n + 1];
    for j in 1..n {
        let turn = wrap(segs[j].heading() - segs[j - 1].heading()).abs();
        corner[j] = turn > CORNER_DEG.to_radians() && segs[j].length > 0.0 && segs[j - 1].length > 0.0;
        vj[j] = if corner[j] { 0.0 } else { vmax[j - 1].min(vmax[j]) };
    }
    for j in 1..=n {
        vj[j] = vj[j].min((vj[j - 1].powi(2) + 2.0 * a * segs[j - 1].length).sqrt());
    }
    for j in (0..n).rev() {
        vj[j] = vj[j].min((vj[j + 1].powi(2) + 2.0 * a * segs[j].length).sqrt());
    }

    let mut phases = Vec::new();
    let mut t = 0.0;
    for i in 0..n {
        if i > 0 && corner[i] {
            let (y0, y1) = (segs[i - 1].heading(), segs[i].heading());
            let duration = wrap(y1 - y0).abs() / limits.turn_rate;
            phases.push((t, Phase::Turn { at: i, yaw_from: y0, yaw_to: y0 + wrap(y1 - y0), duration }));
            t += duration;
        }
        let profile = SegmentProfile::new(segs[i].length, vj[i], vj[i + 1], vmax[i], a);
        phases.push((t, Phase::Move { segment: i, profile }));
        t += profile.duration();
    }
    VelocityPlan { phases, duration: t }
}

impl VelocityPlan {
    /// Reference at time `t`; holds the final pose after the end.
    pub fn sample(&self, plan: &PathPlan, t: f64) -> RefSample {
        let idx = self.phases.partition_point(|(t0, _)| *t0 <= t).saturating_sub(1);
        let (t0, phase) = self.phases[idx];
        let local = t - t0;
        match phase {
            Phase::Move { segment, profile } => {
                let seg = &plan.segments[segment];
                let past_end = idx + 1 == self.phases.len() && local >= profile.duration();
                let s = profile.s(local);
                let (_, v) = profile.state(local);
                RefSample {
                    pose: eval_segment(seg, s).expect("s clamped to [0, 1]"),
                    speed: if past_end { 0.0 } else { v * seg.horizontal_ratio() },
                    yaw: seg.heading(),
                    yaw_rate: 0.0,
                    segment,
                }
            }
            Phase::Turn { at, yaw_from, yaw_to, duration } => {
                let k = if duration > 0.0 { (local / duration).clamp(0.0, 1.0) } else { 1.0 };
                let a = plan.segments[at - 1].pf;
                let b = plan.segments[at].p0;
                let yaw = yaw_from + (yaw_to - yaw_from) * k;
                let pose = Pose::new(a.position, a.rotation.slerp(&b.rotation, k));
                RefSample {
                    pose,
                    speed: 0.0,
                    yaw,
                    yaw_rate: if k < 1.0 { (yaw_to - yaw_from) / duration } else { 0.0 },
                    segment: at,
                }
            }
        }
    }
}

impl PathPlan {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["segment", "p0_x", "p0_y", "p0_z", "pf_x", "pf_y", "pf_z", "v_max"])?;
        for (i, s) in self.segments.iter().enumerate() {
            let (a, b) = (s.p0.position, s.pf.position);
            let row: Vec<String> = [i as f64, a.x, a.y, a.z, b.x, b.y, b.z, s.v_max]
                .iter()
                .enumerate()
                .map(|(k, v)| if k == 0 { i.to_string() } else { format!("{v}") })
                .collect();
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{build_scenario, TerrainClass, TerrainSpec};

    fn wp(x: f64, y: f64) -> Pose {
        Pose::from_translation(x, y, 0.0)
    }

    #[test]
    fn too_few_waypoints() {
        assert!(segment_path(&[wp(0.0, 0.0)], 0.002, &TerrainField::flat()).is_err());
        assert!(segment_path(&[], 0.002, &TerrainField::flat()).is_err());
    }

    #[test]
    fn flat_two_points_one_segment() {
        let p = segment_path(&[wp(0.0, 0.0), wp(3.0, 4.0)], 0.002, &TerrainField::flat()).unwrap();
        assert_eq!(p.segments.len(), 1);
        assert!((p.total_length - 5.0).abs() < 1e-12);
        assert_eq!(p.segments[0].terrain_class_hint, TerrainHint::Flat);
    }

    #[test]
    fn square_has_four_segments_and_is_continuous() {
        let pts = [wp(0.0, 0.0), wp(2.0, 0.0), wp(2.0, 2.0), wp(0.0, 2.0), wp(0.0, 0.0)];
        let p = segment_path(&pts, 0.002, &TerrainField::flat()).unwrap();
        assert_eq!(p.segments.len(), 4);
        for w in p.segments.windows(2) {
            assert_eq!(w[0].pf, w[1].p0);
        }
        for s in &p.segments {
            assert!((s.length - (s.pf.position - s.p0.position).norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn slope_line_subdivided_within_tolerance() {
        let field = build_scenario(&TerrainSpec::reference_slope()).unwrap();
        let p = segment_path(&[wp(0.0, 0.0), wp(10.0, 0.0)], 0.002, &field).unwrap();
        assert!(p.segments.len() >= 2);
        for s in &p.segments {
            let m = eval_segment(s, 0.5).unwrap().position;
            // analytic terrain: flat before x=5, tan(5°) incline after
            let h = if m.x >= 5.0 { (m.x - 5.0) * 5f64.to_radians().tan() } else { 0.0 };
            assert!((m.z - h).abs() <= 0.002, "midpoint error {}", (m.z - h).abs());
        }
        for w in p.segments.windows(2) {
            assert_eq!(w[0].pf, w[1].p0);
        }
        assert!(p.segments.iter().any(|s| s.terrain_class_hint == TerrainHint::Slope));
    }

    #[test]
    fn rough_line_subdivision_terminates() {
        let field = build_scenario(&TerrainClass::Gravel.preset(4)).unwrap();
        let p = segment_path(&[wp(0.0, 0.0), wp(10.0, 0.0)], 0.002, &field).unwrap();
        assert!(p.segments.len() as f64 <= 10.0 / MIN_SEGMENT);
        // each final segment is either gradient-smooth or within tolerance
        for s in &p.segments {
            let c = Chord { a: s.p0.position, b: s.pf.position, za: 0.0, zb: 0.0 };
            let smooth = c.gradient_change_deg(&field) <= GRADIENT_CHANGE_DEG;
            let within = [0.25, 0.5, 0.75].iter().all(|&t| c.deviation(&field, t) <= 0.002);
            assert!(smooth || within);
        }
    }

    #[test]
    fn eval_segment_cases() {
        let seg = PathSegment {
            p0: Pose::from_translation(0.0, 0.0, 0.0),
            pf: Pose::from_translation(2.0, 0.0, 0.0),
            length: 2.0,
            v_max: 1.0,
            terrain_class_hint: TerrainHint::Flat,
        };
        assert_eq!(eval_segment(&seg, 0.0).unwrap(), seg.p0);
        assert_eq!(eval_segment(&seg, 1.0).unwrap(), seg.pf);
        assert_eq!(eval_segment(&seg, 0.5).unwrap().position, Vector3::new(1.0, 0.0, 0.0));
        assert!(eval_segment(&seg, 1.0001).is_err());
        assert!(eval_segment(&seg, -0.1).is_err());
    }

    #[test]
    fn trapezoid_duration() {
        let p = SegmentProfile::new(1.0, 0.0, 0.0, 0.5, 1.0);
        assert!((p.duration() - 2.5).abs() < 1e-12);
        assert_eq!(SegmentProfile::new(0.0, 0.0, 0.0, 0.5, 1.0).duration(), 0.0);
        // triangular case
        let p = SegmentProfile::new(0.1, 0.0, 0.0, 0.5, 1.0);
        assert!((p.duration() - 2.0 * 0.1f64.sqrt()).abs() < 1e-12);
        assert!((p.s(p.duration()) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn s_monotone_and_geometry_speed_independent() {
        let field = build_scenario(&TerrainSpec::reference_slope()).unwrap();
        let plan = segment_path(&[wp(0.0, 0.0), wp(10.0, 0.0)], 0.002, &field).unwrap();
        let slow = plan_velocity(&plan, &VelocityLimits { v_max: 0.2, a_max: 0.1, turn_rate: 0.5 });
        let fast = plan_velocity(&plan, &VelocityLimits::default());
        for vp in [&slow, &fast] {
            let mut prev = -1.0;
            for k in 0..=4000 {
                let t = vp.duration * k as f64 / 4000.0;
                let r = vp.sample(&plan, t);
                let x = r.pose.position.x;
                assert!(x >= prev - 1e-12);
                prev = x;
                // every reference lies on the plan geometry
                let seg = &plan.segments[r.segment];
                let s = (x - seg.p0.position.x) / (seg.pf.position.x - seg.p0.position.x);
                let on = eval_segment(seg, s.clamp(0.0, 1.0)).unwrap();
                assert!((on.position - r.pose.position).norm() < 1e-9);
            }
            assert_eq!(vp.sample(&plan, vp.duration + 5.0).pose, plan.segments.last().unwrap().pf);
        }
        assert!(slow.duration > fast.duration);
    }

    #[test]
    fn reference_timing() {
        let field = build_scenario(&TerrainSpec::reference_slope()).unwrap();
        let plan = segment_path(&[wp(0.0, 0.0), wp(10.0, 0.0)], 0.002, &field).unwrap();
        let vp = plan_velocity(&plan, &VelocityLimits::default());
        // straight path: no stop at the subdivision junctions
        let expected = 2.0 * 0.36 / 0.2 + (plan.total_length - 0.36 * 0.36 / 0.2) / 0.36;
        assert!((vp.duration - expected).abs() < 1e-9, "{} vs {expected}", vp.duration);
    }

    #[test]
    fn rough_hint_halves_speed() {
        let field = build_scenario(&TerrainClass::Grass.preset(1)).unwrap();
        let plan = segment_path(&[wp(0.0, 0.0), wp(10.0, 0.0)], 0.002, &field).unwrap();
        let vp = plan_velocity(&plan, &VelocityLimits::default());
        for (_, ph) in &vp.phases {
            if let Phase::Move { profile, .. } = ph {
                assert!(profile.v_peak <= 0.18 + 1e-12);
            }
        }
    }

    #[test]
    fn square_stops_and_turns_at_corners() {
        let pts = [wp(0.0, 0.0), wp(2.0, 0.0), wp(2.0, 2.0), wp(0.0, 2.0), wp(0.0, 0.0)];
        let plan = segment_path(&pts, 0.002, &TerrainField::flat()).unwrap();
        let vp = plan_velocity(&plan, &VelocityLimits::default());
        let turns = vp.phases.iter().filter(|(_, p)| matches!(p, Phase::Turn { .. })).count();
        assert_eq!(turns, 3);
        for (t0, p) in &vp.phases {
            if let Phase::Turn { duration, .. } = p {
                let r = vp.sample(&plan, t0 + duration / 2.0);
                assert_eq!(r.speed, 0.0);
            }
        }
    }

    #[test]
    fn plan_csv_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.csv");
        let plan = segment_path(&[wp(0.0, 0.0), wp(1.0, 0.0)], 0.002, &TerrainField::flat()).unwrap();
        plan.write_csv(&path).unwrap();
        let s = std::fs::read_to_string(&path).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next().unwrap(), "segment,p0_x,p0_y,p0_z,pf_x,pf_y,pf_z,v_max");
        assert_eq!(lines.next().unwrap(), "0,0,0,0,1,0,0,1");
    }
}
