//! Driving tracks: a centerline built from straight and arc segments, a
//! corridor around it, start and end marks, and the terrain laid along it.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Pose, SlipField, TerrainProfile, Vec2};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Segment {
    Straight { length: f64 },
    /// Positive `angle` turns left, negative turns right.
    Arc { radius: f64, angle: f64 },
}

impl Segment {
    pub fn length(&self) -> f64 {
        match *self {
            Segment::Straight { length } => length,
            Segment::Arc { radius, angle } => radius * angle.abs(),
        }
    }

    pub fn curvature(&self) -> f64 {
        match *self {
            Segment::Straight { .. } => 0.0,
            Segment::Arc { radius, angle } => angle.signum() / radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrackId {
    A,
    B,
    C,
}

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrackId::A => "A",
            TrackId::B => "B",
            TrackId::C => "C",
        })
    }
}

impl FromStr for TrackId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(TrackId::A),
            "B" | "b" => Ok(TrackId::B),
            "C" | "c" => Ok(TrackId::C),
            _ => Err(Error::Config(format!("unknown track `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub name: String,
    pub segments: Vec<Segment>,
    pub width: f64,
    /// `phi` as a function of centerline arclength.
    pub terrain: TerrainProfile,
}

/// Default soft patches: two sand traps with short transitions.
pub fn sand_traps(length: f64) -> TerrainProfile {
    let a = 0.25 * length;
    let b = 0.6 * length;
    TerrainProfile::new(
        vec![
            (0.0, 0.95),
            (a, 0.95),
            (a + 0.2, 0.55),
            (a + 1.2, 0.55),
            (a + 1.4, 0.95),
            (b, 0.95),
            (b + 0.2, 0.5),
            (b + 1.6, 0.5),
            (b + 1.8, 0.95),
        ],
        0.6,
    )
    .expect("static profile is valid")
}

impl TrackSpec {
    pub fn preset(id: TrackId) -> Self {
        let r = 1.5;
        let quarter = r * FRAC_PI_2;
        let segments = match id {
            TrackId::A => vec![Segment::Straight { length: 10.0 }],
            TrackId::B => {
                let rest = (10.0 - 2.0 * quarter - 2.0) / 2.0;
                vec![
                    Segment::Straight { length: 2.0 },
                    Segment::Arc { radius: r, angle: -FRAC_PI_2 },
                    Segment::Straight { length: rest },
                    Segment::Arc { radius: r, angle: -FRAC_PI_2 },
                    Segment::Straight { length: rest },
                ]
            }
            TrackId::C => vec![
                Segment::Straight { length: 2.0 },
                Segment::Arc { radius: r, angle: -FRAC_PI_2 },
                Segment::Straight { length: 1.5 },
                Segment::Arc { radius: r, angle: -FRAC_PI_2 },
                Segment::Straight { length: 1.5 },
                Segment::Arc { radius: r, angle: FRAC_PI_2 },
                Segment::Straight { length: 2.0 },
            ],
        };
        let length: f64 = segments.iter().map(Segment::length).sum();
        Self {
            name: id.to_string(),
            segments,
            width: 2.0,
            terrain: sand_traps(length),
        }
    }

    /// Long winding course with sand patches spread along it, used to
    /// collect training data with turns in both directions.
    pub fn training_loop() -> Self {
        let quarter = FRAC_PI_2;
        let segments = vec![
            Segment::Straight { length: 3.0 },
            Segment::Arc { radius: 2.0, angle: -quarter },
            Segment::Straight { length: 3.0 },
            Segment::Arc { radius: 1.5, angle: quarter },
            Segment::Straight { length: 4.0 },
            Segment::Arc { radius: 2.0, angle: quarter },
            Segment::Straight { length: 2.0 },
            Segment::Arc { radius: 1.5, angle: -2.0 * quarter },
            Segment::Straight { length: 4.0 },
            Segment::Arc { radius: 2.0, angle: -quarter },
            Segment::Straight { length: 5.0 },
        ];
        let mut knots = vec![(0.0, 0.95)];
        // (start, plateau length, phi)
        let patches = [
            (1.0, 1.0, 0.55),
            (4.5, 1.5, 0.7),
            (8.0, 0.8, 0.5),
            (12.0, 2.0, 0.6),
            (17.0, 1.2, 0.52),
            (21.0, 0.6, 0.65),
            (24.0, 1.8, 0.5),
            (29.0, 1.0, 0.58),
            (33.0, 1.4, 0.62),
        ];
        for (start, plateau, phi) in patches {
            knots.push((start, 0.95));
            knots.push((start + 0.2, phi));
            knots.push((start + 0.2 + plateau, phi));
            knots.push((start + 0.4 + plateau, 0.95));
        }
        Self {
            name: "training-loop".into(),
            segments,
            width: 2.0,
            terrain: TerrainProfile::new(knots, 0.6).expect("static profile is valid"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Config("track has no segments".into()));
        }
        if !(self.width > 0.0) {
            return Err(Error::Config(format!("track width must be positive, got {}", self.width)));
        }
        for s in &self.segments {
            let ok = match *s {
                Segment::Straight { length } => length > 0.0,
                Segment::Arc { radius, angle } => radius > 0.0 && angle != 0.0 && angle.is_finite(),
            };
            if !ok {
                return Err(Error::Config(format!("invalid segment {s:?}")));
            }
        }
        self.terrain.validate()
    }
}

/// Where a point lies relative to the centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub arclength: f64,
    /// Signed distance, positive to the left of the direction of travel.
    pub lateral: f64,
}

/// A track with its centerline sampled densely for projection queries.
#[derive(Debug, Clone)]
pub struct Track {
    spec: TrackSpec,
    points: Vec<Vec2>,
    arclength: Vec<f64>,
    headings: Vec<f64>,
    curvature: Vec<f64>,
}

const SAMPLE_SPACING: f64 = 0.02;

impl Track {
    pub fn new(spec: TrackSpec) -> Result<Self> {
        spec.validate()?;
        let mut points = vec![[0.0, 0.0]];
        let mut arclength = vec![0.0];
        let mut headings = vec![0.0];
        let mut curvature = vec![spec.segments[0].curvature()];
        let (mut x, mut y, mut th, mut s) = (0.0, 0.0, 0.0f64, 0.0);
        for seg in &spec.segments {
            let len = seg.length();
            let k = seg.curvature();
            let steps = (len / SAMPLE_SPACING).ceil().max(1.0) as usize;
            let ds = len / steps as f64;
            for _ in 0..steps {
                // exact arc step
                let th_next = th + k * ds;
                if k == 0.0 {
                    x += ds * th.cos();
                    y += ds * th.sin();
                } else {
                    x += (th_next.sin() - th.sin()) / k;
                    y -= (th_next.cos() - th.cos()) / k;
                }
                th = th_next;
                s += ds;
                points.push([x, y]);
                arclength.push(s);
                headings.push(th);
                curvature.push(k);
            }
        }
        Ok(Self {
            spec,
            points,
            arclength,
            headings,
            curvature,
        })
    }

    pub fn preset(id: TrackId) -> Self {
        Self::new(TrackSpec::preset(id)).expect("preset tracks are valid")
    }

    pub fn spec(&self) -> &TrackSpec {
        &self.spec
    }

    pub fn length(&self) -> f64 {
        *self.arclength.last().expect("non-empty")
    }

    pub fn width(&self) -> f64 {
        self.spec.width
    }

    pub fn start_pose(&self) -> Pose {
        Pose::default()
    }

    pub fn end_pose(&self) -> Pose {
        let p = *self.points.last().expect("non-empty");
        Pose {
            x: p[0],
            y: p[1],
            heading: *self.headings.last().expect("non-empty"),
        }
    }

    fn index_at(&self, s: f64) -> usize {
        let s = s.clamp(0.0, self.length());
        self.arclength.partition_point(|&a| a < s).min(self.points.len() - 1)
    }

    /// Centerline pose at arclength `s`, clamped to the track.
    pub fn pose_at(&self, s: f64) -> Pose {
        let s = s.clamp(0.0, self.length());
        let i = self.index_at(s);
        if i == 0 {
            return self.start_pose();
        }
        let (s0, s1) = (self.arclength[i - 1], self.arclength[i]);
        let w = if s1 > s0 { (s - s0) / (s1 - s0) } else { 1.0 };
        let (p0, p1) = (self.points[i - 1], self.points[i]);
        Pose {
            x: p0[0] + w * (p1[0] - p0[0]),
            y: p0[1] + w * (p1[1] - p0[1]),
            heading: self.headings[i - 1] + w * (self.headings[i] - self.headings[i - 1]),
        }
    }

    /// Signed centerline curvature at arclength `s`.
    pub fn curvature_at(&self, s: f64) -> f64 {
        self.curvature[self.index_at(s)]
    }

    /// Nearest centerline point.
    pub fn project(&self, point: Vec2) -> Projection {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 1..self.points.len() {
            let (a, b) = (self.points[i - 1], self.points[i]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let rel = [point[0] - a[0], point[1] - a[1]];
            let w = ((rel[0] * d[0] + rel[1] * d[1]) / len2).clamp(0.0, 1.0);
            let q = [a[0] + w * d[0], a[1] + w * d[1]];
            let dist2 = (point[0] - q[0]).powi(2) + (point[1] - q[1]).powi(2);
            if dist2 < best.0 {
                let cross = d[0] * rel[1] - d[1] * rel[0];
                let lateral = dist2.sqrt() * if cross >= 0.0 { 1.0 } else { -1.0 };
                let s = self.arclength[i - 1] + w * (self.arclength[i] - self.arclength[i - 1]);
                best = (dist2, s, lateral);
            }
        }
        Projection {
            arclength: best.1,
            lateral: best.2,
        }
    }

    /// Inside the corridor, including the areas just before the start and
    /// just past the end mark.
    pub fn in_corridor(&self, point: Vec2) -> bool {
        self.project(point).lateral.abs() <= 0.5 * self.width()
    }

    /// Whether `point` lies past the end mark within the corridor width.
    pub fn past_end(&self, point: Vec2) -> bool {
        let end = self.end_pose();
        let (s, c) = end.heading.sin_cos();
        let rel = [point[0] - end.x, point[1] - end.y];
        let along = rel[0] * c + rel[1] * s;
        let across = -rel[0] * s + rel[1] * c;
        along >= 0.0 && across.abs() <= 0.5 * self.width()
    }
}

impl SlipField for Track {
    fn slip_at_point(&self, point: Vec2) -> f64 {
        self.spec.terrain.slip_at(self.project(point).arclength)
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    #[test]
    fn track_a_is_ten_metres_straight() {
        let t = Track::preset(TrackId::A);
        assert_abs_diff_eq!(t.length(), 10.0, epsilon = 1e-9);
        let end = t.end_pose();
        assert_abs_diff_eq!(end.x, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(end.y, 0.0, epsilon = 1e-12);
        assert_eq!(t.width(), 2.0);
    }

    #[test]
    fn track_b_turns_right_twice() {
        let t = Track::preset(TrackId::B);
        assert_abs_diff_eq!(t.length(), 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(t.end_pose().heading, -std::f64::consts::PI, epsilon = 1e-9);
        assert_abs_diff_eq!(t.curvature_at(3.0), -1.0 / 1.5, epsilon = 1e-12);
        let rest = (10.0 - 1.5 * std::f64::consts::PI - 2.0) / 2.0;
        assert_abs_diff_eq!(t.end_pose().x, 2.0 - rest, epsilon = 1e-6);
        assert_abs_diff_eq!(t.end_pose().y, -3.0 - rest, epsilon = 1e-6);
    }

    #[test]
    fn track_c_ends_heading_back_down() {
        let t = Track::preset(TrackId::C);
        assert_abs_diff_eq!(t.end_pose().heading, -FRAC_PI_2, epsilon = 1e-9);
    }

    #[test]
    fn projection_recovers_arclength_and_side() {
        let t = Track::preset(TrackId::B);
        for s in [0.5, 2.7, 4.0, 6.1, 9.5] {
            let p = t.pose_at(s);
            let (sn, cs) = p.heading.sin_cos();
            let left = [p.x - 0.3 * sn, p.y + 0.3 * cs];
            let proj = t.project(left);
            assert_abs_diff_eq!(proj.arclength, s, epsilon = 0.02);
            assert_abs_diff_eq!(proj.lateral, 0.3, epsilon = 0.01);
        }
        assert!(t.in_corridor([1.0, 0.9]));
        assert!(!t.in_corridor([1.0, 1.1]));
    }

    #[test]
    fn end_mark_crossing() {
        let t = Track::preset(TrackId::A);
        assert!(!t.past_end([9.99, 0.0]));
        assert!(t.past_end([10.0, 0.5]));
        assert!(!t.past_end([10.5, 1.5]));
    }

    #[test]
    fn slip_follows_terrain_along_the_centerline() {
        let t = Track::preset(TrackId::A);
        assert_eq!(t.slip_at_point([0.5, 0.0]), 0.0);
        let trap = t.spec().terrain.slip_at(6.5);
        assert_abs_diff_eq!(trap, 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(t.slip_at_point([6.5, 0.4]), trap, epsilon = 1e-12);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = TrackSpec::preset(TrackId::A);
        s.width = 0.0;
        assert!(Track::new(s).is_err());
        let mut s = TrackSpec::preset(TrackId::A);
        s.segments = vec![Segment::Arc { radius: -1.0, angle: 1.0 }];
        assert!(Track::new(s).is_err());
    }
}
