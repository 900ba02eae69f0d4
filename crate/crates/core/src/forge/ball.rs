//! Fixed-step 2-D ball physics for the ball-drop benchmark.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{instance_rng, BallGt, GroundTruth, ImageRef, TaskInstance, TaskKind};
use crate::geom::{closest_on_segment, segments_intersect, PixelPoint, PixelRect};

pub const BALL_QUESTION: &str =
    "The ball is dropped from where it is shown. Which container (1-4, numbered left to right) will it land in?";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    /// px/s², pointing down the image.
    pub gravity: f64,
    pub restitution: f64,
    /// Coulomb coefficient applied to each contact impulse.
    pub friction: f64,
    pub dt: f64,
    pub t_max: f64,
    /// Speed (px/s) below which a ball inside a container counts as settled.
    pub settle_speed: f64,
    /// Normal approach speeds below this do not bounce.
    pub bounce_threshold: f64,
    /// Trajectory keeps every n-th step.
    pub sample_every: usize,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            gravity: 1000.0,
            restitution: 0.35,
            friction: 0.2,
            dt: 1.0 / 240.0,
            t_max: 20.0,
            settle_speed: 2.0,
            bounce_threshold: 40.0,
            sample_every: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: PixelPoint,
    pub b: PixelPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallScene {
    pub width: u32,
    pub height: u32,
    pub ball_start: PixelPoint,
    pub ball_radius: f64,
    pub platforms: Vec<Segment>,
    /// Four boxes along the bottom, left to right; the top edge is the mouth.
    pub containers: Vec<PixelRect>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("the ball did not settle in a container before the time limit")]
    NoLanding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub trajectory: Vec<PixelPoint>,
    pub container: Option<u32>,
    pub touched_platform: bool,
    pub steps: usize,
}

impl BallScene {
    /// Empty 800×800 scene: four equal containers 110 px deep, ball at
    /// `(x, 60)` with radius 14.
    pub fn standard(ball_x: f64) -> Self {
        let (w, h) = (800u32, 800u32);
        let (mouth, floor) = (680.0, 790.0);
        let pitch = w as f64 / 4.0;
        let containers = (0..4)
            .map(|i| PixelRect::new(i as f64 * pitch + 4.0, mouth, (i + 1) as f64 * pitch - 4.0, floor))
            .collect();
        Self { width: w, height: h, ball_start: PixelPoint::new(ball_x, 60.0), ball_radius: 14.0, platforms: vec![], containers }
    }

    /// Static geometry: platforms first, then container walls and floors,
    /// divider caps and the two side walls.
    pub fn segments(&self) -> Vec<Segment> {
        let seg = |a, b| Segment { a, b };
        let p = PixelPoint::new;
        let mut out = self.platforms.clone();
        for c in &self.containers {
            out.push(seg(p(c.x0, c.y0), p(c.x0, c.y1)));
            out.push(seg(p(c.x1, c.y0), p(c.x1, c.y1)));
            out.push(seg(p(c.x0, c.y1), p(c.x1, c.y1)));
        }
        for w in self.containers.windows(2) {
            out.push(seg(p(w[0].x1, w[0].y0), p(w[1].x0, w[1].y0)));
        }
        let (wf, hf) = (self.width as f64, self.height as f64);
        out.push(seg(p(0.0, 0.0), p(0.0, hf)));
        out.push(seg(p(wf, 0.0), p(wf, hf)));
        out
    }

    pub fn container_at(&self, q: PixelPoint) -> Option<u32> {
        self.containers.iter().position(|c| q.x >= c.x0 && q.x <= c.x1 && q.y > c.y0 && q.y <= c.y1).map(|i| i as u32 + 1)
    }

    /// Left–right mirror image of the scene.
    pub fn mirrored(&self) -> Self {
        let wf = self.width as f64;
        let m = |q: PixelPoint| PixelPoint::new(wf - q.x, q.y);
        let mut containers: Vec<PixelRect> =
            self.containers.iter().map(|c| PixelRect::new(wf - c.x1, c.y0, wf - c.x0, c.y1)).collect();
        containers.reverse();
        Self {
            width: self.width,
            height: self.height,
            ball_start: m(self.ball_start),
            ball_radius: self.ball_radius,
            platforms: self.platforms.iter().map(|s| Segment { a: m(s.a), b: m(s.b) }).collect(),
            containers,
        }
    }
}

/// Runs the simulation to settlement or the time limit.
pub fn simulate(scene: &BallScene, params: &PhysicsParams) -> Simulation {
    let segs = scene.segments();
    let n_platforms = scene.platforms.len();
    let r = scene.ball_radius;
    let g = PixelPoint::new(0.0, params.gravity);
    let (mut p, mut v) = (scene.ball_start, PixelPoint::default());
    let mut trajectory = vec![p];
    let mut touched = false;
    let max_steps = (params.t_max / params.dt).ceil() as usize;
    for step in 1..=max_steps {
        v = v + g * params.dt;
        p = p + v * params.dt;
        for (k, s) in segs.iter().enumerate() {
            let cp = closest_on_segment(p, s.a, s.b);
            let d = p.dist(cp);
            if d >= r {
                continue;
            }
            let n = if d > 1e-12 {
                (p - cp) * (1.0 / d)
            } else {
                let t = s.b - s.a;
                PixelPoint::new(-t.y, t.x) * (1.0 / t.norm())
            };
            p = cp + n * r;
            let vn = v.dot(n);
            if vn < 0.0 {
                touched |= k < n_platforms;
                let vt = v - n * vn;
                let out_n = if -vn < params.bounce_threshold { 0.0 } else { -params.restitution * vn };
                let impulse = out_n - vn;
                let vt_len = vt.norm();
                let vt = if vt_len > 0.0 { vt * ((vt_len - params.friction * impulse).max(0.0) / vt_len) } else { vt };
                v = vt + n * out_n;
            }
        }
        if step % params.sample_every == 0 {
            trajectory.push(p);
        }
        if v.norm() < params.settle_speed {
            if let Some(c) = scene.container_at(p) {
                if trajectory.last() != Some(&p) {
                    trajectory.push(p);
                }
                return Simulation { trajectory, container: Some(c), touched_platform: touched, steps: step };
            }
        }
    }
    Simulation { trajectory, container: None, touched_platform: touched, steps: max_steps }
}

/// Trajectory and 1-based landing container at time step `dt`.
pub fn simulate_ball(scene: &BallScene, dt: f64) -> Result<(Vec<PixelPoint>, u32), SimError> {
    let sim = simulate(scene, &PhysicsParams { dt, ..PhysicsParams::default() });
    match sim.container {
        Some(c) => Ok((sim.trajectory, c)),
        None => Err(SimError::NoLanding),
    }
}

/// Platform sampling ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformRanges {
    pub length: (f64, f64),
    /// Absolute tilt in degrees; steeper than the friction angle so balls
    /// never come to rest on a single platform.
    pub tilt_deg: (f64, f64),
    pub band_y: (f64, f64),
}

impl Default for PlatformRanges {
    fn default() -> Self {
        Self { length: (160.0, 320.0), tilt_deg: (15.0, 40.0), band_y: (170.0, 600.0) }
    }
}

fn random_scene<R: Rng>(rng: &mut R, n_lines: usize, ranges: &PlatformRanges) -> Option<BallScene> {
    let mut scene = BallScene::standard(rng.gen_range(40.0..760.0));
    let band = (ranges.band_y.1 - ranges.band_y.0) / n_lines as f64;
    for i in 0..n_lines {
        let len = rng.gen_range(ranges.length.0..ranges.length.1);
        let tilt = rng.gen_range(ranges.tilt_deg.0..ranges.tilt_deg.1).to_radians() * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let cy = ranges.band_y.0 + band * (i as f64 + rng.gen_range(0.25..0.75));
        let cx = rng.gen_range(60.0..740.0);
        let d = PixelPoint::new(tilt.cos(), tilt.sin()) * (len / 2.0);
        let c = PixelPoint::new(cx, cy);
        let s = Segment { a: c - d, b: c + d };
        if [s.a, s.b].iter().any(|q| q.x < 10.0 || q.x > 790.0) {
            return None;
        }
        if scene.platforms.iter().any(|o| segments_intersect(o.a, o.b, s.a, s.b)) {
            return None;
        }
        scene.platforms.push(s);
    }
    Some(scene)
}

pub const MAX_SCENE_ATTEMPTS: usize = 10_000;

/// A random scene with `n_lines` platforms whose ball touches at least one
/// platform, settles in a container, and lands in the same container when
/// the step is halved.
pub fn gen_ball_drop(seed: u64, n_lines: usize) -> TaskInstance {
    gen_ball_drop_with(seed, n_lines, &PlatformRanges::default(), &PhysicsParams::default())
}

pub fn gen_ball_drop_with(seed: u64, n_lines: usize, ranges: &PlatformRanges, params: &PhysicsParams) -> TaskInstance {
    let mut rng = instance_rng(seed, 0xba11 + n_lines as u64);
    for _ in 0..MAX_SCENE_ATTEMPTS {
        let Some(scene) = random_scene(&mut rng, n_lines, ranges) else { continue };
        let sim = simulate(&scene, params);
        let (Some(c), true) = (sim.container, sim.touched_platform) else { continue };
        let fine = simulate(&scene, &PhysicsParams { dt: params.dt / 2.0, ..*params });
        if fine.container != Some(c) {
            continue;
        }
        return TaskInstance {
            id: format!("ball_l{n_lines}_s{seed}"),
            kind: TaskKind::BallDrop,
            image: ImageRef { path: String::new(), width: scene.width, height: scene.height },
            question: BALL_QUESTION.into(),
            answer: Some(c.to_string()),
            truth: GroundTruth::Ball(BallGt { trajectory: sim.trajectory, container: c, scene }),
        };
    }
    panic!("no acceptable ball-drop scene for seed {seed} after {MAX_SCENE_ATTEMPTS} attempts");
}
