//! Rigid-body motion as constrained energy minimization.
//!
//! A body with pose `(theta, r0, r1)` settles to the lowest gravitational
//! potential it can reach within one step without any sampled hull point
//! touching material below the melting temperature.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::functions::Point;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RbdError {
    #[error("degenerate polygon (area {0:e})")]
    Degenerate(f64),
    #[error("invalid body: {0}")]
    InvalidBody(String),
}

/// Planar pose `ξ = (θ, r0, r1)`, also used for rates and increments.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RigidState {
    pub theta: f64,
    pub r0: f64,
    pub r1: f64,
}

impl RigidState {
    pub const fn new(theta: f64, r0: f64, r1: f64) -> Self {
        RigidState { theta, r0, r1 }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.theta, self.r0, self.r1]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        RigidState::new(a[0], a[1], a[2])
    }

    pub fn translation(self) -> Point {
        [self.r0, self.r1]
    }

    /// Applies the pose to a body-frame point.
    pub fn apply(self, p: Point) -> Point {
        let (s, c) = self.theta.sin_cos();
        [c * p[0] - s * p[1] + self.r0, s * p[0] + c * p[1] + self.r1]
    }
}

impl std::ops::Add for RigidState {
    type Output = RigidState;
    fn add(self, o: RigidState) -> RigidState {
        RigidState::new(self.theta + o.theta, self.r0 + o.r0, self.r1 + o.r1)
    }
}

impl std::ops::Sub for RigidState {
    type Output = RigidState;
    fn sub(self, o: RigidState) -> RigidState {
        RigidState::new(self.theta - o.theta, self.r0 - o.r0, self.r1 - o.r1)
    }
}

impl std::ops::Mul<f64> for RigidState {
    type Output = RigidState;
    fn mul(self, k: f64) -> RigidState {
        RigidState::new(self.theta * k, self.r0 * k, self.r1 * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BodyShape {
    Circle { radius: f64 },
    /// Semicircular nose of radius `r_nose` centred at the body origin,
    /// pointing in −y, with a rectangular aft section of length `l_body`.
    SphereCylinder { r_nose: f64, l_body: f64 },
}

impl BodyShape {
    fn perimeter(&self) -> f64 {
        match *self {
            BodyShape::Circle { radius } => 2.0 * PI * radius,
            BodyShape::SphereCylinder { r_nose, l_body } => PI * r_nose + 2.0 * l_body + 2.0 * r_nose,
        }
    }

    /// Outline point at arc length `s` from the lowest point, counterclockwise.
    pub fn outline_point(&self, s: f64) -> Point {
        let s = s.rem_euclid(self.perimeter());
        match *self {
            BodyShape::Circle { radius } => {
                let phi = -PI / 2.0 + s / radius;
                [radius * phi.cos(), radius * phi.sin()]
            }
            BodyShape::SphereCylinder { r_nose: r, l_body: l } => {
                let quarter = PI * r / 2.0;
                let mut s = s;
                if s < quarter {
                    let phi = -PI / 2.0 + s / r;
                    return [r * phi.cos(), r * phi.sin()];
                }
                s -= quarter;
                if s < l {
                    return [r, s];
                }
                s -= l;
                if s < 2.0 * r {
                    return [r - s, l];
                }
                s -= 2.0 * r;
                if s < l {
                    return [-r, l - s];
                }
                s -= l;
                let phi = PI + s / r;
                [r * phi.cos(), r * phi.sin()]
            }
        }
    }
}

/// Body outline, its centroid and the constraint sample points, all in the
/// body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyGeometry {
    pub shape: BodyShape,
    pub hull: Vec<Point>,
    pub area: f64,
    pub centroid: Point,
    pub samples: Vec<Point>,
}

impl BodyGeometry {
    pub fn new(shape: BodyShape, hull_samples: usize) -> Result<Self, RbdError> {
        if hull_samples < 8 {
            return Err(RbdError::InvalidBody("need at least 8 hull samples".into()));
        }
        match shape {
            BodyShape::Circle { radius } if radius > 0.0 => {}
            BodyShape::SphereCylinder { r_nose, l_body } if r_nose > 0.0 && l_body > 0.0 => {}
            _ => return Err(RbdError::InvalidBody(format!("{:?}", shape))),
        }
        let per = shape.perimeter();
        let hull = outline_polygon(&shape, 1024);
        let (area, centroid) = centroid_area(&hull)?;
        let samples = (0..hull_samples)
            .map(|k| shape.outline_point(per * k as f64 / hull_samples as f64))
            .collect();
        Ok(BodyGeometry {
            shape,
            hull,
            area,
            centroid,
            samples,
        })
    }

    pub fn circle(radius: f64, hull_samples: usize) -> Result<Self, RbdError> {
        Self::new(BodyShape::Circle { radius }, hull_samples)
    }

    pub fn sphere_cylinder(r_nose: f64, l_body: f64, hull_samples: usize) -> Result<Self, RbdError> {
        Self::new(BodyShape::SphereCylinder { r_nose, l_body }, hull_samples)
    }
}

/// Counterclockwise polygon through the outline corners, with arcs split
/// into `arc_segments` pieces per full turn.
fn outline_polygon(shape: &BodyShape, arc_segments: usize) -> Vec<Point> {
    match *shape {
        BodyShape::Circle { .. } => {
            let per = shape.perimeter();
            (0..arc_segments)
                .map(|k| shape.outline_point(per * k as f64 / arc_segments as f64))
                .collect()
        }
        BodyShape::SphereCylinder { r_nose: r, l_body: l } => {
            let q = arc_segments / 4;
            let mut v = Vec::new();
            for k in 0..q {
                let phi = -PI / 2.0 + (PI / 2.0) * k as f64 / q as f64;
                v.push([r * phi.cos(), r * phi.sin()]);
            }
            v.push([r, 0.0]);
            v.push([r, l]);
            v.push([-r, l]);
            v.push([-r, 0.0]);
            for k in 1..q {
                let phi = PI + (PI / 2.0) * k as f64 / q as f64;
                v.push([r * phi.cos(), r * phi.sin()]);
            }
            v
        }
    }
}

/// Signed area and centroid of a closed counterclockwise polygon.
pub fn centroid_area(hull: &[Point]) -> Result<(f64, Point), RbdError> {
    let n = hull.len();
    if n < 3 {
        return Err(RbdError::Degenerate(0.0));
    }
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    let o = hull[0];
    for i in 0..n {
        let p = [hull[i][0] - o[0], hull[i][1] - o[1]];
        let q = [hull[(i + 1) % n][0] - o[0], hull[(i + 1) % n][1] - o[1]];
        let cross = p[0] * q[1] - q[0] * p[1];
        a += cross;
        cx += (p[0] + q[0]) * cross;
        cy += (p[1] + q[1]) * cross;
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    a *= 0.5;
    let bbox = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    if a <= 1e-14 * bbox * bbox {
        return Err(RbdError::Degenerate(a));
    }
    Ok((a, [o[0] + cx / (6.0 * a), o[1] + cy / (6.0 * a)]))
}

pub type Sampler = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbdTolerances {
    /// Allowed constraint violation in temperature units.
    pub feasibility: f64,
    /// Objective decrease regarded as significant.
    pub objective: f64,
    /// Smallest coordinate step of the final stationarity poll.
    pub step: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for RbdTolerances {
    fn default() -> Self {
        RbdTolerances {
            feasibility: 1e-6,
            objective: 1e-9,
            step: 1e-4,
            max_outer: 30,
            max_inner: 100,
        }
    }
}

#[derive(Clone)]
pub struct RbdProblem {
    pub body: BodyGeometry,
    pub gravity: Point,
    pub melting_temperature: f64,
    pub max_change: RigidState,
    pub tolerances: RbdTolerances,
    pub sampler: Sampler,
}

impl fmt::Debug for RbdProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RbdProblem")
            .field("body", &self.body.shape)
            .field("gravity", &self.gravity)
            .field("melting_temperature", &self.melting_temperature)
            .field("max_change", &self.max_change)
            .field("tolerances", &self.tolerances)
            .finish()
    }
}

/// Hull sample points in world coordinates.
pub fn hull_points(body: &BodyGeometry, s: RigidState) -> Vec<Point> {
    body.samples.iter().map(|&p| s.apply(p)).collect()
}

/// World-frame centroid for pose `s`.
pub fn centroid(body: &BodyGeometry, s: RigidState) -> Point {
    s.apply(body.centroid)
}

/// `Ψ = −b·r̄(s)`.
pub fn potential_energy(p: &RbdProblem, s: RigidState) -> f64 {
    let c = centroid(&p.body, s);
    -(p.gravity[0] * c[0] + p.gravity[1] * c[1])
}

/// `g_k = T(x_k) − T_m` at every hull sample.
pub fn feasibility(p: &RbdProblem, s: RigidState) -> Vec<f64> {
    hull_points(&p.body, s)
        .into_iter()
        .map(|x| (p.sampler)(x) - p.melting_temperature)
        .collect()
}

fn min_constraint(p: &RbdProblem, s: RigidState) -> f64 {
    feasibility(p, s).into_iter().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinimizeStatus {
    Converged,
    InfeasibleStart,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOutcome {
    pub state: RigidState,
    pub status: MinimizeStatus,
    pub objective: f64,
    pub min_constraint: f64,
}

/// Scaled search space: free components of `s − s0` divided by their
/// per-step bound, so the box is `[-1, 1]^n`.
struct Scaled<'a> {
    p: &'a RbdProblem,
    s0: RigidState,
    free: Vec<usize>,
    scale: Vec<f64>,
    unit_gravity: Point,
}

impl Scaled<'_> {
    fn state(&self, y: &[f64]) -> RigidState {
        let mut a = self.s0.to_array();
        for (k, &i) in self.free.iter().enumerate() {
            a[i] += y[k] * self.scale[k];
        }
        RigidState::from_array(a)
    }

    fn objective(&self, y: &[f64]) -> f64 {
        let c = centroid(&self.p.body, self.state(y));
        -(self.unit_gravity[0] * c[0] + self.unit_gravity[1] * c[1])
    }

    fn constraints(&self, y: &[f64]) -> Vec<f64> {
        feasibility(self.p, self.state(y))
    }

    fn merit(&self, y: &[f64], lambda: &[f64], rho: f64) -> f64 {
        let c = self.constraints(y);
        let pen: f64 = c
            .iter()
            .zip(lambda)
            .map(|(&ck, &lk)| {
                let m = (lk - rho * ck).max(0.0);
                m * m - lk * lk
            })
            .sum();
        self.objective(y) + pen / (2.0 * rho)
    }

    fn merit_gradient(&self, y: &[f64], lambda: &[f64], rho: f64) -> Vec<f64> {
        let n = y.len();
        let mut g = vec![0.0; n];
        let mut yp = y.to_vec();
        for i in 0..n {
            let h = 1e-6;
            yp[i] = y[i] + h;
            let fp = self.merit(&yp, lambda, rho);
            yp[i] = y[i] - h;
            let fm = self.merit(&yp, lambda, rho);
            yp[i] = y[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    }
}

fn project(y: &mut [f64]) {
    for v in y {
        *v = v.clamp(-1.0, 1.0);
    }
}

/// Box-constrained quasi-Newton minimization of the augmented Lagrangian.
fn inner_solve(sc: &Scaled, y: &mut Vec<f64>, lambda: &[f64], rho: f64, max_iter: usize) {
    let n = y.len();
    let identity = |n: usize| {
        let mut h = vec![vec![0.0; n]; n];
        for (i, row) in h.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        h
    };
    let mut h = identity(n);
    let mut f = sc.merit(y, lambda, rho);
    let mut g = sc.merit_gradient(y, lambda, rho);
    for _ in 0..max_iter {
        let active: Vec<bool> = (0..n)
            .map(|i| (y[i] <= -1.0 && g[i] > 0.0) || (y[i] >= 1.0 && g[i] < 0.0))
            .collect();
        let pg: f64 = (0..n).filter(|&i| !active[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg < 1e-10 {
            break;
        }
        let mut d: Vec<f64> = (0..n)
            .map(|i| {
                if active[i] {
                    0.0
                } else {
                    -(0..n).filter(|&j| !active[j]).map(|j| h[i][j] * g[j]).sum::<f64>()
                }
            })
            .collect();
        if d.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() >= 0.0 {
            h = identity(n);
            d = (0..n).map(|i| if active[i] { 0.0 } else { -g[i] }).collect();
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let mut yn: Vec<f64> = y.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
            project(&mut yn);
            let decrease: f64 = g.iter().zip(yn.iter().zip(y.iter())).map(|(gi, (a, b))| gi * (a - b)).sum();
            let fnew = sc.merit(&yn, lambda, rho);
            if fnew <= f + 1e-4 * decrease && fnew < f {
                accepted = Some((yn, fnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((yn, fnew)) = accepted else { break };
        let s: Vec<f64> = yn.iter().zip(y.iter()).map(|(a, b)| a - b).collect();
        let gn = sc.merit_gradient(&yn, lambda, rho);
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * yv[j]).sum()).collect();
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        let step = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        *y = yn;
        f = fnew;
        g = gn;
        if step < 1e-12 {
            break;
        }
    }
}

/// Minimizes the potential over states reachable within `max_change` whose
/// hull samples all lie in melt. An infeasible start is returned unchanged.
pub fn minimize_state(p: &RbdProblem, s0: RigidState) -> MinimizeOutcome {
    let tol = p.tolerances;
    let g0 = min_constraint(p, s0);
    if g0 < 0.0 {
        return MinimizeOutcome {
            state: s0,
            status: MinimizeStatus::InfeasibleStart,
            objective: potential_energy(p, s0),
            min_constraint: g0,
        };
    }
    let bounds = p.max_change.to_array();
    let free: Vec<usize> = (0..3).filter(|&i| bounds[i] > 0.0).collect();
    let scale: Vec<f64> = free.iter().map(|&i| bounds[i]).collect();
    let gnorm = p.gravity[0].hypot(p.gravity[1]);
    if free.is_empty() || gnorm == 0.0 {
        return MinimizeOutcome {
            state: s0,
            status: MinimizeStatus::Converged,
            objective: potential_energy(p, s0),
            min_constraint: g0,
        };
    }
    let sc = Scaled {
        p,
        s0,
        free,
        scale,
        unit_gravity: [p.gravity[0] / gnorm, p.gravity[1] / gnorm],
    };
    let n = sc.free.len();

    let mut y = vec![0.0; n];
    let mut lambda = vec![0.0; p.body.samples.len()];
    let mut rho = 10.0;
    let mut status = MinimizeStatus::IterationLimit;
    let mut last_violation = f64::INFINITY;
    for _ in 0..tol.max_outer {
        let y_prev = y.clone();
        inner_solve(&sc, &mut y, &lambda, rho, tol.max_inner);
        let c = sc.constraints(&y);
        let violation = c.iter().fold(0.0f64, |m, &v| m.max(-v));
        for (l, &ck) in lambda.iter_mut().zip(&c) {
            *l = (*l - rho * ck).max(0.0);
        }
        let moved = y.iter().zip(&y_prev).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if violation <= tol.feasibility && moved < 1e-9 {
            status = MinimizeStatus::Converged;
            break;
        }
        if violation > 0.25 * last_violation {
            rho = (rho * 10.0).min(1e10);
        }
        last_violation = violation;
    }

    // Restore strict feasibility along the segment from the feasible start.
    if sc.constraints(&y).iter().any(|&v| v < 0.0) {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let ym: Vec<f64> = y.iter().map(|v| v * mid).collect();
            if sc.constraints(&ym).iter().all(|&v| v >= 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        y.iter_mut().for_each(|v| *v *= lo);
    }

    // Coordinate poll down to the stationarity step.
    let feasible = |y: &[f64]| sc.constraints(y).iter().all(|&v| v >= 0.0);
    let mut fy = sc.objective(&y);
    let max_bound = sc.scale.iter().fold(0.0f64, |m, &v| m.max(v));
    let mut delta = tol.step;
    while delta * 2.0 <= 0.25 * max_bound {
        delta *= 2.0;
    }
    let mut polls = 0;
    loop {
        let mut improved = false;
        for k in 0..n {
            for sign in [-1.0, 1.0] {
                let mut yn = y.clone();
                yn[k] = (y[k] + sign * delta / sc.scale[k]).clamp(-1.0, 1.0);
                if yn[k] == y[k] {
                    continue;
                }
                let fnew = sc.objective(&yn);
                if fnew < fy - tol.objective && feasible(&yn) {
                    y = yn;
                    fy = fnew;
                    improved = true;
                }
            }
        }
        polls += 1;
        if !improved {
            if delta <= tol.step {
                break;
            }
            delta = (delta * 0.5).max(tol.step);
        }
        if polls > 100_000 {
            status = MinimizeStatus::IterationLimit;
            break;
        }
    }

    let state = sc.state(&y);
    MinimizeOutcome {
        state,
        status,
        objective: potential_energy(p, state),
        min_constraint: min_constraint(p, state),
    }
}

/// One-dimensional slices of the potential through `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    pub theta: Vec<(f64, f64)>,
    pub r1: Vec<(f64, f64)>,
}

/// Samples `Ψ` for `θ ∈ [θ−π, θ+π]` and `r1 ∈ [r1−half_width, r1+half_width]`.
pub fn energy_landscape(p: &RbdProblem, s: RigidState, samples: usize, half_width: f64) -> Landscape {
    let n = samples.max(2);
    let lin = |a: f64, b: f64, k: usize| a + (b - a) * k as f64 / (n - 1) as f64;
    let theta = (0..n)
        .map(|k| {
            let th = lin(s.theta - PI, s.theta + PI, k);
            (th, potential_energy(p, RigidState { theta: th, ..s }))
        })
        .collect();
    let r1 = (0..n)
        .map(|k| {
            let r = lin(s.r1 - half_width, s.r1 + half_width, k);
            (r, potential_energy(p, RigidState { r1: r, ..s }))
        })
        .collect();
    Landscape { theta, r1 }
}

impl Landscape {
    /// CSV with columns `axis,value,energy`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("axis,value,energy\n");
        for (name, rows) in [("theta", &self.theta), ("r1", &self.r1)] {
            for (v, e) in rows {
                s.push_str(&format!("{},{:e},{:e}\n", name, v, e));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn problem(body: BodyGeometry, sampler: impl Fn(Point) -> f64 + Send + Sync + 'static) -> RbdProblem {
        RbdProblem {
            body,
            gravity: [0.0, -1.0],
            melting_temperature: 0.0,
            max_change: RigidState::new(0.0, 0.0, 0.5),
            tolerances: RbdTolerances::default(),
            sampler: Arc::new(sampler),
        }
    }

    #[test]
    fn polygon_centroids() {
        let (a, c) = centroid_area(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert_eq!((a, c), (1.0, [0.5, 0.5]));
        let (a, c) = centroid_area(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_abs_diff_eq!(a, 0.5);
        assert_abs_diff_eq!(c[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c[1], 1.0 / 3.0, epsilon = 1e-15);
        assert!(centroid_area(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).is_err());
    }

    #[test]
    fn hull_samples_start_at_bottom() {
        let b = BodyGeometry::circle(1.0, 32).unwrap();
        assert_abs_diff_eq!(b.samples[0][1], -1.0, epsilon = 1e-15);
        let pts = hull_points(&b, RigidState::new(0.3, 2.0, 3.0));
        for p in pts {
            assert_abs_diff_eq!((p[0] - 2.0).hypot(p[1] - 3.0), 1.0, epsilon = 1e-12);
        }
        let sc = BodyGeometry::sphere_cylinder(1.0, 2.0, 32).unwrap();
        assert!(sc.centroid[1] > 0.0 && sc.centroid[0].abs() < 1e-12);
        let flipped = hull_points(&sc, RigidState::new(PI, 0.0, 0.0));
        for (p, q) in flipped.iter().zip(&sc.samples) {
            assert_abs_diff_eq!(p[0], -q[0], epsilon = 1e-12);
            assert_abs_diff_eq!(p[1], -q[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn potential() {
        let mut p = problem(BodyGeometry::circle(1.0, 16).unwrap(), |_| 1.0);
        p.gravity = [0.0, -9.81];
        assert_abs_diff_eq!(potential_energy(&p, RigidState::new(0.0, 3.0, 2.0)), 19.62, epsilon = 1e-12);
        assert_abs_diff_eq!(
            potential_energy(&p, RigidState::new(1.0, 3.0, 2.0)),
            potential_energy(&p, RigidState::new(-2.0, 3.0, 2.0)),
            epsilon = 1e-12
        );
    }

    #[test]
    fn feasibility_examples() {
        let p = problem(BodyGeometry::circle(1.0, 32).unwrap(), |x| x[1]);
        let g = feasibility(&p, RigidState::new(0.0, 0.0, 2.0));
        assert_abs_diff_eq!(g.iter().copied().fold(f64::INFINITY, f64::min), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn liquid_fall_hits_bound() {
        let p = problem(BodyGeometry::circle(1.0, 32).unwrap(), |_| 5.0);
        let s0 = RigidState::new(0.0, 0.0, 1.0);
        let out = minimize_state(&p, s0);
        assert_abs_diff_eq!(out.state.r1, 0.5, epsilon = 1e-12);
        assert_eq!(out.state.theta, 0.0);
        assert_eq!(out.state.r0, 0.0);
    }

    #[test]
    fn frozen_start_is_returned() {
        let p = problem(BodyGeometry::circle(1.0, 32).unwrap(), |_| -1.0);
        let s0 = RigidState::new(0.1, 0.2, 0.3);
        let out = minimize_state(&p, s0);
        assert_eq!(out.state, s0);
        assert_eq!(out.status, MinimizeStatus::InfeasibleStart);
    }

    #[test]
    fn landscape_slices() {
        let p = problem(BodyGeometry::circle(1.0, 16).unwrap(), |_| 1.0);
        let l = energy_landscape(&p, RigidState::default(), 11, 1.0);
        assert!(l.theta.iter().all(|(_, e)| (e - l.theta[0].1).abs() < 1e-12));
        let slope = (l.r1[10].1 - l.r1[0].1) / (l.r1[10].0 - l.r1[0].0);
        assert_abs_diff_eq!(slope, 1.0, epsilon = 1e-12);
        assert!(l.to_csv().starts_with("axis,value,energy\n"));
    }
}
