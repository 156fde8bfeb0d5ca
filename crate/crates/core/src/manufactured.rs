//! Closed-form test problems.
//!
//! Every field is defined on the whole plane, so the solution is its own
//! smooth extension outside the physical domain. The source is always
//! computed as `u_t − Δu` from the closed forms rather than typed in.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::geometry::MovingDomain;
use crate::mesh::BoxDomain;
use crate::{Error, Point, Result};

type ScalarField = dyn Fn(Point, f64) -> f64 + Send + Sync;
type VectorField = dyn Fn(Point, f64) -> Point + Send + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemId {
    TravelingCircle,
    StaticSquare,
}

impl ProblemId {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemId::TravelingCircle => "traveling_circle",
            ProblemId::StaticSquare => "static_square",
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "traveling_circle" => Ok(ProblemId::TravelingCircle),
            "static_square" => Ok(ProblemId::StaticSquare),
            other => Err(Error::invalid(format!(
                "unknown problem '{other}' (expected traveling_circle or static_square)"
            ))),
        }
    }
}

/// Exact solution with its derivatives, the domain and the time interval.
#[derive(Clone)]
pub struct ManufacturedProblem {
    pub name: String,
    pub domain: MovingDomain,
    pub bbox: BoxDomain,
    pub t_max: f64,
    u: Arc<ScalarField>,
    grad_u: Arc<VectorField>,
    u_t: Arc<ScalarField>,
    laplacian_u: Arc<ScalarField>,
}

impl fmt::Debug for ManufacturedProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManufacturedProblem")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("bbox", &self.bbox)
            .field("t_max", &self.t_max)
            .finish()
    }
}

impl ManufacturedProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        domain: MovingDomain,
        bbox: BoxDomain,
        t_max: f64,
        u: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
        grad_u: impl Fn(Point, f64) -> Point + Send + Sync + 'static,
        u_t: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
        laplacian_u: impl Fn(Point, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            domain,
            bbox,
            t_max,
            u: Arc::new(u),
            grad_u: Arc::new(grad_u),
            u_t: Arc::new(u_t),
            laplacian_u: Arc::new(laplacian_u),
        }
    }

    pub fn from_id(id: ProblemId, r2: f64) -> Result<Self> {
        match id {
            ProblemId::TravelingCircle => example_traveling_circle(r2),
            ProblemId::StaticSquare => Ok(example_static_square()),
        }
    }

    pub fn u(&self, x: Point, t: f64) -> f64 {
        (self.u)(x, t)
    }

    pub fn grad_u(&self, x: Point, t: f64) -> Point {
        (self.grad_u)(x, t)
    }

    pub fn u_t(&self, x: Point, t: f64) -> f64 {
        (self.u_t)(x, t)
    }

    pub fn laplacian_u(&self, x: Point, t: f64) -> f64 {
        (self.laplacian_u)(x, t)
    }

    /// Source term `f = u_t − Δu`.
    pub fn f(&self, x: Point, t: f64) -> f64 {
        self.u_t(x, t) - self.laplacian_u(x, t)
    }

    /// Dirichlet data; the trace of `u`.
    pub fn g_bc(&self, x: Point, t: f64) -> f64 {
        self.u(x, t)
    }

    pub fn w_max(&self) -> f64 {
        self.domain.w_max
    }
}

/// A disc of squared radius `r2` moving right with unit speed through the
/// unit square over `[0, 0.1]`, with
/// `u = exp(−4π²t)·cos(2πx)·cos(2πy)`.
///
/// This `u` satisfies `u_t − Δu = 4π²u`, so the source is not zero.
pub fn example_traveling_circle(r2: f64) -> Result<ManufacturedProblem> {
    let t_max = 0.1;
    if !(r2 > 0.0) || !(0.5 + t_max + r2.sqrt() < 1.0) {
        return Err(Error::invalid(format!(
            "squared radius {r2} does not keep the circle inside the unit square on [0, {t_max}] \
             (the value 0.9 found in the literature does not fit either; 0.09 is the default)"
        )));
    }
    let k = 2.0 * PI;
    let decay = 4.0 * PI * PI;
    let u = move |x: Point, t: f64| (-decay * t).exp() * (k * x.x).cos() * (k * x.y).cos();
    let grad = move |x: Point, t: f64| {
        let e = (-decay * t).exp();
        Point::new(
            -k * e * (k * x.x).sin() * (k * x.y).cos(),
            -k * e * (k * x.x).cos() * (k * x.y).sin(),
        )
    };
    let u_t = move |x: Point, t: f64| -decay * u(x, t);
    let lap = move |x: Point, t: f64| -2.0 * k * k * u(x, t);
    let domain = MovingDomain::new(
        move |x, t| (x.x - 0.5 - t).powi(2) + (x.y - 0.5).powi(2) - r2,
        1.0,
        format!("circle r^2={r2} moving with velocity (1,0)"),
    );
    Ok(ManufacturedProblem::new(
        ProblemId::TravelingCircle.as_str(),
        domain,
        BoxDomain::unit_square(),
        t_max,
        u,
        grad,
        u_t,
        lap,
    ))
}

/// The unit square itself (`phi ≡ −1`) with
/// `u = exp(−2π²t)·sin(πx)·sin(πy)`, `f = 0` and `g = 0` on the box.
pub fn example_static_square() -> ManufacturedProblem {
    let decay = 2.0 * PI * PI;
    let u = move |x: Point, t: f64| (-decay * t).exp() * (PI * x.x).sin() * (PI * x.y).sin();
    let grad = move |x: Point, t: f64| {
        let e = (-decay * t).exp();
        Point::new(
            PI * e * (PI * x.x).cos() * (PI * x.y).sin(),
            PI * e * (PI * x.x).sin() * (PI * x.y).cos(),
        )
    };
    ManufacturedProblem::new(
        ProblemId::StaticSquare.as_str(),
        MovingDomain::everywhere(),
        BoxDomain::unit_square(),
        0.1,
        u,
        grad,
        move |x, t| -decay * u(x, t),
        move |x, t| -decay * u(x, t),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Finite-difference oracle for `u_t − Δu` (central in time, 5-point
    /// stencil in space).
    fn fd_source(p: &ManufacturedProblem, x: Point, t: f64) -> f64 {
        let h = 1e-4;
        let ut = (p.u(x, t + h) - p.u(x, t - h)) / (2.0 * h);
        let ex = Point::new(h, 0.0);
        let ey = Point::new(0.0, h);
        let lap = (p.u(x + ex, t) + p.u(x - ex, t) + p.u(x + ey, t) + p.u(x - ey, t)
            - 4.0 * p.u(x, t))
            / (h * h);
        ut - lap
    }

    fn check_consistency(p: &ManufacturedProblem) {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let x = Point::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let t = rng.gen_range(0.0..0.1);
            let f = p.f(x, t);
            let fd = fd_source(p, x, t);
            let scale = p.u_t(x, t).abs() + p.laplacian_u(x, t).abs();
            assert!((f - fd).abs() <= 1e-5 * scale.max(1e-3), "{f} vs {fd}");

            let h = 1e-6;
            let g = p.grad_u(x, t);
            let gx = (p.u(x + Point::new(h, 0.0), t) - p.u(x - Point::new(h, 0.0), t)) / (2.0 * h);
            let gy = (p.u(x + Point::new(0.0, h), t) - p.u(x - Point::new(0.0, h), t)) / (2.0 * h);
            assert!((Point::new(gx, gy) - g).norm() <= 1e-6 * g.norm().max(1.0));
            assert_eq!(p.g_bc(x, t), p.u(x, t));
        }
    }

    #[test]
    fn traveling_circle() {
        let p = example_traveling_circle(0.09).unwrap();
        assert!((p.u(Point::new(0.5, 0.5), 0.0) - 1.0).abs() < 1e-15);
        assert_eq!(p.w_max(), 1.0);
        check_consistency(&p);
        // u_t − Δu = 4π² u
        let x = Point::new(0.3, 0.8);
        assert!((p.f(x, 0.05) - 4.0 * PI * PI * p.u(x, 0.05)).abs() < 1e-12);
        assert!(example_traveling_circle(0.9).is_err());
        assert!(example_traveling_circle(0.0).is_err());
    }

    #[test]
    fn boundary_speed_is_bounded_by_w_max() {
        // the circle centre moves at speed 1; sample boundary points and
        // track them along the normal with finite differences
        let p = example_traveling_circle(0.09).unwrap();
        let dt = 1e-5;
        for k in 0..16 {
            let theta = k as f64 * PI / 8.0;
            let n = Point::new(theta.cos(), theta.sin());
            let x = Point::new(0.5, 0.5) + 0.3 * n;
            // distance along n to the zero level set at t + dt
            let mut s = 0.0;
            for _ in 0..50 {
                let y = x + s * n;
                let phi = p.domain.phi(y, dt);
                let dphi = 2.0 * (y - Point::new(0.5 + dt, 0.5)).dot(&n);
                s -= phi / dphi;
            }
            let speed = (s / dt).abs();
            assert!(speed <= 1.05 * p.w_max());
        }
    }

    #[test]
    fn level_set_is_lipschitz() {
        let p = example_traveling_circle(0.09).unwrap();
        let lip = 2.0 * 2f64.sqrt() * 1.6; // |∇phi| <= 2·|x − c| on the box
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let x = Point::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let y = x + Point::new(rng.gen_range(-1e-3..1e-3), rng.gen_range(-1e-3..1e-3));
            let t = rng.gen_range(0.0..0.1);
            assert!((p.domain.phi(x, t) - p.domain.phi(y, t)).abs() <= lip * (x - y).norm());
        }
    }

    #[test]
    fn static_square() {
        let p = example_static_square();
        assert!((p.u(Point::new(0.5, 0.5), 0.0) - 1.0).abs() < 1e-15);
        for t in [0.0, 0.03, 0.1] {
            for s in [0.0, 0.25, 0.7, 1.0] {
                for x in [Point::new(s, 0.0), Point::new(s, 1.0), Point::new(0.0, s), Point::new(1.0, s)] {
                    assert!(p.u(x, t).abs() < 1e-15);
                }
            }
        }
        check_consistency(&p);
        assert!(p.f(Point::new(0.2, 0.6), 0.01).abs() < 1e-12);
    }

    #[test]
    fn ids_round_trip() {
        for id in [ProblemId::TravelingCircle, ProblemId::StaticSquare] {
            assert_eq!(id.as_str().parse::<ProblemId>().unwrap(), id);
        }
        assert!("nope".parse::<ProblemId>().is_err());
    }
}
