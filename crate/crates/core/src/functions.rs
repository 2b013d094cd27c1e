//! Scalar and vector coefficient functions of space and time.
//!
//! Every coefficient in an [`crate::pde::AmbientProblem`] is one of these:
//! a constant, a compiled parsed expression, or a native closure (used by
//! the coupling driver for rate-dependent convection and by tests).

use std::fmt;
use std::sync::Arc;

use crate::exprfn::{self, Bindings, ExprError, ParsedFunction};

pub type Point = [f64; 2];

type NativeScalar = dyn Fn(Point, f64) -> f64 + Send + Sync;
type NativeVector = dyn Fn(Point) -> Point + Send + Sync;

#[derive(Clone)]
pub enum SpaceTimeFn {
    Constant(f64),
    Parsed(Arc<ParsedFunction>),
    Native(Arc<NativeScalar>),
}

impl SpaceTimeFn {
    pub fn parsed(source: &str, bindings: &Bindings) -> Result<Self, ExprError> {
        let f = ParsedFunction::new(source, bindings)?;
        if f.is_literal_zero() {
            return Ok(SpaceTimeFn::Constant(0.0));
        }
        Ok(SpaceTimeFn::Parsed(Arc::new(f)))
    }

    pub fn native(f: impl Fn(Point, f64) -> f64 + Send + Sync + 'static) -> Self {
        SpaceTimeFn::Native(Arc::new(f))
    }

    #[inline]
    pub fn value(&self, p: Point, t: f64) -> f64 {
        match self {
            SpaceTimeFn::Constant(c) => *c,
            SpaceTimeFn::Parsed(f) => f.value(p[0], p[1], t),
            SpaceTimeFn::Native(f) => f(p, t),
        }
    }

    pub fn try_value(&self, p: Point, t: f64) -> Result<f64, ExprError> {
        let v = self.value(p, t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite {
                value: v,
                x: p[0],
                y: p[1],
                t,
            })
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SpaceTimeFn::Constant(c) if *c == 0.0)
    }

    /// Returns a copy scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            SpaceTimeFn::Constant(c) => SpaceTimeFn::Constant(c * factor),
            other => {
                let inner = other.clone();
                SpaceTimeFn::native(move |p, t| factor * inner.value(p, t))
            }
        }
    }
}

impl fmt::Debug for SpaceTimeFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceTimeFn::Constant(c) => write!(f, "Constant({})", c),
            SpaceTimeFn::Parsed(p) => write!(f, "Parsed({:?})", p.source()),
            SpaceTimeFn::Native(_) => f.write_str("Native(..)"),
        }
    }
}

impl From<f64> for SpaceTimeFn {
    fn from(c: f64) -> Self {
        SpaceTimeFn::Constant(c)
    }
}

/// Convection velocity field. In 1D only the first component is used.
#[derive(Clone)]
pub enum VelocityFn {
    Constant(Point),
    Parsed(Arc<[ParsedFunction]>),
    Native(Arc<NativeVector>),
}

impl VelocityFn {
    pub fn zero() -> Self {
        VelocityFn::Constant([0.0, 0.0])
    }

    /// Parses `"vmax*y; 0"` style sources; a single component means 1D.
    pub fn parsed(source: &str, bindings: &Bindings) -> Result<Self, ExprError> {
        let parts = exprfn::parse_vector(source)?;
        if parts.iter().all(|e| e.is_literal_zero()) {
            return Ok(VelocityFn::zero());
        }
        let compiled = parts
            .iter()
            .zip(source.split(';'))
            .map(|(e, s)| ParsedFunction::from_expr(s.trim(), e, bindings))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(VelocityFn::Parsed(compiled.into()))
    }

    pub fn native(f: impl Fn(Point) -> Point + Send + Sync + 'static) -> Self {
        VelocityFn::Native(Arc::new(f))
    }

    #[inline]
    pub fn value(&self, p: Point) -> Point {
        match self {
            VelocityFn::Constant(v) => *v,
            VelocityFn::Parsed(c) => {
                let vx = c[0].value(p[0], p[1], 0.0);
                let vy = c.get(1).map_or(0.0, |f| f.value(p[0], p[1], 0.0));
                [vx, vy]
            }
            VelocityFn::Native(f) => f(p),
        }
    }

    /// True only when the field is identically zero by construction, which
    /// is what allows the symmetric solver to be used.
    pub fn is_zero(&self) -> bool {
        matches!(self, VelocityFn::Constant(v) if v[0] == 0.0 && v[1] == 0.0)
    }
}

impl fmt::Debug for VelocityFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VelocityFn::Constant(v) => write!(f, "Constant({:?})", v),
            VelocityFn::Parsed(c) => {
                let s: Vec<&str> = c.iter().map(|p| p.source()).collect();
                write!(f, "Parsed({:?})", s.join("; "))
            }
            VelocityFn::Native(_) => f.write_str("Native(..)"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_zero_detection() {
        let b = Bindings::new();
        assert!(SpaceTimeFn::parsed("0", &b).unwrap().is_zero());
        assert!(!SpaceTimeFn::parsed("x - x", &b).unwrap().is_zero());
        assert!(VelocityFn::parsed("0; 0", &b).unwrap().is_zero());
        assert!(VelocityFn::parsed("-0", &b).unwrap().is_zero());
        assert!(!VelocityFn::parsed("0; 1e-30", &b).unwrap().is_zero());
    }

    #[test]
    fn velocity_components() {
        let b = Bindings::new().with("vmax", -5.0).unwrap();
        let v = VelocityFn::parsed("vmax*y; 0", &b).unwrap();
        assert_eq!(v.value([0.3, 2.0]), [-10.0, 0.0]);
        let one = VelocityFn::parsed("1", &b).unwrap();
        assert_eq!(one.value([0.5, 0.0]), [1.0, 0.0]);
    }

    #[test]
    fn scaling() {
        let b = Bindings::new();
        let f = SpaceTimeFn::parsed("x + t", &b).unwrap().scaled(2.0);
        assert_eq!(f.value([1.0, 0.0], 2.0), 6.0);
        assert_eq!(SpaceTimeFn::Constant(3.0).scaled(-1.0).value([0.0; 2], 0.0), -3.0);
    }
}
