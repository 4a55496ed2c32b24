use crate::error::{config, Result};
use crate::geometry::{CapsuleBvh, PointD};
use crate::stochastic::BrownianPath;

/// A bounded closed set that walk-on-spheres can query.
pub trait HitTarget: Sync {
    fn dim(&self) -> usize;
    /// Euclidean distance from `p` to the set, `0` inside.
    fn distance(&self, p: &[f64]) -> f64;
    /// Center and radius of a ball containing the set.
    fn bounding_ball(&self) -> (PointD, f64);
    /// Default hit tolerance for this kind of target.
    fn default_eps(&self) -> f64;
}

#[derive(Debug, Clone)]
pub struct BallTarget {
    pub center: PointD,
    pub radius: f64,
}

impl BallTarget {
    pub fn new(center: PointD, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return config(format!("ball radius must be positive, got {radius}"));
        }
        Ok(Self { center, radius })
    }
}

impl HitTarget for BallTarget {
    fn dim(&self) -> usize {
        self.center.dim()
    }

    fn distance(&self, p: &[f64]) -> f64 {
        (crate::geometry::dist_sq(p, self.center.coords()).sqrt() - self.radius).max(0.0)
    }

    fn bounding_ball(&self) -> (PointD, f64) {
        (self.center, self.radius)
    }

    fn default_eps(&self) -> f64 {
        1e-3
    }
}

/// Union of equal-radius balls, e.g. for submodularity checks.
#[derive(Debug, Clone)]
pub struct BallUnionTarget {
    bvh: CapsuleBvh,
    radius: f64,
    center: PointD,
    reach: f64,
}

impl BallUnionTarget {
    pub fn new(centers: &[PointD], radius: f64) -> Result<Self> {
        if centers.is_empty() {
            return config("ball union needs at least one center");
        }
        if !(radius > 0.0) {
            return config(format!("ball radius must be positive, got {radius}"));
        }
        let dim = centers[0].dim();
        if centers.iter().any(|c| c.dim() != dim) {
            return config("ball centers differ in dimension");
        }
        let flat: Vec<f64> = centers.iter().flat_map(|c| c.coords().to_vec()).collect();
        let bvh = CapsuleBvh::from_segments(dim, flat.clone(), flat);
        let center = bvh.bounds().center();
        let reach = centers.iter().map(|c| c.dist(&center)).fold(0.0, f64::max) + radius;
        Ok(Self { bvh, radius, center, reach })
    }
}

impl HitTarget for BallUnionTarget {
    fn dim(&self) -> usize {
        self.center.dim()
    }

    fn distance(&self, p: &[f64]) -> f64 {
        (self.bvh.nearest_distance(p) - self.radius).max(0.0)
    }

    fn bounding_ball(&self) -> (PointD, f64) {
        (self.center, self.reach)
    }

    fn default_eps(&self) -> f64 {
        1e-3
    }
}

/// The tube of radius `r` around the polyline through the path samples.
#[derive(Debug, Clone)]
pub struct SausageTarget {
    bvh: CapsuleBvh,
    radius: f64,
    center: PointD,
    reach: f64,
}

impl SausageTarget {
    pub fn new(path: &BrownianPath, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return config(format!("sausage radius must be positive, got {radius}"));
        }
        let dim = path.dim();
        let bvh = CapsuleBvh::from_polyline(dim, path.flat());
        let center = bvh.bounds().center();
        let reach = (0..path.len())
            .map(|k| crate::geometry::dist_sq(path.coords(k), center.coords()))
            .fold(0.0, f64::max)
            .sqrt()
            + radius;
        Ok(Self { bvh, radius, center, reach })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl HitTarget for SausageTarget {
    fn dim(&self) -> usize {
        self.center.dim()
    }

    fn distance(&self, p: &[f64]) -> f64 {
        (self.bvh.nearest_distance(p) - self.radius).max(0.0)
    }

    fn bounding_ball(&self) -> (PointD, f64) {
        (self.center, self.reach)
    }

    fn default_eps(&self) -> f64 {
        self.radius / 100.0
    }
}
