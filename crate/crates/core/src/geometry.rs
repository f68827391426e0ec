//! Closed convex sets with closed-form Euclidean projections: per-agent action
//! sets, their Cartesian product, and the dual box `[0, lambda_max]^m`.

use std::ops::Range;

use rand::Rng;

use crate::{Error, Result, Vector};

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    Box { lo: Vector, hi: Vector },
    Ball { center: Vector, radius: f64 },
}

impl ConvexSet {
    pub fn new_box(lo: Vector, hi: Vector) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Shape(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::Domain("box needs lo <= hi element-wise".into()));
        }
        Ok(ConvexSet::Box { lo, hi })
    }

    /// `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new_box(Vector::from_element(dim, lo), Vector::from_element(dim, hi))
    }

    pub fn new_ball(center: Vector, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::Domain(format!(
                "ball radius must be >= 0, got {radius}"
            )));
        }
        Ok(ConvexSet::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box { lo, .. } => lo.len(),
            ConvexSet::Ball { center, .. } => center.len(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            ConvexSet::Box { lo, hi } => (hi - lo).norm(),
            ConvexSet::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Largest Euclidean norm of any member.
    pub fn max_norm(&self) -> f64 {
        match self {
            ConvexSet::Box { lo, hi } => lo
                .iter()
                .zip(hi.iter())
                .map(|(l, h)| l.abs().max(h.abs()).powi(2))
                .sum::<f64>()
                .sqrt(),
            ConvexSet::Ball { center, radius } => center.norm() + radius,
        }
    }

    pub fn center(&self) -> Vector {
        match self {
            ConvexSet::Box { lo, hi } => (lo + hi) * 0.5,
            ConvexSet::Ball { center, .. } => center.clone(),
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vector, Vector) {
        match self {
            ConvexSet::Box { lo, hi } => (lo.clone(), hi.clone()),
            ConvexSet::Ball { center, radius } => {
                (center.add_scalar(-radius), center.add_scalar(*radius))
            }
        }
    }

    pub fn contains(&self, p: &Vector, tol: f64) -> bool {
        if p.len() != self.dim() {
            return false;
        }
        match self {
            ConvexSet::Box { lo, hi } => p
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol),
            ConvexSet::Ball { center, radius } => (p - center).norm() <= radius + tol,
        }
    }

    pub fn project(&self, p: &Vector) -> Result<Vector> {
        if p.len() != self.dim() {
            return Err(Error::Shape(format!(
                "point has dimension {}, set has {}",
                p.len(),
                self.dim()
            )));
        }
        Ok(match self {
            ConvexSet::Box { lo, hi } => Vector::from_fn(p.len(), |i, _| p[i].clamp(lo[i], hi[i])),
            ConvexSet::Ball { center, radius } => {
                let offset = p - center;
                let dist = offset.norm();
                if dist <= *radius {
                    p.clone()
                } else {
                    center + offset * (radius / dist)
                }
            }
        })
    }

    /// Uniform sample from the set.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match self {
            ConvexSet::Box { lo, hi } => Vector::from_fn(lo.len(), |i, _| {
                lo[i] + (hi[i] - lo[i]) * rng.random::<f64>()
            }),
            ConvexSet::Ball { center, radius } => {
                let d = center.len();
                loop {
                    let u = Vector::from_fn(d, |_, _| 2.0 * rng.random::<f64>() - 1.0);
                    if u.norm() <= 1.0 {
                        return center + u * *radius;
                    }
                }
            }
        }
    }
}

/// Cartesian product of per-agent sets; agent `i` owns the coordinates
/// `offsets[i] .. offsets[i] + dim(blocks[i])` of the joint vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductSet {
    blocks: Vec<ConvexSet>,
    offsets: Vec<usize>,
    dim: usize,
}

impl ProductSet {
    pub fn new(blocks: Vec<ConvexSet>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidSize(
                "product set needs at least one block".into(),
            ));
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        for b in &blocks {
            offsets.push(dim);
            dim += b.dim();
        }
        Ok(Self {
            blocks,
            offsets,
            dim,
        })
    }

    /// `n` copies of `[lo, hi]^block_dim`.
    pub fn uniform_cubes(n: usize, block_dim: usize, lo: f64, hi: f64) -> Result<Self> {
        let cube = ConvexSet::cube(block_dim, lo, hi)?;
        Self::new(vec![cube; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[ConvexSet] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> Result<&ConvexSet> {
        self.blocks.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.blocks.len(),
        })
    }

    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i] + self.blocks[i].dim()
    }

    /// `sqrt(sum_i diam(X_i)^2)`.
    pub fn diameter(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.diameter().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_norm().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn center(&self) -> Vector {
        self.join(self.blocks.iter().map(|b| b.center()))
    }

    /// Concatenates per-block vectors into a joint vector.
    pub fn join(&self, parts: impl IntoIterator<Item = Vector>) -> Vector {
        let mut out = Vector::zeros(self.dim);
        for (i, part) in parts.into_iter().enumerate() {
            out.rows_mut(self.offsets[i], part.len()).copy_from(&part);
        }
        out
    }

    fn check_joint(&self, joint: &Vector) -> Result<()> {
        if joint.len() != self.dim {
            return Err(Error::Shape(format!(
                "joint vector has dimension {}, expected {}",
                joint.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Block `i` of `joint`, unprojected.
    pub fn extract(&self, i: usize, joint: &Vector) -> Result<Vector> {
        self.block(i)?;
        self.check_joint(joint)?;
        let r = self.range(i);
        Ok(joint.rows(r.start, r.len()).into_owned())
    }

    /// Block `i` of `joint`, projected onto `X_i`.
    pub fn project_block(&self, i: usize, joint: &Vector) -> Result<Vector> {
        let part = self.extract(i, joint)?;
        self.blocks[i].project(&part)
    }

    /// Block-wise projection onto the whole product.
    pub fn project(&self, joint: &Vector) -> Result<Vector> {
        self.check_joint(joint)?;
        let parts = (0..self.blocks.len())
            .map(|i| self.project_block(i, joint))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.join(parts))
    }

    pub fn contains(&self, joint: &Vector, tol: f64) -> bool {
        joint.len() == self.dim
            && (0..self.blocks.len()).all(|i| {
                let r = self.range(i);
                self.blocks[i].contains(&joint.rows(r.start, r.len()).into_owned(), tol)
            })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let parts: Vec<Vector> = self.blocks.iter().map(|b| b.sample(rng)).collect();
        self.join(parts)
    }
}

/// Element-wise clamp onto `[0, lambda_max]`.
pub fn project_dual(lambda_max: f64, v: &Vector) -> Vector {
    v.map(|x| x.clamp(0.0, lambda_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn box_clamps() {
        let s = ConvexSet::cube(2, 0.0, 1.0).unwrap();
        assert_eq!(s.project(&v(&[2.0, -1.0])).unwrap(), v(&[1.0, 0.0]));
        let s1 = ConvexSet::cube(1, 0.0, 1.0).unwrap();
        assert_eq!(s1.project(&v(&[0.4])).unwrap(), v(&[0.4]));
    }

    #[test]
    fn ball_rescales() {
        let s = ConvexSet::new_ball(Vector::zeros(2), 1.0).unwrap();
        let p = s.project(&v(&[3.0, 4.0])).unwrap();
        assert!((p - v(&[0.6, 0.8])).norm() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let s = ConvexSet::cube(2, 0.0, 1.0).unwrap();
        assert!(matches!(s.project(&v(&[1.0])), Err(Error::Shape(_))));
    }

    #[test]
    fn invalid_sets_rejected() {
        assert!(ConvexSet::new_box(v(&[1.0]), v(&[0.0])).is_err());
        assert!(ConvexSet::new_ball(Vector::zeros(1), -1.0).is_err());
    }

    #[test]
    fn project_block_examples() {
        let unit = ConvexSet::cube(1, 0.0, 1.0).unwrap();
        let ps = ProductSet::new(vec![unit.clone(), unit]).unwrap();
        assert_eq!(ps.project_block(1, &v(&[0.5, 1.7])).unwrap(), v(&[1.0]));

        let sq = ProductSet::new(vec![ConvexSet::cube(2, 0.0, 1.0).unwrap()]).unwrap();
        assert_eq!(
            sq.project_block(0, &v(&[0.2, 0.3])).unwrap(),
            v(&[0.2, 0.3])
        );

        let mixed = ProductSet::new(vec![
            ConvexSet::new_ball(Vector::zeros(2), 1.0).unwrap(),
            ConvexSet::cube(1, 0.0, 2.0).unwrap(),
        ])
        .unwrap();
        let p = mixed.project_block(0, &v(&[3.0, 4.0, 5.0])).unwrap();
        assert!((p - v(&[0.6, 0.8])).norm() < 1e-15);
        assert!(matches!(
            mixed.project_block(2, &v(&[3.0, 4.0, 5.0])),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn dual_projection_examples() {
        assert_eq!(
            project_dual(5.0, &v(&[-1.0, 2.0, 7.0])),
            v(&[0.0, 2.0, 5.0])
        );
        assert_eq!(project_dual(5.0, &v(&[0.0, 0.0])), v(&[0.0, 0.0]));
        assert_eq!(project_dual(1.0, &v(&[0.3])), v(&[0.3]));
    }

    #[test]
    fn product_diameter_is_pythagorean() {
        let ps = ProductSet::new(vec![
            ConvexSet::cube(2, -1.0, 1.0).unwrap(),
            ConvexSet::new_ball(Vector::zeros(3), 0.5).unwrap(),
        ])
        .unwrap();
        let expected = (8.0f64 + 1.0).sqrt();
        assert!((ps.diameter() - expected).abs() < 1e-12);
        assert_eq!(ps.dim(), 5);
        assert_eq!(ps.range(1), 2..5);
    }
}
