//! Periodic lattice standing in for the whole space, geometric masks and
//! node quadrature.
//!
//! Nodes are centered so that the origin is a node: along each axis the
//! coordinate of index `i` is `(i - n/2) * h`. Distances use the torus metric.

use crate::error::{invalid, Error, Result};

/// Slack used when comparing node coordinates against radii and cube faces.
const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    extent: f64,
    points_per_axis: usize,
    spacing: f64,
}

impl Grid {
    pub fn new(dim: usize, extent: f64, points_per_axis: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::InvalidGrid(format!("extent {extent} must be positive")));
        }
        if points_per_axis < 8 || points_per_axis % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "points per axis {points_per_axis} must be even and at least 8"
            )));
        }
        Ok(Self {
            dim,
            extent,
            points_per_axis,
            spacing: extent / points_per_axis as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn node_count(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    /// Quadrature weight `h^dim` of a single node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Coordinate of axis index `i`.
    pub fn axis_coord(&self, i: usize) -> f64 {
        (i as f64 - (self.points_per_axis / 2) as f64) * self.spacing
    }

    /// Multi-index of a flat node index; axis 0 varies slowest.
    pub fn unflatten(&self, node: usize) -> [usize; 2] {
        match self.dim {
            1 => [node, 0],
            _ => [node / self.points_per_axis, node % self.points_per_axis],
        }
    }

    pub fn flatten(&self, idx: [usize; 2]) -> usize {
        match self.dim {
            1 => idx[0],
            _ => idx[0] * self.points_per_axis + idx[1],
        }
    }

    /// Coordinates of a node; unused axes are zero.
    pub fn position(&self, node: usize) -> [f64; 2] {
        let idx = self.unflatten(node);
        let mut p = [0.0; 2];
        for (axis, slot) in p.iter_mut().enumerate().take(self.dim) {
            *slot = self.axis_coord(idx[axis]);
        }
        p
    }

    /// Signed per-axis displacement `x - center` reduced to `[-L/2, L/2)`.
    pub fn torus_delta(&self, x: f64, center: f64) -> f64 {
        let l = self.extent;
        (x - center + 0.5 * l).rem_euclid(l) - 0.5 * l
    }

    /// Torus distance between a node and an arbitrary point.
    pub fn torus_distance(&self, node: usize, center: &[f64]) -> f64 {
        let p = self.position(node);
        (0..self.dim)
            .map(|a| self.torus_delta(p[a], center[a]).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn check_point(&self, point: &[f64]) -> Result<()> {
        if point.len() != self.dim {
            return Err(Error::InvalidGeometry(format!(
                "point has {} coordinates, grid has dimension {}",
                point.len(),
                self.dim
            )));
        }
        Ok(())
    }
}

/// A scalar sample on every node of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            grid: *grid,
            values: vec![0.0; grid.node_count()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: *grid,
            values,
        })
    }

    /// Samples `f` at every node position.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.node_count()).map(|k| f(grid.position(k))).collect();
        Self {
            grid: *grid,
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_grid(other)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete `L²` norm squared over the whole grid.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()
    }

    /// Weighted inner product `Σ f g h^dim`.
    pub fn dot(&self, other: &Field) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume())
    }

    pub(crate) fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }
}

/// Node indicator of a subset of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    grid: Grid,
    included: Vec<bool>,
}

impl Mask {
    pub fn full(grid: &Grid) -> Self {
        Self {
            grid: *grid,
            included: vec![true; grid.node_count()],
        }
    }

    pub fn empty(grid: &Grid) -> Self {
        Self {
            grid: *grid,
            included: vec![false; grid.node_count()],
        }
    }

    pub fn from_predicate(grid: &Grid, keep: impl Fn(usize) -> bool) -> Self {
        Self {
            grid: *grid,
            included: (0..grid.node_count()).map(keep).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn contains(&self, node: usize) -> bool {
        self.included[node]
    }

    pub fn included(&self) -> &[bool] {
        &self.included
    }

    pub fn count(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.grid.cell_volume()
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(Mask {
            grid: self.grid,
            included: self
                .included
                .iter()
                .zip(&other.included)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.grid == other.grid
            && self
                .included
                .iter()
                .zip(&other.included)
                .all(|(&a, &b)| !a || b)
    }
}

/// Closed torus ball `{x : d(x, center) ≤ radius}`.
pub fn ball_mask(grid: &Grid, center: &[f64], radius: f64) -> Result<Mask> {
    grid.check_point(center)?;
    if !(radius >= 0.0) {
        return Err(invalid("radius", format!("{radius} must be non-negative")));
    }
    if radius >= 0.5 * grid.extent() {
        return Err(Error::InvalidGeometry(format!(
            "radius {radius} is not below half the torus side {}",
            0.5 * grid.extent()
        )));
    }
    let tol = GEOM_EPS * grid.spacing();
    Ok(Mask::from_predicate(grid, |k| {
        grid.torus_distance(k, center) <= radius + tol
    }))
}

/// Axis-aligned cube `center + [-half, half)^dim` on the torus, half-open per axis.
pub fn cube_mask(grid: &Grid, center: &[f64], half_side: f64) -> Result<Mask> {
    grid.check_point(center)?;
    if !(half_side > 0.0) {
        return Err(invalid("half_side", format!("{half_side} must be positive")));
    }
    if half_side >= 0.5 * grid.extent() {
        return Ok(Mask::full(grid));
    }
    let tol = GEOM_EPS * grid.spacing();
    Ok(Mask::from_predicate(grid, |k| {
        let p = grid.position(k);
        (0..grid.dim()).all(|a| {
            let d = grid.torus_delta(p[a], center[a]);
            d >= -half_side - tol && d < half_side - tol
        })
    }))
}

/// A partition of the torus into cubes of side `2R`.
#[derive(Debug, Clone)]
pub struct Tiling {
    half_side: f64,
    centers: Vec<Vec<f64>>,
    masks: Vec<Mask>,
}

impl Tiling {
    pub fn half_side(&self) -> f64 {
        self.half_side
    }

    pub fn side(&self) -> f64 {
        2.0 * self.half_side
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn masks(&self) -> &[Mask] {
        &self.masks
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Union of `B_r(x_i)` over all cube centers.
    pub fn ball_union(&self, grid: &Grid, r: f64) -> Result<Mask> {
        if r > self.half_side + GEOM_EPS {
            return Err(Error::InvalidGeometry(format!(
                "observation radius {r} exceeds cube half side {}",
                self.half_side
            )));
        }
        let mut out = Mask::empty(grid);
        for c in &self.centers {
            out = out.union(&ball_mask(grid, c, r)?)?;
        }
        Ok(out)
    }
}

/// Tiles the torus with cubes `Q_R(x_i)`, each node assigned to exactly one cube.
pub fn cube_tiling(grid: &Grid, half_side: f64) -> Result<Tiling> {
    if !(half_side > 0.0) {
        return Err(invalid("R", format!("{half_side} must be positive")));
    }
    let side = 2.0 * half_side;
    let h = grid.spacing();
    let per_axis = (grid.extent() / side).round();
    if per_axis < 1.0 || (per_axis * side - grid.extent()).abs() > h {
        return Err(Error::InvalidGeometry(format!(
            "cube side {side} does not divide torus side {}",
            grid.extent()
        )));
    }
    if side < 2.0 * h {
        return Err(Error::InvalidGeometry(format!(
            "cube side {side} holds fewer than two nodes per axis"
        )));
    }
    let m = per_axis as usize;
    let n = grid.points_per_axis();
    let cube_of = |i: usize| -> usize { ((i as f64 * h / side + GEOM_EPS).floor() as usize).min(m - 1) };
    let lo = -0.5 * grid.extent();
    let cube_count = m.pow(grid.dim() as u32);
    let mut centers = Vec::with_capacity(cube_count);
    let mut flags = vec![vec![false; grid.node_count()]; cube_count];
    for c in 0..cube_count {
        let idx = if grid.dim() == 1 { [c, 0] } else { [c / m, c % m] };
        centers.push(
            (0..grid.dim())
                .map(|a| lo + half_side + side * idx[a] as f64)
                .collect::<Vec<_>>(),
        );
    }
    for node in 0..grid.node_count() {
        let idx = grid.unflatten(node);
        let c = if grid.dim() == 1 {
            cube_of(idx[0])
        } else {
            cube_of(idx[0]) * m + cube_of(idx[1])
        };
        flags[c][node] = true;
    }
    debug_assert!(n > 0);
    let masks = flags
        .into_iter()
        .map(|included| Mask {
            grid: *grid,
            included,
        })
        .collect();
    Ok(Tiling {
        half_side,
        centers,
        masks,
    })
}

/// Node quadrature `Σ_{included} f h^dim`; the whole grid when `mask` is `None`.
pub fn integrate(field: &Field, mask: Option<&Mask>) -> Result<f64> {
    let vol = field.grid().cell_volume();
    match mask {
        None => Ok(field.values().iter().sum::<f64>() * vol),
        Some(m) => {
            if m.grid() != field.grid() {
                return Err(Error::GridMismatch);
            }
            Ok(field
                .values()
                .iter()
                .zip(m.included())
                .filter(|(_, &keep)| keep)
                .map(|(v, _)| v)
                .sum::<f64>()
                * vol)
        }
    }
}

/// `∫_mask f·g`, the common pattern for weighted quadratic functionals.
pub fn integrate_product(f: &Field, g: &Field, mask: Option<&Mask>) -> Result<f64> {
    integrate(&f.zip_map(g, |a, b| a * b)?, mask)
}

fn neighbours(grid: &Grid, node: usize, axis: usize) -> (usize, usize) {
    let n = grid.points_per_axis();
    let mut idx = grid.unflatten(node);
    let i = idx[axis];
    idx[axis] = (i + n - 1) % n;
    let minus = grid.flatten(idx);
    idx[axis] = (i + 1) % n;
    let plus = grid.flatten(idx);
    (minus, plus)
}

/// Periodic second-difference Laplacian.
pub fn laplacian(field: &Field) -> Field {
    let grid = *field.grid();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    let v = field.values();
    let values = (0..grid.node_count())
        .map(|k| {
            (0..grid.dim())
                .map(|a| {
                    let (m, p) = neighbours(&grid, k, a);
                    (v[m] - 2.0 * v[k] + v[p]) * inv_h2
                })
                .sum()
        })
        .collect();
    Field { grid, values }
}

/// Periodic centered-difference gradient, one field per axis.
pub fn gradient(field: &Field) -> Vec<Field> {
    let grid = *field.grid();
    let inv_2h = 0.5 / grid.spacing();
    let v = field.values();
    (0..grid.dim())
        .map(|a| Field {
            grid,
            values: (0..grid.node_count())
                .map(|k| {
                    let (m, p) = neighbours(&grid, k, a);
                    (v[p] - v[m]) * inv_2h
                })
                .collect(),
        })
        .collect()
}

/// Pointwise `|∇f|²` from centered differences.
pub fn gradient_norm_sq(field: &Field) -> Field {
    let grads = gradient(field);
    let mut out = Field::zeros(field.grid());
    for g in &grads {
        for (o, v) in out.values_mut().iter_mut().zip(g.values()) {
            *o += v * v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_spacing_and_counts() {
        let g = Grid::new(1, 8.0, 256).unwrap();
        assert_eq!(g.spacing(), 0.03125);
        assert_eq!(g.spacing() * 256.0, 8.0);
        let g2 = Grid::new(2, 4.0, 64).unwrap();
        assert_eq!(g2.node_count(), 4096);
        assert_eq!(g2.spacing(), 0.0625);
        assert_eq!(g2.position(g2.flatten([32, 32])), [0.0, 0.0]);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(Grid::new(1, 8.0, 0).is_err());
        assert!(Grid::new(1, 8.0, 9).is_err());
        assert!(Grid::new(1, 8.0, 6).is_err());
        assert!(Grid::new(1, -1.0, 16).is_err());
        assert!(Grid::new(3, 1.0, 16).is_err());
    }

    #[test]
    fn torus_metric_wraps() {
        let g = Grid::new(1, 8.0, 16).unwrap();
        // node 0 sits at -4, which is 1 away from 3 across the seam
        assert!((g.torus_distance(0, &[3.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ball_mask_counts() {
        let g = Grid::new(1, 8.0, 256).unwrap();
        let b = ball_mask(&g, &[0.0], 1.0).unwrap();
        assert_eq!(b.count(), 65);
        assert_eq!(b.measure(), 65.0 * 0.03125);
        assert_eq!(ball_mask(&g, &[0.0], 0.0).unwrap().count(), 1);
        assert!(ball_mask(&g, &[0.0], 4.0).is_err());
    }

    #[test]
    fn tiling_partitions_the_torus() {
        let g = Grid::new(1, 8.0, 256).unwrap();
        let t = cube_tiling(&g, 1.0).unwrap();
        assert_eq!(t.len(), 4);
        let total: f64 = t.masks().iter().map(Mask::measure).sum();
        assert_eq!(total, 8.0);
        for m in t.masks() {
            assert_eq!(m.measure(), 2.0);
        }
        let g2 = Grid::new(2, 4.0, 32).unwrap();
        let t2 = cube_tiling(&g2, 1.0).unwrap();
        assert_eq!(t2.len(), 4);
        for node in 0..g2.node_count() {
            assert_eq!(t2.masks().iter().filter(|m| m.contains(node)).count(), 1);
        }
        for m in t2.masks() {
            assert_eq!(m.measure(), 4.0);
        }
        assert!(cube_tiling(&g, 1.3).is_err());
    }

    #[test]
    fn tiling_cubes_contain_their_balls() {
        let g = Grid::new(2, 8.0, 64).unwrap();
        let t = cube_tiling(&g, 1.0).unwrap();
        for (c, m) in t.centers().iter().zip(t.masks()) {
            assert!(ball_mask(&g, c, 0.9).unwrap().is_subset_of(m));
        }
    }

    #[test]
    fn integrate_constants_and_zero() {
        let g = Grid::new(2, 4.0, 32).unwrap();
        let b = ball_mask(&g, &[0.0, 0.0], 1.0).unwrap();
        let one = Field::from_fn(&g, |_| 1.0);
        assert!((integrate(&one, Some(&b)).unwrap() - b.measure()).abs() < 1e-14);
        assert_eq!(integrate(&Field::zeros(&g), None).unwrap(), 0.0);
        let other = Grid::new(2, 4.0, 16).unwrap();
        assert!(integrate(&one, Some(&Mask::full(&other))).is_err());
    }

    #[test]
    fn integrate_gaussian_weight() {
        // λ = 1, t = T: G = exp(-x²/4); ∫ G = sqrt(4π)
        let g = Grid::new(1, 32.0, 1024).unwrap();
        let w = Field::from_fn(&g, |p| (-p[0] * p[0] / 4.0).exp());
        let val = integrate(&w, None).unwrap();
        assert!((val - (4.0 * PI).sqrt()).abs() < 1e-6, "{val}");
    }

    #[test]
    fn laplacian_eigenrelation() {
        let g = Grid::new(1, 8.0, 64).unwrap();
        let l = g.extent();
        let h = g.spacing();
        let f = Field::from_fn(&g, |p| (2.0 * PI * p[0] / l).cos());
        let lap = laplacian(&f);
        let mu = -(2.0 / (h * h)) * (1.0 - (2.0 * PI * h / l).cos());
        for (a, b) in lap.values().iter().zip(f.values()) {
            assert!((a - mu * b).abs() < 1e-12);
        }
        let c = Field::from_fn(&g, |_| 3.5);
        assert!(laplacian(&c).max_abs() < 1e-12);
    }

    #[test]
    fn laplacian_is_symmetric() {
        let g = Grid::new(2, 4.0, 16).unwrap();
        let f = Field::from_fn(&g, |p| (p[0] * 1.3).sin() + p[1] * p[1]);
        let h = Field::from_fn(&g, |p| (-(p[0] * p[0] + p[1] * p[1])).exp());
        let a = integrate_product(&f, &laplacian(&h), None).unwrap();
        let b = integrate_product(&h, &laplacian(&f), None).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn partition_of_unity_2d() {
        let g = Grid::new(2, 8.0, 32).unwrap();
        let t = cube_tiling(&g, 2.0).unwrap();
        let mut sum = vec![0u32; g.node_count()];
        for m in t.masks() {
            for (s, &b) in sum.iter_mut().zip(m.included()) {
                *s += b as u32;
            }
        }
        assert!(sum.iter().all(|&s| s == 1));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn integrate_is_monotone_in_the_mask(
                r1 in 0.1f64..1.5, dr in 0.0f64..1.0, cx in -3.0f64..3.0, freq in 0.1f64..3.0
            ) {
                let g = Grid::new(1, 8.0, 128).unwrap();
                let small = ball_mask(&g, &[cx], r1).unwrap();
                let large = ball_mask(&g, &[cx], r1 + dr).unwrap();
                prop_assert!(small.is_subset_of(&large));
                let f = Field::from_fn(&g, |p| (freq * p[0]).sin().abs());
                prop_assert!(integrate(&f, Some(&small)).unwrap() <= integrate(&f, Some(&large)).unwrap() + 1e-15);
            }

            #[test]
            fn laplacian_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let g = Grid::new(1, 8.0, 32).unwrap();
                let f = Field::from_fn(&g, |p| (p[0]).sin());
                let h = Field::from_fn(&g, |p| (-p[0] * p[0]).exp());
                let comb = f.zip_map(&h, |x, y| a * x + b * y).unwrap();
                let lhs = laplacian(&comb);
                let rhs = laplacian(&f).zip_map(&laplacian(&h), |x, y| a * x + b * y).unwrap();
                for (x, y) in lhs.values().iter().zip(rhs.values()) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }
}
