//! Regular evaluation grids over hypercube domains.
//!
//! Nodes are indexed by a flat `u64` whose decode order is lexicographic in
//! the per-axis multi-index (axis 0 slowest). A left-to-right scan therefore
//! visits nodes in lexicographic index order, which is the tie-break order
//! the solvers promise.

use crate::rank::Hypercube;

#[derive(Debug, Clone)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    steps: Vec<f64>,
    points_per_axis: usize,
}

impl Grid {
    /// Grid with `points_per_axis` nodes per axis, endpoints included.
    ///
    /// # Panics
    ///
    /// Panics when `points_per_axis < 2`.
    pub fn new(domain: &Hypercube, points_per_axis: usize) -> Self {
        assert!(points_per_axis >= 2, "a grid needs at least 2 points per axis");
        let lower = domain.lower().to_vec();
        let upper = domain.upper().to_vec();
        let steps = lower
            .iter()
            .zip(&upper)
            .map(|(lo, hi)| (hi - lo) / (points_per_axis - 1) as f64)
            .collect();
        Self {
            lower,
            upper,
            steps,
            points_per_axis,
        }
    }

    /// Densest grid whose total node count stays at or below `target_total`,
    /// but never fewer than 2 points per axis.
    pub fn for_budget(domain: &Hypercube, target_total: u64) -> Self {
        let d = domain.dim() as f64;
        let per_axis = (target_total as f64).powf(1.0 / d).floor() as usize;
        Self::new(domain, per_axis.max(2))
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Total node count, saturating at `u64::MAX` on overflow.
    pub fn total_nodes(&self) -> u64 {
        let mut total: u128 = 1;
        for _ in 0..self.dim() {
            total = total.saturating_mul(self.points_per_axis as u128);
            if total > u64::MAX as u128 {
                return u64::MAX;
            }
        }
        total as u64
    }

    /// Decodes a flat index into node coordinates. The last axis varies
    /// fastest; endpoint nodes land exactly on the domain bounds.
    pub fn node_into(&self, flat: u64, out: &mut Vec<f64>) {
        let d = self.dim();
        out.clear();
        out.resize(d, 0.0);
        let m = self.points_per_axis as u64;
        let mut rest = flat;
        for axis in (0..d).rev() {
            let i = (rest % m) as usize;
            rest /= m;
            out[axis] = if i == self.points_per_axis - 1 {
                self.upper[axis]
            } else {
                self.lower[axis] + i as f64 * self.steps[axis]
            };
        }
        debug_assert_eq!(rest, 0, "flat index out of range");
    }

    pub fn node(&self, flat: u64) -> Vec<f64> {
        let mut out = Vec::new();
        self.node_into(flat, &mut out);
        out
    }

    /// Largest per-axis spacing.
    pub fn max_step(&self) -> f64 {
        self.steps.iter().copied().fold(0.0, f64::max)
    }

    /// Half the Euclidean diagonal of one grid cell: no point of the domain
    /// is farther than this from its nearest node.
    pub fn half_cell_diameter(&self) -> f64 {
        0.5 * self.steps.iter().map(|s| s * s).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_nodes_cover_endpoints_exactly() {
        let domain = Hypercube::new(vec![-2.0], vec![2.0]).unwrap();
        let grid = Grid::new(&domain, 5);
        assert_eq!(grid.total_nodes(), 5);
        let xs: Vec<f64> = (0..5).map(|i| grid.node(i)[0]).collect();
        assert_eq!(xs, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn flat_order_is_lexicographic_in_the_multi_index() {
        let domain = Hypercube::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let grid = Grid::new(&domain, 2);
        let nodes: Vec<Vec<f64>> = (0..4).map(|i| grid.node(i)).collect();
        assert_eq!(
            nodes,
            vec![
                vec![0.0, 0.0],
                vec![0.0, 1.0],
                vec![1.0, 0.0],
                vec![1.0, 1.0]
            ]
        );
    }

    #[test]
    fn cell_geometry() {
        let domain = Hypercube::new(vec![0.0, 0.0], vec![4.0, 2.0]).unwrap();
        let grid = Grid::new(&domain, 3);
        assert_eq!(grid.max_step(), 2.0);
        let expected = 0.5 * (2.0f64 * 2.0 + 1.0).sqrt();
        assert!((grid.half_cell_diameter() - expected).abs() < 1e-12);
    }

    #[test]
    fn budget_grid_respects_the_target() {
        let domain = Hypercube::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let grid = Grid::for_budget(&domain, 4096);
        assert_eq!(grid.points_per_axis(), 64);
        assert_eq!(grid.total_nodes(), 4096);
        let tiny = Grid::for_budget(&domain, 1);
        assert_eq!(tiny.points_per_axis(), 2);
    }
}
