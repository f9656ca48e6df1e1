/// Complete binary tree of partial sums over nonnegative leaf weights.
///
/// Internal nodes are recomputed from their children on every update, so
/// rounding errors never accumulate across updates.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(weights: &[f64]) -> Self {
        let leaves = weights.len().max(1).next_power_of_two();
        let mut nodes = vec![0.0; 2 * leaves];
        nodes[leaves..leaves + weights.len()].copy_from_slice(weights);
        for i in (1..leaves).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        SumTree { leaves, nodes }
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, w: f64) {
        let mut j = self.leaves + i;
        self.nodes[j] = w;
        while j > 1 {
            j /= 2;
            self.nodes[j] = self.nodes[2 * j] + self.nodes[2 * j + 1];
        }
    }

    /// Leaf `i` with `Σ_{j<i} w_j ≤ u < Σ_{j≤i} w_j`, for `u ∈ [0, total)`.
    ///
    /// Zero-weight leaves are never returned.
    pub fn find(&self, mut u: f64) -> usize {
        let mut j = 1;
        while j < self.leaves {
            let left = self.nodes[2 * j];
            if u < left || self.nodes[2 * j + 1] == 0.0 {
                j *= 2;
            } else {
                u -= left;
                j = 2 * j + 1;
            }
        }
        j - self.leaves
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn finds_by_cumulative_weight() {
        let t = SumTree::new(&[1.0, 0.0, 2.0, 3.0, 0.5]);
        assert_eq!(t.total(), 6.5);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(0.99), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(2.99), 2);
        assert_eq!(t.find(3.0), 3);
        assert_eq!(t.find(6.4), 4);
    }

    #[test]
    fn skips_zero_leaves_at_the_boundary() {
        let t = SumTree::new(&[1.0, 0.0, 0.0]);
        assert_eq!(t.find(1.0 - 1e-17), 0);
        assert_eq!(t.find(1.0), 0);
    }

    proptest! {
        #[test]
        fn updates_match_rebuild(ws in prop::collection::vec(0.0f64..5.0, 1..40), edits in prop::collection::vec((0usize..40, 0.0f64..5.0), 0..30)) {
            let mut ws = ws;
            let mut t = SumTree::new(&ws);
            for (i, w) in edits {
                let i = i % ws.len();
                ws[i] = w;
                t.set(i, w);
            }
            let fresh = SumTree::new(&ws);
            prop_assert!((t.total() - fresh.total()).abs() < 1e-12);
            let mut acc = 0.0;
            for (i, &w) in ws.iter().enumerate() {
                if w > 0.0 {
                    prop_assert_eq!(t.find(acc + 0.5 * w), i);
                }
                acc += w;
            }
        }
    }
}
