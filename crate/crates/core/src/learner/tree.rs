use serde::{Deserialize, Serialize};

/// Binary decision tree node. Rows with `value <= threshold` go left.
///
/// `L` is the leaf payload: a log-odds increment for boosted trees, a class
/// distribution for forest trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode<L> {
    Split { feature: usize, threshold: f64, left: Box<TreeNode<L>>, right: Box<TreeNode<L>> },
    Leaf { value: L },
}

impl<L> TreeNode<L> {
    pub fn leaf_for(&self, row: &[f64]) -> &L {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Features used by any split, with repetition.
    pub fn split_features(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            if let TreeNode::Split { feature, left, right, .. } = n {
                out.push(*feature);
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }
}

/// Threshold between two adjacent distinct sorted values `lo < hi` such that
/// `lo` goes left and `hi` goes right.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) * 0.5;
    if mid < hi {
        mid
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn routing_and_shape() {
        let t = TreeNode::Split {
            feature: 1,
            threshold: 0.5,
            left: Box::new(TreeNode::Leaf { value: -1.0 }),
            right: Box::new(TreeNode::Split {
                feature: 0,
                threshold: 2.0,
                left: Box::new(TreeNode::Leaf { value: 0.0 }),
                right: Box::new(TreeNode::Leaf { value: 1.0 }),
            }),
        };
        assert_eq!(*t.leaf_for(&[9.0, 0.5]), -1.0);
        assert_eq!(*t.leaf_for(&[2.0, 0.6]), 0.0);
        assert_eq!(*t.leaf_for(&[2.1, 0.6]), 1.0);
        assert_eq!(t.depth(), 2);
        assert_eq!(t.n_leaves(), 3);
        assert_eq!(t.split_features(), vec![1, 0]);
    }

    #[test]
    fn midpoint_separates_adjacent_floats() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let m = midpoint(lo, hi);
        assert!(lo <= m && m < hi);
        assert_eq!(midpoint(1.0, 3.0), 2.0);
    }
}
