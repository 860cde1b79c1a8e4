//! Correlation-driven block discovery: complete-linkage clustering on
//! `1 - |rho|` and extraction of the cluster holding one dimension.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diagnostics::CorrelationMatrix;
use crate::error::BlockingError;

/// Cut heights the outer adapter draws from when proposing a block.
pub const CUT_HEIGHTS: [f64; 4] = [0.2, 0.4, 0.6, 0.8];
/// Largest block handed to a block sampler.
pub const MAX_BLOCK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    /// A dimension id.
    Leaf(usize),
    /// Index into the merge list.
    Cluster(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: TreeNode,
    pub right: TreeNode,
    pub height: f64,
}

/// Agglomerative cluster tree over a set of dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: Vec<usize>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Dimension ids below `node`, ascending.
    pub fn members(&self, node: TreeNode) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            match n {
                TreeNode::Leaf(d) => out.push(d),
                TreeNode::Cluster(i) => {
                    stack.push(self.merges[i].left);
                    stack.push(self.merges[i].right);
                }
            }
        }
        out.sort_unstable();
        out
    }

    pub fn to_json(&self) -> Result<String, serde_json::Error> {
        serde_json::to_string_pretty(self)
    }
}

/// `D = 1 - |rho|` off the diagonal, zero on it.
pub fn distance_matrix(rho: &DMatrix<f64>) -> Result<DMatrix<f64>, BlockingError> {
    let m = rho.nrows();
    if rho.ncols() != m {
        return Err(BlockingError::MalformedCorrelation(format!(
            "not square: {}x{}",
            m,
            rho.ncols()
        )));
    }
    let mut d = DMatrix::zeros(m, m);
    for i in 0..m {
        if (rho[(i, i)] - 1.0).abs() > 1e-9 {
            return Err(BlockingError::MalformedCorrelation(format!(
                "diagonal entry {i} is {}",
                rho[(i, i)]
            )));
        }
        for j in 0..i {
            let (a, b) = (rho[(i, j)], rho[(j, i)]);
            if !(a.abs() <= 1.0 + 1e-12) || (a - b).abs() > 1e-9 {
                return Err(BlockingError::MalformedCorrelation(format!(
                    "entry ({i}, {j}) is {a} / {b}"
                )));
            }
            let v = (1.0 - a.abs()).max(0.0);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Complete-linkage clustering of `leaves` (dimension ids labelling the
/// rows of `d`). Ties go to the pair with the lexicographically smallest
/// (smallest-member, smallest-member) ids.
pub fn hclust_complete_on(d: &DMatrix<f64>, leaves: &[usize]) -> Dendrogram {
    let m = leaves.len();
    // Active clusters: (node, smallest member id); `slot` maps them to rows of `dist`.
    let mut active: Vec<(TreeNode, usize)> = leaves.iter().map(|&l| (TreeNode::Leaf(l), l)).collect();
    let mut dist = d.clone();
    let mut slot: Vec<usize> = (0..m).collect();
    let mut merges = Vec::with_capacity(m.saturating_sub(1));
    while active.len() > 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for a in 0..active.len() {
            for b in a + 1..active.len() {
                let h = dist[(slot[a], slot[b])];
                let key = {
                    let (x, y) = (active[a].1, active[b].1);
                    (x.min(y), x.max(y))
                };
                let better = match &best {
                    None => true,
                    Some((bh, bk, _, _)) => h < *bh || (h == *bh && key < *bk),
                };
                if better {
                    best = Some((h, key, a, b));
                }
            }
        }
        let (h, _, a, b) = best.expect("at least two clusters");
        let (first, second) = if active[a].1 < active[b].1 { (a, b) } else { (b, a) };
        merges.push(Merge {
            left: active[first].0,
            right: active[second].0,
            height: h,
        });
        // Lance-Williams update for complete linkage.
        let (sa, sb) = (slot[a], slot[b]);
        for c in 0..active.len() {
            if c != a && c != b {
                let sc = slot[c];
                let v = dist[(sa, sc)].max(dist[(sb, sc)]);
                dist[(sa, sc)] = v;
                dist[(sc, sa)] = v;
            }
        }
        let min_leaf = active[a].1.min(active[b].1);
        active[a] = (TreeNode::Cluster(merges.len() - 1), min_leaf);
        active.remove(b);
        slot.remove(b);
    }
    Dendrogram {
        leaves: leaves.to_vec(),
        merges,
    }
}

/// Complete-linkage clustering over all rows of `d`.
pub fn hclust_complete(d: &DMatrix<f64>) -> Dendrogram {
    let leaves: Vec<usize> = (0..d.nrows()).collect();
    hclust_complete_on(d, &leaves)
}

/// Leaves of the largest subtree holding `k` whose merges all sit at or
/// below height `h`; `{k}` when there is none.
pub fn block_containing(dend: &Dendrogram, k: usize, h: f64) -> Vec<usize> {
    if !dend.leaves.contains(&k) {
        return vec![k];
    }
    let mut parent_of_leaf = None;
    let mut parent_of_cluster = vec![None; dend.merges.len()];
    for (i, m) in dend.merges.iter().enumerate() {
        for child in [m.left, m.right] {
            match child {
                TreeNode::Leaf(d) if d == k => parent_of_leaf = Some(i),
                TreeNode::Cluster(c) => parent_of_cluster[c] = Some(i),
                _ => {}
            }
        }
    }
    let mut node = TreeNode::Leaf(k);
    let mut next = parent_of_leaf;
    while let Some(p) = next {
        if dend.merges[p].height > h {
            break;
        }
        node = TreeNode::Cluster(p);
        next = parent_of_cluster[p];
    }
    dend.members(node)
}

/// Partition of the tree's leaves into the subtrees whose merges all sit
/// at or below `h`. Clusters are ascending and ordered by smallest member.
pub fn cut_tree(dend: &Dendrogram, h: f64) -> Vec<Vec<usize>> {
    let mut seen = vec![false; dend.leaves.iter().max().map_or(0, |m| m + 1)];
    let mut out = Vec::new();
    let mut leaves = dend.leaves.clone();
    leaves.sort_unstable();
    for k in leaves {
        if seen[k] {
            continue;
        }
        let c = block_containing(dend, k, h);
        c.iter().for_each(|&d| seen[d] = true);
        out.push(c);
    }
    out
}

/// Keep `k` and the `cap - 1` other members most correlated with it,
/// ties by lower id; result ascending.
pub fn cap_block(block: &[usize], k: usize, rho: &DMatrix<f64>, cap: usize) -> Vec<usize> {
    if block.len() <= cap {
        return block.to_vec();
    }
    let mut others: Vec<usize> = block.iter().copied().filter(|&d| d != k).collect();
    others.sort_by(|&a, &b| {
        rho[(k, b)]
            .abs()
            .partial_cmp(&rho[(k, a)].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut out: Vec<usize> = others.into_iter().take(cap.saturating_sub(1)).collect();
    out.push(k);
    out.sort_unstable();
    out
}

/// Clustering of the non-degenerate dimensions of a correlation matrix.
pub fn cluster_tree(corr: &CorrelationMatrix) -> Result<Dendrogram, BlockingError> {
    let d = distance_matrix(&corr.values)?;
    let keep: Vec<usize> = (0..d.nrows()).filter(|&i| !corr.zero_variance[i]).collect();
    let sub = d.select_rows(&keep).select_columns(&keep);
    Ok(hclust_complete_on(&sub, &keep))
}

/// Block holding `k` at cut height `h`, capped at [`MAX_BLOCK`].
pub fn select_block(corr: &CorrelationMatrix, dend: &Dendrogram, k: usize, h: f64) -> Vec<usize> {
    let block = block_containing(dend, k, h);
    cap_block(&block, k, &corr.values, MAX_BLOCK)
}
