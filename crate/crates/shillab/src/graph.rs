//! User-item bipartite graph over the attacker's view, with parameter-free
//! symmetric-normalized convolution used to build global-view item features.
//!
//! Node ordering stacks users first, then items. Items unseen in the view
//! have degree zero, keep zero feature vectors, and are excluded from the
//! target-selection pool.

use crate::data::split::AttackerView;
use crate::error::{Error, Result};
use crate::num::matrix::DenseMatrix;

/// Sparse symmetric adjacency with entries 1/sqrt(deg(u) * deg(i)).
#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    n_users: usize,
    n_items: usize,
    /// Per-node neighbor lists over the stacked (users; items) ordering.
    neighbors: Vec<Vec<(u32, f64)>>,
}

impl BipartiteGraph {
    pub fn build(view: &AttackerView) -> Self {
        Self::from_interactions(&view.interactions)
    }

    pub fn from_interactions(y: &crate::data::interactions::InteractionMatrix) -> Self {
        let n_users = y.n_users();
        let n_items = y.n_items();
        let mut user_deg = vec![0usize; n_users];
        let mut item_deg = vec![0usize; n_items];
        for (u, i) in y.iter_pairs() {
            user_deg[u] += 1;
            item_deg[i as usize] += 1;
        }
        let mut neighbors: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_users + n_items];
        for (u, i) in y.iter_pairs() {
            let w = 1.0 / ((user_deg[u] * item_deg[i as usize]) as f64).sqrt();
            neighbors[u].push((n_users as u32 + i, w));
            neighbors[n_users + i as usize].push((u as u32, w));
        }
        let g = BipartiteGraph {
            n_users,
            n_items,
            neighbors,
        };
        debug_assert!(g.is_symmetric());
        g
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_nodes(&self) -> usize {
        self.n_users + self.n_items
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(|n| n.len()).sum::<usize>() / 2
    }

    fn is_symmetric(&self) -> bool {
        for (node, nbrs) in self.neighbors.iter().enumerate() {
            for &(other, w) in nbrs {
                let back = self.neighbors[other as usize]
                    .iter()
                    .find(|&&(n, _)| n as usize == node);
                match back {
                    Some(&(_, w2)) if w2 == w => {}
                    _ => return false,
                }
            }
        }
        true
    }

    /// One application of the normalized adjacency: out = A_hat * feats.
    pub fn apply(&self, feats: &DenseMatrix) -> Result<DenseMatrix> {
        if feats.rows() != self.n_nodes() {
            return Err(Error::Shape {
                op: "graph apply",
                left: (self.n_nodes(), feats.cols()),
                right: feats.shape(),
            });
        }
        let d = feats.cols();
        let mut out = DenseMatrix::zeros(feats.rows(), d);
        for (node, nbrs) in self.neighbors.iter().enumerate() {
            let orow = out.row_mut(node);
            for &(other, w) in nbrs {
                let frow = feats.row(other as usize);
                for (o, &f) in orow.iter_mut().zip(frow.iter()) {
                    *o += w * f;
                }
            }
        }
        Ok(out)
    }

    /// Dense materialization of the normalized adjacency, for small graphs
    /// and debugging only.
    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.n_nodes();
        let mut out = DenseMatrix::zeros(n, n);
        for (node, nbrs) in self.neighbors.iter().enumerate() {
            for &(other, w) in nbrs {
                out.set(node, other as usize, w);
            }
        }
        out
    }
}

/// Propagates stacked (users; items) features through `layers` rounds of
/// the normalized adjacency and averages the layer-0..L representations.
pub fn propagate(g: &BipartiteGraph, feats: &DenseMatrix, layers: usize) -> Result<DenseMatrix> {
    let mut acc = feats.clone();
    let mut current = feats.clone();
    for _ in 0..layers {
        current = g.apply(&current)?;
        acc.scaled_add_assign(1.0, &current)?;
    }
    Ok(acc.scale(1.0 / (layers as f64 + 1.0)))
}

/// Mean of interacting users' features per item; zero vector for items
/// without any interaction in the view.
pub fn init_item_embeddings(user_feats: &DenseMatrix, view: &AttackerView) -> Result<DenseMatrix> {
    let y = &view.interactions;
    if user_feats.rows() != y.n_users() {
        return Err(Error::Shape {
            op: "init_item_embeddings",
            left: (y.n_users(), user_feats.cols()),
            right: user_feats.shape(),
        });
    }
    let d = user_feats.cols();
    let mut out = DenseMatrix::zeros(y.n_items(), d);
    let mut counts = vec![0usize; y.n_items()];
    for (u, i) in y.iter_pairs() {
        counts[i as usize] += 1;
        let urow = user_feats.row(u);
        let irow = out.row_mut(i as usize);
        for (o, &v) in irow.iter_mut().zip(urow.iter()) {
            *o += v;
        }
    }
    for (i, &c) in counts.iter().enumerate() {
        if c > 1 {
            let scale = 1.0 / c as f64;
            for v in out.row_mut(i) {
                *v *= scale;
            }
        }
    }
    Ok(out)
}

/// Frozen global-view item features: user features from the pretrained
/// profile encoder are aggregated into item embeddings and propagated once
/// at construction; lookups afterwards are plain row reads.
#[derive(Debug, Clone)]
pub struct GraphEncoder {
    layers: usize,
    item_features: DenseMatrix,
    /// Items with at least one interaction in the view.
    present: Vec<bool>,
}

impl GraphEncoder {
    pub fn build(user_feats: &DenseMatrix, view: &AttackerView, layers: usize) -> Result<Self> {
        let g = BipartiteGraph::build(view);
        let item_init = init_item_embeddings(user_feats, view)?;
        let d = user_feats.cols();
        let mut stacked = DenseMatrix::zeros(g.n_nodes(), d);
        for u in 0..g.n_users() {
            stacked.row_mut(u).copy_from_slice(user_feats.row(u));
        }
        for i in 0..g.n_items() {
            stacked
                .row_mut(g.n_users() + i)
                .copy_from_slice(item_init.row(i));
        }
        let propagated = propagate(&g, &stacked, layers)?;
        let mut item_features = DenseMatrix::zeros(g.n_items(), d);
        for i in 0..g.n_items() {
            item_features
                .row_mut(i)
                .copy_from_slice(propagated.row(g.n_users() + i));
        }
        let counts = view.interactions.item_counts();
        Ok(GraphEncoder {
            layers,
            item_features,
            present: counts.iter().map(|&c| c > 0).collect(),
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn feature_width(&self) -> usize {
        self.item_features.cols()
    }

    pub fn n_items(&self) -> usize {
        self.item_features.rows()
    }

    pub fn item_present(&self, item: usize) -> bool {
        self.present.get(item).copied().unwrap_or(false)
    }

    /// Global-view feature of one target item.
    pub fn target_feature(&self, item: usize) -> Result<&[f64]> {
        if item >= self.item_features.rows() {
            return Err(Error::Index {
                what: "target item",
                index: item,
                bound: self.item_features.rows(),
            });
        }
        Ok(self.item_features.row(item))
    }

    /// Stacks the features of a target set into a |T| x d matrix.
    pub fn target_features(&self, targets: &[u32]) -> Result<DenseMatrix> {
        let d = self.feature_width();
        let mut out = DenseMatrix::zeros(targets.len(), d);
        for (r, &t) in targets.iter().enumerate() {
            out.row_mut(r).copy_from_slice(self.target_feature(t as usize)?);
        }
        Ok(out)
    }

    /// CSV export of the propagated item table, for debugging.
    pub fn export_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::new();
        for i in 0..self.item_features.rows() {
            let row = self.item_features.row(i);
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.12}")).collect();
            out.push_str(&format!("{i},{}\n", cells.join(",")));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::interactions::InteractionMatrix;
    use crate::data::split::AttackerView;
    use crate::num::rng::Rng;

    fn view_from_rows(n_items: usize, rows: Vec<Vec<u32>>) -> AttackerView {
        let n = rows.len();
        AttackerView {
            interactions: InteractionMatrix::from_rows(n_items, rows).unwrap(),
            fraction: 1.0,
            full_user: (0..n as u32).collect(),
        }
    }

    #[test]
    fn item_embedding_is_mean_of_users() {
        let view = view_from_rows(1, vec![vec![0], vec![0]]);
        let feats = DenseMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let items = init_item_embeddings(&feats, &view).unwrap();
        assert_eq!(items.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn single_user_item_copies_feature() {
        let view = view_from_rows(2, vec![vec![1]]);
        let feats = DenseMatrix::from_vec(1, 2, vec![0.3, -0.7]);
        let items = init_item_embeddings(&feats, &view).unwrap();
        assert_eq!(items.row(1), &[0.3, -0.7]);
        assert_eq!(items.row(0), &[0.0, 0.0]); // isolated item
    }

    #[test]
    fn three_user_means_match_hand_sums() {
        let view = view_from_rows(2, vec![vec![0], vec![0, 1], vec![0]]);
        let feats = DenseMatrix::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let items = init_item_embeddings(&feats, &view).unwrap();
        assert_eq!(items.row(0), &[3.0, 4.0]); // mean of all three
        assert_eq!(items.row(1), &[3.0, 4.0]); // user 1 alone
    }

    #[test]
    fn single_edge_adjacency_entry_is_one() {
        let view = view_from_rows(1, vec![vec![0]]);
        let g = BipartiteGraph::build(&view);
        let dense = g.to_dense();
        assert_eq!(dense.get(0, 1), 1.0);
        assert_eq!(dense.get(1, 0), 1.0);
    }

    #[test]
    fn star_entries_are_half() {
        // One item, four degree-1 users: weight 1/sqrt(1*4) = 1/2.
        let view = view_from_rows(1, vec![vec![0]; 4]);
        let g = BipartiteGraph::build(&view);
        let dense = g.to_dense();
        for u in 0..4 {
            assert!((dense.get(u, 4) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn adjacency_matches_dense_oracle() {
        // Random 5-user/5-item toy, compared against D^{-1/2} A D^{-1/2}
        // assembled densely.
        let mut rng = Rng::new(4);
        let rows: Vec<Vec<u32>> = (0..5)
            .map(|_| {
                let k = 1 + rng.below(4);
                rng.sample_indices(5, k).into_iter().map(|i| i as u32).collect()
            })
            .collect();
        let view = view_from_rows(5, rows.clone());
        let g = BipartiteGraph::build(&view);

        let n = 10;
        let mut a = DenseMatrix::zeros(n, n);
        for (u, row) in rows.iter().enumerate() {
            for &i in row {
                a.set(u, 5 + i as usize, 1.0);
                a.set(5 + i as usize, u, 1.0);
            }
        }
        let deg: Vec<f64> = (0..n).map(|r| a.row(r).iter().sum()).collect();
        let mut expected = DenseMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                if a.get(r, c) != 0.0 {
                    expected.set(r, c, 1.0 / (deg[r] * deg[c]).sqrt());
                }
            }
        }
        let dense = g.to_dense();
        assert!(dense.sq_distance(&expected) < 1e-24);

        // Symmetry is exact by construction.
        let diff = dense.sub(&dense.transpose()).unwrap();
        assert_eq!(diff.max_abs(), 0.0);
    }

    #[test]
    fn propagate_zero_layers_is_identity() {
        let view = view_from_rows(1, vec![vec![0]]);
        let g = BipartiteGraph::build(&view);
        let feats = DenseMatrix::from_vec(2, 2, vec![2.0, 0.0, 0.0, 0.0]);
        let out = propagate(&g, &feats, 0).unwrap();
        assert_eq!(out, feats);
    }

    #[test]
    fn single_edge_one_layer_hand_case() {
        // e_u = (2, 0), e_i = (0, 0); adjacency entry 1, so layer 1 gives
        // the item (2, 0) and the layer average gives (1, 0).
        let view = view_from_rows(1, vec![vec![0]]);
        let g = BipartiteGraph::build(&view);
        let feats = DenseMatrix::from_vec(2, 2, vec![2.0, 0.0, 0.0, 0.0]);
        let out = propagate(&g, &feats, 1).unwrap();
        assert_eq!(out.row(1), &[1.0, 0.0]);
        assert_eq!(out.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn propagate_matches_dense_oracle() {
        let mut rng = Rng::new(8);
        let rows: Vec<Vec<u32>> = (0..5)
            .map(|_| {
                let k = 1 + rng.below(3);
                rng.sample_indices(5, k).into_iter().map(|i| i as u32).collect()
            })
            .collect();
        let view = view_from_rows(5, rows);
        let g = BipartiteGraph::build(&view);
        let mut feats = DenseMatrix::zeros(10, 3);
        for v in feats.data_mut() {
            *v = rng.normal();
        }
        let out = propagate(&g, &feats, 2).unwrap();

        let dense = g.to_dense();
        let x1 = dense.matmul(&feats).unwrap();
        let x2 = dense.matmul(&x1).unwrap();
        let expected = feats.add(&x1).unwrap().add(&x2).unwrap().scale(1.0 / 3.0);
        assert!(out.sq_distance(&expected) < 1e-20);
    }

    #[test]
    fn target_feature_basics() {
        let view = view_from_rows(3, vec![vec![0], vec![0, 2]]);
        let feats = DenseMatrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let enc0 = GraphEncoder::build(&feats, &view, 0).unwrap();
        let init = init_item_embeddings(&feats, &view).unwrap();
        assert_eq!(enc0.target_feature(0).unwrap(), init.row(0));
        // Isolated item stays zero and is flagged absent.
        assert_eq!(enc0.target_feature(1).unwrap(), &[0.0, 0.0]);
        assert!(!enc0.item_present(1));
        assert!(enc0.item_present(2));
        assert!(enc0.target_feature(3).is_err());
    }

    #[test]
    fn permuting_users_leaves_target_features_unchanged() {
        let mut rng = Rng::new(21);
        let rows: Vec<Vec<u32>> = (0..6)
            .map(|_| {
                let k = 1 + rng.below(4);
                rng.sample_indices(7, k).into_iter().map(|i| i as u32).collect()
            })
            .collect();
        let mut feats = DenseMatrix::zeros(6, 3);
        for v in feats.data_mut() {
            *v = rng.normal();
        }
        let enc = GraphEncoder::build(&feats, &view_from_rows(7, rows.clone()), 2).unwrap();

        let perm = [3usize, 0, 5, 1, 4, 2];
        let prows: Vec<Vec<u32>> = perm.iter().map(|&p| rows[p].clone()).collect();
        let mut pfeats = DenseMatrix::zeros(6, 3);
        for (newu, &oldu) in perm.iter().enumerate() {
            pfeats.row_mut(newu).copy_from_slice(feats.row(oldu));
        }
        let penc = GraphEncoder::build(&pfeats, &view_from_rows(7, prows), 2).unwrap();
        for t in 0..7 {
            let a = enc.target_feature(t).unwrap();
            let b = penc.target_feature(t).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
