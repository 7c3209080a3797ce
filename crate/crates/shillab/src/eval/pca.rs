//! Two-component PCA over user profile rows via power iteration with
//! deflation, plus the labeled coordinate export.
//!
//! Rows enter as sparse (index, value) lists; centering is handled
//! algebraically so the data matrix is never densified.

use std::path::Path;

use crate::error::{Error, Result};
use crate::num::rng::Rng;

/// A profile row as sparse (item, value) pairs.
pub type SparseRow = Vec<(u32, f64)>;

/// Builds sparse rows from binary profiles, optionally L2-normalized.
pub fn profile_rows(rows: &[Vec<u32>], normalize: bool) -> Vec<SparseRow> {
    rows.iter()
        .map(|row| {
            let v = if normalize && !row.is_empty() {
                1.0 / (row.len() as f64).sqrt()
            } else {
                1.0
            };
            row.iter().map(|&i| (i, v)).collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    pub components: [Vec<f64>; 2],
    pub eigenvalues: [f64; 2],
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// (X - 1 mean^T)^T (X - 1 mean^T) v / (R - 1) without forming X.
fn cov_apply(rows: &[SparseRow], mean: &[f64], v: &[f64]) -> Vec<f64> {
    let r = rows.len();
    let mv = dot(mean, v);
    // u = X v - (mean . v) 1
    let mut u = vec![0.0; r];
    for (i, row) in rows.iter().enumerate() {
        let mut acc = 0.0;
        for &(j, x) in row {
            acc += x * v[j as usize];
        }
        u[i] = acc - mv;
    }
    // out = X^T u - mean (1 . u)
    let usum: f64 = u.iter().sum();
    let mut out = vec![0.0; mean.len()];
    for (i, row) in rows.iter().enumerate() {
        for &(j, x) in row {
            out[j as usize] += x * u[i];
        }
    }
    for (o, &m) in out.iter_mut().zip(mean.iter()) {
        *o -= m * usum;
    }
    let denom = (r.max(2) - 1) as f64;
    for o in out.iter_mut() {
        *o /= denom;
    }
    out
}

/// Enforces the sign convention: first loading with magnitude above the
/// tolerance is positive.
fn fix_sign(v: &mut [f64]) {
    if let Some(&lead) = v.iter().find(|x| x.abs() > 1e-12) {
        if lead < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

/// Fits the top two principal components. Deterministic: the power
/// iteration starts from a fixed seeded vector and components carry the
/// first-nonzero-positive sign convention.
pub fn fit_pca2(rows: &[SparseRow], dim: usize) -> Result<Pca2> {
    if rows.len() < 2 {
        return Err(Error::Eval("pca needs at least 2 profiles".into()));
    }
    let r = rows.len();
    let mut mean = vec![0.0; dim];
    for row in rows {
        for &(j, x) in row {
            mean[j as usize] += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= r as f64;
    }

    let mut components: [Vec<f64>; 2] = std::array::from_fn(|_| vec![0.0; dim]);
    let mut eigenvalues = [0.0f64; 2];
    let mut rng = Rng::new(0x50CA_2024);
    for comp in 0..2 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        // Deflate previously found directions out of the start vector.
        for prev in 0..comp {
            let proj = dot(&v, &components[prev]);
            for (x, &p) in v.iter_mut().zip(components[prev].iter()) {
                *x -= proj * p;
            }
        }
        let n = norm(&v);
        if n == 0.0 {
            v[comp.min(dim - 1)] = 1.0;
        } else {
            for x in v.iter_mut() {
                *x /= n;
            }
        }
        let mut eig = 0.0;
        for _ in 0..300 {
            let mut w = cov_apply(rows, &mean, &v);
            for prev in 0..comp {
                let proj = dot(&w, &components[prev]);
                for (x, &p) in w.iter_mut().zip(components[prev].iter()) {
                    *x -= proj * p;
                }
            }
            let wn = norm(&w);
            if wn < 1e-14 {
                // Rank-deficient input: the remaining variance is zero.
                eig = 0.0;
                for x in v.iter_mut() {
                    *x = 0.0;
                }
                break;
            }
            let next: Vec<f64> = w.iter().map(|&x| x / wn).collect();
            let delta: f64 = next
                .iter()
                .zip(v.iter())
                .map(|(&a, &b)| (a.abs() - b.abs()).abs())
                .sum();
            v = next;
            eig = wn;
            if delta < 1e-13 {
                break;
            }
        }
        fix_sign(&mut v);
        components[comp] = v;
        eigenvalues[comp] = eig;
    }
    Ok(Pca2 {
        mean,
        components,
        eigenvalues,
    })
}

impl Pca2 {
    /// Projects one sparse row to its 2-D coordinates.
    pub fn project(&self, row: &SparseRow) -> (f64, f64) {
        let mut coords = [0.0f64; 2];
        for (c, comp) in self.components.iter().enumerate() {
            let mut acc = 0.0;
            for &(j, x) in row {
                acc += x * comp[j as usize];
            }
            coords[c] = acc - dot(&self.mean, comp);
        }
        (coords[0], coords[1])
    }

    pub fn project_all(&self, rows: &[SparseRow]) -> Vec<(f64, f64)> {
        rows.iter().map(|r| self.project(r)).collect()
    }
}

/// Fits PCA on all rows jointly and writes `x,y,label` lines.
pub fn pca_export(
    rows: &[SparseRow],
    labels: &[String],
    dim: usize,
    path: &Path,
) -> Result<Vec<(f64, f64)>> {
    assert_eq!(rows.len(), labels.len());
    let pca = fit_pca2(rows, dim)?;
    let coords = pca.project_all(rows);
    let mut out = String::from("x,y,label\n");
    for ((x, y), label) in coords.iter().zip(labels.iter()) {
        out.push_str(&format!("{x:.10},{y:.10},{label}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_to_sparse(rows: &[Vec<f64>]) -> Vec<SparseRow> {
        rows.iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(j, &v)| (j as u32, v))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn two_points_project_onto_their_line() {
        let rows = dense_to_sparse(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let pca = fit_pca2(&rows, 3).unwrap();
        let coords = pca.project_all(&rows);
        let delta = 2.0f64.sqrt();
        let xs: Vec<f64> = coords.iter().map(|c| c.0).collect();
        assert!((xs[0].abs() - delta / 2.0).abs() < 1e-9, "{xs:?}");
        assert!((xs[1].abs() - delta / 2.0).abs() < 1e-9);
        assert!((xs[0] + xs[1]).abs() < 1e-9, "symmetric about the mean");
        for c in &coords {
            assert!(c.1.abs() < 1e-7, "second component should be ~0: {c:?}");
        }
    }

    #[test]
    fn identical_rows_give_zero_coordinates() {
        let rows = dense_to_sparse(&vec![vec![1.0, 1.0, 0.0]; 4]);
        let pca = fit_pca2(&rows, 3).unwrap();
        for (x, y) in pca.project_all(&rows) {
            assert!(x.abs() < 1e-9 && y.abs() < 1e-9);
        }
    }

    /// Jacobi eigensolver oracle for small symmetric matrices.
    fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> Vec<(f64, Vec<f64>)> {
        let n = a.len();
        let mut v: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        for _ in 0..100 {
            let mut off = 0.0;
            let (mut p, mut q) = (0, 1);
            for i in 0..n {
                for j in (i + 1)..n {
                    if a[i][j].abs() > off {
                        off = a[i][j].abs();
                        p = i;
                        q = j;
                    }
                }
            }
            if off < 1e-14 {
                break;
            }
            let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..n {
                let (akp, akq) = (a[k][p], a[k][q]);
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..n {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for k in 0..n {
                let (vkp, vkq) = (v[k][p], v[k][q]);
                v[k][p] = c * vkp - s * vkq;
                v[k][q] = s * vkp + c * vkq;
            }
        }
        let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
            .map(|j| (a[j][j], (0..n).map(|i| v[i][j]).collect()))
            .collect();
        pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
        pairs
    }

    #[test]
    fn toy_pca_matches_jacobi_oracle() {
        let dense = vec![
            vec![2.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
            vec![3.0, 1.0, 1.0, 0.0],
            vec![0.5, 2.0, 0.0, 1.0],
            vec![1.0, 0.0, 2.0, 0.5],
        ];
        let rows = dense_to_sparse(&dense);
        let pca = fit_pca2(&rows, 4).unwrap();

        // Dense covariance for the oracle.
        let r = dense.len();
        let mut mean = vec![0.0; 4];
        for row in &dense {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += x / r as f64;
            }
        }
        let mut cov = vec![vec![0.0; 4]; 4];
        for row in &dense {
            for i in 0..4 {
                for j in 0..4 {
                    cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]) / (r - 1) as f64;
                }
            }
        }
        let eig = jacobi_eigen(cov);
        for comp in 0..2 {
            assert!(
                (pca.eigenvalues[comp] - eig[comp].0).abs() < 1e-8,
                "eigenvalue {comp}: {} vs {}",
                pca.eigenvalues[comp],
                eig[comp].0
            );
            let mut oracle_vec = eig[comp].1.clone();
            fix_sign(&mut oracle_vec);
            for (a, b) in pca.components[comp].iter().zip(oracle_vec.iter()) {
                assert!((a - b).abs() < 1e-6, "component {comp} mismatch");
            }
        }
    }

    #[test]
    fn export_writes_csv_deterministically() {
        let rows = dense_to_sparse(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let labels = vec!["Normal".into(), "Normal".into(), "Random".into()];
        let dir = tempfile::tempdir().unwrap();
        let path_a = dir.path().join("a.csv");
        let path_b = dir.path().join("b.csv");
        pca_export(&rows, &labels, 2, &path_a).unwrap();
        pca_export(&rows, &labels, 2, &path_b).unwrap();
        let a = std::fs::read(&path_a).unwrap();
        let b = std::fs::read(&path_b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("x,y,label\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
