//! Sparse binary user-item interactions: the universal currency of the
//! pipeline. Rows are sorted, duplicate-free item index lists.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionMatrix {
    n_users: usize,
    n_items: usize,
    rows: Vec<Vec<u32>>,
}

impl InteractionMatrix {
    pub fn new(n_users: usize, n_items: usize) -> Self {
        InteractionMatrix {
            n_users,
            n_items,
            rows: vec![Vec::new(); n_users],
        }
    }

    /// Builds from per-user item lists, sorting and deduplicating each row.
    pub fn from_rows(n_items: usize, mut rows: Vec<Vec<u32>>) -> Result<Self> {
        for row in rows.iter_mut() {
            row.sort_unstable();
            row.dedup();
            if let Some(&last) = row.last() {
                if last as usize >= n_items {
                    return Err(Error::Index {
                        what: "item",
                        index: last as usize,
                        bound: n_items,
                    });
                }
            }
        }
        Ok(InteractionMatrix {
            n_users: rows.len(),
            n_items,
            rows,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn row(&self, u: usize) -> &[u32] {
        &self.rows[u]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn sparsity(&self) -> f64 {
        if self.n_users == 0 || self.n_items == 0 {
            return 1.0;
        }
        1.0 - self.nnz() as f64 / (self.n_users as f64 * self.n_items as f64)
    }

    pub fn contains(&self, u: usize, i: u32) -> bool {
        self.rows[u].binary_search(&i).is_ok()
    }

    /// Inserts (u, i); returns false if already present.
    pub fn insert(&mut self, u: usize, i: u32) -> bool {
        assert!((i as usize) < self.n_items, "item index out of range");
        match self.rows[u].binary_search(&i) {
            Ok(_) => false,
            Err(pos) => {
                self.rows[u].insert(pos, i);
                true
            }
        }
    }

    pub fn iter_pairs(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().map(move |&i| (u, i)))
    }

    /// Interaction count per item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_items];
        for row in &self.rows {
            for &i in row {
                counts[i as usize] += 1;
            }
        }
        counts
    }

    pub fn mean_row_len(&self) -> f64 {
        if self.n_users == 0 {
            return 0.0;
        }
        self.nnz() as f64 / self.n_users as f64
    }

    /// Stacks `other` below `self`; both must share the item universe.
    pub fn vstack(&self, other: &InteractionMatrix) -> Result<InteractionMatrix> {
        if self.n_items != other.n_items {
            return Err(Error::Shape {
                op: "vstack",
                left: (self.n_users, self.n_items),
                right: (other.n_users, other.n_items),
            });
        }
        let mut rows = self.rows.clone();
        rows.extend(other.rows.iter().cloned());
        Ok(InteractionMatrix {
            n_users: self.n_users + other.n_users,
            n_items: self.n_items,
            rows,
        })
    }

    /// Binary row as dense f64 (for the autoencoder and PCA).
    pub fn dense_row(&self, u: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_items];
        for &i in &self.rows[u] {
            out[i as usize] = 1.0;
        }
        out
    }

    /// Line-oriented persistence: header `n_users n_items`, then one line
    /// per user with space-separated item indices. A sidecar metadata JSON
    /// is written next to it when `meta` is given.
    pub fn save(&self, path: &Path, meta: Option<&serde_json::Value>) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", self.n_users, self.n_items));
        for row in &self.rows {
            let mut first = true;
            for &i in row {
                if !first {
                    out.push(' ');
                }
                out.push_str(&i.to_string());
                first = false;
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))?;
        if let Some(meta) = meta {
            let meta_path = sidecar_path(path);
            let mut f = fs::File::create(&meta_path)
                .map_err(|e| Error::io(meta_path.display().to_string(), e))?;
            f.write_all(serde_json::to_string_pretty(meta).unwrap().as_bytes())
                .map_err(|e| Error::io(meta_path.display().to_string(), e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<InteractionMatrix> {
        let f = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let reader = BufReader::new(f);
        let mut lines = reader.lines().enumerate();
        let parse_err = |line: usize, msg: &str| Error::Parse {
            path: path.display().to_string(),
            line: line + 1,
            msg: msg.to_string(),
        };
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(0, "empty file"))?;
        let header = header.map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut it = header.split_whitespace();
        let n_users: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(0, "bad user count"))?;
        let n_items: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| parse_err(0, "bad item count"))?;
        let mut rows = Vec::with_capacity(n_users);
        for (lineno, line) in lines {
            let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
            let mut row = Vec::new();
            for tok in line.split_whitespace() {
                let i: u32 = tok
                    .parse()
                    .map_err(|_| parse_err(lineno, "bad item index"))?;
                if i as usize >= n_items {
                    return Err(parse_err(lineno, "item index out of range"));
                }
                row.push(i);
            }
            rows.push(row);
        }
        if rows.len() != n_users {
            return Err(parse_err(rows.len(), "row count does not match header"));
        }
        InteractionMatrix::from_rows(n_items, rows)
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".meta.json");
    std::path::PathBuf::from(os)
}
