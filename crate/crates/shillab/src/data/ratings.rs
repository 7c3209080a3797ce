//! Rating-file ingestion: MovieLens tab-separated and generic CSV, with
//! dense re-indexing and persisted id maps so report indices stay
//! translatable back to raw ids.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::data::interactions::InteractionMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatingsFormat {
    /// `user \t item \t rating \t timestamp`
    MovielensTab,
    /// `user,item,rating[,timestamp]`, optional header line
    Csv,
}

/// Dense re-indexing of raw string ids, in first-appearance order.
#[derive(Debug, Clone, Default)]
pub struct IdMap {
    raw_by_index: Vec<String>,
    index_by_raw: HashMap<String, u32>,
}

impl IdMap {
    pub fn intern(&mut self, raw: &str) -> u32 {
        if let Some(&idx) = self.index_by_raw.get(raw) {
            return idx;
        }
        let idx = self.raw_by_index.len() as u32;
        self.raw_by_index.push(raw.to_string());
        self.index_by_raw.insert(raw.to_string(), idx);
        idx
    }

    pub fn len(&self) -> usize {
        self.raw_by_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_by_index.is_empty()
    }

    pub fn raw(&self, idx: u32) -> Option<&str> {
        self.raw_by_index.get(idx as usize).map(|s| s.as_str())
    }

    pub fn index(&self, raw: &str) -> Option<u32> {
        self.index_by_raw.get(raw).copied()
    }

    /// One `raw<TAB>index` line per entry.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (idx, raw) in self.raw_by_index.iter().enumerate() {
            out.push_str(&format!("{raw}\t{idx}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<IdMap> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut map = IdMap::default();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let raw = line.split('\t').next().ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: "missing raw id".to_string(),
            })?;
            map.intern(raw);
        }
        Ok(map)
    }
}

#[derive(Debug)]
pub struct LoadedRatings {
    pub interactions: InteractionMatrix,
    pub user_map: IdMap,
    pub item_map: IdMap,
}

/// Parses a rating file into a binary interaction matrix. Any rating
/// `>= min_rating` counts as an interaction; the default threshold of 0
/// keeps every rated pair (implicit feedback).
pub fn load_ratings(path: &Path, format: RatingsFormat, min_rating: f64) -> Result<LoadedRatings> {
    let f = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(f);
    let mut user_map = IdMap::default();
    let mut item_map = IdMap::default();
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let mut saw_record = false;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = match format {
            RatingsFormat::MovielensTab => trimmed.split_whitespace().collect(),
            RatingsFormat::Csv => trimmed.split(',').map(str::trim).collect(),
        };
        if fields.len() < 3 {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: format!("expected at least 3 fields, got {}", fields.len()),
            });
        }
        let rating: f64 = match fields[2].parse() {
            Ok(r) => r,
            Err(_) => {
                // Tolerate a single CSV header line.
                if format == RatingsFormat::Csv && lineno == 0 && !saw_record {
                    continue;
                }
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("bad rating value {:?}", fields[2]),
                });
            }
        };
        saw_record = true;
        if rating < min_rating {
            continue;
        }
        let u = user_map.intern(fields[0]);
        let i = item_map.intern(fields[1]);
        pairs.push((u, i));
    }
    if !saw_record {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: "no rating records found".to_string(),
        });
    }

    let mut rows = vec![Vec::new(); user_map.len()];
    for (u, i) in pairs {
        rows[u as usize].push(i);
    }
    let interactions = InteractionMatrix::from_rows(item_map.len(), rows)?;
    Ok(LoadedRatings {
        interactions,
        user_map,
        item_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_line_toy_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.data");
        std::fs::write(&path, "1\t1\t5\t100\n1\t2\t3\t101\n").unwrap();
        let loaded = load_ratings(&path, RatingsFormat::MovielensTab, 0.0).unwrap();
        assert_eq!(loaded.interactions.n_users(), 1);
        assert_eq!(loaded.interactions.row(0), &[0, 1]);
        assert_eq!(loaded.user_map.raw(0), Some("1"));
        assert_eq!(loaded.item_map.raw(1), Some("2"));
    }

    #[test]
    fn csv_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.csv");
        std::fs::write(&path, "user,item,rating\n7,9,4.5\n7,11,2.0\n8,9,5\n").unwrap();
        let loaded = load_ratings(&path, RatingsFormat::Csv, 0.0).unwrap();
        assert_eq!(loaded.interactions.n_users(), 2);
        assert_eq!(loaded.interactions.n_items(), 2);
        assert_eq!(loaded.interactions.nnz(), 3);
    }

    #[test]
    fn min_rating_threshold_filters() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.data");
        std::fs::write(&path, "1\t1\t5\t0\n1\t2\t2\t0\n2\t1\t3\t0\n").unwrap();
        let loaded = load_ratings(&path, RatingsFormat::MovielensTab, 3.0).unwrap();
        assert_eq!(loaded.interactions.nnz(), 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.data");
        std::fs::write(&path, "1\t1\t5\t0\n1\tbroken\n").unwrap();
        let err = load_ratings(&path, RatingsFormat::MovielensTab, 0.0).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn empty_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.data");
        std::fs::write(&path, "").unwrap();
        assert!(load_ratings(&path, RatingsFormat::MovielensTab, 0.0).is_err());
    }

    #[test]
    fn id_map_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.txt");
        let mut map = IdMap::default();
        map.intern("42");
        map.intern("7");
        map.save(&path).unwrap();
        let loaded = IdMap::load(&path).unwrap();
        assert_eq!(loaded.index("42"), Some(0));
        assert_eq!(loaded.index("7"), Some(1));
        assert_eq!(loaded.len(), 2);
    }
}
