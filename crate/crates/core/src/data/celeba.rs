//! CelebA-style attribute lists and class-balanced splits.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Binary attribute table. Values are 1 (present) or 0 (absent).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttributeIndex {
    pub names: Vec<String>,
    pub ids: Vec<String>,
    rows: Vec<Vec<u8>>,
}

impl AttributeIndex {
    pub fn new(names: Vec<String>, ids: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self> {
        if ids.len() != rows.len() {
            return Err(Error::invalid(format!("{} ids for {} rows", ids.len(), rows.len())));
        }
        for (id, row) in ids.iter().zip(&rows) {
            if row.len() != names.len() {
                return Err(Error::invalid(format!(
                    "row {id} has {} values for {} attributes",
                    row.len(),
                    names.len()
                )));
            }
            if row.iter().any(|&v| v > 1) {
                return Err(Error::invalid(format!("row {id} has a value outside {{0, 1}}")));
            }
        }
        Ok(AttributeIndex { names, ids, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.rows[i]
    }

    /// Position of an attribute, matched case-insensitively.
    pub fn position(&self, attribute: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(attribute))
            .ok_or_else(|| Error::invalid(format!("unknown attribute {attribute:?}")))
    }

    pub fn column(&self, attribute: &str) -> Result<Vec<u8>> {
        let k = self.position(attribute)?;
        Ok(self.rows.iter().map(|r| r[k]).collect())
    }

    /// CelebA text layout: count line, names line, then `id v1 v2 ...` with values ±1.
    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n{}\n", self.len(), self.names.join(" "));
        for (id, row) in self.ids.iter().zip(&self.rows) {
            s.push_str(id);
            for &v in row {
                s.push_str(if v == 1 { " 1" } else { " -1" });
            }
            s.push('\n');
        }
        s
    }

    /// Parses the CelebA text layout; `origin` names the source in errors.
    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, count_line) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let count: usize = count_line
            .trim()
            .parse()
            .map_err(|_| err(1, format!("expected a row count, found {:?}", count_line.trim())))?;
        let (_, names_line) = lines.next().ok_or_else(|| err(2, "missing attribute names line".into()))?;
        let names: Vec<String> = names_line.split_whitespace().map(str::to_string).collect();
        if names.is_empty() {
            return Err(err(2, "no attribute names".into()));
        }
        let mut ids = Vec::with_capacity(count);
        let mut rows = Vec::with_capacity(count);
        for (no, line) in lines {
            let mut fields = line.split_whitespace();
            let Some(id) = fields.next() else { continue };
            let mut row = Vec::with_capacity(names.len());
            for f in fields {
                row.push(match f {
                    "1" | "+1" => 1,
                    "-1" => 0,
                    other => return Err(err(no, format!("value {other:?} is not 1 or -1"))),
                });
            }
            if row.len() != names.len() {
                return Err(err(no, format!("expected {} values, found {}", names.len(), row.len())));
            }
            ids.push(id.to_string());
            rows.push(row);
        }
        if rows.len() != count {
            let last = text.lines().count();
            return Err(err(last, format!("header announces {count} rows, found {}", rows.len())));
        }
        Ok(AttributeIndex { names, ids, rows })
    }
}

pub fn parse_attribute_index(path: &Path) -> Result<AttributeIndex> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Dataset(format!("cannot read {}: {e}", path.display())))?;
    AttributeIndex::from_text(&text, &path.display().to_string())
}

/// Row indices split by the value of `attribute`: `(negatives, positives)`.
fn partition(index: &AttributeIndex, attribute: &str, skip: &HashSet<&str>) -> Result<(Vec<usize>, Vec<usize>)> {
    let col = index.column(attribute)?;
    let mut neg = Vec::new();
    let mut pos = Vec::new();
    for (i, &v) in col.iter().enumerate() {
        if skip.contains(index.ids[i].as_str()) {
            continue;
        }
        if v == 1 {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    Ok((neg, pos))
}

fn ids_of(index: &AttributeIndex, rows: &[usize]) -> Vec<String> {
    rows.iter().map(|&i| index.ids[i].clone()).collect()
}

/// Drops `test_ids`, keeps the whole minority class and an equally sized
/// seeded sample of the majority class. Returns `(neg_ids, pos_ids)`.
pub fn make_balanced_training_split(
    index: &AttributeIndex,
    attribute: &str,
    test_ids: &[String],
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    let skip: HashSet<&str> = test_ids.iter().map(String::as_str).collect();
    let (mut neg, mut pos) = partition(index, attribute, &skip)?;
    let minority = neg.len().min(pos.len());
    if minority == 0 {
        return Err(Error::Dataset(format!(
            "attribute {attribute} has an empty class after removing test images ({} negative, {} positive)",
            neg.len(),
            pos.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let majority = if neg.len() > pos.len() { &mut neg } else { &mut pos };
    if majority.len() > minority {
        majority.shuffle(&mut rng);
        majority.truncate(minority);
        majority.sort_unstable();
    }
    Ok((ids_of(index, &neg), ids_of(index, &pos)))
}

/// Seeded draw of `n_per_class` images from each class: `(neg_ids, pos_ids)`.
pub fn make_test_split(
    index: &AttributeIndex,
    attribute: &str,
    n_per_class: usize,
    seed: u64,
) -> Result<(Vec<String>, Vec<String>)> {
    let (mut neg, mut pos) = partition(index, attribute, &HashSet::new())?;
    if neg.len() < n_per_class || pos.len() < n_per_class {
        return Err(Error::Dataset(format!(
            "attribute {attribute}: need {n_per_class} images per class, have {} negative and {} positive",
            neg.len(),
            pos.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for class in [&mut neg, &mut pos] {
        class.shuffle(&mut rng);
        class.truncate(n_per_class);
        class.sort_unstable();
    }
    Ok((ids_of(index, &neg), ids_of(index, &pos)))
}

/// Pearson correlation of two binary attribute columns.
pub fn attribute_correlation(index: &AttributeIndex, attr_a: &str, attr_b: &str) -> Result<f64> {
    let a = index.column(attr_a)?;
    let b = index.column(attr_b)?;
    let n = a.len() as f64;
    if a.is_empty() {
        return Err(Error::Dataset("empty attribute index".into()));
    }
    // Integer sufficient statistics keep the result exact up to the final division.
    let (mut sa, mut sb, mut sab) = (0u64, 0u64, 0u64);
    for (&x, &y) in a.iter().zip(&b) {
        sa += x as u64;
        sb += y as u64;
        sab += (x & y) as u64;
    }
    let n_int = a.len() as u64;
    for (name, s) in [(attr_a, sa), (attr_b, sb)] {
        if s == 0 || s == n_int {
            return Err(Error::Dataset(format!("attribute {name} is constant; correlation is undefined")));
        }
    }
    let cov = n * sab as f64 - (sa as f64) * (sb as f64);
    let va = (sa as f64) * (n - sa as f64);
    let vb = (sb as f64) * (n - sb as f64);
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture(cols: &[Vec<u8>]) -> AttributeIndex {
        let n = cols[0].len();
        let names = (0..cols.len()).map(|k| format!("a{k}")).collect();
        let ids = (0..n).map(|i| format!("{i:06}.jpg")).collect();
        let rows = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        AttributeIndex::new(names, ids, rows).unwrap()
    }

    fn brute_pearson(a: &[u8], b: &[u8]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
        let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (&x, &y) in a.iter().zip(b) {
            let (dx, dy) = (x as f64 - ma, y as f64 - mb);
            cov += dx * dy;
            va += dx * dx;
            vb += dy * dy;
        }
        cov / (va * vb).sqrt()
    }

    #[test]
    fn two_row_fixture() {
        let idx = AttributeIndex::from_text("2\nA B\nimg1 1 -1\nimg2 -1 1\n", "t").unwrap();
        assert_eq!(idx.row(0), &[1, 0]);
        assert_eq!(idx.row(1), &[0, 1]);
        assert_eq!(idx.ids, vec!["img1", "img2"]);
    }

    #[test]
    fn zero_value_names_line() {
        let err = AttributeIndex::from_text("2\nA B\nimg1 1 -1\nimg2 0 1\n", "list.txt").unwrap_err();
        match err {
            Error::Parse { line, path, .. } => {
                assert_eq!(line, 4);
                assert_eq!(path, "list.txt");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn count_mismatch() {
        let err = AttributeIndex::from_text("3\nA B\nimg1 1 -1\nimg2 -1 1\n", "t").unwrap_err();
        assert!(err.to_string().contains("3 rows"), "{err}");
    }

    #[test]
    fn short_row_rejected() {
        assert!(AttributeIndex::from_text("1\nA B\nimg1 1\n", "t").is_err());
    }

    #[test]
    fn balancing_300_700() {
        let col: Vec<u8> = (0..1000).map(|i| (i < 300) as u8).collect();
        let idx = fixture(&[col]);
        let (neg, pos) = make_balanced_training_split(&idx, "a0", &[], 3).unwrap();
        assert_eq!((neg.len(), pos.len()), (300, 300));
    }

    #[test]
    fn balanced_input_kept() {
        let col: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        let idx = fixture(&[col]);
        let (neg, pos) = make_balanced_training_split(&idx, "a0", &[], 0).unwrap();
        assert_eq!(neg.len() + pos.len(), 10);
    }

    #[test]
    fn no_positives_rejected() {
        let idx = fixture(&[vec![0; 8]]);
        assert!(make_balanced_training_split(&idx, "a0", &[], 0).is_err());
    }

    #[test]
    fn test_split_sizes() {
        let idx = fixture(&[vec![0, 1, 0, 1]]);
        let (neg, pos) = make_test_split(&idx, "a0", 2, 0).unwrap();
        assert_eq!((neg.len(), pos.len()), (2, 2));
        assert!(make_test_split(&idx, "a0", 3, 0).is_err());
        assert_eq!(make_test_split(&idx, "a0", 1, 9).unwrap(), make_test_split(&idx, "a0", 1, 9).unwrap());
    }

    #[test]
    fn correlation_extremes() {
        let a = vec![0, 1, 1, 0, 1];
        let b: Vec<u8> = a.iter().map(|v| 1 - v).collect();
        let idx = fixture(&[a.clone(), a, b]);
        assert!((attribute_correlation(&idx, "a0", "a1").unwrap() - 1.0).abs() < 1e-15);
        assert!((attribute_correlation(&idx, "a0", "a2").unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_column_rejected() {
        let idx = fixture(&[vec![1, 1, 1], vec![0, 1, 0]]);
        assert!(attribute_correlation(&idx, "a0", "a1").is_err());
    }

    fn column(n: usize) -> impl Strategy<Value = Vec<u8>> {
        proptest::collection::vec(0u8..2, n)
    }

    proptest! {
        #[test]
        fn text_round_trip(cols in (1usize..40).prop_flat_map(|n| proptest::collection::vec(column(n), 1..6))) {
            let idx = fixture(&cols);
            let back = AttributeIndex::from_text(&idx.to_text(), "t").unwrap();
            prop_assert_eq!(back, idx);
        }

        #[test]
        fn pearson_matches_brute_force((a, b) in (2usize..1000).prop_flat_map(|n| (column(n), column(n)))) {
            let constant = |c: &[u8]| c.iter().all(|&v| v == c[0]);
            prop_assume!(!constant(&a) && !constant(&b));
            let idx = fixture(&[a.clone(), b.clone()]);
            let r = attribute_correlation(&idx, "a0", "a1").unwrap();
            prop_assert!((r - brute_pearson(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn balancing_is_exact_and_excludes_tests(col in column(200), test_mask in column(200), seed in 0u64..100) {
            let idx = fixture(&[col]);
            let test_ids: Vec<String> = idx.ids.iter().zip(&test_mask).filter(|(_, &m)| m == 1).map(|(i, _)| i.clone()).collect();
            match make_balanced_training_split(&idx, "a0", &test_ids, seed) {
                Ok((neg, pos)) => {
                    prop_assert_eq!(neg.len(), pos.len());
                    let tests: HashSet<&String> = test_ids.iter().collect();
                    prop_assert!(neg.iter().chain(&pos).all(|i| !tests.contains(i)));
                }
                Err(_) => {
                    let (n, p) = partition(&idx, "a0", &test_ids.iter().map(String::as_str).collect()).unwrap();
                    prop_assert!(n.is_empty() || p.is_empty());
                }
            }
        }
    }
}
