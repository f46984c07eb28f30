use serde::{Deserialize, Serialize};

use super::codes::{hamming_words, CodeSet};
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;
use crate::par::{self, Execution};

/// Multi-hot label assignments, bit-packed per item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    n: usize,
    labels: usize,
    words: Vec<u64>,
}

impl LabelSet {
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<LabelSet> {
        LabelSet::with_width(rows, rows.first().map_or(0, Vec::len))
    }

    fn with_width(rows: &[Vec<bool>], labels: usize) -> Result<LabelSet> {
        if labels == 0 {
            return Err(Error::invalid("label set needs at least one label column"));
        }
        let wpi = labels.div_ceil(64);
        let mut words = vec![0u64; rows.len() * wpi];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != labels {
                return Err(Error::invalid(format!("label row {i} has {} columns", row.len())));
            }
            for (l, &on) in row.iter().enumerate() {
                if on {
                    words[i * wpi + l / 64] |= 1 << (l % 64);
                }
            }
        }
        Ok(LabelSet {
            n: rows.len(),
            labels,
            words,
        })
    }

    /// Interprets a 0/1 matrix.
    pub fn from_matrix(m: &DenseMatrix) -> Result<LabelSet> {
        let mut rows = Vec::with_capacity(m.rows());
        for i in 0..m.rows() {
            let mut row = Vec::with_capacity(m.cols());
            for (l, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::invalid(format!("label ({i}, {l}) is {v}, expected 0 or 1")));
                }
                row.push(v == 1.0);
            }
            rows.push(row);
        }
        LabelSet::with_width(&rows, m.cols())
    }

    pub fn one_hot(classes: &[usize], labels: usize) -> Result<LabelSet> {
        let rows: Vec<Vec<bool>> = classes
            .iter()
            .map(|&c| (0..labels).map(|l| l == c).collect())
            .collect();
        if classes.iter().any(|&c| c >= labels) {
            return Err(Error::invalid("class index out of range"));
        }
        LabelSet::with_width(&rows, labels)
    }

    pub fn to_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.labels, |i, l| if self.has(i, l) { 1.0 } else { 0.0 })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_labels(&self) -> usize {
        self.labels
    }

    fn wpi(&self) -> usize {
        self.labels.div_ceil(64)
    }

    fn item(&self, i: usize) -> &[u64] {
        let w = self.wpi();
        &self.words[i * w..(i + 1) * w]
    }

    pub fn has(&self, i: usize, label: usize) -> bool {
        self.item(i)[label / 64] >> (label % 64) & 1 == 1
    }

    pub fn label_count(&self, i: usize) -> u32 {
        self.item(i).iter().map(|w| w.count_ones()).sum()
    }

    /// True when item `i` of `self` and item `j` of `other` share a label.
    pub fn shares_label(&self, i: usize, other: &LabelSet, j: usize) -> bool {
        self.item(i).iter().zip(other.item(j)).any(|(a, b)| a & b != 0)
    }

    pub fn select(&self, indices: &[usize]) -> LabelSet {
        let w = self.wpi();
        let mut words = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            words.extend_from_slice(self.item(i));
        }
        LabelSet {
            n: indices.len(),
            labels: self.labels,
            words,
        }
    }
}

/// Hamming ranking and hash lookup results for one retrieval direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub map: f64,
    pub lookup_precision: f64,
    pub lookup_recall: f64,
    pub lookup_fmeasure: f64,
    pub radius: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LookupMetrics {
    pub precision: f64,
    pub recall: f64,
    pub fmeasure: f64,
}

/// Mean of precision@k over the relevant positions; 0 without relevant items.
///
/// Accumulated in double-double arithmetic, so short rankings such as
/// `[1, 0, 1]` give the correctly rounded value (5/6 here).
pub fn average_precision(relevance: &[bool]) -> f64 {
    let mut hits = 0usize;
    let (mut hi, mut lo) = (0.0f64, 0.0f64);
    for (k, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            let (q, r) = div_exact(hits as f64, (k + 1) as f64);
            let (s, e) = two_sum(hi, q);
            hi = s;
            lo += e + r;
        }
    }
    if hits == 0 {
        return 0.0;
    }
    let h = hits as f64;
    let q = hi / h;
    q + ((-q).mul_add(h, hi) + lo) / h
}

/// `a + b` as a rounded sum and its exact error.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `n / d` as a rounded quotient and the leading term of its error.
fn div_exact(n: f64, d: f64) -> (f64, f64) {
    let q = n / d;
    (q, (-q).mul_add(d, n) / d)
}

fn check_inputs(queries: &CodeSet, db: &CodeSet, q_labels: &LabelSet, db_labels: &LabelSet) -> Result<()> {
    if db.is_empty() {
        return Err(Error::invalid("empty retrieval database"));
    }
    if queries.bits() != db.bits() {
        return Err(Error::invalid(format!(
            "query codes have {} bits, database codes {}",
            queries.bits(),
            db.bits()
        )));
    }
    if q_labels.len() != queries.len() || db_labels.len() != db.len() {
        return Err(Error::invalid("labels are not aligned with codes"));
    }
    if q_labels.num_labels() != db_labels.num_labels() {
        return Err(Error::invalid("query and database label spaces differ"));
    }
    Ok(())
}

/// Database indices ordered by ascending distance, ties by ascending index.
/// Counting sort over the `bits + 1` possible distances.
fn rank_database(query: &[u64], db: &CodeSet) -> Vec<usize> {
    let dists: Vec<u32> = (0..db.len())
        .map(|j| hamming_words(query, db.item(j).words))
        .collect();
    let mut starts = vec![0usize; db.bits() + 2];
    for &d in &dists {
        starts[d as usize + 1] += 1;
    }
    for k in 1..starts.len() {
        starts[k] += starts[k - 1];
    }
    let mut order = vec![0usize; db.len()];
    for (j, &d) in dists.iter().enumerate() {
        let slot = &mut starts[d as usize];
        order[*slot] = j;
        *slot += 1;
    }
    order
}

/// Mean average precision of Hamming ranking over the full database.
pub fn map_eval(queries: &CodeSet, db: &CodeSet, q_labels: &LabelSet, db_labels: &LabelSet) -> Result<f64> {
    map_eval_with(queries, db, q_labels, db_labels, Execution::default())
}

pub fn map_eval_with(
    queries: &CodeSet,
    db: &CodeSet,
    q_labels: &LabelSet,
    db_labels: &LabelSet,
    exec: Execution,
) -> Result<f64> {
    check_inputs(queries, db, q_labels, db_labels)?;
    if queries.is_empty() {
        return Ok(0.0);
    }
    let aps = par::map_indexed(exec, queries.len(), |q| {
        let relevance: Vec<bool> = rank_database(queries.item(q).words, db)
            .into_iter()
            .map(|j| q_labels.shares_label(q, db_labels, j))
            .collect();
        average_precision(&relevance)
    });
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Precision, recall and F-measure of retrieving every database item within
/// `radius` of the query. An empty ball scores precision 0; F is computed from
/// the query-averaged precision and recall.
pub fn hash_lookup(
    queries: &CodeSet,
    db: &CodeSet,
    q_labels: &LabelSet,
    db_labels: &LabelSet,
    radius: u32,
) -> Result<LookupMetrics> {
    hash_lookup_with(queries, db, q_labels, db_labels, radius, Execution::default())
}

pub fn hash_lookup_with(
    queries: &CodeSet,
    db: &CodeSet,
    q_labels: &LabelSet,
    db_labels: &LabelSet,
    radius: u32,
    exec: Execution,
) -> Result<LookupMetrics> {
    check_inputs(queries, db, q_labels, db_labels)?;
    if queries.is_empty() {
        return Ok(LookupMetrics {
            precision: 0.0,
            recall: 0.0,
            fmeasure: 0.0,
        });
    }
    let per_query = par::map_indexed(exec, queries.len(), |q| {
        let qw = queries.item(q).words;
        let (mut retrieved, mut hits, mut relevant) = (0usize, 0usize, 0usize);
        for j in 0..db.len() {
            let rel = q_labels.shares_label(q, db_labels, j);
            let inside = hamming_words(qw, db.item(j).words) <= radius;
            relevant += rel as usize;
            retrieved += inside as usize;
            hits += (rel && inside) as usize;
        }
        let p = if retrieved == 0 { 0.0 } else { hits as f64 / retrieved as f64 };
        let r = if relevant == 0 { 0.0 } else { hits as f64 / relevant as f64 };
        (p, r)
    });
    let nq = per_query.len() as f64;
    let precision = per_query.iter().map(|x| x.0).sum::<f64>() / nq;
    let recall = per_query.iter().map(|x| x.1).sum::<f64>() / nq;
    Ok(LookupMetrics {
        precision,
        recall,
        fmeasure: f_measure(precision, recall),
    })
}

pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// MAP and radius lookup together.
pub fn evaluate(
    queries: &CodeSet,
    db: &CodeSet,
    q_labels: &LabelSet,
    db_labels: &LabelSet,
    radius: u32,
) -> Result<RetrievalMetrics> {
    let map = map_eval(queries, db, q_labels, db_labels)?;
    let lookup = hash_lookup(queries, db, q_labels, db_labels, radius)?;
    Ok(RetrievalMetrics {
        map,
        lookup_precision: lookup.precision,
        lookup_recall: lookup.recall,
        lookup_fmeasure: lookup.fmeasure,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;
    use proptest::prelude::*;

    fn codes(rows: &[&[f64]]) -> CodeSet {
        let m = DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        CodeSet::pack(&m).unwrap()
    }

    #[test]
    fn average_precision_hand_values() {
        assert_eq!(average_precision(&[true, true, true]), 1.0);
        assert_eq!(average_precision(&[true, false, true]), 5.0 / 6.0);
        assert_eq!(average_precision(&[false, false, true]), 1.0 / 3.0);
        assert_eq!(average_precision(&[false, true, false, true]), 0.5);
        assert_eq!(average_precision(&[true, false, false, true, true]), 0.7);
        assert_eq!(average_precision(&[false, false, false]), 0.0);
        assert_eq!(average_precision(&[]), 0.0);
    }

    #[test]
    fn map_reduces_to_average_precision() {
        // distances from the all-plus query: 0, 1, 2 -> relevance [1, 0, 1]
        let q = codes(&[&[1.0, 1.0, 1.0, 1.0]]);
        let db = codes(&[&[1.0, 1.0, -1.0, -1.0], &[1.0, 1.0, 1.0, -1.0], &[1.0, 1.0, 1.0, 1.0]]);
        let ql = LabelSet::one_hot(&[0], 2).unwrap();
        let dl = LabelSet::one_hot(&[0, 1, 0], 2).unwrap();
        let map = map_eval(&q, &db, &ql, &dl).unwrap();
        assert_eq!(map, 5.0 / 6.0);
    }

    #[test]
    fn ties_break_by_database_index() {
        let q = codes(&[&[1.0, 1.0]]);
        let db = codes(&[&[-1.0, 1.0], &[1.0, -1.0], &[1.0, 1.0]]);
        assert_eq!(rank_database(q.item(0).words, &db), vec![2, 0, 1]);
    }

    #[test]
    fn identical_codes_all_relevant() {
        let c = codes(&[&[1.0, -1.0, 1.0], &[-1.0, -1.0, 1.0]]);
        let l = LabelSet::one_hot(&[0, 0], 1).unwrap();
        assert_eq!(map_eval(&c, &c, &l, &l).unwrap(), 1.0);
    }

    #[test]
    fn empty_database_is_error() {
        let q = codes(&[&[1.0]]);
        let db = CodeSet::from_words(1, 0, vec![]).unwrap();
        let ql = LabelSet::one_hot(&[0], 1).unwrap();
        let dl = LabelSet::one_hot(&[], 1).unwrap();
        assert!(map_eval(&q, &db, &ql, &dl).is_err());
        assert!(hash_lookup(&q, &db, &ql, &dl, 2).is_err());
    }

    #[test]
    fn lookup_hand_enumeration() {
        // distances 0..4 from the query, relevance {1,1,0,1,0}
        let q = codes(&[&[1.0, 1.0, 1.0, 1.0]]);
        let db = codes(&[
            &[1.0, 1.0, 1.0, 1.0],
            &[-1.0, 1.0, 1.0, 1.0],
            &[-1.0, -1.0, 1.0, 1.0],
            &[-1.0, -1.0, -1.0, 1.0],
            &[-1.0, -1.0, -1.0, -1.0],
        ]);
        let ql = LabelSet::one_hot(&[0], 2).unwrap();
        let dl = LabelSet::one_hot(&[0, 0, 1, 0, 1], 2).unwrap();
        let m = hash_lookup(&q, &db, &ql, &dl, 2).unwrap();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.fmeasure - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn lookup_exact_duplicate_and_empty_ball() {
        let q = codes(&[&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0], &[-1.0, -1.0, -1.0, -1.0, -1.0, -1.0]]);
        let db = codes(&[&[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]]);
        let ql = LabelSet::one_hot(&[0, 0], 1).unwrap();
        let dl = LabelSet::one_hot(&[0], 1).unwrap();
        let only_first = hash_lookup(&q.clone(), &db, &ql, &dl, 2).unwrap();
        // query 0: P = R = 1; query 1: empty ball, P = R = 0
        assert_eq!(only_first.precision, 0.5);
        assert_eq!(only_first.recall, 0.5);
        assert_eq!(f_measure(0.0, 0.0), 0.0);
    }

    #[test]
    fn multi_label_relevance() {
        let l = LabelSet::from_rows(&[vec![true, false, true], vec![false, false, true], vec![false, true, false]]).unwrap();
        assert!(l.shares_label(0, &l, 1));
        assert!(!l.shares_label(0, &l, 2));
        assert_eq!(l.label_count(0), 2);
        assert_eq!(LabelSet::from_matrix(&l.to_matrix()).unwrap(), l);
    }

    #[test]
    fn random_codes_recover_class_prior() {
        let mut rng = RngState::new(2024);
        let mk = |n: usize, rng: &mut RngState| {
            let m = DenseMatrix::from_fn(n, 32, |_, _| if rng.unit() < 0.5 { 1.0 } else { -1.0 });
            CodeSet::pack(&m).unwrap()
        };
        let q = mk(500, &mut rng);
        let db = mk(1000, &mut rng);
        let ql = LabelSet::one_hot(&(0..500).map(|i| i % 2).collect::<Vec<_>>(), 2).unwrap();
        let dl = LabelSet::one_hot(&(0..1000).map(|i| i % 2).collect::<Vec<_>>(), 2).unwrap();
        let map = map_eval(&q, &db, &ql, &dl).unwrap();
        assert!((map - 0.5).abs() < 0.05, "map {map}");
    }

    #[test]
    fn sequential_matches_parallel() {
        let mut rng = RngState::new(8);
        let m = DenseMatrix::from_fn(60, 16, |_, _| if rng.unit() < 0.5 { 1.0 } else { -1.0 });
        let c = CodeSet::pack(&m).unwrap();
        let l = LabelSet::one_hot(&(0..60).map(|i| i % 3).collect::<Vec<_>>(), 3).unwrap();
        let a = map_eval_with(&c, &c, &l, &l, Execution::Sequential).unwrap();
        let b = map_eval_with(&c, &c, &l, &l, Execution::Parallel).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        let a = hash_lookup_with(&c, &c, &l, &l, 3, Execution::Sequential).unwrap();
        let b = hash_lookup_with(&c, &c, &l, &l, 3, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn map_in_unit_interval(seed in any::<u64>(), n in 1usize..40) {
            let mut rng = RngState::new(seed);
            let m = DenseMatrix::from_fn(n, 12, |_, _| if rng.unit() < 0.5 { 1.0 } else { -1.0 });
            let c = CodeSet::pack(&m).unwrap();
            let classes: Vec<usize> = (0..n).map(|_| rng.index(3)).collect();
            let l = LabelSet::one_hot(&classes, 3).unwrap();
            let map = map_eval(&c, &c, &l, &l).unwrap();
            prop_assert!((0.0..=1.0).contains(&map));
            let again = map_eval(&c, &c, &l, &l).unwrap();
            prop_assert_eq!(map.to_bits(), again.to_bits());
        }

        #[test]
        fn relevant_first_scores_one(pattern in prop::collection::vec(any::<bool>(), 1..50)) {
            let mut sorted = pattern.clone();
            sorted.sort_by_key(|&r| !r);
            let ap = average_precision(&sorted);
            if pattern.iter().any(|&r| r) {
                prop_assert_eq!(ap, 1.0);
            } else {
                prop_assert_eq!(ap, 0.0);
            }
        }
    }
}
