//! Dataset model: query groups with graded relevance, LETOR/SVMlight ingestion,
//! synthetic data generation, and ideal-DCG precomputation.
//!
//! A dataset is a list of queries; each query carries `N_q` items with feature
//! rows and integer relevance labels `y >= 0`. Gains are fixed to `2^y - 1`, so
//! an item is relevant iff its gain is positive. Training operates on the flat
//! set of relevant (query, item) pairs, while evaluation walks every query.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One query's items: a dense `N_q x d_feat` feature matrix, relevance labels,
/// and quantities derived from them (gains, the relevant index set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryGroup {
    pub query_id: u64,
    features: Vec<f64>,
    d_feat: usize,
    pub relevances: Vec<u32>,
    /// `gains[i] = 2^relevances[i] - 1`; zero exactly for irrelevant items.
    pub gains: Vec<f64>,
    /// Ascending indices of items with positive relevance (the set S_q+).
    pub relevant: Vec<usize>,
}

impl QueryGroup {
    /// Builds a group from per-item feature rows. All rows must share one width
    /// and there must be at least one item.
    pub fn new(query_id: u64, rows: Vec<Vec<f64>>, relevances: Vec<u32>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Config(format!("query {query_id} has no items")));
        }
        if rows.len() != relevances.len() {
            return Err(Error::Dimension {
                expected: rows.len(),
                got: relevances.len(),
            });
        }
        let d_feat = rows[0].len();
        let mut features = Vec::with_capacity(rows.len() * d_feat);
        for row in &rows {
            if row.len() != d_feat {
                return Err(Error::Dimension {
                    expected: d_feat,
                    got: row.len(),
                });
            }
            features.extend_from_slice(row);
        }
        let gains: Vec<f64> = relevances
            .iter()
            .map(|&y| (y as f64).exp2() - 1.0)
            .collect();
        let relevant: Vec<usize> = relevances
            .iter()
            .enumerate()
            .filter(|(_, &y)| y > 0)
            .map(|(i, _)| i)
            .collect();
        Ok(QueryGroup {
            query_id,
            features,
            d_feat,
            relevances,
            gains,
            relevant,
        })
    }

    pub fn n_items(&self) -> usize {
        self.relevances.len()
    }

    pub fn d_feat(&self) -> usize {
        self.d_feat
    }

    pub fn n_relevant(&self) -> usize {
        self.relevant.len()
    }

    pub fn has_relevant(&self) -> bool {
        !self.relevant.is_empty()
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d_feat..(i + 1) * self.d_feat]
    }
}

/// An ordered collection of query groups plus the flat index of relevant pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub groups: Vec<QueryGroup>,
    /// Every relevant `(query_id, item_index)` pair exactly once, in group
    /// order then ascending item index (the set S; |S| = sum of N_q+).
    pub pair_index: Vec<(u64, usize)>,
    qid_to_group: HashMap<u64, usize>,
}

impl Dataset {
    /// Assembles a dataset; queries with zero relevant items are retained (they
    /// still evaluate) but contribute nothing to `pair_index`.
    pub fn new(groups: Vec<QueryGroup>) -> Result<Self> {
        let mut qid_to_group = HashMap::new();
        let mut pair_index = Vec::new();
        for (gi, g) in groups.iter().enumerate() {
            if qid_to_group.insert(g.query_id, gi).is_some() {
                return Err(Error::Config(format!(
                    "duplicate query id {} in dataset",
                    g.query_id
                )));
            }
            for &i in &g.relevant {
                pair_index.push((g.query_id, i));
            }
        }
        Ok(Dataset {
            groups,
            pair_index,
            qid_to_group,
        })
    }

    pub fn group_of(&self, query_id: u64) -> Option<&QueryGroup> {
        self.qid_to_group.get(&query_id).map(|&gi| &self.groups[gi])
    }

    pub fn n_pairs(&self) -> usize {
        self.pair_index.len()
    }

    pub fn d_feat(&self) -> usize {
        self.groups.first().map(|g| g.d_feat()).unwrap_or(0)
    }

    /// Query ids with at least one relevant item, in group order.
    pub fn trainable_query_ids(&self) -> Vec<u64> {
        self.groups
            .iter()
            .filter(|g| g.has_relevant())
            .map(|g| g.query_id)
            .collect()
    }
}

/// Ideal DCG: gains sorted descending, position `i` (1-based) discounted by
/// `log2(i + 1)`, summed over the top `k` positions (all `N_q` when `k` is
/// absent). Returns 0 when every gain is zero.
pub fn ideal_dcg(group: &QueryGroup, k: Option<usize>) -> f64 {
    let n = group.n_items();
    let m = k.unwrap_or(n);
    assert!(m >= 1 && m <= n, "ideal_dcg: k={m} out of range 1..={n}");
    let mut sorted = group.gains.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sorted
        .iter()
        .take(m)
        .enumerate()
        .map(|(i, g)| g / ((i + 2) as f64).log2())
        .sum()
}

/// Precomputed ideal DCG values: `Z_q` for every query and `Z_q^K` for each
/// requested cutoff (cutoffs above `N_q` fall back to the full `Z_q`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdealDcgTable {
    z: HashMap<u64, f64>,
    z_at_k: HashMap<(u64, usize), f64>,
}

impl IdealDcgTable {
    pub fn build(dataset: &Dataset, ks: &[usize]) -> Self {
        let mut z = HashMap::new();
        let mut z_at_k = HashMap::new();
        for g in &dataset.groups {
            z.insert(g.query_id, ideal_dcg(g, None));
            for &k in ks {
                let m = k.min(g.n_items()).max(1);
                z_at_k.insert((g.query_id, k), ideal_dcg(g, Some(m)));
            }
        }
        IdealDcgTable { z, z_at_k }
    }

    pub fn z(&self, query_id: u64) -> Option<f64> {
        self.z.get(&query_id).copied()
    }

    pub fn z_at_k(&self, query_id: u64, k: usize) -> Option<f64> {
        self.z_at_k.get(&(query_id, k)).copied()
    }
}

/// Parses LETOR/SVMlight text: each nonempty line is
/// `<rel> qid:<id> <fid>:<val> ...` with 1-based feature ids. Lines sharing a
/// qid merge into one group (in order of first encounter); missing feature ids
/// read as 0.0. Trailing `#` comments are ignored.
pub fn parse_letor(text: &str) -> Result<Dataset> {
    struct Row {
        rel: u32,
        feats: Vec<(usize, f64)>,
    }
    let mut order: Vec<u64> = Vec::new();
    let mut by_qid: HashMap<u64, Vec<Row>> = HashMap::new();
    let mut d_feat = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let rel_tok = tokens.next().unwrap();
        let rel: u32 = rel_tok.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("relevance must be a non-negative integer, got {rel_tok:?}"),
        })?;
        let qid_tok = tokens.next().ok_or_else(|| Error::Parse {
            line,
            msg: "missing qid field".into(),
        })?;
        let qid: u64 = qid_tok
            .strip_prefix("qid:")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected qid:<integer>, got {qid_tok:?}"),
            })?;
        let mut feats = Vec::new();
        for tok in tokens {
            let (fid_s, val_s) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected <fid>:<val>, got {tok:?}"),
            })?;
            let fid: usize = fid_s.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("feature id must be an integer, got {fid_s:?}"),
            })?;
            if fid == 0 {
                return Err(Error::Parse {
                    line,
                    msg: "feature ids are 1-based".into(),
                });
            }
            let val: f64 = val_s.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("feature value must be a float, got {val_s:?}"),
            })?;
            d_feat = d_feat.max(fid);
            feats.push((fid, val));
        }
        if !by_qid.contains_key(&qid) {
            order.push(qid);
        }
        by_qid.entry(qid).or_default().push(Row { rel, feats });
    }

    let mut groups = Vec::with_capacity(order.len());
    for qid in order {
        let rows = by_qid.remove(&qid).unwrap();
        let mut feature_rows = Vec::with_capacity(rows.len());
        let mut relevances = Vec::with_capacity(rows.len());
        for row in rows {
            let mut dense = vec![0.0; d_feat];
            for (fid, val) in row.feats {
                dense[fid - 1] = val;
            }
            feature_rows.push(dense);
            relevances.push(row.rel);
        }
        groups.push(QueryGroup::new(qid, feature_rows, relevances)?);
    }
    Dataset::new(groups)
}

/// Writes a dataset back to LETOR text. Every feature is written (including
/// zeros) so the feature width survives a round trip; float formatting uses the
/// shortest representation that parses back to the identical value.
pub fn serialize_letor(dataset: &Dataset) -> String {
    let mut out = String::new();
    for g in &dataset.groups {
        for i in 0..g.n_items() {
            out.push_str(&format!("{} qid:{}", g.relevances[i], g.query_id));
            for (j, v) in g.feature_row(i).iter().enumerate() {
                out.push_str(&format!(" {}:{}", j + 1, v));
            }
            out.push('\n');
        }
    }
    out
}

pub fn load_letor(path: &Path) -> Result<Dataset> {
    parse_letor(&std::fs::read_to_string(path)?)
}

pub fn save_letor(dataset: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, serialize_letor(dataset))?;
    Ok(())
}

/// Replaces every feature column by its z-score over all items of all queries.
/// Columns with (near-)zero variance are left centered only.
pub fn zscore(dataset: &Dataset) -> Result<Dataset> {
    let d = dataset.d_feat();
    let mut mean = vec![0.0; d];
    let mut count = 0usize;
    for g in &dataset.groups {
        for i in 0..g.n_items() {
            for (j, v) in g.feature_row(i).iter().enumerate() {
                mean[j] += v;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Ok(dataset.clone());
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    let mut var = vec![0.0; d];
    for g in &dataset.groups {
        for i in 0..g.n_items() {
            for (j, v) in g.feature_row(i).iter().enumerate() {
                var[j] += (v - mean[j]) * (v - mean[j]);
            }
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / count as f64).sqrt()).collect();
    let mut groups = Vec::with_capacity(dataset.groups.len());
    for g in &dataset.groups {
        let rows: Vec<Vec<f64>> = (0..g.n_items())
            .map(|i| {
                g.feature_row(i)
                    .iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let centered = v - mean[j];
                        if std[j] > 1e-12 {
                            centered / std[j]
                        } else {
                            centered
                        }
                    })
                    .collect()
            })
            .collect();
        groups.push(QueryGroup::new(g.query_id, rows, g.relevances.clone())?);
    }
    Dataset::new(groups)
}

/// Generates a synthetic ranking dataset. Features are i.i.d. standard normal;
/// a planted unit-norm linear teacher scores every item and relevance grades
/// are assigned by within-query score quantiles (roughly the top 30% of items
/// are relevant, split evenly over the positive grades, so every query has at
/// least one relevant item and a linear scorer can fit the task).
///
/// `relevance_levels` counts the distinct grades including zero; values below
/// 2 are treated as 2 so relevant items exist. Deterministic given `seed`.
pub fn synth_generate(
    n_queries: usize,
    n_items: usize,
    d_feat: usize,
    relevance_levels: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_queries == 0 || n_items == 0 || d_feat == 0 {
        return Err(Error::Config(
            "synth_generate: all counts must be >= 1".into(),
        ));
    }
    let levels = relevance_levels.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut teacher: Vec<f64> = (0..d_feat).map(|_| standard_normal(&mut rng)).collect();
    let norm = teacher.iter().map(|w| w * w).sum::<f64>().sqrt();
    if norm > 1e-12 {
        for w in &mut teacher {
            *w /= norm;
        }
    } else {
        teacher[0] = 1.0;
    }

    let n_rel = ((0.3 * n_items as f64).round() as usize).clamp(1, n_items);
    let positive_grades = levels - 1;
    let mut groups = Vec::with_capacity(n_queries);
    for q in 0..n_queries {
        let rows: Vec<Vec<f64>> = (0..n_items)
            .map(|_| (0..d_feat).map(|_| standard_normal(&mut rng)).collect())
            .collect();
        let scores: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(&teacher).map(|(x, w)| x * w).sum())
            .collect();
        let mut order: Vec<usize> = (0..n_items).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        let mut relevances = vec![0u32; n_items];
        for (pos, &item) in order.iter().take(n_rel).enumerate() {
            let grade = positive_grades - pos * positive_grades / n_rel;
            relevances[item] = grade.max(1) as u32;
        }
        groups.push(QueryGroup::new(q as u64 + 1, rows, relevances)?);
    }
    Dataset::new(groups)
}

/// Box-Muller standard normal draw from a uniform RNG.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_single_line() {
        let ds = parse_letor("1 qid:7 1:0.5 3:2.0").unwrap();
        assert_eq!(ds.groups.len(), 1);
        let g = &ds.groups[0];
        assert_eq!(g.query_id, 7);
        assert_eq!(g.feature_row(0), &[0.5, 0.0, 2.0]);
        assert_eq!(g.relevances, vec![1]);
        assert_eq!(ds.pair_index, vec![(7, 0)]);
    }

    #[test]
    fn parse_empty_input() {
        let ds = parse_letor("").unwrap();
        assert!(ds.groups.is_empty());
        assert!(ds.pair_index.is_empty());
    }

    #[test]
    fn parse_merges_interleaved_qids() {
        // Reference parse: qid:1 lines merge into one group even when a qid:2
        // line sits between them; groups keep first-encounter order.
        let text = "1 qid:1 1:1.0\n1 qid:2 1:2.0\n2 qid:1 2:3.0\n";
        let ds = parse_letor(text).unwrap();
        assert_eq!(ds.groups.len(), 2);
        assert_eq!(ds.groups[0].query_id, 1);
        assert_eq!(ds.groups[0].n_items(), 2);
        assert_eq!(ds.groups[0].feature_row(0), &[1.0, 0.0]);
        assert_eq!(ds.groups[0].feature_row(1), &[0.0, 3.0]);
        assert_eq!(ds.groups[0].relevances, vec![1, 2]);
        assert_eq!(ds.groups[1].query_id, 2);
        assert_eq!(ds.groups[1].feature_row(0), &[2.0, 0.0]);
        assert_eq!(ds.pair_index, vec![(1, 0), (1, 1), (2, 0)]);
    }

    #[test]
    fn parse_rejects_bad_relevance() {
        let err = parse_letor("x qid:1 1:1.0").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_malformed_feature() {
        assert!(parse_letor("1 qid:1 nonsense").is_err());
        assert!(parse_letor("1 qid:1 0:1.0").is_err());
        assert!(parse_letor("1 1:1.0").is_err());
    }

    #[test]
    fn zero_relevant_queries_are_flagged_but_kept() {
        let ds = parse_letor("0 qid:1 1:1.0\n1 qid:2 1:2.0").unwrap();
        assert_eq!(ds.groups.len(), 2);
        assert!(!ds.groups[0].has_relevant());
        assert_eq!(ds.pair_index, vec![(2, 0)]);
        assert_eq!(ds.trainable_query_ids(), vec![2]);
    }

    #[test]
    fn gains_follow_two_power_rule() {
        let g = QueryGroup::new(1, vec![vec![0.0]; 3], vec![0, 1, 3]).unwrap();
        assert_eq!(g.gains, vec![0.0, 1.0, 7.0]);
        assert_eq!(g.relevant, vec![1, 2]);
    }

    #[test]
    fn ideal_dcg_single_item() {
        let g = QueryGroup::new(1, vec![vec![0.0]], vec![1]).unwrap();
        assert_eq!(ideal_dcg(&g, None), 1.0);
    }

    #[test]
    fn ideal_dcg_matches_direct_formula() {
        let g = QueryGroup::new(1, vec![vec![0.0]; 3], vec![3, 2, 0]).unwrap();
        let expected = 7.0 / 2f64.log2() + 3.0 / 3f64.log2();
        assert!((ideal_dcg(&g, None) - expected).abs() < 1e-12);
        assert!((expected - 8.8928).abs() < 1e-4);
    }

    #[test]
    fn ideal_dcg_top_one() {
        let g = QueryGroup::new(1, vec![vec![0.0]; 2], vec![1, 1]).unwrap();
        assert_eq!(ideal_dcg(&g, Some(1)), 1.0);
    }

    #[test]
    fn ideal_dcg_all_zero_gains() {
        let g = QueryGroup::new(1, vec![vec![0.0]; 2], vec![0, 0]).unwrap();
        assert_eq!(ideal_dcg(&g, None), 0.0);
    }

    #[test]
    fn ideal_dcg_table_invariants() {
        let ds = synth_generate(5, 8, 3, 3, 11).unwrap();
        let table = IdealDcgTable::build(&ds, &[1, 3, 8]);
        for g in &ds.groups {
            let z = table.z(g.query_id).unwrap();
            for &k in &[1usize, 3, 8] {
                let zk = table.z_at_k(g.query_id, k).unwrap();
                assert!(zk <= z + 1e-12, "Z^K must not exceed Z");
            }
            assert!((table.z_at_k(g.query_id, 8).unwrap() - z).abs() < 1e-12);
        }
    }

    #[test]
    fn synth_structural_contract() {
        let ds = synth_generate(1, 2, 3, 2, 0).unwrap();
        assert_eq!(ds.groups.len(), 1);
        assert_eq!(ds.groups[0].n_items(), 2);
        assert!(ds.groups[0].has_relevant());
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_generate(4, 6, 5, 3, 9).unwrap();
        let b = synth_generate(4, 6, 5, 3, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(serialize_letor(&a), serialize_letor(&b));
    }

    #[test]
    fn synth_every_query_has_relevant() {
        let ds = synth_generate(20, 5, 4, 4, 3).unwrap();
        for g in &ds.groups {
            assert!(g.has_relevant());
            assert!(*g.relevances.iter().max().unwrap() >= 1);
        }
    }

    #[test]
    fn roundtrip_serialize_parse() {
        let ds = synth_generate(6, 7, 4, 3, 21).unwrap();
        let parsed = parse_letor(&serialize_letor(&ds)).unwrap();
        assert_eq!(ds, parsed);
    }

    #[test]
    fn zscore_standardizes_columns() {
        let ds = synth_generate(10, 20, 3, 2, 5).unwrap();
        let zd = zscore(&ds).unwrap();
        let mut mean = [0.0; 3];
        let mut var = [0.0; 3];
        let mut n = 0;
        for g in &zd.groups {
            for i in 0..g.n_items() {
                for (j, v) in g.feature_row(i).iter().enumerate() {
                    mean[j] += v;
                    var[j] += v * v;
                }
                n += 1;
            }
        }
        for j in 0..3 {
            assert!((mean[j] / n as f64).abs() < 1e-10);
            assert!((var[j] / n as f64 - 1.0).abs() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn prop_ideal_dcg_full_equals_default(rels in prop::collection::vec(0u32..4, 1..12)) {
            let n = rels.len();
            let g = QueryGroup::new(1, vec![vec![0.0]; n], rels).unwrap();
            prop_assert_eq!(ideal_dcg(&g, Some(n)), ideal_dcg(&g, None));
        }

        #[test]
        fn prop_ideal_dcg_permutation_invariant(
            rels in prop::collection::vec(0u32..4, 2..10),
            swap in (0usize..10, 0usize..10)
        ) {
            let n = rels.len();
            let mut permuted = rels.clone();
            permuted.swap(swap.0 % n, swap.1 % n);
            let a = QueryGroup::new(1, vec![vec![0.0]; n], rels).unwrap();
            let b = QueryGroup::new(1, vec![vec![0.0]; n], permuted).unwrap();
            prop_assert!((ideal_dcg(&a, None) - ideal_dcg(&b, None)).abs() < 1e-12);
        }

        #[test]
        fn prop_roundtrip_identity(
            n_queries in 1usize..4,
            n_items in 1usize..6,
            d in 1usize..4,
            seed in 0u64..1000
        ) {
            let ds = synth_generate(n_queries, n_items, d, 3, seed).unwrap();
            let parsed = parse_letor(&serialize_letor(&ds)).unwrap();
            prop_assert_eq!(ds, parsed);
        }

        #[test]
        fn prop_pair_index_counts(seed in 0u64..500) {
            let ds = synth_generate(5, 9, 3, 3, seed).unwrap();
            let total: usize = ds.groups.iter().map(|g| g.n_relevant()).sum();
            prop_assert_eq!(ds.n_pairs(), total);
        }
    }
}
