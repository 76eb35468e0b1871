//! Two clusterings over one weighted item population.
//!
//! Items are stored sorted by id, so every index-ordered traversal (pair
//! enumeration, reports, samples) is independent of the input record order.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::read_jsonl;

/// Dense index of an item inside a [`ClusteringPair`]. Index order is id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ItemIx(pub u32);

impl ItemIx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub weight: f64,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

/// One line of a per-side clustering file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub item_id: String,
    pub cluster_id: String,
    #[serde(default = "unit_weight")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

/// One line of the joined clustering file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedRecord {
    pub item_id: String,
    pub base_cluster_id: String,
    pub exp_cluster_id: String,
    #[serde(default = "unit_weight")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, String>,
}

fn unit_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Base,
    Exp,
}

/// One side's partition: cluster ids, sorted member lists and cluster weights.
#[derive(Debug, Clone)]
pub struct Clustering {
    ids: Vec<String>,
    members: Vec<Vec<ItemIx>>,
    weights: Vec<f64>,
    of_item: Vec<u32>,
}

impl Clustering {
    fn build(assignment: &[String], weights: &[f64]) -> Clustering {
        let mut by_id: BTreeMap<&str, u32> = BTreeMap::new();
        for cluster in assignment {
            let next = by_id.len() as u32;
            by_id.entry(cluster.as_str()).or_insert(next);
        }
        // Renumber clusters in id order so that cluster indexes are canonical too.
        let mut ids = Vec::with_capacity(by_id.len());
        for (k, (id, slot)) in by_id.iter_mut().enumerate() {
            ids.push((*id).to_string());
            *slot = k as u32;
        }
        let mut members = vec![Vec::new(); ids.len()];
        let mut cluster_weights = vec![0.0; ids.len()];
        let mut of_item = Vec::with_capacity(assignment.len());
        for (ix, cluster) in assignment.iter().enumerate() {
            let c = by_id[cluster.as_str()];
            members[c as usize].push(ItemIx(ix as u32));
            cluster_weights[c as usize] += weights[ix];
            of_item.push(c);
        }
        Clustering {
            ids,
            members,
            weights: cluster_weights,
            of_item,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Cluster index of an item.
    #[inline]
    pub fn cluster_of(&self, ix: ItemIx) -> usize {
        self.of_item[ix.index()] as usize
    }

    pub fn cluster_id(&self, cluster: usize) -> &str {
        &self.ids[cluster]
    }

    pub fn members(&self, cluster: usize) -> &[ItemIx] {
        &self.members[cluster]
    }

    pub fn weight(&self, cluster: usize) -> f64 {
        self.weights[cluster]
    }

    pub fn find(&self, cluster_id: &str) -> Option<usize> {
        self.ids
            .binary_search_by(|id| id.as_str().cmp(cluster_id))
            .ok()
    }
}

/// The joined view of Base and Exp over one population `T`.
#[derive(Debug, Clone)]
pub struct ClusteringPair {
    items: Vec<Item>,
    index: HashMap<String, ItemIx>,
    base: Clustering,
    exp: Clustering,
    // Cells are the non-empty intersections Base cluster x Exp cluster.
    cell_of: Vec<u32>,
    cell_weight: Vec<f64>,
    cell_count: Vec<u32>,
    total_weight: f64,
}

impl ClusteringPair {
    /// Builds from the joined record form.
    pub fn from_joined<I: IntoIterator<Item = JoinedRecord>>(records: I) -> Result<Self> {
        let mut rows: Vec<JoinedRecord> = records.into_iter().collect();
        for r in &rows {
            check_weight(&r.item_id, r.weight)?;
        }
        rows.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        for pair in rows.windows(2) {
            if pair[0].item_id == pair[1].item_id {
                return Err(Error::DuplicateItem(pair[0].item_id.clone()));
            }
        }
        let mut items = Vec::with_capacity(rows.len());
        let mut base = Vec::with_capacity(rows.len());
        let mut exp = Vec::with_capacity(rows.len());
        for r in rows {
            items.push(Item {
                id: r.item_id,
                weight: r.weight,
                attributes: r.attributes,
            });
            base.push(r.base_cluster_id);
            exp.push(r.exp_cluster_id);
        }
        Self::from_parts(items, &base, &exp)
    }

    /// Builds from the two-source form. Attributes are merged; on a key
    /// present in both sources the base value is kept.
    pub fn from_records<B, E>(base: B, exp: E) -> Result<Self>
    where
        B: IntoIterator<Item = ClusterRecord>,
        E: IntoIterator<Item = ClusterRecord>,
    {
        let base = index_side(base)?;
        let mut exp = index_side(exp)?;
        let mut joined = Vec::with_capacity(base.len());
        for (id, b) in base {
            let e = exp
                .remove(&id)
                .ok_or_else(|| Error::MissingItem(id.clone()))?;
            if b.weight != e.weight {
                return Err(Error::WeightMismatch {
                    id,
                    base: b.weight,
                    exp: e.weight,
                });
            }
            let mut attributes = e.attributes;
            attributes.extend(b.attributes);
            joined.push(JoinedRecord {
                item_id: id,
                base_cluster_id: b.cluster_id,
                exp_cluster_id: e.cluster_id,
                weight: b.weight,
                attributes,
            });
        }
        if let Some(id) = exp.into_keys().next() {
            return Err(Error::MissingItem(id));
        }
        Self::from_joined(joined)
    }

    fn from_parts(items: Vec<Item>, base: &[String], exp: &[String]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        let weights: Vec<f64> = items.iter().map(|it| it.weight).collect();
        let base = Clustering::build(base, &weights);
        let exp = Clustering::build(exp, &weights);

        let mut cells: HashMap<(u32, u32), u32> = HashMap::new();
        let mut cell_of = Vec::with_capacity(items.len());
        let mut cell_weight = Vec::new();
        let mut cell_count = Vec::new();
        for (ix, w) in weights.iter().enumerate() {
            let key = (base.of_item[ix], exp.of_item[ix]);
            let next = cells.len() as u32;
            let c = *cells.entry(key).or_insert(next);
            if c == next {
                cell_weight.push(0.0);
                cell_count.push(0);
            }
            cell_weight[c as usize] += w;
            cell_count[c as usize] += 1;
            cell_of.push(c);
        }
        let total_weight = weights.iter().sum();
        let index = items
            .iter()
            .enumerate()
            .map(|(k, it)| (it.id.clone(), ItemIx(k as u32)))
            .collect();
        Ok(ClusteringPair {
            items,
            index,
            base,
            exp,
            cell_of,
            cell_weight,
            cell_count,
            total_weight,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn item(&self, ix: ItemIx) -> &Item {
        &self.items[ix.index()]
    }

    pub fn id(&self, ix: ItemIx) -> &str {
        &self.items[ix.index()].id
    }

    #[inline]
    pub fn weight(&self, ix: ItemIx) -> f64 {
        self.items[ix.index()].weight
    }

    pub fn ix(&self, id: &str) -> Result<ItemIx> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownItem(id.to_string()))
    }

    pub fn indices(&self) -> impl ExactSizeIterator<Item = ItemIx> + '_ {
        (0..self.items.len() as u32).map(ItemIx)
    }

    /// weight(T)
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// weight(I) for an arbitrary set of items.
    pub fn weight_of<I: IntoIterator<Item = ItemIx>>(&self, set: I) -> f64 {
        set.into_iter().map(|ix| self.weight(ix)).sum()
    }

    pub fn side(&self, side: Side) -> &Clustering {
        match side {
            Side::Base => &self.base,
            Side::Exp => &self.exp,
        }
    }

    pub fn base(&self) -> &Clustering {
        &self.base
    }

    pub fn exp(&self) -> &Clustering {
        &self.exp
    }

    /// Members of Base(i), sorted by index.
    pub fn base_members(&self, ix: ItemIx) -> &[ItemIx] {
        self.base.members(self.base.cluster_of(ix))
    }

    /// Members of Exp(i), sorted by index.
    pub fn exp_members(&self, ix: ItemIx) -> &[ItemIx] {
        self.exp.members(self.exp.cluster_of(ix))
    }

    #[inline]
    pub fn base_weight(&self, ix: ItemIx) -> f64 {
        self.base.weight(self.base.cluster_of(ix))
    }

    #[inline]
    pub fn exp_weight(&self, ix: ItemIx) -> f64 {
        self.exp.weight(self.exp.cluster_of(ix))
    }

    /// weight(Base(i) ∩ Exp(i))
    #[inline]
    pub fn intersection_weight(&self, ix: ItemIx) -> f64 {
        self.cell_weight[self.cell_of[ix.index()] as usize]
    }

    /// weight(Base(i) ∪ Exp(i))
    #[inline]
    pub fn union_weight(&self, ix: ItemIx) -> f64 {
        if !self.is_affected(ix) {
            return self.base_weight(ix);
        }
        self.base_weight(ix) + self.exp_weight(ix) - self.intersection_weight(ix)
    }

    /// weight(Base(i) \ Exp(i))
    #[inline]
    pub fn split_weight(&self, ix: ItemIx) -> f64 {
        if self.base_members(ix).len() == self.intersection_len(ix) {
            return 0.0;
        }
        (self.base_weight(ix) - self.intersection_weight(ix)).max(0.0)
    }

    /// weight(Exp(i) \ Base(i))
    #[inline]
    pub fn merge_weight(&self, ix: ItemIx) -> f64 {
        if self.exp_members(ix).len() == self.intersection_len(ix) {
            return 0.0;
        }
        (self.exp_weight(ix) - self.intersection_weight(ix)).max(0.0)
    }

    /// |Base(i) ∩ Exp(i)|
    #[inline]
    pub fn intersection_len(&self, ix: ItemIx) -> usize {
        self.cell_count[self.cell_of[ix.index()] as usize] as usize
    }

    /// |Base(i) ∪ Exp(i)|
    pub fn union_len(&self, ix: ItemIx) -> usize {
        self.base_members(ix).len() + self.exp_members(ix).len() - self.intersection_len(ix)
    }

    /// Base(i) ≠ Exp(i) as member sets.
    #[inline]
    pub fn is_affected(&self, ix: ItemIx) -> bool {
        let inter = self.intersection_len(ix);
        inter != self.base_members(ix).len() || inter != self.exp_members(ix).len()
    }

    #[inline]
    pub fn in_base(&self, i: ItemIx, j: ItemIx) -> bool {
        self.base.cluster_of(i) == self.base.cluster_of(j)
    }

    #[inline]
    pub fn in_exp(&self, i: ItemIx, j: ItemIx) -> bool {
        self.exp.cluster_of(i) == self.exp.cluster_of(j)
    }

    /// Members of Base(i) ∪ Exp(i) in index order.
    pub fn union_members(&self, ix: ItemIx) -> UnionMembers<'_> {
        UnionMembers {
            left: self.base_members(ix),
            right: self.exp_members(ix),
        }
    }

    /// The joined record form, in item order.
    pub fn joined_records(&self) -> Vec<JoinedRecord> {
        self.indices()
            .map(|ix| {
                let it = self.item(ix);
                JoinedRecord {
                    item_id: it.id.clone(),
                    base_cluster_id: self.base.cluster_id(self.base.cluster_of(ix)).to_string(),
                    exp_cluster_id: self.exp.cluster_id(self.exp.cluster_of(ix)).to_string(),
                    weight: it.weight,
                    attributes: it.attributes.clone(),
                }
            })
            .collect()
    }

    /// Attribute keys that occur on at least one item.
    pub fn attribute_keys(&self) -> std::collections::BTreeSet<&str> {
        self.items
            .iter()
            .flat_map(|it| it.attributes.keys().map(String::as_str))
            .collect()
    }
}

/// Sorted merge of two sorted member lists, yielding each member once.
#[derive(Debug, Clone)]
pub struct UnionMembers<'a> {
    left: &'a [ItemIx],
    right: &'a [ItemIx],
}

impl Iterator for UnionMembers<'_> {
    type Item = ItemIx;

    fn next(&mut self) -> Option<ItemIx> {
        match (self.left.first(), self.right.first()) {
            (Some(&l), Some(&r)) => {
                if l <= r {
                    self.left = &self.left[1..];
                    if l == r {
                        self.right = &self.right[1..];
                    }
                    Some(l)
                } else {
                    self.right = &self.right[1..];
                    Some(r)
                }
            }
            (Some(&l), None) => {
                self.left = &self.left[1..];
                Some(l)
            }
            (None, Some(&r)) => {
                self.right = &self.right[1..];
                Some(r)
            }
            (None, None) => None,
        }
    }
}

fn check_weight(id: &str, weight: f64) -> Result<()> {
    if !(weight.is_finite() && weight > 0.0) {
        return Err(Error::NonPositiveWeight {
            id: id.to_string(),
            weight,
        });
    }
    Ok(())
}

fn index_side<I: IntoIterator<Item = ClusterRecord>>(
    records: I,
) -> Result<BTreeMap<String, ClusterRecord>> {
    let mut out = BTreeMap::new();
    for r in records {
        check_weight(&r.item_id, r.weight)?;
        if out.contains_key(&r.item_id) {
            return Err(Error::DuplicateItem(r.item_id));
        }
        out.insert(r.item_id.clone(), r);
    }
    Ok(out)
}

/// Loads the two-file form from two newline-delimited record streams.
pub fn load_clustering_pair<B: BufRead, E: BufRead>(base: B, exp: E) -> Result<ClusteringPair> {
    let base: Vec<ClusterRecord> = read_jsonl(base, "base")?;
    let exp: Vec<ClusterRecord> = read_jsonl(exp, "exp")?;
    ClusteringPair::from_records(base, exp)
}

/// Loads the joined single-file form.
pub fn load_joined<R: BufRead>(reader: R) -> Result<ClusteringPair> {
    let rows: Vec<JoinedRecord> = read_jsonl(reader, "joined")?;
    ClusteringPair::from_joined(rows)
}

/// AffectedItems(T) and UnaffectedItems(T).
#[derive(Debug, Clone, PartialEq)]
pub struct AffectedPartition {
    pub affected: Vec<ItemIx>,
    pub unaffected: Vec<ItemIx>,
    pub affected_weight: f64,
    pub unaffected_weight: f64,
}

impl AffectedPartition {
    pub fn contains_affected(&self, ix: ItemIx) -> bool {
        self.affected.binary_search(&ix).is_ok()
    }
}

pub fn affected_partition(cp: &ClusteringPair) -> AffectedPartition {
    let (affected, unaffected): (Vec<ItemIx>, Vec<ItemIx>) =
        cp.indices().partition(|&ix| cp.is_affected(ix));
    let affected_weight = cp.weight_of(affected.iter().copied());
    let unaffected_weight = cp.weight_of(unaffected.iter().copied());
    AffectedPartition {
        affected,
        unaffected,
        affected_weight,
        unaffected_weight,
    }
}
