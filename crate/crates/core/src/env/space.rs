//! Enumeration of valid add decisions.

use crate::chart::{
    check_parts, Aggregate, ChartSpec, ColumnMeta, Encoding, EncodingMeta, Limit, Mark,
    DEFAULT_LIMIT_K,
};
use crate::data::{Dataset, MAX_CONTEXT_COLUMNS};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitChoice {
    None,
    Top,
    Bottom,
}

impl LimitChoice {
    pub const ALL: [LimitChoice; 3] = [LimitChoice::None, LimitChoice::Top, LimitChoice::Bottom];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn to_limit(self) -> Option<Limit> {
        match self {
            LimitChoice::None => None,
            LimitChoice::Top => Some(Limit::top(DEFAULT_LIMIT_K)),
            LimitChoice::Bottom => Some(Limit::bottom(DEFAULT_LIMIT_K)),
        }
    }
}

/// The parameters of an add decision. Columns are dataset indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AddTuple {
    pub mark: Mark,
    pub y_field: usize,
    pub y_aggregate: Aggregate,
    pub key_aggregate: Aggregate,
    pub color: Option<usize>,
    pub limit: LimitChoice,
}

impl AddTuple {
    /// Head option indices in add-head order.
    pub fn indices(&self) -> [usize; 6] {
        [
            self.mark.index(),
            self.y_field,
            self.y_aggregate.index(),
            self.key_aggregate.index(),
            self.color.map_or(0, |c| c + 1),
            self.limit.index(),
        ]
    }

    pub fn from_indices(ix: [usize; 6]) -> Self {
        Self {
            mark: Mark::ALL[ix[0]],
            y_field: ix[1],
            y_aggregate: Aggregate::ALL[ix[2]],
            key_aggregate: Aggregate::ALL[ix[3]],
            color: ix[4].checked_sub(1),
            limit: LimitChoice::ALL[ix[5]],
        }
    }
}

fn metas(dataset: &Dataset) -> Vec<ColumnMeta> {
    dataset
        .context_columns()
        .iter()
        .map(|c| ColumnMeta {
            ctype: c.ctype,
            cardinality: c.cardinality,
        })
        .collect()
}

/// Which orientation of a tuple is valid: key on x, key on y, or neither.
fn placement(metas: &[ColumnMeta], key: usize, t: &AddTuple) -> Option<bool> {
    let n = metas.len();
    if t.y_field >= n || t.y_field == key || t.color.is_some_and(|c| c >= n || c == key) {
        return None;
    }
    let k = EncodingMeta {
        column: metas[key],
        aggregate: t.key_aggregate,
    };
    let e = EncodingMeta {
        column: metas[t.y_field],
        aggregate: t.y_aggregate,
    };
    let color = t.color.map(|c| {
        (
            EncodingMeta {
                column: metas[c],
                aggregate: Aggregate::None,
            },
            c == t.y_field,
        )
    });
    let limit = t.limit.to_limit();
    let mut out = Vec::new();
    check_parts(t.mark, k, e, false, color, limit, &mut out);
    if out.is_empty() {
        return Some(false);
    }
    out.clear();
    check_parts(t.mark, e, k, false, color, limit, &mut out);
    out.is_empty().then_some(true)
}

/// The chart an add tuple produces under key column `key`: the key goes on x
/// and the explanation on y, unless only the transposed chart is valid.
/// `None` if neither orientation is valid.
pub fn build_chart(dataset: &Dataset, key: usize, t: &AddTuple) -> Option<ChartSpec> {
    let metas = metas(dataset);
    if key >= metas.len() {
        return None;
    }
    let swapped = placement(&metas, key, t)?;
    let k = Encoding::new(dataset.columns[key].name.clone(), t.key_aggregate);
    let e = Encoding::new(dataset.columns[t.y_field].name.clone(), t.y_aggregate);
    let (x, y) = if swapped { (e, k) } else { (k, e) };
    let mut spec = ChartSpec::new(t.mark, x, y);
    if let Some(c) = t.color {
        spec = spec.with_color(Encoding::raw(dataset.columns[c].name.clone()));
    }
    if let Some(l) = t.limit.to_limit() {
        spec = spec.with_limit(l);
    }
    Some(spec)
}

/// The add tuple describing `spec` under `key`, if the chart has that shape.
pub fn tuple_for_chart(dataset: &Dataset, key: &str, spec: &ChartSpec) -> Option<AddTuple> {
    let (k, e) = match spec.key_channel(key)? {
        crate::chart::Channel::X => (&spec.x, &spec.y),
        _ => (&spec.y, &spec.x),
    };
    let index = |name: &str| {
        dataset
            .column_index(name)
            .filter(|i| *i < MAX_CONTEXT_COLUMNS)
    };
    let color = match &spec.color {
        None => None,
        Some(c) if c.aggregate == Aggregate::None => Some(index(&c.column)?),
        Some(_) => return None,
    };
    let limit = match spec.limit {
        None => LimitChoice::None,
        Some(l) if l.k == DEFAULT_LIMIT_K => match l.direction {
            crate::chart::LimitDirection::Top => LimitChoice::Top,
            crate::chart::LimitDirection::Bottom => LimitChoice::Bottom,
        },
        Some(_) => return None,
    };
    Some(AddTuple {
        mark: spec.mark,
        y_field: index(&e.column)?,
        y_aggregate: e.aggregate,
        key_aggregate: k.aggregate,
        color,
        limit,
    })
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: Vec<(u8, u32)>,
}

/// Prefix tree over valid add tuples of one key column.
#[derive(Debug, Clone)]
struct Trie {
    nodes: Vec<TrieNode>,
    len: usize,
}

impl Trie {
    fn new() -> Self {
        Self {
            nodes: vec![TrieNode::default()],
            len: 0,
        }
    }

    fn insert(&mut self, ix: [usize; 6]) {
        let mut node = 0usize;
        for v in ix {
            let v = v as u8;
            let next = match self.nodes[node].children.iter().find(|(c, _)| *c == v) {
                Some((_, n)) => *n as usize,
                None => {
                    let n = self.nodes.len();
                    self.nodes.push(TrieNode::default());
                    self.nodes[node].children.push((v, n as u32));
                    n
                }
            };
            node = next;
        }
        self.len += 1;
    }

    fn find(&self, prefix: &[usize]) -> Option<usize> {
        let mut node = 0usize;
        for v in prefix {
            node = self.nodes[node]
                .children
                .iter()
                .find(|(c, _)| *c as usize == *v)?
                .1 as usize;
        }
        Some(node)
    }
}

/// Valid add tuples per addressable key column, precomputed for one dataset.
#[derive(Debug, Clone)]
pub struct ActionSpace {
    tries: Vec<Trie>,
}

impl ActionSpace {
    pub fn new(dataset: &Dataset) -> Self {
        let metas = metas(dataset);
        let n = metas.len();
        let mut tries = Vec::with_capacity(n);
        for key in 0..n {
            let mut trie = Trie::new();
            for mark in 0..Mark::ALL.len() {
                for y_field in 0..n {
                    for y_agg in 0..Aggregate::ALL.len() {
                        for key_agg in 0..Aggregate::ALL.len() {
                            for color in 0..=n {
                                for limit in 0..LimitChoice::ALL.len() {
                                    let ix = [mark, y_field, y_agg, key_agg, color, limit];
                                    let t = AddTuple::from_indices(ix);
                                    if placement(&metas, key, &t).is_some() {
                                        trie.insert(ix);
                                    }
                                }
                            }
                        }
                    }
                }
            }
            tries.push(trie);
        }
        Self { tries }
    }

    /// Number of addressable columns.
    pub fn columns(&self) -> usize {
        self.tries.len()
    }

    pub fn has_any(&self, key: usize) -> bool {
        self.tries.get(key).is_some_and(|t| t.len > 0)
    }

    pub fn valid_count(&self, key: usize) -> usize {
        self.tries.get(key).map_or(0, |t| t.len)
    }

    /// Options for the add head following `prefix` (a prefix of a tuple's indices).
    pub fn next_options(&self, key: usize, prefix: &[usize]) -> Vec<usize> {
        let Some(trie) = self.tries.get(key) else {
            return Vec::new();
        };
        match trie.find(prefix) {
            Some(node) => trie.nodes[node]
                .children
                .iter()
                .map(|(c, _)| *c as usize)
                .collect(),
            None => Vec::new(),
        }
    }

    /// Every valid tuple for `key`, in lexicographic index order.
    pub fn tuples(&self, key: usize) -> Vec<AddTuple> {
        let mut out = Vec::new();
        let Some(trie) = self.tries.get(key) else {
            return out;
        };
        let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, Vec::new())];
        while let Some((node, path)) = stack.pop() {
            if path.len() == 6 {
                out.push(AddTuple::from_indices(path.try_into().expect("six heads")));
                continue;
            }
            for (v, child) in trie.nodes[node].children.iter().rev() {
                let mut p = path.clone();
                p.push(*v as usize);
                stack.push((*child as usize, p));
            }
        }
        out
    }
}
