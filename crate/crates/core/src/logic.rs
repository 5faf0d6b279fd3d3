//! Signatures, multi-sorted finite structures and the first-order formula AST.
//!
//! Everything here is immutable once built. Elements of a sort are dense ids
//! `0..size`; human-readable names for elements live in an optional label
//! table that the counting code never looks at.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Index of a sort inside its [`Signature`].
pub type SortId = usize;

/// Dense per-sort element id.
pub type Element = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("duplicate {kind} name `{name}`")]
    DuplicateName { kind: &'static str, name: String },
    #[error("symbol `{symbol}` refers to undeclared sort `{sort}`")]
    UnknownSort { symbol: String, sort: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationSymbol {
    pub name: String,
    pub arg_sorts: Vec<SortId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSymbol {
    pub name: String,
    pub arg_sorts: Vec<SortId>,
    pub result_sort: SortId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstantSymbol {
    pub name: String,
    pub sort: SortId,
}

/// A many-sorted first-order signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    sorts: Vec<String>,
    relations: Vec<RelationSymbol>,
    functions: Vec<FunctionSymbol>,
    constants: Vec<ConstantSymbol>,
    sort_index: HashMap<String, SortId>,
    relation_index: HashMap<String, usize>,
    function_index: HashMap<String, usize>,
    constant_index: HashMap<String, usize>,
}

impl Signature {
    pub fn builder() -> SignatureBuilder {
        SignatureBuilder::default()
    }

    pub fn sorts(&self) -> &[String] {
        &self.sorts
    }

    pub fn sort_id(&self, name: &str) -> Option<SortId> {
        self.sort_index.get(name).copied()
    }

    pub fn sort_name(&self, id: SortId) -> &str {
        &self.sorts[id]
    }

    pub fn relations(&self) -> &[RelationSymbol] {
        &self.relations
    }

    pub fn functions(&self) -> &[FunctionSymbol] {
        &self.functions
    }

    pub fn constants(&self) -> &[ConstantSymbol] {
        &self.constants
    }

    pub fn relation(&self, name: &str) -> Option<(usize, &RelationSymbol)> {
        self.relation_index
            .get(name)
            .map(|&i| (i, &self.relations[i]))
    }

    pub fn function(&self, name: &str) -> Option<(usize, &FunctionSymbol)> {
        self.function_index
            .get(name)
            .map(|&i| (i, &self.functions[i]))
    }

    pub fn constant(&self, name: &str) -> Option<(usize, &ConstantSymbol)> {
        self.constant_index
            .get(name)
            .map(|&i| (i, &self.constants[i]))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SignatureBuilder {
    sorts: Vec<String>,
    relations: Vec<(String, Vec<String>)>,
    functions: Vec<(String, Vec<String>, String)>,
    constants: Vec<(String, String)>,
}

impl SignatureBuilder {
    pub fn sort(mut self, name: &str) -> Self {
        self.sorts.push(name.to_string());
        self
    }

    pub fn relation(mut self, name: &str, arg_sorts: &[&str]) -> Self {
        self.relations.push((
            name.to_string(),
            arg_sorts.iter().map(|s| s.to_string()).collect(),
        ));
        self
    }

    pub fn function(mut self, name: &str, arg_sorts: &[&str], result: &str) -> Self {
        self.functions.push((
            name.to_string(),
            arg_sorts.iter().map(|s| s.to_string()).collect(),
            result.to_string(),
        ));
        self
    }

    pub fn constant(mut self, name: &str, sort: &str) -> Self {
        self.constants.push((name.to_string(), sort.to_string()));
        self
    }

    pub fn build(self) -> Result<Signature, SignatureError> {
        let mut sort_index = HashMap::new();
        for (i, s) in self.sorts.iter().enumerate() {
            if sort_index.insert(s.clone(), i).is_some() {
                return Err(SignatureError::DuplicateName {
                    kind: "sort",
                    name: s.clone(),
                });
            }
        }
        let resolve = |symbol: &str, sort: &str| {
            sort_index
                .get(sort)
                .copied()
                .ok_or_else(|| SignatureError::UnknownSort {
                    symbol: symbol.to_string(),
                    sort: sort.to_string(),
                })
        };

        let mut relations = Vec::new();
        let mut relation_index = HashMap::new();
        for (name, args) in &self.relations {
            let arg_sorts = args
                .iter()
                .map(|s| resolve(name, s))
                .collect::<Result<Vec<_>, _>>()?;
            if relation_index.insert(name.clone(), relations.len()).is_some() {
                return Err(SignatureError::DuplicateName {
                    kind: "relation",
                    name: name.clone(),
                });
            }
            relations.push(RelationSymbol {
                name: name.clone(),
                arg_sorts,
            });
        }

        let mut functions = Vec::new();
        let mut function_index = HashMap::new();
        for (name, args, result) in &self.functions {
            let arg_sorts = args
                .iter()
                .map(|s| resolve(name, s))
                .collect::<Result<Vec<_>, _>>()?;
            let result_sort = resolve(name, result)?;
            if function_index.insert(name.clone(), functions.len()).is_some() {
                return Err(SignatureError::DuplicateName {
                    kind: "function",
                    name: name.clone(),
                });
            }
            functions.push(FunctionSymbol {
                name: name.clone(),
                arg_sorts,
                result_sort,
            });
        }

        let mut constants = Vec::new();
        let mut constant_index = HashMap::new();
        for (name, sort) in &self.constants {
            let sort = resolve(name, sort)?;
            if constant_index.insert(name.clone(), constants.len()).is_some() {
                return Err(SignatureError::DuplicateName {
                    kind: "constant",
                    name: name.clone(),
                });
            }
            constants.push(ConstantSymbol {
                name: name.clone(),
                sort,
            });
        }

        Ok(Signature {
            sorts: self.sorts,
            relations,
            functions,
            constants,
            sort_index,
            relation_index,
            function_index,
            constant_index,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("sort `{0}` has an empty universe")]
    EmptyUniverse(String),
    #[error("expected {expected} universe sizes, got {found}")]
    SizeCount { expected: usize, found: usize },
    #[error("unknown {kind} `{name}`")]
    UnknownSymbol { kind: &'static str, name: String },
    #[error("tuple {tuple:?} of `{symbol}` has arity {found}, expected {expected}")]
    Arity {
        symbol: String,
        tuple: Vec<Element>,
        expected: usize,
        found: usize,
    },
    #[error("tuple {tuple:?} of `{symbol}` is out of universe bounds")]
    OutOfBounds { symbol: String, tuple: Vec<Element> },
    #[error("function `{symbol}` has conflicting values at {args:?}")]
    ConflictingValue { symbol: String, args: Vec<Element> },
    #[error("function `{symbol}` is undefined at {args:?}")]
    NotTotal { symbol: String, args: Vec<Element> },
    #[error("constant `{0}` has no value")]
    MissingConstant(String),
    #[error("relation `{symbol}`: {reason}")]
    BadRelation { symbol: String, reason: String },
    #[error("label table for sort `{0}` does not match its size")]
    BadLabels(String),
}

/// Above this many cells a relation is stored as a hash set of tuples.
const DENSE_LIMIT_BITS: u64 = 1 << 26;

pub type RelationFn = Arc<dyn Fn(&[Element]) -> bool + Send + Sync>;

/// Storage for one relation symbol.
#[derive(Clone)]
pub enum RelationTable {
    Dense { strides: Vec<u64>, bits: Vec<u64> },
    Sparse(HashSet<Box<[Element]>>),
    /// A binary equivalence relation given by one class label per element.
    Partition(Vec<u32>),
    /// Membership computed on demand (used for very wide relations).
    Computed(RelationFn),
}

impl fmt::Debug for RelationTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RelationTable::Dense { bits, .. } => write!(f, "Dense({} words)", bits.len()),
            RelationTable::Sparse(s) => write!(f, "Sparse({} tuples)", s.len()),
            RelationTable::Partition(p) => write!(f, "Partition({} elements)", p.len()),
            RelationTable::Computed(_) => write!(f, "Computed"),
        }
    }
}

impl RelationTable {
    #[inline]
    pub fn contains(&self, args: &[Element]) -> bool {
        match self {
            RelationTable::Dense { strides, bits } => {
                let idx: u64 = args
                    .iter()
                    .zip(strides)
                    .map(|(&a, &s)| a as u64 * s)
                    .sum();
                bits[(idx >> 6) as usize] >> (idx & 63) & 1 == 1
            }
            RelationTable::Sparse(set) => set.contains(args),
            RelationTable::Partition(labels) => labels[args[0] as usize] == labels[args[1] as usize],
            RelationTable::Computed(f) => f(args),
        }
    }
}

/// A total function table indexed by the mixed-radix encoding of its arguments.
#[derive(Debug, Clone)]
pub struct FunctionTable {
    strides: Vec<u64>,
    values: Vec<Element>,
}

impl FunctionTable {
    #[inline]
    pub fn apply(&self, args: &[Element]) -> Element {
        let idx: u64 = args
            .iter()
            .zip(&self.strides)
            .map(|(&a, &s)| a as u64 * s)
            .sum();
        self.values[idx as usize]
    }
}

fn strides_for(sizes: &[u64]) -> (Vec<u64>, u64) {
    let mut strides = Vec::with_capacity(sizes.len());
    let mut acc = 1u64;
    for &s in sizes {
        strides.push(acc);
        acc = acc.saturating_mul(s);
    }
    (strides, acc)
}

/// A finite many-sorted structure over a [`Signature`].
#[derive(Debug, Clone)]
pub struct FiniteStructure {
    signature: Arc<Signature>,
    sizes: Vec<u32>,
    relations: Vec<RelationTable>,
    functions: Vec<FunctionTable>,
    constants: Vec<Element>,
    labels: Vec<Option<Vec<String>>>,
}

impl FiniteStructure {
    pub fn builder(signature: Arc<Signature>, sizes: Vec<u32>) -> StructureBuilder {
        StructureBuilder::new(signature, sizes)
    }

    pub fn signature(&self) -> &Arc<Signature> {
        &self.signature
    }

    pub fn size(&self, sort: SortId) -> u32 {
        self.sizes[sort]
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    pub fn size_of(&self, sort: &str) -> Option<u32> {
        self.signature.sort_id(sort).map(|s| self.sizes[s])
    }

    pub fn relation_table(&self, index: usize) -> &RelationTable {
        &self.relations[index]
    }

    pub fn function_table(&self, index: usize) -> &FunctionTable {
        &self.functions[index]
    }

    pub fn constant_value(&self, index: usize) -> Element {
        self.constants[index]
    }

    pub fn holds(&self, relation: &str, args: &[Element]) -> Option<bool> {
        let (i, _) = self.signature.relation(relation)?;
        Some(self.relations[i].contains(args))
    }

    pub fn apply(&self, function: &str, args: &[Element]) -> Option<Element> {
        let (i, _) = self.signature.function(function)?;
        Some(self.functions[i].apply(args))
    }

    pub fn constant(&self, name: &str) -> Option<Element> {
        let (i, _) = self.signature.constant(name)?;
        Some(self.constants[i])
    }

    pub fn label(&self, sort: SortId, element: Element) -> Option<&str> {
        self.labels[sort]
            .as_ref()
            .and_then(|l| l.get(element as usize))
            .map(String::as_str)
    }

    /// All tuples of a relation, in lexicographic order. Intended for export;
    /// fails when the relation is computed and its domain exceeds `limit`.
    pub fn relation_tuples(&self, index: usize, limit: u64) -> Option<Vec<Vec<Element>>> {
        let sym = &self.signature.relations()[index];
        let dims: Vec<u64> = sym.arg_sorts.iter().map(|&s| self.sizes[s] as u64).collect();
        let total: u64 = dims.iter().product();
        let table = &self.relations[index];
        if let RelationTable::Sparse(set) = table {
            let mut out: Vec<Vec<Element>> = set.iter().map(|t| t.to_vec()).collect();
            out.sort();
            return Some(out);
        }
        if total > limit {
            return None;
        }
        let mut out = Vec::new();
        let mut tuple = vec![0 as Element; dims.len()];
        for_each_tuple(&dims, &mut tuple, &mut |t| {
            if table.contains(t) {
                out.push(t.to_vec());
            }
        });
        Some(out)
    }

    /// The full graph of a function as `[args..., value]` rows.
    pub fn function_rows(&self, index: usize) -> Vec<Vec<Element>> {
        let sym = &self.signature.functions()[index];
        let dims: Vec<u64> = sym.arg_sorts.iter().map(|&s| self.sizes[s] as u64).collect();
        let table = &self.functions[index];
        let mut out = Vec::new();
        let mut tuple = vec![0 as Element; dims.len()];
        for_each_tuple(&dims, &mut tuple, &mut |t| {
            let mut row = t.to_vec();
            row.push(table.apply(t));
            out.push(row);
        });
        out
    }
}

/// Visits every tuple of the box `dims` in lexicographic order (last coordinate fastest).
pub(crate) fn for_each_tuple(dims: &[u64], tuple: &mut [Element], f: &mut dyn FnMut(&[Element])) {
    fn go(pos: usize, dims: &[u64], tuple: &mut [Element], f: &mut dyn FnMut(&[Element])) {
        if pos == dims.len() {
            f(tuple);
            return;
        }
        for v in 0..dims[pos] {
            tuple[pos] = v as Element;
            go(pos + 1, dims, tuple, f);
        }
    }
    if dims.iter().any(|&d| d == 0) {
        return;
    }
    go(0, dims, tuple, f)
}

enum PendingRelation {
    Unset,
    Tuples(Vec<Vec<Element>>),
    Partition(Vec<u32>),
    Computed(RelationFn),
}

enum PendingFunction {
    Unset,
    Rows(Vec<Vec<Element>>),
    Computed(Box<dyn Fn(&[Element]) -> Element>),
}

/// Collects tables and validates every invariant in [`StructureBuilder::build`].
pub struct StructureBuilder {
    signature: Arc<Signature>,
    sizes: Vec<u32>,
    relations: Vec<PendingRelation>,
    functions: Vec<PendingFunction>,
    constants: Vec<Option<Element>>,
    labels: Vec<Option<Vec<String>>>,
    error: Option<StructureError>,
}

impl StructureBuilder {
    pub fn new(signature: Arc<Signature>, sizes: Vec<u32>) -> Self {
        let nr = signature.relations().len();
        let nf = signature.functions().len();
        let nc = signature.constants().len();
        let ns = signature.sorts().len();
        StructureBuilder {
            signature,
            sizes,
            relations: (0..nr).map(|_| PendingRelation::Unset).collect(),
            functions: (0..nf).map(|_| PendingFunction::Unset).collect(),
            constants: vec![None; nc],
            labels: vec![None; ns],
            error: None,
        }
    }

    fn relation_slot(&mut self, name: &str) -> Option<usize> {
        match self.signature.relation(name) {
            Some((i, _)) => Some(i),
            None => {
                self.error.get_or_insert(StructureError::UnknownSymbol {
                    kind: "relation",
                    name: name.to_string(),
                });
                None
            }
        }
    }

    fn function_slot(&mut self, name: &str) -> Option<usize> {
        match self.signature.function(name) {
            Some((i, _)) => Some(i),
            None => {
                self.error.get_or_insert(StructureError::UnknownSymbol {
                    kind: "function",
                    name: name.to_string(),
                });
                None
            }
        }
    }

    pub fn relation_tuples<I>(mut self, name: &str, tuples: I) -> Self
    where
        I: IntoIterator<Item = Vec<Element>>,
    {
        if let Some(i) = self.relation_slot(name) {
            self.relations[i] = PendingRelation::Tuples(tuples.into_iter().collect());
        }
        self
    }

    /// A binary equivalence relation by class label; both arguments must share a sort.
    pub fn relation_partition(mut self, name: &str, labels: Vec<u32>) -> Self {
        if let Some(i) = self.relation_slot(name) {
            self.relations[i] = PendingRelation::Partition(labels);
        }
        self
    }

    pub fn relation_fn<F>(mut self, name: &str, f: F) -> Self
    where
        F: Fn(&[Element]) -> bool + Send + Sync + 'static,
    {
        if let Some(i) = self.relation_slot(name) {
            self.relations[i] = PendingRelation::Computed(Arc::new(f));
        }
        self
    }

    /// Function graph as rows `[args..., value]`.
    pub fn function_rows<I>(mut self, name: &str, rows: I) -> Self
    where
        I: IntoIterator<Item = Vec<Element>>,
    {
        if let Some(i) = self.function_slot(name) {
            self.functions[i] = PendingFunction::Rows(rows.into_iter().collect());
        }
        self
    }

    /// Function tabulated from a closure over the whole domain.
    pub fn function_fn<F>(mut self, name: &str, f: F) -> Self
    where
        F: Fn(&[Element]) -> Element + 'static,
    {
        if let Some(i) = self.function_slot(name) {
            self.functions[i] = PendingFunction::Computed(Box::new(f));
        }
        self
    }

    pub fn constant(mut self, name: &str, value: Element) -> Self {
        match self.signature.constant(name) {
            Some((i, _)) => self.constants[i] = Some(value),
            None => {
                self.error.get_or_insert(StructureError::UnknownSymbol {
                    kind: "constant",
                    name: name.to_string(),
                });
            }
        }
        self
    }

    pub fn labels(mut self, sort: &str, labels: Vec<String>) -> Self {
        match self.signature.sort_id(sort) {
            Some(s) => self.labels[s] = Some(labels),
            None => {
                self.error.get_or_insert(StructureError::UnknownSymbol {
                    kind: "sort",
                    name: sort.to_string(),
                });
            }
        }
        self
    }

    pub fn build(self) -> Result<FiniteStructure, StructureError> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let sig = self.signature;
        if self.sizes.len() != sig.sorts().len() {
            return Err(StructureError::SizeCount {
                expected: sig.sorts().len(),
                found: self.sizes.len(),
            });
        }
        for (s, &n) in self.sizes.iter().enumerate() {
            if n == 0 {
                return Err(StructureError::EmptyUniverse(sig.sort_name(s).to_string()));
            }
        }
        for (s, l) in self.labels.iter().enumerate() {
            if let Some(l) = l {
                if l.len() != self.sizes[s] as usize {
                    return Err(StructureError::BadLabels(sig.sort_name(s).to_string()));
                }
            }
        }

        let mut relations = Vec::with_capacity(self.relations.len());
        for (i, pending) in self.relations.into_iter().enumerate() {
            let sym = &sig.relations()[i];
            let dims: Vec<u64> = sym.arg_sorts.iter().map(|&s| self.sizes[s] as u64).collect();
            let table = match pending {
                PendingRelation::Unset => build_tuple_table(&sym.name, &dims, Vec::new())?,
                PendingRelation::Tuples(t) => build_tuple_table(&sym.name, &dims, t)?,
                PendingRelation::Partition(labels) => {
                    if dims.len() != 2 || sym.arg_sorts[0] != sym.arg_sorts[1] {
                        return Err(StructureError::BadRelation {
                            symbol: sym.name.clone(),
                            reason: "partition tables need two arguments of one sort".into(),
                        });
                    }
                    if labels.len() as u64 != dims[0] {
                        return Err(StructureError::BadRelation {
                            symbol: sym.name.clone(),
                            reason: format!(
                                "{} class labels for a universe of size {}",
                                labels.len(),
                                dims[0]
                            ),
                        });
                    }
                    RelationTable::Partition(labels)
                }
                PendingRelation::Computed(f) => RelationTable::Computed(f),
            };
            relations.push(table);
        }

        let mut functions = Vec::with_capacity(self.functions.len());
        for (i, pending) in self.functions.into_iter().enumerate() {
            let sym = &sig.functions()[i];
            let dims: Vec<u64> = sym.arg_sorts.iter().map(|&s| self.sizes[s] as u64).collect();
            let result_size = self.sizes[sym.result_sort] as u64;
            let (strides, total) = strides_for(&dims);
            let mut values = vec![Element::MAX; total as usize];
            match pending {
                PendingFunction::Unset => {
                    let mut args = vec![0; dims.len()];
                    let mut missing = None;
                    for_each_tuple(&dims, &mut args, &mut |t| {
                        missing.get_or_insert_with(|| t.to_vec());
                    });
                    return Err(StructureError::NotTotal {
                        symbol: sym.name.clone(),
                        args: missing.unwrap_or_default(),
                    });
                }
                PendingFunction::Rows(rows) => {
                    for row in rows {
                        if row.len() != dims.len() + 1 {
                            return Err(StructureError::Arity {
                                symbol: sym.name.clone(),
                                expected: dims.len() + 1,
                                found: row.len(),
                                tuple: row,
                            });
                        }
                        let (args, value) = row.split_at(dims.len());
                        let in_bounds = args.iter().zip(&dims).all(|(&a, &d)| (a as u64) < d)
                            && (value[0] as u64) < result_size;
                        if !in_bounds {
                            return Err(StructureError::OutOfBounds {
                                symbol: sym.name.clone(),
                                tuple: row,
                            });
                        }
                        let idx: u64 = args.iter().zip(&strides).map(|(&a, &s)| a as u64 * s).sum();
                        let slot = &mut values[idx as usize];
                        if *slot != Element::MAX && *slot != value[0] {
                            return Err(StructureError::ConflictingValue {
                                symbol: sym.name.clone(),
                                args: args.to_vec(),
                            });
                        }
                        *slot = value[0];
                    }
                }
                PendingFunction::Computed(f) => {
                    let mut args = vec![0; dims.len()];
                    let mut bad = None;
                    for_each_tuple(&dims, &mut args, &mut |t| {
                        let v = f(t);
                        if (v as u64) >= result_size {
                            bad.get_or_insert_with(|| {
                                let mut row = t.to_vec();
                                row.push(v);
                                row
                            });
                        }
                        let idx: u64 = t.iter().zip(&strides).map(|(&a, &s)| a as u64 * s).sum();
                        values[idx as usize] = v;
                    });
                    if let Some(row) = bad {
                        return Err(StructureError::OutOfBounds {
                            symbol: sym.name.clone(),
                            tuple: row,
                        });
                    }
                }
            }
            // mixed-radix order is first-argument-fastest; report the missing tuple in that order
            if let Some(pos) = values.iter().position(|&v| v == Element::MAX) {
                let mut rem = pos as u64;
                let args = dims
                    .iter()
                    .map(|&d| {
                        let a = rem % d;
                        rem /= d;
                        a as Element
                    })
                    .collect();
                return Err(StructureError::NotTotal {
                    symbol: sym.name.clone(),
                    args,
                });
            }
            functions.push(FunctionTable { strides, values });
        }

        let mut constants = Vec::with_capacity(self.constants.len());
        for (i, c) in self.constants.into_iter().enumerate() {
            let sym = &sig.constants()[i];
            let v = c.ok_or_else(|| StructureError::MissingConstant(sym.name.clone()))?;
            if v >= self.sizes[sym.sort] {
                return Err(StructureError::OutOfBounds {
                    symbol: sym.name.clone(),
                    tuple: vec![v],
                });
            }
            constants.push(v);
        }

        Ok(FiniteStructure {
            signature: sig,
            sizes: self.sizes,
            relations,
            functions,
            constants,
            labels: self.labels,
        })
    }
}

fn build_tuple_table(
    name: &str,
    dims: &[u64],
    tuples: Vec<Vec<Element>>,
) -> Result<RelationTable, StructureError> {
    for t in &tuples {
        if t.len() != dims.len() {
            return Err(StructureError::Arity {
                symbol: name.to_string(),
                tuple: t.clone(),
                expected: dims.len(),
                found: t.len(),
            });
        }
        if t.iter().zip(dims).any(|(&a, &d)| a as u64 >= d) {
            return Err(StructureError::OutOfBounds {
                symbol: name.to_string(),
                tuple: t.clone(),
            });
        }
    }
    let (strides, total) = strides_for(dims);
    if total <= DENSE_LIMIT_BITS {
        let mut bits = vec![0u64; (total as usize).div_ceil(64).max(1)];
        for t in &tuples {
            let idx: u64 = t.iter().zip(&strides).map(|(&a, &s)| a as u64 * s).sum();
            bits[(idx >> 6) as usize] |= 1 << (idx & 63);
        }
        Ok(RelationTable::Dense { strides, bits })
    } else {
        Ok(RelationTable::Sparse(
            tuples.into_iter().map(Vec::into_boxed_slice).collect(),
        ))
    }
}

/// A sorted variable, as written at a binding site.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Var {
    pub name: String,
    pub sort: String,
}

impl Var {
    pub fn new(name: &str, sort: &str) -> Self {
        Var {
            name: name.to_string(),
            sort: sort.to_string(),
        }
    }
}

/// Terms. Every variable occurrence carries its sort so that free variables
/// have a well-defined sort without consulting a signature.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(Var),
    Const(String),
    App(String, Vec<Term>),
}

impl Term {
    pub fn var(name: &str, sort: &str) -> Term {
        Term::Var(Var::new(name, sort))
    }

    pub fn constant(name: &str) -> Term {
        Term::Const(name.to_string())
    }

    pub fn app(name: &str, args: Vec<Term>) -> Term {
        Term::App(name.to_string(), args)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Formula {
    Rel(String, Vec<Term>),
    Eq(Term, Term),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Exists(Var, Box<Formula>),
    Forall(Var, Box<Formula>),
}

impl Formula {
    pub fn rel(name: &str, args: Vec<Term>) -> Formula {
        Formula::Rel(name.to_string(), args)
    }

    pub fn eq(lhs: Term, rhs: Term) -> Formula {
        Formula::Eq(lhs, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Formula {
        Formula::Not(Box::new(self))
    }

    pub fn and(self, other: Formula) -> Formula {
        Formula::And(Box::new(self), Box::new(other))
    }

    pub fn or(self, other: Formula) -> Formula {
        Formula::Or(Box::new(self), Box::new(other))
    }

    pub fn implies(self, other: Formula) -> Formula {
        Formula::Implies(Box::new(self), Box::new(other))
    }

    pub fn exists(var: &str, sort: &str, body: Formula) -> Formula {
        Formula::Exists(Var::new(var, sort), Box::new(body))
    }

    pub fn forall(var: &str, sort: &str, body: Formula) -> Formula {
        Formula::Forall(Var::new(var, sort), Box::new(body))
    }

    /// `!(x = x)`, false in every structure.
    pub fn falsum(var: &str, sort: &str) -> Formula {
        Formula::eq(Term::var(var, sort), Term::var(var, sort)).not()
    }

    /// Renames free occurrences of variables according to `map`.
    pub fn rename_free(&self, map: &HashMap<String, String>) -> Formula {
        fn term(t: &Term, map: &HashMap<String, String>, bound: &[String]) -> Term {
            match t {
                Term::Var(v) if !bound.contains(&v.name) => match map.get(&v.name) {
                    Some(n) => Term::var(n, &v.sort),
                    None => t.clone(),
                },
                Term::Var(_) | Term::Const(_) => t.clone(),
                Term::App(f, args) => {
                    Term::App(f.clone(), args.iter().map(|a| term(a, map, bound)).collect())
                }
            }
        }
        fn go(f: &Formula, map: &HashMap<String, String>, bound: &mut Vec<String>) -> Formula {
            match f {
                Formula::Rel(r, args) => {
                    Formula::Rel(r.clone(), args.iter().map(|a| term(a, map, bound)).collect())
                }
                Formula::Eq(a, b) => Formula::Eq(term(a, map, bound), term(b, map, bound)),
                Formula::Not(a) => Formula::Not(Box::new(go(a, map, bound))),
                Formula::And(a, b) => Formula::And(Box::new(go(a, map, bound)), Box::new(go(b, map, bound))),
                Formula::Or(a, b) => Formula::Or(Box::new(go(a, map, bound)), Box::new(go(b, map, bound))),
                Formula::Implies(a, b) => {
                    Formula::Implies(Box::new(go(a, map, bound)), Box::new(go(b, map, bound)))
                }
                Formula::Exists(v, body) | Formula::Forall(v, body) => {
                    bound.push(v.name.clone());
                    let inner = Box::new(go(body, map, bound));
                    bound.pop();
                    if matches!(f, Formula::Exists(..)) {
                        Formula::Exists(v.clone(), inner)
                    } else {
                        Formula::Forall(v.clone(), inner)
                    }
                }
            }
        }
        go(self, map, &mut Vec::new())
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parser::render_formula(self))
    }
}

/// Free variables in first-occurrence order (depth-first, left to right).
pub fn free_variables(formula: &Formula) -> Vec<(String, String)> {
    fn term(t: &Term, bound: &[String], out: &mut Vec<(String, String)>) {
        match t {
            Term::Var(v) => {
                if !bound.contains(&v.name) && !out.iter().any(|(n, _)| n == &v.name) {
                    out.push((v.name.clone(), v.sort.clone()));
                }
            }
            Term::Const(_) => {}
            Term::App(_, args) => args.iter().for_each(|a| term(a, bound, out)),
        }
    }
    fn go(f: &Formula, bound: &mut Vec<String>, out: &mut Vec<(String, String)>) {
        match f {
            Formula::Rel(_, args) => args.iter().for_each(|a| term(a, bound, out)),
            Formula::Eq(a, b) => {
                term(a, bound, out);
                term(b, bound, out);
            }
            Formula::Not(a) => go(a, bound, out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                go(a, bound, out);
                go(b, bound, out);
            }
            Formula::Exists(v, body) | Formula::Forall(v, body) => {
                bound.push(v.name.clone());
                go(body, bound, out);
                bound.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(formula, &mut Vec::new(), &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiagnosticKind {
    UnknownSymbol,
    ArityMismatch,
    SortMismatch,
}

/// First sort error found in a formula, with the offending node rendered.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} (at `{node}`)")]
pub struct SortDiagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
    pub node: String,
}

fn render_term(t: &Term) -> String {
    crate::parser::render_term(t)
}

/// Checks that every atom is well-sorted against `sig`.
pub fn sort_check(formula: &Formula, sig: &Signature) -> Result<(), SortDiagnostic> {
    struct Checker<'a> {
        sig: &'a Signature,
        bound: Vec<(String, String)>,
        free: HashMap<String, String>,
    }

    impl Checker<'_> {
        fn term(&mut self, t: &Term) -> Result<SortId, SortDiagnostic> {
            match t {
                Term::Var(v) => {
                    let sort = self.sig.sort_id(&v.sort).ok_or_else(|| SortDiagnostic {
                        kind: DiagnosticKind::UnknownSymbol,
                        message: format!("unknown sort `{}`", v.sort),
                        node: render_term(t),
                    })?;
                    let expected = self
                        .bound
                        .iter()
                        .rev()
                        .find(|(n, _)| n == &v.name)
                        .map(|(_, s)| s.clone());
                    let expected = match expected {
                        Some(s) => s,
                        None => self.free.entry(v.name.clone()).or_insert(v.sort.clone()).clone(),
                    };
                    if expected != v.sort {
                        return Err(SortDiagnostic {
                            kind: DiagnosticKind::SortMismatch,
                            message: format!(
                                "variable `{}` used at sort `{}` but has sort `{}`",
                                v.name, v.sort, expected
                            ),
                            node: render_term(t),
                        });
                    }
                    Ok(sort)
                }
                Term::Const(c) => match self.sig.constant(c) {
                    Some((_, sym)) => Ok(sym.sort),
                    None => Err(SortDiagnostic {
                        kind: DiagnosticKind::UnknownSymbol,
                        message: format!("unknown constant `{c}`"),
                        node: render_term(t),
                    }),
                },
                Term::App(name, args) => {
                    let (_, sym) = self.sig.function(name).ok_or_else(|| SortDiagnostic {
                        kind: DiagnosticKind::UnknownSymbol,
                        message: format!("unknown function `{name}`"),
                        node: render_term(t),
                    })?;
                    let sym = sym.clone();
                    self.args(name, &sym.arg_sorts, args, &render_term(t))?;
                    Ok(sym.result_sort)
                }
            }
        }

        fn args(
            &mut self,
            name: &str,
            expected: &[SortId],
            args: &[Term],
            node: &str,
        ) -> Result<(), SortDiagnostic> {
            if expected.len() != args.len() {
                return Err(SortDiagnostic {
                    kind: DiagnosticKind::ArityMismatch,
                    message: format!(
                        "`{name}` takes {} arguments, got {}",
                        expected.len(),
                        args.len()
                    ),
                    node: node.to_string(),
                });
            }
            for (i, (a, &want)) in args.iter().zip(expected).enumerate() {
                let got = self.term(a)?;
                if got != want {
                    return Err(SortDiagnostic {
                        kind: DiagnosticKind::SortMismatch,
                        message: format!(
                            "argument {} of `{name}` has sort `{}`, expected `{}`",
                            i + 1,
                            self.sig.sort_name(got),
                            self.sig.sort_name(want)
                        ),
                        node: node.to_string(),
                    });
                }
            }
            Ok(())
        }

        fn formula(&mut self, f: &Formula) -> Result<(), SortDiagnostic> {
            match f {
                Formula::Rel(name, args) => {
                    let node = crate::parser::render_formula(f);
                    let (_, sym) = self.sig.relation(name).ok_or_else(|| SortDiagnostic {
                        kind: DiagnosticKind::UnknownSymbol,
                        message: format!("unknown relation `{name}`"),
                        node: node.clone(),
                    })?;
                    let expected = sym.arg_sorts.clone();
                    self.args(name, &expected, args, &node)
                }
                Formula::Eq(a, b) => {
                    let sa = self.term(a)?;
                    let sb = self.term(b)?;
                    if sa != sb {
                        return Err(SortDiagnostic {
                            kind: DiagnosticKind::SortMismatch,
                            message: format!(
                                "equality between sorts `{}` and `{}`",
                                self.sig.sort_name(sa),
                                self.sig.sort_name(sb)
                            ),
                            node: crate::parser::render_formula(f),
                        });
                    }
                    Ok(())
                }
                Formula::Not(a) => self.formula(a),
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                    self.formula(a)?;
                    self.formula(b)
                }
                Formula::Exists(v, body) | Formula::Forall(v, body) => {
                    if self.sig.sort_id(&v.sort).is_none() {
                        return Err(SortDiagnostic {
                            kind: DiagnosticKind::UnknownSymbol,
                            message: format!("unknown sort `{}`", v.sort),
                            node: crate::parser::render_formula(f),
                        });
                    }
                    self.bound.push((v.name.clone(), v.sort.clone()));
                    let r = self.formula(body);
                    self.bound.pop();
                    r
                }
            }
        }
    }

    Checker {
        sig,
        bound: Vec::new(),
        free: HashMap::new(),
    }
    .formula(formula)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssignmentError {
    #[error("no value for free variable `{0}`")]
    Missing(String),
    #[error("variable `{name}` assigned at sort `{found}`, formula expects `{expected}`")]
    SortMismatch {
        name: String,
        expected: String,
        found: String,
    },
    #[error("value {value} of `{name}` is outside its universe")]
    OutOfBounds { name: String, value: Element },
}

/// Values for free variables.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    entries: BTreeMap<String, (String, Element)>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, sort: &str, value: Element) -> Self {
        self.insert(name, sort, value);
        self
    }

    pub fn insert(&mut self, name: &str, sort: &str, value: Element) {
        self.entries
            .insert(name.to_string(), (sort.to_string(), value));
    }

    pub fn get(&self, name: &str) -> Option<(&str, Element)> {
        self.entries.get(name).map(|(s, v)| (s.as_str(), *v))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, Element)> {
        self.entries
            .iter()
            .map(|(n, (s, v))| (n.as_str(), s.as_str(), *v))
    }

    /// Checks that every listed variable has a value of the right sort.
    pub fn check_covers(&self, vars: &[(String, String)]) -> Result<(), AssignmentError> {
        for (name, sort) in vars {
            match self.entries.get(name) {
                None => return Err(AssignmentError::Missing(name.clone())),
                Some((s, _)) if s != sort => {
                    return Err(AssignmentError::SortMismatch {
                        name: name.clone(),
                        expected: sort.clone(),
                        found: s.clone(),
                    })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph_sig() -> Signature {
        Signature::builder()
            .sort("S")
            .sort("K")
            .relation("E", &["S", "S"])
            .constant("c", "K")
            .build()
            .unwrap()
    }

    fn exy() -> Formula {
        Formula::rel("E", vec![Term::var("x", "S"), Term::var("y", "S")])
    }

    #[test]
    fn free_variables_of_atom() {
        assert_eq!(
            free_variables(&exy()),
            vec![("x".into(), "S".into()), ("y".into(), "S".into())]
        );
    }

    #[test]
    fn free_variables_skip_bound() {
        let f = Formula::exists("x", "S", exy());
        assert_eq!(free_variables(&f), vec![("y".into(), "S".into())]);
        let s = Formula::forall("x", "S", Formula::exists("y", "S", exy()));
        assert!(free_variables(&s).is_empty());
    }

    #[test]
    fn sort_check_accepts_atom() {
        assert!(sort_check(&exy(), &graph_sig()).is_ok());
    }

    #[test]
    fn sort_check_arity_mismatch() {
        let f = Formula::rel("E", vec![Term::var("x", "S")]);
        let err = sort_check(&f, &graph_sig()).unwrap_err();
        assert_eq!(err.kind, DiagnosticKind::ArityMismatch);
    }

    #[test]
    fn sort_check_sort_mismatch() {
        let f = Formula::eq(Term::var("x", "S"), Term::constant("c"));
        let err = sort_check(&f, &graph_sig()).unwrap_err();
        assert_eq!(err.kind, DiagnosticKind::SortMismatch);
    }

    #[test]
    fn sort_check_unknown_symbol() {
        let f = Formula::rel("R", vec![Term::var("x", "S")]);
        let err = sort_check(&f, &graph_sig()).unwrap_err();
        assert_eq!(err.kind, DiagnosticKind::UnknownSymbol);
    }

    #[test]
    fn sort_check_inconsistent_free_variable() {
        let f = exy().and(Formula::eq(Term::var("x", "K"), Term::constant("c")));
        let err = sort_check(&f, &graph_sig()).unwrap_err();
        assert_eq!(err.kind, DiagnosticKind::SortMismatch);
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = Signature::builder()
            .sort("S")
            .relation("E", &["S"])
            .relation("E", &["S", "S"])
            .build()
            .unwrap_err();
        assert!(matches!(err, SignatureError::DuplicateName { .. }));
        let err = Signature::builder().sort("S").relation("E", &["T"]).build().unwrap_err();
        assert!(matches!(err, SignatureError::UnknownSort { .. }));
    }

    #[test]
    fn structure_rejects_out_of_bounds_tuple() {
        let sig = Arc::new(graph_sig());
        let err = FiniteStructure::builder(sig, vec![3, 1])
            .relation_tuples("E", vec![vec![0, 3]])
            .constant("c", 0)
            .build()
            .unwrap_err();
        assert!(matches!(err, StructureError::OutOfBounds { .. }));
    }

    #[test]
    fn structure_rejects_partial_function() {
        let sig = Arc::new(
            Signature::builder()
                .sort("G")
                .function("f", &["G"], "G")
                .build()
                .unwrap(),
        );
        let err = FiniteStructure::builder(sig, vec![2])
            .function_rows("f", vec![vec![0, 1]])
            .build()
            .unwrap_err();
        assert!(matches!(err, StructureError::NotTotal { ref args, .. } if args == &vec![1]));
    }

    #[test]
    fn empty_universe_rejected() {
        let sig = Arc::new(graph_sig());
        let err = FiniteStructure::builder(sig, vec![0, 1])
            .constant("c", 0)
            .build()
            .unwrap_err();
        assert!(matches!(err, StructureError::EmptyUniverse(_)));
    }

    #[test]
    fn sparse_and_dense_tables_agree() {
        let tuples = vec![vec![1, 2], vec![0, 0]];
        let dense = build_tuple_table("E", &[3, 3], tuples.clone()).unwrap();
        let sparse = RelationTable::Sparse(tuples.into_iter().map(Vec::into_boxed_slice).collect());
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(dense.contains(&[a, b]), sparse.contains(&[a, b]));
            }
        }
    }

    #[test]
    fn rename_respects_binders() {
        let f = exy().and(Formula::exists("y", "S", exy()));
        let map = HashMap::from([("y".to_string(), "y_1".to_string())]);
        let renamed = f.rename_free(&map);
        let free = free_variables(&renamed);
        assert_eq!(free, vec![("x".into(), "S".into()), ("y_1".into(), "S".into())]);
    }
}
