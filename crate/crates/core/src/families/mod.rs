//! Structure families indexed by a natural number, plus finite fields,
//! vector spaces, homocyclic groups, small groups and word maps.
//!
//! The equivalence-relation families and `convsupersimple` grow like n^n, so
//! they are described block-wise (see [`crate::engine::BlockStructure`]) and
//! only materialized on request. Elements are numbered consecutively, class
//! by class, in the order the classes are listed below.
//!
//! | family | index | structure |
//! |---|---|---|
//! | `earlyexample` | k | `E` with one class of size i² for i = 1..k |
//! | `stablenonattainability` | n | `E` with one class of size n^i for i = 1..n |
//! | `convsupersimple` | n | n^n points, unary `P1..PK` with `P_i` the first n^(n-i) points for i <= n, empty after |
//! | `findelta` | n | `E` with n classes of size n^i for each i = 1..n |
//! | `rank2classes` | n | `E` with n classes of size n, then one of size n² |
//! | `vectorspace` | dim | F_q^dim, see [`make_vector_space`] |
//! | `homocyclic` | n | (Z/p^n)^m, see [`make_homocyclic`] |

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{
    BlockElement, BlockRelation, BlockStructure, Bindings, Count, ElementRef, EngineConfig,
    EngineError, Model,
};
use crate::logic::{free_variables, FiniteStructure, Formula, Signature};

pub mod field;
pub mod groups;
pub mod homocyclic;
pub mod vector;
pub mod words;

pub use field::FiniteField;
pub use groups::FiniteGroup;
pub use homocyclic::{make_homocyclic, Homocyclic};
pub use vector::{make_vector_space, VectorSpace};
pub use words::{triple_product_covers, word_image, TripleProduct, WordExpr};

/// Largest universe [`FamilyHandle::generate`] will write out.
pub const MAX_GENERATED: u64 = 1 << 22;
/// Largest number of blocks a block-described member may have.
pub const MAX_BLOCKS: u64 = 100_000;

#[derive(Debug, Error)]
pub enum FamilyError {
    #[error("unknown family `{0}`")]
    UnknownFamily(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("index {index} out of range for {family}: {reason}")]
    IndexOutOfRange {
        family: String,
        index: u64,
        reason: String,
    },
    #[error("too large: {0}")]
    TooLarge(String),
    #[error("unknown selector `{selector}` for {family}")]
    UnknownSelector { family: String, selector: String },
    #[error("at index {index}: {message}")]
    AtIndex { index: u64, message: String },
}

pub fn is_prime(p: u64) -> bool {
    p >= 2 && (2..).take_while(|d| d * d <= p).all(|d| p % d != 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FamilyId {
    EarlyExample,
    StableNonattainability,
    ConvSupersimple,
    FinDelta,
    Rank2Classes,
    VectorSpace,
    Homocyclic,
}

impl FamilyId {
    pub const ALL: [FamilyId; 7] = [
        FamilyId::EarlyExample,
        FamilyId::StableNonattainability,
        FamilyId::ConvSupersimple,
        FamilyId::FinDelta,
        FamilyId::Rank2Classes,
        FamilyId::VectorSpace,
        FamilyId::Homocyclic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyId::EarlyExample => "earlyexample",
            FamilyId::StableNonattainability => "stablenonattainability",
            FamilyId::ConvSupersimple => "convsupersimple",
            FamilyId::FinDelta => "findelta",
            FamilyId::Rank2Classes => "rank2classes",
            FamilyId::VectorSpace => "vectorspace",
            FamilyId::Homocyclic => "homocyclic",
        }
    }

    pub fn from_name(name: &str) -> Result<Self, FamilyError> {
        FamilyId::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| FamilyError::UnknownFamily(name.to_string()))
    }

    fn schema(self) -> FamilySchema {
        let p = |name, default, description| ParamSchema {
            name,
            default,
            description,
        };
        let equivalence_selectors = vec!["element-<id>", "class-<j>"];
        let (description, index, params, mut selectors) = match self {
            FamilyId::EarlyExample => (
                "equivalence relation with one class of size i^2 for each i <= k",
                "k >= 1",
                vec![],
                equivalence_selectors,
            ),
            FamilyId::StableNonattainability => (
                "equivalence relation with one class of size n^i for each i <= n",
                "n >= 1",
                vec![],
                equivalence_selectors,
            ),
            FamilyId::ConvSupersimple => (
                "n^n points with nested unary predicates, |P_i| = n^(n-i) for i <= n",
                "n >= 1",
                vec![p("predicates", 8, "number of predicate symbols P1..PK")],
                vec!["element-<id>", "block-<j>"],
            ),
            FamilyId::FinDelta => (
                "equivalence relation with n classes of size n^i for each i <= n",
                "n >= 1",
                vec![],
                equivalence_selectors,
            ),
            FamilyId::Rank2Classes => (
                "equivalence relation with n classes of size n and one of size n^2",
                "n >= 1",
                vec![],
                equivalence_selectors,
            ),
            FamilyId::VectorSpace => (
                "the vector space F_q^dim with its field and independence relations",
                "dim >= 1",
                vec![p("q", 2, "field size, a prime power <= 9")],
                vec!["zero", "e<i>", "vector-<id>", "field-<id>"],
            ),
            FamilyId::Homocyclic => (
                "the group (Z/p^n Z)^m",
                "n >= 1",
                vec![p("p", 2, "prime"), p("m", 1, "number of cyclic summands")],
                vec!["zero", "generator", "element-<id>"],
            ),
        };
        match self {
            FamilyId::StableNonattainability => selectors.push("class-rank-<t>"),
            FamilyId::FinDelta => selectors.push("class-size-<i>"),
            FamilyId::Rank2Classes => selectors.extend(["big-class", "small-class"]),
            FamilyId::ConvSupersimple => selectors.extend(["only-P<i>", "outside"]),
            _ => {}
        }
        FamilySchema {
            name: self.name(),
            description,
            index,
            params,
            selectors,
        }
    }
}

impl fmt::Display for FamilyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamSchema {
    pub name: &'static str,
    pub default: u64,
    pub description: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilySchema {
    pub name: &'static str,
    pub description: &'static str,
    pub index: &'static str,
    pub params: Vec<ParamSchema>,
    pub selectors: Vec<&'static str>,
}

pub fn list_families() -> Vec<FamilySchema> {
    FamilyId::ALL.into_iter().map(FamilyId::schema).collect()
}

/// A family with its generator parameters fixed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyHandle {
    id: FamilyId,
    params: BTreeMap<String, u64>,
}

/// Block layout of a block-described member: sizes plus relation tables.
struct Layout {
    sizes: Vec<BigUint>,
    relations: Vec<BlockRelation>,
}

impl FamilyHandle {
    /// Unlisted parameters take their defaults; unknown names are rejected.
    pub fn new(name: &str, params: &BTreeMap<String, u64>) -> Result<Self, FamilyError> {
        let id = FamilyId::from_name(name)?;
        let schema = id.schema();
        let mut full = BTreeMap::new();
        for ps in &schema.params {
            full.insert(ps.name.to_string(), ps.default);
        }
        for (k, &v) in params {
            if !full.contains_key(k) {
                return Err(FamilyError::InvalidParameter(format!(
                    "{name} has no parameter `{k}`"
                )));
            }
            full.insert(k.clone(), v);
        }
        let h = FamilyHandle { id, params: full };
        match id {
            FamilyId::ConvSupersimple if !(1..=1024).contains(&h.param("predicates")) => Err(
                FamilyError::InvalidParameter("predicates must lie in 1..=1024".into()),
            ),
            FamilyId::VectorSpace => FiniteField::new(h.param("q") as u32).map(|_| h),
            FamilyId::Homocyclic if !is_prime(h.param("p")) => Err(FamilyError::InvalidParameter(
                format!("{} is not prime", h.param("p")),
            )),
            FamilyId::Homocyclic if h.param("m") == 0 => {
                Err(FamilyError::InvalidParameter("m must be positive".into()))
            }
            _ => Ok(h),
        }
    }

    pub fn named(name: &str) -> Result<Self, FamilyError> {
        Self::new(name, &BTreeMap::new())
    }

    pub fn id(&self) -> FamilyId {
        self.id
    }

    pub fn params(&self) -> &BTreeMap<String, u64> {
        &self.params
    }

    fn param(&self, name: &str) -> u64 {
        self.params[name]
    }

    /// `name` or `name(k=v,...)`.
    pub fn describe(&self) -> String {
        if self.params.is_empty() {
            return self.id.name().to_string();
        }
        let ps: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}({})", self.id.name(), ps.join(","))
    }

    fn out_of_range(&self, index: u64, reason: impl Into<String>) -> FamilyError {
        FamilyError::IndexOutOfRange {
            family: self.id.name().into(),
            index,
            reason: reason.into(),
        }
    }

    fn layout(&self, index: u64) -> Result<Layout, FamilyError> {
        if index == 0 {
            return Err(self.out_of_range(index, "indices start at 1"));
        }
        let n = BigUint::from(index);
        let blocks = match self.id {
            FamilyId::EarlyExample | FamilyId::StableNonattainability => index,
            FamilyId::FinDelta => index.saturating_mul(index),
            FamilyId::Rank2Classes => index + 1,
            FamilyId::ConvSupersimple => index.min(self.param("predicates")) + 1,
            FamilyId::VectorSpace | FamilyId::Homocyclic => unreachable!("explicit families"),
        };
        if blocks > MAX_BLOCKS {
            return Err(self.out_of_range(index, format!("more than {MAX_BLOCKS} blocks")));
        }
        let pow = |e: u64| n.pow(e as u32);
        let classes = |sizes: Vec<BigUint>| {
            let labels = (0..sizes.len() as u32).collect();
            Layout {
                sizes,
                relations: vec![BlockRelation::Equivalence(labels)],
            }
        };
        Ok(match self.id {
            FamilyId::EarlyExample => classes((1..=index).map(|i| BigUint::from(i * i)).collect()),
            FamilyId::StableNonattainability => classes((1..=index).map(pow).collect()),
            FamilyId::FinDelta => classes(
                (1..=index)
                    .flat_map(|i| std::iter::repeat(pow(i)).take(index as usize))
                    .collect(),
            ),
            FamilyId::Rank2Classes => {
                let mut sizes = vec![n.clone(); index as usize];
                sizes.push(pow(2));
                classes(sizes)
            }
            FamilyId::ConvSupersimple => {
                let k = self.param("predicates");
                let m = index.min(k);
                // breakpoints b_i = n^(n-i) for i = 1..m, descending in size
                let bps: Vec<BigUint> = (1..=m).map(|i| pow(index - i)).collect();
                // ascending intervals [0,b_m), [b_m, b_{m-1}), ..., [b_1, n^n)
                let mut cuts = vec![BigUint::zero()];
                cuts.extend(bps.iter().rev().cloned());
                cuts.push(pow(index));
                let mut sizes = Vec::new();
                // depth[j] = number of predicates containing block j
                let mut depth = Vec::new();
                for (j, w) in cuts.windows(2).enumerate() {
                    if w[1] > w[0] {
                        sizes.push(&w[1] - &w[0]);
                        depth.push(m - j as u64);
                    }
                }
                let relations = (1..=k)
                    .map(|i| BlockRelation::Unary(depth.iter().map(|&d| i <= d).collect()))
                    .collect();
                Layout { sizes, relations }
            }
            FamilyId::VectorSpace | FamilyId::Homocyclic => unreachable!(),
        })
    }

    fn block_signature(&self) -> Signature {
        let b = Signature::builder().sort("S");
        let b = if self.id == FamilyId::ConvSupersimple {
            (1..=self.param("predicates")).fold(b, |b, i| b.relation(&format!("P{i}"), &["S"]))
        } else {
            b.relation("E", &["S", "S"])
        };
        b.build().expect("fixed signature")
    }

    /// The member at `index`, block-described where the family allows it.
    pub fn model(&self, index: u64) -> Result<Model, FamilyError> {
        match self.id {
            FamilyId::VectorSpace => {
                let dim = u32::try_from(index).map_err(|_| self.out_of_range(index, "too big"))?;
                if dim == 0 {
                    return Err(self.out_of_range(index, "dimension must be positive"));
                }
                Ok(Model::Finite(Arc::new(make_vector_space(
                    self.param("q") as u32,
                    dim,
                )?)))
            }
            FamilyId::Homocyclic => {
                let n = u32::try_from(index).map_err(|_| self.out_of_range(index, "too big"))?;
                Ok(Model::Finite(Arc::new(make_homocyclic(
                    self.param("p"),
                    n,
                    self.param("m") as u32,
                )?)))
            }
            _ => {
                let layout = self.layout(index)?;
                let bs = BlockStructure::new(
                    Arc::new(self.block_signature()),
                    vec![layout.sizes],
                    layout.relations,
                    vec![],
                )
                .map_err(|e| FamilyError::InvalidParameter(e.to_string()))?;
                Ok(Model::Blocks(Arc::new(bs)))
            }
        }
    }

    /// The member at `index` as an explicit structure.
    pub fn generate(&self, index: u64) -> Result<FiniteStructure, FamilyError> {
        let model = self.model(index)?;
        let size = self.universe_size(index)?;
        if size > BigUint::from(MAX_GENERATED) {
            return Err(FamilyError::TooLarge(format!(
                "{} at index {index} has {size} elements, more than {MAX_GENERATED}",
                self.id
            )));
        }
        let m = model
            .materialize(MAX_GENERATED)
            .ok_or_else(|| FamilyError::TooLarge(format!("{} at index {index}", self.id)))?;
        Ok(Arc::try_unwrap(m).unwrap_or_else(|m| (*m).clone()))
    }

    /// Size of the main sort (`S`, `V` or `G`) from the closed form.
    pub fn universe_size(&self, index: u64) -> Result<BigUint, FamilyError> {
        match self.id {
            FamilyId::VectorSpace => Ok(BigUint::from(self.param("q")).pow(index as u32)),
            FamilyId::Homocyclic => Ok(BigUint::from(self.param("p"))
                .pow((index * self.param("m")) as u32)),
            _ => Ok(self.layout(index)?.sizes.iter().sum()),
        }
    }

    /// Resolves a named selector to an element of the member at `index`.
    pub fn select(&self, selector: &str, index: u64) -> Result<(String, ElementRef), FamilyError> {
        let unknown = || FamilyError::UnknownSelector {
            family: self.id.name().into(),
            selector: selector.into(),
        };
        let num = |prefix: &str| -> Option<u64> { selector.strip_prefix(prefix)?.parse().ok() };
        let missing = |what: String| FamilyError::AtIndex {
            index,
            message: format!("selector `{selector}`: {what}"),
        };
        match self.id {
            FamilyId::VectorSpace => {
                let vs = VectorSpace::new(self.param("q") as u32, index as u32)?;
                let (sort, id) = if selector == "zero" {
                    ("V", Some(0))
                } else if let Some(i) = num("e") {
                    let ok = (1..=index).contains(&i);
                    ("V", ok.then(|| vs.basis(i as u32 - 1)))
                } else if let Some(k) = num("vector-") {
                    ("V", (k < vs.size() as u64).then_some(k as u32))
                } else if let Some(k) = num("field-") {
                    ("F", (k < vs.q() as u64).then_some(k as u32))
                } else {
                    return Err(unknown());
                };
                let id = id.ok_or_else(|| missing("no such element".into()))?;
                Ok((sort.into(), ElementRef::Id(id)))
            }
            FamilyId::Homocyclic => {
                let g = Homocyclic::new(self.param("p"), index as u32, self.param("m") as u32)?;
                let id = match selector {
                    "zero" => Some(0),
                    "generator" => Some(1),
                    _ => {
                        let k = num("element-").ok_or_else(unknown)?;
                        (k < g.order()).then_some(k as u32)
                    }
                };
                let id = id.ok_or_else(|| missing("no such element".into()))?;
                Ok(("G".into(), ElementRef::Id(id)))
            }
            _ => {
                let layout = self.layout(index)?;
                let nblocks = layout.sizes.len() as u64;
                let block = if let Some(k) = num("element-") {
                    let total: BigUint = layout.sizes.iter().sum();
                    if BigUint::from(k) >= total {
                        return Err(missing(format!("only {total} elements")));
                    }
                    let mut rest = BigUint::from(k);
                    let mut b = 0;
                    while rest >= layout.sizes[b] {
                        rest -= &layout.sizes[b];
                        b += 1;
                    }
                    return Ok((
                        "S".into(),
                        ElementRef::Block(BlockElement {
                            block: b,
                            offset: rest,
                        }),
                    ));
                } else if let Some(j) = num("class-").or_else(|| num("block-")) {
                    (1..=nblocks).contains(&j).then(|| j - 1)
                } else {
                    self.special_block(selector, index, nblocks)
                        .ok_or_else(unknown)?
                };
                let b = block.ok_or_else(|| missing("no such class".into()))?;
                Ok(("S".into(), ElementRef::Block(BlockElement::first(b as usize))))
            }
        }
    }

    /// Family-specific block selectors; `Some(None)` when recognised but absent at this index.
    fn special_block(&self, selector: &str, index: u64, nblocks: u64) -> Option<Option<u64>> {
        let num = |prefix: &str| -> Option<u64> { selector.strip_prefix(prefix)?.parse().ok() };
        match self.id {
            // the class of size n^(n-t) is block n-t-1
            FamilyId::StableNonattainability => {
                let t = num("class-rank-")?;
                Some((t < index).then(|| index - t - 1))
            }
            FamilyId::FinDelta => {
                let i = num("class-size-")?;
                Some((1..=index).contains(&i).then(|| (i - 1) * index))
            }
            FamilyId::Rank2Classes => match selector {
                "big-class" => Some(Some(index)),
                "small-class" => Some(Some(0)),
                _ => None,
            },
            FamilyId::ConvSupersimple => {
                let m = index.min(self.param("predicates"));
                if selector == "outside" {
                    // the last block lies outside P1 unless n = 1
                    return Some((index > 1).then(|| nblocks - 1));
                }
                let i = num("only-P")?;
                // block of depth d is block m - d; P_i \ P_{i+1} has depth i
                Some((1..=m).contains(&i).then(|| m - i).filter(|&b| b < nblocks))
            }
            _ => None,
        }
    }
}

impl fmt::Display for FamilyHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SequenceEntry {
    pub index: u64,
    pub count: Count,
}

/// Exact counts of one formula along a family.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CardinalitySequence {
    pub family: String,
    pub formula: String,
    pub selector: String,
    pub entries: Vec<SequenceEntry>,
}

impl CardinalitySequence {
    pub fn indices(&self) -> Vec<u64> {
        self.entries.iter().map(|e| e.index).collect()
    }

    pub fn log_counts(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.count.log_value()).collect()
    }

    /// Each count times `c`, for building comparison fixtures.
    pub fn scaled(&self, c: u64) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            e.count = Count::new(e.count.value() * c);
        }
        out
    }
}

/// `name=selector` pairs as written on the command line.
pub fn describe_selector(selector: &[(String, String)]) -> String {
    selector
        .iter()
        .map(|(v, s)| format!("{v}={s}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Resolves `selector` at one index.
pub fn bind_selector(
    family: &FamilyHandle,
    selector: &[(String, String)],
    index: u64,
) -> Result<Bindings, FamilyError> {
    let mut out = Bindings::new();
    for (var, sel) in selector {
        out.insert(var.clone(), family.select(sel, index)?);
    }
    Ok(out)
}

/// Counts `f` at each index, with the selector's variables fixed and every
/// other free variable counted.
pub fn count_family(
    f: &Formula,
    family: &FamilyHandle,
    indices: &[u64],
    selector: &[(String, String)],
    cfg: &EngineConfig,
) -> Result<CardinalitySequence, FamilyError> {
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FamilyError::InvalidParameter(
            "indices must be strictly increasing".into(),
        ));
    }
    let counted: Vec<String> = free_variables(f)
        .into_iter()
        .map(|(n, _)| n)
        .filter(|n| !selector.iter().any(|(v, _)| v == n))
        .collect();
    let counted: Vec<&str> = counted.iter().map(String::as_str).collect();
    let mut entries = Vec::with_capacity(indices.len());
    for &index in indices {
        let at = |e: FamilyError| match e {
            FamilyError::AtIndex { .. } => e,
            other => FamilyError::AtIndex {
                index,
                message: other.to_string(),
            },
        };
        let model = family.model(index).map_err(at)?;
        let fixed = bind_selector(family, selector, index).map_err(at)?;
        let count = model
            .count(f, &fixed, &counted, cfg)
            .map_err(|e: EngineError| at(FamilyError::InvalidParameter(e.to_string())))?;
        entries.push(SequenceEntry { index, count });
    }
    Ok(CardinalitySequence {
        family: family.describe(),
        formula: crate::parser::render_formula(f),
        selector: describe_selector(selector),
        entries,
    })
}

/// Total number of tuples of `params` in the member at `index`, summed over
/// all parameter types: a cross-check on [`Model::parameter_space`].
pub fn parameter_mass(model: &Model, params: &[(String, String)]) -> Result<BigUint, EngineError> {
    Ok(model
        .parameter_space(params, u64::MAX)?
        .into_iter()
        .map(|(w, _)| w)
        .fold(BigUint::zero(), |a, w| a + w))
}
