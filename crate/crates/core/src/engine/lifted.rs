//! Counting over block-homogeneous structures without materializing them.
//!
//! A [`BlockStructure`] splits each sort into blocks of (possibly enormous)
//! size. Every relation is determined by blocks: unary relations are unions
//! of blocks and binary equivalences have unions of blocks as classes. Any
//! permutation that preserves each block is then an automorphism, so once
//! finitely many elements are named, all unnamed elements of a block behave
//! identically. A variable therefore only needs to range over the named
//! elements of its sort plus one fresh representative per block, the latter
//! weighted by the number of unnamed elements it stands for. Counts obtained
//! this way are exact.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::logic::{
    Element, FiniteStructure, Formula, Signature, SortId, StructureError,
};

use super::eval::{compile, CForm, CTerm};
use super::exec::{Budget, Meter};
use super::EngineError;

/// An element named by its block and its position inside the block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct BlockElement {
    pub block: usize,
    #[serde(serialize_with = "crate::serde_util::biguint_str")]
    pub offset: BigUint,
}

impl BlockElement {
    pub fn first(block: usize) -> Self {
        BlockElement {
            block,
            offset: BigUint::zero(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockRelation {
    /// Membership flag per block of the argument sort.
    Unary(Vec<bool>),
    /// Class label per block; two elements are related iff their blocks share a label.
    Equivalence(Vec<u32>),
}

#[derive(Debug, Clone)]
pub struct BlockStructure {
    signature: Arc<Signature>,
    blocks: Vec<Vec<BigUint>>,
    relations: Vec<BlockRelation>,
    constants: Vec<BlockElement>,
}

impl BlockStructure {
    pub fn new(
        signature: Arc<Signature>,
        blocks: Vec<Vec<BigUint>>,
        relations: Vec<BlockRelation>,
        constants: Vec<BlockElement>,
    ) -> Result<Self, StructureError> {
        let bad = |symbol: &str, reason: &str| StructureError::BadRelation {
            symbol: symbol.to_string(),
            reason: reason.to_string(),
        };
        if blocks.len() != signature.sorts().len() {
            return Err(StructureError::SizeCount {
                expected: signature.sorts().len(),
                found: blocks.len(),
            });
        }
        for (s, bl) in blocks.iter().enumerate() {
            if bl.is_empty() || bl.iter().any(Zero::is_zero) {
                return Err(StructureError::EmptyUniverse(signature.sort_name(s).to_string()));
            }
        }
        if let Some(f) = signature.functions().first() {
            return Err(bad(&f.name, "block structures carry no function symbols"));
        }
        if relations.len() != signature.relations().len() {
            return Err(bad("*", "one block table per relation symbol is required"));
        }
        for (sym, rel) in signature.relations().iter().zip(&relations) {
            match rel {
                BlockRelation::Unary(flags) => {
                    if sym.arg_sorts.len() != 1 || flags.len() != blocks[sym.arg_sorts[0]].len() {
                        return Err(bad(&sym.name, "unary table does not match its sort"));
                    }
                }
                BlockRelation::Equivalence(labels) => {
                    if sym.arg_sorts.len() != 2
                        || sym.arg_sorts[0] != sym.arg_sorts[1]
                        || labels.len() != blocks[sym.arg_sorts[0]].len()
                    {
                        return Err(bad(&sym.name, "equivalence table does not match its sort"));
                    }
                }
            }
        }
        if constants.len() != signature.constants().len() {
            return Err(StructureError::MissingConstant("*".into()));
        }
        for (sym, c) in signature.constants().iter().zip(&constants) {
            let ok = blocks[sym.sort]
                .get(c.block)
                .is_some_and(|size| c.offset < *size);
            if !ok {
                return Err(StructureError::OutOfBounds {
                    symbol: sym.name.clone(),
                    tuple: vec![],
                });
            }
        }
        Ok(BlockStructure {
            signature,
            blocks,
            relations,
            constants,
        })
    }

    pub fn signature(&self) -> &Arc<Signature> {
        &self.signature
    }

    pub fn blocks(&self, sort: SortId) -> &[BigUint] {
        &self.blocks[sort]
    }

    pub fn relation(&self, index: usize) -> &BlockRelation {
        &self.relations[index]
    }

    pub fn universe_size(&self, sort: SortId) -> BigUint {
        self.blocks[sort].iter().sum()
    }

    pub fn block_start(&self, sort: SortId, block: usize) -> BigUint {
        self.blocks[sort][..block].iter().sum()
    }

    pub fn contains(&self, sort: SortId, e: &BlockElement) -> bool {
        self.blocks[sort].get(e.block).is_some_and(|s| e.offset < *s)
    }

    /// Position of `e` in the consecutive numbering used by [`Self::materialize`].
    pub fn element_id(&self, sort: SortId, e: &BlockElement) -> Option<BigUint> {
        self.contains(sort, e)
            .then(|| self.block_start(sort, e.block) + &e.offset)
    }

    pub fn locate(&self, sort: SortId, id: &BigUint) -> Option<BlockElement> {
        let mut rest = id.clone();
        for (b, size) in self.blocks[sort].iter().enumerate() {
            if rest < *size {
                return Some(BlockElement {
                    block: b,
                    offset: rest,
                });
            }
            rest -= size;
        }
        None
    }

    /// Expands into an explicit structure when every sort has at most `max_elements` elements.
    pub fn materialize(&self, max_elements: u64) -> Option<FiniteStructure> {
        let mut sizes = Vec::new();
        let mut block_of: Vec<Vec<u32>> = Vec::new();
        for bl in &self.blocks {
            let total = bl.iter().sum::<BigUint>().to_u64()?;
            if total > max_elements || total > u32::MAX as u64 {
                return None;
            }
            sizes.push(total as u32);
            let mut owner = Vec::with_capacity(total as usize);
            for (b, size) in bl.iter().enumerate() {
                owner.extend(std::iter::repeat(b as u32).take(size.to_usize()?));
            }
            block_of.push(owner);
        }
        let sig = &self.signature;
        let mut builder = FiniteStructure::builder(sig.clone(), sizes);
        for (sym, rel) in sig.relations().iter().zip(&self.relations) {
            let owner = &block_of[sym.arg_sorts[0]];
            builder = match rel {
                BlockRelation::Unary(flags) => builder.relation_tuples(
                    &sym.name,
                    owner
                        .iter()
                        .enumerate()
                        .filter(|(_, &b)| flags[b as usize])
                        .map(|(e, _)| vec![e as Element])
                        .collect::<Vec<_>>(),
                ),
                BlockRelation::Equivalence(labels) => builder.relation_partition(
                    &sym.name,
                    owner.iter().map(|&b| labels[b as usize]).collect(),
                ),
            };
        }
        for (sym, c) in sig.constants().iter().zip(&self.constants) {
            builder = builder.constant(&sym.name, self.element_id(sym.sort, c)?.to_u32()?);
        }
        builder.build().ok()
    }

    /// Representatives of every parameter type for variables of the given
    /// sorts, each with the number of concrete tuples it stands for.
    pub fn parameter_types(&self, sorts: &[SortId]) -> Vec<(BigUint, Vec<BlockElement>)> {
        let mut out = Vec::new();
        let mut chosen: Vec<(SortId, BlockElement)> = self
            .signature
            .constants()
            .iter()
            .zip(&self.constants)
            .map(|(sym, c)| (sym.sort, c.clone()))
            .collect();
        let pinned = chosen.len();
        self.types_rec(sorts, &mut chosen, pinned, BigUint::one(), &mut out);
        out
    }

    fn types_rec(
        &self,
        sorts: &[SortId],
        chosen: &mut Vec<(SortId, BlockElement)>,
        pinned: usize,
        weight: BigUint,
        out: &mut Vec<(BigUint, Vec<BlockElement>)>,
    ) {
        let Some((&sort, rest)) = sorts.split_first() else {
            out.push((weight, chosen[pinned..].iter().map(|(_, e)| e.clone()).collect()));
            return;
        };
        let mut distinct: Vec<BlockElement> = Vec::new();
        for (s, e) in chosen.iter() {
            if *s == sort && !distinct.contains(e) {
                distinct.push(e.clone());
            }
        }
        for e in &distinct {
            chosen.push((sort, e.clone()));
            self.types_rec(rest, chosen, pinned, weight.clone(), out);
            chosen.pop();
        }
        for (b, size) in self.blocks[sort].iter().enumerate() {
            let used: Vec<&BigUint> = distinct
                .iter()
                .filter(|e| e.block == b)
                .map(|e| &e.offset)
                .collect();
            let free = size - BigUint::from(used.len());
            if free.is_zero() {
                continue;
            }
            let mut offset = BigUint::zero();
            while used.contains(&&offset) {
                offset += 1u32;
            }
            chosen.push((sort, BlockElement { block: b, offset }));
            self.types_rec(rest, chosen, pinned, &weight * free, out);
            chosen.pop();
        }
    }
}

enum Choice {
    Named(u32),
    Fresh(usize, BigUint),
}

struct Lifted<'a> {
    bs: &'a BlockStructure,
    /// Block and sort of every element id currently in play.
    block_of: Vec<usize>,
    sort_of: Vec<SortId>,
    /// Ids in scope; pinned ones first, never popped.
    named: Vec<u32>,
}

impl Lifted<'_> {
    fn id(&self, t: &CTerm, env: &[Element]) -> u32 {
        match t {
            CTerm::Slot(s) => env[*s],
            CTerm::Const(c) => *c,
            CTerm::App(..) => unreachable!("rejected at compile time"),
        }
    }

    fn choices(&self, sort: SortId) -> Vec<Choice> {
        let mut out = Vec::new();
        let mut per_block = vec![0u64; self.bs.blocks[sort].len()];
        for &id in &self.named {
            if self.sort_of[id as usize] == sort {
                out.push(Choice::Named(id));
                per_block[self.block_of[id as usize]] += 1;
            }
        }
        for (b, size) in self.bs.blocks[sort].iter().enumerate() {
            let used = BigUint::from(per_block[b]);
            if *size > used {
                out.push(Choice::Fresh(b, size - used));
            }
        }
        out
    }

    fn push_fresh(&mut self, sort: SortId, block: usize) -> u32 {
        let id = self.block_of.len() as u32;
        self.block_of.push(block);
        self.sort_of.push(sort);
        self.named.push(id);
        id
    }

    fn pop_fresh(&mut self) {
        self.named.pop();
        self.block_of.pop();
        self.sort_of.pop();
    }

    fn eval(&mut self, f: &CForm, env: &mut [Element], meter: &mut Meter) -> bool {
        match f {
            CForm::Rel(ri, args) => match &self.bs.relations[*ri] {
                BlockRelation::Unary(flags) => {
                    flags[self.block_of[self.id(&args[0], env) as usize]]
                }
                BlockRelation::Equivalence(labels) => {
                    let a = self.block_of[self.id(&args[0], env) as usize];
                    let b = self.block_of[self.id(&args[1], env) as usize];
                    labels[a] == labels[b]
                }
            },
            CForm::Eq(a, b) => self.id(a, env) == self.id(b, env),
            CForm::Not(a) => !self.eval(a, env, meter),
            CForm::And(a, b) => self.eval(a, env, meter) && self.eval(b, env, meter),
            CForm::Or(a, b) => self.eval(a, env, meter) || self.eval(b, env, meter),
            CForm::Implies(a, b) => !self.eval(a, env, meter) || self.eval(b, env, meter),
            CForm::Exists(slot, sort, body) | CForm::Forall(slot, sort, body) => {
                let want = matches!(f, CForm::Exists(..));
                for c in self.choices(*sort) {
                    if !meter.tick() {
                        return false;
                    }
                    let hit = match c {
                        Choice::Named(id) => {
                            env[*slot] = id;
                            self.eval(body, env, meter) == want
                        }
                        Choice::Fresh(b, _) => {
                            env[*slot] = self.push_fresh(*sort, b);
                            let r = self.eval(body, env, meter) == want;
                            self.pop_fresh();
                            r
                        }
                    };
                    if hit {
                        return want;
                    }
                }
                !want
            }
        }
    }

    fn count(
        &mut self,
        counted: &[(usize, SortId)],
        body: &CForm,
        env: &mut [Element],
        meter: &mut Meter,
    ) -> BigUint {
        let Some((&(slot, sort), rest)) = counted.split_first() else {
            return if self.eval(body, env, meter) {
                BigUint::one()
            } else {
                BigUint::zero()
            };
        };
        let mut total = BigUint::zero();
        for c in self.choices(sort) {
            if !meter.tick() {
                break;
            }
            match c {
                Choice::Named(id) => {
                    env[slot] = id;
                    total += self.count(rest, body, env, meter);
                }
                Choice::Fresh(b, w) => {
                    env[slot] = self.push_fresh(sort, b);
                    let n = self.count(rest, body, env, meter);
                    self.pop_fresh();
                    if !n.is_zero() {
                        total += n * w;
                    }
                }
            }
        }
        total
    }
}

/// Counts `counted`-tuples satisfying `f` with parameters pinned by `fixed`.
/// Both lists must already be validated against the free variables of `f`.
pub(crate) fn count_blocks(
    f: &Formula,
    bs: &BlockStructure,
    fixed: &[(String, String, BlockElement)],
    counted: &[(String, String)],
    budget: &Budget,
) -> Result<BigUint, EngineError> {
    let sig = &bs.signature;
    // pinned ids: constants first, then distinct parameter values
    let mut pinned: BTreeMap<(SortId, BlockElement), u32> = BTreeMap::new();
    let mut block_of = Vec::new();
    let mut sort_of = Vec::new();
    let mut pin = |sort: SortId, e: &BlockElement, block_of: &mut Vec<usize>, sort_of: &mut Vec<SortId>| {
        *pinned.entry((sort, e.clone())).or_insert_with(|| {
            block_of.push(e.block);
            sort_of.push(sort);
            (block_of.len() - 1) as u32
        })
    };
    let const_ids: Vec<u32> = sig
        .constants()
        .iter()
        .zip(&bs.constants)
        .map(|(sym, c)| pin(sym.sort, c, &mut block_of, &mut sort_of))
        .collect();

    let mut order: Vec<(String, String)> = counted.to_vec();
    order.extend(fixed.iter().map(|(n, s, _)| (n.clone(), s.clone())));
    let compiled = compile(f, sig, &|i| const_ids[i], &order)?;
    if has_app(&compiled.root) {
        return Err(EngineError::Unsupported(
            "function symbols in a block structure".into(),
        ));
    }

    let mut env = vec![0 as Element; compiled.slots];
    for (i, (name, _, e)) in fixed.iter().enumerate() {
        let sort = compiled.free[counted.len() + i];
        if !bs.contains(sort, e) {
            return Err(EngineError::OutOfBounds(name.clone()));
        }
        env[counted.len() + i] = pin(sort, e, &mut block_of, &mut sort_of);
    }
    let named: Vec<u32> = (0..block_of.len() as u32).collect();
    let mut lifted = Lifted {
        bs,
        block_of,
        sort_of,
        named,
    };
    let slots: Vec<(usize, SortId)> = (0..counted.len()).map(|i| (i, compiled.free[i])).collect();
    let mut meter = budget.meter();
    let n = lifted.count(&slots, &compiled.root, &mut env, &mut meter);
    meter.flush();
    if budget.exhausted() {
        return Err(EngineError::BudgetExceeded(budget.used()));
    }
    Ok(n)
}

fn has_app(f: &CForm) -> bool {
    fn term(t: &CTerm) -> bool {
        matches!(t, CTerm::App(..))
    }
    match f {
        CForm::Rel(_, args) => args.iter().any(term),
        CForm::Eq(a, b) => term(a) || term(b),
        CForm::Not(a) => has_app(a),
        CForm::And(a, b) | CForm::Or(a, b) | CForm::Implies(a, b) => has_app(a) || has_app(b),
        CForm::Exists(_, _, b) | CForm::Forall(_, _, b) => has_app(b),
    }
}
