//! JSON interchange format for finite structures.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logic::{Element, FiniteStructure, Signature, SignatureError, StructureError};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read structure file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed structure JSON: {0}")]
    Schema(String),
    #[error("invalid structure: {0}")]
    Invariant(String),
}

impl From<SignatureError> for LoadError {
    fn from(e: SignatureError) -> Self {
        LoadError::Invariant(e.to_string())
    }
}

impl From<StructureError> for LoadError {
    fn from(e: StructureError) -> Self {
        LoadError::Invariant(e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SortJson {
    pub name: String,
    pub size: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RelationJson {
    pub name: String,
    pub sorts: Vec<String>,
    pub tuples: Vec<Vec<Element>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct FunctionJson {
    pub name: String,
    pub arg_sorts: Vec<String>,
    pub result_sort: String,
    pub table: Vec<Vec<Element>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ConstantJson {
    pub name: String,
    pub sort: String,
    pub value: Element,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StructureJson {
    pub sorts: Vec<SortJson>,
    #[serde(default)]
    pub relations: Vec<RelationJson>,
    #[serde(default)]
    pub functions: Vec<FunctionJson>,
    #[serde(default)]
    pub constants: Vec<ConstantJson>,
}

impl StructureJson {
    pub fn into_structure(self) -> Result<FiniteStructure, LoadError> {
        let mut sb = Signature::builder();
        for s in &self.sorts {
            sb = sb.sort(&s.name);
        }
        for r in &self.relations {
            let sorts: Vec<&str> = r.sorts.iter().map(String::as_str).collect();
            sb = sb.relation(&r.name, &sorts);
        }
        for f in &self.functions {
            let sorts: Vec<&str> = f.arg_sorts.iter().map(String::as_str).collect();
            sb = sb.function(&f.name, &sorts, &f.result_sort);
        }
        for c in &self.constants {
            sb = sb.constant(&c.name, &c.sort);
        }
        let sig = Arc::new(sb.build()?);
        let mut b = FiniteStructure::builder(sig, self.sorts.iter().map(|s| s.size).collect());
        for s in self.sorts {
            if let Some(l) = s.labels {
                b = b.labels(&s.name, l);
            }
        }
        for r in self.relations {
            b = b.relation_tuples(&r.name, r.tuples);
        }
        for f in self.functions {
            b = b.function_rows(&f.name, f.table);
        }
        for c in self.constants {
            b = b.constant(&c.name, c.value);
        }
        Ok(b.build()?)
    }
}

pub fn parse_structure(text: &str) -> Result<FiniteStructure, LoadError> {
    let json: StructureJson =
        serde_json::from_str(text).map_err(|e| LoadError::Schema(e.to_string()))?;
    json.into_structure()
}

pub fn load_structure(path: impl AsRef<Path>) -> Result<FiniteStructure, LoadError> {
    let text = std::fs::read_to_string(path)?;
    parse_structure(&text)
}

/// Exports a structure; `None` if a computed relation is too large to list.
pub fn structure_to_json(m: &FiniteStructure, tuple_limit: u64) -> Option<StructureJson> {
    let sig = m.signature();
    let sorts = sig
        .sorts()
        .iter()
        .enumerate()
        .map(|(i, name)| SortJson {
            name: name.clone(),
            size: m.size(i),
            labels: None,
        })
        .collect();
    let mut relations = Vec::new();
    for (i, r) in sig.relations().iter().enumerate() {
        relations.push(RelationJson {
            name: r.name.clone(),
            sorts: r.arg_sorts.iter().map(|&s| sig.sort_name(s).to_string()).collect(),
            tuples: m.relation_tuples(i, tuple_limit)?,
        });
    }
    let functions = sig
        .functions()
        .iter()
        .enumerate()
        .map(|(i, f)| FunctionJson {
            name: f.name.clone(),
            arg_sorts: f.arg_sorts.iter().map(|&s| sig.sort_name(s).to_string()).collect(),
            result_sort: sig.sort_name(f.result_sort).to_string(),
            table: m.function_rows(i),
        })
        .collect();
    let constants = sig
        .constants()
        .iter()
        .enumerate()
        .map(|(i, c)| ConstantJson {
            name: c.name.clone(),
            sort: sig.sort_name(c.sort).to_string(),
            value: m.constant_value(i),
        })
        .collect();
    Some(StructureJson {
        sorts,
        relations,
        functions,
        constants,
    })
}
