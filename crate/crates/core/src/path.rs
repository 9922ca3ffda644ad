//! Key paths through a JSON record tree.
//!
//! Two flavours exist. [`KeyPath`] is attached to every token of a
//! [`TokenStream`](crate::tokenizer::TokenStream): keys are stored as vocabulary
//! ids and array positions keep their concrete index, which is what the
//! position encoding consumes. [`SchemaPath`] names a location in the derived
//! schema: keys are plain strings and every array index is collapsed into a
//! single wildcard, so all elements of an array share one entry.

use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::tokenizer::TokenId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PathElement {
    Key(TokenId),
    Index(u32),
}

/// Root-to-leaf path of a token, `p_t = (e_1, ..., e_D)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct KeyPath(pub Vec<PathElement>);

impl KeyPath {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn elements(&self) -> &[PathElement] {
        &self.0
    }

    pub fn child_key(&self, key: TokenId) -> Self {
        let mut v = self.0.clone();
        v.push(PathElement::Key(key));
        Self(v)
    }

    pub fn child_index(&self, index: u32) -> Self {
        let mut v = self.0.clone();
        v.push(PathElement::Index(index));
        Self(v)
    }

    /// Wildcarded form keyed by vocabulary ids, used for schema-row lookup.
    pub fn wildcard(&self) -> Vec<WildSeg> {
        self.0
            .iter()
            .map(|e| match e {
                PathElement::Key(k) => WildSeg::Key(*k),
                PathElement::Index(_) => WildSeg::Item,
            })
            .collect()
    }
}

/// Path segment with array indices wildcarded, keyed by key token id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WildSeg {
    Key(TokenId),
    Item,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathSeg {
    Key(String),
    Item,
}

/// Schema location: object keys by name, array indices replaced by `*`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SchemaPath(pub Vec<PathSeg>);

impl SchemaPath {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn segments(&self) -> &[PathSeg] {
        &self.0
    }

    pub fn key(&self, key: &str) -> Self {
        let mut v = self.0.clone();
        v.push(PathSeg::Key(key.to_string()));
        Self(v)
    }

    pub fn item(&self) -> Self {
        let mut v = self.0.clone();
        v.push(PathSeg::Item);
        Self(v)
    }

    pub fn parent(&self) -> Option<SchemaPath> {
        if self.0.is_empty() {
            None
        } else {
            Some(Self(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn is_item(&self) -> bool {
        matches!(self.0.last(), Some(PathSeg::Item))
    }
}

impl Borrow<[PathSeg]> for SchemaPath {
    fn borrow(&self) -> &[PathSeg] {
        &self.0
    }
}

impl fmt::Display for SchemaPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("$");
        }
        for (i, seg) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            match seg {
                PathSeg::Key(k) => f.write_str(k)?,
                PathSeg::Item => f.write_str("*")?,
            }
        }
        Ok(())
    }
}
