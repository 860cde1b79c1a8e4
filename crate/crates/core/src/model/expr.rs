use serde::{Deserialize, Serialize};

use super::NodeId;

/// A resolved reference to one element of a node's value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ValueRef {
    pub node: NodeId,
    pub elem: usize,
}

/// An unresolved, by-name reference used while building a model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NameRef {
    pub name: String,
    pub elem: Option<usize>,
}

impl NameRef {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            elem: None,
        }
    }

    pub fn at(name: impl Into<String>, elem: usize) -> Self {
        Self {
            name: name.into(),
            elem: Some(elem),
        }
    }
}

impl std::fmt::Display for NameRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.elem {
            Some(i) => write!(f, "{}[{}]", self.name, i),
            None => f.write_str(&self.name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    Identity,
    /// `exp(linear predictor)`, the inverse of a log link.
    Exp,
}

/// `link(offset + sum coef_i * ref_i)`.
///
/// This covers constants, plain references, sums and log-link linear
/// predictors, which is everything the supported models need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expr<R = ValueRef> {
    pub link: Link,
    pub offset: f64,
    pub terms: Vec<(f64, R)>,
}

impl<R> Expr<R> {
    pub fn constant(value: f64) -> Self {
        Self {
            link: Link::Identity,
            offset: value,
            terms: Vec::new(),
        }
    }

    pub fn reference(r: R) -> Self {
        Self {
            link: Link::Identity,
            offset: 0.0,
            terms: vec![(1.0, r)],
        }
    }

    pub fn linear(offset: f64, terms: Vec<(f64, R)>) -> Self {
        Self {
            link: Link::Identity,
            offset,
            terms,
        }
    }

    pub fn exp_linear(offset: f64, terms: Vec<(f64, R)>) -> Self {
        Self {
            link: Link::Exp,
            offset,
            terms,
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        if self.terms.is_empty() {
            Some(match self.link {
                Link::Identity => self.offset,
                Link::Exp => self.offset.exp(),
            })
        } else {
            None
        }
    }

    /// The single reference when the expression is exactly `ref`.
    pub fn as_plain_ref(&self) -> Option<&R> {
        match (self.link, self.terms.as_slice()) {
            (Link::Identity, [(c, r)]) if *c == 1.0 && self.offset == 0.0 => Some(r),
            _ => None,
        }
    }

    pub fn refs(&self) -> impl Iterator<Item = &R> {
        self.terms.iter().map(|(_, r)| r)
    }

    pub fn try_map<S, E>(&self, mut f: impl FnMut(&R) -> Result<S, E>) -> Result<Expr<S>, E> {
        let terms = self
            .terms
            .iter()
            .map(|(c, r)| f(r).map(|s| (*c, s)))
            .collect::<Result<Vec<_>, E>>()?;
        Ok(Expr {
            link: self.link,
            offset: self.offset,
            terms,
        })
    }

    /// Evaluate with a lookup for referenced values.
    #[inline]
    pub fn eval(&self, mut lookup: impl FnMut(&R) -> f64) -> f64 {
        let mut eta = self.offset;
        for (c, r) in &self.terms {
            eta += c * lookup(r);
        }
        match self.link {
            Link::Identity => eta,
            Link::Exp => eta.exp(),
        }
    }
}

impl From<f64> for Expr<NameRef> {
    fn from(value: f64) -> Self {
        Expr::constant(value)
    }
}

impl From<&str> for Expr<NameRef> {
    fn from(name: &str) -> Self {
        Expr::reference(NameRef::new(name))
    }
}

impl From<NameRef> for Expr<NameRef> {
    fn from(r: NameRef) -> Self {
        Expr::reference(r)
    }
}
