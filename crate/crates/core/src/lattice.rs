//! Security types as finite sets of atoms.
//!
//! A real atom `x` stands for the initial value of variable `x`; a symbolic
//! atom `~o` stands for the current value of output `o`. Types are ordered by
//! inclusion, so join is union and bottom is the empty set.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("substitution target `{0}` is not a symbolic atom")]
    NotSymbolic(Atom),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AtomKind {
    Real,
    Symbolic,
}

/// A single lattice atom. Real atoms sort before symbolic ones.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    kind: AtomKind,
    name: Arc<str>,
}

impl Atom {
    pub fn real(name: &str) -> Self {
        Atom {
            kind: AtomKind::Real,
            name: Arc::from(name),
        }
    }

    pub fn symbolic(name: &str) -> Self {
        Atom {
            kind: AtomKind::Symbolic,
            name: Arc::from(name),
        }
    }

    pub fn kind(&self) -> AtomKind {
        self.kind
    }

    pub fn is_symbolic(&self) -> bool {
        self.kind == AtomKind::Symbolic
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            AtomKind::Real => write!(f, "{}", self.name),
            AtomKind::Symbolic => write!(f, "~{}", self.name),
        }
    }
}

/// An element of the powerset lattice over atoms.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SecType(BTreeSet<Atom>);

impl SecType {
    pub fn bottom() -> Self {
        SecType(BTreeSet::new())
    }

    pub fn singleton(a: Atom) -> Self {
        SecType(BTreeSet::from([a]))
    }

    pub fn is_bottom(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> + '_ {
        self.0.iter()
    }

    pub fn contains(&self, a: &Atom) -> bool {
        self.0.contains(a)
    }

    pub fn insert(&mut self, a: Atom) -> bool {
        self.0.insert(a)
    }

    pub fn join(&self, other: &SecType) -> SecType {
        let mut out = self.clone();
        out.join_assign(other);
        out
    }

    pub fn join_assign(&mut self, other: &SecType) {
        for a in &other.0 {
            if !self.0.contains(a) {
                self.0.insert(a.clone());
            }
        }
    }

    pub fn leq(&self, other: &SecType) -> bool {
        self.0.is_subset(&other.0)
    }

    /// `self ⊑ other` without `other` introducing symbolic atoms that
    /// `self` lacks.
    pub fn leq_r(&self, other: &SecType) -> bool {
        self.leq(other)
            && other
                .0
                .iter()
                .filter(|a| a.is_symbolic())
                .all(|a| self.0.contains(a))
    }

    pub fn symbolic_atoms(&self) -> impl Iterator<Item = &Atom> + '_ {
        self.0.iter().filter(|a| a.is_symbolic())
    }

    pub fn real_atoms(&self) -> impl Iterator<Item = &Atom> + '_ {
        self.0.iter().filter(|a| !a.is_symbolic())
    }

    pub fn difference(&self, other: &SecType) -> SecType {
        SecType(self.0.difference(&other.0).cloned().collect())
    }

    /// `self[replacement / target]`: drop `target` and add `replacement` when
    /// `target` was present.
    pub fn subst(&self, target: &Atom, replacement: &SecType) -> Result<SecType, LatticeError> {
        if !target.is_symbolic() {
            return Err(LatticeError::NotSymbolic(target.clone()));
        }
        Ok(self.subst_unchecked(target, replacement))
    }

    pub(crate) fn subst_unchecked(&self, target: &Atom, replacement: &SecType) -> SecType {
        if !self.0.contains(target) {
            return self.clone();
        }
        let mut out = self.clone();
        out.0.remove(target);
        out.join_assign(replacement);
        out
    }
}

impl FromIterator<Atom> for SecType {
    fn from_iter<I: IntoIterator<Item = Atom>>(iter: I) -> Self {
        SecType(iter.into_iter().collect())
    }
}

impl fmt::Display for SecType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str("}")
    }
}

/// Parses the rendered form `{a, ~o}` back into a type.
impl std::str::FromStr for SecType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s
            .trim()
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .ok_or_else(|| format!("expected braces around type `{s}`"))?;
        let mut out = SecType::bottom();
        for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.strip_prefix('~') {
                Some(n) => out.insert(Atom::symbolic(n)),
                None => out.insert(Atom::real(part)),
            };
        }
        Ok(out)
    }
}
