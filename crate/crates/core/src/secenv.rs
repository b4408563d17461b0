//! Policies and type environments.
//!
//! A [`Policy`] fixes the universe of names together with the input, output
//! and leak sets. A [`TypeEnv`] maps every name of the universe (plus the
//! leakage variable `xl`) to a [`SecType`]. The output-propagation operator
//! `⊲` lives here in its variable, level and set forms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{Atom, SecType};

/// Reserved name of the leakage accumulator.
pub const LEAK_VAR: &str = "xl";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("malformed policy JSON: {0}")]
    Json(String),
    #[error("{role} name `{name}` is not declared")]
    Undeclared { role: &'static str, name: String },
    #[error("output `{0}` names an array; outputs must be scalars")]
    ArrayOutput(String),
    #[error("`{0}` is declared both as a scalar and as an array")]
    Duplicate(String),
    #[error("`{LEAK_VAR}` is reserved for the leakage variable")]
    Reserved,
    #[error("array `{0}` has length zero")]
    EmptyArray(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("unknown variable `{0}`")]
    Unknown(String),
    #[error("environment is not well formed: output dependency cycle through {0:?}")]
    IllFormed(Vec<String>),
    #[error("environments range over different universes")]
    UniverseMismatch,
}

/// On-disk policy layout. `vars` and `arrays` may be omitted for IR
/// programs, whose universe is read off the program text.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    #[serde(default)]
    pub vars: Vec<String>,
    #[serde(default)]
    pub arrays: BTreeMap<String, usize>,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
    #[serde(default)]
    pub leaks: Vec<String>,
}

impl PolicyFile {
    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        serde_json::from_str(text).map_err(|e| PolicyError::Json(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    scalars: BTreeSet<String>,
    arrays: BTreeMap<String, usize>,
    inputs: BTreeSet<String>,
    outputs: BTreeSet<String>,
    leaks: BTreeSet<String>,
}

impl Policy {
    pub fn new<S: Into<String>>(
        scalars: impl IntoIterator<Item = S>,
        arrays: impl IntoIterator<Item = (S, usize)>,
        inputs: impl IntoIterator<Item = S>,
        outputs: impl IntoIterator<Item = S>,
        leaks: impl IntoIterator<Item = S>,
    ) -> Result<Self, PolicyError> {
        let scalars: BTreeSet<String> = scalars.into_iter().map(Into::into).collect();
        let arrays: BTreeMap<String, usize> =
            arrays.into_iter().map(|(k, v)| (k.into(), v)).collect();
        let p = Policy {
            scalars,
            arrays,
            inputs: inputs.into_iter().map(Into::into).collect(),
            outputs: outputs.into_iter().map(Into::into).collect(),
            leaks: leaks.into_iter().map(Into::into).collect(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_file(file: &PolicyFile) -> Result<Self, PolicyError> {
        Policy::new(
            file.vars.iter().cloned(),
            file.arrays.iter().map(|(k, v)| (k.clone(), *v)),
            file.inputs.iter().cloned(),
            file.outputs.iter().cloned(),
            file.leaks.iter().cloned(),
        )
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        Policy::from_file(&PolicyFile::from_json(text)?)
    }

    fn validate(&self) -> Result<(), PolicyError> {
        if self.scalars.contains(LEAK_VAR) || self.arrays.contains_key(LEAK_VAR) {
            return Err(PolicyError::Reserved);
        }
        if let Some(d) = self.scalars.iter().find(|s| self.arrays.contains_key(*s)) {
            return Err(PolicyError::Duplicate(d.clone()));
        }
        if let Some((a, _)) = self.arrays.iter().find(|(_, n)| **n == 0) {
            return Err(PolicyError::EmptyArray(a.clone()));
        }
        for i in &self.inputs {
            if !self.is_declared(i) {
                return Err(PolicyError::Undeclared {
                    role: "input",
                    name: i.clone(),
                });
            }
        }
        for o in &self.outputs {
            if self.arrays.contains_key(o) {
                return Err(PolicyError::ArrayOutput(o.clone()));
            }
            if !self.scalars.contains(o) {
                return Err(PolicyError::Undeclared {
                    role: "output",
                    name: o.clone(),
                });
            }
        }
        for l in &self.leaks {
            if l != LEAK_VAR && !self.is_declared(l) {
                return Err(PolicyError::Undeclared {
                    role: "leak",
                    name: l.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn is_declared(&self, name: &str) -> bool {
        self.scalars.contains(name) || self.arrays.contains_key(name)
    }

    pub fn is_scalar(&self, name: &str) -> bool {
        self.scalars.contains(name)
    }

    pub fn array_len(&self, name: &str) -> Option<usize> {
        self.arrays.get(name).copied()
    }

    pub fn is_output(&self, name: &str) -> bool {
        self.outputs.contains(name)
    }

    pub fn scalars(&self) -> &BTreeSet<String> {
        &self.scalars
    }

    pub fn arrays(&self) -> &BTreeMap<String, usize> {
        &self.arrays
    }

    pub fn inputs(&self) -> &BTreeSet<String> {
        &self.inputs
    }

    pub fn outputs(&self) -> &BTreeSet<String> {
        &self.outputs
    }

    pub fn leaks(&self) -> &BTreeSet<String> {
        &self.leaks
    }

    /// Every declared name, scalars and arrays, sorted.
    pub fn names(&self) -> impl Iterator<Item = &str> + '_ {
        let mut all: Vec<&str> = self
            .scalars
            .iter()
            .map(String::as_str)
            .chain(self.arrays.keys().map(String::as_str))
            .collect();
        all.sort_unstable();
        all.into_iter()
    }

    /// Number of environment entries: every declared name plus `xl`.
    pub fn universe_size(&self) -> usize {
        self.scalars.len() + self.arrays.len() + 1
    }

    /// Number of distinct atoms a type may contain.
    pub fn atom_count(&self) -> usize {
        self.scalars.len() + self.arrays.len() + self.outputs.len()
    }

    pub fn alpha(&self, output: &str) -> Atom {
        Atom::symbolic(output)
    }

    /// `Γ(X_I) ⊔ α(X_O)` for the initial environment.
    pub fn allowed_leakage(&self) -> SecType {
        self.inputs
            .iter()
            .map(|i| Atom::real(i))
            .chain(self.outputs.iter().map(|o| Atom::symbolic(o)))
            .collect()
    }

    pub fn to_file(&self) -> PolicyFile {
        PolicyFile {
            vars: self.scalars.iter().cloned().collect(),
            arrays: self.arrays.clone(),
            inputs: self.inputs.iter().cloned().collect(),
            outputs: self.outputs.iter().cloned().collect(),
            leaks: self.leaks.iter().cloned().collect(),
        }
    }
}

/// A total map from the policy universe (plus `xl`) to security types.
#[derive(Clone, Debug)]
pub struct TypeEnv {
    policy: Arc<Policy>,
    map: BTreeMap<String, SecType>,
}

impl PartialEq for TypeEnv {
    fn eq(&self, other: &Self) -> bool {
        self.map == other.map
    }
}

impl Eq for TypeEnv {}

impl TypeEnv {
    /// `Γ(x) = {x}` for every declared name and `Γ(xl) = ⊥`.
    pub fn initial(policy: Arc<Policy>) -> Self {
        let mut map: BTreeMap<String, SecType> = policy
            .names()
            .map(|n| (n.to_string(), SecType::singleton(Atom::real(n))))
            .collect();
        map.insert(LEAK_VAR.to_string(), SecType::bottom());
        TypeEnv { policy, map }
    }

    /// Every entry set to `⊥`.
    pub fn bottom(policy: Arc<Policy>) -> Self {
        let mut map: BTreeMap<String, SecType> = policy
            .names()
            .map(|n| (n.to_string(), SecType::bottom()))
            .collect();
        map.insert(LEAK_VAR.to_string(), SecType::bottom());
        TypeEnv { policy, map }
    }

    pub fn policy(&self) -> &Arc<Policy> {
        &self.policy
    }

    pub fn get(&self, name: &str) -> Result<&SecType, EnvError> {
        self.map
            .get(name)
            .ok_or_else(|| EnvError::Unknown(name.to_string()))
    }

    pub fn set(&mut self, name: &str, ty: SecType) -> Result<(), EnvError> {
        match self.map.get_mut(name) {
            Some(slot) => {
                *slot = ty;
                Ok(())
            }
            None => Err(EnvError::Unknown(name.to_string())),
        }
    }

    pub fn with(&self, name: &str, ty: SecType) -> Result<TypeEnv, EnvError> {
        let mut out = self.clone();
        out.set(name, ty)?;
        Ok(out)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &SecType)> + '_ {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// `Γ[α](x)`: the symbolic atom for outputs, `Γ(x)` otherwise.
    pub fn alpha_lookup(&self, name: &str) -> Result<SecType, EnvError> {
        if self.policy.is_output(name) {
            if !self.map.contains_key(name) {
                return Err(EnvError::Unknown(name.to_string()));
            }
            Ok(SecType::singleton(self.policy.alpha(name)))
        } else {
            self.get(name).cloned()
        }
    }

    pub fn alpha_lookup_all<'a>(
        &self,
        names: impl IntoIterator<Item = &'a str>,
    ) -> Result<SecType, EnvError> {
        let mut out = SecType::bottom();
        for n in names {
            out.join_assign(&self.alpha_lookup(n)?);
        }
        Ok(out)
    }

    /// `Γ ⊲ o`: substitute `Γ(o)` for `~o` in every entry.
    pub fn tri_var(&self, o: &str) -> Result<TypeEnv, EnvError> {
        let repl = self.get(o)?.clone();
        let target = self.policy.alpha(o);
        let mut out = self.clone();
        for ty in out.map.values_mut() {
            if ty.contains(&target) {
                *ty = ty.subst_unchecked(&target, &repl);
            }
        }
        Ok(out)
    }

    /// `(p, Γ) ⊲ o`.
    pub fn tri_level(&self, p: &SecType, o: &str) -> Result<SecType, EnvError> {
        let repl = self.get(o)?;
        Ok(p.subst_unchecked(&self.policy.alpha(o), repl))
    }

    /// Output dependency edges `o1 -> o2` whenever `~o1 ∈ Γ(o2)`.
    pub fn graph_edges(&self) -> BTreeSet<(String, String)> {
        let mut edges = BTreeSet::new();
        for o2 in self.policy.outputs() {
            if let Some(ty) = self.map.get(o2) {
                for a in ty.symbolic_atoms() {
                    if self.policy.is_output(a.name()) {
                        edges.insert((a.name().to_string(), o2.clone()));
                    }
                }
            }
        }
        edges
    }

    fn successors(&self) -> BTreeMap<String, BTreeSet<String>> {
        let mut succ: BTreeMap<String, BTreeSet<String>> = self
            .policy
            .outputs()
            .iter()
            .map(|o| (o.clone(), BTreeSet::new()))
            .collect();
        for (a, b) in self.graph_edges() {
            succ.entry(a).or_default().insert(b);
        }
        succ
    }

    /// Outputs reachable from `o` along at least one edge.
    pub fn reachable_from(&self, o: &str) -> BTreeSet<String> {
        reach(&self.successors(), o)
    }

    /// Acyclicity of the output dependency graph. A self loop is a cycle.
    pub fn well_formed(&self) -> bool {
        self.find_cycle().is_none()
    }

    pub fn find_cycle(&self) -> Option<Vec<String>> {
        let succ = self.successors();
        succ.keys().find(|o| reach(&succ, o).contains(*o)).map(|o| {
            let mut members: Vec<String> = reach(&succ, o)
                .into_iter()
                .filter(|m| reach(&succ, m).contains(o.as_str()))
                .collect();
            members.sort();
            members
        })
    }

    /// Order in which `⊲` is applied to a set of outputs: repeatedly the
    /// least remaining name with no path to another remaining name.
    pub fn compatible_order<'a>(
        &self,
        set: impl IntoIterator<Item = &'a str>,
    ) -> Result<Vec<String>, EnvError> {
        let mut remaining: BTreeSet<String> = BTreeSet::new();
        for o in set {
            if !self.map.contains_key(o) {
                return Err(EnvError::Unknown(o.to_string()));
            }
            if self.policy.is_output(o) {
                remaining.insert(o.to_string());
            }
        }
        if remaining.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(c) = self.find_cycle() {
            return Err(EnvError::IllFormed(c));
        }
        let succ = self.successors();
        let reach_sets: BTreeMap<String, BTreeSet<String>> = remaining
            .iter()
            .map(|o| (o.clone(), reach(&succ, o)))
            .collect();
        let mut order = Vec::with_capacity(remaining.len());
        while !remaining.is_empty() {
            let pick = remaining
                .iter()
                .find(|x| {
                    let r = &reach_sets[*x];
                    !remaining.iter().any(|y| y != *x && r.contains(y))
                })
                .cloned();
            let pick = pick.expect("acyclic graph always has a sink among remaining outputs");
            remaining.remove(&pick);
            order.push(pick);
        }
        Ok(order)
    }

    /// `Γ ⊲ X`, applying the variable form along a compatible order.
    pub fn tri_set<'a>(&self, set: impl IntoIterator<Item = &'a str>) -> Result<TypeEnv, EnvError> {
        let order = self.compatible_order(set)?;
        let mut out = self.clone();
        for o in &order {
            out = out.tri_var(o)?;
        }
        Ok(out)
    }

    /// `(p, Γ) ⊲ X`, substituting with the entries of the original `Γ`.
    pub fn tri_level_set<'a>(
        &self,
        p: &SecType,
        set: impl IntoIterator<Item = &'a str>,
    ) -> Result<SecType, EnvError> {
        let order = self.compatible_order(set)?;
        let mut out = p.clone();
        for o in &order {
            out = self.tri_level(&out, o)?;
        }
        Ok(out)
    }

    fn check_universe(&self, other: &TypeEnv) -> Result<(), EnvError> {
        if self.map.len() != other.map.len() || !self.map.keys().eq(other.map.keys()) {
            return Err(EnvError::UniverseMismatch);
        }
        Ok(())
    }

    pub fn join(&self, other: &TypeEnv) -> Result<TypeEnv, EnvError> {
        self.check_universe(other)?;
        let mut out = self.clone();
        for (k, v) in out.map.iter_mut() {
            v.join_assign(&other.map[k]);
        }
        Ok(out)
    }

    pub fn leq(&self, other: &TypeEnv) -> Result<bool, EnvError> {
        self.check_universe(other)?;
        Ok(self.map.iter().all(|(k, v)| v.leq(&other.map[k])))
    }

    pub fn leq_r(&self, other: &TypeEnv) -> Result<bool, EnvError> {
        self.check_universe(other)?;
        Ok(self.map.iter().all(|(k, v)| v.leq_r(&other.map[k])))
    }

    /// Entries rendered as `name: {atoms}`, one per line.
    pub fn render(&self) -> String {
        self.to_string()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Object(
            self.map
                .iter()
                .map(|(k, v)| (k.clone(), serde_json::Value::String(v.to_string())))
                .collect(),
        )
    }
}

impl fmt::Display for TypeEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.map {
            writeln!(f, "{k}: {v}")?;
        }
        Ok(())
    }
}

fn reach(succ: &BTreeMap<String, BTreeSet<String>>, from: &str) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<&str> = succ
        .get(from)
        .map(|s| s.iter().map(String::as_str).collect())
        .unwrap_or_default();
    while let Some(n) = stack.pop() {
        if seen.insert(n.to_string()) {
            if let Some(next) = succ.get(n) {
                stack.extend(next.iter().map(String::as_str));
            }
        }
    }
    seen
}
