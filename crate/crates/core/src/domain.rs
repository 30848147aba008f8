//! Shared vocabulary: objects, attributes, behaviors, modalities and the
//! viable sensorimotor contexts that connect behaviors to modalities.
//!
//! Every name is interned to a dense index when a dataset is loaded, so the
//! perception tensors and POMDP builders address everything by integer.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Behavior alphabet recognised by the default transition graph.
pub const BEHAVIOR_ALPHABET: [&str; 10] = [
    "look", "grasp", "lift", "hold", "shake", "drop", "push", "tap", "poke", "press",
];

/// Largest query size the solver and oracle are exercised on.
pub const DEFAULT_MAX_QUERY: usize = 2;

macro_rules! index_id {
    ($(#[$meta:meta])* $name:ident, $repr:ty) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub $repr);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl From<usize> for $name {
            fn from(i: usize) -> Self {
                $name(i as $repr)
            }
        }
    };
}

index_id!(
    /// Dense index of an attribute `p` within the attribute set.
    AttributeId,
    u16
);
index_id!(
    /// Dense index of an exploratory behavior.
    BehaviorId,
    u16
);
index_id!(
    /// Dense index of a sensory modality.
    ModalityId,
    u16
);
index_id!(
    /// Dense index of an object.
    ObjectId,
    u32
);

/// Bidirectional name table for one identifier kind.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_names<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Interner::new();
        for name in names {
            let name = name.into();
            if out.get(&name).is_some() {
                return Err(Error::Config(format!("duplicate name {name:?}")));
            }
            out.intern(&name);
        }
        Ok(out)
    }

    /// Returns the index for `name`, inserting it if unseen.
    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.lookup.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), i);
        i
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Which modalities produce features for each behavior.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModalityMap {
    by_behavior: Vec<Vec<ModalityId>>,
}

impl ModalityMap {
    pub fn new(n_behaviors: usize) -> Self {
        ModalityMap {
            by_behavior: vec![Vec::new(); n_behaviors],
        }
    }

    pub fn insert(&mut self, behavior: BehaviorId, modality: ModalityId) {
        if behavior.index() >= self.by_behavior.len() {
            self.by_behavior.resize(behavior.index() + 1, Vec::new());
        }
        let set = &mut self.by_behavior[behavior.index()];
        if let Err(pos) = set.binary_search(&modality) {
            set.insert(pos, modality);
        }
    }

    /// Modalities of `behavior`, sorted by index. `None` when the behavior is
    /// not covered.
    pub fn get(&self, behavior: BehaviorId) -> Option<&[ModalityId]> {
        self.by_behavior
            .get(behavior.index())
            .filter(|m| !m.is_empty())
            .map(|m| m.as_slice())
    }

    pub fn n_behaviors(&self) -> usize {
        self.by_behavior.len()
    }

    pub fn total_pairs(&self) -> usize {
        self.by_behavior.iter().map(Vec::len).sum()
    }
}

/// A viable (behavior, modality) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Context {
    pub behavior: BehaviorId,
    pub modality: ModalityId,
}

/// Builds the viable Cartesian product of behaviors and modalities, ordered
/// behavior-major then modality-minor.
pub fn build_context_set(behaviors: &[BehaviorId], gamma: &ModalityMap) -> Result<Vec<Context>> {
    let mut sorted = behaviors.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut out = Vec::new();
    for b in sorted {
        let modalities = gamma
            .get(b)
            .ok_or_else(|| Error::Config(format!("behavior #{} has no modalities", b.0)))?;
        out.extend(modalities.iter().map(|&m| Context {
            behavior: b,
            modality: m,
        }));
    }
    Ok(out)
}

/// Interned names plus the derived context table for one run.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    pub behaviors: Interner,
    pub modalities: Interner,
    pub attributes: Interner,
    pub objects: Interner,
    pub gamma: ModalityMap,
    contexts: Vec<Context>,
    context_lookup: HashMap<Context, usize>,
    contexts_by_behavior: Vec<Vec<usize>>,
}

impl Vocabulary {
    pub fn new(
        behaviors: Interner,
        modalities: Interner,
        attributes: Interner,
        objects: Interner,
        gamma: ModalityMap,
    ) -> Result<Self> {
        let all: Vec<BehaviorId> = (0..behaviors.len()).map(BehaviorId::from).collect();
        let contexts = build_context_set(&all, &gamma).map_err(|_| {
            let missing = all
                .iter()
                .find(|b| gamma.get(**b).is_none())
                .map(|b| behaviors.name(b.index()).to_string())
                .unwrap_or_default();
            Error::Config(format!("behavior {missing:?} has no modalities in gamma"))
        })?;
        for c in &contexts {
            if c.modality.index() >= modalities.len() {
                return Err(Error::Config(format!(
                    "gamma references unknown modality #{}",
                    c.modality.0
                )));
            }
        }
        let context_lookup = contexts.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let mut contexts_by_behavior = vec![Vec::new(); behaviors.len()];
        for (i, c) in contexts.iter().enumerate() {
            contexts_by_behavior[c.behavior.index()].push(i);
        }
        Ok(Vocabulary {
            behaviors,
            modalities,
            attributes,
            objects,
            gamma,
            contexts,
            context_lookup,
            contexts_by_behavior,
        })
    }

    pub fn contexts(&self) -> &[Context] {
        &self.contexts
    }

    pub fn context(&self, index: usize) -> Context {
        self.contexts[index]
    }

    pub fn context_index(&self, c: Context) -> Option<usize> {
        self.context_lookup.get(&c).copied()
    }

    /// Context indices belonging to `behavior`, in modality order.
    pub fn behavior_contexts(&self, behavior: BehaviorId) -> &[usize] {
        &self.contexts_by_behavior[behavior.index()]
    }

    pub fn behavior(&self, name: &str) -> Option<BehaviorId> {
        self.behaviors.get(name).map(BehaviorId::from)
    }

    pub fn attribute(&self, name: &str) -> Option<AttributeId> {
        self.attributes.get(name).map(AttributeId::from)
    }

    pub fn object(&self, name: &str) -> Option<ObjectId> {
        self.objects.get(name).map(ObjectId::from)
    }

    pub fn behavior_name(&self, b: BehaviorId) -> &str {
        self.behaviors.name(b.index())
    }

    pub fn attribute_name(&self, p: AttributeId) -> &str {
        self.attributes.name(p.index())
    }

    pub fn object_name(&self, o: ObjectId) -> &str {
        self.objects.name(o.index())
    }

    pub fn context_name(&self, index: usize) -> String {
        let c = self.contexts[index];
        format!(
            "{}-{}",
            self.behaviors.name(c.behavior.index()),
            self.modalities.name(c.modality.index())
        )
    }

    pub fn n_behaviors(&self) -> usize {
        self.behaviors.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn n_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn all_behaviors(&self) -> impl Iterator<Item = BehaviorId> {
        (0..self.behaviors.len()).map(BehaviorId::from)
    }

    pub fn all_attributes(&self) -> impl Iterator<Item = AttributeId> {
        (0..self.attributes.len()).map(AttributeId::from)
    }
}

/// Default behavior → modality coupling used for synthetic data: 10
/// behaviors, 3 modalities and 17 viable contexts.
pub fn default_gamma_pairs() -> Vec<(&'static str, &'static str)> {
    vec![
        ("look", "vision"),
        ("grasp", "haptics"),
        ("grasp", "vision"),
        ("lift", "audio"),
        ("lift", "haptics"),
        ("hold", "haptics"),
        ("shake", "audio"),
        ("shake", "haptics"),
        ("drop", "audio"),
        ("drop", "vision"),
        ("push", "audio"),
        ("push", "haptics"),
        ("push", "vision"),
        ("tap", "audio"),
        ("tap", "haptics"),
        ("poke", "haptics"),
        ("press", "haptics"),
    ]
}

/// Ground-truth attribute values per object.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelTable {
    n_attributes: usize,
    cells: Vec<Option<bool>>,
}

impl LabelTable {
    pub fn new(n_objects: usize, n_attributes: usize) -> Self {
        LabelTable {
            n_attributes,
            cells: vec![None; n_objects * n_attributes],
        }
    }

    pub fn set(&mut self, o: ObjectId, p: AttributeId, value: bool) {
        let i = o.index() * self.n_attributes + p.index();
        self.cells[i] = Some(value);
    }

    pub fn get(&self, o: ObjectId, p: AttributeId) -> Option<bool> {
        if p.index() >= self.n_attributes {
            return None;
        }
        self.cells
            .get(o.index() * self.n_attributes + p.index())
            .copied()
            .flatten()
    }

    pub fn n_objects(&self) -> usize {
        self.cells.len().checked_div(self.n_attributes).unwrap_or(0)
    }

    pub fn n_attributes(&self) -> usize {
        self.n_attributes
    }
}

/// An N-attribute identification request about one object.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Query {
    pub attributes: Vec<AttributeId>,
    pub object: ObjectId,
}

impl Query {
    pub fn new(attributes: Vec<AttributeId>, object: ObjectId, max_size: usize) -> Result<Self> {
        if attributes.is_empty() || attributes.len() > max_size {
            return Err(Error::Config(format!(
                "query size {} outside [1, {max_size}]",
                attributes.len()
            )));
        }
        for (i, a) in attributes.iter().enumerate() {
            if attributes[..i].contains(a) {
                return Err(Error::Config(format!("attribute #{} repeated in query", a.0)));
            }
        }
        Ok(Query { attributes, object })
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.attributes.iter().map(|a| format!("#{}", a.0)).collect();
        write!(f, "[{}] @ object #{}", names.join(","), self.object.0)
    }
}

/// True attribute values of the queried object, in query order.
pub fn ground_truth(query: &Query, labels: &LabelTable) -> Result<Vec<bool>> {
    query
        .attributes
        .iter()
        .map(|&p| {
            labels.get(query.object, p).ok_or_else(|| {
                Error::Data(format!(
                    "no ground-truth label for object #{} attribute #{}",
                    query.object.0, p.0
                ))
            })
        })
        .collect()
}
