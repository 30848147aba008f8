//! Feature datasets: CSV interchange, seeded synthetic generation, the
//! three-way object split, pretraining and per-trial sampling.
//!
//! On-disk layout of a dataset directory:
//!
//! * `gamma.csv`   : `behavior,modality`, one row per viable pair
//! * `labels.csv`  : `object,attribute,value` with value 0/1
//! * `features.csv`: `object,behavior,modality,trial,f0,..,f{d-1}`
//!
//! Feature rows may have different widths per context; the width of the
//! first row of a context fixes that context's dimensionality.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::domain::{
    default_gamma_pairs, AttributeId, BehaviorId, Interner, LabelTable, ModalityId, ModalityMap,
    ObjectId, Vocabulary, BEHAVIOR_ALPHABET,
};
use crate::error::{Error, Result};
use crate::seeding::{self, Rng};

/// Features recorded in one context during one behavior execution.
#[derive(Debug, Clone)]
pub struct FeatureInstance {
    pub object: ObjectId,
    /// Index into [`Vocabulary::contexts`].
    pub context: usize,
    pub trial: u32,
    pub execution: usize,
    pub features: Arc<[f64]>,
}

/// All instances produced by a single execution of a behavior.
#[derive(Debug, Clone)]
pub struct Execution {
    pub object: ObjectId,
    pub behavior: BehaviorId,
    pub trial: u32,
    pub instances: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabeledExample {
    pub instance: usize,
    pub attribute: AttributeId,
    pub label: bool,
}

/// Append-only store of feature instances and the labels attached to them.
///
/// The same type serves both as the world's feature pool (no labels) and as
/// the robot's growing training set.
#[derive(Debug, Clone)]
pub struct Dataset {
    vocab: Arc<Vocabulary>,
    instances: Vec<FeatureInstance>,
    executions: Vec<Execution>,
    labels: Vec<LabeledExample>,
    label_table: Arc<LabelTable>,
    dims: Vec<Option<usize>>,
    by_object_behavior: HashMap<(ObjectId, BehaviorId), Vec<usize>>,
    labeled: HashMap<(AttributeId, BehaviorId), Vec<(usize, bool)>>,
    labeled_pairs: HashSet<(usize, AttributeId)>,
}

impl Dataset {
    pub fn empty(vocab: Arc<Vocabulary>, label_table: Arc<LabelTable>) -> Self {
        let n_ctx = vocab.contexts().len();
        Dataset {
            vocab,
            instances: Vec::new(),
            executions: Vec::new(),
            labels: Vec::new(),
            label_table,
            dims: vec![None; n_ctx],
            by_object_behavior: HashMap::new(),
            labeled: HashMap::new(),
            labeled_pairs: HashSet::new(),
        }
    }

    /// Same vocabulary and ground truth, no instances.
    pub fn empty_like(&self) -> Self {
        Dataset::empty(self.vocab.clone(), self.label_table.clone())
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn label_table(&self) -> &LabelTable {
        &self.label_table
    }

    pub fn instances(&self) -> &[FeatureInstance] {
        &self.instances
    }

    pub fn instance(&self, i: usize) -> &FeatureInstance {
        &self.instances[i]
    }

    pub fn executions(&self) -> &[Execution] {
        &self.executions
    }

    pub fn execution(&self, i: usize) -> &Execution {
        &self.executions[i]
    }

    pub fn labels(&self) -> &[LabeledExample] {
        &self.labels
    }

    /// Feature dimensionality of a context, once any instance has been seen.
    pub fn dim(&self, context: usize) -> Option<usize> {
        self.dims[context]
    }

    /// Executions of `behavior` on `object`, in insertion order.
    pub fn executions_of(&self, object: ObjectId, behavior: BehaviorId) -> &[usize] {
        self.by_object_behavior
            .get(&(object, behavior))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Executions of `behavior` carrying a label for `attribute`.
    pub fn labeled_executions(&self, attribute: AttributeId, behavior: BehaviorId) -> &[(usize, bool)] {
        self.labeled
            .get(&(attribute, behavior))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Appends one behavior execution. `features` holds one entry per
    /// context of the behavior.
    pub fn add_execution(
        &mut self,
        object: ObjectId,
        behavior: BehaviorId,
        trial: u32,
        features: Vec<(usize, Arc<[f64]>)>,
    ) -> Result<usize> {
        if object.index() >= self.vocab.n_objects() {
            return Err(Error::Data(format!("unknown object #{}", object.0)));
        }
        for (ctx, f) in &features {
            let c = self.vocab.contexts().get(*ctx).ok_or_else(|| {
                Error::Data(format!("unknown context index {ctx}"))
            })?;
            if c.behavior != behavior {
                return Err(Error::Data(format!(
                    "context {} does not belong to behavior {}",
                    self.vocab.context_name(*ctx),
                    self.vocab.behavior_name(behavior)
                )));
            }
            if let Some(d) = self.dims[*ctx] {
                if d != f.len() {
                    return Err(Error::Data(format!(
                        "context {} expects {d} features, got {}",
                        self.vocab.context_name(*ctx),
                        f.len()
                    )));
                }
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "non-finite feature for object {} in context {}",
                    self.vocab.object_name(object),
                    self.vocab.context_name(*ctx)
                )));
            }
        }
        let exec = self.executions.len();
        let mut ids = Vec::with_capacity(features.len());
        for (ctx, f) in features {
            self.dims[ctx].get_or_insert(f.len());
            ids.push(self.instances.len());
            self.instances.push(FeatureInstance {
                object,
                context: ctx,
                trial,
                execution: exec,
                features: f,
            });
        }
        self.executions.push(Execution {
            object,
            behavior,
            trial,
            instances: ids,
        });
        self.by_object_behavior
            .entry((object, behavior))
            .or_default()
            .push(exec);
        Ok(exec)
    }

    /// Copies an execution from another dataset sharing this vocabulary.
    pub fn copy_execution(&mut self, source: &Dataset, exec: usize) -> Result<usize> {
        let e = source.execution(exec);
        let features = e
            .instances
            .iter()
            .map(|&i| {
                let inst = source.instance(i);
                (inst.context, inst.features.clone())
            })
            .collect();
        self.add_execution(e.object, e.behavior, e.trial, features)
    }

    /// Labels every instance of `exec` with `value` for `attribute`.
    pub fn label_execution(&mut self, exec: usize, attribute: AttributeId, value: bool) -> Result<()> {
        if !self.labeled_pairs.insert((exec, attribute)) {
            return Err(Error::Data(format!(
                "execution {exec} already labeled for attribute #{}",
                attribute.0
            )));
        }
        let e = &self.executions[exec];
        for &i in &e.instances {
            self.labels.push(LabeledExample {
                instance: i,
                attribute,
                label: value,
            });
        }
        self.labeled
            .entry((attribute, e.behavior))
            .or_default()
            .push((exec, value));
        Ok(())
    }

    /// Hash of the full contents; equal fingerprints mean nothing was
    /// appended or relabeled.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.instances.len().hash(&mut h);
        for inst in &self.instances {
            (inst.object, inst.context, inst.trial, inst.execution).hash(&mut h);
            for v in inst.features.iter() {
                v.to_bits().hash(&mut h);
            }
        }
        self.labels.hash(&mut h);
        h.finish()
    }
}

fn read_csv(path: &Path, flexible: bool) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(flexible)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn load_err(file: &str, row: usize, msg: impl Into<String>) -> Error {
    Error::Load {
        file: file.to_string(),
        row,
        msg: msg.into(),
    }
}

/// Loads a dataset directory (`gamma.csv`, `labels.csv`, `features.csv`).
///
/// Row numbers in errors count the header as row 1.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    // gamma
    let gamma_path = dir.join("gamma.csv");
    let mut behaviors = Interner::new();
    let mut modalities = Interner::new();
    let mut pairs = Vec::new();
    let mut rdr = read_csv(&gamma_path, false)?;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| load_err("gamma.csv", row, e.to_string()))?;
        if rec.len() != 2 {
            return Err(load_err("gamma.csv", row, "expected behavior,modality"));
        }
        let b = behaviors.intern(&rec[0]);
        let m = modalities.intern(&rec[1]);
        pairs.push((BehaviorId::from(b), ModalityId::from(m)));
    }
    let mut gamma = ModalityMap::new(behaviors.len());
    for (b, m) in pairs {
        gamma.insert(b, m);
    }

    // labels
    let labels_path = dir.join("labels.csv");
    let mut attributes = Interner::new();
    let mut objects = Interner::new();
    let mut raw_labels = Vec::new();
    let mut rdr = read_csv(&labels_path, false)?;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| load_err("labels.csv", row, e.to_string()))?;
        if rec.len() != 3 {
            return Err(load_err("labels.csv", row, "expected object,attribute,value"));
        }
        let value = match &rec[2] {
            "0" => false,
            "1" => true,
            other => return Err(load_err("labels.csv", row, format!("label value {other:?} is not 0/1"))),
        };
        let o = objects.intern(&rec[0]);
        let p = attributes.intern(&rec[1]);
        raw_labels.push((row, o, p, value));
    }

    // features: first pass to discover objects only present in features
    let features_path = dir.join("features.csv");
    let mut rows = Vec::new();
    let mut rdr = read_csv(&features_path, true)?;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| load_err("features.csv", row, e.to_string()))?;
        if rec.len() < 5 {
            return Err(load_err("features.csv", row, "expected object,behavior,modality,trial,f0.."));
        }
        let b = behaviors
            .get(&rec[1])
            .ok_or_else(|| load_err("features.csv", row, format!("unknown behavior {:?}", &rec[1])))?;
        let m = modalities
            .get(&rec[2])
            .ok_or_else(|| load_err("features.csv", row, format!("unknown modality {:?}", &rec[2])))?;
        let trial: u32 = rec[3]
            .parse()
            .map_err(|_| load_err("features.csv", row, format!("bad trial {:?}", &rec[3])))?;
        let mut feats = Vec::with_capacity(rec.len() - 4);
        for field in rec.iter().skip(4) {
            if field.is_empty() {
                return Err(load_err("features.csv", row, "empty feature cell"));
            }
            let v: f64 = field
                .parse()
                .map_err(|_| load_err("features.csv", row, format!("bad feature value {field:?}")))?;
            if !v.is_finite() {
                return Err(load_err("features.csv", row, "non-finite feature value"));
            }
            feats.push(v);
        }
        let o = objects.intern(&rec[0]);
        rows.push((row, o, b, m, trial, feats));
    }

    let n_objects = objects.len();
    let n_attributes = attributes.len();
    let vocab = Arc::new(Vocabulary::new(behaviors, modalities, attributes, objects, gamma)?);
    let mut table = LabelTable::new(n_objects, n_attributes);
    for &(row, o, p, v) in &raw_labels {
        if table.get(ObjectId::from(o), AttributeId::from(p)).is_some() {
            return Err(load_err("labels.csv", row, "duplicate label"));
        }
        table.set(ObjectId::from(o), AttributeId::from(p), v);
    }
    for o in 0..n_objects {
        for p in 0..n_attributes {
            if table.get(ObjectId::from(o), AttributeId::from(p)).is_none() {
                return Err(Error::Data(format!(
                    "labels.csv: missing ground-truth label for object {:?} attribute {:?}",
                    vocab.object_name(ObjectId::from(o)),
                    vocab.attribute_name(AttributeId::from(p))
                )));
            }
        }
    }

    // group rows by (object, behavior, trial) preserving first-seen order
    let mut dims: Vec<Option<usize>> = vec![None; vocab.contexts().len()];
    let mut groups: Vec<((usize, BehaviorId, u32), Vec<(usize, Arc<[f64]>)>)> = Vec::new();
    let mut group_index: HashMap<(usize, BehaviorId, u32), usize> = HashMap::new();
    let mut seen: HashSet<(usize, usize, u32)> = HashSet::new();
    for (row, o, b, m, trial, feats) in rows {
        let b = BehaviorId::from(b);
        let ctx = vocab
            .context_index(crate::domain::Context {
                behavior: b,
                modality: ModalityId::from(m),
            })
            .ok_or_else(|| load_err("features.csv", row, "behavior/modality pair is not viable under gamma"))?;
        match dims[ctx] {
            Some(d) if d != feats.len() => {
                return Err(load_err(
                    "features.csv",
                    row,
                    format!(
                        "ragged row: context {} has {d} features, row has {}",
                        vocab.context_name(ctx),
                        feats.len()
                    ),
                ))
            }
            None => dims[ctx] = Some(feats.len()),
            _ => {}
        }
        if !seen.insert((o, ctx, trial)) {
            return Err(load_err("features.csv", row, "duplicate (object, context, trial)"));
        }
        let key = (o, b, trial);
        let gi = *group_index.entry(key).or_insert_with(|| {
            groups.push((key, Vec::new()));
            groups.len() - 1
        });
        groups[gi].1.push((ctx, feats.into()));
    }

    let mut ds = Dataset::empty(vocab, Arc::new(table));
    for ((o, b, trial), mut feats) in groups {
        feats.sort_by_key(|(c, _)| *c);
        ds.add_execution(ObjectId::from(o), b, trial, feats)?;
    }
    Ok(ds)
}

/// Writes `dataset` in the loadable directory layout.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let vocab = dataset.vocab();

    let path = dir.join("gamma.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    w.write_record(["behavior", "modality"]).map_err(|e| Error::csv(&path, e))?;
    for c in vocab.contexts() {
        w.write_record([vocab.behavior_name(c.behavior), vocab.modalities.name(c.modality.index())])
            .map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("labels.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    w.write_record(["object", "attribute", "value"]).map_err(|e| Error::csv(&path, e))?;
    for o in 0..vocab.n_objects() {
        for p in vocab.all_attributes() {
            let o = ObjectId::from(o);
            if let Some(v) = dataset.label_table().get(o, p) {
                w.write_record([vocab.object_name(o), vocab.attribute_name(p), if v { "1" } else { "0" }])
                    .map_err(|e| Error::csv(&path, e))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("features.csv");
    let max_dim = dataset.instances().iter().map(|i| i.features.len()).max().unwrap_or(0);
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .from_path(&path)
        .map_err(|e| Error::csv(&path, e))?;
    let mut header: Vec<String> = ["object", "behavior", "modality", "trial"].map(String::from).to_vec();
    header.extend((0..max_dim).map(|i| format!("f{i}")));
    w.write_record(&header).map_err(|e| Error::csv(&path, e))?;
    for inst in dataset.instances() {
        let c = vocab.context(inst.context);
        let mut rec = vec![
            vocab.object_name(inst.object).to_string(),
            vocab.behavior_name(c.behavior).to_string(),
            vocab.modalities.name(c.modality.index()).to_string(),
            inst.trial.to_string(),
        ];
        rec.extend(inst.features.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Mean shift between the class means at separation 1, in feature units.
pub const SEPARATION_SCALE: f64 = 8.0;

/// Parameters of the synthetic two-class feature generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_objects: usize,
    pub n_attributes: usize,
    pub trials_per_behavior: usize,
    /// Behavior → modality pairs; behaviors are interned in first-seen order.
    pub gamma: Vec<(String, String)>,
    /// Feature dimensionality per context (context order).
    pub feature_dims: Vec<usize>,
    /// Separation level in [0,1], indexed `[context][attribute]`.
    pub informativeness: Vec<Vec<f64>>,
    pub noise_scale: f64,
    /// Standard deviation of the per-object offset shared by all trials.
    pub object_spread: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Default 10-behavior / 17-context layout with every (context,
    /// attribute) pair at separation `level`.
    pub fn uniform(n_objects: usize, n_attributes: usize, level: f64, seed: u64) -> Self {
        let gamma: Vec<(String, String)> = default_gamma_pairs()
            .into_iter()
            .map(|(b, m)| (b.to_string(), m.to_string()))
            .collect();
        let n_ctx = gamma.len();
        SynthConfig {
            n_objects,
            n_attributes,
            trials_per_behavior: 5,
            gamma,
            feature_dims: vec![6; n_ctx],
            informativeness: vec![vec![level; n_attributes]; n_ctx],
            noise_scale: 1.0,
            object_spread: 0.5,
            seed,
        }
    }

    /// Like [`SynthConfig::uniform`] but each (behavior, attribute) pair is
    /// informative at `level` with probability `fraction` and silent
    /// otherwise. Every attribute keeps at least one informative behavior.
    /// The mask is drawn from `seed`.
    pub fn sparse(n_objects: usize, n_attributes: usize, level: f64, fraction: f64, seed: u64) -> Self {
        let mut cfg = SynthConfig::uniform(n_objects, n_attributes, level, seed);
        let mut behaviors: Vec<&str> = Vec::new();
        for (b, _) in &cfg.gamma {
            if !behaviors.contains(&b.as_str()) {
                behaviors.push(b);
            }
        }
        let mut rng = seeding::rng(seed, &[seeding::STREAM_SYNTH, 99]);
        let mut mask = vec![vec![false; n_attributes]; behaviors.len()];
        for p in 0..n_attributes {
            for row in mask.iter_mut() {
                row[p] = rng.random::<f64>() < fraction;
            }
            if fraction > 0.0 && !mask.iter().any(|row| row[p]) {
                let b = rng.random_range(0..behaviors.len());
                mask[b][p] = true;
            }
        }
        for (ci, (b, _)) in cfg.gamma.iter().enumerate() {
            let bi = behaviors.iter().position(|x| x == b).unwrap();
            for p in 0..n_attributes {
                cfg.informativeness[ci][p] = if mask[bi][p] { level } else { 0.0 };
            }
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_objects < 3 {
            return Err(Error::Config("synthetic data needs at least 3 objects".into()));
        }
        if self.trials_per_behavior == 0 {
            return Err(Error::Config("trials_per_behavior must be ≥ 1".into()));
        }
        if self.feature_dims.len() != self.gamma.len() || self.informativeness.len() != self.gamma.len() {
            return Err(Error::Config(
                "feature_dims and informativeness need one entry per gamma pair".into(),
            ));
        }
        if self.feature_dims.contains(&0) {
            return Err(Error::Config("feature dimensionality must be ≥ 1".into()));
        }
        for row in &self.informativeness {
            if row.len() != self.n_attributes {
                return Err(Error::Config("informativeness row length ≠ n_attributes".into()));
            }
            if row.iter().any(|s| !(0.0..=1.0).contains(s)) {
                return Err(Error::Config("separation levels must lie in [0,1]".into()));
            }
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config("noise_scale must be positive".into()));
        }
        if !(self.object_spread >= 0.0 && self.object_spread.is_finite()) {
            return Err(Error::Config("object_spread must be non-negative".into()));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Generates a deterministic synthetic dataset from `config`.
///
/// Labels are fair coin flips per (object, attribute), redrawn until both
/// classes occur. For a context/attribute pair at
/// separation σ, positive and negative objects are shifted by ±σ·S/2 along
/// a random unit direction, S = [`SEPARATION_SCALE`].
pub fn synth_generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = seeding::rng(config.seed, &[seeding::STREAM_SYNTH]);

    let mut behaviors = Interner::new();
    let mut modalities = Interner::new();
    let mut pair_ids = Vec::new();
    for (b, m) in &config.gamma {
        let bi = behaviors.intern(b);
        let mi = modalities.intern(m);
        pair_ids.push((BehaviorId::from(bi), ModalityId::from(mi)));
    }
    let mut gamma = ModalityMap::new(behaviors.len());
    for &(b, m) in &pair_ids {
        gamma.insert(b, m);
    }
    let attributes = Interner::from_names((0..config.n_attributes).map(|p| format!("attr{p}")))?;
    let objects = Interner::from_names((0..config.n_objects).map(|o| format!("obj{o:03}")))?;
    let vocab = Arc::new(Vocabulary::new(behaviors, modalities, attributes, objects, gamma)?);

    // map gamma rows to context indices
    let ctx_of_row: Vec<usize> = pair_ids
        .iter()
        .map(|&(b, m)| {
            vocab
                .context_index(crate::domain::Context { behavior: b, modality: m })
                .expect("pair is viable")
        })
        .collect();
    let n_ctx = vocab.contexts().len();
    let mut dims = vec![0; n_ctx];
    let mut sep = vec![vec![0.0; config.n_attributes]; n_ctx];
    for (row, &ctx) in ctx_of_row.iter().enumerate() {
        dims[ctx] = config.feature_dims[row];
        sep[ctx] = config.informativeness[row].clone();
    }

    // fair-coin labels, redrawn until both classes occur
    let mut table = LabelTable::new(config.n_objects, config.n_attributes);
    for p in 0..config.n_attributes {
        let column = loop {
            let c: Vec<bool> = (0..config.n_objects).map(|_| rng.random::<bool>()).collect();
            if c.iter().any(|&v| v) && c.iter().any(|&v| !v) {
                break c;
            }
        };
        for (o, v) in column.into_iter().enumerate() {
            table.set(ObjectId::from(o), AttributeId::from(p), v);
        }
    }

    // class directions per (context, attribute), mutually orthogonal while
    // the dimensionality allows
    let mut directions: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_ctx];
    for ctx in 0..n_ctx {
        for p in 0..config.n_attributes {
            let mut u: Vec<f64> = (0..dims[ctx]).map(|_| gaussian(&mut rng)).collect();
            if p < dims[ctx] {
                for prev in &directions[ctx][..p] {
                    let d: f64 = u.iter().zip(prev).map(|(a, b)| a * b).sum();
                    u.iter_mut().zip(prev).for_each(|(a, b)| *a -= d * b);
                }
            }
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            u.iter_mut().for_each(|v| *v /= norm);
            directions[ctx].push(u);
        }
    }

    let mut ds = Dataset::empty(vocab.clone(), Arc::new(table));
    for o in 0..config.n_objects {
        let oid = ObjectId::from(o);
        // per-object mean in each context
        let means: Vec<Vec<f64>> = (0..n_ctx)
            .map(|ctx| {
                let mut mean: Vec<f64> = (0..dims[ctx])
                    .map(|_| config.object_spread * gaussian(&mut rng))
                    .collect();
                for p in 0..config.n_attributes {
                    let positive = ds.label_table().get(oid, AttributeId::from(p)).unwrap();
                    let shift = sep[ctx][p] * SEPARATION_SCALE * if positive { 0.5 } else { -0.5 };
                    for (m, u) in mean.iter_mut().zip(&directions[ctx][p]) {
                        *m += shift * u;
                    }
                }
                mean
            })
            .collect();
        for b in vocab.all_behaviors() {
            for t in 0..config.trials_per_behavior {
                let feats = vocab
                    .behavior_contexts(b)
                    .iter()
                    .map(|&ctx| {
                        let f: Vec<f64> = means[ctx]
                            .iter()
                            .map(|m| m + config.noise_scale * gaussian(&mut rng))
                            .collect();
                        (ctx, Arc::from(f))
                    })
                    .collect();
                ds.add_execution(oid, b, t as u32, feats)?;
            }
        }
    }
    Ok(ds)
}

/// Disjoint pretraining / training / testing object sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectSplit {
    pub pretrain: Vec<ObjectId>,
    pub train: Vec<ObjectId>,
    pub test: Vec<ObjectId>,
}

/// Randomly partitions the objects into three near-equal subsets.
pub fn split_objects(dataset: &Dataset, seed: u64) -> Result<ObjectSplit> {
    let n = dataset.vocab().n_objects();
    if n < 3 {
        return Err(Error::Data(format!("need at least 3 objects to split, have {n}")));
    }
    let mut order: Vec<ObjectId> = (0..n).map(ObjectId::from).collect();
    order.shuffle(&mut seeding::rng(seed, &[seeding::STREAM_SPLIT]));
    let base = n / 3;
    let extra = n % 3;
    let sizes: Vec<usize> = (0..3).map(|i| base + usize::from(i < extra)).collect();
    let mut parts = Vec::with_capacity(3);
    let mut start = 0;
    for s in sizes {
        let mut part = order[start..start + s].to_vec();
        part.sort();
        parts.push(part);
        start += s;
    }
    let test = parts.pop().unwrap();
    let train = parts.pop().unwrap();
    let pretrain = parts.pop().unwrap();
    Ok(ObjectSplit { pretrain, train, test })
}

/// Builds the pretraining dataset: every behavior applied once (its lowest
/// trial) on each pretraining object, labeled for every attribute in
/// `attributes`.
pub fn pretrain(world: &Dataset, objects: &[ObjectId], attributes: &[AttributeId]) -> Result<Dataset> {
    let mut out = world.empty_like();
    let vocab = world.vocab().clone();
    for &o in objects {
        if o.index() >= vocab.n_objects() {
            return Err(Error::Data(format!("unknown object id {}", o.0)));
        }
        for b in vocab.all_behaviors() {
            let exec = world
                .executions_of(o, b)
                .iter()
                .copied()
                .min_by_key(|&e| world.execution(e).trial)
                .ok_or_else(|| {
                    Error::Data(format!(
                        "no trial of behavior {} on object {}",
                        vocab.behavior_name(b),
                        vocab.object_name(o)
                    ))
                })?;
            let copied = out.copy_execution(world, exec)?;
            for &p in attributes {
                let v = world.label_table().get(o, p).ok_or_else(|| {
                    Error::Data(format!(
                        "no label for object {} attribute {}",
                        vocab.object_name(o),
                        vocab.attribute_name(p)
                    ))
                })?;
                out.label_execution(copied, p, v)?;
            }
        }
    }
    Ok(out)
}

/// Draws one trial of `behavior` on `object` uniformly; all modalities of
/// the returned execution come from that trial.
pub fn sample_instance<'a>(
    world: &'a Dataset,
    object: ObjectId,
    behavior: BehaviorId,
    rng: &mut Rng,
) -> Result<&'a Execution> {
    Ok(world.execution(sample_execution(world, object, behavior, rng)?))
}

/// Like [`sample_instance`] but returns the execution index.
pub fn sample_execution(world: &Dataset, object: ObjectId, behavior: BehaviorId, rng: &mut Rng) -> Result<usize> {
    let execs = world.executions_of(object, behavior);
    if execs.is_empty() {
        return Err(Error::Data(format!(
            "no trials of behavior {} on object {}",
            world.vocab().behavior_name(behavior),
            world.vocab().object_name(object)
        )));
    }
    Ok(execs[rng.random_range(0..execs.len())])
}

/// Behavior names of the default transition graph that are missing from a
/// vocabulary.
pub fn missing_standard_behaviors(vocab: &Vocabulary) -> Vec<&'static str> {
    BEHAVIOR_ALPHABET
        .iter()
        .copied()
        .filter(|b| vocab.behavior(b).is_none())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) {
        let mut f = fs::File::create(dir.join(name)).unwrap();
        f.write_all(body.as_bytes()).unwrap();
    }

    fn tiny_dir() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "gamma.csv", "behavior,modality\nlook,vision\n");
        write(dir.path(), "labels.csv", "object,attribute,value\ncan,soft,0\nball,soft,1\n");
        let mut body = String::from("object,behavior,modality,trial,f0,f1\n");
        for o in ["can", "ball"] {
            for t in 0..5 {
                body.push_str(&format!("{o},look,vision,{t},0.{t},1.5\n"));
            }
        }
        write(dir.path(), "features.csv", &body);
        dir
    }

    #[test]
    fn loads_two_objects_five_trials() {
        let dir = tiny_dir();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.instances().len(), 10);
        assert_eq!(ds.executions().len(), 10);
        assert_eq!(ds.dim(0), Some(2));
        let can = ds.vocab().object("can").unwrap();
        let soft = ds.vocab().attribute("soft").unwrap();
        assert_eq!(ds.label_table().get(can, soft), Some(false));
    }

    #[test]
    fn ragged_row_names_the_row() {
        let dir = tiny_dir();
        write(
            dir.path(),
            "features.csv",
            "object,behavior,modality,trial,f0,f1\ncan,look,vision,0,1,2\nball,look,vision,0,1\n",
        );
        match load_dataset(dir.path()) {
            Err(Error::Load { row, file, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(file, "features.csv");
            }
            other => panic!("expected load error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_behavior_and_missing_label_fail() {
        let dir = tiny_dir();
        write(
            dir.path(),
            "features.csv",
            "object,behavior,modality,trial,f0\ncan,lick,vision,0,1\n",
        );
        assert!(matches!(load_dataset(dir.path()), Err(Error::Load { row: 2, .. })));

        let dir = tiny_dir();
        write(dir.path(), "labels.csv", "object,attribute,value\ncan,soft,0\n");
        assert!(matches!(load_dataset(dir.path()), Err(Error::Data(_))));
    }

    #[test]
    fn synthetic_roundtrip_through_csv_is_exact() {
        let cfg = SynthConfig::uniform(4, 2, 0.5, 11);
        let ds = synth_generate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.instances().len(), ds.instances().len());
        assert_eq!(back.vocab().contexts().len(), 17);
        for (a, b) in ds.instances().iter().zip(back.instances()) {
            assert_eq!(a.features, b.features);
            assert_eq!(a.object, b.object);
        }
        assert_eq!(back.label_table(), ds.label_table());
    }

    #[test]
    fn pretrain_rejects_unknown_objects() {
        let ds = synth_generate(&SynthConfig::uniform(4, 1, 1.0, 0)).unwrap();
        let attrs: Vec<AttributeId> = ds.vocab().all_attributes().collect();
        assert!(pretrain(&ds, &[ObjectId(4)], &attrs).is_err());
    }

    #[test]
    fn synthetic_labels_have_both_classes() {
        let mut total = 0;
        for seed in 0..40 {
            let ds = synth_generate(&SynthConfig::uniform(4, 3, 1.0, seed)).unwrap();
            for p in 0..3 {
                let pos = (0..4)
                    .filter(|&o| ds.label_table().get(ObjectId::from(o), AttributeId::from(p)).unwrap())
                    .count();
                assert!((1..4).contains(&pos));
                total += pos;
            }
        }
        // fair coins: 480 labels, about half positive
        assert!((190..=290).contains(&total), "{total} positives");
    }

    #[test]
    fn sparse_profile_keeps_an_informative_behavior_per_attribute() {
        let cfg = SynthConfig::sparse(15, 5, 0.6, 0.0001, 4);
        for p in 0..5 {
            assert!(cfg.informativeness.iter().any(|row| row[p] > 0.0));
        }
        cfg.validate().unwrap();
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = synth_generate(&SynthConfig {
            trials_per_behavior: 1,
            ..SynthConfig::uniform(101, 1, 0.0, 1)
        })
        .unwrap();
        let s = split_objects(&ds, 9).unwrap();
        let mut sizes = vec![s.pretrain.len(), s.train.len(), s.test.len()];
        sizes.sort();
        assert_eq!(sizes, vec![33, 34, 34]);
        assert_eq!(s, split_objects(&ds, 9).unwrap());
        let mut all: Vec<_> = s.pretrain.iter().chain(&s.train).chain(&s.test).copied().collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 101);
    }

    #[test]
    fn split_needs_three_objects() {
        let ds = load_dataset(tiny_dir().path()).unwrap();
        assert!(split_objects(&ds, 0).is_err());
    }

    #[test]
    fn pretrain_counts() {
        let ds = synth_generate(&SynthConfig::uniform(6, 2, 0.5, 5)).unwrap();
        let objects: Vec<ObjectId> = (0..5).map(ObjectId::from).collect();
        let attrs: Vec<AttributeId> = ds.vocab().all_attributes().collect();
        let pre = pretrain(&ds, &objects, &attrs).unwrap();
        assert_eq!(pre.instances().len(), 5 * 17);
        assert_eq!(pre.labels().len(), 5 * 17 * 2);
        assert!(pre.instances().iter().all(|i| i.trial == 0));

        let empty = pretrain(&ds, &[], &attrs).unwrap();
        assert!(empty.instances().is_empty());
    }

    #[test]
    fn sample_cosamples_modalities() {
        let ds = synth_generate(&SynthConfig::uniform(3, 1, 0.5, 5)).unwrap();
        let push = ds.vocab().behavior("push").unwrap();
        let mut rng = seeding::rng(1, &[]);
        let mut rng2 = seeding::rng(1, &[]);
        for _ in 0..20 {
            let e = sample_instance(&ds, ObjectId(1), push, &mut rng).unwrap();
            assert_eq!(e.instances.len(), 3);
            assert!(e.trial < 5);
            assert!(e.instances.iter().all(|&i| ds.instance(i).trial == e.trial));
            let e2 = sample_instance(&ds, ObjectId(1), push, &mut rng2).unwrap();
            assert_eq!(e.trial, e2.trial);
        }
    }

    #[test]
    fn relabeling_is_rejected() {
        let ds = synth_generate(&SynthConfig::uniform(3, 1, 0.5, 5)).unwrap();
        let mut d = ds.empty_like();
        let e = d.copy_execution(&ds, 0).unwrap();
        d.label_execution(e, AttributeId(0), true).unwrap();
        assert!(d.label_execution(e, AttributeId(0), false).is_err());
    }
}
