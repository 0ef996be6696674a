//! Execution of a system as a labeled transition system: prepared actions,
//! firing, concurrency policies, runs and the reachability graph.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{
    ActionDef, Configuration, Item, Label, PassedItem, PassedOut, StoredItem, StoredOut,
    SystemSpec, Tag,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("action {0} is not prepared")]
    NotPrepared(String),
    #[error("action {action} needs a fresh {kind} but the pool is exhausted")]
    PoolExhausted { action: String, kind: &'static str },
    #[error("firing {0} yields an invalid configuration (passed item directed to a missing node)")]
    InvalidTarget(String),
    #[error("no prepared action")]
    NoPreparedAction,
    #[error("actions {0} and {1} execute on the same node")]
    NodeConflict(String, String),
    #[error("state bound {max_states} exceeded")]
    BoundExceeded {
        max_states: usize,
        partial: Box<ReachGraph>,
    },
}

/// Record of one firing with every fresh placeholder resolved.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FiredAction {
    /// Index into `SystemSpec::actions`.
    pub action: usize,
    pub action_id: String,
    pub input_passed: PassedItem,
    pub input_stored: StoredItem,
    pub out_passed: Vec<PassedItem>,
    pub out_stored: Vec<StoredItem>,
    /// Names given to fresh-tag placeholders, in output order.
    pub fresh_tags: Vec<Tag>,
    /// Names given to fresh-location placeholders, in output order.
    pub fresh_labels: Vec<Label>,
    pub step_index: usize,
}

impl FiredAction {
    pub fn inputs(&self) -> [Item; 2] {
        [
            Item::Passed(self.input_passed),
            Item::Stored(self.input_stored),
        ]
    }

    pub fn outputs(&self) -> Vec<Item> {
        self.out_passed
            .iter()
            .copied()
            .map(Item::Passed)
            .chain(self.out_stored.iter().copied().map(Item::Stored))
            .collect()
    }

    pub fn node(&self) -> Label {
        self.input_stored.location
    }

    pub fn continuation_passed(&self) -> Option<&PassedItem> {
        self.out_passed
            .iter()
            .find(|p| p.tag == self.input_passed.tag)
    }

    pub fn continuation_stored(&self) -> Option<&StoredItem> {
        self.out_stored
            .iter()
            .find(|s| s.location == self.input_stored.location)
    }

    pub fn has_fresh(&self) -> bool {
        !self.fresh_tags.is_empty() || !self.fresh_labels.is_empty()
    }

    /// The firing of an action without fresh placeholders.
    pub fn of_static(spec: &SystemSpec, action: usize) -> Option<FiredAction> {
        let def = &spec.actions()[action];
        if def.has_fresh() {
            return None;
        }
        let mut tags = BTreeSet::new();
        let mut labels = BTreeSet::new();
        instantiate(spec, action, &mut tags, &mut labels, None).ok()
    }
}

/// A step of the system: a non-empty set of actions on distinct nodes fired
/// together.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Transition {
    pub step: usize,
    pub source: Configuration,
    pub fired: Vec<FiredAction>,
    pub target: Configuration,
}

/// Actions prepared in `config`, as indices in declaration order.
pub fn prepared(config: &Configuration, spec: &SystemSpec) -> Vec<usize> {
    spec.actions()
        .iter()
        .enumerate()
        .filter(|(_, a)| {
            config.passed.contains(&a.input_passed) && config.stored.contains(&a.input_stored)
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn is_prepared(config: &Configuration, def: &ActionDef) -> bool {
    config.passed.contains(&def.input_passed) && config.stored.contains(&def.input_stored)
}

/// Lowest-index pool tag not in `taken`.
pub fn allocate_tag(spec: &SystemSpec, taken: &BTreeSet<Tag>) -> Option<Tag> {
    spec.symbols()
        .pool_tags()
        .iter()
        .copied()
        .find(|t| !taken.contains(t))
}

/// Lowest-index pool label not in `taken`.
pub fn allocate_label(spec: &SystemSpec, taken: &BTreeSet<Label>) -> Option<Label> {
    spec.symbols()
        .pool_labels()
        .iter()
        .copied()
        .find(|l| !taken.contains(l))
}

/// Resolves the outputs of `action`. Fresh names are either taken from
/// `fixed` (replaying a recorded firing) or allocated outside `taken_tags` /
/// `taken_labels`; allocated names are added to the taken sets.
pub(crate) fn instantiate(
    spec: &SystemSpec,
    action: usize,
    taken_tags: &mut BTreeSet<Tag>,
    taken_labels: &mut BTreeSet<Label>,
    fixed: Option<(&[Tag], &[Label])>,
) -> Result<FiredAction, EngineError> {
    let def = &spec.actions()[action];
    let mut fresh_tags = Vec::new();
    let mut fresh_labels = Vec::new();
    let mut out_passed = Vec::with_capacity(def.out_passed.len());
    for o in &def.out_passed {
        match *o {
            PassedOut::Item(p) => out_passed.push(p),
            PassedOut::FreshTag {
                destination,
                service,
            } => {
                let tag = match fixed {
                    Some((tags, _)) => tags.get(fresh_tags.len()).copied(),
                    None => allocate_tag(spec, taken_tags),
                }
                .ok_or_else(|| EngineError::PoolExhausted {
                    action: def.id.clone(),
                    kind: "tag",
                })?;
                taken_tags.insert(tag);
                fresh_tags.push(tag);
                out_passed.push(PassedItem {
                    tag,
                    destination,
                    service,
                });
            }
        }
    }
    let mut out_stored = Vec::with_capacity(def.out_stored.len());
    for o in &def.out_stored {
        match *o {
            StoredOut::Item(s) => out_stored.push(s),
            StoredOut::FreshLocation { resource } => {
                let location = match fixed {
                    Some((_, labels)) => labels.get(fresh_labels.len()).copied(),
                    None => allocate_label(spec, taken_labels),
                }
                .ok_or_else(|| EngineError::PoolExhausted {
                    action: def.id.clone(),
                    kind: "label",
                })?;
                taken_labels.insert(location);
                fresh_labels.push(location);
                out_stored.push(StoredItem { location, resource });
            }
        }
    }
    Ok(FiredAction {
        action,
        action_id: def.id.clone(),
        input_passed: def.input_passed,
        input_stored: def.input_stored,
        out_passed,
        out_stored,
        fresh_tags,
        fresh_labels,
        step_index: 0,
    })
}

/// Fires one prepared action: `(config - {p, s}) ∪ CI`.
pub fn fire(
    config: &Configuration,
    spec: &SystemSpec,
    action: usize,
) -> Result<(Configuration, FiredAction), EngineError> {
    let t = fire_set(config, spec, &[action], 0)?;
    Ok((t.target, t.fired.into_iter().next().unwrap()))
}

/// Fires a set of prepared actions on pairwise distinct nodes at once.
pub fn fire_set(
    config: &Configuration,
    spec: &SystemSpec,
    actions: &[usize],
    step: usize,
) -> Result<Transition, EngineError> {
    replay_set(config, spec, actions, None, step)
}

/// Like [`fire_set`], but fresh names come from `recorded` when given (one
/// `(tags, labels)` entry per action).
pub(crate) fn replay_set(
    config: &Configuration,
    spec: &SystemSpec,
    actions: &[usize],
    recorded: Option<&[(Vec<Tag>, Vec<Label>)]>,
    step: usize,
) -> Result<Transition, EngineError> {
    let defs = spec.actions();
    for (n, &a) in actions.iter().enumerate() {
        if !is_prepared(config, &defs[a]) {
            return Err(EngineError::NotPrepared(defs[a].id.clone()));
        }
        for &b in &actions[..n] {
            if defs[a].node() == defs[b].node() {
                return Err(EngineError::NodeConflict(
                    defs[b].id.clone(),
                    defs[a].id.clone(),
                ));
            }
        }
    }
    let mut taken_tags = config.tags();
    let mut taken_labels = config.labels();
    let mut fired = Vec::with_capacity(actions.len());
    for (n, &a) in actions.iter().enumerate() {
        let fixed = recorded.map(|r| (r[n].0.as_slice(), r[n].1.as_slice()));
        let mut f = instantiate(spec, a, &mut taken_tags, &mut taken_labels, fixed)?;
        f.step_index = step;
        fired.push(f);
    }
    let mut target = config.clone();
    for f in &fired {
        for i in f.inputs() {
            target.remove(&i);
        }
    }
    for f in &fired {
        for i in f.outputs() {
            target.insert(i);
        }
    }
    if !target.is_valid() {
        return Err(EngineError::InvalidTarget(
            fired
                .iter()
                .map(|f| f.action_id.as_str())
                .collect::<Vec<_>>()
                .join(","),
        ));
    }
    Ok(Transition {
        step,
        source: config.clone(),
        fired,
        target,
    })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    /// One action per step.
    Interleaving,
    /// One action on every node that has a prepared action.
    MaxConcurrency,
    /// One action on each of at most `k` nodes.
    Intermediate,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Interleaving => "interleaving",
            PolicyKind::MaxConcurrency => "max",
            PolicyKind::Intermediate => "intermediate",
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Policy {
    pub kind: PolicyKind,
    pub k: usize,
    pub seed: u64,
}

impl Policy {
    pub fn interleaving(seed: u64) -> Self {
        Policy {
            kind: PolicyKind::Interleaving,
            k: 1,
            seed,
        }
    }

    pub fn max_concurrency(seed: u64) -> Self {
        Policy {
            kind: PolicyKind::MaxConcurrency,
            k: 1,
            seed,
        }
    }

    /// Panics if `k` is zero.
    pub fn intermediate(k: usize, seed: u64) -> Self {
        assert!(k >= 1, "intermediate policy needs k >= 1");
        Policy {
            kind: PolicyKind::Intermediate,
            k,
            seed,
        }
    }
}

/// Seeded selector implementing a policy. All nondeterministic choices of a
/// run go through its generator.
pub struct Scheduler {
    policy: Policy,
    rng: ChaCha8Rng,
}

impl Scheduler {
    pub fn new(policy: Policy) -> Self {
        Scheduler {
            policy,
            rng: ChaCha8Rng::seed_from_u64(policy.seed),
        }
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    /// Picks the actions of the next step among `prepared`. The result has
    /// at most one action per node and is sorted by action index.
    pub fn select(&mut self, spec: &SystemSpec, prepared: &[usize]) -> Vec<usize> {
        if prepared.is_empty() {
            return Vec::new();
        }
        let mut by_node: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
        for &a in prepared {
            by_node.entry(spec.actions()[a].node()).or_default().push(a);
        }
        let groups: Vec<Vec<usize>> = by_node.into_values().collect();
        let mut chosen: Vec<usize> = match self.policy.kind {
            PolicyKind::Interleaving => {
                vec![prepared[self.rng.gen_range(0..prepared.len())]]
            }
            PolicyKind::MaxConcurrency => groups
                .iter()
                .map(|g| g[self.rng.gen_range(0..g.len())])
                .collect(),
            PolicyKind::Intermediate => {
                let m = self.policy.k.min(groups.len());
                let mut nodes = sample(&mut self.rng, groups.len(), m).into_vec();
                nodes.sort_unstable();
                nodes
                    .into_iter()
                    .map(|n| {
                        let g = &groups[n];
                        g[self.rng.gen_range(0..g.len())]
                    })
                    .collect()
            }
        };
        chosen.sort_unstable();
        chosen
    }
}

/// One step from `config` under the scheduler's policy.
pub fn step(
    config: &Configuration,
    spec: &SystemSpec,
    scheduler: &mut Scheduler,
    step_index: usize,
) -> Result<Transition, EngineError> {
    let ready = prepared(config, spec);
    if ready.is_empty() {
        return Err(EngineError::NoPreparedAction);
    }
    let chosen = scheduler.select(spec, &ready);
    fire_set(config, spec, &chosen, step_index)
}

/// Steps from the initial configuration until nothing is prepared or
/// `max_steps` transitions were taken.
pub fn run(
    spec: &SystemSpec,
    policy: Policy,
    max_steps: usize,
) -> Result<Vec<Transition>, EngineError> {
    let mut scheduler = Scheduler::new(policy);
    let mut config = spec.initial().clone();
    let mut trace = Vec::new();
    while trace.len() < max_steps {
        if prepared(&config, spec).is_empty() {
            break;
        }
        let t = step(&config, spec, &mut scheduler, trace.len())?;
        config = t.target.clone();
        trace.push(t);
    }
    Ok(trace)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ReachBounds {
    pub max_states: usize,
}

impl Default for ReachBounds {
    fn default() -> Self {
        ReachBounds {
            max_states: 1_000_000,
        }
    }
}

/// Single-action edge of the reachability graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub fired: FiredAction,
}

/// Reachable configurations and interleaving transitions between them.
/// State 0 is the initial configuration.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReachGraph {
    pub states: Vec<Configuration>,
    pub edges: Vec<Edge>,
    pub terminal: Vec<usize>,
    pub truncated: bool,
}

impl ReachGraph {
    pub fn initial(&self) -> usize {
        0
    }

    pub fn index_of(&self, config: &Configuration) -> Option<usize> {
        self.states.iter().position(|s| s == config)
    }

    /// Outgoing edge indices per state.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.states.len()];
        for (i, e) in self.edges.iter().enumerate() {
            out[e.source].push(i);
        }
        out
    }

    /// Incoming edge indices per state.
    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.states.len()];
        for (i, e) in self.edges.iter().enumerate() {
            inc[e.target].push(i);
        }
        inc
    }
}

/// Breadth-first closure of `fire` over every prepared action, starting at
/// the initial configuration.
pub fn reach(spec: &SystemSpec, bounds: ReachBounds) -> Result<ReachGraph, EngineError> {
    let mut graph = ReachGraph::default();
    let mut index: HashMap<Configuration, usize> = HashMap::new();
    let mut depth = vec![0usize];
    graph.states.push(spec.initial().clone());
    index.insert(spec.initial().clone(), 0);
    let mut queue = VecDeque::from([0usize]);
    if bounds.max_states == 0 {
        graph.truncated = true;
        graph.states.clear();
        return Err(EngineError::BoundExceeded {
            max_states: 0,
            partial: Box::new(graph),
        });
    }

    while let Some(s) = queue.pop_front() {
        let source = graph.states[s].clone();
        let ready = prepared(&source, spec);
        if ready.is_empty() {
            graph.terminal.push(s);
            continue;
        }
        for a in ready {
            let (target, mut fired) = fire(&source, spec, a)?;
            fired.step_index = depth[s];
            let t = match index.get(&target) {
                Some(&t) => t,
                None => {
                    if graph.states.len() >= bounds.max_states {
                        graph.truncated = true;
                        graph.terminal.sort_unstable();
                        return Err(EngineError::BoundExceeded {
                            max_states: bounds.max_states,
                            partial: Box::new(graph),
                        });
                    }
                    let t = graph.states.len();
                    graph.states.push(target.clone());
                    index.insert(target, t);
                    depth.push(depth[s] + 1);
                    queue.push_back(t);
                    t
                }
            };
            graph.edges.push(Edge {
                source: s,
                target: t,
                fired,
            });
        }
    }
    graph.terminal.sort_unstable();
    Ok(graph)
}
