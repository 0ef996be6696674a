//! Petri-net view of a system: one place per item, one transition per
//! action. Includes the plain token game used for the safety check, a
//! colored token game whose colors follow tags (PCOL) and locations (SCOL),
//! extraction of traveler and resident processes from a colored trace, and
//! DOT export.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{allocate_label, allocate_tag, ReachGraph, Transition};
use crate::model::{
    Configuration, Item, Label, PassedItem, PassedOut, StoredItem, StoredOut, SymbolTable,
    SystemSpec, Tag,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PetriError {
    #[error("transition {0} is not enabled")]
    NotEnabled(String),
    #[error("transition {action} needs a fresh {kind} but the pool is exhausted")]
    PoolExhausted { action: String, kind: &'static str },
    #[error("no free {0} color left")]
    ColorPoolExhausted(ColorClass),
    #[error("place {0} would hold two tokens")]
    Unsafe(String),
    #[error("unknown transition {0}")]
    UnknownTransition(String),
    #[error("state bound {0} exceeded")]
    BoundExceeded(usize),
}

/// Output arc of a transition. Fresh arcs are resolved to a concrete place
/// when the transition fires.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum OutArc {
    Place(usize),
    FreshTag(PassedOut),
    FreshLocation(StoredOut),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetTransition {
    /// Index into `SystemSpec::actions`.
    pub action: usize,
    pub id: String,
    pub input_passed: usize,
    pub input_stored: usize,
    pub outputs: Vec<OutArc>,
}

/// Arc between a place and a transition (by name).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Arc {
    pub place: String,
    pub transition: String,
    /// Place to transition; otherwise transition to place.
    pub input: bool,
    /// Drawn for a fresh placeholder.
    pub fresh: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PetriNet {
    /// Places sorted by item name.
    pub places: Vec<Item>,
    pub names: Vec<String>,
    index: HashMap<Item, usize>,
    pub transitions: Vec<NetTransition>,
    pub initial_marking: Vec<u8>,
    passed_pool: Vec<Tag>,
    label_pool: Vec<Label>,
}

/// Builds the net of a system. Places cover the item universe, which
/// already contains every instantiation of fresh outputs.
pub fn to_petri(spec: &SystemSpec) -> PetriNet {
    let sym = spec.symbols();
    let mut places: Vec<(String, Item)> = spec
        .universe()
        .items()
        .map(|i| (sym.show(&i), i))
        .collect();
    places.sort();
    let names: Vec<String> = places.iter().map(|(n, _)| n.clone()).collect();
    let places: Vec<Item> = places.into_iter().map(|(_, i)| i).collect();
    let index: HashMap<Item, usize> = places.iter().enumerate().map(|(n, i)| (*i, n)).collect();

    let transitions = spec
        .actions()
        .iter()
        .enumerate()
        .map(|(a, def)| {
            let mut outputs = Vec::new();
            for o in &def.out_passed {
                outputs.push(match o {
                    PassedOut::Item(p) => OutArc::Place(index[&Item::Passed(*p)]),
                    fresh => OutArc::FreshTag(*fresh),
                });
            }
            for o in &def.out_stored {
                outputs.push(match o {
                    StoredOut::Item(s) => OutArc::Place(index[&Item::Stored(*s)]),
                    fresh => OutArc::FreshLocation(*fresh),
                });
            }
            NetTransition {
                action: a,
                id: def.id.clone(),
                input_passed: index[&Item::Passed(def.input_passed)],
                input_stored: index[&Item::Stored(def.input_stored)],
                outputs,
            }
        })
        .collect();

    let mut initial_marking = vec![0u8; places.len()];
    for i in spec.initial().items() {
        initial_marking[index[&i]] = 1;
    }

    PetriNet {
        places,
        names,
        index,
        transitions,
        initial_marking,
        passed_pool: sym.pool_tags().to_vec(),
        label_pool: sym.pool_labels().to_vec(),
    }
}

/// Output places of a firing plus the fresh tags and labels it used.
type Resolved = (Vec<usize>, Vec<Tag>, Vec<Label>);

impl PetriNet {
    pub fn place_of(&self, item: &Item) -> Option<usize> {
        self.index.get(item).copied()
    }

    pub fn transition(&self, id: &str) -> Option<usize> {
        self.transitions.iter().position(|t| t.id == id)
    }

    pub fn marking_of(&self, config: &Configuration) -> Vec<u8> {
        let mut m = vec![0u8; self.places.len()];
        for i in config.items() {
            m[self.index[&i]] += 1;
        }
        m
    }

    pub fn configuration_of(&self, marking: &[u8]) -> Configuration {
        Configuration::from_items(
            marking
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(p, _)| self.places[p]),
        )
    }

    /// Arcs of the net. A fresh output arc is drawn to every place it can
    /// resolve to.
    pub fn arcs(&self) -> Vec<Arc> {
        let arc = |place: usize, t: &NetTransition, input: bool, fresh: bool| Arc {
            place: self.names[place].clone(),
            transition: t.id.clone(),
            input,
            fresh,
        };
        let mut arcs = Vec::new();
        for t in &self.transitions {
            arcs.push(arc(t.input_passed, t, true, false));
            arcs.push(arc(t.input_stored, t, true, false));
            for o in &t.outputs {
                match o {
                    OutArc::Place(p) => arcs.push(arc(*p, t, false, false)),
                    OutArc::FreshTag(_) | OutArc::FreshLocation(_) => {
                        for p in self.fresh_targets(o) {
                            arcs.push(arc(p, t, false, true));
                        }
                    }
                }
            }
        }
        arcs
    }

    fn fresh_targets(&self, arc: &OutArc) -> Vec<usize> {
        match *arc {
            OutArc::FreshTag(PassedOut::FreshTag {
                destination,
                service,
            }) => self
                .passed_pool
                .iter()
                .map(|&tag| {
                    self.index[&Item::Passed(PassedItem {
                        tag,
                        destination,
                        service,
                    })]
                })
                .collect(),
            OutArc::FreshLocation(StoredOut::FreshLocation { resource }) => self
                .label_pool
                .iter()
                .map(|&location| self.index[&Item::Stored(StoredItem { location, resource })])
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_enabled(&self, marking: &[u8], t: usize) -> bool {
        let tr = &self.transitions[t];
        marking[tr.input_passed] > 0 && marking[tr.input_stored] > 0
    }

    pub fn enabled(&self, marking: &[u8]) -> Vec<usize> {
        (0..self.transitions.len())
            .filter(|&t| self.is_enabled(marking, t))
            .collect()
    }

    fn live_names(&self, marking: &[u8]) -> (BTreeSet<Tag>, BTreeSet<Label>) {
        let mut tags = BTreeSet::new();
        let mut labels = BTreeSet::new();
        for (p, &c) in marking.iter().enumerate() {
            if c == 0 {
                continue;
            }
            match self.places[p] {
                Item::Passed(pi) => {
                    tags.insert(pi.tag);
                    labels.insert(pi.destination);
                }
                Item::Stored(s) => {
                    labels.insert(s.location);
                }
            }
        }
        (tags, labels)
    }

    /// Output places of `t` when fired in `marking`, fresh arcs resolved to
    /// the lowest free pool name (or to `fixed` names).
    fn resolve_outputs(
        &self,
        spec: &SystemSpec,
        marking: &[u8],
        t: usize,
        fixed: Option<(&[Tag], &[Label])>,
    ) -> Result<Resolved, PetriError> {
        let tr = &self.transitions[t];
        let (mut tags, mut labels) = self.live_names(marking);
        let mut fresh_tags = Vec::new();
        let mut fresh_labels = Vec::new();
        let mut out = Vec::with_capacity(tr.outputs.len());
        for arc in &tr.outputs {
            match *arc {
                OutArc::Place(p) => out.push(p),
                OutArc::FreshTag(PassedOut::FreshTag {
                    destination,
                    service,
                }) => {
                    let tag = match fixed {
                        Some((f, _)) => f.get(fresh_tags.len()).copied(),
                        None => allocate_tag(spec, &tags),
                    }
                    .ok_or_else(|| PetriError::PoolExhausted {
                        action: tr.id.clone(),
                        kind: "tag",
                    })?;
                    tags.insert(tag);
                    fresh_tags.push(tag);
                    out.push(
                        self.index[&Item::Passed(PassedItem {
                            tag,
                            destination,
                            service,
                        })],
                    );
                }
                OutArc::FreshLocation(StoredOut::FreshLocation { resource }) => {
                    let location = match fixed {
                        Some((_, f)) => f.get(fresh_labels.len()).copied(),
                        None => allocate_label(spec, &labels),
                    }
                    .ok_or_else(|| PetriError::PoolExhausted {
                        action: tr.id.clone(),
                        kind: "label",
                    })?;
                    labels.insert(location);
                    fresh_labels.push(location);
                    out.push(self.index[&Item::Stored(StoredItem { location, resource })]);
                }
                _ => unreachable!("fresh arcs only hold placeholders"),
            }
        }
        Ok((out, fresh_tags, fresh_labels))
    }

    /// Plain firing rule on token counts: one token off each input place,
    /// one token onto each output place.
    pub fn fire(&self, spec: &SystemSpec, marking: &[u8], t: usize) -> Result<Vec<u8>, PetriError> {
        let tr = &self.transitions[t];
        if !self.is_enabled(marking, t) {
            return Err(PetriError::NotEnabled(tr.id.clone()));
        }
        let (outputs, _, _) = self.resolve_outputs(spec, marking, t, None)?;
        let mut next = marking.to_vec();
        next[tr.input_passed] -= 1;
        next[tr.input_stored] -= 1;
        for p in outputs {
            next[p] = next[p].saturating_add(1);
        }
        Ok(next)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorClass {
    Pcol,
    Scol,
}

impl fmt::Display for ColorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ColorClass::Pcol => "PCOL",
            ColorClass::Scol => "SCOL",
        })
    }
}

/// Token color: `ct_i` for passed-item tokens, `cl_i` for stored-item
/// tokens. Indices start at 1.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Color {
    pub class: ColorClass,
    pub index: u32,
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.class {
            ColorClass::Pcol => write!(f, "ct_{}", self.index),
            ColorClass::Scol => write!(f, "cl_{}", self.index),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
struct Token {
    color: Color,
    lifetime: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessRole {
    Traveler,
    Resident,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Start {
    Static,
    Dynamic { step: usize },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum End {
    Terminated { step: usize },
    Open,
}

/// One use of a color, from its assignment to a tag or location until its
/// release. A reused color starts a new lifetime.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lifetime {
    pub id: usize,
    pub role: ProcessRole,
    pub color: String,
    /// Tag or location name.
    pub subject: String,
    pub start: Start,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub place: String,
    pub color: String,
    pub lifetime: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColoredFiring {
    pub step: usize,
    pub action: String,
    /// Input passed token, then input stored token.
    pub consumed: Vec<TokenRecord>,
    pub produced: Vec<TokenRecord>,
    /// Lifetimes started by this firing.
    pub born: Vec<usize>,
    /// Lifetimes ended by this firing.
    pub ended: Vec<usize>,
    /// Names given to fresh placeholders.
    pub fresh: Vec<String>,
}

/// A run of the colored token game, self-contained: all names are strings.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColoredTrace {
    pub lifetimes: Vec<Lifetime>,
    pub initial: Vec<TokenRecord>,
    pub firings: Vec<ColoredFiring>,
}

/// Caps on the number of distinct colors of each class.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ColorLimits {
    pub pcol: u32,
    pub scol: u32,
}

impl ColorLimits {
    /// One color per tag and per label of the symbol table.
    pub fn for_spec(spec: &SystemSpec) -> Self {
        ColorLimits {
            pcol: spec.symbols().tags().count() as u32,
            scol: spec.symbols().labels().count() as u32,
        }
    }
}

/// Colored marking plus the color pool. Released PCOL colors are reused in
/// FIFO order before new indices are opened.
#[derive(Clone, Debug)]
pub struct ColoredGame<'a> {
    net: &'a PetriNet,
    spec: &'a SystemSpec,
    tokens: BTreeMap<usize, Token>,
    free: [VecDeque<u32>; 2],
    next: [u32; 2],
    limits: ColorLimits,
    trace: ColoredTrace,
}

fn class_slot(class: ColorClass) -> usize {
    match class {
        ColorClass::Pcol => 0,
        ColorClass::Scol => 1,
    }
}

impl<'a> ColoredGame<'a> {
    /// Colors the initial marking: tags in name order get ct_1, ct_2, ...;
    /// locations in name order get cl_1, cl_2, ...
    pub fn new(net: &'a PetriNet, spec: &'a SystemSpec, limits: ColorLimits) -> Result<Self, PetriError> {
        let mut game = ColoredGame {
            net,
            spec,
            tokens: BTreeMap::new(),
            free: [VecDeque::new(), VecDeque::new()],
            next: [1, 1],
            limits,
            trace: ColoredTrace::default(),
        };
        let init = spec.initial();
        for p in &init.passed {
            let token = game.open(ColorClass::Pcol, spec.symbols().tag_name(p.tag), Start::Static)?;
            game.put(Item::Passed(*p), token)?;
        }
        for s in &init.stored {
            let token = game.open(
                ColorClass::Scol,
                spec.symbols().label_name(s.location),
                Start::Static,
            )?;
            game.put(Item::Stored(*s), token)?;
        }
        game.trace.initial = game.records(game.tokens.keys().copied());
        Ok(game)
    }

    fn open(&mut self, class: ColorClass, subject: &str, start: Start) -> Result<Token, PetriError> {
        let slot = class_slot(class);
        let index = match self.free[slot].pop_front() {
            Some(i) => i,
            None => {
                let cap = match class {
                    ColorClass::Pcol => self.limits.pcol,
                    ColorClass::Scol => self.limits.scol,
                };
                if self.next[slot] > cap {
                    return Err(PetriError::ColorPoolExhausted(class));
                }
                self.next[slot] += 1;
                self.next[slot] - 1
            }
        };
        let color = Color { class, index };
        let id = self.trace.lifetimes.len();
        self.trace.lifetimes.push(Lifetime {
            id,
            role: match class {
                ColorClass::Pcol => ProcessRole::Traveler,
                ColorClass::Scol => ProcessRole::Resident,
            },
            color: color.to_string(),
            subject: subject.to_string(),
            start,
        });
        Ok(Token { color, lifetime: id })
    }

    fn put(&mut self, item: Item, token: Token) -> Result<(), PetriError> {
        let place = self.net.index[&item];
        if self.tokens.insert(place, token).is_some() {
            return Err(PetriError::Unsafe(self.net.names[place].clone()));
        }
        Ok(())
    }

    fn records(&self, places: impl IntoIterator<Item = usize>) -> Vec<TokenRecord> {
        places
            .into_iter()
            .map(|p| {
                let t = self.tokens[&p];
                TokenRecord {
                    place: self.net.names[p].clone(),
                    color: t.color.to_string(),
                    lifetime: t.lifetime,
                }
            })
            .collect()
    }

    pub fn marking(&self) -> Vec<u8> {
        let mut m = vec![0u8; self.net.places.len()];
        for p in self.tokens.keys() {
            m[*p] = 1;
        }
        m
    }

    pub fn configuration(&self) -> Configuration {
        self.net.configuration_of(&self.marking())
    }

    /// Color of the token on the place of `item`, if marked.
    pub fn color_of(&self, item: &Item) -> Option<Color> {
        let p = self.net.place_of(item)?;
        self.tokens.get(&p).map(|t| t.color)
    }

    /// PCOL colors in use biject with present tags and SCOL colors with
    /// present locations.
    pub fn colors_conserved(&self) -> bool {
        let mut by_tag: BTreeMap<Tag, BTreeSet<Color>> = BTreeMap::new();
        let mut by_loc: BTreeMap<Label, BTreeSet<Color>> = BTreeMap::new();
        for (p, t) in &self.tokens {
            match self.net.places[*p] {
                Item::Passed(pi) if t.color.class == ColorClass::Pcol => {
                    by_tag.entry(pi.tag).or_default().insert(t.color);
                }
                Item::Stored(s) if t.color.class == ColorClass::Scol => {
                    by_loc.entry(s.location).or_default().insert(t.color);
                }
                _ => return false,
            }
        }
        fn injective<K>(m: &BTreeMap<K, BTreeSet<Color>>) -> bool {
            let all: BTreeSet<Color> = m.values().flatten().copied().collect();
            m.values().all(|c| c.len() == 1) && all.len() == m.len()
        }
        injective(&by_tag) && injective(&by_loc)
    }

    /// Fires transition `t`. Fresh names come from `fixed` when replaying a
    /// recorded firing, otherwise from the lowest free pool names.
    pub fn step(
        &mut self,
        t: usize,
        step: usize,
        fixed: Option<(&[Tag], &[Label])>,
    ) -> Result<&ColoredFiring, PetriError> {
        let net = self.net;
        let tr = &net.transitions[t];
        let marking = self.marking();
        if !net.is_enabled(&marking, t) {
            return Err(PetriError::NotEnabled(tr.id.clone()));
        }
        let (outputs, fresh_tags, fresh_labels) =
            net.resolve_outputs(self.spec, &marking, t, fixed)?;
        let sym = self.spec.symbols();

        let consumed = self.records([tr.input_passed, tr.input_stored]);
        let passed_token = self.tokens.remove(&tr.input_passed).unwrap();
        let stored_token = self.tokens.remove(&tr.input_stored).unwrap();
        let Item::Passed(input_passed) = net.places[tr.input_passed] else {
            unreachable!()
        };
        let Item::Stored(input_stored) = net.places[tr.input_stored] else {
            unreachable!()
        };

        let mut born = Vec::new();
        let mut ended = Vec::new();
        let continues = outputs.iter().any(|p| {
            matches!(net.places[*p], Item::Passed(o) if o.tag == input_passed.tag)
        });
        if !continues {
            // tag ends here; its color goes back to the pool
            self.free[class_slot(ColorClass::Pcol)].push_back(passed_token.color.index);
            ended.push(passed_token.lifetime);
        }

        for &p in &outputs {
            let item = net.places[p];
            let token = match item {
                Item::Passed(o) if o.tag == input_passed.tag => passed_token,
                Item::Passed(o) => {
                    let token =
                        self.open(ColorClass::Pcol, sym.tag_name(o.tag), Start::Dynamic { step })?;
                    born.push(token.lifetime);
                    token
                }
                Item::Stored(o) if o.location == input_stored.location => stored_token,
                Item::Stored(o) => {
                    let token = self.open(
                        ColorClass::Scol,
                        sym.label_name(o.location),
                        Start::Dynamic { step },
                    )?;
                    born.push(token.lifetime);
                    token
                }
            };
            self.put(item, token)?;
        }

        let produced = self.records(outputs.iter().copied());
        let fresh = fresh_tags
            .iter()
            .map(|t| sym.tag_name(*t).to_string())
            .chain(fresh_labels.iter().map(|l| sym.label_name(*l).to_string()))
            .collect();
        self.trace.firings.push(ColoredFiring {
            step,
            action: tr.id.clone(),
            consumed,
            produced,
            born,
            ended,
            fresh,
        });
        Ok(self.trace.firings.last().unwrap())
    }

    pub fn trace(&self) -> &ColoredTrace {
        &self.trace
    }

    pub fn into_trace(self) -> ColoredTrace {
        self.trace
    }
}

/// Replays an engine run through the colored token game. Actions fired
/// together in one step are applied in order under the same step index.
pub fn colored_replay(spec: &SystemSpec, run: &[Transition]) -> Result<ColoredTrace, PetriError> {
    let net = to_petri(spec);
    let mut game = ColoredGame::new(&net, spec, ColorLimits::for_spec(spec))?;
    for t in run {
        for f in &t.fired {
            let tr = net
                .transition(&f.action_id)
                .ok_or_else(|| PetriError::UnknownTransition(f.action_id.clone()))?;
            game.step(tr, t.step, Some((&f.fresh_tags, &f.fresh_labels)))?;
        }
    }
    Ok(game.into_trace())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiringRef {
    /// Position in the colored trace.
    pub index: usize,
    pub step: usize,
    pub action: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedProcess {
    pub role: ProcessRole,
    pub color: String,
    pub subject: String,
    pub lifetime: usize,
    pub start: Start,
    pub end: End,
    pub trace: Vec<FiringRef>,
}

/// Splits a colored trace into processes, one per color lifetime. Each
/// firing joins the traveler of its input passed token and the resident of
/// its input stored token.
pub fn extract_processes(trace: &ColoredTrace) -> Vec<ExtractedProcess> {
    let mut processes: Vec<ExtractedProcess> = trace
        .lifetimes
        .iter()
        .map(|l| ExtractedProcess {
            role: l.role,
            color: l.color.clone(),
            subject: l.subject.clone(),
            lifetime: l.id,
            start: l.start,
            end: End::Open,
            trace: Vec::new(),
        })
        .collect();
    for (index, f) in trace.firings.iter().enumerate() {
        for token in &f.consumed {
            if let Some(p) = processes.get_mut(token.lifetime) {
                p.trace.push(FiringRef {
                    index,
                    step: f.step,
                    action: f.action.clone(),
                });
            }
        }
        for &l in &f.ended {
            if let Some(p) = processes.get_mut(l) {
                p.end = End::Terminated { step: f.step };
            }
        }
    }
    processes
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Growth {
    pub action: String,
    pub kind: &'static str,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SafetyReport {
    /// No reachable marking holds two tokens on one place.
    pub safe: bool,
    pub unsafe_place: Option<String>,
    pub markings: usize,
    pub max_live_tags: usize,
    pub max_live_locations: usize,
    /// Set when some firing needed more fresh names than the pool holds.
    pub growth: Option<Growth>,
}

/// Explores the plain token game from the initial marking and checks
/// 1-safety of every reachable marking.
pub fn check_safe(spec: &SystemSpec, max_markings: usize) -> Result<SafetyReport, PetriError> {
    let net = to_petri(spec);
    let mut report = SafetyReport {
        safe: true,
        unsafe_place: None,
        markings: 0,
        max_live_tags: 0,
        max_live_locations: 0,
        growth: None,
    };
    let mut seen: HashMap<Vec<u8>, ()> = HashMap::new();
    let mut queue = VecDeque::new();
    seen.insert(net.initial_marking.clone(), ());
    queue.push_back(net.initial_marking.clone());
    while let Some(m) = queue.pop_front() {
        report.markings += 1;
        if let Some(p) = m.iter().position(|&c| c > 1) {
            report.safe = false;
            report.unsafe_place.get_or_insert_with(|| net.names[p].clone());
            continue;
        }
        let (tags, _) = net.live_names(&m);
        let locations = m
            .iter()
            .enumerate()
            .filter(|(p, &c)| c > 0 && matches!(net.places[*p], Item::Stored(_)))
            .map(|(p, _)| net.places[p].label())
            .collect::<BTreeSet<_>>();
        report.max_live_tags = report.max_live_tags.max(tags.len());
        report.max_live_locations = report.max_live_locations.max(locations.len());
        for t in net.enabled(&m) {
            match net.fire(spec, &m, t) {
                Ok(next) => {
                    if !seen.contains_key(&next) {
                        if seen.len() >= max_markings {
                            return Err(PetriError::BoundExceeded(max_markings));
                        }
                        seen.insert(next.clone(), ());
                        queue.push_back(next);
                    }
                }
                Err(PetriError::PoolExhausted { action, kind }) => {
                    report.growth.get_or_insert(Growth { action, kind });
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(report)
}

/// How places are filled in DOT output.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub enum DotColoring {
    /// Marked places filled gray.
    #[default]
    Marking,
    /// Places filled by the traveler (tag) they belong to.
    ByTag,
    /// Places filled by the resident (location or destination).
    ByLocation,
}

const PALETTE: [&str; 8] = [
    "lightblue",
    "lightpink",
    "palegreen",
    "khaki",
    "plum",
    "lightsalmon",
    "paleturquoise",
    "wheat",
];

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// DOT text for a net. Places are circles (marked ones filled), transitions
/// boxes. Node order is lexicographic by name.
pub fn export_net_dot(net: &PetriNet, sym: &SymbolTable, coloring: DotColoring) -> String {
    let mut out = String::from("digraph imds {\n");
    if net.places.is_empty() && net.transitions.is_empty() {
        out.push_str("}\n");
        return out;
    }
    out.push_str("  rankdir=LR;\n");
    let group = |item: &Item| -> String {
        match (coloring, item) {
            (DotColoring::ByTag, Item::Passed(p)) => sym.tag_name(p.tag).to_string(),
            (DotColoring::ByTag, Item::Stored(_)) => String::new(),
            (_, i) => sym.label_name(i.label()).to_string(),
        }
    };
    let groups: BTreeSet<String> = net.places.iter().map(group).filter(|g| !g.is_empty()).collect();
    let palette: BTreeMap<&String, &str> = groups
        .iter()
        .enumerate()
        .map(|(i, g)| (g, PALETTE[i % PALETTE.len()]))
        .collect();
    for (p, name) in net.names.iter().enumerate() {
        let marked = net.initial_marking[p] > 0;
        let mut attrs = vec!["shape=circle".to_string()];
        match coloring {
            DotColoring::Marking => {
                if marked {
                    attrs.push("style=filled".into());
                    attrs.push("fillcolor=gray70".into());
                }
            }
            _ => {
                let g = group(&net.places[p]);
                if let Some(c) = palette.get(&g) {
                    attrs.push("style=filled".into());
                    attrs.push(format!("fillcolor={c}"));
                }
                if marked {
                    attrs.push("penwidth=2".into());
                }
            }
        }
        let _ = writeln!(out, "  {} [{}];", quote(&format!("p:{name}")), attrs.join(", ") + &format!(", label={}", quote(name)));
    }
    let mut ids: Vec<&str> = net.transitions.iter().map(|t| t.id.as_str()).collect();
    ids.sort_unstable();
    for id in ids {
        let _ = writeln!(out, "  {} [shape=box, label={}];", quote(&format!("t:{id}")), quote(id));
    }
    let mut arcs = net.arcs();
    arcs.sort_by(|a, b| {
        (!a.input, &a.transition, &a.place).cmp(&(!b.input, &b.transition, &b.place))
    });
    for a in arcs {
        let place = quote(&format!("p:{}", a.place));
        let transition = quote(&format!("t:{}", a.transition));
        let (f, t) = if a.input {
            (place, transition)
        } else {
            (transition, place)
        };
        let style = if a.fresh { " [style=dashed]" } else { "" };
        let _ = writeln!(out, "  {f} -> {t}{style};");
    }
    out.push_str("}\n");
    out
}

/// DOT text for a reachability graph: states as nodes labeled by their
/// items, edges labeled by action id. Terminal states are double circles.
pub fn export_reach_dot(graph: &ReachGraph, sym: &SymbolTable) -> String {
    let mut out = String::from("digraph reach {\n");
    if graph.states.is_empty() {
        out.push_str("}\n");
        return out;
    }
    let terminal: BTreeSet<usize> = graph.terminal.iter().copied().collect();
    for (i, s) in graph.states.iter().enumerate() {
        let label = s.render(sym).join("\\n");
        let shape = if terminal.contains(&i) {
            "doublecircle"
        } else {
            "circle"
        };
        let _ = writeln!(out, "  s{i} [shape={shape}, label=\"{label}\"];");
    }
    for e in &graph.edges {
        let _ = writeln!(
            out,
            "  s{} -> s{} [label={}];",
            e.source,
            e.target,
            quote(&e.fired.action_id)
        );
    }
    out.push_str("}\n");
    out
}
