//! Communication items, actions, configurations and the static rules a
//! system definition has to satisfy.
//!
//! Identifiers are interned per namespace. Every namespace is kept sorted by
//! name, so the derived `Ord` on ids agrees with the lexicographic order of
//! the names they stand for.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

/// Placeholder accepted in model files where a fresh tag or location is
/// created at firing time.
pub const FRESH: &str = "@fresh";

/// Prefix of the pool names handed out for fresh tags.
pub const POOL_TAG_PREFIX: &str = "t#";

/// Prefix of the pool names handed out for fresh locations.
pub const POOL_LABEL_PREFIX: &str = "l#";

macro_rules! symbol_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub(crate) u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

symbol_id!(
    /// Node identifier.
    Label
);
symbol_id!(Service);
symbol_id!(Resource);
symbol_id!(
    /// Control-flow ("matter") identifier carried by passed items.
    Tag
);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("identifier {0:?} is not valid: {1}")]
    BadIdentifier(String, &'static str),
    #[error("identifier {name:?} declared twice in {space}")]
    Duplicate { name: String, space: &'static str },
    #[error("identifier {name:?} declared both as {first} and {second}")]
    NamespaceClash {
        name: String,
        first: &'static str,
        second: &'static str,
    },
    #[error("unknown {space} {name:?}")]
    Unresolved { name: String, space: &'static str },
}

/// Sizes of the pools fresh tags and fresh locations are drawn from.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct FreshPoolBounds {
    pub tags: usize,
    pub labels: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Space {
    Label,
    Service,
    Resource,
    Tag,
}

impl Space {
    fn name(self) -> &'static str {
        match self {
            Space::Label => "label",
            Space::Service => "service",
            Space::Resource => "resource",
            Space::Tag => "tag",
        }
    }
}

/// The four identifier namespaces of a system. Pool names for fresh tags
/// (`t#0`, `t#1`, ...) and fresh labels (`l#0`, ...) are interned alongside
/// the declared ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolTable {
    labels: Vec<String>,
    services: Vec<String>,
    resources: Vec<String>,
    tags: Vec<String>,
    pool: FreshPoolBounds,
    pool_tags: Vec<Tag>,
    pool_labels: Vec<Label>,
    index: HashMap<String, (Space, u32)>,
}

fn check_identifier(name: &str) -> Result<(), ModelError> {
    if name.is_empty() {
        return Err(ModelError::BadIdentifier(name.into(), "empty"));
    }
    if name.contains('.') {
        return Err(ModelError::BadIdentifier(name.into(), "contains '.'"));
    }
    if name.starts_with('@') || name.contains('#') {
        return Err(ModelError::BadIdentifier(
            name.into(),
            "'@' and '#' are reserved",
        ));
    }
    Ok(())
}

impl SymbolTable {
    pub fn new<S: AsRef<str>>(
        labels: &[S],
        services: &[S],
        resources: &[S],
        tags: &[S],
        pool: FreshPoolBounds,
    ) -> Result<Self, ModelError> {
        let mut index: HashMap<String, (Space, u32)> = HashMap::new();
        let mut spaces = Vec::with_capacity(4);
        for (space, declared) in [
            (Space::Label, labels),
            (Space::Service, services),
            (Space::Resource, resources),
            (Space::Tag, tags),
        ] {
            let mut names: Vec<String> = Vec::with_capacity(declared.len());
            for name in declared {
                let name = name.as_ref();
                check_identifier(name)?;
                names.push(name.to_string());
            }
            match space {
                Space::Tag => {
                    names.extend((0..pool.tags).map(|i| format!("{POOL_TAG_PREFIX}{i}")))
                }
                Space::Label => names
                    .extend((0..pool.labels).map(|i| format!("{POOL_LABEL_PREFIX}{i}"))),
                _ => {}
            }
            names.sort();
            for pair in names.windows(2) {
                if pair[0] == pair[1] {
                    return Err(ModelError::Duplicate {
                        name: pair[0].clone(),
                        space: space.name(),
                    });
                }
            }
            for (i, name) in names.iter().enumerate() {
                if let Some((other, _)) = index.insert(name.clone(), (space, i as u32)) {
                    return Err(ModelError::NamespaceClash {
                        name: name.clone(),
                        first: other.name(),
                        second: space.name(),
                    });
                }
            }
            spaces.push(names);
        }
        let tags = spaces.pop().unwrap();
        let resources = spaces.pop().unwrap();
        let services = spaces.pop().unwrap();
        let labels = spaces.pop().unwrap();
        let pool_tags = tags
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with(POOL_TAG_PREFIX))
            .map(|(i, _)| Tag(i as u32))
            .collect::<Vec<_>>();
        let pool_labels = labels
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with(POOL_LABEL_PREFIX))
            .map(|(i, _)| Label(i as u32))
            .collect::<Vec<_>>();
        let mut table = SymbolTable {
            labels,
            services,
            resources,
            tags,
            pool,
            pool_tags,
            pool_labels,
            index,
        };
        // pool order follows the numeric suffix, not the name order
        let tag_suffix = |t: &Tag, table: &SymbolTable| -> usize {
            table.tags[t.index()][POOL_TAG_PREFIX.len()..].parse().unwrap()
        };
        let label_suffix = |l: &Label, table: &SymbolTable| -> usize {
            table.labels[l.index()][POOL_LABEL_PREFIX.len()..]
                .parse()
                .unwrap()
        };
        let mut pool_tags = std::mem::take(&mut table.pool_tags);
        pool_tags.sort_by_key(|t| tag_suffix(t, &table));
        table.pool_tags = pool_tags;
        let mut pool_labels = std::mem::take(&mut table.pool_labels);
        pool_labels.sort_by_key(|l| label_suffix(l, &table));
        table.pool_labels = pool_labels;
        Ok(table)
    }

    fn lookup(&self, name: &str, space: Space) -> Result<u32, ModelError> {
        match self.index.get(name) {
            Some((s, i)) if *s == space => Ok(*i),
            _ => Err(ModelError::Unresolved {
                name: name.to_string(),
                space: space.name(),
            }),
        }
    }

    pub fn label(&self, name: &str) -> Result<Label, ModelError> {
        self.lookup(name, Space::Label).map(Label)
    }

    pub fn service(&self, name: &str) -> Result<Service, ModelError> {
        self.lookup(name, Space::Service).map(Service)
    }

    pub fn resource(&self, name: &str) -> Result<Resource, ModelError> {
        self.lookup(name, Space::Resource).map(Resource)
    }

    pub fn tag(&self, name: &str) -> Result<Tag, ModelError> {
        self.lookup(name, Space::Tag).map(Tag)
    }

    pub fn label_name(&self, l: Label) -> &str {
        &self.labels[l.index()]
    }

    pub fn service_name(&self, s: Service) -> &str {
        &self.services[s.index()]
    }

    pub fn resource_name(&self, r: Resource) -> &str {
        &self.resources[r.index()]
    }

    pub fn tag_name(&self, t: Tag) -> &str {
        &self.tags[t.index()]
    }

    pub fn labels(&self) -> impl Iterator<Item = Label> + '_ {
        (0..self.labels.len() as u32).map(Label)
    }

    pub fn tags(&self) -> impl Iterator<Item = Tag> + '_ {
        (0..self.tags.len() as u32).map(Tag)
    }

    pub fn services(&self) -> impl Iterator<Item = Service> + '_ {
        (0..self.services.len() as u32).map(Service)
    }

    pub fn resources(&self) -> impl Iterator<Item = Resource> + '_ {
        (0..self.resources.len() as u32).map(Resource)
    }

    /// Declared names of a namespace, pool names excluded.
    pub fn declared_labels(&self) -> Vec<&str> {
        self.labels
            .iter()
            .filter(|n| !n.starts_with(POOL_LABEL_PREFIX))
            .map(String::as_str)
            .collect()
    }

    pub fn declared_tags(&self) -> Vec<&str> {
        self.tags
            .iter()
            .filter(|n| !n.starts_with(POOL_TAG_PREFIX))
            .map(String::as_str)
            .collect()
    }

    pub fn service_names(&self) -> &[String] {
        &self.services
    }

    pub fn resource_names(&self) -> &[String] {
        &self.resources
    }

    pub fn pool(&self) -> FreshPoolBounds {
        self.pool
    }

    /// Pool tags in allocation order (`t#0`, `t#1`, ...).
    pub fn pool_tags(&self) -> &[Tag] {
        &self.pool_tags
    }

    pub fn pool_labels(&self) -> &[Label] {
        &self.pool_labels
    }

    pub fn is_pool_label(&self, l: Label) -> bool {
        self.pool_labels.contains(&l)
    }

    pub fn passed(&self, tag: &str, destination: &str, service: &str) -> Result<PassedItem, ModelError> {
        Ok(PassedItem {
            tag: self.tag(tag)?,
            destination: self.label(destination)?,
            service: self.service(service)?,
        })
    }

    pub fn stored(&self, location: &str, resource: &str) -> Result<StoredItem, ModelError> {
        Ok(StoredItem {
            location: self.label(location)?,
            resource: self.resource(resource)?,
        })
    }

    /// Parses `tag.destination.service` or `location.resource`.
    pub fn parse_item(&self, text: &str) -> Result<Item, ModelError> {
        let parts: Vec<&str> = text.split('.').collect();
        match parts.as_slice() {
            [t, l, s] => self.passed(t, l, s).map(Item::Passed),
            [l, r] => self.stored(l, r).map(Item::Stored),
            _ => Err(ModelError::BadIdentifier(
                text.to_string(),
                "expected tag.label.service or label.resource",
            )),
        }
    }

    pub fn show_passed(&self, p: &PassedItem) -> String {
        format!(
            "{}.{}.{}",
            self.tag_name(p.tag),
            self.label_name(p.destination),
            self.service_name(p.service)
        )
    }

    pub fn show_stored(&self, s: &StoredItem) -> String {
        format!(
            "{}.{}",
            self.label_name(s.location),
            self.resource_name(s.resource)
        )
    }

    pub fn show(&self, item: &Item) -> String {
        match item {
            Item::Passed(p) => self.show_passed(p),
            Item::Stored(s) => self.show_stored(s),
        }
    }
}

/// A consumable item `tag.destination.service` (message or call in flight).
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PassedItem {
    pub tag: Tag,
    pub destination: Label,
    pub service: Service,
}

/// A reusable item `location.resource` (the current state of a node).
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StoredItem {
    pub location: Label,
    pub resource: Resource,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Item {
    Passed(PassedItem),
    Stored(StoredItem),
}

impl From<PassedItem> for Item {
    fn from(p: PassedItem) -> Self {
        Item::Passed(p)
    }
}

impl From<StoredItem> for Item {
    fn from(s: StoredItem) -> Self {
        Item::Stored(s)
    }
}

impl Item {
    pub fn as_passed(&self) -> Option<&PassedItem> {
        match self {
            Item::Passed(p) => Some(p),
            Item::Stored(_) => None,
        }
    }

    pub fn as_stored(&self) -> Option<&StoredItem> {
        match self {
            Item::Stored(s) => Some(s),
            Item::Passed(_) => None,
        }
    }

    /// Destination of a passed item or location of a stored one.
    pub fn label(&self) -> Label {
        match self {
            Item::Passed(p) => p.destination,
            Item::Stored(s) => s.location,
        }
    }
}

pub fn tags_of<'a>(items: impl IntoIterator<Item = &'a Item>) -> BTreeSet<Tag> {
    items
        .into_iter()
        .filter_map(Item::as_passed)
        .map(|p| p.tag)
        .collect()
}

pub fn destinations_of<'a>(items: impl IntoIterator<Item = &'a Item>) -> BTreeSet<Label> {
    items
        .into_iter()
        .filter_map(Item::as_passed)
        .map(|p| p.destination)
        .collect()
}

pub fn locations_of<'a>(items: impl IntoIterator<Item = &'a Item>) -> BTreeSet<Label> {
    items
        .into_iter()
        .filter_map(Item::as_stored)
        .map(|s| s.location)
        .collect()
}

pub fn labels_of<'a>(items: impl IntoIterator<Item = &'a Item>) -> BTreeSet<Label> {
    items.into_iter().map(Item::label).collect()
}

/// Membership in H(ITE): at most one passed item per tag and at most one
/// stored item per location.
pub fn in_h<'a>(items: impl IntoIterator<Item = &'a Item>) -> bool {
    let mut tags = BTreeSet::new();
    let mut locations = BTreeSet::new();
    items.into_iter().all(|i| match i {
        Item::Passed(p) => tags.insert(p.tag),
        Item::Stored(s) => locations.insert(s.location),
    })
}

/// A set of items; the state of the transition system.
///
/// Both halves are ordered sets, so equal configurations compare and hash
/// equal regardless of how they were built.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    pub passed: BTreeSet<PassedItem>,
    pub stored: BTreeSet<StoredItem>,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_items(items: impl IntoIterator<Item = Item>) -> Self {
        let mut c = Self::new();
        for i in items {
            c.insert(i);
        }
        c
    }

    pub fn insert(&mut self, item: Item) -> bool {
        match item {
            Item::Passed(p) => self.passed.insert(p),
            Item::Stored(s) => self.stored.insert(s),
        }
    }

    pub fn remove(&mut self, item: &Item) -> bool {
        match item {
            Item::Passed(p) => self.passed.remove(p),
            Item::Stored(s) => self.stored.remove(s),
        }
    }

    pub fn contains(&self, item: &Item) -> bool {
        match item {
            Item::Passed(p) => self.passed.contains(p),
            Item::Stored(s) => self.stored.contains(s),
        }
    }

    pub fn len(&self) -> usize {
        self.passed.len() + self.stored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passed.is_empty() && self.stored.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = Item> + '_ {
        self.passed
            .iter()
            .copied()
            .map(Item::Passed)
            .chain(self.stored.iter().copied().map(Item::Stored))
    }

    pub fn tags(&self) -> BTreeSet<Tag> {
        self.passed.iter().map(|p| p.tag).collect()
    }

    pub fn destinations(&self) -> BTreeSet<Label> {
        self.passed.iter().map(|p| p.destination).collect()
    }

    pub fn locations(&self) -> BTreeSet<Label> {
        self.stored.iter().map(|s| s.location).collect()
    }

    pub fn labels(&self) -> BTreeSet<Label> {
        let mut l = self.destinations();
        l.extend(self.locations());
        l
    }

    pub fn is_in_h(&self) -> bool {
        let tags: BTreeSet<_> = self.passed.iter().map(|p| p.tag).collect();
        let locs: BTreeSet<_> = self.stored.iter().map(|s| s.location).collect();
        tags.len() == self.passed.len() && locs.len() == self.stored.len()
    }

    /// Every passed item is directed to a node present in the configuration.
    pub fn is_valid(&self) -> bool {
        self.is_in_h() && self.labels() == self.locations()
    }

    pub fn render(&self, symbols: &SymbolTable) -> Vec<String> {
        let mut names: Vec<String> = self.items().map(|i| symbols.show(&i)).collect();
        names.sort();
        names
    }
}

/// Stored output of an action: a concrete item, or a stored item at a
/// location that does not exist yet.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StoredOut {
    Item(StoredItem),
    FreshLocation { resource: Resource },
}

/// Passed output of an action: a concrete item, or a passed item starting a
/// new tag.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PassedOut {
    Item(PassedItem),
    FreshTag { destination: Label, service: Service },
}

/// An atomic action `<{p, s}, CI>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionDef {
    pub id: String,
    pub input_passed: PassedItem,
    pub input_stored: StoredItem,
    pub out_stored: Vec<StoredOut>,
    pub out_passed: Vec<PassedOut>,
}

impl ActionDef {
    /// The node the action executes on.
    pub fn node(&self) -> Label {
        self.input_stored.location
    }

    pub fn inputs(&self) -> [Item; 2] {
        [
            Item::Passed(self.input_passed),
            Item::Stored(self.input_stored),
        ]
    }

    pub fn continuation_stored(&self) -> Option<&StoredItem> {
        self.out_stored.iter().find_map(|o| match o {
            StoredOut::Item(s) if s.location == self.input_stored.location => Some(s),
            _ => None,
        })
    }

    pub fn continuation_passed(&self) -> Option<&PassedItem> {
        self.out_passed.iter().find_map(|o| match o {
            PassedOut::Item(p) if p.tag == self.input_passed.tag => Some(p),
            _ => None,
        })
    }

    pub fn has_fresh(&self) -> bool {
        self.out_stored
            .iter()
            .any(|o| matches!(o, StoredOut::FreshLocation { .. }))
            || self
                .out_passed
                .iter()
                .any(|o| matches!(o, PassedOut::FreshTag { .. }))
    }

    /// Concrete output items; `None` if the action has fresh placeholders.
    pub fn concrete_outputs(&self) -> Option<Vec<Item>> {
        let mut out = Vec::with_capacity(self.out_stored.len() + self.out_passed.len());
        for o in &self.out_passed {
            match o {
                PassedOut::Item(p) => out.push(Item::Passed(*p)),
                PassedOut::FreshTag { .. } => return None,
            }
        }
        for o in &self.out_stored {
            match o {
                StoredOut::Item(s) => out.push(Item::Stored(*s)),
                StoredOut::FreshLocation { .. } => return None,
            }
        }
        Some(out)
    }
}

/// The violated rule of a validation diagnostic.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Clause {
    /// (b) destination of the input passed item equals the location of the
    /// input stored item.
    SingleNode,
    /// (c) exactly one continuation stored item.
    ContinuationStored,
    /// At most one continuation passed item.
    ContinuationPassed,
    /// (d) any other passed output must start a fresh tag.
    FreshTag,
    /// (e) any other stored output must be at a fresh location.
    FreshLocation,
    /// Output set outside H(ITE).
    OutputH,
    /// A passed output directed to a node that can never exist.
    DanglingDestination,
    /// Two actions with the same input pair.
    Function,
    /// Initial configuration outside H(ITE).
    InitialH,
    /// Initial passed item directed to a node absent from the initial
    /// configuration.
    InitialValidity,
}

impl Clause {
    pub fn code(self) -> &'static str {
        match self {
            Clause::SingleNode => "b",
            Clause::ContinuationStored => "c",
            Clause::ContinuationPassed => "continuation-passed",
            Clause::FreshTag => "d",
            Clause::FreshLocation => "e",
            Clause::OutputH => "output-h",
            Clause::DanglingDestination => "dangling-destination",
            Clause::Function => "function",
            Clause::InitialH => "initial-h",
            Clause::InitialValidity => "initial-validity",
        }
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub action: Option<String>,
    pub clause: Clause,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.action {
            Some(a) => write!(f, "[{}] action {}: {}", self.clause, a, self.message),
            None => write!(f, "[{}] {}", self.clause, self.message),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn has(&self, clause: Clause) -> bool {
        self.diagnostics.iter().any(|d| d.clause == clause)
    }
}

/// Selects one of the item classes PAS_t, PAS_l or STO_l.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum ClassKey {
    Tagged(Tag),
    PassedTo(Label),
    StoredAt(Label),
}

/// The finite item universe of a system: every item mentioned by the
/// initial configuration and the actions, plus every instantiation of a
/// fresh placeholder over the pool names.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Universe {
    pub passed: BTreeSet<PassedItem>,
    pub stored: BTreeSet<StoredItem>,
}

impl Universe {
    pub fn len(&self) -> usize {
        self.passed.len() + self.stored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passed.is_empty() && self.stored.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = Item> + '_ {
        self.passed
            .iter()
            .copied()
            .map(Item::Passed)
            .chain(self.stored.iter().copied().map(Item::Stored))
    }
}

/// A complete system: symbols, actions and initial configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemSpec {
    symbols: SymbolTable,
    actions: Vec<ActionDef>,
    initial: Configuration,
    universe: Universe,
}

impl SystemSpec {
    pub fn new(symbols: SymbolTable, actions: Vec<ActionDef>, initial: Configuration) -> Self {
        let mut universe = Universe::default();
        universe.passed.extend(initial.passed.iter().copied());
        universe.stored.extend(initial.stored.iter().copied());
        for a in &actions {
            universe.passed.insert(a.input_passed);
            universe.stored.insert(a.input_stored);
            for o in &a.out_passed {
                match *o {
                    PassedOut::Item(p) => {
                        universe.passed.insert(p);
                    }
                    PassedOut::FreshTag {
                        destination,
                        service,
                    } => {
                        for &tag in symbols.pool_tags() {
                            universe.passed.insert(PassedItem {
                                tag,
                                destination,
                                service,
                            });
                        }
                    }
                }
            }
            for o in &a.out_stored {
                match *o {
                    StoredOut::Item(s) => {
                        universe.stored.insert(s);
                    }
                    StoredOut::FreshLocation { resource } => {
                        for &location in symbols.pool_labels() {
                            universe.stored.insert(StoredItem { location, resource });
                        }
                    }
                }
            }
        }
        SystemSpec {
            symbols,
            actions,
            initial,
            universe,
        }
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn actions(&self) -> &[ActionDef] {
        &self.actions
    }

    pub fn action(&self, id: &str) -> Option<(usize, &ActionDef)> {
        self.actions.iter().enumerate().find(|(_, a)| a.id == id)
    }

    pub fn initial(&self) -> &Configuration {
        &self.initial
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn has_fresh(&self) -> bool {
        self.actions.iter().any(ActionDef::has_fresh)
    }

    /// PAS_t: passed items of the universe carrying `tag`.
    pub fn passed_with_tag(&self, tag: Tag) -> BTreeSet<PassedItem> {
        self.universe
            .passed
            .iter()
            .filter(|p| p.tag == tag)
            .copied()
            .collect()
    }

    /// PAS_l: passed items of the universe directed to `label`.
    pub fn passed_to(&self, label: Label) -> BTreeSet<PassedItem> {
        self.universe
            .passed
            .iter()
            .filter(|p| p.destination == label)
            .copied()
            .collect()
    }

    /// STO_l: stored items of the universe located at `label`.
    pub fn stored_at(&self, label: Label) -> BTreeSet<StoredItem> {
        self.universe
            .stored
            .iter()
            .filter(|s| s.location == label)
            .copied()
            .collect()
    }

    pub fn item_class(&self, key: ClassKey) -> BTreeSet<Item> {
        match key {
            ClassKey::Tagged(t) => self.passed_with_tag(t).into_iter().map(Item::Passed).collect(),
            ClassKey::PassedTo(l) => self.passed_to(l).into_iter().map(Item::Passed).collect(),
            ClassKey::StoredAt(l) => self.stored_at(l).into_iter().map(Item::Stored).collect(),
        }
    }

    /// Tags that occur in the universe, in name order.
    pub fn universe_tags(&self) -> BTreeSet<Tag> {
        self.universe.passed.iter().map(|p| p.tag).collect()
    }

    /// Labels that occur in the universe, in name order.
    pub fn universe_labels(&self) -> BTreeSet<Label> {
        self.universe.items().map(|i| i.label()).collect()
    }
}

/// Checks every action rule, the function property of the action set and
/// the constraints on the initial configuration. Collects all violations.
pub fn validate_system(spec: &SystemSpec) -> ValidationReport {
    let sym = spec.symbols();
    let mut diagnostics = Vec::new();
    let mut push = |action: Option<&str>, clause: Clause, message: String| {
        diagnostics.push(Diagnostic {
            action: action.map(str::to_string),
            clause,
            message,
        })
    };

    let initial_locations = spec.initial().locations();

    for a in spec.actions() {
        let id = Some(a.id.as_str());
        if a.input_passed.destination != a.input_stored.location {
            push(
                id,
                Clause::SingleNode,
                format!(
                    "input {} is directed to {} but input {} is located at {}",
                    sym.show_passed(&a.input_passed),
                    sym.label_name(a.input_passed.destination),
                    sym.show_stored(&a.input_stored),
                    sym.label_name(a.input_stored.location)
                ),
            );
        }

        let node = a.node();
        let continuations = a
            .out_stored
            .iter()
            .filter(|o| matches!(o, StoredOut::Item(s) if s.location == node))
            .count();
        if continuations != 1 {
            push(
                id,
                Clause::ContinuationStored,
                format!(
                    "expected exactly one stored output at {}, found {}",
                    sym.label_name(node),
                    continuations
                ),
            );
        }
        for o in &a.out_stored {
            if let StoredOut::Item(s) = o {
                if s.location != node {
                    push(
                        id,
                        Clause::FreshLocation,
                        format!(
                            "stored output {} is not at the action's node and not at a fresh location",
                            sym.show_stored(s)
                        ),
                    );
                }
            }
        }

        let tag = a.input_passed.tag;
        let cont_passed = a
            .out_passed
            .iter()
            .filter(|o| matches!(o, PassedOut::Item(p) if p.tag == tag))
            .count();
        if cont_passed > 1 {
            push(
                id,
                Clause::ContinuationPassed,
                format!(
                    "{} passed outputs carry tag {}",
                    cont_passed,
                    sym.tag_name(tag)
                ),
            );
        }
        for o in &a.out_passed {
            match o {
                PassedOut::Item(p) => {
                    if p.tag != tag {
                        push(
                            id,
                            Clause::FreshTag,
                            format!(
                                "passed output {} carries neither the input tag nor a fresh tag",
                                sym.show_passed(p)
                            ),
                        );
                    }
                    check_destination(sym, a, p.destination, &initial_locations, &mut push);
                }
                PassedOut::FreshTag { destination, .. } => {
                    check_destination(sym, a, *destination, &initial_locations, &mut push);
                }
            }
        }

        // H(ITE) over concrete outputs; placeholders always instantiate to
        // distinct fresh names
        let mut seen_tags = BTreeMap::new();
        for o in &a.out_passed {
            if let PassedOut::Item(p) = o {
                *seen_tags.entry(p.tag).or_insert(0usize) += 1;
            }
        }
        let mut seen_locs = BTreeMap::new();
        for o in &a.out_stored {
            if let StoredOut::Item(s) = o {
                *seen_locs.entry(s.location).or_insert(0usize) += 1;
            }
        }
        for (t, n) in seen_tags.iter().filter(|(_, n)| **n > 1) {
            push(
                id,
                Clause::OutputH,
                format!("{} passed outputs with tag {}", n, sym.tag_name(*t)),
            );
        }
        for (l, n) in seen_locs.iter().filter(|(_, n)| **n > 1) {
            push(
                id,
                Clause::OutputH,
                format!("{} stored outputs at {}", n, sym.label_name(*l)),
            );
        }
    }

    let mut by_input: BTreeMap<(PassedItem, StoredItem), Vec<&str>> = BTreeMap::new();
    for a in spec.actions() {
        by_input
            .entry((a.input_passed, a.input_stored))
            .or_default()
            .push(&a.id);
    }
    for ((p, s), ids) in by_input.iter().filter(|(_, ids)| ids.len() > 1) {
        push(
            Some(ids[1]),
            Clause::Function,
            format!(
                "actions {} share the input pair {{{}, {}}}",
                ids.join(", "),
                sym.show_passed(p),
                sym.show_stored(s)
            ),
        );
    }

    let init = spec.initial();
    if !init.is_in_h() {
        push(
            None,
            Clause::InitialH,
            "initial configuration has two passed items with one tag or two stored items at one location".into(),
        );
    }
    for p in &init.passed {
        if !initial_locations.contains(&p.destination) {
            push(
                None,
                Clause::InitialValidity,
                format!(
                    "initial item {} is directed to {} which has no stored item",
                    sym.show_passed(p),
                    sym.label_name(p.destination)
                ),
            );
        }
    }

    ValidationReport { diagnostics }
}

fn check_destination(
    sym: &SymbolTable,
    a: &ActionDef,
    destination: Label,
    initial_locations: &BTreeSet<Label>,
    push: &mut impl FnMut(Option<&str>, Clause, String),
) {
    // nodes never disappear; new ones only come from the label pool
    if destination != a.node()
        && !initial_locations.contains(&destination)
        && !sym.is_pool_label(destination)
    {
        push(
            Some(&a.id),
            Clause::DanglingDestination,
            format!(
                "passed output directed to {} which is never a node",
                sym.label_name(destination)
            ),
        );
    }
}
