//! Asynchronous and sequential processes, the canonical traveler and
//! resident processes, and the two canonical decompositions.
//!
//! The production predicates work on quotas directly. The `*_oracle`
//! functions evaluate the definitions by enumerating component
//! configurations and exist to cross-check the quota equations on small
//! systems.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::decomposition::{Decomposition, Quota};
use crate::model::{Item, Label, PassedItem, StoredItem, SystemSpec, Tag};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CanonicalError {
    #[error("{count} configurations to enumerate, limit is {limit}")]
    UniverseTooLarge { count: u128, limit: u128 },
    #[error("processes belong to different classes")]
    CrossClass,
    #[error("passed quota is not inside the class")]
    NotInClass,
    #[error("the empty process belongs to no class")]
    EmptyProcess,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProcessKind {
    Traveler(Tag),
    Resident(Label),
    Custom,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProcessSpec {
    pub kind: ProcessKind,
    pub quota: Quota,
}

/// `∪_{p ∈ passed} STO_destination(p)`.
pub fn required_stored<'a>(
    spec: &SystemSpec,
    passed: impl IntoIterator<Item = &'a PassedItem>,
) -> BTreeSet<StoredItem> {
    let destinations: BTreeSet<Label> = passed.into_iter().map(|p| p.destination).collect();
    spec.universe()
        .stored
        .iter()
        .filter(|s| destinations.contains(&s.location))
        .copied()
        .collect()
}

/// Quota equation of an asynchronous process: the stored quota is exactly
/// the stored items at the destinations of its passed items.
pub fn is_async_process(quota: &Quota, spec: &SystemSpec) -> bool {
    quota.stored == required_stored(spec, &quota.passed)
}

/// `PR(QP)`: the asynchronous process with passed quota `passed`.
pub fn make_process(
    spec: &SystemSpec,
    name: impl Into<String>,
    passed: impl IntoIterator<Item = PassedItem>,
) -> ProcessSpec {
    let passed: BTreeSet<PassedItem> = passed.into_iter().collect();
    let stored = required_stored(spec, &passed);
    ProcessSpec {
        kind: ProcessKind::Custom,
        quota: Quota {
            name: name.into(),
            passed,
            stored,
        },
    }
}

/// `TR_t = PR(PAS_t)`.
pub fn traveler(spec: &SystemSpec, tag: Tag) -> ProcessSpec {
    let name = format!("TR_{}", spec.symbols().tag_name(tag));
    ProcessSpec {
        kind: ProcessKind::Traveler(tag),
        ..make_process(spec, name, spec.passed_with_tag(tag))
    }
}

/// `RE_l = PR(PAS_l)`.
pub fn resident(spec: &SystemSpec, label: Label) -> ProcessSpec {
    let name = format!("RE_{}", spec.symbols().label_name(label));
    ProcessSpec {
        kind: ProcessKind::Resident(label),
        ..make_process(spec, name, spec.passed_to(label))
    }
}

/// Class of sequential processes: tag-oriented or label-oriented.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProcessClass {
    Tag(Tag),
    Label(Label),
}

impl ProcessClass {
    pub fn contains(&self, p: &PassedItem) -> bool {
        match *self {
            ProcessClass::Tag(t) => p.tag == t,
            ProcessClass::Label(l) => p.destination == l,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Sequentiality {
    /// Empty passed quota; sequential in every class.
    Empty,
    /// All items share a tag or a destination; the witness prefers the tag.
    Within(ProcessClass),
    NotSequential,
}

impl Sequentiality {
    pub fn holds(&self) -> bool {
        !matches!(self, Sequentiality::NotSequential)
    }
}

/// Quota condition for `PR(QP)` to be sequential: QP lies inside one PAS_t
/// or one PAS_l.
pub fn is_sequential<'a>(passed: impl IntoIterator<Item = &'a PassedItem>) -> Sequentiality {
    let mut iter = passed.into_iter();
    let Some(first) = iter.next() else {
        return Sequentiality::Empty;
    };
    let (mut same_tag, mut same_dest) = (true, true);
    for p in iter {
        same_tag &= p.tag == first.tag;
        same_dest &= p.destination == first.destination;
    }
    if same_tag {
        Sequentiality::Within(ProcessClass::Tag(first.tag))
    } else if same_dest {
        Sequentiality::Within(ProcessClass::Label(first.destination))
    } else {
        Sequentiality::NotSequential
    }
}

/// A sequential process `PR(QP)` viewed as a member of one class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassedProcess {
    pub class: ProcessClass,
    pub passed: BTreeSet<PassedItem>,
}

impl ClassedProcess {
    pub fn new(
        class: ProcessClass,
        passed: impl IntoIterator<Item = PassedItem>,
    ) -> Result<Self, CanonicalError> {
        let passed: BTreeSet<PassedItem> = passed.into_iter().collect();
        if passed.is_empty() {
            return Err(CanonicalError::EmptyProcess);
        }
        if !passed.iter().all(|p| class.contains(p)) {
            return Err(CanonicalError::NotInClass);
        }
        Ok(ClassedProcess { class, passed })
    }
}

/// Strict order inside a class: `PR(QP) < PR(QP')` iff `QP ⊂ QP'`.
pub fn order_lt(a: &ClassedProcess, b: &ClassedProcess) -> Result<bool, CanonicalError> {
    if a.class != b.class {
        return Err(CanonicalError::CrossClass);
    }
    Ok(a.passed.len() < b.passed.len() && a.passed.is_subset(&b.passed))
}

/// Maximum of a class: the traveler of a tag or the resident of a label.
pub fn class_maximum(spec: &SystemSpec, class: ProcessClass) -> ProcessSpec {
    match class {
        ProcessClass::Tag(t) => traveler(spec, t),
        ProcessClass::Label(l) => resident(spec, l),
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum CanonicalMode {
    Traveler,
    Resident,
}

/// `TD = {TR_t | t ∈ TAG}` or `RD = {RE_l | l ∈ LAB}`. Pool tags and pool
/// labels are part of TAG and LAB, so processes started dynamically already
/// have their quota here.
pub fn canonical_decomposition(spec: &SystemSpec, mode: CanonicalMode) -> Decomposition {
    let sym = spec.symbols();
    let quotas = match mode {
        CanonicalMode::Traveler => sym.tags().map(|t| traveler(spec, t).quota).collect(),
        CanonicalMode::Resident => sym.labels().map(|l| resident(spec, l).quota).collect(),
    };
    Decomposition::new(quotas)
}

pub fn canonical_processes(spec: &SystemSpec, mode: CanonicalMode) -> Vec<ProcessSpec> {
    let sym = spec.symbols();
    match mode {
        CanonicalMode::Traveler => sym.tags().map(|t| traveler(spec, t)).collect(),
        CanonicalMode::Resident => sym.labels().map(|l| resident(spec, l)).collect(),
    }
}

/// Upper bound on the number of configurations an oracle may enumerate.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct OracleLimits {
    pub max_configurations: u128,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_configurations: 1 << 22,
        }
    }
}

/// Every system configuration over the universe: at most one passed item
/// per tag, at most one stored item per location, every passed item
/// directed to a present location. Each configuration is handed to `visit`
/// as an item slice.
pub fn for_each_configuration(
    spec: &SystemSpec,
    limits: OracleLimits,
    mut visit: impl FnMut(&[Item]),
) -> Result<(), CanonicalError> {
    let universe = spec.universe();
    let mut slots: Vec<Vec<Item>> = Vec::new();
    for t in spec.universe_tags() {
        slots.push(
            universe
                .passed
                .iter()
                .filter(|p| p.tag == t)
                .map(|p| Item::Passed(*p))
                .collect(),
        );
    }
    let locations: BTreeSet<Label> = universe.stored.iter().map(|s| s.location).collect();
    for l in &locations {
        slots.push(
            universe
                .stored
                .iter()
                .filter(|s| s.location == *l)
                .map(|s| Item::Stored(*s))
                .collect(),
        );
    }
    let count = slots
        .iter()
        .try_fold(1u128, |acc, s| acc.checked_mul(s.len() as u128 + 1))
        .unwrap_or(u128::MAX);
    if count > limits.max_configurations {
        return Err(CanonicalError::UniverseTooLarge {
            count,
            limit: limits.max_configurations,
        });
    }

    let label_count = spec.symbols().labels().count();
    let mut choice = vec![0usize; slots.len()];
    let mut config: Vec<Item> = Vec::with_capacity(slots.len());
    let mut present = vec![false; label_count];
    loop {
        config.clear();
        present.iter_mut().for_each(|b| *b = false);
        for (slot, &c) in slots.iter().zip(&choice) {
            if c > 0 {
                let item = slot[c - 1];
                if let Item::Stored(s) = item {
                    present[s.location.index()] = true;
                }
                config.push(item);
            }
        }
        let valid = config.iter().all(|i| match i {
            Item::Passed(p) => present[p.destination.index()],
            Item::Stored(_) => true,
        });
        if valid {
            visit(&config);
        }
        // mixed-radix increment
        let mut k = 0;
        loop {
            if k == slots.len() {
                return Ok(());
            }
            choice[k] += 1;
            if choice[k] <= slots[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

/// The asynchronous-process definition evaluated over every component
/// configuration `c = γ ∩ Q`: `destinations(c) ⊆ locations(c)` always, and
/// every stored item of the quota has its location among the destinations
/// of some component configuration.
pub fn is_async_process_oracle(
    quota: &Quota,
    spec: &SystemSpec,
    limits: OracleLimits,
) -> Result<bool, CanonicalError> {
    let mut closed = true;
    let mut addressed: BTreeSet<Label> = BTreeSet::new();
    for_each_configuration(spec, limits, |config| {
        let component: Vec<&Item> = config.iter().filter(|i| quota.contains(i)).collect();
        let locations: BTreeSet<Label> = component
            .iter()
            .filter_map(|i| i.as_stored())
            .map(|s| s.location)
            .collect();
        for p in component.iter().filter_map(|i| i.as_passed()) {
            if !locations.contains(&p.destination) {
                closed = false;
            }
            addressed.insert(p.destination);
        }
    })?;
    Ok(closed && quota.stored.iter().all(|s| addressed.contains(&s.location)))
}

/// The sequential-process definition evaluated over every component
/// configuration: all pending passed items of the quota share one
/// destination.
pub fn is_sequential_oracle(
    passed: &BTreeSet<PassedItem>,
    spec: &SystemSpec,
    limits: OracleLimits,
) -> Result<bool, CanonicalError> {
    let mut sequential = true;
    for_each_configuration(spec, limits, |config| {
        let mut destination: Option<Label> = None;
        for p in config.iter().filter_map(|i| i.as_passed()) {
            if !passed.contains(p) {
                continue;
            }
            match destination {
                None => destination = Some(p.destination),
                Some(d) if d != p.destination => sequential = false,
                Some(_) => {}
            }
        }
    })?;
    Ok(sequential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::is_decomposition;
    use crate::io::parse_model;
    use crate::test_fixtures::F2;

    fn f2() -> SystemSpec {
        parse_model(F2).unwrap()
    }

    fn p(spec: &SystemSpec, n: &str) -> PassedItem {
        *spec.symbols().parse_item(n).unwrap().as_passed().unwrap()
    }

    fn sto(spec: &SystemSpec, l: &str) -> BTreeSet<StoredItem> {
        spec.stored_at(spec.symbols().label(l).unwrap())
    }

    #[test]
    fn async_process_quota_equation() {
        let spec = f2();
        let t2 = spec.symbols().tag("t2").unwrap();
        let tr = traveler(&spec, t2);
        assert_eq!(tr.quota.stored, spec.universe().stored);
        assert!(is_async_process(&tr.quota, &spec));
        let bad = Quota {
            name: "bad".into(),
            passed: [p(&spec, "t2.B.sv2")].into(),
            stored: sto(&spec, "A"),
        };
        assert!(!is_async_process(&bad, &spec));
        assert!(is_async_process(&Quota::default(), &spec));
    }

    #[test]
    fn async_oracle_agrees_on_f2_examples() {
        let spec = f2();
        let limits = OracleLimits::default();
        let t2 = spec.symbols().tag("t2").unwrap();
        assert!(is_async_process_oracle(&traveler(&spec, t2).quota, &spec, limits).unwrap());
        let bad = Quota {
            name: "bad".into(),
            passed: [p(&spec, "t2.B.sv2")].into(),
            stored: sto(&spec, "A"),
        };
        assert!(!is_async_process_oracle(&bad, &spec, limits).unwrap());
        assert!(is_async_process_oracle(&Quota::default(), &spec, limits).unwrap());
    }

    #[test]
    fn oracle_refuses_large_universes() {
        let spec = f2();
        let tiny = OracleLimits {
            max_configurations: 10,
        };
        assert!(matches!(
            is_async_process_oracle(&Quota::default(), &spec, tiny),
            Err(CanonicalError::UniverseTooLarge { .. })
        ));
    }

    #[test]
    fn make_process_derives_stored_quota() {
        let spec = f2();
        let t2 = spec.symbols().tag("t2").unwrap();
        let pr = make_process(&spec, "pr", spec.passed_with_tag(t2));
        let mut both = sto(&spec, "A");
        both.extend(sto(&spec, "B"));
        assert_eq!(pr.quota.stored, both);
        let pr = make_process(&spec, "pr", [p(&spec, "t1.A.sv1")]);
        assert_eq!(pr.quota.stored, sto(&spec, "A"));
        assert!(make_process(&spec, "pr", []).quota.is_empty());
    }

    #[test]
    fn sequential_quota_condition() {
        let spec = f2();
        let t2 = spec.symbols().tag("t2").unwrap();
        let a = spec.symbols().label("A").unwrap();
        assert_eq!(
            is_sequential(&[p(&spec, "t2.B.sv2"), p(&spec, "t2.A.sv4")]),
            Sequentiality::Within(ProcessClass::Tag(t2))
        );
        assert_eq!(
            is_sequential(&[p(&spec, "t1.A.sv1"), p(&spec, "t2.A.sv4")]),
            Sequentiality::Within(ProcessClass::Label(a))
        );
        assert_eq!(
            is_sequential(&[p(&spec, "t1.A.sv1"), p(&spec, "t2.B.sv2")]),
            Sequentiality::NotSequential
        );
    }

    #[test]
    fn sequential_oracle_examples() {
        let spec = f2();
        let limits = OracleLimits::default();
        let set = |names: &[&str]| names.iter().map(|n| p(&spec, n)).collect::<BTreeSet<_>>();
        assert!(is_sequential_oracle(&set(&["t2.B.sv2", "t2.A.sv4"]), &spec, limits).unwrap());
        assert!(!is_sequential_oracle(&set(&["t1.A.sv1", "t2.B.sv2"]), &spec, limits).unwrap());
        assert!(is_sequential_oracle(&set(&[]), &spec, limits).unwrap());
    }

    #[test]
    fn class_order() {
        let spec = f2();
        let t2 = spec.symbols().tag("t2").unwrap();
        let class = ProcessClass::Tag(t2);
        let small = ClassedProcess::new(class, [p(&spec, "t2.B.sv2")]).unwrap();
        let max = ClassedProcess::new(class, spec.passed_with_tag(t2)).unwrap();
        assert!(order_lt(&small, &max).unwrap());
        assert!(!order_lt(&max, &max).unwrap());
        assert!(!order_lt(&max, &small).unwrap());

        let a = spec.symbols().label("A").unwrap();
        let other = ClassedProcess::new(ProcessClass::Label(a), [p(&spec, "t2.A.sv4")]).unwrap();
        assert_eq!(order_lt(&small, &other), Err(CanonicalError::CrossClass));
        assert_eq!(
            ClassedProcess::new(class, [p(&spec, "t1.A.sv1")]),
            Err(CanonicalError::NotInClass)
        );
        assert_eq!(ClassedProcess::new(class, []), Err(CanonicalError::EmptyProcess));

        let top = class_maximum(&spec, class);
        assert_eq!(top.kind, ProcessKind::Traveler(t2));
        assert_eq!(top.quota.name, "TR_t2");
        assert_eq!(top.quota.passed, max.passed);
    }

    #[test]
    fn canonical_decompositions_of_f2() {
        let spec = f2();
        let rd = canonical_decomposition(&spec, CanonicalMode::Resident);
        let names: Vec<&str> = rd.quotas.iter().map(|q| q.name.as_str()).collect();
        assert_eq!(names, ["RE_A", "RE_B"]);
        assert!(is_decomposition(&rd, &spec).is_decomposition());
        let td = canonical_decomposition(&spec, CanonicalMode::Traveler);
        let names: Vec<&str> = td.quotas.iter().map(|q| q.name.as_str()).collect();
        assert_eq!(names, ["TR_t1", "TR_t2"]);
        assert!(is_decomposition(&td, &spec).is_decomposition());
        for q in rd.quotas.iter().chain(&td.quotas) {
            assert!(is_async_process(q, &spec));
            assert!(is_sequential(&q.passed).holds());
        }
    }

    #[test]
    fn single_node_single_tag_has_one_component() {
        let text = r#"{
            "labels": ["N"], "services": ["s"], "resources": ["r0", "r1"], "tags": ["t"],
            "init": { "stored": [["N", "r0"]], "passed": [["t", "N", "s"]] },
            "actions": [ { "id": "a", "in": { "passed": ["t", "N", "s"], "stored": ["N", "r0"] },
                           "out": { "stored": [["N", "r1"]], "passed": [] } } ]
        }"#;
        let spec = parse_model(text).unwrap();
        for mode in [CanonicalMode::Traveler, CanonicalMode::Resident] {
            let d = canonical_decomposition(&spec, mode);
            assert_eq!(d.quotas.len(), 1);
            assert_eq!(d.quotas[0].passed, spec.universe().passed);
            assert_eq!(d.quotas[0].stored, spec.universe().stored);
        }
    }

    #[test]
    fn idle_node_is_left_uncovered() {
        // node B is never addressed, so no asynchronous process owns B.q
        let text = r#"{
            "labels": ["A", "B"], "services": ["s"], "resources": ["r", "q"], "tags": ["t"],
            "init": { "stored": [["A", "r"], ["B", "q"]], "passed": [["t", "A", "s"]] },
            "actions": [ { "id": "a", "in": { "passed": ["t", "A", "s"], "stored": ["A", "r"] },
                           "out": { "stored": [["A", "r"]], "passed": [] } } ]
        }"#;
        let spec = parse_model(text).unwrap();
        let td = canonical_decomposition(&spec, CanonicalMode::Traveler);
        let report = is_decomposition(&td, &spec);
        assert_eq!(report.render(&spec), ["stored item B.q uncovered"]);
    }
}
