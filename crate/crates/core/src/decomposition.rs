//! Components as projections of a system onto item quotas, decompositions,
//! and classification of the communication inside one action.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::engine::FiredAction;
use crate::model::{Configuration, Item, PassedItem, StoredItem, SymbolTable, SystemSpec};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecompositionError {
    #[error("quotas {0} and {1} share passed items")]
    NotComposable(String, String),
}

/// The item set defining a component.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Quota {
    pub name: String,
    pub passed: BTreeSet<PassedItem>,
    pub stored: BTreeSet<StoredItem>,
}

impl Quota {
    pub fn new(
        name: impl Into<String>,
        passed: impl IntoIterator<Item = PassedItem>,
        stored: impl IntoIterator<Item = StoredItem>,
    ) -> Self {
        Quota {
            name: name.into(),
            passed: passed.into_iter().collect(),
            stored: stored.into_iter().collect(),
        }
    }

    pub fn contains(&self, item: &Item) -> bool {
        match item {
            Item::Passed(p) => self.passed.contains(p),
            Item::Stored(s) => self.stored.contains(s),
        }
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

/// A family of quotas. Whether it is a system decomposition is checked by
/// [`is_decomposition`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Decomposition {
    pub quotas: Vec<Quota>,
}

impl Decomposition {
    pub fn new(quotas: Vec<Quota>) -> Self {
        Decomposition { quotas }
    }

    pub fn get(&self, name: &str) -> Option<&Quota> {
        self.quotas.iter().find(|q| q.name == name)
    }
}

/// Component configuration `γ ∩ Q`.
pub fn project_config(config: &Configuration, quota: &Quota) -> Configuration {
    Configuration {
        passed: config.passed.intersection(&quota.passed).copied().collect(),
        stored: config.stored.intersection(&quota.stored).copied().collect(),
    }
}

/// Component action share `<{p, s} ∩ Q, CI ∩ Q>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionShare {
    pub inputs: Vec<Item>,
    pub outputs: Vec<Item>,
}

impl ActionShare {
    /// The component participates in the action.
    pub fn is_participant(&self) -> bool {
        !self.inputs.is_empty() || !self.outputs.is_empty()
    }

    /// Both inputs belong to the component.
    pub fn is_processing(&self) -> bool {
        self.inputs.len() == 2
    }
}

pub fn project_action(fired: &FiredAction, quota: &Quota) -> ActionShare {
    ActionShare {
        inputs: fired
            .inputs()
            .into_iter()
            .filter(|i| quota.contains(i))
            .collect(),
        outputs: fired
            .outputs()
            .into_iter()
            .filter(|i| quota.contains(i))
            .collect(),
    }
}

/// Passed item quotas are disjoint.
pub fn composable(a: &Quota, b: &Quota) -> bool {
    a.passed.is_disjoint(&b.passed)
}

pub fn merge(a: &Quota, b: &Quota) -> Result<Quota, DecompositionError> {
    if !composable(a, b) {
        return Err(DecompositionError::NotComposable(
            a.name.clone(),
            b.name.clone(),
        ));
    }
    Ok(Quota {
        name: format!("{}+{}", a.name, b.name),
        passed: a.passed.union(&b.passed).copied().collect(),
        stored: a.stored.union(&b.stored).copied().collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DecompositionIssue {
    /// A passed item owned by no quota.
    UncoveredPassed(PassedItem),
    /// A stored item owned by no quota.
    UncoveredStored(StoredItem),
    /// A passed item owned by several quotas.
    Overlap { item: PassedItem, quotas: Vec<String> },
    /// A quota item outside the system's universe.
    Foreign { quota: String, item: Item },
}

impl DecompositionIssue {
    pub fn render(&self, sym: &SymbolTable) -> String {
        match self {
            DecompositionIssue::UncoveredPassed(p) => {
                format!("passed item {} uncovered", sym.show_passed(p))
            }
            DecompositionIssue::UncoveredStored(s) => {
                format!("stored item {} uncovered", sym.show_stored(s))
            }
            DecompositionIssue::Overlap { item, quotas } => format!(
                "passed item {} in several quotas: {}",
                sym.show_passed(item),
                quotas.join(", ")
            ),
            DecompositionIssue::Foreign { quota, item } => {
                format!("quota {} lists unknown item {}", quota, sym.show(item))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DecompositionReport {
    pub issues: Vec<DecompositionIssue>,
}

impl DecompositionReport {
    pub fn is_decomposition(&self) -> bool {
        self.issues.is_empty()
    }

    /// Human-readable diagnostics. A label whose whole PAS_l class is
    /// uncovered is reported once as `PAS_<label> uncovered`.
    pub fn render(&self, spec: &SystemSpec) -> Vec<String> {
        let sym = spec.symbols();
        let uncovered: BTreeSet<PassedItem> = self
            .issues
            .iter()
            .filter_map(|i| match i {
                DecompositionIssue::UncoveredPassed(p) => Some(*p),
                _ => None,
            })
            .collect();
        let mut whole = BTreeSet::new();
        let mut lines = Vec::new();
        for l in spec.universe_labels() {
            let class = spec.passed_to(l);
            if !class.is_empty() && class.is_subset(&uncovered) {
                whole.insert(l);
                lines.push(format!("PAS_{} uncovered", sym.label_name(l)));
            }
        }
        for issue in &self.issues {
            if let DecompositionIssue::UncoveredPassed(p) = issue {
                if whole.contains(&p.destination) {
                    continue;
                }
            }
            lines.push(issue.render(sym));
        }
        lines
    }
}

/// Passed quotas partition the passed items of the universe and stored
/// quotas cover its stored items.
pub fn is_decomposition(d: &Decomposition, spec: &SystemSpec) -> DecompositionReport {
    let universe = spec.universe();
    let mut issues = Vec::new();
    let mut owners: BTreeMap<PassedItem, Vec<String>> = BTreeMap::new();
    let mut covered_stored = BTreeSet::new();
    for q in &d.quotas {
        for p in &q.passed {
            if !universe.passed.contains(p) {
                issues.push(DecompositionIssue::Foreign {
                    quota: q.name.clone(),
                    item: Item::Passed(*p),
                });
            }
            owners.entry(*p).or_default().push(q.name.clone());
        }
        for s in &q.stored {
            if !universe.stored.contains(s) {
                issues.push(DecompositionIssue::Foreign {
                    quota: q.name.clone(),
                    item: Item::Stored(*s),
                });
            }
            covered_stored.insert(*s);
        }
    }
    for p in &universe.passed {
        match owners.get(p) {
            None => issues.push(DecompositionIssue::UncoveredPassed(*p)),
            Some(qs) if qs.len() > 1 => issues.push(DecompositionIssue::Overlap {
                item: *p,
                quotas: qs.clone(),
            }),
            Some(_) => {}
        }
    }
    for s in &universe.stored {
        if !covered_stored.contains(s) {
            issues.push(DecompositionIssue::UncoveredStored(*s));
        }
    }
    DecompositionReport { issues }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CommForm {
    Synchronous,
    Passing,
    Sharing,
}

impl fmt::Display for CommForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CommForm::Synchronous => "synchronous",
            CommForm::Passing => "passing",
            CommForm::Sharing => "sharing",
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    Internal,
    External,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Internal => "internal",
            Scope::External => "external",
        })
    }
}

/// One communication between two components inside an action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommEvent {
    pub action_id: String,
    pub form: CommForm,
    /// The communicated item; `None` for synchronous events.
    pub item: Option<Item>,
    pub from: String,
    pub to: String,
    pub scope: Scope,
}

impl CommEvent {
    pub fn is_external(&self) -> bool {
        self.scope == Scope::External
    }
}

/// Communication events of one action in decomposition `d`.
///
/// Synchronous: one quota holds the passed input but not the stored one,
/// another holds the stored input but not the passed one.
///
/// Asynchronous: a quota delivering the input of the same kind as output
/// item `i` (the passed input for passed outputs, the stored input for
/// stored outputs) and a quota taking over `i`. Passed outputs give passing
/// events, stored outputs sharing events. One event per (sender, receiver,
/// item); internal iff sender and receiver are the same quota.
pub fn classify(fired: &FiredAction, d: &Decomposition) -> Vec<CommEvent> {
    let p = Item::Passed(fired.input_passed);
    let s = Item::Stored(fired.input_stored);
    let mut events = Vec::new();
    let scope = |a: usize, b: usize| {
        if a == b {
            Scope::Internal
        } else {
            Scope::External
        }
    };

    for (i, q1) in d.quotas.iter().enumerate() {
        if !(q1.contains(&p) && !q1.contains(&s)) {
            continue;
        }
        for (j, q2) in d.quotas.iter().enumerate() {
            if q2.contains(&s) && !q2.contains(&p) {
                events.push(CommEvent {
                    action_id: fired.action_id.clone(),
                    form: CommForm::Synchronous,
                    item: None,
                    from: q1.name.clone(),
                    to: q2.name.clone(),
                    scope: scope(i, j),
                });
            }
        }
    }

    for out in fired.outputs() {
        let (delivered, form) = match out {
            Item::Passed(_) => (&p, CommForm::Passing),
            Item::Stored(_) => (&s, CommForm::Sharing),
        };
        for (i, q1) in d.quotas.iter().enumerate() {
            if !q1.contains(delivered) {
                continue;
            }
            for (j, q2) in d.quotas.iter().enumerate() {
                if q2.contains(&out) {
                    events.push(CommEvent {
                        action_id: fired.action_id.clone(),
                        form,
                        item: Some(out),
                        from: q1.name.clone(),
                        to: q2.name.clone(),
                        scope: scope(i, j),
                    });
                }
            }
        }
    }
    events
}

/// Event counts keyed by (form, scope).
pub fn tally(events: &[CommEvent]) -> BTreeMap<(CommForm, Scope), usize> {
    let mut counts = BTreeMap::new();
    for e in events {
        *counts.entry((e.form, e.scope)).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_model;
    use crate::test_fixtures::F2;

    fn f2() -> SystemSpec {
        parse_model(F2).unwrap()
    }

    fn p(spec: &SystemSpec, n: &str) -> PassedItem {
        *spec.symbols().parse_item(n).unwrap().as_passed().unwrap()
    }

    fn s(spec: &SystemSpec, n: &str) -> StoredItem {
        *spec.symbols().parse_item(n).unwrap().as_stored().unwrap()
    }

    fn resident(spec: &SystemSpec, l: &str) -> Quota {
        let l = spec.symbols().label(l).unwrap();
        Quota::new(
            format!("RE_{}", spec.symbols().label_name(l)),
            spec.passed_to(l),
            spec.stored_at(l),
        )
    }

    fn traveler(spec: &SystemSpec, t: &str) -> Quota {
        let t = spec.symbols().tag(t).unwrap();
        Quota::new(
            format!("TR_{}", spec.symbols().tag_name(t)),
            spec.passed_with_tag(t),
            spec.universe().stored.iter().copied(),
        )
    }

    fn fired(spec: &SystemSpec, id: &str) -> FiredAction {
        let (i, _) = spec.action(id).unwrap();
        FiredAction::of_static(spec, i).unwrap()
    }

    fn render(spec: &SystemSpec, c: &Configuration) -> Vec<String> {
        c.render(spec.symbols())
    }

    #[test]
    fn configuration_projection() {
        let spec = f2();
        assert_eq!(
            render(&spec, &project_config(spec.initial(), &resident(&spec, "A"))),
            ["A.rA0", "t1.A.sv1"]
        );
        assert!(project_config(spec.initial(), &Quota::default()).is_empty());
        assert_eq!(
            render(&spec, &project_config(spec.initial(), &traveler(&spec, "t2"))),
            ["A.rA0", "B.rB0", "t2.B.sv2"]
        );
    }

    #[test]
    fn action_projection() {
        let spec = f2();
        let share = project_action(&fired(&spec, "l3"), &resident(&spec, "A"));
        assert_eq!(
            share.inputs,
            [Item::Passed(p(&spec, "t2.A.sv4")), Item::Stored(s(&spec, "A.rA1"))]
        );
        assert_eq!(share.outputs, [Item::Stored(s(&spec, "A.rA2"))]);
        assert!(share.is_participant() && share.is_processing());

        let share = project_action(&fired(&spec, "l1"), &traveler(&spec, "t2"));
        assert_eq!(share.inputs, [Item::Stored(s(&spec, "A.rA0"))]);
        assert_eq!(share.outputs, [Item::Stored(s(&spec, "A.rA1"))]);
        assert!(share.is_participant());

        let share = project_action(&fired(&spec, "l2"), &resident(&spec, "A"));
        assert!(share.inputs.is_empty());
        assert_eq!(share.outputs, [Item::Passed(p(&spec, "t2.A.sv4"))]);
        assert!(share.is_participant());
    }

    #[test]
    fn composability_and_merge() {
        let spec = f2();
        let (ra, rb) = (resident(&spec, "A"), resident(&spec, "B"));
        assert!(composable(&ra, &rb));
        let t1 = traveler(&spec, "t1");
        assert!(!composable(&t1, &t1));
        let m = merge(&ra, &rb).unwrap();
        assert_eq!(m.passed.len(), 5);
        assert_eq!(m.stored, spec.universe().stored);
        assert!(matches!(
            merge(&t1, &t1),
            Err(DecompositionError::NotComposable(..))
        ));
    }

    #[test]
    fn decomposition_validity() {
        let spec = f2();
        let rd = Decomposition::new(vec![resident(&spec, "A"), resident(&spec, "B")]);
        assert!(is_decomposition(&rd, &spec).is_decomposition());
        let td = Decomposition::new(vec![traveler(&spec, "t1"), traveler(&spec, "t2")]);
        assert!(is_decomposition(&td, &spec).is_decomposition());
        let partial = Decomposition::new(vec![resident(&spec, "A")]);
        let report = is_decomposition(&partial, &spec);
        assert!(!report.is_decomposition());
        assert!(report.render(&spec).contains(&"PAS_B uncovered".to_string()));
        let twice = Decomposition::new(vec![traveler(&spec, "t1"), traveler(&spec, "t1"), traveler(&spec, "t2")]);
        assert!(is_decomposition(&twice, &spec)
            .issues
            .iter()
            .any(|i| matches!(i, DecompositionIssue::Overlap { .. })));
    }

    #[test]
    fn resident_classification_of_l2_is_external_passing() {
        let spec = f2();
        let rd = Decomposition::new(vec![resident(&spec, "A"), resident(&spec, "B")]);
        let events = classify(&fired(&spec, "l2"), &rd);
        let ext: Vec<_> = events.iter().filter(|e| e.is_external()).collect();
        assert_eq!(ext.len(), 1);
        assert_eq!(ext[0].form, CommForm::Passing);
        assert_eq!(ext[0].item, Some(Item::Passed(p(&spec, "t2.A.sv4"))));
        assert_eq!((ext[0].from.as_str(), ext[0].to.as_str()), ("RE_B", "RE_A"));
    }

    #[test]
    fn traveler_classification_of_l1_is_external_sharing() {
        let spec = f2();
        let td = Decomposition::new(vec![traveler(&spec, "t1"), traveler(&spec, "t2")]);
        let events = classify(&fired(&spec, "l1"), &td);
        let ext: Vec<_> = events.iter().filter(|e| e.is_external()).collect();
        assert!(!ext.is_empty());
        assert!(ext.iter().all(|e| e.form == CommForm::Sharing));
        assert!(ext.iter().any(|e| e.from == "TR_t1"
            && e.to == "TR_t2"
            && e.item == Some(Item::Stored(s(&spec, "A.rA1")))));
        assert!(events.iter().any(|e| e.form == CommForm::Passing
            && e.scope == Scope::Internal
            && e.from == "TR_t1"));
    }

    #[test]
    fn split_inputs_communicate_synchronously() {
        let spec = f2();
        let q1 = Quota::new("M", [p(&spec, "t1.A.sv1"), p(&spec, "t1.B.sv3")], []);
        let q2 = Quota::new("C", [], [s(&spec, "A.rA0"), s(&spec, "A.rA1")]);
        let events = classify(&fired(&spec, "l1"), &Decomposition::new(vec![q1, q2]));
        let sync: Vec<_> = events
            .iter()
            .filter(|e| e.form == CommForm::Synchronous)
            .collect();
        assert_eq!(sync.len(), 1);
        assert_eq!((sync[0].from.as_str(), sync[0].to.as_str()), ("M", "C"));
        assert_eq!(sync[0].scope, Scope::External);
        assert!(sync[0].item.is_none());
    }

    #[test]
    fn singleton_decomposition_is_all_internal() {
        let spec = f2();
        let all = Quota::new(
            "W",
            spec.universe().passed.iter().copied(),
            spec.universe().stored.iter().copied(),
        );
        let d = Decomposition::new(vec![all]);
        for a in ["l1", "l2", "l3"] {
            assert!(classify(&fired(&spec, a), &d)
                .iter()
                .all(|e| e.scope == Scope::Internal));
        }
    }
}
