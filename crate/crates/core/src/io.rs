//! File formats: model documents, decomposition files and trace records.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::{Decomposition, Quota};
use crate::engine::Transition;
use crate::model::{
    ActionDef, Configuration, FreshPoolBounds, Item, ModelError, PassedOut, StoredOut,
    SymbolTable, SystemSpec, FRESH,
};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Format(String),
}

impl From<serde_json::Error> for ParseError {
    fn from(e: serde_json::Error) -> Self {
        ParseError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolDoc {
    #[serde(default)]
    pub tags: usize,
    #[serde(default)]
    pub labels: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitDoc {
    #[serde(default)]
    pub stored: Vec<(String, String)>,
    #[serde(default)]
    pub passed: Vec<(String, String, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDoc {
    pub passed: (String, String, String),
    pub stored: (String, String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputDoc {
    #[serde(default)]
    pub stored: Vec<(String, String)>,
    #[serde(default)]
    pub passed: Vec<(String, String, String)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionDoc {
    pub id: String,
    #[serde(rename = "in")]
    pub input: InputDoc,
    pub out: OutputDoc,
}

/// Model file as written on disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub labels: Vec<String>,
    pub services: Vec<String>,
    pub resources: Vec<String>,
    pub tags: Vec<String>,
    pub init: InitDoc,
    pub actions: Vec<ActionDoc>,
    #[serde(default, skip_serializing_if = "is_zero_pool")]
    pub fresh_pool: PoolDoc,
}

fn is_zero_pool(p: &PoolDoc) -> bool {
    p.tags == 0 && p.labels == 0
}

/// Parses a model document. The result is not validated; see
/// [`crate::model::validate_system`].
pub fn parse_model(text: &str) -> Result<SystemSpec, ParseError> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    model_from_doc(&doc)
}

pub fn model_from_doc(doc: &ModelDoc) -> Result<SystemSpec, ParseError> {
    let sym = SymbolTable::new(
        &doc.labels,
        &doc.services,
        &doc.resources,
        &doc.tags,
        FreshPoolBounds {
            tags: doc.fresh_pool.tags,
            labels: doc.fresh_pool.labels,
        },
    )?;
    let mut initial = Configuration::new();
    for (l, r) in &doc.init.stored {
        initial.insert(Item::Stored(sym.stored(l, r)?));
    }
    for (t, l, s) in &doc.init.passed {
        initial.insert(Item::Passed(sym.passed(t, l, s)?));
    }
    let mut actions = Vec::with_capacity(doc.actions.len());
    let mut ids = BTreeSet::new();
    for a in &doc.actions {
        if !ids.insert(a.id.as_str()) {
            return Err(ParseError::Format(format!("action id {:?} used twice", a.id)));
        }
        let (t, l, s) = &a.input.passed;
        let input_passed = sym.passed(t, l, s)?;
        let (l, r) = &a.input.stored;
        let input_stored = sym.stored(l, r)?;
        let mut out_stored = Vec::with_capacity(a.out.stored.len());
        for (l, r) in &a.out.stored {
            out_stored.push(if l == FRESH {
                StoredOut::FreshLocation {
                    resource: sym.resource(r)?,
                }
            } else {
                StoredOut::Item(sym.stored(l, r)?)
            });
        }
        let mut out_passed = Vec::with_capacity(a.out.passed.len());
        for (t, l, s) in &a.out.passed {
            out_passed.push(if t == FRESH {
                PassedOut::FreshTag {
                    destination: sym.label(l)?,
                    service: sym.service(s)?,
                }
            } else {
                PassedOut::Item(sym.passed(t, l, s)?)
            });
        }
        actions.push(ActionDef {
            id: a.id.clone(),
            input_passed,
            input_stored,
            out_stored,
            out_passed,
        });
    }
    Ok(SystemSpec::new(sym, actions, initial))
}

/// Document form of a system; parsing it back yields an equal spec.
pub fn model_to_doc(spec: &SystemSpec) -> ModelDoc {
    let sym = spec.symbols();
    let strings = |v: Vec<&str>| v.into_iter().map(String::from).collect::<Vec<_>>();
    let passed = |p: &crate::model::PassedItem| {
        (
            sym.tag_name(p.tag).to_string(),
            sym.label_name(p.destination).to_string(),
            sym.service_name(p.service).to_string(),
        )
    };
    let stored = |s: &crate::model::StoredItem| {
        (
            sym.label_name(s.location).to_string(),
            sym.resource_name(s.resource).to_string(),
        )
    };
    let pool = sym.pool();
    ModelDoc {
        labels: strings(sym.declared_labels()),
        services: sym.service_names().to_vec(),
        resources: sym.resource_names().to_vec(),
        tags: strings(sym.declared_tags()),
        init: InitDoc {
            stored: spec.initial().stored.iter().map(stored).collect(),
            passed: spec.initial().passed.iter().map(passed).collect(),
        },
        actions: spec
            .actions()
            .iter()
            .map(|a| ActionDoc {
                id: a.id.clone(),
                input: InputDoc {
                    passed: passed(&a.input_passed),
                    stored: stored(&a.input_stored),
                },
                out: OutputDoc {
                    stored: a
                        .out_stored
                        .iter()
                        .map(|o| match o {
                            StoredOut::Item(s) => stored(s),
                            StoredOut::FreshLocation { resource } => (
                                FRESH.to_string(),
                                sym.resource_name(*resource).to_string(),
                            ),
                        })
                        .collect(),
                    passed: a
                        .out_passed
                        .iter()
                        .map(|o| match o {
                            PassedOut::Item(p) => passed(p),
                            PassedOut::FreshTag {
                                destination,
                                service,
                            } => (
                                FRESH.to_string(),
                                sym.label_name(*destination).to_string(),
                                sym.service_name(*service).to_string(),
                            ),
                        })
                        .collect(),
                },
            })
            .collect(),
        fresh_pool: PoolDoc {
            tags: pool.tags,
            labels: pool.labels,
        },
    }
}

pub fn write_model(spec: &SystemSpec) -> String {
    serde_json::to_string_pretty(&model_to_doc(spec)).expect("model documents serialize") + "\n"
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PassedSpec {
    Items(Vec<(String, String, String)>),
    Tag { tag: String },
    Label { label: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StoredSpec {
    Items(Vec<(String, String)>),
    Label { label: String },
    All(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuotaDoc {
    pub name: String,
    #[serde(default = "no_passed")]
    pub passed: PassedSpec,
    #[serde(default = "no_stored")]
    pub stored: StoredSpec,
}

fn no_passed() -> PassedSpec {
    PassedSpec::Items(Vec::new())
}

fn no_stored() -> StoredSpec {
    StoredSpec::Items(Vec::new())
}

/// Parses a decomposition file against a system. Patterns are resolved over
/// the system's item universe.
pub fn parse_decomposition(text: &str, spec: &SystemSpec) -> Result<Decomposition, ParseError> {
    let docs: Vec<QuotaDoc> = serde_json::from_str(text)?;
    let sym = spec.symbols();
    let mut quotas = Vec::with_capacity(docs.len());
    for d in docs {
        let passed: BTreeSet<_> = match &d.passed {
            PassedSpec::Items(v) => v
                .iter()
                .map(|(t, l, s)| sym.passed(t, l, s))
                .collect::<Result<_, _>>()?,
            PassedSpec::Tag { tag } => spec.passed_with_tag(sym.tag(tag)?),
            PassedSpec::Label { label } => spec.passed_to(sym.label(label)?),
        };
        let stored: BTreeSet<_> = match &d.stored {
            StoredSpec::Items(v) => v
                .iter()
                .map(|(l, r)| sym.stored(l, r))
                .collect::<Result<_, _>>()?,
            StoredSpec::Label { label } => spec.stored_at(sym.label(label)?),
            StoredSpec::All(s) if s == "all" => spec.universe().stored.clone(),
            StoredSpec::All(s) => {
                return Err(ParseError::Format(format!(
                    "quota {}: stored must be a list, {{\"label\": ..}} or \"all\", got {s:?}",
                    d.name
                )))
            }
        };
        quotas.push(Quota::new(d.name, passed, stored));
    }
    Ok(Decomposition::new(quotas))
}

/// Extensional document form of a decomposition.
pub fn decomposition_to_docs(d: &Decomposition, sym: &SymbolTable) -> Vec<QuotaDoc> {
    d.quotas
        .iter()
        .map(|q| QuotaDoc {
            name: q.name.clone(),
            passed: PassedSpec::Items(
                q.passed
                    .iter()
                    .map(|p| {
                        (
                            sym.tag_name(p.tag).to_string(),
                            sym.label_name(p.destination).to_string(),
                            sym.service_name(p.service).to_string(),
                        )
                    })
                    .collect(),
            ),
            stored: StoredSpec::Items(
                q.stored
                    .iter()
                    .map(|s| {
                        (
                            sym.label_name(s.location).to_string(),
                            sym.resource_name(s.resource).to_string(),
                        )
                    })
                    .collect(),
            ),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreshRecord {
    pub action: String,
    pub kind: String,
    pub name: String,
}

/// One line of a trace. Field order is fixed; item lists are sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub fired: Vec<String>,
    pub consumed: Vec<String>,
    pub produced: Vec<String>,
    pub fresh: Vec<FreshRecord>,
}

pub fn trace_record(t: &Transition, sym: &SymbolTable) -> TraceRecord {
    let mut consumed = Vec::new();
    let mut produced = Vec::new();
    let mut fresh = Vec::new();
    for f in &t.fired {
        consumed.extend(f.inputs().iter().map(|i| sym.show(i)));
        produced.extend(f.outputs().iter().map(|i| sym.show(i)));
        for tag in &f.fresh_tags {
            fresh.push(FreshRecord {
                action: f.action_id.clone(),
                kind: "tag".into(),
                name: sym.tag_name(*tag).to_string(),
            });
        }
        for l in &f.fresh_labels {
            fresh.push(FreshRecord {
                action: f.action_id.clone(),
                kind: "label".into(),
                name: sym.label_name(*l).to_string(),
            });
        }
    }
    consumed.sort();
    produced.sort();
    let mut fired: Vec<String> = t.fired.iter().map(|f| f.action_id.clone()).collect();
    fired.sort();
    TraceRecord {
        step: t.step,
        fired,
        consumed,
        produced,
        fresh,
    }
}

pub fn render_trace_text(trace: &[Transition], sym: &SymbolTable) -> String {
    let mut out = String::new();
    for t in trace {
        let r = trace_record(t, sym);
        out.push_str(&format!(
            "step {}: fired [{}] consumed [{}] produced [{}]",
            r.step,
            r.fired.join(", "),
            r.consumed.join(", "),
            r.produced.join(", ")
        ));
        if !r.fresh.is_empty() {
            let fresh: Vec<String> = r
                .fresh
                .iter()
                .map(|f| format!("{}:{}={}", f.action, f.kind, f.name))
                .collect();
            out.push_str(&format!(" fresh [{}]", fresh.join(", ")));
        }
        out.push('\n');
    }
    out
}

pub fn render_trace_json(trace: &[Transition], sym: &SymbolTable) -> String {
    let mut out = String::new();
    for t in trace {
        out.push_str(&serde_json::to_string(&trace_record(t, sym)).expect("records serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run, Policy};
    use crate::test_fixtures::F2;

    #[test]
    fn parse_f2() {
        let spec = parse_model(F2).unwrap();
        assert_eq!(spec.actions().len(), 3);
        assert_eq!(spec.initial().len(), 4);
        assert_eq!(spec.universe().len(), 10);
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_model("{\n  \"labels\": [\"A\",\n}").unwrap_err();
        match err {
            ParseError::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_model(&F2.replace("\"t1\", \"A\", \"sv1\"", "\"t9\", \"A\", \"sv1\"")),
            Err(ParseError::Model(ModelError::Unresolved { .. }))
        ));
    }

    #[test]
    fn round_trip() {
        let spec = parse_model(F2).unwrap();
        let again = parse_model(&write_model(&spec)).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn decomposition_patterns() {
        let spec = parse_model(F2).unwrap();
        let text = r#"[
            {"name": "t1", "passed": {"tag": "t1"}, "stored": "all"},
            {"name": "A", "passed": {"label": "A"}, "stored": {"label": "A"}},
            {"name": "x", "passed": [["t2", "B", "sv5"]], "stored": [["B", "rB0"]]}
        ]"#;
        let d = parse_decomposition(text, &spec).unwrap();
        assert_eq!(d.quotas[0].passed.len(), 2);
        assert_eq!(d.quotas[0].stored.len(), 5);
        assert_eq!(d.quotas[1].passed.len(), 2);
        assert_eq!(d.quotas[1].stored.len(), 3);
        assert_eq!((d.quotas[2].passed.len(), d.quotas[2].stored.len()), (1, 1));
        assert!(parse_decomposition(r#"[{"name": "q", "stored": "some"}]"#, &spec).is_err());

        let docs = decomposition_to_docs(&d, spec.symbols());
        let again = parse_decomposition(&serde_json::to_string(&docs).unwrap(), &spec).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn trace_lines() {
        let spec = parse_model(F2).unwrap();
        let trace = run(&spec, Policy::max_concurrency(1), 10).unwrap();
        let text = render_trace_text(&trace, spec.symbols());
        assert_eq!(
            text.lines().next().unwrap(),
            "step 0: fired [l1, l2] consumed [A.rA0, B.rB0, t1.A.sv1, t2.B.sv2] \
             produced [A.rA1, B.rB1, t1.B.sv3, t2.A.sv4]"
        );
        let json = render_trace_json(&trace, spec.symbols());
        assert_eq!(json.lines().count(), 2);
        assert!(json.starts_with("{\"step\":0,\"fired\":[\"l1\",\"l2\"],\"consumed\""));
    }
}
