//! Seeded generators of valid systems shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use imds::io::{model_from_doc, ActionDoc, InitDoc, InputDoc, ModelDoc, OutputDoc, PoolDoc};
use imds::model::{validate_system, SystemSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const F2: &str = include_str!("../data/f2.json");

#[derive(Copy, Clone, Debug)]
pub struct Shape {
    pub max_labels: usize,
    pub max_tags: usize,
    pub max_actions: usize,
    pub services: usize,
    pub resources: usize,
}

/// Up to 4 labels, 4 tags and 12 actions.
pub const STANDARD: Shape = Shape {
    max_labels: 4,
    max_tags: 4,
    max_actions: 12,
    services: 3,
    resources: 3,
};

/// Shapes whose universes tend to stay at 8 items or fewer.
pub const SMALL: Shape = Shape {
    max_labels: 2,
    max_tags: 2,
    max_actions: 3,
    services: 2,
    resources: 2,
};

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

type Passed = (String, String, String);
type Stored = (String, String);

/// One attempt: every label starts with a stored item, actions pick their
/// inputs mostly among items already known to occur.
fn attempt(rng: &mut ChaCha8Rng, shape: Shape) -> ModelDoc {
    let labels = names("L", rng.gen_range(1..=shape.max_labels));
    let tags = names("t", rng.gen_range(1..=shape.max_tags));
    let services = names("s", shape.services);
    let resources = names("r", shape.resources);

    let pick = |rng: &mut ChaCha8Rng, v: &[String]| v.choose(rng).unwrap().clone();

    let init_stored: Vec<Stored> = labels
        .iter()
        .map(|l| (l.clone(), pick(rng, &resources)))
        .collect();
    let mut init_passed: Vec<Passed> = Vec::new();
    for t in &tags {
        if rng.gen_bool(0.85) {
            init_passed.push((t.clone(), pick(rng, &labels), pick(rng, &services)));
        }
    }
    if init_passed.is_empty() {
        init_passed.push((tags[0].clone(), pick(rng, &labels), pick(rng, &services)));
    }

    let mut known_passed: Vec<Passed> = init_passed.clone();
    let mut known_stored: Vec<Stored> = init_stored.clone();
    let mut inputs: BTreeSet<(Passed, Stored)> = BTreeSet::new();
    let mut actions = Vec::new();
    let target = rng.gen_range(1..=shape.max_actions);
    let mut tries = 0;
    while actions.len() < target && tries < 10 * shape.max_actions {
        tries += 1;
        let p: Passed = if rng.gen_bool(0.8) {
            known_passed.choose(rng).unwrap().clone()
        } else {
            (pick(rng, &tags), pick(rng, &labels), pick(rng, &services))
        };
        let at_node: Vec<&Stored> = known_stored.iter().filter(|s| s.0 == p.1).collect();
        let s: Stored = if !at_node.is_empty() && rng.gen_bool(0.8) {
            (*at_node.choose(rng).unwrap()).clone()
        } else {
            (p.1.clone(), pick(rng, &resources))
        };
        if !inputs.insert((p.clone(), s.clone())) {
            continue;
        }
        let out_s: Stored = (p.1.clone(), pick(rng, &resources));
        let mut out_p = Vec::new();
        if rng.gen_bool(0.75) {
            out_p.push((p.0.clone(), pick(rng, &labels), pick(rng, &services)));
        }
        known_passed.extend(out_p.iter().cloned());
        known_stored.push(out_s.clone());
        actions.push(ActionDoc {
            id: format!("a{}", actions.len()),
            input: InputDoc {
                passed: p,
                stored: s,
            },
            out: OutputDoc {
                stored: vec![out_s],
                passed: out_p,
            },
        });
    }
    ModelDoc {
        labels,
        services,
        resources,
        tags,
        init: InitDoc {
            stored: init_stored,
            passed: init_passed,
        },
        actions,
        fresh_pool: PoolDoc::default(),
    }
}

/// Every stored location is the destination of some passed item.
pub fn every_node_addressed(spec: &SystemSpec) -> bool {
    let u = spec.universe();
    let dests: BTreeSet<_> = u.passed.iter().map(|p| p.destination).collect();
    u.stored.iter().all(|s| dests.contains(&s.location))
}

/// A valid fresh-free system in which every node is addressed. Attempts
/// are drawn from `rng` until one qualifies.
pub fn random_system(rng: &mut ChaCha8Rng, shape: Shape) -> SystemSpec {
    loop {
        let doc = attempt(rng, shape);
        let spec = model_from_doc(&doc).expect("generated names resolve");
        if validate_system(&spec).is_ok() && every_node_addressed(&spec) {
            return spec;
        }
    }
}

/// `count` systems from a fixed seed.
pub fn systems(seed: u64, count: usize, shape: Shape) -> Vec<SystemSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_system(&mut rng, shape)).collect()
}

/// Systems whose universe has at most `max_items` items.
pub fn small_systems(seed: u64, count: usize, max_items: usize) -> Vec<SystemSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let spec = random_system(&mut rng, SMALL);
        if spec.universe().len() <= max_items {
            out.push(spec);
        }
    }
    out
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A system with a fresh tag and a fresh location, bounded by its pool.
pub const SPAWNER: &str = r#"{
    "labels": ["A"], "services": ["go", "job"], "resources": ["r", "n"], "tags": ["m"],
    "fresh_pool": { "tags": 1, "labels": 1 },
    "init": { "stored": [["A", "r"]], "passed": [["m", "A", "go"]] },
    "actions": [
        { "id": "spawn", "in": { "passed": ["m", "A", "go"], "stored": ["A", "r"] },
          "out": { "stored": [["A", "n"]], "passed": [["@fresh", "A", "job"]] } },
        { "id": "work", "in": { "passed": ["t#0", "A", "job"], "stored": ["A", "n"] },
          "out": { "stored": [["A", "r"], ["@fresh", "r"]], "passed": [] } }
    ]
}"#;
