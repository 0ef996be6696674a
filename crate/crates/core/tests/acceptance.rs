//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use imds::analysis::{classify_terminal, tag_progress, VerdictKind};
use imds::canonical::{
    canonical_decomposition, canonical_processes, for_each_configuration, is_async_process,
    is_async_process_oracle, is_sequential, is_sequential_oracle, make_process, CanonicalError,
    CanonicalMode, OracleLimits,
};
use imds::decomposition::{classify, is_decomposition, CommForm, Quota, Scope};
use imds::engine::{fire, fire_set, prepared, reach, run, Policy, ReachBounds, ReachGraph};
use imds::io::parse_model;
use imds::model::{Item, PassedItem, StoredItem, SystemSpec};
use imds::petri::{colored_replay, extract_processes, to_petri, ProcessRole};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn f2() -> SystemSpec {
    parse_model(common::F2).unwrap()
}

fn full_reach(spec: &SystemSpec) -> ReachGraph {
    reach(spec, ReachBounds::default()).expect("generated systems are finite")
}

fn generated() -> Vec<SystemSpec> {
    common::systems(1, 200, common::STANDARD)
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dualism(systems: &[SystemSpec]) -> Outcome {
    let mut edges = 0;
    let mut ext_passing_rd = 0;
    let mut ext_sharing_td = 0;
    for (n, spec) in systems.iter().enumerate() {
        let g = full_reach(spec);
        let rd = canonical_decomposition(spec, CanonicalMode::Resident);
        let td = canonical_decomposition(spec, CanonicalMode::Traveler);
        for e in &g.edges {
            edges += 1;
            for ev in classify(&e.fired, &rd).iter().filter(|ev| ev.scope == Scope::External) {
                check(ev.form == CommForm::Passing, || {
                    format!("system {n}, action {}: external {} under RD", ev.action_id, ev.form)
                })?;
                ext_passing_rd += 1;
            }
            for ev in classify(&e.fired, &td).iter().filter(|ev| ev.scope == Scope::External) {
                check(ev.form == CommForm::Sharing, || {
                    format!("system {n}, action {}: external {} under TD", ev.action_id, ev.form)
                })?;
                ext_sharing_td += 1;
            }
        }
    }
    Ok(format!(
        "{} systems, {edges} edges, {ext_passing_rd} external passing (RD), {ext_sharing_td} external sharing (TD)",
        systems.len()
    ))
}

fn criterion_1() -> Outcome {
    let spec = f2();
    let g = full_reach(&spec);
    let rd = canonical_decomposition(&spec, CanonicalMode::Resident);
    let td = canonical_decomposition(&spec, CanonicalMode::Traveler);
    let count = |d, form| {
        g.edges
            .iter()
            .flat_map(|e| classify(&e.fired, d))
            .filter(|ev| ev.scope == Scope::External && ev.form == form)
            .count()
    };
    check(count(&rd, CommForm::Passing) >= 1, || "F2: no external passing under RD".into())?;
    check(count(&td, CommForm::Sharing) >= 1, || "F2: no external sharing under TD".into())?;
    let mut all = vec![spec];
    all.extend(generated());
    dualism(&all)
}

fn criterion_2() -> Outcome {
    let mut all = vec![f2()];
    all.extend(generated());
    let mut processes = 0;
    for (n, spec) in all.iter().enumerate() {
        for mode in [CanonicalMode::Traveler, CanonicalMode::Resident] {
            let d = canonical_decomposition(spec, mode);
            let report = is_decomposition(&d, spec);
            check(report.is_decomposition(), || {
                format!("system {n}, {mode:?}: {}", report.render(spec).join("; "))
            })?;
            for p in canonical_processes(spec, mode) {
                processes += 1;
                check(is_async_process(&p.quota, spec), || {
                    format!("system {n}: {} not asynchronous", p.quota.name)
                })?;
                check(is_sequential(&p.quota.passed).holds(), || {
                    format!("system {n}: {} not sequential", p.quota.name)
                })?;
            }
        }
    }
    Ok(format!("{} systems, {processes} canonical processes", all.len()))
}

fn subsets<T: Copy + Ord>(items: &[T]) -> impl Iterator<Item = BTreeSet<T>> + '_ {
    (0u32..(1 << items.len())).map(move |mask| {
        items
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, x)| *x)
            .collect()
    })
}

fn quota_of(items: &BTreeSet<Item>) -> Quota {
    Quota::new(
        "Q",
        items.iter().filter_map(|i| i.as_passed().copied()),
        items.iter().filter_map(|i| i.as_stored().copied()),
    )
}

const LARGE_LIMIT: OracleLimits = OracleLimits {
    max_configurations: 20_000,
};

/// Systems with more than 8 items whose configuration space fits the
/// oracle limit.
fn larger_systems(seed: u64, count: usize) -> Vec<SystemSpec> {
    let mut rng = common::rng(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let spec = common::random_system(&mut rng, common::STANDARD);
        if spec.universe().len() <= 8 {
            continue;
        }
        match for_each_configuration(&spec, LARGE_LIMIT, |_| {}) {
            Ok(()) => out.push(spec),
            Err(CanonicalError::UniverseTooLarge { .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }
    out
}

fn random_subset<T: Copy + Ord>(rng: &mut impl Rng, items: &[T], p: f64) -> BTreeSet<T> {
    items.iter().copied().filter(|_| rng.gen_bool(p)).collect()
}

fn criterion_3() -> Outcome {
    let limits = OracleLimits::default();
    let small = common::small_systems(3, 60, 8);
    let mut exhaustive = 0;
    let mut agree_true = 0;
    for (n, spec) in small.iter().enumerate() {
        let items: Vec<Item> = spec.universe().items().collect();
        for q in subsets(&items) {
            let quota = quota_of(&q);
            let fast = is_async_process(&quota, spec);
            let oracle = is_async_process_oracle(&quota, spec, limits).map_err(|e| e.to_string())?;
            check(fast == oracle, || {
                format!("small system {n}, quota {:?}: lemma {fast}, oracle {oracle}", q)
            })?;
            exhaustive += 1;
            agree_true += fast as usize;
        }
    }
    let mut rng = common::rng(33);
    let larger = larger_systems(34, 50);
    let mut random = 0;
    for (n, spec) in larger.iter().enumerate() {
        let items: Vec<Item> = spec.universe().items().collect();
        let passed: Vec<PassedItem> = spec.universe().passed.iter().copied().collect();
        let stored: Vec<StoredItem> = spec.universe().stored.iter().copied().collect();
        for k in 0..10 {
            let quota = match k % 3 {
                0 => quota_of(&random_subset(&mut rng, &items, 0.5)),
                1 => make_process(spec, "Q", random_subset(&mut rng, &passed, 0.4)).quota,
                _ => {
                    let mut q = make_process(spec, "Q", random_subset(&mut rng, &passed, 0.4)).quota;
                    let s = *stored.choose(&mut rng).unwrap();
                    if !q.stored.remove(&s) {
                        q.stored.insert(s);
                    }
                    q
                }
            };
            let fast = is_async_process(&quota, spec);
            let oracle =
                is_async_process_oracle(&quota, spec, LARGE_LIMIT).map_err(|e| e.to_string())?;
            check(fast == oracle, || {
                format!("larger system {n}, quota {:?}: lemma {fast}, oracle {oracle}", quota)
            })?;
            random += 1;
            agree_true += fast as usize;
        }
    }
    Ok(format!(
        "{exhaustive} exhaustive quotas over {} systems, {random} random quotas over {} systems, {agree_true} asynchronous",
        small.len(),
        larger.len()
    ))
}

fn criterion_4() -> Outcome {
    let limits = OracleLimits::default();
    let small = common::small_systems(4, 60, 8);
    let mut exhaustive = 0;
    let mut sequential = 0;
    for (n, spec) in small.iter().enumerate() {
        let items: Vec<Item> = spec.universe().items().collect();
        for q in subsets(&items) {
            let passed: BTreeSet<PassedItem> = q.iter().filter_map(|i| i.as_passed().copied()).collect();
            let fast = is_sequential(&passed).holds();
            let oracle = is_sequential_oracle(&passed, spec, limits).map_err(|e| e.to_string())?;
            check(fast == oracle, || {
                format!("small system {n}, quota {:?}: lemma {fast}, oracle {oracle}", passed)
            })?;
            exhaustive += 1;
            sequential += fast as usize;
        }
    }
    let mut rng = common::rng(44);
    let larger = larger_systems(45, 50);
    let mut random = 0;
    for (n, spec) in larger.iter().enumerate() {
        let passed: Vec<PassedItem> = spec.universe().passed.iter().copied().collect();
        for k in 0..10 {
            let pool: Vec<PassedItem> = match k % 4 {
                0 => passed.clone(),
                1 => {
                    let t = passed.choose(&mut rng).unwrap().tag;
                    passed.iter().copied().filter(|p| p.tag == t).collect()
                }
                2 => {
                    let l = passed.choose(&mut rng).unwrap().destination;
                    passed.iter().copied().filter(|p| p.destination == l).collect()
                }
                _ => passed.choose_multiple(&mut rng, 2).copied().collect(),
            };
            let qp = random_subset(&mut rng, &pool, 0.6);
            let fast = is_sequential(&qp).holds();
            let oracle = is_sequential_oracle(&qp, spec, LARGE_LIMIT).map_err(|e| e.to_string())?;
            check(fast == oracle, || {
                format!("larger system {n}, quota {:?}: lemma {fast}, oracle {oracle}", qp)
            })?;
            random += 1;
            sequential += fast as usize;
        }
    }
    Ok(format!(
        "{exhaustive} exhaustive quotas over {} systems, {random} random quotas over {} systems, {sequential} sequential",
        small.len(),
        larger.len()
    ))
}

fn criterion_5() -> Outcome {
    let systems = generated();
    let mut diamonds = 0;
    let mut steps = 0;
    for (n, spec) in systems.iter().enumerate() {
        let g = full_reach(spec);
        for (si, state) in g.states.iter().enumerate() {
            let ready = prepared(state, spec);
            let defs = spec.actions();
            for (i, &a) in ready.iter().enumerate() {
                for &b in &ready[i + 1..] {
                    if defs[a].node() == defs[b].node() {
                        continue;
                    }
                    let (ga, _) = fire(state, spec, a).map_err(|e| e.to_string())?;
                    let (gab, _) = fire(&ga, spec, b).map_err(|e| e.to_string())?;
                    let (gb, _) = fire(state, spec, b).map_err(|e| e.to_string())?;
                    let (gba, _) = fire(&gb, spec, a).map_err(|e| e.to_string())?;
                    check(gab == gba, || format!("system {n}, state {si}: diamond fails"))?;
                    diamonds += 1;
                }
            }
            // every maximal one-per-node choice
            let mut per_node: BTreeMap<_, Vec<usize>> = BTreeMap::new();
            for &a in &ready {
                per_node.entry(defs[a].node()).or_default().push(a);
            }
            let groups: Vec<Vec<usize>> = per_node.into_values().collect();
            let mut choice = vec![0usize; groups.len()];
            loop {
                let set: Vec<usize> = groups.iter().zip(&choice).map(|(g, &c)| g[c]).collect();
                if !set.is_empty() {
                    let t = fire_set(state, spec, &set, 0).map_err(|e| e.to_string())?;
                    for order in [set.clone(), set.iter().rev().copied().collect()] {
                        let mut g1 = state.clone();
                        for a in order {
                            g1 = fire(&g1, spec, a).map_err(|e| e.to_string())?.0;
                            check(g.index_of(&g1).is_some(), || {
                                format!("system {n}: serialized state missing from reach")
                            })?;
                        }
                        check(g1 == t.target, || {
                            format!("system {n}, state {si}: step {set:?} does not serialize")
                        })?;
                    }
                    steps += 1;
                }
                let mut k = 0;
                while k < groups.len() {
                    choice[k] += 1;
                    if choice[k] < groups[k].len() {
                        break;
                    }
                    choice[k] = 0;
                    k += 1;
                }
                if k == groups.len() {
                    break;
                }
            }
        }
    }
    Ok(format!(
        "{} systems, {diamonds} diamonds, {steps} maximal steps serialized",
        systems.len()
    ))
}

fn criterion_6() -> Outcome {
    let spec = f2();
    let sym = spec.symbols();
    let g = full_reach(&spec);
    let counts = (g.states.len(), g.edges.len(), g.terminal.len());
    check(counts == (5, 5, 1), || format!("reach gives {counts:?}"))?;
    let v = classify_terminal(&g.states[g.terminal[0]], &spec).map_err(|e| e.to_string())?;
    let stuck: Vec<&str> = v.stuck_tags.iter().map(|t| sym.tag_name(*t)).collect();
    check(v.kind == VerdictKind::Deadlock && stuck == ["t1", "t2"], || {
        format!("terminal verdict {:?} stuck {stuck:?}", v.kind)
    })?;
    let (l1, _) = spec.action("l1").unwrap();
    let after = fire(spec.initial(), &spec, l1).map_err(|e| e.to_string())?.0;
    let s = g.index_of(&after).ok_or("after-l1 state missing")?;
    let r = tag_progress(&g, &spec).map_err(|e| e.to_string())?;
    let (t1, t2) = (sym.tag("t1").unwrap(), sym.tag("t2").unwrap());
    check(r.is_deadlocked_at(t1, s), || "t1 not deadlocked after l1".into())?;
    check(!r.is_deadlocked_at(t2, s), || "t2 deadlocked after l1".into())?;
    check(r.partial_deadlock.contains(&s), || "no partial deadlock after l1".into())?;
    Ok("5 states, 5 transitions, 1 terminal; deadlock {t1, t2}; partial deadlock after l1".into())
}

fn criterion_7() -> Outcome {
    let mut all = vec![f2(), parse_model(common::SPAWNER).unwrap()];
    all.extend(generated());
    let mut states = 0;
    for (n, spec) in all.iter().enumerate() {
        let net = to_petri(spec);
        let g = full_reach(spec);
        check(net.marking_of(spec.initial()) == net.initial_marking, || {
            format!("system {n}: initial marking differs")
        })?;
        for state in &g.states {
            states += 1;
            let m = net.marking_of(state);
            check(m.iter().all(|&c| c <= 1), || format!("system {n}: two tokens on a place"))?;
            let enabled: Vec<usize> = net.enabled(&m).iter().map(|&t| net.transitions[t].action).collect();
            check(enabled == prepared(state, spec), || {
                format!("system {n}: enabled {enabled:?} vs prepared {:?}", prepared(state, spec))
            })?;
            for t in net.enabled(&m) {
                let next = net.fire(spec, &m, t).map_err(|e| e.to_string())?;
                let (target, _) = fire(state, spec, net.transitions[t].action).map_err(|e| e.to_string())?;
                check(next == net.marking_of(&target), || {
                    format!("system {n}: successor marking differs for {}", net.transitions[t].id)
                })?;
                check(next.iter().all(|&c| c <= 1), || format!("system {n}: not 1-safe"))?;
            }
        }
    }
    Ok(format!("{} systems, {states} states checked", all.len()))
}

fn partition_holds(spec: &SystemSpec, policy: Policy) -> Result<usize, String> {
    let trace = run(spec, policy, 200).map_err(|e| e.to_string())?;
    let colored = colored_replay(spec, &trace).map_err(|e| e.to_string())?;
    let procs = extract_processes(&colored);
    let n = colored.firings.len();
    for role in [ProcessRole::Traveler, ProcessRole::Resident] {
        let mut seen = vec![0usize; n];
        for p in procs.iter().filter(|p| p.role == role) {
            for f in &p.trace {
                seen[f.index] += 1;
            }
        }
        check(seen.iter().all(|&c| c == 1), || {
            format!("{role:?} traces do not partition the fired actions")
        })?;
    }
    Ok(n)
}

fn criterion_8() -> Outcome {
    let spec = f2();
    let trace = run(&spec, Policy::max_concurrency(0), 10).map_err(|e| e.to_string())?;
    let procs = extract_processes(&colored_replay(&spec, &trace).map_err(|e| e.to_string())?);
    let actions = |role, subject: &str| -> Vec<String> {
        procs
            .iter()
            .filter(|p| p.role == role && p.subject == subject)
            .flat_map(|p| p.trace.iter().map(|f| f.action.clone()))
            .collect()
    };
    check(
        actions(ProcessRole::Traveler, "t1") == ["l1"]
            && actions(ProcessRole::Traveler, "t2") == ["l2", "l3"]
            && actions(ProcessRole::Resident, "A") == ["l1", "l3"]
            && actions(ProcessRole::Resident, "B") == ["l2"],
        || "F2 extraction differs".into(),
    )?;
    let mut all = vec![spec, parse_model(common::SPAWNER).unwrap()];
    all.extend(generated());
    let mut runs = 0;
    let mut firings = 0;
    for (n, spec) in all.iter().enumerate() {
        for policy in [
            Policy::interleaving(n as u64),
            Policy::max_concurrency(n as u64),
            Policy::intermediate(2, n as u64),
        ] {
            firings += partition_holds(spec, policy).map_err(|e| format!("system {n}: {e}"))?;
            runs += 1;
        }
    }
    Ok(format!("F2 travelers [l1] / [l2, l3], residents [l1, l3] / [l2]; {runs} runs, {firings} firings partitioned"))
}

fn cli(args: &[&str]) -> (Vec<u8>, Vec<u8>, Option<i32>) {
    let out = Command::new(env!("CARGO_BIN_EXE_imds"))
        .args(args)
        .output()
        .expect("binary runs");
    (out.stdout, out.stderr, out.status.code())
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let model = dir.path().join("f2.json");
    std::fs::write(&model, common::F2).map_err(|e| e.to_string())?;
    let random = dir.path().join("random.json");
    let spec = &common::systems(9, 1, common::STANDARD)[0];
    std::fs::write(&random, imds::io::write_model(spec)).map_err(|e| e.to_string())?;
    let trace = dir.path().join("trace.json");
    let m = model.to_str().unwrap();
    let (colored, _, code) = cli(&["run", m, "--policy", "max", "--colored"]);
    check(code == Some(0), || "run --colored failed".into())?;
    std::fs::write(&trace, colored).map_err(|e| e.to_string())?;

    let mut commands: Vec<Vec<String>> = Vec::new();
    for file in [&model, &random] {
        let f = file.to_str().unwrap().to_string();
        let with = |rest: &[&str]| {
            let mut v = vec![rest[0].to_string(), f.clone()];
            v.extend(rest[1..].iter().map(|s| s.to_string()));
            v
        };
        commands.extend([
            with(&["validate"]),
            with(&["validate", "--format", "json"]),
            with(&["run", "--policy", "interleaving", "--seed", "7"]),
            with(&["run", "--policy", "max", "--seed", "7", "--format", "json"]),
            with(&["run", "--policy", "intermediate", "--k", "2", "--seed", "3"]),
            with(&["run", "--policy", "intermediate", "--k", "2", "--seed", "3", "--colored"]),
            with(&["reach"]),
            with(&["reach", "--format", "json"]),
            with(&["reach", "--format", "dot"]),
            with(&["decompose", "--mode", "traveler"]),
            with(&["decompose", "--mode", "resident", "--format", "json"]),
            with(&["classify", "--mode", "traveler"]),
            with(&["classify", "--mode", "resident", "--format", "json"]),
            with(&["analyze"]),
            with(&["analyze", "--format", "json"]),
            with(&["export", "--format", "dot"]),
            with(&["export", "--graph", "reach", "--format", "dot"]),
            with(&["export", "--color-by", "tag", "--format", "dot"]),
            with(&["safety"]),
        ]);
    }
    commands.push(vec!["extract".into(), trace.to_str().unwrap().into()]);
    commands.push(vec!["extract".into(), trace.to_str().unwrap().into(), "--format".into(), "json".into()]);
    for args in &commands {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let first = cli(&args);
        check(first.2 == Some(0), || {
            format!("{args:?} exited {:?}: {}", first.2, String::from_utf8_lossy(&first.1))
        })?;
        for _ in 0..2 {
            check(cli(&args) == first, || format!("{args:?} output differs between runs"))?;
        }
    }
    Ok(format!("{} commands, 3 runs each, byte-identical", commands.len()))
}

fn main() {
    // ensure the binary under test exists before timing anything
    assert!(Path::new(env!("CARGO_BIN_EXE_imds")).exists());
    let criteria: [Criterion; 9] = [
        ("dualism of resident and traveler decompositions", criterion_1),
        ("canonical decompositions and processes", criterion_2),
        ("asynchronous-process quota equation vs oracle", criterion_3),
        ("sequential-process quota condition vs oracle", criterion_4),
        ("diamond commutation and step serialization", criterion_5),
        ("F2 reachability and deadlock numbers", criterion_6),
        ("Petri bisimulation and 1-safety", criterion_7),
        ("process extraction partition", criterion_8),
        ("CLI determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} [PRIMARY] {name}: PASS ({detail}; {secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} [PRIMARY] {name}: FAIL ({why}; {secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
