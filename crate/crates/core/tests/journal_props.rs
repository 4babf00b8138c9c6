use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use revqa_core::bus::{Bus, Message};
use revqa_core::journal::{replay, JournalError, Timeline};
use revqa_core::kstore::{AgentId, Assertion, PredicateRegistry, Scope};

#[derive(Debug, Clone)]
enum Op {
    Assert { agent: usize, subject: usize, protected: bool },
    LocalCheckpoint(usize),
    GlobalCheckpoint,
    Local { agent: usize, back: usize },
    Global { back: usize },
    Challenge(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0..3usize, 0..6usize, prop::bool::weighted(0.15))
            .prop_map(|(agent, subject, protected)| Op::Assert { agent, subject, protected }),
        2 => (0..3usize).prop_map(Op::LocalCheckpoint),
        1 => Just(Op::GlobalCheckpoint),
        2 => (0..3usize, 0..5usize).prop_map(|(agent, back)| Op::Local { agent, back }),
        1 => (0..4usize).prop_map(|back| Op::Global { back }),
        1 => (0..40usize).prop_map(Op::Challenge),
    ]
}

fn agent(i: usize) -> AgentId {
    AgentId::new(["verifier", "retriever", "decomposer"][i])
}

fn ids(tl: &Timeline, a: &AgentId) -> BTreeSet<String> {
    tl.knowledge_set(a).map(|s| s.ids()).unwrap_or_default()
}

fn protected_ids(tl: &Timeline, a: &AgentId) -> BTreeSet<String> {
    tl.knowledge_set(a)
        .map(|s| s.iter().filter(|x| x.protected).map(|x| x.id.clone()).collect())
        .unwrap_or_default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn rollback_restores_snapshots_and_replay_matches(ops in prop::collection::vec(op(), 1..60)) {
        let reg = PredicateRegistry::new().with_functional("value");
        let mut tl = Timeline::new(reg).with_local_depth(3);
        for i in 0..3 {
            tl.register_agent(&agent(i));
        }
        let mut n = 0;
        for op in ops {
            match op {
                Op::Assert { agent: i, subject, protected } => {
                    n += 1;
                    let mut a = Assertion::new(format!("x{n:03}"), format!("s{subject}"), "value", format!("{n}"));
                    if protected {
                        a = a.protect();
                    }
                    tl.assert_statement(&agent(i), a).unwrap();
                }
                Op::LocalCheckpoint(i) => {
                    tl.take_checkpoint(Scope::Agent(agent(i)));
                }
                Op::GlobalCheckpoint => {
                    tl.take_checkpoint(Scope::Global);
                }
                Op::Local { agent: i, back } => {
                    let a = agent(i);
                    let scope = Scope::Agent(a.clone());
                    let chain: Vec<_> = tl.checkpoints_for(&scope).cloned().collect();
                    if chain.is_empty() {
                        continue;
                    }
                    let cp = chain[chain.len() - 1 - back.min(chain.len() - 1)].clone();
                    let keep = protected_ids(&tl, &a);
                    let others: Vec<_> = (0..3).filter(|&j| j != i).map(|j| ids(&tl, &agent(j))).collect();
                    match tl.backtrack_local(&a, &cp.id) {
                        Ok(_) => {
                            let mut expected = cp.live_snapshot[&a].clone();
                            expected.extend(keep);
                            prop_assert_eq!(ids(&tl, &a), expected);
                            let after: Vec<_> = (0..3).filter(|&j| j != i).map(|j| ids(&tl, &agent(j))).collect();
                            prop_assert_eq!(after, others);
                        }
                        Err(JournalError::DepthExceeded { depth, limit, .. }) => {
                            prop_assert!(depth > limit);
                        }
                        Err(e) => prop_assert!(false, "{e}"),
                    }
                }
                Op::Global { back } => {
                    let chain: Vec<_> = tl.checkpoints_for(&Scope::Global).cloned().collect();
                    if chain.is_empty() {
                        continue;
                    }
                    let cp = chain[chain.len() - 1 - back.min(chain.len() - 1)].clone();
                    let keep: Vec<_> = (0..3).map(|j| protected_ids(&tl, &agent(j))).collect();
                    tl.backtrack_global(&AgentId::new("supervisor"), &cp.id).unwrap();
                    for (j, kept) in keep.iter().enumerate() {
                        let a = agent(j);
                        let mut expected = cp.live_snapshot.get(&a).cloned().unwrap_or_default();
                        expected.extend(kept.iter().cloned());
                        prop_assert_eq!(ids(&tl, &a), expected);
                    }
                }
                Op::Challenge(k) => {
                    let target = format!("x{k:03}");
                    let _ = tl.challenge(&AgentId::new("controller"), &target, "test");
                }
            }
        }
        let replayed = replay(tl.entries()).unwrap();
        prop_assert_eq!(&replayed, &tl.live_state());
        let text = revqa_core::journal::to_ndjson(tl.entries());
        let parsed = revqa_core::journal::parse_ndjson(&text).unwrap();
        prop_assert_eq!(parsed.as_slice(), tl.entries());
        let times: Vec<u64> = tl.entries().iter().map(|e| e.time).collect();
        prop_assert!(times.windows(2).all(|w| w[0] <= w[1]));
    }
}

fn message(i: usize, sender: usize, subject: usize, object: usize) -> Message {
    let senders = ["retriever", "verifier", "decomposer"];
    let a = Assertion::new(format!("b{i:02}"), format!("s{subject}"), "value", format!("o{object}"));
    Message::assert(format!("m{i:02}"), AgentId::new(senders[sender]), a)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn delivery_ignores_submission_order(
        spec in prop::collection::vec((0..3usize, 0..3usize, 0..3usize), 1..=8),
        perms in prop::collection::vec(any::<prop::sample::Index>(), 4),
    ) {
        let msgs: Vec<Message> = spec.iter().enumerate().map(|(i, &(s, sub, o))| message(i, s, sub, o)).collect();
        let run = |order: &[Message]| {
            let reg = PredicateRegistry::new().with_functional("value");
            let mut tl = Timeline::new(reg);
            let mut bus = Bus::new();
            for s in ["retriever", "verifier", "decomposer"] {
                bus.register(&AgentId::new(s));
            }
            for m in order {
                bus.send(m.clone()).unwrap();
            }
            let ev = bus.deliver_round(&mut tl);
            (ev, tl.entries().to_vec())
        };
        let baseline = run(&msgs);
        // A handful of pseudo-random permutations plus the reversal.
        let mut orders = vec![msgs.iter().rev().cloned().collect::<Vec<_>>()];
        for p in &perms {
            let mut v = msgs.clone();
            let mut k = p.index(usize::MAX / 2 + 1);
            for i in (1..v.len()).rev() {
                v.swap(i, k % (i + 1));
                k = k / (i + 1) + 7919;
            }
            orders.push(v);
        }
        for o in orders {
            let got = run(&o);
            prop_assert_eq!(&got.0, &baseline.0);
            prop_assert_eq!(&got.1, &baseline.1);
        }
        let ids: Vec<&str> = baseline.0.messages.iter().map(|m| m.id.as_str()).collect();
        let mut keys: Vec<(String, &str)> = baseline.0.messages.iter().map(|m| (m.sender.to_string(), m.id.as_str())).collect();
        keys.sort();
        prop_assert_eq!(ids, keys.iter().map(|k| k.1).collect::<Vec<_>>());
    }
}

#[test]
fn every_permutation_of_a_small_round_agrees() {
    let msgs: Vec<Message> = (0..5).map(|i| message(i, i % 3, i % 2, i % 3)).collect();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut idx: Vec<usize> = (0..msgs.len()).collect();
    permute(&mut idx, 0, &mut |order| {
        let reg = PredicateRegistry::new().with_functional("value");
        let mut tl = Timeline::new(reg);
        let mut bus = Bus::new();
        for s in ["retriever", "verifier", "decomposer"] {
            bus.register(&AgentId::new(s));
        }
        for &i in order {
            bus.send(msgs[i].clone()).unwrap();
        }
        bus.deliver_round(&mut tl);
        *seen.entry(revqa_core::journal::to_ndjson(tl.entries())).or_default() += 1;
    });
    assert_eq!(seen.len(), 1);
    assert_eq!(seen.values().sum::<usize>(), 120);
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}
