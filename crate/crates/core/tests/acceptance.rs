//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeSet;
use std::fs;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use clauseviz_core::cnf::{Clause, ClauseEvent, CnfFormula, EventKind, Literal};
use clauseviz_core::contraction::{contract_once, VoteMode};
use clauseviz_core::formats::ProofStep;
use clauseviz_core::graph::{build_from_live, for_each_pair, InteractionGraph, ReductionKind, WeightFunction, WeightedGraph};
use clauseviz_core::heatmap::{HeatConfig, HeatMode, HeatState};
use clauseviz_core::layout::{layout, LayoutConfig};
use clauseviz_core::render::{export_sequence, ExportOptions, ImageFormat, RenderStyle};
use clauseviz_core::session::{ChunkPolicy, Session, SessionConfig};
use clauseviz_core::synthetic::{Generator, SyntheticSpec};
use clauseviz_core::wire::{
    consumer_listener, decode_message, encode_message, producer_session, Decoded, Ingest, ListenerOptions,
    ProducerOptions, WireMessage,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_clause(rng: &mut ChaCha8Rng, len: usize, max_var: u32) -> Vec<i32> {
    rand::seq::index::sample(rng, max_var as usize, len)
        .into_iter()
        .map(|i| {
            let v = i as i32 + 1;
            if rng.gen_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

fn reduction_laws() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..10_000 {
        let len = rng.gen_range(1..=20);
        let clause = Clause::from_ints(&random_clause(&mut rng, len, 1000)).expect("proper clause");
        let (mut ring, mut clique) = (0usize, 0usize);
        for_each_pair(&clause, ReductionKind::RingReduction, |_, _| ring += 1);
        for_each_pair(&clause, ReductionKind::CliqueExpansion, |_, _| clique += 1);
        let want_ring = match len {
            1 => 0,
            2 => 1,
            n => n,
        };
        ensure(ring == want_ring, || format!("clause {i}: ring gave {ring} pairs for |c| = {len}"))?;
        ensure(clique == len * (len - 1) / 2, || format!("clause {i}: clique gave {clique} pairs for |c| = {len}"))?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(1), || format!("took {t:?}"))?;
    Ok(format!("10000 clauses in {t:.2?}"))
}

fn weights_close(a: &WeightedGraph, b: &WeightedGraph, tol: f64) -> Result<(), String> {
    let keys: BTreeSet<(u32, u32)> = a.edges().chain(b.edges()).map(|(u, v, _)| (u, v)).collect();
    for (u, v) in keys {
        let (x, y) = (a.weight(u, v), b.weight(u, v));
        ensure((x - y).abs() <= tol, || format!("edge ({u}, {v}): {x} vs {y}"))?;
    }
    Ok(())
}

fn incremental_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kinds = [ReductionKind::RingReduction, ReductionKind::CliqueExpansion];
    let fns = [WeightFunction::InverseSizeMinusOne, WeightFunction::InverseSize, WeightFunction::ExponentialDecay];
    for s in 0..500 {
        let vars = rng.gen_range(2..=50);
        let kind = kinds[s % 2];
        let wf = fns[s % 3];
        let formula = CnfFormula::from_ints(vars, &[]);
        let mut g = InteractionGraph::from_formula(&formula, kind, wf);
        let mut added: Vec<Vec<i32>> = Vec::new();
        for seq in 0..rng.gen_range(0..=200u64) {
            let event = if !added.is_empty() && rng.gen_bool(0.4) {
                // Sometimes delete something never added, to exercise the no-op path.
                let c = if rng.gen_bool(0.1) {
                    random_clause(&mut rng, 2, vars)
                } else {
                    added.swap_remove(rng.gen_range(0..added.len()))
                };
                ClauseEvent::from_ints(seq, EventKind::Delete, &c)
            } else {
                let len = rng.gen_range(1..=(vars as usize).min(20));
                let c = random_clause(&mut rng, len, vars);
                added.push(c.clone());
                ClauseEvent::from_ints(seq, EventKind::Add, &c)
            };
            g.apply(&event);
        }
        let scratch = build_from_live(g.graph.num_nodes(), &g.live, kind, wf);
        weights_close(&g.graph, &scratch, 1e-9).map_err(|e| format!("sequence {s}: {e}"))?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(10), || format!("took {t:?}"))?;
    Ok(format!("500 sequences in {t:.2?}"))
}

fn heat_oracles() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let vars = 200u32;
    let mut queries = 0usize;
    for s in 0..100 {
        let k = rng.gen_range(1..=2000usize);
        let mut window = HeatState::new(&HeatConfig { k, ..Default::default() });
        let mut decay = HeatState::new(&HeatConfig {
            mode: HeatMode::Decay,
            k,
            ..Default::default()
        });
        let mut adds: Vec<Vec<u32>> = Vec::new();
        let mut last_touch: Vec<Option<u64>> = vec![None; vars as usize];
        for seq in 0..10_000u64 {
            let len = rng.gen_range(1..=8);
            let c = random_clause(&mut rng, len, vars);
            let kind = if rng.gen_bool(0.3) { EventKind::Delete } else { EventKind::Add };
            let e = ClauseEvent::from_ints(seq, kind, &c);
            window.update(&e);
            decay.update(&e);
            if kind == EventKind::Add {
                let nodes: Vec<u32> = c.iter().map(|l| l.unsigned_abs() - 1).collect();
                for &v in &nodes {
                    last_touch[v as usize] = Some(seq);
                }
                adds.push(nodes);
            }

            for v in 0..vars {
                let want = last_touch[v as usize].map_or(0.0, |t| (1.0 - (seq - t) as f64 / k as f64).max(0.0));
                ensure(decay.value(v) == want, || format!("sequence {s} event {seq}: decay({v}) = {} not {want}", decay.value(v)))?;
            }
            if seq % 100 == 99 || seq == 9_999 {
                queries += 1;
                let mut counts = vec![0u32; vars as usize];
                for clause in adds.iter().rev().take(k) {
                    for &v in clause {
                        counts[v as usize] += 1;
                    }
                }
                let max = counts.iter().copied().max().unwrap_or(0);
                for v in 0..vars {
                    let want = if max == 0 { 0.0 } else { counts[v as usize] as f64 / max as f64 };
                    ensure(window.count(v) == counts[v as usize] && window.value(v) == want, || {
                        format!("sequence {s} event {seq}: window({v}) = {} not {want}", window.value(v))
                    })?;
                }
            }
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(10), || format!("took {t:?}"))?;
    Ok(format!("100 x 10^4 events, {queries} window recounts, decay checked every event, {t:.2?}"))
}

fn two_cliques(size: u32, bridge: f64) -> WeightedGraph {
    let mut edges = Vec::new();
    for c in 0..2 {
        for a in 0..size {
            for b in a + 1..size {
                edges.push((c * size + a, c * size + b, 1.0));
            }
        }
    }
    edges.push((size - 1, size, bridge));
    WeightedGraph::from_edges(2 * size, edges)
}

fn contraction_sanity() -> Check {
    let mut worst = 100;
    for size in 3..=20u32 {
        let bridge = 1.0;
        let g = two_cliques(size, bridge);
        let total = g.total_weight();
        let mut good = 0;
        for seed in 0..100 {
            let c = contract_once(&g, 10, &mut ChaCha8Rng::seed_from_u64(seed), VoteMode::NormalizedWeight);
            let intra: f64 = g
                .edges()
                .filter(|&(u, v, _)| c.map[u as usize] == c.map[v as usize])
                .map(|(_, _, w)| w)
                .sum();
            ensure(c.graph.total_weight() + intra == total, || {
                format!("clique size {size} seed {seed}: weight not conserved")
            })?;
            let edges: Vec<_> = c.graph.edges().collect();
            if c.graph.num_nodes() == 2 && edges == vec![(0, 1, bridge)] {
                good += 1;
            }
        }
        worst = worst.min(good);
        ensure(good >= 95, || format!("clique size {size}: only {good}/100 seeds gave two supernodes"))?;
    }
    Ok(format!("worst clique size: {worst}/100 seeds"))
}

fn determinism() -> Check {
    let spec = SyntheticSpec {
        num_variables: 100,
        ..Default::default()
    };
    let mut gen = Generator::new(spec, 4);
    let formula = gen.formula(300);
    let events = gen.proof(1000, 0.3);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<Vec<(String, Vec<u8>)>, String> {
        let out = dir.path().join(name);
        let config = SessionConfig {
            layout: LayoutConfig {
                iterations: 200,
                seed: 17,
                ..Default::default()
            },
            contraction: clauseviz_core::contraction::ContractionConfig {
                target_size: 40,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut session = Session::replay(&formula, events.clone(), config).map_err(|e| e.to_string())?;
        let opts = ExportOptions {
            frames: 20,
            relayout_every: Some(8),
            format: ImageFormat::Svg,
            style: RenderStyle {
                width: 640,
                height: 480,
                ..Default::default()
            },
            ..Default::default()
        };
        export_sequence(&mut session, &out, &opts).map_err(|e| e.to_string())?;
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .map_err(|e| e.to_string())?
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        Ok(files)
    };
    let a = run("a")?;
    let b = run("b")?;
    ensure(a.len() == 21, || format!("expected 20 frames and a manifest, found {} files", a.len()))?;
    ensure(a == b, || "outputs differ between runs".into())?;
    Ok(format!("{} files byte-identical across two runs", a.len()))
}

fn seek_equivalence() -> Check {
    let start = Instant::now();
    let spec = SyntheticSpec {
        num_variables: 1000,
        community_size: 40,
        max_len: 12,
        ..Default::default()
    };
    let mut gen = Generator::new(spec, 6);
    let formula = gen.formula(3000);
    let events = gen.proof(50_000, 0.35);
    let config = SessionConfig {
        checkpoint_interval: 10_000,
        layout: LayoutConfig {
            iterations: 20,
            ..Default::default()
        },
        heat: HeatConfig {
            mode: HeatMode::Decay,
            k: 5000,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut session = Session::replay(&formula, events, config).map_err(|e| e.to_string())?;
    // Visit the end first so every checkpoint exists, then jump around.
    session.seek(50_000).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut targets: Vec<u64> = (0..18).map(|_| rng.gen_range(0..=50_000)).collect();
    targets.extend([15_000, 0]);
    for &t in &targets {
        session.seek(t).map_err(|e| e.to_string())?;
        let (g, h) = session.scratch_state(t).map_err(|e| e.to_string())?;
        weights_close(&session.graph().graph, &g.graph, 1e-9).map_err(|e| format!("seek({t}): {e}"))?;
        ensure(session.graph().live == g.live, || format!("seek({t}): live clauses differ"))?;
        ensure(session.heat() == &h, || format!("seek({t}): heat differs"))?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(30), || format!("took {t:?}"))?;
    Ok(format!("20 seeks over 5*10^4 events in {t:.2?}"))
}

fn wire_round_trip() -> Check {
    let start = Instant::now();
    let lit = |v: i32| Literal::new(v).unwrap();
    let mut bytes = Vec::new();
    encode_message(&WireMessage::AddClause(vec![lit(3), lit(-3)]), &mut bytes);
    ensure(bytes == [0x01, 0x06, 0x07, 0x00], || format!("[3, -3] encoded as {bytes:02x?}"))?;
    bytes.clear();
    encode_message(&WireMessage::AddClause(vec![lit(100)]), &mut bytes);
    ensure(bytes == [0x01, 0xC8, 0x01, 0x00], || format!("[100] encoded as {bytes:02x?}"))?;
    ensure(
        decode_message(&[0x03], 64).map_err(|e| e.to_string())? == Decoded::Message(WireMessage::Terminate, 1),
        || "terminate".into(),
    )?;
    ensure(
        decode_message(&[0x01, 0x00], 64).map_err(|e| e.to_string())? == Decoded::Message(WireMessage::AddClause(vec![]), 2),
        || "empty clause".into(),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut buf = Vec::new();
    for i in 0..100_000 {
        let len = rng.gen_range(0..=30);
        let lits: Vec<Literal> = (0..len)
            .map(|_| {
                let bits: u32 = rng.gen_range(1..31);
                let mag = if rng.gen_bool(0.05) { i32::MAX } else { rng.gen_range(1..=1 << bits) };
                lit(if rng.gen_bool(0.5) { mag } else { -mag })
            })
            .collect();
        let msg = if i % 2 == 0 { WireMessage::AddClause(lits) } else { WireMessage::DeleteClause(lits) };
        buf.clear();
        encode_message(&msg, &mut buf);
        match decode_message(&buf, usize::MAX).map_err(|e| e.to_string())? {
            Decoded::Message(back, used) if back == msg && used == buf.len() => {}
            other => return Err(format!("clause {i}: decoded {other:?}")),
        }
    }

    let spec = SyntheticSpec {
        num_variables: 5000,
        ..Default::default()
    };
    let events = Generator::new(spec, 9).proof(100_000, 0.3);
    let (tx, rx) = mpsc::sync_channel(4096);
    let listener = consumer_listener("127.0.0.1:0", tx, ListenerOptions::default()).map_err(|e| e.to_string())?;
    let addr = listener.local_addr();
    let steps: Vec<Result<ProofStep, std::io::Error>> = events
        .iter()
        .map(|e| {
            Ok(ProofStep {
                kind: e.kind,
                literals: e.body.literals().to_vec(),
            })
        })
        .collect();
    let producer = thread::spawn(move || producer_session(steps, addr, ProducerOptions::default()));
    let mut received = Vec::with_capacity(events.len());
    loop {
        match rx.recv_timeout(Duration::from_secs(10)).map_err(|e| format!("consumer stalled: {e}"))? {
            Ingest::Hello { .. } => {}
            Ingest::Event(e) => received.push(e),
            Ingest::Closed { clean, error } => {
                ensure(clean, || format!("connection closed uncleanly: {error:?}"))?;
                break;
            }
        }
    }
    producer.join().map_err(|_| "producer panicked".to_string())?.map_err(|e| e.to_string())?;
    listener.shutdown();
    ensure(received.len() == events.len(), || format!("received {} of {} events", received.len(), events.len()))?;
    for (i, (a, b)) in events.iter().zip(&received).enumerate() {
        ensure(a.kind == b.kind && a.body == b.body && b.sequence == i as u64, || format!("event {i} differs"))?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(10), || format!("took {t:?}"))?;
    Ok(format!("10^5 codec round trips and 10^5 events over loopback in {t:.2?}"))
}

fn throughput() -> Check {
    let spec = SyntheticSpec {
        num_variables: 10_000,
        community_size: 50,
        max_len: 10,
        ..Default::default()
    };
    let mut gen = Generator::new(spec, 10);
    let formula = gen.formula(40_000);
    let events = gen.proof(1_000_000, 0.45);
    let config = SessionConfig {
        layout: LayoutConfig {
            iterations: 10,
            ..Default::default()
        },
        chunk: ChunkPolicy::Drain,
        ..Default::default()
    };
    let mut session = Session::new(&formula, config).map_err(|e| e.to_string())?;
    session.play();

    let (tx, rx) = mpsc::sync_channel(1 << 16);
    let listener = consumer_listener("127.0.0.1:0", tx, ListenerOptions::default()).map_err(|e| e.to_string())?;
    let addr = listener.local_addr();
    let steps: Vec<Result<ProofStep, std::io::Error>> = events
        .into_iter()
        .map(|e| {
            Ok(ProofStep {
                kind: e.kind,
                literals: e.body.literals().to_vec(),
            })
        })
        .collect();
    let start = Instant::now();
    let producer = thread::spawn(move || producer_session(steps, addr, ProducerOptions::default()));
    let frame_budget = Duration::from_millis(33);
    let mut frames = 0u64;
    let mut done = false;
    while !done {
        let deadline = Instant::now() + frame_budget;
        while let Some(left) = deadline.checked_duration_since(Instant::now()) {
            match rx.recv_timeout(left) {
                Ok(msg) => {
                    done = matches!(msg, Ingest::Closed { .. });
                    session.ingest(msg).map_err(|e| e.to_string())?;
                    if done {
                        break;
                    }
                }
                Err(mpsc::RecvTimeoutError::Timeout) => break,
                Err(e) => return Err(e.to_string()),
            }
        }
        session.tick().map_err(|e| e.to_string())?;
        frames += 1;
    }
    let t = start.elapsed();
    producer.join().map_err(|_| "producer panicked".to_string())?.map_err(|e| e.to_string())?;
    listener.shutdown();
    ensure(session.cursor() == 1_000_000, || format!("applied {} events", session.cursor()))?;
    let rate = 1e6 / t.as_secs_f64();
    ensure(rate >= 1e4, || format!("{rate:.0} events/s"))?;
    Ok(format!("{rate:.0} events/s over 10^6 events, {frames} frames"))
}

fn layout_scale() -> Check {
    let n = 30_000u32;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut edges = Vec::new();
    for v in 1..n {
        // A random tree plus local chords: connected, sparse, clustered.
        edges.push((rng.gen_range(0..v), v, rng.gen_range(0.1..2.0)));
        if v >= 10 {
            edges.push((v - rng.gen_range(1..10), v, rng.gen_range(0.1..2.0)));
        }
    }
    let g = WeightedGraph::from_edges(n, edges);
    let start = Instant::now();
    let out = layout(&g, &LayoutConfig::default(), None).map_err(|e| e.to_string())?;
    let t = start.elapsed();
    ensure(out.iterations_run == 500, || format!("ran {} iterations", out.iterations_run))?;
    ensure(t < Duration::from_secs(60), || format!("took {t:?}"))?;
    Ok(format!("{n} nodes, {} edges, 500 iterations in {t:.2?}", g.edge_count()))
}

fn layout_physics() -> Check {
    let g = WeightedGraph::from_edges(3, [(0, 1, 10.0), (1, 2, 0.1)]);
    let mut ok = 0;
    for seed in 0..20 {
        let p = layout(&g, &LayoutConfig { seed, ..Default::default() }, None)
            .map_err(|e| e.to_string())?
            .positions;
        let d = |a: u32, b: u32| {
            let (x, y) = (p.get(a), p.get(b));
            (x[0] - y[0]).hypot(x[1] - y[1])
        };
        if d(0, 1) < d(1, 2) {
            ok += 1;
        }
    }
    ensure(ok >= 18, || format!("{ok}/20 seeds"))?;
    Ok(format!("{ok}/20 seeds"))
}

fn main() {
    type Entry = (&'static str, fn() -> Check);
    let checks: [Entry; 10] = [
        ("reduction laws", reduction_laws),
        ("incremental vs scratch", incremental_oracle),
        ("heat oracles", heat_oracles),
        ("contraction sanity", contraction_sanity),
        ("render determinism", determinism),
        ("seek equivalence", seek_equivalence),
        ("wire round trip", wire_round_trip),
        ("ingest throughput", throughput),
        ("layout scale", layout_scale),
        ("layout physics", layout_physics),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
