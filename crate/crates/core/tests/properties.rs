use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use proptest::prelude::*;

use melsim::harness::parse_config;
use melsim::kernel::{advance_sequential, init_simulation, EntityId, KernelConfig, RandomStream, RunOptions, Trace};
use melsim::migration::{evaluate_migrations, InteractionMatrix, MigrationParams};
use melsim::models::ChatterModel;
use melsim::multilevel::{coarsen_state, place_vehicles, refine_state, CoarseLink, TransferParams};
use melsim::pads::{advance_parallel, decode_body, encode_frame, make_partition, split_frame, Directory, FrameTag, Move, PartitionStrategy};
use melsim::traffic::{
    betweenness, betweenness_exact, emission_rate, split_offer, wireless_neighbors, CoarseVehicle, EdgeSpec, EmissionCoeffs, LinkState,
    Node, RoadGraph,
};
use melsim::traffic::emissions::step_integral;
use num_traits::ToPrimitive;

const TP: TransferParams = TransferParams {
    cell_length_m: 7.5,
    fine_dt_s: 1.0,
    vmax: 5,
};

fn strategy() -> impl Strategy<Value = PartitionStrategy> {
    prop_oneof![Just(PartitionStrategy::RoundRobin), Just(PartitionStrategy::Block)]
}

fn small_graph() -> impl Strategy<Value = RoadGraph> {
    (2u64..8)
        .prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n, 1u32..4, any::<bool>()), 0..20)))
        .prop_map(|(n, edges)| {
            let nodes = (0..n).map(|id| Node { id, lat: 0.0, lon: 0.0 }).collect();
            let edges = edges
                .into_iter()
                .filter(|(a, b, _, _)| a != b)
                .enumerate()
                .map(|(i, (from, to, len, oneway))| EdgeSpec {
                    id: i as u64,
                    from,
                    to,
                    length_m: f64::from(len) * 50.0,
                    oneway,
                    lanes: 1,
                    capacity_per_step: 1,
                })
                .collect();
            RoadGraph::from_parts(nodes, edges).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_streams_are_pure_functions(seed: u64, entity: u64, step: u64, n in 1u64..1000) {
        let mut a = RandomStream::new(seed, EntityId(entity), step);
        let mut b = RandomStream::new(seed, EntityId(entity), step);
        for _ in 0..16 {
            let x = a.below(n);
            prop_assert!(x < n);
            prop_assert_eq!(x, b.below(n));
            let u = a.uniform();
            prop_assert!((0.0..1.0).contains(&u));
            prop_assert_eq!(u.to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn frames_round_trip(tag in 0u8..4, body: Vec<u64>) {
        let tag = [FrameTag::Model, FrameTag::Eos, FrameTag::Control, FrameTag::RegionPublish][tag as usize];
        let f = encode_frame(tag, &body).unwrap();
        let (t, b) = split_frame(&f).unwrap();
        prop_assert_eq!(t, tag);
        prop_assert_eq!(decode_body::<Vec<u64>>(b).unwrap(), body);
        // any truncation is rejected
        prop_assert!(split_frame(&f[..f.len() - 1]).is_err());
    }

    #[test]
    fn partitions_cover_and_balance(n in 1usize..200, lps in 1usize..9, s in strategy()) {
        let ids: Vec<_> = (0..n as u64).map(EntityId).collect();
        let p = make_partition(&ids, lps, s).unwrap();
        prop_assert_eq!(p.assignment.len(), n);
        let sizes = p.sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn directory_moves_keep_single_owner(n in 1u64..60, moves in prop::collection::vec((0u64..60, 0usize..4), 0..40)) {
        let ids: Vec<_> = (0..n).map(EntityId).collect();
        let mut dir = Directory::new(&make_partition(&ids, 4, PartitionStrategy::RoundRobin).unwrap());
        let mut expected: BTreeMap<EntityId, usize> = ids.iter().map(|&e| (e, dir.owner(e).unwrap())).collect();
        for (e, to) in moves {
            let e = EntityId(e % n);
            let from = expected[&e];
            dir.apply_moves(&[Move { entity: e, from, to }]).unwrap();
            expected.insert(e, to);
        }
        for (e, lp) in &expected {
            prop_assert_eq!(dir.owner(*e), Some(*lp));
        }
        prop_assert_eq!(dir.loads().iter().sum::<usize>(), n as usize);
    }

    #[test]
    fn migration_plans_respect_cap_cooldown_and_budget(
        traffic in prop::collection::vec((0u64..40, 0usize..3, 1u64..20), 0..120),
        cooldown in 0u64..30,
        beta in 0.0f64..0.5,
        max_moves in 0usize..10,
        moved in prop::collection::btree_map(0u64..40, 0u64..50, 0..10),
    ) {
        let ids: Vec<_> = (0..40).map(EntityId).collect();
        let dir = Directory::new(&make_partition(&ids, 3, PartitionStrategy::Block).unwrap());
        let mut m = InteractionMatrix::new(10);
        for (src, lp, count) in traffic {
            m.record_count(EntityId(src), lp, 45, count);
        }
        let params = MigrationParams { beta, cooldown, max_per_boundary: max_moves, ..MigrationParams::default() };
        let last_moved: BTreeMap<_, _> = moved.into_iter().map(|(e, b)| (EntityId(e), b)).collect();
        let plan = evaluate_migrations(&m, &dir, &params, 50, &last_moved, &BTreeSet::new());
        prop_assert!(plan.moves.len() <= max_moves);
        let mut loads = dir.loads();
        let cap = (1.0 + beta) * 40.0 / 3.0;
        let mut seen = BTreeSet::new();
        for mv in &plan.moves {
            prop_assert!(seen.insert(mv.entity), "entity moved twice in one plan");
            prop_assert!(mv.external_ratio.unwrap() > params.theta);
            prop_assert!(last_moved.get(&mv.entity).is_none_or(|&b| 50 - b >= cooldown));
            loads[mv.to] += 1;
            loads[mv.from] -= 1;
            prop_assert!(loads[mv.to] as f64 <= cap);
        }
    }

    #[test]
    fn offers_split_all_free_space(free in 0u32..100, k in 1usize..6, step: u64) {
        let upstream: Vec<u32> = (0..k as u32).collect();
        let offers = split_offer(free, &upstream, step);
        prop_assert_eq!(offers.iter().map(|o| o.1).sum::<u32>(), free);
        let base = free / k as u32;
        prop_assert!(offers.iter().all(|o| o.1 == base || o.1 == base + 1));
    }

    #[test]
    fn placement_is_spread_and_ordered(cells in 1u32..300, n in 0u32..300) {
        let n = n.min(cells);
        let slots = place_vehicles(n, cells).unwrap();
        prop_assert_eq!(slots.len() as u32, n);
        prop_assert!(slots.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(slots.iter().all(|&c| c < cells));
    }

    #[test]
    fn refine_then_coarsen_preserves_links(
        links in prop::collection::vec((1u32..60, 0u32..60, 0.0f64..40.0, 1u32..4), 1..6),
    ) {
        let coarse: Vec<CoarseLink> = links
            .iter()
            .enumerate()
            .map(|(arc, &(cells, n, speed, cap))| {
                let n = n.min(cells);
                CoarseLink {
                    state: LinkState { edge_id: arc as u64, arc: arc as u32, count: n, queued: 0, mean_speed_mps: speed, free_flow_steps: 1 },
                    cells,
                    capacity_per_step: cap,
                    fifo: (0..n).map(|i| CoarseVehicle { tag: (arc as u64) << 32 | u64::from(i), entered: 0, dest: 0 }).collect(),
                }
            })
            .collect();
        let fine = refine_state(&coarse, &TP, EntityId(1 << 40)).unwrap();
        let back = coarsen_state(&fine.links, &TP, 6, 6).unwrap();
        let quantum = TP.cell_length_m / TP.fine_dt_s;
        for (c, (state, fifo)) in coarse.iter().zip(&back) {
            prop_assert_eq!(state.count, c.state.count);
            let tags: Vec<u64> = fifo.iter().map(|v| v.tag).collect();
            let orig: Vec<u64> = c.fifo.iter().map(|v| v.tag).collect();
            prop_assert_eq!(tags, orig, "FIFO order must survive the round trip");
            if c.state.count > 0 {
                let clamped = c.state.mean_speed_mps.min(f64::from(TP.vmax) * quantum);
                prop_assert!((state.mean_speed_mps - clamped).abs() <= quantum / 2.0 + 1e-9);
            }
        }
        prop_assert!(coarsen_state(&fine.links, &TP, 5, 6).is_err());
    }

    #[test]
    fn float_betweenness_matches_exact(g in small_graph()) {
        let f = betweenness(&g);
        let q = betweenness_exact(&g);
        for (a, b) in f.scores.iter().zip(&q) {
            prop_assert!((a - b.to_f64().unwrap()).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn wireless_neighbors_match_all_pairs(pts in prop::collection::vec((0.0f64..500.0, 0.0f64..500.0), 0..60), range in 1.0f64..200.0) {
        let adj = wireless_neighbors(&pts, range);
        for i in 0..pts.len() {
            let brute: Vec<usize> = (0..pts.len())
                .filter(|&j| j != i && ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)) <= range * range)
                .collect();
            prop_assert_eq!(&adj[i], &brute);
        }
    }

    #[test]
    fn emission_steps_compose(v0 in 0.0f64..30.0, v1 in 0.0f64..30.0, dt in 0.1f64..3.0) {
        let c = EmissionCoeffs::default();
        let mid = 0.5 * (v0 + v1);
        let whole = step_integral(v0, v1, dt, &c);
        let halves = step_integral(v0, mid, dt / 2.0, &c) + step_integral(mid, v1, dt / 2.0, &c);
        prop_assert!((whole - halves).abs() <= 1e-12 * whole.abs().max(1.0));
        let lo = emission_rate(v0.min(v1), &c) * dt;
        let hi = emission_rate(v0.max(v1), &c) * dt;
        prop_assert!(whole >= lo - 1e-12 && whole <= hi + 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected_anywhere(key in "[a-z]{3,8}", at in 0usize..4) {
        prop_assume!(!["seed", "horizon", "n_lps", "output", "graph", "vehicles", "closed", "demand", "trigger", "nasch", "emissions", "top_k", "theta", "beta", "window", "cooldown", "mode", "vmax"].contains(&key.as_str()));
        let base = r#"{"seed": 1, "horizon": 5, "migration": {}, "scenario": {"graph": "g.json", "nasch": {}}}"#;
        let mut doc: serde_json::Value = serde_json::from_str(base).unwrap();
        let (target, path) = match at {
            0 => (&mut doc, key.clone()),
            1 => (&mut doc["migration"], format!("migration.{key}")),
            2 => (&mut doc["scenario"], format!("scenario.{key}")),
            _ => (&mut doc["scenario"]["nasch"], format!("scenario.nasch.{key}")),
        };
        target.as_object_mut().unwrap().insert(key.clone(), serde_json::json!(1));
        let e = parse_config(&doc.to_string(), Path::new(".")).unwrap_err();
        prop_assert!(e.0.iter().any(|m| m.starts_with(&format!("{path}: unknown key"))), "{}", e);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn parallel_matches_sequential_for_random_configs(
        seed: u64,
        n in 4u64..40,
        lps in 1usize..6,
        s in strategy(),
        latency in 1u64..4,
        migrate: bool,
    ) {
        let model = ChatterModel { max_latency: latency, publish_every: Some(4), ..ChatterModel::two_cliques(n) };
        let st = init_simulation(&KernelConfig { seed }, model.entities()).unwrap();
        let mut opts = RunOptions::new(40);
        opts.topics = model.topics();
        let seq = advance_sequential(&model, &mut st.clone(), &opts).unwrap();
        opts.migration = migrate.then(MigrationParams::default);
        let p = make_partition(&st.entity_ids(), lps, s).unwrap();
        let par = advance_parallel(&model, &mut st.clone(), &p, &opts).unwrap();
        prop_assert_eq!(par.trace.first_divergence(&seq.trace), None);
        prop_assert_eq!(par.counters.causality_violations, 0);
        prop_assert!(par.counters.max_eos_spread <= 1);
    }

    #[test]
    fn trace_log_round_trips(seed: u64, horizon in 0u64..20) {
        let model = ChatterModel::two_cliques(8);
        let st = init_simulation(&KernelConfig { seed }, model.entities()).unwrap();
        let r = advance_sequential(&model, &mut st.clone(), &RunOptions::new(horizon)).unwrap();
        let mut buf = Vec::new();
        r.trace.write_binary(&mut buf).unwrap();
        let back = Trace::read_binary(&buf[..]).unwrap();
        prop_assert_eq!(&back, &r.trace);
        prop_assert_eq!(back.final_hash(), r.trace.final_hash());
    }
}
