mod common;

use std::collections::HashSet;

use common::rng;
use crfmatch::lattice::{build_lattice, label_lattice, Lattice, LatticeConfig};
use crfmatch::network::enumerate_paths;
use crfmatch::synth::{
    generate_dataset, generate_network, BehaviorSpec, NoiseSpec, TripSpec, WorldSpec,
};
use crfmatch::trajectory::degrade_sampling;
use crfmatch::{Error, LatticeSite, RoadNetwork, SegmentId, Trajectory};
use rand::Rng;

fn city(rows: usize, jitter: f64) -> RoadNetwork {
    generate_network(&WorldSpec {
        rows,
        cols: rows,
        spacing: 200.0,
        jitter,
        ..Default::default()
    })
    .unwrap()
}

fn trips(net: &RoadNetwork, count: usize, interval: f64) -> Vec<Trajectory> {
    let trips = TripSpec {
        count,
        min_distance: 1000.0,
        ..Default::default()
    };
    generate_dataset(net, &BehaviorSpec::default(), &NoiseSpec::default(), &trips)
        .unwrap()
        .iter()
        .filter_map(|t| degrade_sampling(t, interval).ok())
        .collect()
}

/// All simple, U-turn-free walks from `from` to `to` within `max_length`.
fn dfs(net: &RoadNetwork, from: SegmentId, to: SegmentId, max_length: f64) -> Vec<Vec<SegmentId>> {
    fn go(
        net: &RoadNetwork,
        to: SegmentId,
        max_length: f64,
        seq: &mut Vec<SegmentId>,
        len: f64,
        out: &mut Vec<(f64, Vec<SegmentId>)>,
    ) {
        let last = *seq.last().unwrap();
        if last == to {
            out.push((len, seq.clone()));
            return;
        }
        let seg = net.segment(last).unwrap();
        for &next in net.outgoing(seg.to_node) {
            if Some(next) == seg.twin || seq.contains(&next) {
                continue;
            }
            let l = len + net.segment(next).unwrap().length;
            if l <= max_length {
                seq.push(next);
                go(net, to, max_length, seq, l, out);
                seq.pop();
            }
        }
    }
    let mut out = Vec::new();
    let len = net.segment(from).unwrap().length;
    if len <= max_length {
        go(net, to, max_length, &mut vec![from], len, &mut out);
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    out.into_iter().map(|(_, s)| s).collect()
}

#[test]
fn path_enumeration_matches_dfs_on_a_jittered_city() {
    let net = city(5, 25.0);
    let n = net.segments().len() as u32;
    let mut r = rng(3);
    for _ in 0..150 {
        let from = SegmentId(r.random_range(0..n));
        let to = SegmentId(r.random_range(0..n));
        let max_length = r.random_range(200.0..1400.0);
        let all = dfs(&net, from, to, max_length);
        let got: Vec<_> = enumerate_paths(&net, from, to, max_length, 10_000)
            .unwrap()
            .into_iter()
            .map(|p| p.segment_ids)
            .collect();
        assert_eq!(got, all, "{from} -> {to} within {max_length}");
        let k = r.random_range(1..4);
        let top: Vec<_> = enumerate_paths(&net, from, to, max_length, k)
            .unwrap()
            .into_iter()
            .map(|p| p.segment_ids)
            .collect();
        assert_eq!(top, all[..k.min(all.len())].to_vec());
    }
}

/// States reachable from the first node and able to reach the last one.
fn live_states(lattice: &Lattice) -> Vec<Vec<bool>> {
    let chain = lattice.chain();
    let n = chain.len();
    let mut fwd: Vec<Vec<bool>> = chain
        .state_counts()
        .iter()
        .map(|&k| vec![false; k])
        .collect();
    fwd[0].iter_mut().for_each(|v| *v = true);
    for i in 1..n {
        for c in 0..chain.states(i) {
            fwd[i][c] = chain
                .mask(i - 1)
                .predecessors(c)
                .iter()
                .any(|&r| fwd[i - 1][r]);
        }
    }
    let mut bwd: Vec<Vec<bool>> = chain
        .state_counts()
        .iter()
        .map(|&k| vec![false; k])
        .collect();
    bwd[n - 1].iter_mut().for_each(|v| *v = true);
    for i in (0..n - 1).rev() {
        for r in 0..chain.states(i) {
            bwd[i][r] = chain.mask(i).successors(r).iter().any(|&c| bwd[i + 1][c]);
        }
    }
    fwd.iter()
        .zip(&bwd)
        .map(|(f, b)| f.iter().zip(b).map(|(x, y)| *x && *y).collect())
        .collect()
}

#[test]
fn lattices_are_pruned_consistent_and_bounded() {
    let net = city(8, 30.0);
    let cfg = LatticeConfig::default();
    let mut built = 0;
    for traj in trips(&net, 25, 60.0) {
        let lattice = match build_lattice(&net, &traj, &cfg) {
            Ok(l) => l,
            Err(Error::LatticeConstruction { .. }) => continue,
            Err(e) => panic!("{e}"),
        };
        built += 1;
        let obs = traj.observations();
        assert_eq!(lattice.num_nodes(), 2 * obs.len() - 1);
        assert!(lattice.chain().count_sequences() >= 1.0);
        assert!(live_states(&lattice).iter().flatten().all(|v| *v));
        for (t, set) in lattice.points().iter().enumerate() {
            assert!(!set.states.is_empty() && set.states.len() <= cfg.max_point_states);
            assert!(set.radius >= cfg.radius && set.radius <= cfg.max_radius);
            let ids: HashSet<_> = set.states.iter().map(|s| s.segment).collect();
            assert_eq!(ids.len(), set.states.len());
            assert_eq!(lattice.chain().states(2 * t), set.states.len());
            for s in &set.states {
                assert!(s.projection.distance <= set.radius * (1.0 + 1e-9));
            }
        }
        for (t, set) in lattice.paths().iter().enumerate() {
            assert!(!set.states.is_empty());
            let mut per_pair = std::collections::HashMap::new();
            for p in &set.states {
                *per_pair
                    .entry((p.start_segment(), p.end_segment()))
                    .or_insert(0) += 1;
            }
            assert!(per_pair.values().all(|&k| k <= cfg.max_paths));
            let into = lattice.chain().mask(2 * t);
            let out = lattice.chain().mask(2 * t + 1);
            for (j, path) in set.states.iter().enumerate() {
                for (i, s) in lattice.points()[t].states.iter().enumerate() {
                    assert_eq!(into.allowed(i, j), s.segment == path.start_segment());
                }
                for (i, s) in lattice.points()[t + 1].states.iter().enumerate() {
                    assert_eq!(out.allowed(j, i), s.segment == path.end_segment());
                }
            }
        }
        assert_eq!(build_lattice(&net, &traj, &cfg).unwrap(), lattice);
    }
    assert!(built >= 15);
}

#[test]
fn labels_exist_exactly_when_truth_is_in_the_lattice() {
    let net = city(8, 30.0);
    let cfg = LatticeConfig {
        max_point_states: 3,
        max_paths: 2,
        ..Default::default()
    };
    let (mut labeled, mut missing) = (0, 0);
    for traj in trips(&net, 40, 90.0) {
        let Ok(lattice) = build_lattice(&net, &traj, &cfg) else {
            continue;
        };
        let truth = traj.truth().unwrap();
        let mut first_missing = None;
        for t in 0..traj.len() {
            if !lattice.points()[t]
                .states
                .iter()
                .any(|s| s.segment == truth.point_labels[t])
            {
                first_missing = Some(LatticeSite::Observation(t));
                break;
            }
            if t + 1 < traj.len()
                && !lattice.paths()[t]
                    .states
                    .iter()
                    .any(|p| p.segment_ids == truth.path_labels[t])
            {
                first_missing = Some(LatticeSite::Gap(t));
                break;
            }
        }
        match (label_lattice(&lattice, truth), first_missing) {
            (Ok(labels), None) => {
                labeled += 1;
                assert!(lattice.chain().is_consistent(&labels));
                for (t, &l) in labels.iter().step_by(2).enumerate() {
                    assert_eq!(lattice.points()[t].states[l].segment, truth.point_labels[t]);
                }
            }
            (Err(Error::Unlabelable { site, .. }), Some(want)) => {
                missing += 1;
                assert_eq!(site, want);
            }
            (got, want) => panic!("label_lattice gave {got:?}, scan found {want:?}"),
        }
    }
    assert!(
        labeled > 0 && missing > 0,
        "{labeled} labeled, {missing} missing"
    );
}

#[test]
fn a_far_away_observation_fails_construction() {
    let net = city(4, 0.0);
    let traj = &trips(&net, 1, 30.0)[0];
    let mut obs = traj.observations().to_vec();
    obs[1].position.x += 5_000.0;
    let broken = Trajectory::new(traj.id(), obs, None).unwrap();
    match build_lattice(&net, &broken, &LatticeConfig::default()) {
        Err(Error::LatticeConstruction { site, .. }) => {
            assert_eq!(site, LatticeSite::Observation(1))
        }
        other => panic!("{other:?}"),
    }
}
