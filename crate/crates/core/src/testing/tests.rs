use super::*;
use crate::graph::{c_label, Bijection};
use crate::rng::StreamRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

fn gnp(n: usize, p: f64, rng: &mut StreamRng) -> Graph {
    loop {
        let mut g = Graph::empty(n);
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(p) {
                    g.add_edge(u, v).unwrap();
                }
            }
        }
        if g.is_connected() {
            return g;
        }
    }
}

fn shuffled(g: &Graph, rng: &mut StreamRng) -> (Graph, Bijection) {
    let mut perm: Vec<usize> = (0..g.n()).collect();
    perm.shuffle(rng);
    let pi = Bijection::new(perm).unwrap();
    (g.relabel(&pi), pi)
}

#[test]
fn params_follow_formulas() {
    let p = TestParams::full(24, 0.3).unwrap();
    assert_eq!(full_s(24, 0.3), 85);
    assert_eq!(p.s, 24);
    let d = TestParams::desk(24, 0.3, 3, None).unwrap();
    assert_eq!(d.t, 255);
    assert!((d.threshold() - 114.75).abs() < 1e-9);
    assert!(TestParams::full(24, 1.5).is_err());
    assert!(TestParams::desk(4, 0.3, 5, None).is_err());
}

#[test]
fn sequence_counts() {
    let g = Graph::empty(4);
    assert_eq!(enumerate_sequences(&g, 2).unwrap().count(), 12);
    let perms: Vec<_> = enumerate_sequences(&Graph::empty(3), 3).unwrap().collect();
    assert_eq!(perms.len(), 6);
    assert_eq!(perms[0], vec![0, 1, 2]);
    assert_eq!(perms[5], vec![2, 1, 0]);
    assert_eq!(enumerate_sequences(&g, 0).unwrap().count(), 1);
    assert!(enumerate_sequences(&g, 5).is_err());
}

#[test]
fn pruning_is_exact() {
    let mut rng = StreamRng::seed_from_u64(2);
    for trial in 0..5 {
        let gu = gnp(8, 0.5, &mut rng);
        let (gk, _) = shuffled(&gu, &mut rng);
        let c = NodeSeq::new(vec![1, 4, 6], 8).unwrap();
        let c_labels: Vec<_> = (0..3).map(|i| c_label(&gu, &c, c.get(i)).unwrap()).collect();
        let pruned: Vec<_> = enumerate_sequences_pruned(&gk, &c_labels).unwrap().collect();
        let full: Vec<_> = enumerate_sequences(&gk, 3)
            .unwrap()
            .filter(|p| {
                let p = NodeSeq::new(p.clone(), 8).unwrap();
                (0..3).all(|i| c_labels[i] == c_label(&gk, &p, p.get(i)).unwrap())
            })
            .collect();
        assert_eq!(pruned, full);
        let pairs = draw_pairs(8, 60, &mut rng);
        let know = RootKnowledge::local(&gu, &c, pairs, false).unwrap();
        let a = root_search(&gk, &know, 0.3 * 1.5 * 60.0, trial, true).unwrap();
        let b = root_search(&gk, &know, 0.3 * 1.5 * 60.0, trial, false).unwrap();
        assert_eq!(a.accepted, b.accepted);
        assert!(a.tried <= b.tried);
    }
}

#[test]
fn image_of_anchors_passes_label_checks() {
    let mut rng = StreamRng::seed_from_u64(5);
    for _ in 0..20 {
        let gu = gnp(10, 0.5, &mut rng);
        let (gk, pi) = shuffled(&gu, &mut rng);
        let c = NodeSeq::new(vec![0, 3, 7], 10).unwrap();
        let know = RootKnowledge::local(&gu, &c, draw_pairs(10, 40, &mut rng), true).unwrap();
        let check = sequence_check(&gk, &know, &c.map(&pi), f64::INFINITY, &mut rng).unwrap();
        assert!(check.passed());
    }
}

#[test]
fn wrong_anchor_label_fails_first() {
    // c_1 = 0 has the label 01 (adjacent to c_2 = 1); in the empty graph nothing is
    let gu = Graph::path(4);
    let gk = Graph::empty(4);
    let c = NodeSeq::new(vec![0, 1], 4).unwrap();
    let know = RootKnowledge::local(&gu, &c, vec![(2, 3)], false).unwrap();
    let p = NodeSeq::new(vec![0, 1], 4).unwrap();
    let mut rng = StreamRng::seed_from_u64(0);
    assert_eq!(sequence_check(&gk, &know, &p, 10.0, &mut rng).unwrap(), Check::LabelMismatch);
}

#[test]
fn singleton_classes_give_identity() {
    let g = Graph::path(8);
    let c = NodeSeq::new((0..8).collect(), 8).unwrap();
    let mut rng = StreamRng::seed_from_u64(1);
    let know = RootKnowledge::local(&g, &c, draw_pairs(8, 50, &mut rng), false).unwrap();
    match sequence_check(&g, &know, &c, 0.0, &mut rng).unwrap() {
        Check::Scored { mismatches, pass, f } => {
            assert_eq!(mismatches, 0);
            assert!(pass);
            assert!(f.iter().all(|(a, b)| a == b));
        }
        other => panic!("{other:?}"),
    }
}

fn chi_square(a: &[usize], b: &[usize]) -> f64 {
    let (na, nb) = (a.iter().sum::<usize>() as f64, b.iter().sum::<usize>() as f64);
    a.iter()
        .zip(b)
        .filter(|(x, y)| **x + **y > 0)
        .map(|(&x, &y)| {
            let tot = (x + y) as f64;
            let (ea, eb) = (tot * na / (na + nb), tot * nb / (na + nb));
            (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb
        })
        .sum()
}

#[test]
fn f_does_not_depend_on_the_sample() {
    // one anchor, 0 adjacent to 1..=4: label-1 class {1,2,3,4}, zero class {0,5}
    let g = Graph::from_edges(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (1, 5)]).unwrap();
    let c = NodeSeq::new(vec![0], 6).unwrap();
    let p = c.clone();
    let first = RootKnowledge::local(&g, &c, vec![(1, 2), (3, 4)], false).unwrap();
    let second = RootKnowledge::local(&g, &c, vec![(4, 1), (2, 5), (3, 3)], false).unwrap();
    let mut counts = [[0usize; 6]; 2];
    for (which, know) in [&first, &second].into_iter().enumerate() {
        for seed in 0..10_000u64 {
            let mut rng = match_rng(seed + 77 * which as u64 * 1_000_003, p.as_slice());
            if let Check::Scored { f, .. } = sequence_check(&g, know, &p, f64::INFINITY, &mut rng).unwrap() {
                counts[which][f[&1]] += 1;
            }
        }
    }
    assert_eq!(counts[0].iter().sum::<usize>(), 10_000);
    // 3 degrees of freedom, 0.999 quantile 16.27
    assert!(chi_square(&counts[0], &counts[1]) < 16.27, "{counts:?}");
    // the stream f draws from is fixed by (seed, P) alone
    let mut a = match_rng(9, &[2, 0]);
    let mut b = match_rng(9, &[2, 0]);
    assert_eq!(a.gen::<u64>(), b.gen::<u64>());
}

#[test]
fn end_to_end_isomorphic_and_far() {
    let mut rng = StreamRng::seed_from_u64(11);
    let gu = gnp(12, 0.5, &mut rng);
    let (gk, _) = shuffled(&gu, &mut rng);
    let params = TestParams::desk(12, 0.3, 2, None).unwrap();
    let out = run_tester(&gu, &gk, &params, NetworkConfig::congest(12, 4)).unwrap();
    assert!(out.accept);
    assert_eq!(out.transcript.unanimous(), Some(ACCEPT));
    assert_eq!(out.sample.pairs.len(), params.t);
    for (k, &(i, j)) in out.sample.pairs.iter().enumerate() {
        assert_eq!(out.sample.answers[k], gu.has_edge(i, j));
    }
    let far = Graph::path(12);
    let dense = Graph::complete(12);
    let out = run_tester(&dense, &far, &params, NetworkConfig::congest(12, 4)).unwrap();
    assert!(!out.accept);
    assert_eq!(out.transcript.unanimous(), Some(REJECT));
}
