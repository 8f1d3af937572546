use super::*;
use crate::instances::gnp_connected;
use rand::SeedableRng;

fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    gnp_connected(n, p, &mut StreamRng::seed_from_u64(seed)).unwrap()
}

struct Silent;

impl QueryTester for Silent {
    fn next(&mut self, _: Option<Answer>) -> Next {
        Next::Verdict(true)
    }
}

/// Asks the listed queries and records what came back.
struct Recorder {
    queries: Vec<Query>,
    seen: Vec<Answer>,
    declare: bool,
}

impl QueryTester for Recorder {
    fn next(&mut self, answer: Option<Answer>) -> Next {
        self.seen.extend(answer);
        match self.queries.get(self.seen.len()) {
            Some(&q) => Next::Ask(q),
            None => Next::Verdict(true),
        }
    }

    fn schedule(&self) -> Option<Vec<Query>> {
        self.declare.then(|| self.queries.clone())
    }
}

fn mixed_queries(n: usize, rng: &mut StreamRng) -> Vec<Query> {
    (0..40)
        .map(|k| {
            let u = rng.gen_range(0..n);
            match k % 3 {
                0 => Query::Adjacency(u, rng.gen_range(0..n)),
                1 => Query::Incidence(u, rng.gen_range(0..5)),
                _ => Query::Degree(u),
            }
        })
        .collect()
}

#[test]
fn oracle_counts_and_answers() {
    let g = Graph::star(5);
    let mut o = QueryOracle::new(&g);
    assert_eq!(o.ask(Query::Degree(0)).unwrap(), Answer::Degree(4));
    assert_eq!(o.ask(Query::Adjacency(1, 2)).unwrap(), Answer::Bit(false));
    assert_eq!(o.ask(Query::Incidence(0, 2)).unwrap(), Answer::Neighbor(Some(3)));
    assert_eq!(o.ask(Query::Incidence(1, 1)).unwrap(), Answer::Neighbor(None));
    assert_eq!(o.count(), 4);
    assert!(o.ask(Query::Degree(5)).is_err());
    assert_eq!(o.count(), 4);
}

#[test]
fn silent_tester_costs_one_sweep() {
    let g = Graph::path(9);
    let out = run_adaptive(&mut Silent, &g, 0, NetworkConfig::congest(9, 0)).unwrap();
    assert_eq!(out.queries, 0);
    assert!(out.rounds <= out.depth + 2, "{}", out.rounds);
    assert_eq!(out.transcript.unanimous(), Some(ACCEPT));
}

#[test]
fn answers_match_the_graph() {
    let mut rng = StreamRng::seed_from_u64(4);
    for seed in 0..5 {
        let g = random_graph(16, 0.25, seed);
        let queries = mixed_queries(16, &mut rng);
        let mut central = Recorder {
            queries: queries.clone(),
            seen: Vec::new(),
            declare: true,
        };
        run_central(&mut central, &g).unwrap();
        let mut adaptive = Recorder {
            queries: queries.clone(),
            seen: Vec::new(),
            declare: false,
        };
        run_adaptive(&mut adaptive, &g, 3, NetworkConfig::congest(16, seed)).unwrap();
        let mut batch = Recorder {
            queries,
            seen: Vec::new(),
            declare: true,
        };
        run_nonadaptive(&mut batch, &g, 3, NetworkConfig::congest(16, seed)).unwrap();
        assert_eq!(adaptive.seen, central.seen);
        assert_eq!(batch.seen, central.seen);
    }
}

#[test]
fn undeclared_query_is_a_contract_error() {
    struct Liar(bool);
    impl QueryTester for Liar {
        fn next(&mut self, answer: Option<Answer>) -> Next {
            match answer {
                None => Next::Ask(Query::Degree(1)),
                Some(_) => Next::Verdict(true),
            }
        }
        fn schedule(&self) -> Option<Vec<Query>> {
            Some(vec![Query::Degree(self.0 as usize)])
        }
    }
    let g = Graph::cycle(6);
    let err = run_nonadaptive(&mut Liar(false), &g, 0, NetworkConfig::congest(6, 0)).unwrap_err();
    assert!(matches!(err, Error::Contract(_)));
    assert!(run_nonadaptive(&mut Liar(true), &g, 0, NetworkConfig::congest(6, 0)).unwrap().accept);
    assert!(matches!(
        run_nonadaptive(&mut Silent, &g, 0, NetworkConfig::congest(6, 0)),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn malformed_query_is_an_input_error() {
    let g = Graph::cycle(6);
    let mut bad = Recorder {
        queries: vec![Query::Adjacency(2, 9)],
        seen: Vec::new(),
        declare: true,
    };
    assert!(matches!(
        run_adaptive(&mut bad, &g, 0, NetworkConfig::congest(6, 0)),
        Err(Error::Input(_))
    ));
    assert!(matches!(
        run_nonadaptive(&mut bad, &g, 0, NetworkConfig::congest(6, 0)),
        Err(Error::Input(_))
    ));
}

#[test]
fn degree_estimator_round_budget() {
    for seed in 0..5 {
        let g = random_graph(40, 0.08, seed);
        let mut t = DensityTester::new(40, 0.1, 0.1, 30, Probe::Degrees, &mut tester_rng(seed)).unwrap();
        let out = run_adaptive(&mut t, &g, 0, NetworkConfig::congest(40, seed)).unwrap();
        assert_eq!(out.queries, 30);
        assert!(out.rounds <= 2 * out.depth * 30 + 5, "{} at depth {}", out.rounds, out.depth);
    }
}

#[test]
fn pair_sampler_round_budget() {
    for seed in 0..5 {
        let g = random_graph(40, 0.08, seed);
        let mut t = DensityTester::new(40, 0.1, 0.1, 50, Probe::Pairs, &mut tester_rng(seed)).unwrap();
        let out = run_nonadaptive(&mut t, &g, 0, NetworkConfig::congest(40, seed)).unwrap();
        assert_eq!(out.queries, 50);
        assert!(out.rounds <= 2 * (out.depth + 50) + 5, "{} at depth {}", out.rounds, out.depth);
        let mut one = DensityTester::new(40, 0.1, 0.1, 1, Probe::Pairs, &mut tester_rng(seed)).unwrap();
        let out = run_nonadaptive(&mut one, &g, 0, NetworkConfig::congest(40, seed)).unwrap();
        assert!(out.rounds <= 3 * out.depth + 5, "{} at depth {}", out.rounds, out.depth);
    }
}

#[test]
fn walk_matches_central_run() {
    for seed in 0..10 {
        let g = random_graph(20, 0.15, seed);
        let mut central = WalkTester::new(20, 6, 5, tester_rng(seed));
        let (want, q) = run_central(&mut central, &g).unwrap();
        let mut dist = WalkTester::new(20, 6, 5, tester_rng(seed));
        let out = run_adaptive(&mut dist, &g, 0, NetworkConfig::congest(20, seed)).unwrap();
        assert_eq!((out.accept, out.queries), (want, q));
    }
}

#[test]
fn density_verdicts_follow_the_graph() {
    let dense = Graph::complete(12);
    let sparse = Graph::path(12);
    let mut a = DensityTester::new(12, 0.3, 0.2, 40, Probe::Pairs, &mut tester_rng(1)).unwrap();
    assert!(!run_central(&mut a, &dense).unwrap().0);
    let mut b = DensityTester::new(12, 0.3, 0.2, 40, Probe::Degrees, &mut tester_rng(1)).unwrap();
    assert!(run_central(&mut b, &sparse).unwrap().0);
}
