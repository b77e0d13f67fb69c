//! Acceptance checks. Each test prints one `criterion N ...: PASS|FAIL` line
//! before asserting, so `cargo test --test acceptance -- --nocapture` reads
//! as a report.

use std::path::PathBuf;
use std::time::Instant;

use pelp::corpus::{RawCorpus, Vocabulary};
use pelp::eval::{bli_eval, group_divergence, spearman_eval, BliLexicon, SimilarityBenchmark, BLI_LEVELS};
use pelp::graph::{build_group_complete_graph, read_edge_list, EmbeddingState, NodeKey, PriorGraph};
use pelp::model::{Likelihood, LogitContext, Minibatch};
use pelp::par::Parallelism;
use pelp::synth::{
    bilingual_corpus, group_corpus, markov_corpus, Bilingual, BilingualSpec, GroupSpec, MarkovSpec,
};
use pelp::train::{train, LrSchedule, TrainConfig, Trainer};
use pelp::verify::{
    check_prop1, check_prop2, check_prop3, check_prop4, check_prop5, grad_check, prop4_rows, prop5_rows,
    random_strong_pairs, train_bilingual, DbmSpec, Dict2VecObjective, GbmSpec, Outcome, Prop1Config,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, name: &str, pass: bool, detail: String, started: Instant) {
    println!(
        "criterion {n} {name}: {} ({detail}; {:.1}s)",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn random_state<R: Rng>(keys: Vec<NodeKey>, dim: usize, rng: &mut R) -> EmbeddingState {
    let data = (0..keys.len() * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    EmbeddingState::from_data(keys, dim, data).unwrap()
}

/// Mirrored bilingual corpus with 10^5 tokens per language.
fn bilingual(seed: u64) -> Bilingual {
    bilingual_corpus(&BilingualSpec {
        base: MarkovSpec {
            vocab_size: 500,
            tokens: 100_000,
            seed,
            ..MarkovSpec::default()
        },
        ..BilingualSpec::default()
    })
}

fn bilingual_config(seed: u64) -> TrainConfig {
    TrainConfig {
        dim: 20,
        window: 3,
        negatives: 5,
        epochs: 10,
        batch_size: 1024,
        learning_rate: 0.005,
        lr_schedule: LrSchedule::Linear,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn criterion_01_gradient_matches_finite_differences() {
    let t = Instant::now();
    let instances = grad_check(20, 1e-5, 2024).unwrap();
    let worst = instances.iter().map(|i| i.relative_error).fold(0.0, f64::max);
    let both = instances.iter().any(|i| i.likelihood == Likelihood::Cbow) && instances.iter().any(|i| i.likelihood == Likelihood::Sgns);
    let pass = worst < 1e-4 && both && instances.len() == 20;
    report(1, "gradient check", pass, format!("20 instances, max relative error {worst:.2e} < 1e-4"), t);
    assert!(pass);
}

#[test]
fn criterion_02_dynamic_prior_is_chain_laplacian() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let spec = DbmSpec {
            gamma0: rng.random_range(0.1..5.0),
            gamma1: rng.random_range(0.1..50.0),
            timesteps: names("t", 5),
            words: names("w", 10),
        };
        let state = random_state(spec.keys(), 5, &mut rng);
        worst = worst.max(check_prop2(&spec, &state).unwrap());
    }
    let pass = worst < 1e-10;
    report(2, "dynamic prior identity", pass, format!("50 states, max discrepancy {worst:.2e} < 1e-10"), t);
    assert!(pass);
}

#[test]
fn criterion_03_grouped_prior_is_complete_graph() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut worst_gamma) = (0.0f64, 0.0f64);
    for i in 0..50 {
        let groups = 2 + i % 3;
        let spec = GbmSpec {
            gamma0: rng.random_range(0.1..5.0),
            gamma1: rng.random_range(0.1..50.0),
            groups: names("g", groups),
            words: names("w", 6),
        };
        let state = random_state(spec.keys(), 4, &mut rng);
        let r = check_prop3(&spec, &state).unwrap();
        // Independent closed form for the profiled mean's shrinkage.
        let expected = spec.gamma1 / (groups as f64 * spec.gamma1 + spec.gamma0);
        worst = worst.max(r.max_discrepancy);
        worst_gamma = worst_gamma.max((r.gamma - expected).abs());
    }
    let pass = worst < 1e-8 && worst_gamma <= 1e-12;
    report(
        3,
        "grouped prior identity",
        pass,
        format!("50 states, max discrepancy {worst:.2e} < 1e-8, gamma error {worst_gamma:.2e} <= 1e-12"),
        t,
    );
    assert!(pass);
}

#[test]
fn criterion_04_dictionary_objective_is_laplacian_prior() {
    let t = Instant::now();
    let (corpus, vocab) = markov_corpus(&MarkovSpec {
        vocab_size: 50,
        tokens: 10_000,
        seed: 4,
        ..MarkovSpec::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let edges = random_strong_pairs(&vocab, 15, 30, &mut rng);

    let ctx = LogitContext::full(&corpus.partitions, &vocab, pelp::model::ContextSharing::Shared);
    let samplers = vec![Some(vocab.noise_sampler())];
    let windows: Vec<_> = pelp::corpus::iter_windows(&corpus, 2).collect();
    let batch = Minibatch::draw(windows, Likelihood::Sgns, 2, &samplers, &mut rng);
    let obj = Dict2VecObjective::new(&batch, &ctx, &edges, 1.0, 3).unwrap();
    let mut pointwise = 0.0f64;
    for _ in 0..50 {
        let x: Vec<f64> = (0..obj.n_rows * 3).map(|_| rng.random_range(-2.0..2.0)).collect();
        pointwise = pointwise.max(obj.pointwise_discrepancy(&x));
    }

    let r = check_prop1(&corpus, &vocab, &edges, &Prop1Config::default()).unwrap();
    let pass = pointwise < 1e-10 && r.converged && r.dict_grad_norm <= 1e-6 && r.pelp_grad_norm <= 1e-5;
    report(
        4,
        "dictionary objective identity",
        pass,
        format!(
            "pointwise {pointwise:.2e} < 1e-10; optimum grad {:.2e} <= 1e-6 after {} iterations, transferred grad {:.2e} <= 1e-5",
            r.dict_grad_norm, r.iterations, r.pelp_grad_norm
        ),
        t,
    );
    assert!(pass);
}

#[test]
fn criterion_05_translation_distance_shrinks_with_lambda1() {
    let t = Instant::now();
    let data = bilingual(1);
    let curve = check_prop4(&data, &data.pairs, &[1.0, 1e2, 1e4, 1e6], &bilingual_config(1), &Parallelism::sequential()).unwrap();
    let rows = prop4_rows(&curve, 1e-2);
    let pass = rows.iter().all(|r| r.outcome == Outcome::Pass);
    let values: Vec<String> = curve.iter().map(|p| format!("{:.3e}", p.value)).collect();
    report(
        5,
        "distance trend",
        pass,
        format!("mean pair distance [{}], final/initial {:.2e} < 1e-2", values.join(", "), curve[3].value / curve[0].value),
        t,
    );
    assert!(pass);
}

#[test]
fn criterion_06_gaps_close_as_lambda1_vanishes() {
    let t = Instant::now();
    let data = bilingual(1);
    let res = check_prop5(&data, &data.pairs, &[1.0, 1e-1, 1e-2, 1e-3], &bilingual_config(1), &Parallelism::sequential()).unwrap();
    let rows = prop5_rows(&res, 0.1);
    let pass = rows.iter().all(|r| r.outcome == Outcome::Pass);
    let ll: Vec<String> = res.points.iter().map(|p| format!("{:.2e}", p.likelihood_gap)).collect();
    let rg: Vec<String> = res.points.iter().map(|p| format!("{:.2e}", p.residual_gap)).collect();
    report(
        6,
        "gap trend",
        pass,
        format!("likelihood gaps [{}], residual gaps [{}], 10% tolerance", ll.join(", "), rg.join(", ")),
        t,
    );
    assert!(pass);
}

/// Threshold set below the lowest P@5 seen in calibration runs (0.51 over
/// seeds 1..=4) and well above the 0.05 random baseline.
const BLI_P5_THRESHOLD: f64 = 0.3;

#[test]
fn criterion_07_synthetic_lexicon_induction() {
    let t = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for seed in 1..=3u64 {
        let data = bilingual(seed);
        let mut top = data.pairs[..300].to_vec();
        top.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (train_pairs, held_out) = top.split_at(200);
        let cfg = TrainConfig {
            lambda1: 1e4,
            ..bilingual_config(seed)
        };
        let state = train_bilingual(&data, train_pairs, &cfg).unwrap();
        let lexicon = BliLexicon {
            pairs: held_out.to_vec(),
            direction: "A-B".into(),
        };
        let r = bli_eval(&lexicon, &state, "A", "B", &BLI_LEVELS, &Parallelism::sequential()).unwrap();
        let p5 = r.precision.iter().find(|(k, _)| *k == 5).unwrap().1;
        pass &= p5 >= BLI_P5_THRESHOLD && r.evaluated == 100;
        lines.push(format!("seed {seed} P@5={p5:.2}"));
    }
    report(7, "synthetic BLI", pass, format!("{}; threshold {BLI_P5_THRESHOLD}", lines.join(", ")), t);
    assert!(pass);
}

fn planted_in_top20(state: &EmbeddingState, words: &[String], planted: &[String]) -> usize {
    let r = group_divergence(state, words, "D", "R");
    r.ranked.iter().take(20).filter(|(w, _)| planted.contains(w)).count()
}

#[test]
fn criterion_08_polarization_recovery() {
    let t = Instant::now();
    let (mut prior_ok, mut baseline_fewer) = (0, 0);
    let mut lines = Vec::new();
    for seed in 1..=10u64 {
        let g = group_corpus(&GroupSpec {
            tokens_per_group: 30_000,
            plant_rate: 0.5,
            seed,
            ..GroupSpec::default()
        });
        let edges = build_group_complete_graph(&g.shared_words, &g.groups);
        let cfg = TrainConfig {
            dim: 20,
            window: 3,
            negatives: 5,
            epochs: 20,
            batch_size: 1024,
            learning_rate: 0.02,
            lr_schedule: LrSchedule::Linear,
            lambda1: 30.0,
            seed,
            ..TrainConfig::default()
        };
        let graph = PriorGraph::new(edges, cfg.lambda0, cfg.lambda1).unwrap();
        let with_prior = train(&g.corpus, &g.vocab, &graph, &cfg).unwrap();
        // Vague prior: no edges and a negligible ridge.
        let vague = TrainConfig {
            lambda1: 0.0,
            lambda0: 1e-4,
            ..cfg.clone()
        };
        let baseline = train(&g.corpus, &g.vocab, &PriorGraph::ridge(1e-4).unwrap(), &vague).unwrap();
        let a = planted_in_top20(&with_prior, &g.shared_words, &g.planted);
        let b = planted_in_top20(&baseline, &g.shared_words, &g.planted);
        prior_ok += usize::from(a >= 8);
        baseline_fewer += usize::from(b < a);
        lines.push(format!("{a}/{b}"));
    }
    let pass = prior_ok == 10 && baseline_fewer >= 7;
    report(
        8,
        "polarization recovery",
        pass,
        format!(
            "planted in top-20 prior/baseline per seed [{}]; prior >= 8 on {prior_ok}/10, baseline fewer on {baseline_fewer}/10",
            lines.join(" ")
        ),
        t,
    );
    assert!(pass);
}

/// Needs external data: `PELP_SIM_CORPUS` (plain text, one segment per
/// line), `PELP_SIM_EDGES` (strong-pair edge list) and `PELP_SIM_BENCH`
/// (similarity benchmark). Optional `PELP_SIM_LAMBDA1` (default 1e4).
#[test]
#[ignore = "requires a 10-20M token corpus and benchmark via PELP_SIM_* env vars"]
fn criterion_09_similarity_direction() {
    let t = Instant::now();
    let var = |k: &str| std::env::var(k).map(PathBuf::from).unwrap_or_else(|_| panic!("{k} is not set"));
    let raw = RawCorpus::read(&var("PELP_SIM_CORPUS"), false, true).unwrap();
    let vocab = Vocabulary::build(raw.tokens(), 5, None).unwrap();
    let corpus = raw.encode(&vocab);
    let mut edges = read_edge_list(&var("PELP_SIM_EDGES")).unwrap();
    edges.retain(|e| [&e.a, &e.b].iter().all(|k| vocab.id(&k.word).is_some()));
    let bench = SimilarityBenchmark::read(&var("PELP_SIM_BENCH"), true).unwrap();
    let lambda1: f64 = std::env::var("PELP_SIM_LAMBDA1").ok().and_then(|s| s.parse().ok()).unwrap_or(1e4);
    let cfg = TrainConfig {
        dim: 100,
        likelihood: Likelihood::Sgns,
        epochs: 3,
        lambda1,
        ..TrainConfig::default()
    };
    let par = Parallelism::new(0);
    let run = |cfg: &TrainConfig, edges: Vec<pelp::graph::Edge>| {
        let graph = PriorGraph::new(edges, cfg.lambda0, cfg.lambda1).unwrap();
        let mut tr = Trainer::new(&corpus, &vocab, &graph, cfg).unwrap().with_parallelism(par.clone());
        tr.train(&corpus).unwrap();
        spearman_eval(&bench, tr.state(), "_").unwrap().rho
    };
    let pelp_rho = run(&cfg, edges);
    let base_rho = run(&TrainConfig { lambda1: 0.0, ..cfg.clone() }, Vec::new());
    let pass = pelp_rho - base_rho >= 0.02;
    report(
        9,
        "similarity direction",
        pass,
        format!("spearman {pelp_rho:.3} vs baseline {base_rho:.3}, needs +0.02"),
        t,
    );
    assert!(pass);
}

#[test]
fn criterion_10_training_is_bit_reproducible() {
    let t = Instant::now();
    let data = bilingual_corpus(&BilingualSpec {
        base: MarkovSpec {
            vocab_size: 200,
            tokens: 20_000,
            seed: 10,
            ..MarkovSpec::default()
        },
        ..BilingualSpec::default()
    });
    let edges = pelp::graph::build_translation_graph(&data.pairs, &data.vocab, &data.vocab, &data.lang_a, &data.lang_b).edges;
    let cfg = TrainConfig {
        dim: 16,
        epochs: 3,
        seed: 99,
        lambda1: 10.0,
        context_sharing: pelp::model::ContextSharing::PerPartition,
        ..TrainConfig::default()
    };
    let graph = PriorGraph::new(edges, cfg.lambda0, cfg.lambda1).unwrap();
    let run = || {
        let mut tr = Trainer::new(&data.corpus, &data.vocab, &graph, &cfg).unwrap();
        tr.train(&data.corpus).unwrap();
        tr.checkpoint().to_bytes()
    };
    let (a, b) = (run(), run());
    let pass = a == b;
    report(10, "determinism", pass, format!("two runs, {} checkpoint bytes, identical = {pass}", a.len()), t);
    assert!(pass);
}
