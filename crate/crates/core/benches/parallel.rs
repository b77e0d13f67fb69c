//! Sequential vs pooled execution of the hot paths: minibatch gradients,
//! a training epoch and lexicon induction.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pelp::corpus::iter_windows;
use pelp::eval::{bli_eval, BliLexicon, BLI_LEVELS};
use pelp::graph::{build_translation_graph, PriorGraph};
use pelp::model::{likelihood_gradient_shards, ContextSharing, Likelihood, LogitContext, Minibatch};
use pelp::par::Parallelism;
use pelp::synth::{bilingual_corpus, Bilingual, BilingualSpec, MarkovSpec};
use pelp::train::{init_state, TrainConfig, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn data() -> Bilingual {
    bilingual_corpus(&BilingualSpec {
        base: MarkovSpec {
            vocab_size: 500,
            tokens: 20_000,
            seed: 1,
            ..MarkovSpec::default()
        },
        ..BilingualSpec::default()
    })
}

fn config() -> TrainConfig {
    TrainConfig {
        dim: 50,
        epochs: 1,
        lambda1: 10.0,
        context_sharing: ContextSharing::PerPartition,
        ..TrainConfig::default()
    }
}

fn modes() -> [(&'static str, Parallelism); 2] {
    [("sequential", Parallelism::sequential()), ("pool4", Parallelism::new(4))]
}

fn gradient(c: &mut Criterion) {
    let d = data();
    let cfg = config();
    let ctx = LogitContext::from_corpus(&d.corpus, &d.vocab, cfg.context_sharing);
    let samplers = ctx.noise_samplers(&d.corpus, d.vocab.len(), cfg.noise_exponent).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let samples: Vec<_> = iter_windows(&d.corpus, cfg.window).take(4096).collect();
    let state = init_state(ctx.keys().to_vec(), &cfg).unwrap();
    let mut group = c.benchmark_group("gradient");
    for lik in [Likelihood::Cbow, Likelihood::Sgns] {
        let batch = Minibatch::draw(samples.clone(), lik, cfg.negatives, &samplers, &mut rng);
        for (name, par) in modes() {
            group.bench_with_input(BenchmarkId::new(name, format!("{lik:?}")), &batch, |b, batch| {
                b.iter(|| likelihood_gradient_shards(batch, state.as_slice(), state.dim(), &ctx, &par))
            });
        }
    }
    group.finish();
}

fn epoch(c: &mut Criterion) {
    let d = data();
    let cfg = config();
    let edges = build_translation_graph(&d.pairs, &d.vocab, &d.vocab, &d.lang_a, &d.lang_b).edges;
    let graph = PriorGraph::new(edges, cfg.lambda0, cfg.lambda1).unwrap();
    let mut group = c.benchmark_group("epoch");
    group.sample_size(10);
    for (name, par) in modes() {
        group.bench_function(name, |b| {
            b.iter(|| {
                let mut t = Trainer::new(&d.corpus, &d.vocab, &graph, &cfg)
                    .unwrap()
                    .with_parallelism(par.clone());
                t.run_epoch(&d.corpus).unwrap()
            })
        });
    }
    group.finish();
}

fn bli(c: &mut Criterion) {
    let d = data();
    let cfg = config();
    let ctx = LogitContext::from_corpus(&d.corpus, &d.vocab, cfg.context_sharing);
    let state = init_state(ctx.keys().to_vec(), &cfg).unwrap();
    let lexicon = BliLexicon {
        pairs: d.pairs.clone(),
        direction: "A-B".into(),
    };
    let mut group = c.benchmark_group("bli");
    for (name, par) in modes() {
        group.bench_function(name, |b| {
            b.iter(|| bli_eval(&lexicon, &state, &d.lang_a, &d.lang_b, &BLI_LEVELS, &par).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gradient, epoch, bli);
criterion_main!(benches);
