use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use ctxlm::contextmap::enumerate_contexts;
use ctxlm::recsim::{generate_nbest, rescore};
use ctxlm::wordclass::{cluster_words, ExchangeOptions};
use ctxlm_bench::default_run;

fn benches(c: &mut Criterion) {
    let (cfg, res, run) = default_run();
    let mut reg = run.registry.session();
    let contexts = enumerate_contexts(3);

    c.bench_function("switch", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % contexts.len();
            black_box(reg.switch(&contexts[i]))
        })
    });

    let test = &run.split.test;
    let model = &run.models.fallback.bigram;
    c.bench_function("score_test_set", |b| {
        b.iter(|| test.iter().map(|u| model.logprob(&u.tokens)).sum::<f64>())
    });

    let pair = &run.models.fallback;
    let rc = &cfg.recognizer;
    c.bench_function("nbest_and_rescore", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % test.len();
            let nb = generate_nbest(&test[i].tokens, &res.confusions, rc.nbest, rc.noise, i as u64).unwrap();
            rescore(&nb, pair.bigram.as_ref(), pair.trigram.as_ref(), rc.lambda)
                .tokens
                .len()
        })
    });

    let train = &run.split.train;
    let vocab = &run.models.vocab;
    c.bench_function("cluster_words_k40", |b| {
        b.iter(|| {
            cluster_words(train, vocab, 40, &ExchangeOptions::default())
                .unwrap()
                .log_likelihood
        })
    });
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
