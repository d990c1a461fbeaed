use activitymon_bench::training_instances;
use activitymon_core::models::{gmm_fit, gmm_loglik, mlp_train};
use activitymon_core::{train_activity_classifier, ActivityClass, TrainConfig};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn gmm(c: &mut Criterion) {
    let instances = training_instances();
    let walking: Vec<_> = instances
        .iter()
        .filter(|i| i.label == Some(ActivityClass::Walking))
        .map(|i| i.feature.clone())
        .collect();
    let fit = gmm_fit(&walking, "walking", &TrainConfig::gmm()).unwrap();
    c.bench_function("gmm fit, one class", |b| {
        b.iter(|| gmm_fit(black_box(&walking), "walking", &TrainConfig::gmm()).unwrap())
    });
    c.bench_function("gmm log-likelihood", |b| {
        b.iter(|| gmm_loglik(&fit.model, black_box(&walking[0])).unwrap())
    });
    c.bench_function("train all activity classes", |b| {
        b.iter(|| train_activity_classifier(black_box(&instances), &TrainConfig::gmm()).unwrap())
    });
}

fn mlp(c: &mut Criterion) {
    let instances = training_instances();
    let data: Vec<_> = instances.iter().map(|i| i.feature.clone()).collect();
    let labels: Vec<usize> = instances.iter().map(|i| i.label.unwrap().index()).collect();
    let classes: Vec<String> = ActivityClass::ALL.iter().map(|c| c.name().to_string()).collect();
    let cfg = TrainConfig::mlp().with_max_iterations(200);
    let trained = mlp_train(&data, &labels, &classes, &cfg).unwrap();
    let mut g = c.benchmark_group("mlp");
    g.sample_size(10);
    g.bench_function("train 200 epochs", |b| {
        b.iter(|| mlp_train(black_box(&data), &labels, &classes, &cfg).unwrap())
    });
    g.bench_function("predict", |b| {
        b.iter(|| trained.model.predict(black_box(&data[0])).unwrap())
    });
    g.finish();
}

criterion_group!(benches, gmm, mlp);
criterion_main!(benches);
