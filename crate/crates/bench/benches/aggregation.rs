use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use edgejury_bench::{choice_texts, outcomes, random_reviews};
use edgejury_core::council::{borda_aggregate, reviewer_order};
use edgejury_core::evalharness::{holm_bonferroni, mcnemar, stratified_bootstrap_ci};
use edgejury_core::schemas::{extract_choice_letter, parse_synthesis, ChoiceSource};

fn borda(c: &mut Criterion) {
    let mut group = c.benchmark_group("borda");
    for reviewers in [1usize, 4, 64] {
        let reviews = random_reviews(reviewers, 1);
        group.bench_with_input(BenchmarkId::from_parameter(reviewers), &reviews, |b, reviews| {
            b.iter(|| {
                let orders: Vec<Vec<usize>> =
                    reviews.iter().map(|r| reviewer_order(r).iter().map(|l| l.index()).collect()).collect();
                borda_aggregate(black_box(&orders), 4)
            })
        });
    }
    group.finish();
}

fn parsing(c: &mut Criterion) {
    let texts = choice_texts(256, 2);
    c.bench_function("extract_choice_letter/256", |b| {
        b.iter(|| texts.iter().filter_map(|t| extract_choice_letter(ChoiceSource::Text(black_box(t)))).count())
    });
    let raw = "```json\n{\"choice\":\"C\",\"final_answer\":\"Because of axial tilt.\",\"rationale\":[\"a\",\"b\"],\"open_questions\":[],\"disagreements\":[]}\n```";
    c.bench_function("parse_synthesis", |b| b.iter(|| parse_synthesis(black_box(raw), true)));
}

fn statistics(c: &mut Criterion) {
    let (flags, cats) = outcomes(817, 0.7, 38, 3);
    let cats: Vec<&str> = cats.iter().map(String::as_str).collect();
    let mut group = c.benchmark_group("bootstrap");
    group.sample_size(10);
    for resamples in [1_000usize, 10_000] {
        group.bench_with_input(BenchmarkId::from_parameter(resamples), &resamples, |b, &n| {
            b.iter(|| stratified_bootstrap_ci(&flags, &cats, n, 7))
        });
    }
    group.finish();

    let (other, _) = outcomes(817, 0.6, 38, 4);
    c.bench_function("mcnemar/817", |b| b.iter(|| mcnemar(black_box(&flags), black_box(&other))));
    let ps: Vec<f64> = (1..=20).map(|i| i as f64 / 400.0).collect();
    c.bench_function("holm/20", |b| b.iter(|| holm_bonferroni(black_box(&ps), 0.05)));
}

criterion_group!(benches, borda, parsing, statistics);
criterion_main!(benches);
