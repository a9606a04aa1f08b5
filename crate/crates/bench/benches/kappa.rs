use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use dosewatch_core::metrics::{fleiss_kappa, multilabel_kappa, rating_table};
use dosewatch_core::{DrugClass, SymptomSet, SymptomVocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Three annotators who agree with a shared truth 80% of the time.
fn drug_annotations(items: usize) -> Vec<Vec<DrugClass>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let truth: Vec<DrugClass> = (0..items).map(|_| DrugClass::ALL[rng.random_range(0..8)]).collect();
    (0..3)
        .map(|_| {
            truth
                .iter()
                .map(|&t| if rng.random_bool(0.8) { t } else { DrugClass::ALL[rng.random_range(0..8)] })
                .collect()
        })
        .collect()
}

fn symptom_annotations(items: usize, n_labels: usize) -> Vec<Vec<SymptomSet>> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let truth: Vec<SymptomSet> = (0..items)
        .map(|_| (0..rng.random_range(1..4)).map(|_| rng.random_range(0..n_labels)).collect())
        .collect();
    (0..3)
        .map(|_| {
            truth
                .iter()
                .map(|t| {
                    let mut s = t.clone();
                    if rng.random_bool(0.2) {
                        s.insert(rng.random_range(0..n_labels));
                    }
                    s
                })
                .collect()
        })
        .collect()
}

fn bench_kappa(c: &mut Criterion) {
    let mut g = c.benchmark_group("fleiss_drug");
    for items in [100, 1_000, 10_000] {
        let ann = drug_annotations(items);
        g.throughput(Throughput::Elements(items as u64));
        g.bench_with_input(BenchmarkId::from_parameter(items), &ann, |b, ann| {
            b.iter(|| {
                let table = rating_table(black_box(ann), &DrugClass::ALL).unwrap();
                fleiss_kappa(&table, 3).unwrap().kappa
            })
        });
    }
    g.finish();

    let labels = SymptomVocabulary::seed().labels().to_vec();
    let mut g = c.benchmark_group("multilabel_symptoms");
    for items in [100, 1_000] {
        let ann = symptom_annotations(items, labels.len());
        g.throughput(Throughput::Elements(items as u64));
        g.bench_with_input(BenchmarkId::from_parameter(items), &ann, |b, ann| {
            b.iter(|| multilabel_kappa(black_box(ann), &labels).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_kappa);
criterion_main!(benches);
