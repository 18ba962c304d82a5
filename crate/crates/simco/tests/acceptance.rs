//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `--nocapture` to see them).
//!
//! The embedding-quality criteria share a single desk-scale fixture: a
//! 2000-image synthetic dataset and a similarity head trained on its train
//! split, built once per process.

use std::collections::HashMap;
use std::sync::OnceLock;
use std::time::Instant;

use simco::cluster::{
    affinity_propagation, build_similarity, median_offdiag_similarity, preference_search,
    seeds_separated, APConfig, SimilarityMatrix,
};
use simco::count::{eval_images, mae, nmae, ClusterMode, DetectorMode, PipelineConfig};
use simco::detect::{detect_oracle, extract_features, FeatureVector};
use simco::embed::{
    loss_gradient, train, triplet_loss, Descriptor, EmbeddingNet, FeatureSet, ImageFeatures,
    TrainConfig, DESCRIPTOR_DIM,
};
use simco::par::par_map_index;
use simco::raster::RasterImage;
use simco::rng::substream;
use simco::shapegen::{
    generate_dataset, generate_image, GeneratorConfig, ImageRecord, ObjectType, Split,
};

use rand::Rng;

fn pass(name: &str, details: String) {
    println!("ACCEPTANCE {name}: PASS — {details}");
}

fn check(name: &str, ok: bool, details: String) {
    if ok {
        pass(name, details);
    } else {
        println!("ACCEPTANCE {name}: FAIL — {details}");
        panic!("{name} failed: {details}");
    }
}

// ---------------------------------------------------------------------------
// shared desk-scale fixture

const DESK_SEED: u64 = 0x51C0;

struct Desk {
    config: GeneratorConfig,
    net: EmbeddingNet,
    test_indices: Vec<usize>,
    build_secs: f64,
}

static DESK: OnceLock<Desk> = OnceLock::new();

fn desk() -> &'static Desk {
    DESK.get_or_init(|| {
        let config = GeneratorConfig::default();
        let started = Instant::now();

        let train_indices: Vec<usize> = (0..config.num_images)
            .filter(|&i| config.split_for_index(i) == Split::Train)
            .collect();
        // per-image oracle features, rasters dropped as we go
        let per_image: Vec<Vec<(FeatureVector, ObjectType)>> =
            par_map_index(train_indices.len(), |j| {
                let (record, raster) =
                    generate_image(&config, DESK_SEED, train_indices[j]).unwrap();
                detect_oracle(&record)
                    .iter()
                    .zip(&record.instances)
                    .map(|(det, inst)| {
                        (
                            extract_features(&raster, det, 16).unwrap(),
                            record.types[inst.type_index].clone(),
                        )
                    })
                    .collect()
            });
        let mut interner: HashMap<ObjectType, usize> = HashMap::new();
        let images: Vec<ImageFeatures> = per_image
            .into_iter()
            .enumerate()
            .map(|(j, feats)| {
                let mut features = Vec::with_capacity(feats.len());
                let mut labels = Vec::with_capacity(feats.len());
                for (f, ty) in feats {
                    let next = interner.len();
                    labels.push(*interner.entry(ty).or_insert(next));
                    features.push(f);
                }
                ImageFeatures {
                    image_index: train_indices[j],
                    features,
                    labels,
                }
            })
            .collect();
        let data = FeatureSet {
            images,
            num_type_ids: interner.len(),
        };

        let train_config = TrainConfig {
            seed: 1,
            ..TrainConfig::default()
        };
        let mut net = EmbeddingNet::init(769, train_config.hidden_dim, train_config.seed);
        let report = train(&mut net, &data, &train_config).unwrap();
        assert!(
            report.epoch_mean_loss.last().unwrap() < &report.epoch_mean_loss[0],
            "training loss should decrease at desk scale"
        );

        let test_indices: Vec<usize> = (0..config.num_images)
            .filter(|&i| config.split_for_index(i) == Split::Test)
            .collect();
        Desk {
            config,
            net,
            test_indices,
            build_secs: started.elapsed().as_secs_f64(),
        }
    })
}

fn regen(desk: &Desk, index: usize) -> (ImageRecord, RasterImage) {
    generate_image(&desk.config, DESK_SEED, index).unwrap()
}

fn oracle_descriptors(desk: &Desk, record: &ImageRecord, raster: &RasterImage) -> Vec<Descriptor> {
    detect_oracle(record)
        .iter()
        .map(|det| {
            let f = extract_features(raster, det, 16).unwrap();
            desk.net.forward(&f.values).unwrap()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// criterion 1: gradient correctness

#[test]
fn criterion_gradient_correctness() {
    let started = Instant::now();
    let mut worst_rel = 0.0f64;
    let pairs = 20;
    for pair in 0..pairs {
        let mut rng = substream(0xACC1, pair);
        let input_dim = rng.random_range(6..14usize);
        let hidden = rng.random_range(4..10usize);
        let n = rng.random_range(5..10usize);
        let net = EmbeddingNet::init(input_dim, hidden, 1000 + pair);
        let features: Vec<FeatureVector> = (0..n)
            .map(|_| FeatureVector {
                values: (0..input_dim).map(|_| rng.random_range(0.0..1.0)).collect(),
            })
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3usize)).collect();
        let (_, grads) = loss_gradient(&net, &features, &labels, 0.2).unwrap();

        let eval = |net: &EmbeddingNet| -> f64 {
            let descs: Vec<Descriptor> = features
                .iter()
                .map(|f| net.forward(&f.values).unwrap())
                .collect();
            triplet_loss(&descs, &labels, 0.2).value
        };
        let step = 1e-5;
        for idx in 0..net.num_params() {
            let mut plus = net.clone();
            *plus.param_mut(idx) += step;
            let mut minus = net.clone();
            *minus.param_mut(idx) -= step;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * step);
            let analytic = grads.param(idx);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
            worst_rel = worst_rel.max(rel);
            assert!(
                rel < 1e-4,
                "pair {pair} param {idx}: analytic {analytic} vs numeric {numeric}"
            );
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        "gradient-correctness",
        worst_rel < 1e-4 && secs < 60.0,
        format!("{pairs} net/batch pairs, all params, worst rel err {worst_rel:.2e}, {secs:.1}s"),
    );
}

// ---------------------------------------------------------------------------
// criterion 2: embedding separation at desk scale

#[test]
fn criterion_embedding_separation() {
    let desk = desk();
    check(
        "embedding-train-budget",
        desk.build_secs < 1800.0,
        format!(
            "dataset generation + 30-epoch training took {:.0}s (budget 1800s)",
            desk.build_secs
        ),
    );

    let mut nn_total = 0usize;
    let mut nn_same_type = 0usize;
    let mut images_checked = 0usize;
    let mut intra_inter_ok = true;
    for &idx in &desk.test_indices {
        let (record, raster) = regen(desk, idx);
        let descs = oracle_descriptors(desk, &record, &raster);
        let types: Vec<usize> = record.instances.iter().map(|i| i.type_index).collect();
        let n = descs.len();
        // within-image nearest neighbor must share the type
        for i in 0..n {
            let mut best = (usize::MAX, f64::INFINITY);
            for j in 0..n {
                if j != i {
                    let d = descs[i].distance(&descs[j]);
                    if d < best.1 {
                        best = (j, d);
                    }
                }
            }
            nn_total += 1;
            if types[best.0] == types[i] {
                nn_same_type += 1;
            }
        }
        // mean intra-type distance < mean inter-type distance
        let mut intra = (0.0, 0usize);
        let mut inter = (0.0, 0usize);
        for i in 0..n {
            for j in (i + 1)..n {
                let d = descs[i].distance(&descs[j]);
                if types[i] == types[j] {
                    intra = (intra.0 + d, intra.1 + 1);
                } else {
                    inter = (inter.0 + d, inter.1 + 1);
                }
            }
        }
        if inter.1 > 0 && intra.0 / intra.1 as f64 >= inter.0 / inter.1 as f64 {
            intra_inter_ok = false;
            println!(
                "image {idx}: intra {:.4} !< inter {:.4}",
                intra.0 / intra.1 as f64,
                inter.0 / inter.1 as f64
            );
        }
        images_checked += 1;
    }
    let recall = nn_same_type as f64 / nn_total as f64;
    check(
        "embedding-separation",
        recall >= 0.9 && intra_inter_ok,
        format!(
            "held-out recall@1 {recall:.4} over {nn_total} detections; intra<inter on all {images_checked} test images: {intra_inter_ok}"
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 3: clustering matches exhaustive search

/// Exemplar-set objective: each point's similarity to its best exemplar,
/// exemplars contributing the preference.
fn exemplar_objective(s: &SimilarityMatrix, exemplars: &[usize]) -> f64 {
    let mut total = 0.0;
    for i in 0..s.n() {
        if exemplars.contains(&i) {
            total += s.preference();
        } else {
            total += exemplars
                .iter()
                .map(|&e| s.get(i, e))
                .fold(f64::NEG_INFINITY, f64::max);
        }
    }
    total
}

fn brute_force_optimum(s: &SimilarityMatrix) -> f64 {
    let n = s.n();
    let mut best = f64::NEG_INFINITY;
    for mask in 1u32..(1 << n) {
        let set: Vec<usize> = (0..n).filter(|&k| mask & (1 << k) != 0).collect();
        best = best.max(exemplar_objective(s, &set));
    }
    best
}

#[test]
fn criterion_clustering_oracle_equivalence() {
    let started = Instant::now();
    let trials = 200;
    let mut within = 0usize;
    for trial in 0..trials {
        let mut rng = substream(0xC10C, trial as u64);
        let n = rng.random_range(2..=8usize);
        let descs: Vec<Descriptor> = (0..n)
            .map(|i| {
                let mut raw = [0.0; DESCRIPTOR_DIM];
                let mut sub = substream(0xD35C, trial as u64 * 16 + i as u64);
                for v in raw.iter_mut() {
                    *v = sub.random_range(-1.0..1.0);
                }
                let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
                for v in raw.iter_mut() {
                    *v /= norm;
                }
                Descriptor(raw)
            })
            .collect();
        let preference = median_offdiag_similarity(&descs).unwrap_or(-1.0);
        let s = build_similarity(&descs, preference).unwrap();
        let result = affinity_propagation(&s, &APConfig::default()).unwrap();
        let got = exemplar_objective(&s, &result.exemplars);
        let opt = brute_force_optimum(&s);
        // objectives are non-positive: "within 95% of the optimum" means the
        // achieved value is no more than 1/0.95 times the optimum
        if got >= opt / 0.95 - 1e-12 {
            within += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        "clustering-oracle-equivalence",
        within * 100 >= trials * 90 && secs < 120.0,
        format!("{within}/{trials} trials within 5% of exhaustive optimum, {secs:.1}s"),
    );
}

// ---------------------------------------------------------------------------
// criterion 4: seed protocol

#[test]
fn criterion_seed_protocol() {
    let desk = desk();
    let multi_type: Vec<usize> = desk
        .test_indices
        .iter()
        .copied()
        .filter(|&i| {
            let (record, _) = regen(desk, i);
            record.types.len() >= 2
        })
        .take(100)
        .collect();
    assert!(
        multi_type.len() == 100,
        "need 100 multi-type held-out images, found {}",
        multi_type.len()
    );

    let mut successes = 0usize;
    for &idx in &multi_type {
        let (record, raster) = regen(desk, idx);
        let descs = oracle_descriptors(desk, &record, &raster);
        let seeds: Vec<usize> = (0..record.types.len())
            .map(|t| {
                record
                    .instances
                    .iter()
                    .position(|inst| inst.type_index == t)
                    .unwrap()
            })
            .collect();
        if let Ok((_, result)) = preference_search(&descs, &seeds, &APConfig::default(), 64) {
            // postcondition holds exactly on every success
            assert!(
                seeds_separated(&result, &seeds),
                "image {idx}: success without separated seeds"
            );
            successes += 1;
        }
    }
    check(
        "seed-protocol",
        successes * 100 >= multi_type.len() * 95,
        format!(
            "preference search separated seeds on {successes}/{} held-out multi-type images",
            multi_type.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 5: end-to-end counting

#[test]
fn criterion_end_to_end_counting() {
    let desk = desk();
    let eval_indices: Vec<usize> = desk.test_indices.iter().copied().take(100).collect();
    let items: Vec<(ImageRecord, RasterImage)> =
        eval_indices.iter().map(|&i| regen(desk, i)).collect();

    let oracle_cfg = PipelineConfig::default();
    let oracle = eval_images(
        items.iter().map(|(r, i)| (r, i)),
        &desk.net,
        &oracle_cfg,
        &ClusterMode::Seeded,
    )
    .unwrap();
    check(
        "end-to-end-oracle",
        oracle.summary.nmae <= 0.15 && oracle.summary.mae <= 1.5,
        format!(
            "seeded+oracle over {} images: NMAE {:.4} (<= 0.15), MAE {:.4} (<= 1.5), {} failures",
            eval_indices.len(),
            oracle.summary.nmae,
            oracle.summary.mae,
            oracle.failures.len()
        ),
    );

    let blob_cfg = PipelineConfig {
        detector: DetectorMode::Blob,
        ..PipelineConfig::default()
    };
    let blob = eval_images(
        items.iter().map(|(r, i)| (r, i)),
        &desk.net,
        &blob_cfg,
        &ClusterMode::Seeded,
    )
    .unwrap();
    check(
        "end-to-end-blob",
        blob.summary.nmae <= 0.25,
        format!(
            "seeded+blob over {} images: NMAE {:.4} (<= 0.25), MAE {:.4}, {} failures",
            eval_indices.len(),
            blob.summary.nmae,
            blob.summary.mae,
            blob.failures.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 6: determinism

#[test]
fn criterion_determinism() {
    let config = GeneratorConfig {
        num_images: 40,
        width: 128,
        height: 128,
        types_per_image: (1, 2),
        poisson_expected: (3.0, 4.0),
        grid_rows: (1, 2),
        grid_cols: (2, 3),
        ..GeneratorConfig::default()
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    generate_dataset(&config, 7, dir_a.path()).unwrap();
    generate_dataset(&config, 7, dir_b.path()).unwrap();
    let manifest_a = std::fs::read(dir_a.path().join("manifest.json")).unwrap();
    let manifest_b = std::fs::read(dir_b.path().join("manifest.json")).unwrap();
    let mut rasters_equal = true;
    for i in 0..config.num_images {
        let f = format!("images/img_{i:05}.ppm");
        if std::fs::read(dir_a.path().join(&f)).unwrap()
            != std::fs::read(dir_b.path().join(&f)).unwrap()
        {
            rasters_equal = false;
        }
    }

    // train twice from the same in-memory features
    let items: Vec<(ImageRecord, RasterImage)> = (0..config.num_images)
        .map(|i| generate_image(&config, 7, i).unwrap())
        .collect();
    let data = simco::embed::feature_set_from_memory(&items, 8).unwrap();
    let tcfg = TrainConfig {
        epochs: 3,
        patch: 8,
        hidden_dim: 16,
        seed: 11,
        ..TrainConfig::default()
    };
    let run_train = || {
        let mut net = EmbeddingNet::init(simco::detect::feature_len(8), 16, tcfg.seed);
        train(&mut net, &data, &tcfg).unwrap();
        simco::embed::model_to_bytes(&net, &tcfg).unwrap()
    };
    let model_a = run_train();
    let model_b = run_train();

    // eval twice
    let pcfg = PipelineConfig {
        patch: 8,
        ..PipelineConfig::default()
    };
    let (net, _) = {
        let mut net = EmbeddingNet::init(simco::detect::feature_len(8), 16, tcfg.seed);
        train(&mut net, &data, &tcfg).unwrap();
        (net, ())
    };
    let run_eval = || {
        eval_images(
            items.iter().map(|(r, i)| (r, i)),
            &net,
            &pcfg,
            &ClusterMode::Seeded,
        )
        .unwrap()
        .csv()
    };
    let csv_a = run_eval();
    let csv_b = run_eval();

    check(
        "determinism",
        manifest_a == manifest_b && rasters_equal && model_a == model_b && csv_a == csv_b,
        format!(
            "manifest {} bytes, {} rasters, model {} bytes, eval CSV {} bytes all byte-identical across reruns",
            manifest_a.len(),
            config.num_images,
            model_a.len(),
            csv_a.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 7: metric algebra

#[test]
fn criterion_metric_algebra() {
    use rand::seq::SliceRandom;
    let fixtures = 10_000;
    for trial in 0..fixtures {
        let mut rng = substream(0xA16E, trial as u64);
        let n = rng.random_range(1..20usize);
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..100usize)).collect();
        let mut gts: Vec<usize> = (0..n).map(|_| rng.random_range(0..100usize)).collect();
        let slot = rng.random_range(0..n);
        gts[slot] = gts[slot].max(1); // keep the ground truth sum positive

        let m = mae(&preds, &gts).unwrap();
        let nm = nmae(&preds, &gts).unwrap();
        let gt_sum: usize = gts.iter().sum();

        // zero iff exact
        assert_eq!(m == 0.0, preds == gts, "trial {trial}");
        assert_eq!(nm == 0.0, preds == gts, "trial {trial}");
        // nmae = mae * n / sum(gt)
        assert!(
            (nm - m * n as f64 / gt_sum as f64).abs() < 1e-12,
            "trial {trial}"
        );
        // permutation invariance
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let p2: Vec<usize> = order.iter().map(|&i| preds[i]).collect();
        let g2: Vec<usize> = order.iter().map(|&i| gts[i]).collect();
        assert!((mae(&p2, &g2).unwrap() - m).abs() < 1e-12, "trial {trial}");
    }
    check(
        "metric-algebra",
        true,
        format!("identities verified over {fixtures} random fixtures"),
    );
}
