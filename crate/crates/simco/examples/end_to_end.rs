//! Library walkthrough: generate a small dataset in memory, train the
//! similarity head, then count one held-out image in seeded mode.
//!
//! ```sh
//! cargo run -p simco --example end_to_end --release
//! ```

use simco::count::{match_clusters_to_gt, run_pipeline, ClusterMode, PipelineConfig};
use simco::detect::detect_oracle;
use simco::embed::{feature_set_from_memory, train, EmbeddingNet, TrainConfig};
use simco::geom::BBox;
use simco::shapegen::{generate_image, GeneratorConfig, Split};

fn main() -> simco::Result<()> {
    let config = GeneratorConfig {
        num_images: 120,
        width: 256,
        height: 256,
        types_per_image: (2, 2),
        ..GeneratorConfig::default()
    };
    let seed = 7;
    let items: Vec<_> = (0..config.num_images)
        .map(|i| generate_image(&config, seed, i))
        .collect::<simco::Result<_>>()?;

    let train_items: Vec<_> = items
        .iter()
        .filter(|(r, _)| r.split == Split::Train)
        .cloned()
        .collect();
    let train_config = TrainConfig {
        epochs: 10,
        seed: 1,
        ..TrainConfig::default()
    };
    let data = feature_set_from_memory(&train_items, train_config.patch)?;
    let mut net = EmbeddingNet::init(
        simco::detect::feature_len(train_config.patch),
        train_config.hidden_dim,
        train_config.seed,
    );
    let report = train(&mut net, &data, &train_config)?;
    println!(
        "trained {} epochs: loss {:.2} -> {:.2}",
        train_config.epochs,
        report.epoch_mean_loss.first().unwrap(),
        report.epoch_mean_loss.last().unwrap()
    );

    let (record, raster) = items
        .iter()
        .find(|(r, _)| r.split == Split::Test)
        .expect("test split is nonempty");
    // seed each annotated type with its first instance box
    let seeds: Vec<BBox> = (0..record.types.len())
        .filter_map(|t| {
            record
                .instances
                .iter()
                .find(|inst| inst.type_index == t)
                .map(|inst| inst.bbox)
        })
        .collect();
    let counts = run_pipeline(
        record,
        raster,
        &net,
        &PipelineConfig::default(),
        &ClusterMode::Seeded,
        Some(&seeds),
    )?;
    println!(
        "{}: counted {} objects in {} clusters at preference {:.4}",
        record.id,
        counts.total,
        counts.clusters.len(),
        counts.preference
    );

    let detections = detect_oracle(record);
    let targeted: Vec<usize> = (0..record.types.len()).collect();
    for unit in match_clusters_to_gt(&counts, &detections, record, &targeted) {
        let ty = &record.types[unit.type_index];
        println!(
            "  {:?} scale {:.3}: predicted {} vs ground truth {}",
            ty.shape, ty.scale, unit.pred, unit.gt
        );
    }
    Ok(())
}
