//! Desk-scale training run: `cargo run --release --example desk_train -- [models] [epochs] [lr] [d_model]`.

use std::time::Instant;

use sdm_core::geometry::synthetic::generate_dataset;
use sdm_core::model::ModelConfig;
use sdm_core::trainer::{evaluate, prepare_models, primary_type, stratified_split, train, TrainConfig};

fn main() -> sdm_core::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let count: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(550);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(60);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let d: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(64);

    let t = Instant::now();
    let (models, manifest) = generate_dataset(count, 1)?;
    let parts = stratified_split(models, primary_type, &[400.0, 50.0, 100.0], 1);
    println!(
        "generated {} models in {:.1}s; per type {:?}",
        manifest.generated,
        t.elapsed().as_secs_f64(),
        manifest.per_type
    );
    let tri: usize = parts[0].iter().map(|m| m.triangle_count()).sum();
    let faces: usize = parts[0].iter().map(|m| m.face_count()).sum();
    println!("train {} models, {} faces, {} triangles", parts[0].len(), faces, tri);
    let (tr, va, te) = (
        prepare_models(&parts[0])?,
        prepare_models(&parts[1])?,
        prepare_models(&parts[2])?,
    );

    let mut mc = ModelConfig::desk();
    mc.encoder.d_model = d;
    mc.encoder.feed_forward_dim = 2 * d;
    let tc = TrainConfig {
        epochs,
        learning_rate: lr,
        patience: 15,
        ..TrainConfig::default()
    };
    let out = train(&tr, &va, &tc, mc, &mut |l| {
        println!(
            "epoch {:3} loss {:.4} val iou {:.4} em {:.4} ({:.1}s)",
            l.epoch, l.train_loss, l.val_iou, l.val_em, l.seconds
        )
    })?;
    let r = evaluate(&out.model, &te)?;
    println!("best epoch {} params {}", out.best_epoch, out.model.parameter_count());
    println!(
        "test: iou {:.4} em {:.4} ordered {:.4} length {:.4}",
        r.iou_mean, r.em_rate, r.ordered_match_rate, r.length_match_rate
    );
    for (k, v) in &r.per_type {
        println!("  {k:24} n={:3} iou {:.3} em {:.3}", v.samples, v.iou_mean, v.em_rate);
    }
    let tr_r = evaluate(&out.model, &tr)?;
    println!("train: iou {:.4} em {:.4}", tr_r.iou_mean, tr_r.em_rate);
    Ok(())
}
