//! Round-trips a dataset through CSV and a teacher and projector through
//! their binary checkpoint formats.

use lelp_kd::baselines::train_standard;
use lelp_kd::checkpoint::{load_mlp, save_mlp, sidecar_path};
use lelp_kd::data::{generate_synthetic, load_csv, write_csv, CsvSchema, SyntheticSpec};
use lelp_kd::lelp::{load_projector, save_projector};
use lelp_kd::{fit_projector, HeadSplit, Mlp, TeacherBundle, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("lelp-io-example");
    std::fs::create_dir_all(&dir)?;
    let spec = SyntheticSpec {
        dim: 3,
        train_size: 300,
        test_size: 10,
        ..SyntheticSpec::default()
    };
    let (train, _) = generate_synthetic(&spec)?;

    let csv_path = dir.join("train.csv");
    write_csv(&train, &csv_path)?;
    let loaded = load_csv(&csv_path, &CsvSchema::default())?;
    println!(
        "csv: {} rows, {} features, max feature error {:.1e}, labels equal: {}",
        loaded.len(),
        loaded.dim(),
        loaded.features.max_abs_diff(&train.features),
        loaded.labels == train.labels
    );

    let model = Mlp::new(&[3, 16, 2], HeadSplit::plain(2), 5)?;
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    let model = train_standard(model, &loaded, &cfg, None)?.model;
    let ckpt = dir.join("teacher.bin");
    save_mlp(&model, 5, &ckpt)?;
    let (restored, meta) = load_mlp(&ckpt)?;
    println!(
        "checkpoint: identical = {}, dims {:?}, sidecar {}",
        restored == model,
        meta.layer_dims,
        sidecar_path(&ckpt).display()
    );

    let teacher = TeacherBundle::new(restored, 1.0)?;
    let proj = fit_projector(&teacher, &loaded, 3, 0.5, 9, false)?;
    let proj_path = dir.join("projector.bin");
    save_projector(&proj, &proj_path)?;
    println!("projector: identical = {}", load_projector(&proj_path)? == proj);
    Ok(())
}
