//! Splits a teacher's class probabilities into pseudo-subclass probabilities
//! and shows that each class's subclass mass adds back up to its marginal.

use lelp_kd::baselines::train_standard;
use lelp_kd::data::{generate_synthetic, Standardizer, SyntheticSpec};
use lelp_kd::lelp::subsplit_batch;
use lelp_kd::{fit_projector, HeadSplit, Mlp, TeacherBundle, TrainConfig};

fn main() -> lelp_kd::Result<()> {
    let spec = SyntheticSpec {
        dim: 4,
        train_size: 1000,
        test_size: 100,
        ..SyntheticSpec::default()
    };
    let (train, _) = generate_synthetic(&spec)?;
    let train = Standardizer::fit(&train.features).apply_dataset(&train)?;
    let model = Mlp::new(&[4, 32, 32, 2], HeadSplit::plain(2), 3)?;
    let cfg = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    let teacher = TeacherBundle::new(train_standard(model, &train, &cfg, None)?.model, 2.0)?;
    let proj = fit_projector(&teacher, &train, 4, 0.5, 0, true)?;

    let rows: Vec<usize> = (0..4).collect();
    let x = train.features.select_rows(&rows);
    let dist = subsplit_batch(&teacher.embed(&x)?, &proj, &teacher)?;
    let coarse = teacher.class_probs(&x)?;
    let marginals = dist.class_marginals();
    for r in 0..rows.len() {
        println!(
            "example {r} (fine label {})",
            train.fine_labels.as_ref().unwrap()[r]
        );
        for c in 0..2 {
            let group: Vec<String> = (0..4)
                .map(|s| format!("{:.3}", dist.probs[(r, c * 4 + s)]))
                .collect();
            println!(
                "  class {c}: p_c = {:.4}, subclasses [{}], sum = {:.4}",
                coarse[(r, c)],
                group.join(", "),
                marginals[(r, c)]
            );
        }
    }
    Ok(())
}
