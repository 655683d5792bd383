//! Fits per-class subclass directions from a trained teacher and checks
//! their geometry: orthogonal within a class, equal norms, and orthogonal to
//! the teacher head when the null-space step is on.

use lelp_kd::baselines::train_standard;
use lelp_kd::data::{generate_synthetic, Standardizer, SyntheticSpec};
use lelp_kd::linalg::{dot, norm};
use lelp_kd::{fit_projector, HeadSplit, Mlp, TeacherBundle, TrainConfig};

fn main() -> lelp_kd::Result<()> {
    let spec = SyntheticSpec {
        dim: 4,
        train_size: 2000,
        test_size: 500,
        ..SyntheticSpec::default()
    };
    let (train, _) = generate_synthetic(&spec)?;
    let train = Standardizer::fit(&train.features).apply_dataset(&train)?;

    let teacher = Mlp::new(&[4, 32, 32, 2], HeadSplit::plain(2), 1)?;
    let config = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    let teacher = TeacherBundle::new(train_standard(teacher, &train, &config, None)?.model, 1.0)?;

    let proj = fit_projector(&teacher, &train, 6, 0.5, 7, true)?;
    let w = teacher.head_weights();
    for (c, dirs) in proj.directions.iter().enumerate() {
        let norms: Vec<f64> = dirs.row_iter().map(norm).collect();
        let mut off_diag: f64 = 0.0;
        let mut head_overlap: f64 = 0.0;
        for i in 0..dirs.rows() {
            for j in 0..i {
                off_diag = off_diag.max(dot(dirs.row(i), dirs.row(j)).abs());
            }
            for k in 0..w.cols() {
                head_overlap = head_overlap.max(dot(dirs.row(i), &w.column(k)).abs());
            }
        }
        println!(
            "class {c}: direction norm {:.4}, max |<v_i, v_j>| {off_diag:.1e}, max |<v, w>| {head_overlap:.1e}",
            norms[0]
        );
    }
    Ok(())
}
