//! End-to-end LELP: train a wide teacher, fit subclass directions, distill a
//! linear student on the `C·S` subclass targets and compare it with the same
//! student trained on labels alone.

use lelp_kd::baselines::train_standard;
use lelp_kd::data::{generate_synthetic, Standardizer, SyntheticSpec};
use lelp_kd::{fit_projector, train_student_lelp, HeadSplit, KdParams, Mlp, TeacherBundle, TrainConfig};

fn main() -> lelp_kd::Result<()> {
    let spec = SyntheticSpec {
        dim: 3,
        train_size: 4000,
        test_size: 1000,
        ..SyntheticSpec::default()
    };
    let (train, test) = generate_synthetic(&spec)?;
    let st = Standardizer::fit(&train.features);
    let (train, test) = (st.apply_dataset(&train)?, st.apply_dataset(&test)?);

    let teacher_cfg = TrainConfig {
        epochs: 30,
        ..TrainConfig::default()
    };
    let teacher = Mlp::new(&[3, 64, 64, 2], HeadSplit::plain(2), 0)?;
    let teacher = train_standard(teacher, &train, &teacher_cfg, Some(&test))?;
    println!("teacher accuracy {:.4}", teacher.final_accuracy.unwrap());
    let teacher = TeacherBundle::new(teacher.model, 1.0)?;

    let s = 10;
    let proj = fit_projector(&teacher, &train, s, 0.5, 0, true)?;
    let cfg = TrainConfig {
        epochs: 40,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    // no hidden layer: the subclass head is the student's only non-linearity
    let student = Mlp::new(&[3, 2 * s], HeadSplit::new(2, s), 11)?;
    let lelp = train_student_lelp(
        student,
        &teacher,
        &proj,
        &train,
        KdParams::default(),
        &cfg,
        Some(&test),
    )?;

    let plain = Mlp::new(&[3, 2], HeadSplit::plain(2), 11)?;
    let standard = train_standard(plain, &train, &cfg, Some(&test))?;

    println!("standard student {:.4}", standard.final_accuracy.unwrap());
    println!("LELP student     {:.4}", lelp.final_accuracy.unwrap());
    let every = (cfg.epochs / 8).max(1);
    for (e, (l, a)) in lelp
        .curves
        .epoch_loss
        .iter()
        .zip(&lelp.curves.epoch_accuracy)
        .enumerate()
    {
        if e % every == 0 {
            println!("  epoch {e:3}  loss {l:.4}  accuracy {a:.4}");
        }
    }
    Ok(())
}
