//! Independent oracles and the numerical checks shared by the integration
//! tests and the acceptance runner. Each check returns a one-line summary on
//! success and a description of the first violation otherwise.

#![allow(dead_code)]

use lelp_kd::baselines::{embedding_distill_loss, vanilla_kd_loss};
use lelp_kd::data::LabeledDataset;
use lelp_kd::lelp::{lelp_loss, subsplit, SubclassProjector};
use lelp_kd::linalg::{orthonormalize_columns, top_pca, Matrix};
use lelp_kd::nn::{
    cross_entropy, gradient_check, kl_divergence, relative_error, softmax_tempered, Dense, FD_STEP,
};
use lelp_kd::{fit_projector, HeadSplit, Mlp, TeacherBundle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    // Box-Muller keeps the oracle free of the library's sampling code.
    let u1: f64 = r.random::<f64>().max(1e-300);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * normal(r))
}

/// Log-uniform draw from `[lo, hi]`.
fn log_uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + r.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

// ---------------------------------------------------------------- oracles

/// Softmax of `z / t` via an explicit max shift, written independently of
/// the library.
pub fn softmax_oracle(z: &[f64], t: f64) -> Vec<f64> {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e: Vec<f64> = z.iter().map(|&v| ((v - m) / t).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Classical Jacobi with largest-off-diagonal pivoting. Returns eigenvalues
/// in descending order and the matching unit eigenvectors as rows.
pub fn jacobi_oracle(a: &Matrix) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _ in 0..10_000 {
        let (mut p, mut q, mut big) = (0, 1, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                if m[i][j].abs() > big {
                    big = m[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if big <= 1e-15 * scale {
            break;
        }
        let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
        let t = if theta == 0.0 { 1.0 } else { t };
        let c = 1.0 / (t * t + 1.0).sqrt();
        let s = t * c;
        for k in 0..n {
            let (mkp, mkq) = (m[k][p], m[k][q]);
            m[k][p] = c * mkp - s * mkq;
            m[k][q] = s * mkp + c * mkq;
        }
        for k in 0..n {
            let (mpk, mqk) = (m[p][k], m[q][k]);
            m[p][k] = c * mpk - s * mqk;
            m[q][k] = s * mpk + c * mqk;
        }
        for row in v.iter_mut() {
            let (vp, vq) = (row[p], row[q]);
            row[p] = c * vp - s * vq;
            row[q] = s * vp + c * vq;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Determinant by cofactor expansion along the first row.
pub fn cofactor_det(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    match n {
        0 => 1.0,
        1 => a[0][0],
        _ => (0..n)
            .map(|j| {
                let minor: Vec<Vec<f64>> = a[1..]
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|&(k, _)| k != j)
                            .map(|(_, &x)| x)
                            .collect()
                    })
                    .collect();
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[0][j] * cofactor_det(&minor)
            })
            .sum(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal basis of the span of `vectors` by classical Gram-Schmidt
/// applied twice; near-dependent vectors are dropped.
pub fn basis_oracle(vectors: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let scale = vectors.iter().map(|v| dot(v, v).sqrt()).fold(0.0, f64::max);
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            let coefs: Vec<f64> = out.iter().map(|q| dot(q, &w)).collect();
            for (q, c) in out.iter().zip(coefs) {
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= c * qi;
                }
            }
        }
        let n = dot(&w, &w).sqrt();
        if n > 1e-9 * scale {
            out.push(w.into_iter().map(|x| x / n).collect());
        }
    }
    out
}

/// Sine of the largest principal angle between the spans of two
/// orthonormal row sets of equal size.
pub fn max_principal_sine(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for x in a {
        let mut r = x.clone();
        for q in b {
            let c = dot(q, x);
            for (ri, qi) in r.iter_mut().zip(q) {
                *ri -= c * qi;
            }
        }
        worst = worst.max(dot(&r, &r).sqrt());
    }
    worst
}

// ---------------------------------------------------------------- fixtures

/// A one-hidden-layer teacher whose hidden layer copies its (positive) input,
/// so its embeddings are exactly the features.
pub fn passthrough_teacher(head: &Matrix, bias: &[f64]) -> TeacherBundle {
    let d = head.rows();
    let hidden = Dense {
        weights: Matrix::identity(d),
        bias: vec![0.0; d],
    };
    let out = Dense {
        weights: head.clone(),
        bias: bias.to_vec(),
    };
    let model = Mlp::from_layers(vec![hidden, out], HeadSplit::plain(head.cols())).unwrap();
    TeacherBundle::new(model, 1.0).unwrap()
}

/// Per-class Gaussian clouds with geometrically decaying variances along
/// random orthonormal axes, shifted to be strictly positive.
pub fn spectral_data(r: &mut ChaCha8Rng, classes: usize, per_class: usize, d: usize) -> LabeledDataset {
    let mut rows = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let axes = basis_oracle(
            &(0..d)
                .map(|_| (0..d).map(|_| normal(r)).collect())
                .collect::<Vec<_>>(),
        );
        let center: Vec<f64> = (0..d).map(|_| 40.0 + 3.0 * normal(r)).collect();
        for _ in 0..per_class {
            let mut x = center.clone();
            for (k, axis) in axes.iter().enumerate() {
                let a = 4.0 * 0.6f64.powi(k as i32) * normal(r);
                for (xi, ui) in x.iter_mut().zip(axis) {
                    *xi += a * ui;
                }
            }
            rows.push(x);
            labels.push(c);
        }
    }
    LabeledDataset::new(Matrix::from_rows(&rows).unwrap(), labels, classes).unwrap()
}

/// Model with every parameter (biases included) perturbed, so no ReLU
/// pre-activation sits exactly on its kink.
pub fn jittered(model: Mlp, r: &mut ChaCha8Rng) -> Mlp {
    let mut m = model;
    for slice in m.param_slices_mut() {
        for p in slice.iter_mut() {
            *p += 0.3 * normal(r);
        }
    }
    m
}

// ---------------------------------------------------------------- checks

/// Subclass probabilities of every class sum to its tempered class
/// probability, and every full row sums to one.
pub fn check_subsplit_marginals(draws: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let (mut worst_marginal, mut worst_total): (f64, f64) = (0.0, 0.0);
    for draw in 0..draws {
        let d = r.random_range(2..=8);
        let classes = r.random_range(2..=5);
        let s = r.random_range(1..=4);
        let tau = log_uniform(&mut r, 1.0 / 32.0, 16.0);
        let beta = log_uniform(&mut r, 1.0 / 32.0, 16.0);
        let w = random_matrix(&mut r, d, classes, 1.5);
        let b: Vec<f64> = (0..classes).map(|_| normal(&mut r)).collect();
        let h: Vec<f64> = (0..d).map(|_| 2.0 * normal(&mut r)).collect();
        let proj = SubclassProjector {
            means: random_matrix(&mut r, classes, d, 1.0),
            directions: (0..classes).map(|_| random_matrix(&mut r, s, d, 1.0)).collect(),
            subclasses: s,
            beta,
            seed: draw as u64,
            nullspace: false,
        };
        let p = subsplit(&h, &proj, &w, &b, tau).map_err(|e| format!("draw {draw}: {e}"))?;
        let logits: Vec<f64> = (0..classes)
            .map(|c| (0..d).map(|k| w[(k, c)] * h[k]).sum::<f64>() + b[c])
            .collect();
        let pc = softmax_oracle(&logits, tau);
        for c in 0..classes {
            let mass: f64 = p[c * s..(c + 1) * s].iter().sum();
            worst_marginal = worst_marginal.max((mass - pc[c]).abs());
        }
        worst_total = worst_total.max((p.iter().sum::<f64>() - 1.0).abs());
    }
    if worst_marginal < 1e-12 && worst_total < 1e-12 {
        Ok(format!(
            "{draws} draws, max marginal error {worst_marginal:.1e}, max row-sum error {worst_total:.1e}"
        ))
    } else {
        Err(format!(
            "marginal error {worst_marginal:.3e}, row-sum error {worst_total:.3e} (limit 1e-12)"
        ))
    }
}

/// Geometry of fitted directions on randomized problems with the null-space
/// step on: orthogonal and equal-norm within a class, orthogonal to the head
/// columns, and spanning the same subspace as the top PCA directions of the
/// projected embeddings.
pub fn check_projector_geometry(runs: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let (mut ortho, mut norms, mut head, mut span): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    for run in 0..runs {
        let classes = r.random_range(2..=3);
        let s = r.random_range(1..=4);
        let d = s + classes + r.random_range(0..=3);
        let data = spectral_data(&mut r, classes, 60, d);
        let w = random_matrix(&mut r, d, classes, 1.0);
        let b: Vec<f64> = (0..classes).map(|_| normal(&mut r)).collect();
        let teacher = passthrough_teacher(&w, &b);
        let proj = fit_projector(&teacher, &data, s, 0.5, run as u64, true)
            .map_err(|e| format!("run {run}: {e}"))?;

        let q = basis_oracle(&(0..classes).map(|c| w.column(c)).collect::<Vec<_>>());
        for (c, idx) in data.class_indices().iter().enumerate() {
            let dirs: Vec<Vec<f64>> = proj.directions[c].row_iter().map(<[f64]>::to_vec).collect();
            let lens: Vec<f64> = dirs.iter().map(|v| dot(v, v).sqrt()).collect();
            let len0 = lens[0];
            for i in 0..s {
                norms = norms.max((lens[i] - len0).abs() / len0);
                for j in 0..i {
                    ortho = ortho.max(dot(&dirs[i], &dirs[j]).abs() / (lens[i] * lens[j]));
                }
                for k in 0..classes {
                    let wk = w.column(k);
                    head = head.max(dot(&dirs[i], &wk).abs() / (lens[i] * dot(&wk, &wk).sqrt()));
                }
            }
            // oracle: project onto the complement of span(W), PCA by Jacobi
            let rows: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| {
                    let mut x = data.features.row(i).to_vec();
                    for qk in &q {
                        let c = dot(qk, &x);
                        for (xi, qi) in x.iter_mut().zip(qk) {
                            *xi -= c * qi;
                        }
                    }
                    x
                })
                .collect();
            let n = rows.len() as f64;
            let mean: Vec<f64> = (0..d)
                .map(|k| rows.iter().map(|x| x[k]).sum::<f64>() / n)
                .collect();
            let cov = Matrix::from_fn(d, d, |a, bb| {
                rows.iter()
                    .map(|x| (x[a] - mean[a]) * (x[bb] - mean[bb]))
                    .sum::<f64>()
                    / n
            });
            let (_, vecs) = jacobi_oracle(&cov);
            let unit: Vec<Vec<f64>> = dirs
                .iter()
                .zip(&lens)
                .map(|(v, l)| v.iter().map(|x| x / l).collect())
                .collect();
            span = span.max(max_principal_sine(&unit, &vecs[..s]));
        }
    }
    let ok = ortho < 1e-8 && norms < 1e-8 && head < 1e-6 && span < 1e-8;
    let msg = format!(
        "{runs} fits: max |cos| within class {ortho:.1e}, norm spread {norms:.1e}, max |cos| to head {head:.1e}, max principal-angle sine {span:.1e}"
    );
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// top_pca against the Jacobi oracle.
pub fn check_pca_vs_jacobi(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let d = r.random_range(2..=8);
        let n = r.random_range(d + 2..=d + 30);
        let h = random_matrix(&mut r, n, d, 1.0);
        let pca = top_pca(&h, d.min(n - 1)).map_err(|e| format!("case {case}: {e}"))?;
        let mean: Vec<f64> = (0..d)
            .map(|k| (0..n).map(|i| h[(i, k)]).sum::<f64>() / n as f64)
            .collect();
        let cov = Matrix::from_fn(d, d, |a, b| {
            (0..n)
                .map(|i| (h[(i, a)] - mean[a]) * (h[(i, b)] - mean[b]))
                .sum::<f64>()
                / n as f64
        });
        let (vals, vecs) = jacobi_oracle(&cov);
        for s in 0..pca.stds.len() {
            worst = worst.max((pca.stds[s] - vals[s].max(0.0).sqrt()).abs());
            let u = pca.directions.row(s);
            let sign = dot(u, &vecs[s]).signum();
            let resid: f64 = u.iter().zip(&vecs[s]).map(|(a, b)| (a - sign * b).powi(2)).sum();
            worst = worst.max(resid.sqrt());
        }
        for k in 0..d {
            worst = worst.max((pca.mean[k] - mean[k]).abs());
        }
    }
    if worst < 1e-8 {
        Ok(format!("{cases} cases, max deviation {worst:.1e}"))
    } else {
        Err(format!("max deviation {worst:.3e} (limit 1e-8)"))
    }
}

/// Orthonormalized columns span the input columns.
pub fn check_orthonormalize_spans(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let d = r.random_range(1..=8);
        let k = r.random_range(1..=d);
        let w = random_matrix(&mut r, d, k, 2.0);
        let q = orthonormalize_columns(&w);
        if q.cols() != k {
            return Err(format!("rank {} from {d}x{k} full-rank input", q.cols()));
        }
        let recon = q.matmul(&q.matmul_tn(&w).unwrap()).unwrap();
        worst = worst.max(recon.max_abs_diff(&w) / w.max_abs());
    }
    if worst < 1e-8 {
        Ok(format!("{cases} cases, max reconstruction error {worst:.1e}"))
    } else {
        Err(format!("reconstruction error {worst:.3e} (limit 1e-8)"))
    }
}

/// Loss values against scalar loops.
pub fn check_losses_vs_scalar(cases: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let n = r.random_range(1..=6);
        let k = r.random_range(2..=6);
        let tau = log_uniform(&mut r, 0.25, 8.0);
        let zt = random_matrix(&mut r, n, k, 2.0);
        let zs = random_matrix(&mut r, n, k, 2.0);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();

        let p: Vec<Vec<f64>> = (0..n).map(|i| softmax_oracle(zt.row(i), tau)).collect();
        let q: Vec<Vec<f64>> = (0..n).map(|i| softmax_oracle(zs.row(i), tau)).collect();
        let kl: f64 = (0..n)
            .map(|i| (0..k).map(|j| p[i][j] * (p[i][j] / q[i][j]).ln()).sum::<f64>())
            .sum::<f64>()
            / n as f64;
        let pm = Matrix::from_rows(&p).unwrap();
        let qm = Matrix::from_rows(&q).unwrap();
        worst = worst.max((kl_divergence(&pm, &qm).unwrap().loss - kl).abs());
        worst = worst.max((lelp_loss(&pm, &zs, tau).unwrap().loss - tau * tau * kl).abs());
        worst = worst.max((vanilla_kd_loss(&zt, &zs, tau).unwrap().loss - tau * tau * kl).abs());

        let ce: f64 = (0..n)
            .map(|i| -softmax_oracle(zs.row(i), 1.0)[labels[i]].ln())
            .sum::<f64>()
            / n as f64;
        worst = worst.max((cross_entropy(&labels, &zs).unwrap().loss - ce).abs());

        let dt = r.random_range(1..=5);
        let ds = r.random_range(1..=5);
        let t = random_matrix(&mut r, n, dt, 1.0);
        let s = random_matrix(&mut r, n, ds, 1.0);
        let pmat = random_matrix(&mut r, dt, ds, 1.0);
        let emb: f64 = (0..n)
            .map(|i| {
                let sq: f64 = (0..dt)
                    .map(|a| {
                        let m: f64 = (0..ds).map(|b| pmat[(a, b)] * s[(i, b)]).sum();
                        (t[(i, a)] - m).powi(2)
                    })
                    .sum();
                (sq + 1e-12).sqrt()
            })
            .sum::<f64>()
            / n as f64;
        worst = worst.max((embedding_distill_loss(&t, &s, &pmat).unwrap().loss - emb).abs());
    }
    if worst < 1e-10 {
        Ok(format!("{cases} cases of KL, LELP, vanilla KD, cross-entropy and embedding losses, max error {worst:.1e}"))
    } else {
        Err(format!("max loss error {worst:.3e} (limit 1e-10)"))
    }
}

/// Central differences for the embedding loss with respect to every student
/// parameter and every entry of the projection.
fn embedding_gradient_error(student: &Mlp, teacher_emb: &Matrix, x: &Matrix, p: &Matrix, lambda: f64) -> f64 {
    let loss = |m: &Mlp, p: &Matrix| {
        lambda
            * embedding_distill_loss(teacher_emb, &m.embed(x).unwrap(), p)
                .unwrap()
                .loss
    };
    let trace = student.forward(x).unwrap();
    let mut eg = embedding_distill_loss(teacher_emb, trace.embedding(), p).unwrap();
    eg.student_grad.scale(lambda);
    eg.projection_grad.scale(lambda);
    let zero = Matrix::zeros(x.rows(), student.output_dim());
    let analytic = student
        .backward(&trace, &zero, Some(&eg.student_grad))
        .unwrap()
        .flat();

    let mut worst: f64 = 0.0;
    let mut probe = student.clone();
    let mut idx = 0;
    let sizes: Vec<usize> = probe.param_slices().iter().map(|s| s.len()).collect();
    for (t, len) in sizes.into_iter().enumerate() {
        for i in 0..len {
            let orig = probe.param_slices()[t][i];
            probe.param_slices_mut()[t][i] = orig + FD_STEP;
            let plus = loss(&probe, p);
            probe.param_slices_mut()[t][i] = orig - FD_STEP;
            let minus = loss(&probe, p);
            probe.param_slices_mut()[t][i] = orig;
            worst = worst.max(relative_error(analytic[idx], (plus - minus) / (2.0 * FD_STEP)));
            idx += 1;
        }
    }
    let mut pp = p.clone();
    for i in 0..pp.as_slice().len() {
        let orig = pp.as_slice()[i];
        pp.as_mut_slice()[i] = orig + FD_STEP;
        let plus = loss(student, &pp);
        pp.as_mut_slice()[i] = orig - FD_STEP;
        let minus = loss(student, &pp);
        pp.as_mut_slice()[i] = orig;
        worst = worst.max(relative_error(
            eg.projection_grad.as_slice()[i],
            (plus - minus) / (2.0 * FD_STEP),
        ));
    }
    worst
}

/// Backprop against central differences for every loss path.
pub fn check_gradients(seeds: u64) -> Check {
    let mut worst = [0.0f64; 4];
    for seed in 0..seeds {
        let mut r = rng(1000 + seed);
        let d = r.random_range(2..=4);
        let hidden = r.random_range(2..=5);
        let classes = r.random_range(2..=3);
        let s = r.random_range(1..=3);
        let n = r.random_range(2..=5);
        let tau = log_uniform(&mut r, 0.5, 4.0);
        let x = random_matrix(&mut r, n, d, 1.0);
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();

        let plain = jittered(
            Mlp::new(&[d, hidden, hidden, classes], HeadSplit::plain(classes), seed).unwrap(),
            &mut r,
        );
        worst[0] = worst[0].max(gradient_check(&plain, |z| cross_entropy(&labels, z), &x).unwrap());
        let zt = random_matrix(&mut r, n, classes, 2.0);
        worst[1] = worst[1].max(gradient_check(&plain, |z| vanilla_kd_loss(&zt, z, tau), &x).unwrap());

        let grouped = jittered(
            Mlp::new(&[d, hidden, classes * s], HeadSplit::new(classes, s), seed).unwrap(),
            &mut r,
        );
        let logits = random_matrix(&mut r, n, classes * s, 2.0);
        let targets = softmax_tempered(&logits, 1.0).unwrap();
        worst[2] = worst[2].max(gradient_check(&grouped, |z| lelp_loss(&targets, z, tau), &x).unwrap());

        let dt = r.random_range(1..=4);
        let temb = random_matrix(&mut r, n, dt, 1.0);
        let p = random_matrix(&mut r, dt, hidden, 1.0);
        worst[3] = worst[3].max(embedding_gradient_error(&plain, &temb, &x, &p, 0.7));
    }
    let names = ["cross-entropy", "vanilla KD", "LELP", "embedding+projection"];
    let msg = names
        .iter()
        .zip(worst)
        .map(|(n, w)| format!("{n} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    if worst.iter().all(|&w| w < 1e-4) {
        Ok(format!("{seeds} seeds, max relative error: {msg}"))
    } else {
        Err(format!("relative error above 1e-4: {msg}"))
    }
}
