//! Contrastive loss against closed forms and a dense-enumeration oracle.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlqa_core::losses::contrastive_loss;
use xlqa_core::rng;

use super::Outcome;

/// Plain-loop reference: every logit and every cross-entropy spelled out.
#[allow(clippy::needless_range_loop)]
fn oracle(o: &Array2<f64>, p: &Array2<f64>) -> f64 {
    let n = o.nrows();
    let q: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| (0..o.ncols()).map(|k| o[[i, k]] * p[[j, k]]).sum()).collect()).collect();
    let mut rows = 0.0;
    let mut cols = 0.0;
    for i in 0..n {
        rows += (0..n).map(|j| q[i][j].exp()).sum::<f64>().ln() - q[i][i];
        cols += (0..n).map(|j| q[j][i].exp()).sum::<f64>().ln() - q[i][i];
    }
    (rows / n as f64 + cols / n as f64) / 2.0
}

fn random(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(-1.5..1.5))
}

pub fn run() -> Outcome {
    let mut failures = Vec::new();

    let eye = Array2::<f64>::eye(2);
    let expected = (1.0 + (-1.0f64).exp()).ln();
    let l_eye = contrastive_loss(&eye, &eye).unwrap();
    if (l_eye - expected).abs() > 1e-9 || (oracle(&eye, &eye) - expected).abs() > 1e-9 {
        failures.push(format!("identity: {l_eye} vs {expected}"));
    }

    let mut r = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (o, p) = (random(&mut r, 1, 4), random(&mut r, 1, 4));
        let l = contrastive_loss(&o, &p).unwrap();
        if l != 0.0 {
            failures.push(format!("n=1 gave {l}"));
        }
    }

    let (o3, p3) = (random(&mut r, 3, 5), random(&mut r, 3, 5));
    let gap3 = (contrastive_loss(&o3, &p3).unwrap() - oracle(&o3, &p3)).abs();
    if gap3 > 1e-9 {
        failures.push(format!("n=3 oracle gap {gap3:.2e}"));
    }

    let mut worst_sym = 0.0f64;
    let mut worst_perm = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for instance in 0..100u64 {
        let mut r = ChaCha8Rng::seed_from_u64(1000 + instance);
        let n = r.random_range(2..8);
        let d = r.random_range(1..6);
        let (o, p) = (random(&mut r, n, d), random(&mut r, n, d));
        let l = contrastive_loss(&o, &p).unwrap();
        worst_sym = worst_sym.max((l - contrastive_loss(&p, &o).unwrap()).abs());
        let mut perm: Vec<usize> = (0..n).collect();
        rng::shuffle(&mut r, &mut perm);
        let po = Array2::from_shape_fn((n, d), |(i, k)| o[[perm[i], k]]);
        let pp = Array2::from_shape_fn((n, d), |(i, k)| p[[perm[i], k]]);
        worst_perm = worst_perm.max((l - contrastive_loss(&po, &pp).unwrap()).abs());
        worst_oracle = worst_oracle.max((l - oracle(&o, &p)).abs());
    }
    if worst_sym >= 1e-9 || worst_perm >= 1e-9 || worst_oracle >= 1e-9 {
        failures.push(format!(
            "random instances: symmetry {worst_sym:.2e}, permutation {worst_perm:.2e}, oracle {worst_oracle:.2e}"
        ));
    }

    if failures.is_empty() {
        Outcome::check(
            true,
            format!(
                "L(I2)={l_eye:.9}; n=1 exact zero; 100 instances: symmetry {worst_sym:.1e}, permutation {worst_perm:.1e}, oracle {worst_oracle:.1e}"
            ),
        )
    } else {
        Outcome::check(false, failures.join("; "))
    }
}
