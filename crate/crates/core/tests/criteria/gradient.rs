//! Reverse-mode gradients of the full training loss against central
//! finite differences, parameter by parameter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xlqa_core::encoder::{EncoderConfig, EncoderParams};
use xlqa_core::trainer::{compute_loss, loss_and_grads};
use xlqa_core::Feature;

use super::support::{random_batch, random_params};
use super::Outcome;

const H: f64 = 1e-3;
const TOL: f64 = 1e-4;
/// Denominator floor: below this magnitude the bound acts as an absolute
/// tolerance of `TOL * FLOOR`, which is what the finite difference resolves.
const FLOOR: f64 = 1e-4;

struct Report {
    worst: f64,
    at: String,
    unfloored: f64,
    count: usize,
}

fn worst_error(cfg: &EncoderConfig, params: &EncoderParams, batch: &[Feature], paired: &[Feature], w: f64) -> Report {
    let (_, grads) = loss_and_grads(params, cfg, batch, Some(paired), w).unwrap();
    let loss = |p: &EncoderParams| compute_loss(p, cfg, batch, Some(paired), w).unwrap().l_total;
    let specs = EncoderParams::specs(cfg);
    let mut probe = params.clone();
    let mut r = Report { worst: 0.0, at: String::new(), unfloored: 0.0, count: 0 };
    for (k, spec) in specs.iter().enumerate() {
        for i in 0..spec.numel() {
            let orig = probe.slices()[k][i];
            probe.slices_mut()[k][i] = orig + H;
            let up = loss(&probe);
            probe.slices_mut()[k][i] = orig - H;
            let down = loss(&probe);
            probe.slices_mut()[k][i] = orig;
            let numeric = (up - down) / (2.0 * H);
            let analytic = grads.slices()[k][i];
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            if err > r.worst {
                r.worst = err;
                r.at = format!("{}[{i}] analytic {analytic:.6e} numeric {numeric:.6e}", spec.name);
            }
            if analytic.abs().max(numeric.abs()) > 1e-9 {
                r.unfloored = r.unfloored.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()));
            }
            r.count += 1;
        }
    }
    r
}

pub fn run() -> Outcome {
    let cfg = EncoderConfig {
        vocab_size: 12,
        d_model: 4,
        n_layers: 2,
        n_heads: 2,
        d_ffn: 8,
        max_positions: 8,
        tap_layer: 1,
        layer_norm_eps: 1e-5,
    };
    let params = random_params(&cfg, 7, 0.5);
    let n_params = params.num_params();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let batch = random_batch(&mut rng, 3, 8, cfg.vocab_size, "o");
    let paired = random_batch(&mut rng, 3, 8, cfg.vocab_size, "p");
    let mut details = vec![format!("{n_params} params")];
    let mut pass = n_params <= 5000;
    for w in [0.05, 1.0] {
        let r = worst_error(&cfg, &params, &batch, &paired, w);
        pass &= r.worst < TOL && r.count == n_params;
        details.push(format!(
            "w={w}: worst rel err {:.2e} at {} (unfloored, over gradients above 1e-9: {:.2e})",
            r.worst, r.at, r.unfloored
        ));
    }
    Outcome::check(pass, details.join("; "))
}
