mod bookkeeping;
mod contrastive;
mod determinism;
mod directional;
mod features;
mod gradient;
mod jaccard;
mod relocation;
pub mod support;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn check(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

type Criterion = (u32, &'static str, fn() -> Outcome);

pub fn all() -> Vec<Criterion> {
    vec![
        (1, "gradient oracle", gradient::run),
        (2, "contrastive closed forms", contrastive::run),
        (3, "loss bookkeeping and gating", bookkeeping::run),
        (4, "feature geometry", features::run),
        (5, "relocation correctness", relocation::run),
        (6, "jaccard metric", jaccard::run),
        (7, "overfit smoke", overfit::run),
        (8, "directional pipeline", directional::run),
        (9, "determinism and round-trips", determinism::run),
    ]
}
