//! Reward shaping: rank rescaling, value rescaling, the EMA baseline and curriculum weights.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbm::evaluator::{curriculum_weights, LinearSchedule};
use rbm::rl::{rescale_rewards, rescale_values, BaselineTracker};

fn main() -> rbm::Result<()> {
    let raw = [0.91, 0.40, 0.77, 0.05];
    let rescaled = rescale_rewards(&raw, 12.0);
    println!("raw rewards      {raw:?}");
    println!("rescaled (δ₁=12) {rescaled:.4?}");
    println!("×10 rescaled     {:.4?}", rescale_rewards(&raw.map(|r| r * 10.0), 12.0));

    let q = [0.3, 0.6, 0.5, 0.91];
    println!("\nvalues Q_t          {q:?}");
    println!("rescaled around R̄₀ {:.4?}", rescale_values(&q, rescaled[0], 1.0));

    let mut b = BaselineTracker::new(0.1);
    let trace: Vec<f64> = [0.5, 0.6, 0.7, 0.7, 0.8].iter().map(|&m| b.update(m)).collect();
    println!("\nEMA baseline {trace:.4?}");

    let delta3 = LinearSchedule::new(15.0, 8.0);
    let distances = [4, 0, 9, 2, 6, 1];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for a in [0, 4, 9] {
        let w = curriculum_weights(&distances, delta3.at(a, 10), &mut rng)?;
        let p: Vec<String> = w.iter().map(|w| format!("{:.2}", w.probability)).collect();
        println!("alternation {a}: δ₃ = {:.1}, p = [{}]", delta3.at(a, 10), p.join(", "));
    }
    Ok(())
}
