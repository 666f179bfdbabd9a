//! Finite-difference check of the pointer-generator loss on a toy model.

use rbm::autodiff::gradcheck::check_gradients;
use rbm::generator::{Generator, GeneratorConfig};
use rbm::text::Vocab;

fn main() -> rbm::Result<()> {
    let vocab = Vocab::from_tokens(["a", "b", "c"].map(String::from));
    let cfg = GeneratorConfig {
        embed_dim: 2,
        hidden: 2,
        attention_dim: 2,
        output_hidden: 2,
        init_scale: 0.8,
        ..Default::default()
    };
    let g = Generator::new(cfg, vocab, 1)?;
    // "zz" is outside the vocabulary and can only be copied
    let src = g.source("a zz c b")?;
    let target: Vec<String> = ["c", "zz", "a"].map(String::from).to_vec();
    let ids = src.target(g.vocab(), &target);

    let report = check_gradients(g.params(), 1e-5, |tape| g.mle_loss_on(tape, &src, &ids))?;
    println!("parameters checked: {}", report.checked);
    println!("max relative error: {:.2e}", report.max_rel_err);
    if let Some((name, k, analytic, numeric)) = report.worst {
        println!("worst: {name}[{k}] analytic {analytic:.6e} numeric {numeric:.6e}");
    }
    Ok(())
}
