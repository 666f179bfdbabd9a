//! Sentence-level ROUGE and BLEU.

use rbm::metrics::{lcs_len, MetricReport};

fn main() -> rbm::Result<()> {
    let t = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
    let cases = [
        ("how far is earth from sun", "what is the distance between sun and earth"),
        ("a b c", "a x c"),
        ("the cat sat", "the cat sat"),
        ("", "the cat sat"),
    ];
    for (cand, reference) in cases {
        let (c, r) = (t(cand), t(reference));
        let m = MetricReport::sentence(&c, &r)?;
        println!("{cand:?} vs {reference:?}");
        println!(
            "  LCS {}  ROUGE-1 {:.4}  ROUGE-2 {:.4}  ROUGE-L {:.4}  BLEU {:.4}",
            lcs_len(&c, &r),
            m.rouge1,
            m.rouge2,
            m.rouge_l,
            m.bleu
        );
    }
    Ok(())
}
