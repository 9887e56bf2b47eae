// Compare the ten meta learners over top-k base combinations.

use slideqc::stacking::{mean_vote_accuracy, run_stacking_comparison, MetaFeatureMatrix, MetaLearnerKind};
use slideqc::synth::noisy_base_probabilities;

pub fn run() -> slideqc::Result<()> {
    let labels = |n: usize| (0..n).map(|i| (i * 7 + i / 5) % 3).collect::<Vec<_>>();
    let (y_train, y_eval) = (labels(600), labels(900));
    // four bases of decreasing quality
    let blocks = |y: &[usize], off: u64| {
        [0.85, 0.8, 0.75, 0.7].iter().enumerate().map(|(b, &acc)| noisy_base_probabilities(y, 3, acc, off + b as u64)).collect::<Vec<_>>()
    };
    let train = MetaFeatureMatrix::from_blocks(&blocks(&y_train, 0), y_train.clone(), 0)?;
    let eval = MetaFeatureMatrix::from_blocks(&blocks(&y_eval, 50), y_eval.clone(), 0)?;
    for m in 1..=4 {
        println!("mean vote of top-{m}: {:.4}", mean_vote_accuracy(&eval.top(m, 0)?));
    }
    let table = run_stacking_comparison(&train, &eval, &MetaLearnerKind::ALL, &[2, 3, 4], 7)?;
    print!("{}", table.to_csv_string());
    Ok(())
}

#[allow(dead_code)]
fn main() -> slideqc::Result<()> {
    run()
}
