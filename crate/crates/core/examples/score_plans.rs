//! Normalized edit-distance scoring of predicted plans, and the failure
//! taxonomy tally used when reviewing transcriptions.

use demo2plan::eval::{
    levenshtein, similarity, similarity_with, tally_taxonomy, MetricOptions, Normalizer, TaxonomyLabel, Token,
};
use demo2plan::task_model::{ActionKind::*, TaskStep};

fn main() -> anyhow::Result<()> {
    let predicted = [Grab, MoveHand, Release];
    let annotated = [Grab, Release];
    println!("distance {}", levenshtein(&predicted, &annotated));
    println!("similarity {:.4}", similarity(&predicted, &annotated));

    let tokens = |steps: &[&str]| -> anyhow::Result<Vec<Token>> {
        Ok(steps.iter().map(|s| s.parse::<TaskStep>().map(|t| Token::from_step(&t))).collect::<Result<_, _>>()?)
    };
    let a = tokens(&["Grab(cup)", "PickUp(cup)", "Release(cup)"])?;
    let b = tokens(&["Grab(mug)", "PickUp(mug)", "Release(mug)"])?;
    for (name, options) in [
        ("actions only", MetricOptions::default()),
        ("strict", MetricOptions { strict: true, ..Default::default() }),
        ("strict, sum of lengths", MetricOptions { strict: true, normalizer: Normalizer::SumOfLengths }),
    ] {
        println!("{name:<24} {:.4}", similarity_with(&a, &b, options));
    }

    use TaxonomyLabel::*;
    let tally = tally_taxonomy(&[Valid, Valid, IllusoryObject, VisuallyDifficult]);
    for (label, fraction) in &tally.fractions {
        println!("{label:?}: {fraction:.2} ({} of {})", tally.counts[label], tally.total);
    }
    Ok(())
}
